"""Monte Carlo tracking of the renormalization flow of coarse-grained matrices.

A flow run samples independent coefficient fields per triadic level, computes
the coarse-grained matrix of the level cube for each sample, and reduces the
results (in sorted sample order, so the output is independent of how workers
are scheduled) into per-level records of the mean matrix, its ellipticity
ratios, and fluctuation statistics.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .cellsolve import DEFAULT_SOLVER, SolveFailed, SolverOptions, coarse_matrix, j_value
from .fields import (
    Box,
    FgfParams,
    constant_field,
    sample_checkerboard,
    sample_laminate,
    sample_lognormal,
    sample_poisson_inclusions,
    sample_stream_field,
)
from .grids import TriadicCube, partition
from .matalg import (
    BlockMatrix,
    adapted_q0,
    ellipticity_ratio,
    extract_components,
    invsqrtm_spd,
    metric_geomean,
    spectral_norm,
)


class RenormError(Exception):
    pass


class NoSignal(RenormError):
    pass


@dataclass(frozen=True)
class MixingParams:
    """Decorrelation parameters entering the predicted length scale."""

    gamma: float
    nu: float
    beta: float
    K_psi: float
    K_psi_s: float
    C: float = 1.0

    def __post_init__(self):
        if not 0.0 <= self.gamma < 1.0:
            raise RenormError("gamma must lie in [0, 1)")
        if not self.gamma < self.nu:
            raise RenormError("need nu > gamma")
        if not 0.0 <= self.beta < 1.0:
            raise RenormError("beta must lie in [0, 1)")
        if self.K_psi < 1.0 or self.K_psi_s < 1.0:
            raise RenormError("growth constants must be >= 1")
        if self.alpha <= 0.0 or self.mu <= 0.0:
            raise RenormError("degenerate exponents")

    @property
    def alpha(self):
        return (min(self.nu, 1.0) - self.gamma) * (1.0 - self.beta)

    @property
    def mu(self):
        return (self.nu - self.gamma) * (1.0 - self.beta)

    def kappa(self, c: float = 0.5):
        """min(c, (1-gamma)/2, (nu-gamma)/(1+nu-gamma),
        (1-beta)(nu-gamma)/(beta + (1-beta)(nu-gamma)))."""
        ng = self.nu - self.gamma
        return min(
            c,
            (1.0 - self.gamma) / 2.0,
            ng / (1.0 + ng),
            (1.0 - self.beta) * ng / (self.beta + (1.0 - self.beta) * ng),
        )


@dataclass
class FlowRecord:
    level: int
    sample_count: int
    A_bar: BlockMatrix
    theta_n: float
    theta_n_stderr: float
    theta_hat: float
    theta_hat_stderr: float
    fluct: float
    fluct_stderr: float
    seed: int
    q0_deviation: float = 0.0
    flagged: bool = False

    def row(self):
        return {
            "level": self.level,
            "samples": self.sample_count,
            "theta_n": self.theta_n,
            "theta_n_stderr": self.theta_n_stderr,
            "theta_hat": self.theta_hat,
            "fluct": self.fluct,
            "A_bar_flat": self.A_bar.M.ravel().tolist(),
        }


# ---------------------------------------------------------------------------
# sampler registry
# ---------------------------------------------------------------------------

def make_sampler(spec: dict, max_level: int = 4):
    """Turn a sampler spec dict into (sample_fn(box, seed_seq), pad_cells)."""
    kind = spec.get("kind")
    if kind == "constant":
        M = np.asarray(spec.get("matrix", np.eye(2)), dtype=float)
        return (lambda box, ss: constant_field(M, box)), 0
    if kind == "poisson":
        rho1 = float(spec.get("rho1", spec.get("rho", 0.0)))
        rho2 = float(spec.get("rho2", spec.get("rho", 0.0)))
        lam = float(spec.get("lam", 1.0))
        Lam = float(spec.get("Lam", 1.0))
        return (
            lambda box, ss: sample_poisson_inclusions(rho1, rho2, lam, Lam, box, ss)
        ), 1
    if kind == "laminate":
        values = [float(v) for v in spec.get("values", (1.0, 4.0))]
        axis = int(spec.get("axis", 0))
        return (lambda box, ss: sample_laminate(values, box, ss, axis=axis)), 0
    if kind == "checkerboard":
        alpha = float(spec.get("alpha", 1.0))
        beta = float(spec.get("beta", 4.0))
        return (lambda box, ss: sample_checkerboard(alpha, beta, box, ss)), 0
    if kind in ("stream", "lognormal"):
        sigma = float(spec.get("sigma", 0.5))
        n_max = int(spec.get("n_max", max_level + 1))
        digits = int(spec.get("kernel_digits", 24))
        params = FgfParams(sigma=sigma, n_max=n_max, kernel_digits=digits)
        # the FGF sampler pads its own noise box by the kernel radius, so
        # the coefficient field needs no caller-side margin
        if kind == "stream":
            lam = float(spec.get("lam", 1.0))
            return (lambda box, ss: sample_stream_field(lam, params, box, ss)), 0
        h = float(spec.get("h", 0.1))
        return (lambda box, ss: sample_lognormal(h, params, box, ss)), 0
    raise RenormError(
        f"unknown sampler kind {kind!r}; expected one of "
        "constant, poisson, laminate, checkerboard, stream, lognormal"
    )


def _sample_seed(seed, level, index):
    return np.random.SeedSequence(entropy=seed, spawn_key=(level, index))


def _collect_matrices(sample_fn, pad, level, count, seed, workers, solver):
    cube = TriadicCube(level, (0, 0), 2)
    box = Box((0, 0), (cube.side, cube.side)).grow(max(pad, 1))
    out = [None] * count

    def work(idx):
        ss = _sample_seed(seed, level, idx)
        f = sample_fn(box, ss)
        return coarse_matrix(f, cube, solver).M

    if workers <= 1:
        for i in range(count):
            out[i] = work(i)
    else:
        with ThreadPoolExecutor(max_workers=workers) as ex:
            for i, res in enumerate(ex.map(work, range(count))):
                out[i] = res
    return out


def _theta_of_mean(mean_mat):
    return ellipticity_ratio(BlockMatrix(2, mean_mat)).theta


def _theta_hat_of_mean(mean_mat):
    s_star, _, s, _ = extract_components(BlockMatrix(2, mean_mat))
    si = invsqrtm_spd(s_star.entries, "s_bar_*")
    return float(np.trace(si @ s.entries @ si)) / 2.0


def _jackknife(stat, mats):
    n = len(mats)
    if n < 2:
        return 0.0
    total = sum(mats)
    vals = np.array([stat((total - m) / (n - 1)) for m in mats])
    return float(np.sqrt((n - 1) / n * ((vals - vals.mean()) ** 2).sum()))


def mc_flow(sampler_spec: dict, levels, samples_per_level: int, seed: int,
            workers: int = 1, solver: SolverOptions = DEFAULT_SOLVER):
    """Per-level Monte Carlo estimates of the mean coarse-grained matrix and
    its ellipticity ratios; deterministic given (spec, levels, seed)."""
    levels = sorted(int(l) for l in levels)
    sample_fn, pad = make_sampler(sampler_spec, max_level=max(levels))
    records = []
    for level in levels:
        flagged = False
        try:
            mats = _collect_matrices(
                sample_fn, pad, level, samples_per_level, seed, workers, solver
            )
        except SolveFailed:
            flagged = True
            mats = []
            for idx in range(samples_per_level):
                try:
                    ss = _sample_seed(seed, level, idx)
                    cube = TriadicCube(level, (0, 0), 2)
                    box = Box((0, 0), (cube.side,) * 2).grow(max(pad, 1))
                    mats.append(coarse_matrix(sample_fn(box, ss), cube, solver).M)
                except SolveFailed:
                    continue
        if not mats:
            raise RenormError(f"no completed samples at level {level}")
        mean = sum(mats) / len(mats)
        A_bar = BlockMatrix(2, mean)
        theta = _theta_of_mean(mean)
        theta_hat = _theta_hat_of_mean(mean)
        inv_sqrt = invsqrtm_spd(mean, "A_bar")
        devs = np.array(
            [spectral_norm(inv_sqrt @ (m - mean) @ inv_sqrt) ** 2 for m in mats]
        )
        q0 = adapted_q0(A_bar)
        q0_dev = spectral_norm(q0.entries - np.eye(2))
        records.append(
            FlowRecord(
                level=level,
                sample_count=len(mats),
                A_bar=A_bar,
                theta_n=theta,
                theta_n_stderr=_jackknife(_theta_of_mean, mats),
                theta_hat=theta_hat,
                theta_hat_stderr=_jackknife(_theta_hat_of_mean, mats),
                fluct=float(devs.mean()),
                fluct_stderr=float(devs.std(ddof=1) / np.sqrt(len(devs)))
                if len(devs) > 1
                else 0.0,
                seed=seed,
                q0_deviation=q0_dev,
                flagged=flagged,
            )
        )
    return records


def additivity_defect(sampler_spec: dict, n: int, k: int, p, q, samples: int,
                      seed: int, workers: int = 1,
                      solver: SolverOptions = DEFAULT_SOLVER):
    """MC estimate of E[J(child_k) - J(cube_n)] (children averaged per sample).

    Returns (defect, stderr); the defect must be nonnegative within noise
    (subadditivity in expectation), asserted at 3 standard errors.
    """
    if k >= n:
        raise RenormError("need k < n")
    sample_fn, pad = make_sampler(sampler_spec, max_level=n)
    cube = TriadicCube(n, (0, 0), 2)
    box = Box((0, 0), (cube.side,) * 2).grow(max(pad, 1))
    children = partition(cube, k)
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)

    def work(idx):
        ss = _sample_seed(seed, n, idx)
        f = sample_fn(box, ss)
        j_children = np.mean([j_value(f, c, p, q, solver) for c in children])
        return j_children - j_value(f, cube, p, q, solver)

    vals = np.empty(samples)
    if workers <= 1:
        for i in range(samples):
            vals[i] = work(i)
    else:
        with ThreadPoolExecutor(max_workers=workers) as ex:
            for i, res in enumerate(ex.map(work, range(samples))):
                vals[i] = res
    defect = float(vals.mean())
    stderr = float(vals.std(ddof=1) / np.sqrt(samples)) if samples > 1 else 0.0
    if defect < -3.0 * stderr - 1e-12:
        raise RenormError(
            f"additivity defect {defect:.3e} below -3 stderr ({stderr:.3e})"
        )
    return defect, stderr


def pigeonhole_scan(flow, l: int, delta1: float):
    """Smallest recorded level m with
    |A_bar(m)^{-1/2} A_bar(m-l) A_bar(m)^{-1/2} - I| <= delta1, else None."""
    by_level = {r.level: r for r in flow}
    for m in sorted(by_level):
        if m - l not in by_level:
            continue
        Am = by_level[m].A_bar.M
        Aml = by_level[m - l].A_bar.M
        isq = invsqrtm_spd(Am, "A_bar(m)")
        dev = spectral_norm(isq @ Aml @ isq - np.eye(Am.shape[0]))
        if dev <= delta1:
            return m
    return None


def homogenized_limit(flow):
    """Last-level mean matrix and the certified bracket width 4 (Theta_m - 1).

    The bracket 0 <= A_bar(cube_m) - A_bar <= 4 (Theta_m - 1) A_bar holds
    for the true limit; the width is reported, not asserted beyond >= 0.
    """
    if not flow:
        raise RenormError("empty flow")
    last = max(flow, key=lambda r: r.level)
    gap = 4.0 * max(last.theta_n - 1.0, 0.0)
    return last.A_bar, gap


def effective_a(record: FlowRecord):
    """Point estimate of the homogenized d x d matrix from a flow record:
    the geometric mean of the bracketing pair s_bar* <= a_hom_sym <= s_bar,
    plus the antisymmetric part of k_bar."""
    s_star, k, s, _ = extract_components(record.A_bar)
    mid = metric_geomean(s, s_star)
    return mid.entries + 0.5 * (k - k.T)


def predicted_length_scale(params: MixingParams, theta: float, pi: float) -> float:
    """L = exp((C / alpha^6) log(Pi K_psi K_psi_s) log^2(1 + Theta))."""
    if theta < 0.0 or pi <= 0.0:
        raise RenormError("need theta >= 0 and pi > 0")
    a = params.alpha
    return float(
        np.exp(
            params.C / a**6
            * np.log(pi * params.K_psi * params.K_psi_s)
            * np.log1p(theta) ** 2
        )
    )


def theta_convergence_fit(flow):
    """Least squares of log(theta_n - 1) against n log 3.

    Only levels with a 3-sigma signal (theta_n - 1 > 3 stderr) enter; returns
    (kappa_hat, prefactor) for theta_n - 1 ~ prefactor * 3^(-kappa_hat n).
    """
    pts = [
        (r.level, r.theta_n - 1.0)
        for r in flow
        if r.theta_n - 1.0 > 3.0 * r.theta_n_stderr and r.theta_n > 1.0
    ]
    if len(pts) < 3:
        raise NoSignal(f"only {len(pts)} levels with signal; need 3")
    x = np.array([p[0] * np.log(3.0) for p in pts])
    y = np.array([np.log(p[1]) for p in pts])
    slope, intercept = np.polyfit(x, y, 1)
    return float(-slope), float(np.exp(intercept))
