"""Multiscale Besov seminorms on triadic cubes and functional-inequality checks.

Discrete fields carry no sub-cell oscillation, so the multiscale sums are
truncated at the unit-cell level (k >= 0).  Subcube averages run over the
plain partition lattice 3^k Z^d restricted to the cube; the half-shifted
variant differs by a bounded equivalence (a factor 3^d at worst), which is
absorbed into calibration constants.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .grids import TriadicCube


class BesovError(Exception):
    pass


class BadSpec(BesovError):
    pass


@dataclass(frozen=True)
class BesovSpec:
    """(s, p, q) exponents plus the sign convention of the norm."""

    s: float
    p: float
    q: float
    sign: str = "positive"  # or "negative-ring"

    def __post_init__(self):
        if self.sign not in ("positive", "negative-ring"):
            raise BadSpec(f"unknown sign {self.sign!r}")
        if not (1.0 <= self.p):
            raise BadSpec("p must be >= 1")
        if not (1.0 <= self.q):
            raise BadSpec("q must be >= 1")
        if self.sign == "positive":
            if not 0.0 <= self.s <= 1.0:
                raise BadSpec("positive norms need s in [0, 1]")
            if self.s in (0.0, 1.0) and not np.isinf(self.q):
                raise BadSpec("s in {0, 1} requires q = inf")
        else:
            if not 0.0 < self.s <= 1.0:
                raise BadSpec("ring norms need s in (0, 1]")


def _block_views(f, level, k):
    """Reshape a cell field on a level-`level` cube into level-k blocks:
    result axes (block_x, block_y, in_x, in_y, *rest)."""
    n = 3**level
    m = 3**k
    rest = f.shape[2:]
    v = f.reshape(n // m, m, n // m, m, *rest)
    return np.moveaxis(v, 2, 1)


def _lq_sum(terms, q):
    terms = np.asarray(terms, dtype=float)
    if np.isinf(q):
        return float(terms.max()) if terms.size else 0.0
    return float((terms**q).sum() ** (1.0 / q)) if terms.size else 0.0


def _as_cells(f, cube):
    f = np.asarray(f, dtype=float)
    n = cube.side
    if f.shape[:2] != (n, n):
        raise BesovError(f"field shape {f.shape} does not match the cube side {n}")
    return f


def besov_seminorm(f, spec: BesovSpec, cube: TriadicCube) -> float:
    """Volume-normalized positive Besov seminorm over levels 0..n.

    Per level: the L^p-mean oscillation within each level-k subcube, averaged
    in p-th power over subcubes, weighted 3^{-s k}; q-summed over levels.
    """
    if spec.sign != "positive":
        raise BadSpec("besov_seminorm wants a positive-sign spec")
    f = _as_cells(f, cube)
    terms = []
    for k in range(0, cube.level + 1):
        blocks = _block_views(f, cube.level, k)
        mean = blocks.mean(axis=(2, 3), keepdims=True)
        osc = blocks - mean
        if np.isinf(spec.p):
            level_val = np.abs(osc).max()
        else:
            per_block = (np.abs(osc) ** spec.p).mean(axis=tuple(range(2, osc.ndim)))
            level_val = per_block.mean() ** (1.0 / spec.p)
        terms.append(3.0 ** (-spec.s * k) * level_val)
    return _lq_sum(terms, spec.q)


def ring_negative_norm(f, spec: BesovSpec, cube: TriadicCube) -> float:
    """The explicit negative seminorm: 3^{d+s} l^q over levels of
    3^{s k} (mean over z of |(f)_{z + cube_k}|^p)^{1/p}."""
    if spec.sign != "negative-ring":
        raise BadSpec("ring_negative_norm wants a negative-ring spec")
    f = _as_cells(f, cube)
    d = 2
    terms = []
    for k in range(0, cube.level + 1):
        blocks = _block_views(f, cube.level, k)
        means = blocks.mean(axis=(2, 3))
        if means.ndim > 2:
            mag = np.sqrt((means**2).sum(axis=tuple(range(2, means.ndim))))
        else:
            mag = np.abs(means)
        if np.isinf(spec.p):
            val = mag.max()
        else:
            val = (mag**spec.p).mean() ** (1.0 / spec.p)
        terms.append(3.0 ** (spec.s * k) * val)
    return 3.0 ** (d + spec.s) * _lq_sum(terms, spec.q)


def duality_pairing_bound(f, g, s, p, q, cube: TriadicCube):
    """Returns (|mean of f g|, ring_{-s,p,q}(f) * besov_{s,p',q'}-norm(g)).

    The second entry dominates the first (the discrete duality estimate);
    the positive factor uses the full norm, i.e. seminorm plus the scaled
    cube average 3^{-s n} |(g)|.
    """
    f = _as_cells(f, cube)
    g = _as_cells(g, cube)
    pair = float(np.abs((f * g).mean()))
    pprime = np.inf if p == 1.0 else p / (p - 1.0)
    qprime = np.inf if q == 1.0 else q / (q - 1.0)
    neg = ring_negative_norm(f, BesovSpec(s, p, q, "negative-ring"), cube)
    pos_semi = besov_seminorm(g, BesovSpec(s, pprime, qprime), cube)
    pos = pos_semi + 3.0 ** (-s * cube.level) * abs(float(g.mean()))
    return pair, neg * pos


def multiscale_poincare_check(u_nodal, p, q, cube: TriadicCube):
    """Smallest constant C making the multiscale Sobolev-Poincare inequality
    hold for this function: returns (C, lhs, multiscale sum).

    lhs = ||u - (u)||_{L^q} over cells; the right side is
    3^m sum_k 3^{(k-m)(d/q - d/p*)} (mean_z |(grad u)_{z+cube_k}|^p)^{1/p}.
    """
    from .cellsolve import tri_grads

    d = 2
    u = np.asarray(u_nodal, dtype=float)
    n = cube.side
    if u.shape != (n + 1, n + 1):
        raise BesovError("nodal shape mismatch")
    if p < d:
        pstar = d * p / (d - p)
    else:
        pstar = np.inf
    if not (p <= q < pstar):
        raise BadSpec("need q in [p, p*)")
    cells = 0.25 * (u[:-1, :-1] + u[1:, :-1] + u[:-1, 1:] + u[1:, 1:])
    lhs = float((np.abs(cells - cells.mean()) ** q).mean() ** (1.0 / q))
    grads = tri_grads(u).mean(axis=2)  # per-cell gradient (triangle average)
    total = 0.0
    for k in range(0, cube.level + 1):
        blocks = _block_views(grads, cube.level, k)
        means = blocks.mean(axis=(2, 3))
        mag = np.sqrt((means**2).sum(axis=-1))
        mean_p = (mag**p).mean() ** (1.0 / p)
        weight = 3.0 ** ((k - cube.level) * (d / q - (0.0 if np.isinf(pstar) else d / pstar)))
        total += weight * mean_p
    rhs = 3.0**cube.level * total
    C = lhs / rhs if rhs > 0 else np.inf if lhs > 0 else 0.0
    return C, lhs, rhs


def weaknorm_bound_check(grad_cells, flux_cells, s_energy, s, cube: TriadicCube,
                         sstar_inv_max, b_max):
    """Check the gradient/flux weak-norm bounds for a solution.

    grad_cells, flux_cells: per-cell d-vectors; s_energy: mean grad.s.grad;
    sstar_inv_max[k], b_max[k]: per-level maxima over subcubes of
    |s*^{-1}(z+cube_k)| and |b(z+cube_k)| from the cached coarse matrices.
    Returns dict of (lhs, rhs) pairs; rhs must dominate.
    """
    d = 2
    spec = BesovSpec(s, 2.0, 1.0, "negative-ring")
    lhs_grad = ring_negative_norm(grad_cells, spec, cube)
    lhs_flux = ring_negative_norm(flux_cells, spec, cube)
    root_e = np.sqrt(max(s_energy, 0.0))
    rhs_grad = 3.0 ** (d + s) * root_e * sum(
        3.0 ** (s * k) * np.sqrt(sstar_inv_max[k]) for k in range(cube.level + 1)
    )
    rhs_flux = 3.0 ** (d + s) * root_e * sum(
        3.0 ** (s * k) * np.sqrt(b_max[k]) for k in range(cube.level + 1)
    )
    return {
        "grad": (lhs_grad, rhs_grad),
        "flux": (lhs_flux, rhs_flux),
    }
