"""Command line driver: experiment orchestration with reproducible outputs.

One JSON config describes one experiment.  Every run writes a CSV, a JSON
mirror, and a manifest with the config hash and per-output checksums; reruns
with the same config and seed produce byte-identical CSV/JSON.

Exit codes: 0 success, 2 invariant violated, 3 solver failure, 4 config error.
"""

from __future__ import annotations

import argparse
import csv
import datetime
import hashlib
import json
import math
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .cellsolve import InequalityViolated, SolveFailed, SolverOptions
from .fields import (
    Box,
    FgfParams,
    dump_field,
    eta_layer,
    fgf_covariance_constant,
    fgf_layer,
    layer_radius,
    sample_fgf,
    sample_white_noise,
)
from .grids import TriadicCube
from .homogcheck import error_profile, harmonic_approx_forward, lipschitz_diagnostic
from .orlicz import TailSample, conc_exp_bound, empirical_tail
from .renorm import NoSignal, RenormError, make_sampler, mc_flow, theta_convergence_fit


class ConfigError(Exception):
    pass


EXPERIMENTS = ("flow", "homog-error", "concentration", "fgf-validate", "besov",
               "field-sample")

_MAX_BOX_SIDE = 4000


def _fmt(x):
    """Shortest round-trip decimal for floats; plain str otherwise."""
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    return str(x)


def load_config(path):
    p = Path(path)
    if not p.exists():
        raise ConfigError(f"config not found: {path}")
    try:
        with open(p) as fh:
            cfg = json.load(fh)
    except json.JSONDecodeError as e:
        raise ConfigError(f"{path}:{e.lineno}: invalid JSON: {e.msg}") from None
    if not isinstance(cfg, dict):
        raise ConfigError(f"{path}: config must be a JSON object")
    return cfg


def validate_config(cfg):
    """Schema plus feasibility; raises ConfigError with an anchored message."""
    kind = cfg.get("experiment")
    if kind not in EXPERIMENTS:
        raise ConfigError(
            f"experiment: got {kind!r}; expected one of {', '.join(EXPERIMENTS)}"
        )
    if "seed" not in cfg:
        raise ConfigError("seed: mandatory field is missing")
    if not isinstance(cfg["seed"], int):
        raise ConfigError("seed: must be an integer")
    solver = cfg.get("solver", {})
    for key in ("rtol",):
        if key in solver and not (isinstance(solver[key], (int, float)) and solver[key] > 0):
            raise ConfigError(f"solver.{key}: must be a positive number")
    if kind in ("flow", "homog-error", "besov"):
        levels = cfg.get("levels")
        if not levels or not all(isinstance(l, int) and l >= 0 for l in levels):
            raise ConfigError("levels: need a nonempty list of nonnegative integers")
        sampler = cfg.get("sampler")
        if not isinstance(sampler, dict) or "kind" not in sampler:
            raise ConfigError("sampler: need an object with a 'kind' field")
        try:
            _, pad = make_sampler(sampler, max_level=max(levels))
        except RenormError as e:
            raise ConfigError(f"sampler: {e}") from None
        for l in levels:
            side = 3**l + 2 * max(pad, 1)
            if side > _MAX_BOX_SIDE:
                raise ConfigError(
                    f"levels: level {l} needs a box of side {side} cells, above "
                    f"the {_MAX_BOX_SIDE} limit"
                )
        if kind == "homog-error" and min(levels) < 2:
            raise ConfigError("levels: homog-error needs levels >= 2")
    if kind in ("flow", "homog-error"):
        if not isinstance(cfg.get("samples"), int) or cfg["samples"] < 1:
            raise ConfigError("samples: need a positive integer")
    if kind == "field-sample":
        sampler = cfg.get("sampler")
        if not isinstance(sampler, dict) or "kind" not in sampler:
            raise ConfigError("sampler: need an object with a 'kind' field")
        shape = cfg.get("shape")
        if not shape or not all(isinstance(s, int) and 0 < s <= _MAX_BOX_SIDE for s in shape):
            raise ConfigError("shape: need positive integer box extents")
    return cfg


def solver_from(cfg) -> SolverOptions:
    s = cfg.get("solver", {})
    return SolverOptions(
        rtol=float(s.get("rtol", 1e-12)),
        max_iter_factor=int(s.get("max_iter_factor", 20)),
    )


def _seed_of(cfg):
    env = os.environ.get("CG_SEED")
    if env is not None:
        return int(env)
    return int(cfg["seed"])


def _workers_of(cfg):
    return int(cfg.get("workers", os.cpu_count() or 1))


# ---------------------------------------------------------------------------
# experiment bodies: each returns (rows, header, extra_json)
# ---------------------------------------------------------------------------

def run_flow(cfg):
    records = mc_flow(
        cfg["sampler"], cfg["levels"], cfg["samples"], _seed_of(cfg),
        workers=_workers_of(cfg), solver=solver_from(cfg),
    )
    header = ["level", "samples", "theta_n", "theta_n_stderr", "theta_hat",
              "fluct", "A_bar_flat"]
    rows = []
    for r in records:
        rows.append([
            r.level, r.sample_count, r.theta_n, r.theta_n_stderr, r.theta_hat,
            r.fluct, " ".join(repr(float(v)) for v in r.A_bar.M.ravel()),
        ])
    extra = {"records": [
        {
            "level": r.level,
            "samples": r.sample_count,
            "theta_n": r.theta_n,
            "theta_n_stderr": r.theta_n_stderr,
            "theta_hat": r.theta_hat,
            "theta_hat_stderr": r.theta_hat_stderr,
            "fluct": r.fluct,
            "fluct_stderr": r.fluct_stderr,
            "q0_deviation": r.q0_deviation,
            "flagged": r.flagged,
            "A_bar": r.A_bar.M.tolist(),
        }
        for r in records
    ]}
    try:
        kappa, pref = theta_convergence_fit(records)
        extra["theta_fit"] = {"kappa_hat": kappa, "prefactor": pref}
    except NoSignal:
        extra["theta_fit"] = None
    return rows, header, extra


def run_homog_error(cfg):
    seed = _seed_of(cfg)
    solver = solver_from(cfg)
    a0 = np.asarray(cfg.get("a0", [[1.0, 0.0], [0.0, 1.0]]), dtype=float)
    sample_fn, pad = make_sampler(cfg["sampler"], max_level=max(cfg["levels"]))
    header = ["level", "error_ratio", "profile_E1", "profile_Es"]
    s_exp = float(cfg.get("s", 0.5))
    rows = []
    for level in sorted(cfg["levels"]):
        cube = TriadicCube(level, (0, 0), 2)
        box = Box((0, 0), (cube.side,) * 2).grow(max(pad, 1))
        ratios, e1s, ess = [], [], []
        for idx in range(cfg["samples"]):
            ss = np.random.SeedSequence(entropy=seed, spawn_key=(level, idx))
            f = sample_fn(box, ss)
            out = harmonic_approx_forward(f, a0, cube, boundary_seed=seed + idx,
                                          solver=solver)
            prof1 = error_profile(f, a0, cube, 1.0, solver)
            profs = error_profile(f, a0, cube, s_exp, solver)
            ratios.append(out["ratio"])
            e1s.append(prof1.total)
            ess.append(profs.total)
        rows.append([level, float(np.mean(ratios)), float(np.mean(e1s)),
                     float(np.mean(ess))])
    return rows, header, {"a0": a0.tolist(), "s": s_exp}


def run_concentration(cfg):
    seed = _seed_of(cfg)
    sigma = float(cfg.get("sigma", 1.0))
    m = int(cfg.get("m", 10000))
    trials = int(cfg.get("trials", 10000))
    t_factors = cfg.get("t_factors", [2.0, 3.0, 4.0])
    rng = np.random.default_rng(np.random.SeedSequence(entropy=seed))
    sums = np.empty(trials)
    block = max(1, min(trials, (2**22) // m))
    done = 0
    mean_shift = math.gamma(1.0 + 1.0 / sigma)
    while done < trials:
        b = min(block, trials - done)
        draws = rng.standard_exponential((b, m)) ** (1.0 / sigma) - mean_shift
        sums[done:done + b] = draws.sum(axis=1)
        done += b
    sample = TailSample(sums)
    header = ["t", "empirical_tail", "bound", "margin"]
    rows = []
    for tf in t_factors:
        t = float(tf) * np.sqrt(m)
        frac, half = empirical_tail(sample, t)
        bound = conc_exp_bound(sigma, m, t)
        rows.append([t, frac, bound, bound - frac])
    return rows, header, {"sigma": sigma, "m": m, "trials": trials}


def run_fgf_validate(cfg):
    seed = _seed_of(cfg)
    sigma = float(cfg.get("sigma", 0.5))
    samples = int(cfg.get("samples", 2000))
    n_levels = cfg.get("layer_levels", [1, 2, 3])
    params = FgfParams(sigma=sigma, n_max=max(max(n_levels), 4),
                       kernel_digits=int(cfg.get("kernel_digits", 24)))
    header = ["kind", "x", "value", "target"]
    rows = []
    # partition of unity residual
    rs = np.geomspace(1e-3, 1e3, 1000)
    resid = np.abs(sum(eta_layer(rs, n) for n in range(-12, 12)) - 1.0).max()
    rows.append(["pou_residual", 0.0, float(resid), 0.0])
    # layer variance self-similarity (per-layer MC over a small box)
    for n in n_levels:
        sub = 3 if n <= 1 else 1
        rad = layer_radius(n, sub)
        pad_units = -(-rad // sub)
        box = Box((0, 0), (2, 2)).grow(pad_units)
        vals = []
        for i in range(samples):
            ss = np.random.SeedSequence(entropy=seed, spawn_key=(5, n, i))
            W = sample_white_noise(box, ss, sub=sub)
            layer = fgf_layer(params, n, W)
            vals.append(layer.values[0, 0])
        var = float(np.var(vals))
        rows.append(["layer_var_scaled", float(n), var * 3.0 ** (2 * n * sigma), 0.0])
    # covariance of separated bump pairs vs the closed form (shared draws)
    seps = [float(v) for v in cfg.get("separations", (9.0, 12.0, 18.0))]
    bump_r = float(cfg.get("bump_radius", 4.0))
    bump_r = min(bump_r, (min(seps) - 1.0) / 2.0)  # bumps must not overlap
    span = int(np.ceil(max(seps) + 2 * bump_r + 8))
    box = Box((0, 0), (span, 16))
    xs = np.arange(span) + 0.5
    ys = np.arange(16) + 0.5
    X, Y = np.meshgrid(xs, ys, indexing="ij")

    def bump(cx):
        r2 = ((X - cx) / bump_r) ** 2 + ((Y - 8.0) / bump_r) ** 2
        w = np.where(r2 < 1.0, np.exp(-1.0 / np.maximum(1e-12, 1.0 - r2)), 0.0)
        return w / w.sum()

    base = bump(2.0 + bump_r)
    others = [bump(2.0 + bump_r + sep) for sep in seps]
    vals = np.empty((samples, 1 + len(seps)))
    for i in range(samples):
        ss = np.random.SeedSequence(entropy=seed, spawn_key=(9, i))
        F = sample_fgf(params, box, ss)
        vals[i, 0] = (F.values * base).sum()
        for j, c in enumerate(others):
            vals[i, 1 + j] = (F.values * c).sum()
    pts = np.stack([X.ravel(), Y.ravel()], axis=-1)
    w1 = base.ravel()
    nz1 = w1 > 0
    for j, (sep, c) in enumerate(zip(seps, others)):
        cov = float(np.cov(vals[:, 0], vals[:, 1 + j])[0, 1])
        w2 = c.ravel()
        nz2 = w2 > 0
        diff = pts[nz1][:, None, :] - pts[nz2][None, :, :]
        dist = np.sqrt((diff**2).sum(axis=-1))
        target = fgf_covariance_constant(2, sigma) * float(
            (w1[nz1][:, None] * w2[nz2][None, :] * dist ** (-2 * sigma)).sum()
        )
        rows.append(["bump_cov", sep, cov, target])
    return rows, header, {"sigma": sigma, "samples": samples}


def run_besov(cfg):
    from .besov import BesovSpec, besov_seminorm, ring_negative_norm

    seed = _seed_of(cfg)
    level = max(cfg["levels"])
    cube = TriadicCube(level, (0, 0), 2)
    sample_fn, pad = make_sampler(cfg["sampler"], max_level=level)
    box = Box((0, 0), (cube.side,) * 2).grow(max(pad, 1))
    f = sample_fn(box, np.random.SeedSequence(entropy=seed))
    scalar = f.values_on(cube)[..., 0, 0]
    header = ["s", "p", "q", "seminorm", "ring_norm"]
    rows = []
    for s in cfg.get("s_values", [0.25, 0.5, 0.75]):
        for p in cfg.get("p_values", [1.0, 2.0]):
            q = float(cfg.get("q", 2.0))
            semi = besov_seminorm(scalar, BesovSpec(s, p, q), cube)
            ring = ring_negative_norm(scalar, BesovSpec(s, p, q, "negative-ring"), cube)
            rows.append([s, p, q, semi, ring])
    return rows, header, {}


def run_field_sample(cfg, outdir):
    seed = _seed_of(cfg)
    shape = tuple(int(s) for s in cfg["shape"])
    lo = tuple(int(v) for v in cfg.get("lo", (0,) * len(shape)))
    sample_fn, pad = make_sampler(cfg["sampler"], max_level=6)
    f = sample_fn(Box(lo, shape), np.random.SeedSequence(entropy=seed))
    path = outdir / "field.cgf"
    dump_field(f, path)
    return path


# ---------------------------------------------------------------------------
# calibration
# ---------------------------------------------------------------------------

def run_calibrate(cfg, outdir):
    """Recompute the calibrated constants used by the verification suites."""
    seed = _seed_of(cfg)
    solver = solver_from(cfg)
    seeds = range(int(cfg.get("calibration_seeds", 8)))
    sampler = cfg.get("sampler", {"kind": "poisson", "rho": 0.02, "lam": 0.1,
                                  "Lam": 10.0})
    sample_fn, pad = make_sampler(sampler, max_level=3)
    cube = TriadicCube(3, (0, 0), 2)
    box = Box((0, 0), (cube.side,) * 2).grow(max(pad, 1))
    fw, lips, poin = [], [], []
    from .besov import multiscale_poincare_check
    from .cellsolve import solve_dirichlet

    for s in seeds:
        f = sample_fn(box, np.random.SeedSequence(entropy=seed, spawn_key=(s,)))
        out = harmonic_approx_forward(f, np.eye(2) * 1.18, cube, boundary_seed=s,
                                      solver=solver)
        fw.append(out["ratio"] / (out["scale_term"] + out["max_E1"]))
        lips.append(lipschitz_diagnostic(f, cube, [1, 2], boundary_seed=s,
                                         solver=solver))
        rng = np.random.default_rng(np.random.SeedSequence(entropy=seed,
                                                           spawn_key=(s, 1)))
        w = solve_dirichlet(f, cube, rng.normal(size=(cube.side + 1,) * 2),
                            solver=solver)
        C, _, _ = multiscale_poincare_check(w.values, 2.0, 2.0, cube)
        poin.append(C)
    calib = {
        "harmonic_forward_C": float(np.max(fw) * 1.5),
        "lipschitz_C": float(np.max(lips) * 1.5),
        "poincare_C": float(np.max(poin) * 1.5),
        "seeds": len(list(seeds)),
    }
    with open(outdir / "calibration.json", "w") as fh:
        json.dump(calib, fh, indent=1, sort_keys=True)
    return calib


def load_calibration():
    here = Path(__file__).parent / "calibration.json"
    with open(here) as fh:
        return json.load(fh)


# ---------------------------------------------------------------------------
# output plumbing
# ---------------------------------------------------------------------------

def _write_csv(path, header, rows):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for row in rows:
            writer.writerow([_fmt(v) for v in row])


def _sha256(path):
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(65536), b""):
            h.update(chunk)
    return h.hexdigest()


def _emit(outdir: Path, name: str, header, rows, extra, cfg, started):
    outdir.mkdir(parents=True, exist_ok=True)
    csv_path = outdir / f"{name}.csv"
    _write_csv(csv_path, header, rows)
    json_path = outdir / f"{name}.json"
    payload = {
        "header": header,
        "rows": [[float(v) if isinstance(v, (int, float, np.floating)) else v
                  for v in row] for row in rows],
        **extra,
    }
    with open(json_path, "w") as fh:
        json.dump(payload, fh, sort_keys=True, separators=(",", ":"))
    manifest = {
        "config_sha256": hashlib.sha256(
            json.dumps(cfg, sort_keys=True).encode()
        ).hexdigest(),
        "code_version": __version__,
        "started": started,
        "finished": datetime.datetime.now(datetime.timezone.utc).isoformat(),
        "outputs": {
            csv_path.name: _sha256(csv_path),
            json_path.name: _sha256(json_path),
        },
    }
    with open(outdir / "manifest.json", "w") as fh:
        json.dump(manifest, fh, indent=1, sort_keys=True)


def cmd_run(path):
    cfg = validate_config(load_config(path))
    outdir = Path(cfg.get("output_dir", "out"))
    started = datetime.datetime.now(datetime.timezone.utc).isoformat()
    kind = cfg["experiment"]
    if kind == "field-sample":
        outdir.mkdir(parents=True, exist_ok=True)
        p = run_field_sample(cfg, outdir)
        manifest = {
            "config_sha256": hashlib.sha256(
                json.dumps(cfg, sort_keys=True).encode()
            ).hexdigest(),
            "code_version": __version__,
            "started": started,
            "finished": datetime.datetime.now(datetime.timezone.utc).isoformat(),
            "outputs": {p.name: _sha256(p)},
        }
        with open(outdir / "manifest.json", "w") as fh:
            json.dump(manifest, fh, indent=1, sort_keys=True)
        return 0
    body = {
        "flow": run_flow,
        "homog-error": run_homog_error,
        "concentration": run_concentration,
        "fgf-validate": run_fgf_validate,
        "besov": run_besov,
    }[kind]
    rows, header, extra = body(cfg)
    _emit(Path(outdir), kind.replace("-", "_"), header, rows, extra, cfg, started)
    return 0


def cmd_validate(path):
    cfg = validate_config(load_config(path))
    print("ok")
    return 0


def cmd_calibrate(path):
    cfg = validate_config(load_config(path)) if Path(path).exists() else {"seed": 0}
    outdir = Path(cfg.get("output_dir", "out"))
    outdir.mkdir(parents=True, exist_ok=True)
    calib = run_calibrate(cfg, outdir)
    print(json.dumps(calib, sort_keys=True))
    return 0


def main(argv=None):
    parser = argparse.ArgumentParser(
        prog="cgflow",
        description="coarse-grained renormalization flow experiments",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name in ("run", "validate", "calibrate"):
        p = sub.add_parser(name)
        p.add_argument("config")
    pf = sub.add_parser("field")
    pf.add_argument("action", choices=["sample"])
    pf.add_argument("config")
    args = parser.parse_args(argv)

    try:
        if args.command == "run":
            return cmd_run(args.config)
        if args.command == "validate":
            return cmd_validate(args.config)
        if args.command == "calibrate":
            return cmd_calibrate(args.config)
        if args.command == "field":
            cfg = validate_config(load_config(args.config))
            if cfg["experiment"] != "field-sample":
                raise ConfigError("experiment: field sample wants 'field-sample'")
            return cmd_run(args.config)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return 4
    except (InequalityViolated, RenormError) as e:
        print(f"invariant violated: {e}", file=sys.stderr)
        return 2
    except SolveFailed as e:
        print(f"solver failure: {e}", file=sys.stderr)
        return 3
    return 0


if __name__ == "__main__":
    sys.exit(main())
