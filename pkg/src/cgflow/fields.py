"""Seedable coefficient-field samplers on padded lattice boxes.

All samplers are deterministic functions of (parameters, seed): substreams
are keyed through numpy SeedSequence spawn keys, so identical inputs give
bit-identical fields regardless of how the work is scheduled.

Fractional Gaussian fields are built as sums of annular convolution layers
of a single white-noise field.  Layer n reads the noise only through an
annulus of outer radius (4/3) * 3^n, which keeps the paper-style range of
dependence per layer and the exact independence of layers two or more
levels apart, while preserving the cross-layer covariance of the sum.
"""

from __future__ import annotations

import json
import struct
import zlib
from dataclasses import dataclass, field
from math import gamma as gamma_fn
from math import pi

import numpy as np

from .grids import TriadicCube


class FieldError(Exception):
    pass


class DegenerateField(FieldError):
    """Symmetric part failed to be positive definite at some cell."""

    def __init__(self, message, cell=None):
        super().__init__(message)
        self.cell = cell


class PaddingTooSmall(FieldError):
    pass


class OutOfBox(FieldError):
    pass


@dataclass(frozen=True)
class Box:
    """Axis-aligned integer box of unit cells: coordinates in [lo, lo+shape)."""

    lo: tuple
    shape: tuple

    def __post_init__(self):
        object.__setattr__(self, "lo", tuple(int(v) for v in self.lo))
        object.__setattr__(self, "shape", tuple(int(v) for v in self.shape))
        if len(self.lo) != len(self.shape) or any(s <= 0 for s in self.shape):
            raise FieldError(f"bad box lo={self.lo} shape={self.shape}")

    @property
    def d(self):
        return len(self.shape)

    @property
    def hi(self):
        return tuple(l + s for l, s in zip(self.lo, self.shape))

    def contains_cube(self, cube: TriadicCube, margin: int = 0) -> bool:
        return all(
            b - margin >= l and b + cube.side + margin <= h
            for b, l, h in zip(cube.base, self.lo, self.hi)
        )

    def grow(self, pad: int) -> "Box":
        return Box(tuple(l - pad for l in self.lo), tuple(s + 2 * pad for s in self.shape))

    def slices_for(self, cube: TriadicCube):
        if not self.contains_cube(cube):
            raise OutOfBox(f"cube {cube} not inside box {self}")
        return tuple(slice(b - l, b - l + cube.side) for b, l in zip(cube.base, self.lo))


@dataclass(eq=False, frozen=True)
class CoefficientField:
    """Per-cell d x d matrix field a(x) on a padded box; immutable."""

    d: int
    box: Box
    cells: np.ndarray
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        c = np.asarray(self.cells, dtype=float)
        want = self.box.shape + (self.d, self.d)
        if c.shape != want:
            raise FieldError(f"cells shape {c.shape}, expected {want}")
        _check_spd_sym_part(c, self.d)
        c = c.copy() if c.flags.writeable else c
        c.flags.writeable = False
        object.__setattr__(self, "cells", c)

    def sym(self):
        return 0.5 * (self.cells + np.swapaxes(self.cells, -1, -2))

    def skew(self):
        return 0.5 * (self.cells - np.swapaxes(self.cells, -1, -2))

    def values_on(self, cube: TriadicCube):
        return self.cells[self.box.slices_for(cube)]


def _check_spd_sym_part(cells, d):
    s = 0.5 * (cells + np.swapaxes(cells, -1, -2))
    if d == 1:
        bad = s[..., 0, 0] <= 0.0
    elif d == 2:
        bad = (s[..., 0, 0] <= 0.0) | (
            s[..., 0, 0] * s[..., 1, 1] - s[..., 0, 1] ** 2 <= 0.0
        )
    else:
        bad = np.linalg.eigvalsh(s)[..., 0] <= 0.0
    if bad.any():
        loc = tuple(int(i) for i in np.argwhere(bad)[0])
        raise DegenerateField(f"symmetric part not SPD at cell {loc}", cell=loc)


@dataclass(eq=False, frozen=True)
class ScalarLattice:
    """Scalar values per cell on a box; `sub` cells per unit length per axis."""

    box: Box
    values: np.ndarray
    sub: int = 1

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        want = tuple(s * self.sub for s in self.box.shape)
        if v.shape != want:
            raise FieldError(f"values shape {v.shape}, expected {want}")
        if not np.isfinite(v).all():
            raise FieldError("non-finite lattice values")
        object.__setattr__(self, "values", v)

    @property
    def d(self):
        return self.box.d


# ---------------------------------------------------------------------------
# White noise
# ---------------------------------------------------------------------------

def _rng(seed, *spawn_key):
    if isinstance(seed, np.random.SeedSequence):
        ss = seed
        if spawn_key:
            ss = np.random.SeedSequence(
                entropy=seed.entropy, spawn_key=tuple(seed.spawn_key) + tuple(spawn_key)
            )
        return np.random.default_rng(ss)
    ss = np.random.SeedSequence(entropy=seed, spawn_key=tuple(spawn_key))
    return np.random.default_rng(ss)


def sample_white_noise(box: Box, seed, sub: int = 1) -> ScalarLattice:
    """Discrete white noise: iid N(0, cell volume) per lattice cell.

    With `sub` subcells per unit axis the per-cell variance is sub^{-d},
    so block sums over unit cells are standard normal.
    """
    rng = _rng(seed)
    shape = tuple(s * sub for s in box.shape)
    vals = rng.standard_normal(shape) * float(sub) ** (-box.d / 2.0)
    return ScalarLattice(box, vals, sub=sub)


def block_sum(noise: ScalarLattice, factor: int) -> ScalarLattice:
    """Aggregate a fine lattice to a coarser one by summing factor^d blocks."""
    if noise.sub % factor:
        raise FieldError("block factor must divide the subdivision")
    v = noise.values
    d = noise.d
    for ax in range(d):
        n = v.shape[ax] // factor
        v = v.reshape(v.shape[:ax] + (n, factor) + v.shape[ax + 1 :]).sum(axis=ax + 1)
    return ScalarLattice(noise.box, v, sub=noise.sub // factor)


# ---------------------------------------------------------------------------
# Fractional Gaussian fields
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class FgfParams:
    """Parameters of the truncated fractional Gaussian field with Hurst -sigma."""

    sigma: float
    n_min: int = 0
    n_max: int = 3
    kernel_digits: int = 24

    def __post_init__(self):
        if not 0.0 < self.sigma:
            raise FieldError("sigma must be positive")
        if self.kernel_digits < 2:
            raise FieldError("kernel_digits too small")


_FINE_SUB = 3          # subcells per unit axis for the sub-unit layers
_FINE_MAX_LEVEL = 1    # layers n <= this are sampled on the fine lattice


def _smoothstep(t):
    t = np.clip(t, 0.0, 1.0)
    return t * t * t * (10.0 + t * (-15.0 + 6.0 * t))


def window_profile(r):
    """Radial cutoff T: 0 below 2/9, 1 above 4/9, quintic in between."""
    return _smoothstep((np.asarray(r, dtype=float) - 2.0 / 9.0) / (2.0 / 9.0))


def eta_layer(r, n):
    """Annular partition-of-unity member eta_n(r) = T(r/3^n) - T(r/3^{n+1})."""
    r = np.asarray(r, dtype=float)
    return window_profile(r / 3.0**n) - window_profile(r / 3.0 ** (n + 1))


def fgf_kernel_constant(d, sigma):
    """Normalization making the kernel A |z|^{-(d/2+sigma)} reproduce the
    self-similar covariance C(sigma,d) |x-y|^{-2 sigma}."""
    return (
        2.0**sigma
        * (2.0 * pi) ** (-d / 2.0)
        * gamma_fn(d / 4.0 + sigma / 2.0)
        / gamma_fn(d / 4.0 - sigma / 2.0)
    )


def fgf_covariance_constant(d, sigma):
    """C(sigma, d) = 2^{2 sigma - d} pi^{-d/2} Gamma(sigma) / Gamma(d/2 - sigma)."""
    return 2.0 ** (2 * sigma - d) * pi ** (-d / 2.0) * gamma_fn(sigma) / gamma_fn(d / 2.0 - sigma)


def _layer_window(n, lumped):
    if lumped:
        return lambda r: 1.0 - window_profile(r / 3.0 ** (n + 1))
    return lambda r: eta_layer(r, n)


def layer_radius(n, sub=1):
    """Support radius of layer n's kernel in lattice cells of spacing 1/sub."""
    return int(np.ceil((4.0 / 3.0) * 3.0**n * sub)) + 1


_KERNEL_CACHE = {}


def _cell_average(window, A, q, centers, h, digits):
    """Cell averages of window(r) A r^{-q} over cells of side h at `centers`.

    Graded midpoint subdivision; the cell containing the origin is split into
    an exactly integrated inscribed disk plus a subdivided remainder.
    """
    d = centers.shape[-1]
    r0 = np.sqrt((centers**2).sum(axis=-1))
    out = np.zeros(r0.shape)

    def refine(pts, m):
        off = (np.arange(m) + 0.5) / m - 0.5
        grids = np.meshgrid(*([off] * d), indexing="ij")
        offs = np.stack([g.ravel() for g in grids], axis=-1) * h
        sub_pts = pts[:, None, :] + offs[None, :, :]
        r = np.sqrt((sub_pts**2).sum(axis=-1))
        vals = np.where(r > 0, window(r) * A * np.where(r > 0, r, 1.0) ** (-q), 0.0)
        return vals.mean(axis=1)

    flat = centers.reshape(-1, d)
    rf = r0.ravel()
    res = np.zeros(rf.shape)
    origin = rf < 0.25 * h
    # graded subdivision away from the origin
    bins = [
        (~origin & (rf < 4 * h), digits),
        (~origin & (rf >= 4 * h) & (rf < 12 * h), max(6, digits // 3)),
        (~origin & (rf >= 12 * h), 2),
    ]
    for mask, m in bins:
        if mask.any():
            res[mask] = refine(flat[mask], m)
    if origin.any():
        # radial integral over the inscribed ball (window is radial; the
        # substitution u = r^{d-q} removes the integrable singularity),
        # midpoints elsewhere
        i = np.argwhere(origin).ravel()[0]
        rho = h / 2.0
        omega = {1: 2.0, 2: 2.0 * pi, 3: 4.0 * pi}[d]
        us = (np.arange(4096) + 0.5) / 4096 * rho ** (d - q)
        rs = us ** (1.0 / (d - q))
        ball = A * omega / (d - q) * float(
            np.mean(window(rs)) * rho ** (d - q)
        )
        m = max(digits, 32)
        off = (np.arange(m) + 0.5) / m - 0.5
        grids = np.meshgrid(*([off] * d), indexing="ij")
        pts = np.stack([g.ravel() for g in grids], axis=-1) * h + flat[i]
        r = np.sqrt((pts**2).sum(axis=-1))
        outside = r >= rho
        rem = np.where(outside, window(r) * A * np.where(r > 0, r, 1.0) ** (-q), 0.0)
        res[i] = (ball + rem.sum() * (h / m) ** d) / h**d
    return res.reshape(r0.shape)


def fgf_layer_kernel(d, sigma, n, sub=1, digits=24, lumped=None):
    """Discrete convolution kernel of layer n on a lattice of spacing 1/sub.

    Returns (radius_cells, kernel array with the origin at the center).
    Layer n_min may be `lumped`, meaning it carries the whole sub-window
    1 - T(r / 3^{n+1}) including all smaller scales (cell-averaged).
    """
    if sigma >= d / 2.0:
        raise FieldError("sigma must be below d/2")
    if lumped is None:
        lumped = n == 0
    key = (d, round(float(sigma), 12), n, sub, digits, bool(lumped))
    if key in _KERNEL_CACHE:
        return _KERNEL_CACHE[key]
    A = fgf_kernel_constant(d, sigma)
    q = d / 2.0 + sigma
    h = 1.0 / sub
    rad = layer_radius(n, sub)
    axes = [np.arange(-rad, rad + 1) * h for _ in range(d)]
    grids = np.meshgrid(*axes, indexing="ij")
    centers = np.stack(grids, axis=-1)
    window = _layer_window(n, lumped)
    kern = _cell_average(window, A, q, centers, h, digits)
    kern.flags.writeable = False
    _KERNEL_CACHE[key] = (rad, kern)
    return rad, kern


def _fft_correlate_valid(noise, kern, rad):
    """F[x] = sum_z kern[z] noise[x+z] on the deflated box (kernel is radial,
    so correlation equals convolution)."""
    shape = tuple(n for n in noise.shape)
    out_shape = tuple(n - 2 * rad for n in shape)
    if any(s <= 0 for s in out_shape):
        raise PaddingTooSmall("noise box smaller than the kernel support")
    fshape = tuple(n for n in shape)
    axes = tuple(range(len(shape)))
    fn = np.fft.rfftn(noise, fshape, axes=axes)
    fk = np.fft.rfftn(kern, fshape, axes=axes)
    conv = np.fft.irfftn(fn * fk, fshape, axes=axes)
    sl = tuple(slice(2 * rad, 2 * rad + o) for o in out_shape)
    return conv[sl]


def fgf_layer(params: FgfParams, n: int, W: ScalarLattice) -> ScalarLattice:
    """Convolve white noise with layer n's annular kernel.

    The noise values are the per-cell masses (N(0, h^d) for spacing h), so
    the layer field at a point x is  sum_c kern[c - x] W[c].  The result is
    returned at unit resolution (values at unit-cell centers) on the noise
    box deflated by the kernel radius.
    """
    d = W.d
    sub = W.sub
    lumped = n == params.n_min and n <= 0
    rad, kern = fgf_layer_kernel(
        d, params.sigma, n, sub=sub, digits=params.kernel_digits, lumped=lumped
    )
    pad_units = -(-rad // sub)
    vals = _fft_correlate_valid(W.values, kern, rad)
    out_box = W.box.grow(-pad_units)
    # vals[i] is the field at fine cell (lo * sub + rad + i); pick per unit
    # cell the fine cell containing its center (sub odd: exactly the center)
    start = pad_units * sub - rad + sub // 2
    sl = tuple(slice(start, start + sh * sub, sub) for sh in out_box.shape)
    return ScalarLattice(out_box, vals[sl], sub=1)


def sample_fgf(params: FgfParams, box: Box, seed) -> ScalarLattice:
    """Truncated FGF: sum of annular layers n in [n_min, n_max] of one
    white-noise field.  Sub-unit scales are carried by a single lumped layer
    (n_min, when n_min <= 0) sampled on a 3x finer noise lattice."""
    d = box.d
    if params.sigma >= d / 2.0:
        raise FieldError("sigma must be below d/2")
    if params.n_min > params.n_max:
        return ScalarLattice(box, np.zeros(box.shape), sub=1)

    def pad_of(n):
        sub = _FINE_SUB if n <= _FINE_MAX_LEVEL else 1
        return -(-layer_radius(n, sub) // sub)

    pad = max(pad_of(n) for n in range(params.n_min, params.n_max + 1))
    noise_box = box.grow(pad)
    fine = sample_white_noise(noise_box, seed, sub=_FINE_SUB)
    unit = block_sum(fine, _FINE_SUB)
    total = np.zeros(box.shape)
    for n in range(params.n_min, params.n_max + 1):
        W = fine if n <= _FINE_MAX_LEVEL else unit
        layer = fgf_layer(params, n, W)
        # layer covers noise_box deflated by its own radius; crop to box
        offs = tuple(box.lo[i] - layer.box.lo[i] for i in range(d))
        if any(o < 0 for o in offs) or any(
            o + box.shape[i] > layer.box.shape[i] for i, o in enumerate(offs)
        ):
            raise PaddingTooSmall(f"layer {n} does not cover the requested box")
        total += layer.values[tuple(slice(o, o + box.shape[i])
                                    for i, o in enumerate(offs))]
    return ScalarLattice(box, total, sub=1)


# ---------------------------------------------------------------------------
# Coefficient-field samplers
# ---------------------------------------------------------------------------

def constant_field(M, box: Box, meta=None) -> CoefficientField:
    M = np.asarray(M, dtype=float)
    d = M.shape[0]
    cells = np.broadcast_to(M, box.shape + (d, d)).copy()
    return CoefficientField(d, box, cells, meta or {"generator": "constant"})


def sample_poisson_inclusions(
    rho1, rho2, lam, Lam, box: Box, seed, points1=None, points2=None
) -> CoefficientField:
    """Scalar field 1 + (Lam-1) 1_{A1} + (lam-1) 1_{A2} where A_i is the union
    of unit balls centered at a Poisson cloud of intensity rho_i.

    The indicator (not the multiplicity count) of the union is used, so the
    values lie in {1, lam, Lam, Lam+lam-1} and the symmetric part stays SPD
    for lam in (0,1], Lam in [1,inf).
    """
    if not (0.0 < lam <= 1.0 and Lam >= 1.0):
        raise FieldError("need lam in (0,1] and Lam >= 1")
    d = box.d
    rng = _rng(seed)
    clouds = []
    for idx, (rho, forced) in enumerate(((rho1, points1), (rho2, points2))):
        if forced is not None:
            pts = np.asarray(forced, dtype=float).reshape(-1, d)
        else:
            lo = np.asarray(box.lo, dtype=float) - 1.0
            hi = np.asarray(box.hi, dtype=float) + 1.0
            vol = float(np.prod(hi - lo))
            n = rng.poisson(rho * vol)
            pts = lo + rng.random((n, d)) * (hi - lo)
        clouds.append(pts)
    covered = []
    for pts in clouds:
        cov = np.zeros(box.shape, dtype=bool)
        lo = np.asarray(box.lo)
        for p in pts:
            lo_i = np.maximum(np.floor(p - 1.5).astype(int), lo)
            hi_i = np.minimum(np.ceil(p + 1.5).astype(int), np.asarray(box.hi))
            if np.any(lo_i >= hi_i):
                continue
            axes = [np.arange(lo_i[i], hi_i[i]) for i in range(d)]
            grid = np.meshgrid(*axes, indexing="ij")
            centers = np.stack(grid, axis=-1) + 0.5
            hit = ((centers - p) ** 2).sum(axis=-1) <= 1.0
            sl = tuple(slice(lo_i[i] - lo[i], hi_i[i] - lo[i]) for i in range(d))
            cov[sl] |= hit
        covered.append(cov)
    scalar = 1.0 + (Lam - 1.0) * covered[0] + (lam - 1.0) * covered[1]
    cells = scalar[..., None, None] * np.eye(d)
    fieldobj = CoefficientField(
        d,
        box,
        cells,
        {
            "generator": "poisson_inclusions",
            "rho1": rho1,
            "rho2": rho2,
            "lam": lam,
            "Lam": Lam,
            "seed": _seed_repr(seed),
        },
    )
    return fieldobj


def sample_laminate(values, box: Box, seed, axis: int = 0, prob=None) -> CoefficientField:
    """Scalar laminate a(x) = v(x_axis) I with iid per-stripe values."""
    d = box.d
    rng = _rng(seed)
    values = np.asarray(values, dtype=float)
    n_str = box.shape[axis]
    choice = rng.choice(values, size=n_str, p=prob)
    shape = [1] * d
    shape[axis] = n_str
    scalar = np.broadcast_to(choice.reshape(shape), box.shape)
    cells = scalar[..., None, None] * np.eye(d)
    return CoefficientField(
        d, box, cells,
        {"generator": "laminate", "values": values.tolist(), "axis": axis,
         "seed": _seed_repr(seed)},
    )


def sample_checkerboard(alpha, beta, box: Box, seed) -> CoefficientField:
    """Scalar field with iid per-cell values alpha or beta (fair coin)."""
    d = box.d
    rng = _rng(seed)
    pick = rng.random(box.shape) < 0.5
    scalar = np.where(pick, float(alpha), float(beta))
    cells = scalar[..., None, None] * np.eye(d)
    return CoefficientField(
        d, box, cells,
        {"generator": "checkerboard", "alpha": alpha, "beta": beta,
         "seed": _seed_repr(seed)},
    )


def sample_stream_field(lam, params: FgfParams, box: Box, seed) -> CoefficientField:
    """a = lam I + k with k antisymmetric, entries independent truncated FGFs."""
    d = box.d
    if d not in (2, 3):
        raise FieldError("stream fields support d in {2, 3}")
    if lam <= 0.0:
        raise FieldError("lam must be positive")
    ss = _as_seedseq(seed)
    cells = np.zeros(box.shape + (d, d))
    cells[..., range(d), range(d)] = lam
    comp = 0
    for i in range(d):
        for j in range(i + 1, d):
            F = sample_fgf(params, box, _child(ss, ("stream", comp)))
            cells[..., i, j] += F.values
            cells[..., j, i] -= F.values
            comp += 1
    return CoefficientField(
        d, box, cells,
        {"generator": "stream", "lam": lam, "sigma": params.sigma,
         "n_max": params.n_max, "seed": _seed_repr(seed)},
    )


def sample_lognormal(h, params: FgfParams, box: Box, seed) -> CoefficientField:
    """a(x) = exp(h g(x)) with g a d x d matrix of independent truncated FGFs."""
    if h < 0.0:
        raise FieldError("h must be nonnegative")
    d = box.d
    ss = _as_seedseq(seed)
    g = np.zeros(box.shape + (d, d))
    comp = 0
    for i in range(d):
        for j in range(d):
            F = sample_fgf(params, box, _child(ss, ("lognormal", comp)))
            g[..., i, j] = F.values
            comp += 1
    cells = expm_field(h * g)
    return CoefficientField(
        d, box, cells,
        {"generator": "lognormal", "h": h, "sigma": params.sigma,
         "n_max": params.n_max, "seed": _seed_repr(seed)},
    )


def expm_field(X):
    """Matrix exponential per cell by scaling-and-squaring with a Taylor core."""
    X = np.asarray(X, dtype=float)
    norms = np.abs(X).sum(axis=-1).max(axis=-1)  # row-sum norm per cell
    nmax = float(norms.max()) if norms.size else 0.0
    s = max(0, int(np.ceil(np.log2(max(nmax, 1e-300)))) + 2) if nmax > 0.25 else 0
    Y = X / (2.0**s)
    d = X.shape[-1]
    out = np.broadcast_to(np.eye(d), X.shape).copy()
    term = np.broadcast_to(np.eye(d), X.shape).copy()
    k = 1
    while True:
        term = term @ Y / k
        out += term
        tn = np.abs(term).max()
        if tn < 1e-20 or k > 80:
            break
        k += 1
    for _ in range(s):
        out = out @ out
    return out


def torus_view(field_obj: CoefficientField, cube: TriadicCube) -> CoefficientField:
    """Restriction of a field to a cube (no copy; immutability preserved)."""
    vals = field_obj.values_on(cube)  # raises OutOfBox when outside
    sub_box = Box(cube.base, (cube.side,) * field_obj.d)
    meta = dict(field_obj.meta)
    meta["view_of"] = meta.get("generator", "unknown")
    return CoefficientField(field_obj.d, sub_box, vals, meta)


# ---------------------------------------------------------------------------
# Binary container (CGF1)
# ---------------------------------------------------------------------------

_MAGIC = b"CGF1"


def dump_field(field_obj: CoefficientField, path):
    meta_blob = json.dumps(field_obj.meta, sort_keys=True).encode("utf-8")
    d = field_obj.d
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(struct.pack("<I", d))
        fh.write(struct.pack(f"<{d}q", *field_obj.box.lo))
        fh.write(struct.pack(f"<{d}Q", *field_obj.box.shape))
        fh.write(struct.pack("<I", len(meta_blob)))
        fh.write(meta_blob)
        fh.write(np.ascontiguousarray(field_obj.cells, dtype="<f8").tobytes())


def load_field(path) -> CoefficientField:
    with open(path, "rb") as fh:
        if fh.read(4) != _MAGIC:
            raise FieldError("bad magic; not a CGF1 container")
        (d,) = struct.unpack("<I", fh.read(4))
        lo = struct.unpack(f"<{d}q", fh.read(8 * d))
        shape = struct.unpack(f"<{d}Q", fh.read(8 * d))
        (mlen,) = struct.unpack("<I", fh.read(4))
        meta = json.loads(fh.read(mlen).decode("utf-8"))
        count = int(np.prod(shape)) * d * d
        cells = np.frombuffer(fh.read(count * 8), dtype="<f8").reshape(*shape, d, d)
    return CoefficientField(d, Box(lo, shape), cells.astype(float), meta)


# ---------------------------------------------------------------------------
# Seed plumbing
# ---------------------------------------------------------------------------

def _as_seedseq(seed):
    if isinstance(seed, np.random.SeedSequence):
        return seed
    return np.random.SeedSequence(entropy=seed)


def _child(ss: np.random.SeedSequence, key):
    # process-independent integer keys (python's str hash is randomized)
    ikey = tuple(
        zlib.crc32(k.encode("utf-8")) if isinstance(k, str) else int(k) for k in key
    )
    return np.random.SeedSequence(entropy=ss.entropy, spawn_key=tuple(ss.spawn_key) + ikey)


def _seed_repr(seed):
    if isinstance(seed, np.random.SeedSequence):
        return {"entropy": seed.entropy, "spawn_key": list(seed.spawn_key)}
    return seed
