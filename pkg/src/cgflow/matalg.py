"""Exact small-matrix algebra for the 2d x 2d coarse-grained diffusion matrices.

Everything here operates on matrices of size at most 6x6, so we favor
robustness over speed: symmetric eigenproblems are solved with a cyclic
Jacobi iteration carried to machine precision, and the skew-minimization
behind the ellipticity ratio uses derivative-free searches (golden section
in d=2, Nelder-Mead over the three skew coordinates in d=3).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


class MatAlgError(Exception):
    pass


class DegenerateBlock(MatAlgError):
    """Lower-right block of a 2d x 2d matrix is not invertible / not SPD."""


class NotPositiveDefinite(MatAlgError):
    pass


class ThetaNoConverge(MatAlgError):
    """Skew minimization ran out of budget; carries the best iterate found."""

    def __init__(self, message, best=None):
        super().__init__(message)
        self.best = best


class AdaptationFailed(MatAlgError):
    """No lattice resolution satisfied the q0 sandwich bound."""


class OrderViolated(MatAlgError):
    """A Loewner ordering prerequisite failed; carries the offending eigenvalue."""

    def __init__(self, message, eigenvalue):
        super().__init__(message)
        self.eigenvalue = eigenvalue


# ---------------------------------------------------------------------------
# Cyclic Jacobi eigendecomposition and derived primitives
# ---------------------------------------------------------------------------

_JACOBI_SWEEPS = 60


def eigh_jacobi(a):
    """Eigendecomposition of a symmetric matrix by cyclic Jacobi rotations.

    Returns (w, V) with eigenvalues ascending and a = V @ diag(w) @ V.T.
    """
    a = np.asarray(a, dtype=float)
    n = a.shape[0]
    A = 0.5 * (a + a.T)
    V = np.eye(n)
    if n == 1:
        return A[0].copy(), V
    scale = np.abs(A).max()
    if scale == 0.0:
        return np.zeros(n), V
    tol = 1e-16 * scale
    for _ in range(_JACOBI_SWEEPS):
        off = 0.0
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = A[p, q]
                off = max(off, abs(apq))
                if abs(apq) <= tol:
                    continue
                theta = 0.5 * (A[q, q] - A[p, p]) / apq
                t = np.sign(theta) / (abs(theta) + np.hypot(1.0, theta))
                if theta == 0.0:
                    t = 1.0
                c = 1.0 / np.hypot(1.0, t)
                s = t * c
                rot = np.eye(n)
                rot[p, p] = c
                rot[q, q] = c
                rot[p, q] = s
                rot[q, p] = -s
                A = rot.T @ A @ rot
                A[p, q] = A[q, p] = 0.0
                V = V @ rot
        if off <= tol:
            break
    w = np.diag(A).copy()
    order = np.argsort(w)
    return w[order], V[:, order]


def spectral_norm(a):
    """Spectral norm |A| (largest singular value)."""
    a = np.asarray(a, dtype=float)
    if a.shape[0] == 1:
        return abs(float(a[0, 0]))
    if np.allclose(a, a.T, rtol=0.0, atol=1e-13 * (1.0 + np.abs(a).max())):
        w, _ = eigh_jacobi(a)
        return float(np.abs(w).max())
    w, _ = eigh_jacobi(a.T @ a)
    return float(np.sqrt(max(w.max(), 0.0)))


def _powm_spd(a, power, name="matrix"):
    w, V = eigh_jacobi(a)
    if w.min() <= 0.0:
        raise NotPositiveDefinite(
            f"{name} is not positive definite (min eigenvalue {w.min():.3e})"
        )
    return (V * w**power) @ V.T


def sqrtm_spd(a, name="matrix"):
    return _powm_spd(a, 0.5, name)


def invsqrtm_spd(a, name="matrix"):
    return _powm_spd(a, -0.5, name)


def inv_spd(a, name="matrix"):
    return _powm_spd(a, -1.0, name)


def loewner_min_eig(a, b):
    """Smallest eigenvalue of b - a (>= 0 means a <= b in Loewner order)."""
    w, _ = eigh_jacobi(np.asarray(b, dtype=float) - np.asarray(a, dtype=float))
    return float(w.min())


# ---------------------------------------------------------------------------
# Domain types
# ---------------------------------------------------------------------------

_ALLOWED_DIMS = (1, 2, 3, 4, 6)


@dataclass(frozen=True)
class SymMatrix:
    """A small real symmetric matrix (d-block or 2d-block)."""

    entries: np.ndarray

    def __post_init__(self):
        m = np.array(self.entries, dtype=float)
        if m.ndim != 2 or m.shape[0] != m.shape[1]:
            raise MatAlgError(f"not square: shape {m.shape}")
        if m.shape[0] not in _ALLOWED_DIMS:
            raise MatAlgError(f"unsupported dimension {m.shape[0]}")
        scale = max(1.0, float(np.abs(m).max()))
        if np.abs(m - m.T).max() > 1e-14 * scale:
            raise MatAlgError("matrix is not symmetric to 1e-14")
        m = 0.5 * (m + m.T)
        m.flags.writeable = False
        object.__setattr__(self, "entries", m)

    @property
    def dim(self):
        return self.entries.shape[0]

    def norm(self):
        return spectral_norm(self.entries)

    def min_eig(self):
        w, _ = eigh_jacobi(self.entries)
        return float(w.min())


@dataclass(frozen=True)
class SkewMatrix:
    """A small real antisymmetric matrix, stored through its upper triangle."""

    upper: np.ndarray

    def __post_init__(self):
        u = np.array(self.upper, dtype=float)
        if u.ndim != 2 or u.shape[0] != u.shape[1]:
            raise MatAlgError(f"not square: shape {u.shape}")
        u = np.triu(u, k=1)
        u.flags.writeable = False
        object.__setattr__(self, "upper", u)

    @classmethod
    def from_entries(cls, m):
        m = np.asarray(m, dtype=float)
        sk = cls(np.triu(m, k=1))
        if not np.array_equal(sk.entries, m):
            raise MatAlgError("matrix is not exactly antisymmetric")
        return sk

    @property
    def entries(self):
        return self.upper - self.upper.T

    @property
    def dim(self):
        return self.upper.shape[0]


@dataclass(frozen=True)
class BlockMatrix:
    """Symmetric positive semidefinite 2d x 2d matrix with block accessors."""

    d: int
    M: np.ndarray

    def __post_init__(self):
        m = np.array(self.M, dtype=float)
        if m.shape != (2 * self.d, 2 * self.d):
            raise MatAlgError(f"expected shape {(2*self.d,)*2}, got {m.shape}")
        scale = max(1.0, float(np.abs(m).max()))
        if np.abs(m - m.T).max() > 1e-12 * scale:
            raise MatAlgError("block matrix is not symmetric")
        m = 0.5 * (m + m.T)
        w, _ = eigh_jacobi(m)
        if w.min() < -1e-12 * max(spectral_norm(m), 1.0):
            raise MatAlgError(
                f"block matrix is not PSD (min eigenvalue {w.min():.3e})"
            )
        m.flags.writeable = False
        object.__setattr__(self, "M", m)

    @property
    def dim(self):
        return 2 * self.d


@dataclass(frozen=True)
class EllipticityReport:
    """Result of the skew-centered ellipticity minimization."""

    theta: float
    pi: float
    h_opt: SkewMatrix
    lam: float
    Lam: float

    def __post_init__(self):
        if self.theta < 1.0 - 1e-9:
            raise MatAlgError(f"theta = {self.theta} < 1")
        if self.pi < self.theta - 1e-9:
            raise MatAlgError(f"pi = {self.pi} < theta = {self.theta}")
        if self.lam <= 0.0 or self.Lam <= 0.0:
            raise MatAlgError("ellipticity constants must be positive")
        if abs(self.pi - self.Lam / self.lam) > 1e-12 * max(self.pi, 1.0):
            raise MatAlgError("pi != Lambda/lambda")


# ---------------------------------------------------------------------------
# Block assembly / extraction / centering
# ---------------------------------------------------------------------------

def assemble_block(s: SymMatrix, s_star: SymMatrix, k) -> BlockMatrix:
    """Build the 2d x 2d matrix with blocks (s + k^t s*^-1 k, -k^t s*^-1; -s*^-1 k, s*^-1)."""
    d = s.dim
    k = np.asarray(k, dtype=float)
    if s_star.dim != d or k.shape != (d, d):
        raise MatAlgError("dimension mismatch in assemble_block")
    if s.min_eig() <= 0.0:
        raise DegenerateBlock("s block is not positive definite")
    if s_star.min_eig() <= 0.0:
        raise DegenerateBlock("s_star block is singular / not positive definite")
    si = inv_spd(s_star.entries, "s_star")
    m = np.empty((2 * d, 2 * d))
    m[:d, :d] = s.entries + k.T @ si @ k
    m[:d, d:] = -k.T @ si
    m[d:, :d] = -si @ k
    m[d:, d:] = si
    return BlockMatrix(d, 0.5 * (m + m.T))


def extract_components(A: BlockMatrix):
    """Invert the block assembly: returns (s_star, k, s, b)."""
    d = A.d
    E11 = A.M[:d, :d]
    E12 = A.M[:d, d:]
    E21 = A.M[d:, :d]
    E22 = A.M[d:, d:]
    w, _ = eigh_jacobi(E22)
    if w.min() <= 1e-14 * max(1.0, w.max()):
        raise DegenerateBlock("lower-right block not invertible")
    s_star = inv_spd(E22, "E22")
    k = -s_star @ E21
    s = E11 - E12 @ s_star @ E21
    return (
        SymMatrix(0.5 * (s_star + s_star.T)),
        k,
        SymMatrix(0.5 * (s + s.T)),
        SymMatrix(0.5 * (E11 + E11.T)),
    )


def center(A: BlockMatrix, h: SkewMatrix) -> BlockMatrix:
    """Conjugate by G_h = [[I,0],[h,I]]: leaves s, s* fixed and shifts k by -h."""
    d = A.d
    if h.dim != d:
        raise MatAlgError("dimension mismatch in center")
    G = np.eye(2 * d)
    G[d:, :d] = h.entries
    return BlockMatrix(d, G.T @ A.M @ G)


def star_dual(A: BlockMatrix) -> BlockMatrix:
    """The matrix A_*^{-1} = R A R obtained by swapping the d-blocks."""
    d = A.d
    R = np.zeros((2 * d, 2 * d))
    R[:d, d:] = np.eye(d)
    R[d:, :d] = np.eye(d)
    return BlockMatrix(d, R @ A.M @ R)


# ---------------------------------------------------------------------------
# Skew minimization: the ellipticity ratio
# ---------------------------------------------------------------------------

_GOLD = (np.sqrt(5.0) - 1.0) / 2.0


def _golden_section(f, lo, hi, tol=1e-10, max_iter=400):
    """Minimize a scalar (quasi)convex f on [lo, hi]."""
    a, b = lo, hi
    x1 = b - _GOLD * (b - a)
    x2 = a + _GOLD * (b - a)
    f1, f2 = f(x1), f(x2)
    it = 0
    while b - a > tol and it < max_iter:
        if f1 <= f2:
            b, x2, f2 = x2, x1, f1
            x1 = b - _GOLD * (b - a)
            f1 = f(x1)
        else:
            a, x1, f1 = x1, x2, f2
            x2 = a + _GOLD * (b - a)
            f2 = f(x2)
        it += 1
    xm = 0.5 * (a + b)
    return xm, f(xm), it < max_iter


def _nelder_mead(f, x0, scale, max_iter=500, tol=1e-12):
    """Plain Nelder-Mead on R^n; returns (x, fx, converged)."""
    n = x0.size
    pts = [x0.copy()]
    for i in range(n):
        p = x0.copy()
        p[i] += scale if scale > 0 else 1.0
        pts.append(p)
    simplex = np.array(pts)
    fvals = np.array([f(p) for p in simplex])
    for it in range(max_iter):
        order = np.argsort(fvals)
        simplex, fvals = simplex[order], fvals[order]
        spread = fvals[-1] - fvals[0]
        if spread <= tol * (abs(fvals[0]) + tol):
            return simplex[0], fvals[0], True
        centroid = simplex[:-1].mean(axis=0)
        xr = centroid + (centroid - simplex[-1])
        fr = f(xr)
        if fr < fvals[0]:
            xe = centroid + 2.0 * (centroid - simplex[-1])
            fe = f(xe)
            if fe < fr:
                simplex[-1], fvals[-1] = xe, fe
            else:
                simplex[-1], fvals[-1] = xr, fr
        elif fr < fvals[-2]:
            simplex[-1], fvals[-1] = xr, fr
        else:
            xc = centroid + 0.5 * (simplex[-1] - centroid)
            fc = f(xc)
            if fc < fvals[-1]:
                simplex[-1], fvals[-1] = xc, fc
            else:
                simplex[1:] = simplex[0] + 0.5 * (simplex[1:] - simplex[0])
                fvals[1:] = [f(p) for p in simplex[1:]]
    order = np.argsort(fvals)
    return simplex[order][0], fvals[order][0], False


def _skew_from_coords(c, d):
    k = np.zeros((d, d))
    if d == 2:
        k[0, 1] = c[0]
    elif d == 3:
        k[0, 1], k[0, 2], k[1, 2] = c
    return k - k.T


def _skew_coords(k):
    d = k.shape[0]
    if d == 2:
        return np.array([k[0, 1]])
    if d == 3:
        return np.array([k[0, 1], k[0, 2], k[1, 2]])
    return np.zeros(0)


def ellipticity_ratio(A: BlockMatrix) -> EllipticityReport:
    """Theta, Pi and the minimizing constant skew matrix h for a block matrix.

    Theta minimizes |s*^{-1/2} (s + (k-h)^t s*^{-1} (k-h)) s*^{-1/2}| over the
    constant antisymmetric matrices h; Lambda is the same minimum without the
    s* sandwich, and lambda = |s*^{-1}|^{-1}.
    """
    s_star, k, s, _ = extract_components(A)
    d = A.d
    si = inv_spd(s_star.entries, "s_star")
    sqi = invsqrtm_spd(s_star.entries, "s_star")
    lam = 1.0 / spectral_norm(si)

    def centered(h):
        km = k - h
        return s.entries + km.T @ si @ km

    def theta_obj(h):
        return spectral_norm(sqi @ centered(h) @ sqi)

    def lam_obj(h):
        return spectral_norm(centered(h))

    if d == 1:
        h_opt = np.zeros((1, 1))
        theta = theta_obj(h_opt)
        Lam = lam_obj(h_opt)
    elif d == 2:
        B = 2.0 * (spectral_norm(k) + s.norm() + s_star.norm())
        J = np.array([[0.0, 1.0], [-1.0, 0.0]])

        c_t, theta, ok_t = _golden_section(lambda c: theta_obj(c * J), -B, B)
        c_l, Lam, ok_l = _golden_section(lambda c: lam_obj(c * J), -B, B)
        if not (ok_t and ok_l):
            raise ThetaNoConverge(
                "golden-section budget exhausted", best=(c_t, theta)
            )
        h_opt = c_t * J
    elif d == 3:
        x0 = _skew_coords(0.5 * (k - k.T))
        scale = 0.1 * (1.0 + spectral_norm(k) + s.norm())

        def run(obj):
            x1, f1, ok1 = _nelder_mead(lambda c: obj(_skew_from_coords(c, 3)), x0, scale)
            x2, f2, ok2 = _nelder_mead(
                lambda c: obj(_skew_from_coords(c, 3)), np.zeros(3), scale
            )
            if f2 < f1:
                x1, f1, ok1 = x2, f2, ok2
            return x1, f1, ok1

        x_t, theta, ok = run(theta_obj)
        if not ok:
            raise ThetaNoConverge("Nelder-Mead budget exhausted", best=(x_t, theta))
        _, Lam, _ = run(lam_obj)
        h_opt = _skew_from_coords(x_t, 3)
    else:
        raise MatAlgError(f"unsupported spatial dimension d={d}")

    return EllipticityReport(
        theta=float(theta),
        pi=float(Lam / lam),
        h_opt=SkewMatrix.from_entries(h_opt),
        lam=float(lam),
        Lam=float(Lam),
    )


# ---------------------------------------------------------------------------
# Geometric means of positive definite matrices
# ---------------------------------------------------------------------------

def metric_geomean(A: SymMatrix, B: SymMatrix) -> SymMatrix:
    """A # B = A^{1/2} (A^{-1/2} B A^{-1/2})^{1/2} A^{1/2}.

    The unique SPD solution X of the Riccati equation X A^{-1} X = B.
    """
    if A.dim != B.dim:
        raise MatAlgError("dimension mismatch in metric_geomean")
    ra = sqrtm_spd(A.entries, "A")
    rai = invsqrtm_spd(A.entries, "A")
    inner = sqrtm_spd(rai @ B.entries @ rai, "A^{-1/2} B A^{-1/2}")
    x = ra @ inner @ ra
    return SymMatrix(0.5 * (x + x.T))


def spectral_geomean(A: SymMatrix, B: SymMatrix) -> SymMatrix:
    """A natural B = (A^{-1} # B)^{1/2} A (A^{-1} # B)^{1/2}.

    Its square is similar to AB, so its eigenvalues are the square roots of
    those of AB.
    """
    if A.dim != B.dim:
        raise MatAlgError("dimension mismatch in spectral_geomean")
    ai = SymMatrix(inv_spd(A.entries, "A"))
    n = metric_geomean(ai, B)
    rn = sqrtm_spd(n.entries, "A^{-1} # B")
    x = rn @ A.entries @ rn
    return SymMatrix(0.5 * (x + x.T))


# ---------------------------------------------------------------------------
# Adapted geometry and two-sided bounds
# ---------------------------------------------------------------------------

_K0_CAP = 40


def adapted_q0(A: BlockMatrix, k0_digits: int = 4) -> SymMatrix:
    """The symmetric matrix q0: entrywise ceil of lambda0^{-1/2} m0^{1/2}
    to the lattice 3^{-k0} Z, with m0 = b0 # s*0.

    The resolution is increased automatically until the sandwich
    0.99 * lambda0^{-1/2} m0^{1/2} <= q0 <= 1.01 * (same) holds in the
    Loewner order.
    """
    s_star, _, _, b = extract_components(A)
    m0 = metric_geomean(b, s_star)
    lam0 = 1.0 / spectral_norm(inv_spd(m0.entries, "m0"))
    target = sqrtm_spd(m0.entries, "m0") / np.sqrt(lam0)
    k0 = int(k0_digits)
    while k0 <= _K0_CAP:
        step = 3.0 ** (-k0)
        q0 = np.ceil(target / step) * step
        q0 = 0.5 * (q0 + q0.T)
        lo_ok = loewner_min_eig(0.99 * target, q0) >= -1e-12
        hi_ok = loewner_min_eig(q0, 1.01 * target) >= -1e-12
        if lo_ok and hi_ok:
            return SymMatrix(q0)
        k0 += 1
    raise AdaptationFailed(f"sandwich bound not met up to k0 = {_K0_CAP}")


def two_sided_bound(A: BlockMatrix, E: BlockMatrix) -> float:
    """|E^{-1/2} A E^{-1/2} - I| for A <= E, with the one-sided-to-two-sided
    guarantee (2 + Theta~^{1/2}) (Theta~ - 1) checked against it."""
    if A.d != E.d:
        raise MatAlgError("dimension mismatch in two_sided_bound")
    trace_scale = max(1.0, float(np.trace(E.M)))
    gap = loewner_min_eig(A.M, E.M)
    if gap < -1e-10 * trace_scale:
        raise OrderViolated("A <= E fails", eigenvalue=gap)
    s_star_t, _, s_t, _ = extract_components(E)
    sqi = invsqrtm_spd(s_star_t.entries, "s~*")
    theta_t = spectral_norm(sqi @ s_t.entries @ sqi)
    ei = invsqrtm_spd(E.M, "E")
    val = spectral_norm(ei @ A.M @ ei - np.eye(2 * A.d))
    bound = (2.0 + np.sqrt(theta_t)) * (theta_t - 1.0)
    if val > bound + 1e-9:
        raise MatAlgError(
            f"two-sided bound violated: {val} > {bound} (Theta~ = {theta_t})"
        )
    return float(val)


def symm_part_gap_check(A: BlockMatrix) -> float:
    """Slack of +-(k + k^t) <= s - s* in the Loewner order.

    Returns the smallest eigenvalue of (s - s*) -+ (k + k^t) over both signs;
    nonnegative (up to tolerance) means the bound holds.
    """
    s_star, k, s, _ = extract_components(A)
    gap = s.entries - s_star.entries
    sym_k = k + k.T
    slack = min(
        loewner_min_eig(sym_k, gap),
        loewner_min_eig(-sym_k, gap),
    )
    return float(slack)
