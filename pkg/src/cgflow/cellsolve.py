"""Discrete variational engine for the coarse-grained matrices A(U).

The cube is triangulated: every unit cell is split along the "/" diagonal
into a lower triangle (corners A=base, B=A+e1, C=A+e2) and an upper one
(B, D=A+e1+e2, C).  Scalar potentials live on nodes; each triangle carries
the constant gradient of the piecewise-linear interpolant, whose components
are forward differences along the cell edges.  Divergence-free test fields
are perpendicular gradients of zero-trace stream functions.

This pairing makes the structure exact at the discrete level (up to solver
tolerance): subadditivity of A(U) and of its block swap, the squeeze between
the arithmetic and harmonic means of the pointwise matrix, the ordering
s*(U) <= s(U), the gap identity, the spatial-average formulas for the
maximizers, and the covariance A(a - h) = G_h^t A(a) G_h under constant
skew shifts.
"""

from __future__ import annotations

import time
from dataclasses import dataclass
from weakref import WeakKeyDictionary

import numpy as np

from .fields import CoefficientField
from .grids import TriadicCube, partition
from .matalg import BlockMatrix, eigh_jacobi, inv_spd


class SolveError(Exception):
    pass


class SolveFailed(SolveError):
    def __init__(self, message, report=None):
        super().__init__(message)
        self.report = report


class InequalityViolated(SolveError):
    def __init__(self, message, slacks=None):
        super().__init__(message)
        self.slacks = slacks


@dataclass(frozen=True)
class SolverOptions:
    rtol: float = 1e-12
    max_iter_factor: int = 20


DEFAULT_SOLVER = SolverOptions()


@dataclass
class SolveReport:
    iterations: int
    rel_residual: float
    wall_time: float


@dataclass
class DiscreteFunction:
    """Scalar nodal values on a cube; zero-trace functions vanish on the
    boundary nodes exactly."""

    cube: TriadicCube
    values: np.ndarray
    boundary: str = "free"  # or "zero-trace"

    def __post_init__(self):
        n = self.cube.side
        v = np.asarray(self.values, dtype=float)
        if v.shape != (n + 1, n + 1):
            raise SolveError(f"nodal shape {v.shape} != {(n+1, n+1)}")
        if self.boundary == "zero-trace":
            edge = np.concatenate([v[0], v[-1], v[:, 0], v[:, -1]])
            if np.any(edge != 0.0):
                raise SolveError("zero-trace function has nonzero boundary values")
        self.values = v


@dataclass
class VectorField2d:
    """A test field X = (gradient part, flux part): the gradient part is the
    discrete gradient of a zero-trace scalar and the flux part the rotated
    gradient of a zero-trace stream function.  Arrays (N, N, 2, 2) indexed
    [cell_x, cell_y, triangle, component]."""

    cube: TriadicCube
    gradient: np.ndarray
    flux: np.ndarray

    @classmethod
    def from_potentials(cls, cube: TriadicCube, phi: DiscreteFunction,
                        psi: DiscreteFunction):
        if phi.boundary != "zero-trace" or psi.boundary != "zero-trace":
            raise SolveError("test fields come from zero-trace potentials")
        return cls(cube, tri_grads(phi.values), rot(tri_grads(psi.values)))

    def mean_gradient(self):
        return self.gradient.mean(axis=(0, 1, 2))

    def mean_flux(self):
        return self.flux.mean(axis=(0, 1, 2))


@dataclass
class MaximizerField:
    """Gradient and flux of a variational maximizer v(., U, p, q), per
    triangle; unlike a test field, the gradient part is generally not a
    nodal gradient."""

    cube: TriadicCube
    gradient: np.ndarray
    flux: np.ndarray

    def mean_gradient(self):
        return self.gradient.mean(axis=(0, 1, 2))

    def mean_flux(self):
        return self.flux.mean(axis=(0, 1, 2))


# ---------------------------------------------------------------------------
# triangle-pair differential operators
# ---------------------------------------------------------------------------

def tri_grads(u):
    """Per-triangle gradients of a nodal function; (N, N, 2, 2)."""
    A = u[:-1, :-1]
    B = u[1:, :-1]
    C = u[:-1, 1:]
    D = u[1:, 1:]
    g = np.empty(A.shape + (2, 2))
    g[..., 0, 0] = B - A  # lower: bottom edge
    g[..., 0, 1] = C - A  # lower: left edge
    g[..., 1, 0] = D - C  # upper: top edge
    g[..., 1, 1] = D - B  # upper: right edge
    return g


def tri_grads_T(F):
    """Adjoint of tri_grads: (N, N, 2, 2) -> nodal (N+1, N+1)."""
    n0, n1 = F.shape[0] + 1, F.shape[1] + 1
    out = np.zeros((n0, n1))
    out[:-1, :-1] -= F[..., 0, 0]
    out[1:, :-1] += F[..., 0, 0]
    out[:-1, :-1] -= F[..., 0, 1]
    out[:-1, 1:] += F[..., 0, 1]
    out[:-1, 1:] -= F[..., 1, 0]
    out[1:, 1:] += F[..., 1, 0]
    out[1:, :-1] -= F[..., 1, 1]
    out[1:, 1:] += F[..., 1, 1]
    return out


def rot(g):
    """Perpendicular gradient (g_y, -g_x) per triangle."""
    out = np.empty_like(g)
    out[..., 0] = g[..., 1]
    out[..., 1] = -g[..., 0]
    return out


def rot_T(F):
    out = np.empty_like(F)
    out[..., 0] = -F[..., 1]
    out[..., 1] = F[..., 0]
    return out


def big_a_cells(a):
    """Pointwise 2d x 2d matrix A(x) built from the cell coefficients."""
    s = 0.5 * (a + np.swapaxes(a, -1, -2))
    k = 0.5 * (a - np.swapaxes(a, -1, -2))
    sinv = np.linalg.inv(s)
    kt = np.swapaxes(k, -1, -2)
    A = np.zeros(a.shape[:-2] + (4, 4))
    A[..., :2, :2] = s + kt @ sinv @ k
    A[..., :2, 2:] = -kt @ sinv
    A[..., 2:, :2] = -sinv @ k
    A[..., 2:, 2:] = sinv
    return A


# ---------------------------------------------------------------------------
# conjugate gradient on the coupled potential x stream system
# ---------------------------------------------------------------------------

class _CubeProblem:
    """Holds the quadratic form of a cube (or masked cell set) of a field."""

    def __init__(self, field: CoefficientField, cube: TriadicCube, mask=None,
                 solver: SolverOptions = DEFAULT_SOLVER):
        if field.d != 2:
            raise SolveError("the variational engine is two-dimensional")
        self.cube = cube
        self.solver = solver
        a = field.values_on(cube)
        n = cube.side
        if mask is None:
            mask = np.ones((n, n), dtype=bool)
        self.mask = mask
        self.n_cells = int(mask.sum())
        self.AA = big_a_cells(a) * mask[..., None, None]
        # dof nodes: all four adjacent cells active (and inside the cube)
        padded = np.zeros((n + 2, n + 2), dtype=bool)
        padded[1:-1, 1:-1] = mask
        self.dof = (
            padded[1:, 1:] & padded[:-1, 1:] & padded[1:, :-1] & padded[:-1, :-1]
        )
        self.n_dof = int(self.dof.sum())
        self._zero4 = np.zeros(4)
        self._diag = self._assemble_diag()

    # -- operator pieces ----------------------------------------------------

    def fields(self, phi, psi, P):
        Y = np.empty(self.mask.shape + (2, 4))
        Y[..., :2] = tri_grads(phi) + P[:2]
        Y[..., 2:] = rot(tri_grads(psi)) + P[2:]
        return Y

    def _embed(self, x):
        phi = np.zeros((self.cube.side + 1,) * 2)
        psi = np.zeros_like(phi)
        m = self.n_dof
        phi[self.dof] = x[:m]
        psi[self.dof] = x[m:]
        return phi, psi

    def _project(self, zphi, zpsi):
        return np.concatenate([zphi[self.dof], zpsi[self.dof]])

    def _apply(self, x):
        phi, psi = self._embed(x)
        Y = self.fields(phi, psi, self._zero4)
        Z = Y @ self.AA  # AA symmetric, so this is (AA Y) per triangle
        return self._project(tri_grads_T(Z[..., :2]), tri_grads_T(rot_T(Z[..., 2:])))

    def rhs(self, P):
        Z = np.einsum("ijab,b->ija", self.AA, np.asarray(P, dtype=float))
        Z2 = np.repeat(Z[:, :, None, :], 2, axis=2)
        return -self._project(
            tri_grads_T(Z2[..., :2]), tri_grads_T(rot_T(Z2[..., 2:]))
        )

    def _assemble_diag(self):
        n = self.cube.side
        a00 = self.AA[..., 0, 0]
        a01 = self.AA[..., 0, 1]
        a11 = self.AA[..., 1, 1]
        b00 = self.AA[..., 3, 3]
        b01 = -self.AA[..., 3, 2]
        b11 = self.AA[..., 2, 2]

        def accum(c00, c01, c11):
            dg = np.zeros((n + 1, n + 1))
            corner = c00 + 2.0 * c01 + c11
            dg[:-1, :-1] += corner  # A (lower)
            dg[1:, 1:] += corner    # D (upper)
            dg[1:, :-1] += c00 + c11  # B in both triangles
            dg[:-1, 1:] += c11 + c00  # C in both triangles
            return dg

        dphi = accum(a00, a01, a11)[self.dof]
        dpsi = accum(b00, b01, b11)[self.dof]
        diag = np.concatenate([dphi, dpsi])
        diag[diag <= 0.0] = 1.0
        return diag

    # -- conjugate gradient -------------------------------------------------

    def solve(self, P):
        b = self.rhs(np.asarray(P, dtype=float))
        t0 = time.perf_counter()
        bnorm = float(np.linalg.norm(b))
        if bnorm == 0.0:
            return self._embed(np.zeros(2 * self.n_dof)), SolveReport(0, 0.0, 0.0)
        x = np.zeros(2 * self.n_dof)
        r = b.copy()
        z = r / self._diag
        p = z.copy()
        rz = float(r @ z)
        max_iter = self.solver.max_iter_factor * max(2 * self.n_dof, 1)
        it = 0
        tol = self.solver.rtol * bnorm
        while it < max_iter:
            Ap = self._apply(p)
            alpha = rz / float(p @ Ap)
            x += alpha * p
            r -= alpha * Ap
            rn = float(np.linalg.norm(r))
            it += 1
            if rn <= tol:
                break
            z = r / self._diag
            rz_new = float(r @ z)
            p = z + (rz_new / rz) * p
            rz = rz_new
        rel = float(np.linalg.norm(b - self._apply(x))) / bnorm
        report = SolveReport(it, rel, time.perf_counter() - t0)
        if not np.isfinite(rel) or rel > 10.0 * self.solver.rtol:
            raise SolveFailed(f"CG stalled at residual {rel:.3e}", report)
        return self._embed(x), report

    def energy_inner(self, Y, Z):
        return float(np.einsum("ijta,ijab,ijtb->", Y, self.AA, Z)) / (2.0 * self.n_cells)


# ---------------------------------------------------------------------------
# coarse-grained matrices with per-(field, cube) memoization
# ---------------------------------------------------------------------------

_CACHE: "WeakKeyDictionary[CoefficientField, dict]" = WeakKeyDictionary()


def _cube_key(cube: TriadicCube, mask_key=None):
    return (cube.level, cube.base, mask_key)


def _basis_solution(field: CoefficientField, cube: TriadicCube,
                    solver: SolverOptions = DEFAULT_SOLVER, mask=None, mask_key=None):
    # memoized per (field identity, cube, mask); the first solve wins, so
    # solver options are not part of the key
    per_field = _CACHE.setdefault(field, {})
    key = _cube_key(cube, mask_key)
    if key in per_field:
        return per_field[key]
    prob = _CubeProblem(field, cube, mask=mask, solver=solver)
    sols = []
    for m in range(4):
        P = np.eye(4)[m]
        (phi, psi), report = prob.solve(P)
        sols.append((phi, psi))
    Ys = [prob.fields(phi, psi, np.eye(4)[m]) for m, (phi, psi) in enumerate(sols)]
    A = np.empty((4, 4))
    for m in range(4):
        for l in range(m, 4):
            A[m, l] = A[l, m] = prob.energy_inner(Ys[m], Ys[l])
    entry = (BlockMatrix(2, A), sols, prob)
    per_field[key] = entry
    return entry


def coarse_matrix(field: CoefficientField, cube: TriadicCube,
                  solver: SolverOptions = DEFAULT_SOLVER) -> BlockMatrix:
    """A(U): the 2d x 2d quadratic form P -> min over potential x solenoidal
    fields X of the cube average of (X+P) . A(x) (X+P)."""
    if field.d == 2:
        if cube.level == 0:
            # single cell: no interior degrees of freedom, A(U) = A(x)
            a = field.values_on(cube)
            return BlockMatrix(2, big_a_cells(a)[0, 0])
        A, _, _ = _basis_solution(field, cube, solver)
        return A
    if field.d in (1, 3):
        return _coarse_matrix_symmetric(field, cube, solver)
    raise SolveError(f"unsupported dimension {field.d}")


def coarse_matrix_masked(field: CoefficientField, cube: TriadicCube, mask,
                         mask_key, solver: SolverOptions = DEFAULT_SOLVER) -> BlockMatrix:
    """A(V) for the cell subset of `cube` flagged by the boolean mask."""
    A, _, _ = _basis_solution(field, cube, solver, mask=mask, mask_key=mask_key)
    return A


def j_value(field, cube, p, q, solver: SolverOptions = DEFAULT_SOLVER) -> float:
    """J(U, p, q) = 1/2 (-p,q) . A(U) (-p,q) - p.q."""
    A = coarse_matrix(field, cube, solver)
    v = np.concatenate([-np.asarray(p, float), np.asarray(q, float)])
    return 0.5 * float(v @ A.M @ v) - float(np.dot(p, q))


def j_star_value(field, cube, p, q, solver: SolverOptions = DEFAULT_SOLVER) -> float:
    A = coarse_matrix(field, cube, solver)
    v = np.concatenate([np.asarray(p, float), np.asarray(q, float)])
    return 0.5 * float(v @ A.M @ v) - float(np.dot(p, q))


def maximizer_field(field, cube, p, q, solver: SolverOptions = DEFAULT_SOLVER) -> MaximizerField:
    """Gradient and flux of the maximizer v(., U, p, q), per triangle.

    Recovered from the two-variable minimizer Y = X_P + P with P = (-p, q):
    grad v = g_Y + s^{-1}(f_Y - k g_Y) and flux = a grad v.
    """
    _, sols, prob = _basis_solution(field, cube, solver)
    P = np.concatenate([-np.asarray(p, float), np.asarray(q, float)])
    phi = sum(P[m] * sols[m][0] for m in range(4))
    psi = sum(P[m] * sols[m][1] for m in range(4))
    Y = prob.fields(phi, psi, P)
    a = field.values_on(cube)
    s = 0.5 * (a + np.swapaxes(a, -1, -2))
    k = 0.5 * (a - np.swapaxes(a, -1, -2))
    sinv = np.linalg.inv(s)
    g = Y[..., :2]
    f = Y[..., 2:]
    grad_v = g + np.einsum("ijab,ijtb->ijta", sinv, f - np.einsum("ijab,ijtb->ijta", k, g))
    flux_v = np.einsum("ijab,ijtb->ijta", a, grad_v)
    return MaximizerField(cube, grad_v, flux_v)


def maximizer_stats(field, cube, p, q, solver: SolverOptions = DEFAULT_SOLVER):
    """(mean gradient, mean flux, energy) of the maximizer of J(U, p, q)."""
    vf = maximizer_field(field, cube, p, q, solver)
    a = field.values_on(cube)
    s = 0.5 * (a + np.swapaxes(a, -1, -2))
    energy = float(
        np.einsum("ijta,ijab,ijtb->", vf.gradient, s, vf.gradient)
    ) / (2.0 * cube.side**2)
    return vf.mean_gradient(), vf.mean_flux(), energy


def finite_volume_corrector(field, cube, e, solver: SolverOptions = DEFAULT_SOLVER) -> MaximizerField:
    """The maximizer for (p, q) = (0, s*(U) e): its gradient averages to e."""
    from .matalg import extract_components

    A = coarse_matrix(field, cube, solver)
    s_star, _, _, _ = extract_components(A)
    q = s_star.entries @ np.asarray(e, dtype=float)
    return maximizer_field(field, cube, np.zeros(2), q, solver)


def dirichlet_load(f, n):
    """P1 load vector of a cell source: each triangle spreads f/6 per vertex."""
    load = np.zeros((n + 1, n + 1))
    if f is None:
        return load
    f = np.asarray(f, dtype=float)
    load[:-1, :-1] += f / 6.0
    load[1:, :-1] += f / 3.0
    load[:-1, 1:] += f / 3.0
    load[1:, 1:] += f / 6.0
    return load


def _nodal_data(g, cube):
    n = cube.side
    if callable(g):
        xs = np.arange(n + 1) + cube.base[0]
        ys = np.arange(n + 1) + cube.base[1]
        X, Y = np.meshgrid(xs, ys, indexing="ij")
        return np.asarray(g(X, Y), dtype=float)
    g = np.asarray(g, dtype=float)
    if g.shape != (n + 1, n + 1):
        raise SolveError("boundary data must be nodal or callable")
    return g


def solve_dirichlet(field, cube, g, f=None,
                    solver: SolverOptions = DEFAULT_SOLVER) -> DiscreteFunction:
    """Weak solution of -div(a grad u) = f with u = g on the boundary nodes.

    BiCGStab on the nonsymmetric system, Jacobi-preconditioned by the
    symmetric part, with a CGNR fallback; the contract is the residual bound.
    """
    if field.d != 2:
        raise SolveError("solve_dirichlet is two-dimensional")
    n = cube.side
    a = field.values_on(cube)
    gfull = _nodal_data(g, cube)
    interior = np.zeros((n + 1, n + 1), dtype=bool)
    interior[1:-1, 1:-1] = True

    def apply_full(u):
        return tri_grads_T(0.5 * np.einsum("ijab,ijtb->ijta", a, tri_grads(u)))

    u_bc = gfull.copy()
    u_bc[interior] = 0.0
    load = dirichlet_load(f, n)
    b = (load - apply_full(u_bc))[interior]

    s = 0.5 * (a + np.swapaxes(a, -1, -2))
    diag = _dirichlet_diag(s)[interior]
    diag[diag <= 0] = 1.0

    at = np.swapaxes(a, -1, -2)

    def K(x):
        u = np.zeros((n + 1, n + 1))
        u[interior] = x
        return apply_full(u)[interior]

    def KT(x):
        u = np.zeros((n + 1, n + 1))
        u[interior] = x
        return tri_grads_T(0.5 * np.einsum("ijab,ijtb->ijta", at, tri_grads(u)))[interior]

    x, rep = _bicgstab(K, b, diag, solver)
    if not np.isfinite(rep.rel_residual) or rep.rel_residual > 1e3 * solver.rtol:
        x, rep = _cgnr(K, KT, b, diag, solver)
    if not np.isfinite(rep.rel_residual) or rep.rel_residual > 1e3 * solver.rtol:
        raise SolveFailed(f"dirichlet solve stalled at {rep.rel_residual:.3e}", rep)
    u = u_bc.copy()
    u[interior] = x
    return DiscreteFunction(cube, u, boundary="free")


def _dirichlet_diag(s):
    n = s.shape[0]
    a00 = s[..., 0, 0]
    a01 = s[..., 0, 1]
    a11 = s[..., 1, 1]
    dg = np.zeros((n + 1, n + 1))
    corner = 0.5 * (a00 + 2 * a01 + a11)
    dg[:-1, :-1] += corner
    dg[1:, 1:] += corner
    dg[1:, :-1] += 0.5 * (a00 + a11)
    dg[:-1, 1:] += 0.5 * (a00 + a11)
    return dg


def _bicgstab(K, b, diag, solver: SolverOptions):
    t0 = time.perf_counter()
    bnorm = float(np.linalg.norm(b))
    nn = b.size
    if bnorm == 0.0:
        return np.zeros(nn), SolveReport(0, 0.0, time.perf_counter() - t0)
    x = np.zeros(nn)
    r = b.copy()
    r0 = r.copy()
    rho = alpha = omega = 1.0
    v = np.zeros(nn)
    p = np.zeros(nn)
    tol = solver.rtol * bnorm
    max_iter = solver.max_iter_factor * nn
    it = 0
    while it < max_iter:
        rho_new = float(r0 @ r)
        if abs(rho_new) < 1e-300:
            break
        beta = (rho_new / rho) * (alpha / omega) if it else 0.0
        p = r + beta * (p - omega * v) if it else r.copy()
        rho = rho_new
        phat = p / diag
        v = K(phat)
        denom = float(r0 @ v)
        if abs(denom) < 1e-300:
            break
        alpha = rho / denom
        sres = r - alpha * v
        if float(np.linalg.norm(sres)) <= tol:
            x += alpha * phat
            it += 1
            break
        shat = sres / diag
        t = K(shat)
        tt = float(t @ t)
        if tt == 0.0:
            break
        omega = float(t @ sres) / tt
        x += alpha * phat + omega * shat
        r = sres - omega * t
        it += 1
        if float(np.linalg.norm(r)) <= tol or omega == 0.0:
            break
    rel = float(np.linalg.norm(b - K(x))) / bnorm
    return x, SolveReport(it, rel, time.perf_counter() - t0)


def _cgnr(K, KT, b, diag, solver: SolverOptions):
    """CG on the normal equations K^T K x = K^T b (guaranteed fallback;
    the transpose is the same stencil built from a^t)."""
    t0 = time.perf_counter()
    bnorm = float(np.linalg.norm(b))
    x, rel = _cg_simple(
        lambda y: KT(K(y)), KT(b), diag**2, solver.rtol, solver.max_iter_factor * b.size
    )
    rel = float(np.linalg.norm(b - K(x))) / bnorm if bnorm else 0.0
    return x, SolveReport(-1, rel, time.perf_counter() - t0)


def interior_residual(field, u: DiscreteFunction):
    """Max nodal residual of -div(a grad u) = 0 at interior nodes (the
    discrete flux-divergence of the solution)."""
    a = field.values_on(u.cube)
    res = tri_grads_T(0.5 * np.einsum("ijab,ijtb->ijta", a, tri_grads(u.values)))
    return float(np.abs(res[1:-1, 1:-1]).max())


def coarse_grain_inequalities(field, cube, w: DiscreteFunction,
                              solver: SolverOptions = DEFAULT_SOLVER,
                              tol: float = 1e-8):
    """Slacks of the coarse-graining inequalities for an a-harmonic w.

    Returns a dict of nonnegative slacks (rhs - lhs); raises
    InequalityViolated when any slack is below -tol * energy scale.
    """
    from .matalg import extract_components, spectral_norm, star_dual

    a = field.values_on(cube)
    s = 0.5 * (a + np.swapaxes(a, -1, -2))
    G = tri_grads(w.values)
    n2 = 2.0 * cube.side**2
    mean_g = G.mean(axis=(0, 1, 2))
    flux = np.einsum("ijab,ijtb->ijta", a, G)
    mean_f = flux.mean(axis=(0, 1, 2))
    energy = float(np.einsum("ijta,ijab,ijtb->", G, s, G)) / n2  # mean grad.s.grad

    A = coarse_matrix(field, cube, solver)
    s_star, k, s_U, b = extract_components(A)
    gap_norm = spectral_norm(s_U.entries - s_star.entries)

    a_star = s_star.entries - k.T
    lhs1 = float(np.linalg.norm(mean_f - a_star @ mean_g))
    rhs1 = np.sqrt(2.0) * np.sqrt(max(gap_norm, 0.0)) * np.sqrt(energy)

    lhs2 = 0.5 * float(mean_g @ s_star.entries @ mean_g)
    lhs3 = 0.5 * float(mean_f @ inv_spd(b.entries, "b(U)") @ mean_f)

    X_mean = np.concatenate([mean_g, mean_f])
    A_star = inv_spd(star_dual(A).M, "A_*^{-1}")
    lhs4 = 0.5 * float(X_mean @ A_star @ X_mean)

    slacks = {
        "grad_to_flux": rhs1 - lhs1,
        "energy_grad": 0.5 * energy - lhs2,
        "energy_flux": 0.5 * energy - lhs3,
        "energy_all": energy - lhs4,
    }
    floor = -tol * max(1.0, energy)
    bad = {k2: v for k2, v in slacks.items() if v < floor}
    if bad:
        raise InequalityViolated(f"coarse-graining inequalities failed: {bad}", slacks)
    return slacks


def subadditivity_check(field, cube, k: int,
                        solver: SolverOptions = DEFAULT_SOLVER) -> float:
    """Smallest eigenvalue of (mean over level-k children of A) - A(cube).

    The same number is the slack for the block swap A_*^{-1}, which is the
    conjugation of this difference by the swap matrix.
    """
    if k >= cube.level:
        raise SolveError("sublevel must be strictly below the cube level")
    A = coarse_matrix(field, cube, solver).M
    children = partition(cube, k)
    mean_child = sum(coarse_matrix(field, c, solver).M for c in children) / len(children)
    w, _ = eigh_jacobi(mean_child - A)
    return float(w.min())


# ---------------------------------------------------------------------------
# symmetric-field coarse matrices in d = 1 and d = 3
# ---------------------------------------------------------------------------

def _fd_grads(u):
    """Forward-difference gradient per cell for d-dimensional nodal arrays."""
    d = u.ndim
    outs = []
    for ax in range(d):
        sl_hi = tuple(slice(1, None) if i == ax else slice(None, -1) for i in range(d))
        sl_lo = tuple(slice(None, -1) for _ in range(d))
        outs.append(u[sl_hi] - u[sl_lo])
    return np.stack(outs, axis=-1)


def _fd_grads_T(F):
    d = F.shape[-1]
    shape = tuple(s + 1 for s in F.shape[:-1])
    out = np.zeros(shape)
    for ax in range(d):
        comp = F[..., ax]
        sl_hi = tuple(slice(1, None) if i == ax else slice(None, -1) for i in range(d))
        sl_lo = tuple(slice(None, -1) for _ in range(d))
        out[sl_hi] += comp
        out[sl_lo] -= comp
    return out


def _cg_simple(apply_fn, b, diag, rtol, max_iter):
    bnorm = float(np.linalg.norm(b))
    x = np.zeros_like(b)
    if bnorm == 0.0:
        return x, 0.0
    r = b.copy()
    z = r / diag
    p = z.copy()
    rz = float(r @ z)
    for _ in range(max_iter):
        Ap = apply_fn(p)
        alpha = rz / float(p @ Ap)
        x += alpha * p
        r -= alpha * Ap
        if float(np.linalg.norm(r)) <= rtol * bnorm:
            break
        z = r / diag
        rz_new = float(r @ z)
        p = z + (rz_new / rz) * p
        rz = rz_new
    return x, float(np.linalg.norm(b - apply_fn(x))) / bnorm


def _coarse_matrix_symmetric(field, cube, solver: SolverOptions):
    """Block-diagonal A(U) = diag(s(U), s*(U)^{-1}) for symmetric fields.

    s(U) comes from the zero-trace Dirichlet minimization; s*(U)^{-1} from
    the free-boundary problem J(U, 0, q) = sup_v (q . mean grad v
    - mean of grad v . s grad v / 2), whose optimal value is q . mean grad
    v_q / 2, so s*^{-1} e_l = mean gradient of the e_l-solution.
    """
    d = field.d
    a = field.values_on(cube)
    skew = np.abs(a - np.swapaxes(a, -1, -2)).max()
    if skew > 1e-12 * max(1.0, np.abs(a).max()):
        raise SolveError("d != 2 engine supports symmetric fields only")
    n = cube.side
    ncells = n**d
    s = 0.5 * (a + np.swapaxes(a, -1, -2))
    nodes = tuple(n + 1 for _ in range(d))
    interior = np.zeros(nodes, dtype=bool)
    interior[(slice(1, -1),) * d] = True
    free = np.ones(nodes, dtype=bool)
    diag_full = np.zeros(nodes)
    for ax in range(d):
        comp = s[..., ax, ax]
        sl_hi = tuple(slice(1, None) if i == ax else slice(None, -1) for i in range(d))
        sl_lo = tuple(slice(None, -1) for _ in range(d))
        diag_full[sl_hi] += comp
        diag_full[sl_lo] += comp
    max_iter = solver.max_iter_factor * max(int(free.sum()), 1)

    def solve_system(mask, b_masked, mean_zero=False):
        diag = diag_full[mask].copy()
        diag[diag <= 0] = 1.0

        def apply_fn(x):
            u = np.zeros(nodes)
            u[mask] = x
            if mean_zero:
                u -= u.mean()
            G = _fd_grads(u)
            res = _fd_grads_T(np.einsum("...ab,...b->...a", s, G))[mask]
            if mean_zero:
                res -= res.mean()
            return res

        b = b_masked - b_masked.mean() if mean_zero else b_masked
        x, rel = _cg_simple(apply_fn, b, diag, solver.rtol, max_iter)
        if not np.isfinite(rel) or rel > 1e3 * solver.rtol:
            raise SolveFailed(f"symmetric solve stalled at {rel:.3e}")
        u = np.zeros(nodes)
        u[mask] = x
        if mean_zero:
            u -= u.mean()
        return u

    # Dirichlet part: minimize mean (grad u + p) . s (grad u + p)
    sU = np.empty((d, d))
    grads = []
    for m in range(d):
        P = np.eye(d)[m]
        rhs = -_fd_grads_T(np.einsum("...ab,b->...a", s, P))[interior]
        u = solve_system(interior, rhs)
        grads.append(_fd_grads(u) + P)
    for m in range(d):
        for l in range(m, d):
            sU[m, l] = sU[l, m] = float(
                np.einsum(
                    "na,nab,nb->",
                    grads[m].reshape(-1, d),
                    s.reshape(-1, d, d),
                    grads[l].reshape(-1, d),
                )
            ) / ncells

    # free-boundary part: grad^T (s grad v) = grad^T (q) over all nodes
    sstar_inv = np.empty((d, d))
    mean_grads = []
    for l in range(d):
        q = np.eye(d)[l]
        rhs = _fd_grads_T(np.broadcast_to(q, s.shape[:-2] + (d,)))[free]
        v = solve_system(free, rhs, mean_zero=True)
        mean_grads.append(_fd_grads(v).reshape(-1, d).mean(axis=0))
    for l in range(d):
        sstar_inv[:, l] = mean_grads[l]
    sstar_inv = 0.5 * (sstar_inv + sstar_inv.T)
    M = np.zeros((2 * d, 2 * d))
    M[:d, :d] = sU
    M[d:, d:] = sstar_inv
    return BlockMatrix(d, M)
