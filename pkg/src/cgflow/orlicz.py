"""Tail-bound function calculus: growth constants, moment and sum bounds,
and concentration inequalities for sums of heavy-tailed random variables.

Tail-bound functions Psi grow super-exponentially, so every evaluation is
carried in log space.  "For all t" statements are verified on a geometric
grid of 200 points per decade over [1, 1e6]; the functions involved are
smooth and monotone, so grid checking is the documented testing convention,
not a proof.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from math import gamma as gamma_fn
from math import ceil, exp, log, sqrt

import numpy as np


class OrliczError(Exception):
    pass


class ConstraintViolated(OrliczError):
    def __init__(self, message, worst_t=None):
        super().__init__(message)
        self.worst_t = worst_t


GRID_PER_DECADE = 200
GRID_MAX = 1.0e6


def _grid(lo=1.0, hi=GRID_MAX):
    n = max(int(np.ceil(np.log10(hi / lo) * GRID_PER_DECADE)), 2)
    return np.geomspace(lo, hi, n)


@dataclass(frozen=True)
class OrliczFunction:
    """Increasing tail-bound function Psi >= 1 with growth constant K."""

    log_psi: callable
    K: float
    family: str = "custom"
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.K < 1.0:
            raise OrliczError("growth constant must be >= 1")
        viol = growth_violation(self)
        if viol > 1e-9:
            raise OrliczError(f"growth condition fails on the grid by {viol:.3e}")

    def psi(self, t):
        return np.exp(np.minimum(self.log_psi(np.asarray(t, dtype=float)), 700.0))

    def tail(self, t):
        """The tail bound 1/Psi(t) for t >= 1 (1 below)."""
        t = np.asarray(t, dtype=float)
        out = np.exp(-self.log_psi(np.maximum(t, 1.0)))
        return np.where(t < 1.0, 1.0, out)


def growth_violation(psi: OrliczFunction) -> float:
    """Max over the grid of log t + log Psi(t) - log Psi(K t) (<= 0 is good)."""
    ts = _grid()
    return float((np.log(ts) + psi.log_psi(ts) - psi.log_psi(psi.K * ts)).max())


def absorption_violation(psi: OrliczFunction, p: float) -> float:
    """Max grid violation of t^p / Psi(t) <= 1 / Psi(K^{-4 ceil p} t) for
    t >= K^{4 ceil p}."""
    shift = psi.K ** (4 * ceil(p))
    ts = _grid(shift, shift * GRID_MAX)
    lhs = p * np.log(ts) - psi.log_psi(ts)
    rhs = -psi.log_psi(ts / shift)
    return float((lhs - rhs).max())


def lower_growth_violation(psi: OrliczFunction) -> float:
    """Max grid violation of Psi(t) >= exp(log^2 t / (9 log K)) for t >= K^2."""
    ts = _grid(psi.K**2, psi.K**2 * GRID_MAX)
    want = np.log(ts) ** 2 / (9.0 * log(psi.K))
    return float((want - psi.log_psi(ts)).max())


def doubling_violation(psi: OrliczFunction) -> float:
    """Max grid violation of s^2 <= K^12 Psi(ts)/Psi(t) (doubling with p=2)."""
    ts = _grid(1.0, 1e4)[::10]
    ss = _grid(1.0, 1e4)[::10]
    T, S = np.meshgrid(ts, ss, indexing="ij")
    lhs = 2.0 * np.log(S)
    rhs = 12.0 * log(psi.K) + psi.log_psi(T * S) - psi.log_psi(T)
    return float((lhs - rhs).max())


# ---------------------------------------------------------------------------
# families
# ---------------------------------------------------------------------------

def gamma_sigma(sigma: float) -> OrliczFunction:
    """Stretched exponential Psi(t) = exp(t^sigma)."""
    if sigma <= 0.0:
        raise OrliczError("sigma must be positive")
    K = ((sigma + 1.0) / sigma) ** (1.0 / sigma) if sigma < 1.0 else 2.0
    return OrliczFunction(
        log_psi=lambda t: np.asarray(t, dtype=float) ** sigma,
        K=K,
        family="Gamma_sigma",
        params={"sigma": sigma},
    )


def psi_sigma(sigma: float) -> OrliczFunction:
    """Log-normal-type Psi_sigma(t) = exp(sigma^-2 log^2(1 + sigma t))."""
    if sigma < 1.0:
        raise OrliczError("psi_sigma wants sigma >= 1")
    K = 2.0 * exp(2.0 * sigma**2)
    return OrliczFunction(
        log_psi=lambda t: np.log1p(sigma * np.asarray(t, dtype=float)) ** 2 / sigma**2,
        K=K,
        family="Psi_sigma",
        params={"sigma": sigma},
    )


# ---------------------------------------------------------------------------
# moment / sum bounds
# ---------------------------------------------------------------------------

def moment_bound(psi: OrliczFunction, a: float, p: float) -> float:
    """Upper bound for E|X|^p when X = O_Psi(a):
    a^p (1 + 2p K^{ceil(p(p+1)/2)} (1 + log K))."""
    if a <= 0.0 or p < 1.0:
        raise OrliczError("need a > 0 and p >= 1")
    K = psi.K
    return a**p * (1.0 + 2.0 * p * K ** ceil(p * (p + 1) / 2.0) * (1.0 + log(K)))


def osum_bound(psi: OrliczFunction, a_list) -> float:
    """Generalized triangle inequality constant: sums of O_Psi(a_k) variables
    are O_Psi(4 K^7 sum a_k)."""
    viol = doubling_violation(psi)
    if viol > 1e-9:
        raise OrliczError(f"doubling fails on the grid by {viol:.3e}")
    total = float(np.sum(np.asarray(list(a_list), dtype=float))) if len(list(a_list)) else 0.0
    return 4.0 * psi.K**7 * total


# ---------------------------------------------------------------------------
# concentration bounds
# ---------------------------------------------------------------------------

def conc_exp_bound(sigma: float, m: int, t: float) -> float:
    """Tail bound for sums of m centered O_{Gamma_sigma}(1) variables,
    sigma in [1, 2]."""
    if not 1.0 <= sigma <= 2.0:
        raise OrliczError("sigma must lie in [1, 2]")
    if t < 1.0:
        return 1.0
    gauss = exp(-(t**2) / (40.0 * m))
    if sigma == 1.0:
        val = max(gauss, exp(-0.5 * t))
    else:
        val = max(gauss, 128.0 / (sigma - 1.0) ** 3 * exp(-(t**sigma) / (2.0 * sigma)))
    return min(val, 1.0)


def psi_tail_integral(psi: OrliczFunction, tol: float = 1e-10) -> float:
    """C_Psi = integral over [1, inf) of t / Psi(t) dt by adaptive Simpson,
    the far tail cut where the integrand drops below 1e-30."""

    def f(t):
        return float(t * exp(-min(psi.log_psi(np.asarray(t)), 700.0)))

    hi = 2.0
    while f(hi) * hi > 1e-30 and hi < 1e9:
        hi *= 2.0

    def simpson(a, b, fa, fm, fb):
        return (b - a) / 6.0 * (fa + 4.0 * fm + fb)

    def adapt(a, b, fa, fm, fb, whole, eps, depth):
        m = 0.5 * (a + b)
        lm, rm = 0.5 * (a + m), 0.5 * (m + b)
        flm, frm = f(lm), f(rm)
        left = simpson(a, m, fa, flm, fm)
        right = simpson(m, b, fm, frm, fb)
        if depth <= 0 or abs(left + right - whole) < 15.0 * eps:
            return left + right + (left + right - whole) / 15.0
        return adapt(a, m, fa, flm, fm, left, eps / 2.0, depth - 1) + adapt(
            m, b, fm, frm, fb, right, eps / 2.0, depth - 1
        )

    a, b = 1.0, hi
    fa, fb = f(a), f(b)
    fm = f(0.5 * (a + b))
    whole = simpson(a, b, fa, fm, fb)
    return adapt(a, b, fa, fm, fb, whole, tol, 48)


def check_lambda_L_constraint(psi: OrliczFunction, lam: float, L: float, M: float):
    """Grid check of lam * t <= log Psi(t) - 4 log t + log M on [1, L]."""
    ts = _grid(1.0, max(L, 1.0 + 1e-12))
    ts = ts[ts <= L]
    ts = np.append(ts, L)
    viols = lam * ts - (psi.log_psi(ts) - 4.0 * np.log(ts) + log(M))
    i = int(np.argmax(viols))
    if viols[i] > 1e-9:
        raise ConstraintViolated(
            f"(lam, L, M) constraint fails by {viols[i]:.3e} at t = {ts[i]:.6g}",
            worst_t=float(ts[i]),
        )


def conc_psi_bound(psi: OrliczFunction, m: int, t: float, lam: float, L: float,
                   M: float, second_moment_const: float | None = None) -> float:
    """m / Psi(L) + exp(-lam t + lam^2 m (2 + M + C_Psi)) for admissible
    (lam, L, M); `second_moment_const` overrides 2 + M + C_Psi when a
    closed-form majorant of it is used."""
    if not (0.0 < lam <= 1.0 and L >= 1.0 and M >= 0.0):
        raise OrliczError("need lam in (0,1], L >= 1, M >= 0")
    check_lambda_L_constraint(psi, lam, L, M)
    if second_moment_const is None:
        second_moment_const = 2.0 + M + psi_tail_integral(psi)
    first = m * exp(-min(float(psi.log_psi(np.asarray(L))), 700.0))
    second = exp(min(-lam * t + lam**2 * m * second_moment_const, 700.0))
    return first + second


def conc_gamma_bound(sigma: float, m: int, t: float) -> float:
    """Stretched-exponential specialization (sigma < 1): the truncation
    bound with lam = min(t / 2Am, t^{sigma-1}/2), L = (2 lam)^{-1/(1-sigma)},
    M = (8^{2/sigma} Gamma(2/sigma))^4 and A = 2(M + 1) >= 2 + M + C_Psi."""
    if not 0.0 < sigma < 1.0:
        raise OrliczError("sigma must lie in (0, 1)")
    if t < 1.0:
        return 1.0
    M = (8.0 ** (2.0 / sigma) * gamma_fn(2.0 / sigma)) ** 4
    A = 2.0 * (M + 1.0)
    lam = min(t / (2.0 * A * m), 0.5 * t ** (sigma - 1.0))
    L = (2.0 * lam) ** (-1.0 / (1.0 - sigma))
    return min(conc_psi_bound(gamma_sigma(sigma), m, t, lam, L, M,
                              second_moment_const=A), 1.0)


def conc_lognormal_bound(sigma: float, m: int, t: float) -> float:
    """Log-normal-tail specialization (sigma >= 1, t >= 4 sigma) with
    lam = min(t / 2Am, 2 log^2(1 + sigma t)/(sigma^2 t)),
    L = log^2(1 + 1/(sigma lam)) / (32 sigma^2 lam), M = exp(32 sigma^2)
    and A = 2 exp(32 sigma^2) + 5 >= 2 + M + C_Psi."""
    if sigma < 1.0:
        raise OrliczError("sigma must be >= 1")
    if t < 4.0 * sigma:
        return 1.0
    M = exp(32.0 * sigma**2)
    A = 2.0 * M + 5.0
    lam = min(t / (2.0 * A * m), 2.0 / (sigma**2 * t) * log(1.0 + sigma * t) ** 2)
    L = log(1.0 + 1.0 / (sigma * lam)) ** 2 / (32.0 * sigma**2 * lam)
    L = max(L, 1.0)
    return min(conc_psi_bound(psi_sigma(sigma), m, t, lam, L, M,
                              second_moment_const=A), 1.0)


# ---------------------------------------------------------------------------
# empirical tails
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class TailSample:
    values: np.ndarray

    def __post_init__(self):
        v = np.sort(np.asarray(self.values, dtype=float).ravel())
        if v.size == 0:
            raise OrliczError("empty sample")
        if not np.isfinite(v).all():
            raise OrliczError("non-finite sample values")
        v.flags.writeable = False
        object.__setattr__(self, "values", v)

    @property
    def count(self):
        return self.values.size


def empirical_tail(sample: TailSample, t: float, z: float = 1.96):
    """(fraction of values > t, Wilson-interval half-width)."""
    n = sample.count
    k = int(n - np.searchsorted(sample.values, t, side="right"))
    phat = k / n
    denom = 1.0 + z**2 / n
    half = z / denom * sqrt(phat * (1.0 - phat) / n + z**2 / (4.0 * n**2))
    return phat, half
