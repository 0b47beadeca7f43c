"""The second-moment process and its Gamma equilibrium.

The empirical second moment ``H_V(X_t)`` of the particle system is a
Cox-Ingersoll-Ross diffusion

    dR = kappa (theta - R) dt + sigma sqrt(R) db,
    kappa = 4 alpha / N,  theta = N / beta + (N - 1) / (2N),
    sigma = sqrt(8 alpha / (N beta)),

whose invariant law is Gamma with shape ``N + (N - 1) beta / (2N)`` and
*rate* ``beta`` (density proportional to ``r^(shape-1) exp(-beta r)``).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DomainError
from .model import ModelParams

__all__ = [
    "CirParams",
    "GammaLaw",
    "ContractionReport",
    "gammainc_lower",
    "gammainc_upper",
    "cir_from_model",
    "gamma_law",
    "mean_h_v",
    "cir_mean",
    "cir_variance",
    "w1_contraction_bound",
    "step_cir_em",
    "cir_em_paths",
    "sample_cir_exact",
    "gamma_pdf",
    "gamma_cdf",
    "gamma_quantile",
    "coupled_contraction_test",
]

_lgamma = np.vectorize(math.lgamma, otypes=[float])
_TINY = 1e-300


def _series_p(a, x, rtol, max_iter):
    ap = a.copy()
    term = 1.0 / a
    total = term.copy()
    for _ in range(max_iter):
        ap += 1.0
        term *= x / ap
        total += term
        if np.all(np.abs(term) <= np.abs(total) * rtol):
            break
    else:
        raise ArithmeticError("incomplete gamma series did not converge")
    return total * np.exp(-x + a * np.log(x) - _lgamma(a))


def _cf_q(a, x, rtol, max_iter):
    # modified Lentz evaluation of the continued fraction for Q(a, x)
    b = x + 1.0 - a
    c = np.full_like(x, 1.0 / _TINY)
    d = 1.0 / b
    h = d.copy()
    for i in range(1, max_iter + 1):
        an = -i * (i - a)
        b = b + 2.0
        d = an * d + b
        d = np.where(np.abs(d) < _TINY, _TINY, d)
        c = b + an / c
        c = np.where(np.abs(c) < _TINY, _TINY, c)
        d = 1.0 / d
        delta = d * c
        h = h * delta
        if np.all(np.abs(delta - 1.0) <= rtol):
            break
    else:
        raise ArithmeticError("incomplete gamma continued fraction did not converge")
    return np.exp(-x + a * np.log(x) - _lgamma(a)) * h


def _incomplete(a, x, rtol, max_iter):
    a, x = np.broadcast_arrays(np.asarray(a, dtype=float), np.asarray(x, dtype=float))
    if np.any(a <= 0):
        raise DomainError("incomplete gamma needs a > 0")
    if np.any(x < 0):
        raise DomainError("incomplete gamma needs x >= 0")
    p = np.zeros(a.shape)
    q = np.ones(a.shape)
    inf = np.isinf(x)
    p[inf], q[inf] = 1.0, 0.0
    ser = (x > 0) & (x < a + 1.0)
    cf = (x >= a + 1.0) & ~inf
    if ser.any():
        p[ser] = _series_p(a[ser], x[ser], rtol, max_iter)
        q[ser] = 1.0 - p[ser]
    if cf.any():
        q[cf] = _cf_q(a[cf], x[cf], rtol, max_iter)
        p[cf] = 1.0 - q[cf]
    return p, q


def gammainc_lower(a, x, rtol: float = 1e-12, max_iter: int = 100_000):
    """Regularized lower incomplete gamma P(a, x).

    Series for ``x < a + 1``, continued fraction otherwise.
    """
    p, _ = _incomplete(a, x, rtol, max_iter)
    return p if p.ndim else float(p)


def gammainc_upper(a, x, rtol: float = 1e-12, max_iter: int = 100_000):
    """Regularized upper incomplete gamma Q(a, x) = 1 - P(a, x)."""
    _, q = _incomplete(a, x, rtol, max_iter)
    return q if q.ndim else float(q)


@dataclass(frozen=True)
class GammaLaw:
    """Gamma distribution with density ``rate^shape r^(shape-1) e^(-rate r) / Gamma(shape)``."""

    shape: float
    rate: float

    def __post_init__(self):
        if not (self.shape > 0 and self.rate > 0):
            raise DomainError("GammaLaw needs shape > 0 and rate > 0")

    @property
    def mean(self) -> float:
        return self.shape / self.rate

    @property
    def variance(self) -> float:
        return self.shape / self.rate**2


@dataclass(frozen=True)
class CirParams:
    kappa: float
    theta: float
    sigma: float

    def __post_init__(self):
        if not (self.kappa > 0 and self.theta > 0 and self.sigma > 0):
            raise DomainError("CirParams needs kappa, theta, sigma > 0")

    @property
    def feller(self) -> bool:
        """2 kappa theta >= sigma^2: the process started positive never hits 0."""
        return 2 * self.kappa * self.theta >= self.sigma**2

    def stationary(self) -> GammaLaw:
        return GammaLaw(2 * self.kappa * self.theta / self.sigma**2, 2 * self.kappa / self.sigma**2)


def cir_from_model(params: ModelParams) -> CirParams:
    n, a, b = params.n, params.alpha, params.beta
    return CirParams(4 * a / n, n / b + (n - 1) / (2 * n), math.sqrt(8 * a / (n * b)))


def gamma_law(params: ModelParams) -> GammaLaw:
    """Equilibrium law of H_V: shape N + (N-1) beta/(2N), rate beta."""
    n, b = params.n, params.beta
    return GammaLaw(n + (n - 1) * b / (2 * n), b)


def mean_h_v(t, h_v0: float, params: ModelParams):
    """E[H_V(X_t) | H_V(X_0) = h_v0]."""
    n = params.n
    e = np.exp(-4.0 * params.alpha * np.asarray(t, dtype=float) / n)
    return h_v0 * e + (0.5 + n / params.beta - 1.0 / (2 * n)) * (1.0 - e)


def cir_mean(r0, t, cir: CirParams):
    e = np.exp(-cir.kappa * np.asarray(t, dtype=float))
    return r0 * e + cir.theta * (1.0 - e)


def cir_variance(r0, t, cir: CirParams):
    k, th, s2 = cir.kappa, cir.theta, cir.sigma**2
    e = np.exp(-k * np.asarray(t, dtype=float))
    return r0 * s2 / k * (e - e * e) + th * s2 / (2 * k) * (1.0 - e) ** 2


def w1_contraction_bound(t, w1_0: float, params: ModelParams):
    """exp(-4 alpha t / N) * W1(initial law, Gamma)."""
    return np.exp(-4.0 * params.alpha * np.asarray(t, dtype=float) / params.n) * w1_0


def step_cir_em(r, dt: float, cir: CirParams, gaussian):
    """Full-truncation Euler step, clamped at zero."""
    rp = np.maximum(r, 0.0)
    out = r + cir.kappa * (cir.theta - rp) * dt + cir.sigma * np.sqrt(rp * dt) * gaussian
    return np.maximum(out, 0.0)


def cir_em_paths(r0, cir: CirParams, dt: float, n_steps: int, n_paths: int,
                 rng: np.random.Generator, record_every: int = 1):
    """Independent Euler paths from ``r0``; returns ``(times, values)`` with
    ``values`` of shape ``(n_paths, n_records)``."""
    r = np.full(n_paths, float(r0))
    times, rows = [0.0], [r.copy()]
    for k in range(n_steps):
        r = step_cir_em(r, dt, cir, rng.standard_normal(n_paths))
        if (k + 1) % record_every == 0 or k + 1 == n_steps:
            times.append((k + 1) * dt)
            rows.append(r.copy())
    return np.array(times), np.stack(rows, axis=1)


def sample_cir_exact(r0, t: float, cir: CirParams, rng: np.random.Generator, size=None):
    """Exact draw of R_t given R_0 = r0 (scaled noncentral chi-square).

    With ``c = sigma^2 (1 - e^{-kappa t}) / (4 kappa)`` the variable ``R_t / c``
    is noncentral chi-square with ``4 kappa theta / sigma^2`` degrees of
    freedom and noncentrality ``r0 e^{-kappa t} / c``, drawn here as a
    Poisson mixture of Gamma variables.
    """
    if not t > 0:
        raise DomainError("t must be > 0")
    e = math.exp(-cir.kappa * t)
    c = cir.sigma**2 * (1.0 - e) / (4.0 * cir.kappa)
    nu = 4.0 * cir.kappa * cir.theta / cir.sigma**2
    lam = np.asarray(r0, dtype=float) * e / c
    if size is None:
        size = lam.shape
    k = rng.poisson(np.broadcast_to(lam / 2.0, size))
    out = c * rng.gamma(nu / 2.0 + k, 2.0)
    return float(out) if np.ndim(out) == 0 else out


def _check_r(r):
    r = np.asarray(r, dtype=float)
    if np.any(r < 0):
        raise DomainError("Gamma law is supported on r >= 0")
    return r


def gamma_pdf(law: GammaLaw, r):
    r = _check_r(r)
    a, b = law.shape, law.rate
    with np.errstate(divide="ignore", invalid="ignore"):
        power = np.where(r == 0, 0.0, (a - 1) * np.log(r)) if a == 1.0 else (a - 1) * np.log(r)
        logp = a * math.log(b) - math.lgamma(a) + power - b * r
    out = np.exp(logp)
    if a == 1.0:
        out = np.where(r == 0, b, out)
    return out if out.ndim else float(out)


def gamma_cdf(law: GammaLaw, r):
    r = _check_r(r)
    return gammainc_lower(law.shape, law.rate * r)


def gamma_quantile(law: GammaLaw, p, tol: float = 1e-10):
    """Inverse of :func:`gamma_cdf` by bisection, to relative tolerance ``tol``."""
    p = np.asarray(p, dtype=float)
    if np.any((p < 0) | (p >= 1)):
        raise DomainError("quantile level must lie in [0, 1)")
    lo = np.zeros(p.shape)
    hi = np.full(p.shape, max(1.0, 2 * law.mean))
    while True:
        short = gamma_cdf(law, hi) < p
        if not np.any(short):
            break
        hi = np.where(short, 2 * hi, hi)
    live = p > 0
    while np.any(live & (hi - lo > tol * hi)):
        mid = 0.5 * (lo + hi)
        below = gamma_cdf(law, mid) < p
        lo = np.where(below, mid, lo)
        hi = np.where(below, hi, mid)
    q = np.where(live, 0.5 * (lo + hi), 0.0)
    return q if q.ndim else float(q)


@dataclass
class ContractionReport:
    mean_gap: float
    se: float
    bound: float
    allowance: float
    n_pairs: int

    @property
    def threshold(self) -> float:
        return self.bound + 3 * self.se + self.allowance

    @property
    def passed(self) -> bool:
        return self.mean_gap <= self.threshold


def coupled_contraction_test(x: float, y: float, t: float, cir: CirParams, n_pairs: int,
                             rng: np.random.Generator, dt: float = 1e-4) -> ContractionReport:
    """Run ``n_pairs`` synchronously coupled Euler pairs from (x, y) to time t.

    The check is ``mean|R^x_t - R^y_t| <= e^{-kappa t}|x - y| + 3 SE + 5 dt kappa |x - y|``.
    """
    if x < 0 or y < 0:
        raise DomainError("starting points must be >= 0")
    if n_pairs < 100:
        raise DomainError("n_pairs must be >= 100")
    rx = np.full(n_pairs, float(x))
    ry = np.full(n_pairs, float(y))
    for _ in range(int(round(t / dt))):
        g = rng.standard_normal(n_pairs)
        rx = step_cir_em(rx, dt, cir, g)
        ry = step_cir_em(ry, dt, cir, g)
    gap = np.abs(rx - ry)
    se = float(gap.std(ddof=1) / math.sqrt(n_pairs))
    return ContractionReport(
        mean_gap=float(gap.mean()),
        se=se,
        bound=math.exp(-cir.kappa * t) * abs(x - y),
        allowance=5 * dt * cir.kappa * abs(x - y),
        n_pairs=n_pairs,
    )
