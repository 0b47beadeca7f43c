"""Exact marginals of the Ginibre regime (beta = N^2).

Everything is built from the truncated exponential
``e_N(w) = sum_{l<N} w^l / l!``.  With ``beta = N^2`` the k-point marginal
density of the equilibrium is

    phi^{k,N}(z_1..z_k) = (N-k)!/N! * N^k / pi^k * det[K(z_i, z_j)],
    K(z, u) = exp(-N(|z|^2 + |u|^2)/2) e_N(N z conj(u)).

Products ``exp(-c) * e_N(.)`` overflow quickly if formed naively, so the
kernel is summed term by term in log space.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .cir import gammainc_lower
from .errors import ConditioningWarning, DomainError

__all__ = [
    "MarginalEvaluator",
    "RayleighQuotient",
    "trunc_exp",
    "trunc_exp_remainder",
    "kernel",
    "scaled_kernel",
    "marginal1_density",
    "marginal2_density",
    "marginal_k_density",
    "delta2",
    "trunc_exp_tail_bound",
    "marginal1_second_moment",
    "radial_cdf",
    "sample_marginal1",
    "poincare_rayleigh",
]

_lgamma = np.vectorize(math.lgamma, otypes=[float])


def _check_n(n: int, lowest: int = 1) -> int:
    if int(n) != n or n < lowest:
        raise DomainError(f"N must be an integer >= {lowest}, got {n!r}")
    return int(n)


def _complex(z) -> np.ndarray:
    """Accept complex numbers or (..., 2) real pairs."""
    z = np.asarray(z)
    if np.iscomplexobj(z):
        return z.astype(complex)
    if z.shape and z.shape[-1] == 2 and z.dtype.kind in "fi":
        return z[..., 0] + 1j * z[..., 1]
    return z.astype(complex)


def trunc_exp(n: int, w: complex) -> complex:
    """e_n(w) by the recurrence t_{l+1} = t_l w / (l+1); for moderate |w| only."""
    n = _check_n(n)
    term, total = 1.0 + 0j, 0j
    for l in range(n):
        total += term
        term *= w / (l + 1)
    return total


def trunc_exp_remainder(n: int, w: complex, rtol: float = 1e-17) -> complex:
    """exp(w) - e_n(w) summed directly from its tail, no cancellation."""
    n = _check_n(n)
    w = complex(w)
    if w == 0:
        return 0j
    r = abs(w)
    term = complex(np.exp(n * (math.log(r) + 1j * math.atan2(w.imag, w.real)) - math.lgamma(n + 1)))
    total = 0j
    l = n
    while True:
        total += term
        l += 1
        term *= w / l
        if l > r and abs(term) <= rtol * abs(total):
            return total


def _xlog(l: np.ndarray, v: np.ndarray) -> np.ndarray:
    # l * log(v) with 0 * log(0) = 0
    with np.errstate(divide="ignore", invalid="ignore"):
        out = l * np.log(v)
    return np.where(l == 0, 0.0, out)


def kernel(n: int, z1, z2) -> np.ndarray:
    """Complex scaled kernel K(z1, z2) = e^{-N(|z1|^2+|z2|^2)/2} e_N(N z1 conj(z2))."""
    n = _check_n(n)
    a, b = np.broadcast_arrays(_complex(z1), _complex(z2))
    w = n * a * np.conj(b)
    shift = n * (np.abs(a) ** 2 + np.abs(b) ** 2) / 2
    l = np.arange(n, dtype=float)
    logmag = _xlog(l, np.abs(w)[..., None]) - _lgamma(l + 1) - shift[..., None]
    top = logmag.max(axis=-1, keepdims=True)
    terms = np.exp(logmag - top + 1j * l * np.angle(w)[..., None])
    out = np.exp(top[..., 0]) * terms.sum(axis=-1)
    return out if out.ndim else complex(out)


def scaled_kernel(n: int, z1, z2):
    """|K(z1, z2)|; the pair-correlation term of phi^{2,N} is |K|^2 / pi^2."""
    n = _check_n(n, 2)
    out = np.abs(kernel(n, z1, z2))
    return out if np.ndim(out) else float(out)


def marginal1_density(n: int, z):
    """phi^{1,N}(z) = e^{-lam} sum_{l<N} lam^l / l! / pi with lam = N |z|^2."""
    n = _check_n(n)
    lam = n * np.abs(_complex(z)) ** 2
    l = np.arange(n, dtype=float)
    terms = np.exp(_xlog(l, lam[..., None]) - _lgamma(l + 1) - lam[..., None])
    terms = -np.sort(-terms, axis=-1)  # largest first
    out = terms.sum(axis=-1) / np.pi
    return out if out.ndim else float(out)


def marginal2_density(n: int, z1, z2):
    n = _check_n(n, 2)
    p1, p2 = marginal1_density(n, z1), marginal1_density(n, z2)
    k2 = np.abs(kernel(n, z1, z2)) ** 2
    out = n / (n - 1) * (p1 * p2 - k2 / np.pi**2)
    return out if np.ndim(out) else float(out)


def marginal_k_density(n: int, zs, report: bool = True) -> float:
    """k-point marginal density via the determinant of the kernel matrix.

    A value below -1e-12 is numerically impossible for a density; it triggers a
    :class:`ConditioningWarning` and is clamped to 0.
    """
    n = _check_n(n)
    z = _complex(zs).reshape(-1)
    k = z.size
    if not 1 <= k <= n:
        raise DomainError(f"need 1 <= k <= N, got k={k}, N={n}")
    mat = kernel(n, z[:, None], z[None, :])
    det = float(np.linalg.det(mat).real)
    val = math.exp(math.lgamma(n - k + 1) - math.lgamma(n + 1) + k * math.log(n)) * det / np.pi**k
    if val < -1e-12:
        if report:
            warnings.warn(f"phi^{{{k},{n}}} evaluated to {val:.3e}; clamped to 0", ConditioningWarning)
        val = 0.0
    return val


def delta2(n: int, z1, z2):
    """Chaoticity gap phi^{2,N}(z1, z2) - phi^{1,N}(z1) phi^{1,N}(z2)."""
    n = _check_n(n, 2)
    out = marginal2_density(n, z1, z2) - marginal1_density(n, z1) * marginal1_density(n, z2)
    return out if np.ndim(out) else float(out)


def trunc_exp_tail_bound(n: int, z):
    """r_N(z) bounding |e_N(Nz) - e^{Nz} 1{|z|<=1}|, evaluated in log space."""
    n = _check_n(n)
    r = np.abs(_complex(z))
    with np.errstate(divide="ignore"):
        factor = np.where(r <= 1, (n + 1) / (n * (1 - r) + 1), n / (n * (r - 1) + 1))
        logr = n - 0.5 * math.log(2 * math.pi * n) + n * np.log(r) + np.log(factor)
    out = np.exp(logr)
    return out if out.ndim else float(out)


def marginal1_second_moment(n: int) -> float:
    """E|Z|^2 under phi^{1,N}: (N+1)/(2N), which decreases to 1/2."""
    n = _check_n(n)
    return (n + 1) / (2 * n)


def radial_cdf(n: int, r):
    """P(|Z| <= r) under phi^{1,N}: average of Gamma(l+1, rate N) cdfs of |Z|^2."""
    n = _check_n(n)
    u = n * np.asarray(r, dtype=float) ** 2
    l = np.arange(1, n + 1, dtype=float)
    out = np.mean(gammainc_lower(l, u[..., None]), axis=-1)
    return out if out.ndim else float(out)


def sample_marginal1(n: int, rng: np.random.Generator, size: int | None = None) -> np.ndarray:
    """Exact draws from phi^{1,N} as points of shape ``(size, 2)`` (or ``(2,)``).

    ``|Z|^2`` is a uniform mixture over ``l < N`` of Gamma(l + 1, rate N)
    laws and the angle is uniform.
    """
    n = _check_n(n)
    m = 1 if size is None else int(size)
    l = rng.integers(0, n, size=m)
    u = rng.gamma(l + 1.0, 1.0 / n)
    ang = rng.uniform(0.0, 2 * np.pi, size=m)
    pts = np.sqrt(u)[:, None] * np.stack([np.cos(ang), np.sin(ang)], axis=-1)
    return pts[0] if size is None else pts


@dataclass
class RayleighQuotient:
    ratio: float
    se: float
    variance: float
    dirichlet: float

    def __float__(self) -> float:
        return self.ratio


def poincare_rayleigh(
    n: int,
    f: Callable[[np.ndarray], np.ndarray],
    grad_f: Callable[[np.ndarray], np.ndarray],
    n_samples: int,
    rng: np.random.Generator,
    fd_step: float = 1e-6,
    fd_tol: float = 1e-5,
) -> RayleighQuotient:
    """Monte-Carlo Var(f) / E|grad f|^2 under phi^{1,N}.

    ``f`` maps points ``(m, 2)`` to ``(m,)``; ``grad_f`` to ``(m, 2)``.  The
    gradient is spot-checked by central differences on 10 sample points.  The
    standard error is the delta-method error of the ratio.
    """
    if n_samples < 10_000:
        raise DomainError("n_samples must be >= 1e4")
    pts = sample_marginal1(n, rng, n_samples)
    fv = np.asarray(f(pts), dtype=float)
    g = np.asarray(grad_f(pts), dtype=float)
    for p in pts[:10]:
        e = np.eye(2) * fd_step
        fd = (np.asarray(f(p + e), dtype=float) - np.asarray(f(p - e), dtype=float)) / (2 * fd_step)
        gp = np.asarray(grad_f(p[None]), dtype=float)[0]
        if np.any(np.abs(fd - gp) > fd_tol * np.maximum(1.0, np.abs(gp))):
            raise DomainError(f"grad_f disagrees with finite differences at {p}: {gp} vs {fd}")
    g2 = np.sum(g * g, axis=-1)
    dirichlet = float(g2.mean())
    if dirichlet == 0.0:
        raise DomainError("f has zero gradient on the sample")
    dev = (fv - fv.mean()) ** 2
    var = float(dev.mean())
    ratio = var / dirichlet
    infl = (dev - var) / dirichlet - ratio * (g2 - dirichlet) / dirichlet
    return RayleighQuotient(ratio, float(infl.std(ddof=1) / math.sqrt(n_samples)), var, dirichlet)


@dataclass(frozen=True)
class MarginalEvaluator:
    """The marginal laws for a fixed N, bundled."""

    n: int

    def __post_init__(self):
        _check_n(self.n, 2)

    def phi1(self, z):
        return marginal1_density(self.n, z)

    def phi2(self, z1, z2):
        return marginal2_density(self.n, z1, z2)

    def phik(self, zs):
        return marginal_k_density(self.n, zs)

    def delta(self, z1, z2):
        return delta2(self.n, z1, z2)

    def tail_bound(self, z):
        return trunc_exp_tail_bound(self.n, z)
