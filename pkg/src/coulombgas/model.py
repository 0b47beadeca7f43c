"""Configuration space, energy, gradient and generator of the planar Coulomb gas.

A configuration of ``N`` particles is stored as a float array of shape
``(N, 2)``; most functions also accept a batch of shape ``(..., N, 2)`` and
return one value per configuration.  Energies are

    H_V(x) = (1/N) sum_i |x_i|^2
    H_W(x) = (1/(2 N^2)) sum_{i != j} log(1 / |x_i - x_j|^2)

and ``L f = (alpha/beta) Laplacian f - alpha grad H . grad f`` is the
generator of the Langevin dynamics.  All pair sums run over ordered pairs in
row-major order (``i`` outer, ``j`` inner) so results do not depend on how a
batch is laid out.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import CollisionError, DomainError

__all__ = [
    "ModelParams",
    "as_configuration",
    "random_configuration",
    "ring_configuration",
    "min_gap",
    "interaction_field",
    "energy_v",
    "energy_w",
    "energy",
    "energy_lower_bound",
    "grad_h",
    "grad_norm_sq",
    "interaction_sum",
    "grad_coercivity_bound",
    "hessian_w",
    "generator_h_v",
    "generator_h_w",
    "generator_h",
    "fd_gradient",
    "fd_laplacian",
    "apply_generator",
]


@dataclass(frozen=True)
class ModelParams:
    """Particle count ``n``, speed ``alpha`` and inverse temperature ``beta``."""

    n: int
    alpha: float
    beta: float

    def __post_init__(self):
        if int(self.n) != self.n or self.n < 1:
            raise DomainError(f"n must be a positive integer, got {self.n!r}")
        for name in ("alpha", "beta"):
            v = getattr(self, name)
            if not (np.isfinite(v) and v > 0):
                raise DomainError(f"{name} must be finite and > 0, got {v!r}")
        object.__setattr__(self, "n", int(self.n))
        object.__setattr__(self, "alpha", float(self.alpha))
        object.__setattr__(self, "beta", float(self.beta))

    @classmethod
    def ginibre(cls, n: int) -> "ModelParams":
        """beta = n^2, alpha = n: equilibrium is the complex Ginibre ensemble."""
        return cls(n, float(n), float(n) ** 2)

    @classmethod
    def crossover(cls, n: int) -> "ModelParams":
        """beta = n, alpha = n."""
        return cls(n, float(n), float(n))

    @classmethod
    def regime(cls, name: str, n: int) -> "ModelParams":
        try:
            return {"ginibre": cls.ginibre, "crossover": cls.crossover}[name](n)
        except KeyError:
            raise DomainError(f"unknown regime {name!r}") from None


def _points(cfg, n: int | None = None) -> np.ndarray:
    x = np.asarray(cfg, dtype=float)
    if x.ndim < 2 or x.shape[-1] != 2:
        raise DomainError(f"expected shape (..., N, 2), got {x.shape}")
    if n is not None and x.shape[-2] != n:
        raise DomainError(f"configuration has {x.shape[-2]} points, params say {n}")
    if not np.all(np.isfinite(x)):
        raise DomainError("configuration has non-finite coordinates")
    return x


def _pairs(x: np.ndarray, eps: float = 0.0):
    """Differences ``x_i - x_j``, squared distances and the pair field.

    Returns ``(d, r2, q)`` with ``q[..., i, j] = d / max(r2, eps^2)``.  The
    diagonal of ``r2`` is ``inf`` so the diagonal of ``q`` is zero.
    """
    d = x[..., :, None, :] - x[..., None, :, :]
    r2 = d[..., 0] * d[..., 0] + d[..., 1] * d[..., 1]
    n = x.shape[-2]
    idx = np.arange(n)
    r2[..., idx, idx] = np.inf
    if eps > 0:
        q = d * (1.0 / np.maximum(r2, eps * eps))[..., None]
    else:
        hit = r2 == 0.0
        if hit.any():
            pos = np.argwhere(hit)[0]
            raise CollisionError(pos[-2], pos[-1])
        q = d * (1.0 / r2)[..., None]
    return d, r2, q


def _sum_j(a: np.ndarray) -> np.ndarray:
    # sum over the inner pair index (axis -2 of a (..., N, N, k) array)
    return _sum_i(np.moveaxis(a, -2, -1))


def _sum_i(a: np.ndarray) -> np.ndarray:
    # reduce a contiguous last axis: each row gets the same arithmetic whatever
    # the batch shape, so batched and single evaluations agree bit for bit
    return np.add.reduce(np.ascontiguousarray(a), axis=-1)


def _sq_norm(x: np.ndarray) -> np.ndarray:
    """sum_i |x_i|^2 for each configuration."""
    return _sum_i(x[..., 0] * x[..., 0] + x[..., 1] * x[..., 1])


def as_configuration(points) -> np.ndarray:
    """Validate ``points`` as an element of D and return a read-only copy."""
    x = np.array(_points(points), dtype=float)
    if x.ndim != 2:
        raise DomainError(f"expected a single (N, 2) configuration, got {x.shape}")
    _pairs(x)
    x.setflags(write=False)
    return x


def random_configuration(n: int, rng: np.random.Generator, min_sep: float = 1e-6) -> np.ndarray:
    """I.i.d. standard normal points, redrawn until every gap is >= ``min_sep``."""
    while True:
        x = rng.standard_normal((n, 2))
        if n < 2 or min_gap(x) >= min_sep:
            return x


def ring_configuration(n: int, radius: float = 1.0) -> np.ndarray:
    """``n`` points evenly spaced on a circle; H_V equals ``radius**2``."""
    a = 2 * np.pi * np.arange(n) / n
    return radius * np.stack([np.cos(a), np.sin(a)], axis=-1)


def min_gap(cfg) -> np.ndarray | float:
    """Smallest pairwise distance (``inf`` for a single particle)."""
    x = _points(cfg)
    d = x[..., :, None, :] - x[..., None, :, :]
    r2 = d[..., 0] * d[..., 0] + d[..., 1] * d[..., 1]
    idx = np.arange(x.shape[-2])
    r2[..., idx, idx] = np.inf
    out = np.sqrt(r2.min(axis=(-2, -1)))
    return float(out) if out.ndim == 0 else out


def interaction_field(cfg) -> np.ndarray:
    """v_i = sum_{j != i} (x_i - x_j) / |x_i - x_j|^2, shape like ``cfg``."""
    x = _points(cfg)
    return _sum_j(_pairs(x)[2])


def energy_v(cfg):
    x = _points(cfg)
    return _sq_norm(x) / x.shape[-2]


def energy_w(cfg):
    x = _points(cfg)
    n = x.shape[-2]
    _, r2, _ = _pairs(x)
    idx = np.arange(n)
    r2[..., idx, idx] = 1.0
    lg = -np.log(r2)
    return _sum_i(_sum_j(lg[..., None])[..., 0]) / (2.0 * n * n)


def energy(cfg):
    """H = H_V + H_W."""
    return energy_v(cfg) + energy_w(cfg)


def energy_lower_bound(cfg):
    """Coercivity floor |x|^2/(2N) + 1/16 (valid for N >= 2)."""
    x = _points(cfg)
    return _sq_norm(x) / (2.0 * x.shape[-2]) + 1.0 / 16.0


def grad_h(cfg, params: ModelParams | None = None) -> np.ndarray:
    """Gradient of H, one planar vector per particle."""
    x = _points(cfg, params.n if params else None)
    n = x.shape[-2]
    v = _sum_j(_pairs(x)[2])
    return (2.0 / n) * x - (2.0 / (n * n)) * v


def grad_norm_sq(cfg):
    """|grad H|^2 from the symmetrized closed form."""
    x = _points(cfg)
    n = x.shape[-2]
    v = _sum_j(_pairs(x)[2])
    return (
        4.0 / n**2 * _sq_norm(x)
        + 4.0 / n**4 * _sq_norm(v)
        - 4.0 * (n - 1) / n**2
    )


def _at_least_two(x: np.ndarray, what: str) -> None:
    if x.shape[-2] < 2:
        raise DomainError(f"{what} needs N >= 2")


def _inv_r2_sum(r2: np.ndarray) -> np.ndarray:
    return _sum_i(_sum_j((1.0 / r2)[..., None])[..., 0])


def interaction_sum(cfg):
    """S_N = sum_i |v_i|^2 - sum_{i != j} 1/|x_i - x_j|^2, nonnegative."""
    x = _points(cfg)
    _at_least_two(x, "interaction_sum")
    _, r2, q = _pairs(x)
    return _sq_norm(_sum_j(q)) - _inv_r2_sum(r2)


def grad_coercivity_bound(cfg):
    """Lower bound on |grad H|^2 obtained by dropping S_N."""
    x = _points(cfg)
    _at_least_two(x, "grad_coercivity_bound")
    n = x.shape[-2]
    _, r2, _ = _pairs(x)
    return (
        4.0 / n**2 * _sq_norm(x)
        + 4.0 / n**4 * _inv_r2_sum(r2)
        - 4.0 * (n - 1) / n**2
    )


def hessian_w(z) -> np.ndarray:
    """Hessian of W(z) = -log|z|^2 at a nonzero planar point."""
    a, b = (float(c) for c in np.asarray(z, dtype=float).reshape(2))
    s = a * a + b * b
    if s == 0.0:
        raise DomainError("Hessian of W is undefined at z = 0")
    return 2.0 * np.array([[a * a - b * b, 2 * a * b], [2 * a * b, b * b - a * a]]) / (s * s)


def generator_h_v(cfg, params: ModelParams):
    """L H_V = 4 alpha/beta + 2 alpha (N-1)/N^2 - (4 alpha/N) H_V."""
    x = _points(cfg, params.n)
    _pairs(x)  # domain check only
    n, a = params.n, params.alpha
    return 4 * a / params.beta + 2 * a * (n - 1) / n**2 - 4 * a / n * energy_v(x)


def generator_h_w(cfg, params: ModelParams):
    """L H_W = 2 alpha (N-1)/N^2 - (4 alpha/N^4) sum_i |v_i|^2."""
    x = _points(cfg, params.n)
    _at_least_two(x, "generator_h_w")
    n, a = params.n, params.alpha
    v = _sum_j(_pairs(x)[2])
    return 2 * a * (n - 1) / n**2 - 4 * a / n**4 * _sq_norm(v)


def generator_h(cfg, params: ModelParams):
    x = _points(cfg, params.n)
    n, a = params.n, params.alpha
    v = _sum_j(_pairs(x)[2])
    return 4 * a / params.beta + 4 * a * (
        (n - 1) / n**2 - energy_v(x) / n - _sq_norm(v / n) / n**2
    )


def _stencil(x: np.ndarray, i: int, c: int, step: float) -> np.ndarray:
    y = x.copy()
    y[i, c] += step
    # only particle i moved, so only its gaps need checking
    d = y - y[i]
    d[i] = 1.0
    if np.any((d[:, 0] == 0.0) & (d[:, 1] == 0.0)):
        raise DomainError(f"finite-difference stencil leaves D at particle {i}")
    return y


def _central(f, x: np.ndarray, h: float):
    # f at x +- h e_{ic}, shape (N, 2, 2)
    out = np.empty(x.shape + (2,))
    for i in range(x.shape[0]):
        for c in range(2):
            out[i, c, 0] = f(_stencil(x, i, c, h))
            out[i, c, 1] = f(_stencil(x, i, c, -h))
    return out


def fd_gradient(f: Callable[[np.ndarray], float], cfg, fd_step: float) -> np.ndarray:
    """Central-difference gradient of a scalar field on D."""
    x = np.array(_points(cfg), dtype=float)
    fv = _central(f, x, fd_step)
    return (fv[..., 0] - fv[..., 1]) / (2 * fd_step)


def fd_laplacian(f: Callable[[np.ndarray], float], cfg, fd_step: float, order: int = 2) -> float:
    """Finite-difference Laplacian in R^{2N} with a 3-point (order 2) or
    5-point (order 4) stencil per coordinate."""
    if order not in (2, 4):
        raise DomainError(f"unsupported stencil order {order}")
    x = np.array(_points(cfg), dtype=float)
    h = fd_step
    f0 = f(x)
    near = _central(f, x, h)
    if order == 2:
        return float(np.sum(near[..., 0] - 2 * f0 + near[..., 1]) / (h * h))
    far = _central(f, x, 2 * h)
    per = -far[..., 0] + 16 * near[..., 0] - 30 * f0 + 16 * near[..., 1] - far[..., 1]
    return float(np.sum(per) / (12 * h * h))


def apply_generator(
    f: Callable[[np.ndarray], float], cfg, params: ModelParams, fd_step: float = 1e-4
) -> float:
    """Numerical L f: second-order differences of ``f``, exact drift."""
    x = np.array(_points(cfg, params.n), dtype=float)
    h = fd_step
    near = _central(f, x, h)
    lap = float(np.sum(near[..., 0] - 2 * f(x) + near[..., 1]) / (h * h))
    grad = (near[..., 0] - near[..., 1]) / (2 * h)
    return params.alpha / params.beta * lap - params.alpha * float(np.sum(grad_h(x) * grad))
