"""Euler-Maruyama integration of the Coulomb-gas Langevin dynamics.

    dX^i = sqrt(2 alpha/beta) dB^i - 2 (alpha/N) X^i dt
           - 2 (alpha/N^2) sum_{j != i} (X^j - X^i) / |X^i - X^j|^2 dt

The adaptive driver accepts a proposed step only when the new minimal gap
exceeds the collision floor ``sqrt(h * 2 alpha / beta)`` (the size of one
Brownian increment at step ``h``).  Rejected steps are split in two halves
with fresh Gaussian increments, recursively, up to ``max_halvings`` levels;
past that depth the step is taken with the drift mollified inside the floor
radius.  Both events are logged in the path record.

Random numbers: path ``p`` of a run with seed ``s`` owns two Philox
(counter-based) streams keyed by ``SeedSequence((s, p, 0))`` for base steps
and ``SeedSequence((s, p, 1))`` for refinement sub-steps.  Base increments
are drawn in fixed blocks of ``NOISE_BLOCK`` steps.  All arithmetic is
elementwise across paths, so a path's record is bit-identical whether it
runs alone, in a batch, or on a worker thread.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .errors import DomainError, SimulationBlowup
from .model import ModelParams, _pairs, _points, _sum_j, energy_v, energy_w, min_gap

__all__ = [
    "SimConfig",
    "PathRecord",
    "EtaReport",
    "path_streams",
    "collision_floor",
    "drift",
    "drift_regularized",
    "step_em",
    "simulate",
    "simulate_ensemble",
    "eta_bound",
    "eta_bound_check",
]

NOISE_BLOCK = 64
GAP_FLOOR, RADIUS_CAP, HALVING_EXHAUSTED = "gap-floor", "radius-cap", "halving-exhausted"


@dataclass(frozen=True)
class SimConfig:
    dt: float = 1e-3
    t_end: float = 1.0
    record_every: int = 1
    epsilon: float = 0.0  # > 0: always use the mollified drift with this radius
    max_halvings: int = 12
    guard_radius: float = 1e3
    seed: int = 0

    def __post_init__(self):
        if not self.dt > 0:
            raise DomainError(f"dt must be > 0, got {self.dt}")
        if not self.t_end >= 0:
            raise DomainError(f"t_end must be >= 0, got {self.t_end}")
        if self.record_every < 1:
            raise DomainError("record_every must be >= 1")
        if self.epsilon < 0:
            raise DomainError("epsilon must be >= 0")
        if self.max_halvings < 0:
            raise DomainError("max_halvings must be >= 0")
        if not self.guard_radius > 0:
            raise DomainError("guard_radius must be > 0")
        if not 0 <= self.seed < 2**64:
            raise DomainError("seed must fit in 64 unsigned bits")

    @property
    def n_steps(self) -> int:
        """Number of base steps; ``t_end`` is rounded to a multiple of ``dt``."""
        return int(round(self.t_end / self.dt))


@dataclass
class PathRecord:
    times: np.ndarray
    h_v: np.ndarray
    h_w: np.ndarray
    min_gap: np.ndarray
    guard_events: list = field(default_factory=list)
    final_state: np.ndarray | None = None

    def count(self, kind: str) -> int:
        return sum(1 for _, k in self.guard_events if k == kind)


def path_streams(seed: int, path: int) -> tuple[np.random.Generator, np.random.Generator]:
    """(base, refinement) generators for path ``path`` of a run seeded ``seed``."""
    gens = []
    for stream in (0, 1):
        key = np.random.SeedSequence((int(seed), int(path), stream)).generate_state(2, np.uint64)
        gens.append(np.random.Generator(np.random.Philox(key=key)))
    return gens[0], gens[1]


def collision_floor(h: float, params: ModelParams) -> float:
    return math.sqrt(h * 2.0 * params.alpha / params.beta)


def drift(cfg, params: ModelParams) -> np.ndarray:
    """Drift of the SDE written term by term (confinement plus pair repulsion)."""
    x = _points(cfg, params.n)
    n, a = params.n, params.alpha
    d, r2, _ = _pairs(x)
    # (x_j - x_i) / |x_i - x_j|^2 summed over j != i
    toward = _sum_j(-d / r2[..., None])
    return -2.0 * a / n * x - 2.0 * a / n**2 * toward


def _drift_v(x: np.ndarray, v: np.ndarray, params: ModelParams) -> np.ndarray:
    n, a = params.n, params.alpha
    return -(2.0 * a / n) * x + (2.0 * a / (n * n)) * v


def drift_regularized(cfg, params: ModelParams, epsilon: float) -> np.ndarray:
    """Drift with the pair force 2/r replaced by 2r/epsilon^2 inside r < epsilon.

    Equal to :func:`drift` wherever every gap is at least ``epsilon``;
    coincident points exert no force on each other.
    """
    if epsilon < 0:
        raise DomainError("epsilon must be >= 0")
    x = _points(cfg, params.n)
    _, _, q = _pairs(x, epsilon)
    return _drift_v(x, _sum_j(q), params)


def step_em(cfg, dt: float, params: ModelParams, noise) -> np.ndarray:
    """One Euler-Maruyama step; ``noise`` is already scaled by sqrt(dt).

    Raises :class:`CollisionError` if the proposed state leaves D.
    """
    x = _points(cfg, params.n)
    _, _, q = _pairs(x)
    y = x + math.sqrt(2.0 * params.alpha / params.beta) * np.asarray(noise) + dt * _drift_v(x, _sum_j(q), params)
    if not np.all(np.isfinite(y)):
        raise SimulationBlowup("Euler-Maruyama step produced non-finite coordinates")
    _pairs(y)
    return y


def _geometry(x: np.ndarray, eps: float):
    """(v, min gap) without raising on coincidence.

    ``v[..., i] = sum_j (x_i - x_j) / max(|x_i - x_j|^2, eps^2)``, summed over
    ``j`` in index order; components are kept in separate contiguous arrays.
    """
    px, py = x[..., 0], x[..., 1]
    dx = px[..., :, None] - px[..., None, :]
    dy = py[..., :, None] - py[..., None, :]
    r2 = dx * dx + dy * dy
    n = x.shape[-2]
    idx = np.arange(n)
    r2[..., idx, idx] = np.inf
    gap = np.sqrt(r2.min(axis=(-2, -1)))
    with np.errstate(divide="ignore", invalid="ignore"):
        inv = 1.0 / np.maximum(r2, eps * eps)
    qx, qy = dx * inv, dy * inv
    v = np.empty(x.shape)
    vx, vy = qx[..., :, 0].copy(), qy[..., :, 0].copy()
    for j in range(1, n):
        vx += qx[..., :, j]
        vy += qy[..., :, j]
    v[..., 0], v[..., 1] = vx, vy
    return v, gap


class _Batch:
    """State of a group of paths advanced in lockstep."""

    def __init__(self, initial, sim: SimConfig, params: ModelParams, paths):
        self.sim, self.params = sim, params
        self.paths = list(paths)
        m = len(self.paths)
        self.x = np.repeat(np.asarray(initial, dtype=float)[None], m, axis=0)
        self.streams = [path_streams(sim.seed, p) for p in self.paths]
        self.events = [[] for _ in range(m)]
        self.outside = np.zeros(m, dtype=bool)
        self.scale = math.sqrt(2.0 * params.alpha / params.beta)
        self.v, _ = _geometry(self.x, sim.epsilon)

    def _blowup(self, p: int, t: float):
        raise SimulationBlowup(
            f"non-finite state on path {self.paths[p]} at t={t:.6g} "
            f"(dt={self.sim.dt}, params={self.params})"
        )

    def _advance(self, p: int, x: np.ndarray, h: float, depth: int, t: float, propose: bool = True):
        """Advance one path by time ``h`` from ``x`` (shape (1, N, 2)).

        ``depth`` counts the halvings that produced ``h``; with ``propose``
        false the step is split (or mollified) without a first attempt.
        """
        retry = self.streams[p][1]
        params, sim = self.params, self.sim
        if propose:
            v, _ = _geometry(x, sim.epsilon)
            y = x + self.scale * math.sqrt(h) * retry.standard_normal(x.shape) + h * _drift_v(x, v, params)
            if not np.all(np.isfinite(y)):
                self._blowup(p, t)
            if _geometry(y, 0.0)[1][0] > collision_floor(h, params):
                return y
        if depth < sim.max_halvings:
            y = self._advance(p, x, h / 2, depth + 1, t)
            return self._advance(p, y, h / 2, depth + 1, t + h / 2)
        self.events[p].append((t, HALVING_EXHAUSTED))
        ve, _ = _geometry(x, max(sim.epsilon, collision_floor(h, params)))
        drift_h = h * _drift_v(x, ve, params)
        while True:
            y = x + self.scale * math.sqrt(h) * retry.standard_normal(x.shape) + drift_h
            if not np.all(np.isfinite(y)):
                self._blowup(p, t)
            if _geometry(y, 0.0)[1][0] > 0.0:
                return y

    def step(self, xi: np.ndarray, t: float):
        sim, params = self.sim, self.params
        dt = sim.dt
        y = self.x + (self.scale * math.sqrt(dt)) * xi + dt * _drift_v(self.x, self.v, params)
        bad = ~np.all(np.isfinite(y), axis=(-2, -1))
        if bad.any():
            self._blowup(int(np.flatnonzero(bad)[0]), t)
        v, gap = _geometry(y, sim.epsilon)
        for p in np.flatnonzero(~(gap > collision_floor(dt, params))):
            self.events[p].append((t, GAP_FLOOR))
            y[p] = self._advance(p, self.x[p : p + 1], dt, 0, t, propose=False)[0]
            v[p] = _geometry(y[p : p + 1], sim.epsilon)[0][0]
        self.x, self.v = y, v
        r = np.sqrt((y * y).sum(axis=-1)).max(axis=-1)
        out = r >= sim.guard_radius
        for p in np.flatnonzero(out & ~self.outside):
            self.events[p].append((t + dt, RADIUS_CAP))
        self.outside = out

    def observe(self):
        return energy_v(self.x), energy_w(self.x), np.atleast_1d(min_gap(self.x))


def _run_batch(initial, sim: SimConfig, params: ModelParams, paths) -> list[PathRecord]:
    b = _Batch(initial, sim, params, paths)
    n_steps, dt = sim.n_steps, sim.dt
    times, obs = [0.0], [b.observe()]
    block = None
    for k in range(n_steps):
        j = k % NOISE_BLOCK
        if j == 0:
            shape = (NOISE_BLOCK,) + b.x.shape[1:]
            block = np.stack([s[0].standard_normal(shape) for s in b.streams])
        b.step(block[:, j], k * dt)
        if (k + 1) % sim.record_every == 0 or k + 1 == n_steps:
            times.append((k + 1) * dt)
            obs.append(b.observe())
    t = np.array(times)
    hv, hw, gap = (np.stack([o[i] for o in obs], axis=1) for i in range(3))
    return [
        PathRecord(t.copy(), hv[p], hw[p], gap[p], b.events[p], b.x[p].copy())
        for p in range(len(b.paths))
    ]


def _check_initial(initial, params: ModelParams) -> np.ndarray:
    x = _points(initial, params.n)
    if x.ndim != 2:
        raise DomainError("initial state must be a single (N, 2) configuration")
    _pairs(x)
    return x


def simulate(initial, sim: SimConfig, params: ModelParams, path: int = 0) -> PathRecord:
    """Integrate one path (stream index ``path``) from ``initial`` to ``sim.t_end``."""
    x = _check_initial(initial, params)
    return _run_batch(x, sim, params, [path])[0]


def _worker_count(workers: int | None) -> int:
    cap = os.environ.get("COULOMBGAS_THREADS")
    n = workers if workers is not None else (os.cpu_count() or 1)
    if cap:
        n = min(n, max(1, int(cap)))
    return max(1, n)


def simulate_ensemble(
    initial,
    sim: SimConfig,
    params: ModelParams,
    n_paths: int,
    workers: int | None = None,
    batch_size: int = 1024,
) -> list[PathRecord]:
    """Run paths ``0 .. n_paths-1``; the output does not depend on ``workers``
    or ``batch_size``."""
    if n_paths < 1:
        raise DomainError("n_paths must be >= 1")
    x = _check_initial(initial, params)
    ids = list(range(n_paths))
    n_workers = _worker_count(workers)
    size = max(1, min(batch_size, math.ceil(n_paths / n_workers)))
    chunks = [ids[i : i + size] for i in range(0, n_paths, size)]
    if n_workers == 1 or len(chunks) == 1:
        parts = [_run_batch(x, sim, params, c) for c in chunks]
    else:
        with ThreadPoolExecutor(max_workers=n_workers) as pool:
            parts = list(pool.map(lambda c: _run_batch(x, sim, params, c), chunks))
    return [r for part in parts for r in part]


@dataclass
class EtaReport:
    times: np.ndarray
    eta_hat: np.ndarray
    se: np.ndarray
    bound: np.ndarray
    eta0: float
    violations: list

    @property
    def passed(self) -> bool:
        return not self.violations


def eta_bound(t, eta0: float, params: ModelParams):
    """Upper bound on (2N/(N-1)) E[H_W(X_t)] from the energy evolution inequality."""
    n = params.n
    e = np.exp(-4.0 * params.alpha * np.asarray(t, dtype=float) / n)
    return -np.log(np.exp(-eta0) * e + (2.0 / n) * (1.0 - e))


def eta_bound_check(records: list[PathRecord], params: ModelParams, n_se: float = 3.0) -> EtaReport:
    """Compare the ensemble estimate of eta(t) against :func:`eta_bound`."""
    if not records:
        raise DomainError("empty ensemble")
    n = params.n
    if n < 2:
        raise DomainError("eta needs N >= 2")
    hw = np.stack([r.h_w for r in records])
    times = records[0].times
    c = 2.0 * n / (n - 1)
    eta0 = c * float(hw[0, 0])
    if not np.all(hw[:, 0] == hw[0, 0]):
        raise DomainError("ensemble paths do not share an initial state")
    m = hw.shape[0]
    eta_hat = c * hw.mean(axis=0)
    se = c * hw.std(axis=0, ddof=1) / math.sqrt(m) if m > 1 else np.zeros_like(eta_hat)
    # the shared initial state is deterministic: no averaging roundoff at t = 0
    start = times == 0
    eta_hat[start], se[start] = eta0, 0.0
    bound = eta_bound(times, eta0, params)
    violations = [
        (float(t), float(e), float(b))
        for t, e, s, b in zip(times, eta_hat, se, bound)
        if t > 0 and e > b + n_se * s
    ]
    return EtaReport(times, eta_hat, se, bound, eta0, violations)
