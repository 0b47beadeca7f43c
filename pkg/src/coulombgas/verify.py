"""The verification suite: each acceptance criterion as a runnable check.

Every ``criterion_*`` function returns a :class:`Criterion` holding one
:class:`Check` per sub-condition, with the measured value and the tolerance
it was held to.  Seeds are derived per criterion from a single run seed.
"""

from __future__ import annotations

import math
import time
from dataclasses import asdict, dataclass, field

import numpy as np

from . import cir as cirmod
from . import ginibre as gin
from . import model as mdl
from .dynamics import HALVING_EXHAUSTED, SimConfig, eta_bound_check, simulate_ensemble
from .stats import (
    chi2_critical,
    chi_square_gof,
    ensemble_summary,
    ks_statistic,
    radial_histogram,
    w1_empirical,
)

__all__ = ["Check", "Criterion", "CRITERIA", "run_suite", "radial_edges"]

DEFAULT_SEED = 20240611
REGIMES = ("ginibre", "crossover")


@dataclass
class Check:
    name: str
    passed: bool
    value: float
    tolerance: float
    detail: str = ""

    def __post_init__(self):
        self.passed = bool(self.passed)
        self.value = float(self.value)
        self.tolerance = float(self.tolerance)


@dataclass
class Criterion:
    number: int
    title: str
    checks: list = field(default_factory=list)
    seconds: float = 0.0

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        worst = [c.name for c in self.checks if not c.passed]
        tail = f" (failed: {', '.join(worst)})" if worst else ""
        return f"[{status}] criterion {self.number}: {self.title}{tail} [{self.seconds:.1f}s]"

    def to_dict(self) -> dict:
        return {
            "number": self.number,
            "title": self.title,
            "passed": self.passed,
            "seconds": self.seconds,
            "checks": [asdict(c) for c in self.checks],
        }


def _rng(seed: int, number: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence((int(seed), number)))


# ---------------------------------------------------------------- criterion 1

def criterion_identities(seed: int = DEFAULT_SEED, n_configs: int = 1000) -> Criterion:
    """Closed-form identities against direct evaluation and finite differences."""
    crit = Criterion(1, "closed-form identity suite")
    rng = _rng(seed, 1)
    sizes = (2, 3, 8, 16)
    worst = dict(grad=0.0, additivity=0.0, eigen=0.0, fd_gen=0.0, fd_lap=0.0)
    for k in range(n_configs):
        n = sizes[k % len(sizes)]
        x = mdl.random_configuration(n, rng)
        p = mdl.ModelParams.regime(REGIMES[(k // len(sizes)) % 2], n)
        a, b = p.alpha, p.beta

        g = mdl.grad_h(x)
        direct = float(np.sum(g * g))
        closed = float(mdl.grad_norm_sq(x))
        worst["grad"] = max(worst["grad"], abs(closed - direct) / abs(direct))

        gv, gw, gh = mdl.generator_h_v(x, p), mdl.generator_h_w(x, p), mdl.generator_h(x, p)
        hv = mdl.energy_v(x)
        v2 = float(np.sum(mdl.interaction_field(x) ** 2))
        scale = 4 * a / b + 4 * a * (n - 1) / n**2 + 4 * a / n * hv + 4 * a / n**4 * v2
        worst["additivity"] = max(worst["additivity"], abs(gh - (gv + gw)) / scale)

        u = hv - n / b - (n - 1) / (2 * n)
        eig_scale = abs(gv) + 4 * a / n * (hv + n / b + (n - 1) / (2 * n))
        worst["eigen"] = max(worst["eigen"], abs(gv + 4 * a / n * u) / eig_scale)

        fd = mdl.apply_generator(mdl.energy_v, x, p, fd_step=1e-4)
        worst["fd_gen"] = max(worst["fd_gen"], abs(fd - gv))

        # the five-point Laplacian needs gaps well above the stencil width
        y = mdl.random_configuration(n, rng, min_sep=0.05)
        lap = mdl.fd_laplacian(mdl.energy, y, 5e-4, order=4)
        worst["fd_lap"] = max(worst["fd_lap"], abs(lap - 4.0))

    crit.checks = [
        Check("|grad_norm_sq - |grad_h|^2| rel", worst["grad"] <= 1e-10, worst["grad"], 1e-10),
        Check("generator_h additivity rel", worst["additivity"] <= 1e-10, worst["additivity"], 1e-10),
        Check("eigenvector identity rel", worst["eigen"] <= 1e-10, worst["eigen"], 1e-10),
        Check("apply_generator(H_V) vs L H_V", worst["fd_gen"] <= 1e-5, worst["fd_gen"], 1e-5,
              "fd_step 1e-4"),
        Check("FD Laplacian of H minus 4", worst["fd_lap"] <= 1e-4, worst["fd_lap"], 1e-4,
              "5-point stencil, step 5e-4, min gap >= 0.05"),
    ]
    return crit


# ---------------------------------------------------------------- criterion 2

def _collinear(n: int, rng: np.random.Generator) -> np.ndarray:
    t = np.cumsum(rng.uniform(0.5, 1.5, n))
    ang = rng.uniform(0, 2 * np.pi)
    return rng.normal(size=2) + t[:, None] * np.array([math.cos(ang), math.sin(ang)])


def lemma_exp_grid(n: int, n_radii: int = 81, n_angles: int = 16) -> list[complex]:
    radii = np.linspace(0.0, 2.0, n_radii)
    radii = radii[(radii <= 0.95) | (radii >= 1.05)]
    angles = 2 * np.pi * np.arange(n_angles) / n_angles
    return [complex(r * math.cos(t), r * math.sin(t)) for r in radii for t in angles]


def lemma_exp_gap(n: int, z: complex) -> float:
    """|e_N(Nz) - e^{Nz} 1{|z| <= 1}| computed without cancellation."""
    if abs(z) <= 1:
        return abs(gin.trunc_exp_remainder(n, n * z))
    return abs(gin.trunc_exp(n, n * z))


def criterion_inequalities(seed: int = DEFAULT_SEED, n_configs: int = 1000) -> Criterion:
    crit = Criterion(2, "inequality suite")
    rng = _rng(seed, 2)
    min_s, max_col = math.inf, 0.0
    min_energy_margin, min_grad_margin = math.inf, math.inf
    for k in range(n_configs):
        n = 2 + k % 15
        x = mdl.random_configuration(n, rng)
        min_s = min(min_s, float(mdl.interaction_sum(x)))
        min_energy_margin = min(min_energy_margin, float(mdl.energy(x) - mdl.energy_lower_bound(x)))
        min_grad_margin = min(min_grad_margin,
                              float(mdl.grad_norm_sq(x) - mdl.grad_coercivity_bound(x)))
    for n in range(2, 17):
        line = np.stack([np.arange(1, n + 1, dtype=float), np.zeros(n)], axis=-1)
        max_col = max(max_col, abs(float(mdl.interaction_sum(line))))
        for _ in range(10):
            max_col = max(max_col, abs(float(mdl.interaction_sum(_collinear(n, rng)))))

    worst_ratio, violations = 0.0, 0
    for n in (8, 32):
        for z in lemma_exp_grid(n):
            lhs, bound = lemma_exp_gap(n, z), gin.trunc_exp_tail_bound(n, z)
            if lhs > bound * (1 + 1e-12):
                violations += 1
            if bound > 0:
                worst_ratio = max(worst_ratio, lhs / bound)

    crit.checks = [
        Check("S_N >= -1e-12", min_s >= -1e-12, min_s, -1e-12),
        Check("|S_N| on collinear <= 1e-9", max_col <= 1e-9, max_col, 1e-9),
        Check("H - (|x|^2/2N + 1/16) >= 0", min_energy_margin >= 0, min_energy_margin, 0.0),
        Check("|grad H|^2 - coercivity bound >= -1e-10", min_grad_margin >= -1e-10,
              min_grad_margin, -1e-10),
        Check("tail bound r_N violations", violations == 0, float(violations), 0.0,
              f"max lhs/r_N = {worst_ratio:.3g}"),
    ]
    return crit


# ---------------------------------------------------------- criteria 3 and 9

def second_moment_ensemble(seed: int = DEFAULT_SEED, n_paths: int = 2000):
    p = mdl.ModelParams.ginibre(16)
    sim = SimConfig(dt=1e-3, t_end=1.0, record_every=250, seed=_seed(seed, 3))
    return p, simulate_ensemble(mdl.ring_configuration(16), sim, p, n_paths)


def _seed(seed: int, number: int) -> int:
    return int(np.random.SeedSequence((int(seed), number)).generate_state(1, np.uint64)[0])


def criterion_second_moment(records, params: mdl.ModelParams) -> Criterion:
    crit = Criterion(3, "second-moment mean evolution")
    s = ensemble_summary(records, "h_v")
    h0 = float(s.mean[0])
    for t in (0.25, 0.5, 1.0):
        i = int(np.argmin(np.abs(s.times - t)))
        expect = float(cirmod.mean_h_v(t, h0, params))
        z = abs(s.mean[i] - expect) / s.se[i]
        crit.checks.append(Check(f"|mean H_V - formula| / SE at t={t}", z <= 4.0, float(z), 4.0,
                                 f"mean {s.mean[i]:.6f} vs {expect:.6f}"))
    return crit


def criterion_eta(records, params: mdl.ModelParams) -> Criterion:
    crit = Criterion(9, "H_W energy-evolution bound")
    rep = eta_bound_check(records, params)
    excess = max(float(e - b - 3 * s) for t, e, s, b in
                 zip(rep.times, rep.eta_hat, rep.se, rep.bound) if t > 0)
    crit.checks.append(Check("max(eta_hat - bound - 3 SE)", rep.passed, excess, 0.0,
                             f"{len(rep.violations)} violating times"))
    return crit


# ---------------------------------------------------------------- criterion 4

def stationary_ensemble(seed: int = DEFAULT_SEED, n_paths: int = 2000):
    p = mdl.ModelParams.ginibre(8)
    sim = SimConfig(dt=1e-3, t_end=6.0, record_every=1000, seed=_seed(seed, 4))
    return p, simulate_ensemble(mdl.ring_configuration(8), sim, p, n_paths)


def criterion_stationary(records, params: mdl.ModelParams, seed: int = DEFAULT_SEED) -> Criterion:
    crit = Criterion(4, "stationary Gamma law of H_V")
    law = cirmod.gamma_law(params)
    hv = np.array([r.h_v[-1] for r in records])
    ks = ks_statistic(hv, lambda v: cirmod.gamma_cdf(law, v))
    crit.checks.append(Check("KS(H_V(X_6), gamma_N)", ks <= 0.05, ks, 0.05))
    c = cirmod.cir_from_model(params)
    t = float(records[0].times[-1])
    exact = cirmod.sample_cir_exact(records[0].h_v[0], t, c, _rng(seed, 40), size=len(records))
    w1 = w1_empirical(hv, exact)
    crit.checks.append(Check("W1(particles, exact CIR)", w1 <= 0.01 * c.theta, w1, 0.01 * c.theta))
    return crit


# ---------------------------------------------------------------- criterion 5

def criterion_contraction(seed: int = DEFAULT_SEED) -> Criterion:
    crit = Criterion(5, "CIR synchronous-coupling contraction")
    c = cirmod.cir_from_model(mdl.ModelParams(4, 4.0, 4.0))
    rep = cirmod.coupled_contraction_test(2.0, 0.5, 1.0, c, 5000, _rng(seed, 5), dt=1e-4)
    crit.checks.append(Check("mean |R^x_1 - R^y_1|", rep.passed, rep.mean_gap, rep.threshold,
                             f"bound {rep.bound:.5f}, SE {rep.se:.2e}, allowance {rep.allowance:.1e}"))
    return crit


# ---------------------------------------------------------------- criterion 6

def radial_edges(n: int, n_bins: int = 50) -> np.ndarray:
    """Bin edges in |z| with equal probability under phi^{1,N}; last edge is inf."""
    target = np.arange(1, n_bins) / n_bins
    lo, hi = np.zeros(n_bins - 1), np.full(n_bins - 1, 4.0)
    while np.any(hi - lo > 1e-12):
        mid = 0.5 * (lo + hi)
        below = gin.radial_cdf(n, mid) < target
        lo, hi = np.where(below, mid, lo), np.where(below, hi, mid)
    return np.concatenate([[0.0], 0.5 * (lo + hi), [np.inf]])


def _radial_chi2(points, n: int, n_bins: int = 50):
    edges = radial_edges(n, n_bins)
    hist = radial_histogram(points, edges)
    probs = np.diff(np.append(gin.radial_cdf(n, edges[:-1]), 1.0))
    return chi_square_gof(hist, probs), chi2_critical(n_bins - 1, 0.01)


def criterion_marginals(end_states, seed: int = DEFAULT_SEED) -> Criterion:
    crit = Criterion(6, "Ginibre one-point marginal agreement")
    n, m = 64, 100_000
    rng = _rng(seed, 6)
    pts = gin.sample_marginal1(n, rng, m)
    r2 = np.sum(pts**2, axis=-1)
    se = r2.std(ddof=1) / math.sqrt(m)
    z = abs(r2.mean() - gin.marginal1_second_moment(n)) / se
    crit.checks.append(Check("sampler E|Z|^2 vs 65/128, in SE", z <= 3.0, float(z), 3.0))
    stat, crit_val = _radial_chi2(pts, n)
    crit.checks.append(Check("sampler radial chi-square (50 bins)", stat <= crit_val, stat, crit_val))
    if end_states is not None:
        pooled = np.concatenate([np.asarray(s) for s in end_states])
        n_eq = np.asarray(end_states[0]).shape[0]
        stat, crit_val = _radial_chi2(pooled, n_eq)
        crit.checks.append(Check(f"simulated equilibrium radial chi-square (N={n_eq})",
                                 stat <= crit_val, stat, crit_val))
    return crit


# ---------------------------------------------------------------- criterion 7

def chaoticity_grid(step: float = 0.05, radius: float = 0.7) -> np.ndarray:
    g = np.arange(-radius, radius + step / 2, step)
    z = (g[:, None] + 1j * g[None, :]).ravel()
    return z[np.abs(z) <= radius + 1e-12]


def sup_abs_delta(n: int, z: np.ndarray, min_sep: float = 0.2) -> float:
    best = 0.0
    for a in z:
        b = z[np.abs(z - a) >= min_sep - 1e-12]
        best = max(best, float(np.max(np.abs(gin.delta2(n, a, b)))))
    return best


def criterion_chaoticity() -> Criterion:
    crit = Criterion(7, "chaoticity decay of Delta_N")
    z = chaoticity_grid()
    sups = {}
    for n in (16, 32, 64):
        sups[n] = sup_abs_delta(n, z)
        tol = 2.0 / ((n - 1) * math.pi**2)
        crit.checks.append(Check(f"sup|Delta_{n}| <= 2/((N-1) pi^2)", sups[n] <= tol, sups[n], tol))
    dec = sups[16] > sups[32] > sups[64]
    crit.checks.append(Check("sup|Delta_N| strictly decreasing", dec, sups[64] - sups[32], 0.0,
                             ", ".join(f"N={k}: {v:.4g}" for k, v in sups.items())))
    return crit


# ---------------------------------------------------------------- criterion 8

def criterion_non_explosion(seed: int = DEFAULT_SEED, n_paths: int = 200) -> Criterion:
    crit = Criterion(8, "non-explosion at desk scale")
    for regime in ("ginibre", "crossover"):
        p = mdl.ModelParams.regime(regime, 8)
        sim = SimConfig(dt=1e-3, t_end=5.0, record_every=10, seed=_seed(seed, 8))
        recs = simulate_ensemble(mdl.ring_configuration(8), sim, p, n_paths)
        exhausted = sum(r.count(HALVING_EXHAUSTED) for r in recs)
        floor_hits = sum(r.count("gap-floor") for r in recs)
        gap = min(float(r.min_gap.min()) for r in recs)
        crit.checks.append(Check(f"{regime}: halving-exhausted events", exhausted == 0,
                                 float(exhausted), 0.0, f"{floor_hits} refined steps"))
        crit.checks.append(Check(f"{regime}: min recorded gap > 0", gap > 0, gap, 0.0))
    return crit


# --------------------------------------------------------------- criterion 10

def exact_rayleigh(n: int, name: str) -> float:
    """Closed-form Var(f) / E|grad f|^2 under phi^{1,N} for the two test functions."""
    if name == "Re z":
        return (n + 1) / (4 * n)
    return (n + 5) / (24 * n)


def criterion_poincare(seed: int = DEFAULT_SEED, n_samples: int = 100_000) -> Criterion:
    crit = Criterion(10, "Poincare-ratio boundedness")
    rng = _rng(seed, 10)
    tests = {
        "Re z": (lambda p: p[..., 0], lambda p: np.stack([np.ones(len(p)), np.zeros(len(p))], -1)),
        "|z|^2": (lambda p: np.sum(p * p, axis=-1), lambda p: 2 * p),
    }
    for name, (f, g) in tests.items():
        ratios = {}
        for n in (4, 16, 64):
            rq = gin.poincare_rayleigh(n, f, g, n_samples, rng)
            ratios[n] = rq.ratio
            if name == "Re z":
                expect = (n + 1) / (4 * n)
                zs = abs(rq.ratio - expect) / rq.se
                crit.checks.append(Check(f"Re z ratio vs (N+1)/(4N) at N={n}, in SE", zs <= 3.0,
                                         float(zs), 3.0))
        spread = max(ratios.values()) / min(ratios.values())
        exact = {k: exact_rayleigh(k, name) for k in ratios}
        crit.checks.append(Check(
            f"{name}: max/min ratio over N", spread <= 2.0, spread, 2.0,
            ", ".join(f"N={k}: {v:.4g} (exact {exact[k]:.4g})" for k, v in ratios.items())
            + f"; exact spread {max(exact.values()) / min(exact.values()):.4g}"))
    return crit


# -------------------------------------------------------------------- driver

CRITERIA = {
    1: "closed-form identity suite",
    2: "inequality suite",
    3: "second-moment mean evolution",
    4: "stationary Gamma law of H_V",
    5: "CIR synchronous-coupling contraction",
    6: "Ginibre one-point marginal agreement",
    7: "chaoticity decay of Delta_N",
    8: "non-explosion at desk scale",
    9: "H_W energy-evolution bound",
    10: "Poincare-ratio boundedness",
}


def _timed(fn, *args, **kwargs) -> Criterion:
    t0 = time.perf_counter()
    c = fn(*args, **kwargs)
    c.seconds = time.perf_counter() - t0
    return c


def run_suite(seed: int = DEFAULT_SEED, quick: bool = False, log=None) -> list[Criterion]:
    """Run every criterion (or only the closed-form ones when ``quick``)."""
    out = []

    def emit(c):
        out.append(c)
        if log:
            log(c.line())

    emit(_timed(criterion_identities, seed))
    if quick:
        return out
    emit(_timed(criterion_inequalities, seed))
    t0 = time.perf_counter()
    p16, recs16 = second_moment_ensemble(seed)
    sim_time = time.perf_counter() - t0
    c3, c9 = criterion_second_moment(recs16, p16), criterion_eta(recs16, p16)
    c3.seconds = c9.seconds = sim_time
    del recs16
    t0 = time.perf_counter()
    p8, recs8 = stationary_ensemble(seed)
    c4 = criterion_stationary(recs8, p8, seed)
    c4.seconds = time.perf_counter() - t0
    emit(c3)
    emit(c4)
    emit(_timed(criterion_contraction, seed))
    emit(_timed(criterion_marginals, [r.final_state for r in recs8], seed))
    del recs8
    emit(_timed(criterion_chaoticity))
    emit(_timed(criterion_non_explosion, seed))
    emit(c9)
    emit(_timed(criterion_poincare, seed))
    return out
