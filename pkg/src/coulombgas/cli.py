"""Command-line driver: ``coulombgas {simulate,cir,marginals,verify}``.

Parameters resolve as command-line flag, then ``--config`` file key, then
built-in default.  A config file holds ``key = value`` lines (``#`` starts a
comment); the ``manifest.json`` written by an earlier run is also accepted and
replays that run.  Exit codes: 0 pass, 1 check failure, 2 usage error,
3 numerical blow-up.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import os
import sys
from dataclasses import asdict, dataclass, field
from datetime import datetime, timezone

import numpy as np

from . import __version__
from . import cir as cirmod
from . import ginibre as gin
from . import model as mdl
from . import verify as ver
from .dynamics import GAP_FLOOR, HALVING_EXHAUSTED, RADIUS_CAP, SimConfig, simulate_ensemble
from .errors import DomainError, SimulationBlowup
from .stats import ensemble_summary, ks_statistic, w1_empirical, w1_vs_gamma

EXIT_OK, EXIT_FAIL, EXIT_USAGE, EXIT_BLOWUP = 0, 1, 2, 3

PATH_COLUMNS = ("t", "h_v", "h_w", "min_gap")
CIR_COLUMNS = ("t", "em_mean", "em_se", "exact_mean", "formula_mean", "mean_z",
               "w1_em_gamma", "w1_exact_gamma", "w1_bound", "w1_em_exact")
GRID_COLUMNS = ("x", "y", "phi1", "phi2_ref", "delta_ref", "r_n")

DEFAULTS = {
    "simulate": dict(n=8, alpha=None, beta=None, regime="ginibre", dt=1e-3, t_end=1.0,
                     paths=100, seed=0, epsilon=0.0, record_every=1, init=None,
                     out="runs/simulate", format="csv"),
    "cir": dict(n=8, alpha=None, beta=None, regime="ginibre", dt=1e-3, t_end=6.0,
                paths=2000, seed=0, record_every=500, r0=1.0, out="runs/cir", format="csv"),
    "marginals": dict(n_list="8,16,32,64", grid=40, extent=1.5, out="runs/marginals",
                      format="csv"),
    "verify": dict(seed=ver.DEFAULT_SEED, quick=False, out=None),
}

# key -> parser for config-file values
_TYPES = dict(n=int, alpha=float, beta=float, regime=str, dt=float, t_end=float, paths=int,
              seed=int, epsilon=float, record_every=int, init=str, out=str, format=str,
              r0=float, n_list=str, grid=int, extent=float,
              quick=lambda s: s.strip().lower() in ("1", "true", "yes", "on"))


class UsageError(Exception):
    pass


@dataclass
class RunManifest:
    subcommand: str
    parameters: dict
    seed: int | None
    version: str
    started: str
    finished: str = ""
    outputs: list = field(default_factory=list)


def _now() -> str:
    return datetime.now(timezone.utc).isoformat()


def _fmt(v) -> str:
    # shortest round-trip decimal
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


# ------------------------------------------------------------------- parsing

def read_config(path: str) -> dict:
    """Parse a ``key = value`` file, or the parameters of a ``manifest.json``."""
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as e:
        raise UsageError(f"cannot read config {path}: {e}") from None
    if path.endswith(".json"):
        try:
            params = json.loads(text)["parameters"]
        except (ValueError, KeyError):
            raise UsageError(f"{path} is not a run manifest") from None
        return {k: v for k, v in params.items() if k in _TYPES}
    out = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError(f"{path}:{lineno}: expected 'key = value'")
        key, value = (s.strip() for s in line.split("=", 1))
        key = key.replace("-", "_")
        if key not in _TYPES:
            raise UsageError(f"{path}:{lineno}: unknown key {key!r}")
        try:
            out[key] = _TYPES[key](value)
        except ValueError:
            raise UsageError(f"{path}:{lineno}: bad value for {key}: {value!r}") from None
    return out


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="coulombgas", description="Coulomb-gas dynamics experiments.")
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def model_flags(s):
        s.add_argument("--n", type=int)
        s.add_argument("--alpha", type=float)
        s.add_argument("--beta", type=float)
        s.add_argument("--regime", choices=("ginibre", "crossover"))

    def common(s, fmt=True):
        s.add_argument("--config", help="key = value file or a previous manifest.json")
        s.add_argument("--out")
        if fmt:
            s.add_argument("--format", choices=("csv", "json"))

    s = sub.add_parser("simulate", help="integrate the particle system")
    model_flags(s)
    s.add_argument("--dt", type=float)
    s.add_argument("--t-end", type=float)
    s.add_argument("--paths", type=int)
    s.add_argument("--seed", type=int)
    s.add_argument("--epsilon", type=float)
    s.add_argument("--record-every", type=int)
    s.add_argument("--init", help="CSV of initial points with header x,y")
    common(s)

    s = sub.add_parser("cir", help="second-moment process against its exact laws")
    model_flags(s)
    s.add_argument("--dt", type=float)
    s.add_argument("--t-end", type=float)
    s.add_argument("--paths", type=int)
    s.add_argument("--seed", type=int)
    s.add_argument("--record-every", type=int)
    s.add_argument("--r0", type=float, help="initial value of H_V")
    common(s)

    s = sub.add_parser("marginals", help="Ginibre-regime marginal grids and reports")
    s.add_argument("--n-list")
    s.add_argument("--grid", type=int, help="grid intervals per axis")
    s.add_argument("--extent", type=float, help="grid covers [-extent, extent]^2")
    common(s)

    s = sub.add_parser("verify", help="run the acceptance suite")
    s.add_argument("--seed", type=int)
    s.add_argument("--quick", action="store_true", default=None,
                   help="closed-form identity checks only")
    common(s, fmt=False)
    return p


def resolve(args: argparse.Namespace) -> dict:
    """Merge defaults, config file and flags (flags win)."""
    params = dict(DEFAULTS[args.command])
    if getattr(args, "config", None):
        cfg = read_config(args.config)
        params.update({k: v for k, v in cfg.items() if k in params})
    for k in params:
        v = getattr(args, k, None)
        if v is not None:
            params[k] = v
    return params


def _model(params: dict) -> mdl.ModelParams:
    n = params["n"]
    base = mdl.ModelParams.regime(params["regime"], n)
    alpha = base.alpha if params["alpha"] is None else params["alpha"]
    beta = base.beta if params["beta"] is None else params["beta"]
    return mdl.ModelParams(n, alpha, beta)


# ------------------------------------------------------------------ writers

def write_csv(path: str, columns, rows) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for row in rows:
            w.writerow([_fmt(v) for v in row])


def write_json(path: str, obj) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(obj, fh, indent=2, default=_json_default)
        fh.write("\n")


def _json_default(o):
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, (np.floating, np.integer, np.bool_)):
        return o.item()
    raise TypeError(f"cannot serialize {type(o).__name__}")


def _table(path_base: str, fmt: str, columns, rows, outputs: list) -> None:
    if fmt == "csv":
        write_csv(path_base + ".csv", columns, rows)
        outputs.append(path_base + ".csv")
    else:
        write_json(path_base + ".json", [dict(zip(columns, r)) for r in rows])
        outputs.append(path_base + ".json")


def read_points(path: str) -> np.ndarray:
    try:
        with open(path, encoding="utf-8") as fh:
            rows = list(csv.DictReader(fh))
        return np.array([[float(r["x"]), float(r["y"])] for r in rows])
    except (OSError, KeyError, ValueError) as e:
        raise UsageError(f"cannot read initial configuration {path}: {e}") from None


# ---------------------------------------------------------------- commands

def cmd_simulate(params: dict, manifest: RunManifest) -> int:
    p = _model(params)
    sim = SimConfig(dt=params["dt"], t_end=params["t_end"], record_every=params["record_every"],
                    epsilon=params["epsilon"], seed=params["seed"])
    if params["paths"] < 1:
        raise UsageError("--paths must be >= 1")
    if params["init"]:
        x0 = read_points(params["init"])
    else:
        x0 = mdl.random_configuration(p.n, np.random.default_rng(params["seed"]))
    records = simulate_ensemble(x0, sim, p, params["paths"])
    out, outputs = params["out"], manifest.outputs
    write_csv(os.path.join(out, "initial.csv"), ("x", "y"), x0)
    outputs.append(os.path.join(out, "initial.csv"))
    for k, r in enumerate(records):
        rows = zip(r.times, r.h_v, r.h_w, r.min_gap)
        _table(os.path.join(out, f"path_{k:05d}"), params["format"], PATH_COLUMNS, rows, outputs)
    summary = {"times": records[0].times}
    for name in ("h_v", "h_w", "min_gap"):
        s = ensemble_summary(records, name)
        summary[name] = {"mean": s.mean, "se": s.se}
    summary["min_gap"]["min"] = np.min([r.min_gap for r in records], axis=0)
    summary["guard_events"] = {kind: sum(r.count(kind) for r in records)
                               for kind in (GAP_FLOOR, RADIUS_CAP, HALVING_EXHAUSTED)}
    summary["params"] = asdict(p)
    write_json(os.path.join(out, "summary.json"), summary)
    outputs.append(os.path.join(out, "summary.json"))
    return EXIT_OK


def _w1_point_to_gamma(r0: float, law: cirmod.GammaLaw) -> float:
    # E|G - r0| = E G - r0 + 2 E(r0 - G)_+
    a, b = law.shape, law.rate
    below = r0 * cirmod.gammainc_lower(a, b * r0) - a / b * cirmod.gammainc_lower(a + 1, b * r0)
    return law.mean - r0 + 2 * below


def cmd_cir(params: dict, manifest: RunManifest) -> int:
    p = _model(params)
    c = cirmod.cir_from_model(p)
    law = cirmod.gamma_law(p)
    m, r0 = params["paths"], params["r0"]
    if m < 2:
        raise UsageError("--paths must be >= 2")
    if r0 < 0:
        raise UsageError("--r0 must be >= 0")
    sim = SimConfig(dt=params["dt"], t_end=params["t_end"], record_every=params["record_every"])
    ss = np.random.SeedSequence(params["seed"])
    rng_em, rng_exact = (np.random.default_rng(s) for s in ss.spawn(2))
    times, em = cirmod.cir_em_paths(r0, c, sim.dt, sim.n_steps, m, rng_em, sim.record_every)
    w1_0 = _w1_point_to_gamma(r0, law)
    tol = 0.01 * c.theta
    rows, flags = [], {"mean_within_4se": True, "w1_decay": True}
    exact = None
    # the EM/exact consistency check runs at t = 1 (or the last time if earlier)
    t_pair = times[np.argmin(np.abs(times - 1.0))] if times[-1] > 0 else None
    for k, t in enumerate(times):
        col = em[:, k]
        exact = np.full(m, r0) if t == 0 else cirmod.sample_cir_exact(r0, t, c, rng_exact, size=m)
        se = col.std(ddof=1) / math.sqrt(m)
        formula = float(cirmod.cir_mean(r0, t, c))
        z = 0.0 if se == 0 else abs(col.mean() - formula) / se
        bound = float(cirmod.w1_contraction_bound(t, w1_0, p))
        w1_em = w1_vs_gamma(col, law)
        w1_pair = w1_empirical(col, exact)
        flags["mean_within_4se"] &= bool(z <= 4.0 or (se == 0 and col.mean() == formula))
        flags["w1_decay"] &= bool(w1_em <= bound + tol)
        if t == t_pair:
            flags["em_vs_exact"] = bool(w1_pair <= tol)
        rows.append((t, col.mean(), se, exact.mean(), formula, z, w1_em,
                     w1_vs_gamma(exact, law), bound, w1_pair))
    ks_em = ks_statistic(em[:, -1], lambda v: cirmod.gamma_cdf(law, v))
    ks_exact = ks_statistic(exact, lambda v: cirmod.gamma_cdf(law, v))
    relaxed = c.kappa * times[-1] >= 5.0
    if relaxed:
        # KS against the stationary law only once the run has relaxed
        flags["ks_em"], flags["ks_exact"] = bool(ks_em <= 0.05), bool(ks_exact <= 0.05)
    out = params["out"]
    _table(os.path.join(out, "comparison"), params["format"], CIR_COLUMNS, rows, manifest.outputs)
    summary = {"cir": asdict(c), "stationary": asdict(law), "feller": c.feller,
               "ks_em_final": ks_em, "ks_exact_final": ks_exact, "ks_tolerance": 0.05, "relaxed": bool(relaxed),
               "em_vs_exact_time": t_pair,
               "w1_tolerance": tol, "w1_initial_to_gamma": w1_0,
               "flags": flags, "all_pass": all(flags.values())}
    write_json(os.path.join(out, "summary.json"), summary)
    manifest.outputs.append(os.path.join(out, "summary.json"))
    return EXIT_OK if summary["all_pass"] else EXIT_FAIL


def _n_list(text: str) -> list[int]:
    try:
        ns = [int(s) for s in str(text).split(",") if s.strip()]
    except ValueError:
        raise UsageError(f"--n-list must be comma-separated integers, got {text!r}") from None
    if not ns or min(ns) < 2:
        raise UsageError("--n-list needs integers >= 2")
    return ns


def cmd_marginals(params: dict, manifest: RunManifest) -> int:
    ns = _n_list(params["n_list"])
    if params["grid"] < 1 or not params["extent"] > 0:
        raise UsageError("--grid must be >= 1 and --extent > 0")
    axis = np.linspace(-params["extent"], params["extent"], params["grid"] + 1)
    xs, ys = np.meshgrid(axis, axis, indexing="ij")
    z = (xs + 1j * ys).ravel()
    out = params["out"]
    report = {"reference_point": [0.0, 0.0], "per_n": {}}
    compact = ver.chaoticity_grid()
    sups = []
    for n in ns:
        phi1 = gin.marginal1_density(n, z)
        phi2 = gin.marginal2_density(n, 0j, z)
        delta = gin.delta2(n, 0j, z)
        rn = gin.trunc_exp_tail_bound(n, z)
        rows = zip(z.real, z.imag, phi1, phi2, delta, rn)
        _table(os.path.join(out, f"grid_n{n}"), params["format"], GRID_COLUMNS, rows,
               manifest.outputs)
        sup = ver.sup_abs_delta(n, compact)
        sups.append(sup)
        lemma = [(zz, ver.lemma_exp_gap(n, zz), gin.trunc_exp_tail_bound(n, zz))
                 for zz in ver.lemma_exp_grid(n)]
        report["per_n"][str(n)] = {
            "sup_abs_delta": sup,
            "delta_reference_bound": 2.0 / ((n - 1) * math.pi**2),
            "lemma_exp_points": len(lemma),
            "lemma_exp_violations": sum(1 for _, a, b in lemma if a > b * (1 + 1e-12)),
            "lemma_exp_max_ratio": max(a / b for _, a, b in lemma if b > 0),
        }
    report["sup_delta_grid"] = "|z| <= 0.7 step 0.05, pairs at distance >= 0.2"
    report["sup_delta_decreasing"] = all(a > b for a, b in zip(sups, sups[1:]))
    write_json(os.path.join(out, "report.json"), report)
    manifest.outputs.append(os.path.join(out, "report.json"))
    return EXIT_OK


def cmd_verify(params: dict, manifest: RunManifest) -> int:
    results = ver.run_suite(seed=params["seed"], quick=params["quick"],
                            log=lambda s: print(s, flush=True))
    if params["out"]:
        path = os.path.join(params["out"], "report.json")
        write_json(path, {"passed": all(c.passed for c in results),
                          "criteria": [c.to_dict() for c in results]})
        manifest.outputs.append(path)
    failed = [f"criterion {c.number}: {k.name}" for c in results for k in c.checks if not k.passed]
    for f in failed:
        print(f"FAILED {f}", file=sys.stderr)
    return EXIT_FAIL if failed else EXIT_OK


COMMANDS = {"simulate": cmd_simulate, "cir": cmd_cir, "marginals": cmd_marginals,
            "verify": cmd_verify}


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        params = resolve(args)
        for key in ("dt", "t_end", "paths", "record_every", "format"):
            if key in params and params[key] is None:
                raise UsageError(f"missing {key}")
    except UsageError as e:
        print(f"usage error: {e}", file=sys.stderr)
        return EXIT_USAGE
    manifest = RunManifest(args.command, params, params.get("seed"), __version__, _now())
    out = params.get("out")
    try:
        if out:
            os.makedirs(out, exist_ok=True)
        code = COMMANDS[args.command](params, manifest)
    except UsageError as e:
        print(f"usage error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except SimulationBlowup as e:
        print(f"numerical blow-up: {e}", file=sys.stderr)
        return EXIT_BLOWUP
    except DomainError as e:
        print(f"usage error: {e}", file=sys.stderr)
        return EXIT_USAGE
    manifest.finished = _now()
    if out:
        manifest.outputs.append(os.path.join(out, "manifest.json"))
        write_json(os.path.join(out, "manifest.json"), asdict(manifest))
    return code


if __name__ == "__main__":
    sys.exit(main())
