"""Command-line harness: experiments from JSON configs, trace analyses, bound tables, acceptance.

Exit codes: 0 ok, 1 some theorem verdict did not hold, 2 config error,
3 runtime error, 4 acceptance failure.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import Optional

from . import bounds
from .engine import PolicyError, TieRule, read_trace_csv, run_simulation, write_trace_csv
from .hindsight import HindsightProblem, measure_player, sup_hindsight_utility
from .model import (AuctionFormat, AuctionInstance, make_gamma_counterexample, make_half_counterexample,
                    make_second_price_counterexample, sample_iid_instance, validate_instance)
from .policies import ScriptPolicy, policy_from_spec
from .submodular import (OpenProblemError, lw_star_submodular_exact, run_submodular_simulation,
                         sup_submodular_hindsight, valuation_from_spec)
from .welfare import (InstanceTooLarge, ValuationClass, lw_star, partition_diagnostic, realized_lw,
                      verify_main_theorem)

EXIT_OK, EXIT_VERDICT, EXIT_CONFIG, EXIT_RUNTIME, EXIT_ACCEPT = 0, 1, 2, 3, 4
ANALYSES = ("hindsight", "welfare", "theorem", "partition")
DEFAULT_ANALYSES = ("hindsight", "welfare", "theorem")
SEED_ENV = "PACED_SEED"


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class ExperimentConfig:
    instance: object
    seed: int
    policies: Optional[tuple] = None
    tie_rule: TieRule = TieRule.LOWEST_INDEX
    replications: int = 1
    output_dir: str = "paced-out"
    analyses: tuple = DEFAULT_ANALYSES
    workers: int = 1
    grid_step: Optional[float] = None
    base_dir: str = "."

    @classmethod
    def from_json(cls, doc: dict, base_dir: str | Path = ".") -> "ExperimentConfig":
        if not isinstance(doc, dict):
            raise ConfigError("config must be a JSON object")
        unknown = set(doc) - {"instance", "seed", "policies", "tie_rule", "replications", "output_dir",
                              "analyses", "workers", "grid_step"}
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        if "seed" not in doc:
            raise ConfigError("config needs a seed")
        if "instance" not in doc:
            raise ConfigError("config needs an instance")
        seed = doc["seed"]
        if not isinstance(seed, int) or not 0 <= seed < 2**64:
            raise ConfigError("seed must be an integer in [0, 2**64)")
        reps = doc.get("replications", 1)
        if not isinstance(reps, int) or reps < 1:
            raise ConfigError("replications must be an integer >= 1")
        analyses = tuple(doc.get("analyses", DEFAULT_ANALYSES))
        bad = [a for a in analyses if a not in ANALYSES]
        if bad:
            raise ConfigError(f"unknown analyses {bad}; choose from {ANALYSES}")
        try:
            tie = TieRule(doc.get("tie_rule", TieRule.LOWEST_INDEX.value))
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
        inst = doc["instance"]
        if isinstance(inst, str):
            path = Path(base_dir) / inst
            if not path.exists():
                raise ConfigError(f"instance file {path} does not exist")
            inst = str(path)
        elif not isinstance(inst, dict):
            raise ConfigError("instance must be an object or a file path")
        pols = doc.get("policies")
        if pols is not None and not (isinstance(pols, list) and all(isinstance(p, dict) for p in pols)):
            raise ConfigError("policies must be a list of policy objects")
        workers = doc.get("workers", 1)
        if not isinstance(workers, int) or workers < 1:
            raise ConfigError("workers must be an integer >= 1")
        step = doc.get("grid_step")
        if step is not None and not (isinstance(step, (int, float)) and 0 < step <= 1):
            raise ConfigError("grid_step must be a number in (0, 1]")
        return cls(instance=inst, seed=seed, policies=None if pols is None else tuple(pols), tie_rule=tie,
                   replications=reps, output_dir=str(doc.get("output_dir", "paced-out")), analyses=analyses,
                   workers=workers, grid_step=step, base_dir=str(base_dir))


def load_config(path: str | Path) -> ExperimentConfig:
    path = Path(path)
    try:
        doc = json.loads(path.read_text())
    except FileNotFoundError:
        raise ConfigError(f"config file {path} does not exist") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config is not valid JSON: {exc}") from None
    if isinstance(doc, dict) and os.environ.get(SEED_ENV):
        try:
            doc["seed"] = int(os.environ[SEED_ENV])
        except ValueError:
            raise ConfigError(f"{SEED_ENV} must be an integer") from None
    return ExperimentConfig.from_json(doc, base_dir=path.parent)


def _exact(x):
    """Parse a number keeping decimal strings exact."""
    if isinstance(x, str):
        return Fraction(x)
    if isinstance(x, float):
        return Fraction(str(x))
    return x


def make_counterexample(name: str, T: int, eps=None, gamma=None):
    if name == "second-price":
        return make_second_price_counterexample(T, _exact(eps if eps is not None else "0.01"))
    if name == "half":
        return make_half_counterexample(T, _exact(eps if eps is not None else "0.1"))
    if name == "gamma":
        return make_gamma_counterexample(T, _exact(gamma if gamma is not None else 2))
    raise ConfigError(f"unknown counterexample {name!r}")


@dataclass
class Setup:
    """One replication's instance plus players, in either the additive or the submodular setting."""
    instance: Optional[AuctionInstance] = None
    policies: list = field(default_factory=list)
    valuations: Optional[list] = None
    budgets: Optional[list] = None
    T: int = 0
    format: AuctionFormat = AuctionFormat.FIRST_PRICE


def build_setup(cfg: ExperimentConfig, seed: int) -> Setup:
    spec = cfg.instance
    default_policies = None
    if isinstance(spec, str):
        inst = AuctionInstance.load(spec)
    elif "generator" in spec:
        gen = spec["generator"]
        if gen == "iid":
            inst = sample_iid_instance(int(spec["n"]), int(spec["t"]), spec.get("value_law", "uniform"),
                                       spec.get("budget_rule", "quarter"), seed=seed,
                                       format=spec.get("format", "first_price"))
        elif gen in ("second-price", "half", "gamma"):
            cert = make_counterexample(gen, int(spec["t"]), spec.get("eps"), spec.get("gamma"))
            inst = cert.instance
            default_policies = [ScriptPolicy(row) for row in cert.script.bids]
        else:
            raise ConfigError(f"unknown instance generator {gen!r}")
    elif "valuations" in spec:
        vals = [valuation_from_spec(v) for v in spec["valuations"]]
        specs = cfg.policies or []
        if len(specs) != len(vals):
            raise ConfigError("submodular setting needs one policy per valuation")
        if any(p.get("kind") != "fixed" for p in specs):
            raise OpenProblemError("learning with submodular valuations is an open problem; "
                                   "only fixed multipliers are supported")
        budgets = [float(b) for b in spec["budgets"]]
        return Setup(valuations=vals, budgets=budgets, T=int(spec["t"]),
                     policies=[float(p["lambda"]) for p in specs],
                     format=AuctionFormat(spec.get("format", "first_price")))
    else:
        inst = AuctionInstance.from_json(spec)
    problems = validate_instance(inst)
    if problems:
        raise ConfigError("invalid instance: " + "; ".join(map(str, problems)))
    if cfg.policies is not None:
        if len(cfg.policies) != inst.n:
            raise ConfigError(f"{len(cfg.policies)} policies for {inst.n} players")
        pols = [policy_from_spec(p) for p in cfg.policies]
    elif default_policies is not None:
        pols = default_policies
    else:
        raise ConfigError("policies are required unless the instance is a counterexample generator")
    return Setup(instance=inst, policies=pols, T=inst.T, format=inst.format)


def _f(x) -> float:
    return float(x)


def analyze_trace(trace, analyses=DEFAULT_ANALYSES, strace=None, grid_step: Optional[float] = None) -> dict:
    """Hindsight, welfare and theorem analyses for one trace (additive or submodular)."""
    n = trace.n
    report: dict = {"t": trace.T, "n": n, "utilities": [_f(u) for u in trace.U]}
    submod = strace is not None
    measures = None
    if "hindsight" in analyses or "theorem" in analyses:
        measures = []
        for i in range(n):
            if submod:
                sup = sup_submodular_hindsight(strace.valuations[i], trace.competing(i), strace.budgets[i],
                                               grid_step)
                U = _f(strace.U[i])
                gamma_hat = 1.0 if sup.u_star <= 0 else (math.inf if U <= 0 else max(sup.u_star / U, 1.0))
                m = dict(player=i, utility=U, u_star=sup.u_star, certified_gap=sup.certified_gap,
                         lambda_star=sup.lambda_star, gamma_hat=gamma_hat, reg=sup.u_star - U)
            else:
                pm = measure_player(trace, i, grid_step=grid_step)
                m = dict(player=i, utility=pm.utility, u_star=pm.u_star, certified_gap=pm.certified_gap,
                         lambda_star=pm.lambda_star, gamma_hat=pm.gamma_hat, reg=pm.reg_at_gamma1)
            m["reg_per_round"] = m["reg"] / trace.T if trace.T else 0.0
            measures.append(m)
        report["players"] = measures
    star = None
    if "welfare" in analyses or "theorem" in analyses or "partition" in analyses:
        if submod:
            lw = strace.lw()
            try:
                star = lw_star_submodular_exact(strace.valuations, strace.budgets, trace.T)
            except InstanceTooLarge:
                star = None
        else:
            lw = _f(realized_lw(trace).lw)
            star = lw_star(trace.instance)
        report["lw"] = _f(lw)
        report["lw_star"] = None if star is None else {
            "lower": _f(star.lw_star_lower), "upper": _f(star.lw_star_upper), "method": star.method.value}
    if "theorem" in analyses:
        gamma = max(m["gamma_hat"] for m in measures)
        reg = max(m["reg"] for m in measures)
        slack = n * max(m["certified_gap"] for m in measures)
        cls = ValuationClass.SUBMODULAR if submod else ValuationClass.ADDITIVE
        # the statement is true at (gamma_hat, reg) and at (1, reg); both are checked
        verdicts = [verify_main_theorem(report["lw"], n, g, reg, star, cls, slack)
                    for g in ([gamma, 1.0] if math.isfinite(gamma) and gamma > 1.0 else [1.0])]
        worst = min(verdicts, key=lambda v: (v.status == "holds", v.residual))
        report["theorem"] = {"gamma_hat": gamma, "reg": reg, "slack": slack, **worst.to_json(),
                             "checked_gammas": [v.gamma for v in verdicts]}
    if "partition" in analyses and not submod and star is not None and star.allocation is not None:
        gamma = max(m["gamma_hat"] for m in measures) if measures else 1.0
        lam = bounds.additive_lambda(gamma if math.isfinite(gamma) else 1.0)
        diag = partition_diagnostic(trace, lam, star, gamma if math.isfinite(gamma) else 1.0,
                                    max(m["reg"] for m in measures) if measures else 0.0)
        report["partition"] = {"lambda": lam, "X": list(diag.X), "Y": list(diag.Y), "Z": list(diag.Z),
                               "residuals": [_f(r) for r in diag.residuals]}
    return report


def _dumps(doc) -> str:
    return json.dumps(doc, sort_keys=True, indent=2, default=_f, allow_nan=True) + "\n"


def run_replication(cfg: ExperimentConfig, r: int) -> tuple[str, str, dict]:
    """Returns ``(trace_csv, report_json, summary_row)`` for replication ``r``."""
    seed = cfg.seed ^ r
    setup = build_setup(cfg, seed)
    strace = None
    if setup.valuations is not None:
        strace = run_submodular_simulation(setup.valuations, setup.budgets, setup.T, setup.policies,
                                           cfg.tie_rule, setup.format)
        trace = strace.trace
    else:
        trace = run_simulation(setup.instance, setup.policies, cfg.tie_rule, seed=seed)
    report = analyze_trace(trace, cfg.analyses, strace, cfg.grid_step)
    report.update(replication=r, seed=seed, setting="submodular" if strace else "additive",
                  grid_step=cfg.grid_step)
    buf = io.StringIO()
    write_trace_csv(trace, buf)
    return buf.getvalue(), _dumps(report), summary_row(report)


def summary_row(report: dict) -> dict:
    star = report.get("lw_star") or {}
    thm = report.get("theorem") or {}
    row = {"replication": report["replication"], "seed": report["seed"], "t": report["t"],
           "lw": report.get("lw", ""), "lw_star_lower": star.get("lower", ""),
           "lw_star_upper": star.get("upper", ""), "gamma_hat": thm.get("gamma_hat", ""),
           "reg": thm.get("reg", ""), "verdict": thm.get("verdict", "n/a"), "residual": thm.get("residual", "")}
    for m in report.get("players", []):
        i = m["player"]
        row[f"gamma_hat_{i}"] = m["gamma_hat"]
        row[f"reg_{i}"] = m["reg"]
        row[f"reg_per_round_{i}"] = m["reg_per_round"]
    return {k: (repr(float(v)) if isinstance(v, float) else v) for k, v in row.items()}


@dataclass
class ExperimentResult:
    output_dir: Path
    rows: list
    all_hold: bool


def _rep_job(args):
    return run_replication(*args)


def run_experiment(cfg: ExperimentConfig, output_dir: str | Path | None = None,
                   workers: Optional[int] = None) -> ExperimentResult:
    out = Path(output_dir if output_dir is not None else Path(cfg.base_dir) / cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    workers = workers or cfg.workers
    jobs = [(cfg, r) for r in range(cfg.replications)]
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_rep_job, jobs))
    else:
        results = [_rep_job(j) for j in jobs]
    # single writer, in replication order, so output bytes do not depend on scheduling
    rows = []
    for r, (trace_csv, report_json, row) in enumerate(results):
        (out / f"trace_{r}.csv").write_text(trace_csv)
        (out / f"report_{r}.json").write_text(report_json)
        rows.append(row)
    fields = list(rows[0].keys())
    for row in rows[1:]:
        fields += [k for k in row if k not in fields]
    with open(out / "summary.csv", "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=fields, lineterminator="\n")
        w.writeheader()
        w.writerows(rows)
    all_hold = all(row["verdict"] in ("holds", "n/a") for row in rows)
    return ExperimentResult(out, rows, all_hold)


def audit_experiment(output_dir: str | Path, rtol: float = 1e-9) -> list[str]:
    """Recompute every summary number of additive replications from the stored traces.

    Returns a list of mismatch descriptions (empty when the audit passes).
    """
    out = Path(output_dir)
    problems = []
    with open(out / "summary.csv", newline="") as fh:
        rows = list(csv.DictReader(fh))
    for row in rows:
        r = int(row["replication"])
        report = json.loads((out / f"report_{r}.json").read_text())
        if report.get("setting") != "additive":
            continue
        trace = read_trace_csv(out / f"trace_{r}.csv")
        analyses = [a for a in DEFAULT_ANALYSES if (a == "hindsight" and "players" in report)
                    or (a == "welfare" and "lw" in report) or (a == "theorem" and "theorem" in report)]
        redo = analyze_trace(trace, analyses, grid_step=report.get("grid_step"))
        redo.update(replication=r, seed=report["seed"])
        again = summary_row(redo)
        for k, v in row.items():
            w = again.get(k, "")
            if v == str(w):
                continue
            try:
                a, b = float(v), float(w)
            except ValueError:
                problems.append(f"replication {r}: {k} stored {v!r}, recomputed {w!r}")
                continue
            if not (a == b or abs(a - b) <= rtol * max(1.0, abs(a))):
                problems.append(f"replication {r}: {k} stored {v}, recomputed {w}")
    return problems


def _print_json(doc) -> None:
    sys.stdout.write(_dumps(doc))


def cmd_simulate(args) -> int:
    cfg = load_config(args.config)
    res = run_experiment(cfg, args.out, args.workers)
    for row in res.rows:
        print(f"replication {row['replication']}: lw={row['lw']} lw_star=[{row['lw_star_lower']}, "
              f"{row['lw_star_upper']}] verdict={row['verdict']}")
    print(f"wrote {res.output_dir / 'summary.csv'}")
    return EXIT_OK if res.all_hold else EXIT_VERDICT


def cmd_hindsight(args) -> int:
    trace = read_trace_csv(args.trace)
    if not 0 <= args.player < trace.n:
        raise ConfigError(f"player must lie in [0, {trace.n})")
    sup = sup_hindsight_utility(HindsightProblem.from_trace(trace, args.player), grid_step=args.grid_step)
    pm = measure_player(trace, args.player, sup=sup)
    _print_json({"lambda_star": sup.lambda_star, "u_star": sup.u_star, "certified_gap": sup.certified_gap,
                 "regret_at_gamma1": pm.reg_at_gamma1, "utility": pm.utility, "gamma_hat": pm.gamma_hat})
    return EXIT_OK


def cmd_welfare(args) -> int:
    fmt = AuctionFormat.FIRST_PRICE
    inst = None
    if args.instance:
        try:
            inst = AuctionInstance.load(args.instance)
        except FileNotFoundError:
            raise ConfigError(f"instance file {args.instance} does not exist") from None
        fmt = inst.format
    trace = read_trace_csv(args.trace, format=fmt)
    if inst is not None:
        if inst.n != trace.n or inst.T != trace.T:
            raise ConfigError("instance shape does not match the trace")
        trace = type(trace)(inst, trace.tie_rule, trace.rounds, trace.V, trace.P)
    report = analyze_trace(trace, DEFAULT_ANALYSES)
    thm = report["theorem"]
    _print_json({"lw": report["lw"], "lw_star": report["lw_star"], "verdict": thm["verdict"],
                 "residual": thm["residual"], "gamma_hat": thm["gamma_hat"], "reg": thm["reg"]})
    return EXIT_OK


def cmd_bounds(args) -> int:
    if args.gamma is not None:
        row = bounds.bound_row(args.gamma)
        _print_json(row.__dict__)
        return EXIT_OK
    lo, hi, step = args.curve or (1.0, 10.0, 0.05)
    sys.stdout.write(bounds.emit_poa_curve(lo, hi, step).to_csv())
    return EXIT_OK


def cmd_counterexample(args) -> int:
    cert = make_counterexample(args.name, args.t, args.eps, args.gamma)
    from .engine import replay
    from .hindsight import best_sequence_regret
    from .welfare import lw_star_exact
    trace = replay(cert.instance, cert.script)
    lw = realized_lw(trace).lw
    star = lw_star_exact(cert.instance).lw_star
    doc = cert.summary()
    doc["t"] = cert.instance.T
    doc["measured"] = {
        "lw": _f(lw), "lw_star": _f(star), "ratio": _f(Fraction(lw) / Fraction(star)) if star else None,
        "best_sequence_regrets": [_f(best_sequence_regret(trace, i)) for i in range(trace.n)],
        "utilities": [_f(u) for u in trace.U],
    }
    if args.name == "gamma":
        doc["measured"]["player_ratios"] = [measure_player(trace, i, assumed_reg=1.0).gamma_hat
                                            for i in range(trace.n)]
    if args.instance_out:
        cert.instance.dump(args.instance_out)
    if args.trace_out:
        with open(args.trace_out, "w", newline="") as fh:
            write_trace_csv(trace, fh)
    _print_json(doc)
    return EXIT_OK


def cmd_accept(args) -> int:
    from .acceptance import run_acceptance_suite
    results = run_acceptance_suite(args.tier)
    failed = [r for r in results if not r.passed]
    print(f"{len(results) - len(failed)}/{len(results)} criteria passed")
    return EXIT_OK if not failed else EXIT_ACCEPT


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="paced", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("simulate", help="run an experiment config")
    s.add_argument("config")
    s.add_argument("--out", help="output directory (overrides the config)")
    s.add_argument("--workers", type=int, help="worker processes (overrides the config)")
    s.set_defaults(func=cmd_simulate)

    s = sub.add_parser("hindsight", help="best fixed multiplier in hindsight for one player of a trace")
    s.add_argument("trace")
    s.add_argument("--player", type=int, required=True)
    s.add_argument("--grid-step", type=float, default=None)
    s.set_defaults(func=cmd_hindsight)

    s = sub.add_parser("welfare", help="liquid welfare, optimum bracket and theorem verdict for a trace")
    s.add_argument("trace")
    s.add_argument("--instance", help="instance JSON (supplies the auction format)")
    s.set_defaults(func=cmd_welfare)

    s = sub.add_parser("bounds", help="price-of-anarchy bounds")
    g = s.add_mutually_exclusive_group()
    g.add_argument("--curve", nargs=3, type=float, metavar=("MIN", "MAX", "STEP"))
    g.add_argument("--gamma", type=float)
    s.set_defaults(func=cmd_bounds)

    s = sub.add_parser("counterexample", help="build, replay and certify a lower-bound instance")
    s.add_argument("name", choices=["second-price", "half", "gamma"])
    s.add_argument("--t", type=int, required=True)
    g = s.add_mutually_exclusive_group()
    g.add_argument("--eps", type=str)
    g.add_argument("--gamma", type=str)
    s.add_argument("--instance-out")
    s.add_argument("--trace-out")
    s.set_defaults(func=cmd_counterexample)

    s = sub.add_parser("accept", help="run the acceptance suite")
    s.add_argument("--tier", choices=["fast", "full"], default="fast")
    s.set_defaults(func=cmd_accept)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, OpenProblemError, KeyError, TypeError, json.JSONDecodeError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (PolicyError, InstanceTooLarge, RuntimeError, ArithmeticError) as exc:
        print(f"runtime error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    except ValueError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
