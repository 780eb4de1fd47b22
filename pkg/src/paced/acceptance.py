"""Acceptance criteria as runnable checks.

Each ``criterion_N(tier)`` returns a ``CriterionResult``; the runtime limit
is part of the verdict.  The ``fast`` tier caps horizons at 200 rounds and
trial counts at 100 and skips the learner trend study.
"""

from __future__ import annotations

import itertools
import math
import time
from dataclasses import dataclass
from fractions import Fraction
from typing import Callable

import numpy as np

from . import bounds
from .engine import TieRule, replay, run_simulation
from .hindsight import (HindsightProblem, best_sequence_regret, expected_shaded_utility, hindsight_utility,
                        hindsight_utility_batch, measure_player, shading_sample, sup_hindsight_utility)
from .model import (AuctionInstance, make_gamma_counterexample, make_half_counterexample,
                    make_second_price_counterexample, sample_iid_instance)
from .policies import BwKPolicy, FixedMultiplier
from .submodular import (PremiseError, WeightedCoverage, lw_star_submodular_exact, run_submodular_simulation,
                         sup_submodular_hindsight, verify_lemma_subm)
from .welfare import (ValuationClass, lw_star_exact, realized_lw, verify_main_theorem)

TIERS = ("fast", "full")


@dataclass
class CriterionResult:
    number: int
    name: str
    passed: bool
    detail: str
    elapsed: float
    limit: float
    skipped: bool = False

    def line(self) -> str:
        tag = "SKIP" if self.skipped else ("PASS" if self.passed else "FAIL")
        return f"[{tag}] {self.number:2d}. {self.name}: {self.detail} ({self.elapsed:.2f}s / limit {self.limit:g}s)"


def _trials(tier: str, full: int) -> int:
    return full if tier == "full" else min(full, 100)


def _timed(number: int, name: str, limit: float, fn: Callable[[], tuple[bool, str]]) -> CriterionResult:
    t0 = time.perf_counter()
    ok, detail = fn()
    elapsed = time.perf_counter() - t0
    if elapsed >= limit:
        detail += f"; runtime {elapsed:.2f}s exceeds {limit:g}s"
    return CriterionResult(number, name, ok and elapsed < limit, detail, elapsed, limit)


def criterion_1(tier: str = "full") -> CriterionResult:
    def run():
        add, _ = bounds.poa_additive(1.0)
        sub, _, _ = bounds.poa_submodular(1.0)
        g0 = bounds.gamma0()
        checks = {
            "poa_additive(1)=1+sqrt2": abs(add - (1 + math.sqrt(2))) <= 1e-9,
            "poa_submodular(1)=(3+sqrt5)/2": abs(sub - (3 + math.sqrt(5)) / 2) <= 1e-9,
            "gamma0 in [1.72,1.74]": 1.72 <= g0 <= 1.74,
            "gamma0 equation": abs(bounds.gamma0_equation(g0)) <= 1e-9,
        }
        bad = [k for k, v in checks.items() if not v]
        return not bad, f"additive={add:.12f} submodular={sub:.12f} gamma0={g0:.10f}" + (f" failed: {bad}" if bad else "")
    return _timed(1, "bounds exactness", 1.0, run)


def criterion_2(tier: str = "full") -> CriterionResult:
    def run():
        table = bounds.emit_poa_curve(1.0, 10.0, 0.05)
        rows = table.rows
        add = np.array([r.poa_additive for r in rows])
        sub = np.array([r.poa_submodular for r in rows])
        ok_gap = bool(np.all(sub - add > 0))
        ok_mono = bool(np.all(np.diff(add) > 0) and np.all(np.diff(sub) > 0))
        first = rows[0]
        ok_first = (first.gamma == 1.0 and abs(first.poa_additive - (1 + math.sqrt(2))) <= 1e-9
                    and abs(first.poa_submodular - (3 + math.sqrt(5)) / 2) <= 1e-9)
        ok_range = abs(rows[-1].gamma - 10.0) < 1e-9 and len(rows) == 181
        return (ok_gap and ok_mono and ok_first and ok_range,
                f"{len(rows)} rows, min(sub-add)={float((sub - add).min()):.4f}, monotone={ok_mono}")
    return _timed(2, "PoA curve reproduction", 1.0, run)


def criterion_3(tier: str = "full") -> CriterionResult:
    def run():
        msgs, ok = [], True
        # (a) second price
        cert = make_second_price_counterexample(100, Fraction(1, 100))
        tr = replay(cert.instance, cert.script)
        lw = realized_lw(tr).lw
        star = lw_star_exact(cert.instance).lw_star
        regs = [best_sequence_regret(tr, i) for i in range(2)]
        a = lw == 1 and star == 100 and regs == [0, 0]
        msgs.append(f"(a) LW={lw} LW*={star} regrets={[str(r) for r in regs]}")
        # (b) half
        eps, T = Fraction(1, 10), 100
        cert = make_half_counterexample(T, eps)
        tr = replay(cert.instance, cert.script)
        lw = realized_lw(tr).lw
        star = lw_star_exact(cert.instance).lw_star
        reg1 = best_sequence_regret(tr, 0)
        b = lw == 10 and reg1 == 1 and lw / star <= 1 / (2 - eps - Fraction(1, T)) and star >= cert.claimed_lw_star_lower
        msgs.append(f"(b) LW={lw} LW*={star} reg1={reg1} ratio={float(lw / star):.4f}")
        # (c) gamma
        c = True
        for gamma in (2, 4):
            cert = make_gamma_counterexample(T, gamma)
            tr = replay(cert.instance, cert.script)
            lw = realized_lw(tr).lw
            star = lw_star_exact(cert.instance).lw_star
            ratios = []
            for i in range(2):
                m = measure_player(tr, i, assumed_reg=1.0)
                ratios.append(m.gamma_hat)
                c &= m.gamma_hat <= gamma and m.gamma_hat_upper <= gamma + m.certified_gap / m.utility
            c &= lw / star <= Fraction(1, gamma) + Fraction(1, T)
            msgs.append(f"(c) gamma={gamma}: ratios={[round(r, 4) for r in ratios]} LW/LW*={float(lw / star):.4f}")
        ok = a and b and c
        return ok, "; ".join(msgs)
    return _timed(3, "counterexample certificates", 5.0, run)


def _random_problem(rng: np.random.Generator, T_max: int) -> HindsightProblem:
    T = int(rng.integers(1, T_max + 1))
    v = rng.uniform(0, 1, T) * (rng.random(T) < 0.9)
    style = rng.integers(3)
    if style == 0:
        d = rng.uniform(0, 1, T)
    elif style == 1:
        d = rng.uniform(0, 1, T) * rng.uniform(0, 1) * v * 1.3
    else:
        d = np.where(rng.random(T) < 0.5, 0.0, rng.uniform(0, 0.3, T))
    B = float(rng.uniform(0, 1) ** 2 * T)
    return HindsightProblem(tuple(v.tolist()), tuple(d.tolist()), B)


def criterion_4(tier: str = "full") -> CriterionResult:
    def run():
        rng = np.random.default_rng(404)
        trials = _trials(tier, 1000)
        bad = 0
        for _ in range(trials):
            prob = _random_problem(rng, 200)
            T, B = prob.T, float(prob.budget)
            if B <= 0:
                B = 1e-3
                prob = HindsightProblem(prob.values, prob.d, B)
            lam = float(rng.uniform(0, 1))
            eps = float(rng.uniform(0, 1 - lam) * rng.choice([1.0, 1e-2, 1e-4]))
            lo = hindsight_utility(prob, lam).utility
            hi = hindsight_utility(prob, lam + eps).utility
            if hi < lo - T * T * eps / B - 2:
                bad += 1
        return bad == 0, f"{trials} instances, {bad} violations"
    return _timed(4, "discretization property", 30.0, run)


def opt_fixed_arm(values, d, budget: float, lams: np.ndarray) -> np.ndarray:
    """Best-fixed-arm BwK reward per arm: stop as soon as spend would exceed the budget."""
    spent = np.zeros(len(lams))
    reward = np.zeros(len(lams))
    alive = np.ones(len(lams), dtype=bool)
    for v, dt in zip(values, d):
        win = lams * v > dt
        c = np.where(win, lams * v, 0.0)
        r = np.where(win, (1 - lams) * v, 0.0)
        over = alive & (spent + c > budget)
        alive &= ~over
        spent += np.where(alive, c, 0.0)
        reward += np.where(alive, r, 0.0)
    return reward


def criterion_5(tier: str = "full") -> CriterionResult:
    def run():
        runs = _trials(tier, 200)
        bad_u = bad_opt = stopped = 0
        for seed in range(runs):
            rng = np.random.default_rng(5000 + seed)
            T = int(rng.integers(15, 51))
            n = int(rng.integers(2, 4))
            inst = AuctionInstance(rng.uniform(0, 1, (n, T)).tolist(),
                                   (rng.uniform(0.02, 0.5, n) * T).tolist())
            learner = BwKPolicy()  # K = T**2
            others = [FixedMultiplier(float(rng.uniform(0, 1))) if rng.random() < 0.7 else BwKPolicy(K=T)
                      for _ in range(n - 1)]
            tr = run_simulation(inst, [learner] + others, TieRule.STRICT_EXCEED, seed=seed)
            st = learner.state
            stopped += st.stopped
            prob = HindsightProblem.from_trace(tr, 0)
            lams = st.grid.multipliers
            u_hat, _, _ = hindsight_utility_batch(prob.values, prob.d, prob.budget, lams)
            opt_fa = opt_fixed_arm(prob.values, prob.d, float(prob.budget), lams).max()
            if float(tr.U[0]) < st.rew - 1e-9:
                bad_u += 1
            if u_hat.max() > opt_fa + 2 + 1e-9:
                bad_opt += 1
        return bad_u == 0 and bad_opt == 0, (f"{runs} runs ({stopped} hit the knapsack stop), "
                                             f"U<REW: {bad_u}, maxU_hat>OPT_FA+2: {bad_opt}")
    return _timed(5, "reduction bridging", 60.0, run)


def random_small_instance(rng: np.random.Generator, n_max: int = 3, T_max: int = 10, T_min: int = 2) -> AuctionInstance:
    n = int(rng.integers(2, n_max + 1))
    T = int(rng.integers(T_min, T_max + 1))
    values = rng.uniform(0, 1, (n, T))
    budgets = rng.uniform(0.1, 0.7, n) * T
    return AuctionInstance(values.tolist(), budgets.tolist())


def _random_policies(rng, n, learner_prob=0.0):
    return [BwKPolicy(K=50) if rng.random() < learner_prob else FixedMultiplier(float(rng.uniform(0.05, 1)))
            for _ in range(n)]


def criterion_6(tier: str = "full") -> CriterionResult:
    lams = [k / 10 for k in range(1, 10)]

    def run():
        trials = _trials(tier, 500)
        bad = checked = 0
        for seed in range(trials):
            rng = np.random.default_rng(6000 + seed)
            inst = random_small_instance(rng, 3, 8)
            tr = run_simulation(inst, _random_policies(rng, inst.n), TieRule.LOWEST_INDEX, seed=seed)
            star = lw_star_exact(inst)
            bundles = star.bundles(inst.n)
            prices = tr.prices()
            for i in range(inst.n):
                sup = sup_hindsight_utility(HindsightProblem.from_trace(tr, i))
                lwi = float(star.per_player_lw_star[i])
                paid = float(sum(prices[t] for t in bundles[i]))
                for lam in lams:
                    c = bounds.c_of_lambda(lam)
                    rhs = min((1 - lam) / lam * lwi, c * lam * lwi - c * paid) - 1
                    checked += 1
                    if sup.u_star + sup.certified_gap < rhs:
                        bad += 1
        # Monte Carlo agreement of the exact shaded expectation
        mc_bad = spots = 0
        rng = np.random.default_rng(66)
        draws = 1_000_000
        while spots < 20:
            inst = random_small_instance(rng, 3, 8)
            tr = run_simulation(inst, _random_policies(rng, inst.n), TieRule.LOWEST_INDEX, seed=spots)
            i = int(rng.integers(inst.n))
            prob = HindsightProblem.from_trace(tr, i)
            lam = float(rng.choice(lams))
            if hindsight_utility(prob, lam).constrained:
                continue
            exact = expected_shaded_utility(prob, lam)
            mu = shading_sample(lam, rng.uniform(0, 1, draws))
            u, _, _ = hindsight_utility_batch(prob.values, prob.d, prob.budget, mu)
            se = u.std(ddof=1) / math.sqrt(draws)
            if abs(u.mean() - exact) > 3 * se + 1e-12:
                mc_bad += 1
            spots += 1
        return bad == 0 and mc_bad == 0, (f"{trials} instances, {checked} (player, lambda) checks, {bad} violations; "
                                          f"Monte Carlo: {mc_bad}/20 outside 3 SE")
    return _timed(6, "utility lemma", 60.0, run)


def measure_all(tr, assumed_reg: float = 0.0):
    ms = [measure_player(tr, i, assumed_reg) for i in range(tr.n)]
    gamma = max(m.gamma_hat for m in ms)
    reg = max(m.reg_at_gamma1 for m in ms)
    gap = max(m.certified_gap for m in ms)
    return ms, gamma, reg, gap


def criterion_7(tier: str = "full") -> CriterionResult:
    def run():
        trials = _trials(tier, 200)
        bad = vacuous = 0
        worst = math.inf
        for seed in range(trials):
            rng = np.random.default_rng(7000 + seed)
            inst = random_small_instance(rng, 3, 12, 4)
            pols = _random_policies(rng, inst.n, learner_prob=0.3)
            tr = run_simulation(inst, pols, TieRule.LOWEST_INDEX, seed=seed)
            star = lw_star_exact(inst)
            lw = realized_lw(tr).lw
            _, gamma, reg, gap = measure_all(tr)
            slack = inst.n * gap
            for g in (gamma, 1.0):
                if math.isinf(g):
                    vacuous += 1
                    continue
                v = verify_main_theorem(lw, inst.n, g, reg, star, ValuationClass.ADDITIVE, slack)
                worst = min(worst, v.residual)
                bad += not v.holds
        return bad == 0, (f"{trials} instances, {bad} violations, min residual {worst:.4f}, "
                          f"{vacuous} infinite-ratio cases checked at gamma=1 only")
    return _timed(7, "main theorem end-to-end", 120.0, run)


def random_coverage(rng: np.random.Generator, T: int, elements: int = 6, density: float = 0.35) -> WeightedCoverage:
    universe = {f"e{k}": float(rng.uniform(0.1, 1.0)) for k in range(elements)}
    items = {t: [e for e in universe if rng.random() < density] for t in range(T)}
    return WeightedCoverage(universe, items)


def criterion_8(tier: str = "full") -> CriterionResult:
    def run():
        rng = np.random.default_rng(8)
        sweep = _trials(tier, 100)
        checked = bad = premise_failed = 0
        for _ in range(sweep):
            T = int(rng.integers(3, 11))
            n = int(rng.integers(2, 4))
            vals = [random_coverage(rng, T) for _ in range(n)]
            st = run_submodular_simulation(vals, (rng.uniform(0.2, 0.8, n) * T).tolist(), T,
                                           rng.uniform(0.1, 1.0, n).tolist())
            for i in range(n):
                try:
                    verify_lemma_subm(st, i, st.multipliers[i], ())
                except PremiseError:
                    premise_failed += 1
                    continue
                for r in range(T + 1):
                    for O in itertools.combinations(range(T), r):
                        checked += 1
                        if verify_lemma_subm(st, i, st.multipliers[i], O) < -1e-12:
                            bad += 1
        thm_bad = 0
        worst = math.inf
        runs = _trials(tier, 100)
        for seed in range(runs):
            rng2 = np.random.default_rng(8000 + seed)
            T = int(rng2.integers(3, 9))
            n = int(rng2.integers(2, 4))
            vals = [random_coverage(rng2, T) for _ in range(n)]
            budgets = (rng2.uniform(0.2, 0.8, n) * T).tolist()
            st = run_submodular_simulation(vals, budgets, T, rng2.uniform(0.05, 1.0, n).tolist())
            star = lw_star_submodular_exact(vals, budgets, T)
            gammas, regs, gaps = [], [], []
            for i in range(n):
                sup = sup_submodular_hindsight(vals[i], st.trace.competing(i), budgets[i])
                U = st.U[i]
                gammas.append(1.0 if sup.u_star <= 0 else (math.inf if U <= 0 else max(sup.u_star / U, 1.0)))
                regs.append(sup.u_star - U)
                gaps.append(sup.certified_gap)
            for g in (max(gammas), 1.0):
                if math.isinf(g):
                    continue
                v = verify_main_theorem(st.lw(), n, g, max(regs), star, ValuationClass.SUBMODULAR, n * max(gaps))
                worst = min(worst, v.residual)
                thm_bad += not v.holds
        ok = bad == 0 and thm_bad == 0 and checked > 0
        return ok, (f"lemma: {checked} (trace, player, O) checks, {bad} violations, {premise_failed} premise "
                    f"failures skipped; theorem: {runs} instances, {thm_bad} violations, min residual {worst:.4f}")
    return _timed(8, "submodular suite", 120.0, run)


def learner_gap(T: int, seed: int, K: int | None = None) -> tuple[float, bool]:
    """Relative benchmark gap of the learner against a fixed-multiplier rival."""
    inst = sample_iid_instance(2, T, "uniform", "quarter", seed=seed)
    K = K or int(math.ceil(math.sqrt(T)))
    tr = run_simulation(inst, [BwKPolicy(K=K), FixedMultiplier(0.5)], TieRule.STRICT_EXCEED, seed=seed)
    sup = sup_hindsight_utility(HindsightProblem.from_trace(tr, 0), grid_step=1.0 / 4000)
    feasible = all(float(p) <= float(b) for p, b in zip(tr.P, inst.budgets))
    return (sup.u_star - float(tr.U[0])) / sup.u_star, feasible


def criterion_9(tier: str = "full") -> CriterionResult:
    if tier != "full":
        return CriterionResult(9, "learner trend", True, "full tier only", 0.0, 600.0, skipped=True)

    def run():
        medians = []
        feasible = True
        for T in (500, 2000, 8000):
            gaps = []
            for seed in range(20):
                g, ok = learner_gap(T, seed)
                gaps.append(g)
                feasible &= ok
            medians.append(float(np.median(gaps)))
        dec = medians[0] > medians[1] > medians[2]
        return dec and feasible, f"median relative gap at T=500/2000/8000: {[round(m, 4) for m in medians]}, budgets feasible={feasible}"
    return _timed(9, "learner trend", 600.0, run)


def criterion_10(tier: str = "full") -> CriterionResult:
    def run():
        xs = np.concatenate([-math.exp(-1) + np.logspace(-16, 0, 5000), np.logspace(-8, 6, 5000)])
        worst_res = max(abs((w := bounds.lambert_w0(x)) * math.exp(w) - x) / max(1.0, abs(x)) for x in xs)
        ys = np.linspace(-1, 20, 10_000)
        worst_rt = max(abs(bounds.lambert_w0(y * math.exp(y)) - y) for y in ys)
        ok = worst_res <= 1e-12 and worst_rt <= 1e-10
        return ok, f"max relative residual {worst_res:.2e}, max round-trip error {worst_rt:.2e}"
    return _timed(10, "numerical kernels", 1.0, run)


def summary_audit(tier: str = "full") -> CriterionResult:
    """Experiment outputs are byte-reproducible and every summary number is recomputable from its trace."""
    import tempfile
    from pathlib import Path

    from .cli import ExperimentConfig, audit_experiment, run_experiment

    def run():
        configs = [
            {"seed": 2024, "replications": 3, "tie_rule": "strict_exceed",
             "instance": {"generator": "iid", "n": 2, "t": 200 if tier == "full" else 60},
             "policies": [{"kind": "bwk", "k": 15}, {"kind": "fixed", "lambda": 0.5}]},
            {"seed": 1, "instance": {"generator": "half", "t": 100, "eps": "0.1"}},
        ]
        problems, identical = [], True
        with tempfile.TemporaryDirectory() as tmp:
            for k, doc in enumerate(configs):
                cfg = ExperimentConfig.from_json(doc, tmp)
                a = run_experiment(cfg, Path(tmp) / f"a{k}")
                b = run_experiment(cfg, Path(tmp) / f"b{k}")
                identical &= (a.output_dir / "summary.csv").read_bytes() == (b.output_dir / "summary.csv").read_bytes()
                problems += audit_experiment(a.output_dir)
        return identical and not problems, f"reproducible={identical}, audit mismatches={len(problems)}" + (
            f" first: {problems[0]}" if problems else "")
    return _timed(11, "summary audit", 60.0, run)


CRITERIA = [criterion_1, criterion_2, criterion_3, criterion_4, criterion_5,
            criterion_6, criterion_7, criterion_8, criterion_9, criterion_10, summary_audit]


def run_acceptance_suite(tier: str = "fast", echo: Callable[[str], None] | None = print) -> list[CriterionResult]:
    if tier not in TIERS:
        raise ValueError(f"tier must be one of {TIERS}")
    results = []
    for crit in CRITERIA:
        res = crit(tier)
        results.append(res)
        if echo:
            echo(res.line())
    return results
