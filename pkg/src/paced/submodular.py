"""Submodular valuations and marginal-value bidding.

A bidder with multiplier ``lam`` bids ``lam`` times the marginal value of
the current item given the items she already holds, clipped to her
remaining budget.  Only fixed multipliers are simulated: no learner is
known to work in this setting.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Mapping, Optional, Sequence

import numpy as np

from .engine import RoundRecord, SimulationTrace, TieRule, run_round
from .hindsight import BREAKPOINT_OFFSET, HindsightOutcome, SupResult
from .model import AuctionFormat, AuctionInstance
from .welfare import InstanceTooLarge, LWStarMethod, WelfareReport

SUBMODULAR_EXACT_LIMIT = 1_000_000


class OpenProblemError(ValueError):
    """Learning bidders with submodular valuations are not supported."""


class PremiseError(ValueError):
    def __init__(self, t: int, detail: str):
        super().__init__(f"premise not satisfied in round {t}: {detail}")
        self.t = t


class Valuation:
    def value(self, S) -> float:
        raise NotImplementedError

    def marginal(self, t: int, S) -> float:
        if t in S:
            raise ValueError(f"item {t} already in the bundle")
        S = frozenset(S)
        return self.value(S | {t}) - self.value(S)


class Additive(Valuation):
    def __init__(self, values: Sequence[float]):
        self.values = tuple(float(v) for v in values)

    def value(self, S):
        return sum(self.values[t] for t in S)

    def marginal(self, t, S):
        if t in S:
            raise ValueError(f"item {t} already in the bundle")
        return self.values[t]


class BudgetedAdditive(Valuation):
    """``min(cap, sum of weights)``."""

    def __init__(self, cap: float, weights: Sequence[float]):
        self.cap = float(cap)
        self.weights = tuple(float(w) for w in weights)

    def value(self, S):
        return min(self.cap, sum(self.weights[t] for t in S))


class WeightedCoverage(Valuation):
    """Items cover subsets of a weighted universe; value is the covered weight.

    Weights are rescaled at construction so the largest single-item value,
    which is also the largest marginal, equals 1.
    """

    def __init__(self, universe: Mapping[str, float], items: Mapping[int, Sequence[str]], rescale: bool = True):
        self.items = {int(t): frozenset(els) for t, els in items.items()}
        weights = {e: float(w) for e, w in universe.items()}
        unknown = set().union(*self.items.values()) - set(weights) if self.items else set()
        if unknown:
            raise ValueError(f"items cover elements missing from the universe: {sorted(unknown)}")
        top = max((sum(weights[e] for e in els) for els in self.items.values()), default=0.0)
        if rescale and top > 0:
            weights = {e: w / top for e, w in weights.items()}
        self.universe = weights

    def _covered(self, S) -> set:
        covered = set()
        for t in S:
            covered |= self.items.get(t, frozenset())
        return covered

    def value(self, S):
        return sum(self.universe[e] for e in self._covered(S))

    def marginal(self, t, S):
        if t in S:
            raise ValueError(f"item {t} already in the bundle")
        # sum only the newly covered weights so the result is never negative
        new = self.items.get(t, frozenset()) - self._covered(S)
        return sum(self.universe[e] for e in new)


def valuation_from_spec(spec: dict) -> Valuation:
    kind = spec.get("kind")
    if kind == "coverage":
        return WeightedCoverage(spec["universe"], spec["items"])
    if kind == "budgeted_additive":
        return BudgetedAdditive(spec["cap"], spec["weights"])
    if kind == "additive":
        return Additive(spec["values"])
    raise ValueError(f"unknown valuation kind {kind!r}")


def marginal(val: Valuation, t: int, S) -> float:
    return val.marginal(t, S)


def value_table(val: Valuation, T: int) -> np.ndarray:
    """``table[mask]`` is the value of the bundle encoded by bitmask ``mask``."""
    table = np.empty(1 << T)
    for mask in range(1 << T):
        table[mask] = val.value(frozenset(t for t in range(T) if mask >> t & 1))
    return table


@dataclass(frozen=True)
class SubmodularityViolation:
    kind: str
    t: int
    S: frozenset
    T: frozenset
    detail: str


def check_submodularity(val: Valuation, T: int, sample_count: int = 1000, seed: int = 0,
                        tol: float = 1e-12) -> list[SubmodularityViolation]:
    """Random nested pairs ``S <= T``, item ``t`` outside ``T``."""
    rng = np.random.default_rng(seed)
    out = []
    for _ in range(sample_count):
        t = int(rng.integers(T))
        others = [s for s in range(T) if s != t]
        big = frozenset(s for s in others if rng.random() < 0.5)
        small = frozenset(s for s in big if rng.random() < 0.5)
        m_small = val.marginal(t, small)
        m_big = val.marginal(t, big)
        if m_small < m_big - tol:
            out.append(SubmodularityViolation("diminishing_returns", t, small, big,
                                              f"marginal {m_small} on S < {m_big} on T"))
        if m_big < -tol:
            out.append(SubmodularityViolation("monotonicity", t, small, big, f"marginal {m_big} < 0"))
        if max(m_small, m_big) > 1 + tol:
            out.append(SubmodularityViolation("normalization", t, small, big,
                                              f"marginal {max(m_small, m_big)} > 1"))
    return out


@dataclass(frozen=True)
class SubmodularTrace:
    trace: SimulationTrace
    valuations: tuple
    multipliers: tuple
    won_sets: tuple
    # (round, marginal at acquisition) per player
    acquisitions: tuple

    def value(self, i: int) -> float:
        return self.valuations[i].value(self.won_sets[i])

    @property
    def V(self) -> tuple:
        return tuple(self.value(i) for i in range(len(self.valuations)))

    @property
    def U(self) -> tuple:
        return tuple(v - float(p) for v, p in zip(self.V, self.trace.P))

    @property
    def budgets(self) -> tuple:
        return self.trace.instance.budgets

    def prices(self) -> np.ndarray:
        return self.trace.prices()

    def lw(self) -> float:
        return sum(min(float(b), v) for b, v in zip(self.budgets, self.V))


def run_submodular_simulation(valuations: Sequence[Valuation], budgets: Sequence[float], T: int,
                              multipliers: Sequence[float], tie_rule: TieRule = TieRule.LOWEST_INDEX,
                              format: AuctionFormat = AuctionFormat.FIRST_PRICE) -> SubmodularTrace:
    n = len(valuations)
    if len(budgets) != n or len(multipliers) != n:
        raise ValueError("need one budget and one multiplier per valuation")
    for lam in multipliers:
        if isinstance(lam, dict) or not isinstance(lam, (int, float)):
            raise OpenProblemError("only fixed multipliers are supported with submodular valuations "
                                   "(learning here is an open problem)")
        if not 0 <= lam <= 1:
            raise ValueError(f"multiplier must lie in [0,1], got {lam!r}")
    rem = [float(b) for b in budgets]
    held = [set() for _ in range(n)]
    acq = [[] for _ in range(n)]
    rounds: list[RoundRecord] = []
    V = [0.0] * n
    P = [0.0] * n
    margs = [[0.0] * T for _ in range(n)]
    for t in range(T):
        col = [valuations[i].marginal(t, held[i]) for i in range(n)]
        raw = [multipliers[i] * col[i] for i in range(n)]
        rec = run_round(rem, raw, col, format, tie_rule, t)
        for i in range(n):
            margs[i][t] = col[i]
            rem[i] -= rec.spend[i]
            P[i] += rec.spend[i]
            V[i] += rec.value_gained[i]
        if rec.winner is not None:
            held[rec.winner].add(t)
            acq[rec.winner].append((t, col[rec.winner]))
        rounds.append(rec)
    inst = AuctionInstance(values=tuple(map(tuple, margs)), budgets=tuple(float(b) for b in budgets), format=format)
    trace = SimulationTrace(instance=inst, tie_rule=TieRule(tie_rule), rounds=tuple(rounds), V=tuple(V), P=tuple(P))
    return SubmodularTrace(trace, tuple(valuations), tuple(multipliers),
                           tuple(frozenset(h) for h in held), tuple(tuple(a) for a in acq))


def verify_lemma_subm(strace: SubmodularTrace, i: int, lam: float, O) -> float:
    """Residual ``v(T_i) - v(O) + sum_{t in O} p_t / lam`` (nonnegative if the lemma holds).

    Raises ``PremiseError`` when some lost round had a marginal above
    ``p_t / lam``, e.g. because the bid was budget clipped.
    """
    if not 0 < lam <= 1:
        raise ValueError("lambda must lie in (0,1]")
    val = strace.valuations[i]
    won = strace.won_sets[i]
    prices = [float(r.price) for r in strace.trace.rounds]
    held: set = set()
    for t, p in enumerate(prices):
        if t in won:
            held.add(t)
            continue
        m = val.marginal(t, held)
        if lam * m > p:
            raise PremiseError(t, f"lost with marginal {m} > price/lambda = {p / lam}")
    O = frozenset(O)
    return val.value(won) - val.value(O) + sum(prices[t] for t in O) / lam


def submodular_hindsight_utility(val: Valuation, d: Sequence[float], budget: float, lam: float) -> HindsightOutcome:
    rem = float(budget)
    held: set = set()
    util = spend = 0.0
    constrained = False
    for t, dt in enumerate(d):
        m = val.marginal(t, held)
        want = lam * m
        if want > rem:
            constrained = True
            bid = rem
        else:
            bid = want
        if bid > dt:
            held.add(t)
            util += m - bid
            spend += bid
            rem -= bid
    return HindsightOutcome(util, tuple(sorted(held)), spend, constrained)


def sup_submodular_hindsight(val: Valuation, d: Sequence[float], budget: float, grid_step: Optional[float] = None,
                             offset: float = BREAKPOINT_OFFSET, enumerate_up_to: int = 12) -> SupResult:
    """Grid plus breakpoint search for the best fixed multiplier.

    Breakpoints ``d_t / m`` use every marginal ``m`` the item can have given
    some earlier bundle (enumerated exactly when ``T <= enumerate_up_to``).
    The reported gap reuses the additive discretization formula; it is a
    heuristic allowance here, not a proven certificate.
    """
    T = len(d)
    B = float(budget)
    if T == 0 or B <= 0:
        return SupResult(0.0, 0.0, 0.0, 0.0, offset)
    b_eff = min(B, float(T))
    if grid_step is None:
        grid_step = max(b_eff / (64 * T * T), 1e-5)
    cands = set(np.arange(int(1.0 / grid_step) + 1) * grid_step)
    cands.add(1.0)
    if T <= enumerate_up_to:
        for t in range(T):
            for r in range(t + 1):
                for S in itertools.combinations(range(t), r):
                    m = val.marginal(t, frozenset(S))
                    if m > 0 and d[t] / m + offset <= 1:
                        cands.add(d[t] / m + offset)
    best_u, best_lam = -math.inf, 0.0
    for lam in sorted(c for c in cands if 0 <= c <= 1):
        u = submodular_hindsight_utility(val, d, B, lam).utility
        if u > best_u:
            best_u, best_lam = u, lam
    return SupResult(best_lam, best_u, T * T * grid_step / b_eff + 2.0, grid_step, offset, B > T)


def verify_subm_utility_bound(val: Valuation, d: Sequence[float], budget: float, lam: float,
                              lw_star_i: float, O_i, prices: Sequence[float]) -> tuple[bool, float]:
    """Check ``U_hat(lam) >= (1-lam)(LW*_i - sum_{O_i} p_t / lam) - 1``."""
    if not 0 < lam < 1:
        raise ValueError("lambda must lie in (0,1)")
    u = submodular_hindsight_utility(val, d, budget, lam).utility
    rhs = (1 - lam) * (lw_star_i - sum(prices[t] for t in O_i) / lam) - 1
    return u >= rhs, u - rhs


def lw_star_submodular_exact(valuations: Sequence[Valuation], budgets: Sequence[float], T: int,
                             max_assignments: int = SUBMODULAR_EXACT_LIMIT) -> WelfareReport:
    """Brute force over all assignments of items to players."""
    n = len(valuations)
    if n ** T > max_assignments:
        raise InstanceTooLarge(f"{n}**{T} assignments exceed {max_assignments}")
    tables = [value_table(v, T) for v in valuations]
    caps = [float(b) for b in budgets]
    full = (1 << T) - 1
    best = [-1.0, None]

    def rec(i, free, acc, masks):
        if i == n - 1:
            total = acc + min(caps[i], tables[i][free])
            if total > best[0]:
                best[0], best[1] = total, masks + [free]
            return
        sub = free
        while True:
            rec(i + 1, free & ~sub, acc + min(caps[i], tables[i][sub]), masks + [sub])
            if sub == 0:
                break
            sub = (sub - 1) & free

    rec(0, full, 0.0, [])
    allocation = [None] * T
    for i, mask in enumerate(best[1]):
        for t in range(T):
            if mask >> t & 1:
                allocation[t] = i
    per = tuple(min(caps[i], float(tables[i][best[1][i]])) for i in range(n))
    return WelfareReport(lw_star_lower=best[0], lw_star_upper=best[0], method=LWStarMethod.EXACT,
                         allocation=tuple(allocation), per_player_lw_star=per)
