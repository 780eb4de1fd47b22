"""Liquid welfare: realized, optimal (exact or bracketed) and theorem checks."""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Optional

from . import bounds
from .bounds import c_of_lambda
from .model import AuctionInstance

EXACT_LEAF_LIMIT = 10_000_000


class LWStarMethod(str, enum.Enum):
    EXACT = "exact_brute_force"
    GREEDY_UPPER = "greedy_upper_bound"
    CLOSED_FORM = "closed_form_certificate"


class ValuationClass(str, enum.Enum):
    ADDITIVE = "additive"
    SUBMODULAR = "submodular"


class InstanceTooLarge(ValueError):
    pass


@dataclass(frozen=True)
class WelfareReport:
    lw: Optional[float] = None
    per_player_lw: tuple = ()
    lw_star_lower: Optional[float] = None
    lw_star_upper: Optional[float] = None
    method: Optional[LWStarMethod] = None
    # owner of each item in the maximizing allocation (exact method only)
    allocation: Optional[tuple] = None
    per_player_lw_star: tuple = ()

    @property
    def lw_star(self):
        if self.lw_star_lower is not None and self.lw_star_lower == self.lw_star_upper:
            return self.lw_star_lower
        return None

    def bundles(self, n: int) -> list[list[int]]:
        if self.allocation is None:
            raise ValueError("no allocation available; use the exact solver")
        out = [[] for _ in range(n)]
        for t, owner in enumerate(self.allocation):
            if owner is not None:
                out[owner].append(t)
        return out

    def to_json(self) -> dict:
        f = lambda x: None if x is None else float(x)  # noqa: E731
        return {
            "lw": f(self.lw),
            "per_player_lw": [float(x) for x in self.per_player_lw],
            "lw_star": {"lower": f(self.lw_star_lower), "upper": f(self.lw_star_upper),
                        "method": None if self.method is None else self.method.value},
        }


def realized_lw(trace) -> WelfareReport:
    per = tuple(min(b, v) for b, v in zip(trace.instance.budgets, trace.V))
    return WelfareReport(lw=sum(per[1:], per[0]) if per else 0, per_player_lw=per)


def _compositions(m: int, n: int):
    """All ways to split ``m`` identical items among ``n`` players, as tuples."""
    if n == 1:
        yield (m,)
        return
    for k in range(m, -1, -1):
        for rest in _compositions(m - k, n - 1):
            yield (k,) + rest


def exact_leaf_count(inst: AuctionInstance) -> int:
    groups = {}
    for t in range(inst.T):
        groups[inst.column(t)] = groups.get(inst.column(t), 0) + 1
    return math.prod(math.comb(m + inst.n - 1, inst.n - 1) for m in groups.values())


def lw_star_exact(inst: AuctionInstance, max_leaves: int = EXACT_LEAF_LIMIT) -> WelfareReport:
    """Optimal liquid welfare by branch and bound over allocations.

    Items with identical value columns are interchangeable, so the search
    enumerates how many of each kind every player gets; for generic values
    this is plain ``n**T`` enumeration with pruning.
    """
    n, T = inst.n, inst.T
    leaves = exact_leaf_count(inst)
    if leaves > max_leaves:
        raise InstanceTooLarge(f"exact search would visit up to 10^{math.log10(leaves):.1f} allocations "
                               f"(> {max_leaves:.3g})")

    kinds: dict[tuple, list[int]] = {}
    for t in range(T):
        kinds.setdefault(inst.column(t), []).append(t)
    order = sorted(kinds.items(), key=lambda kv: -max(kv[0]) * len(kv[1]))
    cols = [c for c, _ in order]
    counts = [len(ts) for _, ts in order]
    G = len(cols)
    budgets = inst.budgets
    # zero of the value type (0*inf budget would be nan)
    zero = 0 * inst.values[0][0] if n and T else 0
    # suffix sums for bounds
    suffix_max = [zero] * (G + 1)
    suffix_own = [[zero] * n for _ in range(G + 1)]
    for g in range(G - 1, -1, -1):
        suffix_max[g] = suffix_max[g + 1] + max(cols[g]) * counts[g]
        suffix_own[g] = [suffix_own[g + 1][i] + cols[g][i] * counts[g] for i in range(n)]
    budget_total = sum(budgets, zero)
    comps = [list(_compositions(m, n)) for m in counts]

    best_val = [None]
    best_split: list = [None]
    split = [None] * G
    V = [zero] * n

    def lw_of(vals):
        return sum((min(b, v) for b, v in zip(budgets, vals)), zero)

    def dfs(g):
        cur = lw_of(V)
        if g == G:
            if best_val[0] is None or cur > best_val[0]:
                best_val[0] = cur
                best_split[0] = list(split)
            return
        if best_val[0] is not None:
            ub = min(cur + suffix_max[g], budget_total,
                     sum((min(b, v + s) for b, v, s in zip(budgets, V, suffix_own[g])), zero))
            if ub <= best_val[0]:
                return
        col = cols[g]
        for comp in comps[g]:
            for i in range(n):
                if comp[i]:
                    V[i] = V[i] + col[i] * comp[i]
            split[g] = comp
            dfs(g + 1)
            for i in range(n):
                if comp[i]:
                    V[i] = V[i] - col[i] * comp[i]

    # warm start from the greedy allocation so pruning bites early
    greedy = lw_star_bounds(inst)
    kind_index = {c: g for g, c in enumerate(cols)}
    start = [[0] * n for _ in range(G)]
    got = [zero] * n
    for t, owner in enumerate(greedy.allocation):
        start[kind_index[inst.column(t)]][owner] += 1
        got[owner] = got[owner] + inst.values[owner][t]
    best_val[0] = lw_of(got)
    best_split[0] = [tuple(c) for c in start]
    dfs(0)
    allocation = [None] * T
    for g, comp in enumerate(best_split[0]):
        ts = iter(order[g][1])
        for i, k in enumerate(comp):
            for _ in range(k):
                allocation[next(ts)] = i
    value = best_val[0]
    per_star = _per_player_lw_star(inst, allocation)
    return WelfareReport(lw_star_lower=value, lw_star_upper=value, method=LWStarMethod.EXACT,
                         allocation=tuple(allocation), per_player_lw_star=per_star)


def _per_player_lw_star(inst: AuctionInstance, allocation) -> tuple:
    got = [0 * row[0] if row else 0 for row in inst.values]
    for t, owner in enumerate(allocation):
        if owner is not None:
            got[owner] = got[owner] + inst.values[owner][t]
    return tuple(min(b, v) for b, v in zip(inst.budgets, got))


def lw_star_bounds(inst: AuctionInstance) -> WelfareReport:
    """Greedy lower bound and a cap-aware upper bound on optimal liquid welfare."""
    n, T = inst.n, inst.T
    vals = inst.values_array
    budgets = [float(b) for b in inst.budgets]
    V = [0.0] * n
    alloc = [None] * T
    for t in sorted(range(T), key=lambda t: -vals[:, t].max() if n else 0):
        gains = [min(budgets[i], V[i] + vals[i, t]) - min(budgets[i], V[i]) for i in range(n)]
        i = max(range(n), key=lambda i: (gains[i], vals[i, t]))
        V[i] += vals[i, t]
        alloc[t] = i
    lower = sum(min(b, v) for b, v in zip(budgets, V))
    upper = min(float(vals.max(axis=0).sum()) if n else 0.0,
                sum(min(b, float(vals[i].sum())) for i, b in enumerate(budgets)))
    upper = max(upper, lower)
    return WelfareReport(lw_star_lower=lower, lw_star_upper=upper, method=LWStarMethod.GREEDY_UPPER,
                         allocation=tuple(alloc))


def lw_star(inst: AuctionInstance, max_leaves: int = EXACT_LEAF_LIMIT) -> WelfareReport:
    """Exact when the search space is small enough, otherwise the bracket."""
    try:
        return lw_star_exact(inst, max_leaves)
    except InstanceTooLarge:
        return lw_star_bounds(inst)


@dataclass(frozen=True)
class Verdict:
    status: str
    residual: float
    divisor: float
    regret_coeff: float
    gamma: float
    reg: float
    lw: float
    lw_star_lower: Optional[float]
    lw_star_upper: Optional[float]

    @property
    def holds(self) -> bool:
        return self.status == "holds"

    def to_json(self) -> dict:
        return {"verdict": self.status, "residual": self.residual, "divisor": self.divisor,
                "regret_coeff": self.regret_coeff, "gamma": self.gamma, "reg": self.reg}


def theorem_constants(gamma: float, valuation_class: ValuationClass | str = ValuationClass.ADDITIVE):
    if ValuationClass(valuation_class) is ValuationClass.ADDITIVE:
        return bounds.poa_additive(gamma)[0], bounds.regret_coeff_additive(gamma)
    divisor, _, coeff = bounds.poa_submodular(gamma)
    return divisor, coeff


def verify_main_theorem(lw: float, n: int, gamma: float, reg: float, lw_star_report: Optional[WelfareReport],
                        valuation_class: ValuationClass | str = ValuationClass.ADDITIVE,
                        slack: float = 0.0) -> Verdict:
    """Check ``LW*D(gamma) + R(gamma)*n*(reg+1) + slack >= LW*``.

    With a bracket for LW* the verdict is ``holds`` against the upper end,
    ``violated`` against the lower end and ``inconclusive`` in between.
    An infinite ``gamma`` makes the statement vacuous.
    """
    lw = float(lw)
    lo = None if lw_star_report is None or lw_star_report.lw_star_lower is None else float(lw_star_report.lw_star_lower)
    hi = None if lw_star_report is None or lw_star_report.lw_star_upper is None else float(lw_star_report.lw_star_upper)
    if math.isinf(gamma):
        return Verdict("holds", math.inf, math.inf, math.nan, gamma, reg, lw, lo, hi)
    gamma = max(float(gamma), 1.0)
    divisor, coeff = theorem_constants(gamma, valuation_class)
    lhs = lw * divisor + coeff * n * (reg + 1.0) + slack
    if hi is None:
        return Verdict("inconclusive", math.nan, divisor, coeff, gamma, reg, lw, lo, hi)
    if lhs >= hi:
        status = "holds"
    elif lo is not None and lhs < lo:
        status = "violated"
    else:
        status = "inconclusive"
    return Verdict(status, lhs - hi, divisor, coeff, gamma, reg, lw, lo, hi)


@dataclass(frozen=True)
class PartitionDiagnostic:
    lam: float
    X: tuple
    Y: tuple
    Z: tuple
    residual_x: float
    residual_y: float
    residual_z: float

    @property
    def residuals(self) -> tuple:
        return (self.residual_x, self.residual_y, self.residual_z)


def partition_diagnostic(trace, lam: float, report: WelfareReport, gamma: float = 1.0,
                         reg: float = 0.0) -> PartitionDiagnostic:
    """Split players by over-budget value and by which utility bound is smaller.

    Residuals are the slack in the three per-group welfare inequalities for
    the stated ``(gamma, reg)``; an empty group has residual 0.
    """
    inst = trace.instance
    n = inst.n
    bundles = report.bundles(n)
    prices = [float(r.price) for r in trace.rounds]
    total_price = sum(prices)
    B = [float(b) for b in inst.budgets]
    V = [float(v) for v in trace.V]
    P = [float(p) for p in trace.P]
    lw = [min(b, v) for b, v in zip(B, V)]
    lw_star = [min(B[i], sum(float(inst.values[i][t]) for t in bundles[i])) for i in range(n)]
    paid_on_opt = [sum(prices[t] for t in bundles[i]) for i in range(n)]
    c = c_of_lambda(lam)

    X, Y, Z = [], [], []
    for i in range(n):
        if V[i] > B[i]:
            X.append(i)
        elif (1 - lam) / lam * lw_star[i] <= c * lam * lw_star[i] - c * paid_on_opt[i]:
            Y.append(i)
        else:
            Z.append(i)
    s = lambda xs, S: sum(xs[i] for i in S)  # noqa: E731
    rx = s(lw, X) - s(lw_star, X)
    ry = s(lw, Y) - ((1 - lam) / (gamma * lam) * s(lw_star, Y) + s(P, Y) - len(Y) * (reg + 1) / gamma) if Y else 0.0
    rz = s(lw, Z) - (c * lam / gamma * s(lw_star, Z) + s(P, Z) - c / gamma * total_price
                     - len(Z) * (reg + 1) / gamma) if Z else 0.0
    return PartitionDiagnostic(lam, tuple(X), tuple(Y), tuple(Z), rx, ry, rz)
