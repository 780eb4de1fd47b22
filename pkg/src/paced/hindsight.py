"""Hindsight benchmarks for one bidder against frozen competing bids.

``hindsight_utility(prob, lam)`` replays the bidder with bids
``min(lam*v_t, remaining)`` against the recorded highest competing bids; a
bid wins only if it strictly exceeds ``d_t``.  Opponents are never re-run.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .bounds import c_of_lambda

BREAKPOINT_OFFSET = 2.0 ** -40
DEFAULT_GRID_DIVISOR = 64
MAX_GRID_POINTS = 2_000_000
_CHUNK = 1 << 15


class BudgetConstrainedError(ValueError):
    """The shading multiplier runs into the budget, so the lemma case split refuses it."""


@dataclass(frozen=True)
class HindsightProblem:
    values: tuple
    d: tuple
    budget: object

    def __post_init__(self):
        object.__setattr__(self, "values", tuple(self.values))
        object.__setattr__(self, "d", tuple(self.d))
        if len(self.values) != len(self.d):
            raise ValueError(f"{len(self.values)} values but {len(self.d)} competing bids")
        if any(not x >= 0 for x in self.d):
            raise ValueError("competing bids must be nonnegative")

    @property
    def T(self) -> int:
        return len(self.values)

    @classmethod
    def from_trace(cls, trace, i: int) -> "HindsightProblem":
        return cls(values=tuple(r.values[i] for r in trace.rounds),
                   d=tuple(r.d[i] for r in trace.rounds),
                   budget=trace.instance.budgets[i])


@dataclass(frozen=True)
class HindsightOutcome:
    utility: object
    won: tuple[int, ...]
    spend: object
    constrained: bool


def hindsight_utility(prob: HindsightProblem, lam) -> HindsightOutcome:
    if not 0 <= lam <= 1:
        raise ValueError(f"multiplier must lie in [0,1], got {lam!r}")
    rem = prob.budget
    util = 0 * lam
    spend = 0 * lam
    won = []
    constrained = False
    for t, (v, d) in enumerate(zip(prob.values, prob.d)):
        want = lam * v
        if want > rem:
            constrained = True
            bid = rem
        else:
            bid = want
        if bid > d:
            won.append(t)
            util = util + (v - bid)
            spend = spend + bid
            rem = rem - bid
    return HindsightOutcome(util, tuple(won), spend, constrained)


def hindsight_utility_batch(values, d, budget: float, lams) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Vectorized ``hindsight_utility`` over many multipliers (floats only).

    Returns ``(utility, spend, constrained)`` arrays shaped like ``lams``.
    """
    lams = np.asarray(lams, dtype=float)
    values = np.asarray(values, dtype=float)
    d = np.asarray(d, dtype=float)
    rem = np.full(lams.shape, float(budget))
    util = np.zeros(lams.shape)
    spend = np.zeros(lams.shape)
    constrained = np.zeros(lams.shape, dtype=bool)
    for v, dt in zip(values, d):
        want = lams * v
        clip = want > rem
        constrained |= clip
        bid = np.where(clip, rem, want)
        win = bid > dt
        util += np.where(win, v - bid, 0.0)
        spend += np.where(win, bid, 0.0)
        rem -= np.where(win, bid, 0.0)
    return util, spend, constrained


@dataclass(frozen=True)
class SupResult:
    lambda_star: float
    u_star: float
    certified_gap: float
    grid_step: float
    offset: float = BREAKPOINT_OFFSET
    budget_clamped: bool = False

    @property
    def upper(self) -> float:
        return self.u_star + self.certified_gap


def breakpoints(prob: HindsightProblem, offset: float = BREAKPOINT_OFFSET) -> np.ndarray:
    v = np.asarray(prob.values, dtype=float)
    d = np.asarray(prob.d, dtype=float)
    pos = v > 0
    with np.errstate(over="ignore"):  # tiny v gives breakpoints far above 1, dropped below
        bp = d[pos] / v[pos] + offset
    return np.unique(bp[bp <= 1.0])


def sup_hindsight_utility(prob: HindsightProblem, grid_step: Optional[float] = None,
                          offset: float = BREAKPOINT_OFFSET,
                          max_grid_points: int = MAX_GRID_POINTS) -> SupResult:
    """Maximize the benchmark over breakpoints and a uniform grid.

    The true supremum lies in ``[u_star, u_star + certified_gap]`` with
    ``certified_gap = T**2 * grid_step / B + 2`` (B clamped to T).  The default
    step is ``B / (64 T**2)``; if that exceeds ``max_grid_points`` the step is
    widened and the gap grows accordingly.
    """
    T = prob.T
    B = float(prob.budget)
    if T == 0 or B <= 0 or not any(v > 0 for v in prob.values):
        return SupResult(0.0, 0.0, 0.0, 0.0, offset)
    b_eff = min(B, float(T))
    if grid_step is None:
        grid_step = b_eff / (DEFAULT_GRID_DIVISOR * T * T)
    grid_step = max(float(grid_step), 1.0 / max_grid_points)
    count = int(math.floor(1.0 / grid_step))
    grid = np.arange(count + 1) * grid_step
    cands = np.unique(np.concatenate([grid[grid <= 1.0], [1.0], breakpoints(prob, offset)]))

    best_u, best_lam = -math.inf, 0.0
    for s in range(0, len(cands), _CHUNK):
        chunk = cands[s:s + _CHUNK]
        u, _, _ = hindsight_utility_batch(prob.values, prob.d, B, chunk)
        j = int(np.argmax(u))
        if u[j] > best_u:
            best_u, best_lam = float(u[j]), float(chunk[j])
    u_star = float(hindsight_utility(_float_problem(prob), best_lam).utility)
    gap = T * T * grid_step / b_eff + 2.0
    return SupResult(best_lam, u_star, gap, grid_step, offset, budget_clamped=B > T)


def _float_problem(prob: HindsightProblem) -> HindsightProblem:
    return HindsightProblem(tuple(float(v) for v in prob.values), tuple(float(x) for x in prob.d), float(prob.budget))


@dataclass(frozen=True)
class PlayerMeasure:
    player: int
    utility: float
    u_star: float
    certified_gap: float
    lambda_star: float
    gamma_hat: float
    reg_at_gamma1: float
    assumed_reg: float

    @property
    def gamma_hat_upper(self) -> float:
        """Ratio implied if the benchmark sits at the top of its certified range."""
        return _ratio(self.u_star + self.certified_gap - self.assumed_reg, self.utility)


def _ratio(num: float, den: float) -> float:
    if num <= 0:
        return 1.0
    if den <= 0:
        return math.inf
    return max(num / den, 1.0)


def measure_player(trace, i: int, assumed_reg: float = 0.0, sup: Optional[SupResult] = None,
                   **sup_kwargs) -> PlayerMeasure:
    """Implied competitive ratio (given ``assumed_reg``) and regret at ratio 1.

    ``gamma_hat`` is floored at 1 (a ratio below 1 is not a meaningful claim)
    and is ``inf`` when the player earned nothing against a positive benchmark.
    """
    if sup is None:
        sup = sup_hindsight_utility(HindsightProblem.from_trace(trace, i), **sup_kwargs)
    U = float(trace.U[i])
    return PlayerMeasure(
        player=i,
        utility=U,
        u_star=sup.u_star,
        certified_gap=sup.certified_gap,
        lambda_star=sup.lambda_star,
        gamma_hat=_ratio(sup.u_star - assumed_reg, U),
        reg_at_gamma1=sup.u_star - U,
        assumed_reg=assumed_reg,
    )


def shading_sample(lam: float, u):
    """Inverse CDF of the density ``c(lam)/(1-mu)`` on ``[0, lam]``."""
    if not 0.0 < lam < 1.0:
        raise ValueError(f"lambda must lie in (0,1), got {lam!r}")
    return 1.0 - (1.0 - lam) ** np.asarray(u, dtype=float) if np.ndim(u) else 1.0 - (1.0 - lam) ** float(u)


def expected_shaded_utility(prob: HindsightProblem, lam: float) -> float:
    """Exact expectation of the benchmark under a shading-density draw.

    With no budget clipping at ``lam``, item ``t`` is won for every draw
    above ``d_t/v_t``, and the ``1/(1-mu)`` density cancels the ``(1-mu)``
    utility factor, so each item contributes ``c(lam) * (lam*v_t - d_t)^+``.
    """
    c = c_of_lambda(lam)
    if hindsight_utility(_float_problem(prob), lam).constrained:
        raise BudgetConstrainedError(f"multiplier {lam} is budget constrained on this problem")
    v = np.asarray(prob.values, dtype=float)
    d = np.asarray(prob.d, dtype=float)
    return float(c * np.maximum(lam * v - d, 0.0).sum())


def best_sequence_utility(values: Sequence, d: Sequence, budget, node_limit: int = 2_000_000):
    """Utility of the best bid sequence against frozen competing bids.

    Winning round ``t`` costs ``d_t`` in the limit (the infimum over bids that
    win), so this is a 0/1 knapsack: maximize ``sum(v_t - d_t)`` over sets
    with ``sum(d_t) <= budget``.  Exact arithmetic is preserved.
    """
    items = [(v - c, c) for v, c in zip(values, d) if v > c]
    free = sum((p for p, w in items if w == 0), 0 * budget)
    items = [(p, w) for p, w in items if w > 0]
    if sum((w for _, w in items), 0 * budget) <= budget:
        return free + sum((p for p, _ in items), 0 * budget)
    items.sort(key=lambda pw: pw[0] / pw[1], reverse=True)
    best = [0 * budget]
    nodes = [0]

    def bound(k, cap, acc):
        for p, w in items[k:]:
            if w <= cap:
                cap -= w
                acc += p
            else:
                return acc + p * cap / w
        return acc

    def dfs(k, cap, acc):
        nodes[0] += 1
        if nodes[0] > node_limit:
            raise RuntimeError("best_sequence_utility exceeded its node limit")
        if acc > best[0]:
            best[0] = acc
        if k == len(items) or bound(k, cap, acc) <= best[0]:
            return
        p, w = items[k]
        if w <= cap:
            dfs(k + 1, cap - w, acc + p)
        dfs(k + 1, cap, acc)

    dfs(0, budget, 0 * budget)
    return free + best[0]


def best_sequence_regret(trace, i: int):
    """Best-sequence utility minus realized utility for player ``i``."""
    rounds = trace.rounds
    best = best_sequence_utility([r.values[i] for r in rounds], [r.d[i] for r in rounds],
                                 trace.instance.budgets[i])
    return best - trace.U[i]
