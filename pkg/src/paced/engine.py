"""Sequential single-item auction engine.

Bids are clipped to the bidder's remaining budget, never rejected, so a
trace can never reach the minus-infinity utility branch.  Arithmetic stays
in whatever number type the instance uses (float or ``Fraction``).
"""

from __future__ import annotations

import csv
import enum
import io
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .model import AuctionFormat, AuctionInstance, FixedBidScript


class TieRule(str, enum.Enum):
    # a bid wins only if strictly above every other bid, else nobody wins
    STRICT_EXCEED = "strict_exceed"
    # among the maximal bids the smallest player index wins
    LOWEST_INDEX = "lowest_index"


class PolicyError(RuntimeError):
    def __init__(self, player: int, t: int, bid):
        super().__init__(f"player {player} emitted invalid bid {bid!r} in round {t}")
        self.player = player
        self.t = t
        self.bid = bid


@dataclass(frozen=True)
class RoundRecord:
    t: int
    bids: tuple
    winner: Optional[int]
    price: object
    d: tuple
    spend: tuple
    value_gained: tuple
    values: tuple
    budgets_before: tuple


@dataclass(frozen=True)
class PolicyObservation:
    """What a bidder knows when bidding in round ``t``.

    ``history`` holds every completed round; entries expose the bidder's own
    bid, the highest competing bid ``d``, the winner and the price.
    """
    t: int
    own_value: object
    remaining_budget: object
    history: Sequence[RoundRecord] = ()


SPEND_RTOL = 1e-9


def overspent(paid, budget) -> bool:
    """Strict for exact numbers; float sums of clipped bids may exceed the budget by rounding."""
    if isinstance(paid, float) or isinstance(budget, float):
        return paid > budget + SPEND_RTOL * max(1.0, abs(budget))
    return paid > budget


@dataclass(frozen=True)
class SimulationTrace:
    instance: AuctionInstance
    tie_rule: TieRule
    rounds: tuple[RoundRecord, ...]
    V: tuple
    P: tuple

    @property
    def U(self) -> tuple:
        return tuple(-math.inf if overspent(p, b) else v - p
                     for v, p, b in zip(self.V, self.P, self.instance.budgets))

    @property
    def n(self) -> int:
        return self.instance.n

    @property
    def T(self) -> int:
        return len(self.rounds)

    def remaining_budget(self) -> np.ndarray:
        """``(T+1, n)`` float array of budgets before each round and at the end."""
        rows = [[float(b) for b in r.budgets_before] for r in self.rounds]
        last = self.rounds[-1] if self.rounds else None
        end = [float(b) for b in self.instance.budgets] if last is None else \
            [float(b - s) for b, s in zip(last.budgets_before, last.spend)]
        return np.array(rows + [end], dtype=float)

    def competing(self, i: int) -> np.ndarray:
        return np.array([float(r.d[i]) for r in self.rounds])

    def prices(self) -> np.ndarray:
        return np.array([float(r.price) for r in self.rounds])

    def bids(self) -> np.ndarray:
        return np.array([[float(b) for b in r.bids] for r in self.rounds]).reshape(self.T, self.n)

    def winners(self) -> list[Optional[int]]:
        return [r.winner for r in self.rounds]

    def won_rounds(self, i: int) -> list[int]:
        return [r.t for r in self.rounds if r.winner == i]

    def bid_script(self) -> FixedBidScript:
        return FixedBidScript(tuple(tuple(r.bids[i] for r in self.rounds) for i in range(self.n)))

    def to_csv(self) -> str:
        buf = io.StringIO()
        write_trace_csv(self, buf)
        return buf.getvalue()


def _max_excluding(bids: Sequence, i: int):
    m = None
    for j, b in enumerate(bids):
        if j != i and (m is None or b > m):
            m = b
    return 0 * bids[i] if m is None else m


def resolve_winner(bids: Sequence, tie_rule: TieRule) -> Optional[int]:
    top = max(bids)
    leader = next(j for j, b in enumerate(bids) if b == top)
    if tie_rule is TieRule.STRICT_EXCEED and not top > _max_excluding(bids, leader):
        # a shared maximum, or a lone zero bid, allocates nothing
        return None
    return leader


def run_round(budgets: Sequence, raw_bids: Sequence, values: Sequence,
              format: AuctionFormat = AuctionFormat.FIRST_PRICE,
              tie_rule: TieRule = TieRule.LOWEST_INDEX, t: int = 0) -> RoundRecord:
    """Resolve one round; returns the record with post-clipping bids.

    The caller applies ``record.spend`` to its budgets.
    """
    n = len(budgets)
    if len(raw_bids) != n or len(values) != n:
        raise ValueError(f"dimension mismatch: {n} budgets, {len(raw_bids)} bids, {len(values)} values")
    bids = []
    for i, (raw, rem) in enumerate(zip(raw_bids, budgets)):
        if not raw >= 0 or (isinstance(raw, float) and math.isinf(raw)):
            raise PolicyError(i, t, raw)
        bids.append(min(raw, rem))
    bids = tuple(bids)
    d = tuple(_max_excluding(bids, i) for i in range(n))
    winner = resolve_winner(bids, TieRule(tie_rule))
    price = max(bids)
    zero = 0 * price
    spend = [zero] * n
    gained = [0 * values[i] for i in range(n)]
    if winner is not None:
        pay = bids[winner] if AuctionFormat(format) is AuctionFormat.FIRST_PRICE else d[winner]
        spend[winner] = pay
        gained[winner] = values[winner]
    return RoundRecord(t=t, bids=bids, winner=winner, price=price, d=d, spend=tuple(spend),
                       value_gained=tuple(gained), values=tuple(values), budgets_before=tuple(budgets))


def run_simulation(inst: AuctionInstance, policies: Sequence, tie_rule: TieRule = TieRule.LOWEST_INDEX,
                   seed: int | None = 0) -> SimulationTrace:
    """Play ``inst`` with one policy per player.

    Each policy sees its own value before bidding and, after the round, the
    highest competing bid and the outcome (see ``paced.policies``).
    """
    if len(policies) != inst.n:
        raise ValueError(f"{len(policies)} policies for {inst.n} players")
    tie_rule = TieRule(tie_rule)
    streams = np.random.SeedSequence(seed).spawn(inst.n)
    for i, pol in enumerate(policies):
        pol.start(i, inst, np.random.default_rng(streams[i]))

    budgets = list(inst.budgets)
    V = [0 * row[0] if row else 0 for row in inst.values]
    P = list(V)
    rounds: list[RoundRecord] = []
    for t in range(inst.T):
        col = inst.column(t)
        raw = []
        for i, pol in enumerate(policies):
            b = pol.bid(PolicyObservation(t, col[i], budgets[i], rounds))
            if b is None or not b >= 0 or (isinstance(b, float) and not math.isfinite(b)):
                raise PolicyError(i, t, b)
            raw.append(b)
        rec = run_round(budgets, raw, col, inst.format, tie_rule, t)
        for i in range(inst.n):
            budgets[i] = budgets[i] - rec.spend[i]
            V[i] = V[i] + rec.value_gained[i]
            P[i] = P[i] + rec.spend[i]
        for i, pol in enumerate(policies):
            pol.observe(rec, i)
        rounds.append(rec)
    return SimulationTrace(instance=inst, tie_rule=tie_rule, rounds=tuple(rounds), V=tuple(V), P=tuple(P))


def replay(inst: AuctionInstance, script: FixedBidScript, tie_rule: TieRule = TieRule.LOWEST_INDEX) -> SimulationTrace:
    from .policies import ScriptPolicy
    return run_simulation(inst, [ScriptPolicy(row) for row in script.bids], tie_rule)


# CSV: t, winner, price, then per player bid_i, d_i, spend_i, value_i, budget_i.
# value_i is the player's value for the round's item and budget_i the budget
# remaining when the round starts, so a file is enough to rebuild the instance.
_PER_PLAYER = ("bid", "d", "spend", "value", "budget")


def _fmt(x) -> str:
    return repr(float(x))


def write_trace_csv(trace: SimulationTrace, fh) -> None:
    w = csv.writer(fh, lineterminator="\n")
    header = ["t", "winner", "price"]
    for i in range(trace.n):
        header += [f"{k}_{i}" for k in _PER_PLAYER]
    w.writerow(header)
    for r in trace.rounds:
        row = [r.t, "" if r.winner is None else r.winner, _fmt(r.price)]
        for i in range(trace.n):
            row += [_fmt(r.bids[i]), _fmt(r.d[i]), _fmt(r.spend[i]), _fmt(r.values[i]), _fmt(r.budgets_before[i])]
        w.writerow(row)


def save_trace_csv(trace: SimulationTrace, path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        write_trace_csv(trace, fh)


def read_trace_csv(path_or_fh, format: AuctionFormat | str = AuctionFormat.FIRST_PRICE,
                   tie_rule: TieRule | str = TieRule.LOWEST_INDEX) -> SimulationTrace:
    """Rebuild a trace (and its instance) from a CSV written by ``write_trace_csv``."""
    if isinstance(path_or_fh, (str, Path)):
        with open(path_or_fh, newline="") as fh:
            return read_trace_csv(fh, format, tie_rule)
    reader = csv.DictReader(path_or_fh)
    cols = reader.fieldnames or []
    n = sum(1 for c in cols if c.startswith("bid_"))
    if n == 0 or cols[:3] != ["t", "winner", "price"]:
        raise ValueError("not a trace CSV: expected header t,winner,price,bid_0,...")
    rounds = []
    for row in reader:
        winner = int(row["winner"]) if row["winner"] != "" else None
        get = lambda k: tuple(float(row[f"{k}_{i}"]) for i in range(n))  # noqa: E731
        spend, values = get("spend"), get("value")
        gained = tuple(values[i] if winner == i else 0.0 for i in range(n))
        rounds.append(RoundRecord(t=int(row["t"]), bids=get("bid"), winner=winner, price=float(row["price"]),
                                  d=get("d"), spend=spend, value_gained=gained, values=values,
                                  budgets_before=get("budget")))
    if not rounds:
        raise ValueError("trace CSV has no rounds")
    values = tuple(tuple(r.values[i] for r in rounds) for i in range(n))
    inst = AuctionInstance(values=values, budgets=rounds[0].budgets_before, format=format)
    V = tuple(sum(r.value_gained[i] for r in rounds) for i in range(n))
    P = tuple(sum(r.spend[i] for r in rounds) for i in range(n))
    return SimulationTrace(instance=inst, tie_rule=TieRule(tie_rule), rounds=tuple(rounds), V=V, P=P)
