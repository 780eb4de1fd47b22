"""Auction instances, counterexample certificates and random test beds.

Values and budgets are stored as plain nested tuples so that exact
``fractions.Fraction`` inputs survive a whole simulation untouched; use
``values_array`` when a float matrix is wanted.
"""

from __future__ import annotations

import enum
import json
import math
from dataclasses import dataclass
from fractions import Fraction
from numbers import Real
from pathlib import Path
from typing import Sequence

import numpy as np


class AuctionFormat(str, enum.Enum):
    FIRST_PRICE = "first_price"
    SECOND_PRICE = "second_price"


class BenchmarkKind(str, enum.Enum):
    BEST_SEQUENCE = "best_sequence"
    BEST_MULTIPLIER = "best_multiplier"


@dataclass(frozen=True)
class AuctionInstance:
    values: tuple[tuple[Real, ...], ...]
    budgets: tuple[Real, ...]
    format: AuctionFormat = AuctionFormat.FIRST_PRICE

    def __post_init__(self):
        object.__setattr__(self, "values", tuple(tuple(row) for row in self.values))
        object.__setattr__(self, "budgets", tuple(self.budgets))
        object.__setattr__(self, "format", AuctionFormat(self.format))

    @property
    def n(self) -> int:
        return len(self.values)

    @property
    def T(self) -> int:
        return len(self.values[0]) if self.values else 0

    @property
    def values_array(self) -> np.ndarray:
        return np.array([[float(v) for v in row] for row in self.values], dtype=float).reshape(self.n, self.T)

    def column(self, t: int) -> tuple[Real, ...]:
        return tuple(row[t] for row in self.values)

    def to_json(self) -> dict:
        return {
            "n": self.n,
            "t": self.T,
            "format": self.format.value,
            "values": [[float(v) for v in row] for row in self.values],
            "budgets": [float(b) for b in self.budgets],
        }

    @classmethod
    def from_json(cls, doc: dict) -> "AuctionInstance":
        inst = cls(
            values=tuple(tuple(float(v) for v in row) for row in doc["values"]),
            budgets=tuple(float(b) for b in doc["budgets"]),
            format=AuctionFormat(doc.get("format", "first_price")),
        )
        if "n" in doc and doc["n"] != inst.n:
            raise ValueError(f"instance declares n={doc['n']} but has {inst.n} value rows")
        if "t" in doc and inst.n and doc["t"] != inst.T:
            raise ValueError(f"instance declares t={doc['t']} but rows have length {inst.T}")
        return inst

    def dump(self, path: str | Path) -> None:
        # repr-free json floats are already shortest round-trip (>= 15 significant digits)
        Path(path).write_text(json.dumps(self.to_json(), indent=1))

    @classmethod
    def load(cls, path: str | Path) -> "AuctionInstance":
        return cls.from_json(json.loads(Path(path).read_text()))


@dataclass(frozen=True)
class FixedBidScript:
    bids: tuple[tuple[Real, ...], ...]

    def __post_init__(self):
        object.__setattr__(self, "bids", tuple(tuple(row) for row in self.bids))
        for i, row in enumerate(self.bids):
            for t, b in enumerate(row):
                if not b >= 0:
                    raise ValueError(f"negative scripted bid at ({i},{t}): {b!r}")


@dataclass(frozen=True)
class CounterexampleCertificate:
    name: str
    instance: AuctionInstance
    script: FixedBidScript
    claimed_lw: Real
    claimed_lw_star_lower: Real
    claimed_ratio_bound: Real
    claimed_player_regrets: tuple[Real, ...]
    benchmark_kind: BenchmarkKind = BenchmarkKind.BEST_SEQUENCE
    claimed_player_ratios: tuple[Real, ...] = (1, 1)
    rounding_slack: Real = 0
    notes: str = ""

    def summary(self) -> dict:
        return {
            "name": self.name,
            "claimed_lw": float(self.claimed_lw),
            "claimed_lw_star_lower": float(self.claimed_lw_star_lower),
            "claimed_ratio_bound": float(self.claimed_ratio_bound),
            "claimed_player_regrets": [float(r) for r in self.claimed_player_regrets],
            "claimed_player_ratios": [float(r) for r in self.claimed_player_ratios],
            "benchmark_kind": self.benchmark_kind.value,
            "rounding_slack": float(self.rounding_slack),
            "notes": self.notes,
        }


@dataclass(frozen=True)
class Violation:
    kind: str
    index: tuple[int, ...] = ()
    detail: str = ""

    def __str__(self):
        at = f" at {self.index}" if self.index else ""
        return f"{self.kind}{at}: {self.detail}"


def validate_instance(inst: AuctionInstance) -> list[Violation]:
    out: list[Violation] = []
    if inst.n < 1:
        out.append(Violation("shape", (), "need at least one player"))
    if len(inst.budgets) != inst.n:
        out.append(Violation("shape", (), f"{len(inst.budgets)} budgets for {inst.n} players"))
    T = inst.T
    if inst.n and T < 1:
        out.append(Violation("shape", (), "need at least one round"))
    for i, row in enumerate(inst.values):
        if len(row) != T:
            out.append(Violation("shape", (i,), f"row has {len(row)} entries, expected {T}"))
        for t, v in enumerate(row):
            if isinstance(v, float) and math.isnan(v):
                out.append(Violation("value", (i, t), "value is NaN"))
            elif v < 0:
                out.append(Violation("value", (i, t), f"value {v} < 0"))
            elif v > 1:
                out.append(Violation("value", (i, t), f"value {v} > 1"))
    for i, b in enumerate(inst.budgets):
        if not b >= 0:
            out.append(Violation("budget", (i,), f"negative budget {b}"))
    return out


def _as_number(x):
    # keep Fractions/ints exact, everything else becomes float
    return x if isinstance(x, (Fraction, int)) else float(x)


def make_second_price_counterexample(T: int, eps) -> CounterexampleCertificate:
    """Two identical bidders; the poor one grabs every item for free."""
    eps = _as_number(eps)
    if T < 1:
        raise ValueError("T must be >= 1")
    if not 0 < eps < 1:
        raise ValueError(f"eps must lie in (0,1), got {eps}")
    one = eps * 0 + 1
    inst = AuctionInstance(
        values=((one,) * T, (one,) * T),
        budgets=(T * eps, T * one),
        format=AuctionFormat.SECOND_PRICE,
    )
    script = FixedBidScript(((one,) * T, (one * 0,) * T))
    return CounterexampleCertificate(
        name="second_price",
        instance=inst,
        script=script,
        claimed_lw=T * eps,
        claimed_lw_star_lower=T * one,
        claimed_ratio_bound=eps,
        claimed_player_regrets=(0, 0),
        claimed_player_ratios=(1, 1),
    )


def make_half_counterexample(T: int, eps) -> CounterexampleCertificate:
    """First-price instance whose liquid welfare is about half the optimum."""
    eps = _as_number(eps)
    if T < 2:
        raise ValueError("T must be >= 2")
    if not (eps * T >= 1 and eps < 1):
        raise ValueError(f"eps must satisfy 1/T <= eps < 1, got {eps} with T={T}")
    one = eps * 0 + 1
    inv_t = one / T
    inst = AuctionInstance(
        values=((one,) * T, (eps,) * T),
        budgets=(T * eps, T * eps),
        format=AuctionFormat.FIRST_PRICE,
    )
    script = FixedBidScript(((eps,) * T, (eps - inv_t,) * T))
    return CounterexampleCertificate(
        name="half",
        instance=inst,
        script=script,
        claimed_lw=T * eps,
        claimed_lw_star_lower=T * (2 * eps - eps * eps) - eps,
        claimed_ratio_bound=one / (2 - eps - inv_t),
        claimed_player_regrets=(1, 0),
        claimed_player_ratios=(1, 1),
    )


def make_gamma_counterexample(T: int, gamma) -> CounterexampleCertificate:
    """Two unconstrained bidders; the valuable one only takes a 1/gamma share.

    ``T/gamma`` is floored to a round count; ``rounding_slack`` records the
    liquid welfare lost to that flooring.
    """
    gamma = _as_number(gamma)
    if T < 2:
        raise ValueError("T must be >= 2")
    if not gamma >= 1:
        raise ValueError(f"gamma must be >= 1, got {gamma}")
    eps = Fraction(1, T)
    one = Fraction(1)
    if isinstance(gamma, float):
        eps, one = float(eps), 1.0
    exact_share = T / gamma if isinstance(gamma, float) else Fraction(T) / Fraction(gamma)
    m = math.floor(exact_share)
    zero = 0 * one
    values = ((one,) * T, (eps,) * T)
    bids1 = (eps,) * m + (zero,) * (T - m)
    bids2 = (zero,) * m + (eps * eps,) * (T - m)
    inst = AuctionInstance(values=values, budgets=(T * one, T * one), format=AuctionFormat.FIRST_PRICE)

    u1 = (one - eps) * m
    best1 = m + (one - eps * eps) * (T - m)
    u2 = (eps - eps * eps) * (T - m)
    best2 = eps * (T - m)
    lw = m + eps * (T - m)
    return CounterexampleCertificate(
        name="gamma",
        instance=inst,
        script=FixedBidScript((bids1, bids2)),
        claimed_lw=lw,
        claimed_lw_star_lower=T * one,
        claimed_ratio_bound=one / gamma + eps,
        # player 1 at ratio gamma, player 2 at ratio 1
        claimed_player_regrets=(best1 - gamma * u1, best2 - u2),
        claimed_player_ratios=(gamma, one),
        rounding_slack=(exact_share - m) * (one - eps),
        notes=f"first {m} rounds go to player 1 (T/gamma={float(exact_share):g})",
    )


_VALUE_LAWS = ("uniform", "constant", "beta")
_BUDGET_RULES = ("fraction", "constant")


def sample_iid_instance(
    n: int,
    T: int,
    value_law: dict | Sequence[dict] | str = "uniform",
    budget_rule: dict | str = "quarter",
    seed: int = 0,
    format: AuctionFormat | str = AuctionFormat.FIRST_PRICE,
) -> AuctionInstance:
    """Draw an i.i.d. instance.

    ``value_law`` is one spec for all players or a list of per-player specs:
    ``{"kind": "uniform", "low": 0, "high": 1}``, ``{"kind": "constant",
    "value": v}`` or ``{"kind": "beta", "a": .., "b": ..}``.  ``budget_rule``
    is ``{"kind": "fraction", "fraction": f}`` (B_i = f*T) or
    ``{"kind": "constant", "budgets": [...] | value}``; the strings
    ``"quarter"`` and ``"full"`` are shorthands for fractions 1/4 and 1.
    """
    rng = np.random.default_rng(seed)
    laws = value_law if isinstance(value_law, (list, tuple)) else [value_law] * n
    if len(laws) != n:
        raise ValueError(f"{len(laws)} value laws for {n} players")
    values = np.empty((n, T))
    for i, law in enumerate(laws):
        law = {"kind": law} if isinstance(law, str) else dict(law)
        kind = law.get("kind")
        if kind == "uniform":
            values[i] = rng.uniform(law.get("low", 0.0), law.get("high", 1.0), size=T)
        elif kind == "constant":
            values[i] = law.get("value", 1.0)
        elif kind == "beta":
            values[i] = rng.beta(law.get("a", 2.0), law.get("b", 5.0), size=T)
        else:
            raise ValueError(f"unsupported value law {kind!r}; expected one of {_VALUE_LAWS}")
    if np.any(values < 0) or np.any(values > 1):
        raise ValueError("value law produced values outside [0,1]")

    rule = {"quarter": {"kind": "fraction", "fraction": 0.25},
            "full": {"kind": "fraction", "fraction": 1.0}}.get(budget_rule, budget_rule) \
        if isinstance(budget_rule, str) else dict(budget_rule)
    if not isinstance(rule, dict):
        raise ValueError(f"unsupported budget rule {budget_rule!r}")
    if rule.get("kind") == "fraction":
        budgets = [float(rule["fraction"]) * T] * n
    elif rule.get("kind") == "constant":
        b = rule["budgets"]
        budgets = [float(x) for x in b] if isinstance(b, (list, tuple)) else [float(b)] * n
    else:
        raise ValueError(f"unsupported budget rule {rule!r}; expected one of {_BUDGET_RULES}")
    return AuctionInstance(values=tuple(map(tuple, values.tolist())), budgets=tuple(budgets), format=format)
