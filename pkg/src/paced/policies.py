"""Bidding policies.

A policy implements three hooks called by ``engine.run_simulation``:
``start(player, instance, rng)``, ``bid(obs) -> raw bid`` and
``observe(record, player)`` after each round.

The learner discretizes the shading multiplier into arms ``k/K`` and runs a
full-information Lagrangian exponential-weights algorithm: multiplicative
weights on ``r - mu*c`` plus projected dual ascent on the spend rate.
Rewards and costs per arm follow the strict-exceed reduction, so arm 0
(multiplier 0) is the null arm with zero reward and cost.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .engine import PolicyObservation, RoundRecord

MAX_ARMS = 1 << 22


class Policy:
    player: int = 0

    def start(self, player: int, instance, rng: np.random.Generator) -> None:
        self.player = player

    def bid(self, obs: PolicyObservation):
        raise NotImplementedError

    def observe(self, record: RoundRecord, player: int) -> None:
        pass


def fixed_multiplier_bid(obs: PolicyObservation, lam):
    if not 0 <= lam <= 1:
        raise ValueError(f"multiplier must lie in [0,1], got {lam!r}")
    return min(lam * obs.own_value, obs.remaining_budget)


class FixedMultiplier(Policy):
    def __init__(self, lam):
        if not 0 <= lam <= 1:
            raise ValueError(f"multiplier must lie in [0,1], got {lam!r}")
        self.lam = lam

    def bid(self, obs):
        return fixed_multiplier_bid(obs, self.lam)

    def __repr__(self):
        return f"FixedMultiplier({self.lam!r})"


class ScriptPolicy(Policy):
    """Replays a prescribed bid per round verbatim."""

    def __init__(self, bids: Sequence):
        self.bids = tuple(bids)

    def bid(self, obs):
        return self.bids[obs.t]


def strictly_wins(bid, d):
    """Win indicator of the reduction; works elementwise on arrays."""
    return bid > d


def reduction_reward_cost(lam, v, d):
    """Reward and cost of multiplier ``lam`` against competing bid ``d``."""
    if strictly_wins(lam * v, d):
        return (1 - lam) * v, lam * v
    return 0 * v, 0 * v


@dataclass(frozen=True)
class ArmGrid:
    K: int

    def __post_init__(self):
        if self.K < 1:
            raise ValueError("need K >= 1")

    @property
    def multipliers(self) -> np.ndarray:
        return np.arange(self.K + 1) / self.K


@dataclass
class BwKLearnerState:
    grid: ArmGrid
    budget_total: float
    T: int
    eta_primal: float
    eta_dual: float
    delta: float = 0.05
    feedback: str = "full"
    log_weights: np.ndarray = field(default=None, repr=False)
    dual: float = 0.0
    budget_spent: float = 0.0
    rew: float = 0.0
    stopped: bool = False
    stop_round: Optional[int] = None
    explore: float = 0.0
    last_arm: int = 0
    last_probs: np.ndarray = field(default=None, repr=False)
    rounds_seen: int = 0

    @property
    def rho(self) -> float:
        return self.budget_total / self.T

    @property
    def dual_cap(self) -> float:
        return self.T / self.budget_total if self.budget_total > 0 else 0.0

    def probabilities(self) -> np.ndarray:
        lw = self.log_weights - self.log_weights.max()
        w = np.exp(lw)
        p = w / w.sum()
        if self.explore > 0:
            p = (1 - self.explore) * p + self.explore / len(p)
        return p

    @property
    def weights(self) -> np.ndarray:
        """Normalized weights (max weight is 1); strictly positive."""
        return np.exp(self.log_weights - self.log_weights.max())


def make_learner(T: int, budget: float, K: Optional[int] = None, delta: float = 0.05,
                 feedback: str = "full") -> BwKLearnerState:
    K = T * T if K is None else int(K)
    if K + 1 > MAX_ARMS:
        raise ValueError(f"arm grid of {K + 1} arms is too large; pass a smaller K")
    if feedback not in ("full", "bandit"):
        raise ValueError(f"feedback must be 'full' or 'bandit', got {feedback!r}")
    arms = K + 1
    state = BwKLearnerState(
        grid=ArmGrid(K),
        budget_total=float(budget),
        T=T,
        eta_primal=math.sqrt(math.log(arms) / T),
        eta_dual=1.0 / math.sqrt(T),
        delta=delta,
        feedback=feedback,
        log_weights=np.zeros(arms),
    )
    if feedback == "bandit":
        state.explore = min(1.0, math.sqrt(arms * math.log(arms) / T))
        state.eta_primal = math.sqrt(math.log(arms) / (T * arms))
    if budget <= 0:
        state.stopped = True
        state.stop_round = 0
    return state


def bwk_select_arm(state: BwKLearnerState, rng: np.random.Generator) -> int:
    if state.stopped:
        state.last_arm = 0
        return 0
    p = state.probabilities()
    k = int(rng.choice(len(p), p=p))
    state.last_arm, state.last_probs = k, p
    return k


def bwk_update(state: BwKLearnerState, v: float, d: float) -> BwKLearnerState:
    """Fold in round feedback ``(v, d)`` for the arm drawn last.

    Mutates and returns ``state``.  Once the knapsack would be overdrawn the
    learner stops for good and further rounds are no-ops.
    """
    t = state.rounds_seen
    state.rounds_seen += 1
    if state.stopped:
        return state
    k = state.last_arm
    lam = state.grid.multipliers
    v, d = float(v), float(d)
    r_k, c_k = reduction_reward_cost(float(lam[k]), v, d)

    if state.feedback == "full":
        win = strictly_wins(lam * v, d)
        r = np.where(win, (1.0 - lam) * v, 0.0)
        c = np.where(win, lam * v, 0.0)
        state.log_weights += state.eta_primal * (r - state.dual * c)
    else:
        p_k = state.last_probs[k] if state.last_probs is not None else 1.0
        state.log_weights[k] += state.eta_primal * (r_k - state.dual * c_k) / p_k
    # keep the log-weights anchored so they cannot drift to overflow
    state.log_weights -= state.log_weights.max()

    state.dual = min(max(state.dual + state.eta_dual * (c_k - state.rho), 0.0), state.dual_cap)

    if state.budget_spent + c_k > state.budget_total:
        state.stopped = True
        state.stop_round = t
    else:
        state.budget_spent += c_k
        state.rew += r_k
    return state


def bwk_policy_bid(obs: PolicyObservation, state: BwKLearnerState, rng: np.random.Generator):
    k = bwk_select_arm(state, rng)
    return min(state.grid.multipliers[k] * obs.own_value, obs.remaining_budget)


class BwKPolicy(Policy):
    """Bidder driven by the arm-grid learner.

    ``K`` defaults to ``T**2``.  After the run, ``state.rew`` is the BwK-side
    reward and ``arms`` the arm drawn in every round.
    """

    def __init__(self, K: Optional[int] = None, delta: float = 0.05, feedback: str = "full"):
        self.K = K
        self.delta = delta
        self.feedback = feedback
        self.state: Optional[BwKLearnerState] = None
        self.arms: list[int] = []

    def start(self, player, instance, rng):
        super().start(player, instance, rng)
        self.rng = rng
        self.state = make_learner(instance.T, float(instance.budgets[player]), self.K, self.delta, self.feedback)
        self.arms = []

    def bid(self, obs):
        b = bwk_policy_bid(obs, self.state, self.rng)
        self.arms.append(self.state.last_arm)
        return b

    def observe(self, record, player):
        bwk_update(self.state, record.values[player], record.d[player])


def policy_from_spec(spec: dict) -> Policy:
    """Build a policy from its config form.

    ``{"kind": "fixed", "lambda": 0.5}``, ``{"kind": "script", "bids": [...]}``
    or ``{"kind": "bwk", "k": 100, "delta": 0.05, "feedback": "full"}``.
    """
    kind = spec.get("kind")
    if kind == "fixed":
        return FixedMultiplier(float(spec["lambda"]))
    if kind == "script":
        return ScriptPolicy([float(b) for b in spec["bids"]])
    if kind == "bwk":
        return BwKPolicy(K=spec.get("k"), delta=float(spec.get("delta", 0.05)),
                         feedback=spec.get("feedback", "full"))
    raise ValueError(f"unknown policy kind {kind!r}")
