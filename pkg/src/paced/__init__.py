"""Simulation and certification toolkit for sequential budgeted auctions with pacing bidders."""

from .model import AuctionFormat, AuctionInstance, BenchmarkKind, CounterexampleCertificate, FixedBidScript
from .engine import TieRule, SimulationTrace, run_simulation, replay
from .policies import BwKPolicy, FixedMultiplier, ScriptPolicy
from .hindsight import HindsightProblem, hindsight_utility, sup_hindsight_utility, measure_player
from .welfare import lw_star, realized_lw, verify_main_theorem

__version__ = "0.1.0"

__all__ = [
    "AuctionFormat", "AuctionInstance", "BenchmarkKind", "CounterexampleCertificate", "FixedBidScript",
    "TieRule", "SimulationTrace", "run_simulation", "replay",
    "BwKPolicy", "FixedMultiplier", "ScriptPolicy",
    "HindsightProblem", "hindsight_utility", "sup_hindsight_utility", "measure_player",
    "lw_star", "realized_lw", "verify_main_theorem",
]
