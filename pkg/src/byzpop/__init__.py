"""Byzantine-resilient binary-majority population protocols: simulation
engine, adversary strategies, and Monte-Carlo experiment harness."""

from .core import (
    ConfigError,
    NodeState,
    Population,
    ProtocolParams,
    Tally,
    Value,
    build_initial,
    make_params,
    opposite,
    tally,
)
from .common import PhaseKind, PhaseSchedule, phase_kind, subphase_of
from .scheduler import ExchangePair, next_pair, parse_seed, trial_seeds
from .adversary import (
    AdversaryClass,
    AdversaryView,
    PresentedState,
    Strategy,
    STRATEGY_NAMES,
    make_strategy,
)
from .engine import (
    Outcome,
    PROTOCOLS,
    RunResult,
    default_max_exchanges,
    run,
    unwrapped_counters,
)
from .combined import apply_bias, biased_coin, coin_level, combined_decide

__version__ = "0.1.0"

__all__ = [
    "AdversaryClass",
    "AdversaryView",
    "ConfigError",
    "ExchangePair",
    "NodeState",
    "Outcome",
    "PROTOCOLS",
    "PhaseKind",
    "PhaseSchedule",
    "Population",
    "PresentedState",
    "ProtocolParams",
    "RunResult",
    "STRATEGY_NAMES",
    "Strategy",
    "Tally",
    "Value",
    "apply_bias",
    "biased_coin",
    "build_initial",
    "coin_level",
    "combined_decide",
    "default_max_exchanges",
    "make_params",
    "make_strategy",
    "next_pair",
    "opposite",
    "parse_seed",
    "phase_kind",
    "run",
    "subphase_of",
    "tally",
    "trial_seeds",
    "unwrapped_counters",
]
