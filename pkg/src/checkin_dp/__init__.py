"""Privacy amplification accounting and simulation for DP-SGD with random check-ins."""

from checkin_dp.accountant import (
    AvgParams,
    BinSizes,
    CompositionSchedule,
    FixedWindowParams,
    InadmissibleDeltaError,
    LocalSpec,
    PrivacyPair,
    advanced_composition,
    avg_bound,
    bin_sgd_bound,
    epoch_composition,
    fixed_window_bound,
    fixed_window_simplified,
    het_composition,
    kov_composition,
    replacement_bound,
    shuffle_bound_new,
    shuffle_bound_old,
    sliding_window_bound,
    swap_bound,
)
from checkin_dp.learning import ERMDataset, ERMTask, excess_risk
from checkin_dp.protocols import CheckInPolicy, ProtocolTrace, SimConfig, run_protocol, run_trials
from checkin_dp.randomizers import DiscreteMechanism, GradientRandomizer, randomized_response

__all__ = [
    "AvgParams", "BinSizes", "CheckInPolicy", "CompositionSchedule", "DiscreteMechanism",
    "ERMDataset", "ERMTask", "FixedWindowParams", "GradientRandomizer",
    "InadmissibleDeltaError", "LocalSpec", "PrivacyPair", "ProtocolTrace", "SimConfig",
    "advanced_composition", "avg_bound", "bin_sgd_bound", "epoch_composition", "excess_risk",
    "fixed_window_bound", "fixed_window_simplified", "het_composition", "kov_composition",
    "randomized_response", "replacement_bound", "run_protocol", "run_trials",
    "shuffle_bound_new", "shuffle_bound_old", "sliding_window_bound", "swap_bound",
]
