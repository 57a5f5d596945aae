"""Demand-driven proactive task offloading for edge nodes."""

from .aggregation import AggregationWeights, DemandIndicator, demand_indicator, di_past, wgm
from .baseline import PeerNode, etsi_baseline, etsi_offload, etsi_ranks
from .demand_store import DemandWindow, TaskDescriptor
from .errors import (
    ConfigError,
    InsufficientHistoryError,
    NonFiniteGradientError,
    TraceFormatError,
    TrainingDivergenceError,
    ValidationError,
    WeightFormatError,
)
from .metrics import TauStats, bottom_k, delta_metric, omega_metric, tau_metric
from .rewards import RewardConfig, TaskScore, demand_reward, load_reward, offloading_degree, rank_and_select, \
    sigmoid_factor
from .simulator import CostModel, ExperimentConfig, MetricsReport, decision_cost, run_experiment
from .trace_io import DemandTrace, load_csv, normalize, synthesize

__version__ = "0.1.0"
