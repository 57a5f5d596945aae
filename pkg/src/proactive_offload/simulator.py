"""Single-node offloading experiments.

One focal node replays a demand trace into its window while tasks arrive in
and leave its FIFO queue. Once the window is full and the queue passes the
trigger fraction of its capacity, the decision pipeline scores every queued
task and offloads the last ``k``. Peers exist only as cost-model endpoints and
as candidates for the ETSI baseline, which offloads demand-blind.
"""

from __future__ import annotations

import logging
import time
from collections import deque
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Sequence

import numpy as np

from .aggregation import AggregationWeights, wgm
from .baseline import PeerNode, etsi_baseline, etsi_offload
from .demand_store import DemandWindow
from .errors import ConfigError, ValidationError
from .lstm import LstmParams, TrainingConfig, load_params, predict_matrix, supervised_windows, train
from .metrics import delta_metric, omega_metric, tau_metric
from .rewards import RewardConfig, offloading_degree, rank_and_select
from .trace_io import DemandTrace, load_csv, pool_trace, surrogate_energy_table, synthesize, normalize

log = logging.getLogger(__name__)

TRACE_SOURCES = ("csv", "surrogate", "synthetic")


@dataclass(frozen=True)
class CostModel:
    """Abstract time units. Local: queue wait + execution. Remote: migration + remote wait + response."""

    execution: float = 1.0
    migration: float = 2.0
    remote_waiting: float = 0.5
    response: float = 0.5

    def __post_init__(self):
        for name in ("execution", "migration", "remote_waiting", "response"):
            if getattr(self, name) < 0:
                raise ValidationError(f"cost component {name} must be >= 0")


def decision_cost(waiting: float, model: CostModel, choice: str) -> float:
    """Cost of running a task locally after ``waiting`` time units, or of offloading it."""
    if choice == "local":
        return waiting + model.execution
    if choice == "offload":
        return model.migration + model.remote_waiting + model.response
    raise ValidationError(f"choice must be 'local' or 'offload', got {choice!r}")


@dataclass(frozen=True)
class TraceSpec:
    source: str = "surrogate"
    path: str | None = None
    column: str = "Y1"
    kind: str = "ar1"
    params: tuple = ()  # synthetic generator params as (key, value) pairs
    spread: float = 0.01
    persistence: float = 0.9

    def __post_init__(self):
        if self.source not in TRACE_SOURCES:
            raise ConfigError(f"trace source must be one of {TRACE_SOURCES}")
        if self.source == "csv" and not self.path:
            raise ConfigError("a csv trace needs a path")

    def build(self, task_count: int, horizon: int, seed: int) -> DemandTrace:
        if self.source == "csv":
            if not Path(self.path).is_file():
                raise ConfigError(f"trace file not found: {self.path}")
            return load_csv(self.path, self.column, task_count=task_count, horizon=horizon, seed=seed,
                            spread=self.spread, persistence=self.persistence)
        if self.source == "surrogate":
            pool = normalize([row[self.column] for row in _surrogate_rows()])
            return pool_trace(pool, task_count, horizon, seed, self.spread, self.persistence,
                              provenance=f"surrogate-energy[{self.column}] seed={seed}")
        return synthesize(self.kind, dict(self.params), horizon, task_count, seed)


_SURROGATE: list | None = None


def _surrogate_rows() -> list:
    global _SURROGATE
    if _SURROGATE is None:
        _SURROGATE = surrogate_energy_table()
    return _SURROGATE


@dataclass(frozen=True)
class ForecasterSpec:
    weights: str | None = None  # weight file; None trains inline
    training: TrainingConfig = field(default_factory=TrainingConfig)
    train_tasks: int = 200
    train_horizon: int = 60
    max_samples: int = 2000
    seed_offset: int = 1_000_003


@dataclass(frozen=True)
class ExperimentConfig:
    w: int = 50
    e_total: int = 500
    m: int | None = None  # tasks at the node; defaults to e_total
    k: int = 3
    w_past: float = 0.7
    t_di: float = 0.5
    reward: RewardConfig = field(default_factory=RewardConfig)
    repetitions: int = 100
    seed: int = 0
    trace: TraceSpec = field(default_factory=TraceSpec)
    forecaster: ForecasterSpec = field(default_factory=ForecasterSpec)
    l: int = 3
    extra_epochs: int = 20
    arrival_prob: float = 0.2
    service_fraction: float = 0.01
    trigger_fraction: float = 0.8
    decisions_per_repetition: int = 1
    lambda_scale: float = 2.0  # loads ~ U[0, lambda_scale * t_lambda]
    peer_count: int = 5
    cost: CostModel = field(default_factory=CostModel)

    def __post_init__(self):
        m = self.e_total if self.m is None else self.m
        object.__setattr__(self, "m", m)
        # the queue holds each node task at most once, so capacity defaults to M
        if self.reward.q_max != m or self.reward.t_di != self.t_di:
            object.__setattr__(self, "reward", replace(self.reward, q_max=m, t_di=self.t_di))
        self.validate()

    def validate(self) -> None:
        if self.w < 1:
            raise ConfigError("window size W must be >= 1")
        if not 1 <= self.k <= self.m <= self.e_total:
            raise ConfigError(f"need 1 <= k <= M <= E, got k={self.k}, M={self.m}, E={self.e_total}")
        if self.repetitions < 1:
            raise ConfigError("repetitions must be >= 1")
        if self.l < 1 or self.l > self.w:
            raise ConfigError(f"l={self.l} must lie in [1, W={self.w}]")
        if self.forecaster.training.span >= self.w:
            raise ConfigError(f"forecaster input span {self.forecaster.training.span} must be below W={self.w}")
        if not 0 < self.arrival_prob <= 1:
            raise ConfigError("arrival_prob must lie in (0, 1]")
        if not 0 <= self.trigger_fraction < 1:
            raise ConfigError("trigger_fraction must lie in [0, 1)")
        if self.decisions_per_repetition < 1:
            raise ConfigError("decisions_per_repetition must be >= 1")
        if self.lambda_scale <= 0:
            raise ConfigError("lambda_scale must be positive")
        try:
            AggregationWeights(self.w_past)
        except ValidationError as exc:
            raise ConfigError(str(exc)) from None

    @property
    def horizon(self) -> int:
        return self.w + self.extra_epochs

    @property
    def experiment_id(self) -> str:
        return (f"W{self.w}_E{self.e_total}_M{self.m}_k{self.k}_wp{self.w_past:g}"
                f"_tdi{self.t_di:g}_r2-{self.reward.r2:g}")


@dataclass
class NodeState:
    node_id: str
    window: DemandWindow
    q_max: int
    queue: deque = field(default_factory=deque)
    executed_count: int = 0
    offloaded_count: int = 0

    def enqueue(self, task: int) -> None:
        if len(self.queue) >= self.q_max:
            raise ValidationError("queue is full")
        self.queue.append(task)

    def serve(self, n: int) -> list[int]:
        done = [self.queue.popleft() for _ in range(min(n, len(self.queue)))]
        self.executed_count += len(done)
        return done

    def offload(self, tasks: Sequence[int]) -> None:
        gone = set(tasks)
        self.queue = deque(t for t in self.queue if t not in gone)
        self.offloaded_count += len(gone)


@dataclass
class Decision:
    repetition: int
    epoch: int
    candidates: int
    seconds: float
    offloaded: list
    offloaded_di: list
    etsi_offloaded: list
    etsi_di: list
    etsi_peer: int
    omega: float
    cost_local: float
    cost_offload: float


@dataclass
class RepetitionResult:
    repetition: int
    tau_mean: float
    delta: float
    omega: float
    delta_etsi: float
    decisions: list[Decision]


@dataclass
class MetricsReport:
    experiment_id: str
    config: ExperimentConfig
    tau: float
    tau_per_task: float
    tau_samples: tuple[float, ...]
    delta: float
    omega: float
    delta_etsi: float
    repetitions: list[RepetitionResult]
    trace_provenance: str = ""

    @property
    def offload_sets(self) -> list[list]:
        return [d.offloaded for r in self.repetitions for d in r.decisions]


_FORECASTERS: dict = {}


def forecaster_for(config: ExperimentConfig) -> LstmParams:
    """Load the configured weights or pre-train once on a separate trace draw."""
    spec = config.forecaster
    if spec.weights:
        path = Path(spec.weights)
        if not path.is_file():
            raise ConfigError(f"weight file not found: {path}")
        params = load_params(path.read_bytes())
        if params.input_len + params.input_dim - 1 >= config.w:
            raise ConfigError("forecaster input span must be below W")
        return params
    key = (config.trace, spec, config.seed)
    if key not in _FORECASTERS:
        _FORECASTERS[key] = pretrain(config.trace, spec, config.seed)[0]
    return _FORECASTERS[key]


def pretrain(trace: TraceSpec, spec: ForecasterSpec, seed: int) -> tuple[LstmParams, list[float]]:
    """Train on a trace draw that no repetition uses."""
    tc = spec.training
    data = trace.build(spec.train_tasks, spec.train_horizon, seed + spec.seed_offset)
    X, y = supervised_windows(data.series, tc.input_len, tc.input_dim)
    if len(X) > spec.max_samples:
        pick = np.random.default_rng(seed + spec.seed_offset).choice(len(X), spec.max_samples, replace=False)
        X, y = X[np.sort(pick)], y[np.sort(pick)]
    log.info("training forecaster on %d windows for %d epochs", len(X), tc.epochs)
    return train((X, y), tc)


def _decide(config: ExperimentConfig, params: LstmParams, weights: AggregationWeights, node: NodeState,
            lam: np.ndarray, ids: list) -> tuple[list, dict]:
    """The timed decision pipeline: forecast, aggregate, reward, rank and select."""
    cands = np.fromiter(node.queue, dtype=int, count=len(node.queue))
    span = max(config.l, params.input_len + params.input_dim - 1)
    recent = node.window.matrix(span)[:, cands].T
    df = predict_matrix(params, recent)
    past = recent[:, span - config.l:]
    qlen = len(node.queue)
    scores = []
    di_final = {}
    for j, task in enumerate(cands):
        dp = float(past[j].mean())
        dif = wgm(dp, float(df[j]), weights)
        di_final[int(task)] = dif
        scores.append(offloading_degree(ids[task], dif, float(lam[task]), qlen, config.reward))
    _, chosen = rank_and_select(scores, config.k)
    return chosen, di_final


def _run_repetition(config: ExperimentConfig, params: LstmParams, rep: int) -> tuple[RepetitionResult, str]:
    rng = np.random.default_rng([config.seed, rep])
    trace_seed = int(rng.integers(2**31))
    trace = config.trace.build(config.m, config.horizon, trace_seed)
    ids = list(range(config.m))
    lam = rng.uniform(0.0, config.lambda_scale * config.reward.t_lambda, config.m)
    peers = [PeerNode(*p) for p in zip(rng.uniform(0, 100, config.peer_count),
                                       rng.uniform(0, 10, config.peer_count),
                                       rng.integers(1, 11, config.peer_count))]
    popularity = trace.series.mean(axis=1)
    weights = AggregationWeights(config.w_past)
    node = NodeState("n0", DemandWindow(config.w, ids), q_max=config.m)
    in_queue = np.zeros(config.m, dtype=bool)
    service = max(1, int(round(config.service_fraction * config.m)))
    decisions: list[Decision] = []

    for t in range(config.horizon):
        node.window.record_array(trace.epoch(t))
        idle = np.flatnonzero(~in_queue)
        arrivals = idle[rng.random(len(idle)) < config.arrival_prob]
        for task in rng.permutation(arrivals):
            node.enqueue(int(task))
        in_queue[arrivals] = True
        for task in node.serve(service):
            in_queue[task] = False
        if not (node.window.is_full and len(node.queue) > config.trigger_fraction * node.q_max):
            continue
        if len(node.queue) < config.k:
            continue
        queue_before = list(node.queue)
        start = time.perf_counter()
        chosen, di_final = _decide(config, params, weights, node, lam, ids)
        seconds = time.perf_counter() - start

        etsi_tasks = etsi_offload(queue_before, config.k)
        cand_pop = {i: float(popularity[i]) for i in queue_before}
        position = {task: pos for pos, task in enumerate(queue_before)}
        cost_local = np.mean([decision_cost(position[c] * config.cost.execution / service, config.cost, "local")
                              for c in chosen])
        decisions.append(Decision(
            repetition=rep, epoch=t, candidates=len(queue_before), seconds=seconds,
            offloaded=list(chosen), offloaded_di=[di_final[c] for c in chosen],
            etsi_offloaded=etsi_tasks, etsi_di=[di_final[c] for c in etsi_tasks],
            etsi_peer=etsi_baseline(peers),
            omega=omega_metric(chosen, cand_pop, config.k),
            cost_local=float(cost_local),
            cost_offload=decision_cost(0.0, config.cost, "offload"),
        ))
        node.offload(chosen)
        in_queue[list(chosen)] = False
        if len(decisions) == config.decisions_per_repetition:
            break

    if not decisions:
        raise ConfigError(
            f"repetition {rep}: the queue never passed the trigger within {config.horizon} epochs"
        )
    result = RepetitionResult(
        repetition=rep,
        tau_mean=tau_metric([d.seconds for d in decisions]).mean,
        delta=delta_metric([d.offloaded_di for d in decisions], config.t_di, config.k),
        omega=float(np.mean([d.omega for d in decisions])),
        delta_etsi=delta_metric([d.etsi_di for d in decisions], config.t_di, config.k),
        decisions=decisions,
    )
    return result, trace.provenance


def run_experiment(config: ExperimentConfig, params: LstmParams | None = None) -> MetricsReport:
    if params is None:
        params = forecaster_for(config)
    reps = []
    provenance = ""
    for rep in range(config.repetitions):
        result, provenance = _run_repetition(config, params, rep)
        reps.append(result)
    decisions = [d for r in reps for d in r.decisions]
    tau = tau_metric([d.seconds for d in decisions], float(np.mean([d.candidates for d in decisions])))
    return MetricsReport(
        experiment_id=config.experiment_id,
        config=config,
        tau=tau.mean,
        tau_per_task=tau.per_task,
        tau_samples=tau.samples,
        delta=float(np.mean([r.delta for r in reps])),
        omega=float(np.mean([r.omega for r in reps])),
        delta_etsi=float(np.mean([r.delta_etsi for r in reps])),
        repetitions=reps,
        trace_provenance=provenance,
    )
