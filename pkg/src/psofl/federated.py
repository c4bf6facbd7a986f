"""Federated averaging over client shards, plus the centralized baseline."""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace

import numpy as np

from .data import PartitionedDataset
from .lstm import EvalResult, LstmModel, TrainSpec, evaluate, init_model, train_local, unflatten
from .pso import ConfigurationError, ModelConfig


class ClientFailure(RuntimeError):
    def __init__(self, client_id, cause):
        super().__init__(f"client {client_id} failed during local training: {cause}")
        self.client_id = client_id
        self.cause = cause


@dataclass(frozen=True)
class FlConfig:
    num_clients: int = 5
    comm_rounds: int = 15
    model_seed: int = 0
    # every client joins every round
    client_fraction: float = 1.0

    def __post_init__(self):
        if self.num_clients < 1:
            raise ConfigurationError(f"num_clients must be >= 1, got {self.num_clients}")
        if self.comm_rounds < 1:
            raise ConfigurationError(f"comm_rounds must be >= 1, got {self.comm_rounds}")
        if self.client_fraction != 1.0:
            raise ConfigurationError("only full client participation (client_fraction=1.0) is supported")


@dataclass
class FlOutcome:
    model: LstmModel
    fitness: EvalResult
    rounds_consumed: int


def config_seed(model_seed: int, cfg: ModelConfig) -> np.random.SeedSequence:
    """Seed for a config's initial weights; identical across search methods."""
    return np.random.SeedSequence([int(model_seed), *(int(v) for v in cfg)])


def weighted_average(vectors, weights) -> np.ndarray:
    """Sum of ``(w_k / sum(w)) * v_k``, accumulated in list order.

    Computed as ``v_0 + sum_k (w_k / sum(w)) * (v_k - v_0)`` so that equal
    vectors average to exactly themselves.
    """
    weights = np.asarray(weights, dtype=np.float64)
    total = weights.sum()
    if total <= 0:
        raise ValueError("weights must sum to a positive value")
    anchor = np.asarray(vectors[0], dtype=np.float64)
    out = anchor.copy()
    for v, w in zip(vectors[1:], weights[1:]):
        out += (w / total) * (np.asarray(v, dtype=np.float64) - anchor)
    return out


def run_round(
    global_model: LstmModel,
    shards,
    spec: TrainSpec,
    round_index: int = 0,
    threads: int = 1,
) -> LstmModel:
    """One broadcast / local-train / aggregate cycle.

    Client ``k`` trains a copy of the global model on its own shard only and
    hands back a parameter vector; the server weights it by shard size.
    Epoch shuffles use global epoch indices ``round_index * E + e``.
    """
    if not shards:
        raise ValueError("a round needs at least one client")
    offset = round_index * spec.epochs

    def client(shard):
        try:
            local = train_local(global_model, shard, spec, epoch_offset=offset, reader=shard.client_id)
        except Exception as exc:
            raise ClientFailure(shard.client_id, exc) from exc
        return local.params, len(shard)

    if threads > 1 and len(shards) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(client, shards))
    else:
        results = [client(s) for s in shards]
    vectors = [r[0] for r in results]
    sizes = [r[1] for r in results]
    averaged = weighted_average(vectors, sizes)
    return unflatten(averaged, global_model.layout, global_model.task)


def run_fl(
    cfg: ModelConfig,
    fl: FlConfig,
    data: PartitionedDataset,
    spec: TrainSpec | None = None,
    threads: int = 1,
) -> FlOutcome:
    """Train config ``cfg`` federatedly for ``fl.comm_rounds`` rounds.

    ``spec.epochs`` is overridden by the config's epoch count.
    """
    if len(data.shards) != fl.num_clients:
        raise ConfigurationError(
            f"partition has {len(data.shards)} shards but num_clients={fl.num_clients}"
        )
    spec = replace(spec or TrainSpec(epochs=cfg.epochs), epochs=int(cfg.epochs))
    model = init_model(cfg, data.input_width, data.output_width, config_seed(fl.model_seed, cfg), data.task)
    for r in range(fl.comm_rounds):
        model = run_round(model, data.shards, spec, round_index=r, threads=threads)
    fitness = evaluate(model, data.test, data.target_scale)
    return FlOutcome(model=model, fitness=fitness, rounds_consumed=fl.comm_rounds)


def centralized_fit(
    cfg: ModelConfig,
    data: PartitionedDataset,
    total_epochs: int,
    seed: int,
    spec: TrainSpec | None = None,
) -> LstmModel:
    """Train one model on the union of all client shards."""
    spec = replace(spec or TrainSpec(epochs=total_epochs), epochs=int(total_epochs))
    model = init_model(cfg, data.input_width, data.output_width, config_seed(seed, cfg), data.task)
    return train_local(model, data.union(), spec)


def centralized_train(
    cfg: ModelConfig,
    data: PartitionedDataset,
    total_epochs: int,
    seed: int,
    spec: TrainSpec | None = None,
) -> EvalResult:
    model = centralized_fit(cfg, data, total_epochs, seed, spec)
    return evaluate(model, data.test, data.target_scale)
