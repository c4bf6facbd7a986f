"""Grid search vs. particle swarm search, with communication-round accounting."""

from __future__ import annotations

import csv
import io
import itertools
import json
import math
import os
import statistics
import tempfile
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, NamedTuple

from scipy import stats

from . import pso
from .pso import MAXIMIZE, ModelConfig, PsoCoefficients, SearchBounds, is_better

DEFAULT_GRID_LAYERS = (1, 2, 3, 4, 5)
DEFAULT_GRID_NEURONS = (1, 10, 25, 50, 75, 100, 150, 200)
DEFAULT_GRID_EPOCHS = tuple(range(1, 50, 5))


class SearchError(RuntimeError):
    def __init__(self, config, cause):
        super().__init__(f"evaluation of {config} failed: {cause!r}")
        self.config = config
        self.cause = cause


@dataclass(frozen=True)
class GridSpec:
    layers: tuple[int, ...] = DEFAULT_GRID_LAYERS
    neurons: tuple[int, ...] = DEFAULT_GRID_NEURONS
    epochs: tuple[int, ...] = DEFAULT_GRID_EPOCHS

    def __post_init__(self):
        for name in ("layers", "neurons", "epochs"):
            values = tuple(int(v) for v in getattr(self, name))
            if not values:
                raise pso.ConfigurationError(f"grid {name} list is empty")
            if list(values) != sorted(set(values)):
                raise pso.ConfigurationError(f"grid {name} must be sorted and unique: {values}")
            object.__setattr__(self, name, values)

    @classmethod
    def dense(cls) -> "GridSpec":
        """5 x 25 x 10 = 1250 configs over the full box."""
        return cls(DEFAULT_GRID_LAYERS, tuple(range(1, 200, 8)), DEFAULT_GRID_EPOCHS)

    def configs(self) -> list[ModelConfig]:
        return [ModelConfig(*c) for c in itertools.product(self.layers, self.neurons, self.epochs)]

    def __len__(self):
        return len(self.layers) * len(self.neurons) * len(self.epochs)

    def within(self, bounds: SearchBounds) -> bool:
        # values are sorted, so the corner configs decide
        lo = ModelConfig(self.layers[0], self.neurons[0], self.epochs[0])
        hi = ModelConfig(self.layers[-1], self.neurons[-1], self.epochs[-1])
        return bounds.contains(lo) and bounds.contains(hi)


class EvaluationRecord(NamedTuple):
    config: ModelConfig
    fitness: float
    rounds: int


@dataclass
class SearchReport:
    method: str
    direction: str
    evaluations: list[EvaluationRecord]
    best_config: ModelConfig
    best_fitness: float
    total_rounds: int
    distinct_configs: int
    comm_rounds: int
    wall_time: float
    seed: int | None = None
    task: str | None = None
    cache_hits: int = 0
    iterations: int | None = None
    extra: dict = field(default_factory=dict)

    def check_accounting(self) -> None:
        """Raise if total rounds differ from distinct configs x rounds per config."""
        if self.total_rounds != self.distinct_configs * self.comm_rounds:
            raise AssertionError(
                f"{self.method}: total_rounds {self.total_rounds} != "
                f"{self.distinct_configs} configs x {self.comm_rounds} rounds"
            )
        if sum(r.rounds for r in self.evaluations) != self.total_rounds:
            raise AssertionError(f"{self.method}: evaluation log does not sum to total_rounds")

    def best_k(self, k: int = 5) -> list[EvaluationRecord]:
        reverse = self.direction == MAXIMIZE
        ranked = sorted(self.evaluations, key=lambda r: r.fitness, reverse=reverse)
        return ranked[:k]

    def to_dict(self) -> dict:
        return {
            "method": self.method,
            "task": self.task,
            "direction": self.direction,
            "seed": self.seed,
            "best_config": list(self.best_config),
            "best_fitness": self.best_fitness,
            "distinct_configs": self.distinct_configs,
            "comm_rounds": self.comm_rounds,
            "total_rounds": self.total_rounds,
            "cache_hits": self.cache_hits,
            "iterations": self.iterations,
            "wall_time": self.wall_time,
            "evaluations": [
                {"config": list(r.config), "fitness": r.fitness, "rounds": r.rounds} for r in self.evaluations
            ],
            **({"extra": self.extra} if self.extra else {}),
        }


EvalFn = Callable[[ModelConfig], tuple[float, int]]


def _unpack(result) -> tuple[float, int]:
    fitness, rounds = result
    return float(getattr(fitness, "value", fitness)), int(rounds)


def _rounds_per_config(records) -> int:
    rounds = {r.rounds for r in records}
    if len(rounds) != 1:
        raise AssertionError(f"inconsistent rounds per configuration: {sorted(rounds)}")
    return rounds.pop()


def grid_search(
    grid: GridSpec,
    eval_fn: EvalFn,
    direction: str = MAXIMIZE,
    threads: int = 1,
    seed: int | None = None,
    task: str | None = None,
) -> SearchReport:
    """Evaluate every grid configuration once, in lexicographic order."""
    configs = grid.configs()
    start = time.perf_counter()

    def one(cfg):
        try:
            return _unpack(eval_fn(cfg))
        except Exception as exc:
            raise SearchError(cfg, exc) from exc

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(one, configs))
    else:
        results = [one(c) for c in configs]
    records = [EvaluationRecord(c, f, r) for c, (f, r) in zip(configs, results)]
    best = records[0]
    for rec in records[1:]:
        if is_better(rec.fitness, best.fitness, direction):
            best = rec
    return SearchReport(
        method="grid",
        direction=direction,
        evaluations=records,
        best_config=best.config,
        best_fitness=best.fitness,
        total_rounds=sum(r.rounds for r in records),
        distinct_configs=len(records),
        comm_rounds=_rounds_per_config(records),
        wall_time=time.perf_counter() - start,
        seed=seed,
        task=task,
    )


@dataclass(frozen=True)
class PsoParams:
    pop_size: int = 5
    max_it: int = 10
    w: float = pso.DEFAULT_INERTIA
    # None -> draw c1, c2 uniformly from [0, 4] once per run
    c1: float | None = None
    c2: float | None = None
    seed: int = 0
    literal: bool = False
    tol: float = pso.DEFAULT_TOLERANCE

    def coefficients(self) -> PsoCoefficients | None:
        if self.c1 is None or self.c2 is None:
            return None
        return PsoCoefficients(self.w, self.c1, self.c2)


def pso_search(
    bounds: SearchBounds,
    params: PsoParams,
    eval_fn: EvalFn,
    direction: str = MAXIMIZE,
    threads: int = 1,
    task: str | None = None,
) -> SearchReport:
    """Run the swarm with a memoised ``eval_fn``; only cache misses cost rounds."""
    records: dict[ModelConfig, EvaluationRecord] = {}

    def fitness(cfg):
        try:
            f, r = _unpack(eval_fn(cfg))
        except Exception as exc:
            raise SearchError(cfg, exc) from exc
        records[cfg] = EvaluationRecord(cfg, f, r)
        return f

    start = time.perf_counter()
    result = pso.run(
        bounds,
        params.coefficients(),
        params.pop_size,
        params.max_it,
        fitness,
        params.seed,
        direction=direction,
        tol=params.tol,
        literal=params.literal,
        memoize=True,
        threads=threads,
        w=params.w,
    )
    # the memo guarantees one eval_fn call per distinct config; keep first-seen order
    order = list(dict.fromkeys(ev.config for ev in result.evaluations))
    evaluated = [records[c] for c in order]
    return SearchReport(
        method="pso",
        direction=direction,
        evaluations=evaluated,
        best_config=result.best_config,
        best_fitness=result.best_fitness,
        total_rounds=sum(r.rounds for r in evaluated),
        distinct_configs=len(evaluated),
        comm_rounds=_rounds_per_config(evaluated),
        wall_time=time.perf_counter() - start,
        seed=params.seed,
        task=task,
        cache_hits=sum(ev.cached for ev in result.evaluations),
        iterations=result.iterations,
        extra={"c1": result.coefficients.c1, "c2": result.coefficients.c2, "w": result.coefficients.w},
    )


def confidence_interval_95(values) -> tuple[float, float, float]:
    """Student-t 95% interval for exactly five values: ``(mean, lo, hi)``."""
    values = [float(v) for v in values]
    if len(values) != 5:
        raise ValueError(f"the interval is defined over exactly 5 values, got {len(values)}")
    mean = statistics.fmean(values)
    s = statistics.stdev(values)
    half = stats.t.ppf(0.975, df=4) * s / math.sqrt(5)
    return mean, mean - half, mean + half


@dataclass
class ComparisonReport:
    pso: SearchReport
    grid: SearchReport
    rounds_ratio: float
    pso_ci: tuple[float, float, float] | None
    grid_ci: tuple[float, float, float] | None
    search_delta: float
    centralized: dict = field(default_factory=dict)
    fl_vs_centralized: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "task": self.pso.task,
            "direction": self.pso.direction,
            "rounds_ratio": self.rounds_ratio,
            "pso_total_rounds": self.pso.total_rounds,
            "grid_total_rounds": self.grid.total_rounds,
            "pso_best_config": list(self.pso.best_config),
            "grid_best_config": list(self.grid.best_config),
            "pso_best_fitness": self.pso.best_fitness,
            "grid_best_fitness": self.grid.best_fitness,
            "search_delta": self.search_delta,
            "pso_best5_ci": list(self.pso_ci) if self.pso_ci else None,
            "grid_best5_ci": list(self.grid_ci) if self.grid_ci else None,
            "centralized": self.centralized,
            "fl_vs_centralized": self.fl_vs_centralized,
        }


def best5_ci(report: SearchReport):
    best = report.best_k(5)
    if len(best) < 5:
        return None
    return confidence_interval_95([r.fitness for r in best])


def compare(pso_report: SearchReport, grid_report: SearchReport, centralized: dict | None = None) -> ComparisonReport:
    """Rounds ratio, best-5 intervals and parity deltas.

    ``centralized`` maps a method name ("pso"/"grid") to the centralized
    fitness of that method's best config; each becomes an FL-minus-
    centralized delta.
    """
    if pso_report.task != grid_report.task:
        raise ValueError(f"task mismatch: {pso_report.task!r} vs {grid_report.task!r}")
    if pso_report.direction != grid_report.direction:
        raise ValueError("reports optimise in different directions")
    centralized = dict(centralized or {})
    deltas = {}
    for method, report in (("pso", pso_report), ("grid", grid_report)):
        if method in centralized:
            value = float(getattr(centralized[method], "value", centralized[method]))
            centralized[method] = value
            deltas[method] = report.best_fitness - value
    return ComparisonReport(
        pso=pso_report,
        grid=grid_report,
        rounds_ratio=pso_report.total_rounds / grid_report.total_rounds,
        pso_ci=best5_ci(pso_report),
        grid_ci=best5_ci(grid_report),
        search_delta=pso_report.best_fitness - grid_report.best_fitness,
        centralized=centralized,
        fl_vs_centralized=deltas,
    )


def surrogate_fitness(cfg) -> float:
    """Closed-form stand-in for FL training; maximised at (3, 100, 25)."""
    layers, neurons, epochs = cfg
    return -((layers - 3) ** 2 + (neurons / 40 - 2.5) ** 2 + (epochs / 10 - 2.5) ** 2)


def surrogate_eval_fn(comm_rounds: int = 15, fitness=surrogate_fitness) -> EvalFn:
    return lambda cfg: (fitness(cfg), comm_rounds)


# --- output -----------------------------------------------------------------

CSV_HEADER = ("L", "N", "E", "fitness", "rounds", "method", "seed")


def evaluations_csv(reports) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_HEADER)
    for report in reports:
        for r in report.evaluations:
            writer.writerow(
                [*r.config, "%.9g" % r.fitness, r.rounds, report.method, "" if report.seed is None else report.seed]
            )
    return buf.getvalue()


def _json_default(obj):
    if hasattr(obj, "item"):
        return obj.item()
    raise TypeError(f"not JSON serialisable: {type(obj).__name__}")


def to_json(obj) -> str:
    return json.dumps(obj, indent=2, default=_json_default) + "\n"


def write_atomic(path, text: str) -> Path:
    """Write via a temp file in the same directory and rename into place."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", dir=path.parent)
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    return path
