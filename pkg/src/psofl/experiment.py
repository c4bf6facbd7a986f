"""Wire a validated configuration into data, FL fitness and the two searches."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from pathlib import Path

from . import config as cfgmod
from . import data as datamod
from .federated import FlConfig, centralized_train, run_fl
from .harness import (
    GridSpec,
    PsoParams,
    SearchReport,
    compare,
    evaluations_csv,
    grid_search,
    pso_search,
    surrogate_eval_fn,
    to_json,
    write_atomic,
)
from .lstm import REGRESSION, TrainSpec, task_direction
from .pso import MAXIMIZE, ModelConfig, SearchBounds

log = logging.getLogger(__name__)


@dataclass
class ExperimentResult:
    reports: list[SearchReport]
    comparison: dict | None
    files: list[Path] = field(default_factory=list)


def build_dataset(cp, seed: int) -> datamod.PartitionedDataset:
    use_case = cp.get("experiment", "use_case")
    clients = cp.getint("fl", "num_clients")
    test_fraction = cp.getfloat("fl", "test_fraction")
    lookback = cp.getint("learner", "lookback")
    if use_case == "traffic":
        return datamod.gen_traffic(seed, clients, cp.getint("data", "rows_per_client"), test_fraction, lookback)
    if use_case == "telemetry":
        return datamod.gen_telemetry(
            seed, clients, cp.getint("data", "hours"), cp.getfloat("data", "hazard"), test_fraction, lookback
        )
    ds = datamod.load_csv(cfgmod.csv_path(cp), cp.get("data", "schema"))
    if ds.series_ids is not None and len(set(ds.series_ids.tolist())) == clients:
        return datamod.partition_by_series(ds, test_fraction, lookback)
    return datamod.partition(ds, clients, test_fraction, lookback)


def fl_eval_fn(data, fl: FlConfig, spec: TrainSpec, threads: int = 1):
    """Fitness of a config = test metric of its federated model.

    Results are cached per config, so a config shared by grid and swarm is
    trained once; each search still books its own communication rounds.
    """
    cache = {}

    def evaluate(cfg: ModelConfig):
        if cfg not in cache:
            outcome = run_fl(cfg, fl, data, spec, threads=threads)
            log.info("FL %s -> %.6g", cfg, outcome.fitness.metric)
            cache[cfg] = (outcome.fitness.metric, outcome.rounds_consumed)
        return cache[cfg]

    return evaluate


def run_from_parser(cp, out_dir=None, threads: int = 1) -> ExperimentResult:
    seed = cp.getint("experiment", "seed")
    method = cp.get("experiment", "method")
    surrogate = cp.getboolean("experiment", "surrogate")
    out = Path(out_dir or cp.get("experiment", "output_dir"))
    if not out.is_absolute() and out_dir is None and cp.has_option("experiment", "_base_dir"):
        out = Path(cp.get("experiment", "_base_dir")) / out

    bounds = SearchBounds(**{k: cp.getint("bounds", k) for k in cfgmod.DEFAULTS["bounds"]})
    grid = GridSpec(*(cfgmod.int_list(cp.get("grid", k)) for k in ("layers", "neurons", "epochs")))
    fixed = cp.get("pso", "c1c2_mode") == "fixed"
    pso_seed = cp.get("pso", "seed").strip()
    params = PsoParams(
        pop_size=cp.getint("pso", "pop_size"),
        max_it=cp.getint("pso", "max_it"),
        w=cp.getfloat("pso", "w"),
        c1=cp.getfloat("pso", "c1") if fixed else None,
        c2=cp.getfloat("pso", "c2") if fixed else None,
        seed=int(pso_seed) if pso_seed else seed,
        literal=cp.getboolean("pso", "literal"),
    )
    fl = FlConfig(cp.getint("fl", "num_clients"), cp.getint("fl", "comm_rounds"), model_seed=seed)
    spec = TrainSpec(
        epochs=1,
        learning_rate=cp.getfloat("learner", "lr"),
        batch_size=cp.getint("learner", "batch"),
        shuffle_seed_base=seed,
    )

    data = None
    if surrogate:
        task, direction = "surrogate", MAXIMIZE
        eval_fn = surrogate_eval_fn(fl.comm_rounds)
    else:
        data = build_dataset(cp, seed)
        task, direction = data.task, task_direction(data.task)
        eval_fn = fl_eval_fn(data, fl, spec)

    reports = []
    if method in ("pso", "both"):
        reports.append(pso_search(bounds, params, eval_fn, direction, threads=threads, task=task))
    if method in ("grid", "both"):
        reports.append(grid_search(grid, eval_fn, direction, threads=threads, seed=seed, task=task))
    for report in reports:
        report.check_accounting()

    comparison = None
    if method == "both":
        central = {}
        if data is not None and cp.getboolean("experiment", "centralized"):
            for report in reports:
                cfg = report.best_config
                central[report.method] = centralized_train(cfg, data, fl.comm_rounds * cfg.epochs, seed, spec)
        comparison = compare(reports[0], reports[1], central).to_dict()

    files = [
        write_atomic(
            out / "report.json",
            to_json({"seed": seed, "use_case": cp.get("experiment", "use_case"), "task": task,
                     "reports": [r.to_dict() for r in reports]}),
        ),
        write_atomic(out / "evaluations.csv", evaluations_csv(reports)),
    ]
    if comparison is not None:
        files.append(write_atomic(out / "comparison.json", to_json(comparison)))
    return ExperimentResult(reports, comparison, files)


def summary_line(report: SearchReport) -> str:
    c = report.best_config
    metric = "fitness"
    if report.task == REGRESSION:
        metric = "rmse"
    elif report.task == "classification":
        metric = "accuracy"
    return (
        f"{report.method}: best L={c.layers} N={c.neurons} E={c.epochs} "
        f"{metric}={report.best_fitness:.6g} configs={report.distinct_configs} "
        f"total_rounds={report.total_rounds}"
    )
