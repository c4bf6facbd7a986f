"""Experiment configuration: INI files, built-in presets, static validation.

Example::

    [experiment]
    use_case = traffic        ; traffic | telemetry | path/to/export.csv
    method = both             ; pso | grid | both
    surrogate = off
    seed = 0
    output_dir = results

    [pso]
    pop_size = 5
    max_it = 10
    w = 0.729
    c1c2_mode = uniform       ; uniform (drawn once per run) | fixed
    literal = false

    [grid]
    layers = 1, 2, 3, 4, 5
    neurons = 1, 10, 25, 50, 75, 100, 150, 200
    epochs = 1, 6, 11, 16, 21, 26, 31, 36, 41, 46

    [fl]
    num_clients = 18
    comm_rounds = 15
    test_fraction = 0.2

    [learner]
    lr = 0.01
    batch = 32
    lookback = 24
"""

from __future__ import annotations

import configparser
from pathlib import Path

from .harness import DEFAULT_GRID_EPOCHS, DEFAULT_GRID_LAYERS, DEFAULT_GRID_NEURONS


def _csv(values) -> str:
    return ", ".join(str(v) for v in values)


DEFAULTS = {
    "experiment": {
        "use_case": "traffic",
        "method": "both",
        "surrogate": "off",
        "seed": "0",
        "output_dir": "results",
        "centralized": "on",
    },
    "data": {
        "rows_per_client": "500",
        "hours": "720",
        "hazard": "0.004",
        "schema": "traffic",
    },
    "bounds": {
        "min_layers": "1",
        "max_layers": "5",
        "min_neurons": "1",
        "max_neurons": "200",
        "min_epochs": "1",
        "max_epochs": "50",
    },
    "pso": {
        "pop_size": "5",
        "max_it": "10",
        "w": "0.729",
        "c1c2_mode": "uniform",
        "c1": "2.0",
        "c2": "2.0",
        "seed": "",
        "literal": "false",
    },
    "grid": {
        "layers": _csv(DEFAULT_GRID_LAYERS),
        "neurons": _csv(DEFAULT_GRID_NEURONS),
        "epochs": _csv(DEFAULT_GRID_EPOCHS),
    },
    "fl": {
        "num_clients": "5",
        "comm_rounds": "15",
        "test_fraction": "0.2",
    },
    "learner": {
        "lr": "0.01",
        "batch": "32",
        "lookback": "24",
    },
}

PRESETS = {
    "table1": {"fl": {"num_clients": "5", "comm_rounds": "15"}},
    "traffic": {"experiment": {"use_case": "traffic"}, "fl": {"num_clients": "18"}},
    "telemetry": {
        "experiment": {"use_case": "telemetry"},
        "fl": {"num_clients": "99"},
        "data": {"hours": "8760"},
    },
    # laptop-sized traffic run: 27-config grid, 5 rounds per config
    "desk": {
        "experiment": {"use_case": "traffic"},
        "data": {"rows_per_client": "500"},
        "bounds": {"max_layers": "3", "min_neurons": "4", "max_neurons": "16", "max_epochs": "3"},
        "grid": {"layers": "1, 2, 3", "neurons": "4, 8, 16", "epochs": "1, 2, 3"},
        "fl": {"num_clients": "5", "comm_rounds": "5"},
    },
}

USE_CASES = ("traffic", "telemetry")
METHODS = ("pso", "grid", "both")


class ConfigError(ValueError):
    pass


def load(path=None, preset: str | None = None) -> configparser.ConfigParser:
    """Defaults, then the preset, then the file; later layers win."""
    cp = configparser.ConfigParser(inline_comment_prefixes=(";", "#"))
    cp.read_dict(DEFAULTS)
    if preset is not None:
        if preset not in PRESETS:
            raise ConfigError(f"unknown preset {preset!r}; choose from {', '.join(PRESETS)}")
        cp.read_dict(PRESETS[preset])
    if path is not None:
        path = Path(path)
        if not path.is_file():
            raise ConfigError(f"config file not found: {path}")
        try:
            with path.open(encoding="utf-8") as fh:
                cp.read_file(fh)
        except configparser.Error as exc:
            raise ConfigError(f"{path}: {exc}") from exc
        cp.set("experiment", "_base_dir", str(path.resolve().parent))
    return cp


def int_list(text: str) -> tuple[int, ...]:
    return tuple(int(v) for v in text.replace(",", " ").split())


def _is_csv_use_case(value: str) -> bool:
    return value not in USE_CASES


def csv_path(cp) -> Path:
    value = Path(cp.get("experiment", "use_case"))
    base = cp.get("experiment", "_base_dir", fallback=None)
    if not value.is_absolute() and base:
        value = Path(base) / value
    return value


def validate_parser(cp: configparser.ConfigParser) -> list[str]:
    """Static checks only; returns human-readable problems (empty = runnable)."""
    problems = []

    for section in cp.sections():
        if section not in DEFAULTS:
            problems.append(f"[{section}]: unknown section")
            continue
        for key in cp[section]:
            if key not in DEFAULTS[section] and not key.startswith("_"):
                problems.append(f"{section}.{key}: unknown key")

    def number(section, key, kind=int):
        try:
            return kind(cp.get(section, key))
        except ValueError:
            problems.append(f"{section}.{key}: expected {'an integer' if kind is int else 'a number'}, "
                            f"got {cp.get(section, key)!r}")
            return None

    def flag(section, key):
        try:
            return cp.getboolean(section, key)
        except ValueError:
            problems.append(f"{section}.{key}: expected on/off, got {cp.get(section, key)!r}")
            return None

    use_case = cp.get("experiment", "use_case")
    if _is_csv_use_case(use_case):
        if not csv_path(cp).is_file():
            problems.append(f"experiment.use_case: {use_case!r} is neither a preset use case "
                            f"({', '.join(USE_CASES)}) nor an existing CSV file")
        if cp.get("data", "schema") not in ("traffic", "telemetry"):
            problems.append("data.schema must be traffic or telemetry")
    method = cp.get("experiment", "method")
    if method not in METHODS:
        problems.append(f"experiment.method must be one of {', '.join(METHODS)}, got {method!r}")
    flag("experiment", "surrogate")
    flag("experiment", "centralized")
    number("experiment", "seed")
    if not cp.get("experiment", "output_dir").strip():
        problems.append("experiment.output_dir must not be empty")

    for key in ("rows_per_client", "hours"):
        v = number("data", key)
        if v is not None and v < 1:
            problems.append(f"data.{key} must be >= 1")
    hazard = number("data", "hazard", float)
    if hazard is not None and not 0.0 <= hazard <= 1.0:
        problems.append("data.hazard must lie in [0, 1]")

    lo_hi = {}
    for dim in ("layers", "neurons", "epochs"):
        lo = number("bounds", f"min_{dim}")
        hi = number("bounds", f"max_{dim}")
        if lo is not None and lo < 1:
            problems.append(f"bounds.min_{dim} must be >= 1")
        if lo is not None and hi is not None and lo > hi:
            problems.append(f"bounds.min_{dim} must not exceed bounds.max_{dim}")
        lo_hi[dim] = (lo, hi)

    pop = number("pso", "pop_size")
    if pop is not None and pop < 1:
        problems.append("pop_size must be ≥ 1")
    max_it = number("pso", "max_it")
    if max_it is not None and max_it < 1:
        problems.append("max_it must be ≥ 1")
    w = number("pso", "w", float)
    if w is not None and not 0.0 < w <= 1.0:
        problems.append(f"pso.w must lie in (0, 1], got {w}")
    mode = cp.get("pso", "c1c2_mode")
    if mode not in ("uniform", "fixed"):
        problems.append(f"pso.c1c2_mode must be uniform or fixed, got {mode!r}")
    for key in ("c1", "c2"):
        v = number("pso", key, float)
        if v is not None and not 0.0 <= v <= 4.0:
            problems.append(f"pso.{key} = {v} is outside the allowed interval [0, 4]")
    if cp.get("pso", "seed").strip():
        number("pso", "seed")
    flag("pso", "literal")

    for dim in ("layers", "neurons", "epochs"):
        try:
            values = int_list(cp.get("grid", dim))
        except ValueError:
            problems.append(f"grid.{dim}: expected a comma-separated list of integers")
            continue
        if not values:
            problems.append(f"grid.{dim} must not be empty")
            continue
        if list(values) != sorted(set(values)):
            problems.append(f"grid.{dim} must be sorted without duplicates")
        lo, hi = lo_hi[dim]
        if lo is not None and hi is not None and (values[0] < lo or values[-1] > hi):
            problems.append(f"grid.{dim} values must lie within bounds [{lo}, {hi}]")

    clients = number("fl", "num_clients")
    if clients is not None and clients < 1:
        problems.append("fl.num_clients must be ≥ 1")
    rounds = number("fl", "comm_rounds")
    if rounds is not None and rounds < 1:
        problems.append("fl.comm_rounds must be ≥ 1")
    tf = number("fl", "test_fraction", float)
    if tf is not None and not 0.0 < tf < 1.0:
        problems.append("fl.test_fraction must lie in (0, 1)")

    lr = number("learner", "lr", float)
    if lr is not None and lr < 0:
        problems.append("learner.lr must be ≥ 0")
    batch = number("learner", "batch")
    if batch is not None and batch < 1:
        problems.append("learner.batch must be ≥ 1")
    lookback = number("learner", "lookback")
    if lookback is not None and lookback < 1:
        problems.append("learner.lookback must be ≥ 1")
    return problems


def validate(path, preset: str | None = None) -> list[str]:
    """Validate a config file; raises ``ConfigError`` if it cannot be read."""
    return validate_parser(load(path, preset))
