"""Time-series sources, sliding windows and client partitioning.

Two seeded generators stand in for the case-study datasets: an hourly
vehicle-count series per road segment (regression) and hourly machine
telemetry with injected component failures (5-way classification).
``load_csv`` ingests real exports that follow the documented schemas.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from .lstm import CLASSIFICATION, REGRESSION, Samples

DEFAULT_LOOKBACK = 24
FAILURE_LABELS = ("none", "comp1", "comp2", "comp3", "comp4")
TELEMETRY_CHANNELS = ("volt", "rotate", "pressure", "vibration")

TRAFFIC_SCHEMA = ("timestamp", "count")
TELEMETRY_SCHEMA = ("timestamp", "machine_id", "volt", "rotate", "pressure", "vibration", "failure")
SCHEMAS = {"traffic": TRAFFIC_SCHEMA, "telemetry": TELEMETRY_SCHEMA}


class DataError(ValueError):
    pass


@dataclass(frozen=True)
class TimeSeriesDataset:
    """Rows of one or more series; timestamps increase strictly within a series.

    ``series_ids`` is None for a single series. Rows of different series are
    stored contiguously, ordered by (series id, timestamp).
    """

    timestamps: np.ndarray
    features: np.ndarray
    targets: np.ndarray
    task: str
    series_ids: np.ndarray | None = None
    feature_names: tuple[str, ...] = ()

    def __post_init__(self):
        if self.features.ndim != 2 or len(self.features) != len(self.timestamps):
            raise DataError("features must be (rows, width) and match the timestamp count")
        if len(self.targets) != len(self.timestamps):
            raise DataError("targets must have one entry per row")
        for ids in self._series_slices():
            ts = self.timestamps[ids]
            if np.any(np.diff(ts) <= 0):
                raise DataError("timestamps must be strictly increasing within each series")

    def __len__(self):
        return len(self.timestamps)

    @property
    def width(self) -> int:
        return self.features.shape[1]

    def _series_slices(self):
        if self.series_ids is None:
            return [slice(0, len(self.timestamps))]
        out = []
        start = 0
        ids = self.series_ids
        for k in range(1, len(ids) + 1):
            if k == len(ids) or ids[k] != ids[k - 1]:
                out.append(slice(start, k))
                start = k
        return out

    def series(self) -> list["TimeSeriesDataset"]:
        """Split into single-series datasets, in storage order."""
        return [
            TimeSeriesDataset(
                self.timestamps[s], self.features[s], self.targets[s], self.task, None, self.feature_names
            )
            for s in self._series_slices()
        ]


@dataclass
class ClientShard:
    """One client's private training windows.

    ``rows`` holds the source row indices (into the parent dataset) the
    windows were cut from. Every call to ``read`` is logged with the
    caller's identity so tests can verify data never leaves its client.
    """

    client_id: int
    samples: Samples
    rows: np.ndarray
    read_log: list = field(default_factory=list, repr=False)

    def __post_init__(self):
        if len(self.samples) == 0:
            raise DataError(f"client {self.client_id} has no training windows")

    def __len__(self):
        return len(self.samples)

    def read(self, reader=None) -> Samples:
        self.read_log.append(self.client_id if reader is None else reader)
        return self.samples


@dataclass
class PartitionedDataset:
    shards: list[ClientShard]
    test: Samples
    test_rows: np.ndarray
    task: str
    n_rows: int
    target_scale: float = 1.0
    n_classes: int = 1

    @property
    def input_width(self) -> int:
        return self.test.X.shape[2]

    @property
    def output_width(self) -> int:
        return self.n_classes if self.task == CLASSIFICATION else 1

    def union(self) -> Samples:
        """All training windows, concatenated in client order (centralized baseline)."""
        parts = [s.read("server") for s in self.shards]
        return Samples(np.concatenate([p.X for p in parts]), np.concatenate([p.y for p in parts]))


def make_windows(series, targets=None, lookback: int = DEFAULT_LOOKBACK) -> Samples:
    """Cut ``series`` (length, width) into ``length - lookback`` windows.

    Window ``i`` covers rows ``[i, i + lookback)`` and is paired with the
    target of row ``i + lookback``. Without ``targets`` a 1-D series
    predicts its own next value.
    """
    series = np.asarray(series, dtype=np.float64)
    if series.ndim == 1:
        series = series[:, None]
    if targets is None:
        targets = series[:, 0]
    targets = np.asarray(targets)
    length = len(series)
    if lookback < 1:
        raise DataError(f"lookback must be >= 1, got {lookback}")
    if length <= lookback:
        raise DataError(f"series of length {length} is too short for lookback {lookback}")
    view = np.lib.stride_tricks.sliding_window_view(series, lookback, axis=0)[: length - lookback]
    X = np.ascontiguousarray(view.transpose(0, 2, 1))
    return Samples(X, targets[lookback:].copy())


def _windows_ending_in(features, targets, lo, hi, lookback):
    """Windows whose target row lies in [lo, hi); history may precede ``lo``."""
    first = max(lo, lookback)
    if first >= hi:
        return Samples(np.empty((0, lookback, features.shape[1])), targets[:0].copy()), np.arange(0)
    s = make_windows(features[first - lookback:hi], targets[first - lookback:hi], lookback)
    return s, np.arange(first - lookback, hi)


def _standardize(datasets_train_rows, features_list, targets_list, task):
    train_feats = np.concatenate(datasets_train_rows)
    mean = train_feats.mean(axis=0)
    std = train_feats.std(axis=0)
    std[std == 0] = 1.0
    feats = [(f - mean) / std for f in features_list]
    if task == REGRESSION:
        # targets share the scale of the first feature column (the series itself)
        tmean, tstd = mean[0], std[0]
        targs = [(t - tmean) / tstd for t in targets_list]
        return feats, targs, float(tstd)
    return feats, targets_list, 1.0


def _partition_blocks(blocks, task, test_fraction, lookback, n_rows, n_classes):
    """Build shards from a list of (features, targets, global_row_offset) blocks."""
    if not 0.0 <= test_fraction < 1.0:
        raise DataError(f"test_fraction must lie in [0, 1), got {test_fraction}")
    cuts = []
    for feats, _, _ in blocks:
        n_test = int(round(len(feats) * test_fraction))
        n_train = len(feats) - n_test
        if n_train <= lookback:
            raise DataError(
                f"insufficient rows: a shard needs more than {lookback} training rows, got {n_train}"
            )
        cuts.append(n_train)
    feats_std, targs_std, scale = _standardize(
        [b[0][:cut] for b, cut in zip(blocks, cuts)], [b[0] for b in blocks], [b[1] for b in blocks], task
    )
    shards = []
    test_X, test_y, test_rows = [], [], []
    for k, ((_, _, offset), cut, f, t) in enumerate(zip(blocks, cuts, feats_std, targs_std)):
        train = make_windows(f[:cut], t[:cut], lookback)
        shards.append(ClientShard(k, train, offset + np.arange(cut)))
        tst, _ = _windows_ending_in(f, t, cut, len(f), lookback)
        test_X.append(tst.X)
        test_y.append(tst.y)
        test_rows.append(offset + np.arange(cut, len(f)))
    test = Samples(np.concatenate(test_X), np.concatenate(test_y))
    return PartitionedDataset(
        shards=shards,
        test=test,
        test_rows=np.concatenate(test_rows),
        task=task,
        n_rows=n_rows,
        target_scale=scale,
        n_classes=n_classes,
    )


def partition(
    dataset: TimeSeriesDataset, k: int, test_fraction: float = 0.2, lookback: int = DEFAULT_LOOKBACK
) -> PartitionedDataset:
    """Split rows into ``k`` contiguous, disjoint client blocks.

    The tail ``test_fraction`` of each block is held out; the held-out rows
    of all blocks form the global test set. Test windows take their history
    from the rows just before the held-out tail of the same block. Features
    are standardised with statistics of the training rows.
    """
    if k < 1:
        raise DataError(f"k must be >= 1, got {k}")
    n = len(dataset)
    if n < k:
        raise DataError(f"insufficient rows: {n} rows cannot form {k} shards")
    edges = np.linspace(0, n, k + 1).round().astype(int)
    blocks = [
        (dataset.features[a:b], dataset.targets[a:b], a) for a, b in zip(edges[:-1], edges[1:])
    ]
    n_classes = len(FAILURE_LABELS) if dataset.task == CLASSIFICATION else 1
    return _partition_blocks(blocks, dataset.task, test_fraction, lookback, n, n_classes)


def partition_by_series(
    dataset: TimeSeriesDataset, test_fraction: float = 0.2, lookback: int = DEFAULT_LOOKBACK
) -> PartitionedDataset:
    """One client per series (e.g. one per machine or per road segment)."""
    blocks = []
    offset = 0
    for s in dataset.series():
        blocks.append((s.features, s.targets, offset))
        offset += len(s)
    n_classes = len(FAILURE_LABELS) if dataset.task == CLASSIFICATION else 1
    return _partition_blocks(blocks, dataset.task, test_fraction, lookback, len(dataset), n_classes)


def traffic_series(seed: int, n_clients: int, rows_per_client: int) -> TimeSeriesDataset:
    """Hourly vehicle counts for ``n_clients`` road segments.

    count = base + daily sinusoid + weekly sinusoid + segment offset + noise,
    clipped at zero.
    """
    if n_clients < 1:
        raise DataError(f"n_clients must be >= 1, got {n_clients}")
    rng = np.random.default_rng(seed)
    t = np.arange(rows_per_client, dtype=float)
    counts = []
    for _ in range(n_clients):
        offset = rng.uniform(-15.0, 15.0)
        daily_amp = rng.uniform(20.0, 40.0)
        weekly_amp = rng.uniform(5.0, 15.0)
        phase = rng.uniform(0.0, 2 * np.pi)
        noise = rng.normal(0.0, 4.0, size=rows_per_client)
        c = (
            50.0
            + offset
            + daily_amp * np.sin(2 * np.pi * t / 24.0 + phase)
            + weekly_amp * np.sin(2 * np.pi * t / 168.0 + phase / 3.0)
            + noise
        )
        counts.append(np.clip(c, 0.0, None))
    values = np.concatenate(counts)
    timestamps = np.tile(t, n_clients).astype(np.int64)
    ids = np.repeat(np.arange(n_clients), rows_per_client)
    # target of row i is the count itself; windows pair history with the next count
    return TimeSeriesDataset(timestamps, values[:, None], values, REGRESSION, ids, ("count",))


def gen_traffic(
    seed: int,
    n_clients: int,
    rows_per_client: int,
    test_fraction: float = 0.2,
    lookback: int = DEFAULT_LOOKBACK,
) -> PartitionedDataset:
    return partition_by_series(traffic_series(seed, n_clients, rows_per_client), test_fraction, lookback)


def failure_labels(hours: int, failures: list[tuple[int, int]], horizon: int = 24) -> np.ndarray:
    """Label rows ``t - horizon .. t - 1`` before each failure ``(t, component)``.

    Components are numbered 1..4; label 0 means no failure ahead. Where
    windows overlap, the nearest upcoming failure wins.
    """
    labels = np.zeros(hours, dtype=np.int64)
    nearest = np.full(hours, np.iinfo(np.int64).max)
    for t_fail, comp in failures:
        lo = max(0, t_fail - horizon)
        for row in range(lo, min(t_fail, hours)):
            dist = t_fail - row
            if dist < nearest[row]:
                nearest[row] = dist
                labels[row] = comp
    return labels


def rolling_mean(x: np.ndarray, window: int = 24) -> np.ndarray:
    """Trailing mean over up to ``window`` rows (shorter at the start)."""
    x = np.asarray(x, dtype=float)
    csum = np.cumsum(np.concatenate([np.zeros((1,) + x.shape[1:]), x]), axis=0)
    idx = np.arange(1, len(x) + 1)
    lo = np.maximum(idx - window, 0)
    counts = (idx - lo).reshape((-1,) + (1,) * (x.ndim - 1))
    return (csum[idx] - csum[lo]) / counts


_NOMINAL = np.array([170.0, 450.0, 100.0, 40.0])
_SPREAD = np.array([15.0, 50.0, 10.0, 5.0])
# which channel drifts ahead of each component failure, and in which direction
_PRECURSOR = {1: (0, +1.0), 2: (1, -1.0), 3: (2, +1.0), 4: (3, +1.0)}


def telemetry_series(
    seed: int, n_machines: int, hours: int, hazard=0.004, horizon: int = 24
) -> tuple[TimeSeriesDataset, list[list[tuple[int, int]]]]:
    """Hourly telemetry for ``n_machines`` plus the injected failure events.

    Each component fails with a constant per-hour ``hazard`` (scalar or one
    value per component). A failing component makes its precursor channel
    drift during the preceding ``horizon`` hours. Features are the four raw
    channels followed by their 24-hour trailing means.
    """
    if n_machines < 1:
        raise DataError(f"n_machines must be >= 1, got {n_machines}")
    if hours < 2 * horizon:
        raise DataError(f"hours must be >= {2 * horizon}, got {hours}")
    rates = np.broadcast_to(np.asarray(hazard, dtype=float), (4,))
    rng = np.random.default_rng(seed)
    feats, labels, failures_all = [], [], []
    for _ in range(n_machines):
        base = _NOMINAL + rng.normal(0.0, 0.2, 4) * _SPREAD
        drift = np.cumsum(rng.normal(0.0, 0.02, (hours, 4)), axis=0) * _SPREAD
        raw = base + drift + rng.normal(0.0, 1.0, (hours, 4)) * _SPREAD
        failures = []
        # failures need a full precursor window, and components recover after
        t = horizon
        while t < hours:
            fired = np.flatnonzero(rng.random(4) < rates)
            if fired.size:
                comp = int(fired[0]) + 1
                failures.append((t, comp))
                channel, sign = _PRECURSOR[comp]
                ramp = np.linspace(0.0, 3.0, horizon)
                raw[t - horizon:t, channel] += sign * ramp * _SPREAD[channel]
                t += horizon
            else:
                t += 1
        feats.append(np.hstack([raw, rolling_mean(raw, 24)]))
        labels.append(failure_labels(hours, failures, horizon))
        failures_all.append(failures)
    names = TELEMETRY_CHANNELS + tuple(f"{c}_mean_24h" for c in TELEMETRY_CHANNELS)
    ds = TimeSeriesDataset(
        np.tile(np.arange(hours, dtype=np.int64), n_machines),
        np.vstack(feats),
        np.concatenate(labels),
        CLASSIFICATION,
        np.repeat(np.arange(n_machines), hours),
        names,
    )
    return ds, failures_all


def gen_telemetry(
    seed: int,
    n_machines: int,
    hours: int,
    hazard=0.004,
    test_fraction: float = 0.2,
    lookback: int = DEFAULT_LOOKBACK,
) -> PartitionedDataset:
    ds, _ = telemetry_series(seed, n_machines, hours, hazard)
    return partition_by_series(ds, test_fraction, lookback)


def _parse_timestamp(text: str) -> int:
    text = text.strip()
    try:
        return int(text)
    except ValueError:
        pass
    dt = datetime.fromisoformat(text.replace("Z", "+00:00"))
    if dt.tzinfo is None:
        dt = dt.replace(tzinfo=timezone.utc)
    return int(dt.timestamp() // 3600)


def load_csv(path, schema="traffic") -> TimeSeriesDataset:
    """Read a traffic or telemetry export into a ``TimeSeriesDataset``.

    Timestamps may be ISO-8601 or integer epoch hours; both become epoch
    hours. Telemetry rows gain 24-hour trailing means per machine.
    """
    columns = SCHEMAS[schema] if isinstance(schema, str) else tuple(schema)
    kind = "telemetry" if "failure" in columns else "traffic"
    path = Path(path)
    if not path.exists():
        raise DataError(f"{path}: file not found")
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None:
            raise DataError(f"{path}: empty file")
        missing = [c for c in columns if c not in reader.fieldnames]
        if missing:
            raise DataError(f"{path}: missing column(s) {', '.join(missing)}")
        rows = []
        for lineno, rec in enumerate(reader, start=2):
            try:
                ts = _parse_timestamp(rec["timestamp"])
                if kind == "traffic":
                    rows.append((0, ts, (float(rec["count"]),), float(rec["count"])))
                else:
                    label = rec["failure"].strip()
                    if label not in FAILURE_LABELS:
                        raise ValueError(f"unknown failure label {label!r}")
                    vals = tuple(float(rec[c]) for c in TELEMETRY_CHANNELS)
                    rows.append((rec["machine_id"].strip(), ts, vals, FAILURE_LABELS.index(label)))
            except (ValueError, TypeError, AttributeError) as exc:
                raise DataError(f"{path}:{lineno}: malformed row ({exc})") from None
    if not rows:
        raise DataError(f"{path}: no data rows")
    rows.sort(key=lambda r: (r[0], r[1]))
    ids = np.array([r[0] for r in rows])
    timestamps = np.array([r[1] for r in rows], dtype=np.int64)
    feats = np.array([r[2] for r in rows], dtype=float)
    targets = np.array([r[3] for r in rows])
    if kind == "traffic":
        return TimeSeriesDataset(timestamps, feats, targets.astype(float), REGRESSION, None, ("count",))
    _, starts = np.unique(ids, return_index=True)
    bounds = list(np.sort(starts)) + [len(rows)]
    means = np.vstack([rolling_mean(feats[a:b], 24) for a, b in zip(bounds[:-1], bounds[1:])])
    names = TELEMETRY_CHANNELS + tuple(f"{c}_mean_24h" for c in TELEMETRY_CHANNELS)
    return TimeSeriesDataset(
        timestamps, np.hstack([feats, means]), targets.astype(np.int64), CLASSIFICATION, ids, names
    )
