"""Parameter sweeps, multi-seed averaging and CSV output."""

from __future__ import annotations

import csv
import io
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .engine import Metrics, Mode, SimConfig, least_squares_slope, run_simulation
from .topology import Network, generate_synthetic, load_snapshot

AXES = ("capacity", "skewness", "reachability", "hash_latency", "tx_count")
INTEGER_AXES = {"capacity", "hash_latency", "tx_count"}
METRICS = ("success_rate", "proof_slope", "proofs_generated", "mean_path_length")
CSV_HEADER = ("axis", "mode", "mean", "std", "trials")
CSV_COMMENT = "# std is the sample standard deviation over trials (n-1 denominator; 0 for a single trial)"


class PlanError(ValueError):
    pass


class TrialError(RuntimeError):
    def __init__(self, axis_value, trial: int, cause: Exception):
        super().__init__(f"axis value {axis_value!r}, trial {trial}: {cause}")
        self.axis_value = axis_value
        self.trial = trial


@dataclass(frozen=True)
class NetworkSource:
    """Either a snapshot file or synthetic-generator parameters."""

    path: str | None = None
    n: int = 1000
    channels: int = 2000
    seed: int = 0

    def build(self) -> Network:
        if self.path is not None:
            return load_snapshot(self.path)
        return generate_synthetic(self.n, self.channels, seed=self.seed)

    def describe(self) -> str:
        if self.path is not None:
            return f"snapshot {self.path}"
        return f"synthetic n={self.n} channels={self.channels} seed={self.seed}"


@dataclass(frozen=True)
class ExperimentPlan:
    base: SimConfig = field(default_factory=SimConfig)
    network: NetworkSource = field(default_factory=NetworkSource)
    modes: tuple[Mode, ...] = (Mode.ZKPCN,)
    axis: str = "capacity"
    values: tuple[float, ...] = (1,)
    trials: int = 10
    metric: str = "success_rate"
    out: str | None = None
    workers: int = 1

    def __post_init__(self):
        if self.axis not in AXES:
            raise PlanError(f"unknown sweep axis {self.axis!r}; expected one of {', '.join(AXES)}")
        if not self.values:
            raise PlanError("sweep needs at least one value")
        if any(b <= a for a, b in zip(self.values, self.values[1:])):
            raise PlanError("sweep values must be strictly increasing")
        if self.trials < 1:
            raise PlanError("trials must be >= 1")
        if self.workers < 1:
            raise PlanError("workers must be >= 1")
        if self.metric not in METRICS:
            raise PlanError(f"unknown metric {self.metric!r}")
        if not self.modes:
            raise PlanError("at least one mode is required")


@dataclass(frozen=True)
class ResultRow:
    axis_value: float
    mode: Mode
    mean: float
    std: float
    trials: int


def expand_range(spec: str, integer: bool = False) -> tuple[float, ...]:
    """``start:stop:step``, stop included when the step lands on it."""
    parts = spec.split(":")
    if len(parts) != 3:
        raise PlanError(f"range {spec!r} is not start:stop:step")
    try:
        start, stop, step = (float(p) for p in parts)
    except ValueError:
        raise PlanError(f"range {spec!r} has a non-numeric bound") from None
    if step <= 0 or stop < start:
        raise PlanError(f"range {spec!r} needs step > 0 and stop >= start")
    count = int(math.floor((stop - start) / step + 1e-9)) + 1
    values = [round(start + i * step, 12) for i in range(count)]
    if integer:
        if any(v != int(v) for v in values):
            raise PlanError(f"range {spec!r} must be integral for this axis")
        return tuple(int(v) for v in values)
    return tuple(values)


def apply_axis(cfg: SimConfig, axis: str, value) -> SimConfig:
    if axis == "capacity":
        return replace(cfg, capacity_factor=int(value))
    if axis == "skewness":
        return replace(cfg, workload=replace(cfg.workload, skewness=float(value)))
    if axis == "reachability":
        return replace(cfg, reachability=float(value))
    if axis == "hash_latency":
        return replace(cfg, hash_times=int(value))
    if axis == "tx_count":
        return replace(cfg, workload=replace(cfg.workload, tx_count=int(value)))
    raise PlanError(f"unknown sweep axis {axis!r}")


def trial_config(plan: ExperimentPlan, mode: Mode, value, trial: int) -> SimConfig:
    seed = plan.base.seed + trial
    cfg = replace(plan.base, mode=mode, seed=seed, workload=replace(plan.base.workload, seed=seed))
    return apply_axis(cfg, plan.axis, value)


def _metric(m: Metrics, name: str) -> float:
    return float(getattr(m, name))


def _run_trial(plan: ExperimentPlan, net: Network, value, mode: Mode, trial: int) -> float:
    try:
        return _metric(run_simulation(trial_config(plan, mode, value, trial), net), plan.metric)
    except Exception as exc:
        raise TrialError(value, trial, exc) from exc


def run_plan(plan: ExperimentPlan, net: Network | None = None) -> list[ResultRow]:
    """Run every (value, mode, trial) cell; with ``plan.workers > 1`` trials run in separate processes.

    Results are keyed by cell, so the rows do not depend on completion order.
    """
    net = net if net is not None else plan.network.build()
    cells = [(v, m, t) for v in plan.values for m in plan.modes for t in range(plan.trials)]
    if plan.workers > 1:
        with ProcessPoolExecutor(max_workers=plan.workers) as pool:
            futures = {c: pool.submit(_run_trial, plan, net, *c) for c in cells}
            results = {c: f.result() for c, f in futures.items()}
    else:
        results = {c: _run_trial(plan, net, *c) for c in cells}
    rows = []
    for value in plan.values:
        for mode in plan.modes:
            arr = np.asarray([results[(value, mode, t)] for t in range(plan.trials)])
            std = float(arr.std(ddof=1)) if len(arr) > 1 else 0.0
            rows.append(ResultRow(value, mode, float(arr.mean()), std, len(arr)))
    return rows


def _fmt(x) -> str:
    if isinstance(x, (int, np.integer)) or (isinstance(x, float) and x.is_integer() and abs(x) < 2**53):
        return str(int(x))
    return repr(float(x))


def format_csv(rows: Sequence[ResultRow]) -> str:
    if not rows:
        raise ValueError("no rows to emit")
    buf = io.StringIO()
    buf.write(CSV_COMMENT + "\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_HEADER)
    for r in rows:
        w.writerow([_fmt(r.axis_value), r.mode.value, repr(float(r.mean)), repr(float(r.std)), r.trials])
    return buf.getvalue()


def emit_csv(rows: Sequence[ResultRow], path: str | Path) -> None:
    text = format_csv(rows)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(text)


def parse_csv(text: str) -> list[ResultRow]:
    lines = [ln for ln in text.splitlines() if ln and not ln.startswith("#")]
    reader = csv.reader(lines)
    header = next(reader)
    if tuple(header) != CSV_HEADER:
        raise ValueError(f"unexpected header {header}")
    rows = []
    for axis, mode, mean, std, trials in reader:
        value = float(axis)
        rows.append(ResultRow(int(value) if value.is_integer() else value, Mode(mode), float(mean), float(std), int(trials)))
    return rows


def emit_slope_report(series: Mapping[str, Sequence[float]], path: str | Path | None = None) -> dict[str, float]:
    """Least-squares slope of each cumulative proof-count series against transaction index."""
    slopes = {}
    for mode, s in series.items():
        if len(s) < 2:
            raise ValueError(f"series for {mode} needs at least two points")
        slopes[mode] = least_squares_slope(s)
    if path is not None:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write("mode,slope\n")
            for mode in sorted(slopes):
                fh.write(f"{mode},{slopes[mode]!r}\n")
    return slopes
