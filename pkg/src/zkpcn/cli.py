"""Command-line entry point: ``zkpcn [flags]`` runs one experiment plan and writes CSV."""

from __future__ import annotations

import argparse
import sys

from .engine import Mode, SimConfig
from .experiments import (
    AXES,
    INTEGER_AXES,
    METRICS,
    ExperimentPlan,
    NetworkSource,
    PlanError,
    emit_csv,
    expand_range,
    format_csv,
    run_plan,
)
from .workload import WorkloadSpec
from .zk import LatencyModel


def _bounded(kind, lo=None, hi=None):
    def conv(text: str):
        try:
            v = kind(text)
        except ValueError:
            raise argparse.ArgumentTypeError(f"{text!r} is not a valid {kind.__name__}") from None
        if (lo is not None and v < lo) or (hi is not None and v > hi):
            raise argparse.ArgumentTypeError(f"{text} is outside [{lo}, {'inf' if hi is None else hi}]")
        return v

    return conv


def _synthetic(text: str) -> dict[str, int]:
    out = {}
    for item in text.split(","):
        key, sep, val = item.partition("=")
        if not sep or key not in ("n", "channels", "seed"):
            raise argparse.ArgumentTypeError(f"bad synthetic spec {item!r}; use n=<int>,channels=<int>[,seed=<int>]")
        try:
            out[key] = int(val)
        except ValueError:
            raise argparse.ArgumentTypeError(f"{key} must be an integer") from None
    if "n" not in out or "channels" not in out:
        raise argparse.ArgumentTypeError("synthetic spec needs both n and channels")
    return out


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="zkpcn",
        description="Payment-channel-network simulator: LN baseline, zk-PCN and zk-IPCN.",
        epilog="Sweep ranges are start:stop:step and include stop when the step lands on it.",
    )
    p.add_argument("--mode", action="append", choices=[m.value for m in Mode],
                   help="routing mode; repeat to compare several (default zkpcn)")
    src = p.add_mutually_exclusive_group()
    src.add_argument("--topology", metavar="FILE", help="channel-list snapshot")
    src.add_argument("--synthetic", type=_synthetic, metavar="n=N,channels=C",
                     help="synthetic network (default n=1000,channels=2000)")
    p.add_argument("--capacity-factor", type=_bounded(int, 1), default=1)
    p.add_argument("--skewness", type=_bounded(float, 0.0), default=0.0, help="0 means uniform senders")
    p.add_argument("--txs", type=_bounded(int, 1), default=5000)
    p.add_argument("--reachability", type=_bounded(float, 0.0, 1.0), default=1.0)
    p.add_argument("--latency-table", default="builtin", metavar="FILE|builtin|zero")
    p.add_argument("--decoys", type=_bounded(int, 0), default=2)
    p.add_argument("--k-hop", type=_bounded(int, 1), default=2)
    p.add_argument("--ln-retries", type=_bounded(int, 1), default=10)
    p.add_argument("--sweep", nargs=2, metavar=("AXIS", "RANGE"), help=f"axis is one of {', '.join(AXES)}")
    p.add_argument("--metric", choices=METRICS, default="success_rate")
    p.add_argument("--trials", type=_bounded(int, 1), default=10)
    p.add_argument("--seed", type=_bounded(int, 0, 2**64 - 1), default=0)
    p.add_argument("--out", metavar="PATH", help="CSV destination (default stdout)")
    p.add_argument("--workers", type=_bounded(int, 1), default=1, help="processes for independent trials")
    return p


def _latency(spec: str) -> LatencyModel:
    if spec == "builtin":
        return LatencyModel.calibrated()
    if spec == "zero":
        return LatencyModel.zero()
    return LatencyModel.from_file(spec)


def parse_cli(argv: list[str] | None = None) -> ExperimentPlan:
    parser = build_parser()
    a = parser.parse_args(argv)
    try:
        latency = _latency(a.latency_table)
    except (OSError, ValueError) as exc:
        parser.error(f"--latency-table: {exc}")
    base = SimConfig(
        capacity_factor=a.capacity_factor,
        workload=WorkloadSpec(tx_count=a.txs, skewness=a.skewness, seed=a.seed),
        reachability=a.reachability,
        latency_model=latency,
        decoys=a.decoys,
        k_hop=a.k_hop,
        ln_max_retries=a.ln_retries,
        seed=a.seed,
    )
    if a.topology:
        net = NetworkSource(path=a.topology)
    else:
        syn = a.synthetic or {}
        net = NetworkSource(n=syn.get("n", 1000), channels=syn.get("channels", 2000), seed=syn.get("seed", a.seed))
    axis, values = "capacity", (a.capacity_factor,)
    try:
        if a.sweep:
            axis, rng = a.sweep
            if axis not in AXES:
                parser.error(f"--sweep: unknown axis {axis!r}; expected one of {', '.join(AXES)}")
            values = expand_range(rng, integer=axis in INTEGER_AXES)
            if axis == "reachability" and not (0.0 <= values[0] and values[-1] <= 1.0):
                parser.error("--sweep reachability values must lie in [0, 1]")
            if axis in ("capacity", "tx_count", "hash_latency") and values[0] < 1:
                parser.error(f"--sweep {axis} values must be >= 1")
        modes = tuple(Mode(m) for m in dict.fromkeys(a.mode or ["zkpcn"]))
        return ExperimentPlan(base=base, network=net, modes=modes, axis=axis, values=values,
                              trials=a.trials, metric=a.metric, out=a.out, workers=a.workers)
    except PlanError as exc:
        parser.error(str(exc))


def describe(plan: ExperimentPlan) -> str:
    c = plan.base
    lines = [
        f"modes: {','.join(m.value for m in plan.modes)}",
        f"network: {plan.network.describe()}",
        f"sweep: {plan.axis} = {list(plan.values)}",
        f"trials: {plan.trials} (seeds {c.seed}..{c.seed + plan.trials - 1})",
        f"metric: {plan.metric}",
        f"capacity_factor: {c.capacity_factor}",
        f"transactions: {c.workload.tx_count}",
        f"skewness: {c.workload.skewness}",
        f"reachability: {c.reachability}",
        f"latency points (n, ms): {list(c.latency_model.points)}; verifier {c.latency_model.verifier_ms} ms",
        f"decoys: {c.decoys}",
        f"k_hop: {c.k_hop}",
        f"ln_max_retries: {c.ln_max_retries}",
        f"payment_interval_ms: {c.payment_interval_ms}",
        f"out: {plan.out or '-'}",
        f"workers: {plan.workers}",
    ]
    return "\n".join("# " + ln for ln in lines)


def main(argv: list[str] | None = None) -> int:
    plan = parse_cli(argv)
    print(describe(plan), file=sys.stderr)
    try:
        net = plan.network.build()
    except (OSError, ValueError) as exc:
        print(f"zkpcn: cannot load network: {exc}", file=sys.stderr)
        return 1
    rows = run_plan(plan, net)
    if plan.out:
        emit_csv(rows, plan.out)
    else:
        sys.stdout.write(format_csv(rows))
    return 0


if __name__ == "__main__":
    sys.exit(main())
