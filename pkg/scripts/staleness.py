#!/usr/bin/env python3
"""zk-PCN under proof latency and partial reachability, uniform and skewed senders."""

import argparse
from dataclasses import replace
from pathlib import Path

from zkpcn.engine import Mode, SimConfig
from zkpcn.experiments import ExperimentPlan, NetworkSource, emit_csv, run_plan
from zkpcn.workload import WorkloadSpec
from zkpcn.zk import LatencyModel


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--trials", type=int, default=10)
    ap.add_argument("--txs", type=int, default=5000)
    ap.add_argument("--workers", type=int, default=1)
    ap.add_argument("--out-dir", default="results")
    args = ap.parse_args()
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)

    for skew in (0.0, 8.0):
        tag = "uniform" if skew == 0 else "skew8"
        base = SimConfig(workload=WorkloadSpec(tx_count=args.txs, skewness=skew))
        # latency on vs off across capacity
        for name, lat in (("latency", LatencyModel.calibrated()), ("zero", LatencyModel.zero())):
            plan = ExperimentPlan(base=replace(base, latency_model=lat), network=NetworkSource(),
                                  modes=(Mode.ZKPCN,), values=(1, 3, 5, 10, 20), trials=args.trials,
                                  workers=args.workers)
            emit_csv(run_plan(plan), out / f"latency_{tag}_{name}.csv")
        plan = ExperimentPlan(base=replace(base, capacity_factor=20), network=NetworkSource(),
                              modes=(Mode.ZKPCN,), axis="reachability", values=(0.0, 0.25, 0.5, 0.75, 1.0),
                              trials=args.trials, workers=args.workers)
        emit_csv(run_plan(plan), out / f"reachability_{tag}.csv")


if __name__ == "__main__":
    main()
