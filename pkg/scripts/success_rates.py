#!/usr/bin/env python3
"""Success rate of LN and zk-PCN against capacity factor (uniform) and skewness (factor 10)."""

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

    base = SimConfig(workload=WorkloadSpec(tx_count=args.txs))
    plan = ExperimentPlan(base=base, network=NetworkSource(), modes=(Mode.LN, Mode.ZKPCN),
                          values=(5, 10, 15, 20, 25), trials=args.trials, workers=args.workers)
    emit_csv(run_plan(plan), out / "success_vs_capacity.csv")

    skew_base = replace(base, capacity_factor=10, latency_model=LatencyModel.zero())
    plan = replace(plan, base=skew_base, axis="skewness", values=(1.0, 2.0, 4.0, 8.0))
    emit_csv(run_plan(plan), out / "success_vs_skewness.csv")


if __name__ == "__main__":
    main()
