#!/usr/bin/env python3
"""Print the prover latency model at a few log lengths, plus verifier cost and proof size."""

from zkpcn.zk import PROOF_SIZE, LatencyModel, prover_latency

m = LatencyModel.calibrated()
print("hashes,prover_ms")
for n in (1, 10, 100, 1000, 2000):
    print(f"{n},{prover_latency(m, n):.1f}")
print(f"# verifier {m.verifier_ms} ms, proof {PROOF_SIZE} bytes")
