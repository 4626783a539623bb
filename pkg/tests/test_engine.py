from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from zkpcn.engine import (
    ConfigError,
    FailureReason,
    Mode,
    SimConfig,
    Simulation,
    least_squares_slope,
    run_simulation,
    workload_for,
)
from zkpcn.routing import Announcement
from zkpcn.topology import generate_synthetic, parse_snapshot
from zkpcn.workload import Payment, WorkloadSpec
from zkpcn.zk import LatencyModel, verify

ZERO = LatencyModel.zero()

TWO_ROUTES = """\
channel A B 10
channel B E 10
channel E F 10
channel A C 10
channel C D 10
channel D E 10
"""


def pair(cap):
    return parse_snapshot(f"channel A B {cap}\n")


def cfg(mode=Mode.ZKPCN, **kw):
    return SimConfig(mode=mode, **kw)


@pytest.fixture(scope="module")
def small_net():
    return generate_synthetic(100, 200, seed=3)


# --- spec examples --------------------------------------------------------


@pytest.mark.parametrize("mode", list(Mode))
def test_alternating_payments_all_succeed(mode):
    rng = np.random.default_rng(0)
    pays = [Payment("AB"[i % 2], "BA"[i % 2], int(rng.integers(1, 51))) for i in range(10)]
    m = run_simulation(cfg(mode), pair(100), pays)
    assert m.success_rate == 1.0


@pytest.mark.parametrize("mode, reason", [
    (Mode.LN, FailureReason.INSUFFICIENT_FUNDS),
    # the sender's own table already shows the drained balance, so zk-PCN filters the hop out
    (Mode.ZKPCN, FailureReason.NO_ROUTE),
])
def test_exhaustion_after_first(mode, reason):
    sim = Simulation(cfg(mode, decoys=0), pair(160))
    outs = [sim.step(Payment("A", "B", 80)) for _ in range(5)]
    assert outs[0].success
    assert all(not o.success and o.failure_reason == reason for o in outs[1:])


def test_metrics_deterministic(small_net):
    c = cfg(workload=WorkloadSpec(tx_count=300, seed=4), seed=4, capacity_factor=3)
    assert run_simulation(c, small_net).to_json() == run_simulation(c, small_net).to_json()


def test_ln_retries_past_depleted_path():
    net = parse_snapshot(TWO_ROUTES)
    sim = Simulation(cfg(Mode.LN), net)
    # drain B->E so the two-hop-shorter route fails at the true-balance check
    be = 1
    sim.channels[be] = replace(sim.channels[be], true_balances=(0, 10), public_balances=(0, 10))
    out = sim.step(Payment("A", "F", 3))
    assert out.success and out.attempts >= 2
    assert "".join(net.nodes[i] for i in net.edges.node_path(out.path)) == "ACDEF"


def test_ln_exhausts_retries():
    net = parse_snapshot("channel A B 10\nchannel B C 10\n")
    sim = Simulation(cfg(Mode.LN), net)
    sim.channels[1] = replace(sim.channels[1], true_balances=(0, 10))
    out = sim.step(Payment("A", "C", 2))
    assert not out.success and out.failure_reason == FailureReason.INSUFFICIENT_FUNDS


def test_zkpcn_public_balance_is_conservative():
    sim = Simulation(cfg(public_fraction=0.5), pair(100))
    out = sim.step(Payment("A", "B", 40))
    assert sim.channels[0].true_balances[0] == 50
    assert not out.success and out.failure_reason == FailureReason.NO_ROUTE


def test_reachability_zero_hurts(small_net):
    def rate(rho):
        c = cfg(reachability=rho, latency_model=ZERO, capacity_factor=3,
                workload=WorkloadSpec(tx_count=1500, seed=1), seed=1)
        return run_simulation(c, small_net).success_rate

    assert rate(0.0) < rate(1.0)


def test_zkpcn_proof_accounting(small_net):
    sim = Simulation(cfg(decoys=2, capacity_factor=50), small_net)
    for p in workload_for(replace(sim.cfg, workload=WorkloadSpec(tx_count=100, seed=2)), small_net):
        out = sim.step(p)
        if out.success:
            pool = sim.decoy_channels([e // 2 for e in out.path], 10**6)
            assert out.proofs_generated == out.hops + min(2, len(pool))
        else:
            assert out.proofs_generated == 0


def test_zkipcn_proofs_bounded(small_net):
    sim = Simulation(cfg(Mode.ZKIPCN, capacity_factor=10), small_net)
    for p in workload_for(replace(sim.cfg, workload=WorkloadSpec(tx_count=100, seed=5)), small_net):
        out = sim.step(p)
        assert out.proofs_generated <= out.attempts * 64 + out.hops
    m = sim.metrics()
    assert m.broadcast_messages > 0 and m.successes > 0


def test_zkipcn_timeout_when_nothing_returns():
    net = parse_snapshot(TWO_ROUTES)
    sim = Simulation(cfg(Mode.ZKIPCN, reachability=0.0), net)
    out = sim.step(Payment("A", "F", 2))
    assert not out.success and out.failure_reason == FailureReason.TIMEOUT


def test_zkipcn_no_route_over_capacity():
    net = parse_snapshot(TWO_ROUTES)
    sim = Simulation(cfg(Mode.ZKIPCN, k_hop=1), net)
    out = sim.step(Payment("A", "F", 11))
    assert not out.success and out.failure_reason == FailureReason.NO_ROUTE


def test_zkipcn_cached_proofs_reused():
    net = parse_snapshot(TWO_ROUTES)
    sim = Simulation(cfg(Mode.ZKIPCN, latency_model=ZERO), net)
    first = sim.step(Payment("A", "F", 1))
    second = sim.step(Payment("C", "D", 1))
    third = sim.step(Payment("C", "D", 1))
    assert first.success and second.success and third.success
    # only C-D moved since the previous probe of the same two routes
    assert third.attempts == 2 and third.proofs_generated == 1


# --- staleness and broadcast ---------------------------------------------


def test_announcement_lands_after_prover_time():
    sim = Simulation(cfg(decoys=0), parse_snapshot(TWO_ROUTES))
    sim.step(Payment("A", "B", 3))
    ab = 2 * 0
    c_idx = sim.net.index["C"]
    assert sim.tables.row(c_idx)[ab] == 5
    sim._flush(156.0)
    assert sim.tables.row(c_idx)[ab] == 5
    sim._flush(158.0)
    assert sim.tables.row(c_idx)[ab] == 2


@pytest.mark.parametrize("rho, expect", [(1.0, 9998), (0.0, 0)])
def test_broadcast_extremes(rho, expect):
    net = generate_synthetic(10_000, 10_000, seed=0)
    sim = Simulation(cfg(reachability=rho), net)
    ann = Announcement(0, None, None, 1)
    assert int(sim.broadcast_receivers(ann).sum()) == expect


def test_broadcast_half_within_five_sigma():
    net = generate_synthetic(10_000, 10_000, seed=0)
    sim = Simulation(cfg(reachability=0.5), net)
    got = int(sim.broadcast_receivers(Announcement(0, None, None, 1)).sum())
    n = 9998
    assert abs(got - n / 2) < 5 * np.sqrt(n / 4)


def test_forged_announcements_rejected():
    net = parse_snapshot(TWO_ROUTES)
    sim = Simulation(cfg(byzantine=frozenset({"A", "B"}), decoys=0, latency_model=ZERO), net)
    sim.step(Payment("A", "B", 3))
    sim._flush(float("inf"))
    assert sim.rejected > 0
    assert sim.tables.row(sim.net.index["F"])[0] == 5


# --- decoys ---------------------------------------------------------------


def test_decoys_zero_and_saturation():
    net = parse_snapshot(TWO_ROUTES)
    sim = Simulation(cfg(), net)
    assert sim.decoy_channels([0], 0) == []
    assert sim.decoy_channels([0], 10) == [1, 3]
    picked = sim.decoy_channels([0], 1)
    assert len(picked) == 1 and picked[0] in (1, 3)


def test_decoy_statements_verify_unchanged():
    net = parse_snapshot(TWO_ROUTES)
    sim = Simulation(cfg(decoys=0, latency_model=ZERO), net)
    before = sim.channels[3].public_balances
    ann = sim.announce(3)
    assert ann.statement.public_balances == before
    assert verify(sim.pp, ann.statement, ann.proof)


# --- reset ----------------------------------------------------------------


def test_reset_brings_latency_back_down():
    sim = Simulation(cfg(reset_threshold=5, decoys=0), pair(100))
    costs = []
    for i in range(12):
        sim.step(Payment("AB"[i % 2], "BA"[i % 2], 1))
        _, _, cost = sim._prove(0, "A")
        costs.append(cost)
    ch = sim.channels[0]
    assert len(ch.log) < 5 and ch.version == 12
    assert min(costs[5:]) == 157.0


# --- invariants -----------------------------------------------------------

edges_st = st.lists(st.tuples(st.integers(0, 4), st.integers(0, 4), st.integers(5, 60)), min_size=4, max_size=8)


def random_net(edges):
    lines = [f"channel n{a} n{b} {c}" for a, b, c in edges if a != b]
    lines += [f"channel n{i} n{i + 1} 30" for i in range(4)]
    return parse_snapshot("\n".join(lines) + "\n")


payments_st = st.lists(
    st.tuples(st.integers(0, 4), st.integers(0, 4), st.integers(1, 40)).filter(lambda t: t[0] != t[1]),
    min_size=1, max_size=20,
)


@settings(max_examples=40, deadline=None)
@given(edges_st, payments_st, st.sampled_from(list(Mode)))
def test_conservation_and_atomicity(edges, pays, mode):
    net = random_net(edges)
    sim = Simulation(cfg(mode, latency_model=ZERO), net)
    total = sum(c.capacity for c in net.channels)
    for a, b, amt in pays:
        before = [ch.true_balances for ch in sim.channels]
        out = sim.step(Payment(f"n{a}", f"n{b}", amt))
        after = [ch.true_balances for ch in sim.channels]
        changed = {i for i, (x, y) in enumerate(zip(before, after)) if x != y}
        if out.success:
            assert changed == {e // 2 for e in out.path}
            for e in out.path:
                side = e % 2
                assert after[e // 2][side] == before[e // 2][side] - amt
        else:
            assert not changed
        assert sim.total_balance() == total
        for ch in sim.channels:
            assert all(p <= t for p, t in zip(ch.public_balances, ch.true_balances))


def test_disconnected_network_rejected():
    net = parse_snapshot("channel A B 5\nchannel C D 5\n")
    with pytest.raises(ConfigError):
        Simulation(cfg(), net)


@pytest.mark.parametrize("kw", [
    {"capacity_factor": 0},
    {"reachability": 1.5},
    {"hash_times": 0},
    {"decoys": -1},
    {"k_hop": 0},
    {"ln_max_retries": 0},
    {"prover_alternation": "random"},
    {"rank_strategy": "priority"},
    {"payment_interval_ms": 0},
])
def test_invalid_config(kw):
    with pytest.raises(ConfigError):
        run_simulation(cfg(**kw), pair(10), [])


def test_slope_helper():
    assert least_squares_slope([0, 2, 4, 6]) == pytest.approx(2.0)
    assert least_squares_slope([0, 0, 0]) == 0.0
    with pytest.raises(ValueError):
        least_squares_slope([1])
