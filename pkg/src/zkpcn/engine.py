"""Deterministic discrete-event payment simulator for LN, zk-PCN and zk-IPCN.

Payments arrive at fixed intervals and are executed atomically at their
arrival time. In zk-PCN mode each committed channel proves its new public
balances; the announcement reaches other nodes only after the prover time
plus one network delay, and each node receives it independently with
probability ``reachability``. Until then other senders route on the previous
announcement, which is the staleness the latency model controls.
"""

from __future__ import annotations

import heapq
import json
from dataclasses import asdict, dataclass, field, replace
from enum import Enum
from typing import Iterable

import numpy as np

from . import channel as chp
from .channel import Channel, PublicPolicy
from .routing import (
    Announcement,
    FeePolicy,
    TableStore,
    find_candidate_routes,
    k_shortest_paths,
    range_rank,
    rpg_collect,
    shortest_path,
)
from .topology import Network, apply_capacity_factor, initial_split, k_hop_view, median_capacity
from .workload import Payment, WorkloadSpec, generate_payments
from .zk import (
    LatencyModel,
    Proof,
    Statement,
    Witness,
    forged_proof,
    prove,
    prover_latency,
    setup,
    statement_for,
    verify,
    witness_for,
)


class Mode(str, Enum):
    LN = "ln"
    ZKPCN = "zkpcn"
    ZKIPCN = "zkipcn"


class FailureReason(str, Enum):
    NO_ROUTE = "NoRoute"
    INSUFFICIENT_FUNDS = "InsufficientFunds"
    STALE_BALANCE = "StaleBalance"
    TIMEOUT = "Timeout"


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class SimConfig:
    mode: Mode = Mode.ZKPCN
    capacity_factor: int = 1
    workload: WorkloadSpec = field(default_factory=WorkloadSpec)
    reachability: float = 1.0
    latency_model: LatencyModel = field(default_factory=LatencyModel.calibrated)
    # fixed hash count for every proof; None charges each channel's own log length
    hash_times: int | None = None
    payment_interval_ms: float = 1000.0
    per_hop_delay_ms: float = 1.0
    decoys: int = 2
    decoy_jitter: bool = False
    k_hop: int = 2
    max_routes: int = 3
    ln_max_retries: int = 10
    prover_alternation: str = "deterministic"
    public_policy: PublicPolicy = PublicPolicy.DELTA_FOLLOW
    public_fraction: float = 1.0
    reset_threshold: int = 1000
    fee_policy: FeePolicy = field(default_factory=FeePolicy)
    rank_strategy: str = "cheapest"
    rank_budget: int | None = None
    byzantine: frozenset[str] = frozenset()
    seed: int = 0

    def validate(self) -> None:
        if self.capacity_factor < 1:
            raise ConfigError("capacity_factor must be >= 1")
        if not 0.0 <= self.reachability <= 1.0:
            raise ConfigError("reachability must lie in [0, 1]")
        if self.hash_times is not None and self.hash_times < 1:
            raise ConfigError("hash_times must be >= 1")
        if self.payment_interval_ms <= 0 or self.per_hop_delay_ms < 0:
            raise ConfigError("payment interval must be positive and per-hop delay non-negative")
        if self.decoys < 0 or self.k_hop < 1 or self.max_routes < 1 or self.ln_max_retries < 1:
            raise ConfigError("decoys >= 0, k_hop >= 1, max_routes >= 1, ln_max_retries >= 1")
        if self.prover_alternation not in ("deterministic", "seeded"):
            raise ConfigError("prover_alternation must be 'deterministic' or 'seeded'")
        if not 0.0 <= self.public_fraction <= 1.0:
            raise ConfigError("public_fraction must lie in [0, 1]")
        if self.reset_threshold < 0:
            raise ConfigError("reset_threshold must be >= 0")
        if self.rank_strategy not in ("cheapest", "priority"):
            raise ConfigError("rank_strategy must be 'cheapest' or 'priority'")
        if self.rank_strategy == "priority" and self.rank_budget is None:
            raise ConfigError("priority ranking needs rank_budget")


@dataclass(frozen=True)
class PaymentOutcome:
    success: bool
    failure_reason: FailureReason | None
    path: tuple[int, ...] = ()
    fees: int = 0
    proofs_generated: int = 0
    latency: float = 0.0
    attempts: int = 0

    @property
    def hops(self) -> int:
        return len(self.path)


@dataclass(frozen=True)
class Metrics:
    tx_count: int
    successes: int
    success_rate: float
    failures: dict[str, int]
    proofs_generated: int
    proof_slope: float
    mean_path_length: float
    broadcast_messages: int
    rejected_announcements: int
    proof_series: tuple[int, ...] = field(repr=False)

    def to_json(self) -> str:
        d = asdict(self)
        d["proof_series"] = list(self.proof_series)
        return json.dumps(d, sort_keys=True)


def least_squares_slope(series: Iterable[float]) -> float:
    """Slope of y against its index; 0 for a constant series."""
    y = np.asarray(list(series), dtype=float)
    if len(y) < 2:
        raise ValueError("need at least two points")
    x = np.arange(len(y), dtype=float)
    xc = x - x.mean()
    return float(np.dot(xc, y - y.mean()) / np.dot(xc, xc))


class Simulation:
    """Mutable simulation state. ``run`` drives a payment list through the event loop;
    ``step`` executes one payment immediately (deliveries already due are flushed first)."""

    def __init__(self, cfg: SimConfig, net: Network):
        cfg.validate()
        if not net.is_connected():
            raise ConfigError("network must be connected")
        self.cfg = cfg
        self.base_net = net
        self.net = apply_capacity_factor(net, cfg.capacity_factor) if cfg.capacity_factor != 1 else net
        self.ei = self.net.edges
        ss = np.random.SeedSequence(cfg.seed)
        r_nonce, r_bcast, r_decoy, r_prover = ss.spawn(4)
        self.rng_nonce = np.random.default_rng(r_nonce)
        self.rng_bcast = np.random.default_rng(r_bcast)
        self.rng_decoy = np.random.default_rng(r_decoy)
        self.rng_prover = np.random.default_rng(r_prover)
        self.channels: list[Channel] = []
        for c in self.net.channels:
            xa, xb = initial_split(c)
            ch = chp.open_channel(c.a, c.b, xa, xb, channel_id=c.id)
            if cfg.public_fraction < 1.0:
                ch = replace(ch, public_balances=(int(xa * cfg.public_fraction), int(xb * cfg.public_fraction)))
            self.channels.append(ch)
        self.pp = setup(cfg.reset_threshold if cfg.reset_threshold > 0 else 2**40)
        self.tables = TableStore(self.net) if cfg.mode == Mode.ZKPCN else None
        if self.tables is not None and cfg.public_fraction < 1.0:
            for ch in self.channels:
                self.tables.pub[2 * ch.id] = ch.public_balances[0]
                self.tables.pub[2 * ch.id + 1] = ch.public_balances[1]
        self.ann_seq = [0] * len(self.channels)
        self.next_prover = [0] * len(self.channels)
        self._witnesses: dict[int, tuple[tuple[int, int], Witness]] = {}
        self.proof_cache: dict[int, tuple[tuple, object, Proof]] = {}
        self.views: dict[str, object] = {}
        self.events: list = []
        self._seq = 0
        self.now = 0.0
        self.outcomes: list[PaymentOutcome] = []
        self.broadcast_messages = 0
        self.rejected = 0
        self._proofs_in_step = 0
        self._latency_in_step = 0.0

    # --- event queue ---

    def _schedule(self, t: float, priority: int, kind: str, payload) -> None:
        self._seq += 1
        heapq.heappush(self.events, (t, priority, self._seq, kind, payload))

    def _flush(self, until: float) -> None:
        while self.events and self.events[0][0] <= until:
            t, _, _, kind, payload = heapq.heappop(self.events)
            self.now = t
            if kind == "deliver":
                self._deliver(payload)

    # --- proofs and announcements ---

    def _witness(self, ch: Channel) -> Witness:
        # extend the previous witness instead of rebuilding it from the whole log
        key, prev = self._witnesses.get(ch.id, (None, None))
        if key is not None and key[0] == ch.log_base and key[1] <= len(ch.log):
            tail = witness_for(replace(ch, log=ch.log[key[1]:]))
            wit = Witness(prev.transactions + tail.transactions)
        else:
            wit = witness_for(ch)
        self._witnesses[ch.id] = ((ch.log_base, len(ch.log)), wit)
        return wit

    def _prove(self, cid: int, prover: str) -> tuple[Statement, Proof, float]:
        ch = self.channels[cid]
        stmt = statement_for(ch)
        proof, cost = prove(self.pp, stmt, self._witness(ch), self.cfg.latency_model)
        if self.cfg.hash_times is not None:
            cost = prover_latency(self.cfg.latency_model, self.cfg.hash_times)
        if prover in self.cfg.byzantine:
            proof = forged_proof(stmt)
        self._proofs_in_step += 1
        return stmt, proof, cost

    def _pick_prover(self, cid: int) -> str:
        ch = self.channels[cid]
        if self.cfg.prover_alternation == "seeded":
            side = int(self.rng_prover.integers(2))
        else:
            side = self.next_prover[cid]
            self.next_prover[cid] = 1 - side
        return ch.parties[side]

    def announce(self, cid: int) -> Announcement:
        """Prove the channel's current state and schedule its network-wide delivery."""
        stmt, proof, cost = self._prove(cid, self._pick_prover(cid))
        self.ann_seq[cid] += 1
        ch = self.channels[cid]
        ann = Announcement(cid, stmt, proof, self.ann_seq[cid])
        for party in ch.parties:
            self.tables.set_own(self.net.index[party], cid, ch.public_balances, ann.version_hint)
        self._schedule(self.now + cost + self.cfg.per_hop_delay_ms, 0, "deliver", ann)
        return ann

    def broadcast_receivers(self, ann: Announcement) -> np.ndarray:
        """Each non-party node independently receives ``ann`` with probability ``reachability``."""
        n = len(self.net.nodes)
        rho = self.cfg.reachability
        if rho >= 1.0:
            mask = np.ones(n, dtype=bool)
        elif rho <= 0.0:
            mask = np.zeros(n, dtype=bool)
        else:
            mask = self.rng_bcast.random(n) < rho
        for party in self.channels[ann.channel].parties:
            mask[self.net.index[party]] = False
        return mask

    def _deliver(self, ann: Announcement) -> None:
        receivers = self.broadcast_receivers(ann)
        count = int(receivers.sum())
        self.broadcast_messages += count
        # a proof verifies identically at every receiver, so check it once
        if verify(self.pp, ann.statement, ann.proof) and sum(ann.statement.initial_balances) == self.net.channels[
            ann.channel
        ].capacity:
            self.tables.deliver(ann.channel, ann.statement.public_balances, ann.version_hint, receivers)
        else:
            self.rejected += count

    def decoy_channels(self, path_channels: Iterable[int], d: int) -> list[int]:
        """Up to ``d`` distinct channels adjacent to the path, chosen at random."""
        on_path = set(path_channels)
        if d <= 0:
            return []
        adjacent = set()
        for cid in on_path:
            for node in self.net.channels[cid].a, self.net.channels[cid].b:
                adjacent.update(self.net.adjacency[node])
        pool = sorted(adjacent - on_path)
        if len(pool) <= d:
            return pool
        picked = self.rng_decoy.choice(len(pool), size=d, replace=False)
        return sorted(pool[i] for i in picked)

    def decoy_updates(self, path_channels: Iterable[int], d: int) -> list[int]:
        chosen = self.decoy_channels(path_channels, d)
        for cid in chosen:
            if self.cfg.decoy_jitter:
                ch = self.channels[cid]
                u = self.rng_decoy.random(2)
                self.channels[cid] = replace(
                    ch, public_balances=(int(ch.public_balances[0] * u[0]), int(ch.public_balances[1] * u[1]))
                )
            self.announce(cid)
        return chosen

    # --- commit ---

    def _covers(self, path: tuple[int, ...], amount: int) -> bool:
        return all(self.channels[e // 2].true_balances[e % 2] >= amount for e in path)

    def _commit(self, path: tuple[int, ...], amount: int) -> None:
        """All-or-nothing transfer along ``path``; caller has checked every hop."""
        updated = []
        for e in path:
            ch = chp.maybe_reset(self.channels[e // 2], self.cfg.reset_threshold)
            msg = chp.make_update(ch, e % 2, amount, self.rng_nonce)
            updated.append(
                chp.apply_update(ch, msg, self.cfg.public_policy, self.cfg.public_fraction)
            )
        for e, ch in zip(path, updated):
            self.channels[e // 2] = ch

    def _fees(self, path: tuple[int, ...], amount: int) -> int:
        return len(path) * self.cfg.fee_policy.fee(amount)

    # --- modes ---

    def execute_ln(self, p: Payment) -> PaymentOutcome:
        usable = self.ei.capacity >= p.amount
        attempts = 0
        for path in k_shortest_paths(self.ei, self.net.index[p.sender], self.net.index[p.recipient], usable):
            attempts += 1
            if self._covers(path, p.amount):
                self._commit(path, p.amount)
                return PaymentOutcome(
                    True, None, path, self._fees(path, p.amount), 0,
                    2 * attempts * len(path) * self.cfg.per_hop_delay_ms, attempts,
                )
            if attempts >= self.cfg.ln_max_retries:
                break
        reason = FailureReason.INSUFFICIENT_FUNDS if attempts else FailureReason.NO_ROUTE
        return PaymentOutcome(False, reason, attempts=attempts)

    def execute_zkpcn(self, p: Payment) -> PaymentOutcome:
        src = self.net.index[p.sender]
        usable = self.tables.row(src) >= p.amount
        path = shortest_path(self.ei, src, self.net.index[p.recipient], usable)
        if path is None:
            return PaymentOutcome(False, FailureReason.NO_ROUTE, attempts=1)
        if not self._covers(path, p.amount):
            return PaymentOutcome(False, FailureReason.STALE_BALANCE, path, attempts=1)
        self._commit(path, p.amount)
        channels = [e // 2 for e in path]
        for cid in channels:
            self.announce(cid)
        self.decoy_updates(channels, self.cfg.decoys)
        return PaymentOutcome(
            True, None, path, self._fees(path, p.amount), self._proofs_in_step,
            len(path) * self.cfg.per_hop_delay_ms, 1,
        )

    def _attest(self, node: str, cid: int):
        ch = self.channels[cid]
        key = (ch.version, ch.log_base, ch.public_balances)
        cached = self.proof_cache.get(cid)
        if cached is None or cached[0] != key:
            stmt, proof, cost = self._prove(cid, node)
            self._latency_in_step += cost
            cached = (key, stmt, proof)
            self.proof_cache[cid] = cached
        return cached[1], cached[2], ch.side_of(node)

    def _response_delivered(self, resp) -> bool:
        rho = self.cfg.reachability
        return rho >= 1.0 or (rho > 0.0 and self.rng_bcast.random() < rho)

    def execute_zkipcn(self, p: Payment) -> PaymentOutcome:
        view = self.views.get(p.sender)
        if view is None:
            view = self.views[p.sender] = k_hop_view(self.net, p.sender, self.cfg.k_hop)
        routes = find_candidate_routes(self.net, view, p.sender, p.recipient, p.amount, self.cfg.max_routes)
        if not routes:
            return PaymentOutcome(False, FailureReason.NO_ROUTE)
        total_fee = rpg_collect(
            self.net, p.sender, p.amount, routes, self.pp, self._attest,
            self.cfg.fee_policy, self._response_delivered,
        )
        path = range_rank(total_fee, self.cfg.rank_strategy, self.cfg.rank_budget)
        latency = self._latency_in_step + 2 * max(len(r) for r in routes) * self.cfg.per_hop_delay_ms
        if path is None:
            return PaymentOutcome(False, FailureReason.TIMEOUT, proofs_generated=self._proofs_in_step,
                                  latency=latency, attempts=len(routes))
        if not self._covers(path, p.amount):
            return PaymentOutcome(False, FailureReason.STALE_BALANCE, path, proofs_generated=self._proofs_in_step,
                                  latency=latency, attempts=len(routes))
        self._commit(path, p.amount)
        # Update Channel*: the committed channels notify only their adjacent nodes
        for e in path:
            c = self.net.channels[e // 2]
            self.broadcast_messages += len(self.net.adjacency[c.a]) + len(self.net.adjacency[c.b]) - 2
        latency += len(path) * self.cfg.latency_model.verifier_ms
        return PaymentOutcome(True, None, path, total_fee[path], self._proofs_in_step, latency, len(routes))

    # --- driver ---

    def step(self, p: Payment) -> PaymentOutcome:
        self._flush(self.now)
        self._proofs_in_step = 0
        self._latency_in_step = 0.0
        if self.cfg.mode == Mode.LN:
            out = self.execute_ln(p)
        elif self.cfg.mode == Mode.ZKPCN:
            out = self.execute_zkpcn(p)
        else:
            out = self.execute_zkipcn(p)
        self.outcomes.append(out)
        return out

    def run(self, payments: list[Payment]) -> Metrics:
        for i, p in enumerate(payments):
            self._flush(i * self.cfg.payment_interval_ms)
            self.now = i * self.cfg.payment_interval_ms
            self.step(p)
        self._flush(float("inf"))
        return self.metrics()

    def total_balance(self) -> int:
        return sum(sum(ch.true_balances) for ch in self.channels)

    def metrics(self) -> Metrics:
        outs = self.outcomes
        n = len(outs)
        wins = [o for o in outs if o.success]
        failures = {r.value: 0 for r in FailureReason}
        for o in outs:
            if o.failure_reason is not None:
                failures[o.failure_reason.value] += 1
        series = np.cumsum([o.proofs_generated for o in outs]).tolist() if outs else []
        return Metrics(
            tx_count=n,
            successes=len(wins),
            success_rate=len(wins) / n if n else 0.0,
            failures=failures,
            proofs_generated=int(series[-1]) if series else 0,
            proof_slope=least_squares_slope(series) if n >= 2 else 0.0,
            mean_path_length=float(np.mean([o.hops for o in wins])) if wins else 0.0,
            broadcast_messages=self.broadcast_messages,
            rejected_announcements=self.rejected,
            proof_series=tuple(int(x) for x in series),
        )


def workload_for(cfg: SimConfig, net: Network) -> list[Payment]:
    """Payment trace; amounts default to (0, median capacity] of the unscaled network."""
    upper = cfg.workload.amount_upper or median_capacity(net)
    return generate_payments(cfg.workload, net.nodes, upper)


def run_simulation(cfg: SimConfig, net: Network, payments: list[Payment] | None = None) -> Metrics:
    sim = Simulation(cfg, net)
    return sim.run(payments if payments is not None else workload_for(cfg, net))
