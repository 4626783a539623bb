"""PCN graph: loading, synthesis, capacity scaling and k-hop static views."""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Iterable

import numpy as np
from scipy.sparse import csr_matrix


class TopologyError(ValueError):
    """Raised for malformed topology documents or invalid graph parameters."""


@dataclass(frozen=True)
class ChannelSpec:
    id: int
    a: str
    b: str
    capacity: int


@dataclass(frozen=True)
class Network:
    """Undirected multigraph of payment channels.

    ``nodes`` keeps load order; that order is the node index used by the
    workload sampler and by route tie-breaking.
    """

    nodes: tuple[str, ...]
    channels: tuple[ChannelSpec, ...]
    adjacency: dict[str, tuple[int, ...]] = field(compare=False, repr=False)
    index: dict[str, int] = field(compare=False, repr=False)

    @classmethod
    def build(cls, nodes: Iterable[str], channels: Iterable[ChannelSpec]) -> "Network":
        node_list: list[str] = []
        seen: set[str] = set()
        for n in nodes:
            if n not in seen:
                seen.add(n)
                node_list.append(n)
        chans = tuple(channels)
        adj: dict[str, list[int]] = {n: [] for n in node_list}
        for i, ch in enumerate(chans):
            if ch.id != i:
                raise TopologyError(f"channel ids must be dense and ordered, got {ch.id} at {i}")
            if ch.a == ch.b:
                raise TopologyError(f"channel {ch.id} is a self-loop on {ch.a}")
            if ch.capacity <= 0:
                raise TopologyError(f"channel {ch.id} ({ch.a}-{ch.b}) has non-positive capacity {ch.capacity}")
            if ch.a not in adj or ch.b not in adj:
                raise TopologyError(f"channel {ch.id} references an unknown node")
            adj[ch.a].append(ch.id)
            adj[ch.b].append(ch.id)
        return cls(
            nodes=tuple(node_list),
            channels=chans,
            adjacency={n: tuple(v) for n, v in adj.items()},
            index={n: i for i, n in enumerate(node_list)},
        )

    @property
    def capacities(self) -> np.ndarray:
        return np.array([c.capacity for c in self.channels], dtype=np.int64)

    def other(self, ch_id: int, node: str) -> str:
        ch = self.channels[ch_id]
        return ch.b if node == ch.a else ch.a

    def neighbors(self, node: str) -> list[str]:
        return [self.other(c, node) for c in self.adjacency[node]]

    def bfs_distances(self, source: str, limit: int | None = None) -> dict[str, int]:
        dist = {source: 0}
        queue = deque([source])
        while queue:
            u = queue.popleft()
            if limit is not None and dist[u] >= limit:
                continue
            for c in self.adjacency[u]:
                v = self.other(c, u)
                if v not in dist:
                    dist[v] = dist[u] + 1
                    queue.append(v)
        return dist

    def is_connected(self) -> bool:
        if not self.nodes:
            return True
        return len(self.bfs_distances(self.nodes[0])) == len(self.nodes)

    @cached_property
    def edges(self) -> "EdgeIndex":
        return EdgeIndex(self)

    def to_text(self) -> str:
        lines = [f"channel {c.a} {c.b} {c.capacity}" for c in self.channels]
        return "\n".join(lines) + "\n"


class EdgeIndex:
    """Directed view of a network: edge ``2c`` sends A->B over channel ``c``, ``2c+1`` sends B->A.

    Edges are also kept in CSR order (source index, then target index, then
    edge id) so breadth-first search scans neighbours in ascending index order.
    """

    def __init__(self, net: Network):
        self.n_nodes = len(net.nodes)
        self.n_edges = 2 * len(net.channels)
        src = np.empty(self.n_edges, dtype=np.int64)
        dst = np.empty(self.n_edges, dtype=np.int64)
        for c in net.channels:
            ia, ib = net.index[c.a], net.index[c.b]
            src[2 * c.id], dst[2 * c.id] = ia, ib
            src[2 * c.id + 1], dst[2 * c.id + 1] = ib, ia
        self.src = src
        self.dst = dst
        ids = np.arange(self.n_edges)
        self.order = np.lexsort((ids, dst, src))
        self.src_sorted = src[self.order]
        self.dst_sorted = dst[self.order]
        # the same arcs reversed, for searching backwards from a target
        self.rorder = np.lexsort((ids, src, dst))
        self._csr = {
            False: (self.order, self.src_sorted, self.dst_sorted.astype(np.int32)),
            True: (self.rorder, dst[self.rorder], src[self.rorder].astype(np.int32)),
        }
        self._graph = csr_matrix((self.n_nodes, self.n_nodes))
        self._ones = np.ones(self.n_edges)
        self.capacity = np.repeat(net.capacities, 2)
        # (u, v) -> edge ids in ascending order, used to pick a channel per hop
        self.between: dict[tuple[int, int], list[int]] = {}
        for e in self.order.tolist():
            self.between.setdefault((int(src[e]), int(dst[e])), []).append(e)
        self.out_edges: list[list[int]] = [[] for _ in range(self.n_nodes)]
        for e in self.order.tolist():
            self.out_edges[int(src[e])].append(e)

    def masked_graph(self, usable: np.ndarray, reverse: bool = False) -> csr_matrix:
        """Adjacency matrix of the usable edges (arcs flipped when ``reverse``).

        The returned matrix is reused by the next call.
        """
        order, heads, tails = self._csr[reverse]
        m = usable[order]
        g = self._graph
        indptr = np.zeros(self.n_nodes + 1, dtype=np.int32)
        np.cumsum(np.bincount(heads[m], minlength=self.n_nodes), out=indptr[1:])
        g.indices = tails[m]
        g.indptr = indptr
        g.data = self._ones[: len(g.indices)]
        return g

    def node_path(self, path: tuple[int, ...]) -> tuple[int, ...]:
        if not path:
            return ()
        return (int(self.src[path[0]]),) + tuple(int(self.dst[e]) for e in path)


def initial_split(ch: ChannelSpec) -> tuple[int, int]:
    """Balances (for a, for b) at t=0: the lexicographically smaller endpoint gets the floor half."""
    low = ch.capacity // 2
    high = ch.capacity - low
    return (low, high) if ch.a < ch.b else (high, low)


def parse_snapshot(text: str) -> Network:
    nodes: list[str] = []
    channels: list[ChannelSpec] = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split()
        if parts[0] == "node" and len(parts) == 2:
            nodes.append(parts[1])
            continue
        if parts[0] != "channel" or len(parts) != 4:
            raise TopologyError(f"line {lineno}: expected 'channel <a> <b> <capacity>', got {raw!r}")
        _, a, b, cap_s = parts
        try:
            cap = int(cap_s)
        except ValueError:
            raise TopologyError(f"line {lineno}: capacity {cap_s!r} is not an integer") from None
        if cap <= 0:
            raise TopologyError(f"line {lineno}: channel {a}-{b} has non-positive capacity {cap}")
        if a == b:
            raise TopologyError(f"line {lineno}: channel {a}-{b} is a self-loop")
        nodes.extend((a, b))
        channels.append(ChannelSpec(len(channels), a, b, cap))
    return Network.build(nodes, channels)


def load_snapshot(path: str | Path) -> Network:
    return parse_snapshot(Path(path).read_text(encoding="utf-8"))


def make_capacity_sampler(spec: str):
    """Parse ``const:V``, ``uniform:LO,HI`` or ``lognormal:MEDIAN,SIGMA`` into a sampler(rng, size)."""
    kind, _, args = spec.partition(":")
    vals = [float(x) for x in args.split(",")] if args else []
    if kind == "const" and len(vals) == 1:
        v = int(vals[0])
        return lambda rng, size: np.full(size, v, dtype=np.int64)
    if kind == "uniform" and len(vals) == 2:
        lo, hi = int(vals[0]), int(vals[1])
        return lambda rng, size: rng.integers(lo, hi, size=size, endpoint=True)
    if kind == "lognormal" and len(vals) == 2:
        median, sigma = vals
        return lambda rng, size: np.maximum(
            1, np.rint(rng.lognormal(np.log(median), sigma, size=size))
        ).astype(np.int64)
    raise TopologyError(f"unknown capacity distribution {spec!r}")


DEFAULT_CAPACITY = "lognormal:1000000,2.5"


def generate_synthetic(
    n: int,
    target_channels: int,
    capacity_sampler: str = DEFAULT_CAPACITY,
    seed: int = 0,
    uniform_mix: float = 1.0,
) -> Network:
    """Connected hub-heavy graph: a preferential-attachment spanning tree plus
    extra edges with at least one degree-biased endpoint.

    Node ids are zero-padded so lexicographic and index order agree; lower
    ids joined earlier and so tend to be hubs.
    """
    if n < 2:
        raise TopologyError("need at least 2 nodes")
    if target_channels < n - 1:
        raise TopologyError("target_channels must be at least n-1 for connectivity")
    if target_channels > n * (n - 1) // 2:
        raise TopologyError("target_channels exceeds the simple-graph maximum n(n-1)/2")
    rng = np.random.default_rng(seed)
    width = len(str(n - 1))
    names = [f"n{i:0{width}d}" for i in range(n)]

    # repeated-endpoint list: sampling from it is proportional to degree
    targets: list[int] = [0]
    edges: list[tuple[int, int]] = []
    present: set[tuple[int, int]] = set()
    for v in range(1, n):
        u = targets[int(rng.integers(len(targets)))]
        edges.append((u, v))
        present.add((u, v))
        targets.extend((u, v))
    while len(edges) < target_channels:
        u = targets[int(rng.integers(len(targets)))]
        # second endpoint: uniform with probability uniform_mix, else degree-biased
        if rng.random() < uniform_mix:
            v = int(rng.integers(n))
        else:
            v = targets[int(rng.integers(len(targets)))]
        key = (min(u, v), max(u, v))
        if u == v or key in present:
            continue
        present.add(key)
        edges.append(key)
        targets.extend(key)

    caps = make_capacity_sampler(capacity_sampler)(rng, len(edges))
    channels = [
        ChannelSpec(i, names[a], names[b], int(c)) for i, ((a, b), c) in enumerate(zip(edges, caps))
    ]
    return Network.build(names, channels)


def apply_capacity_factor(net: Network, factor: int) -> Network:
    if factor < 1:
        raise TopologyError("capacity factor must be >= 1")
    chans = [ChannelSpec(c.id, c.a, c.b, c.capacity * factor) for c in net.channels]
    return Network.build(net.nodes, chans)


def median_capacity(net: Network) -> int:
    """Median channel capacity; the lower middle value for even counts."""
    if not net.channels:
        raise TopologyError("median of an empty channel list")
    caps = sorted(c.capacity for c in net.channels)
    return caps[(len(caps) - 1) // 2]


@dataclass(frozen=True)
class StaticView:
    owner: str
    horizon: int
    channels: dict[int, int]  # channel id -> capacity
    nodes: frozenset[str]


def k_hop_view(net: Network, owner: str, k: int) -> StaticView:
    if owner not in net.index:
        raise TopologyError(f"unknown node {owner!r}")
    if k < 1:
        raise TopologyError("k must be >= 1")
    dist = net.bfs_distances(owner, limit=k)
    chans = {
        c.id: c.capacity
        for u in dist
        for c in (net.channels[i] for i in net.adjacency[u])
        if c.a in dist and c.b in dist
    }
    return StaticView(owner=owner, horizon=k, channels=chans, nodes=frozenset(dist))
