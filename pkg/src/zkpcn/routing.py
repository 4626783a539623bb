"""Route discovery and selection.

Paths are tuples of directed edge ids (see :class:`~zkpcn.topology.EdgeIndex`).
Shortest paths minimise hop count and break ties on the lexicographically
smallest node-index sequence, then the smallest edge id per hop.

Two modes live here: table-driven selection over announced public balances,
and reactive proof generation (RPG), where a sender probes candidate routes
with onion-wrapped posts and each hop attaches a proof for its channel.
"""

from __future__ import annotations

import heapq
from dataclasses import dataclass, field, replace
from typing import Callable, Iterator, Mapping

import numpy as np
from scipy.sparse.csgraph import breadth_first_order

from .topology import EdgeIndex, Network, StaticView, initial_split
from .zk import Proof, PublicParams, Statement, verify

Path = tuple[int, ...]


def shortest_path(ei: EdgeIndex, src: int, dst: int, usable: np.ndarray) -> Path | None:
    """Fewest-hop path over edges with ``usable[e]`` set, or None.

    Ties go to the smallest node sequence read from the lower-index endpoint,
    so a pair and its reverse pick mirror-image routes when balances allow.
    """
    if src == dst:
        return ()
    start, end = (src, dst) if src < dst else (dst, src)
    # search backwards from dst over reversed arcs when dst is the lower index
    g = ei.masked_graph(usable, reverse=src > dst)
    _, pred = breadth_first_order(g, start, directed=True, return_predecessors=True)
    if pred[end] < 0:
        return None
    nodes = [end]
    while nodes[-1] != start:
        nodes.append(int(pred[nodes[-1]]))
    if start == src:
        nodes.reverse()
    path = []
    for u, v in zip(nodes, nodes[1:]):
        path.append(next(e for e in ei.between[(u, v)] if usable[e]))
    return tuple(path)


def k_shortest_paths(ei: EdgeIndex, src: int, dst: int, usable: np.ndarray) -> Iterator[Path]:
    """Yen's loop-free k-shortest paths, generated lazily by hop count.

    Equal-length candidates leave the queue in the same tie order that
    ``shortest_path`` uses.
    """
    flip = src > dst
    first = shortest_path(ei, src, dst, usable)
    if first is None or not first:
        return
    found = [first]
    seen = {first}
    heap: list[tuple[int, tuple[int, ...], Path]] = []
    yield first
    while True:
        prev = found[-1]
        prev_nodes = ei.node_path(prev)
        for i in range(len(prev)):
            root = prev[:i]
            mask = usable.copy()
            for p in found:
                if len(p) > i and p[:i] == root:
                    mask[p[i]] = False
            if i:
                banned = np.zeros(ei.n_nodes, dtype=bool)
                banned[list(prev_nodes[:i])] = True
                mask &= ~banned[ei.src] & ~banned[ei.dst]
            spur = shortest_path(ei, prev_nodes[i], dst, mask)
            if spur is None:
                continue
            cand = root + spur
            if cand not in seen:
                seen.add(cand)
                nodes = ei.node_path(cand)
                heapq.heappush(heap, (len(cand), nodes[::-1] if flip else nodes, cand))
        if not heap:
            return
        nxt = heapq.heappop(heap)[2]
        found.append(nxt)
        yield nxt


# --- table-driven routing -------------------------------------------------


@dataclass(frozen=True)
class TableEntry:
    public_balances: tuple[int, int]
    last_seen_version: int
    capacity: int
    verified: bool
    statement: Statement | None = None


@dataclass(frozen=True)
class RoutingTable:
    owner: str
    entries: Mapping[int, TableEntry]
    rejections: int = 0


@dataclass(frozen=True)
class Announcement:
    channel: int
    statement: Statement
    proof: Proof
    version_hint: int


def initial_table(net: Network, owner: str) -> RoutingTable:
    """Table at channel opening, when published balances equal the on-chain deposits."""
    entries = {}
    for c in net.channels:
        entries[c.id] = TableEntry(initial_split(c), 0, c.capacity, True)
    return RoutingTable(owner, entries)


def update_routing_table(table: RoutingTable, ann: Announcement, pp: PublicParams) -> RoutingTable:
    old = table.entries.get(ann.channel)
    last = old.last_seen_version if old is not None else -1
    capacity = old.capacity if old is not None else sum(ann.statement.initial_balances)
    pubs = ann.statement.public_balances
    ok = (
        ann.version_hint > last
        and sum(pubs) <= capacity
        and sum(ann.statement.initial_balances) == capacity
        and verify(pp, ann.statement, ann.proof)
    )
    if not ok:
        return replace(table, rejections=table.rejections + 1)
    entries = dict(table.entries)
    entries[ann.channel] = TableEntry(pubs, ann.version_hint, capacity, True, ann.statement)
    return replace(table, entries=entries)


def table_usable(table: RoutingTable, ei: EdgeIndex, amount: int) -> np.ndarray:
    pub = np.full(ei.n_edges, -1, dtype=np.int64)
    for cid, entry in table.entries.items():
        if entry.verified:
            pub[2 * cid], pub[2 * cid + 1] = entry.public_balances
    return pub >= amount


def zkpcn_select_route(table: RoutingTable, net: Network, src: str, dst: str, amount: int) -> Path | None:
    """Shortest path using only channels whose sending-side public balance covers ``amount``."""
    if src == dst or amount <= 0:
        raise ValueError("need distinct endpoints and a positive amount")
    ei = net.edges
    return shortest_path(ei, net.index[src], net.index[dst], table_usable(table, ei, amount))


class TableStore:
    """Every node's routing table as dense arrays, for the simulation engine.

    ``pub[e, node]`` is the public balance ``node`` believes is available on
    directed edge ``e``; ``ver[c, node]`` the last announcement it accepted
    for channel ``c``. Edge-major layout keeps a delivery to many nodes a
    contiguous write.
    """

    def __init__(self, net: Network):
        ei = net.edges
        init = np.empty(ei.n_edges, dtype=np.int64)
        for c in net.channels:
            init[2 * c.id], init[2 * c.id + 1] = initial_split(c)
        self.net = net
        self.pub = np.repeat(init[:, None], len(net.nodes), axis=1)
        self.ver = np.zeros((len(net.channels), len(net.nodes)), dtype=np.int64)

    def row(self, node: int) -> np.ndarray:
        return self.pub[:, node]

    def deliver(self, channel: int, publics: tuple[int, int], version: int, receivers: np.ndarray) -> int:
        """Apply an already-verified announcement at every receiver that has not seen a newer one."""
        accept = receivers & (self.ver[channel] < version)
        self.pub[2 * channel, accept] = publics[0]
        self.pub[2 * channel + 1, accept] = publics[1]
        self.ver[channel, accept] = version
        return int(accept.sum())

    def set_own(self, node: int, channel: int, publics: tuple[int, int], version: int) -> None:
        self.pub[2 * channel, node] = publics[0]
        self.pub[2 * channel + 1, node] = publics[1]
        self.ver[channel, node] = max(self.ver[channel, node], version)

    def table_for(self, node: str) -> RoutingTable:
        i = self.net.index[node]
        entries = {
            c.id: TableEntry(
                (int(self.pub[2 * c.id, i]), int(self.pub[2 * c.id + 1, i])),
                int(self.ver[c.id, i]),
                c.capacity,
                True,
            )
            for c in self.net.channels
        }
        return RoutingTable(node, entries)


# --- reactive proof generation --------------------------------------------


@dataclass(frozen=True)
class FeePolicy:
    base_fee: int = 1
    proportional_rate: int = 1  # parts per million

    def fee(self, amount: int) -> int:
        return self.base_fee + amount * self.proportional_rate // 1_000_000


class OnionError(Exception):
    pass


class DropPost(Exception):
    """A hop could not serve the amount; the post dies silently."""


@dataclass(frozen=True)
class Sealed:
    """One onion layer; only ``owner`` can open it."""

    owner: str
    payload: object = field(repr=False, compare=False)

    def open(self, node: str) -> object:
        if node != self.owner:
            raise OnionError(f"{node} cannot open a layer sealed for {self.owner}")
        return self.payload


@dataclass(frozen=True)
class HopInstruction:
    channel: int
    next_hop: str
    inner: Sealed


@dataclass(frozen=True)
class FinalHop:
    route_id: int


@dataclass(frozen=True)
class RoutePost:
    tran: int
    onion: Sealed
    prev_hop: str | None
    accumulated: tuple[tuple[Proof, Statement], ...] = ()
    fee: int = 0


@dataclass(frozen=True)
class RouteResponse:
    route_id: int
    proofs_and_statements: tuple[tuple[Proof, Statement], ...]
    fee: int


def build_onion(net: Network, path: Path, route_id: int) -> Sealed:
    names = [net.nodes[i] for i in net.edges.node_path(path)]
    layer = Sealed(names[-1], FinalHop(route_id))
    for i in range(len(path) - 1, -1, -1):
        layer = Sealed(names[i], HopInstruction(path[i] // 2, names[i + 1], layer))
    return layer


def hop_view(node: str, post: RoutePost) -> dict:
    """Everything ``node`` can learn from a post it receives."""
    layer = post.onion.open(node)
    view = {"prev_hop": post.prev_hop, "tran": post.tran, "accumulated": post.accumulated, "fee": post.fee}
    view["next_hop"] = layer.next_hop if isinstance(layer, HopInstruction) else None
    return view


# attest(node, channel) -> (statement, proof, sending side of node)
Attestor = Callable[[str, int], tuple[Statement, Proof, int]]


def rpg_forward(node: str, post: RoutePost, attest: Attestor, fees: FeePolicy) -> tuple[str, RoutePost]:
    """Peel one layer, append this hop's proof and fee, return (next hop, post)."""
    layer = post.onion.open(node)
    if not isinstance(layer, HopInstruction):
        raise OnionError(f"{node} is the destination, not a forwarder")
    stmt, proof, side = attest(node, layer.channel)
    if stmt.public_balances[side] < post.tran:
        raise DropPost(f"{node} cannot forward {post.tran} over channel {layer.channel}")
    forwarded = RoutePost(
        tran=post.tran,
        onion=layer.inner,
        prev_hop=node,
        accumulated=post.accumulated + ((proof, stmt),),
        fee=post.fee + fees.fee(post.tran),
    )
    return layer.next_hop, forwarded


def rpg_response(recipient: str, post: RoutePost) -> RouteResponse:
    final = post.onion.open(recipient)
    if not isinstance(final, FinalHop):
        raise OnionError(f"{recipient} is not the destination of this post")
    return RouteResponse(final.route_id, post.accumulated, post.fee)


def _fee_for(fees: FeePolicy | Mapping[str, FeePolicy], node: str) -> FeePolicy:
    return fees if isinstance(fees, FeePolicy) else fees.get(node, FeePolicy())


def rpg_collect(
    net: Network,
    sender: str,
    tran: int,
    routes: list[Path],
    pp: PublicParams,
    attest: Attestor,
    fees: FeePolicy | Mapping[str, FeePolicy] = FeePolicy(),
    deliver: Callable[[RouteResponse], bool] = lambda resp: True,
) -> dict[Path, int]:
    """Probe every candidate route and keep those whose proofs verify and cover ``tran``.

    ``deliver`` decides whether a response makes it back to the sender; a
    lost response looks exactly like a dropped post (the sender times out).
    """
    total_fee: dict[Path, int] = {}
    for rid, path in enumerate(routes):
        post = RoutePost(tran, build_onion(net, path, rid), None)
        node = sender
        try:
            for _ in path:
                node, post = rpg_forward(node, post, attest, _fee_for(fees, node))
        except DropPost:
            continue
        resp = rpg_response(node, post)
        if not deliver(resp) or len(resp.proofs_and_statements) != len(path):
            continue
        if all(
            verify(pp, stmt, proof) and stmt.public_balances[e % 2] >= tran
            for (proof, stmt), e in zip(resp.proofs_and_statements, path)
        ):
            total_fee[path] = resp.fee
    return total_fee


def find_candidate_routes(
    net: Network, view: StaticView, src: str, dst: str, amount: int, max_routes: int
) -> list[Path]:
    """Up to ``max_routes`` loop-free paths whose every channel capacity covers ``amount``.

    Searches the owner's k-hop view; falls back to the whole (public) topology
    when ``dst`` lies outside it.
    """
    ei = net.edges
    usable = ei.capacity >= amount
    if dst in view.nodes:
        in_view = np.zeros(len(net.channels), dtype=bool)
        in_view[list(view.channels)] = True
        usable &= np.repeat(in_view, 2)
    routes = []
    for p in k_shortest_paths(ei, net.index[src], net.index[dst], usable):
        routes.append(p)
        if len(routes) >= max_routes:
            break
    return routes


def range_rank(total_fee: Mapping[Path, int], strategy: str = "cheapest", budget: int | None = None) -> Path | None:
    if not total_fee:
        return None
    if strategy == "cheapest":
        return min(total_fee, key=lambda p: (total_fee[p], len(p), p))
    if strategy == "priority":
        if budget is None:
            raise ValueError("priority ranking needs a budget")
        within = [p for p in total_fee if total_fee[p] <= budget]
        if not within:
            return None
        return min(within, key=lambda p: (-total_fee[p], len(p), p))
    raise ValueError(f"unknown ranking strategy {strategy!r}")
