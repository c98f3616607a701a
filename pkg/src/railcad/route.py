"""Maze routing on the RR graph.

route_bf is breadth-first maze routing with negotiated congestion: every net is
(re)routed by a uniform-hop search whose node costs grow with present overuse
and an additive history term, until no channel wire is shared.  route_dual_bf
routes the rail-1 net of each dual pair inside the even-track domain and derives
the rail-0 route by shifting every wire to the odd partner track, which makes
the two rails segment-for-segment identical and their hop mismatch zero by
construction.
"""

from __future__ import annotations

import heapq
from dataclasses import dataclass, replace

from .arch import ArchError, ArchSpec, DriverMode, SwitchboxKind, arch_to_text, parse_arch_text
from .netlist import Block, PlacedNetlist, pin_node, validate_netlist
from .rrg import RRGraph, build_rr_graph

_INF = float("inf")


class UnroutableError(RuntimeError):
    """Routing failed; congested carries the blocking resource names."""

    def __init__(self, message: str, congested: list[str] | None = None, width: int | None = None):
        super().__init__(message)
        self.congested = congested or []
        self.width = width


@dataclass
class RouteTree:
    net_id: str
    nodes: list[int]  # discovery order, source pin first
    edges: list[tuple[int, int]]  # parent -> child
    hops: int  # channel wires in the tree


@dataclass
class Routing:
    graph: RRGraph
    router: str
    channel_width: int
    trees: dict[str, RouteTree]
    iterations: int
    pairs: tuple[tuple[str, str], ...] = ()  # (rail1, rail0) net ids
    netlist_name: str = "netlist"

    def usage(self) -> dict[int, int]:
        count: dict[int, int] = {}
        for tree in self.trees.values():
            for n in tree.nodes:
                if self.graph.is_wire(n):
                    count[n] = count.get(n, 0) + 1
        return count

    def congestion_map(self) -> dict[str, int]:
        return {self.graph.name_of(n): c for n, c in sorted(self.usage().items())}


@dataclass
class MismatchRow:
    rail1: str
    rail0: str
    hops1: int
    hops0: int

    @property
    def mismatch(self) -> int:
        return abs(self.hops1 - self.hops0)


@dataclass
class MismatchReport:
    netlist: str
    router: str
    channel_width: int
    rows: list[MismatchRow]

    @property
    def mean_mismatch(self) -> float:
        if not self.rows:
            return 0.0
        return sum(r.mismatch for r in self.rows) / len(self.rows)

    @property
    def max_mismatch(self) -> int:
        return max((r.mismatch for r in self.rows), default=0)


def hop_mismatch(routing: Routing, rail1: str, rail0: str) -> int:
    """Absolute channel-segment count difference between two routed nets.

    Multi-sink nets count every wire of the route tree, so the value is a
    whole-net measure rather than a per-sink one.
    """
    for net_id in (rail1, rail0):
        if net_id not in routing.trees:
            raise UnroutableError(f"net {net_id!r} is not routed")
    return abs(routing.trees[rail1].hops - routing.trees[rail0].hops)


def mismatch_report(routing: Routing, netlist: PlacedNetlist | None = None) -> MismatchReport:
    pairs = netlist.dual_pairs if netlist is not None else routing.pairs
    name = netlist.name if netlist is not None else routing.netlist_name
    rows = [
        MismatchRow(r1, r0, routing.trees[r1].hops, routing.trees[r0].hops)
        for r1, r0 in pairs
    ]
    return MismatchReport(name, routing.router, routing.channel_width, rows)


# --- search core ---------------------------------------------------------------


def _mirror_of(graph: RRGraph, node: int, pin_map: dict[int, int]) -> int:
    return graph.mirror_wire(node) if graph.is_wire(node) else pin_map[node]


def _search(
    graph: RRGraph,
    roots: list[int],
    sink: int,
    usage: list[int],
    history: list[float],
    pres_fac: float,
    pin_map: dict[int, int] | None,
):
    """Cheapest path from any root to sink; ties broken by ascending node id.

    With pin_map set (dual mode) only even-track wires are expanded and every
    step must have a mirror edge on the partner track, so the returned path is
    guaranteed to be shiftable to rail 0.
    """
    adjacency = graph.adjacency
    nodes = graph.nodes
    wire_count = graph.wire_count
    root_set = set(roots)
    dist: dict[int, float] = {}
    parent: dict[int, int] = {}
    heap: list[tuple[float, int]] = []
    for n in roots:
        dist[n] = 0.0
        heapq.heappush(heap, (0.0, n))
    while heap:
        d, u = heapq.heappop(heap)
        if d > dist.get(u, _INF):
            continue
        if u == sink:
            break
        for v in adjacency[u]:
            if v == sink:
                if pin_map is not None and pin_map[sink] not in adjacency[
                    _mirror_of(graph, u, pin_map)
                ]:
                    continue
                cost = d + 1.0
            elif v >= wire_count:
                continue  # pins other than the target are never intermediate hops
            else:
                if pin_map is not None:
                    if nodes[v].track % 2:
                        continue
                    mu = _mirror_of(graph, u, pin_map)
                    mv = graph.mirror_wire(v)
                    if mv not in adjacency[mu]:
                        continue
                    cost = (
                        d
                        + 1.0
                        + pres_fac * (usage[v] + usage[mv])
                        + history[v]
                        + history[mv]
                    )
                else:
                    cost = d + 1.0 + pres_fac * usage[v] + history[v]
            if cost < dist.get(v, _INF):
                dist[v] = cost
                parent[v] = u
                heapq.heappush(heap, (cost, v))
    if sink not in dist:
        return None
    path = [sink]
    while path[-1] not in root_set:
        path.append(parent[path[-1]])
    path.reverse()
    return path


def _route_net(
    graph: RRGraph,
    net_id: str,
    source: int,
    sinks: list[int],
    usage: list[int],
    history: list[float],
    pres_fac: float,
    pin_map: dict[int, int] | None = None,
) -> RouteTree:
    tree_nodes = [source]
    tree_set = {source}
    edges: list[tuple[int, int]] = []
    for sink in sinks:
        path = _search(graph, tree_nodes, sink, usage, history, pres_fac, pin_map)
        if path is None:
            raise UnroutableError(
                f"net {net_id!r}: sink {graph.name_of(sink)} unreachable from "
                f"{graph.name_of(source)}"
            )
        for a, b in zip(path, path[1:]):
            edges.append((a, b))
            if b not in tree_set:
                tree_set.add(b)
                tree_nodes.append(b)
    hops = sum(1 for n in tree_nodes if graph.is_wire(n))
    return RouteTree(net_id, tree_nodes, edges, hops)


def _mirror_tree(graph: RRGraph, net_id: str, tree: RouteTree, pin_map: dict[int, int]) -> RouteTree:
    nodes = [_mirror_of(graph, n, pin_map) for n in tree.nodes]
    edges = [
        (_mirror_of(graph, a, pin_map), _mirror_of(graph, b, pin_map)) for a, b in tree.edges
    ]
    return RouteTree(net_id, nodes, edges, tree.hops)


def _resolve_net(graph: RRGraph, blocks: dict[str, Block], net) -> tuple[int, list[int]]:
    source = pin_node(graph, blocks[net.source[0]], net.source[1])
    sinks = sorted(pin_node(graph, blocks[bid], pin) for bid, pin in net.sinks)
    return source, sinks


def _sink_pin_map(graph: RRGraph, blocks: dict[str, Block], net1, net0) -> dict[int, int]:
    """rail1 pin node -> rail0 pin node, sinks matched block-by-block."""
    pin_map = {
        pin_node(graph, blocks[net1.source[0]], net1.source[1]): pin_node(
            graph, blocks[net0.source[0]], net0.source[1]
        )
    }
    by_block: dict[tuple[int, int], list[int]] = {}
    for bid, pin in sorted(net0.sinks):
        blk = blocks[bid]
        by_block.setdefault((blk.x, blk.y), []).append(pin_node(graph, blk, pin))
    for bid, pin in sorted(net1.sinks):
        blk = blocks[bid]
        pin_map[pin_node(graph, blk, pin)] = by_block[(blk.x, blk.y)].pop(0)
    return pin_map


def _negotiate(
    graph: RRGraph,
    units: list[tuple],
    router: str,
    max_iterations: int,
    pres_fac: float,
    pres_mult: float,
    hist_step: float,
    pairs: tuple[tuple[str, str], ...] = (),
    netlist_name: str = "netlist",
) -> Routing:
    """Rip-up and reroute until no channel wire is overused.

    units: (net_id, source, sinks, pin_map, mirror_net_id) with mirror fields
    None for independently routed nets.
    """
    n = len(graph.nodes)
    usage = [0] * n
    history = [0.0] * n
    trees: dict[str, RouteTree] = {}

    def rip_up(net_id: str):
        tree = trees.pop(net_id, None)
        if tree is None:
            return
        for node in tree.nodes:
            if graph.is_wire(node):
                usage[node] -= 1

    def commit(tree: RouteTree):
        trees[tree.net_id] = tree
        for node in tree.nodes:
            if graph.is_wire(node):
                usage[node] += 1

    for iteration in range(1, max_iterations + 1):
        for net_id, source, sinks, pin_map, mirror_id in units:
            if iteration > 1 and not _touches_overuse(graph, trees, usage, net_id, mirror_id):
                continue
            rip_up(net_id)
            if mirror_id is not None:
                rip_up(mirror_id)
            tree = _route_net(graph, net_id, source, sinks, usage, history, pres_fac, pin_map)
            commit(tree)
            if mirror_id is not None:
                commit(_mirror_tree(graph, mirror_id, tree, pin_map))
        overused = [i for i in range(graph.wire_count) if usage[i] > 1]
        if not overused:
            return Routing(
                graph, router, graph.arch.channel_width, trees, iteration,
                pairs=pairs, netlist_name=netlist_name,
            )
        for i in overused:
            history[i] += hist_step * (usage[i] - 1)
        pres_fac *= pres_mult
    names = [graph.name_of(i) for i in range(graph.wire_count) if usage[i] > 1]
    raise UnroutableError(
        f"no legal routing after {max_iterations} iterations; "
        f"{len(names)} congested wires",
        congested=names,
        width=graph.arch.channel_width,
    )


def _touches_overuse(graph, trees, usage, net_id, mirror_id) -> bool:
    for nid in (net_id, mirror_id):
        if nid is None:
            continue
        tree = trees.get(nid)
        if tree is None:
            return True
        if any(usage[n] > 1 for n in tree.nodes if graph.is_wire(n)):
            return True
    return False


# --- public routers --------------------------------------------------------------


def route_bf(
    graph: RRGraph,
    netlist: PlacedNetlist,
    max_iterations: int = 30,
    pres_fac: float = 0.5,
    pres_mult: float = 1.6,
    hist_step: float = 1.0,
) -> Routing:
    """Plain breadth-first router; dual pairs are routed as independent nets."""
    validate_netlist(netlist, graph.arch)
    blocks = netlist.block_map()
    units = []
    for net in sorted(netlist.nets, key=lambda n: n.id):
        source, sinks = _resolve_net(graph, blocks, net)
        units.append((net.id, source, sinks, None, None))
    return _negotiate(
        graph, units, "bf", max_iterations, pres_fac, pres_mult, hist_step,
        pairs=tuple(netlist.dual_pairs), netlist_name=netlist.name,
    )


def route_dual_bf(
    graph: RRGraph,
    netlist: PlacedNetlist,
    max_iterations: int = 30,
    pres_fac: float = 0.5,
    pres_mult: float = 1.6,
    hist_step: float = 1.0,
) -> Routing:
    """Balanced dual-rail router: rail 1 on even tracks, rail 0 mirrored on odd.

    Requires a homogeneous fabric: subset switchboxes, bidirectional wiring and
    an even channel width, so that every even-track step has an odd-track twin.
    A pair is ripped up and rerouted as a unit at the position of its rail-1 net
    in ascending net-id order; unpaired nets route as in route_bf.
    """
    arch = graph.arch
    if (
        arch.switchbox_kind is not SwitchboxKind.SUBSET
        or arch.driver_mode is not DriverMode.BIDIRECTIONAL
        or arch.channel_width % 2
    ):
        raise UnroutableError(
            "dual-rail routing requires subset switchboxes, bidirectional wiring "
            "and an even channel width"
        )
    validate_netlist(netlist, graph.arch)
    blocks = netlist.block_map()
    nets = netlist.net_map()
    rail0_of = dict(netlist.dual_pairs)
    rail1_of = {r0: r1 for r1, r0 in netlist.dual_pairs}
    units = []
    for net in sorted(netlist.nets, key=lambda n: n.id):
        if net.id in rail1_of:
            continue  # routed together with its rail-1 partner
        if net.id in rail0_of:
            net0 = nets[rail0_of[net.id]]
            pin_map = _sink_pin_map(graph, blocks, net, net0)
            source, sinks = _resolve_net(graph, blocks, net)
            units.append((net.id, source, sinks, pin_map, net0.id))
        else:
            source, sinks = _resolve_net(graph, blocks, net)
            units.append((net.id, source, sinks, None, None))
    return _negotiate(
        graph, units, "dual-bf", max_iterations, pres_fac, pres_mult, hist_step,
        pairs=tuple(netlist.dual_pairs), netlist_name=netlist.name,
    )


ROUTERS = {"bf": route_bf, "dual-bf": route_dual_bf}


def min_channel_width(
    arch: ArchSpec,
    netlist: PlacedNetlist,
    router: str = "bf",
    cap: int = 64,
    **router_args,
) -> tuple[int, Routing | None]:
    """Least channel width at which routing succeeds (binary search, graph rebuilt
    per trial).  dual-bf searches even widths only.  An empty netlist needs no
    tracks and reports width 1 by convention."""
    if router not in ROUTERS:
        raise ValueError(f"unknown router {router!r}")
    if not netlist.nets:
        return 1, None
    step = 2 if router == "dual-bf" else 1
    route = ROUTERS[router]

    def attempt(width: int) -> Routing:
        try:
            trial = replace(arch, channel_width=width)
        except ArchError as exc:
            # e.g. fc*W not a whole number: no fabric exists at this width
            raise UnroutableError(f"width {width}: {exc}", width=width) from None
        return route(build_rr_graph(trial), netlist, **router_args)

    width = step
    last_fail = 0
    while True:
        try:
            best = attempt(width)
            break
        except UnroutableError:
            last_fail = width
            width *= 2
            if width > cap:
                raise UnroutableError(
                    f"netlist {netlist.name!r} unroutable with {router} up to "
                    f"channel width cap {cap}",
                    width=cap,
                ) from None
    lo, hi = last_fail + step, width
    while lo < hi:
        mid = (lo + hi) // 2 // step * step
        mid = max(lo, min(mid, hi - step))
        try:
            candidate = attempt(mid)
            best, hi = candidate, mid
        except UnroutableError:
            lo = mid + step
    return hi, best


# --- routing dumps ----------------------------------------------------------------


def routing_to_text(routing: Routing) -> str:
    """Self-describing canonical dump (embeds the architecture and pairing)."""
    out = ["routing v1", f"router {routing.router}", f"netlist {routing.netlist_name}"]
    for line in arch_to_text(routing.graph.arch).splitlines():
        out.append(f"arch {line}")
    for rail1, rail0 in routing.pairs:
        out.append(f"pair {rail1} {rail0}")
    for net_id in sorted(routing.trees):
        tree = routing.trees[net_id]
        out.append(f"net {net_id} hops={tree.hops}")
        name = routing.graph.name_of
        for a, b in tree.edges:
            out.append(f"tree {name(a)} -> {name(b)}")
        out.append("end")
    return "\n".join(out) + "\n"


def parse_routing_text(text: str) -> tuple[RRGraph, Routing]:
    lines = [
        (i, line.strip())
        for i, line in enumerate(text.splitlines(), start=1)
        if line.strip() and not line.lstrip().startswith("#")
    ]
    if not lines or lines[0][1] != "routing v1":
        raise ValueError("not a routing dump (missing 'routing v1' header)")
    router = "bf"
    netlist_name = "netlist"
    arch_lines = []
    pairs: list[tuple[str, str]] = []
    body_start = len(lines)
    for pos, (i, line) in enumerate(lines[1:], start=1):
        if line.startswith("router "):
            router = line.split(" ", 1)[1]
        elif line.startswith("netlist "):
            netlist_name = line.split(" ", 1)[1]
        elif line.startswith("arch "):
            arch_lines.append(line[len("arch "):])
        elif line.startswith("pair "):
            parts = line.split()
            if len(parts) != 3:
                raise ValueError(f"line {i}: pair takes two net ids")
            pairs.append((parts[1], parts[2]))
        elif line.startswith("net "):
            body_start = pos
            break
        else:
            raise ValueError(f"line {i}: unexpected {line!r}")
    graph = build_rr_graph(parse_arch_text("\n".join(arch_lines)))
    trees: dict[str, RouteTree] = {}
    current: RouteTree | None = None
    for i, line in lines[body_start:]:
        if line.startswith("net "):
            head = line.split()
            current = RouteTree(head[1], [], [], 0)
        elif line.startswith("tree "):
            if current is None:
                raise ValueError(f"line {i}: tree outside net block")
            _, a, _, b = line.split()
            ia, ib = graph.node_index[a], graph.node_index[b]
            if not current.nodes:
                current.nodes.append(ia)
            for n in (ia, ib):
                if n not in current.nodes:
                    current.nodes.append(n)
            current.edges.append((ia, ib))
        elif line == "end":
            if current is None:
                raise ValueError(f"line {i}: end outside net block")
            current.hops = sum(1 for n in current.nodes if graph.is_wire(n))
            trees[current.net_id] = current
            current = None
        else:
            raise ValueError(f"line {i}: unexpected {line!r}")
    routing = Routing(
        graph, router, graph.arch.channel_width, trees, 0,
        pairs=tuple(pairs), netlist_name=netlist_name,
    )
    return graph, routing


def save_routing(routing: Routing, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(routing_to_text(routing))


def load_routing(path) -> tuple[RRGraph, Routing]:
    with open(path, "r", encoding="utf-8") as fh:
        return parse_routing_text(fh.read())


def metrics_csv(reports: list[MismatchReport]) -> str:
    lines = ["netlist,router,channel_width,mean_mismatch,max_mismatch"]
    for rep in reports:
        lines.append(
            f"{rep.netlist},{rep.router},{rep.channel_width},"
            f"{rep.mean_mismatch:.4f},{rep.max_mismatch}"
        )
    return "\n".join(lines) + "\n"
