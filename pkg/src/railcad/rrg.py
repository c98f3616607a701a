"""Routing-resource graph: channel wires, block pins, programmable switches.

Node order is fixed by construction (horizontal wires, vertical wires, PLB pins,
IOB pins) and configuration bits are assigned by a row-major snake walk over the
switchbox lattice, so two builds of the same ArchSpec are identical object for
object.  Horizontal segment (sx, sy) spans boxes (sx, sy)-(sx+1, sy); vertical
segment (sx, sy) spans boxes (sx, sy)-(sx, sy+1).
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .arch import (
    BOTTOM,
    IOB_CONFIG_BITS,
    LEFT,
    PLB_CONFIG_BITS,
    RIGHT,
    TOP,
    ArchSpec,
    DriverMode,
    SwitchboxKind,
    arch_to_text,
    build_switchbox,
    count_config_bits,
    crossbar_point_kept,
    fc_tracks,
    switchbox_sides,
)

HWIRE, VWIRE, IPIN, OPIN = "hwire", "vwire", "ipin", "opin"

# IOB sides in tile-ownership and naming order.
IOB_SIDE_NAMES = {BOTTOM: "b", TOP: "t", LEFT: "l", RIGHT: "r"}


@dataclass(slots=True)
class RRNode:
    id: int
    name: str
    kind: str
    x: int  # segment sx / block x
    y: int  # segment sy / block y
    track: int  # wire track, or pin index within its block
    r: float
    c: float
    eq_class: int  # equitemporal class label, -1 for pins


@dataclass(slots=True)
class RREdge:
    src: int
    dst: int
    config_bit: int
    bidirectional: bool


@dataclass
class RRGraph:
    arch: ArchSpec
    nodes: list[RRNode]
    edges: list[RREdge]
    adjacency: list[dict[int, int]]  # node -> {neighbor: edge index}
    wire_count: int
    node_index: dict[str, int]
    total_config_bits: int
    plb_bit_base: dict[tuple[int, int], int]
    iob_bit_base: dict[tuple[int, int], int]  # keyed by (side, position)
    warnings: list[str] = field(default_factory=list)

    def is_wire(self, node: int) -> bool:
        return node < self.wire_count

    def mirror_wire(self, node: int) -> int:
        """Paired track of a wire node; valid only for even channel width."""
        return node ^ 1

    def name_of(self, node: int) -> str:
        return self.nodes[node].name


def _hseg_count(arch: ArchSpec) -> int:
    return (arch.grid_h + 1) * arch.grid_w


def hwire_id(arch: ArchSpec, sx: int, sy: int, track: int) -> int:
    return (sy * arch.grid_w + sx) * arch.channel_width + track


def vwire_id(arch: ArchSpec, sx: int, sy: int, track: int) -> int:
    base = _hseg_count(arch) * arch.channel_width
    return base + (sx * arch.grid_h + sy) * arch.channel_width + track


def _box_terminal_wire(arch: ArchSpec, bx: int, by: int, side: int, track: int) -> int:
    if side == LEFT:
        return hwire_id(arch, bx - 1, by, track)
    if side == RIGHT:
        return hwire_id(arch, bx, by, track)
    if side == BOTTOM:
        return vwire_id(arch, bx, by - 1, track)
    return vwire_id(arch, bx, by, track)


def _iob_positions(arch: ArchSpec) -> list[tuple[int, int]]:
    """(side, position) for all IOBs: bottom cols, top cols, left rows, right rows."""
    return (
        [(BOTTOM, x) for x in range(arch.grid_w)]
        + [(TOP, x) for x in range(arch.grid_w)]
        + [(LEFT, y) for y in range(arch.grid_h)]
        + [(RIGHT, y) for y in range(arch.grid_h)]
    )


def iob_channel_segment(arch: ArchSpec, side: int, pos: int) -> tuple[str, int, int]:
    """Channel segment an IOB's connection box taps: (orientation, sx, sy)."""
    if side == BOTTOM:
        return (HWIRE, pos, 0)
    if side == TOP:
        return (HWIRE, pos, arch.grid_h)
    if side == LEFT:
        return (VWIRE, 0, pos)
    return (VWIRE, arch.grid_w, pos)


def _eq_class(arch: ArchSpec, orientation: str, sx: int, sy: int) -> int:
    # Subset boxes keep track index on every turn, so a wavefront spreads along
    # diagonals; the twist patterns balance across the channel section instead.
    if arch.switchbox_kind is SwitchboxKind.SUBSET:
        return sx + sy
    return sx if orientation == HWIRE else sy


def build_rr_graph(arch: ArchSpec) -> RRGraph:
    gw, gh, w = arch.grid_w, arch.grid_h, arch.channel_width
    nodes: list[RRNode] = []

    def add_node(name: str, kind: str, x: int, y: int, track: int, r: float, c: float, eq: int) -> int:
        node = RRNode(len(nodes), name, kind, x, y, track, r, c, eq)
        nodes.append(node)
        return node.id

    for sy in range(gh + 1):
        for sx in range(gw):
            for t in range(w):
                add_node(f"h.{sx}.{sy}.{t}", HWIRE, sx, sy, t,
                         arch.segment_r, arch.segment_c, _eq_class(arch, HWIRE, sx, sy))
    for sx in range(gw + 1):
        for sy in range(gh):
            for t in range(w):
                add_node(f"v.{sx}.{sy}.{t}", VWIRE, sx, sy, t,
                         arch.segment_r, arch.segment_c, _eq_class(arch, VWIRE, sx, sy))
    wire_count = len(nodes)

    for py in range(gh):
        for px in range(gw):
            for k in range(arch.plb_inputs):
                add_node(f"plb.{px}.{py}.i{k}", IPIN, px, py, k, 0.0, 0.0, -1)
            for k in range(arch.plb_outputs):
                add_node(f"plb.{px}.{py}.o{k}", OPIN, px, py, k, 0.0, 0.0, -1)
    for side, pos in _iob_positions(arch):
        tag = IOB_SIDE_NAMES[side]
        for k in range(arch.iob_inputs):
            add_node(f"io.{tag}{pos}.i{k}", IPIN, side, pos, k, 0.0, 0.0, -1)
        for k in range(arch.iob_outputs):
            add_node(f"io.{tag}{pos}.o{k}", OPIN, side, pos, k, 0.0, 0.0, -1)

    node_index = {n.name: n.id for n in nodes}
    adjacency: list[dict[int, int]] = [{} for _ in nodes]
    edges: list[RREdge] = []

    def add_edge(src: int, dst: int, bit: int, bidirectional: bool) -> None:
        idx = len(edges)
        edges.append(RREdge(src, dst, bit, bidirectional))
        adjacency[src][dst] = idx
        if bidirectional:
            adjacency[dst][src] = idx

    plb_bit_base: dict[tuple[int, int], int] = {}
    iob_bit_base: dict[tuple[int, int], int] = {}
    iob_by_tile: dict[tuple[int, int], list[tuple[int, int]]] = {}
    for side, pos in _iob_positions(arch):
        if side == BOTTOM:
            tile = (pos, 0)
        elif side == TOP:
            tile = (pos, gh)
        elif side == LEFT:
            tile = (0, pos)
        else:
            tile = (gw, pos)
        iob_by_tile.setdefault(tile, []).append((side, pos))

    k_plb = fc_tracks(w, arch.fc_plb)
    k_iob = fc_tracks(w, arch.fc_iob)
    bidir = arch.driver_mode is DriverMode.BIDIRECTIONAL
    bit = 0

    for ty in range(gh + 1):
        cols = range(gw + 1) if ty % 2 == 0 else range(gw, -1, -1)
        for tx in cols:
            if tx < gw and ty < gh:
                plb_bit_base[(tx, ty)] = bit
                bit += PLB_CONFIG_BITS
                # inputs tap the channel above, outputs drive the channel to the right
                for k in range(arch.plb_inputs):
                    pin = node_index[f"plb.{tx}.{ty}.i{k}"]
                    for t in range(w):
                        if crossbar_point_kept(t, k, w, arch.fc_plb):
                            add_edge(hwire_id(arch, tx, ty + 1, t), pin, bit, False)
                            bit += 1
                for k in range(arch.plb_outputs):
                    pin = node_index[f"plb.{tx}.{ty}.o{k}"]
                    for t in range(w):
                        if crossbar_point_kept(t, arch.plb_inputs + k, w, arch.fc_plb):
                            add_edge(pin, vwire_id(arch, tx + 1, ty, t), bit, False)
                            bit += 1
            for side, pos in iob_by_tile.get((tx, ty), []):
                iob_bit_base[(side, pos)] = bit
                bit += IOB_CONFIG_BITS
                orientation, sx, sy = iob_channel_segment(arch, side, pos)
                wire = hwire_id if orientation == HWIRE else vwire_id
                tag = IOB_SIDE_NAMES[side]
                for k in range(arch.iob_inputs):
                    pin = node_index[f"io.{tag}{pos}.i{k}"]
                    for t in range(w):
                        if crossbar_point_kept(t, k, w, arch.fc_iob):
                            add_edge(wire(arch, sx, sy, t), pin, bit, False)
                            bit += 1
                for k in range(arch.iob_outputs):
                    pin = node_index[f"io.{tag}{pos}.o{k}"]
                    for t in range(w):
                        if crossbar_point_kept(t, arch.iob_inputs + k, w, arch.fc_iob):
                            add_edge(pin, wire(arch, sx, sy, t), bit, False)
                            bit += 1
            sides = switchbox_sides(arch, tx, ty)
            for a, b in build_switchbox(arch.switchbox_kind, w, sides, arch.driver_mode):
                src = _box_terminal_wire(arch, tx, ty, *a)
                dst = _box_terminal_wire(arch, tx, ty, *b)
                add_edge(src, dst, bit, bidir)
                bit += 1

    expected = count_config_bits(arch).total
    if bit != expected:
        raise AssertionError(f"config bit map {bit} != budget {expected}")

    graph = RRGraph(
        arch=arch,
        nodes=nodes,
        edges=edges,
        adjacency=adjacency,
        wire_count=wire_count,
        node_index=node_index,
        total_config_bits=bit,
        plb_bit_base=plb_bit_base,
        iob_bit_base=iob_bit_base,
    )
    if (
        arch.switchbox_kind is SwitchboxKind.TWIST_ALWAYS
        and arch.driver_mode is DriverMode.SINGLE_DRIVER
    ):
        graph.warnings.append(
            "twist-always pattern with single-driver wiring uses a best-effort "
            "direction port; treat results as experimental"
        )
    return graph


def serialize_rr_graph(graph: RRGraph) -> str:
    """Canonical text dump; equal inputs produce byte-identical output."""
    out = ["rrgraph v1"]
    for line in arch_to_text(graph.arch).splitlines():
        out.append(f"arch {line}")
    for warning in graph.warnings:
        out.append(f"warning {warning}")
    out.append(f"nodes {len(graph.nodes)}")
    for n in graph.nodes:
        out.append(f"{n.id} {n.name} {n.kind} r={n.r:g} c={n.c:g} eq={n.eq_class}")
    out.append(f"edges {len(graph.edges)}")
    for e in graph.edges:
        arrow = "<->" if e.bidirectional else "->"
        out.append(f"{graph.nodes[e.src].name} {arrow} {graph.nodes[e.dst].name} bit={e.config_bit}")
    out.append(f"total_config_bits {graph.total_config_bits}")
    return "\n".join(out) + "\n"
