"""Placed netlists: blocks, nets, dual-rail pairs, plus a synthetic generator.

File format, one item per line:
    block <id> <PLB|IOB> <x> <y>
    net <id> <block>.<pin> <block>.<pin> ...
    pair <rail1_net_id> <rail0_net_id>
The first pin of a net is its source (an o-pin), the rest are sinks (i-pins).
IOBs sit on the boundary: bottom (x, -1), top (x, grid_h), left (-1, y),
right (grid_w, y).  IOB o-pins drive the fabric, i-pins are driven by it.
"""

from __future__ import annotations

import enum
import random
from dataclasses import dataclass, field

from .arch import BOTTOM, LEFT, RIGHT, TOP, ArchSpec
from .rrg import IOB_SIDE_NAMES, RRGraph


class NetlistError(ValueError):
    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class BlockKind(enum.Enum):
    PLB = "PLB"
    IOB = "IOB"


@dataclass(frozen=True)
class Block:
    id: str
    kind: BlockKind
    x: int
    y: int


@dataclass(frozen=True)
class Net:
    id: str
    source: tuple[str, str]  # (block id, pin name)
    sinks: tuple[tuple[str, str], ...]


@dataclass(frozen=True)
class PlacedNetlist:
    blocks: tuple[Block, ...]
    nets: tuple[Net, ...]
    dual_pairs: tuple[tuple[str, str], ...] = ()
    name: str = "netlist"

    def block_map(self) -> dict[str, Block]:
        return {b.id: b for b in self.blocks}

    def net_map(self) -> dict[str, Net]:
        return {n.id: n for n in self.nets}


def iob_side(arch: ArchSpec, block: Block) -> tuple[int, int]:
    """(side, position) of an IOB from its boundary coordinates."""
    x, y = block.x, block.y
    if y == -1 and 0 <= x < arch.grid_w:
        return (BOTTOM, x)
    if y == arch.grid_h and 0 <= x < arch.grid_w:
        return (TOP, x)
    if x == -1 and 0 <= y < arch.grid_h:
        return (LEFT, y)
    if x == arch.grid_w and 0 <= y < arch.grid_h:
        return (RIGHT, y)
    raise NetlistError(f"block {block.id!r}: ({x}, {y}) is not on the fabric boundary")


def pin_node(graph: RRGraph, block: Block, pin: str) -> int:
    """RR-graph node id of a block pin."""
    if block.kind is BlockKind.PLB:
        name = f"plb.{block.x}.{block.y}.{pin}"
    else:
        side, pos = iob_side(graph.arch, block)
        name = f"io.{IOB_SIDE_NAMES[side]}{pos}.{pin}"
    node = graph.node_index.get(name)
    if node is None:
        raise NetlistError(f"block {block.id!r} has no pin {pin!r}")
    return node


def _check_pin(arch: ArchSpec, block: Block, pin: str, want_output: bool, where: str) -> None:
    if not pin or pin[0] not in "io" or not pin[1:].isdigit():
        raise NetlistError(f"{where}: malformed pin {pin!r}")
    is_output = pin[0] == "o"
    if is_output != want_output:
        role = "source" if want_output else "sink"
        raise NetlistError(f"{where}: {role} must use an {'o' if want_output else 'i'}-pin, got {pin!r}")
    index = int(pin[1:])
    if block.kind is BlockKind.PLB:
        limit = arch.plb_outputs if is_output else arch.plb_inputs
    else:
        limit = arch.iob_outputs if is_output else arch.iob_inputs
    if index >= limit:
        raise NetlistError(f"{where}: pin {pin!r} out of range for {block.kind.value}")


def validate_netlist(netlist: PlacedNetlist, arch: ArchSpec) -> None:
    blocks = {}
    for b in netlist.blocks:
        if b.id in blocks:
            raise NetlistError(f"duplicate block id {b.id!r}")
        blocks[b.id] = b
        if b.kind is BlockKind.PLB:
            if not (0 <= b.x < arch.grid_w and 0 <= b.y < arch.grid_h):
                raise NetlistError(f"block {b.id!r}: PLB ({b.x}, {b.y}) outside grid")
        else:
            iob_side(arch, b)
    coords = {}
    for b in netlist.blocks:
        key = (b.x, b.y)
        if key in coords:
            raise NetlistError(f"blocks {coords[key]!r} and {b.id!r} share location {key}")
        coords[key] = b.id

    nets = {}
    pin_users: dict[tuple[str, str], str] = {}
    for net in netlist.nets:
        if net.id in nets:
            raise NetlistError(f"duplicate net id {net.id!r}")
        nets[net.id] = net
        if not net.sinks:
            raise NetlistError(f"net {net.id!r} has no sinks")
        for role, (bid, pin) in [("source", net.source)] + [("sink", s) for s in net.sinks]:
            if bid not in blocks:
                raise NetlistError(f"net {net.id!r}: unknown block {bid!r}")
            _check_pin(arch, blocks[bid], pin, role == "source", f"net {net.id!r}")
            user = pin_users.setdefault((bid, pin), net.id)
            if user != net.id:
                raise NetlistError(f"pin {bid}.{pin} used by nets {user!r} and {net.id!r}")
        if len(set(net.sinks)) != len(net.sinks):
            raise NetlistError(f"net {net.id!r} repeats a sink pin")

    paired = set()
    for rail1, rail0 in netlist.dual_pairs:
        if rail1 == rail0:
            raise NetlistError(f"pair ({rail1!r}, {rail0!r}) must name two distinct nets")
        for rid in (rail1, rail0):
            if rid not in nets:
                raise NetlistError(f"pair references unknown net {rid!r}")
            if rid in paired:
                raise NetlistError(f"net {rid!r} appears in more than one pair")
            paired.add(rid)
        n1, n0 = nets[rail1], nets[rail0]
        loc = lambda bid: (blocks[bid].x, blocks[bid].y)
        if loc(n1.source[0]) != loc(n0.source[0]):
            raise NetlistError(f"pair ({rail1!r}, {rail0!r}): source blocks differ")
        if sorted(loc(b) for b, _ in n1.sinks) != sorted(loc(b) for b, _ in n0.sinks):
            raise NetlistError(f"pair ({rail1!r}, {rail0!r}): sink blocks differ")


# --- text format ---------------------------------------------------------------


def netlist_to_text(netlist: PlacedNetlist) -> str:
    lines = []
    for b in netlist.blocks:
        lines.append(f"block {b.id} {b.kind.value} {b.x} {b.y}")
    for n in netlist.nets:
        pins = " ".join(f"{bid}.{pin}" for bid, pin in (n.source,) + n.sinks)
        lines.append(f"net {n.id} {pins}")
    for rail1, rail0 in netlist.dual_pairs:
        lines.append(f"pair {rail1} {rail0}")
    return "\n".join(lines) + "\n"


def parse_netlist_text(text: str, name: str = "netlist") -> PlacedNetlist:
    blocks, nets, pairs = [], [], []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        kind, args = parts[0], parts[1:]
        if kind == "block":
            if len(args) != 4:
                raise NetlistError("block takes: id kind x y", lineno)
            try:
                bkind = BlockKind(args[1])
            except ValueError:
                raise NetlistError(f"unknown block kind {args[1]!r}", lineno) from None
            try:
                x, y = int(args[2]), int(args[3])
            except ValueError:
                raise NetlistError("block coordinates must be integers", lineno) from None
            blocks.append(Block(args[0], bkind, x, y))
        elif kind == "net":
            if len(args) < 3:
                raise NetlistError("net takes: id source sink [sink ...]", lineno)
            refs = []
            for ref in args[1:]:
                bid, dot, pin = ref.partition(".")
                if not dot or not bid or not pin:
                    raise NetlistError(f"malformed pin reference {ref!r}", lineno)
                refs.append((bid, pin))
            nets.append(Net(args[0], refs[0], tuple(refs[1:])))
        elif kind == "pair":
            if len(args) != 2:
                raise NetlistError("pair takes: rail1_net rail0_net", lineno)
            pairs.append((args[0], args[1]))
        else:
            raise NetlistError(f"unknown directive {kind!r}", lineno)
    return PlacedNetlist(tuple(blocks), tuple(nets), tuple(pairs), name=name)


def load_netlist(path, name: str | None = None) -> PlacedNetlist:
    with open(path, "r", encoding="utf-8") as fh:
        return parse_netlist_text(fh.read(), name=name or str(path))


def save_netlist(netlist: PlacedNetlist, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(netlist_to_text(netlist))


# --- synthetic dual-rail benchmarks ----------------------------------------------


@dataclass
class _PinPool:
    """Free pin indices of one placed block."""

    inputs: list[int] = field(default_factory=list)
    outputs: list[int] = field(default_factory=list)


def random_dual_netlist(
    arch: ArchSpec,
    n_pairs: int,
    seed: int,
    max_fanout: int = 3,
    n_unpaired: int = 0,
    name: str | None = None,
) -> PlacedNetlist:
    """Random WDDL-style placed netlist: every logic net is a complementary rail pair.

    Rails of a pair take adjacent output pins of the source PLB and adjacent
    input pins of every sink PLB, mimicking a placed dual-rail design.  Fanout
    is drawn from a distribution skewed toward 1 and 2, capped at max_fanout.
    Net ids carry the rail as a prefix (r1n003 / r0n003), so routers that walk
    nets in id order handle one whole rail before the other.
    """
    rng = random.Random(seed)
    cells = [(x, y) for y in range(arch.grid_h) for x in range(arch.grid_w)]
    if len(cells) < 2 and (n_pairs or n_unpaired):
        raise NetlistError("nets need two distinct cells; the grid has one")
    pools = {c: _PinPool(list(range(arch.plb_inputs)), list(range(arch.plb_outputs))) for c in cells}
    used: set[tuple[int, int]] = set()
    blocks: dict[tuple[int, int], Block] = {}

    def block_for(cell: tuple[int, int]) -> Block:
        if cell not in blocks:
            blocks[cell] = Block(f"b{cell[0]}_{cell[1]}", BlockKind.PLB, *cell)
            used.add(cell)
        return blocks[cell]

    def take(pool: list[int], count: int) -> list[int] | None:
        if len(pool) < count:
            return None
        return [pool.pop(0) for _ in range(count)]

    fanout_choices = [1] * 4 + [2] * 3 + [3] * 2 + [4]
    nets: list[Net] = []
    pairs: list[tuple[str, str]] = []
    for k in range(n_pairs):
        for _attempt in range(64):
            src_cell = rng.choice(cells)
            fanout = min(max_fanout, rng.choice(fanout_choices), len(cells) - 1)
            sink_cells = rng.sample([c for c in cells if c != src_cell], fanout)
            src_pins = take(pools[src_cell].outputs, 2)
            if src_pins is None:
                continue
            sink_pins = []
            ok = True
            for cell in sink_cells:
                got = take(pools[cell].inputs, 2)
                if got is None:
                    ok = False
                    break
                sink_pins.append(got)
            if not ok:
                # return what we took; order is cosmetic, pools are sets of free pins
                pools[src_cell].outputs.extend(src_pins)
                for cell, got in zip(sink_cells, sink_pins):
                    pools[cell].inputs.extend(got)
                continue
            src = block_for(src_cell)
            rails = []
            for rail, (srcpin, which) in enumerate(zip(src_pins, (0, 1))):
                sinks = tuple(
                    (block_for(cell).id, f"i{pins[which]}")
                    for cell, pins in zip(sink_cells, sink_pins)
                )
                net_id = f"r{1 - rail}n{k:03d}"
                rails.append(net_id)
                nets.append(Net(net_id, (src.id, f"o{srcpin}"), sinks))
            pairs.append((rails[0], rails[1]))
            break
        else:
            raise NetlistError(
                f"could not place pair {k}: pin pools exhausted for {n_pairs} pairs "
                f"on a {arch.grid_w}x{arch.grid_h} grid"
            )
    for k in range(n_unpaired):
        for _attempt in range(64):
            src_cell = rng.choice(cells)
            sink_cell = rng.choice([c for c in cells if c != src_cell])
            src_pins = take(pools[src_cell].outputs, 1)
            if src_pins is None:
                continue
            sink_pins = take(pools[sink_cell].inputs, 1)
            if sink_pins is None:
                pools[src_cell].outputs.extend(src_pins)
                continue
            nets.append(
                Net(
                    f"u{k:03d}",
                    (block_for(src_cell).id, f"o{src_pins[0]}"),
                    ((block_for(sink_cell).id, f"i{sink_pins[0]}"),),
                )
            )
            break
        else:
            raise NetlistError(f"could not place unpaired net {k}")

    ordered_blocks = tuple(blocks[c] for c in sorted(blocks))
    label = name or f"synthetic-s{seed}"
    return PlacedNetlist(ordered_blocks, tuple(nets), tuple(pairs), name=label)


def congested_dual_netlist(
    arch: ArchSpec,
    seed: int,
    n_background: int | None = None,
    name: str | None = None,
) -> PlacedNetlist:
    """Placed dual-rail netlist with bus-style traffic concentrated on a few channels.

    Two interior rows each carry a full set of long left-to-right pairs and one
    interior column carries bottom-to-top pairs, so the channels next to them
    see more demand than the rest of the fabric and minimum-width routing has
    to spill rails onto neighbouring channels.  Background pairs between
    otherwise unused blocks add unrelated traffic.  Requires at least a 4x4
    grid.  Net ids follow the same rail-prefix convention as
    random_dual_netlist.
    """
    if arch.grid_w < 4 or arch.grid_h < 4:
        raise NetlistError(
            f"congested netlist needs at least a 4x4 grid, got {arch.grid_w}x{arch.grid_h}"
        )
    rng = random.Random(seed)
    gw, gh = arch.grid_w, arch.grid_h
    cells = [(x, y) for y in range(gh) for x in range(gw)]
    pools = {c: _PinPool(list(range(arch.plb_inputs)), list(range(arch.plb_outputs))) for c in cells}
    blocks: dict[tuple[int, int], Block] = {}
    nets: list[Net] = []
    pairs: list[tuple[str, str]] = []

    def block_for(cell: tuple[int, int]) -> Block:
        if cell not in blocks:
            blocks[cell] = Block(f"b{cell[0]}_{cell[1]}", BlockKind.PLB, *cell)
        return blocks[cell]

    def add_pair(src_cell: tuple[int, int], sink_cells: list[tuple[int, int]]) -> bool:
        if len(pools[src_cell].outputs) < 2:
            return False
        if any(len(pools[c].inputs) < 2 for c in sink_cells):
            return False
        k = len(pairs)
        src = block_for(src_cell)
        src_pins = [pools[src_cell].outputs.pop(0) for _ in range(2)]
        sink_pins = [[pools[c].inputs.pop(0) for _ in range(2)] for c in sink_cells]
        for rail, srcpin in enumerate(src_pins):
            sinks = tuple(
                (block_for(c).id, f"i{pins[rail]}") for c, pins in zip(sink_cells, sink_pins)
            )
            nets.append(Net(f"r{1 - rail}n{k:03d}", (src.id, f"o{srcpin}"), sinks))
        pairs.append((f"r1n{k:03d}", f"r0n{k:03d}"))
        return True

    half = gw // 2
    for row in rng.sample(range(1, gh - 1), 2):
        src_cols = rng.sample(range(half), half)
        sink_cols = rng.sample(range(half, gw), gw - half)
        for sx, tx in zip(src_cols, sink_cols):
            add_pair((sx, row), [(tx, row)])
    col = rng.randrange(1, gw - 1)
    vhalf = gh // 2
    src_rows = rng.sample(range(vhalf), vhalf)
    sink_rows = rng.sample(range(vhalf, gh), gh - vhalf)
    for sy, ty in zip(src_rows, sink_rows):
        add_pair((col, sy), [(col, ty)])

    want = len(pairs) + (gw // 2 if n_background is None else n_background)
    used_src: set[tuple[int, int]] = set()
    used_sink: set[tuple[int, int]] = set()
    attempts = 0
    while len(pairs) < want and attempts < 5000:
        attempts += 1
        src_cell = rng.choice(cells)
        if src_cell in used_src:
            continue
        fanout = rng.choice([1, 1, 2])
        free = [c for c in cells if c != src_cell and c not in used_sink]
        if len(free) < fanout:
            break
        sink_cells = rng.sample(free, fanout)
        if add_pair(src_cell, sink_cells):
            used_src.add(src_cell)
            used_sink.update(sink_cells)

    ordered_blocks = tuple(blocks[c] for c in sorted(blocks))
    label = name or f"congested-s{seed}"
    return PlacedNetlist(ordered_blocks, tuple(nets), tuple(pairs), name=label)
