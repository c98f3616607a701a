"""Command-line front end for batch experiments.

Five subcommands cover the flow from architecture to simulation: arch-report,
route, analyze, bitstream and simulate-config.  Every run writes its outputs
plus a manifest.json into one directory, never touching its inputs, and all
text outputs carry the run's seed so a directory is self-describing.  Given
identical inputs and seed, every subcommand reproduces its outputs byte for
byte.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field

from .arch import (
    ArchError,
    ArchSpec,
    SwitchboxKind,
    arch_hash,
    build_crossbar,
    count_config_bits,
    fc_tracks,
    load_arch,
    with_overrides,
)
from .chainsim import (
    ACK_COUNT_NOTE,
    ChainError,
    ChainState,
    DeadlockError,
    StimulusSchedule,
    TgBugModel,
    bitstream_to_text,
    events_to_csv,
    load_bitstream_file,
    load_with_bug,
)
from .elmore import RcError
from .netlist import NetlistError, load_netlist
from .plb import (
    GATE_LIBRARY,
    PlbError,
    load_gate_library,
    synthesize_lut_pair,
)
from .power import (
    PowerError,
    default_library,
    load_library,
    net_trace,
    trace_to_csv,
    twist_balance,
    xcorr_indiscernability,
    balance,
)
from .route import (
    ROUTERS,
    UnroutableError,
    load_routing,
    metrics_csv,
    min_channel_width,
    mismatch_report,
    routing_to_text,
)
from .rrg import build_rr_graph

EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_ROUTING = 3
EXIT_DEADLOCK = 4

OUTDIR_ENV = "RAILCAD_OUTDIR"

# the full handshake log records ~2 events per bit per stage traversed;
# past this many rows the in-memory log and the CSV stop being useful
EVENT_LOG_MAX_ROWS = 4_000_000


@dataclass
class RunManifest:
    subcommand: str
    inputs: dict[str, str]
    overrides: dict[str, str]
    output_dir: str
    seed: int
    outputs: list[str] = field(default_factory=list)

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2, sort_keys=True) + "\n"


class _Run:
    """Output directory handle: collision checks, seed stamping, manifest."""

    def __init__(self, subcommand: str, args, inputs: dict[str, str]):
        outdir = args.out or os.environ.get(OUTDIR_ENV) or "."
        self.manifest = RunManifest(
            subcommand=subcommand,
            inputs=inputs,
            overrides=dict(kv.split("=", 1) for kv in args.overrides),
            output_dir=outdir,
            seed=args.seed,
        )
        self._input_paths = {os.path.realpath(p) for p in inputs.values()}
        os.makedirs(outdir, exist_ok=True)

    def path(self, name: str) -> str:
        p = os.path.join(self.manifest.output_dir, name)
        if os.path.realpath(p) in self._input_paths:
            raise ArchError(f"refusing to overwrite input file {p!r}")
        return p

    def write(self, name: str, text: str, stamp_seed: bool = True) -> str:
        p = self.path(name)
        with open(p, "w", encoding="utf-8") as fh:
            if stamp_seed:
                fh.write(f"# seed={self.manifest.seed}\n")
            fh.write(text)
        self.manifest.outputs.append(name)
        return p

    def figure_path(self, name: str) -> str:
        p = self.path(name)
        self.manifest.outputs.append(name)
        return p

    def finish(self) -> None:
        p = self.path("manifest.json")
        self.manifest.outputs.append("manifest.json")
        self.manifest.outputs.sort()
        with open(p, "w", encoding="utf-8") as fh:
            fh.write(self.manifest.to_json())


def _load_arch(args) -> ArchSpec:
    arch = load_arch(args.arch)
    if args.overrides:
        arch = with_overrides(arch, dict(kv.split("=", 1) for kv in args.overrides))
    return arch


def _safe(name: str) -> str:
    return "".join(c if c.isalnum() or c in "-_." else "_" for c in name)


# --- arch-report -------------------------------------------------------------------


def cmd_arch_report(args) -> int:
    arch = _load_arch(args)
    run = _Run("arch-report", args, {"arch": args.arch})
    report = count_config_bits(arch)
    plb_xbar = build_crossbar(arch.channel_width, arch.plb_inputs + arch.plb_outputs, arch.fc_plb)
    iob_xbar = build_crossbar(arch.channel_width, arch.iob_inputs + arch.iob_outputs, arch.fc_iob)
    w = arch.channel_width
    lines = [
        f"fabric {arch.grid_w}x{arch.grid_h} channel_width={w}",
        f"switchbox {arch.switchbox_kind.value} wiring {arch.driver_mode.value}",
        f"arch_hash {arch_hash(arch)}",
        f"switches_per_box full={6 * w} half={3 * w} quarter={w}",
        f"box_counts full={(arch.grid_w - 1) * (arch.grid_h - 1)} "
        f"half={2 * (arch.grid_w - 1) + 2 * (arch.grid_h - 1)} quarter=4",
        f"plb_crossbar points={len(plb_xbar.switch_points)} "
        f"area={plb_xbar.area[0]}x{plb_xbar.area[1]} "
        f"tracks_per_pin={fc_tracks(w, arch.fc_plb)}",
        f"iob_crossbar points={len(iob_xbar.switch_points)} "
        f"area={iob_xbar.area[0]}x{iob_xbar.area[1]} "
        f"tracks_per_pin={fc_tracks(w, arch.fc_iob)}",
        "config_bits:",
    ]
    for row in report.rows:
        lines.append(f"  {row.category} {row.bits_per_unit} x {row.quantity} = {row.bits}")
    lines.append(f"config_bits_total {report.total}")
    run.write("arch_report.txt", "\n".join(lines) + "\n")
    run.write("config_bits.csv", report.to_csv())
    run.finish()
    print(f"{arch.grid_w}x{arch.grid_h} W={w}: {report.total} configuration bits")
    return EXIT_OK


# --- route -------------------------------------------------------------------------


def cmd_route(args) -> int:
    arch = _load_arch(args)
    name = os.path.splitext(os.path.basename(args.netlist))[0]
    netlist = load_netlist(args.netlist, name=name)
    run = _Run("route", args, {"arch": args.arch, "netlist": args.netlist})
    try:
        if args.min_width:
            width, routing = min_channel_width(arch, netlist, router=args.router)
            if routing is None:  # empty netlist: nothing to route at any width
                routing = ROUTERS[args.router](build_rr_graph(arch), netlist)
        else:
            routing = ROUTERS[args.router](build_rr_graph(arch), netlist)
    except UnroutableError as exc:
        lines = [f"netlist {netlist.name}", f"router {args.router}", f"error {exc}"]
        lines += [f"congested {w}" for w in exc.congested]
        run.write("congestion.txt", "\n".join(lines) + "\n")
        run.finish()
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ROUTING
    run.write("routing.txt", routing_to_text(routing))
    rep = mismatch_report(routing)
    run.write("metrics.csv", metrics_csv([rep]))
    run.finish()
    print(
        f"routed {len(routing.trees)} nets at width {routing.channel_width} "
        f"({routing.iterations} iterations), mean hop mismatch {rep.mean_mismatch:.4f}"
    )
    return EXIT_OK


# --- analyze -----------------------------------------------------------------------


def cmd_analyze(args) -> int:
    graph, routing = load_routing(args.routing)
    library = load_library(args.library) if args.library else default_library()
    inputs = {"routing": args.routing}
    if args.library:
        inputs["library"] = args.library
    run = _Run("analyze", args, inputs)

    def one_pair(item):
        idx, (rail1, rail0) = item
        w1 = net_trace(routing, rail1, library)
        w0 = net_trace(routing, rail0, library)
        return {
            "rail1": rail1,
            "rail0": rail0,
            "hops1": routing.trees[rail1].hops,
            "hops0": routing.trees[rail0].hops,
            "balance": balance(w0, w1),
            "xcorr": xcorr_indiscernability(w0, w1),
            "w1": w1,
            "w0": w0,
        }

    items = list(enumerate(routing.pairs))
    if args.jobs > 1:
        with ThreadPoolExecutor(max_workers=args.jobs) as pool:
            rows = list(pool.map(one_pair, items))
    else:
        rows = [one_pair(item) for item in items]

    csv = ["rail1,rail0,hops1,hops0,hop_mismatch,balance,xcorr"]
    for r in rows:
        csv.append(
            f"{r['rail1']},{r['rail0']},{r['hops1']},{r['hops0']},"
            f"{abs(r['hops1'] - r['hops0'])},{r['balance']:.12g},{r['xcorr']:.12g}"
        )
    run.write("analysis.csv", "\n".join(csv) + "\n")

    if graph.arch.switchbox_kind is not SwitchboxKind.SUBSET:
        twist = ["net,swaps,rail1_outer,rail1_inner,rail0_outer,rail0_inner,balanced"]
        for net_id in sorted(routing.trees):
            try:
                t = twist_balance(routing, net_id)
            except PowerError:
                twist.append(f"{net_id},branched,,,,,")
                continue
            twist.append(
                f"{net_id},{t.swaps},{t.rail1_positions[0]},{t.rail1_positions[1]},"
                f"{t.rail0_positions[0]},{t.rail0_positions[1]},{int(t.balanced)}"
            )
        run.write("twist.csv", "\n".join(twist) + "\n")

    if args.traces:
        for r in rows:
            run.write(f"trace_{_safe(r['rail1'])}.csv", trace_to_csv(r["w1"]))
            run.write(f"trace_{_safe(r['rail0'])}.csv", trace_to_csv(r["w0"]))

    if args.plots:
        from . import report as report_mod

        for r in rows:
            report_mod.pair_trace_figure(
                r["w1"], r["w0"], r["rail1"], r["rail0"],
                run.figure_path(f"pair_{_safe(r['rail1'])}_{_safe(r['rail0'])}.svg"),
            )
        if rows:
            report_mod.balance_summary_figure(
                [f"{r['rail1']}/{r['rail0']}" for r in rows],
                [r["balance"] for r in rows],
                [r["xcorr"] for r in rows],
                run.figure_path("balance_summary.svg"),
            )
    run.finish()
    if rows:
        worst = max(rows, key=lambda r: abs(r["balance"] - 1.0))
        print(
            f"analyzed {len(rows)} pairs; worst balance {worst['balance']:.6f} "
            f"({worst['rail1']}/{worst['rail0']})"
        )
    else:
        print("no dual pairs in routing dump")
    return EXIT_OK


# --- bitstream ---------------------------------------------------------------------


def _parse_gate_map(path, gates) -> list[tuple[int, int, int, str]]:
    entries = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            parts = line.split()
            if len(parts) != 3:
                raise PlbError(f"line {lineno}: expected 'plb.<x>.<y> <slot> <gate>'")
            loc, slot_s, gate = parts
            bits = loc.split(".")
            if len(bits) != 3 or bits[0] != "plb":
                raise PlbError(f"line {lineno}: bad location {loc!r}")
            try:
                x, y, slot = int(bits[1]), int(bits[2]), int(slot_s)
            except ValueError:
                raise PlbError(f"line {lineno}: malformed numbers") from None
            if slot not in (0, 1):
                raise PlbError(f"line {lineno}: slot must be 0 or 1 (two LUTs per gate)")
            if gate not in gates:
                raise PlbError(f"line {lineno}: unknown gate {gate!r}")
            entries.append((x, y, slot, gate))
    return entries


def cmd_bitstream(args) -> int:
    arch = _load_arch(args)
    graph, routing = load_routing(args.routing)
    if arch_hash(arch) != arch_hash(graph.arch):
        raise ArchError(
            f"architecture mismatch: {args.arch} is {arch_hash(arch)}, "
            f"routing dump embeds {arch_hash(graph.arch)}"
        )
    gates = load_gate_library(args.gate_library) if args.gate_library else dict(GATE_LIBRARY)
    inputs = {"arch": args.arch, "routing": args.routing}
    if args.gates:
        inputs["gates"] = args.gates
    if args.gate_library:
        inputs["gate_library"] = args.gate_library
    run = _Run("bitstream", args, inputs)

    bits = [0] * graph.total_config_bits
    for net_id in sorted(routing.trees):
        for a, b in routing.trees[net_id].edges:
            edge_idx = graph.adjacency[a].get(b)
            if edge_idx is None:
                raise ArchError(
                    f"routing dump uses a switch the fabric lacks: "
                    f"{graph.name_of(a)} -> {graph.name_of(b)}"
                )
            bits[graph.edges[edge_idx].config_bit] = 1

    if args.gates:
        for x, y, slot, gate in _parse_gate_map(args.gates, gates):
            base = graph.plb_bit_base.get((x, y))
            if base is None:
                raise PlbError(f"no PLB at ({x}, {y})")
            pair = synthesize_lut_pair(gates[gate])
            offset = base + slot * 128
            for addr in range(64):
                bits[offset + addr] = (pair.table_O0 >> addr) & 1
                bits[offset + 64 + addr] = (pair.table_O1 >> addr) & 1

    run.write("bitstream.txt", bitstream_to_text(bits, arch_hash(arch)))
    run.finish()
    print(f"{len(bits)} bits, {sum(bits)} set")
    return EXIT_OK


# --- simulate-config ---------------------------------------------------------------


def cmd_simulate_config(args) -> int:
    arch = _load_arch(args)
    stream_hash, bit_text = load_bitstream_file(args.bitstream)
    if stream_hash != arch_hash(arch):
        raise ArchError(
            f"architecture mismatch: bitstream was built for {stream_hash}, "
            f"{args.arch} is {arch_hash(arch)}"
        )
    n = count_config_bits(arch).total
    if len(bit_text) > n:
        raise ChainError(f"bitstream has {len(bit_text)} bits, the chain {n} stages")
    if args.events:
        est = 2 * len(bit_text) * n
        if est > EVENT_LOG_MAX_ROWS:
            raise ChainError(
                f"--events would log about {est} handshakes for {len(bit_text)} "
                f"bits over {n} stages (limit {EVENT_LOG_MAX_ROWS}); "
                "drop --events or audit a smaller fabric"
            )
    run = _Run("simulate-config", args, {"arch": args.arch, "bitstream": args.bitstream})
    schedule = StimulusSchedule(bit_period=args.period)
    bug = TgBugModel(enabled=args.bug, threshold_ps=args.threshold)
    state = ChainState.ready(n)
    try:
        rep = load_with_bug(
            state, bit_text, schedule, bug,
            record_events=args.events,
            engine="event" if args.events else "auto",
        )
    except DeadlockError as exc:
        run.write(
            "sim_report.txt",
            f"deadlock stage={exc.stage} time_ps={exc.time_ps}\n{exc}\n",
        )
        run.finish()
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DEADLOCK

    image_ok = rep.image[: len(bit_text)] == bit_text
    lines = [
        f"stages {rep.n_stages}",
        f"bits {len(rep.bits)}",
        f"ack_count {rep.ack_count}",
        f"elapsed_ps {rep.elapsed_ps}",
        f"throughput_ghz {rep.throughput_ghz:.4f}",
        f"engine {rep.engine}",
        f"bug_enabled {int(bug.enabled)}",
        f"bug_threshold_ps {bug.threshold_for(schedule)}",
        f"corruption_events {len(rep.corruption)}",
        f"image_matches_bits {int(image_ok)}",
        f"note {rep.note}",
    ]
    run.write("sim_report.txt", "\n".join(lines) + "\n")
    corr = ["time_ps,stage,neighbor,written"]
    for c in rep.corruption:
        corr.append(f"{c.time_ps},{c.stage},{c.neighbor},{c.written}")
    run.write("corruptions.csv", "\n".join(corr) + "\n")
    if rep.events is not None:
        run.write("events.csv", events_to_csv(rep.events))
    run.finish()
    print(
        f"{rep.ack_count} acknowledgments over {len(rep.bits)} bits, "
        f"{len(rep.corruption)} corruptions, {rep.throughput_ghz:.4f} GHz"
    )
    return EXIT_OK


# --- entry point -------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="railcad",
        description="secure-fabric CAD: route dual-rail netlists, measure balance, "
        "simulate the configuration chain",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--out", default=None, help=f"output directory (default ${OUTDIR_ENV} or .)")
        p.add_argument("--seed", type=int, default=0, help="seed recorded in outputs")
        p.add_argument(
            "--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE",
            help="architecture override, same key=value dialect as arch files",
        )

    p = sub.add_parser("arch-report", help="configuration-bit budget and switch counts")
    p.add_argument("arch")
    common(p)
    p.set_defaults(func=cmd_arch_report)

    p = sub.add_parser("route", help="route a placed netlist")
    p.add_argument("arch")
    p.add_argument("netlist")
    p.add_argument("--router", choices=sorted(ROUTERS), default="bf")
    p.add_argument("--min-width", action="store_true", help="search the least routable channel width")
    common(p)
    p.set_defaults(func=cmd_route)

    p = sub.add_parser("analyze", help="balance and cross-correlation of routed pairs")
    p.add_argument("routing")
    p.add_argument("--library", default=None, help="step-response library file")
    p.add_argument("--jobs", type=int, default=1, help="parallel pair analysis")
    p.add_argument("--plots", action="store_true", help="emit SVG figures")
    p.add_argument("--traces", action="store_true", help="emit per-net trace CSVs")
    common(p)
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("bitstream", help="pack a routing into configuration bits")
    p.add_argument("arch")
    p.add_argument("routing")
    p.add_argument("--gates", default=None, help="gate placement file: plb.<x>.<y> <slot> <gate>")
    p.add_argument("--gate-library", default=None, help="gate truth-table library file")
    common(p)
    p.set_defaults(func=cmd_bitstream)

    p = sub.add_parser("simulate-config", help="drive a bitstream through the configuration chain")
    p.add_argument("arch")
    p.add_argument("bitstream")
    p.add_argument("--bug", action="store_true", help="enable the fast-load corruption model")
    p.add_argument("--period", type=int, default=625, help="bit period in ps")
    p.add_argument("--threshold", type=int, default=None, help="corruption threshold in ps")
    p.add_argument(
        "--events", action="store_true",
        help="record the full handshake event log (short chains only; the log is quadratic)",
    )
    common(p)
    p.set_defaults(func=cmd_simulate_config)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except DeadlockError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DEADLOCK
    except UnroutableError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ROUTING
    except (ArchError, NetlistError, ChainError, PowerError, PlbError, RcError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION


if __name__ == "__main__":
    sys.exit(main())
