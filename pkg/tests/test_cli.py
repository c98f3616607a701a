"""End-to-end CLI runs: outputs, manifests, exit codes, reproducibility."""

import filecmp
import json
import os

import pytest

from railcad.arch import ArchSpec, SwitchboxKind, arch_hash, count_config_bits, save_arch
from railcad.chainsim import DeadlockError, save_bitstream_file
from railcad.cli import EXIT_DEADLOCK, EXIT_OK, EXIT_ROUTING, EXIT_VALIDATION, main
from railcad.netlist import Block, BlockKind, Net, PlacedNetlist, random_dual_netlist, save_netlist
from railcad.plb import GATE_LIBRARY, synthesize_lut_pair
from railcad.rrg import build_rr_graph

PROTO = ArchSpec()


@pytest.fixture(scope="module")
def ws(tmp_path_factory):
    """Shared inputs plus one finished route, reused across the module."""
    d = tmp_path_factory.mktemp("ws")
    save_arch(PROTO, d / "proto.arch")
    netlist = random_dual_netlist(PROTO, n_pairs=3, seed=4)
    save_netlist(netlist, d / "pairs.net")
    (d / "gates.txt").write_text("plb.0.0 0 and2\nplb.2.2 1 xor2\n")
    routed = d / "routed"
    rc = main(["route", str(d / "proto.arch"), str(d / "pairs.net"),
               "--router", "dual-bf", "--out", str(routed)])
    assert rc == EXIT_OK
    return d


def read(path):
    with open(path, "r", encoding="utf-8") as fh:
        return fh.read()


def manifest_of(outdir):
    return json.loads(read(os.path.join(outdir, "manifest.json")))


def assert_identical_trees(d1, d2):
    cmp = filecmp.dircmp(d1, d2)
    assert not cmp.left_only and not cmp.right_only
    same, diff, errors = filecmp.cmpfiles(d1, d2, cmp.common_files, shallow=False)
    assert not diff and not errors, (diff, errors)


def test_arch_report_outputs(ws, tmp_path, capsys):
    out = tmp_path / "rep"
    assert main(["arch-report", str(ws / "proto.arch"), "--out", str(out)]) == EXIT_OK
    report = read(out / "arch_report.txt")
    assert "fabric 3x3 channel_width=8" in report
    assert "switches_per_box full=48 half=24 quarter=8" in report
    assert "config_bits_total 4691" in report
    assert read(out / "config_bits.csv").strip().endswith("total,,,4691")
    m = manifest_of(out)
    assert m["subcommand"] == "arch-report"
    assert m["outputs"] == ["arch_report.txt", "config_bits.csv", "manifest.json"]
    assert "4691 configuration bits" in capsys.readouterr().out


def test_arch_report_narrowest_fabric(tmp_path):
    save_arch(ArchSpec(channel_width=1, fc_iob=1.0), tmp_path / "w1.arch")
    out = tmp_path / "rep"
    assert main(["arch-report", str(tmp_path / "w1.arch"), "--out", str(out)]) == EXIT_OK
    assert "switches_per_box full=6 half=3 quarter=1" in read(out / "arch_report.txt")


def test_overrides_change_the_fabric(ws, tmp_path):
    out = tmp_path / "rep"
    rc = main(["arch-report", str(ws / "proto.arch"), "--set", "channel_width=4",
               "--set", "fc_iob=1.0", "--out", str(out)])
    assert rc == EXIT_OK
    assert "fabric 3x3 channel_width=4" in read(out / "arch_report.txt")
    assert manifest_of(out)["overrides"] == {"channel_width": "4", "fc_iob": "1.0"}


def test_malformed_arch_names_the_line(tmp_path, capsys):
    bad = tmp_path / "bad.arch"
    bad.write_text("grid_w = 3\nchannel_width = broken\n")
    assert main(["arch-report", str(bad), "--out", str(tmp_path / "o")]) == EXIT_VALIDATION
    assert "line 2" in capsys.readouterr().err


def test_route_outputs(ws):
    out = ws / "routed"
    routing = read(out / "routing.txt")
    assert routing.startswith("# seed=0\n")
    assert "router dual-bf" in routing and "netlist pairs" in routing
    metrics = read(out / "metrics.csv").splitlines()
    assert metrics[1] == "netlist,router,channel_width,mean_mismatch,max_mismatch"
    assert metrics[2] == "pairs,dual-bf,8,0.0000,0"


def test_route_min_width(ws, tmp_path, capsys):
    out = tmp_path / "min"
    rc = main(["route", str(ws / "proto.arch"), str(ws / "pairs.net"),
               "--router", "dual-bf", "--min-width", "--out", str(out)])
    assert rc == EXIT_OK
    width = int(capsys.readouterr().out.split("width ")[1].split()[0])
    assert width < PROTO.channel_width
    assert f"arch channel_width={width}" in read(out / "routing.txt")


def test_unroutable_writes_congestion_report(tmp_path, capsys):
    arch = ArchSpec(grid_w=2, grid_h=1, channel_width=1, fc_iob=1.0)
    save_arch(arch, tmp_path / "tight.arch")
    netlist = PlacedNetlist(
        (Block("a", BlockKind.PLB, 0, 0), Block("b", BlockKind.PLB, 1, 0)),
        (
            Net("n1", ("a", "o0"), (("b", "i0"),)),
            Net("n2", ("a", "o1"), (("b", "i1"),)),
        ),
    )
    save_netlist(netlist, tmp_path / "hot.net")
    out = tmp_path / "o"
    rc = main(["route", str(tmp_path / "tight.arch"), str(tmp_path / "hot.net"),
               "--out", str(out)])
    assert rc == EXIT_ROUTING
    report = read(out / "congestion.txt")
    assert "error" in report and "congested" in report
    assert "error:" in capsys.readouterr().err
    assert manifest_of(out)["outputs"] == ["congestion.txt", "manifest.json"]


def test_analyze_outputs(ws, tmp_path):
    out = tmp_path / "an"
    rc = main(["analyze", str(ws / "routed" / "routing.txt"),
               "--plots", "--traces", "--out", str(out)])
    assert rc == EXIT_OK
    rows = read(out / "analysis.csv").splitlines()
    assert rows[1] == "rail1,rail0,hops1,hops0,hop_mismatch,balance,xcorr"
    assert len(rows) == 2 + 3
    for row in rows[2:]:
        fields = row.split(",")
        assert fields[4] == "0"  # dual-bf pairs never mismatch
        assert float(fields[5]) == pytest.approx(1.0, abs=1e-9)
        assert float(fields[6]) == pytest.approx(1.0, abs=1e-9)
    outputs = manifest_of(out)["outputs"]
    assert "balance_summary.svg" in outputs
    assert sum(1 for o in outputs if o.startswith("pair_") and o.endswith(".svg")) == 3
    assert sum(1 for o in outputs if o.startswith("trace_")) == 6
    assert "twist.csv" not in outputs  # subset fabrics have no twist accounting
    svg = read(out / "balance_summary.svg")
    assert svg.lstrip().startswith("<?xml")


def test_analyze_jobs_match_serial(ws, tmp_path):
    serial = tmp_path / "s"
    parallel = tmp_path / "p"
    routing = str(ws / "routed" / "routing.txt")
    assert main(["analyze", routing, "--out", str(serial)]) == EXIT_OK
    assert main(["analyze", routing, "--jobs", "4", "--out", str(parallel)]) == EXIT_OK
    assert read(serial / "analysis.csv") == read(parallel / "analysis.csv")


def test_analyze_twist_fabric_emits_twist_csv(tmp_path):
    arch = ArchSpec(grid_w=3, grid_h=3, channel_width=4,
                    switchbox_kind=SwitchboxKind.TWIST_ON_TURN, fc_iob=0.5)
    save_arch(arch, tmp_path / "twist.arch")
    netlist = random_dual_netlist(arch, n_pairs=2, seed=6)
    save_netlist(netlist, tmp_path / "t.net")
    routed = tmp_path / "r"
    assert main(["route", str(tmp_path / "twist.arch"), str(tmp_path / "t.net"),
                 "--out", str(routed)]) == EXIT_OK
    out = tmp_path / "an"
    assert main(["analyze", str(routed / "routing.txt"), "--out", str(out)]) == EXIT_OK
    twist = read(out / "twist.csv").splitlines()
    assert twist[1] == "net,swaps,rail1_outer,rail1_inner,rail0_outer,rail0_inner,balanced"
    assert len(twist) == 2 + 4  # one row per routed net


def test_bitstream_packs_routing_and_gates(ws, tmp_path):
    out = tmp_path / "bits"
    rc = main(["bitstream", str(ws / "proto.arch"), str(ws / "routed" / "routing.txt"),
               "--gates", str(ws / "gates.txt"), "--out", str(out)])
    assert rc == EXIT_OK
    lines = [l for l in read(out / "bitstream.txt").splitlines() if not l.startswith("#")]
    assert lines[0] == f"arch={arch_hash(PROTO)}"
    bits = lines[1]
    assert len(bits) == 4691
    graph = build_rr_graph(PROTO)
    base = graph.plb_bit_base[(0, 0)]
    pair = synthesize_lut_pair(GATE_LIBRARY["and2"])
    for addr in range(64):
        assert int(bits[base + addr]) == (pair.table_O0 >> addr) & 1
        assert int(bits[base + 64 + addr]) == (pair.table_O1 >> addr) & 1
    base22 = graph.plb_bit_base[(2, 2)] + 128  # slot 1
    xor_pair = synthesize_lut_pair(GATE_LIBRARY["xor2"])
    assert int(bits[base22]) == xor_pair.table_O0 & 1


def test_bitstream_rejects_wrong_arch(ws, tmp_path, capsys):
    rc = main(["bitstream", str(ws / "proto.arch"), str(ws / "routed" / "routing.txt"),
               "--set", "channel_width=4", "--set", "fc_iob=1.0",
               "--out", str(tmp_path / "o")])
    assert rc == EXIT_VALIDATION
    assert "architecture mismatch" in capsys.readouterr().err


def test_bitstream_rejects_bad_gate_map(ws, tmp_path, capsys):
    gates = tmp_path / "g.txt"
    gates.write_text("plb.0.0 0 not_a_gate\n")
    rc = main(["bitstream", str(ws / "proto.arch"), str(ws / "routed" / "routing.txt"),
               "--gates", str(gates), "--out", str(tmp_path / "o")])
    assert rc == EXIT_VALIDATION
    assert "unknown gate" in capsys.readouterr().err


def test_simulate_config_report(ws, tmp_path):
    bits = tmp_path / "full.bits"
    save_bitstream_file("10" * (4691 // 2) + "1", arch_hash(PROTO), bits)
    out = tmp_path / "sim"
    rc = main(["simulate-config", str(ws / "proto.arch"), str(bits), "--out", str(out)])
    assert rc == EXIT_OK
    report = read(out / "sim_report.txt")
    assert "stages 4691" in report
    assert "ack_count 4691" in report
    assert "image_matches_bits 1" in report
    assert "corruption_events 0" in report
    assert "engine recurrence" in report
    assert "acknowledge falling edges" in report
    assert read(out / "corruptions.csv").strip().endswith("time_ps,stage,neighbor,written")


def test_simulate_config_bug_and_events(tmp_path):
    tiny = ArchSpec(grid_w=1, grid_h=1, channel_width=2, fc_iob=1.0)
    save_arch(tiny, tmp_path / "tiny.arch")
    bits = tmp_path / "tiny.bits"
    save_bitstream_file("0110", arch_hash(tiny), bits)
    out = tmp_path / "sim"
    rc = main(["simulate-config", str(tmp_path / "tiny.arch"), str(bits),
               "--bug", "--period", "100", "--events", "--out", str(out)])
    assert rc == EXIT_OK
    report = read(out / "sim_report.txt")
    assert "bug_enabled 1" in report
    assert "bug_threshold_ps 200" in report
    assert "corruption_events 2" in report
    assert "image_matches_bits 0" in report
    corr = read(out / "corruptions.csv").splitlines()
    assert len(corr) == 2 + 2
    events = read(out / "events.csv").splitlines()
    assert events[1] == "time_ps,stage,event_kind,value"
    assert len(events) > 10


def test_simulate_config_rejects_wrong_hash(ws, tmp_path, capsys):
    bits = tmp_path / "other.bits"
    other = ArchSpec(channel_width=4)
    save_bitstream_file("101", arch_hash(other), bits)
    rc = main(["simulate-config", str(ws / "proto.arch"), str(bits),
               "--out", str(tmp_path / "o")])
    assert rc == EXIT_VALIDATION
    assert "architecture mismatch" in capsys.readouterr().err


def test_simulate_config_event_log_size_cap(ws, tmp_path, capsys):
    bits = tmp_path / "full.bits"
    save_bitstream_file("10" * (4691 // 2) + "1", arch_hash(PROTO), bits)
    out = tmp_path / "sim"
    rc = main(["simulate-config", str(ws / "proto.arch"), str(bits),
               "--events", "--out", str(out)])
    assert rc == EXIT_VALIDATION
    assert "drop --events" in capsys.readouterr().err
    assert not out.exists()


def test_simulate_config_rejects_overlong_stream(tmp_path, capsys):
    tiny = ArchSpec(grid_w=1, grid_h=1, channel_width=2, fc_iob=1.0)
    save_arch(tiny, tmp_path / "tiny.arch")
    n = count_config_bits(tiny).total
    bits = tmp_path / "long.bits"
    save_bitstream_file("1" * (n + 1), arch_hash(tiny), bits)
    rc = main(["simulate-config", str(tmp_path / "tiny.arch"), str(bits),
               "--out", str(tmp_path / "o")])
    assert rc == EXIT_VALIDATION
    assert "stages" in capsys.readouterr().err


def test_deadlock_exit_code(ws, tmp_path, monkeypatch, capsys):
    bits = tmp_path / "b.bits"
    save_bitstream_file("101", arch_hash(PROTO), bits)

    def stuck(*_args, **_kwargs):
        raise DeadlockError(7, 1234, "chain deadlocked at 1234 ps")

    monkeypatch.setattr("railcad.cli.load_with_bug", stuck)
    out = tmp_path / "sim"
    rc = main(["simulate-config", str(ws / "proto.arch"), str(bits), "--out", str(out)])
    assert rc == EXIT_DEADLOCK
    assert "deadlock stage=7 time_ps=1234" in read(out / "sim_report.txt")
    assert "deadlocked" in capsys.readouterr().err


def test_refuses_to_overwrite_inputs(tmp_path, capsys):
    save_arch(PROTO, tmp_path / "arch_report.txt")  # collides with the output name
    rc = main(["arch-report", str(tmp_path / "arch_report.txt"), "--out", str(tmp_path)])
    assert rc == EXIT_VALIDATION
    assert "refusing to overwrite" in capsys.readouterr().err


def test_outdir_env_default(ws, tmp_path, monkeypatch):
    monkeypatch.setenv("RAILCAD_OUTDIR", str(tmp_path / "envout"))
    assert main(["arch-report", str(ws / "proto.arch")]) == EXIT_OK
    assert (tmp_path / "envout" / "arch_report.txt").exists()


def test_seed_is_stamped(ws, tmp_path):
    out = tmp_path / "o"
    assert main(["arch-report", str(ws / "proto.arch"), "--seed", "7",
                 "--out", str(out)]) == EXIT_OK
    assert read(out / "arch_report.txt").startswith("# seed=7\n")
    assert manifest_of(out)["seed"] == 7


@pytest.mark.parametrize("subcommand", ["arch-report", "route", "analyze", "bitstream", "simulate-config"])
def test_reruns_are_byte_identical(ws, tmp_path, subcommand):
    routing = str(ws / "routed" / "routing.txt")
    bits = tmp_path / "b.bits"
    save_bitstream_file("110" * 100, arch_hash(PROTO), bits)
    argv = {
        "arch-report": ["arch-report", str(ws / "proto.arch")],
        "route": ["route", str(ws / "proto.arch"), str(ws / "pairs.net"), "--router", "dual-bf"],
        "analyze": ["analyze", routing, "--plots", "--traces"],
        "bitstream": ["bitstream", str(ws / "proto.arch"), routing, "--gates", str(ws / "gates.txt")],
        "simulate-config": ["simulate-config", str(ws / "proto.arch"), str(bits), "--bug", "--period", "50"],
    }[subcommand]
    out = tmp_path / "run"
    assert main(argv + ["--out", str(out)]) == EXIT_OK
    first = tmp_path / "first"
    os.rename(out, first)
    assert main(argv + ["--out", str(out)]) == EXIT_OK
    assert_identical_trees(first, out)
