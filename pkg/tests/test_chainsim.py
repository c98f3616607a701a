"""Configuration chain: handshake timing, both engines, the fast-load fault."""

import random

import pytest

from railcad.chainsim import (
    ChainError,
    ChainEvent,
    ChainState,
    DeadlockError,
    IncompleteResetError,
    StimulusSchedule,
    TgBugModel,
    bitstream_to_text,
    decode_4phase,
    encode_4phase,
    events_to_csv,
    initialize_chain,
    load_bitstream,
    load_with_bug,
    parse_bitstream_text,
)
from railcad.plb import DualRailValue

NULL = DualRailValue.NULL
INVALID = DualRailValue.INVALID
NO_BUG = TgBugModel(enabled=False)


def oracle_elapsed(n, bits, schedule):
    """Every handshake event time from the causality equations, plain loops."""
    neg = float("-inf")
    bp, fl = schedule.bit_period, schedule.forward_latency
    pl, d1 = schedule.precharge_latency, schedule.data1_extra_latency
    a_prev = [neg] * n
    last = 0
    for k in range(len(bits)):
        h = fl + (d1 if bits[k] else 0)
        latch = [neg] * n
        wire = [neg] * (n + 1)
        wire[n] = max(k * bp, a_prev[n - 1] if k else neg, 0)
        for i in range(n - 1, k - 1, -1):
            latch[i] = max(wire[i + 1], a_prev[i]) + h
            if i > k:
                wire[i] = max(latch[i], a_prev[i - 1]) + fl
            elif i == 0:
                wire[0] = latch[0] + fl  # the cap acknowledges forever
        clear = [neg] * (n + 1)
        clear[n] = latch[n - 1] + pl
        for i in range(n - 1, k, -1):
            clear[i] = latch[i - 1] + pl
        ack = [neg] * n
        for i in range(n - 1, k, -1):
            ack[i] = max(clear[i], clear[i + 1]) + pl
        last = max([last] + [t for t in latch + wire + clear + ack if t > neg])
        a_prev = ack
    return int(last)


def test_encode_decode_round_trip():
    assert encode_4phase([1, 0]) == [(0, 1), (0, 0), (1, 0), (0, 0)]
    for bits in ([], [0], [1, 1, 0, 1], [0] * 9):
        assert decode_4phase(encode_4phase(bits)) == bits
    with pytest.raises(ChainError, match="symbol 0"):
        decode_4phase([(1, 1), (0, 0)])
    with pytest.raises(ChainError, match="symbol 1"):
        decode_4phase([(1, 0), (0, 1)])
    with pytest.raises(ChainError, match="ends without"):
        decode_4phase([(1, 0)])
    with pytest.raises(ChainError, match="bit 2"):
        encode_4phase("01x")


def test_chain_state_constructors():
    up = ChainState.power_up(4)
    assert up.n == 4 and not up.is_ready() and up.init_pin == 0
    assert all(v is INVALID for v in up.latches)
    ready = ChainState.ready(4)
    assert ready.is_ready() and ready.acks == [1, 1, 1, 1]
    with pytest.raises(ChainError, match="equal length"):
        ChainState([NULL], [NULL, NULL], [1])


def test_schedule_validation():
    with pytest.raises(ChainError, match="bit_period"):
        StimulusSchedule(bit_period=0)
    with pytest.raises(ChainError, match="data1_extra_latency"):
        StimulusSchedule(data1_extra_latency=-1)
    assert TgBugModel().threshold_for(StimulusSchedule()) == 200
    assert TgBugModel(threshold_ps=375).threshold_for(StimulusSchedule()) == 375


def test_reset_wave_covers_or_raises():
    schedule = StimulusSchedule()
    done = initialize_chain(ChainState.power_up(5), 400, schedule)
    assert done.is_ready() and done.init_pin == 1
    with pytest.raises(IncompleteResetError) as err:
        initialize_chain(ChainState.power_up(5), 100, schedule)
    assert err.value.stage == 2
    # stages beyond the wave that are already null are not an error
    assert initialize_chain(ChainState.ready(5), 0, schedule).is_ready()
    with pytest.raises(ChainError, match=">= 0"):
        initialize_chain(ChainState.power_up(5), -1, schedule)


def test_event_engine_matches_causality_oracle():
    rng = random.Random(7)
    for _ in range(40):
        n = rng.randint(1, 24)
        m = rng.randint(0, n)
        bits = [rng.randint(0, 1) for _ in range(m)]
        schedule = StimulusSchedule(
            bit_period=rng.randint(1, 900),
            forward_latency=rng.randint(1, 300),
            precharge_latency=rng.randint(1, 300),
            data1_extra_latency=rng.randint(0, 150),
        )
        report = load_with_bug(ChainState.ready(n), bits, schedule, NO_BUG, engine="event")
        assert report.ack_count == m
        assert report.elapsed_ps == oracle_elapsed(n, bits, schedule)
        assert report.image == "".join(str(b) for b in bits) + "-" * (n - m)


def test_engines_agree():
    rng = random.Random(19)
    for _ in range(25):
        n = rng.randint(2, 40)
        bits = [rng.randint(0, 1) for _ in range(rng.randint(1, n))]
        schedule = StimulusSchedule(
            bit_period=rng.randint(50, 800),
            forward_latency=rng.randint(20, 200),
            precharge_latency=rng.randint(10, 150),
            data1_extra_latency=rng.choice([0, 0, 35]),
        )
        bug = TgBugModel(enabled=rng.random() < 0.5)
        ev = load_with_bug(ChainState.ready(n), bits, schedule, bug, engine="event")
        rc = load_with_bug(ChainState.ready(n), bits, schedule, bug, engine="recurrence")
        assert ev.elapsed_ps == rc.elapsed_ps
        assert ev.ack_count == rc.ack_count
        assert ev.image == rc.image
        assert [(c.stage, c.neighbor, c.written) for c in ev.corruption] == [
            (c.stage, c.neighbor, c.written) for c in rc.corruption
        ]


def test_64_bit_load_reports_1_6_ghz():
    bits = [k % 2 for k in range(64)]
    report = load_bitstream(ChainState.ready(64), bits, StimulusSchedule())
    assert report.elapsed_ps == 39535
    assert f"{report.throughput_ghz:.4f}" == "1.6188"
    assert report.ack_count == 64
    assert report.image == "".join(str(b) for b in bits)


def test_partial_fill_parks_from_the_cap():
    report = load_bitstream(ChainState.ready(8), [1, 0, 1], StimulusSchedule())
    assert report.image == "101-----"
    state = report.final_state
    assert state.acks == [0, 0, 0, 1, 1, 1, 1, 1]
    assert state.wires[0] is DualRailValue.ONE  # parked against the cap
    with pytest.raises(ChainError, match="exceeds chain length"):
        load_bitstream(ChainState.ready(2), [1, 0, 1], StimulusSchedule())


def test_engine_selection_rules():
    schedule = StimulusSchedule()
    auto_small = load_bitstream(ChainState.ready(16), [1] * 16, schedule)
    assert auto_small.engine == "event"
    auto_large = load_bitstream(ChainState.ready(600), [1] * 600, schedule)
    assert auto_large.engine == "recurrence"
    logged = load_bitstream(ChainState.ready(600), [1] * 600, schedule, record_events=True)
    assert logged.engine == "event" and logged.events
    with pytest.raises(ChainError, match="event log requires"):
        load_bitstream(ChainState.ready(4), [1], schedule, record_events=True, engine="recurrence")
    with pytest.raises(ChainError, match="initialised chain"):
        load_bitstream(ChainState.power_up(4), [1], schedule, engine="recurrence")
    with pytest.raises(ChainError, match="unknown engine"):
        load_bitstream(ChainState.ready(4), [1], schedule, engine="both")


def test_zeros_never_corrupt():
    bug = TgBugModel(enabled=True)
    for period in (1, 10, 199, 200, 625):
        schedule = StimulusSchedule(bit_period=period)
        report = load_with_bug(ChainState.ready(32), [0] * 32, schedule, bug)
        assert report.corruption == []
        assert report.image == "0" * 32


def test_ones_corrupt_only_below_threshold():
    bug = TgBugModel(enabled=True)  # threshold defaults to 2 * forward latency
    bits = [0, 1, 0, 1, 1, 0, 0, 1]
    slow = load_with_bug(ChainState.ready(8), bits, StimulusSchedule(bit_period=200), bug)
    assert slow.corruption == []
    fast = load_with_bug(ChainState.ready(8), bits, StimulusSchedule(bit_period=199), bug)
    assert len(fast.corruption) >= 1
    for c in fast.corruption:
        assert bits[c.stage] == 1
        assert c.neighbor == c.stage - 1
        assert c.written == "1"
        assert fast.image[c.neighbor] == "1"
    # every parked '1' with a neighbour toward the cap fires exactly once
    assert len(fast.corruption) == sum(1 for s, b in enumerate(bits) if b and s > 0)


def test_corruption_copy_can_be_invisible():
    # a '1' written over a stage that already held '1' leaves no image trace,
    # but the same write over a '0' flips it
    bug = TgBugModel(enabled=True)
    report = load_with_bug(ChainState.ready(4), [0, 1, 1, 0], StimulusSchedule(bit_period=100), bug)
    assert [(c.stage, c.neighbor) for c in report.corruption] == [(1, 0), (2, 1)]
    assert report.image == "1110"


def test_corruption_at_the_cap_edge():
    bug = TgBugModel(enabled=True)
    report = load_with_bug(ChainState.ready(4), [1, 0, 0, 0], StimulusSchedule(bit_period=100), bug)
    assert [(c.stage, c.neighbor, c.written) for c in report.corruption] == [(0, -1, "")]
    assert report.image == "1000"


def test_invalid_injection_marks_the_image():
    bug = TgBugModel(enabled=True, inject_invalid=True)
    report = load_with_bug(ChainState.ready(4), [0, 1, 0, 0], StimulusSchedule(bit_period=100), bug)
    assert [(c.stage, c.neighbor, c.written) for c in report.corruption] == [(1, 0, "X")]
    assert report.image == "X100"


def test_custom_threshold_overrides_default():
    bug = TgBugModel(enabled=True, threshold_ps=50)
    report = load_with_bug(ChainState.ready(4), [1, 1, 1, 1], StimulusSchedule(bit_period=100), bug)
    assert report.corruption == []  # 100 >= 50, the stream is slow enough


def test_deadlock_from_a_stuck_stage():
    # stage 0 powered up invalid and never acknowledged: the pipeline backs up
    state = ChainState([INVALID, NULL, NULL, NULL], [NULL] * 4, [0, 1, 1, 1])
    with pytest.raises(DeadlockError) as err:
        load_bitstream(state, [1, 1, 1, 1], StimulusSchedule())
    assert err.value.stage == 0
    assert err.value.time_ps > 0
    assert "3 of 4" in str(err.value)


def test_event_log_structure():
    report = load_bitstream(ChainState.ready(3), [1, 0], StimulusSchedule(), record_events=True)
    events = report.events
    assert events == sorted(events, key=lambda e: e.time_ps)
    env = [e for e in events if e.stage == -1]
    assert [e.kind for e in env] == ["present", "rtz"] * 2
    kinds = {e.kind for e in events}
    assert {"latch", "forward", "clear", "ack_rise"} <= kinds
    csv = events_to_csv(events)
    lines = csv.strip().splitlines()
    assert lines[0] == "time_ps,stage,event_kind,value"
    assert len(lines) == len(events) + 1


def test_ack_note_on_every_report():
    report = load_bitstream(ChainState.ready(4), [1], StimulusSchedule())
    assert "acknowledge falling edges" in report.note
    assert "one more" in report.note


def test_empty_load():
    report = load_bitstream(ChainState.ready(4), [], StimulusSchedule())
    assert report.ack_count == 0 and report.elapsed_ps == 0
    assert report.throughput_ghz == 0.0
    assert report.image == "----"


def test_bitstream_file_format():
    text = bitstream_to_text([1, 0, 1], "0123456789abcdef")
    assert text == "arch=0123456789abcdef\n101\n"
    assert parse_bitstream_text(text) == ("0123456789abcdef", "101")
    wrapped = "# comment\narch=0123456789abcdef\n10\n1\n"
    assert parse_bitstream_text(wrapped) == ("0123456789abcdef", "101")
    with pytest.raises(ChainError, match="arch="):
        parse_bitstream_text("101\n")
    with pytest.raises(ChainError, match="malformed arch hash"):
        parse_bitstream_text("arch=xyz\n101\n")
    with pytest.raises(ChainError, match="'0'/'1'"):
        parse_bitstream_text("arch=0123456789abcdef\n1012\n")
