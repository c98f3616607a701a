"""QDI LUT pairs: synthesis, simulation against a direct interpreter, capacity."""

import random

import pytest

from railcad.plb import (
    GATE_LIBRARY,
    GateFunction,
    LutPair,
    MappingConfig,
    PlbError,
    ProtocolError,
    DualRailValue,
    SignalingStyle,
    gate_library_to_text,
    mapping_capacity,
    parse_gate_library,
    simulate_plb,
    synthesize_lut_pair,
)

NULL = DualRailValue.NULL
ZERO = DualRailValue.ZERO
ONE = DualRailValue.ONE
VALID = (ZERO, ONE)


def interpret(f1, steps):
    """Phase rules applied directly to the 4-entry truth table, no LUTs.

    evaluate when both inputs are valid and ackin is low; reset to null when
    both inputs are null and ackin is high; hold in every other case.
    """
    o1 = o0 = 0
    out = []
    for x, y, ackin in steps:
        if x.is_valid and y.is_valid and ackin == 0:
            o1 = f1[(x.bit() << 1) | y.bit()]
            o0 = 1 - o1
        elif x is NULL and y is NULL and ackin == 1:
            o1 = o0 = 0
        out.append((o0, o1))
    return out


def legal_sequence(rng, n_steps):
    """Alternating data and null phases, random ack timing, occasional input skew."""
    steps = []
    while len(steps) < n_steps:
        x, y = rng.choice(VALID), rng.choice(VALID)
        if rng.random() < 0.3:  # one input arrives first
            steps.append((x, NULL, rng.randint(0, 1)))
        for _ in range(rng.randint(1, 3)):
            steps.append((x, y, rng.randint(0, 1)))
        for _ in range(rng.randint(1, 3)):
            steps.append((NULL, NULL, rng.randint(0, 1)))
    return steps[:n_steps]


def test_dual_rail_codewords():
    assert ZERO.bit() == 0 and ONE.bit() == 1
    assert NULL.rail0 == NULL.rail1 == 0
    assert DualRailValue.INVALID.rail0 == DualRailValue.INVALID.rail1 == 1
    assert not NULL.is_valid and not DualRailValue.INVALID.is_valid
    for bad in (NULL, DualRailValue.INVALID):
        with pytest.raises(ValueError, match="no data bit"):
            bad.bit()


def test_gate_function_completeness():
    gate = GateFunction.from_f1("and2", (0, 0, 0, 1))
    assert gate.f0 == (1, 1, 1, 0)
    with pytest.raises(PlbError, match="4-entry bit table"):
        GateFunction("bad", (0, 1), (1, 0))
    with pytest.raises(PlbError, match=r"violated at \(x=1, y=0\)"):
        GateFunction("bad", (0, 0, 1, 1), (1, 1, 1, 0))


def test_library_is_the_full_two_input_gate_space():
    assert len(GATE_LIBRARY) == 16
    assert {g.f1 for g in GATE_LIBRARY.values()} == {
        tuple((n >> i) & 1 for i in range(4)) for n in range(16)
    }


def test_frozen_lut_tables():
    assert synthesize_lut_pair(GATE_LIBRARY["and2"]).to_hex() == (
        "fffefbff00000260",
        "fffe0000fd9f0400",
    )
    assert synthesize_lut_pair(GATE_LIBRARY["xor2"]).to_hex() == (
        "fffefdbf00000420",
        "fffe0000fbdf0240",
    )


def test_lut_pair_bounds_and_hex_round_trip():
    pair = synthesize_lut_pair(GATE_LIBRARY["or2"])
    assert LutPair.from_hex(*pair.to_hex()) == pair
    with pytest.raises(PlbError, match="64 bits"):
        LutPair(1 << 64, 0)


def test_and_gate_hand_sequence():
    luts = synthesize_lut_pair(GATE_LIBRARY["and2"])
    steps = [
        (ZERO, ONE, 0),   # evaluate: 0 and 1 = 0
        (ZERO, ONE, 1),   # acknowledged, data still up: hold
        (NULL, NULL, 1),  # return to null
        (ONE, ONE, 0),    # evaluate: 1 and 1 = 1
        (NULL, NULL, 0),  # nulls before ack: hold the token
        (NULL, NULL, 1),  # reset
    ]
    assert simulate_plb(luts, steps) == [
        (ZERO, 1), (ZERO, 1), (NULL, 0), (ONE, 1), (ONE, 1), (NULL, 0),
    ]


@pytest.mark.parametrize("name", sorted(GATE_LIBRARY))
def test_simulation_matches_interpreter(name):
    gate = GATE_LIBRARY[name]
    luts = synthesize_lut_pair(gate)
    rng = random.Random(hash(name) & 0xFFFF)
    for _ in range(60):
        steps = legal_sequence(rng, 40)
        got = simulate_plb(luts, steps)
        want = interpret(gate.f1, steps)
        assert [(v.rail0, v.rail1) for v, _ in got] == want
        for value, s_out in got:
            assert value is not DualRailValue.INVALID
            assert s_out == value.rail1 ^ value.rail0 == value.rail1 | value.rail0


def test_strict_mode_rejects_protocol_breaks():
    luts = synthesize_lut_pair(GATE_LIBRARY["xor2"])
    with pytest.raises(ProtocolError, match="step 1"):
        simulate_plb(luts, [(ZERO, ZERO, 0), (DualRailValue.INVALID, ZERO, 0)])
    with pytest.raises(ProtocolError, match="null spacer"):
        simulate_plb(luts, [(ZERO, ZERO, 0), (ONE, ZERO, 0)])
    with pytest.raises(ProtocolError, match="ackin"):
        simulate_plb(luts, [(ZERO, ZERO, 2)])
    # the same token twice and a post-spacer repeat are both fine
    simulate_plb(luts, [(ZERO, ZERO, 0), (ZERO, ZERO, 0), (NULL, NULL, 1), (ZERO, ZERO, 0)])


def test_non_strict_mode_lets_invalid_through():
    luts = synthesize_lut_pair(GATE_LIBRARY["or2"])
    results = simulate_plb(
        luts, [(DualRailValue.INVALID, ONE, 0), (ONE, ZERO, 0)], strict=False
    )
    assert len(results) == 2  # no protocol policing, outputs still well defined


def test_mapping_capacity_table():
    table = {
        (SignalingStyle.EDGE_2PHASE, MappingConfig.DUAL_RAIL_2IN): 1.0,
        (SignalingStyle.LEDR_2PHASE, MappingConfig.DUAL_RAIL_2IN): 0.5,
        (SignalingStyle.LEDR_2PHASE, MappingConfig.DUAL_RAIL_3IN): 1.0,
        (SignalingStyle.FOUR_PHASE, MappingConfig.DUAL_RAIL_2IN): 0.5,
        (SignalingStyle.FOUR_PHASE, MappingConfig.DUAL_RAIL_3IN): 1.0,
        (SignalingStyle.FOUR_PHASE, MappingConfig.TRIPLE_RAIL_2IN): 2.0,
    }
    for (style, config), gates in table.items():
        assert mapping_capacity(style, config) == gates
    assert mapping_capacity(SignalingStyle.EDGE_2PHASE, MappingConfig.TRIPLE_RAIL_2IN) is None
    assert mapping_capacity(SignalingStyle.LEDR_2PHASE, MappingConfig.TRIPLE_RAIL_2IN) is None
    assert mapping_capacity(SignalingStyle.EDGE_2PHASE, MappingConfig.DUAL_RAIL_3IN) is None


def test_gate_library_text_round_trip():
    text = gate_library_to_text(GATE_LIBRARY)
    again = parse_gate_library(text)
    assert again == GATE_LIBRARY
    assert parse_gate_library("# comment\n\nmygate 0111  # trailing\n")["mygate"].f1 == (0, 1, 1, 1)


def test_gate_library_parse_errors():
    with pytest.raises(PlbError, match="line 2"):
        parse_gate_library("and2 0001\nand2 0001 extra\n")
    with pytest.raises(PlbError, match="4-bit"):
        parse_gate_library("and2 00011\n")
    with pytest.raises(PlbError, match="duplicate"):
        parse_gate_library("and2 0001\nand2 0111\n")
