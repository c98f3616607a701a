"""Dual-rail 4-phase gates on LUT6 pairs: synthesis and token-level simulation.

A 2-input gate on 1-out-of-2 encoded data computes one output rail per LUT.
Each LUT sees the four data rails, the incoming acknowledge, and its own
output fed back; the feedback slot is what gives the gate its hold state
between the evaluate and return-to-null phases.  The acknowledge the gate
sends upstream is derived from the output rails.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass


class PlbError(ValueError):
    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class ProtocolError(ValueError):
    def __init__(self, message: str, step: int | None = None):
        self.step = step
        if step is not None:
            message = f"step {step}: {message}"
        super().__init__(message)


class DualRailValue(enum.Enum):
    """1-out-of-2 codeword as (rail0, rail1)."""

    NULL = (0, 0)
    ZERO = (1, 0)
    ONE = (0, 1)
    INVALID = (1, 1)

    @property
    def rail0(self) -> int:
        return self.value[0]

    @property
    def rail1(self) -> int:
        return self.value[1]

    @property
    def is_valid(self) -> bool:
        return self.rail0 ^ self.rail1 == 1

    def bit(self) -> int:
        """Decoded Boolean value; only valid codewords decode."""
        if not self.is_valid:
            raise ValueError(f"{self.name} carries no data bit")
        return self.rail1


@dataclass(frozen=True)
class GateFunction:
    """Rail truth tables on {0,1}^2; entry index is x<<1 | y."""

    name: str
    f1: tuple[int, int, int, int]
    f0: tuple[int, int, int, int]

    def __post_init__(self):
        for label, table in (("f1", self.f1), ("f0", self.f0)):
            if len(table) != 4 or any(b not in (0, 1) for b in table):
                raise PlbError(f"gate {self.name!r}: {label} must be a 4-entry bit table")
        bad = [i for i in range(4) if self.f1[i] ^ self.f0[i] != 1]
        if bad:
            points = ", ".join(f"(x={i >> 1}, y={i & 1})" for i in bad)
            raise PlbError(
                f"gate {self.name!r}: exactly one rail must fire per input, violated at {points}"
            )

    @classmethod
    def from_f1(cls, name: str, f1) -> "GateFunction":
        table = tuple(int(b) for b in f1)
        return cls(name, table, tuple(1 - b for b in table))


# LUT address bits, most significant first.  The feedback sits in a different
# slot of each LUT; the data rails and the acknowledge load the same slots.
O0_INPUT_WIRING = ("O0", "ACKIN", "x1", "x0", "y1", "y0")
O1_INPUT_WIRING = ("ACKIN", "O1", "x1", "x0", "y1", "y0")


def o0_address(fb: int, ackin: int, x: DualRailValue, y: DualRailValue) -> int:
    return fb << 5 | ackin << 4 | x.rail1 << 3 | x.rail0 << 2 | y.rail1 << 1 | y.rail0


def o1_address(fb: int, ackin: int, x: DualRailValue, y: DualRailValue) -> int:
    return ackin << 5 | fb << 4 | x.rail1 << 3 | x.rail0 << 2 | y.rail1 << 1 | y.rail0


@dataclass(frozen=True)
class LutPair:
    """64-bit truth tables for the two output rails; bit i is the value at address i.

    Addresses follow O0_INPUT_WIRING / O1_INPUT_WIRING packed most significant
    first.  The balanced flag records that the electrical balancing scheme is
    assumed for reporting; it does not change the tables.
    """

    table_O0: int
    table_O1: int
    balanced: bool = True

    def __post_init__(self):
        for label, table in (("table_O0", self.table_O0), ("table_O1", self.table_O1)):
            if not 0 <= table < 1 << 64:
                raise PlbError(f"{label} must fit in 64 bits")

    def to_hex(self) -> tuple[str, str]:
        return (f"{self.table_O0:016x}", f"{self.table_O1:016x}")

    @classmethod
    def from_hex(cls, hex_o0: str, hex_o1: str, balanced: bool = True) -> "LutPair":
        return cls(int(hex_o0, 16), int(hex_o1, 16), balanced)


def _rail_bit(table: tuple[int, int, int, int], fb: int, ackin: int,
              x: DualRailValue, y: DualRailValue) -> int:
    if x.is_valid and y.is_valid and ackin == 0:
        return table[(x.bit() << 1) | y.bit()]
    if x is DualRailValue.NULL and y is DualRailValue.NULL and ackin == 1:
        return 0
    return fb


def synthesize_lut_pair(gate: GateFunction) -> LutPair:
    """Tables for one gate: evaluate, reset to null, or hold.

    Evaluate (both inputs valid, acknowledge low) looks the rail up in the
    gate table; reset (both inputs null, acknowledge high) clears the rail;
    every other pattern, partial and invalid inputs included, replays the
    feedback bit.
    """
    t0 = 0
    t1 = 0
    for fb in (0, 1):
        for ackin in (0, 1):
            for x in DualRailValue:
                for y in DualRailValue:
                    t0 |= _rail_bit(gate.f0, fb, ackin, x, y) << o0_address(fb, ackin, x, y)
                    t1 |= _rail_bit(gate.f1, fb, ackin, x, y) << o1_address(fb, ackin, x, y)
    return LutPair(t0, t1)


def simulate_plb(
    luts: LutPair,
    stimulus,
    strict: bool = True,
) -> list[tuple[DualRailValue, int]]:
    """Run a LUT pair over (x, y, ackin) steps from the all-null reset state.

    Returns one (output, s_out) per step with s_out = O1 xor O0.  Strict mode
    rejects Invalid inputs and a new data token presented without a null
    spacer after the previous one.
    """
    o0 = o1 = 0
    last_token: tuple[DualRailValue, DualRailValue] | None = None
    results: list[tuple[DualRailValue, int]] = []
    for step, (x, y, ackin) in enumerate(stimulus):
        if ackin not in (0, 1):
            raise ProtocolError(f"ackin must be 0 or 1, got {ackin!r}", step)
        if strict:
            if x is DualRailValue.INVALID or y is DualRailValue.INVALID:
                raise ProtocolError("invalid 1-out-of-2 codeword on an input", step)
            if x.is_valid and y.is_valid:
                token = (x, y)
                if last_token is not None and token != last_token:
                    raise ProtocolError("new data token without a null spacer", step)
                last_token = token
            elif x is DualRailValue.NULL and y is DualRailValue.NULL:
                last_token = None
        o0 = (luts.table_O0 >> o0_address(o0, ackin, x, y)) & 1
        o1 = (luts.table_O1 >> o1_address(o1, ackin, x, y)) & 1
        results.append((DualRailValue((o0, o1)), o1 ^ o0))
    return results


# --- mapping capacity --------------------------------------------------------


class SignalingStyle(enum.Enum):
    EDGE_2PHASE = "2-phase-edge"
    LEDR_2PHASE = "2-phase-ledr"
    FOUR_PHASE = "4-phase"


class MappingConfig(enum.Enum):
    """Gate shapes: A = dual-rail 2-input, B = dual-rail 3-input, C = triple-rail 2-input."""

    DUAL_RAIL_2IN = "A"
    DUAL_RAIL_3IN = "B"
    TRIPLE_RAIL_2IN = "C"


_CAPACITY: dict[tuple[SignalingStyle, MappingConfig], float] = {
    (SignalingStyle.EDGE_2PHASE, MappingConfig.DUAL_RAIL_2IN): 1.0,
    (SignalingStyle.LEDR_2PHASE, MappingConfig.DUAL_RAIL_2IN): 0.5,
    (SignalingStyle.LEDR_2PHASE, MappingConfig.DUAL_RAIL_3IN): 1.0,
    (SignalingStyle.FOUR_PHASE, MappingConfig.DUAL_RAIL_2IN): 0.5,
    (SignalingStyle.FOUR_PHASE, MappingConfig.DUAL_RAIL_3IN): 1.0,
    (SignalingStyle.FOUR_PHASE, MappingConfig.TRIPLE_RAIL_2IN): 2.0,
}


def mapping_capacity(style: SignalingStyle, config: MappingConfig) -> float | None:
    """PLBs needed for one gate of the given shape, or None where unmappable."""
    return _CAPACITY.get((style, config))


# --- gate library ------------------------------------------------------------

_GATE_F1: dict[str, tuple[int, int, int, int]] = {
    "const0": (0, 0, 0, 0),
    "nor2": (1, 0, 0, 0),
    "and_nx_y": (0, 1, 0, 0),
    "inv_x": (1, 1, 0, 0),
    "and_x_ny": (0, 0, 1, 0),
    "inv_y": (1, 0, 1, 0),
    "xor2": (0, 1, 1, 0),
    "nand2": (1, 1, 1, 0),
    "and2": (0, 0, 0, 1),
    "xnor2": (1, 0, 0, 1),
    "buf_y": (0, 1, 0, 1),
    "or_nx_y": (1, 1, 0, 1),
    "buf_x": (0, 0, 1, 1),
    "or_x_ny": (1, 0, 1, 1),
    "or2": (0, 1, 1, 1),
    "const1": (1, 1, 1, 1),
}

GATE_LIBRARY: dict[str, GateFunction] = {
    name: GateFunction.from_f1(name, f1) for name, f1 in _GATE_F1.items()
}


def gate_library_to_text(gates: dict[str, GateFunction]) -> str:
    lines = []
    for name, gate in gates.items():
        bits = "".join(str(b) for b in gate.f1)
        lines.append(f"{name} {bits}")
    return "\n".join(lines) + "\n"


def parse_gate_library(text: str) -> dict[str, GateFunction]:
    """Gate file: one 'name f1bits' per line, f1 entries ordered (x,y) = 00 01 10 11."""
    gates: dict[str, GateFunction] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        if len(parts) != 2 or len(parts[1]) != 4 or set(parts[1]) - {"0", "1"}:
            raise PlbError("expected: name and a 4-bit f1 table", lineno)
        name = parts[0]
        if name in gates:
            raise PlbError(f"duplicate gate {name!r}", lineno)
        gates[name] = GateFunction.from_f1(name, (int(b) for b in parts[1]))
    return gates


def load_gate_library(path) -> dict[str, GateFunction]:
    with open(path, "r", encoding="utf-8") as fh:
        return parse_gate_library(fh.read())


def save_gate_library(gates: dict[str, GateFunction], path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(gate_library_to_text(gates))
