"""Fabric architecture model: switchboxes, connection-box crossbars, config-bit budget.

The fabric is an island-style mesh of logic blocks (PLBs) with I/O blocks on the
perimeter.  A grid of gw x gh PLBs is surrounded by routing channels, giving a
(gw+1) x (gh+1) switchbox lattice: interior boxes have all four sides, edge
boxes three, corner boxes two.
"""

from __future__ import annotations

import enum
import hashlib
from dataclasses import dataclass, fields, replace

LEFT, TOP, RIGHT, BOTTOM = 0, 1, 2, 3
SIDE_NAMES = ("left", "top", "right", "bottom")

# Per-block configuration memory that is not a routing switch: four 64-bit LUT
# tables plus 31 internal programming points per PLB, 3 mode bits per IOB.
PLB_CONFIG_BITS = 287
IOB_CONFIG_BITS = 3


class ArchError(ValueError):
    """Bad architecture description; carries the offending line for file input."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class SwitchboxKind(enum.Enum):
    SUBSET = "Subset"
    TWIST_ON_TURN = "TwistOnTurn"
    TWIST_ALWAYS = "TwistAlways"


class DriverMode(enum.Enum):
    BIDIRECTIONAL = "Bidirectional"
    SINGLE_DRIVER = "SingleDriver"


@dataclass(frozen=True)
class ArchSpec:
    """Parameters of one fabric instance.  Defaults reproduce the 3x3 prototype."""

    grid_w: int = 3
    grid_h: int = 3
    channel_width: int = 8
    switchbox_kind: SwitchboxKind = SwitchboxKind.SUBSET
    driver_mode: DriverMode = DriverMode.BIDIRECTIONAL
    plb_inputs: int = 12
    plb_outputs: int = 7
    iob_inputs: int = 3
    iob_outputs: int = 3
    fc_plb: float = 1.0
    fc_iob: float = 0.5
    segment_r: float = 1.0
    segment_c: float = 1.0
    switch_r: float = 0.5
    switch_c: float = 0.1

    def __post_init__(self):
        bad = []
        if self.grid_w < 1:
            bad.append("grid_w")
        if self.grid_h < 1:
            bad.append("grid_h")
        if self.channel_width < 1:
            bad.append("channel_width")
        for key in ("plb_inputs", "plb_outputs", "iob_inputs", "iob_outputs"):
            if getattr(self, key) < 1:
                bad.append(key)
        for key in ("segment_r", "segment_c", "switch_r", "switch_c"):
            if getattr(self, key) <= 0:
                bad.append(key)
        for key in ("fc_plb", "fc_iob"):
            fc = getattr(self, key)
            if not 0.0 < fc <= 1.0 or fc_tracks(self.channel_width, fc) is None:
                bad.append(key)
        if self.driver_mode is DriverMode.SINGLE_DRIVER and self.channel_width % 2:
            # Direction assignment splits tracks evenly between the two flows.
            bad.append("channel_width")
        if bad:
            raise ArchError("invalid field values: " + ", ".join(sorted(set(bad))))

    @property
    def iob_count(self) -> int:
        return 2 * (self.grid_w + self.grid_h)


def fc_tracks(width: int, fc: float) -> int | None:
    """Tracks per pin under connectivity fraction fc; None unless fc*W is a whole number >= 1."""
    k = round(width * fc)
    if k < 1 or abs(k - width * fc) > 1e-9:
        return None
    return k


# --- switchboxes -------------------------------------------------------------

# One pair family per side pair; (a_side, b_side, a_index -> b_index reversal flag).
_ALL_SIDES = frozenset((LEFT, TOP, RIGHT, BOTTOM))


def _pair_families(kind: SwitchboxKind):
    """Families as (side_a, side_b, reversed) with reversed meaning i -> W-1-i."""
    if kind is SwitchboxKind.SUBSET:
        return [
            (LEFT, TOP, False),
            (LEFT, RIGHT, False),
            (LEFT, BOTTOM, False),
            (TOP, RIGHT, False),
            (TOP, BOTTOM, False),
            (RIGHT, BOTTOM, False),
        ]
    twist_straights = kind is SwitchboxKind.TWIST_ALWAYS
    return [
        (LEFT, RIGHT, twist_straights),
        (TOP, BOTTOM, twist_straights),
        (LEFT, TOP, False),
        (TOP, RIGHT, True),
        (RIGHT, BOTTOM, False),
        (BOTTOM, LEFT, True),
    ]


def _wire_enters_box(side: int, track: int) -> bool:
    # Even tracks flow left->right and bottom->top, odd tracks the reverse.
    if side in (LEFT, BOTTOM):
        return track % 2 == 0
    return track % 2 == 1


def build_switchbox(
    kind: SwitchboxKind,
    width: int,
    sides: frozenset[int] = _ALL_SIDES,
    driver_mode: DriverMode = DriverMode.BIDIRECTIONAL,
) -> list[tuple[tuple[int, int], tuple[int, int]]]:
    """Switch list for one box as terminal pairs ((side, track), (side, track)).

    Bidirectional mode emits unordered pairs (in a canonical order).  Single-driver
    mode emits (driving terminal -> driven terminal).  A pair whose two wires both
    enter or both leave the box cannot be directed as-is; its first endpoint is
    moved to the paired track of opposite flow (track ^ 1), which preserves the
    family's index map up to one track and keeps every leaving wire behind a
    single multiplexer.  Only same-index turns of the Subset pattern and the
    twisted straights of TwistAlways need this; the TwistOnTurn pattern directs
    exactly as drawn.
    """
    if width < 1:
        raise ArchError("invalid field values: channel_width")
    single = driver_mode is DriverMode.SINGLE_DRIVER
    if single and width % 2:
        raise ArchError("invalid field values: channel_width")
    pairs = []
    for side_a, side_b, rev in _pair_families(kind):
        if side_a not in sides or side_b not in sides:
            continue
        for i in range(width):
            a = (side_a, i)
            b = (side_b, width - 1 - i if rev else i)
            if not single:
                pairs.append((a, b))
                continue
            a_in = _wire_enters_box(*a)
            b_in = _wire_enters_box(*b)
            if a_in and not b_in:
                pairs.append((a, b))
            elif b_in and not a_in:
                pairs.append((b, a))
            elif not a_in:  # both leave: pull the source from a's partner track
                pairs.append(((side_a, i ^ 1), b))
            else:  # both enter: drive a's partner track instead
                pairs.append((b, (side_a, i ^ 1)))
    return pairs


def switchbox_sides(arch: ArchSpec, sx: int, sy: int) -> frozenset[int]:
    """Sides present on the box at lattice position (sx, sy)."""
    present = set()
    if sx > 0:
        present.add(LEFT)
    if sx < arch.grid_w:
        present.add(RIGHT)
    if sy > 0:
        present.add(BOTTOM)
    if sy < arch.grid_h:
        present.add(TOP)
    return frozenset(present)


# --- connection-box crossbar -------------------------------------------------


def _balanced_leaf_depths(leaves: int) -> tuple[int, ...]:
    """Root-to-leaf hop counts of a balanced binary fanout tree."""
    if leaves == 1:
        return (0,)
    half = (leaves + 1) // 2
    return tuple(d + 1 for d in _balanced_leaf_depths(half)) + tuple(
        d + 1 for d in _balanced_leaf_depths(leaves - half)
    )


@dataclass(frozen=True)
class CrossbarPlan:
    """Binary-tree crossbar joining W channel wires to I block pins."""

    tracks: int
    pins: int
    fc: float
    area: tuple[int, int]
    switch_points: tuple[tuple[int, int], ...]
    channel_tree_depths: tuple[int, ...]  # one tree per track, I leaves
    pin_tree_depths: tuple[int, ...]  # one tree per pin, W leaves


def crossbar_point_kept(track: int, pin: int, width: int, fc: float) -> bool:
    """Depopulation rule: staggered so every pin gets fc*W tracks, every track fc*I pins."""
    k = fc_tracks(width, fc)
    if k is None:
        raise ArchError("invalid field values: fc")
    return (track + pin * k) % width < k


def build_crossbar(tracks: int, pins: int, fc: float = 1.0) -> CrossbarPlan:
    if tracks < 1 or pins < 1:
        raise ArchError("invalid field values: crossbar dimensions")
    if fc_tracks(tracks, fc) is None:
        raise ArchError("invalid field values: fc")
    points = tuple(
        (w, b)
        for b in range(pins)
        for w in range(tracks)
        if crossbar_point_kept(w, b, tracks, fc)
    )
    area = (
        tracks * max(0, (pins - 1).bit_length()),
        pins * max(0, (tracks - 1).bit_length()),
    )
    return CrossbarPlan(
        tracks=tracks,
        pins=pins,
        fc=fc,
        area=area,
        switch_points=points,
        channel_tree_depths=_balanced_leaf_depths(pins),
        pin_tree_depths=_balanced_leaf_depths(tracks),
    )


# --- configuration-bit budget ------------------------------------------------


@dataclass(frozen=True)
class ConfigBitRow:
    category: str
    bits_per_unit: int
    quantity: int

    @property
    def bits(self) -> int:
        return self.bits_per_unit * self.quantity


@dataclass(frozen=True)
class ConfigBitReport:
    rows: tuple[ConfigBitRow, ...]

    @property
    def total(self) -> int:
        return sum(row.bits for row in self.rows)

    def to_csv(self) -> str:
        lines = ["category,bits_per_unit,quantity,bits"]
        for row in self.rows:
            lines.append(f"{row.category},{row.bits_per_unit},{row.quantity},{row.bits}")
        lines.append(f"total,,,{self.total}")
        return "\n".join(lines) + "\n"


def count_config_bits(arch: ArchSpec) -> ConfigBitReport:
    gw, gh, w = arch.grid_w, arch.grid_h, arch.channel_width
    k_plb = fc_tracks(w, arch.fc_plb)
    k_iob = fc_tracks(w, arch.fc_iob)
    plb_pins = arch.plb_inputs + arch.plb_outputs
    iob_pins = arch.iob_inputs + arch.iob_outputs
    rows = (
        ConfigBitRow("plb", PLB_CONFIG_BITS, gw * gh),
        ConfigBitRow("plb_cbox", plb_pins * k_plb, gw * gh),
        ConfigBitRow("iob_cbox", iob_pins * k_iob, arch.iob_count),
        ConfigBitRow("iob", IOB_CONFIG_BITS, arch.iob_count),
        ConfigBitRow("switchbox_full", 6 * w, (gw - 1) * (gh - 1)),
        ConfigBitRow("switchbox_half", 3 * w, 2 * (gw - 1) + 2 * (gh - 1)),
        ConfigBitRow("switchbox_quarter", 1 * w, 4),
    )
    return ConfigBitReport(rows)


# --- architecture files ------------------------------------------------------

_ENUM_FIELDS = {"switchbox_kind": SwitchboxKind, "driver_mode": DriverMode}


def arch_to_text(arch: ArchSpec) -> str:
    lines = []
    for f in fields(ArchSpec):
        value = getattr(arch, f.name)
        if isinstance(value, enum.Enum):
            value = value.value
        lines.append(f"{f.name}={value}")
    return "\n".join(lines) + "\n"


def arch_hash(arch: ArchSpec) -> str:
    return hashlib.sha256(arch_to_text(arch).encode()).hexdigest()[:16]


def parse_arch_text(text: str) -> ArchSpec:
    known = {f.name: f for f in fields(ArchSpec)}
    seen: dict[str, int] = {}
    values = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ArchError("expected key=value", lineno)
        key, _, val = line.partition("=")
        key, val = key.strip(), val.strip()
        if key not in known:
            raise ArchError(f"unknown key {key!r}", lineno)
        if key in seen:
            raise ArchError(f"duplicate key {key!r} (first on line {seen[key]})", lineno)
        seen[key] = lineno
        try:
            values[key] = _parse_value(key, val, known[key].type)
        except (ValueError, KeyError):
            raise ArchError(f"bad value {val!r} for {key}", lineno) from None
    try:
        return ArchSpec(**values)
    except ArchError as exc:
        raise ArchError(str(exc)) from None


def _parse_value(key: str, val: str, annotation: str):
    if key in _ENUM_FIELDS:
        return _ENUM_FIELDS[key](val)
    if "int" in str(annotation):
        return int(val)
    return float(val)


def load_arch(path) -> ArchSpec:
    with open(path, "r", encoding="utf-8") as fh:
        return parse_arch_text(fh.read())


def save_arch(arch: ArchSpec, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(arch_to_text(arch))


def with_overrides(arch: ArchSpec, overrides: dict[str, str]) -> ArchSpec:
    """Apply key=value overrides in the same dialect as architecture files."""
    known = {f.name: f for f in fields(ArchSpec)}
    parsed = {}
    for key, val in overrides.items():
        if key not in known:
            raise ArchError(f"unknown key {key!r}")
        try:
            parsed[key] = _parse_value(key, val, known[key].type)
        except (ValueError, KeyError):
            raise ArchError(f"bad value {val!r} for {key}") from None
    return replace(arch, **parsed)


def mirror_track(track: int) -> int:
    """Partner track of a dual-rail pair: even rail-1 track <-> next odd track."""
    return track ^ 1


def log2_ceil(n: int) -> int:
    if n < 1:
        raise ValueError("n must be positive")
    return (n - 1).bit_length()
