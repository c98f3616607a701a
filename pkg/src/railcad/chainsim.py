"""Asynchronous configuration chain: full-buffer pipeline simulation.

The chain is a series of full-buffer stages carrying 1-out-of-2 4-phase
symbols from the configuration input toward an initialisation cap.  Stage
N-1 sits at the input, stage 0 at the cap.  During loading the cap holds its
acknowledge high, so the first symbol travels the whole chain and parks at
stage 0, the next at stage 1, and so on until the chain is full; the parked
latches are the configuration memory, bit j at stage j.

Two implementations compute a load: a discrete-event engine (integer
picosecond timestamps, ties resolved in stage order) that can record an
event log, and a recurrence engine that computes the same latch times with
vectorized suffix scans for long chains.  A load on an N-stage chain takes
on the order of N^2 stage events, so the event engine is kept for short
chains and logging while the recurrence engine handles fabric-sized chains.
"""

from __future__ import annotations

import heapq
from dataclasses import dataclass, field

import numpy as np

from .plb import DualRailValue

NULL = DualRailValue.NULL
ZERO = DualRailValue.ZERO
ONE = DualRailValue.ONE
INVALID = DualRailValue.INVALID


class ChainError(ValueError):
    pass


class IncompleteResetError(ChainError):
    def __init__(self, stage: int, message: str):
        self.stage = stage
        super().__init__(message)


class DeadlockError(ChainError):
    def __init__(self, stage: int, time_ps: int, message: str):
        self.stage = stage
        self.time_ps = time_ps
        super().__init__(message)


@dataclass(frozen=True)
class StimulusSchedule:
    """Timing of the configuration producer and the buffer stages, in ps.

    data1_extra_latency models the heavier load on the rail that drives the
    configuration switches: latching a '1' symbol takes that much longer.
    """

    bit_period: int = 625
    forward_latency: int = 100
    precharge_latency: int = 60
    data1_extra_latency: int = 0

    def __post_init__(self):
        for name in ("bit_period", "forward_latency", "precharge_latency"):
            if getattr(self, name) <= 0:
                raise ChainError(f"{name} must be positive")
        if self.data1_extra_latency < 0:
            raise ChainError("data1_extra_latency must be >= 0")


@dataclass(frozen=True)
class TgBugModel:
    """Transmission-gate fault model for fast configuration.

    While a stage's surrounding logic still has undefined inputs, latching a
    '1' turns on its configuration switch and can briefly short two pass
    gates, writing the stage's memory point into its neighbour toward the
    cap.  The effect only triggers when the symbol period is below the
    threshold; None picks 2x the forward latency.  With inject_invalid the
    neighbour is overwritten with the invalid (1,1) state instead of a copy.
    """

    enabled: bool = False
    threshold_ps: int | None = None
    inject_invalid: bool = False

    def threshold_for(self, schedule: StimulusSchedule) -> int:
        if self.threshold_ps is not None:
            return self.threshold_ps
        return 2 * schedule.forward_latency


@dataclass
class ChainState:
    """Latches, output wires, and acknowledge outputs of every stage."""

    latches: list[DualRailValue]
    wires: list[DualRailValue]
    acks: list[int]
    init_pin: int = 1

    def __post_init__(self):
        if not (len(self.latches) == len(self.wires) == len(self.acks)):
            raise ChainError("latches, wires and acks must have equal length")

    @property
    def n(self) -> int:
        return len(self.latches)

    @classmethod
    def power_up(cls, n: int) -> "ChainState":
        """Worst-case power-on: every node invalid, nothing acknowledged."""
        return cls([INVALID] * n, [INVALID] * n, [0] * n, init_pin=0)

    @classmethod
    def ready(cls, n: int) -> "ChainState":
        return cls([NULL] * n, [NULL] * n, [1] * n, init_pin=1)

    def is_ready(self) -> bool:
        return (
            all(v is NULL for v in self.latches)
            and all(v is NULL for v in self.wires)
            and all(a == 1 for a in self.acks)
        )


@dataclass(frozen=True)
class ChainEvent:
    time_ps: int
    stage: int  # -1 is the environment side
    kind: str
    value: str


@dataclass(frozen=True)
class CorruptionEvent:
    time_ps: int
    stage: int
    neighbor: int  # -1 when the parked symbol has no neighbour toward the cap
    written: str  # what the neighbour now holds, '' when nothing was written


# Counting convention for reports: one acknowledge fall per accepted symbol.
# Monitors that also count the initial READY rising edge see one more.
ACK_COUNT_NOTE = (
    "ack_count counts acknowledge falling edges, one per accepted symbol; "
    "monitors that also count the initial READY rising edge report one more"
)


@dataclass
class LoadReport:
    n_stages: int
    bits: str
    ack_count: int
    image: str  # one char per stage: '0', '1', 'X' invalid, '-' empty
    elapsed_ps: int
    corruption: list[CorruptionEvent] = field(default_factory=list)
    events: list[ChainEvent] | None = None
    engine: str = "event"
    note: str = ACK_COUNT_NOTE
    final_state: "ChainState | None" = None

    @property
    def throughput_ghz(self) -> float:
        if self.elapsed_ps == 0:
            return 0.0
        return len(self.bits) * 1000.0 / self.elapsed_ps


# --- symbol coding -----------------------------------------------------------


_SYMBOL = {0: (1, 0), 1: (0, 1)}  # (data0, data1)
_SPACER = (0, 0)


def encode_4phase(bits) -> list[tuple[int, int]]:
    """Bits to (data0, data1) symbols, each followed by a null spacer."""
    stream: list[tuple[int, int]] = []
    for b in _normalize_bits(bits):
        stream.append(_SYMBOL[b])
        stream.append(_SPACER)
    return stream


def decode_4phase(symbols) -> list[int]:
    bits: list[int] = []
    expect_data = True
    for pos, sym in enumerate(symbols):
        sym = tuple(sym)
        if expect_data:
            if sym == _SYMBOL[0]:
                bits.append(0)
            elif sym == _SYMBOL[1]:
                bits.append(1)
            else:
                raise ChainError(f"symbol {pos}: expected a data symbol, got {sym}")
        elif sym != _SPACER:
            raise ChainError(f"symbol {pos}: expected a null spacer, got {sym}")
        expect_data = not expect_data
    if not expect_data:
        raise ChainError("stream ends without a null spacer")
    return bits


def _normalize_bits(bits) -> list[int]:
    out = []
    for pos, b in enumerate(bits):
        if isinstance(b, str):
            if b not in "01":
                raise ChainError(f"bit {pos}: expected '0' or '1', got {b!r}")
            out.append(int(b))
        elif b in (0, 1):
            out.append(int(b))
        else:
            raise ChainError(f"bit {pos}: expected 0 or 1, got {b!r}")
    return out


# --- initialisation ----------------------------------------------------------


def initialize_chain(
    state: ChainState, hold_time_ps: int, schedule: StimulusSchedule
) -> ChainState:
    """Reset wave with INIT low and nulls driven into the input.

    The null overwrites the input stage immediately and ripples one stage per
    forward latency toward the cap, erasing invalid power-up codewords on the
    way.  Holding shorter than the wave needs leaves far stages untouched and
    raises IncompleteResetError naming the first stage the wave missed.
    """
    if hold_time_ps < 0:
        raise ChainError("hold_time_ps must be >= 0")
    n = state.n
    fl = schedule.forward_latency
    latches = list(state.latches)
    wires = list(state.wires)
    acks = list(state.acks)
    for stage in range(n - 1, -1, -1):
        if (n - 1 - stage) * fl <= hold_time_ps:
            latches[stage] = NULL
            wires[stage] = NULL
            acks[stage] = 1
        elif latches[stage] is not NULL or wires[stage] is not NULL:
            raise IncompleteResetError(
                stage,
                f"hold of {hold_time_ps} ps resets only stages {stage + 1}..{n - 1}; "
                f"stage {stage} is the first left un-reset",
            )
    return ChainState(latches, wires, acks, init_pin=1)


# --- event engine ------------------------------------------------------------

_LATCH = "latch"
_FORWARD = "forward"
_CLEAR = "clear"
_ACK_RISE = "ack_rise"
_PRESENT = "present"
_RTZ = "rtz"
_CORRUPT = "corrupt"


def _load_event_engine(
    state: ChainState,
    bits: list[int],
    schedule: StimulusSchedule,
    bug: TgBugModel,
    record: bool,
):
    n = state.n
    latch = list(state.latches)
    wire = list(state.wires)
    ack = list(state.acks)
    env_wire: DualRailValue = NULL
    fl, pl = schedule.forward_latency, schedule.precharge_latency
    d1 = schedule.data1_extra_latency
    threshold = bug.threshold_for(schedule)
    bug_live = bug.enabled and schedule.bit_period < threshold

    heap: list[tuple[int, int, int, str]] = []
    seq = 0
    pending: set[tuple[int, str]] = set()
    events: list[ChainEvent] | None = [] if record else None
    corruption: list[CorruptionEvent] = []
    ack_count = 0
    fed = 0
    latch_count = [0] * n
    last_time = 0

    def push(t: int, stage: int, kind: str) -> None:
        nonlocal seq
        if (stage, kind) in pending:
            return
        pending.add((stage, kind))
        heapq.heappush(heap, (t, stage, seq, kind))
        seq += 1

    def log(t: int, stage: int, kind: str, value: str) -> None:
        if events is not None:
            events.append(ChainEvent(t, stage, kind, value))

    def up_wire(i: int) -> DualRailValue:
        return env_wire if i == n - 1 else wire[i + 1]

    def down_ack(i: int) -> int:
        return state.init_pin if i == 0 else ack[i - 1]

    def consider(i: int, now: int) -> None:
        if latch[i] is NULL and up_wire(i).is_valid and ack[i] == 1:
            delay = fl + (d1 if up_wire(i) is ONE else 0)
            push(now + delay, i, _LATCH)
        if latch[i] is not NULL and latch[i].is_valid and wire[i] is NULL and down_ack(i) == 1:
            push(now + fl, i, _FORWARD)
        if wire[i] is not NULL and down_ack(i) == 0:
            push(now + pl, i, _CLEAR)
        if ack[i] == 0 and latch[i] is NULL and up_wire(i) is NULL:
            push(now + pl, i, _ACK_RISE)

    def rest_check(i: int, now: int) -> None:
        # the (i+1)-th symbol latched at stage i parks there for good
        if latch_count[i] != i + 1:
            return
        if not bug_live or latch[i] is not ONE:
            return
        neighbor = i - 1
        if neighbor < 0:
            corruption.append(CorruptionEvent(now, i, -1, ""))
            log(now, i, _CORRUPT, "edge")
            return
        written = INVALID if bug.inject_invalid else latch[i]
        latch[neighbor] = written
        corruption.append(CorruptionEvent(now, i, neighbor, _image_char(written)))
        log(now, i, _CORRUPT, f"stage {neighbor} overwritten")

    if bits:
        push(0 * schedule.bit_period, -1, _PRESENT)

    while heap:
        now, stage, _, kind = heapq.heappop(heap)
        pending.discard((stage, kind))
        last_time = max(last_time, now)
        if stage == -1:
            if kind == _PRESENT:
                if fed < len(bits) and env_wire is NULL:
                    env_wire = _SYMBOL_VALUE[bits[fed]]
                    fed += 1
                    log(now, -1, _PRESENT, _image_char(env_wire))
                    consider(n - 1, now)
            elif kind == _RTZ:
                env_wire = NULL
                log(now, -1, _RTZ, "-")
                consider(n - 1, now)
            continue

        i = stage
        if kind == _LATCH:
            if not (latch[i] is NULL and up_wire(i).is_valid and ack[i] == 1):
                consider(i, now)
                continue
            latch[i] = up_wire(i)
            ack[i] = 0
            latch_count[i] += 1
            log(now, i, _LATCH, _image_char(latch[i]))
            if i == n - 1:
                ack_count += 1
                push(now + pl, -1, _RTZ)
            else:
                consider(i + 1, now)
            rest_check(i, now)
            consider(i, now)
        elif kind == _FORWARD:
            if not (latch[i] is not NULL and latch[i].is_valid and wire[i] is NULL and down_ack(i) == 1):
                consider(i, now)
                continue
            wire[i] = latch[i]
            log(now, i, _FORWARD, _image_char(wire[i]))
            if i > 0:
                consider(i - 1, now)
            consider(i, now)
        elif kind == _CLEAR:
            if not (wire[i] is not NULL and down_ack(i) == 0):
                consider(i, now)
                continue
            wire[i] = NULL
            latch[i] = NULL
            log(now, i, _CLEAR, "-")
            if i > 0:
                consider(i - 1, now)
            consider(i, now)
        elif kind == _ACK_RISE:
            if not (ack[i] == 0 and latch[i] is NULL and up_wire(i) is NULL):
                consider(i, now)
                continue
            ack[i] = 1
            log(now, i, _ACK_RISE, "1")
            if i == n - 1:
                if fed < len(bits):
                    push(max(fed * schedule.bit_period, now), -1, _PRESENT)
            else:
                consider(i + 1, now)
            consider(i, now)

    if ack_count < len(bits):
        blocked = next((s for s in range(n) if latch[s] is INVALID), n - 1)
        raise DeadlockError(
            blocked,
            last_time,
            f"chain deadlocked at {last_time} ps after {ack_count} of {len(bits)} "
            f"acknowledges; stage {blocked} cannot make progress",
        )
    final = ChainState(latch, wire, ack, init_pin=state.init_pin)
    return ack_count, final, last_time, corruption, events


_SYMBOL_VALUE = {0: ZERO, 1: ONE}


def _image_char(v: DualRailValue) -> str:
    return {NULL: "-", ZERO: "0", ONE: "1", INVALID: "X"}[v]


# --- recurrence engine -------------------------------------------------------


def _load_recurrence_engine(
    state: ChainState,
    bits: list[int],
    schedule: StimulusSchedule,
    bug: TgBugModel,
):
    """Latch-time recurrences of the same pipeline, columns swept per symbol.

    For symbol k and stage i the latch time is
        L(i,k) = max(L(i+1,k)+fl, E_i) + fl + d1*bit_k
    where E_i collects the previous symbol's clear and acknowledge times.
    Rewriting with a suffix maximum makes each column one vector scan.
    """
    n = state.n
    m = len(bits)
    fl = float(schedule.forward_latency)
    pl = float(schedule.precharge_latency)
    d1 = float(schedule.data1_extra_latency)
    bp = float(schedule.bit_period)

    # per-stage times from the previous symbol, index 0..n-1 plus env slot n
    clear_prev = np.full(n + 1, -np.inf)
    ackrise_prev = np.full(n, -np.inf)
    present = 0.0
    rest_times = np.zeros(m)
    idx = np.arange(n + 1)

    for k in range(m):
        h = fl + (d1 if bits[k] == 1 else 0.0)
        c = fl + h
        lo = k  # the symbol parks at stage k
        # E_i for i in lo..n-1: previous clear of this stage, plus the forward
        # preconditions of the stage above (its clear, this stage's ack rise)
        e = np.maximum(
            np.maximum(clear_prev[lo + 1 : n + 1], ackrise_prev[lo:n]) + fl,
            clear_prev[lo:n],
        )
        if n - 1 >= lo:
            # the input stage is fed directly, not through a forward event
            e[-1] = max(clear_prev[n - 1], ackrise_prev[n - 1])
        a = e + h + idx[lo:n] * c
        top = max(k * bp, present) + h + (n - 1) * c
        rev = np.maximum.accumulate(np.concatenate((np.array([top]), a[::-1])))[:0:-1]
        latch = rev - idx[lo:n] * c  # L(i,k) for i = lo..n-1
        rest_times[k] = latch[0]

        clear_prev = np.full(n + 1, -np.inf)
        clear_prev[lo + 1 : n] = latch[:-1] + pl  # stage i clears once stage i-1 latched
        clear_prev[n] = latch[-1] + pl  # environment return-to-zero
        ackrise_prev = np.full(n, -np.inf)
        upper = np.maximum(clear_prev[lo + 1 : n], clear_prev[lo + 2 : n + 1])
        ackrise_prev[lo + 1 : n] = upper + pl
        present = ackrise_prev[n - 1]

    corruption: list[CorruptionEvent] = []
    image = [_image_char(NULL)] * n
    latches = list(state.latches)
    for k in range(m):
        image[k] = str(bits[k])
        latches[k] = _SYMBOL_VALUE[bits[k]]
    threshold = bug.threshold_for(schedule)
    if bug.enabled and schedule.bit_period < threshold:
        for k in range(m):
            if bits[k] != 1:
                continue
            t = int(round(rest_times[k]))
            if k == 0:
                corruption.append(CorruptionEvent(t, k, -1, ""))
                continue
            written = INVALID if bug.inject_invalid else _SYMBOL_VALUE[bits[k]]
            latches[k - 1] = written
            image[k - 1] = _image_char(written)
            corruption.append(CorruptionEvent(t, k, k - 1, _image_char(written)))

    if m == 0:
        elapsed = 0
    else:
        if m == n:
            tail = rest_times[-1] + pl  # final environment return-to-zero
        else:
            tail = rest_times[-1] + 2 * pl  # clear above the parked symbol, then ack
        # stage 0 presents its parked symbol to the cap after it latches
        elapsed = int(round(max(tail, rest_times[0] + fl)))
    wires = [NULL] * n
    if m > 0:
        wires[0] = _SYMBOL_VALUE[bits[0]]  # parked stage 0 keeps presenting to the cap
    acks = [0] * m + [1] * (n - m)
    final = ChainState(latches, wires, acks, init_pin=state.init_pin)
    return m, final, elapsed, corruption, image


# --- public load API ----------------------------------------------------------


def load_with_bug(
    state: ChainState,
    bits,
    schedule: StimulusSchedule,
    bug: TgBugModel,
    record_events: bool = False,
    engine: str = "auto",
) -> LoadReport:
    """Feed a bitstream into an initialised chain and report the outcome.

    bits may be shorter than the chain; symbols park from the cap end upward
    and unfilled stages stay empty.  engine is "event", "recurrence", or
    "auto" (event engine when logging or the chain is short).
    """
    bit_list = _normalize_bits(bits)
    n = state.n
    if len(bit_list) > n:
        raise ChainError(f"bitstream of {len(bit_list)} bits exceeds chain length {n}")
    if engine not in ("auto", "event", "recurrence"):
        raise ChainError(f"unknown engine {engine!r}")
    if engine == "recurrence":
        if record_events:
            raise ChainError("the event log requires the event engine")
        if not state.is_ready():
            raise ChainError("the recurrence engine requires an initialised chain")
    if engine == "auto":
        engine = (
            "event"
            if (record_events or n <= 512 or not state.is_ready())
            else "recurrence"
        )
    bit_str = "".join(str(b) for b in bit_list)

    if engine == "event":
        ack_count, final, elapsed, corruption, events = _load_event_engine(
            state, bit_list, schedule, bug, record_events
        )
        image = "".join(_image_char(v) for v in final.latches)
        return LoadReport(
            n_stages=n,
            bits=bit_str,
            ack_count=ack_count,
            image=image,
            elapsed_ps=elapsed,
            corruption=corruption,
            events=events,
            engine="event",
            final_state=final,
        )

    ack_count, final, elapsed, corruption, image_chars = _load_recurrence_engine(
        state, bit_list, schedule, bug
    )
    return LoadReport(
        n_stages=n,
        bits=bit_str,
        ack_count=ack_count,
        image="".join(image_chars),
        elapsed_ps=elapsed,
        corruption=corruption,
        events=None,
        engine="recurrence",
        final_state=final,
    )


def load_bitstream(
    state: ChainState,
    bits,
    schedule: StimulusSchedule,
    record_events: bool = False,
    engine: str = "auto",
) -> LoadReport:
    return load_with_bug(state, bits, schedule, TgBugModel(enabled=False), record_events, engine)


# --- file formats --------------------------------------------------------------


def events_to_csv(events: list[ChainEvent]) -> str:
    lines = ["time_ps,stage,event_kind,value"]
    for e in events:
        lines.append(f"{e.time_ps},{e.stage},{e.kind},{e.value}")
    return "\n".join(lines) + "\n"


def bitstream_to_text(bits, arch_hash: str) -> str:
    bit_str = "".join(str(b) for b in _normalize_bits(bits))
    return f"arch={arch_hash}\n{bit_str}\n"


def parse_bitstream_text(text: str) -> tuple[str, str]:
    lines = [
        ln.strip()
        for ln in text.splitlines()
        if ln.strip() and not ln.lstrip().startswith("#")
    ]
    if not lines or not lines[0].startswith("arch="):
        raise ChainError("bitstream must start with an arch=<hash> header")
    arch_hash = lines[0][len("arch=") :]
    if len(arch_hash) != 16 or set(arch_hash) - set("0123456789abcdef"):
        raise ChainError(f"malformed arch hash {arch_hash!r}")
    bits = "".join(lines[1:])
    if set(bits) - {"0", "1"}:
        raise ChainError("bitstream body must be '0'/'1' characters")
    return arch_hash, bits


def load_bitstream_file(path) -> tuple[str, str]:
    with open(path, "r", encoding="utf-8") as fh:
        return parse_bitstream_text(fh.read())


def save_bitstream_file(bits, arch_hash: str, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(bitstream_to_text(bits, arch_hash))
