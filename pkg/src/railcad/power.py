"""Synthetic current traces for routed nets and balance metrics between rails.

A routed net is flattened to current-drawing elements: every channel wire is a
segment element, and on single-driver fabrics every programmable switch crossed
is additionally a buffer element (bidirectional fabrics route through pass
switches, which load the net but do not drive current of their own).  Each
element fires its step response at the moment the signal reaches its input,
taken as the first-moment delay of the net's RC tree at the element's
driver-side node; the net trace is the sum of the shifted responses.  Rails
routed as mirror images produce identical element lists and therefore
identical traces, which is what the balance and cross-correlation metrics
measure.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np

from .arch import DriverMode, SwitchboxKind
from .elmore import RcTree, elmore_delays
from .route import RouteTree, Routing
from .rrg import RRGraph


class PowerError(ValueError):
    pass


class StimulusEdge(enum.Enum):
    RISING = "rising"
    FALLING = "falling"


def critically_damped_current(charge: float, tau: float, t):
    """Default response template: I(t) = (Q/tau^2) * t * exp(-t/tau), 0 before t=0."""
    tt = np.maximum(np.asarray(t, dtype=float), 0.0)
    return charge / (tau * tau) * tt * np.exp(-tt / tau)


def _trapezoid(samples, dx: float) -> float:
    y = np.asarray(samples, dtype=float)
    if len(y) < 2:
        return 0.0
    return float(dx * (y.sum() - 0.5 * (y[0] + y[-1])))


# Sampling density and decay horizon of a response, in units of its tau.
SAMPLES_PER_TAU = 50
HORIZON_TAUS = 10


@dataclass(frozen=True)
class StepResponse:
    """One element kind's current pulse for one stimulus edge.

    The sampled waveform must integrate back to the nominal charge within
    0.1%, which catches templates that decay too slowly for the horizon.
    """

    kind: str
    polarity: StimulusEdge
    charge: float
    tau: float
    sample_period: float
    samples: tuple[float, ...]
    template: object = field(default=critically_damped_current, compare=False, repr=False)

    def __post_init__(self):
        if not self.charge > 0:
            raise PowerError(f"{self.kind}: charge must be positive, got {self.charge}")
        if not self.tau > 0:
            raise PowerError(f"{self.kind}: tau must be positive, got {self.tau}")
        if not self.sample_period > 0:
            raise PowerError(f"{self.kind}: sample period must be positive")
        if self.polarity is StimulusEdge.RISING and any(s < 0 for s in self.samples):
            raise PowerError(f"{self.kind}: rising response must be nonnegative")
        total = _trapezoid(self.samples, self.sample_period)
        if abs(total - self.charge) > 0.001 * self.charge:
            raise PowerError(
                f"{self.kind}: sampled response integrates to {total:.6g}, "
                f"nominal charge is {self.charge:.6g}"
            )

    @classmethod
    def from_template(
        cls,
        kind: str,
        polarity: StimulusEdge,
        charge: float,
        tau: float,
        template=critically_damped_current,
    ) -> "StepResponse":
        period = tau / SAMPLES_PER_TAU
        t = np.arange(0.0, HORIZON_TAUS * tau + period / 2, period)
        return cls(kind, polarity, charge, tau, period, tuple(template(charge, tau, t)), template)

    def current(self, t):
        """Analytic response at arbitrary times (zero before t = 0)."""
        return self.template(self.charge, self.tau, t)


@dataclass(frozen=True)
class ResponseLibrary:
    responses: dict[tuple[str, StimulusEdge], StepResponse]

    def response(self, kind: str, edge: StimulusEdge) -> StepResponse:
        try:
            return self.responses[(kind, edge)]
        except KeyError:
            raise PowerError(
                f"library has no step response for element kind {kind!r} ({edge.value})"
            ) from None

    @property
    def kinds(self) -> tuple[str, ...]:
        return tuple(sorted({kind for kind, _ in self.responses}))


def make_library(entries: dict[str, tuple[tuple[float, float], tuple[float, float]]]) -> ResponseLibrary:
    """entries: kind -> ((Q_rise, tau_rise), (Q_fall, tau_fall))."""
    responses = {}
    for kind, ((qr, tr), (qf, tf)) in entries.items():
        responses[(kind, StimulusEdge.RISING)] = StepResponse.from_template(
            kind, StimulusEdge.RISING, qr, tr
        )
        responses[(kind, StimulusEdge.FALLING)] = StepResponse.from_template(
            kind, StimulusEdge.FALLING, qf, tf
        )
    return ResponseLibrary(responses)


def default_library() -> ResponseLibrary:
    # Abstract units; the falling pulse is slower because the discharge path
    # differs from the charging one in the modeled layout.
    return make_library(
        {
            "segment": ((1.0, 1.0), (1.0, 1.25)),
            "buffer": ((0.45, 0.4), (0.45, 0.5)),
        }
    )


def library_to_text(library: ResponseLibrary) -> str:
    lines = ["# kind q_rise tau_rise q_fall tau_fall"]
    for kind in library.kinds:
        rise = library.response(kind, StimulusEdge.RISING)
        fall = library.response(kind, StimulusEdge.FALLING)
        lines.append(f"{kind} {rise.charge:g} {rise.tau:g} {fall.charge:g} {fall.tau:g}")
    return "\n".join(lines) + "\n"


def parse_library_text(text: str) -> ResponseLibrary:
    entries: dict[str, tuple[tuple[float, float], tuple[float, float]]] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        if len(parts) != 5:
            raise PowerError(f"line {lineno}: expected 'kind q_rise tau_rise q_fall tau_fall'")
        kind = parts[0]
        if kind in entries:
            raise PowerError(f"line {lineno}: duplicate kind {kind!r}")
        try:
            qr, tr, qf, tf = (float(p) for p in parts[1:])
        except ValueError:
            raise PowerError(f"line {lineno}: malformed number") from None
        entries[kind] = ((qr, tr), (qf, tf))
    try:
        return make_library(entries)
    except PowerError as exc:
        raise PowerError(f"bad library entry: {exc}") from None


def load_library(path) -> ResponseLibrary:
    with open(path, "r", encoding="utf-8") as fh:
        return parse_library_text(fh.read())


def save_library(library: ResponseLibrary, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(library_to_text(library))


# --- route flattening -------------------------------------------------------------


@dataclass(frozen=True)
class RouteElement:
    kind: str  # "segment" or "buffer"
    node: str  # wire the element charges / switch destination, for diagnostics
    arrival: float


def route_rc_tree(graph: RRGraph, tree: RouteTree) -> tuple[RcTree, dict[int, int]]:
    """RC tree of one route: edges carry switch plus wire resistance, nodes the
    matching capacitances.  A wire-rooted route gets an explicit driving point
    so the root wire's own RC still delays everything behind it."""
    arch = graph.arch
    source = tree.nodes[0]
    src = graph.nodes[source]
    parents: list[int] = [-1]
    resistances: list[float] = [0.0]
    capacitances: list[float] = [arch.switch_c + src.c]
    index: dict[int, int] = {}
    if graph.is_wire(source):
        index[source] = 1
        parents.append(0)
        resistances.append(src.r)
        capacitances.append(src.c)
    else:
        index[source] = 0
    for a, b in tree.edges:
        if a not in index:
            raise PowerError(f"route of {tree.net_id!r}: edge from unvisited {graph.name_of(a)}")
        if b in index:
            continue
        node = graph.nodes[b]
        index[b] = len(parents)
        parents.append(index[a])
        resistances.append(arch.switch_r + node.r)
        capacitances.append(arch.switch_c + node.c)
    return RcTree(tuple(parents), tuple(resistances), tuple(capacitances)), index


def route_elements(routing: Routing, net_id: str) -> list[RouteElement]:
    """Current-drawing elements of a routed net with their arrival times."""
    graph = routing.graph
    if net_id not in routing.trees:
        raise PowerError(f"net {net_id!r} is not routed")
    tree = routing.trees[net_id]
    rc, index = route_rc_tree(graph, tree)
    delay = elmore_delays(rc)
    buffered = graph.arch.driver_mode is DriverMode.SINGLE_DRIVER
    elements: list[RouteElement] = []
    source = tree.nodes[0]
    if graph.is_wire(source):
        elements.append(RouteElement("segment", graph.name_of(source), 0.0))
    for a, b in tree.edges:
        if index[b] == index[a]:  # revisited edge of a branch point
            continue
        at = delay[index[a]]
        if buffered:
            elements.append(RouteElement("buffer", graph.name_of(b), at))
        if graph.is_wire(b):
            elements.append(RouteElement("segment", graph.name_of(b), at))
    return elements


# --- traces -----------------------------------------------------------------------


@dataclass(eq=False)
class Trace:
    sample_period: float
    samples: np.ndarray

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=float)
        if not self.sample_period > 0:
            raise PowerError("sample period must be positive")
        if self.samples.ndim != 1 or len(self.samples) == 0:
            raise PowerError("trace needs at least one sample")
        if not np.isfinite(self.samples).all():
            raise PowerError("trace contains non-finite samples")

    @property
    def times(self) -> np.ndarray:
        return np.arange(len(self.samples)) * self.sample_period

    def peak_time(self) -> float:
        return float(np.argmax(self.samples) * self.sample_period)


def trace_from_elements(
    elements,
    library: ResponseLibrary,
    edge: StimulusEdge = StimulusEdge.RISING,
    sample_period: float | None = None,
) -> Trace:
    """Delayed sum of the elements' step responses on a common sample grid."""
    if not elements:
        raise PowerError("no elements to trace")
    responses = {e.kind: library.response(e.kind, edge) for e in elements}
    period = sample_period or min(r.sample_period for r in responses.values())
    horizon = max(e.arrival for e in elements) + HORIZON_TAUS * max(
        r.tau for r in responses.values()
    )
    t = np.arange(0.0, horizon + period / 2, period)
    total = np.zeros_like(t)
    for e in elements:
        total += responses[e.kind].current(t - e.arrival)
    return Trace(period, total)


def net_trace(
    routing: Routing,
    net_id: str,
    library: ResponseLibrary | None = None,
    edge: StimulusEdge = StimulusEdge.RISING,
    noise=None,
) -> Trace:
    """Current trace of one routed net; noise, if given, maps a sample count to
    an additive array (the model itself is noiseless)."""
    trace = trace_from_elements(route_elements(routing, net_id), library or default_library(), edge)
    if noise is not None:
        trace.samples = trace.samples + np.asarray(noise(len(trace.samples)), dtype=float)
    return trace


def trace_to_csv(trace: Trace) -> str:
    lines = ["time,current"]
    for i, v in enumerate(trace.samples):
        lines.append(f"{i * trace.sample_period:.10g},{v:.10g}")
    return "\n".join(lines) + "\n"


# --- metrics ----------------------------------------------------------------------


def _padded_pair(w0: Trace, w1: Trace) -> tuple[np.ndarray, np.ndarray]:
    if not math.isclose(w0.sample_period, w1.sample_period, rel_tol=1e-12):
        raise PowerError(
            f"sample periods differ: {w0.sample_period} vs {w1.sample_period}"
        )
    n = max(len(w0.samples), len(w1.samples))
    a = np.zeros(n)
    b = np.zeros(n)
    a[: len(w0.samples)] = w0.samples
    b[: len(w1.samples)] = w1.samples
    return a, b


def balance(w0: Trace, w1: Trace) -> float:
    """RMS(w0) / RMS(w1) over the union of the two analysis windows."""
    a, b = _padded_pair(w0, w1)
    ref = math.sqrt(float(np.mean(b * b)))
    if ref == 0.0:
        raise PowerError("reference trace has zero energy")
    return math.sqrt(float(np.mean(a * a))) / ref


def xcorr_indiscernability(w0: Trace, w1: Trace) -> float:
    """Peak normalized cross-correlation over all lags; 1.0 means identical."""
    a, b = _padded_pair(w0, w1)
    norm = math.sqrt(float(a @ a)) * math.sqrt(float(b @ b))
    if norm == 0.0:
        raise PowerError("cross-correlation of a zero-energy trace is undefined")
    return float(np.correlate(a, b, mode="full").max() / norm)


# --- twisted-pair position accounting ----------------------------------------------


@dataclass(frozen=True)
class TwistReport:
    """Outer/inner segment counts per rail for a route on a twisting fabric.

    Position is tracked combinatorially: rail 1 starts outer, rail 0 inner,
    and the pair swaps wherever the fabric twists.  Not applicable on subset
    fabrics, which never swap.
    """

    applicable: bool
    swaps: int
    rail1_positions: tuple[int, int]  # (outer, inner) segment counts
    rail0_positions: tuple[int, int]

    @property
    def balanced(self) -> bool:
        if not self.applicable:
            return False
        return all(
            abs(outer - inner) <= 1
            for outer, inner in (self.rail1_positions, self.rail0_positions)
        )


def _wire_path(graph: RRGraph, tree: RouteTree) -> list[int]:
    wires = [n for n in tree.nodes if graph.is_wire(n)]
    next_wire: dict[int, list[int]] = {}
    for a, b in tree.edges:
        if graph.is_wire(a) and graph.is_wire(b):
            next_wire.setdefault(a, []).append(b)
    if any(len(v) > 1 for v in next_wire.values()):
        raise PowerError(
            f"twist accounting is defined for point-to-point routes; "
            f"{tree.net_id!r} branches"
        )
    if not wires:
        raise PowerError(f"route of {tree.net_id!r} uses no channel wires")
    ordered = [wires[0]]
    while ordered[-1] in next_wire:
        ordered.append(next_wire[ordered[-1]][0])
    return ordered


def twist_balance(routing: Routing, net_id: str) -> TwistReport:
    graph = routing.graph
    kind = graph.arch.switchbox_kind
    if net_id not in routing.trees:
        raise PowerError(f"net {net_id!r} is not routed")
    if kind is SwitchboxKind.SUBSET:
        return TwistReport(False, 0, (0, 0), (0, 0))
    path = _wire_path(graph, routing.trees[net_id])
    pos1, pos0 = 0, 1  # outer, inner
    counts = {0: [0, 0], 1: [0, 0]}  # rail -> [outer, inner]
    swaps = 0
    counts[1][pos1] += 1
    counts[0][pos0] += 1
    for a, b in zip(path, path[1:]):
        turn = graph.nodes[a].kind != graph.nodes[b].kind
        if kind is SwitchboxKind.TWIST_ALWAYS or turn:
            pos1, pos0 = pos0, pos1
            swaps += 1
        counts[1][pos1] += 1
        counts[0][pos0] += 1
    return TwistReport(True, swaps, tuple(counts[1]), tuple(counts[0]))
