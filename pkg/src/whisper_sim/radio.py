"""Half-duplex radio model: state timelines, timing constants, links and the
reception rule for concurrent transmissions.

All times are integer nanoseconds.
"""

from __future__ import annotations

import bisect
import enum
import math
import random
from dataclasses import dataclass, field
from typing import Iterable, Sequence

from .codec import PackletConfig, decode_frame

US = 1_000
MS = 1_000_000


@dataclass(frozen=True)
class RadioTimingParams:
    t_turn: int = 192 * US
    t_d: int = 3 * US
    ci_window: int = 500
    bitrate: int = 250_000

    def __post_init__(self) -> None:
        if self.t_turn <= 0:
            raise ValueError("t_turn must be positive")
        if self.t_d < 0:
            raise ValueError("t_d must be >= 0")
        if self.ci_window <= 0:
            raise ValueError("ci_window must be positive")


class RadioState(enum.Enum):
    OFF = "off"
    LISTENING = "listening"
    RECEIVING = "receiving"
    TURNAROUND_RX_TX = "turnaround_rx_tx"
    TRANSMITTING = "transmitting"
    TURNAROUND_TX_RX = "turnaround_tx_rx"


# Listening also covers the fixed wait/processing time between a reception
# and the RX->TX turnaround. With zero processing time that listening
# interval is empty, hence TX->RX turnaround straight into Receiving.
ALLOWED_TRANSITIONS = {
    RadioState.OFF: {RadioState.LISTENING, RadioState.TRANSMITTING},
    RadioState.LISTENING: {RadioState.RECEIVING, RadioState.TURNAROUND_RX_TX, RadioState.OFF},
    RadioState.RECEIVING: {RadioState.LISTENING, RadioState.TURNAROUND_RX_TX, RadioState.OFF},
    RadioState.TURNAROUND_RX_TX: {RadioState.TRANSMITTING, RadioState.OFF},
    RadioState.TRANSMITTING: {RadioState.TURNAROUND_TX_RX, RadioState.OFF},
    RadioState.TURNAROUND_TX_RX: {RadioState.LISTENING, RadioState.RECEIVING, RadioState.OFF},
}


class TimelineError(AssertionError):
    pass


@dataclass
class RadioTimeline:
    """Ordered, non-overlapping (state, start_ns, end_ns) intervals of one node."""

    intervals: list[tuple[RadioState, int, int]] = field(default_factory=list)

    @property
    def radio_on(self) -> int:
        return sum(end - start for state, start, end in self.intervals if state is not RadioState.OFF)

    def total(self, state: RadioState) -> int:
        return sum(end - start for s, start, end in self.intervals if s is state)

    def of(self, state: RadioState) -> list[tuple[int, int]]:
        return [(start, end) for s, start, end in self.intervals if s is state]

    def validate(self, timing: RadioTimingParams | None = None) -> None:
        """Raise TimelineError on overlaps, illegal transitions or bad turnarounds."""
        prev = None
        for state, start, end in self.intervals:
            if end <= start:
                raise TimelineError(f"empty or negative interval {state} [{start}, {end})")
            if prev is None and state not in ALLOWED_TRANSITIONS[RadioState.OFF]:
                raise TimelineError(f"{state} entered from off at {start}")
            if prev is not None:
                pstate, _, pend = prev
                if start < pend:
                    raise TimelineError(f"overlap at {start}: {pstate} ends {pend}")
                if start == pend and state not in ALLOWED_TRANSITIONS[pstate]:
                    raise TimelineError(f"illegal transition {pstate} -> {state} at {start}")
                if start > pend and state not in ALLOWED_TRANSITIONS[RadioState.OFF]:
                    raise TimelineError(f"{state} entered from off at {start}")
            if timing is not None and state in (RadioState.TURNAROUND_RX_TX, RadioState.TURNAROUND_TX_RX):
                if end - start != timing.t_turn:
                    raise TimelineError(f"turnaround of {end - start} ns at {start}")
            prev = (state, start, end)


class Radio:
    """Live recorder of one node's radio state within a slot."""

    __slots__ = ("node", "state", "since", "timeline")

    def __init__(self, node: int) -> None:
        self.node = node
        self.state = RadioState.OFF
        self.since = 0
        self.timeline = RadioTimeline()

    def set_state(self, state: RadioState, t: int) -> None:
        if t < self.since:
            raise ValueError(f"node {self.node}: state change to {state} at {t} before {self.since}")
        if t > self.since and self.state is not RadioState.OFF:
            ivs = self.timeline.intervals
            if ivs and ivs[-1][0] is self.state and ivs[-1][2] == self.since:
                ivs[-1] = (self.state, ivs[-1][1], t)  # back-to-back packlets
            else:
                ivs.append((self.state, self.since, t))
        self.state = state
        self.since = t

    @property
    def radio_on(self) -> int:
        return self.timeline.radio_on


@dataclass(frozen=True)
class ClockProfile:
    """Residual timing error of a node's MCU clock when it times a delay."""

    ppm: float = 0.0
    jitter_ns: int = 0  # half-width of a uniform error

    def __post_init__(self) -> None:
        if self.jitter_ns < 0:
            raise ValueError("jitter_ns must be >= 0")


# Drift-compensated clocks keep any two nodes within the 0.5 us window.
COMPENSATED = ClockProfile(ppm=0.0, jitter_ns=250)
IDEAL_CLOCK = ClockProfile()


def apply_clock_model(profile: ClockProfile, nominal: int, rng: random.Random | None = None) -> int:
    """Duration a node actually waits when it intends to wait ``nominal`` ns."""
    actual = nominal + round(nominal * profile.ppm / 1e6)
    if profile.jitter_ns:
        if rng is None:
            raise ValueError("a jittery clock profile needs an rng")
        actual += rng.randint(-profile.jitter_ns, profile.jitter_ns)
    return actual


def rx_timestamp_of_sfd(tx_sfd_time: int, timing: RadioTimingParams = RadioTimingParams(), propagation: int = 0) -> int:
    return tx_sfd_time + timing.t_d + propagation


class LinkModel:
    """Directed packet-reception-ratio graph with optional per-link delay."""

    def __init__(self) -> None:
        self._out: dict[int, dict[int, tuple[float, int]]] = {}
        self._in: dict[int, dict[int, tuple[float, int]]] = {}
        self._nodes: set[int] = set()
        self._groups: dict[int, list[tuple[int, list[int]]]] = {}

    def add_node(self, node: int) -> None:
        self._nodes.add(node)
        self._out.setdefault(node, {})
        self._in.setdefault(node, {})

    def add_link(self, src: int, dst: int, prr: float, delay: int = 0) -> None:
        if src == dst:
            raise ValueError(f"self-link on node {src}")
        if not 0.0 <= prr <= 1.0:
            raise ValueError(f"prr {prr} outside [0, 1] on {src}->{dst}")
        if delay < 0:
            raise ValueError("propagation delay must be >= 0")
        self.add_node(src)
        self.add_node(dst)
        self._out[src][dst] = (prr, delay)
        self._in[dst][src] = (prr, delay)
        self._groups.clear()

    @property
    def nodes(self) -> list[int]:
        return sorted(self._nodes)

    def prr(self, src: int, dst: int) -> float:
        return self._out.get(src, {}).get(dst, (0.0, 0))[0]

    def out_links(self, src: int) -> dict[int, tuple[float, int]]:
        return self._out.get(src, {})

    def in_links(self, dst: int) -> dict[int, tuple[float, int]]:
        return self._in.get(dst, {})

    def out_groups(self, src: int) -> list[tuple[int, list[int]]]:
        """Out-neighbours of ``src`` grouped by link delay, ascending."""
        groups = self._groups.get(src)
        if groups is None:
            by_delay: dict[int, list[int]] = {}
            for dst, (_, delay) in sorted(self.out_links(src).items()):
                by_delay.setdefault(delay, []).append(dst)
            groups = self._groups[src] = sorted(by_delay.items())
        return groups

    def edges(self) -> Iterable[tuple[int, int, float, int]]:
        for src in sorted(self._out):
            for dst in sorted(self._out[src]):
                prr, delay = self._out[src][dst]
                yield src, dst, prr, delay

    def __len__(self) -> int:
        return sum(len(v) for v in self._out.values())


@dataclass(frozen=True)
class Segment:
    """A contiguous piece of a transmission: a packlet frame or a bare footer."""

    start: int
    end: int
    content: bytes
    is_frame: bool = True


class Transmission:
    __slots__ = ("node", "segments", "start", "end", "_starts")

    def __init__(self, node: int, segments: Sequence[Segment]) -> None:
        if not segments:
            raise ValueError("empty transmission")
        self.node = node
        self.segments = tuple(segments)
        self.start = self.segments[0].start
        self.end = self.segments[-1].end
        self._starts = [s.start for s in self.segments]
        for a, b in zip(self.segments, self.segments[1:]):
            if b.start != a.end:
                raise ValueError("transmission segments must be contiguous")

    def nearest_segment(self, t: int) -> Segment:
        i = bisect.bisect_left(self._starts, t)
        if i == 0:
            return self.segments[0]
        if i == len(self._starts):
            return self.segments[-1]
        before, after = self.segments[i - 1], self.segments[i]
        return before if t - before.start <= after.start - t else after

    def __repr__(self) -> str:
        return f"Transmission(node={self.node}, start={self.start}, end={self.end}, n={len(self.segments)})"


class Outcome(enum.Enum):
    RECEIVABLE = "receivable"
    CORRUPTED = "corrupted"
    UNDECODABLE = "undecodable"
    NOTHING = "nothing"


@dataclass(frozen=True)
class Verdict:
    outcome: Outcome
    p_success: float = 0.0
    contributors: tuple[tuple[int, int], ...] = ()  # (transmitter, rx-side segment start)
    reference_start: int | None = None  # start of the strongest copy; its SFD is the one timestamped


def deliverable_transmissions(
    receiver: int,
    ref: Segment,
    ref_start_rx: int,
    active_tx: Iterable[Transmission],
    links: LinkModel,
    timing: RadioTimingParams,
    config: PackletConfig | None = None,
) -> Verdict:
    """Reception verdict for the packlet ``ref`` as heard by ``receiver``.

    Every transmission from a connected node that overlaps the packlet by more
    than the alignment window either contributes (same bytes, start within the
    window) or corrupts it. Copies that all agree combine as independent
    chances: p = 1 - prod(1 - prr_i).
    """
    in_links = links.in_links(receiver)
    window = timing.ci_window
    dur = ref.end - ref.start
    lo, hi = ref_start_rx, ref_start_rx + dur
    contributors = []
    miss = 1.0
    conflict = False
    best = None
    for tx in active_tx:
        link = in_links.get(tx.node)
        if link is None or tx.node == receiver:
            continue
        prr, delay = link
        overlap = min(tx.end + delay, hi) - max(tx.start + delay, lo)
        if overlap <= window:
            continue
        seg = tx.nearest_segment(lo - delay)
        s_rx = seg.start + delay
        if abs(s_rx - lo) <= window and seg.end - seg.start == dur and seg.content == ref.content:
            contributors.append((tx.node, s_rx))
            miss *= 1.0 - prr
            if best is None or (prr, -s_rx) > best:
                best = (prr, -s_rx)
        else:
            conflict = True
    if contributors:
        starts = [s for _, s in contributors]
        if max(starts) - min(starts) > window:
            conflict = True
    if conflict:
        return Verdict(Outcome.CORRUPTED, 0.0, tuple(contributors))
    if not contributors:
        return Verdict(Outcome.NOTHING)
    if config is not None and decode_frame(ref.content, config) is None:
        return Verdict(Outcome.UNDECODABLE, 0.0, tuple(contributors))
    return Verdict(Outcome.RECEIVABLE, 1.0 - miss, tuple(contributors), -best[1])


def combine_prr(prrs: Iterable[float]) -> float:
    """Independent-success combining of concurrent identical copies."""
    return 1.0 - math.prod(1.0 - p for p in prrs)
