"""Per-slot discrete-event engine.

Events are processed in (time, sequence) order. Reception is decided once per
packlet: a receiver that is listening at a packlet's sync point locks onto it,
and when the packlet (plus the data delay) is over the verdict from
:func:`whisper_sim.radio.deliverable_transmissions` decides what it got.
"""

from __future__ import annotations

import enum
import heapq
import random
from collections import Counter
from dataclasses import dataclass, field

from .codec import decode_frame
from .radio import (
    MS,
    Outcome,
    Radio,
    RadioState,
    RadioTimeline,
    RadioTimingParams,
    Segment,
    Transmission,
    deliverable_transmissions,
)

SLOT_ORIGIN = 1 * MS  # t* of every slot; leaves room for early guard times
_MASK32 = (1 << 32) - 1
_MASK64 = (1 << 64) - 1


class EventKind(enum.Enum):
    SLOT_BOUNDARY = "slot_boundary"
    SAMPLING_WINDOW = "sampling_window"
    RADIO_STATE_CHANGE = "radio_state_change"
    PACKLET_BOUNDARY = "packlet_boundary"
    TX_STOP = "tx_stop"


class Event:
    __slots__ = ("time", "sequence", "kind", "node", "action", "data")

    def __init__(self, time, sequence, kind, node, action, data=None):
        self.time = time
        self.sequence = sequence
        self.kind = kind
        self.node = node
        self.action = action
        self.data = data

    def __lt__(self, other: "Event") -> bool:
        return (self.time, self.sequence) < (other.time, other.sequence)

    def __repr__(self) -> str:
        return f"Event({self.time}, #{self.sequence}, {self.kind.value}, node={self.node})"


def substream(seed: int, slot_index: int, node: int) -> random.Random:
    """Independent generator for one (seed, slot, node) triple."""
    return random.Random(((seed & _MASK64) << 96) | ((slot_index & _MASK64) << 32) | (node & _MASK32))


@dataclass
class SlotTrace:
    slot_index: int
    t_star: int
    senders: frozenset
    timelines: dict[int, RadioTimeline] = field(default_factory=dict)
    received: dict[int, bool] = field(default_factory=dict)
    first_counter: dict[int, int | None] = field(default_factory=dict)
    transmissions: list[Transmission] = field(default_factory=list)
    frames_ok: Counter = field(default_factory=Counter)
    frames_dropped: Counter = field(default_factory=Counter)  # lost to interference or undecodable
    frames_faded: Counter = field(default_factory=Counter)  # clean copy, lost on the link
    pairs: Counter = field(default_factory=Counter)  # delivered / dropped / faded / unheard / in_range
    n_events: int = 0

    def radio_on(self, node: int) -> int:
        return self.timelines[node].radio_on


class _Lock:
    __slots__ = ("seg", "tx_node", "s_rx", "attached")

    def __init__(self, seg: Segment, tx_node: int, s_rx: int) -> None:
        self.seg = seg
        self.tx_node = tx_node
        self.s_rx = s_rx
        self.attached: list[int] = []


class Slot:
    """One flooding slot over a fixed link graph.

    ``engines`` maps node id to a protocol engine exposing ``packlet_config``,
    ``accepting``, ``begin_slot(slot, is_sender)``, ``on_frame(slot, t, packlet,
    verdict)`` and ``end_slot()``.
    """

    def __init__(
        self,
        links,
        engines: dict,
        timing: RadioTimingParams = RadioTimingParams(),
        senders=(),
        seed: int = 0,
        slot_index: int = 0,
        t_star: int = SLOT_ORIGIN,
    ) -> None:
        missing = set(senders) - set(engines)
        if missing:
            raise ValueError(f"senders without an engine: {sorted(missing)}")
        self.links = links
        self.engines = engines
        self.timing = timing
        self.senders = frozenset(senders)
        self.seed = seed
        self.slot_index = slot_index
        self.t_star = t_star
        self.now = 0
        self.radios = {n: Radio(n) for n in engines}
        self.transmissions: list[Transmission] = []
        self._queue: list[tuple[int, int, Event]] = []
        self._seq = 0
        self._rngs: dict[int, random.Random] = {}
        self._locks: dict[int, _Lock] = {}
        self.trace = SlotTrace(slot_index, t_star, self.senders)

    def rng(self, node: int) -> random.Random:
        r = self._rngs.get(node)
        if r is None:
            r = self._rngs[node] = substream(self.seed, self.slot_index, node)
        return r

    def schedule(self, t: int, kind, node: int, action, data=None) -> None:
        if t < self.now:
            raise RuntimeError(f"event {kind} for node {node} scheduled at {t} < now {self.now}")
        self._seq += 1
        heapq.heappush(self._queue, (t, self._seq, Event(t, self._seq, kind, node, action, data)))

    # --- medium ---------------------------------------------------------
    def add_transmission(self, tx: Transmission) -> None:
        self.transmissions.append(tx)
        self.trace.transmissions.append(tx)
        cfg = self.engines[tx.node].packlet_config
        sync = (cfg.preamble_len - 1) * cfg.byte_ns
        for seg in tx.segments:
            if not seg.is_frame:
                continue
            for delay, receivers in self.links.out_groups(tx.node):
                self.schedule(seg.start + delay + sync, EventKind.PACKLET_BOUNDARY, tx.node, _sync, (seg, delay, receivers))

    def _on_sync(self, ev: Event) -> None:
        seg, delay, receivers = ev.data
        pairs = self.trace.pairs
        locks = self._locks
        radios = self.radios
        engines = self.engines
        listening = RadioState.LISTENING
        pairs["in_range"] += len(receivers)
        for r in receivers:
            lock = locks.get(r)
            if lock is not None:
                lock.attached.append(ev.node)
                continue
            radio = radios.get(r)
            if radio is not None and radio.state is listening and engines[r].accepting:
                s_rx = seg.start + delay
                lock = locks[r] = _Lock(seg, ev.node, s_rx)
                radio.set_state(RadioState.RECEIVING, max(radio.since, s_rx))
                end = s_rx + (seg.end - seg.start) + self.timing.t_d
                self.schedule(end, EventKind.PACKLET_BOUNDARY, r, _frame_end, lock)
            else:
                pairs["unheard"] += 1

    def _on_frame_end(self, ev: Event) -> None:
        r, lock, t = ev.node, ev.data, ev.time
        del self._locks[r]
        engine = self.engines[r]
        cfg = engine.packlet_config
        verdict = deliverable_transmissions(r, lock.seg, lock.s_rx, self.transmissions, self.links, self.timing, cfg)
        if verdict.outcome is Outcome.RECEIVABLE:
            ok = self.rng(r).random() < verdict.p_success
            outcome = "delivered" if ok else "faded"
        else:
            ok = False
            outcome = "dropped"
        pairs = self.trace.pairs
        pairs[outcome] += 1
        copies = {n for n, _ in verdict.contributors}
        for n in lock.attached:
            pairs[outcome if n in copies else "unheard"] += 1
        if ok:
            self.trace.frames_ok[r] += 1
        elif outcome == "dropped":
            self.trace.frames_dropped[r] += 1
        else:
            self.trace.frames_faded[r] += 1
        self.radios[r].set_state(RadioState.LISTENING, t)
        engine.on_frame(self, t, decode_frame(lock.seg.content, cfg) if ok else None, verdict)

    # --- loop -----------------------------------------------------------
    def run(self) -> SlotTrace:
        self.schedule(0, EventKind.SLOT_BOUNDARY, -1, _begin)
        queue = self._queue
        n = 0
        while queue:
            t, _, ev = heapq.heappop(queue)
            if t < self.now:
                raise RuntimeError("event clock went backwards")
            self.now = t
            ev.action(self, ev)
            n += 1
        stuck = [(node, r.state) for node, r in self.radios.items() if r.state is not RadioState.OFF]
        if stuck:
            raise RuntimeError(f"event queue ran dry at {self.now} ns with radios still on: {stuck}")
        trace = self.trace
        trace.n_events = n
        for node, engine in self.engines.items():
            trace.timelines[node] = self.radios[node].timeline
            received, first = engine.end_slot()
            trace.received[node] = received
            trace.first_counter[node] = first
        return trace


def _begin(slot: Slot, ev: Event) -> None:
    for node in sorted(slot.engines):
        slot.engines[node].begin_slot(slot, node in slot.senders)


def _sync(slot: Slot, ev: Event) -> None:
    slot._on_sync(ev)


def _frame_end(slot: Slot, ev: Event) -> None:
    slot._on_frame_end(ev)


def run_slot(topology, engines: dict, senders, seed: int = 0, slot_index: int = 0, timing: RadioTimingParams = RadioTimingParams()) -> SlotTrace:
    """Simulate one slot. ``topology`` may be a Topology or a bare LinkModel."""
    links = getattr(topology, "links", topology)
    return Slot(links, engines, timing, senders, seed, slot_index).run()
