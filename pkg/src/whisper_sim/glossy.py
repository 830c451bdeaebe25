"""Glossy baseline: receive, retransmit after a fixed software delay, repeat
until ``n_tx`` transmissions, with a per-slot listening timeout."""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache

from .codec import MAX_COUNTER, PackletConfig, packlet_bytes, packlet_duration
from .radio import MS, US, ClockProfile, RadioState, RadioTimingParams, Segment, Transmission, apply_clock_model
from .sim import EventKind

# Free-running relay timing: every hop adds its own error to the chain.
GLOSSY_CLOCK = ClockProfile(ppm=0.0, jitter_ns=115)


@dataclass(frozen=True)
class GlossyConfig:
    n_tx: int = 3
    software_delay: int = 23 * US
    packlet: PackletConfig = field(default_factory=lambda: PackletConfig(preamble_len=4))
    t_guard: int = 130 * US
    timeout: int = 5 * MS
    clock: ClockProfile = GLOSSY_CLOCK
    sender_sync_ns: int = 250

    def __post_init__(self) -> None:
        if self.n_tx < 1:
            raise ValueError("n_tx must be >= 1")
        if self.software_delay < 0 or self.t_guard < 0:
            raise ValueError("software_delay and t_guard must be >= 0")

    @property
    def t_packlet(self) -> int:
        return packlet_duration(self.packlet)


def glossy_radio_on(config: GlossyConfig, timing: RadioTimingParams = RadioTimingParams()) -> int:
    """Radio-on of a relay on an ideal chain, from its first reception to its last transmission."""
    n = config.n_tx
    return 2 * n * config.t_packlet + (2 * n - 1) * (timing.t_turn + timing.t_d + config.software_delay)


@lru_cache(maxsize=512)
def _frame(packlet: PackletConfig, counter: int) -> bytes:
    return packlet_bytes(packlet, counter)


class GlossyNode:
    __slots__ = (
        "node", "config", "timing", "packlet_config", "accepting", "received", "first_counter",
        "tx_count", "deadline", "pending_close", "_delay",
    )

    def __init__(self, node: int, config: GlossyConfig = GlossyConfig(), timing: RadioTimingParams = RadioTimingParams()) -> None:
        self.node = node
        self.config = config
        self.timing = timing
        self.packlet_config = config.packlet
        self.accepting = False
        self._delay = timing.t_turn + config.software_delay

    def begin_slot(self, slot, is_sender: bool) -> None:
        cfg = self.config
        self.received = False
        self.first_counter = None
        self.tx_count = 0
        self.accepting = False
        self.pending_close = False
        if is_sender:
            offset = slot.rng(self.node).randint(-cfg.sender_sync_ns, cfg.sender_sync_ns) if cfg.sender_sync_ns else 0
            t0 = slot.t_star + offset
            self.deadline = t0 + cfg.timeout
            self._schedule_tx(slot, 0, t0, from_rx=False)
        else:
            t_on = slot.t_star - cfg.t_guard
            self.deadline = t_on + cfg.timeout
            slot.schedule(t_on, EventKind.SAMPLING_WINDOW, self.node, self._listen)
        slot.schedule(self.deadline, EventKind.SAMPLING_WINDOW, self.node, self._timeout)

    def _listen(self, slot, ev) -> None:
        radio = slot.radios[self.node]
        if ev.time >= self.deadline:
            radio.set_state(RadioState.OFF, ev.time)
            return
        radio.set_state(RadioState.LISTENING, ev.time)
        self.accepting = True

    def _timeout(self, slot, ev) -> None:
        radio = slot.radios[self.node]
        if radio.state is RadioState.LISTENING and self.accepting:
            radio.set_state(RadioState.OFF, ev.time)
            self.accepting = False
        elif radio.state is RadioState.RECEIVING:
            self.pending_close = True

    def on_frame(self, slot, t: int, packlet, verdict) -> None:
        radio = slot.radios[self.node]
        if packlet is None:
            if self.pending_close or t >= self.deadline:
                radio.set_state(RadioState.OFF, t)
                self.accepting = False
            return
        if not self.received:
            self.received = True
            self.first_counter = packlet.counter
        self.accepting = False
        counter = packlet.counter + 1
        if counter > MAX_COUNTER:
            radio.set_state(RadioState.OFF, t)
            return
        ref_end = verdict.reference_start + self.config.t_packlet + self.timing.t_d
        tx_start = ref_end + apply_clock_model(self.config.clock, self._delay, slot.rng(self.node))
        tx_start = max(tx_start, t + self.timing.t_turn)
        self._schedule_tx(slot, counter, tx_start, from_rx=True)

    def _schedule_tx(self, slot, counter: int, t0: int, from_rx: bool) -> None:
        tp = self.config.t_packlet
        tx = Transmission(self.node, [Segment(t0, t0 + tp, _frame(self.packlet_config, counter))])
        if from_rx:
            slot.schedule(t0 - self.timing.t_turn, EventKind.RADIO_STATE_CHANGE, self.node, _to_state, RadioState.TURNAROUND_RX_TX)
        slot.schedule(t0, EventKind.RADIO_STATE_CHANGE, self.node, _start_tx, tx)
        slot.schedule(t0 + tp, EventKind.TX_STOP, self.node, self._tx_done)

    def _tx_done(self, slot, ev) -> None:
        self.tx_count += 1
        radio = slot.radios[self.node]
        if self.tx_count >= self.config.n_tx or ev.time + self.timing.t_turn >= self.deadline:
            radio.set_state(RadioState.OFF, ev.time)
            return
        radio.set_state(RadioState.TURNAROUND_TX_RX, ev.time)
        slot.schedule(ev.time + self.timing.t_turn, EventKind.RADIO_STATE_CHANGE, self.node, self._listen)

    def end_slot(self) -> tuple[bool, int | None]:
        return self.received, self.first_counter


def _to_state(slot, ev) -> None:
    slot.radios[ev.node].set_state(ev.data, ev.time)


def _start_tx(slot, ev) -> None:
    slot.radios[ev.node].set_state(RadioState.TRANSMITTING, ev.time)
    slot.add_transmission(ev.data)
