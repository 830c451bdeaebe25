"""Whisper flooding: slot arithmetic, counter relay rule, sampling strategies and
the per-node protocol state machine driven by :mod:`whisper_sim.sim`."""

from __future__ import annotations

import enum
import warnings
from dataclasses import dataclass, field, replace
from fractions import Fraction
from functools import lru_cache

from .codec import FCS_LEN, MAX_COUNTER, PackletConfig, TxMode, build_signaling_packet, packlet_duration
from .radio import (
    COMPENSATED,
    MS,
    US,
    ClockProfile,
    RadioState,
    RadioTimingParams,
    Segment,
    Transmission,
    apply_clock_model,
)
from .sim import EventKind, Slot


class ConfigurationError(ValueError):
    pass


class FragileTimingWarning(UserWarning):
    pass


class Sampling(enum.Enum):
    LAZY = "lazy"
    DIRECTION_AWARE = "direction-aware"


class Variant(enum.Enum):
    STANDARD = "standard"  # TXFIFO looping, packlet-sized length fields
    COMPLIANT = "compliant"  # buffered mode, 4-byte preamble, simultaneous stop


# Below this the relay wait is at the mercy of a few hundred ns of clock error.
FRAGILE_WAIT_NS = 5 * US


def compute_t_slot(d_net: int, n_tx: int, t_packlet: int) -> int:
    """Slot long enough for the flood to cross ``d_net`` hops at 2 packlets per hop."""
    if d_net < 1 or n_tx < 1:
        raise ValueError("d_net and n_tx must be >= 1")
    return (2 * d_net + n_tx) * t_packlet


def compute_wait(t_packlet: int, t_turn: int, t_d: int) -> int:
    """Idle time between the end of a reception and the RX->TX turnaround."""
    wait = t_packlet - t_turn - t_d
    if wait <= 0:
        raise ConfigurationError(
            f"packlet too short for turnaround: {t_packlet} ns packlet, {t_turn} ns turnaround, {t_d} ns data delay"
        )
    if wait < FRAGILE_WAIT_NS:
        warnings.warn(f"relay wait of {wait} ns leaves little margin for clock error", FragileTimingWarning, stacklevel=2)
    return wait


@dataclass(frozen=True)
class WhisperConfig:
    n_tx: int = 3
    t_guard: int = 130 * US
    t_slot: int = 5 * MS
    sampling: Sampling = Sampling.DIRECTION_AWARE
    delta_c: int = 2
    variant: Variant = Variant.STANDARD
    packlet: PackletConfig = field(default_factory=PackletConfig)
    simultaneous_stop: bool = False
    timeout: int = 5 * MS
    clock: ClockProfile = COMPENSATED
    sender_sync_ns: int = 250

    def __post_init__(self) -> None:
        if self.n_tx < 1:
            raise ValueError("n_tx must be >= 1")
        if self.t_guard < 0 or self.t_slot <= 0 or self.timeout <= 0:
            raise ValueError("t_guard, t_slot and timeout must be positive")

    @classmethod
    def compliant(cls, n_tx: int = 14, **kw) -> "WhisperConfig":
        kw.setdefault("packlet", PackletConfig(preamble_len=4))
        kw.setdefault("sampling", Sampling.LAZY)
        return cls(n_tx=n_tx, variant=Variant.COMPLIANT, simultaneous_stop=True, **kw)

    @property
    def mode(self) -> TxMode:
        return TxMode.BUFFERED if self.variant is Variant.COMPLIANT else TxMode.LOOPING

    @property
    def t_packlet(self) -> int:
        return packlet_duration(self.packlet)

    @property
    def footer_ns(self) -> int:
        return FCS_LEN * self.packlet.byte_ns if self.mode is TxMode.BUFFERED else 0

    @property
    def stop_counter(self) -> int:
        """First counter that no longer fits before the slot-wide stop time."""
        return min((self.t_slot - self.footer_ns) // self.t_packlet, MAX_COUNTER + 1)

    def packlets_from(self, start_counter: int) -> int:
        if self.simultaneous_stop:
            return max(0, self.stop_counter - start_counter)
        return max(0, min(self.n_tx, MAX_COUNTER + 1 - start_counter))


def check_slot_length(config: WhisperConfig, d_net: int) -> bool:
    """Warn (not fail) when the slot is shorter than the flood needs."""
    need = compute_t_slot(d_net, config.n_tx, config.t_packlet)
    if config.t_slot < need:
        warnings.warn(f"t_slot {config.t_slot} ns < {need} ns needed for diameter {d_net}", stacklevel=2)
        return False
    return True


@dataclass(frozen=True)
class SamplingState:
    """Counters a node learned about where the flood passes it."""

    c_min: int = 0
    c_max: int = 0
    c_sum: int = 0
    n_obs: int = 0

    @property
    def initialized(self) -> bool:
        return self.n_obs > 0

    @property
    def c_avg(self) -> Fraction:
        return Fraction(self.c_sum, self.n_obs) if self.n_obs else Fraction(0)


def update_sampling(state: SamplingState, c_new: int, delta_c: int = 2) -> SamplingState:
    """Fold a verified counter into the learned window.

    The outlier test compares against the mean *before* ``c_new`` is folded in.
    """
    if not state.initialized:
        return SamplingState(c_min=c_new, c_max=c_new, c_sum=c_new, n_obs=1)
    # c_new >= c_sum/n_obs + delta_c, kept in integers
    outlier = c_new * state.n_obs >= state.c_sum + delta_c * state.n_obs
    c_sum = state.c_sum + c_new
    n_obs = state.n_obs + 1
    c_max = c_new if outlier else -(-c_sum // n_obs)
    return SamplingState(c_min=min(state.c_min, c_new), c_max=c_max, c_sum=c_sum, n_obs=n_obs)


def sampling_window(state: SamplingState, config: WhisperConfig, t_star_start: int) -> tuple[int, int]:
    """Return (radio-on time, listening duration) for one slot, clamped to the slot end."""
    tp = config.t_packlet
    if config.sampling is Sampling.LAZY or not state.initialized:
        t_start = t_star_start - config.t_guard
        t_sampling = config.t_guard + config.t_slot
    else:
        t_start = t_star_start - config.t_guard + max(0, state.c_min - 1) * tp
        t_sampling = config.t_guard + max(config.n_tx, state.c_max) * tp
    slot_end = t_star_start + config.t_slot
    if t_start + t_sampling > slot_end:
        t_sampling = max(0, slot_end - t_start)
    return t_start, t_sampling


@lru_cache(maxsize=1024)
def _frames(packlet: PackletConfig, start_counter: int, n: int, mode: TxMode) -> tuple[bytes, ...]:
    raw = build_signaling_packet(packlet, n, start_counter, mode)
    size = packlet.size_bytes
    frames = tuple(raw[k * size : (k + 1) * size] for k in range(n))
    if mode is TxMode.BUFFERED:
        frames += (raw[n * size :],)
    return frames


def build_segments(config: WhisperConfig, start_counter: int, n: int, t0: int) -> list[Segment]:
    """Lay a node's signaling packet out in time, starting at ``t0``."""
    tp = config.t_packlet
    frames = _frames(config.packlet, start_counter, n, config.mode)
    segs = [Segment(t0 + k * tp, t0 + (k + 1) * tp, frames[k]) for k in range(n)]
    if config.mode is TxMode.BUFFERED:
        end = t0 + n * tp
        segs.append(Segment(end, end + config.footer_ns, frames[n], is_frame=False))
    return segs


def initiate_flood(config: WhisperConfig, sender: int, t_star_start: int, offset: int = 0) -> Transmission:
    """The sender's gap-free signaling packet, first packlet carrying c=0."""
    n = config.packlets_from(0)
    return Transmission(sender, build_segments(config, 0, n, t_star_start + offset))


@dataclass(frozen=True)
class RelayAction:
    start_counter: int
    n_packlets: int
    tx_start: int  # nominal first-SFD time on the slot grid
    mode: TxMode


def on_packlet_received(config: WhisperConfig, c_received: int, t_star_start: int) -> RelayAction:
    """Relay rule: skip the packlet that passes during the turnaround, join at c+2."""
    start = c_received + 2
    return RelayAction(
        start_counter=start,
        n_packlets=config.packlets_from(start),
        tx_start=t_star_start + start * config.t_packlet,
        mode=config.mode,
    )


class WhisperNode:
    """One node's Whisper engine. Learned sampling state survives across slots."""

    def __init__(
        self,
        node: int,
        config: WhisperConfig = WhisperConfig(),
        timing: RadioTimingParams = RadioTimingParams(),
        sampling_state: SamplingState | None = None,
    ) -> None:
        self.node = node
        self.config = config
        self.timing = timing
        self.packlet_config = config.packlet
        self.sampling_state = sampling_state or SamplingState()
        self.fallback_lazy = False
        self._relay_delay = compute_wait(config.t_packlet, timing.t_turn, timing.t_d) + timing.t_turn
        self.accepting = False

    def reset_epoch(self) -> None:
        self.sampling_state = SamplingState()

    @property
    def effective_config(self) -> WhisperConfig:
        if self.fallback_lazy and self.config.sampling is Sampling.DIRECTION_AWARE:
            return replace(self.config, sampling=Sampling.LAZY)
        return self.config

    # --- slot lifecycle -------------------------------------------------
    def begin_slot(self, slot, is_sender: bool) -> None:
        self.received = False
        self.first_counter = None
        self.committed = False
        self.accepting = False
        self.pending_close = False
        self._token = 0
        cfg = self.effective_config
        t_star = slot.t_star
        if is_sender:
            rng = slot.rng(self.node)
            offset = rng.randint(-cfg.sender_sync_ns, cfg.sender_sync_ns) if cfg.sender_sync_ns else 0
            self._schedule_tx(slot, build_segments(cfg, 0, cfg.packlets_from(0), t_star + offset))
            return
        t_start, t_sampling = sampling_window(self.sampling_state, cfg, t_star)
        duration = min(t_sampling, cfg.timeout)
        if duration <= 0:
            return
        self.window_end = t_start + duration
        slot.schedule(t_start, EventKind.SAMPLING_WINDOW, self.node, self._open)
        slot.schedule(self.window_end, EventKind.SAMPLING_WINDOW, self.node, self._close, 0)

    def _open(self, slot, ev) -> None:
        slot.radios[self.node].set_state(RadioState.LISTENING, ev.time)
        self.accepting = True

    def _close(self, slot, ev) -> None:
        if ev.data != self._token or self.committed:
            return
        radio = slot.radios[self.node]
        if radio.state is RadioState.LISTENING:
            radio.set_state(RadioState.OFF, ev.time)
            self.accepting = False
        elif radio.state is RadioState.RECEIVING:
            self.pending_close = True

    def on_frame(self, slot, t: int, packlet, verdict) -> None:
        radio = slot.radios[self.node]
        cfg = self.effective_config
        if packlet is not None:
            self.received = True
            self.first_counter = packlet.counter
            self.committed = True
            self.accepting = False
            self.sampling_state = update_sampling(self.sampling_state, packlet.counter, cfg.delta_c)
            self._relay(slot, t, packlet.counter)
            return
        if cfg.sampling is Sampling.DIRECTION_AWARE:
            # A packlet was on the air even if it did not verify: keep listening
            # until the latest packlet this node could still expect.
            tp = cfg.t_packlet
            late_end = slot.t_star + (self.sampling_state.c_max + cfg.n_tx + 2) * tp + self.timing.t_d
            late_end = min(late_end, slot.t_star + cfg.t_slot)
            if late_end > self.window_end:
                self.window_end = late_end
                self._token += 1
                self.pending_close = False
                slot.schedule(late_end, EventKind.SAMPLING_WINDOW, self.node, self._close, self._token)
        if self.pending_close or t >= self.window_end:
            radio.set_state(RadioState.OFF, t)
            self.accepting = False

    def _relay(self, slot, t: int, c: int) -> None:
        cfg = self.effective_config
        radio = slot.radios[self.node]
        action = on_packlet_received(cfg, c, slot.t_star)
        if action.n_packlets <= 0:
            radio.set_state(RadioState.OFF, t)
            return
        err = apply_clock_model(cfg.clock, self._relay_delay, slot.rng(self.node)) - self._relay_delay
        tx_start = action.tx_start + err
        if tx_start - self.timing.t_turn < t:
            raise RuntimeError(f"node {self.node}: relay of c={action.start_counter} would start before reception ends")
        self._schedule_tx(slot, build_segments(cfg, action.start_counter, action.n_packlets, tx_start), from_rx=True)

    def _schedule_tx(self, slot, segments: list[Segment], from_rx: bool = False) -> None:
        tx = Transmission(self.node, segments)
        if from_rx:
            slot.schedule(tx.start - self.timing.t_turn, EventKind.RADIO_STATE_CHANGE, self.node, _to_state, RadioState.TURNAROUND_RX_TX)
        slot.schedule(tx.start, EventKind.RADIO_STATE_CHANGE, self.node, _start_tx, tx)
        slot.schedule(tx.end, EventKind.TX_STOP, self.node, _to_state, RadioState.OFF)

    def end_slot(self) -> tuple[bool, int | None]:
        return self.received, self.first_counter


def _to_state(slot, ev) -> None:
    slot.radios[ev.node].set_state(ev.data, ev.time)


def _start_tx(slot, ev) -> None:
    slot.radios[ev.node].set_state(RadioState.TRANSMITTING, ev.time)
    slot.add_transmission(ev.data)


def reverse_initialization(topology, sink: int, config: WhisperConfig, timing: RadioTimingParams = RadioTimingParams(), seed: int = 0, n_slots: int = 5) -> dict[int, int | None]:
    """Learn hop distances to ``sink`` from ``n_slots`` sink-initiated floods.

    Returns node -> hops (None if the node heard nothing; it should fall back to
    lazy sampling). The first counter heard at hop h is 2(h-1).
    """
    probe_cfg = replace(config, sampling=Sampling.LAZY, variant=Variant.STANDARD, simultaneous_stop=False)
    engines = {n: WhisperNode(n, probe_cfg, timing) for n in topology.nodes}
    for k in range(n_slots):
        Slot(topology.links, engines, timing, senders={sink}, seed=seed, slot_index=-(k + 1)).run()
    hops: dict[int, int | None] = {sink: 0}
    for n, eng in engines.items():
        if n == sink:
            continue
        st = eng.sampling_state
        hops[n] = st.c_min // 2 + 1 if st.initialized else None
    return hops


def seed_reversed_sampling(engines: dict[int, WhisperNode], hops: dict[int, int | None], d_net: int) -> None:
    """Point each node's window at where a flood from the far edge would pass it."""
    for n, eng in engines.items():
        h = hops.get(n)
        if h is None:
            eng.fallback_lazy = True
            eng.sampling_state = SamplingState()
            continue
        position = max(d_net - h, 0)
        c = 2 * max(position - 1, 0)
        eng.sampling_state = SamplingState(c_min=c, c_max=c, c_sum=c, n_obs=1)
