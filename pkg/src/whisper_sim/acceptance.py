"""Acceptance checks shared by ``whisper-sim check`` and the test suite.

Criteria 1 to 9 are exact and run in well under a second each. Criteria 10 to
14 run seeded multi-slot experiments on the bundled graphs; their flood
and repetition counts can be lowered for a quick look.
"""

from __future__ import annotations

import random
from dataclasses import dataclass, replace
from functools import lru_cache

from .codec import (
    PackletConfig,
    build_signaling_packet,
    compute_fcs,
    decode_frame,
    packlet_bytes,
    packlet_duration,
    scan_for_packlet,
)
from .experiment import MetricsReport, protocol_config, run_experiment
from .glossy import GlossyConfig, GlossyNode
from .radio import IDEAL_CLOCK, US, RadioState, RadioTimingParams
from .scenarios import ScenarioSpec
from .sim import Slot
from .topology import line_topology
from .whisper import (
    Sampling,
    WhisperConfig,
    WhisperNode,
    compute_t_slot,
    compute_wait,
    initiate_flood,
)

DEFAULT_FLOODS = 10_000
DEFAULT_REPS = 3


@dataclass
class CriterionResult:
    number: int
    title: str
    passed: bool
    measured: str
    expected: str
    tolerance: str = "exact"

    def line(self) -> str:
        mark = "PASS" if self.passed else "FAIL"
        return f"[{mark}] {self.number:2d} {self.title}: measured {self.measured}; expected {self.expected} ({self.tolerance})"


# --- ideal-chain helpers ----------------------------------------------------

def _ideal_whisper(**kw) -> WhisperConfig:
    return WhisperConfig(sampling=Sampling.LAZY, clock=IDEAL_CLOCK, sender_sync_ns=0, **kw)


def _ideal_glossy(**kw) -> GlossyConfig:
    return GlossyConfig(clock=IDEAL_CLOCK, sender_sync_ns=0, **kw)


def _line_trace(config, n: int = 7, timing: RadioTimingParams = RadioTimingParams()):
    topo = line_topology(n)
    make = GlossyNode if isinstance(config, GlossyConfig) else WhisperNode
    engines = {k: make(k, config, timing) for k in topo.nodes}
    return Slot(topo.links, engines, timing, senders={1}).run()


def _us(ns: int) -> str:
    return f"{ns / US:g} us"


# --- deterministic ------------------------------------------------------------

def criterion_1() -> CriterionResult:
    a = packlet_duration(PackletConfig())
    b = packlet_duration(PackletConfig(preamble_len=4))
    return CriterionResult(1, "packlet duration 2-byte / 4-byte preamble", (a, b) == (224 * US, 288 * US),
                           f"{_us(a)} / {_us(b)}", "224 us / 288 us")


def criterion_2() -> CriterionResult:
    tx = initiate_flood(_ideal_whisper(), 1, 0)
    contiguous = all(x.end == y.start for x, y in zip(tx.segments, tx.segments[1:]))
    dur = tx.end - tx.start
    return CriterionResult(2, "sender TX interval, N_tx=3", dur == 672 * US and contiguous,
                           f"{_us(dur)}, gap-free={contiguous}", "672 us, gap-free")


def criterion_3() -> CriterionResult:
    trace = _line_trace(_ideal_whisper())
    spans = set()
    for node in range(2, 8):
        tl = trace.timelines[node]
        spans.add(tl.of(RadioState.TRANSMITTING)[-1][1] - tl.of(RadioState.RECEIVING)[0][0])
    return CriterionResult(3, "forwarder RX+turnaround+TX span, ideal chain", spans == {1_120 * US},
                           ", ".join(_us(s) for s in sorted(spans)), "1120 us at every forwarder")


def criterion_4() -> CriterionResult:
    timing = RadioTimingParams(t_d=0)
    cfg = _ideal_glossy(software_delay=0, t_guard=0, packlet=PackletConfig())
    on = _line_trace(cfg, 5, timing).radio_on(2)
    return CriterionResult(4, "Glossy relay radio-on, ideal chain, N_tx=3, 2-byte preamble", on == 2_304 * US,
                           _us(on), "2304 us (6*224 + 5*192)")


def criterion_5() -> CriterionResult:
    w = compute_wait(224 * US, 192 * US, 3 * US)
    return CriterionResult(5, "T_wait(224, 192, 3)", w == 29 * US, _us(w), "29 us")


def criterion_6() -> CriterionResult:
    t = compute_t_slot(6, 3, 224 * US)
    return CriterionResult(6, "T_slot(6 hops, N_tx=3, 224 us)", t == 3_360 * US, _us(t),
                           "3360 us (slot length used in experiments: 5000 us)")


def criterion_7() -> CriterionResult:
    std = _line_trace(_ideal_whisper()).first_counter
    cmp_ = _line_trace(WhisperConfig.compliant(clock=IDEAL_CLOCK, sender_sync_ns=0)).first_counter
    a = [std[h] for h in range(2, 8)]
    b = [cmp_[h] for h in range(2, 8)]
    return CriterionResult(7, "first counter per hop, Standard | Compliant", (a, b) == ([0, 2, 4, 6, 8, 10], [1, 4, 7, 10, 13, 16]),
                           f"{a} | {b}", "[0, 2, 4, 6, 8, 10] | [1, 4, 7, 10, 13, 16]")


def criterion_8() -> CriterionResult:
    four = PackletConfig(preamble_len=4)

    def glossy(n):
        return _line_trace(_ideal_glossy(n_tx=n, packlet=four), 5).radio_on(2)

    def lazy(n):
        return _line_trace(_ideal_whisper(n_tx=n, packlet=four), 5).radio_on(2)

    g = glossy(4) - glossy(3)
    w = lazy(4) - lazy(3)
    want_g = (288 + 288 + 192 + 23) * US
    return CriterionResult(8, "radio-on per extra N_tx at 4-byte preamble, Glossy | Whisper-lazy", (g, w) == (want_g, 288 * US),
                           f"{_us(g)} | {_us(w)}", f"{_us(want_g)} | 288 us")


def _bitwise_fcs(payload: bytes) -> bytes:
    # reflected x^16 + x^12 + x^5 + 1, one bit at a time
    crc = 0
    for byte in payload:
        crc ^= byte
        for _ in range(8):
            crc = (crc >> 1) ^ 0x8408 if crc & 1 else crc >> 1
    return crc.to_bytes(2, "little")


def criterion_9(seed: int = 9) -> CriterionResult:
    rng = random.Random(seed)
    problems = []
    for _ in range(10_000):
        payload = rng.randbytes(rng.randint(1, 40))
        if compute_fcs(payload) != _bitwise_fcs(payload):
            problems.append("fcs")
            break
    for pre in (1, 2, 4, 6):
        cfg = PackletConfig(preamble_len=pre)
        raw = build_signaling_packet(cfg, 5, 7)
        found, offset = [], 0
        while (hit := scan_for_packlet(raw, offset, cfg)) is not None:
            found.append(hit[0].counter)
            offset = hit[1]
        if found != [7, 8, 9, 10, 11]:
            problems.append(f"round-trip pre={pre}")
        for _ in range(50):
            off = rng.randrange(len(raw) * 8 + 1)
            hit = scan_for_packlet(raw, off, cfg)
            first_byte = -(-off // 8)
            k = next((k for k in range(5) if k * cfg.size_bytes + pre - 1 >= first_byte), None)
            if (hit[0].counter - 7 if hit else None) != k:
                problems.append(f"offset {off} pre={pre}")
                break
    cfg = PackletConfig()
    for counter in (0, 1, 128, 255):
        frame = packlet_bytes(cfg, counter)
        for bit in range((cfg.preamble_len + 2) * 8, len(frame) * 8):
            flipped = bytearray(frame)
            flipped[bit // 8] ^= 1 << (bit % 8)
            if decode_frame(bytes(flipped), cfg) is not None:
                problems.append(f"flip {bit}")
    return CriterionResult(9, "codec round-trip, offsets, 10k FCS vs bitwise CRC, bit flips", not problems,
                           "all ok" if not problems else ", ".join(problems[:5]), "all ok")


# --- statistical --------------------------------------------------------------

@lru_cache(maxsize=None)
def _report(protocol: str, scenario: str, floods: int, reps: int, preamble: int | None = None, n_tx: int | None = None,
            simultaneous_stop: bool = False, tx_power: str = "0dbm") -> MetricsReport:
    spec = ScenarioSpec(name=scenario, protocol=protocol, tx_power=tx_power, n_floods=floods, n_repetitions=reps,
                        preamble=preamble, n_tx=n_tx)
    config = protocol_config(spec)
    if simultaneous_stop:
        config = replace(config, simultaneous_stop=True)
    return run_experiment(spec, config=config)


def _pct(x: float) -> str:
    return f"{100 * x:.3f}%"


def criterion_10(floods: int = DEFAULT_FLOODS, reps: int = DEFAULT_REPS) -> CriterionResult:
    w = _report("whisper", "diss.fixed", floods, reps)
    lz = _report("whisper-lazy", "diss.fixed", floods, reps)
    g = _report("glossy", "diss.fixed", floods, reps)
    rw, rl, rg = w.network_reliability, lz.network_reliability, g.network_reliability
    ratio = w.radio_on_signal_ms / g.radio_on_signal_ms
    ok = rw >= rg and rl >= rg and min(rw, rl, rg) >= 0.99 and 0.45 <= ratio <= 0.65
    return CriterionResult(
        10, f"diss.fixed 0 dBm, {floods} floods x {reps}",
        ok,
        f"reliability whisper {_pct(rw)}, lazy {_pct(rl)}, glossy {_pct(rg)}; radio-on {w.radio_on_signal_ms:.3f} / "
        f"{g.radio_on_signal_ms:.3f} ms = {ratio:.3f}",
        "whisper, lazy >= glossy, all >= 99%; ratio in [0.45, 0.65]",
        "band",
    )


def criterion_11(floods: int = DEFAULT_FLOODS, reps: int = DEFAULT_REPS) -> CriterionResult:
    w = _report("whisper", "diss.fixed", floods, reps)
    lz = _report("whisper-lazy", "diss.fixed", floods, reps)
    g = _report("glossy", "diss.fixed", floods, reps)
    timeout_ms = 5.0
    lazy_exact = all(v == timeout_ms * 1e6 for r in (lz, g) for rep in r.repetitions for v in rep.radio_on_idle.values())
    ok = w.radio_on_idle_ms < 3.0 and lazy_exact
    return CriterionResult(
        11, "radio-on in slots without signaling",
        ok,
        f"direction-aware {w.radio_on_idle_ms:.3f} ms; lazy {lz.radio_on_idle_ms:.3f} ms, glossy {g.radio_on_idle_ms:.3f} ms",
        "direction-aware < 3 ms; lazy and glossy exactly 5 ms at every node",
        "strict bound",
    )


def criterion_12(floods: int = DEFAULT_FLOODS, reps: int = DEFAULT_REPS) -> CriterionResult:
    parts, ok = [], True
    for scenario in ("diss.close", "diss.far"):
        lz = _report("whisper-lazy", scenario, floods, reps)
        g = _report("glossy-2b", scenario, floods, reps)
        gap = lz.network_reliability - g.network_reliability
        more_drops = g.dropped_fraction > lz.dropped_fraction
        ok &= more_drops
        if scenario == "diss.far":
            ok &= gap >= 0.005
        parts.append(
            f"{scenario}: lazy {_pct(lz.network_reliability)} vs glossy-2b {_pct(g.network_reliability)} "
            f"(+{100 * gap:.3f} pp), dropped {_pct(lz.dropped_fraction)} vs {_pct(g.dropped_fraction)}"
        )
    return CriterionResult(12, "concurrent senders, Whisper-lazy vs Glossy-2b", ok, "; ".join(parts),
                           "diss.far gap >= 0.5 pp; glossy dropped fraction strictly higher", "band")


def criterion_13(floods: int = DEFAULT_FLOODS, reps: int = DEFAULT_REPS) -> CriterionResult:
    # the 3-4 hop graph: a 14-packlet compliant flood has to reach the far edge within one 5 ms slot
    comp = _report("whisper-compliant", "diss.fixed", floods, reps, n_tx=14, tx_power="m10dbm")
    std = _report("whisper-lazy", "diss.fixed", floods, reps, n_tx=14, simultaneous_stop=True, tx_power="m10dbm")
    rel_c = min(comp.per_node_reliability.values())
    rel_s = min(std.per_node_reliability.values())
    mc, ms = comp.mean_first_counter(), std.mean_first_counter()
    hops = sorted(h for h in ms if h >= 2 and h in mc)
    slower = bool(hops) and all(mc[h] > ms[h] for h in hops)
    ok = rel_c == 1.0 and rel_s == 1.0 and slower
    fmt = ", ".join(f"h{h} {ms[h]:.2f}<{mc[h]:.2f}" if mc[h] > ms[h] else f"h{h} {ms[h]:.2f}>={mc[h]:.2f}" for h in hops)
    return CriterionResult(
        13, "Compliant vs Standard, 14 packlets, simultaneous stop, 3-4 hop graph",
        ok,
        f"min per-node reliability compliant {_pct(rel_c)}, standard {_pct(rel_s)}; mean first counter std<cmp: {fmt}",
        "100% at every node for both; compliant counter higher at every hop >= 2",
        "exact / strict",
    )


def criterion_14(floods: int = DEFAULT_FLOODS, reps: int = DEFAULT_REPS) -> CriterionResult:
    two = _report("whisper-lazy", "diss.fixed", floods, reps)
    four = _report("whisper-lazy", "diss.fixed", floods, reps, preamble=4)
    rise = four.radio_on_signal_ms / two.radio_on_signal_ms - 1
    drel = abs(four.network_reliability - two.network_reliability)
    ok = 0.15 <= rise <= 0.30 and drel <= 0.002
    return CriterionResult(
        14, "Whisper-lazy, 2-byte -> 4-byte preamble",
        ok,
        f"radio-on {two.radio_on_signal_ms:.3f} -> {four.radio_on_signal_ms:.3f} ms (+{100 * rise:.1f}%), "
        f"reliability change {100 * drel:.3f} pp",
        "radio-on rise 15-30%, reliability change <= 0.2 pp",
        "band",
    )


DETERMINISTIC = {1: criterion_1, 2: criterion_2, 3: criterion_3, 4: criterion_4, 5: criterion_5,
                 6: criterion_6, 7: criterion_7, 8: criterion_8, 9: criterion_9}
STATISTICAL = {10: criterion_10, 11: criterion_11, 12: criterion_12, 13: criterion_13, 14: criterion_14}

SUITES: dict[str, tuple[int, ...]] = {
    "timing": tuple(DETERMINISTIC),
    "ratio": (10,),
    "idle": (11,),
    "concurrent": (12,),
    "compliant": (13,),
    "preamble": (14,),
    "statistical": tuple(STATISTICAL),
    "all": tuple(DETERMINISTIC) + tuple(STATISTICAL),
}


def run_criterion(number: int, floods: int = DEFAULT_FLOODS, reps: int = DEFAULT_REPS) -> CriterionResult:
    if number in DETERMINISTIC:
        return DETERMINISTIC[number]()
    return STATISTICAL[number](floods, reps)


def run_suite(name: str, floods: int = DEFAULT_FLOODS, reps: int = DEFAULT_REPS, echo=None) -> list[CriterionResult]:
    if name not in SUITES:
        raise KeyError(f"unknown suite {name!r}; known: {', '.join(SUITES)}")
    results = []
    for n in SUITES[name]:
        r = run_criterion(n, floods, reps)
        if echo:
            echo(r.line())
        results.append(r)
    return results
