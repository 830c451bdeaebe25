import itertools
import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from whisper_sim.codec import PackletConfig, TxMode, build_signaling_packet, packlet_bytes, packlet_duration
from whisper_sim.radio import (
    COMPENSATED,
    ClockProfile,
    LinkModel,
    Outcome,
    Radio,
    RadioState,
    RadioTimeline,
    RadioTimingParams,
    Segment,
    TimelineError,
    Transmission,
    apply_clock_model,
    combine_prr,
    deliverable_transmissions,
    rx_timestamp_of_sfd,
)

CFG = PackletConfig()
TP = packlet_duration(CFG)
TIMING = RadioTimingParams()


def star(prrs, delays=None):
    """Transmitters 1..k all linked to receiver 0."""
    links = LinkModel()
    links.add_node(0)
    for i, p in enumerate(prrs, 1):
        links.add_link(i, 0, p, (delays or {}).get(i, 0))
    return links


def tx(node, start, counter=5, cfg=CFG, content=None):
    dur = packlet_duration(cfg)
    return Transmission(node, [Segment(start, start + dur, content or packlet_bytes(cfg, counter))])


def verdict(links, txs, ref_tx=None):
    ref_tx = ref_tx or txs[0]
    seg = ref_tx.segments[0]
    return deliverable_transmissions(0, seg, seg.start, txs, links, TIMING, CFG)


def test_single_aligned_transmitter_delivers():
    v = verdict(star([1.0]), [tx(1, 0)])
    assert v.outcome is Outcome.RECEIVABLE and v.p_success == 1.0


def test_two_copies_combine_to_three_quarters_monte_carlo():
    v = verdict(star([0.5, 0.5]), [tx(1, 0), tx(2, 400)])
    assert v.outcome is Outcome.RECEIVABLE
    assert v.p_success == pytest.approx(0.75)
    rng = random.Random(11)
    trials = 100_000
    ok = sum(rng.random() < v.p_success for _ in range(trials))
    assert abs(ok / trials - 0.75) <= 0.01
    # independent-copies oracle: each copy survives on its own
    ok_copies = sum((rng.random() < 0.5) or (rng.random() < 0.5) for _ in range(trials))
    assert abs(ok_copies / trials - v.p_success) <= 0.01


def test_misaligned_copy_corrupts():
    v = verdict(star([1.0, 1.0]), [tx(1, 0), tx(2, 501)])
    assert v.outcome is Outcome.CORRUPTED


def test_alignment_window_is_inclusive():
    v = verdict(star([1.0, 1.0]), [tx(1, 0), tx(2, 500)])
    assert v.outcome is Outcome.RECEIVABLE


def test_different_bytes_corrupt():
    v = verdict(star([1.0, 1.0]), [tx(1, 0, counter=5), tx(2, 0, counter=6)])
    assert v.outcome is Outcome.CORRUPTED


def test_buffered_length_field_conflict():
    cfg = PackletConfig(preamble_len=4)
    a = build_signaling_packet(cfg, 3, 4, TxMode.BUFFERED)
    b = build_signaling_packet(cfg, 3, 4, TxMode.LOOPING)
    tp = packlet_duration(cfg)

    def as_tx(node, raw):
        return Transmission(node, [Segment(k * tp, (k + 1) * tp, raw[k * 9 : (k + 1) * 9]) for k in range(3)])

    links = star([1.0, 1.0])
    t1, t2 = as_tx(1, a), as_tx(2, b)
    first = deliverable_transmissions(0, t1.segments[0], 0, [t1, t2], links, TIMING, cfg)
    second = deliverable_transmissions(0, t1.segments[1], tp, [t1, t2], links, TIMING, cfg)
    assert first.outcome is Outcome.CORRUPTED
    assert second.outcome is Outcome.RECEIVABLE


def test_unconnected_transmitters_ignored():
    links = star([1.0])
    v = verdict(links, [tx(1, 0), tx(9, 300, counter=99)])
    assert v.outcome is Outcome.RECEIVABLE


def test_small_overlap_does_not_conflict():
    # a packlet that ends within the alignment window of the reference start
    v = verdict(star([1.0, 1.0]), [tx(1, TP - 400), tx(2, 0, counter=1)], ref_tx=None)
    assert v.outcome is Outcome.RECEIVABLE


def test_propagation_delay_counts_toward_alignment():
    links = star([1.0, 1.0], delays={2: 600})
    v = verdict(links, [tx(1, 0), tx(2, 0)])
    assert v.outcome is Outcome.CORRUPTED


def test_reference_is_strongest_copy():
    v = verdict(star([0.6, 0.9]), [tx(1, 0), tx(2, 300)])
    assert v.reference_start == 300


@settings(max_examples=200, deadline=None)
@given(
    offsets=st.lists(st.integers(-2000, 2000), min_size=1, max_size=4),
    prrs=st.lists(st.floats(0.05, 1.0), min_size=5, max_size=5),
    extra_offset=st.integers(-3000, 3000),
    extra_same=st.booleans(),
)
def test_adding_transmitter_never_rescues_a_drop(offsets, prrs, extra_offset, extra_same):
    links = star(prrs)
    base = [tx(i + 1, 1000 + off) for i, off in enumerate(offsets)]
    v0 = deliverable_transmissions(0, base[0].segments[0], base[0].start, base, links, TIMING, CFG)
    extra = tx(5, 1000 + extra_offset, counter=5 if extra_same else 6)
    v1 = deliverable_transmissions(0, base[0].segments[0], base[0].start, base + [extra], links, TIMING, CFG)
    if v0.outcome is not Outcome.RECEIVABLE:
        assert v1.outcome is not Outcome.RECEIVABLE
    else:
        assert v1.outcome is not Outcome.RECEIVABLE or v1.p_success >= v0.p_success


def test_combine_prr():
    assert combine_prr([0.5, 0.5]) == pytest.approx(0.75)
    assert combine_prr([]) == 0.0
    assert combine_prr([1.0, 0.2]) == 1.0


def test_rx_timestamp():
    assert rx_timestamp_of_sfd(0) == 3_000
    assert rx_timestamp_of_sfd(0, RadioTimingParams(t_d=0)) == 0
    assert rx_timestamp_of_sfd(0, RadioTimingParams(t_d=3_600)) == 3_600
    assert rx_timestamp_of_sfd(100, propagation=50) == 3_150


def test_clock_model():
    assert apply_clock_model(ClockProfile(), 224_000) == 224_000
    # 224 us * 40 ppm = 8.96 ns, rounded to the integer-ns grid
    assert apply_clock_model(ClockProfile(ppm=40), 224_000) == 224_009
    with pytest.raises(ValueError):
        apply_clock_model(COMPENSATED, 1000)


def test_compensated_pairs_stay_in_window():
    j = COMPENSATED.jitter_ns
    # exhaustive over the jitter bounds
    for a, b in itertools.product((-j, 0, j), repeat=2):
        assert abs(a - b) <= TIMING.ci_window
    rng = random.Random(5)
    for _ in range(10_000):
        d = apply_clock_model(COMPENSATED, 256_000, rng) - apply_clock_model(COMPENSATED, 256_000, rng)
        assert abs(d) <= TIMING.ci_window


def test_clock_profile_validation():
    with pytest.raises(ValueError):
        ClockProfile(jitter_ns=-1)


def test_link_model_validation():
    links = LinkModel()
    with pytest.raises(ValueError):
        links.add_link(1, 1, 0.5)
    with pytest.raises(ValueError):
        links.add_link(1, 2, 1.5)
    with pytest.raises(ValueError):
        links.add_link(1, 2, 0.5, -1)
    links.add_link(1, 2, 0.5, 10)
    links.add_link(1, 3, 0.5)
    assert links.prr(1, 2) == 0.5 and links.prr(2, 1) == 0.0
    assert links.out_groups(1) == [(0, [3]), (10, [2])]
    assert len(links) == 2


def test_radio_timeline_accounting():
    r = Radio(1)
    r.set_state(RadioState.LISTENING, 100)
    r.set_state(RadioState.RECEIVING, 150)
    r.set_state(RadioState.LISTENING, 377)
    r.set_state(RadioState.TURNAROUND_RX_TX, 406)
    r.set_state(RadioState.TRANSMITTING, 406 + TIMING.t_turn)
    r.set_state(RadioState.OFF, 1000 + TIMING.t_turn)
    tl = r.timeline
    tl.validate(TIMING)
    assert tl.radio_on == 1000 + TIMING.t_turn - 100
    assert tl.radio_on == sum(tl.total(s) for s in RadioState if s is not RadioState.OFF)
    with pytest.raises(ValueError):
        r.set_state(RadioState.LISTENING, 0)


@pytest.mark.parametrize(
    "intervals",
    [
        [(RadioState.LISTENING, 0, 10), (RadioState.TRANSMITTING, 5, 20)],  # overlap
        [(RadioState.LISTENING, 0, 10), (RadioState.TRANSMITTING, 10, 20)],  # no turnaround
        [(RadioState.TURNAROUND_RX_TX, 0, 100)],  # wrong duration, entered from off
        [(RadioState.RECEIVING, 0, 10)],  # receiving straight from off
        [(RadioState.LISTENING, 10, 10)],  # empty
    ],
)
def test_timeline_validation_rejects(intervals):
    with pytest.raises(TimelineError):
        RadioTimeline(intervals).validate(TIMING)


def test_timing_params_validation():
    with pytest.raises(ValueError):
        RadioTimingParams(t_turn=0)
    with pytest.raises(ValueError):
        RadioTimingParams(t_d=-1)
    with pytest.raises(ValueError):
        RadioTimingParams(ci_window=0)


def test_transmission_segments_must_be_contiguous():
    with pytest.raises(ValueError):
        Transmission(1, [Segment(0, 10, b"a"), Segment(11, 20, b"b")])
    with pytest.raises(ValueError):
        Transmission(1, [])
