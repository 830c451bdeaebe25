import warnings
from dataclasses import replace

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from whisper_sim.codec import PackletConfig, TxMode, decode_frame
from whisper_sim.radio import IDEAL_CLOCK, US, RadioState, RadioTimingParams
from whisper_sim.sim import Slot
from whisper_sim.topology import line_topology
from whisper_sim.whisper import (
    ConfigurationError,
    FragileTimingWarning,
    Sampling,
    SamplingState,
    Variant,
    WhisperConfig,
    WhisperNode,
    build_segments,
    check_slot_length,
    compute_t_slot,
    compute_wait,
    initiate_flood,
    on_packlet_received,
    reverse_initialization,
    sampling_window,
    seed_reversed_sampling,
    update_sampling,
)

from oracles import replay_sampling

IDEAL = WhisperConfig(sampling=Sampling.LAZY, clock=IDEAL_CLOCK, sender_sync_ns=0)
TIMING = RadioTimingParams()


def run_line(cfg, n=7, timing=TIMING, seed=0):
    topo = line_topology(n)
    engines = {k: WhisperNode(k, cfg, timing) for k in topo.nodes}
    return Slot(topo.links, engines, timing, senders={1}, seed=seed).run()


def test_compute_wait():
    assert compute_wait(224 * US, 192 * US, 3 * US) == 29 * US


def test_compute_wait_rejects_short_packlets():
    with pytest.raises(ConfigurationError):
        compute_wait(195 * US, 192 * US, 3 * US)


def test_compute_wait_warns_when_fragile():
    with pytest.warns(FragileTimingWarning):
        assert compute_wait(199 * US, 192 * US, 3 * US) == 4 * US


def test_compute_t_slot():
    assert compute_t_slot(6, 3, 224 * US) == 3_360 * US
    with pytest.raises(ValueError):
        compute_t_slot(0, 3, 224 * US)


def test_slot_length_check_warns():
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        assert check_slot_length(WhisperConfig(), 6)
    with pytest.warns(UserWarning):
        assert not check_slot_length(replace(WhisperConfig(), t_slot=3_000 * US), 6)


def test_update_sampling_examples():
    s = update_sampling(SamplingState(), 4)
    assert (s.c_min, s.c_max, s.c_avg) == (4, 4, 4)
    s3 = SamplingState(c_min=4, c_max=4, c_sum=12, n_obs=3)
    assert update_sampling(s3, 4).c_max == 4
    assert update_sampling(s3, 7, delta_c=2).c_max == 7
    assert update_sampling(s3, 5, delta_c=2).c_max == 5  # ceil(17/4)


@settings(max_examples=300, deadline=None)
@given(counters=st.lists(st.integers(0, 60), min_size=1, max_size=40), delta=st.integers(1, 5))
def test_update_sampling_matches_replay(counters, delta):
    s = SamplingState()
    for c in counters:
        s = update_sampling(s, c, delta)
    c_min, c_max, avg = replay_sampling(counters, delta)
    assert (s.c_min, s.c_max, s.c_avg) == (c_min, c_max, avg)
    assert s.c_min <= s.c_max


def test_sampling_window_examples():
    t_star = 10_000 * US
    da = WhisperConfig()
    s = SamplingState(c_min=4, c_max=4, c_sum=4, n_obs=1)
    assert sampling_window(s, da, t_star) == (t_star - 130 * US + 672 * US, 1_026 * US)
    lazy = replace(da, sampling=Sampling.LAZY)
    assert sampling_window(s, lazy, t_star) == (t_star - 130 * US, 130 * US + 5_000 * US)
    start, dur = sampling_window(SamplingState(), da, t_star)
    assert start == t_star - 130 * US and start + dur == t_star + da.t_slot


@settings(max_examples=200, deadline=None)
@given(a=st.integers(0, 12), b=st.integers(0, 12), m=st.integers(0, 12))
def test_sampling_window_monotone(a, b, m):
    cfg = WhisperConfig()
    lo, hi = sorted((a, b))
    s_lo = SamplingState(c_min=lo, c_max=max(lo, m), c_sum=lo, n_obs=1)
    s_hi = SamplingState(c_min=hi, c_max=max(lo, m), c_sum=hi, n_obs=1)
    assert sampling_window(s_lo, cfg, 0)[0] <= sampling_window(s_hi, cfg, 0)[0]
    w1 = SamplingState(c_min=0, c_max=lo, c_sum=0, n_obs=1)
    w2 = SamplingState(c_min=0, c_max=hi, c_sum=0, n_obs=1)
    assert sampling_window(w1, cfg, 0)[1] <= sampling_window(w2, cfg, 0)[1]


def test_relay_rule_skips_one_packlet():
    act = on_packlet_received(WhisperConfig(), 4, 0)
    assert (act.start_counter, act.n_packlets, act.tx_start) == (6, 3, 6 * 224 * US)


def test_sender_packet_is_gap_free():
    tx = initiate_flood(IDEAL, 1, 0)
    assert tx.end - tx.start == 672 * US
    for a, b in zip(tx.segments, tx.segments[1:]):
        assert a.end == b.start
    assert [decode_frame(s.content, IDEAL.packlet).counter for s in tx.segments] == [0, 1, 2]


def test_standard_counter_progression():
    trace = run_line(IDEAL)
    assert [trace.first_counter[h] for h in range(2, 8)] == [0, 2, 4, 6, 8, 10]


def test_compliant_counter_progression():
    cfg = WhisperConfig.compliant(clock=IDEAL_CLOCK, sender_sync_ns=0)
    trace = run_line(cfg)
    assert [trace.first_counter[h] for h in range(2, 8)] == [1, 4, 7, 10, 13, 16]


def test_forwarder_span_is_n_plus_two_packlets():
    trace = run_line(IDEAL)
    for node in range(2, 7):
        tl = trace.timelines[node]
        rx_start = tl.of(RadioState.RECEIVING)[0][0]
        tx_end = tl.of(RadioState.TRANSMITTING)[-1][1]
        assert tx_end - rx_start == 5 * 224 * US
        tl.validate(TIMING)


def test_concurrent_packlets_identical():
    trace = run_line(IDEAL, n=5)
    by_time = {}
    for tx in trace.transmissions:
        for seg in tx.segments:
            by_time.setdefault(seg.start, set()).add(seg.content)
    assert all(len(v) == 1 for v in by_time.values())


def test_simultaneous_stop_ends_together():
    cfg = replace(IDEAL, n_tx=14, simultaneous_stop=True)
    trace = run_line(cfg, n=4)
    ends = {tx.end for tx in trace.transmissions}
    assert ends == {trace.t_star + cfg.stop_counter * cfg.t_packlet}


def test_compliant_footers_align():
    cfg = WhisperConfig.compliant(clock=IDEAL_CLOCK, sender_sync_ns=0)
    trace = run_line(cfg, n=4)
    footers = {tx.segments[-1] for tx in trace.transmissions}
    assert len({(f.start, f.end) for f in footers}) == 1
    assert all(not f.is_frame for f in footers)


def test_build_segments_buffered_has_footer():
    cfg = WhisperConfig.compliant()
    segs = build_segments(cfg, 3, 4, 0)
    assert len(segs) == 5 and segs[-1].end - segs[-1].start == 2 * cfg.packlet.byte_ns
    assert cfg.mode is TxMode.BUFFERED and cfg.variant is Variant.COMPLIANT


def test_direction_aware_idle_slot_uses_window_only():
    topo = line_topology(4)
    cfg = replace(IDEAL, sampling=Sampling.DIRECTION_AWARE)
    engines = {k: WhisperNode(k, cfg, TIMING) for k in topo.nodes}
    engines[3].sampling_state = SamplingState(c_min=2, c_max=2, c_sum=2, n_obs=1)
    trace = Slot(topo.links, engines, TIMING, senders=()).run()
    _, dur = sampling_window(engines[3].sampling_state, cfg, 0)
    assert trace.radio_on(3) == dur
    assert trace.radio_on(2) == cfg.timeout  # not yet initialised


def test_learning_converges_on_line():
    topo = line_topology(5)
    cfg = WhisperConfig(clock=IDEAL_CLOCK, sender_sync_ns=0)
    engines = {k: WhisperNode(k, cfg, TIMING) for k in topo.nodes}
    for i in range(3):
        trace = Slot(topo.links, engines, TIMING, senders={1}, slot_index=i).run()
        assert all(trace.received[n] for n in range(2, 6))
    assert [engines[n].sampling_state.c_min for n in range(2, 6)] == [0, 2, 4, 6]


def test_reverse_initialization_on_line():
    topo = line_topology(5)
    hops = reverse_initialization(topo, 1, IDEAL, TIMING)
    assert hops == {1: 0, 2: 1, 3: 2, 4: 3, 5: 4}
    engines = {k: WhisperNode(k, WhisperConfig(), TIMING) for k in topo.nodes}
    seed_reversed_sampling(engines, {**hops, 5: None}, 4)
    assert engines[5].fallback_lazy
    assert engines[4].sampling_state.c_min == 0  # next to the far edge
    assert engines[2].sampling_state.c_min == 4


def test_counter_overflow_stops_relaying():
    cfg = replace(IDEAL, n_tx=3)
    assert cfg.packlets_from(254) == 2
    assert cfg.packlets_from(256) == 0


def test_config_validation():
    with pytest.raises(ValueError):
        WhisperConfig(n_tx=0)
    with pytest.raises(ValueError):
        WhisperConfig(t_slot=0)


def test_preamble_changes_packlet_time():
    cfg = WhisperConfig(packlet=PackletConfig(preamble_len=4))
    assert cfg.t_packlet == 288 * US
