"""Multi-slot experiments: build engines for a scenario, run floods and idle
slots, and reduce the slot traces into a :class:`MetricsReport`."""

from __future__ import annotations

import statistics
from collections import Counter, defaultdict, deque
from dataclasses import dataclass, field

from .codec import PackletConfig
from .glossy import GlossyConfig, GlossyNode
from .radio import MS, US, RadioTimingParams
from .scenarios import ScenarioSpec
from .sim import Slot, SlotTrace
from .topology import DEFAULT_THRESHOLD, Topology, bundled_topology, load_topology
from .whisper import (
    Sampling,
    WhisperConfig,
    WhisperNode,
    reverse_initialization,
    seed_reversed_sampling,
)


def protocol_config(spec: ScenarioSpec) -> WhisperConfig | GlossyConfig:
    t_slot = spec.t_slot_us * US
    t_guard = spec.t_guard_us * US
    if spec.protocol.startswith("glossy"):
        pre = spec.preamble or (2 if spec.protocol == "glossy-2b" else 4)
        return GlossyConfig(n_tx=spec.n_tx or 3, packlet=PackletConfig(preamble_len=pre), t_guard=t_guard, timeout=t_slot)
    if spec.protocol == "whisper-compliant":
        return WhisperConfig.compliant(
            n_tx=spec.n_tx or 14, t_slot=t_slot, t_guard=t_guard, packlet=PackletConfig(preamble_len=spec.preamble or 4)
        )
    sampling = Sampling.LAZY if spec.protocol == "whisper-lazy" else Sampling.DIRECTION_AWARE
    return WhisperConfig(
        n_tx=spec.n_tx or 3,
        t_slot=t_slot,
        t_guard=t_guard,
        timeout=t_slot,
        sampling=sampling,
        packlet=PackletConfig(preamble_len=spec.preamble or 2),
    )


def build_engines(config, nodes, timing: RadioTimingParams = RadioTimingParams()) -> dict:
    if isinstance(config, GlossyConfig):
        return {n: GlossyNode(n, config, timing) for n in nodes}
    return {n: WhisperNode(n, config, timing) for n in nodes}


def scenario_topology(spec: ScenarioSpec) -> Topology:
    return load_topology(spec.topology) if spec.topology else bundled_topology(f"flocklab_{spec.tx_power}")


def slot_plan(n_floods: int, n_idle: int) -> list[bool]:
    """True for signaling slots; idle slots are spread evenly, never first."""
    total = n_floods + n_idle
    plan = []
    for i in range(total):
        idle = (i + 1) * n_idle // total > i * n_idle // total
        plan.append(not idle)
    if plan and not plan[0]:
        j = plan.index(True)
        plan[0], plan[j] = True, False
    return plan


def multi_source_hops(links, sources, threshold: float = DEFAULT_THRESHOLD) -> dict[int, int]:
    dist = {s: 0 for s in sources}
    todo = deque(sorted(sources))
    while todo:
        u = todo.popleft()
        for v, (prr, _) in sorted(links.out_links(u).items()):
            if prr > threshold and v not in dist:
                dist[v] = dist[u] + 1
                todo.append(v)
    return dist


@dataclass
class RepetitionResult:
    seed: int
    reliability: dict[int, float]
    radio_on_signal: dict[int, float]  # ns, mean per slot
    radio_on_idle: dict[int, float]
    delivered: int
    dropped: int
    first_counters: dict[int, Counter]

    @property
    def network_reliability(self) -> float:
        return statistics.fmean(self.reliability.values()) if self.reliability else 0.0

    @property
    def dropped_fraction(self) -> float:
        total = self.delivered + self.dropped
        return self.dropped / total if total else 0.0


def _mean_or_nan(values) -> float:
    values = list(values)
    return statistics.fmean(values) if values else float("nan")


def _std(values) -> float:
    values = [v for v in values if v == v]
    return statistics.stdev(values) if len(values) > 1 else 0.0


@dataclass
class MetricsReport:
    protocol: str
    scenario: str
    tx_power: str
    n_floods: int
    seeds: list[int]
    repetitions: list[RepetitionResult] = field(repr=False)

    @property
    def n_repetitions(self) -> int:
        return len(self.repetitions)

    @property
    def per_node_reliability(self) -> dict[int, float]:
        nodes = sorted(self.repetitions[0].reliability)
        return {n: statistics.fmean(r.reliability[n] for r in self.repetitions) for n in nodes}

    @property
    def network_reliability(self) -> float:
        return statistics.fmean(r.network_reliability for r in self.repetitions)

    @property
    def network_reliability_std(self) -> float:
        return _std(r.network_reliability for r in self.repetitions)

    def _per_node(self, attr: str) -> dict[int, float]:
        nodes = sorted(getattr(self.repetitions[0], attr))
        return {n: _mean_or_nan(getattr(r, attr)[n] / MS for r in self.repetitions) for n in nodes}

    @property
    def per_node_radio_on_signal_ms(self) -> dict[int, float]:
        return self._per_node("radio_on_signal")

    @property
    def per_node_radio_on_idle_ms(self) -> dict[int, float]:
        return self._per_node("radio_on_idle")

    def _network(self, attr: str) -> list[float]:
        return [_mean_or_nan(getattr(r, attr).values()) / MS for r in self.repetitions]

    @property
    def radio_on_signal_ms(self) -> float:
        return _mean_or_nan(self._network("radio_on_signal"))

    @property
    def radio_on_signal_ms_std(self) -> float:
        return _std(self._network("radio_on_signal"))

    @property
    def radio_on_idle_ms(self) -> float:
        return _mean_or_nan(self._network("radio_on_idle"))

    @property
    def radio_on_idle_ms_std(self) -> float:
        return _std(self._network("radio_on_idle"))

    @property
    def dropped_fraction(self) -> float:
        return statistics.fmean(r.dropped_fraction for r in self.repetitions)

    @property
    def dropped_fraction_std(self) -> float:
        return _std(r.dropped_fraction for r in self.repetitions)

    @property
    def first_counter_hist(self) -> dict[int, Counter]:
        merged: dict[int, Counter] = defaultdict(Counter)
        for r in self.repetitions:
            for hop, hist in r.first_counters.items():
                merged[hop].update(hist)
        return dict(sorted(merged.items()))

    def mean_first_counter(self) -> dict[int, float]:
        return {
            hop: sum(c * k for c, k in hist.items()) / sum(hist.values())
            for hop, hist in self.first_counter_hist.items()
            if hist
        }


def run_repetition(
    spec: ScenarioSpec,
    topology: Topology,
    seed: int,
    timing: RadioTimingParams = RadioTimingParams(),
    config: WhisperConfig | GlossyConfig | None = None,
) -> RepetitionResult:
    config = config or protocol_config(spec)
    nodes = topology.nodes
    engines = build_engines(config, nodes, timing)
    senders = spec.resolved_senders
    sink = spec.resolved_sink
    rotate = spec.resolved_rotate_every

    if sink is not None and isinstance(config, WhisperConfig) and config.sampling is Sampling.DIRECTION_AWARE:
        hops = reverse_initialization(topology, sink, config, timing, seed=seed)
        d_net = max(h for h in hops.values() if h is not None)
        seed_reversed_sampling(engines, hops, d_net)

    got = Counter()
    as_receiver = Counter()
    on_sig = Counter()
    n_sig = Counter()
    on_idle = Counter()
    n_idle = Counter()
    delivered = dropped = 0
    first_counters: dict[int, Counter] = defaultdict(Counter)
    hop_cache: dict[tuple, dict[int, int]] = {}

    j = 0
    for index, signaling in enumerate(slot_plan(spec.n_floods, spec.resolved_n_idle)):
        if not signaling:
            trace = Slot(topology.links, engines, timing, (), seed, index).run()
            for n in nodes:
                on_idle[n] += trace.radio_on(n)
                n_idle[n] += 1
            continue
        active = (senders[(j // rotate) % len(senders)],) if rotate else senders
        j += 1
        trace: SlotTrace = Slot(topology.links, engines, timing, active, seed, index).run()
        receivers = (sink,) if sink is not None else [n for n in nodes if n not in active]
        for r in receivers:
            as_receiver[r] += 1
            got[r] += trace.received[r]
        hops = hop_cache.get(active)
        if hops is None:
            hops = hop_cache[active] = multi_source_hops(topology.links, active)
        for n in nodes:
            if n in active:
                continue
            on_sig[n] += trace.radio_on(n)
            n_sig[n] += 1
            c = trace.first_counter[n]
            if c is not None and n in hops:
                first_counters[hops[n]][c] += 1
        delivered += sum(trace.frames_ok.values())
        dropped += sum(trace.frames_dropped.values())

    return RepetitionResult(
        seed=seed,
        reliability={r: got[r] / as_receiver[r] for r in sorted(as_receiver)},
        radio_on_signal={n: on_sig[n] / n_sig[n] for n in sorted(n_sig)},
        radio_on_idle={n: on_idle[n] / n_idle[n] for n in sorted(n_idle)},
        delivered=delivered,
        dropped=dropped,
        first_counters=dict(first_counters),
    )


def run_experiment(
    scenario: ScenarioSpec,
    n_floods: int | None = None,
    n_repetitions: int | None = None,
    seeds: list[int] | None = None,
    topology: Topology | None = None,
    timing: RadioTimingParams = RadioTimingParams(),
    config: WhisperConfig | GlossyConfig | None = None,
) -> MetricsReport:
    """Run every repetition of ``scenario``; ``config`` replaces the protocol preset."""
    spec = scenario.with_overrides(n_floods=n_floods, n_repetitions=n_repetitions)
    if seeds is None:
        seeds = [spec.seed + k for k in range(spec.n_repetitions)]
    topology = topology or scenario_topology(spec)
    reps = [run_repetition(spec, topology, s, timing, config) for s in seeds]
    return MetricsReport(spec.protocol, spec.name, spec.tx_power, spec.n_floods, list(seeds), reps)
