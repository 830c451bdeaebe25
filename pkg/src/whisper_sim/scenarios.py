"""Scenario descriptions: flat ``key = value`` files and the named presets."""

from __future__ import annotations

from dataclasses import dataclass, fields, replace
from pathlib import Path

PROTOCOLS = ("whisper", "whisper-lazy", "whisper-compliant", "glossy", "glossy-2b")
POWERS = ("0dbm", "m10dbm")


class ScenarioError(ValueError):
    pass


@dataclass(frozen=True)
class NamedScenario:
    senders: tuple[int, ...]
    sink: int | None = None  # collection: only this node's reliability counts
    rotate_every: int = 0  # >0: senders take turns, one at a time


# Node ids refer to the bundled flocklab-like graphs.
NAMED: dict[str, NamedScenario] = {
    "diss.fixed": NamedScenario((1,)),
    "diss.diff": NamedScenario((10, 22, 11, 16, 23, 19, 20, 31, 26, 7), rotate_every=1000),
    "diss.close": NamedScenario((4, 2, 8, 1)),
    "diss.far": NamedScenario((16, 19, 7, 1)),
    "coll.close": NamedScenario((18, 27, 24, 23), sink=1),
    "coll.far": NamedScenario((16, 19, 7, 4), sink=1),
}


@dataclass(frozen=True)
class ScenarioSpec:
    name: str = "diss.fixed"
    protocol: str = "whisper"
    tx_power: str = "0dbm"
    topology: str = ""  # file path; empty selects the bundled graph for tx_power
    senders: tuple[int, ...] = ()  # empty: the named scenario's senders
    sink: int | None = None
    rotate_every: int | None = None
    n_floods: int = 10_000
    n_repetitions: int = 3
    n_idle: int | None = None  # None: half as many idle slots as floods
    n_tx: int | None = None
    t_slot_us: int = 5000
    t_guard_us: int = 130
    preamble: int | None = None
    seed: int = 1

    def __post_init__(self) -> None:
        if self.name != "custom" and self.name not in NAMED:
            raise ScenarioError(f"unknown scenario {self.name!r}; known: {', '.join(sorted(NAMED))}, custom")
        if self.protocol not in PROTOCOLS:
            raise ScenarioError(f"unknown protocol {self.protocol!r}; known: {', '.join(PROTOCOLS)}")
        if self.tx_power not in POWERS:
            raise ScenarioError(f"unknown tx_power {self.tx_power!r}; known: {', '.join(POWERS)}")
        if self.name == "custom" and not self.senders:
            raise ScenarioError("custom scenarios need an explicit sender list")
        if self.n_floods < 1 or self.n_repetitions < 1:
            raise ScenarioError("n_floods and n_repetitions must be >= 1")

    @property
    def resolved_senders(self) -> tuple[int, ...]:
        return self.senders or NAMED[self.name].senders

    @property
    def resolved_sink(self) -> int | None:
        if self.sink is not None or self.name == "custom":
            return self.sink
        return NAMED[self.name].sink

    @property
    def resolved_rotate_every(self) -> int:
        if self.rotate_every is not None:
            return self.rotate_every
        return NAMED[self.name].rotate_every if self.name in NAMED else 0

    @property
    def resolved_n_idle(self) -> int:
        return self.n_floods // 2 if self.n_idle is None else self.n_idle

    def with_overrides(self, **kw) -> "ScenarioSpec":
        return replace(self, **{k: v for k, v in kw.items() if v is not None})


def _parse_value(key: str, raw: str, kind: str):
    if key == "senders":
        return tuple(int(x) for x in raw.replace(",", " ").split())
    optional = kind.endswith("| None")
    if optional and raw.lower() in ("", "none"):
        return None
    if kind.startswith("int"):
        return int(raw)
    return raw


def parse_scenario(text: str) -> ScenarioSpec:
    kinds = {f.name: f.type for f in fields(ScenarioSpec)}
    values = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ScenarioError(f"line {lineno}: expected key = value")
        key, value = (part.strip() for part in line.split("=", 1))
        if key not in kinds:
            raise ScenarioError(f"line {lineno}: unknown key {key!r}")
        try:
            values[key] = _parse_value(key, value, kinds[key])
        except ValueError as exc:
            raise ScenarioError(f"line {lineno}: bad value for {key}: {value!r}") from exc
    return ScenarioSpec(**values)


def serialize_scenario(spec: ScenarioSpec) -> str:
    lines = []
    for f in fields(ScenarioSpec):
        value = getattr(spec, f.name)
        if f.name == "senders":
            value = ",".join(map(str, value))
        elif value is None:
            value = "none"
        lines.append(f"{f.name} = {value}")
    return "\n".join(lines) + "\n"


def load_scenario(path) -> ScenarioSpec:
    return parse_scenario(Path(path).read_text(encoding="utf-8"))
