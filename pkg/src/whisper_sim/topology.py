"""Link graphs: text format, hop distances and the bundled testbed-like graphs."""

from __future__ import annotations

import math
import random
import warnings
from collections import deque
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

from .radio import LinkModel

DEFAULT_THRESHOLD = 0.5


class TopologyError(ValueError):
    pass


@dataclass
class Topology:
    links: LinkModel
    source: int | None = None
    threshold: float = DEFAULT_THRESHOLD
    name: str = ""

    @property
    def nodes(self) -> list[int]:
        return self.links.nodes

    @property
    def d_net(self) -> int:
        source = self.source if self.source is not None else self.nodes[0]
        return compute_diameter(self, source, self.threshold)


def hop_distances(links: LinkModel, source: int, threshold: float = DEFAULT_THRESHOLD) -> dict[int, int]:
    """BFS hop count from ``source`` over links with prr above ``threshold``."""
    if source not in set(links.nodes):
        raise KeyError(f"unknown node {source}")
    dist = {source: 0}
    todo = deque([source])
    while todo:
        u = todo.popleft()
        for v, (prr, _) in sorted(links.out_links(u).items()):
            if prr > threshold and v not in dist:
                dist[v] = dist[u] + 1
                todo.append(v)
    return dist


def compute_diameter(topology, source: int, threshold: float | None = None) -> int:
    """Eccentricity of ``source``; unreachable nodes are warned about and skipped."""
    links = getattr(topology, "links", topology)
    if threshold is None:
        threshold = getattr(topology, "threshold", DEFAULT_THRESHOLD)
    dist = hop_distances(links, source, threshold)
    unreachable = sorted(set(links.nodes) - set(dist))
    if unreachable:
        warnings.warn(f"nodes unreachable from {source}: {unreachable}", stacklevel=2)
    return max(dist.values())


# --- text format ------------------------------------------------------------

def parse_topology(text: str, name: str = "") -> Topology:
    """Parse ``nodes N`` followed by ``src dst prr [delay_ns]`` lines.

    ``node <id>`` lines declare isolated or non-contiguous ids. If fewer ids
    than N turn up, the smallest unused positive ids are added as isolated nodes.
    """
    links = LinkModel()
    declared_n = None
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        try:
            if parts[0] == "nodes":
                if declared_n is not None or len(parts) != 2:
                    raise TopologyError("duplicate or malformed 'nodes' header")
                declared_n = int(parts[1])
            elif parts[0] == "node":
                links.add_node(int(parts[1]))
            else:
                if declared_n is None:
                    raise TopologyError("edge before 'nodes' header")
                if len(parts) not in (3, 4):
                    raise TopologyError(f"expected 'src dst prr [delay]', got {line!r}")
                delay = int(parts[3]) if len(parts) == 4 else 0
                links.add_link(int(parts[0]), int(parts[1]), float(parts[2]), delay)
        except (ValueError, IndexError) as exc:
            raise TopologyError(f"line {lineno}: {exc}") from exc
    if declared_n is None:
        raise TopologyError("missing 'nodes N' header")
    have = set(links.nodes)
    if len(have) > declared_n:
        raise TopologyError(f"header says {declared_n} nodes but {len(have)} ids are used")
    candidate = 1
    while len(have) < declared_n:
        if candidate not in have:
            links.add_node(candidate)
            have.add(candidate)
        candidate += 1
    return Topology(links, name=name)


def dump_topology(topology: Topology, comment: str = "") -> str:
    links = topology.links
    out = [f"# {line}" for line in comment.splitlines()]
    out.append(f"nodes {len(links.nodes)}")
    connected = set()
    edges = []
    for src, dst, prr, delay in links.edges():
        connected.update((src, dst))
        edges.append(f"{src} {dst} {prr:g}" + (f" {delay}" if delay else ""))
    out += [f"node {n}" for n in links.nodes if n not in connected]
    out += edges
    return "\n".join(out) + "\n"


def load_topology(path) -> Topology:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise TopologyError(f"cannot read topology {path}: {exc}") from exc
    return parse_topology(text, name=Path(path).stem)


def bundled_topology(name: str) -> Topology:
    """Load one of the packaged graphs, e.g. ``flocklab_0dbm``."""
    ref = resources.files("whisper_sim") / "data" / f"{name}.topo"
    if not ref.is_file():
        raise TopologyError(f"no bundled topology named {name!r}")
    return parse_topology(ref.read_text(encoding="utf-8"), name=name)


# --- synthetic graphs -------------------------------------------------------

def line_topology(n: int, prr: float = 1.0, delay: int = 0, first_id: int = 1) -> Topology:
    links = LinkModel()
    ids = list(range(first_id, first_id + n))
    for n_id in ids:
        links.add_node(n_id)
    for a, b in zip(ids, ids[1:]):
        links.add_link(a, b, prr, delay)
        links.add_link(b, a, prr, delay)
    return Topology(links, source=first_id, name=f"line{n}")


def complete_topology(n: int, prr: float = 1.0, first_id: int = 1) -> Topology:
    links = LinkModel()
    ids = range(first_id, first_id + n)
    for a in ids:
        links.add_node(a)
        for b in ids:
            if a != b:
                links.add_link(a, b, prr)
    return Topology(links, source=first_id, name=f"complete{n}")


# Hand-placed corridor layout (metres). Ids follow the testbed's numbering gaps.
FLOCKLAB_LAYOUT: dict[int, tuple[float, float]] = {
    1: (0, 5), 2: (4, 10), 4: (6, 2), 8: (9, 7),
    3: (15, 12), 6: (18, 2), 10: (25, 9), 11: (30, 3),
    7: (37, 10), 13: (42, 2), 33: (46, 13), 14: (50, 7),
    15: (55, 12), 17: (58, 2), 31: (63, 8), 20: (67, 12),
    19: (72, 5), 22: (78, 1), 25: (83, 11), 26: (89, 4),
    28: (95, 9), 32: (101, 1), 16: (106, 6),
    18: (111, 12), 24: (113, 0), 27: (116, 6), 23: (119, 10),
}

# Strong, grey-zone and long-range tail radii (metres). Labels follow the
# diameters they produce.
FLOCKLAB_POWERS = {"0dbm": (24.0, 31.0, 80.0), "m10dbm": (40.0, 50.0, 130.0)}
STRONG_PRR = (0.85, 0.99)
GREY_PRR = (0.05, 0.45)
TAIL_PRR = 0.01  # upper bound; rare long-range receptions


def flocklab_like(power: str = "0dbm", seed: int = 2021) -> Topology:
    """Corridor graph with strong links in [0.85, 0.99], a grey zone of
    unreliable links just past the strong radius and a sparse long-range tail."""
    if power not in FLOCKLAB_POWERS:
        raise TopologyError(f"unknown power label {power!r}; expected one of {sorted(FLOCKLAB_POWERS)}")
    r_strong, r_grey, r_tail = FLOCKLAB_POWERS[power]
    rng = random.Random(seed)
    links = LinkModel()
    ids = sorted(FLOCKLAB_LAYOUT)
    for n in ids:
        links.add_node(n)
    for a in ids:
        for b in ids:
            if a == b:
                continue
            d = math.dist(FLOCKLAB_LAYOUT[a], FLOCKLAB_LAYOUT[b])
            if d <= r_strong:
                prr = rng.uniform(*STRONG_PRR)
            elif d <= r_grey:
                prr = rng.uniform(*GREY_PRR)
            elif d <= r_tail:
                prr = TAIL_PRR * rng.uniform(0.2, 1.0)
            else:
                continue
            links.add_link(a, b, round(prr, 4))
    return Topology(links, source=1, name=f"flocklab_{power}")
