"""``whisper-sim`` command line: run scenario files, acceptance suites and
topology summaries."""

from __future__ import annotations

import argparse
import csv
import io
import os
import sys
from pathlib import Path

from . import acceptance
from .experiment import MetricsReport, run_experiment, scenario_topology
from .scenarios import ScenarioError, load_scenario
from .topology import TopologyError, hop_distances, load_topology

EXIT_FAILED = 1
EXIT_SCENARIO = 2
EXIT_TOPOLOGY = 3

SUMMARY_FIELDS = [
    "scenario", "protocol", "tx_power", "reliability_pct", "reliability_std_pct",
    "radio_on_signal_ms", "radio_on_signal_std_ms", "radio_on_idle_ms", "radio_on_idle_std_ms",
    "dropped_pct", "n_floods", "seeds",
]
PER_NODE_FIELDS = ["scenario", "protocol", "tx_power", "node", "reliability_pct", "radio_on_signal_ms", "radio_on_idle_ms"]


def _f3(x: float | None) -> str:
    return "" if x is None or x != x else f"{x:.3f}"


def summary_row(report: MetricsReport) -> dict[str, str]:
    return {
        "scenario": report.scenario,
        "protocol": report.protocol,
        "tx_power": report.tx_power,
        "reliability_pct": _f3(100 * report.network_reliability),
        "reliability_std_pct": _f3(100 * report.network_reliability_std),
        "radio_on_signal_ms": _f3(report.radio_on_signal_ms),
        "radio_on_signal_std_ms": _f3(report.radio_on_signal_ms_std),
        "radio_on_idle_ms": _f3(report.radio_on_idle_ms),
        "radio_on_idle_std_ms": _f3(report.radio_on_idle_ms_std),
        "dropped_pct": _f3(100 * report.dropped_fraction),
        "n_floods": str(report.n_floods),
        "seeds": " ".join(map(str, report.seeds)),
    }


def per_node_rows(report: MetricsReport) -> list[dict[str, str]]:
    rel = report.per_node_reliability
    sig = report.per_node_radio_on_signal_ms
    idle = report.per_node_radio_on_idle_ms
    rows = []
    for node in sorted(set(rel) | set(sig) | set(idle)):
        rows.append({
            "scenario": report.scenario,
            "protocol": report.protocol,
            "tx_power": report.tx_power,
            "node": str(node),
            "reliability_pct": _f3(100 * rel[node]) if node in rel else "",
            "radio_on_signal_ms": _f3(sig.get(node)),
            "radio_on_idle_ms": _f3(idle.get(node)),
        })
    return rows


def _sort_key(row: dict[str, str]):
    return (row["scenario"], row["protocol"], row["tx_power"], int(row.get("node") or 0))


def merge_csv(path: Path, fields: list[str], new_rows: list[dict[str, str]], key_fields=("scenario", "protocol", "tx_power")) -> None:
    """Write ``new_rows`` into ``path``, replacing rows of the same run and keeping a stable order."""
    rows = []
    if path.exists():
        with path.open(newline="", encoding="utf-8") as fh:
            rows = list(csv.DictReader(fh))
    replaced = {tuple(r[k] for k in key_fields) for r in new_rows}
    rows = [r for r in rows if tuple(r[k] for k in key_fields) not in replaced] + new_rows
    rows.sort(key=_sort_key)
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=fields, lineterminator="\n")
    writer.writeheader()
    writer.writerows(rows)
    path.write_text(buf.getvalue(), encoding="utf-8")


def write_columns(path: Path, header: list[str], rows: list[list]) -> None:
    lines = ["\t".join(header)] + ["\t".join(str(c) for c in row) for row in rows]
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


def write_outputs(report: MetricsReport, out: Path) -> None:
    out.mkdir(parents=True, exist_ok=True)
    merge_csv(out / "summary.csv", SUMMARY_FIELDS, [summary_row(report)])
    merge_csv(out / "per_node.csv", PER_NODE_FIELDS, per_node_rows(report))
    stem = f"{report.scenario}_{report.protocol}_{report.tx_power}"
    nodes = per_node_rows(report)
    write_columns(out / f"{stem}_reliability.tsv", ["node", "reliability_pct"],
                  [[r["node"], r["reliability_pct"]] for r in nodes if r["reliability_pct"]])
    write_columns(out / f"{stem}_radio_on.tsv", ["node", "signal_ms", "idle_ms"],
                  [[r["node"], r["radio_on_signal_ms"], r["radio_on_idle_ms"]] for r in nodes])
    hist_rows = []
    for hop, hist in sorted(report.first_counter_hist.items()):
        total = sum(hist.values())
        for c in sorted(hist):
            hist_rows.append([hop, c, hist[c], f"{hist[c] / total:.3f}"])
    write_columns(out / f"{stem}_first_counter.tsv", ["hop", "counter", "count", "fraction"], hist_rows)


def _resolve_seed(cli_seed: int | None) -> int | None:
    if cli_seed is not None:
        return cli_seed
    env = os.environ.get("WHISPER_SIM_SEED")
    if env:
        try:
            return int(env)
        except ValueError:
            raise ScenarioError(f"WHISPER_SIM_SEED must be an integer, got {env!r}") from None
    return None


def cmd_run(args) -> int:
    try:
        spec = load_scenario(args.scenario)
        seed = _resolve_seed(args.seed)
        spec = spec.with_overrides(seed=seed, n_floods=args.floods, n_repetitions=args.reps)
    except OSError as exc:
        print(f"error: cannot read scenario {args.scenario}: {exc.strerror}", file=sys.stderr)
        return EXIT_SCENARIO
    except (ScenarioError, TypeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_SCENARIO
    try:
        topology = scenario_topology(spec)
    except TopologyError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_TOPOLOGY
    report = run_experiment(spec, topology=topology)
    out = Path(args.out)
    write_outputs(report, out)
    row = summary_row(report)
    print(f"{row['scenario']} {row['protocol']} {row['tx_power']}: reliability {row['reliability_pct']}%, "
          f"radio-on {row['radio_on_signal_ms']} ms (signal) / {row['radio_on_idle_ms']} ms (idle) -> {out}")
    return 0


def cmd_check(args) -> int:
    try:
        results = acceptance.run_suite(args.suite, args.floods, args.reps, echo=print)
    except KeyError as exc:
        print(f"error: {exc.args[0]}", file=sys.stderr)
        return EXIT_SCENARIO
    failed = [r.number for r in results if not r.passed]
    print(f"{len(results) - len(failed)}/{len(results)} criteria passed" + (f"; failed: {failed}" if failed else ""))
    return EXIT_FAILED if failed else 0


def cmd_topo_info(args) -> int:
    try:
        topo = load_topology(args.file)
    except TopologyError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_TOPOLOGY
    source = args.source if args.source is not None else topo.nodes[0]
    dist = hop_distances(topo.links, source, topo.threshold)
    edges = list(topo.links.edges())
    strong = sum(1 for *_, prr, _ in edges if prr > topo.threshold)
    unreachable = sorted(set(topo.nodes) - set(dist))
    print(f"nodes: {len(topo.nodes)}")
    print(f"directed links: {len(edges)} ({strong} with prr > {topo.threshold:g})")
    print(f"diameter from node {source}: {max(dist.values())} hops")
    if unreachable:
        print(f"unreachable from {source}: {' '.join(map(str, unreachable))}")
    for hop in range(max(dist.values()) + 1):
        print(f"  hop {hop}: {' '.join(str(n) for n in sorted(n for n, h in dist.items() if h == hop))}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="whisper-sim", description="Whisper and Glossy flooding simulator")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run a scenario file and write CSV / TSV results")
    run.add_argument("scenario", help="key = value scenario file")
    run.add_argument("--out", default="results", help="output directory (default: results)")
    run.add_argument("--seed", type=int, help="base seed (default: $WHISPER_SIM_SEED, then the file's seed)")
    run.add_argument("--floods", type=int, help="override n_floods")
    run.add_argument("--reps", type=int, help="override n_repetitions")
    run.set_defaults(func=cmd_run)

    check = sub.add_parser("check", help="run an acceptance suite")
    check.add_argument("suite", help=", ".join(acceptance.SUITES))
    check.add_argument("--floods", type=int, default=acceptance.DEFAULT_FLOODS)
    check.add_argument("--reps", type=int, default=acceptance.DEFAULT_REPS)
    check.set_defaults(func=cmd_check)

    topo = sub.add_parser("topo", help="topology tools")
    topo_sub = topo.add_subparsers(dest="topo_command", required=True)
    info = topo_sub.add_parser("info", help="summarise a topology file")
    info.add_argument("file")
    info.add_argument("--source", type=int, help="node to measure hop distances from (default: smallest id)")
    info.set_defaults(func=cmd_topo_info)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    raise SystemExit(main())
