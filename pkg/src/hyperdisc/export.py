"""Serialization of discovery results: graph.json, Graphviz DOT and per-node trace CSVs."""

from __future__ import annotations

import csv
import json
import math
from pathlib import Path

from .discovery import AncestorTrace, HypergraphResult

TRACE_COLUMNS = ("q", "n2s", "jump", "gamma", "z_lo", "z_hi")
_SPARK = "▁▂▃▄▅▆▇█"


def _num(v):
    # JSON has no NaN; missing band values become null
    return None if isinstance(v, float) and not math.isfinite(v) else v


def trace_rows(trace: AncestorTrace) -> list[dict]:
    rows = trace.rows()
    removed = trace.removal_order + [None]
    for row, r in zip(rows, removed):
        row["removed"] = r
    return [{k: _num(v) for k, v in row.items()} for row in rows]


def graph_dict(result: HypergraphResult) -> dict:
    edges = [
        {"target": e.target, "ancestors": list(e.ancestors), "kernel": e.kernel,
         "n2s": e.n2s, "signal": e.signal}
        for e in result.edges
    ]
    return {
        "nodes": [{"name": n, "role": r} for n, r in result.nodes],
        "edges": edges,
        "traces": {n: trace_rows(t) for n, t in result.traces.items()},
        "config_echo": result.config.to_dict(),
    }


def dumps(doc: dict) -> str:
    return json.dumps(doc, sort_keys=True, indent=2, allow_nan=False) + "\n"


def write_graph_json(result: HypergraphResult | dict, path: str | Path, extra_echo: dict | None = None) -> None:
    doc = graph_dict(result) if isinstance(result, HypergraphResult) else result
    if extra_echo:
        doc["config_echo"] = {**doc["config_echo"], **extra_echo}
    Path(path).write_text(dumps(doc))


def _quote(s: str) -> str:
    return '"' + s.replace("\\", "\\\\").replace('"', '\\"') + '"'


def to_dot(result: HypergraphResult) -> str:
    lines = ["digraph hypergraph {", "  rankdir=LR;"]
    for name, role in result.nodes:
        shape = "box" if role == "derivative" else "ellipse"
        lines.append(f"  {_quote(name)} [shape={shape}];")
    for e in result.edges:
        for a in e.ancestors:
            lines.append(
                f"  {_quote(a)} -> {_quote(e.target)} "
                f"[kernel={_quote(e.kernel)}, signal={e.signal:.6g}];"
            )
    lines.append("}")
    return "\n".join(lines) + "\n"


def write_trace_csv(trace: AncestorTrace, path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(TRACE_COLUMNS)
        for row in trace.rows():
            w.writerow(["" if _num(row[c]) is None else repr(row[c]) for c in TRACE_COLUMNS])


def sparkline(values) -> str:
    """Text rendering of values in [0, 1]."""
    out = []
    for v in values:
        if v is None or not math.isfinite(v):
            out.append(" ")
        else:
            out.append(_SPARK[min(len(_SPARK) - 1, max(0, int(v * len(_SPARK))))])
    return "".join(out)


def safe_filename(name: str) -> str:
    return "".join(c if c.isalnum() or c in "-_.^+" else "_" for c in name)


def write_all(result: HypergraphResult, out_dir: str | Path, extra_echo: dict | None = None) -> list[Path]:
    out = Path(out_dir)
    (out / "traces").mkdir(parents=True, exist_ok=True)
    paths = [out / "graph.json", out / "graph.dot"]
    write_graph_json(result, paths[0], extra_echo)
    paths[1].write_text(to_dot(result))
    for name, tr in result.traces.items():
        p = out / "traces" / f"{safe_filename(name)}.csv"
        write_trace_csv(tr, p)
        paths.append(p)
    return paths
