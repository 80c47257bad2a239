"""Desk-scale comparison experiments between attention ranks and baselines."""
from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .cascade import CascadeTrace, cascade_scale
from .errors import GridCascadeError, ValidationError
from .grid import GridNetwork
from .powerflow import dc_power_flow

MIN_CELL_COUNT = 50
DEFAULT_TOP_X = tuple(range(1, 11))
STRUCTURE_TOP_X = (5, 10, 20)
FREQUENCY_NOTE = "passive frequency = failure events of top-x lines / (|top-x set| * number of traces)"
CSV_FIELDS = ("algorithm", "top_x", "metric", "value", "samples", "low_confidence")


def top_set(rank, top_x: float, n_lines: int) -> list[int]:
    if not 0 < top_x <= 100:
        raise ValidationError(f"top_x must be in (0, 100] (got {top_x})")
    k = math.ceil(top_x * n_lines / 100 - 1e-9)
    return list(rank[: max(k, 1)])


def _check_perm(rank, n_lines: int):
    if sorted(rank) != list(range(n_lines)):
        raise ValidationError("rank is not a permutation of the line ids")


def passive_frequency(traces: list[CascadeTrace], rank, top_x: float, window: str = "gen2", n_lines: int | None = None) -> float:
    """How often the top-x lines of ``rank`` fail after the initial generation.

    ``window`` is ``gen2`` (second generation only) or ``all`` (every generation
    from the second on).
    """
    if not traces:
        raise ValidationError("empty trace set")
    n_lines = len(rank) if n_lines is None else n_lines
    _check_perm(rank, n_lines)
    if window not in ("gen2", "all"):
        raise ValidationError(f"window must be 'gen2' or 'all' (got {window!r})")
    chosen = set(top_set(rank, top_x, n_lines))
    events = 0
    for tr in traces:
        gens = tr.generations[1:2] if window == "gen2" else tr.generations[1:]
        events += sum(len(chosen & g) for g in gens)
    return events / (len(chosen) * len(traces))


@dataclass(frozen=True)
class Attribution:
    mean_scale: float
    count: int
    low_confidence: bool


def initiative_scale_experiment(traces: list[CascadeTrace], ranks: dict[str, list[int]], top_x: float,
                                n_lines: int, min_count: int = MIN_CELL_COUNT) -> dict[str, Attribution]:
    """Mean cascade scale of traces whose initial failures touch exactly one algorithm's top-x set."""
    sets = {}
    for name, rank in ranks.items():
        _check_perm(rank, n_lines)
        sets[name] = frozenset(top_set(rank, top_x, n_lines))
    totals = {name: [] for name in ranks}
    for tr in traces:
        hits = [name for name, s in sets.items() if s & tr.generations[0]]
        if len(hits) == 1:
            totals[hits[0]].append(cascade_scale(tr, n_lines))
    out = {}
    for name, scales in totals.items():
        # fsum keeps the mean independent of trace order
        mean = math.fsum(scales) / len(scales) if scales else float("nan")
        out[name] = Attribution(mean, len(scales), len(scales) < min_count)
    return out


def structure_correlation(network: GridNetwork, ranks: dict[str, dict], top_x=STRUCTURE_TOP_X) -> list[dict]:
    """Capacity of top Passives and base-case |flow| of top Initiatives, relative to all lines.

    ``ranks`` maps algorithm name to ``{"initiatives": perm, "passives": perm}``.
    """
    cap = network.capacities()
    flow = np.abs(dc_power_flow(network, ()).flows)
    n = network.n_lines
    rows = []
    for name, r in ranks.items():
        for x in top_x:
            passives = top_set(r["passives"], x, n)
            initiatives = top_set(r["initiatives"], x, n)
            flow_mean = flow.mean()
            rows.append(_row(name, x, "capacity_ratio", float(cap[passives].mean() / cap.mean()), len(passives), False))
            rows.append(
                _row(name, x, "flow_ratio", float(flow[initiatives].mean() / flow_mean) if flow_mean else float("nan"),
                     len(initiatives), False)
            )
    return rows


def _row(algorithm, top_x, metric, value, samples, low_confidence) -> dict:
    return {
        "algorithm": algorithm,
        "top_x": top_x,
        "metric": metric,
        "value": value,
        "samples": int(samples),
        "low_confidence": bool(low_confidence),
    }


@dataclass
class ExperimentReport:
    rows: list[dict] = field(default_factory=list)
    meta: dict = field(default_factory=dict)

    def to_json(self) -> dict:
        return {"meta": self.meta, "rows": self.rows}


def comparison_report(traces: list[CascadeTrace], network: GridNetwork, ranks: dict[str, dict],
                      top_x=DEFAULT_TOP_X, min_count: int = MIN_CELL_COUNT, meta: dict | None = None) -> ExperimentReport:
    """Passive frequency, Initiative scale and structure statistics for every algorithm."""
    n = network.n_lines
    rows = []
    for x in top_x:
        for window in ("gen2", "all"):
            for name, r in ranks.items():
                rows.append(_row(name, x, f"passive_freq_{window}",
                                 passive_frequency(traces, r["passives"], x, window, n), len(traces),
                                 len(traces) < min_count))
        attributed = initiative_scale_experiment(traces, {k: r["initiatives"] for k, r in ranks.items()}, x, n, min_count)
        for name, a in attributed.items():
            rows.append(_row(name, x, "initiative_scale", a.mean_scale, a.count, a.low_confidence))
    rows.extend(structure_correlation(network, ranks))
    rows.sort(key=lambda r: (r["metric"], r["algorithm"], r["top_x"]))
    info = {"network": network.name, "n_lines": n, "traces": len(traces), "min_cell_count": min_count,
            "frequency_normalizer": FREQUENCY_NOTE}
    info.update(meta or {})
    return ExperimentReport(rows, info)


def _csv_text(rows: list[dict]) -> str:
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=CSV_FIELDS, lineterminator="\n")
    w.writeheader()
    for r in rows:
        w.writerow({**r, "value": repr(float(r["value"]))})
    return buf.getvalue()


def emit_report(report: ExperimentReport, out_dir) -> tuple[Path, Path]:
    out_dir = Path(out_dir)
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
        jpath, cpath = out_dir / "report.json", out_dir / "report.csv"
        jpath.write_text(json.dumps(report.to_json(), indent=1, sort_keys=True) + "\n")
        cpath.write_text(_csv_text(report.rows))
    except OSError as exc:
        raise GridCascadeError(f"cannot write report to {out_dir}: {exc}") from exc
    return jpath, cpath
