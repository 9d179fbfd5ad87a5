"""Attack metrics: checkpoint distances, success rates and comparison tables.

The distance of an image at query checkpoint ``q`` is its best distance at
the largest recorded query index <= ``q``. An image counts as a success at
``q`` when that distance is below the threshold ``epsilon``.
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .core import AttackError, AttackTrace, TracePoint, distance_at

DEFAULT_CHECKPOINTS = (2500, 5000, 10000)
DEFAULT_EPSILON = 0.5
TRACE_HEADER = ("query_index", "d_min", "accepted")


class SchemaMismatch(AttackError, ValueError):
    pass


@dataclass
class ImageRecord:
    image_id: str
    final_distance: float
    queries: int
    checkpoint_distances: list[float]
    success: list[bool]


@dataclass
class CheckpointStats:
    queries: int
    mean: float
    std: float
    median: float
    asr: float


@dataclass
class EvalReport:
    name: str
    checkpoints: list[int]
    epsilon: float
    images: list[ImageRecord]
    aggregates: list[CheckpointStats]
    manifest: str | None = None
    extra: dict = field(default_factory=dict)

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=1)

    @classmethod
    def from_json(cls, text: str) -> "EvalReport":
        d = json.loads(text)
        d["images"] = [ImageRecord(**r) for r in d["images"]]
        d["aggregates"] = [CheckpointStats(**a) for a in d["aggregates"]]
        return cls(**d)

    def save(self, path) -> None:
        Path(path).write_text(self.to_json() + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path) -> "EvalReport":
        try:
            return cls.from_json(Path(path).read_text(encoding="utf-8"))
        except (KeyError, TypeError) as exc:
            raise SchemaMismatch(f"{path}: not an evaluation report ({exc})") from None

    def stats_at(self, queries: int) -> CheckpointStats:
        for agg in self.aggregates:
            if agg.queries == queries:
                return agg
        raise KeyError(queries)


def checkpoint_stats(distances: Sequence[float], queries: int, epsilon: float) -> CheckpointStats:
    d = np.asarray(distances, dtype=np.float64)
    asr = 100.0 * float(np.count_nonzero(d < epsilon)) / d.size
    return CheckpointStats(queries, float(d.mean()), float(d.std()), float(np.median(d)), asr)


def build_report(traces: Mapping[str, Sequence[TracePoint] | AttackTrace], name: str = "attack",
                 checkpoints: Sequence[int] = DEFAULT_CHECKPOINTS, epsilon: float = DEFAULT_EPSILON,
                 manifest: str | None = None) -> EvalReport:
    """Aggregate per-image traces (``AttackTrace`` or bare point lists)."""
    if not traces:
        raise ValueError("no traces to report")
    checkpoints = sorted(int(q) for q in checkpoints)
    images = []
    for image_id, trace in traces.items():
        points = trace.points if isinstance(trace, AttackTrace) else list(trace)
        dists = [distance_at(points, q) for q in checkpoints]
        images.append(ImageRecord(str(image_id), points[-1].d_min, points[-1].query_index, dists,
                                  [d < epsilon for d in dists]))
    aggregates = [
        checkpoint_stats([img.checkpoint_distances[i] for img in images], q, epsilon)
        for i, q in enumerate(checkpoints)
    ]
    return EvalReport(name, checkpoints, float(epsilon), images, aggregates, manifest)


def write_trace_csv(trace: AttackTrace | Sequence[TracePoint], path) -> None:
    points = trace.points if isinstance(trace, AttackTrace) else trace
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(TRACE_HEADER)
        for pt in points:
            w.writerow((pt.query_index, repr(pt.d_min), int(pt.accepted)))


def read_trace_csv(path) -> list[TracePoint]:
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    if not rows or tuple(rows[0]) != TRACE_HEADER:
        raise SchemaMismatch(f"{path}: expected header {','.join(TRACE_HEADER)}")
    return [TracePoint(int(q), float(d), bool(int(a))) for q, d, a in rows[1:]]


def _check_schema(reports: Sequence[EvalReport]) -> None:
    first = reports[0]
    for r in reports[1:]:
        if r.checkpoints != first.checkpoints:
            raise SchemaMismatch(f"{r.name}: checkpoints {r.checkpoints} != {first.checkpoints}")
        if r.epsilon != first.epsilon:
            raise SchemaMismatch(f"{r.name}: epsilon {r.epsilon} != {first.epsilon}")


def comparison_rows(reports: Sequence[EvalReport]) -> tuple[list[str], list[list]]:
    """Header and one row per report: mean, std, median, ASR per checkpoint."""
    if not reports:
        raise ValueError("no reports")
    _check_schema(reports)
    header = ["attack"]
    for q in reports[0].checkpoints:
        header += [f"mean_{q}", f"std_{q}", f"median_{q}", f"asr_{q}"]
    rows = []
    for r in reports:
        row = [r.name]
        for agg in r.aggregates:
            row += [agg.mean, agg.std, agg.median, agg.asr]
        rows.append(row)
    return header, rows


def best_cells(reports: Sequence[EvalReport]) -> set[tuple[int, str]]:
    """(row, column) cells holding the best value: lowest mean and median
    distance, highest ASR, per checkpoint. Ties mark every tied row."""
    header, rows = comparison_rows(reports)
    marked = set()
    for col, name in enumerate(header):
        if col == 0 or name.startswith("std_"):
            continue
        values = [row[col] for row in rows]
        target = max(values) if name.startswith("asr_") else min(values)
        marked.update((i, name) for i, v in enumerate(values) if v == target)
    return marked


def comparison_csv(reports: Sequence[EvalReport]) -> str:
    header, rows = comparison_rows(reports)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([row[0]] + [repr(float(v)) for v in row[1:]])
    return buf.getvalue()


def comparison_text(reports: Sequence[EvalReport]) -> str:
    """Aligned table; ``*`` marks the best cell of each column."""
    _, rows = comparison_rows(reports)
    best = best_cells(reports)
    checkpoints = reports[0].checkpoints
    header = ["attack"]
    for q in checkpoints:
        header += [f"dist@{q}", f"median@{q}", f"ASR@{q}"]
    table = [header]
    for i, (r, row) in enumerate(zip(reports, rows)):
        cells = [r.name]
        for agg in r.aggregates:
            q = agg.queries
            mark = lambda col: "*" if (i, f"{col}_{q}") in best else ""
            cells += [f"{agg.mean:.4f}±{agg.std:.4f}{mark('mean')}",
                      f"{agg.median:.4f}{mark('median')}",
                      f"{agg.asr:.1f}%{mark('asr')}"]
        table.append(cells)
    widths = [max(len(row[c]) for row in table) for c in range(len(header))]
    lines = ["  ".join(cell.ljust(w) for cell, w in zip(row, widths)).rstrip() for row in table]
    lines.insert(1, "  ".join("-" * w for w in widths))
    return "\n".join(lines) + "\n"
