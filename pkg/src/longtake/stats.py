"""Dataset-level statistics over the manifest, plus report rendering.

Statistics cover records whose final stage passed. Flow statistics are
restricted to videos longer than 10 s, matching how the source protocol
reports its flow-score column.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .clients import TextClassifier
from .errors import ProtocolError, ValidationError
from .records import CATEGORY_LABELS, VideoRecord

FLOW_STATS_MIN_DURATION_S = 10.0


@dataclass(frozen=True)
class Histogram:
    """Fixed-width bins [edges[i], edges[i+1]) plus one overflow bin
    [edges[-1], inf); counts has one entry per bin including overflow."""

    edges: tuple[float, ...]
    counts: tuple[int, ...]

    @property
    def total(self) -> int:
        return sum(self.counts)

    def to_dict(self) -> dict:
        return {"edges": list(self.edges), "counts": list(self.counts)}


def histogram(values: Sequence[float], bin_width: float, max_value: float) -> Histogram:
    edges = []
    edge = 0.0
    while edge < max_value - 1e-9:
        edges.append(edge)
        edge += bin_width
    edges.append(max_value)
    counts = [0] * len(edges)
    for v in values:
        idx = int(v // bin_width)
        if v >= max_value:
            idx = len(edges) - 1
        counts[idx] += 1
    return Histogram(edges=tuple(edges), counts=tuple(counts))


@dataclass(frozen=True)
class DatasetStats:
    count: int
    duration_mean: Optional[float] = None
    duration_median: Optional[float] = None
    duration_hist: Optional[Histogram] = None
    word_mean: Optional[float] = None
    word_hist: Optional[Histogram] = None
    flow_mean: Optional[float] = None
    flow_count: int = 0
    flow_hist: Optional[Histogram] = None
    category_histogram: dict[str, int] = field(default_factory=dict)
    uncategorized: int = 0
    long_take_rate: Optional[float] = None
    dynamic_degree_mean: Optional[float] = None

    @property
    def empty(self) -> bool:
        return self.count == 0


def classify_category(caption: str, classifier: TextClassifier) -> str:
    """Top-1 zero-shot label over the fixed 8-category set."""
    if not caption:
        raise ValidationError("caption must be non-empty", field="caption")
    ranked = classifier.rank(caption, CATEGORY_LABELS)
    top = ranked[0]
    if top not in CATEGORY_LABELS:
        raise ProtocolError(f"classifier returned label {top!r} outside the category set")
    return top


def _passing(records: Sequence[VideoRecord]) -> list[VideoRecord]:
    out = []
    for rec in records:
        verdict = rec.stage("caption")
        if verdict is not None and verdict.outcome == "pass":
            out.append(rec)
    return out


def compute_stats(
    records: Sequence[VideoRecord],
    cfg=None,
    long_take_rate: Optional[float] = None,
    dynamic_degree_mean: Optional[float] = None,
) -> DatasetStats:
    """Single deterministic fold over the manifest records."""
    from .config import PipelineConfig

    cfg = cfg or PipelineConfig()
    passing = _passing(records)
    if not passing:
        return DatasetStats(count=0)

    durations = [r.duration_s for r in passing]
    words = [r.caption.word_count for r in passing if r.caption is not None]
    flows = [
        r.stage("motion").score
        for r in passing
        if r.duration_s > FLOW_STATS_MIN_DURATION_S
        and r.stage("motion") is not None
        and r.stage("motion").score is not None
    ]
    cat_hist = {label: 0 for label in CATEGORY_LABELS}
    uncategorized = 0
    for rec in passing:
        if rec.category is None:
            uncategorized += 1
        else:
            cat_hist[rec.category] += 1

    return DatasetStats(
        count=len(passing),
        duration_mean=float(np.mean(durations)),
        duration_median=float(np.median(durations)),
        duration_hist=histogram(durations, cfg.hist_duration_bin_s, cfg.hist_duration_max_s),
        word_mean=float(np.mean(words)) if words else None,
        word_hist=histogram(words, float(cfg.hist_word_bin), float(cfg.hist_word_max)),
        flow_mean=float(np.mean(flows)) if flows else None,
        flow_count=len(flows),
        flow_hist=histogram(flows, cfg.hist_flow_bin, cfg.hist_flow_max),
        category_histogram=cat_hist,
        uncategorized=uncategorized,
        long_take_rate=long_take_rate,
        dynamic_degree_mean=dynamic_degree_mean,
    )


def stats_to_dict(stats: DatasetStats) -> dict:
    return {
        "empty": stats.empty,
        "count": stats.count,
        "duration_mean_s": stats.duration_mean,
        "duration_median_s": stats.duration_median,
        "word_mean": stats.word_mean,
        "flow_mean": stats.flow_mean,
        "flow_count": stats.flow_count,
        "long_take_rate": stats.long_take_rate,
        "dynamic_degree_mean": stats.dynamic_degree_mean,
        "duration_hist": stats.duration_hist.to_dict() if stats.duration_hist else None,
        "word_hist": stats.word_hist.to_dict() if stats.word_hist else None,
        "flow_hist": stats.flow_hist.to_dict() if stats.flow_hist else None,
        "category_histogram": dict(stats.category_histogram),
        "uncategorized": stats.uncategorized,
    }


def _csv_escape(value) -> str:
    text = json.dumps(value) if isinstance(value, float) else str(value)
    return f'"{text}"' if "," in text else text


def render_report(stats: DatasetStats, format: str = "json") -> str:
    """Serialize stats with a fixed field order; formats: csv, json, markdown."""
    data = stats_to_dict(stats)
    if format == "json":
        return json.dumps(data, indent=2) + "\n"

    if format == "csv":
        lines = ["metric,value"]
        for key in (
            "empty",
            "count",
            "duration_mean_s",
            "duration_median_s",
            "word_mean",
            "flow_mean",
            "flow_count",
            "long_take_rate",
            "dynamic_degree_mean",
            "uncategorized",
        ):
            lines.append(f"{key},{_csv_escape(data[key])}")
        for name in ("duration_hist", "word_hist", "flow_hist"):
            hist = data[name]
            if hist is None:
                continue
            for i, count in enumerate(hist["counts"]):
                lo = hist["edges"][i]
                hi = hist["edges"][i + 1] if i + 1 < len(hist["edges"]) else "inf"
                lines.append(f"{name}[{lo}:{hi}],{count}")
        for label, count in data["category_histogram"].items():
            lines.append(f"category[{label}],{count}")
        return "\n".join(lines) + "\n"

    if format == "markdown":
        lines = ["| metric | value |", "| --- | --- |"]
        for key, value in data.items():
            if key.endswith("_hist") or key == "category_histogram":
                continue
            lines.append(f"| {key} | {value} |")
        lines.append("")
        lines.append("| category | count |")
        lines.append("| --- | --- |")
        for label, count in data["category_histogram"].items():
            lines.append(f"| {label} | {count} |")
        return "\n".join(lines) + "\n"

    raise ValidationError(f"unknown report format {format!r}", field="format")
