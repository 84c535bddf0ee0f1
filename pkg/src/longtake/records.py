"""Domain records: per-video verdicts, captions, and their JSON forms.

Every type here is an immutable value; evolution happens through
``dataclasses.replace`` or the ``with_*`` helpers so records can be shared
freely between workers.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from datetime import datetime, timezone
from typing import Any, Optional

from .errors import ValidationError

SOURCE_DATASETS = ("panda70m", "hdvg", "internvid", "webvid", "other")

CATEGORY_LABELS = (
    "scenery",
    "people",
    "food",
    "sports",
    "animals",
    "transportation",
    "gaming",
    "others",
)

# Per-video processing order. A stage verdict may only exist if every
# earlier stage exists and passed.
STAGE_ORDER = ("duration", "scenecut", "motion", "semantic", "caption")

OUTCOMES = ("pass", "reject", "error")

# Stages whose pass/reject verdicts must carry a measured score.
_SCORED_STAGES = ("scenecut", "motion")


def now_iso() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="microseconds")


def count_words(text: str) -> int:
    """Number of maximal non-whitespace runs."""
    return len(text.split())


@dataclass(frozen=True)
class FilterVerdict:
    stage: str
    outcome: str
    score: Optional[float] = None
    detail: str = ""

    def validate(self) -> None:
        if self.stage not in STAGE_ORDER:
            raise ValidationError(f"unknown stage {self.stage!r}", field="stage")
        if self.outcome not in OUTCOMES:
            raise ValidationError(f"unknown outcome {self.outcome!r}", field="outcome")
        if self.outcome == "error" and not self.detail:
            raise ValidationError("error verdict requires a detail message", field="detail")
        if self.outcome in ("pass", "reject") and self.stage in _SCORED_STAGES and self.score is None:
            raise ValidationError(
                f"{self.stage} verdict with outcome {self.outcome} requires a score",
                field="score",
            )


@dataclass(frozen=True)
class ClipSpan:
    start_s: float
    end_s: float
    index: int

    @property
    def length_s(self) -> float:
        return self.end_s - self.start_s


@dataclass(frozen=True)
class ClipCaption:
    span: ClipSpan
    text: str


@dataclass(frozen=True)
class CaptionRecord:
    clip_captions: tuple[ClipCaption, ...] = ()
    final_caption: str = ""
    word_count: int = 0

    def validate(self) -> None:
        if self.word_count != count_words(self.final_caption):
            raise ValidationError(
                "word_count must equal the whitespace-token count of final_caption",
                field="word_count",
            )


@dataclass(frozen=True)
class VideoRecord:
    id: str
    source_dataset: str
    uri: str
    duration_s: float
    fps: float
    width: int
    height: int
    stage_results: tuple[FilterVerdict, ...] = ()
    caption: Optional[CaptionRecord] = None
    category: Optional[str] = None
    original_caption: Optional[str] = None
    created_at: str = field(default_factory=now_iso)
    updated_at: str = field(default_factory=now_iso)

    def stage(self, name: str) -> Optional[FilterVerdict]:
        for verdict in self.stage_results:
            if verdict.stage == name:
                return verdict
        return None

    def with_stage(self, verdict: FilterVerdict) -> "VideoRecord":
        """Append (or overwrite) one stage verdict and bump updated_at."""
        kept = tuple(v for v in self.stage_results if v.stage != verdict.stage)
        order = {name: i for i, name in enumerate(STAGE_ORDER)}
        results = tuple(sorted(kept + (verdict,), key=lambda v: order[v.stage]))
        return replace(self, stage_results=results, updated_at=now_iso())

    def last_verdict(self) -> Optional[FilterVerdict]:
        return self.stage_results[-1] if self.stage_results else None

    def is_terminal(self) -> bool:
        """True once no further pipeline work is possible for this record."""
        last = self.last_verdict()
        if last is None:
            return False
        if last.outcome in ("reject", "error"):
            return True
        return last.stage == STAGE_ORDER[-1]

    def next_stage(self) -> Optional[str]:
        """Name of the next stage to run, or None if terminal."""
        if self.is_terminal():
            return None
        return STAGE_ORDER[len(self.stage_results)]

    def validate(self, min_duration_s: Optional[float] = None) -> None:
        if not self.id:
            raise ValidationError("id must be non-empty", field="id")
        if self.source_dataset not in SOURCE_DATASETS:
            raise ValidationError(
                f"source_dataset must be one of {SOURCE_DATASETS}", field="source_dataset"
            )
        if self.duration_s < 0:
            raise ValidationError("duration_s must be nonnegative", field="duration_s")
        if self.fps <= 0:
            raise ValidationError("fps must be positive", field="fps")
        if self.width <= 0 or self.height <= 0:
            raise ValidationError("frame dimensions must be positive", field="width")
        names = [v.stage for v in self.stage_results]
        if names != list(STAGE_ORDER[: len(names)]):
            raise ValidationError(
                f"stage_results {names} must be an in-order prefix of {list(STAGE_ORDER)}",
                field="stage_results",
            )
        for verdict in self.stage_results[:-1]:
            if verdict.outcome != "pass":
                raise ValidationError(
                    f"stage {verdict.stage} is non-pass but later stage results exist",
                    field="stage_results",
                )
        for verdict in self.stage_results:
            verdict.validate()
        if self.category is not None and self.category not in CATEGORY_LABELS:
            raise ValidationError(
                f"category must be one of {CATEGORY_LABELS}", field="category"
            )
        if self.caption is not None:
            self.caption.validate()
        caption_stage = self.stage("caption")
        if caption_stage is not None and caption_stage.outcome == "pass":
            if self.caption is None or not self.caption.final_caption:
                raise ValidationError(
                    "caption stage passed but final_caption is empty", field="caption"
                )
        if min_duration_s is not None:
            dur = self.stage("duration")
            if dur is not None and dur.outcome == "pass" and self.duration_s < min_duration_s:
                raise ValidationError(
                    f"duration stage passed but duration_s {self.duration_s} < {min_duration_s}",
                    field="duration_s",
                )


def canonical_json(obj: Any) -> str:
    """Stable one-line JSON used for manifest lines and digests."""
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), ensure_ascii=False)


def record_to_dict(rec: VideoRecord) -> dict:
    out: dict[str, Any] = {
        "id": rec.id,
        "source_dataset": rec.source_dataset,
        "uri": rec.uri,
        "duration_s": rec.duration_s,
        "fps": rec.fps,
        "width": rec.width,
        "height": rec.height,
        "stage_results": [
            {"stage": v.stage, "outcome": v.outcome, "score": v.score, "detail": v.detail}
            for v in rec.stage_results
        ],
        "caption": None,
        "category": rec.category,
        "original_caption": rec.original_caption,
        "created_at": rec.created_at,
        "updated_at": rec.updated_at,
    }
    if rec.caption is not None:
        out["caption"] = {
            "clip_captions": [
                {
                    "start_s": c.span.start_s,
                    "end_s": c.span.end_s,
                    "index": c.span.index,
                    "text": c.text,
                }
                for c in rec.caption.clip_captions
            ],
            "final_caption": rec.caption.final_caption,
            "word_count": rec.caption.word_count,
        }
    return out


def record_from_dict(data: dict) -> VideoRecord:
    try:
        caption = None
        if data.get("caption") is not None:
            cap = data["caption"]
            caption = CaptionRecord(
                clip_captions=tuple(
                    ClipCaption(
                        span=ClipSpan(c["start_s"], c["end_s"], c["index"]),
                        text=c["text"],
                    )
                    for c in cap["clip_captions"]
                ),
                final_caption=cap["final_caption"],
                word_count=cap["word_count"],
            )
        return VideoRecord(
            id=data["id"],
            source_dataset=data["source_dataset"],
            uri=data["uri"],
            duration_s=float(data["duration_s"]),
            fps=float(data["fps"]),
            width=int(data["width"]),
            height=int(data["height"]),
            stage_results=tuple(
                FilterVerdict(
                    stage=v["stage"],
                    outcome=v["outcome"],
                    score=v["score"],
                    detail=v.get("detail", ""),
                )
                for v in data.get("stage_results", [])
            ),
            caption=caption,
            category=data.get("category"),
            original_caption=data.get("original_caption"),
            created_at=data.get("created_at", ""),
            updated_at=data.get("updated_at", ""),
        )
    except (KeyError, TypeError) as exc:
        raise ValidationError(f"record is missing or mistypes a field: {exc}") from exc
