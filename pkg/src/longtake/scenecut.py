"""Long-take gate: reject videos with hard cuts or short fades.

Frames are sampled at a deliberately low rate (default 0.5 fps) and scored
pairwise with a mean absolute HSV delta; one score at or above the
threshold rejects the whole video, which also catches fades that complete
within a sampling interval.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .config import PipelineConfig
from .errors import ValidationError
from .frames import FrameSequence, HsvFrame, fps_sample_indices, resize, round_half_up, to_hsv
from .records import FilterVerdict

# Sampled frames are shrunk until their short side fits this many pixels,
# which suppresses sensor noise and bounds the per-pair cost.
SCORE_MAX_MIN_DIM = 256


@dataclass(frozen=True)
class ContentScoreSeries:
    scores: tuple[float, ...]  # one per consecutive sampled-frame pair
    timestamps: tuple[float, ...]  # source time of each pair's later frame
    sample_fps: float


def content_score(prev: HsvFrame, cur: HsvFrame) -> float:
    """Equal-weight mean absolute HSV difference, hue circular mod 256."""
    if prev.data.shape != cur.data.shape:
        raise ValidationError(
            f"frame dimensions differ: {prev.data.shape} vs {cur.data.shape}"
        )
    delta = np.abs(prev.data.astype(np.int16) - cur.data.astype(np.int16))
    dh = np.minimum(delta[..., 0], 256 - delta[..., 0])
    return float((dh.mean() + delta[..., 1].mean() + delta[..., 2].mean()) / 3.0)


def _shrink_for_scoring(frame: np.ndarray) -> np.ndarray:
    h, w = frame.shape[:2]
    short = min(w, h)
    if short <= SCORE_MAX_MIN_DIM:
        return frame
    scale = SCORE_MAX_MIN_DIM / short
    return resize(
        frame,
        max(1, int(round_half_up(w * scale))),
        max(1, int(round_half_up(h * scale))),
    )


def score_series(seq: FrameSequence, cfg: PipelineConfig) -> ContentScoreSeries:
    idx = fps_sample_indices(seq.frame_count, seq.fps, cfg.scenecut_fps)
    if len(idx) < 2:
        raise ValidationError(
            f"need at least 2 frames sampled at {cfg.scenecut_fps} fps, got {len(idx)}"
        )
    hsv = [to_hsv(_shrink_for_scoring(seq.frames[i])) for i in idx]
    scores = tuple(content_score(hsv[k], hsv[k + 1]) for k in range(len(hsv) - 1))
    timestamps = tuple(float(idx[k + 1] / seq.fps) for k in range(len(hsv) - 1))
    return ContentScoreSeries(scores=scores, timestamps=timestamps, sample_fps=cfg.scenecut_fps)


def detect_cuts(seq: FrameSequence, cfg: PipelineConfig) -> FilterVerdict:
    """Pass only when no sampled pair reaches the cut threshold."""
    try:
        series = score_series(seq, cfg)
    except ValidationError as exc:
        return FilterVerdict(stage="scenecut", outcome="error", detail=str(exc))

    cuts = []
    last_hit = None
    for k, score in enumerate(series.scores):
        if score < cfg.cutscene_threshold:
            continue
        # min_scene_len counts sampled frames between reported cuts;
        # the default of 0 reports every exceedance.
        if last_hit is not None and (k - last_hit) < cfg.min_scene_len_frames:
            continue
        cuts.append(series.timestamps[k])
        last_hit = k

    max_score = max(series.scores)
    if cuts:
        detail = "cuts at " + ", ".join(f"{t:.2f}s" for t in cuts)
        return FilterVerdict(stage="scenecut", outcome="reject", score=max_score, detail=detail)
    return FilterVerdict(stage="scenecut", outcome="pass", score=max_score, detail="no cuts")
