"""Hierarchical captioning: 30 s clips -> grid captions -> refined whole-video text.

Each clip is summarized from a single composite image (six frames in a
2x3 grid) by a vision-language client; a text client then rewrites a
single clip caption, or composes multiple chronological clip captions into
one temporally dense caption.
"""

from __future__ import annotations

import time
from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np

from .clients import MultimodalClient, call_with_retries
from .config import PipelineConfig
from .errors import UnparseableResponseError, ValidationError
from .frames import FrameSequence, frame_to_png, round_half_up, uniform_indices
from .prompts import get_prompt
from .records import CaptionRecord, ClipCaption, ClipSpan, count_words

# A trailing remainder shorter than this is folded into the previous clip
# instead of being captioned as a degenerate snippet.
MIN_REMAINDER_S = 5.0


def split_clips(duration_s: float, clip_len_s: float = 30.0) -> list[ClipSpan]:
    """Tile [0, duration) with clip_len_s spans; a short tail merges back."""
    if duration_s <= 0:
        raise ValidationError("duration must be positive", field="duration_s")
    n_full = int(duration_s // clip_len_s)
    remainder = duration_s - n_full * clip_len_s
    bounds = [i * clip_len_s for i in range(n_full + 1)]
    if remainder >= MIN_REMAINDER_S or n_full == 0:
        bounds.append(duration_s)
    else:
        bounds[-1] = duration_s
    return [
        ClipSpan(start_s=bounds[i], end_s=bounds[i + 1], index=i) for i in range(len(bounds) - 1)
    ]


@dataclass(frozen=True)
class ImageGrid:
    composite: np.ndarray  # (rows*cell_h, cols*cell_w, 3) uint8
    cell_w: int
    cell_h: int
    rows: int
    cols: int
    source_indices: tuple[int, ...]


def build_grid(
    frames: Sequence[np.ndarray],
    rows: int = 2,
    cols: int = 3,
    source_indices: Optional[Sequence[int]] = None,
) -> ImageGrid:
    """Place frames row-major into a borderless composite, no rescaling."""
    if len(frames) != rows * cols:
        raise ValidationError(f"expected {rows * cols} frames, got {len(frames)}")
    cell_h, cell_w = frames[0].shape[:2]
    for f in frames:
        if f.shape != frames[0].shape:
            raise ValidationError(
                f"all frames must share one size, got {f.shape} vs {frames[0].shape}"
            )
    composite = np.zeros((rows * cell_h, cols * cell_w, 3), dtype=np.uint8)
    for k, frame in enumerate(frames):
        r, c = divmod(k, cols)
        composite[r * cell_h : (r + 1) * cell_h, c * cell_w : (c + 1) * cell_w] = frame
    return ImageGrid(
        composite=composite,
        cell_w=cell_w,
        cell_h=cell_h,
        rows=rows,
        cols=cols,
        source_indices=tuple(source_indices) if source_indices is not None else tuple(range(len(frames))),
    )


def clip_frames(seq: FrameSequence, span: ClipSpan) -> np.ndarray:
    start = int(round_half_up(span.start_s * seq.fps))
    end = min(int(round_half_up(span.end_s * seq.fps)), seq.frame_count)
    if end <= start:
        raise ValidationError(f"span {span} holds no frames at {seq.fps} fps")
    return seq.frames[start:end]


def caption_clip(
    seq: FrameSequence,
    span: ClipSpan,
    vlm: MultimodalClient,
    cfg: PipelineConfig,
    sleep=time.sleep,
) -> str:
    """One VLM completion for the clip's composite grid."""
    frames = clip_frames(seq, span)
    idx = uniform_indices(len(frames), cfg.grid_frames)
    grid = build_grid(
        [frames[i] for i in idx], rows=cfg.grid_rows, cols=cfg.grid_cols, source_indices=idx
    )
    png = frame_to_png(grid.composite)
    prompt = get_prompt("clip_caption", cfg.prompt_dir)
    text = call_with_retries(lambda: vlm.complete([png], prompt), sleep=sleep).strip()
    if not text:
        raise UnparseableResponseError(f"empty caption for clip {span.index}")
    return text


def refine_caption(
    raw: str, llm: MultimodalClient, prompt_dir: str = "", sleep=time.sleep
) -> str:
    """Rewrite a single clip caption into the final video caption."""
    prompt = get_prompt("refine_caption", prompt_dir).format(caption=raw)
    text = call_with_retries(lambda: llm.complete([], prompt), sleep=sleep).strip()
    if not text:
        raise UnparseableResponseError("empty refined caption")
    return text


def merge_captions(
    raws: Sequence[str], llm: MultimodalClient, prompt_dir: str = "", sleep=time.sleep
) -> str:
    """Compose two or more chronological clip captions into one caption."""
    if len(raws) < 2:
        raise ValidationError("merge needs at least 2 captions; refine single clips instead")
    numbered = "\n".join(f"Segment {i + 1}: {raw}" for i, raw in enumerate(raws))
    prompt = get_prompt("compose_captions", prompt_dir).format(captions=numbered)
    text = call_with_retries(lambda: llm.complete([], prompt), sleep=sleep).strip()
    if not text:
        raise UnparseableResponseError("empty merged caption")
    return text


def caption_video(
    seq: FrameSequence,
    vlm: MultimodalClient,
    llm: MultimodalClient,
    cfg: PipelineConfig,
    prior: Optional[CaptionRecord] = None,
    on_clip: Optional[Callable[[CaptionRecord], None]] = None,
    sleep=time.sleep,
) -> CaptionRecord:
    """Split, caption each clip, then refine or merge.

    Clip captions already present in ``prior`` (matched by index and span)
    are reused without a client call, so an interrupted video resumes at
    its first uncaptioned clip. ``on_clip`` sees the partial record after
    every fresh clip caption; errors propagate after that checkpoint.
    """
    spans = split_clips(seq.duration_s, cfg.clip_len_s)
    prior_by_index = {}
    if prior is not None:
        prior_by_index = {c.span.index: c for c in prior.clip_captions}

    clips: list[ClipCaption] = []
    for span in spans:
        known = prior_by_index.get(span.index)
        if known is not None and known.span == span:
            clips.append(known)
            continue
        text = caption_clip(seq, span, vlm, cfg, sleep=sleep)
        clips.append(ClipCaption(span=span, text=text))
        if on_clip is not None:
            on_clip(CaptionRecord(clip_captions=tuple(clips)))

    if len(clips) == 1:
        final = refine_caption(clips[0].text, llm, cfg.prompt_dir, sleep=sleep)
    else:
        final = merge_captions([c.text for c in clips], llm, cfg.prompt_dir, sleep=sleep)
    return CaptionRecord(
        clip_captions=tuple(clips), final_caption=final, word_count=count_words(final)
    )
