"""Semantic quality screen driven by a multimodal LLM.

Eight uniformly sampled frames are judged against two criteria in fixed
order (visual diversity + text overlay, then content variation), each as
one GOOD/BAD completion. Any transport or parse failure is fail-closed:
the video lands in the error queue rather than slipping through.
"""

from __future__ import annotations

import re
import time
from dataclasses import dataclass

from .clients import MultimodalClient, call_with_retries
from .config import PipelineConfig
from .errors import ClientError, SamplingError, UnparseableResponseError
from .frames import FrameSequence, frame_to_png, sample_uniform
from .prompts import get_prompt
from .records import FilterVerdict

_GOOD = re.compile(r"\bGOOD\b")
_BAD = re.compile(r"\bBAD\b")


@dataclass(frozen=True)
class SemanticCriterion:
    name: str
    prompt_template: str


def criteria(prompt_dir: str = "") -> tuple[SemanticCriterion, ...]:
    """The two screening criteria, in the order they are issued."""
    return (
        SemanticCriterion("diversity_and_text", get_prompt("diversity_and_text", prompt_dir)),
        SemanticCriterion("content_variation", get_prompt("content_variation", prompt_dir)),
    )


def parse_good_bad(response: str) -> str:
    """Extract the single capitalized GOOD or BAD token from a response.

    The prompt demands a capitalized answer, so lowercase matches are
    rejected rather than silently admitted.
    """
    has_good = _GOOD.search(response) is not None
    has_bad = _BAD.search(response) is not None
    if has_good and not has_bad:
        return "good"
    if has_bad and not has_good:
        return "bad"
    if has_good and has_bad:
        raise UnparseableResponseError(f"both GOOD and BAD present in {response[:80]!r}")
    raise UnparseableResponseError(f"neither GOOD nor BAD present in {response[:80]!r}")


def semantic_verdict(
    seq: FrameSequence,
    client: MultimodalClient,
    cfg: PipelineConfig,
    sleep=time.sleep,
) -> FilterVerdict:
    """Pass only when every criterion answers GOOD; reject on the first BAD."""
    try:
        images = [frame_to_png(f) for f in sample_uniform(seq, cfg.mllm_frames)]
    except SamplingError as exc:
        return FilterVerdict(stage="semantic", outcome="error", detail=str(exc))

    answers = []
    for criterion in criteria(cfg.prompt_dir):
        try:
            response = call_with_retries(
                lambda: client.complete(images, criterion.prompt_template), sleep=sleep
            )
            answer = parse_good_bad(response)
        except ClientError as exc:
            return FilterVerdict(
                stage="semantic",
                outcome="error",
                detail=f"{criterion.name}: {exc}",
            )
        answers.append(f"{criterion.name}: {answer.upper()}")
        if answer == "bad":
            return FilterVerdict(stage="semantic", outcome="reject", detail="; ".join(answers))
    return FilterVerdict(stage="semantic", outcome="pass", detail="; ".join(answers))
