"""Prompt templates for the inference clients.

Defaults can be overridden per deployment by dropping ``<name>.txt`` files
into the configured prompt directory.
"""

from __future__ import annotations

from pathlib import Path

DIVERSITY_AND_TEXT = (
    "Evaluate the video using these criteria:\n"
    "1.Visual Diversity: If the video is only some person talking to the camera with "
    "a static background, it is not diverse. And a video with only texts instead of "
    "objects is not diverse.\n"
    "2.Text Presence: Determine if text overlays dominate the video in a way that "
    "detracts from the visual experience.\n"
    "\n"
    "If the provided video is not visual diverse or having too much text presence, "
    "you should mark it as “BAD”. Otherwise, you should mark it as "
    "“GOOD”. You must provide a capitalized either “BAD” or "
    "“GOOD” answer."
)

CONTENT_VARIATION = (
    "Evaluate the video using the criterion of content variation: \n"
    "If the background, setting, and characters are in static states, the video "
    "lacks content variation.\n"
    "If the provided video lacks content variation, you should mark it as "
    "“BAD”. Otherwise, you should mark it as “GOOD”. You must "
    "provide a capitalized either “BAD” or “GOOD” answer."
)

CLIP_CAPTION = (
    "The provided image arranges key frames of a video clip in a grid view, ordered "
    "from left to right and top to bottom. Describe the video clip in detail: the "
    "background, the main characters, the major actions, and the camera perspective, "
    "including how they change over time. Describe only what is visible."
)

REFINE_CAPTION = (
    "Rewrite the given raw video caption so that the new caption is concise and "
    "objective, and conveys a clear storyline for the video. Remove speculation and "
    "redundancy. Reply with the rewritten caption only.\n"
    "\n"
    "Raw caption:\n"
    "{caption}"
)

COMPOSE_CAPTIONS = (
    "The following captions describe consecutive segments of a single video in "
    "chronological order. Compose them into one coherent caption that describes the "
    "content and dynamics of the whole video. Remove speculation and redundancy. "
    "Reply with the composed caption only.\n"
    "\n"
    "{captions}"
)

_DEFAULTS = {
    "diversity_and_text": DIVERSITY_AND_TEXT,
    "content_variation": CONTENT_VARIATION,
    "clip_caption": CLIP_CAPTION,
    "refine_caption": REFINE_CAPTION,
    "compose_captions": COMPOSE_CAPTIONS,
}


def get_prompt(name: str, prompt_dir: str = "") -> str:
    if name not in _DEFAULTS:
        raise KeyError(f"unknown prompt {name!r}")
    if prompt_dir:
        override = Path(prompt_dir) / f"{name}.txt"
        if override.exists():
            return override.read_text(encoding="utf-8")
    return _DEFAULTS[name]
