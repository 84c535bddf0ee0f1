"""Deterministic synthetic videos from timed scene scripts.

A script is a JSON-able dict: width, height, fps, seed, and a list of
segments that tile [0, duration) without overlap. Segment kinds:

    solid        {color}
    fade         {from_color, to_color} linear in time
    moving_rect  {bg_color, rect_color, rect: [x, y, w, h], velocity: [vx, vy]}
    translate    {velocity: [vx, vy], grayscale?, blur?} wrap-around shift of
                 a seeded texture; velocity is px/frame
    noise        {base_color, amplitude} per-frame jitter

Hard cuts are just adjacent segments with different content. The same
script and seed always produce byte-identical output.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .errors import ValidationError
from .frames import FrameSequence, round_half_up

_KINDS = ("solid", "fade", "moving_rect", "translate", "noise")
_EPS = 1e-9


def _color(value, name: str) -> np.ndarray:
    arr = np.asarray(value, dtype=np.float64)
    if arr.shape != (3,) or arr.min() < 0 or arr.max() > 255:
        raise ValidationError(f"{name} must be three values in [0, 255]")
    return arr


def validate_script(script: dict) -> list[dict]:
    width, height, fps = script.get("width"), script.get("height"), script.get("fps")
    if not width or not height or width <= 0 or height <= 0:
        raise ValidationError("script width/height must be positive", field="width")
    if not fps or fps <= 0:
        raise ValidationError("script fps must be positive", field="fps")
    segments = script.get("segments") or []
    if not segments:
        raise ValidationError("script needs at least one segment", field="segments")
    segments = sorted(segments, key=lambda s: s["start_s"])
    cursor = 0.0
    for seg in segments:
        if seg.get("kind") not in _KINDS:
            raise ValidationError(f"unknown segment kind {seg.get('kind')!r}", field="segments")
        start, end = float(seg["start_s"]), float(seg["end_s"])
        if end <= start:
            raise ValidationError("segment end must be after start", field="segments")
        if start < cursor - _EPS:
            raise ValidationError(
                f"segment starting at {start}s overlaps the previous one", field="segments"
            )
        if abs(start - cursor) > _EPS:
            raise ValidationError(f"gap before segment at {start}s", field="segments")
        cursor = end
    return segments


def _circular_blur(texture: np.ndarray, radius: int) -> np.ndarray:
    """Box blur with wrap-around edges, so rolled copies stay seamless."""
    out = texture.astype(np.float64)
    for axis in (0, 1):
        acc = np.zeros_like(out)
        for off in range(-radius, radius + 1):
            acc += np.roll(out, off, axis=axis)
        out = acc / (2 * radius + 1)
    return np.clip(round_half_up(out), 0, 255).astype(np.uint8)


def _texture(seed, width: int, height: int, grayscale: bool, blur: int) -> np.ndarray:
    rng = np.random.default_rng(seed)
    if grayscale:
        plane = rng.integers(0, 256, size=(height, width), dtype=np.uint8)
        tex = np.repeat(plane[:, :, None], 3, axis=2)
    else:
        tex = rng.integers(0, 256, size=(height, width, 3), dtype=np.uint8)
    if blur > 0:
        tex = _circular_blur(tex, blur)
    return tex


def synth_video(script: dict) -> FrameSequence:
    segments = validate_script(script)
    width, height = int(script["width"]), int(script["height"])
    fps = float(script["fps"])
    seed = int(script.get("seed", 0))
    duration = float(segments[-1]["end_s"])
    frame_count = int(round(duration * fps))

    frames = np.zeros((frame_count, height, width, 3), dtype=np.uint8)
    textures: dict[int, np.ndarray] = {}
    seg_first_frame: dict[int, int] = {}

    for i in range(frame_count):
        t = i / fps
        seg_idx = len(segments) - 1
        for j, seg in enumerate(segments):
            if seg["start_s"] - _EPS <= t < seg["end_s"] - _EPS:
                seg_idx = j
                break
        seg = segments[seg_idx]
        local = i - seg_first_frame.setdefault(seg_idx, i)
        kind = seg["kind"]

        if kind == "solid":
            frames[i] = _color(seg["color"], "color").astype(np.uint8)
        elif kind == "fade":
            frac = (t - seg["start_s"]) / (seg["end_s"] - seg["start_s"])
            c0 = _color(seg["from_color"], "from_color")
            c1 = _color(seg["to_color"], "to_color")
            frames[i] = round_half_up(c0 + (c1 - c0) * frac).astype(np.uint8)
        elif kind == "moving_rect":
            frames[i] = _color(seg["bg_color"], "bg_color").astype(np.uint8)
            x, y, w, h = seg["rect"]
            vx, vy = seg["velocity"]
            rx = int(round_half_up(x + vx * local))
            ry = int(round_half_up(y + vy * local))
            x0, x1 = max(rx, 0), min(rx + w, width)
            y0, y1 = max(ry, 0), min(ry + h, height)
            if x0 < x1 and y0 < y1:
                frames[i][y0:y1, x0:x1] = _color(seg["rect_color"], "rect_color").astype(np.uint8)
        elif kind == "translate":
            # texture_key (int) lets consecutive segments move the same texture
            key = int(seg.get("texture_key", seg_idx))
            if key not in textures:
                textures[key] = _texture(
                    (seed, key),
                    width,
                    height,
                    grayscale=bool(seg.get("grayscale", True)),
                    blur=int(seg.get("blur", 4)),
                )
            vx, vy = seg["velocity"]
            dx = int(round_half_up(vx * local))
            dy = int(round_half_up(vy * local))
            frames[i] = np.roll(textures[key], (dy, dx), axis=(0, 1))
        elif kind == "noise":
            amp = int(seg.get("amplitude", 8))
            base = _color(seg.get("base_color", (128, 128, 128)), "base_color")
            rng = np.random.default_rng((seed, seg_idx, local))
            jitter = rng.integers(-amp, amp + 1, size=(height, width, 3))
            frames[i] = np.clip(base + jitter, 0, 255).astype(np.uint8)

    return FrameSequence(width=width, height=height, fps=fps, frames=frames)


def load_script(path: str | Path) -> dict:
    with open(path, "r", encoding="utf-8") as fh:
        return json.load(fh)


def save_script(script: dict, path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(script, fh, indent=2, sort_keys=True)
