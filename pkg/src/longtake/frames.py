"""Raw frame sequences: the FRAMESEQ container, sampling, resizing, HSV.

All pixel data is RGB24, row-major, held as uint8 numpy arrays of shape
(frames, height, width, 3). Decoding is delegated to an external command
that writes a FRAMESEQ stream to stdout:

    magic "FSQ1" | u32 width | u32 height | u32 fps_num | u32 fps_den
    | u64 frame_count | frame_count * width*height*3 bytes RGB24

(all integers little-endian, frames in order).
"""

from __future__ import annotations

import io
import shlex
import struct
import subprocess
from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache

import numpy as np

from .errors import DecodeError, FormatError, SamplingError

FRAMESEQ_MAGIC = b"FSQ1"
_HEADER = struct.Struct("<IIIIQ")


def round_half_up(x):
    """Round with .5 going up, elementwise for arrays."""
    return np.floor(np.asarray(x, dtype=np.float64) + 0.5)


@dataclass(frozen=True)
class FrameSequence:
    width: int
    height: int
    fps: float
    frames: np.ndarray  # (n, height, width, 3) uint8

    def __post_init__(self):
        if self.fps <= 0:
            raise FormatError("fps must be positive")
        f = self.frames
        if f.ndim != 4 or f.shape[1:] != (self.height, self.width, 3) or f.dtype != np.uint8:
            raise FormatError(
                f"frames must be (n, {self.height}, {self.width}, 3) uint8, got "
                f"{f.shape} {f.dtype}"
            )

    @property
    def frame_count(self) -> int:
        return int(self.frames.shape[0])

    @property
    def duration_s(self) -> float:
        return self.frame_count / self.fps

    def frame(self, i: int) -> np.ndarray:
        return self.frames[i]


@dataclass(frozen=True)
class HsvFrame:
    """Per-pixel (h, s, v), each channel in [0, 255].

    Hue is mapped from [0deg, 360deg) onto the circular range [0, 256) so
    that circular deltas can be taken modulo 256, then stored in [0, 255].
    """

    data: np.ndarray  # (height, width, 3) uint8

    @property
    def width(self) -> int:
        return int(self.data.shape[1])

    @property
    def height(self) -> int:
        return int(self.data.shape[0])


def write_frameseq(seq: FrameSequence, stream) -> None:
    frac = Fraction(seq.fps).limit_denominator(1_000_000)
    stream.write(FRAMESEQ_MAGIC)
    stream.write(
        _HEADER.pack(seq.width, seq.height, frac.numerator, frac.denominator, seq.frame_count)
    )
    stream.write(np.ascontiguousarray(seq.frames).tobytes())


def frameseq_bytes(seq: FrameSequence) -> bytes:
    buf = io.BytesIO()
    write_frameseq(seq, buf)
    return buf.getvalue()


def read_frameseq(data: bytes) -> FrameSequence:
    if data[:4] != FRAMESEQ_MAGIC:
        raise FormatError(f"bad magic {data[:4]!r}, expected {FRAMESEQ_MAGIC!r}")
    if len(data) < 4 + _HEADER.size:
        raise FormatError("truncated FRAMESEQ header")
    width, height, fps_num, fps_den, count = _HEADER.unpack_from(data, 4)
    if width == 0 or height == 0 or fps_num == 0 or fps_den == 0:
        raise FormatError("FRAMESEQ header has zero dimension or fps")
    expected = 4 + _HEADER.size + count * width * height * 3
    if len(data) < expected:
        have = (len(data) - 4 - _HEADER.size) // (width * height * 3)
        raise FormatError(f"truncated payload: header claims {count} frames, {have} present")
    if len(data) > expected:
        raise FormatError(f"{len(data) - expected} trailing bytes after FRAMESEQ payload")
    frames = (
        np.frombuffer(data, dtype=np.uint8, offset=4 + _HEADER.size)
        .reshape(count, height, width, 3)
        .copy()
    )
    return FrameSequence(width=width, height=height, fps=fps_num / fps_den, frames=frames)


def decode(uri: str, decoder_cmd: str) -> FrameSequence:
    """Run the configured decoder on a uri and parse its FRAMESEQ output."""
    if not decoder_cmd:
        raise DecodeError("no decoder command configured")
    args = [tok.replace("{input}", uri) for tok in shlex.split(decoder_cmd)]
    try:
        proc = subprocess.run(args, capture_output=True)
    except OSError as exc:
        raise DecodeError(f"cannot launch decoder {args[0]!r}: {exc}") from exc
    if proc.returncode != 0:
        tail = proc.stderr.decode("utf-8", errors="replace")[-2000:]
        raise DecodeError(f"decoder exited {proc.returncode} for {uri}: {tail}")
    return read_frameseq(proc.stdout)


def fps_sample_indices(frame_count: int, fps: float, target_fps: float) -> np.ndarray:
    """Source indices floor(k * fps / target_fps) for k = 0, 1, ..."""
    if target_fps <= 0:
        raise SamplingError("target_fps must be positive")
    if target_fps > fps:
        raise SamplingError(f"target_fps {target_fps} exceeds source fps {fps}")
    ratio = fps / target_fps
    ks = np.arange(int(np.ceil(frame_count / ratio)) + 1)
    idx = np.floor(ks * ratio + 1e-9).astype(np.int64)
    return idx[idx < frame_count]


def sample_at_fps(seq: FrameSequence, target_fps: float) -> FrameSequence:
    """Re-time a sequence by index striding; requires target_fps <= seq.fps."""
    idx = fps_sample_indices(seq.frame_count, seq.fps, target_fps)
    return FrameSequence(
        width=seq.width, height=seq.height, fps=target_fps, frames=seq.frames[idx]
    )


def uniform_indices(frame_count: int, n: int) -> list[int]:
    if frame_count < 1:
        raise SamplingError("cannot sample from an empty sequence")
    if n < 1:
        raise SamplingError("must sample at least one frame")
    if n == 1:
        return [int(round_half_up((frame_count - 1) / 2))]
    step = (frame_count - 1) / (n - 1)
    return [int(round_half_up(i * step)) for i in range(n)]


def sample_uniform(seq: FrameSequence, n: int) -> list[np.ndarray]:
    """n frames evenly spread over the sequence, endpoints included."""
    return [seq.frames[i] for i in uniform_indices(seq.frame_count, n)]


@lru_cache(maxsize=64)
def _box_weights(n_src: int, n_dst: int) -> np.ndarray:
    """Row-stochastic matrix averaging source pixels into target pixels.

    Target pixel j covers the source interval [j*r, (j+1)*r), r = src/dst;
    each source pixel contributes its overlap fraction.
    """
    weights = np.zeros((n_dst, n_src), dtype=np.float64)
    r = n_src / n_dst
    for j in range(n_dst):
        lo = j * r
        hi = (j + 1) * r
        for i in range(int(np.floor(lo)), min(int(np.ceil(hi)), n_src)):
            overlap = min(hi, i + 1) - max(lo, i)
            if overlap > 0:
                weights[j, i] = overlap / r
    return weights


def resize(frame: np.ndarray, new_w: int, new_h: int) -> np.ndarray:
    """Deterministic box-filter resize of one RGB24 frame."""
    if new_w <= 0 or new_h <= 0:
        raise ValueError(f"target dimensions must be positive, got {new_w}x{new_h}")
    h, w = frame.shape[:2]
    if (w, h) == (new_w, new_h):
        return frame
    wy = _box_weights(h, new_h)
    wx = _box_weights(w, new_w)
    tmp = np.tensordot(wy, frame.astype(np.float64), axes=([1], [0]))  # (new_h, w, 3)
    out = np.tensordot(tmp, wx, axes=([1], [1]))  # (new_h, 3, new_w)
    out = np.moveaxis(out, 1, 2)
    return np.clip(round_half_up(out), 0, 255).astype(np.uint8)


def resize_sequence(seq: FrameSequence, new_w: int, new_h: int) -> FrameSequence:
    if (seq.width, seq.height) == (new_w, new_h):
        return seq
    frames = np.stack([resize(f, new_w, new_h) for f in seq.frames])
    return FrameSequence(width=new_w, height=new_h, fps=seq.fps, frames=frames)


def to_hsv(frame: np.ndarray) -> HsvFrame:
    """Standard RGB -> HSV with all three channels scaled to [0, 255].

    Hue uses a 256/360 scale (so the channel wraps cleanly mod 256);
    saturation and value are rounded half-up into [0, 255].
    """
    rgb = frame.astype(np.float64)
    r, g, b = rgb[..., 0], rgb[..., 1], rgb[..., 2]
    mx = rgb.max(axis=-1)
    mn = rgb.min(axis=-1)
    delta = mx - mn

    with np.errstate(divide="ignore", invalid="ignore"):
        hue = np.select(
            [delta == 0, mx == r, mx == g],
            [
                0.0,
                60.0 * (((g - b) / delta) % 6.0),
                60.0 * ((b - r) / delta + 2.0),
            ],
            default=60.0 * ((r - g) / delta + 4.0),
        )
        sat = np.where(mx == 0, 0.0, 255.0 * delta / np.where(mx == 0, 1.0, mx))

    out = np.empty(frame.shape, dtype=np.uint8)
    out[..., 0] = (round_half_up(hue * 256.0 / 360.0) % 256).astype(np.uint8)
    out[..., 1] = round_half_up(sat).astype(np.uint8)
    out[..., 2] = mx.astype(np.uint8)
    return HsvFrame(data=out)


def to_gray(frame: np.ndarray) -> np.ndarray:
    """BT.601 luma as int16, used by the block matcher."""
    rgb = frame.astype(np.float64)
    luma = 0.299 * rgb[..., 0] + 0.587 * rgb[..., 1] + 0.114 * rgb[..., 2]
    return round_half_up(luma).astype(np.int16)


def frame_to_png(frame: np.ndarray) -> bytes:
    from PIL import Image  # deferred so the decode hot path skips it

    buf = io.BytesIO()
    Image.fromarray(frame, mode="RGB").save(buf, format="PNG", optimize=False)
    return buf.getvalue()


def png_to_frame(data: bytes) -> np.ndarray:
    from PIL import Image

    with Image.open(io.BytesIO(data)) as img:
        return np.asarray(img.convert("RGB"), dtype=np.uint8)
