"""Motion gate: threshold on the spatiotemporal mean optical-flow magnitude.

The built-in estimator is an exhaustive SAD block matcher on BT.601 luma
(16 px blocks, +/-24 px search): no external model needed, deterministic,
and fast enough because candidates are scanned in ascending |u|+|v| order
with early abort. Production deployments can swap in a neural estimator
through the external-command protocol.
"""

from __future__ import annotations

import shlex
import struct
import subprocess
from dataclasses import dataclass
from functools import lru_cache
from typing import Protocol

import numba
import numpy as np

from .config import PipelineConfig
from .errors import CurationError, FormatError, SamplingError, ValidationError
from .frames import FrameSequence, fps_sample_indices, frameseq_bytes, resize, to_gray
from .records import FilterVerdict

BLOCK_SIZE = 16
SEARCH_RADIUS = 24


@dataclass(frozen=True)
class FlowField:
    u: np.ndarray  # (h, w) float32 horizontal displacement in px
    v: np.ndarray  # (h, w) float32 vertical displacement in px

    def __post_init__(self):
        if self.u.shape != self.v.shape:
            raise ValidationError("u and v planes must have the same shape")
        if not (np.isfinite(self.u).all() and np.isfinite(self.v).all()):
            raise ValidationError("flow values must be finite")

    @property
    def width(self) -> int:
        return int(self.u.shape[1])

    @property
    def height(self) -> int:
        return int(self.u.shape[0])

    def mean_magnitude(self) -> float:
        return float(np.sqrt(self.u.astype(np.float64) ** 2 + self.v.astype(np.float64) ** 2).mean())


class FlowEstimator(Protocol):
    name: str

    def estimate(self, prev: np.ndarray, cur: np.ndarray) -> FlowField: ...


@lru_cache(maxsize=8)
def _sorted_candidates(search: int) -> tuple[np.ndarray, np.ndarray]:
    """All displacements in the search box, ordered by (|u|+|v|, u, v).

    Scanning in this order makes the strictly-less SAD comparison implement
    the documented tie-break for free, and lets most candidates abort early
    once a low-cost match has been seen.
    """
    rng = np.arange(-search, search + 1, dtype=np.int32)
    u, v = np.meshgrid(rng, rng, indexing="xy")
    u, v = u.ravel(), v.ravel()
    order = np.lexsort((v, u, np.abs(u) + np.abs(v)))
    return np.ascontiguousarray(u[order]), np.ascontiguousarray(v[order])


def _anchors(dim: int, block: int) -> np.ndarray:
    """Block anchor offsets covering [0, dim); the last one is clamped so
    a non-multiple tail is still matched against real pixels."""
    a = list(range(0, dim - block + 1, block))
    if a[-1] + block < dim:
        a.append(dim - block)
    return np.asarray(a, dtype=np.int64)


@numba.njit(cache=True, nogil=True)
def _match_kernel(prev, cur, anchors_y, anchors_x, cand_u, cand_v, block):  # pragma: no cover
    height, width = prev.shape
    nby = anchors_y.shape[0]
    nbx = anchors_x.shape[0]
    out_u = np.zeros((nby, nbx), dtype=np.int32)
    out_v = np.zeros((nby, nbx), dtype=np.int32)
    for bi in range(nby):
        y0 = anchors_y[bi]
        for bj in range(nbx):
            x0 = anchors_x[bj]
            best = np.int64(1) << 60
            best_u = np.int32(0)
            best_v = np.int32(0)
            for c in range(cand_u.shape[0]):
                du = cand_u[c]
                dv = cand_v[c]
                ys = y0 + dv
                xs = x0 + du
                if ys < 0 or xs < 0 or ys + block > height or xs + block > width:
                    continue
                sad = np.int64(0)
                for r in range(block):
                    for col in range(block):
                        d = np.int64(prev[y0 + r, x0 + col]) - np.int64(cur[ys + r, xs + col])
                        sad += d if d >= 0 else -d
                    if sad > best:
                        break
                if sad < best:
                    best = sad
                    best_u = du
                    best_v = dv
            out_u[bi, bj] = best_u
            out_v[bi, bj] = best_v
    return out_u, out_v


def block_match_flow(
    prev: np.ndarray,
    cur: np.ndarray,
    block: int = BLOCK_SIZE,
    search: int = SEARCH_RADIUS,
) -> FlowField:
    """Exhaustive SAD block matching between two RGB24 frames.

    Each block's winning displacement is replicated to all of its pixels;
    ties break toward the smallest |u|+|v|, then smallest u, then v.
    """
    if prev.shape != cur.shape:
        raise ValidationError(f"frame shapes differ: {prev.shape} vs {cur.shape}")
    height, width = prev.shape[:2]
    if height < block or width < block:
        raise ValidationError(f"frames ({width}x{height}) are smaller than one {block}px block")
    cand_u, cand_v = _sorted_candidates(search)
    ay = _anchors(height, block)
    ax = _anchors(width, block)
    bu, bv = _match_kernel(
        np.ascontiguousarray(to_gray(prev)),
        np.ascontiguousarray(to_gray(cur)),
        ay,
        ax,
        cand_u,
        cand_v,
        block,
    )
    row_map = np.minimum(np.arange(height) // block, len(ay) - 1)
    col_map = np.minimum(np.arange(width) // block, len(ax) - 1)
    return FlowField(
        u=bu[np.ix_(row_map, col_map)].astype(np.float32),
        v=bv[np.ix_(row_map, col_map)].astype(np.float32),
    )


class BlockMatchEstimator:
    """Built-in estimator; deterministic and dependency-free."""

    def __init__(self, block: int = BLOCK_SIZE, search: int = SEARCH_RADIUS):
        self.block = block
        self.search = search
        self.name = f"blockmatch-b{block}-s{search}"

    def estimate(self, prev: np.ndarray, cur: np.ndarray) -> FlowField:
        return block_match_flow(prev, cur, block=self.block, search=self.search)


class CommandFlowEstimator:
    """External estimator: feed a 2-frame FRAMESEQ on stdin, read a flow grid.

    The child must write u32 width, u32 height, then width*height
    little-endian f32 (u, v) pairs row-major, and exit 0.
    """

    def __init__(self, template: str):
        self.template = template
        self.name = f"cmd:{template}"

    def estimate(self, prev: np.ndarray, cur: np.ndarray) -> FlowField:
        height, width = prev.shape[:2]
        seq = FrameSequence(
            width=width, height=height, fps=1.0, frames=np.stack([prev, cur])
        )
        args = shlex.split(self.template)
        try:
            proc = subprocess.run(args, input=frameseq_bytes(seq), capture_output=True)
        except OSError as exc:
            raise CurationError(f"cannot launch flow estimator {args[0]!r}: {exc}") from exc
        if proc.returncode != 0:
            tail = proc.stderr.decode("utf-8", errors="replace")[-2000:]
            raise CurationError(f"flow estimator exited {proc.returncode}: {tail}")
        out = proc.stdout
        if len(out) < 8:
            raise FormatError("flow output shorter than its header")
        fw, fh = struct.unpack_from("<II", out, 0)
        expected = 8 + fw * fh * 2 * 4
        if len(out) != expected:
            raise FormatError(f"flow payload is {len(out)} bytes, expected {expected}")
        grid = np.frombuffer(out, dtype="<f4", offset=8).reshape(fh, fw, 2)
        return FlowField(u=grid[..., 0].copy(), v=grid[..., 1].copy())


def make_estimator(spec: str) -> FlowEstimator:
    if spec == "builtin":
        return BlockMatchEstimator()
    if spec.startswith("cmd:"):
        return CommandFlowEstimator(spec[4:])
    raise ValidationError(f"unknown flow estimator {spec!r}", field="flow_estimator")


def mean_flow_magnitude(seq: FrameSequence, est: FlowEstimator, cfg: PipelineConfig) -> float:
    """Mean of sqrt(u^2+v^2) over every pixel of every sampled pair,
    computed at the configured flow resolution."""
    idx = fps_sample_indices(seq.frame_count, seq.fps, cfg.flow_fps)
    if len(idx) < 2:
        raise SamplingError(
            f"need at least 2 frames sampled at {cfg.flow_fps} fps, got {len(idx)}"
        )
    frames = [resize(seq.frames[i], cfg.flow_width, cfg.flow_height) for i in idx]
    total = 0.0
    pairs = len(frames) - 1
    for k in range(pairs):
        total += est.estimate(frames[k], frames[k + 1]).mean_magnitude()
    return total / pairs


def motion_verdict(seq: FrameSequence, est: FlowEstimator, cfg: PipelineConfig) -> FilterVerdict:
    """Pass iff the mean flow magnitude reaches cfg.flow_threshold."""
    try:
        mean = mean_flow_magnitude(seq, est, cfg)
    except CurationError as exc:
        return FilterVerdict(
            stage="motion", outcome="error", detail=f"estimator={est.name}: {exc}"
        )
    outcome = "pass" if mean >= cfg.flow_threshold else "reject"
    return FilterVerdict(
        stage="motion",
        outcome=outcome,
        score=mean,
        detail=f"estimator={est.name} threshold={cfg.flow_threshold}",
    )
