import sys

import numpy as np
import pytest

from longtake.config import PipelineConfig
from longtake.errors import ValidationError
from longtake.motion import (
    BlockMatchEstimator,
    CommandFlowEstimator,
    block_match_flow,
    make_estimator,
    mean_flow_magnitude,
    motion_verdict,
)
from longtake.synth import synth_video

from corpus import ConstantFlow, pan_script, solid_script


def texture(w, h, seed=0, blur=4):
    seq = synth_video(pan_script(2.0, velocity=(0, 0), width=w, height=h, seed=seed,
                                 blur=blur, fps=1.0))
    return seq.frames[0]


def test_identical_frames_zero_field():
    frame = texture(96, 64)
    field = block_match_flow(frame, frame)
    assert field.mean_magnitude() == 0.0
    assert np.all(field.u == 0) and np.all(field.v == 0)


def test_global_shift_found_by_every_reachable_block():
    prev = texture(128, 128, seed=3)
    cur = np.roll(prev, 8, axis=1)
    field = block_match_flow(prev, cur)
    # blocks whose +/-24 window can reach (8, 0): anchors with x0+8+16 <= 128
    assert np.all(field.u[:, :112] == 8)
    assert np.all(field.v[:, :112] == 0)
    assert 0.85 * 8 <= field.mean_magnitude() <= 1.15 * 8


def test_shift_beyond_window_is_clamped():
    rng = np.random.default_rng(3)
    prev = rng.integers(0, 256, (64, 64, 3)).astype(np.uint8)
    cur = np.roll(prev, 30, axis=1)
    assert block_match_flow(prev, cur).mean_magnitude() <= 24 * np.sqrt(2)


def test_frames_smaller_than_block_rejected():
    tiny = np.zeros((8, 8, 3), np.uint8)
    with pytest.raises(ValidationError, match="block"):
        block_match_flow(tiny, tiny)


@pytest.mark.parametrize("shift", [(20, 0), (0, 20), (12, 16), (3, 4), (15, 15)])
def test_shift_fidelity_within_15_percent(shift):
    prev = texture(512, 512, seed=7)
    cur = np.roll(prev, (shift[1], shift[0]), axis=(0, 1))
    magnitude = float(np.hypot(*shift))
    mean = block_match_flow(prev, cur).mean_magnitude()
    assert 0.85 * magnitude <= mean <= 1.15 * magnitude


def test_rotation_equivariance_on_interior_blocks():
    prev = texture(96, 96, seed=5)
    cur = np.roll(prev, (2, 4), axis=(0, 1))  # displacement (u, v) = (4, 2)
    field = block_match_flow(prev, cur)
    rot = block_match_flow(np.rot90(prev).copy(), np.rot90(cur).copy())
    # one block ring stripped: rotation moves the clamped border around
    assert np.all(field.u[16:-16, 16:-16] == 4)
    assert np.all(field.v[16:-16, 16:-16] == 2)
    assert np.all(rot.u[16:-16, 16:-16] == 2)
    assert np.all(rot.v[16:-16, 16:-16] == -4)


# -- mean flow + verdict --------------------------------------------------------


def flow_cfg(script, **kw):
    return PipelineConfig(
        flow_width=script["width"], flow_height=script["height"], flow_fps=1.0, **kw
    )


def test_static_video_means_exactly_zero():
    script = solid_script(10.0, fps=1.0, width=64, height=64)
    seq = synth_video(script)
    assert mean_flow_magnitude(seq, BlockMatchEstimator(), flow_cfg(script)) == 0.0


def test_15px_translation_measured_within_15_percent():
    script = pan_script(10.0, velocity=(9, 12), width=320, height=256, fps=1.0, seed=2)
    seq = synth_video(script)
    mean = mean_flow_magnitude(seq, BlockMatchEstimator(), flow_cfg(script))
    assert 12.75 <= mean <= 17.25


def test_half_static_half_moving_averages_out():
    script = {
        "width": 320, "height": 256, "fps": 1.0, "seed": 4,
        "segments": [
            {"kind": "translate", "start_s": 0.0, "end_s": 5.0, "velocity": [0, 0],
             "texture_key": 7},
            {"kind": "translate", "start_s": 5.0, "end_s": 11.0, "velocity": [18, 24],
             "texture_key": 7},
        ],
    }
    seq = synth_video(script)
    mean = mean_flow_magnitude(seq, BlockMatchEstimator(), flow_cfg(script))
    assert 12.75 <= mean <= 17.25


def test_too_few_sampled_frames_is_error_verdict():
    script = solid_script(1.0, fps=1.0, width=64, height=64)
    seq = synth_video(script)
    verdict = motion_verdict(seq, BlockMatchEstimator(), flow_cfg(script))
    assert verdict.outcome == "error"


def test_static_video_rejected_at_zero():
    script = solid_script(10.0, fps=1.0, width=64, height=64)
    verdict = motion_verdict(synth_video(script), BlockMatchEstimator(), flow_cfg(script))
    assert verdict.outcome == "reject"
    assert verdict.score == 0.0


def test_30px_translation_passes():
    script = pan_script(10.0, velocity=(18, 24), width=384, height=384, fps=1.0, seed=6)
    verdict = motion_verdict(synth_video(script), BlockMatchEstimator(), flow_cfg(script))
    assert verdict.outcome == "pass"
    assert 25.5 <= verdict.score <= 34.5


def test_10px_translation_rejected():
    script = pan_script(10.0, velocity=(6, 8), width=384, height=384, fps=1.0, seed=6)
    verdict = motion_verdict(synth_video(script), BlockMatchEstimator(), flow_cfg(script))
    assert verdict.outcome == "reject"
    assert verdict.score < 20.0


@pytest.mark.parametrize("magnitude,expected", [(19.9, "reject"), (20.0, "pass"), (25.0, "pass")])
def test_verdict_is_estimator_independent(magnitude, expected):
    script = solid_script(10.0, fps=1.0, width=64, height=64)
    seq = synth_video(script)
    verdict = motion_verdict(seq, ConstantFlow(magnitude, 0.0), flow_cfg(script))
    assert verdict.outcome == expected
    assert verdict.score == pytest.approx(magnitude)


# -- external estimator protocol ------------------------------------------------


STUB = """
import struct, sys
data = sys.stdin.buffer.read()
assert data[:4] == b"FSQ1"
w, h = struct.unpack_from("<II", data, 4)
sys.stdout.buffer.write(struct.pack("<II", w, h))
sys.stdout.buffer.write(struct.pack(f"<{w*h*2}f", *([3.0, 4.0] * (w * h))))
"""


def test_command_estimator_round_trip(tmp_path):
    stub = tmp_path / "stub.py"
    stub.write_text(STUB)
    est = CommandFlowEstimator(f"{sys.executable} {stub}")
    frame = texture(32, 32)
    field = est.estimate(frame, frame)
    assert field.width == 32 and field.height == 32
    assert field.mean_magnitude() == pytest.approx(5.0)


def test_command_estimator_failure_becomes_error_verdict(tmp_path):
    script = solid_script(10.0, fps=1.0, width=64, height=64)
    seq = synth_video(script)
    est = CommandFlowEstimator(f"{sys.executable} -c 'import sys; sys.exit(2)'")
    verdict = motion_verdict(seq, est, flow_cfg(script))
    assert verdict.outcome == "error"
    assert "exited 2" in verdict.detail


def test_make_estimator_spec_strings(tmp_path):
    assert make_estimator("builtin").name.startswith("blockmatch")
    assert make_estimator("cmd:foo {x}").name == "cmd:foo {x}"
    with pytest.raises(ValidationError):
        make_estimator("neural")
