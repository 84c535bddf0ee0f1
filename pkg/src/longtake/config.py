"""Pipeline configuration.

The config file is a flat ``key = value`` text file (full-line ``#``
comments, optional quotes around strings). Every unset key falls back to
its built-in default, so an empty file reproduces the standard curation
settings exactly.
"""

from __future__ import annotations

import dataclasses
import hashlib
from dataclasses import dataclass
from pathlib import Path

from .errors import ConfigError, ValidationError
from .records import canonical_json


@dataclass(frozen=True)
class PipelineConfig:
    # Ingest gate
    min_duration_s: float = 10.0
    # Scene-cut filter
    scenecut_fps: float = 0.5
    cutscene_threshold: float = 50.0
    min_scene_len_frames: int = 0
    # Motion filter
    flow_fps: float = 2.0
    flow_width: int = 960
    flow_height: int = 520
    flow_threshold: float = 20.0
    flow_estimator: str = "builtin"  # "builtin" or "cmd:<template>"
    # Semantic filter
    mllm_frames: int = 8
    # Captioning
    clip_len_s: float = 30.0
    grid_frames: int = 6
    grid_rows: int = 2
    grid_cols: int = 3
    # Orchestration
    worker_count: int = 1
    manifest_path: str = "manifest.jsonl"
    checkpoint_path: str = "checkpoint.json"
    decoder_cmd: str = ""
    max_inflight_requests: int = 4
    # Inference clients: "" (unset), "mock:<fixture path>", or an http(s) URL
    mllm_endpoint: str = ""
    vlm_endpoint: str = ""
    llm_endpoint: str = ""
    classifier_endpoint: str = ""
    mllm_model: str = "video-mllm"
    vlm_model: str = "image-vlm"
    llm_model: str = "text-llm"
    # Optional directory of prompt override files (see prompts module)
    prompt_dir: str = ""
    # Report histogram bins: fixed width up to a max, plus one overflow bin
    hist_duration_bin_s: float = 5.0
    hist_duration_max_s: float = 60.0
    hist_flow_bin: float = 10.0
    hist_flow_max: float = 120.0
    hist_word_bin: int = 10
    hist_word_max: int = 200

    def validate(self) -> None:
        positive = (
            "min_duration_s",
            "scenecut_fps",
            "cutscene_threshold",
            "flow_fps",
            "flow_width",
            "flow_height",
            "flow_threshold",
            "mllm_frames",
            "clip_len_s",
            "grid_frames",
            "grid_rows",
            "grid_cols",
            "worker_count",
            "max_inflight_requests",
            "hist_duration_bin_s",
            "hist_duration_max_s",
            "hist_flow_bin",
            "hist_flow_max",
            "hist_word_bin",
            "hist_word_max",
        )
        for name in positive:
            if getattr(self, name) <= 0:
                raise ValidationError("must be positive", field=name)
        if self.min_scene_len_frames < 0:
            raise ValidationError("must be >= 0", field="min_scene_len_frames")
        if self.grid_rows * self.grid_cols != self.grid_frames:
            raise ValidationError(
                f"grid_rows*grid_cols ({self.grid_rows}x{self.grid_cols}) must equal "
                f"grid_frames ({self.grid_frames})",
                field="grid_frames",
            )

    def digest(self) -> str:
        """Content hash used to guard checkpoint resume.

        worker_count is excluded: rescaling the pool never changes results.
        """
        data = dataclasses.asdict(self)
        data.pop("worker_count")
        return hashlib.sha256(canonical_json(data).encode("utf-8")).hexdigest()


_FIELD_TYPES = {f.name: f.type for f in dataclasses.fields(PipelineConfig)}


def _parse_value(raw: str, name: str, lineno: int):
    ftype = _FIELD_TYPES[name]
    if len(raw) >= 2 and raw[0] == raw[-1] and raw[0] in "'\"":
        raw = raw[1:-1]
    if ftype == "str":
        return raw
    try:
        if ftype == "int":
            return int(raw)
        if ftype == "float":
            return float(raw)
    except ValueError:
        raise ConfigError(f"cannot parse {raw!r} as {ftype} for key {name!r}", line=lineno)
    raise ConfigError(f"unsupported field type for key {name!r}", line=lineno)


def parse_config(text: str) -> PipelineConfig:
    values = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        if "=" not in stripped:
            raise ConfigError(f"expected 'key = value', got {stripped!r}", line=lineno)
        key, _, raw = stripped.partition("=")
        key = key.strip()
        raw = raw.strip()
        if key not in _FIELD_TYPES:
            raise ConfigError(f"unknown config key {key!r}", line=lineno)
        values[key] = _parse_value(raw, key, lineno)
    cfg = PipelineConfig(**values)
    cfg.validate()
    return cfg


def load_config(path: str | Path) -> PipelineConfig:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc}")
    return parse_config(text)
