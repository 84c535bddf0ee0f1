"""End-to-end orchestration: ingest, stage execution, checkpoint/resume.

Videos move through the stage sequence duration -> scenecut -> motion ->
semantic -> caption (cheapest first, so model calls are spent only on
survivors), one task per video. The manifest is the source of truth for
resume; the checkpoint adds ingest offsets and a config digest guard.
"""

from __future__ import annotations

import dataclasses
import json
import logging
import multiprocessing
from concurrent.futures import ProcessPoolExecutor, as_completed
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Optional, Sequence

from . import captions, scenecut, semantic, stats
from .clients import ClientBundle, MultimodalClient, bundle_from_config
from .config import PipelineConfig
from .errors import ClientError, ConfigError, CurationError, ValidationError
from .frames import FrameSequence, decode
from .manifest import ManifestWriter, read_manifest
from .motion import FlowEstimator, make_estimator, motion_verdict
from .records import (
    STAGE_ORDER,
    FilterVerdict,
    SOURCE_DATASETS,
    VideoRecord,
    now_iso,
)

logger = logging.getLogger(__name__)

_PIXEL_STAGES = ("scenecut", "motion", "semantic", "caption")


@dataclass
class RunCheckpoint:
    manifest_path: str
    config_digest: str
    source_offsets: dict[str, int] = field(default_factory=dict)
    updated_at: str = field(default_factory=now_iso)

    def save(self, path: str | Path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(dataclasses.asdict(self), fh, indent=2)

    @classmethod
    def load(cls, path: str | Path) -> "RunCheckpoint":
        with open(path, "r", encoding="utf-8") as fh:
            data = json.load(fh)
        return cls(
            manifest_path=data["manifest_path"],
            config_digest=data["config_digest"],
            source_offsets=dict(data.get("source_offsets", {})),
            updated_at=data.get("updated_at", ""),
        )


@dataclass
class JobQueue:
    """Dispatcher bookkeeping; the three live sets stay disjoint."""

    pending: list[str] = field(default_factory=list)
    in_flight: set[str] = field(default_factory=set)
    done: set[str] = field(default_factory=set)
    errors: set[str] = field(default_factory=set)

    def take(self) -> Optional[str]:
        if not self.pending:
            return None
        vid = self.pending.pop(0)
        self.in_flight.add(vid)
        return vid

    def finish(self, vid: str, errored: bool) -> None:
        self.in_flight.discard(vid)
        (self.errors if errored else self.done).add(vid)

    def check_invariants(self) -> None:
        pending = set(self.pending)
        for a, b in (
            (pending, self.in_flight),
            (pending, self.done | self.errors),
            (self.in_flight, self.done | self.errors),
        ):
            if a & b:
                raise ValidationError(f"job sets overlap: {sorted(a & b)[:5]}")


@dataclass
class IngestStats:
    lines: int = 0
    ingested: int = 0
    existing: int = 0
    deduped: int = 0
    malformed: int = 0


@dataclass
class RunResult:
    ingest: IngestStats
    processed: int = 0
    passed: int = 0
    rejected: int = 0
    errored: int = 0
    pending_after: int = 0
    interrupted: bool = False

    @property
    def exit_code(self) -> int:
        return 3 if (self.errored > 0 or self.interrupted) else 0


_REQUIRED_SOURCE_FIELDS = ("id", "source_dataset", "uri", "duration_s", "fps", "width", "height")


def parse_source_line(line: str) -> VideoRecord:
    data = json.loads(line)
    for name in _REQUIRED_SOURCE_FIELDS:
        if name not in data:
            raise ValidationError(f"missing field {name!r}", field=name)
    if data["source_dataset"] not in SOURCE_DATASETS:
        raise ValidationError(
            f"unknown source_dataset {data['source_dataset']!r}", field="source_dataset"
        )
    return VideoRecord(
        id=str(data["id"]),
        source_dataset=data["source_dataset"],
        uri=str(data["uri"]),
        duration_s=float(data["duration_s"]),
        fps=float(data["fps"]),
        width=int(data["width"]),
        height=int(data["height"]),
        original_caption=data.get("original_caption"),
    )


def ingest(
    source_path: str | Path,
    cfg: PipelineConfig,
    writer: ManifestWriter,
    manifest_ids: set[str],
    session_seen: Optional[set[str]] = None,
    start_offset: int = 0,
) -> IngestStats:
    """Append one duration-gated record per new source line.

    The duration gate is inclusive: exactly min_duration_s passes. Ids
    already in the manifest are skipped (resume); ids repeated across the
    source lists of this session are counted as dedup hits.
    """
    session_seen = session_seen if session_seen is not None else set()
    result = IngestStats()
    with open(source_path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if lineno <= start_offset or not line.strip():
                continue
            result.lines += 1
            try:
                rec = parse_source_line(line)
            except (json.JSONDecodeError, ValidationError, ValueError) as exc:
                result.malformed += 1
                logger.warning("%s line %d skipped: %s", source_path, lineno, exc)
                continue
            if rec.id in session_seen:
                result.deduped += 1
                continue
            session_seen.add(rec.id)
            if rec.id in manifest_ids:
                result.existing += 1
                continue
            manifest_ids.add(rec.id)
            if rec.duration_s >= cfg.min_duration_s:
                verdict = FilterVerdict(
                    stage="duration",
                    outcome="pass",
                    score=rec.duration_s,
                    detail=f">= {cfg.min_duration_s}s",
                )
            else:
                verdict = FilterVerdict(
                    stage="duration",
                    outcome="reject",
                    score=rec.duration_s,
                    detail=f"shorter than {cfg.min_duration_s}s",
                )
            writer.append(rec.with_stage(verdict))
            result.ingested += 1
    return result


class _BudgetedClient:
    """Caps concurrent in-flight completions across every worker."""

    def __init__(self, inner: MultimodalClient, budget):
        self._inner = inner
        self._budget = budget
        self.name = inner.name

    def complete(self, images, prompt):
        with self._budget:
            return self._inner.complete(images, prompt)


def _apply_budget(bundle: ClientBundle, budget) -> ClientBundle:
    if budget is None:
        return bundle
    wrap = lambda c: _BudgetedClient(c, budget) if c is not None else None
    return ClientBundle(
        mllm=wrap(bundle.mllm),
        vlm=wrap(bundle.vlm),
        llm=wrap(bundle.llm),
        classifier=bundle.classifier,
    )


def process_video(
    rec: VideoRecord,
    cfg: PipelineConfig,
    writer: ManifestWriter,
    bundle: ClientBundle,
    estimator: FlowEstimator,
    last_stage: Optional[str] = None,
) -> str:
    """Drive one video到 a terminal state; returns passed/rejected/errored/deferred.

    Any exception is confined to this video as an error verdict, so a bad
    record can never take down the run.
    """
    seq: Optional[FrameSequence] = None
    stage = rec.next_stage()
    try:
        while stage is not None:
            if last_stage is not None and STAGE_ORDER.index(stage) > STAGE_ORDER.index(last_stage):
                return "deferred"
            if stage in _PIXEL_STAGES and seq is None:
                seq = decode(rec.uri, cfg.decoder_cmd)

            if stage == "scenecut":
                verdict = scenecut.detect_cuts(seq, cfg)
            elif stage == "motion":
                verdict = motion_verdict(seq, estimator, cfg)
            elif stage == "semantic":
                if bundle.mllm is None:
                    raise ConfigError("semantic stage requires an mllm endpoint")
                verdict = semantic.semantic_verdict(seq, bundle.mllm, cfg)
            elif stage == "caption":
                if bundle.vlm is None or bundle.llm is None:
                    raise ConfigError("caption stage requires vlm and llm endpoints")

                def persist_partial(partial):
                    writer.append(replace(rec, caption=partial, updated_at=now_iso()))

                try:
                    record = captions.caption_video(
                        seq, bundle.vlm, bundle.llm, cfg, prior=rec.caption,
                        on_clip=persist_partial,
                    )
                except (ClientError, ValidationError) as exc:
                    rec = rec.with_stage(
                        FilterVerdict(stage="caption", outcome="error", detail=str(exc))
                    )
                    writer.append(rec)
                    return "errored"
                rec = replace(rec, caption=record)
                rec = _classify(rec, bundle)
                verdict = FilterVerdict(
                    stage="caption",
                    outcome="pass",
                    detail=f"{len(record.clip_captions)} clip(s), {record.word_count} words",
                )
            else:
                raise CurationError(f"stage {stage} cannot run here")

            rec = rec.with_stage(verdict)
            writer.append(rec)
            if verdict.outcome == "reject":
                return "rejected"
            if verdict.outcome == "error":
                return "errored"
            stage = rec.next_stage()
        return "passed"
    except Exception as exc:  # noqa: BLE001 - worker isolation boundary
        failed = stage or "caption"
        logger.exception("video %s failed at stage %s", rec.id, failed)
        rec = rec.with_stage(
            FilterVerdict(stage=failed, outcome="error", detail=f"{type(exc).__name__}: {exc}")
        )
        writer.append(rec)
        return "errored"


def _classify(rec: VideoRecord, bundle: ClientBundle) -> VideoRecord:
    """Attach the top-1 category; classifier failures leave it unset."""
    if bundle.classifier is None or rec.caption is None:
        return rec
    try:
        label = stats.classify_category(rec.caption.final_caption, bundle.classifier)
    except (ClientError, ValidationError) as exc:
        logger.warning("video %s left uncategorized: %s", rec.id, exc)
        return rec
    return replace(rec, category=label)


# Worker-process globals, populated by _worker_init after fork.
_WORKER: dict = {}


def _worker_init(cfg: PipelineConfig, budget) -> None:
    _WORKER["cfg"] = cfg
    _WORKER["writer"] = ManifestWriter(cfg.manifest_path, min_duration_s=cfg.min_duration_s)
    _WORKER["bundle"] = _apply_budget(bundle_from_config(cfg), budget)
    _WORKER["estimator"] = make_estimator(cfg.flow_estimator)


def _worker_task(rec: VideoRecord, last_stage: Optional[str]) -> tuple[str, str]:
    outcome = process_video(
        rec,
        _WORKER["cfg"],
        _WORKER["writer"],
        _WORKER["bundle"],
        _WORKER["estimator"],
        last_stage=last_stage,
    )
    return rec.id, outcome


def run(
    cfg: PipelineConfig,
    sources: Sequence[str | Path],
    resume: bool = False,
    force: bool = False,
    clients: Optional[ClientBundle] = None,
    estimator: Optional[FlowEstimator] = None,
    stop_after_videos: Optional[int] = None,
    last_stage: Optional[str] = None,
) -> RunResult:
    """Ingest the source lists, then drive every pending video to a
    terminal state with cfg.worker_count workers.

    ``stop_after_videos`` bounds how many videos this invocation processes
    (the run stays resumable); ``clients``/``estimator`` overrides are for
    single-worker runs only, since they cannot cross process boundaries.
    """
    cfg.validate()
    if last_stage is not None and last_stage not in STAGE_ORDER:
        raise ConfigError(f"unknown stage {last_stage!r}")
    if (clients is not None or estimator is not None) and cfg.worker_count != 1:
        raise ConfigError("client/estimator overrides require worker_count=1")

    checkpoint_path = Path(cfg.checkpoint_path)
    digest = cfg.digest()
    offsets: dict[str, int] = {}
    if resume and checkpoint_path.exists():
        checkpoint = RunCheckpoint.load(checkpoint_path)
        if checkpoint.config_digest != digest and not force:
            raise ConfigError(
                "config digest differs from the checkpointed run; "
                "pass force=True / --force to resume anyway"
            )
        offsets = checkpoint.source_offsets

    writer = ManifestWriter(cfg.manifest_path, min_duration_s=cfg.min_duration_s)
    manifest_path = Path(cfg.manifest_path)
    existing = read_manifest(manifest_path) if manifest_path.exists() else []
    known_ids = {rec.id for rec in existing}

    totals = IngestStats()
    session_seen: set[str] = set()
    for source in sources:
        source_key = str(source)
        got = ingest(
            source, cfg, writer, known_ids, session_seen,
            start_offset=offsets.get(source_key, 0),
        )
        with open(source, "r", encoding="utf-8") as fh:
            offsets[source_key] = sum(1 for _ in fh)
        for name in ("lines", "ingested", "existing", "deduped", "malformed"):
            setattr(totals, name, getattr(totals, name) + getattr(got, name))
    RunCheckpoint(
        manifest_path=str(cfg.manifest_path), config_digest=digest, source_offsets=offsets
    ).save(checkpoint_path)

    records = read_manifest(manifest_path) if manifest_path.exists() else []
    queue = JobQueue(pending=[rec.id for rec in records if not rec.is_terminal()])
    by_id = {rec.id: rec for rec in records}
    if stop_after_videos is not None:
        deferred = queue.pending[stop_after_videos:]
        queue.pending = queue.pending[:stop_after_videos]
    else:
        deferred = []

    result = RunResult(ingest=totals)
    deferred_count = 0
    interrupted = False

    try:
        if cfg.worker_count == 1:
            bundle = clients if clients is not None else bundle_from_config(cfg)
            est = estimator if estimator is not None else make_estimator(cfg.flow_estimator)
            while True:
                vid = queue.take()
                if vid is None:
                    break
                outcome = process_video(
                    by_id[vid], cfg, writer, bundle, est, last_stage=last_stage
                )
                queue.finish(vid, errored=(outcome == "errored"))
                queue.check_invariants()
                deferred_count += _count(result, outcome)
        else:
            budget = multiprocessing.BoundedSemaphore(cfg.max_inflight_requests)
            with ProcessPoolExecutor(
                max_workers=cfg.worker_count,
                initializer=_worker_init,
                initargs=(cfg, budget),
            ) as pool:
                futures = {}
                while True:
                    vid = queue.take()
                    if vid is None:
                        break
                    futures[pool.submit(_worker_task, by_id[vid], last_stage)] = vid
                try:
                    for future in as_completed(futures):
                        vid, outcome = future.result()
                        queue.finish(vid, errored=(outcome == "errored"))
                        deferred_count += _count(result, outcome)
                except KeyboardInterrupt:
                    # in-flight videos finish and flush; queued ones stay pending
                    pool.shutdown(wait=True, cancel_futures=True)
                    for future, vid in futures.items():
                        if future.done() and not future.cancelled():
                            _, outcome = future.result()
                            if vid in queue.in_flight:
                                queue.finish(vid, errored=(outcome == "errored"))
                                deferred_count += _count(result, outcome)
                    raise
    except KeyboardInterrupt:
        interrupted = True
        logger.warning("interrupted; manifest and checkpoint are resumable")

    result.interrupted = interrupted
    result.pending_after = (
        deferred_count + len(deferred) + len(queue.pending) + len(queue.in_flight)
    )
    RunCheckpoint(
        manifest_path=str(cfg.manifest_path), config_digest=digest, source_offsets=offsets
    ).save(checkpoint_path)
    return result


def _count(result: RunResult, outcome: str) -> int:
    """Tally one worker outcome; returns 1 for deferred videos."""
    result.processed += 1
    if outcome == "passed":
        result.passed += 1
    elif outcome == "rejected":
        result.rejected += 1
    elif outcome == "errored":
        result.errored += 1
    elif outcome == "deferred":
        return 1
    return 0


def status(checkpoint_path: str | Path) -> dict:
    """Progress summary: counts per stage outcome and per terminal state."""
    path = Path(checkpoint_path)
    if not path.exists():
        raise CurationError(f"checkpoint {path} does not exist")
    checkpoint = RunCheckpoint.load(path)
    records = read_manifest(checkpoint.manifest_path)

    per_stage: dict[str, dict[str, int]] = {
        name: {"pass": 0, "reject": 0, "error": 0} for name in STAGE_ORDER
    }
    terminal = {"passed": 0, "rejected": 0, "errored": 0, "pending": 0}
    error_queue = []
    for rec in records:
        for verdict in rec.stage_results:
            per_stage[verdict.stage][verdict.outcome] += 1
        last = rec.last_verdict()
        if not rec.is_terminal():
            terminal["pending"] += 1
        elif last.outcome == "error":
            terminal["errored"] += 1
            error_queue.append(rec.id)
        elif last.outcome == "reject":
            terminal["rejected"] += 1
        else:
            terminal["passed"] += 1
    return {
        "manifest": checkpoint.manifest_path,
        "config_digest": checkpoint.config_digest,
        "total": len(records),
        "terminal": terminal,
        "stages": per_stage,
        "error_queue": error_queue,
        "source_offsets": checkpoint.source_offsets,
    }
