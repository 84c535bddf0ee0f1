"""Human-evaluation service: long-take checks, dynamic ratings, caption A/B.

Tasks and responses live in append-only JSONL stores with the same
supersede-on-read discipline as the manifest, so replaying a store always
reproduces the same metrics. Caption A/B sides are randomized at study
creation and the truth table stays server-side; rater payloads never see
the side assignment or the source dataset.
"""

from __future__ import annotations

import io
import json
import logging
import random
import threading
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Optional, Sequence

from PIL import Image

from .errors import CurationError, ValidationError
from .frames import FrameSequence, decode, sample_at_fps
from .records import VideoRecord, canonical_json, now_iso

logger = logging.getLogger(__name__)

STUDY_KINDS = ("long_take", "dynamic_degree", "caption_pref")

# Video studies sample clips in this duration band.
STUDY_MIN_S = 10.0
STUDY_MAX_S = 30.0

MEDIA_MAX_FPS = 4.0


class DuplicateResponseError(CurationError):
    """One rater may answer each task only once."""


@dataclass(frozen=True)
class RatingTask:
    task_id: str
    kind: str
    video_id: str
    caption_a: Optional[str] = None
    caption_b: Optional[str] = None
    ours_side: Optional[str] = None  # "A" or "B"; never sent to raters

    def payload(self, instructions: str = "") -> dict:
        """The rater-visible projection of this task."""
        out = {
            "task_id": self.task_id,
            "kind": self.kind,
            "media_url": f"/media/{self.video_id}",
            "instructions": instructions,
        }
        if self.kind == "caption_pref":
            out["captions"] = {"A": self.caption_a, "B": self.caption_b}
        return out


@dataclass(frozen=True)
class RatingResponse:
    task_id: str
    rater_id: str
    answer: object
    timestamp: str


def _validate_answer(kind: str, answer) -> None:
    if kind == "long_take":
        if not isinstance(answer, bool):
            raise ValidationError("long_take answer must be a boolean", field="answer")
    elif kind == "dynamic_degree":
        if isinstance(answer, bool) or not isinstance(answer, int) or not 1 <= answer <= 3:
            raise ValidationError("dynamic_degree answer must be 1, 2 or 3", field="answer")
    elif kind == "caption_pref":
        if answer not in ("A", "B"):
            raise ValidationError("caption_pref answer must be 'A' or 'B'", field="answer")
    else:
        raise ValidationError(f"unknown study kind {kind!r}", field="kind")


def _eligible(records: Sequence[VideoRecord], kind: str) -> list[VideoRecord]:
    out = []
    for rec in records:
        if kind == "caption_pref":
            verdict = rec.stage("caption")
            if (
                verdict is not None
                and verdict.outcome == "pass"
                and rec.caption is not None
                and rec.original_caption
            ):
                out.append(rec)
        else:
            verdict = rec.stage("semantic")
            if (
                verdict is not None
                and verdict.outcome == "pass"
                and STUDY_MIN_S <= rec.duration_s <= STUDY_MAX_S
            ):
                out.append(rec)
    return out


class ReviewStore:
    """Task/response persistence plus race-safe task assignment."""

    def __init__(self, store_dir: str | Path):
        self.dir = Path(store_dir)
        self.dir.mkdir(parents=True, exist_ok=True)
        self.tasks_path = self.dir / "tasks.jsonl"
        self.responses_path = self.dir / "responses.jsonl"
        self._lock = threading.Lock()
        self._tasks: dict[str, RatingTask] = {}
        self._responses: dict[tuple[str, str], RatingResponse] = {}
        self._handed: set[tuple[str, str]] = set()  # (task_id, rater_id)
        self._load()

    def _load(self) -> None:
        if self.tasks_path.exists():
            with open(self.tasks_path, "r", encoding="utf-8") as fh:
                for line in fh:
                    if line.strip():
                        data = json.loads(line)
                        self._tasks[data["task_id"]] = RatingTask(**data)
        if self.responses_path.exists():
            with open(self.responses_path, "r", encoding="utf-8") as fh:
                for line in fh:
                    if line.strip():
                        data = json.loads(line)
                        resp = RatingResponse(**data)
                        self._responses.setdefault((resp.task_id, resp.rater_id), resp)

    def _append(self, path: Path, data: dict) -> None:
        with open(path, "a", encoding="utf-8") as fh:
            fh.write(canonical_json(data) + "\n")
            fh.flush()

    # -- study management ---------------------------------------------------

    def create_study(
        self,
        records: Sequence[VideoRecord],
        kind: str,
        sample_n: int,
        seed: int,
    ) -> list[RatingTask]:
        """Seeded uniform sample of eligible records; idempotent per seed."""
        if kind not in STUDY_KINDS:
            raise ValidationError(f"unknown study kind {kind!r}", field="kind")
        pool = _eligible(records, kind)
        if len(pool) < sample_n:
            raise ValidationError(
                f"only {len(pool)} eligible records for a {kind} study of {sample_n}"
            )
        rng = random.Random(seed)
        chosen = rng.sample(pool, sample_n)
        tasks = []
        for i, rec in enumerate(chosen):
            ours_side = caption_a = caption_b = None
            if kind == "caption_pref":
                ours_side = "A" if rng.random() < 0.5 else "B"
                ours = rec.caption.final_caption
                theirs = rec.original_caption
                caption_a, caption_b = (ours, theirs) if ours_side == "A" else (theirs, ours)
            tasks.append(
                RatingTask(
                    task_id=f"{kind}-{seed}-{i:03d}",
                    kind=kind,
                    video_id=rec.id,
                    caption_a=caption_a,
                    caption_b=caption_b,
                    ours_side=ours_side,
                )
            )
        with self._lock:
            for task in tasks:
                if task.task_id not in self._tasks:
                    self._append(self.tasks_path, asdict(task))
                self._tasks[task.task_id] = task
        return tasks

    # -- task assignment ----------------------------------------------------

    def next_task(self, rater_id: str, kind: str) -> Optional[RatingTask]:
        """An unanswered, never-handed task for this rater, in randomized
        order; None once the rater has seen the whole study."""
        if kind not in STUDY_KINDS:
            raise ValidationError(f"unknown study kind {kind!r}", field="kind")
        with self._lock:
            candidates = [
                t
                for t in self._tasks.values()
                if t.kind == kind
                and (t.task_id, rater_id) not in self._responses
                and (t.task_id, rater_id) not in self._handed
            ]
            if not candidates:
                return None
            rng = random.Random(f"{rater_id}:{len(self._handed)}")
            task = candidates[rng.randrange(len(candidates))]
            self._handed.add((task.task_id, rater_id))
            return task

    def submit(self, response: RatingResponse) -> None:
        with self._lock:
            task = self._tasks.get(response.task_id)
            if task is None:
                raise ValidationError(f"unknown task {response.task_id!r}", field="task_id")
            _validate_answer(task.kind, response.answer)
            key = (response.task_id, response.rater_id)
            if key in self._responses:
                raise DuplicateResponseError(
                    f"rater {response.rater_id} already answered {response.task_id}"
                )
            self._append(self.responses_path, asdict(response))
            self._responses[key] = response

    # -- metrics ------------------------------------------------------------

    def study_metrics(self, kind: str) -> dict:
        if kind not in STUDY_KINDS:
            raise ValidationError(f"unknown study kind {kind!r}", field="kind")
        with self._lock:
            pairs = [
                (self._tasks[r.task_id], r)
                for r in self._responses.values()
                if self._tasks[r.task_id].kind == kind
            ]
        if not pairs:
            raise ValidationError(f"no responses recorded for kind {kind!r}")

        if kind == "long_take":
            positive = sum(1 for _, r in pairs if r.answer is True)
            return {
                "kind": kind,
                "responses": len(pairs),
                "long_take_rate": positive / len(pairs),
            }
        if kind == "dynamic_degree":
            dist = {1: 0, 2: 0, 3: 0}
            for _, r in pairs:
                dist[int(r.answer)] += 1
            mean = sum(k * v for k, v in dist.items()) / len(pairs)
            return {
                "kind": kind,
                "responses": len(pairs),
                "distribution": {str(k): v for k, v in dist.items()},
                "mean": mean,
            }
        ours = sum(1 for task, r in pairs if r.answer == task.ours_side)
        return {
            "kind": kind,
            "responses": len(pairs),
            "preference_rate": ours / len(pairs),
        }


class MediaRenderer:
    """Decode a manifest video and cache a browser-playable GIF preview."""

    def __init__(self, records: Sequence[VideoRecord], decoder_cmd: str, cache_dir: str | Path):
        self._by_id = {rec.id: rec for rec in records}
        self._decoder_cmd = decoder_cmd
        self.cache_dir = Path(cache_dir)
        self.cache_dir.mkdir(parents=True, exist_ok=True)

    def render(self, video_id: str) -> bytes:
        cached = self.cache_dir / f"{video_id}.gif"
        if cached.exists():
            return cached.read_bytes()
        rec = self._by_id.get(video_id)
        if rec is None:
            raise ValidationError(f"unknown video {video_id!r}", field="video_id")
        seq = decode(rec.uri, self._decoder_cmd)
        if seq.fps > MEDIA_MAX_FPS:
            seq = sample_at_fps(seq, MEDIA_MAX_FPS)
        data = _to_gif(seq)
        cached.write_bytes(data)
        return data


def _to_gif(seq: FrameSequence) -> bytes:
    images = [Image.fromarray(f, mode="RGB") for f in seq.frames]
    buf = io.BytesIO()
    images[0].save(
        buf,
        format="GIF",
        save_all=True,
        append_images=images[1:],
        duration=int(1000 / seq.fps),
        loop=0,
    )
    return buf.getvalue()


def build_app(
    store: ReviewStore,
    media: Optional[MediaRenderer] = None,
    static_dir: Optional[str] = None,
    instructions: Optional[dict[str, str]] = None,
    cors_origins: Sequence[str] = ("*",),
):
    """FastAPI app exposing the rater API (and the rater UI when built)."""
    from fastapi import FastAPI, HTTPException, Response
    from fastapi.middleware.cors import CORSMiddleware

    instructions = instructions or {
        "long_take": "Watch the clip and report whether it contains any scene cut.",
        "dynamic_degree": "Rate how dynamic the clip is from 1 (static) to 3 (very dynamic).",
        "caption_pref": "Read both captions and pick the one that describes the clip better.",
    }

    app = FastAPI(title="rating service")
    app.add_middleware(
        CORSMiddleware,
        allow_origins=list(cors_origins),
        allow_methods=["*"],
        allow_headers=["*"],
    )

    @app.get("/api/task")
    def get_task(rater: str, kind: str):
        try:
            task = store.next_task(rater, kind)
        except ValidationError as exc:
            raise HTTPException(status_code=422, detail=str(exc))
        if task is None:
            return {"done": True}
        return task.payload(instructions.get(kind, ""))

    @app.post("/api/response")
    def post_response(body: dict):
        try:
            response = RatingResponse(
                task_id=str(body["task_id"]),
                rater_id=str(body["rater_id"]),
                answer=body["answer"],
                timestamp=now_iso(),
            )
        except KeyError as exc:
            raise HTTPException(status_code=422, detail=f"missing field {exc}")
        try:
            store.submit(response)
        except DuplicateResponseError as exc:
            raise HTTPException(status_code=409, detail=str(exc))
        except ValidationError as exc:
            raise HTTPException(status_code=422, detail=str(exc))
        return {"ok": True}

    @app.get("/api/metrics")
    def get_metrics(kind: str):
        try:
            return store.study_metrics(kind)
        except ValidationError as exc:
            raise HTTPException(status_code=404, detail=str(exc))

    @app.get("/media/{video_id}")
    def get_media(video_id: str):
        if media is None:
            raise HTTPException(status_code=404, detail="media rendering not configured")
        try:
            data = media.render(video_id)
        except (ValidationError, CurationError) as exc:
            raise HTTPException(status_code=404, detail=str(exc))
        return Response(content=data, media_type="image/gif")

    if static_dir:
        from fastapi.staticfiles import StaticFiles

        app.mount("/", StaticFiles(directory=static_dir, html=True), name="ui")

    return app
