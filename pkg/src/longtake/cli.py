"""The ``curate`` command line: pipeline runs plus per-stage debugging tools.

Exit codes: 0 success, 2 configuration problem, 3 partial run (error queue
non-empty or interrupted).
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys


def _load_config(args):
    from .config import PipelineConfig, load_config

    cfg = load_config(args.config) if args.config else PipelineConfig()
    overrides = {}
    if getattr(args, "manifest", None):
        overrides["manifest_path"] = args.manifest
    if getattr(args, "checkpoint", None):
        overrides["checkpoint_path"] = args.checkpoint
    if getattr(args, "workers", None):
        overrides["worker_count"] = args.workers
    # Client endpoints may be overridden from the environment for deploys.
    for env, field in (
        ("CURATE_MLLM_ENDPOINT", "mllm_endpoint"),
        ("CURATE_VLM_ENDPOINT", "vlm_endpoint"),
        ("CURATE_LLM_ENDPOINT", "llm_endpoint"),
        ("CURATE_CLASSIFIER_ENDPOINT", "classifier_endpoint"),
    ):
        if os.environ.get(env):
            overrides[field] = os.environ[env]
    if overrides:
        import dataclasses

        cfg = dataclasses.replace(cfg, **overrides)
        cfg.validate()
    return cfg


def _read_input_sequence(path_or_uri: str, cfg):
    """A FRAMESEQ file is read directly; anything else goes through the
    configured decoder command."""
    from .frames import FRAMESEQ_MAGIC, decode, read_frameseq

    if os.path.exists(path_or_uri):
        with open(path_or_uri, "rb") as fh:
            head = fh.read(4)
        if head == FRAMESEQ_MAGIC:
            with open(path_or_uri, "rb") as fh:
                return read_frameseq(fh.read())
    return decode(path_or_uri, cfg.decoder_cmd)


def _print_verdict(verdict) -> int:
    print(
        json.dumps(
            {
                "stage": verdict.stage,
                "outcome": verdict.outcome,
                "score": verdict.score,
                "detail": verdict.detail,
            }
        )
    )
    return 0 if verdict.outcome != "error" else 3


def cmd_run(args) -> int:
    from .pipeline import run

    cfg = _load_config(args)
    result = run(
        cfg,
        args.sources,
        resume=args.resume,
        force=args.force,
        last_stage=args.last_stage,
        stop_after_videos=args.stop_after,
    )
    print(
        json.dumps(
            {
                "ingested": result.ingest.ingested,
                "existing": result.ingest.existing,
                "deduped": result.ingest.deduped,
                "malformed": result.ingest.malformed,
                "processed": result.processed,
                "passed": result.passed,
                "rejected": result.rejected,
                "errored": result.errored,
                "pending": result.pending_after,
                "interrupted": result.interrupted,
            },
            indent=2,
        )
    )
    return result.exit_code


def cmd_status(args) -> int:
    from .pipeline import status

    cfg = _load_config(args)
    print(json.dumps(status(cfg.checkpoint_path), indent=2))
    return 0


def cmd_scenecut(args) -> int:
    from .scenecut import detect_cuts

    cfg = _load_config(args)
    seq = _read_input_sequence(args.input, cfg)
    return _print_verdict(detect_cuts(seq, cfg))


def cmd_motion(args) -> int:
    from .motion import make_estimator, motion_verdict

    cfg = _load_config(args)
    seq = _read_input_sequence(args.input, cfg)
    est = make_estimator(args.estimator or cfg.flow_estimator)
    return _print_verdict(motion_verdict(seq, est, cfg))


def cmd_semantic(args) -> int:
    from .clients import bundle_from_config
    from .semantic import semantic_verdict

    cfg = _load_config(args)
    bundle = bundle_from_config(cfg)
    if bundle.mllm is None:
        print("error: no mllm endpoint configured", file=sys.stderr)
        return 2
    seq = _read_input_sequence(args.input, cfg)
    return _print_verdict(semantic_verdict(seq, bundle.mllm, cfg))


def cmd_caption(args) -> int:
    from .clients import bundle_from_config
    from .captions import caption_video

    cfg = _load_config(args)
    bundle = bundle_from_config(cfg)
    if bundle.vlm is None or bundle.llm is None:
        print("error: caption needs vlm and llm endpoints", file=sys.stderr)
        return 2
    seq = _read_input_sequence(args.input, cfg)
    record = caption_video(seq, bundle.vlm, bundle.llm, cfg)
    print(
        json.dumps(
            {
                "final_caption": record.final_caption,
                "word_count": record.word_count,
                "clips": [
                    {"start_s": c.span.start_s, "end_s": c.span.end_s, "text": c.text}
                    for c in record.clip_captions
                ],
            },
            indent=2,
        )
    )
    return 0


def cmd_stats(args) -> int:
    from .manifest import read_manifest
    from .stats import compute_stats, render_report

    cfg = _load_config(args)
    records = read_manifest(args.manifest or cfg.manifest_path)
    long_take_rate = dynamic_mean = None
    if args.review_store:
        from .errors import ValidationError
        from .review import ReviewStore

        store = ReviewStore(args.review_store)
        try:
            long_take_rate = store.study_metrics("long_take")["long_take_rate"]
        except ValidationError:
            pass
        try:
            dynamic_mean = store.study_metrics("dynamic_degree")["mean"]
        except ValidationError:
            pass
    report = render_report(
        compute_stats(
            records, cfg, long_take_rate=long_take_rate, dynamic_degree_mean=dynamic_mean
        ),
        args.format,
    )
    sys.stdout.write(report)
    return 0


def cmd_synth_decode(args) -> int:
    from .frames import write_frameseq
    from .synth import load_script, synth_video

    seq = synth_video(load_script(args.script))
    write_frameseq(seq, sys.stdout.buffer)
    return 0


def cmd_study(args) -> int:
    from .manifest import read_manifest
    from .review import ReviewStore

    cfg = _load_config(args)
    records = read_manifest(args.manifest or cfg.manifest_path)
    store = ReviewStore(args.store)
    tasks = store.create_study(records, args.kind, args.n, args.seed)
    print(json.dumps({"kind": args.kind, "created": len(tasks), "seed": args.seed}))
    return 0


def cmd_serve(args) -> int:
    import uvicorn

    from .manifest import read_manifest
    from .review import MediaRenderer, ReviewStore, build_app

    cfg = _load_config(args)
    records = read_manifest(args.manifest or cfg.manifest_path)
    store = ReviewStore(args.store)
    media = MediaRenderer(records, cfg.decoder_cmd, os.path.join(args.store, "media-cache"))
    app = build_app(store, media, static_dir=args.static)
    uvicorn.run(app, host=args.host, port=args.port, log_level="warning")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="curate", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p, manifest=False):
        p.add_argument("--config", help="pipeline config file (built-in defaults if omitted)")
        if manifest:
            p.add_argument("--manifest", help="override manifest path")

    p = sub.add_parser("run", help="run the full pipeline over source lists")
    add_common(p, manifest=True)
    p.add_argument("--sources", nargs="+", required=True, help="source list files (JSONL)")
    p.add_argument("--workers", type=int, help="override worker_count")
    p.add_argument("--checkpoint", help="override checkpoint path")
    p.add_argument("--resume", action="store_true", help="resume from the checkpoint")
    p.add_argument("--force", action="store_true", help="resume despite a config change")
    p.add_argument("--last-stage", dest="last_stage", help="stop after this stage")
    p.add_argument("--stop-after", dest="stop_after", type=int, help="process at most N videos")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("status", help="progress summary from the checkpoint")
    add_common(p)
    p.add_argument("--checkpoint", help="override checkpoint path")
    p.set_defaults(func=cmd_status)

    for name, handler in (("scenecut", cmd_scenecut), ("motion", cmd_motion),
                          ("semantic", cmd_semantic), ("caption", cmd_caption)):
        p = sub.add_parser(name, help=f"run the {name} stage on one input")
        add_common(p)
        p.add_argument("--input", required=True, help="FRAMESEQ file or decodable uri")
        if name == "motion":
            p.add_argument("--estimator", help="builtin or cmd:<template>")
        p.set_defaults(func=handler)

    p = sub.add_parser("stats", help="dataset statistics from the manifest")
    add_common(p, manifest=True)
    p.add_argument("--format", default="json", choices=["csv", "json", "markdown"])
    p.add_argument("--review-store", dest="review_store", help="fold in study metrics")
    p.set_defaults(func=cmd_stats)

    p = sub.add_parser("synth-decode", help="decode a scene script to FRAMESEQ on stdout")
    p.add_argument("script", help="scene script JSON file")
    p.set_defaults(func=cmd_synth_decode)

    p = sub.add_parser("study", help="create a rating study from the manifest")
    add_common(p, manifest=True)
    p.add_argument("--store", required=True, help="review store directory")
    p.add_argument("--kind", required=True, choices=["long_take", "dynamic_degree", "caption_pref"])
    p.add_argument("-n", type=int, required=True, help="tasks to sample")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_study)

    p = sub.add_parser("serve", help="serve the rating API and UI")
    add_common(p, manifest=True)
    p.add_argument("--store", required=True, help="review store directory")
    p.add_argument("--static", help="built rater UI directory to serve at /")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8400)
    p.set_defaults(func=cmd_serve)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.WARNING,
        format="%(asctime)s %(name)s %(levelname)s %(message)s",
    )
    from .errors import ConfigError, CurationError, ValidationError

    try:
        return args.func(args)
    except (ConfigError, ValidationError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except KeyboardInterrupt:
        print("interrupted; state is resumable", file=sys.stderr)
        return 3
    except CurationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
