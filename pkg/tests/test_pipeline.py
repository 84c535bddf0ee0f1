import dataclasses
import json

import pytest

from longtake.errors import ConfigError
from longtake.manifest import ManifestWriter, manifest_digest, read_manifest
from longtake.pipeline import JobQueue, ingest, parse_source_line, run, status
from longtake.records import STAGE_ORDER

from corpus import (
    build_env,
    bundle_for,
    standard_corpus,
    total_calls,
    with_manifest,
    write_sources,
)


def line(vid, duration_s, **kw):
    base = {
        "id": vid, "source_dataset": "other", "uri": f"/nowhere/{vid}",
        "duration_s": duration_s, "fps": 24.0, "width": 320, "height": 180,
    }
    base.update(kw)
    return base


# -- ingest ---------------------------------------------------------------------


def test_short_video_gets_duration_reject(tmp_path, cfg):
    sources = write_sources(tmp_path / "s.jsonl", [line("a", 8.0)])
    writer = ManifestWriter(tmp_path / "m.jsonl")
    got = ingest(sources, cfg, writer, set())
    assert got.ingested == 1
    rec = read_manifest(tmp_path / "m.jsonl")[0]
    assert rec.stage("duration").outcome == "reject"
    assert rec.is_terminal()


def test_duration_gate_is_inclusive_at_10s(tmp_path, cfg):
    sources = write_sources(tmp_path / "s.jsonl", [line("a", 10.0)])
    writer = ManifestWriter(tmp_path / "m.jsonl")
    ingest(sources, cfg, writer, set())
    assert read_manifest(tmp_path / "m.jsonl")[0].stage("duration").outcome == "pass"


def test_duplicate_id_counted_and_skipped(tmp_path, cfg):
    sources = write_sources(tmp_path / "s.jsonl", [line("a", 12.0), line("a", 15.0)])
    writer = ManifestWriter(tmp_path / "m.jsonl")
    got = ingest(sources, cfg, writer, set())
    assert got.ingested == 1 and got.deduped == 1
    records = read_manifest(tmp_path / "m.jsonl")
    assert len(records) == 1 and records[0].duration_s == 12.0


def test_malformed_line_counted_and_skipped(tmp_path, cfg):
    path = tmp_path / "s.jsonl"
    with open(path, "w") as fh:
        fh.write(json.dumps(line("a", 12.0)) + "\n")
        fh.write("{not json\n")
        fh.write(json.dumps({"id": "b"}) + "\n")  # missing fields
        fh.write(json.dumps(line("c", 12.0, source_dataset="youtube")) + "\n")
    got = ingest(path, cfg, ManifestWriter(tmp_path / "m.jsonl"), set())
    assert got.ingested == 1
    assert got.malformed == 3


def test_parse_source_line_keeps_original_caption():
    rec = parse_source_line(json.dumps(line("a", 12.0, original_caption="stock clip")))
    assert rec.original_caption == "stock clip"


# -- full runs --------------------------------------------------------------------


@pytest.fixture(scope="module")
def mixed_run(tmp_path_factory):
    """One full 10-video run shared by the read-only assertions below."""
    tmp_path = tmp_path_factory.mktemp("pipeline")
    videos, rules = standard_corpus()
    cfg, sources = build_env(tmp_path, videos, name="mixed", mllm_rules=rules)
    result = run(cfg, [sources])
    return cfg, sources, result


def test_mixed_corpus_terminal_states(mixed_run):
    cfg, _, result = mixed_run
    assert result.ingest.ingested == 10
    assert result.passed == 3
    assert result.rejected == 7  # 3 cuts + 3 statics + 1 semantic BAD
    assert result.errored == 0
    assert result.exit_code == 0

    records = {r.id: r for r in read_manifest(cfg.manifest_path)}
    for i in range(3):
        assert records[f"cut{i:02d}"].stage("scenecut").outcome == "reject"
        assert records[f"static{i:02d}"].stage("motion").outcome == "reject"
        assert records[f"clean{i:02d}"].stage("caption").outcome == "pass"
    assert records["bad00"].stage("semantic").outcome == "reject"


def test_passing_records_have_caption_and_category(mixed_run):
    cfg, _, _ = mixed_run
    records = {r.id: r for r in read_manifest(cfg.manifest_path)}
    for i in range(3):
        rec = records[f"clean{i:02d}"]
        assert rec.caption.final_caption == "The field drifts steadily the whole time."
        assert rec.caption.word_count == 7
        assert rec.category == "scenery"


def test_stage_order_invariant_holds_everywhere(mixed_run):
    cfg, _, _ = mixed_run
    for rec in read_manifest(cfg.manifest_path):
        names = [v.stage for v in rec.stage_results]
        assert names == list(STAGE_ORDER[: len(names)])
        for verdict in rec.stage_results[:-1]:
            assert verdict.outcome == "pass"


def test_rerun_is_idempotent_with_zero_client_calls(mixed_run):
    cfg, sources, _ = mixed_run
    digest_before = manifest_digest(cfg.manifest_path)
    bundle = bundle_for(cfg)
    result = run(cfg, [sources], resume=True, clients=bundle)
    assert result.processed == 0
    assert total_calls(bundle) == 0
    assert manifest_digest(cfg.manifest_path) == digest_before


def test_status_summary(mixed_run):
    cfg, _, _ = mixed_run
    summary = status(cfg.checkpoint_path)
    assert summary["total"] == 10
    assert summary["terminal"] == {"passed": 3, "rejected": 7, "errored": 0, "pending": 0}
    assert summary["stages"]["scenecut"]["reject"] == 3
    assert summary["stages"]["motion"]["reject"] == 3
    assert summary["stages"]["semantic"]["reject"] == 1
    assert summary["error_queue"] == []


def test_interrupted_run_resumes_to_identical_manifest(tmp_path):
    videos, rules = standard_corpus()
    base, sources = build_env(tmp_path, videos, name="resumed", mllm_rules=rules)
    full_cfg = with_manifest(base, "full")
    split_cfg = with_manifest(base, "split")

    run(full_cfg, [sources])
    first = run(split_cfg, [sources], stop_after_videos=5)
    assert first.processed == 5
    assert status(split_cfg.checkpoint_path)["terminal"]["pending"] == 5
    second = run(split_cfg, [sources], resume=True)
    assert second.processed == 5
    assert manifest_digest(split_cfg.manifest_path) == manifest_digest(full_cfg.manifest_path)


def test_resume_with_changed_config_refused_without_force(tmp_path):
    videos, rules = standard_corpus(n_cut=1, n_static=1, n_bad=0, n_clean=0)
    cfg, sources = build_env(tmp_path, videos, name="guard", mllm_rules=rules)
    run(cfg, [sources])
    changed = dataclasses.replace(cfg, flow_threshold=30.0)
    with pytest.raises(ConfigError, match="digest"):
        run(changed, [sources], resume=True)
    result = run(changed, [sources], resume=True, force=True)
    assert result.exit_code == 0


def test_decode_failure_isolated_as_error_verdict(tmp_path):
    videos, rules = standard_corpus(n_cut=0, n_static=1, n_bad=0, n_clean=0)
    cfg, sources = build_env(
        tmp_path, videos, name="errs", mllm_rules=rules,
        extra_source_lines=[line("ghost", 12.0, width=192, height=128)],
    )
    result = run(cfg, [sources])
    assert result.errored == 1
    assert result.exit_code == 3
    records = {r.id: r for r in read_manifest(cfg.manifest_path)}
    assert records["ghost"].stage("scenecut").outcome == "error"
    assert records["static00"].stage("motion").outcome == "reject"  # run continued
    summary = status(cfg.checkpoint_path)
    assert summary["error_queue"] == ["ghost"]


def test_errored_video_is_not_retried_on_resume(tmp_path):
    videos, rules = standard_corpus(n_cut=0, n_static=0, n_bad=0, n_clean=0,
                                    n_unparseable=1)
    cfg, sources = build_env(tmp_path, videos, name="errterm", mllm_rules=rules)
    first = run(cfg, [sources])
    assert first.errored == 1
    bundle = bundle_for(cfg)
    again = run(cfg, [sources], resume=True, clients=bundle)
    assert again.processed == 0
    assert total_calls(bundle) == 0


def test_last_stage_defers_downstream_work(tmp_path):
    videos, rules = standard_corpus(n_cut=1, n_static=1, n_bad=0, n_clean=1)
    cfg, sources = build_env(tmp_path, videos, name="staged", mllm_rules=rules)
    bundle = bundle_for(cfg)
    result = run(cfg, [sources], last_stage="motion", clients=bundle)
    assert result.rejected == 2
    assert result.pending_after == 1
    assert total_calls(bundle) == 0  # no model calls in a filters-only run
    # finishing the run later completes the deferred video
    final = run(cfg, [sources], resume=True)
    assert final.passed == 1


def test_multi_worker_run_reaches_same_terminal_states(tmp_path):
    videos, rules = standard_corpus()
    cfg1, sources1 = build_env(tmp_path, videos, name="w1", mllm_rules=rules)
    cfg4, sources4 = build_env(tmp_path, videos, name="w4", mllm_rules=rules,
                               worker_count=2)
    run(cfg1, [sources1])
    run(cfg4, [sources4])

    def canonical(path):
        out = {}
        for rec in read_manifest(path):
            out[rec.id] = [(v.stage, v.outcome, v.score, v.detail) for v in rec.stage_results]
        return out

    assert canonical(cfg1.manifest_path) == canonical(cfg4.manifest_path)


def test_override_clients_require_single_worker(tmp_path):
    videos, rules = standard_corpus(n_cut=1, n_static=0, n_bad=0, n_clean=0)
    cfg, sources = build_env(tmp_path, videos, name="bad-workers", mllm_rules=rules,
                             worker_count=2)
    with pytest.raises(ConfigError, match="worker_count=1"):
        run(cfg, [sources], clients=bundle_for(cfg))


def test_job_queue_invariants():
    queue = JobQueue(pending=["a", "b"])
    vid = queue.take()
    queue.check_invariants()
    queue.finish(vid, errored=False)
    queue.check_invariants()
    assert queue.done == {"a"}
