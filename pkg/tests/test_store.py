"""Project store: capture persistence, CAS revisions, crash safety, styles."""

import json
import os
import threading
from pathlib import Path

import numpy as np
import pytest

from atelier.jobs import JobState, RenderJob
from atelier.store import (
    DuplicateStyle,
    MalformedRegistry,
    MissingDepthMeta,
    ProjectStore,
    RevisionConflict,
    UnknownCapture,
    UnknownJob,
    UnknownResult,
)
from atelier.control import DimensionMismatch

from conftest import gray16_png, solid_png
from test_jobs import job, params, valid


@pytest.fixture
def store(tmp_path):
    return ProjectStore(tmp_path / "proj")


class TestCaptures:
    def test_round_trip_bytes(self, store):
        data = solid_png(6, 4)
        cid = store.put_capture(data)
        assert store.get_capture(cid) == data
        meta = store.get_capture_meta(cid)
        assert (meta["width"], meta["height"]) == (6, 4)

    def test_depth_requires_planes(self, store):
        raw = np.zeros((4, 6), np.uint16)
        with pytest.raises(MissingDepthMeta):
            store.put_capture(solid_png(6, 4), depth=gray16_png(raw))

    def test_depth_round_trip(self, store):
        raw = np.array([[0, 65534], [32767, 65535]], np.uint16)
        cid = store.put_capture(
            solid_png(2, 2), depth=gray16_png(raw), meta={"near": 0.5, "far": 8.0}
        )
        buf = store.get_capture_depth(cid)
        assert buf.values[0, 0] == pytest.approx(0.5)
        assert buf.values[0, 1] == pytest.approx(8.0)
        assert np.isinf(buf.values[1, 1])
        meta = store.get_capture_meta(cid)
        assert meta["near"] == 0.5 and meta["far"] == 8.0

    def test_depth_dimension_mismatch(self, store):
        with pytest.raises(DimensionMismatch):
            store.put_capture(
                solid_png(4, 4),
                depth=gray16_png(np.zeros((2, 2), np.uint16)),
                meta={"near": 0.1, "far": 5.0},
            )

    def test_capture_without_depth_has_none(self, store):
        cid = store.put_capture(solid_png(2, 2))
        assert store.get_capture_depth(cid) is None

    def test_unknown_capture(self, store):
        with pytest.raises(UnknownCapture):
            store.get_capture("nope")

    def test_traversal_ids_rejected(self, store):
        with pytest.raises(UnknownCapture):
            store.get_capture("../../etc/passwd")

    def test_listing_sorted_by_creation(self, store):
        ids = [store.put_capture(solid_png(2, 2)) for _ in range(3)]
        listed = [m["id"] for m in store.list_captures()]
        assert set(ids) <= set(listed)
        created = [m["created"] for m in store.list_captures()]
        assert created == sorted(created)

    def test_malformed_png_rejected(self, store):
        with pytest.raises(ValueError):
            store.put_capture(b"not a png at all")


class TestJobCas:
    def test_create_then_update(self, store):
        j = job(id="job-a")
        rev = store.save_job(j, expected_revision=0)
        assert rev == 1
        loaded, got_rev = store.load_job("job-a")
        assert loaded == j and got_rev == 1
        rev2 = store.save_job(j, expected_revision=1)
        assert rev2 == 2

    def test_create_conflict(self, store):
        store.save_job(job(id="job-a"), expected_revision=0)
        with pytest.raises(RevisionConflict):
            store.save_job(job(id="job-a"), expected_revision=0)

    def test_stale_update_conflict(self, store):
        store.save_job(job(id="job-a"), expected_revision=0)
        store.save_job(job(id="job-a"), expected_revision=1)
        with pytest.raises(RevisionConflict):
            store.save_job(job(id="job-a"), expected_revision=1)

    def test_concurrent_writers_one_wins(self, store):
        store.save_job(job(id="job-a"), expected_revision=0)
        outcomes = []

        def writer():
            try:
                store.save_job(job(id="job-a"), expected_revision=1)
                outcomes.append("ok")
            except RevisionConflict:
                outcomes.append("conflict")

        threads = [threading.Thread(target=writer) for _ in range(4)]
        for t in threads:
            t.start()
        for t in threads:
            t.join()
        assert sorted(outcomes) == ["conflict", "conflict", "conflict", "ok"]

    def test_unknown_job(self, store):
        with pytest.raises(UnknownJob):
            store.load_job("missing")

    def test_round_trip_preserves_every_field(self, store):
        j = job(
            id="job-b",
            state=JobState.SAMPLING,
            progress=0.375,
            created=123.5,
            updated=124.0,
            parent_job="job-a",
        )
        store.save_job(j, expected_revision=0)
        assert store.load_job("job-b")[0] == j


class TestCrashSafety:
    def test_failed_replace_keeps_previous_version(self, store):
        j = job(id="job-a")
        store.save_job(j, expected_revision=0)

        real_replace = store._replace

        def exploding_replace(src, dst):
            raise OSError("injected crash between temp write and publish")

        store._replace = exploding_replace
        with pytest.raises(OSError):
            store.save_job(job(id="job-a", state=JobState.PREPROCESSING), expected_revision=1)
        store._replace = real_replace

        loaded, rev = store.load_job("job-a")
        assert loaded == j and rev == 1
        # and the job file is still parseable JSON on disk
        path = Path(store.root) / "jobs" / "job-a.json"
        json.loads(path.read_text())

    def test_no_temp_litter_after_crash(self, store):
        store.save_job(job(id="job-a"), expected_revision=0)
        store._replace = lambda s, d: (_ for _ in ()).throw(OSError("boom"))
        with pytest.raises(OSError):
            store.save_job(job(id="job-a"), expected_revision=1)
        store._replace = os.replace
        jobs_dir = Path(store.root) / "jobs"
        leftovers = [p for p in jobs_dir.iterdir() if p.suffix != ".json"]
        assert leftovers == []


class TestListing:
    def test_filter_matches_full_scan(self, store):
        states = [JobState.QUEUED, JobState.SAMPLING, JobState.COMPLETED, JobState.QUEUED]
        for i, st in enumerate(states):
            refs = ("result:x:0",) if st is JobState.COMPLETED else ()
            store.save_job(
                job(id=f"job-{i}", state=st, result_refs=refs,
                    progress=1.0 if refs else 0.0),
                expected_revision=0,
            )
        everything = store.list_jobs()
        queued = store.list_jobs(state=JobState.QUEUED)
        assert [j.id for j in queued] == [j.id for j in everything if j.state is JobState.QUEUED]
        assert len(queued) == 2


class TestResults:
    def test_put_get_round_trip(self, store):
        data = solid_png(3, 3)
        ref = store.put_result("job-a", 0, data)
        assert ref == "result:job-a:0"
        assert store.get_result("job-a", 0) == data

    def test_read_image_ref_resolves_both_schemes(self, store):
        cap = store.put_capture(solid_png(2, 2))
        res_ref = store.put_result("job-z", 1, solid_png(5, 5))
        assert store.read_image_ref(cap) == store.get_capture(cap)
        assert store.read_image_ref(res_ref) == store.get_result("job-z", 1)

    def test_unknown_result(self, store):
        with pytest.raises(UnknownResult):
            store.get_result("job-a", 9)

    def test_delete_results(self, store):
        store.put_result("job-a", 0, solid_png(2, 2))
        store.put_result("job-a", 1, solid_png(2, 2))
        store.delete_results("job-a")
        with pytest.raises(UnknownResult):
            store.get_result("job-a", 0)


class TestStyleRegistry:
    def write(self, store, doc):
        path = Path(store.root) / "styles.json"
        path.write_text(doc if isinstance(doc, str) else json.dumps(doc))

    def test_missing_file_is_empty(self, store):
        reg = store.load_style_registry()
        assert list(reg) == []
        assert "anything" not in reg

    def test_parses_entries(self, store):
        self.write(store, {
            "v": 1,
            "styles": [
                {"name": "nordic", "display_name": "Nordic", "default_weight": 0.8},
                {"name": "noir"},
            ],
        })
        reg = store.load_style_registry()
        assert "nordic" in reg and "noir" in reg
        assert reg.get("nordic").default_weight == 0.8
        assert reg.get("noir").default_weight == 1.0

    def test_duplicate_rejected(self, store):
        self.write(store, {"v": 1, "styles": [{"name": "a"}, {"name": "a"}]})
        with pytest.raises(DuplicateStyle):
            store.load_style_registry()

    def test_unsafe_name_rejected(self, store):
        self.write(store, {"v": 1, "styles": [{"name": "../evil"}]})
        with pytest.raises(MalformedRegistry):
            store.load_style_registry()

    def test_garbage_rejected(self, store):
        self.write(store, "[not json")
        with pytest.raises(MalformedRegistry):
            store.load_style_registry()
