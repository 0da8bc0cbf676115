# utils/test_storage.py
"""
Tests for design-bundle and run storage.
"""
import json
import os
import sys

import pytest

sys.path.append(os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

from config import REFERENCE_DIR
from gmac.codedesign import reference_bundle
from gmac.models import RunManifest
from utils.storage import MANIFEST_NAME, StorageManager, timestamp


@pytest.fixture
def storage(tmp_path):
    return StorageManager(designs_dir=str(tmp_path / "designs"), runs_dir=str(tmp_path / "runs"),
                          reference_dir=REFERENCE_DIR)


class TestDesigns:

    def test_save_and_load(self, storage):
        bundle = reference_bundle("MC-18")
        bundle.id = None
        bundle_id = storage.save_design(bundle)
        assert bundle_id.startswith("design_")
        loaded = storage.load_design(bundle_id)
        assert loaded.id == bundle_id
        assert loaded.sum_rate == pytest.approx(bundle.sum_rate)
        with open(os.path.join(storage.designs_dir, f"{bundle_id}.json")) as f:
            assert "created_at" in json.load(f)["_metadata"]

    def test_reference_fallback(self, storage):
        assert storage.load_design("opt_18db").constellation == "OPT"
        assert storage.load_design("missing") is None

    def test_list_designs(self, storage):
        storage.save_design(reference_bundle("MC-10"), "mine")
        designs = {d["id"]: d for d in storage.list_designs()}
        assert {"mc_10db", "mc_18db", "opt_18db", "mine"} <= set(designs)
        assert designs["mc_10db"]["created_at"] == "Unknown"
        assert designs["mine"]["created_at"] != "Unknown"

    def test_unreadable_bundle_skipped(self, storage):
        os.makedirs(storage.designs_dir)
        with open(os.path.join(storage.designs_dir, "broken.json"), "w") as f:
            f.write("{not json")
        assert "broken" not in {d["id"] for d in storage.list_designs()}


class TestRuns:

    def test_manifest_round_trip(self, storage):
        run_dir = storage.create_run_dir("capacity")
        assert os.path.isdir(run_dir)
        manifest = RunManifest(command="capacity", config_hash="0123", started_at=timestamp(),
                               outputs=["capacity.csv"])
        path = storage.write_manifest(run_dir, manifest)
        assert os.path.basename(path) == MANIFEST_NAME
        runs = storage.list_runs()
        assert len(runs) == 1
        assert runs[0]["command"] == "capacity"
        assert runs[0]["run"] == os.path.basename(run_dir)

    def test_explicit_out_dir(self, storage, tmp_path):
        out = str(tmp_path / "custom" / "run")
        assert storage.create_run_dir("design", out) == out
        assert os.path.isdir(out)

    def test_no_runs(self, storage):
        assert storage.list_runs() == []

    def test_tables(self, tmp_path):
        path = StorageManager.write_csv(str(tmp_path / "t.csv"), [{"a": 1, "b": 2, "c": 3}], ["a", "b"])
        with open(path) as f:
            assert f.read() == "a,b\n1,2\n"
        json_path = StorageManager.write_json(str(tmp_path / "t.json"), {"x": [1, 2]})
        with open(json_path) as f:
            assert json.load(f) == {"x": [1, 2]}
