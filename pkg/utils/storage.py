# Local storage utilities
"""
Utilities for storing and retrieving design bundles, run manifests and tables.
"""
import os
import csv
import json
import uuid
import logging
import datetime

import sys
sys.path.append(os.path.dirname(os.path.dirname(os.path.abspath(__file__))))
from config import DESIGNS_DIR, RUNS_DIR, REFERENCE_DIR, TOOL_VERSION
from gmac.models import DesignBundle, RunManifest

logger = logging.getLogger(__name__)

MANIFEST_NAME = "manifest.json"


def timestamp():
    return datetime.datetime.now().isoformat(timespec="seconds")


class StorageManager:
    """Manage design bundles and run outputs on the local filesystem."""

    def __init__(self, designs_dir=None, runs_dir=None, reference_dir=None):
        """
        Initialize the storage manager.

        Args:
            designs_dir (str, optional): where designed bundles are saved
            runs_dir (str, optional): parent of per-run output directories
            reference_dir (str, optional): read-only reference bundles
        """
        self.designs_dir = designs_dir or DESIGNS_DIR
        self.runs_dir = runs_dir or RUNS_DIR
        self.reference_dir = reference_dir or REFERENCE_DIR

    def save_design(self, bundle: DesignBundle, bundle_id=None):
        """
        Save a design bundle.

        Args:
            bundle (DesignBundle): bundle to save
            bundle_id (str, optional): ID to use; generated when missing

        Returns:
            str: ID of the saved bundle
        """
        if not bundle_id:
            bundle_id = bundle.id or f"design_{uuid.uuid4().hex[:8]}_{datetime.datetime.now().strftime('%Y%m%d')}"
        bundle.id = bundle_id

        data = bundle.model_dump(mode="json", by_alias=True)
        data["_metadata"] = {
            "id": bundle_id,
            "created_at": timestamp(),
            "version": TOOL_VERSION,
        }
        os.makedirs(self.designs_dir, exist_ok=True)
        file_path = os.path.join(self.designs_dir, f"{bundle_id}.json")
        with open(file_path, "w") as f:
            json.dump(data, f, indent=2)
        logger.info("Saved design bundle to %s", file_path)
        return bundle_id

    def _design_path(self, bundle_id):
        for directory in (self.designs_dir, self.reference_dir):
            file_path = os.path.join(directory, f"{bundle_id}.json")
            if os.path.exists(file_path):
                return file_path
        return None

    def load_design(self, bundle_id):
        """
        Load a design bundle by ID from the designs or reference directory.

        Returns:
            DesignBundle: the bundle, or None when no file matches
        """
        file_path = self._design_path(bundle_id)
        if file_path is None:
            logger.warning("No design found with ID: %s", bundle_id)
            return None
        with open(file_path, "r") as f:
            bundle = DesignBundle.model_validate(json.load(f))
        bundle.id = bundle.id or bundle_id
        return bundle

    def list_designs(self):
        """
        List stored and reference design bundles.

        Returns:
            list: summaries (id, constellation, dsnr_db, sum_rate, sum_capacity, created_at)
        """
        docs = {}
        for directory in (self.reference_dir, self.designs_dir):
            if not os.path.isdir(directory):
                continue
            for filename in sorted(os.listdir(directory)):
                if not filename.endswith(".json"):
                    continue
                file_path = os.path.join(directory, filename)
                try:
                    with open(file_path, "r") as f:
                        data = json.load(f)
                    bundle = DesignBundle.model_validate(data)
                except (json.JSONDecodeError, ValueError) as e:
                    logger.warning("Skipping unreadable bundle %s: %s", filename, e)
                    continue
                bundle.id = bundle.id or filename[:-len(".json")]
                summary = bundle.summary()
                summary["created_at"] = data.get("_metadata", {}).get("created_at", "Unknown")
                docs[bundle.id] = summary
        return list(docs.values())

    def create_run_dir(self, command, out_dir=None):
        """Output directory for one command run."""
        if not out_dir:
            stamp = datetime.datetime.now().strftime("%Y%m%d_%H%M%S")
            out_dir = os.path.join(self.runs_dir, f"{command}_{stamp}_{uuid.uuid4().hex[:6]}")
        os.makedirs(out_dir, exist_ok=True)
        return out_dir

    def write_manifest(self, run_dir, manifest: RunManifest):
        """Write the single manifest.json of a run directory."""
        file_path = os.path.join(run_dir, MANIFEST_NAME)
        with open(file_path, "w") as f:
            json.dump(manifest.model_dump(mode="json"), f, indent=2)
        return file_path

    def list_runs(self):
        """Manifests of all runs under the runs directory, newest first."""
        runs = []
        if not os.path.isdir(self.runs_dir):
            return runs
        for name in sorted(os.listdir(self.runs_dir), reverse=True):
            file_path = os.path.join(self.runs_dir, name, MANIFEST_NAME)
            if not os.path.exists(file_path):
                continue
            with open(file_path, "r") as f:
                try:
                    manifest = RunManifest.model_validate(json.load(f))
                except (json.JSONDecodeError, ValueError):
                    logger.warning("Skipping unreadable manifest in %s", name)
                    continue
            runs.append({"run": name, **manifest.model_dump(mode="json")})
        return runs

    @staticmethod
    def write_json(path, data):
        with open(path, "w") as f:
            json.dump(data, f, indent=2)
        return path

    @staticmethod
    def write_csv(path, rows, fieldnames):
        with open(path, "w", newline="") as f:
            writer = csv.DictWriter(f, fieldnames=fieldnames, extrasaction="ignore", lineterminator="\n")
            writer.writeheader()
            writer.writerows(rows)
        return path
