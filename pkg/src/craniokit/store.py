"""Flat artifact store with one JSON index.

Artifacts (cohort manifests, model checkpoints, analysis bundles) stay as
plain files; ``index.json`` at the store root maps content-derived ids to
their paths and metadata. No database, trivially inspectable, and safe to
copy around as a directory.
"""

from __future__ import annotations

import hashlib
import json
from pathlib import Path

__all__ = ["StoreError", "content_id", "ArtifactStore"]


class StoreError(Exception):
    """Raised for unknown ids, mismatched references, or unreadable artifacts."""


def content_id(path) -> str:
    """First 12 hex digits of the sha256 of the file's bytes."""
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 20), b""):
            digest.update(block)
    return digest.hexdigest()[:12]


class ArtifactStore:
    """Registry of datasets, models, and analyses rooted at one directory."""

    def __init__(self, root):
        self.root = Path(root)
        self.root.mkdir(parents=True, exist_ok=True)
        self.index_path = self.root / "index.json"
        if self.index_path.exists():
            try:
                self._index = json.loads(self.index_path.read_text())
            except ValueError as exc:
                raise StoreError(f"corrupt index {self.index_path}: {exc}") from None
        else:
            self._index = {"datasets": {}, "models": {}, "analyses": {}}

    def _flush(self) -> None:
        self.index_path.write_text(
            json.dumps(self._index, indent=2, sort_keys=True) + "\n")

    def _store_path(self, path) -> str:
        path = Path(path).resolve()
        try:
            return path.relative_to(self.root.resolve()).as_posix()
        except ValueError:
            return str(path)

    def resolve(self, stored: str) -> Path:
        p = Path(stored)
        return p if p.is_absolute() else self.root / p

    def _drop_stale(self, category: str, key: str, stored: str) -> None:
        # re-registering a path means its content changed; the old id no
        # longer names any file, so keep one live entry per artifact path
        table = self._index[category]
        for old in [i for i, e in table.items() if e[key] == stored]:
            del table[old]

    # -- datasets -------------------------------------------------------------

    def add_dataset(self, manifest_path, topology_hash: str, *,
                    template_path=None, labels_path=None) -> str:
        did = content_id(manifest_path)
        stored = self._store_path(manifest_path)
        self._drop_stale("datasets", "manifest", stored)
        entry = {"manifest": stored,
                 "topology_hash": str(topology_hash)}
        if template_path is not None:
            entry["template"] = self._store_path(template_path)
        if labels_path is not None:
            entry["labels"] = self._store_path(labels_path)
        self._index["datasets"][did] = entry
        self._flush()
        return did

    def datasets(self) -> dict:
        return dict(self._index["datasets"])

    def dataset(self, did: str) -> dict:
        try:
            return dict(self._index["datasets"][did])
        except KeyError:
            raise StoreError(f"unknown dataset {did!r}") from None

    # -- models ---------------------------------------------------------------

    def add_model(self, checkpoint_path, dataset_id: str, topology_hash: str,
                  metrics: dict | None = None) -> str:
        ds = self.dataset(dataset_id)
        if ds["topology_hash"] != str(topology_hash):
            raise StoreError(
                f"model topology {topology_hash} does not match dataset "
                f"{dataset_id} ({ds['topology_hash']})")
        mid = content_id(checkpoint_path)
        stored = self._store_path(checkpoint_path)
        if metrics is None:
            # re-registration without metrics keeps whatever a prior eval set
            prev = next((e for e in self._index["models"].values()
                         if e["checkpoint"] == stored), None)
            metrics = dict(prev["metrics"]) if prev else {}
        self._drop_stale("models", "checkpoint", stored)
        self._index["models"][mid] = {
            "checkpoint": stored,
            "dataset": dataset_id,
            "topology_hash": str(topology_hash),
            "metrics": metrics}
        self._flush()
        return mid

    def set_metrics(self, model_id: str, metrics: dict) -> None:
        self.model(model_id)
        self._index["models"][model_id]["metrics"] = metrics
        self._flush()

    def models(self) -> dict:
        return dict(self._index["models"])

    def model(self, mid: str) -> dict:
        try:
            return dict(self._index["models"][mid])
        except KeyError:
            raise StoreError(f"unknown model {mid!r}") from None

    # -- analyses -------------------------------------------------------------

    def add_analysis(self, bundle_path, model_id: str) -> str:
        self.model(model_id)
        aid = content_id(bundle_path)
        stored = self._store_path(bundle_path)
        self._drop_stale("analyses", "bundle", stored)
        self._index["analyses"][aid] = {
            "bundle": stored,
            "model": model_id}
        self._flush()
        return aid

    def analyses(self) -> dict:
        return dict(self._index["analyses"])

    def analysis(self, aid: str) -> dict:
        try:
            return dict(self._index["analyses"][aid])
        except KeyError:
            raise StoreError(f"unknown analysis {aid!r}") from None
