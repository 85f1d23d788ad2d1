"""Workspace: a directory of cached pipeline artifacts.

Every artifact carries a sidecar recording the config hash and input
fingerprints it was built under; a mismatch means stale, and stale
artifacts are rebuilt rather than reused.  A lock file serializes
commands against the same workspace.
"""

from __future__ import annotations

import hashlib
import json
import os
from pathlib import Path

from .errors import ItemLookupError, WorkspaceLockError

LOCK_NAME = ".lock"


def file_hash(path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            digest.update(chunk)
    return digest.hexdigest()[:16]


class Workspace:
    def __init__(self, root):
        self.root = Path(root)
        self.root.mkdir(parents=True, exist_ok=True)

    def path(self, name: str) -> Path:
        return self.root / name

    def has(self, name: str) -> bool:
        return self.path(name).exists()

    def require(self, *names: str) -> None:
        missing = [n for n in names if not self.has(n)]
        if missing:
            raise ItemLookupError(
                "missing workspace artifacts (run the earlier pipeline stages first): "
                + ", ".join(missing),
                missing,
            )

    # -- staleness tracking -------------------------------------------------

    def _meta_path(self, name: str) -> Path:
        return self.root / f"{name}.meta.json"

    def is_fresh(self, name: str, key: dict) -> bool:
        """True when the artifact exists and was built under the same key."""
        if not self.has(name) or not self._meta_path(name).exists():
            return False
        try:
            with open(self._meta_path(name), encoding="utf-8") as fh:
                recorded = json.load(fh)
        except (OSError, json.JSONDecodeError):
            return False
        return recorded.get("key") == key and recorded.get("output") == file_hash(self.path(name))

    def record(self, name: str, key: dict) -> None:
        meta = {"key": key, "output": file_hash(self.path(name))}
        self.write_text(f"{name}.meta.json", json.dumps(meta, indent=2, sort_keys=True) + "\n")

    # -- atomic writes ------------------------------------------------------

    def write_text(self, name: str, text: str) -> Path:
        return self.write_bytes(name, text.encode("utf-8"))

    def write_bytes(self, name: str, blob: bytes) -> Path:
        target = self.path(name)
        tmp = self.root / f".{name}.tmp"
        with open(tmp, "wb") as fh:
            fh.write(blob)
        os.replace(tmp, target)
        return target

    # -- advisory lock ------------------------------------------------------

    def lock(self) -> "_Lock":
        return _Lock(self.root / LOCK_NAME)


class _Lock:
    def __init__(self, path: Path):
        self.path = path
        self._fd = None

    def __enter__(self):
        try:
            self._fd = os.open(self.path, os.O_CREAT | os.O_EXCL | os.O_WRONLY)
        except FileExistsError:
            raise WorkspaceLockError(
                f"workspace is locked by another command (remove {self.path} if stale)"
            ) from None
        os.write(self._fd, f"{os.getpid()}\n".encode("ascii"))
        return self

    def __exit__(self, *exc):
        if self._fd is not None:
            os.close(self._fd)
            self._fd = None
            try:
                os.unlink(self.path)
            except FileNotFoundError:
                pass
        return False
