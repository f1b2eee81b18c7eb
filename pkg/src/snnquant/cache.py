"""Content-addressed on-disk cache for trained models and run artifacts.

A cache entry is a directory named by the SHA-256 of its canonical request
payload (step name, effective configuration, dataset hash, seed).  Entries
are built in a temporary directory and moved into place with one atomic
rename, so concurrent writers never expose partial artifacts and repeated
runs are pure cache hits.
"""

from __future__ import annotations

import hashlib
import json
import os
import shutil
import uuid
from pathlib import Path
from typing import Callable

__all__ = ["canonical_json", "cache_key", "RunCache"]


def canonical_json(data) -> str:
    return json.dumps(data, sort_keys=True, separators=(",", ":"), default=str)


def cache_key(payload: dict) -> str:
    """Deterministic content address of a request payload."""
    return hashlib.sha256(canonical_json(payload).encode("utf-8")).hexdigest()[:32]


class RunCache:
    def __init__(self, root: str | Path):
        self.root = Path(root)
        self.root.mkdir(parents=True, exist_ok=True)

    def path(self, key: str) -> Path:
        return self.root / key

    def has(self, key: str) -> bool:
        return self.path(key).is_dir()

    def fetch_or_build(self, key: str, build: Callable[[Path], None]) -> Path:
        """Return the entry directory, building it atomically on a miss.

        ``build`` receives a scratch directory to fill; on success it is
        renamed into place.  If another writer won the race, the scratch
        copy is discarded and the existing entry wins.
        """
        final = self.path(key)
        if final.is_dir():
            return final
        scratch = self.root / f".tmp-{key}-{uuid.uuid4().hex[:8]}"
        scratch.mkdir(parents=True)
        try:
            build(scratch)
            try:
                os.replace(scratch, final)
            except OSError:
                if not final.is_dir():
                    raise
                shutil.rmtree(scratch, ignore_errors=True)
        finally:
            shutil.rmtree(scratch, ignore_errors=True)
        return final
