"""Fingerprints for run configurations and checkpoint files"""

import hashlib
import json
from pathlib import Path
from typing import Any


def file_sha256(file_path: str | Path) -> str:
    """SHA-256 of a file, streamed in 64 KiB chunks"""
    sha256 = hashlib.sha256()
    with open(file_path, "rb") as f:
        for chunk in iter(lambda: f.read(65536), b""):
            sha256.update(chunk)
    return sha256.hexdigest()


def config_fingerprint(config: dict[str, Any]) -> str:
    """SHA-256 of the canonical JSON form of a config mapping.

    Keys are sorted and separators fixed, so two configs with the same resolved values
    always fingerprint identically regardless of TOML key order.
    """
    canonical = json.dumps(config, sort_keys=True, separators=(",", ":"), default=str)
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()
