"""Run manifests: what ran, on which bytes, with which settings.

Every CLI run records enough to reproduce its outputs byte for byte; the
wall-clock duration is informational and excluded from anything hashed.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from importlib import metadata
from pathlib import Path


def tool_version() -> str:
    try:
        return metadata.version("moepatterns")
    except metadata.PackageNotFoundError:
        return "0.0.0+unpackaged"


def sha256_file(path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            digest.update(chunk)
    return digest.hexdigest()


def dump_json(payload: dict, path) -> None:
    """Deterministic JSON writer: sorted keys, fixed layout, trailing newline."""
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, sort_keys=True, indent=2, allow_nan=False)
        fh.write("\n")


@dataclass
class RunManifest:
    command: str
    argv: list[str]
    config: dict
    seed: int | None
    inputs: list[dict] = field(default_factory=list)
    outputs: list[str] = field(default_factory=list)
    version: str = field(default_factory=tool_version)
    duration_s: float = 0.0

    def add_input(self, path) -> None:
        self.inputs.append({"path": str(path), "sha256": sha256_file(path)})

    def add_output(self, path) -> None:
        self.outputs.append(str(path))

    def to_json(self) -> dict:
        return {
            "command": self.command,
            "argv": list(self.argv),
            "config": self.config,
            "seed": self.seed,
            "inputs": list(self.inputs),
            "outputs": list(self.outputs),
            "version": self.version,
            "duration_s": self.duration_s,
        }

    def write(self, output_dir) -> Path:
        path = Path(output_dir) / f"{self.command}.manifest.json"
        dump_json(self.to_json(), path)
        return path
