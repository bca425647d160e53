"""Run manifests recorded next to every artifact a CLI stage produces.

File artifacts get a sidecar ``<file>.manifest.json``; index directories
carry the run record under the ``"run"`` key of their own ``manifest.json``
so each directory holds exactly one manifest. Timestamps only ever appear
in manifests.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Any

from . import __version__

TOOL = "mednorm"


class ManifestError(ValueError):
    pass


@dataclass
class RunManifest:
    stage: str
    kb_hash: str | None = None
    config_digest: str | None = None
    params: dict[str, Any] = field(default_factory=dict)
    inputs: dict[str, Any] = field(default_factory=dict)
    tool: str = TOOL
    version: str = __version__
    started_at: str = field(default_factory=lambda: _now())
    finished_at: str | None = None

    def finish(self) -> "RunManifest":
        self.finished_at = _now()
        return self

    def to_json(self) -> dict:
        return {
            "tool": self.tool, "version": self.version, "stage": self.stage,
            "kb_hash": self.kb_hash, "config_digest": self.config_digest,
            "params": self.params, "inputs": self.inputs,
            "timestamps": {"started_at": self.started_at, "finished_at": self.finished_at},
        }


def describe_input(path: str | Path) -> dict:
    """Base name plus content digest, so manifests do not depend on the working directory."""
    p = Path(path)
    out = {"name": p.name}
    if p.is_file():
        out["sha256"] = hashlib.sha256(p.read_bytes()).hexdigest()
    return out


def _now() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


def sidecar_path(artifact: str | Path) -> Path:
    p = Path(artifact)
    return p.with_name(p.name + ".manifest.json")


def write_sidecar(artifact: str | Path, run: RunManifest) -> Path:
    path = sidecar_path(artifact)
    path.write_text(json.dumps(run.to_json(), indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return path


def read_kb_hash(artifact: str | Path) -> str | None:
    """kb_hash recorded for a file or index directory, or None if there is no manifest."""
    p = Path(artifact)
    path = p / "manifest.json" if p.is_dir() else sidecar_path(p)
    if not path.exists():
        return None
    try:
        return json.loads(path.read_text(encoding="utf-8")).get("kb_hash")
    except json.JSONDecodeError as e:
        raise ManifestError(f"{path}: {e}") from None


def strip_timestamps(obj: Any) -> Any:
    """Manifest content with timestamps removed, for reproducibility comparisons."""
    if isinstance(obj, dict):
        return {k: strip_timestamps(v) for k, v in obj.items() if k != "timestamps"}
    if isinstance(obj, list):
        return [strip_timestamps(v) for v in obj]
    return obj
