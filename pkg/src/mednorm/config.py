"""YAML run configuration with a closed key set.

Example (the ``dict`` block is all the KB builder needs)::

    name: quaero
    dict:
      umls:
        lang: [fr, en]
        meta_path: ../2014AB/META
        semantic_groups: [ANAT, CHEM, DEVI, DISO, GEOG, LIVB, OBJC, PHEN, PHYS, PROC]
    linker:
      k: 64
      type_filter: {DISO: DISO}
    reranker:
      lambda: 1.0
      epochs: 20
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Mapping

import yaml

from .kb import KbConfig
from .reranker import RerankerConfig


class ConfigError(ValueError):
    pass


_SCHEMA: dict[str, Any] = {
    "name": str,
    "dict": {
        "umls": {"lang": list, "meta_path": str, "semantic_groups": list, "sabs": list, "include_suppressed": bool},
        "jsonl": {"path": str, "lang": list, "semantic_groups": list},
        "group_map": str,
        "alias_sources": list,
    },
    "linker": {"k": int, "dense": {"provider": str, "dim": int}, "type_filter": dict},
    "reranker": {"k": int, "lambda": (int, float), "learning_rate": (int, float), "epochs": int, "ctx_len": int,
                 "seed": int, "max_grad_norm": (int, float, type(None)), "init": str, "cg_scale": (int, float)},
}


def _check(obj: Any, schema: Any, path: str) -> None:
    if isinstance(schema, dict):
        if not isinstance(obj, Mapping):
            raise ConfigError(f"{path or 'config'}: expected a mapping")
        for key, value in obj.items():
            if key not in schema:
                raise ConfigError(f"unknown config key {f'{path}.{key}' if path else key!r}")
            _check(value, schema[key], f"{path}.{key}" if path else key)
    elif not isinstance(obj, schema) or (schema is int and isinstance(obj, bool)):
        raise ConfigError(f"{path}: expected {schema}, got {type(obj).__name__}")


@dataclass(frozen=True)
class RunConfig:
    raw: Mapping[str, Any]
    base_dir: Path
    digest: str
    name: str = "kb"

    def section(self, key: str) -> Mapping[str, Any]:
        return self.raw.get(key) or {}

    def path(self, p: str) -> Path:
        q = Path(p)
        return q if q.is_absolute() else self.base_dir / q

    def kb_config(self) -> KbConfig:
        d = self.section("dict")
        group_map = self.path(d["group_map"]) if "group_map" in d else None
        if "umls" in d:
            u = d["umls"]
            if "meta_path" not in u:
                raise ConfigError("dict.umls.meta_path is required")
            return KbConfig(
                name=self.name, source="umls_rrf", meta_path=self.path(u["meta_path"]),
                languages=tuple(u.get("lang", ["en"])),
                semantic_groups=tuple(u["semantic_groups"]) if "semantic_groups" in u else None,
                source_vocabularies=tuple(u["sabs"]) if "sabs" in u else None,
                include_suppressed=u.get("include_suppressed", False), group_map_path=group_map)
        if "jsonl" in d:
            j = d["jsonl"]
            if "path" not in j:
                raise ConfigError("dict.jsonl.path is required")
            return KbConfig(
                name=self.name, source="jsonl", path=self.path(j["path"]), languages=tuple(j.get("lang", ["en"])),
                semantic_groups=tuple(j["semantic_groups"]) if "semantic_groups" in j else None,
                group_map_path=group_map)
        raise ConfigError("config has no dict.umls or dict.jsonl section")

    def alias_sources(self) -> list[Path]:
        return [self.path(p) for p in self.section("dict").get("alias_sources", [])]

    def type_filter(self) -> dict[str, str] | None:
        tf = self.section("linker").get("type_filter")
        return dict(tf) if tf is not None else None

    def reranker_config(self, **overrides) -> RerankerConfig:
        r = dict(self.section("reranker"))
        if "lambda" in r:
            r["lam"] = r.pop("lambda")
        r.update({k: v for k, v in overrides.items() if v is not None})
        if "type_to_group" not in r and self.type_filter() is not None:
            r["type_to_group"] = self.type_filter()
        return RerankerConfig(**r)


def load_config(path: str | Path) -> RunConfig:
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file {path} not found")
    raw_bytes = path.read_bytes()
    try:
        raw = yaml.safe_load(raw_bytes) or {}
    except yaml.YAMLError as e:
        raise ConfigError(f"{path}: {e}") from None
    _check(raw, _SCHEMA, "")
    return RunConfig(raw, path.parent, hashlib.sha256(raw_bytes).hexdigest(), raw.get("name", path.stem))
