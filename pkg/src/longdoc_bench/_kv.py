"""Flat ``key = value`` text files, used for encoder configs and run manifests."""

from __future__ import annotations

import dataclasses
from pathlib import Path
from typing import Any, Mapping


def dumps(items: Mapping[str, Any]) -> str:
    lines = []
    for key, value in items.items():
        if value is None:
            value = "none"
        elif isinstance(value, bool):
            value = "true" if value else "false"
        elif isinstance(value, (list, tuple)):
            value = ",".join(str(v) for v in value)
        text = str(value)
        if "\n" in text:
            raise ValueError(f"value for {key!r} spans lines")
        lines.append(f"{key} = {text}")
    return "\n".join(lines) + "\n"


def loads(text: str) -> dict[str, str]:
    out: dict[str, str] = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        if "=" not in stripped:
            raise ValueError(f"line {lineno}: expected 'key = value'")
        key, value = (part.strip() for part in stripped.split("=", 1))
        if key in out:
            raise ValueError(f"line {lineno}: duplicate key {key!r}")
        out[key] = value
    return out


def read(path: str | Path) -> dict[str, str]:
    return loads(Path(path).read_text(encoding="utf-8"))


def coerce(raw: str, annotation: Any) -> Any:
    """Convert a raw string back to the type named by a dataclass field annotation."""
    ann = str(annotation)
    if raw == "none" and "None" in ann:
        return None
    if ann.startswith("int"):
        return int(raw)
    if ann.startswith("float"):
        return float(raw)
    if ann.startswith("bool"):
        if raw not in ("true", "false"):
            raise ValueError(f"bad boolean {raw!r}")
        return raw == "true"
    return raw


def to_dataclass(cls, items: Mapping[str, str]):
    fields = {f.name: f for f in dataclasses.fields(cls) if f.init}
    unknown = set(items) - set(fields)
    if unknown:
        raise ValueError(f"unknown keys for {cls.__name__}: {sorted(unknown)}")
    return cls(**{k: coerce(v, fields[k].type) for k, v in items.items()})
