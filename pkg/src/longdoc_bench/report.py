"""Result tables in the benchmark column layout, plus run manifests."""

from __future__ import annotations

import csv
import hashlib
import io
from dataclasses import dataclass
from decimal import ROUND_HALF_EVEN, Decimal
from pathlib import Path
from typing import Mapping, Sequence

from . import _kv
from .metrics import MetricReport

HARNESS_VERSION = "0.1.0"

TOKS_NOTE = "Tok/s: encoder forward pass only (inference), real tokens over wall time."

CLASSIFICATION_COLUMNS = ["model", "Micro-F1", "Macro-F1", "Acc.", "AUC", "Len", "Tok/s"]


class ReportError(ValueError):
    pass


def retrieval_columns(ks: Sequence[int]) -> list[str]:
    return ["model", "MAP", "MRR", *[f"R@{k}" for k in ks], *[f"nDCG@{k}" for k in ks], "Len", "Tok/s"]


@dataclass
class TableRow:
    model: str
    metrics: MetricReport
    max_context: int | None  # None renders as "Flex"
    tokens_per_sec: float | None = None


def fmt_percent(value: float | None) -> str:
    if value is None:
        return "-"
    return str((Decimal(repr(float(value))) * 100).quantize(Decimal("0.1"), rounding=ROUND_HALF_EVEN))


def fmt_kilo(tokens_per_sec: float | None) -> str:
    if tokens_per_sec is None:
        return "-"
    k = (Decimal(repr(float(tokens_per_sec))) / 1000).quantize(Decimal("0.1"), rounding=ROUND_HALF_EVEN)
    return f"{k}k"


def fmt_len(max_context: int | None) -> str:
    return "Flex" if max_context is None else str(max_context)


def _metric_values(m: MetricReport, ks: Sequence[int]) -> list[float | None]:
    if m.task == "classification":
        return [m.micro_f1, m.macro_f1, m.accuracy, m.auc]
    return [m.map, m.mrr, *[m.recall_at_k[k] for k in ks], *[m.ndcg_at_k[k] for k in ks]]


def _task_of(rows: Sequence[TableRow]) -> tuple[str, list[int]]:
    if not rows:
        raise ReportError("no rows to render")
    tasks = {r.metrics.task for r in rows}
    if len(tasks) != 1:
        raise ReportError(f"rows mix task kinds: {sorted(tasks)}")
    task = tasks.pop()
    ks = sorted(rows[0].metrics.recall_at_k) if task == "retrieval" else []
    if any(sorted(r.metrics.recall_at_k) != ks for r in rows):
        raise ReportError("rows use different cutoffs")
    return task, ks


def _csv(header: list[str], body: list[list[str]]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(body)
    return buf.getvalue()


def emit_table(rows: Sequence[TableRow]) -> tuple[str, str]:
    """Return (aligned text table, CSV) with percentages to one decimal and Tok/s in thousands."""
    task, ks = _task_of(rows)
    header = CLASSIFICATION_COLUMNS if task == "classification" else retrieval_columns(ks)
    body = [
        [r.model, *[fmt_percent(v) for v in _metric_values(r.metrics, ks)], fmt_len(r.max_context), fmt_kilo(r.tokens_per_sec)]
        for r in rows
    ]
    widths = [max(len(line[i]) for line in [header, *body]) for i in range(len(header))]
    lines = []
    for j, line in enumerate([header, *body]):
        cells = [line[0].ljust(widths[0])] + [c.rjust(w) for c, w in zip(line[1:], widths[1:])]
        lines.append("  ".join(cells))
        if j == 0:
            lines.append("-" * len(lines[0]))
    lines.append(TOKS_NOTE)
    return "\n".join(lines) + "\n", _csv(header, body)


def metrics_csv(rows: Sequence[TableRow]) -> str:
    """Full-precision metric values, no timing columns: byte-stable across reruns."""
    task, ks = _task_of(rows)
    header = (CLASSIFICATION_COLUMNS if task == "classification" else retrieval_columns(ks))[:-1] + ["n_items"]
    body = [
        [r.model, *["" if v is None else repr(float(v)) for v in _metric_values(r.metrics, ks)], fmt_len(r.max_context), str(r.metrics.n_items)]
        for r in rows
    ]
    return _csv(header, body)


# --- manifests ---------------------------------------------------------------


def sha256_file(path: str | Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 20), b""):
            h.update(block)
    return h.hexdigest()


def sha256_text(text: str) -> str:
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


def write_manifest(path: str | Path, config: Mapping[str, object], hashes: Mapping[str, str]) -> None:
    """Flat key-value manifest: the run configuration followed by ``hash.*`` content hashes."""
    items = dict(config)
    items["harness_version"] = HARNESS_VERSION
    for key, value in hashes.items():
        items[f"hash.{key}"] = value
    Path(path).write_text(_kv.dumps(items), encoding="utf-8")


def read_manifest(path: str | Path) -> tuple[dict[str, str], dict[str, str]]:
    """Split a manifest into (config items, hashes)."""
    items = _kv.read(path)
    hashes = {k[len("hash.") :]: v for k, v in items.items() if k.startswith("hash.")}
    config = {k: v for k, v in items.items() if not k.startswith("hash.") and k != "harness_version"}
    return config, hashes


def compare_hashes(expected: Mapping[str, str], actual: Mapping[str, str]) -> list[str]:
    """Names of hashes that differ or are missing on either side."""
    return sorted(k for k in set(expected) | set(actual) if expected.get(k) != actual.get(k))
