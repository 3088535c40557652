"""``longdoc-bench`` command line: classify, retrieve, bench and report."""

from __future__ import annotations

import argparse
import dataclasses
import hashlib
import json
import logging
import os
import sys
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Callable

import numpy as np
from threadpoolctl import threadpool_limits

from . import _kv
from .bench import ThroughputReport, fit_scaling_exponent, measure_throughput, write_bench_csv
from .corpus import SplitSpec, load_corpus, split_corpus
from .encoder import EncoderConfig, EncoderWeights, encode_windows, init_weights
from .heads import ProbeHyper, predict_document, train_probe
from .metrics import eval_classification, eval_retrieval
from .report import (
    TableRow,
    compare_hashes,
    emit_table,
    metrics_csv,
    read_manifest,
    sha256_file,
    sha256_text,
    write_manifest,
)
from .retrieval import DocEmbeddingStore, rank_candidates, write_rankings_csv
from .tokenizer import build_vocab, tokenize
from .window import WindowingConfig, make_windows

log = logging.getLogger("longdoc_bench")

ENCODER_KINDS = {"attention": "attention", "scan": "scan_sequential", "scan-chunked": "scan_chunked"}
OUT_ENV = "LONGDOC_BENCH_OUT"


class StageError(RuntimeError):
    def __init__(self, stage: str, exc: BaseException):
        super().__init__(f"stage '{stage}' failed: {exc}")
        self.stage = stage


def derive_seed(global_seed: int, stage: str) -> int:
    return int.from_bytes(hashlib.sha256(f"{global_seed}:{stage}".encode()).digest()[:4], "little")


@dataclass
class RunConfig:
    """Everything that determines a classify/retrieve run. Serialised into the manifest."""

    subcommand: str = "classify"
    corpus: str = ""
    task: str = "multilabel"
    encoder: str = "scan"
    model_dim: int = 64
    layers: int = 2
    heads: int = 4
    state_dim: int = 16
    chunk: int = 64
    max_context: int | None = None
    window_len: int | None = None
    overlap: float = 0.2
    threshold: float = 0.5
    k: str = "10"
    lr: float = 0.1
    epochs: int = 60
    batch: int = 64
    l2: float = 1e-4
    vocab_size: int = 8192
    split: str = "0.7,0.15,0.15"
    seed: int = 0

    def __post_init__(self):
        if self.encoder not in ENCODER_KINDS:
            raise ValueError(f"unknown encoder {self.encoder!r}")
        if self.subcommand == "classify" and self.task not in ("multilabel", "singlelabel"):
            raise ValueError(f"classify needs a multilabel or singlelabel task, got {self.task!r}")
        if self.subcommand == "retrieve" and self.task != "retrieval":
            raise ValueError("retrieve needs --task retrieval")
        self.ks  # validates
        self.split_spec  # validates
        self.windowing  # validates

    @property
    def ks(self) -> list[int]:
        ks = [int(x) for x in self.k.split(",") if x.strip()]
        if not ks or min(ks) < 1:
            raise ValueError(f"bad cutoff list {self.k!r}")
        return sorted(set(ks))

    @property
    def split_spec(self) -> SplitSpec:
        parts = [float(x) for x in self.split.split(",")]
        if len(parts) != 3:
            raise ValueError("--split needs three comma-separated fractions")
        return SplitSpec(*parts, seed=derive_seed(self.seed, "split"))

    @property
    def context_cap(self) -> int | None:
        if self.encoder == "attention":
            return self.max_context or 512
        return self.max_context

    @property
    def windowing(self) -> WindowingConfig:
        if self.window_len is not None:
            return WindowingConfig(self.window_len, self.overlap)
        return WindowingConfig(self.context_cap or 512, self.overlap)

    def encoder_config(self, vocab_size: int) -> EncoderConfig:
        return EncoderConfig(
            kind=ENCODER_KINDS[self.encoder],
            vocab_size=vocab_size,
            model_dim=self.model_dim,
            n_layers=self.layers,
            n_heads=self.heads,
            state_dim=self.state_dim,
            chunk_len=self.chunk,
            max_context=self.context_cap,
            seed=derive_seed(self.seed, "encoder"),
        )

    def probe_hyper(self) -> ProbeHyper:
        return ProbeHyper(self.lr, self.epochs, self.batch, self.l2, derive_seed(self.seed, "probe"))

    def items(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_items(cls, items: dict[str, str]) -> "RunConfig":
        return _kv.to_dataclass(cls, items)


@dataclass
class RunResult:
    out: Path
    rows: list[TableRow]
    hashes: dict[str, str]
    reproduced: bool | None = None


class _Stages:
    """Runs named stages; the first failure is re-raised as a StageError naming it."""

    def __init__(self):
        self.encode_seconds = 0.0
        self.encoded_tokens = 0

    def __call__(self, name: str, fn: Callable, *args, **kwargs):
        log.info("stage %s", name)
        try:
            return fn(*args, **kwargs)
        except StageError:
            raise
        except Exception as exc:
            raise StageError(name, exc) from exc

    def encode(self, ws, weights: EncoderWeights) -> np.ndarray:
        t0 = time.perf_counter()
        emb = encode_windows(ws.padded_ids, ws.masks, weights)
        self.encode_seconds += time.perf_counter() - t0
        self.encoded_tokens += ws.n_tokens
        return emb

    @property
    def tokens_per_sec(self) -> float | None:
        return self.encoded_tokens / self.encode_seconds if self.encode_seconds > 0 else None


def _model_name(cfg: RunConfig) -> str:
    if cfg.encoder == "attention":
        return f"attention-{cfg.context_cap}"
    return cfg.encoder


def _prepare_out(out: Path) -> None:
    out.mkdir(parents=True, exist_ok=True)
    marker = out / "INCOMPLETE"
    if marker.exists():
        marker.unlink()


def _write(out: Path, name: str, text: str) -> str:
    (out / name).write_text(text, encoding="utf-8")
    return sha256_text(text)


def cmd_classify(cfg: RunConfig, out: Path) -> RunResult:
    stage = _Stages()
    _prepare_out(out)
    docs, labels = stage("load", load_corpus, cfg.corpus, cfg.task)
    docs = stage("split", split_corpus, docs, cfg.split_spec)
    train = [d for d in docs if d.split == "train"]
    test = [d for d in docs if d.split == "test"]
    vocab = stage("vocab", build_vocab, [d.text for d in train], cfg.vocab_size)
    vocab.save(out / "vocab.txt")
    ecfg = stage("config", cfg.encoder_config, vocab.size)
    weights = stage("init", init_weights, ecfg)
    wcfg = cfg.windowing

    def embed(ds):
        return [stage.encode(make_windows(tokenize(d.text, vocab, d.id), wcfg), weights) for d in ds]

    train_emb = stage("encode-train", embed, train)
    test_emb = stage("encode-test", embed, test)

    X = np.concatenate(train_emb)
    if cfg.task == "singlelabel":
        Y = np.concatenate([np.full(len(e), labels.index[d.labels[0]]) for d, e in zip(train, train_emb)])
    else:
        Y = np.concatenate([np.tile(labels.encode(d.labels), (len(e), 1)) for d, e in zip(train, train_emb)])
    probe = stage("probe", train_probe, X, Y, cfg.task, len(labels), cfg.probe_hyper())

    preds = stage("predict", lambda: [predict_document(e, probe, cfg.threshold, d.id) for d, e in zip(test, test_emb)])
    gold = {d.id: [labels.index[lab] for lab in d.labels] for d in test}
    metrics = stage("evaluate", eval_classification, preds, gold, cfg.task, len(labels))

    pred_lines = "".join(
        json.dumps({"id": p.doc_id, "probs": [float(x) for x in p.probs], "predicted": [labels.labels[i] for i in p.predicted]}) + "\n"
        for p in preds
    )
    row = TableRow(_model_name(cfg), metrics, ecfg.max_context, stage.tokens_per_sec)
    hashes = {"corpus": sha256_file(cfg.corpus), "vocab": sha256_file(out / "vocab.txt")}
    hashes["predictions"] = _write(out, "predictions.jsonl", pred_lines)
    hashes["metrics"] = _write(out, "metrics.csv", metrics_csv([row]))
    text, table = emit_table([row])
    _write(out, "table.txt", text)
    _write(out, "table.csv", table)
    write_manifest(out / "manifest.txt", cfg.items(), hashes)
    return RunResult(out, [row], hashes)


def cmd_retrieve(cfg: RunConfig, out: Path) -> RunResult:
    stage = _Stages()
    _prepare_out(out)
    docs, _ = stage("load", load_corpus, cfg.corpus, cfg.task)
    judgments = {d.id: set(d.relevant_ids) for d in docs if d.relevant_ids}
    if not judgments:
        raise StageError("load", ValueError("corpus has no documents with relevant_ids"))
    vocab = stage("vocab", build_vocab, [d.text for d in docs], cfg.vocab_size)
    vocab.save(out / "vocab.txt")
    ecfg = stage("config", cfg.encoder_config, vocab.size)
    weights = stage("init", init_weights, ecfg)
    wcfg = cfg.windowing

    def embed_all():
        vecs = [stage.encode(make_windows(tokenize(d.text, vocab, d.id), wcfg), weights).mean(axis=0) for d in docs]
        return DocEmbeddingStore([d.id for d in docs], np.stack(vecs), ecfg.fingerprint())

    store = stage("embed", embed_all)
    store.save(out / "store.bin")
    all_ids = [d.id for d in docs]
    lists = stage("rank", lambda: [rank_candidates(q, store, [c for c in all_ids if c != q]) for q in sorted(judgments)])
    metrics = stage("evaluate", eval_retrieval, lists, judgments, cfg.ks)
    write_rankings_csv(lists, out / "rankings.csv")

    row = TableRow(_model_name(cfg), metrics, ecfg.max_context, stage.tokens_per_sec)
    hashes = {
        "corpus": sha256_file(cfg.corpus),
        "vocab": sha256_file(out / "vocab.txt"),
        "rankings": sha256_file(out / "rankings.csv"),
    }
    hashes["metrics"] = _write(out, "metrics.csv", metrics_csv([row]))
    text, table = emit_table([row])
    _write(out, "table.txt", text)
    _write(out, "table.csv", table)
    write_manifest(out / "manifest.txt", cfg.items(), hashes)
    return RunResult(out, [row], hashes)


def parse_encoder_spec(spec: str, base: dict, vocab_size: int, seed: int) -> EncoderConfig:
    """``attention-4096`` / ``attention`` / ``scan`` / ``scan-chunked`` to a config."""
    name, _, cap = spec.partition("-") if spec.startswith("attention") else (spec, "", "")
    if name not in ENCODER_KINDS:
        raise ValueError(f"unknown encoder spec {spec!r}")
    kind = ENCODER_KINDS[name]
    max_context = (int(cap) if cap else base["max_context"] or 512) if kind == "attention" else None
    return EncoderConfig(
        kind=kind,
        vocab_size=vocab_size,
        model_dim=base["model_dim"],
        n_layers=base["layers"],
        n_heads=base["heads"],
        state_dim=base["state_dim"],
        chunk_len=base["chunk"],
        max_context=max_context,
        seed=seed,
    )


def cmd_bench(args, out: Path) -> list[tuple[str, ThroughputReport, float | None]]:
    stage = _Stages()
    out.mkdir(parents=True, exist_ok=True)
    lengths = [int(x) for x in args.lengths.split(",")]
    base = {k: getattr(args, k) for k in ("model_dim", "layers", "heads", "state_dim", "chunk", "max_context")}
    seed = derive_seed(args.seed, "bench")
    rows = []
    for spec in args.encoders.split(","):
        ecfg = stage("config", parse_encoder_spec, spec, base, args.vocab_size, derive_seed(args.seed, "encoder"))
        weights = init_weights(ecfg)
        if len(lengths) >= 4:
            sc = stage(f"bench-{spec}", fit_scaling_exponent, weights, lengths, args.reps, args.warmup, seed=seed)
            rows.extend((spec, p, sc.beta) for p in sc.points)
        else:
            for T in lengths:
                rows.append((spec, stage(f"bench-{spec}", measure_throughput, weights, T, args.reps, args.warmup, seed=seed), None))
    write_bench_csv(rows, out / "bench.csv")
    return rows


def cmd_report(paths: list[str], out: Path) -> str:
    """Merge the ``table.csv`` files of several runs into one table."""
    header = None
    body = []
    for p in paths:
        path = Path(p)
        if path.is_dir():
            path = path / "table.csv"
        lines = path.read_text(encoding="utf-8").splitlines()
        if header is None:
            header = lines[0]
        elif lines[0] != header:
            raise ValueError(f"{path}: columns differ from the first table (mixed task kinds?)")
        body.extend(lines[1:])
    if header is None:
        raise ValueError("no tables given")
    merged = "\n".join([header, *body]) + "\n"
    out.mkdir(parents=True, exist_ok=True)
    (out / "report.csv").write_text(merged, encoding="utf-8")
    return merged


# --- argument parsing --------------------------------------------------------


def _add_model_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--model-dim", type=int, default=64, help="encoder width d")
    p.add_argument("--layers", type=int, default=2, help="number of encoder layers")
    p.add_argument("--heads", type=int, default=4, help="attention heads (must divide --model-dim)")
    p.add_argument("--state-dim", type=int, default=16, help="scan state size N")
    p.add_argument("--chunk", type=int, default=64, help="chunk length for scan-chunked")
    p.add_argument("--max-context", type=int, default=None, help="attention context cap (default 512); scans are unbounded")
    p.add_argument("--vocab-size", type=int, default=8192, help="vocabulary size including 4 reserved ids")
    p.add_argument("--seed", type=int, default=0, help="global seed; stage seeds derive from it")
    p.add_argument("--threads", type=int, default=1, help="cap on BLAS worker threads")
    p.add_argument("--out", default=None, help=f"output directory (falls back to ${OUT_ENV})")


def _add_pipeline_flags(p: argparse.ArgumentParser, task_default: str, tasks: list[str]) -> None:
    p.add_argument("--corpus", default=None, help="line-delimited JSON corpus")
    p.add_argument("--task", choices=tasks, default=task_default, help="validation mode for the corpus")
    p.add_argument("--encoder", choices=sorted(ENCODER_KINDS), default="scan", help="encoder family")
    p.add_argument("--window-len", type=int, default=None, help="window length; 0 = whole document (default: attention cap, else 512)")
    p.add_argument("--overlap", type=float, default=0.2, help="fractional overlap between consecutive windows")
    p.add_argument("--manifest", default=None, help="rerun exactly the configuration recorded in this manifest")
    _add_model_flags(p)


def build_parser() -> argparse.ArgumentParser:
    fmt = argparse.ArgumentDefaultsHelpFormatter
    parser = argparse.ArgumentParser(prog="longdoc-bench", description=__doc__, formatter_class=fmt)
    parser.add_argument("-v", "--verbose", action="store_true", help="log stage progress")
    sub = parser.add_subparsers(dest="subcommand", required=True)

    c = sub.add_parser("classify", help="windowed classification with a linear probe", formatter_class=fmt)
    _add_pipeline_flags(c, "multilabel", ["multilabel", "singlelabel"])
    c.add_argument("--threshold", type=float, default=0.5, help="multi-label decision threshold")
    c.add_argument("--lr", type=float, default=0.1, help="probe learning rate")
    c.add_argument("--epochs", type=int, default=60, help="probe training epochs")
    c.add_argument("--batch", type=int, default=64, help="probe mini-batch size")
    c.add_argument("--l2", type=float, default=1e-4, help="probe L2 penalty")
    c.add_argument("--split", default="0.7,0.15,0.15", help="train,validation,test fractions")

    r = sub.add_parser("retrieve", help="cosine-similarity precedent retrieval", formatter_class=fmt)
    _add_pipeline_flags(r, "retrieval", ["retrieval"])
    r.add_argument("--k", default="10", help="comma-separated recall/nDCG cutoffs")

    b = sub.add_parser("bench", help="throughput and length-scaling benchmark", formatter_class=fmt)
    b.add_argument("--encoders", default="attention-512,scan", help="comma list of attention-<cap>, scan, scan-chunked")
    b.add_argument("--lengths", default="512,1024,2048,4096", help="comma list of sequence lengths (>= 4 enables the scaling fit)")
    b.add_argument("--reps", type=int, default=3, help="timed repetitions per point")
    b.add_argument("--warmup", type=int, default=1, help="discarded warmup repetitions")
    _add_model_flags(b)

    rep = sub.add_parser("report", help="merge table.csv files from several runs", formatter_class=fmt)
    rep.add_argument("runs", nargs="+", help="run directories or table.csv files")
    rep.add_argument("--out", default=None, help=f"output directory (falls back to ${OUT_ENV})")
    return parser


def _out_dir(args) -> Path:
    out = args.out or os.environ.get(OUT_ENV)
    if not out:
        raise SystemExit("error: no output directory; pass --out or set " + OUT_ENV)
    return Path(out)


def _run_config(args) -> tuple[RunConfig, dict[str, str] | None]:
    if args.manifest:
        items, hashes = read_manifest(args.manifest)
        cfg = RunConfig.from_items(items)
        if cfg.subcommand != args.subcommand:
            raise ValueError(f"manifest is for '{cfg.subcommand}', not '{args.subcommand}'")
        if sha256_file(cfg.corpus) != hashes.get("corpus"):
            raise ValueError(f"corpus {cfg.corpus} changed since the manifest was written; refusing to claim reproduction")
        return cfg, hashes
    if not args.corpus:
        raise ValueError("--corpus is required")
    fields = {f.name for f in dataclasses.fields(RunConfig)}
    values = {k: v for k, v in vars(args).items() if k in fields and k != "subcommand"}
    return RunConfig(subcommand=args.subcommand, **values), None


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    out = _out_dir(args)
    try:
        if args.subcommand == "report":
            try:
                sys.stdout.write(cmd_report(args.runs, out))
            except (ValueError, OSError) as exc:
                print(f"error: {exc}", file=sys.stderr)
                return 1
            return 0
        with threadpool_limits(limits=max(1, args.threads)):
            if args.subcommand == "bench":
                rows = cmd_bench(args, out)
                for name, rep, beta in rows:
                    beta_s = "" if beta is None else f"  beta={beta:.3f}"
                    print(f"{name:>16}  T={rep.T:<7} windows={rep.windows:<3} {rep.tokens_per_sec:12.1f} tok/s{beta_s}")
                return 0
            try:
                cfg, expected = _run_config(args)
            except (ValueError, OSError) as exc:
                raise StageError("config", exc) from exc
            run = cmd_classify if cfg.subcommand == "classify" else cmd_retrieve
            result = run(cfg, out)
            sys.stdout.write((out / "table.txt").read_text(encoding="utf-8"))
            if expected is not None:
                diff = compare_hashes(expected, result.hashes)
                if diff:
                    print(f"NOT reproduced: hashes differ for {', '.join(diff)}", file=sys.stderr)
                    return 3
                print("reproduced: all content hashes match the manifest")
            return 0
    except StageError as exc:
        out.mkdir(parents=True, exist_ok=True)
        (out / "INCOMPLETE").write_text(f"{exc}\n", encoding="utf-8")
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
