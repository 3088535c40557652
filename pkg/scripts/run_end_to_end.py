#!/usr/bin/env python3
"""Generate planted-marker corpora, then classify and retrieve with every encoder kind and merge the tables."""

import argparse
from pathlib import Path

from longdoc_bench import cli
from longdoc_bench.corpus import generate_synthetic_corpus, save_corpus


def main():
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.ArgumentDefaultsHelpFormatter)
    ap.add_argument("--docs", type=int, default=1000)
    ap.add_argument("--labels", type=int, default=5)
    ap.add_argument("--min-len", type=int, default=400)
    ap.add_argument("--max-len", type=int, default=900)
    ap.add_argument("--task", choices=["multilabel", "singlelabel"], default="multilabel")
    ap.add_argument("--model-dim", type=int, default=32)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--out", default="runs/e2e")
    args = ap.parse_args()

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    lens = (args.min_len, args.max_len)
    cls_path, ret_path = out / "classification.jsonl", out / "retrieval.jsonl"
    save_corpus(generate_synthetic_corpus(args.docs, lens, args.labels, args.task, args.seed), cls_path)
    save_corpus(generate_synthetic_corpus(args.docs // 5, lens, args.labels, "retrieval", args.seed), ret_path)

    model = ["--model-dim", str(args.model_dim), "--heads", "2", "--seed", str(args.seed)]
    runs = {"classify": [], "retrieve": []}
    for enc in ("attention", "scan", "scan-chunked"):
        for sub, corpus, task in (("classify", cls_path, args.task), ("retrieve", ret_path, "retrieval")):
            run_dir = out / f"{sub}-{enc}"
            code = cli.main([sub, "--corpus", str(corpus), "--task", task, "--encoder", enc, "--out", str(run_dir), *model])
            if code != 0:
                raise SystemExit(f"{sub} with {enc} failed; see {run_dir / 'INCOMPLETE'}")
            runs[sub].append(str(run_dir))
    for sub, dirs in runs.items():
        print(f"\n== {sub} ==")
        cli.main(["report", *dirs, "--out", str(out / f"report-{sub}")])


if __name__ == "__main__":
    main()
