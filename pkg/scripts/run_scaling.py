#!/usr/bin/env python3
"""Sweep sequence length for attention and scan encoders; write bench.csv and print the fitted exponents."""

import argparse
from pathlib import Path

from longdoc_bench.bench import fit_scaling_exponent, write_bench_csv
from longdoc_bench.encoder import EncoderConfig, attention_preset, init_weights


def main():
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.ArgumentDefaultsHelpFormatter)
    ap.add_argument("--lengths", default="512,1024,2048,4096,8192")
    ap.add_argument("--model-dim", type=int, default=64)
    ap.add_argument("--layers", type=int, default=2)
    ap.add_argument("--reps", type=int, default=3)
    ap.add_argument("--out", default="runs/scaling")
    args = ap.parse_args()

    lengths = [int(t) for t in args.lengths.split(",")]
    common = dict(vocab_size=8192, model_dim=args.model_dim, n_layers=args.layers)
    encoders = {
        f"attention-{lengths[-1]}": attention_preset(lengths[-1], n_heads=4, **common),
        "scan": EncoderConfig(kind="scan_sequential", **common),
        "scan-chunked": EncoderConfig(kind="scan_chunked", **common),
    }
    rows = []
    for name, cfg in encoders.items():
        rep = fit_scaling_exponent(init_weights(cfg), lengths, reps=args.reps)
        print(f"{name:>16}  beta={rep.beta:.3f}  " + "  ".join(f"{t}:{p.tokens_per_sec:,.0f}" for t, p in zip(lengths, rep.points)))
        rows.extend((name, p, rep.beta) for p in rep.points)

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_bench_csv(rows, out / "bench.csv")
    print(f"wrote {out / 'bench.csv'}")


if __name__ == "__main__":
    main()
