#!/usr/bin/env python3
"""Largest single-window length each encoder handles under a traced-memory budget."""

import argparse

from longdoc_bench.bench import compare_context_capacity
from longdoc_bench.encoder import EncoderConfig, attention_preset, init_weights


def main():
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.ArgumentDefaultsHelpFormatter)
    ap.add_argument("--budget-mib", type=int, default=512)
    ap.add_argument("--t-max", type=int, default=100_000)
    ap.add_argument("--attention-cap", type=int, default=4096)
    args = ap.parse_args()

    common = dict(vocab_size=8192, model_dim=64, n_layers=2)
    weights = [
        init_weights(attention_preset(args.attention_cap, n_heads=4, **common)),
        init_weights(EncoderConfig(kind="scan_sequential", **common)),
        init_weights(EncoderConfig(kind="scan_chunked", **common)),
    ]
    for r in compare_context_capacity(weights, args.budget_mib << 20, args.t_max):
        why = "context cap" if r.hit_cap else ("search limit" if r.max_tokens == args.t_max else "memory budget")
        print(f"{r.kind:>16}  {r.max_tokens:>7} tokens  peak {r.peak_bytes / 2**20:7.1f} MiB  (bound by {why})")


if __name__ == "__main__":
    main()
