#!/usr/bin/env python3
"""Train base / +csl / +sti / full on the high-clutter preset over several
seeds and print the median rank-1 per variant."""

import argparse
import time

from cstnet.experiments import ABLATION_VARIANTS, run_ablation


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--epochs", type=int, default=30)
    parser.add_argument("--seeds", type=str, default="0,1,2,3,4")
    args = parser.parse_args()
    seeds = tuple(int(s) for s in args.seeds.split(","))
    started = time.time()
    result = run_ablation(seeds=seeds, epochs=args.epochs, progress=print)
    print(f"{'variant':8s} median rank-1")
    for variant in ABLATION_VARIANTS:
        print(f"{variant:8s} {result.median(variant):.3f}")
    print(f"total {time.time() - started:.0f}s")


if __name__ == "__main__":
    main()
