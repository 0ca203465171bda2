#!/usr/bin/env python3
"""Train the full small-scale model on the moderate-nuisance preset for three
seeds and report per-seed and median rank-1."""

import argparse
import time

from cstnet.experiments import run_learnability


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--epochs", type=int, default=50)
    parser.add_argument("--seeds", type=str, default="0,1,2")
    args = parser.parse_args()
    seeds = tuple(int(s) for s in args.seeds.split(","))
    started = time.time()
    result = run_learnability(seeds=seeds, epochs=args.epochs, progress=print)
    print(f"median rank-1 over seeds {seeds}: {result.median:.3f} "
          f"({time.time() - started:.0f}s)")


if __name__ == "__main__":
    main()
