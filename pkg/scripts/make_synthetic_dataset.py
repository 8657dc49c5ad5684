#!/usr/bin/env python3
"""Generate a desk-scale gradient+noise training corpus as PNGs."""

import argparse

from c2f.training import make_synthetic_dataset


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--out", required=True, help="output directory")
    parser.add_argument("--count", type=int, default=500)
    parser.add_argument("--size", type=int, default=64)
    parser.add_argument("--seed", type=int, default=1)
    args = parser.parse_args()
    paths = make_synthetic_dataset(args.out, args.count, args.size, args.seed)
    print(f"wrote {len(paths)} patches under {args.out}")


if __name__ == "__main__":
    main()
