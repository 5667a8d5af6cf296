#!/usr/bin/env python3
"""Training-set-size sweep: 1-NN accuracy vs number of exemplars.

Generates banded-viewpoint synthetic train sets of growing size plus one
fixed held-out test set, and reports the proportion of test frames whose
max joint error stays within 50mm. Expect slow (roughly logarithmic)
growth; the largest size takes the bulk of the runtime.
"""

import argparse

from voxhand.experiments import size_trend


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--sizes", type=int, nargs="+", default=[100, 1000, 10000])
    parser.add_argument("--test-frames", type=int, default=200)
    parser.add_argument("--train-seed", type=int, default=7000)
    parser.add_argument("--test-seed", type=int, default=9999)
    args = parser.parse_args()

    result = size_trend(sizes=tuple(args.sizes), n_test=args.test_frames,
                        train_seed=args.train_seed, test_seed=args.test_seed)
    print(f"{'train size':>12} {'templates':>10} {'within 50mm':>12}")
    for size, db, p in zip(result.sizes, result.db_sizes,
                           result.proportions_max_50):
        print(f"{size:>12} {db:>10} {p:>11.1%}")


if __name__ == "__main__":
    main()
