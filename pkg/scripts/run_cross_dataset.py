#!/usr/bin/env python3
"""Cross-dataset generalization grid over viewpoint-disjoint synthetic sets.

Two train/test pairs are sampled from non-overlapping viewpoint bands;
the diagonal entries (train and test from the same band) should clearly
beat the off-diagonal transfers.
"""

import argparse

from voxhand.experiments import viewpoint_transfer


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--train-frames", type=int, default=250)
    parser.add_argument("--test-frames", type=int, default=100)
    parser.add_argument("--seed", type=int, default=333)
    args = parser.parse_args()

    result = viewpoint_transfer(n_train=args.train_frames,
                                n_test=args.test_frames, seed=args.seed)
    names = sorted({k[0] for k in result.matrix})
    header = "train\\test" + "".join(f"{n:>8}" for n in names)
    print(header)
    for train in names:
        row = "".join(f"{result.matrix[(train, test)]:>8.2f}" for test in names)
        print(f"{train:>10}{row}")


if __name__ == "__main__":
    main()
