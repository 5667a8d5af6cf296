#!/usr/bin/env python3
"""Train-equals-test memorization check for the exemplar scanner.

Builds a synthetic set, turns every frame into a template, and scans the
same frames: every match must land at distance zero and every pose must
score within 50mm max-error.
"""

import argparse

from voxhand.experiments import memorization


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--frames", type=int, default=200)
    parser.add_argument("--seed", type=int, default=101)
    args = parser.parse_args()

    result = memorization(n_frames=args.frames, seed=args.seed)
    print(f"frames:            {result.n_frames}")
    print(f"templates built:   {result.n_templates} "
          f"({len(result.build_rejections)} rejected)")
    print(f"distance-0 matches: {result.n_distance_zero}")
    print(f"within 50mm (max): {result.proportion_max_50:.1%}")


if __name__ == "__main__":
    main()
