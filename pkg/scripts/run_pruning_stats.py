#!/usr/bin/env python3
"""Jumping-window pruning statistics on rendered hand scenes.

Reports what fraction of all (M-N+1)^3 scan offsets survive the
surface-containment prune for typical single-hand frames.
"""

import argparse

import numpy as np

from voxhand.experiments import pruning_ratio


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--scenes", type=int, default=10)
    parser.add_argument("--seed", type=int, default=77)
    args = parser.parse_args()

    result = pruning_ratio(n_scenes=args.scenes, seed=args.seed)
    print(f"candidate fraction over {args.scenes} rendered scenes:")
    print(f"  mean {np.mean(result.ratios):.1%}  min {min(result.ratios):.1%}  "
          f"max {max(result.ratios):.1%}")


if __name__ == "__main__":
    main()
