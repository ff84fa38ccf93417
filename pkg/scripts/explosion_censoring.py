"""Censored fraction of jump paths on half-line graphs with edge weights
b(k, k+1) = growth^k.  Geometric growth makes the walk explode in finite
time, so paths hit the jump cap and are flagged as censored."""

import argparse

import numpy as np

from covheat.paths import half_line_oracle, path_stream, sample_path


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--paths", type=int, default=200)
    ap.add_argument("--t", type=float, default=2.0)
    ap.add_argument("--max-jumps", type=int, default=500)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    print(f"{'growth':>7} {'censored':>9} {'mean resolved':>14}")
    for growth in (1.0, 1.5, 2.0, 4.0):
        oracle = half_line_oracle(lambda k, a=growth: a**k)
        cens, resolved = [], []
        for p in range(args.paths):
            path = sample_path(oracle, 0, args.t, path_stream(args.seed, p), args.max_jumps)
            cens.append(path.censored)
            resolved.append(path.resolved_until)
        print(f"{growth:7.1f} {np.mean(cens):9.3f} {np.mean(resolved):14.4f}")


if __name__ == "__main__":
    main()
