"""Trace of the semigroup against the tight and rank-scaled trace bounds over
a range of times, for a few random models."""

import argparse

import numpy as np

from covheat.fixtures import random_fixture
from covheat.operator import assemble, golden_thompson_rhs, trace_semigroup


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--models", type=int, default=4)
    args = ap.parse_args()

    rng = np.random.default_rng(args.seed)
    times = np.geomspace(0.01, 10.0, 7)
    for k in range(args.models):
        g, b = random_fixture(rng)
        op = assemble(g, b)
        print(f"# model {k}: {g.n} vertices, rank {b.rank}")
        print(f"{'t':>8} {'trace':>12} {'tight':>12} {'scaled':>12} {'trace/tight':>11}")
        for t in times:
            lhs = trace_semigroup(op, t)
            tight, scaled = golden_thompson_rhs(g, b, t)
            print(f"{t:8.3f} {lhs:12.5e} {tight:12.5e} {scaled:12.5e} {lhs / tight:11.4f}")


if __name__ == "__main__":
    main()
