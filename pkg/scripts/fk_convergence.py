"""Monte Carlo error of the path-integral estimate against the exact
semigroup as the number of paths grows (should scale like n^{-1/2})."""

import argparse

import numpy as np

from covheat.feynman_kac import mc_semigroup
from covheat.fixtures import FixtureSpec, random_fixture, random_section
from covheat.operator import apply_semigroup, assemble


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--t", type=float, default=0.5)
    ap.add_argument("--max-paths", type=int, default=200_000)
    args = ap.parse_args()

    rng = np.random.default_rng(args.seed)
    g, b = random_fixture(rng, FixtureSpec(n_min=10, n_max=10), nu=2)
    f = random_section(rng, g.n, b.rank)
    x = g.vertices[0]
    exact = apply_semigroup(assemble(g, b), args.t, f)[0]
    print(f"# {g.n} vertices, rank {b.rank}, t={args.t}")
    print(f"{'paths':>8} {'max|err|':>10} {'max stderr':>10} {'err*sqrt(n)':>11}")
    n = 1000
    while n <= args.max_paths:
        est = mc_semigroup(g, b, f, x, args.t, n, seed=args.seed)
        err = float(np.abs(est.value - exact).max())
        se = float(np.abs(est.stderr).max())
        print(f"{n:8d} {err:10.2e} {se:10.2e} {err * np.sqrt(n):11.3f}")
        n *= 4


if __name__ == "__main__":
    main()
