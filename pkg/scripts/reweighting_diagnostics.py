"""Per-level one-step martingale check of the reweighted Brownian ladder law.

For every ladder level with enough visits, prints the weighted mean of
Z_{n+1} / Z_n with a path-clustered standard error; under the chain measure
each should be 1.

Usage: python3 scripts/reweighting_diagnostics.py [--paths 100000] [--eps0 0.2] [--beta 0.1]
"""

import argparse
import math

import numpy as np

from cpslab.experiments import ladder_sweep
from cpslab.measure import make_chain_measure, normalized_weights, reweight_ensemble
from cpslab.pathgen import ModelSpec, TimeGrid


def main() -> None:
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--paths", type=int, default=100_000)
    p.add_argument("--eps0", type=float, default=0.2)
    p.add_argument("--beta", type=float, default=0.1)
    p.add_argument("--n-steps", type=int, default=512)
    p.add_argument("--seed", type=int, default=7)
    p.add_argument("--min-visits", type=int, default=200)
    args = p.parse_args()
    (sweep,) = ladder_sweep(
        ModelSpec("brownian"), TimeGrid(1.0, args.n_steps), args.paths, args.seed, (args.eps0,), keep=True
    )
    chain = make_chain_measure(args.eps0, args.beta)
    w = normalized_weights(reweight_ensemble(sweep.ladders, chain))
    print(f"ESS {1 / np.sum(w**2):.0f} of {len(w)}")
    g = 1.0 + args.eps0
    per_level: dict[int, list] = {}
    for wi, lad in zip(w, sweep.ladders):
        ratio = np.where(lad.signs == 1, g, np.where(lad.signs == -1, 1 / g, 1.0))
        for lvl in np.unique(lad.levels[:-1]):
            sel = lad.levels[:-1] == lvl
            per_level.setdefault(int(lvl), []).append((wi * ratio[sel].sum(), wi * sel.sum(), sel.sum()))
    print(f"{'level':>6} {'visits':>8} {'mean':>9} {'se':>9} {'z':>6}")
    for lvl in sorted(per_level):
        a, b, visits = map(np.array, zip(*per_level[lvl]))
        if visits.sum() < args.min_visits:
            continue
        m = a.sum() / b.sum()
        se = math.sqrt(np.sum((a - m * b) ** 2)) / b.sum()
        print(f"{lvl:>6} {visits.sum():>8} {m:>9.5f} {se:>9.5f} {(m - 1) / se:>+6.2f}")


if __name__ == "__main__":
    main()
