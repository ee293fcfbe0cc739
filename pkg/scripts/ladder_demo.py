"""Build the first-exit ladder of one simulated path and print its rungs.

Usage: python3 scripts/ladder_demo.py [--eps0 0.2] [--seed 0] [--hurst H]
"""

import argparse

from cpslab.pathgen import ModelSpec, TimeGrid, regenerate
from cpslab.retirement import LadderParams, build_ladder, effective_epsilon, validate_sandwich


def main() -> None:
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--eps0", type=float, default=0.2)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--hurst", type=float, default=None, help="fractional Brownian driver")
    p.add_argument("--n-steps", type=int, default=4096)
    args = p.parse_args()
    model = ModelSpec("brownian") if args.hurst is None else ModelSpec("fractional_brownian", hurst=args.hurst)
    path = regenerate(model, TimeGrid(1.0, args.n_steps), args.seed)
    params = LadderParams(args.eps0)
    lad = build_ladder(path, params)
    print(f"{model.tag}, eps0={args.eps0}, barrier={params.barrier:.6f}, rungs={lad.n_rungs}")
    print(f"{'n':>4} {'tau':>10} {'level':>6} {'sign':>5} {'Z':>10}")
    for n, (t, lvl, z) in enumerate(zip(lad.taus, lad.levels, lad.z_values)):
        sign = int(lad.signs[n - 1]) if n else 0
        print(f"{n:>4} {t:>10.6f} {int(lvl):>6} {sign:>5} {z:>10.6f}")
    rep = validate_sandwich(path, lad, params)
    print(f"sandwich violations: {rep.violations}")
    print(f"factor range: {rep.factor_min} .. {rep.factor_max}")
    print(f"effective epsilon: {effective_epsilon(args.eps0)}")


if __name__ == "__main__":
    main()
