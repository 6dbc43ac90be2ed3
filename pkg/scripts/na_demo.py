"""Effect of deleting responses at random on a toy fit.

Fits one simulated toy dataset, then refits after masking a growing share of
the response cells, and prints how far each estimate moves in units of the
complete-data standard error.

    python scripts/na_demo.py --seed 77 --rates 0.02 0.1 0.25
"""
import argparse

import numpy as np

from mixedpl.estimation import fit
from mixedpl.model import layout_for
from mixedpl.simulate import toy_generator, toy_spec


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--seed", type=int, default=77)
    ap.add_argument("--n", type=int, default=1000)
    ap.add_argument("--rates", type=float, nargs="+", default=[0.02, 0.1, 0.25])
    args = ap.parse_args()

    spec = toy_spec()
    names = layout_for(spec).names
    data = toy_generator(args.seed, args.n)
    full = fit(spec, data)
    print(f"complete data: logLik {full.log_pl:.2f}  CLAIC {full.claic:.2f}")

    rng = np.random.default_rng(args.seed)
    shifts = {}
    for rate in args.rates:
        mask = rng.random(data.y.shape) < rate
        part = fit(spec, data.with_missing(mask))
        shifts[rate] = (part.estimate_vector - full.estimate_vector) / full.se
        print(f"rate {rate:.2f}: {int(mask.sum())} cells masked, {part.n_empty_units} empty units, "
              f"logLik {part.log_pl:.2f}, converged {part.converged}")

    print()
    print(f"{'parameter':<12}" + "".join(f"{f'shift@{r:g}':>12}" for r in args.rates))
    for i, name in enumerate(names):
        print(f"{name:<12}" + "".join(f"{shifts[r][i]:12.3f}" for r in args.rates))


if __name__ == "__main__":
    main()
