"""Check the large-n structure behind the error predictions.

Prints how fast the scaled Gram matrix approaches diag(2/3 I, 2 I), and
compares the Monte Carlo spread of the first-order location and weight
errors with sqrt(3/2) sigma n^(p-3/2) / |w| and sqrt(1/2) sigma n^(p-1/2) / |w|.
"""

import argparse

import numpy as np

from speclab.measure import NoiseModel, draw_noise, random_measure
from speclab.perturbation import (
    build_design,
    gram_blocks,
    predicted_error_scales,
    scaled_gram_deviation,
    solve_first_order,
)


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--r", type=int, default=4)
    ap.add_argument("--gap", type=float, default=0.5)
    ap.add_argument("--sigma", type=float, default=0.01)
    ap.add_argument("--p", type=float, default=0.0)
    ap.add_argument("--draws", type=int, default=500)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    m = random_measure(args.r, args.gap, seed=args.seed)
    print("scaled Gram deviation from diag(2/3, 2)")
    for n in (64, 256, 1024, 4096):
        print(f"  n={n:5d}  {scaled_gram_deviation(gram_blocks(build_design(m, n)), n):.3e}")

    print(f"\nfirst-order error spread, p={args.p}, sigma={args.sigma}, {args.draws} draws")
    print(f"  {'n':>5} {'loc sim':>10} {'loc pred':>10} {'wt sim':>10} {'wt pred':>10}")
    model = NoiseModel(args.sigma, args.p, args.seed)
    wmin = np.abs(m.weights).min()
    k = int(np.argmin(np.abs(m.weights)))
    for n in (64, 256, 1024):
        d = build_design(m, n)
        sols = [solve_first_order(d, draw_noise(model, n, t)) for t in range(args.draws)]
        a = np.sqrt(np.mean([abs(s.a[k]) ** 2 for s in sols]))
        b = np.sqrt(np.mean([abs(s.b[k]) ** 2 for s in sols]))
        pa, pb = predicted_error_scales(n, args.sigma, args.p, wmin)
        print(f"  {n:5d} {a:10.3e} {pa:10.3e} {b:10.3e} {pb:10.3e}")


if __name__ == "__main__":
    main()
