"""Cost of Euler (ODE) vs Euler-Maruyama (SDE) on dy = dt (+ 0.2 dW), plus accuracy."""
import argparse

import numpy as np

from flowcast.flow import constant_field
from flowcast.integrate import bench_table, euler_forward, euler_maruyama


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--repeats", type=int, default=20)
    ap.add_argument("--paths", type=int, default=10_000)
    args = ap.parse_args()

    print("scheme,N,op_count,fn_calls,runtime_s")
    for row in bench_table(args.repeats):
        print(row.row())
    print()
    print("N,ode_abs_error,sde_mean,sde_std")
    for n in (10, 100, 1000):
        y = euler_forward(constant_field([1.0]), np.zeros(1), n)[0]
        paths = euler_maruyama(1.0, 0.2, n_steps=n, n_paths=args.paths, seed=n)
        print(f"{n},{abs(y - 1.0):.2e},{paths.mean():.4f},{paths.std():.4f}")


if __name__ == "__main__":
    main()
