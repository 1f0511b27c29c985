"""Check closed-form profiles against the grid oracle over random configs of each case."""
import argparse
import time

import numpy as np

from busgame.equilibria import epsilon_bound, solve_noncoop
from busgame.game import GameConfig
from busgame.oracle import verify_epsilon_equilibrium
from busgame.torus import reduce


def random_instance(rng, tag):
    D, T = rng.uniform(5, 50), rng.uniform(0.5, 2)
    v_max = rng.uniform(0.05, 0.49) * D / T
    cfg = GameConfig(D=D, T=T, v_min=v_max * rng.uniform(0.05, 0.95), v_max=v_max)
    d = cfg.d
    d0 = {"NC-a": 0.0, "NC-b": d * rng.uniform(0.01, 0.99), "NC-c": d,
          "NC-d": rng.uniform(d, D / 2)}[tag]
    if tag in ("NC-b", "NC-c"):
        cfg = cfg.replace(epsilon=epsilon_bound(tag, d0, cfg) * rng.uniform(0.01, 0.99))
    x0 = rng.uniform(0, D)
    return cfg, x0, reduce(x0 + d0, D)


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--per-case", type=int, default=100)
    ap.add_argument("--grid-n", type=int, default=2001)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    rng = np.random.default_rng(args.seed)
    for tag in ("NC-a", "NC-b", "NC-c", "NC-d"):
        t0 = time.perf_counter()
        worst, fails = -np.inf, 0
        for _ in range(args.per_case):
            cfg, x0, y0 = random_instance(rng, tag)
            rep = verify_epsilon_equilibrium(solve_noncoop(x0, y0, cfg), x0, y0, cfg, args.grid_n)
            fails += not rep.passed
            slack = max(rep.max_gain_x, rep.max_gain_y) - rep.epsilon
            worst = max(worst, slack / cfg.D)
        print(f"{tag}: {args.per_case - fails}/{args.per_case} pass, "
              f"max (gain - eps)/D = {worst:.2e}, {time.perf_counter() - t0:.2f}s")


if __name__ == "__main__":
    main()
