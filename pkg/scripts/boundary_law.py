"""Exit time M and exit gap d_M for runs started exactly at the escape distance."""
import argparse
from pathlib import Path

from busgame.cli import DEFAULT_SEED, json_bytes, write_atomic
from busgame.dynamics import boundary_theory, estimate_boundary_law
from busgame.game import GameConfig


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--config", help="game config JSON (default: D=10, T=1, v in [1, 4])")
    ap.add_argument("--epsilons", type=float, nargs="+", default=[0.01, 0.05, 0.1, 0.2])
    ap.add_argument("--n-runs", type=int, default=100_000)
    ap.add_argument("--seed", type=int, default=DEFAULT_SEED)
    ap.add_argument("--out", default="results/boundary_law.json")
    args = ap.parse_args()

    base = GameConfig.load(args.config) if args.config else GameConfig(D=10, T=1, v_min=1, v_max=4)
    rows = []
    for eps in args.epsilons:
        est = estimate_boundary_law(base.replace(epsilon=eps), args.n_runs, args.seed)
        param, _ = boundary_theory(base, eps)
        low_rate = (2 * eps / base.D) * (1 - 2 * base.d / base.D) / param
        print(f"eps={eps:<5g} E[M]={est.mean_M:.4f}±{est.se_M:.4f} (theory {est.theory_mean_M:.4f})"
              f"  P(d_M=0)={est.p_zero:.5f}±{est.se_p_zero:.5f} (theory {est.theory_p_zero:.5f})"
              f"  low exits {est.n_low / est.n_runs:.4f} (predicted {low_rate:.4f})")
        rows.append({**est.to_dict(), "predicted_low_rate": low_rate})
    write_atomic(Path(args.out), json_bytes({"rows": rows}))
    print(f"wrote {args.out}")


if __name__ == "__main__":
    main()
