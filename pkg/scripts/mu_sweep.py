"""Decay rate against mu for the exact-forcing twin (cutoff K = 8)."""

import argparse
from pathlib import Path

from pe_nudging.config import load_config
from pe_nudging.experiments import sweep_experiment

ROOT = Path(__file__).resolve().parents[1]


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--config", type=Path, default=ROOT / "configs" / "sweep_mu.yaml")
    ap.add_argument("--out", type=Path, default=Path("runs/sweep_mu"))
    args = ap.parse_args()
    idx = sweep_experiment(load_config(args.config), args.out)
    print(f"{'mu':>6} {'rate':>8} {'rate - mu':>10}")
    for r in idx["rate_vs_mu"]:
        print(f"{r['mu']:6g} {r['rate']:8.3f} {r['rate'] - r['mu']:10.3f}")


if __name__ == "__main__":
    main()
