"""Plateau of err_H1 against the observation scale delta (observed forcing, 64-point grid)."""

import argparse
from pathlib import Path

from pe_nudging.config import load_config
from pe_nudging.experiments import sweep_experiment

ROOT = Path(__file__).resolve().parents[1]


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--config", type=Path, default=ROOT / "configs" / "sweep_delta.yaml")
    ap.add_argument("--out", type=Path, default=Path("runs/sweep_delta"))
    ap.add_argument("--workers", type=int, default=None, help="override sweep.workers")
    args = ap.parse_args()
    cfg = load_config(args.config)
    if args.workers is not None:
        cfg = cfg.with_overrides(**{"sweep.workers": args.workers})
    idx = sweep_experiment(cfg, args.out)
    for s in idx["scaling_fit"]:
        print(f"mu={s['mu']:g} mode={s['forcing_mode']}")
        for d, p in s["pairs"]:
            print(f"  delta={d:<6g} plateau={p:.4g}")
        print(f"  slope={s['slope']}")


if __name__ == "__main__":
    main()
