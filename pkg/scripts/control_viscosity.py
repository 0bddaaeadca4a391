"""Un-nudged (mu = 0) twin against viscosity.

At nu = 1 the gate-passing base flow is laminar and the free run
synchronises by itself; at small nu it does not over the same horizon,
but the base flow is then far too rough for the gates.
"""

import argparse
from pathlib import Path

from pe_nudging.config import load_config
from pe_nudging.experiments import TwinSetup, gate_constants, reference_spinup
from pe_nudging.linearized import check_gates
from pe_nudging.nudging import NudgeParams, run_twin

ROOT = Path(__file__).resolve().parents[1]


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--config", type=Path, default=ROOT / "configs" / "twin_exact.yaml")
    ap.add_argument("--nu", type=float, nargs="+", default=[1.0, 0.05])
    ap.add_argument("--amplitude", type=float, nargs="+", default=[0.05, 1.0],
                    help="forcing amplitude paired with each nu")
    ap.add_argument("--wavenumber", type=int, default=2)
    ap.add_argument("--t-spin", type=float, default=10.0)
    args = ap.parse_args()
    base = load_config(args.config)
    for nu, amp in zip(args.nu, args.amplitude):
        cfg = base.with_overrides(**{"sim.nu": nu, "sim.forcing.amplitude": amp, "sim.seed_amplitude": amp,
                                     "sim.forcing.wavenumber": args.wavenumber, "sim.t_spin": args.t_spin,
                                     "gates.n_snapshots": 1})
        setup = TwinSetup(cfg, reference_spinup(cfg))
        gc, _ = gate_constants(cfg, setup, cfg.observation)
        mu = cfg.nudge_section["mu"]
        gates = check_gates(setup.sup_H2, mu, cfg.observation.delta, gc)
        rec = run_twin(cfg.sim, NudgeParams(0.0, cfg.observation), setup.ref0, sample_interval=0.5)
        ratio = rec.err_L2 / rec.err_L2[0]
        print(f"nu={nu:g} amp={amp:g}: sup_H2={setup.sup_H2:.3g} gates(mu={mu:g}) pass={gates.passed}; "
              f"mu=0 err_L2/initial min={ratio.min():.3g} final={ratio[-1]:.3g}")


if __name__ == "__main__":
    main()
