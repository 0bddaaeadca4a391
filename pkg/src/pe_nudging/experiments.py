"""
Experiment orchestration shared by the command line and the scripts.

Each ``*_experiment`` function writes its artifacts into a directory and
returns the summary dictionary.  Summaries never contain wall-clock data
(that goes to ``timing.json``) so they are byte-reproducible.
"""

from __future__ import annotations

import itertools
import logging
import math
import time
import traceback
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import __version__
from .config import ConfigError, ExperimentConfig, observation_for_delta
from .diagnostics import fit_decay, norm_array, plateau, scaling_fit
from .dynamics import SimParams, SpinUpResult, StateSnapshot, spin_up, step_reference
from .grid import HVelocity, ops
from .hydrostatic import ProjectedVelocity
from .io import write_csv, write_json, write_svg_plot
from .linearized import calibrate_gates, check_gates, coercivity_probe, smallest_passing_mu
from .nudging import NudgeParams, TwinRecord, run_twin
from .observation import estimate_constants

log = logging.getLogger(__name__)

TWIN_COLUMNS = ("t", "err_L2", "err_H1", "err_H2", "nudge_mag", "budget_residual")

PROVENANCE = {
    "horizontal": "Fourier pseudo-spectral, 2/3 dealiasing",
    "vertical": "second-order finite differences, v-type ghost node at the top",
    "time": "CNAB2 (Crank-Nicolson diffusion, Adams-Bashforth 2 explicit terms, Euler first step)",
    "advection": "skew-symmetric, summation-by-parts vertical derivative",
    "quadrature": "trapezoid in x3, rectangle rule in x'",
    "tolerances": {"div_constraint_rtol": 1e-10, "spectral_imag_rtol": 1e-12},
}


def provenance(cfg: ExperimentConfig) -> dict:
    return {"package_version": __version__, "config_hash": cfg.config_hash, "scheme": PROVENANCE}


def _ensure(path: Path) -> Path:
    path.mkdir(parents=True, exist_ok=True)
    return path


# -- reference -------------------------------------------------------------------------


def reference_spinup(cfg: ExperimentConfig) -> SpinUpResult:
    return spin_up(cfg.sim, cfg.t_spin, amplitude=cfg.seed_amplitude)


def _every(cfg: ExperimentConfig) -> int:
    return max(1, int(round(cfg.sample_interval / cfg.sim.dt)))


def reference_experiment(cfg: ExperimentConfig, out: Path) -> dict:
    """Spin-up then a reference run of ``t_end``; writes series, checkpoints, summary."""
    out = _ensure(Path(out))
    p = cfg.sim
    o = ops(p.grid)
    tic = time.perf_counter()
    su = reference_spinup(cfg)
    s = StateSnapshot(su.state.t, su.state.v)
    every = _every(cfg)
    rows = []
    n = p.n_steps
    if n > 0:
        rows.append((0.0, norm_array(o, s.data, "L2"), norm_array(o, s.data, "H1"), norm_array(o, s.data, "H2")))
    for k in range(n):
        s = step_reference(s, p)
        if (k + 1) % every == 0 or k + 1 == n:
            rows.append(((k + 1) * p.dt, norm_array(o, s.data, "L2"), norm_array(o, s.data, "H1"),
                         norm_array(o, s.data, "H2")))
    write_csv(out / "reference.csv", ("t", "L2", "H1", "H2"), rows)
    write_csv(out / "spinup.csv", ("t", "L2", "H2"), zip(su.times, su.norm_l2, su.norm_h2))
    if cfg.outputs["checkpoints"]:
        np.save(out / "state_spun_up.npy", su.state.data)
        np.save(out / "state_final.npy", s.data)
    h2 = [r[3] for r in rows]
    summary = {
        "command": "run-reference",
        "config": cfg.raw,
        "provenance": provenance(cfg),
        "spin_up": {"t_spin": cfg.t_spin, "sup_H2": su.sup_h2, "tail_max_H2": su.tail_max_h2(),
                    "final_L2": float(su.norm_l2[-1])},
        "reference": {"n_samples": len(rows), "sup_H2": max(h2) if h2 else None,
                      "final_L2": rows[-1][1] if rows else None},
    }
    write_json(out / "summary.json", summary)
    write_json(out / "timing.json", {"wall_clock_s": time.perf_counter() - tic})
    return summary


# -- twin -------------------------------------------------------------------------------


@dataclass
class TwinSetup:
    cfg: ExperimentConfig
    spin: SpinUpResult

    @property
    def ref0(self) -> StateSnapshot:
        return StateSnapshot(self.spin.state.t, self.spin.state.v)

    @property
    def sup_H2(self) -> float:
        """Sup of ||v||_H2 over the spin-up tail, i.e. of the base solution used by the twin."""
        return self.spin.tail_max_h2(0.2)

    def snapshots(self, n: int) -> list:
        return [self.spin.state.v] if n <= 1 else _tail_snapshots(self.cfg, self.spin, n)


def _tail_snapshots(cfg: ExperimentConfig, spin: SpinUpResult, n: int) -> list:
    """``n`` states spaced over a further short reference integration."""
    p = cfg.sim
    s = StateSnapshot(spin.state.t, spin.state.v)
    out = [s.v]
    stride = max(1, int(round(0.5 / p.dt)))
    for _ in range(n - 1):
        for _ in range(stride):
            s = step_reference(s, p)
        out.append(s.v)
    return out


def nudge_params(cfg: ExperimentConfig, setup: TwinSetup, J=None, mu=None, mode=None) -> NudgeParams:
    ns = cfg.nudge_section
    J = cfg.observation if J is None else J
    mu = ns["mu"] if mu is None else mu
    mode = ns["forcing_mode"] if mode is None else mode
    v0 = HVelocity(cfg.grid, setup.spin.state.data.copy()) if ns["initial_guess"] == "truth" else None
    return NudgeParams(mu, J, mode, v0)


def gate_constants(cfg: ExperimentConfig, setup: TwinSetup, J) -> tuple:
    gc = cfg.gate_constants()
    calib = None
    if gc is None:
        g = cfg.gates_section
        calib = calibrate_gates(setup.snapshots(g["n_snapshots"]), J, n_probes=g["n_probes"],
                                seed=cfg.seed, observation_probes=cfg.probes)
        gc = calib.constants
    return gc, calib


def summarize_twin(rec: TwinRecord, cfg: ExperimentConfig) -> dict:
    ns = cfg.nudge_section
    series = getattr(rec, ns["fit_series"])
    out: dict = {"t0": rec.t0, "n_samples": len(rec.times)}
    out["initial"] = {k: float(getattr(rec, k)[0]) for k in ("err_L2", "err_H1", "err_H2")}
    out["final"] = {k: float(getattr(rec, k)[-1]) for k in ("err_L2", "err_H1", "err_H2")}
    out["max_budget_residual"] = float(np.max(np.abs(rec.budget_residual))) if len(rec.times) else 0.0
    sel = rec.times >= rec.t0
    fit = None
    if sel.sum() >= 3 and series[0] > 0:
        try:
            f = fit_decay(rec.times[sel], series[sel])
            fit = {"series": ns["fit_series"], "rate": f.rate, "intercept": f.intercept,
                   "window": list(f.window), "r_squared": f.r_squared}
        except ValueError as exc:
            fit = {"series": ns["fit_series"], "error": str(exc)}
    out["decay_fit"] = fit
    if len(rec.times) >= 10:
        pl = plateau(rec.err_H1, ns["tail_fraction"], rec.times)
        out["plateau"] = {"series": "err_H1", "level": pl.level, "tail_window": list(pl.tail_window),
                          "method": pl.method}
    else:
        out["plateau"] = None
    return out


def write_twin_artifacts(out: Path, rec: TwinRecord, plot: bool, title: str = "") -> None:
    write_csv(out / "twin.csv", TWIN_COLUMNS, rec.rows())
    if plot and len(rec.times):
        write_svg_plot(out / "twin.svg", rec.times,
                       {"err_L2": rec.err_L2, "err_H1": rec.err_H1, "err_H2": rec.err_H2}, title)


def twin_experiment(cfg: ExperimentConfig, out: Path, setup: TwinSetup | None = None) -> dict:
    out = _ensure(Path(out))
    tic = time.perf_counter()
    if setup is None:
        setup = TwinSetup(cfg, reference_spinup(cfg))
    n = nudge_params(cfg, setup)
    gc, calib = gate_constants(cfg, setup, n.J)
    report = check_gates(setup.sup_H2, n.mu, n.J.delta, gc)
    rec = run_twin(cfg.sim, n, setup.ref0, cfg.nudge_section["t0_policy"], cfg.sample_interval)
    write_twin_artifacts(out, rec, cfg.outputs["plot"], f"mu={n.mu:g}, delta={n.J.delta:g}, {n.forcing_mode}")
    summary = {
        "command": "twin",
        "config": cfg.raw,
        "provenance": provenance(cfg),
        "observation": {"kind": n.J.kind, "delta": n.J.delta},
        "gates": {"constants": _gc_dict(gc), "report": report.as_dict(),
                  "calibration": _calib_dict(calib),
                  "smallest_passing_mu": smallest_passing_mu(setup.sup_H2, n.J.delta, gc)},
        "twin": summarize_twin(rec, cfg),
    }
    write_json(out / "summary.json", summary)
    write_json(out / "timing.json", {"wall_clock_s": time.perf_counter() - tic})
    return summary


def _gc_dict(gc) -> dict:
    return {"c0": gc.c0, "c1": gc.c1, "c_gate1": gc.c_gate1, "c_gate2": gc.c_gate2,
            "c_delta": gc.c_delta, "source": gc.source}


def _calib_dict(c) -> dict | None:
    if c is None:
        return None
    return {"c_tri": c.c_tri, "c_adv": c.c_adv, "c_rem": c.c_rem, "c_approx": c.c_approx,
            "n_probes": c.n_probes}


# -- sweep ------------------------------------------------------------------------------


def sweep_cells(cfg: ExperimentConfig) -> list[dict]:
    sw = cfg.sweep_section
    if not (sw["mu"] or sw["delta"] or sw["forcing_mode"]):
        raise ConfigError("sweep needs at least one non-empty axis (sweep.mu, sweep.delta, sweep.forcing_mode)")
    mus = sw["mu"] or [cfg.nudge_section["mu"]]
    modes = sw["forcing_mode"] or [cfg.nudge_section["forcing_mode"]]
    deltas = sw["delta"] or [None]
    cells = []
    for i, (mu, delta, mode) in enumerate(itertools.product(mus, deltas, modes)):
        cells.append({"index": i, "mu": mu, "delta": delta, "forcing_mode": mode})
    return cells


def _cell_config(cfg: ExperimentConfig, cell: dict) -> ExperimentConfig:
    changes = {"nudge.mu": cell["mu"], "nudge.forcing_mode": cell["forcing_mode"]}
    if cell["delta"] is not None:
        kind = cfg.raw["observation"]["kind"]
        J = observation_for_delta(kind, cell["delta"])
        changes["observation.K" if kind == "cutoff" else "observation.h"] = J.K if kind == "cutoff" else J.h
    return cfg.with_overrides(**changes)


def _run_cell(args) -> dict:
    cfg, cell, out, spin_state, spin_times, spin_l2, spin_h2 = args
    grid = cfg.grid
    state = StateSnapshot(spin_times[-1], ProjectedVelocity(HVelocity(grid, spin_state)))
    setup = TwinSetup(cfg, SpinUpResult(state, spin_times, spin_l2, spin_h2))
    cell_dir = Path(out) / f"cell_{cell['index']:03d}"
    try:
        s = twin_experiment(cfg, cell_dir, setup)
        return {**cell, "status": "ok", "summary": s}
    except Exception as exc:  # recorded per cell, the sweep goes on
        _ensure(cell_dir)
        write_json(cell_dir / "error.json", {"error": repr(exc), "traceback": traceback.format_exc()})
        return {**cell, "status": "failed", "error": repr(exc)}


def sweep_experiment(cfg: ExperimentConfig, out: Path) -> dict:
    """One twin run per (mu, delta, forcing_mode) cell; shared spin-up; index + scaling fits."""
    out = _ensure(Path(out))
    tic = time.perf_counter()
    spin = reference_spinup(cfg)
    cells = sweep_cells(cfg)
    jobs = [(_cell_config(cfg, c), c, out, spin.state.data, spin.times, spin.norm_l2, spin.norm_h2) for c in cells]
    workers = min(cfg.sweep_section["workers"], len(jobs))
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_run_cell, jobs))
    else:
        results = [_run_cell(j) for j in jobs]
    results.sort(key=lambda r: r["index"])

    rows = []
    for r in results:
        tw = r.get("summary", {}).get("twin", {}) if r["status"] == "ok" else {}
        fit = tw.get("decay_fit") or {}
        pl = tw.get("plateau") or {}
        gates = r.get("summary", {}).get("gates", {}).get("report", {})
        rows.append((r["index"], r["mu"], r["delta"] if r["delta"] is not None else "", r["forcing_mode"],
                     r["status"], fit.get("rate", math.nan), fit.get("r_squared", math.nan),
                     pl.get("level", math.nan), gates.get("pass_A", ""), gates.get("pass_gate1", ""),
                     gates.get("pass_gate2", "")))
    write_csv(out / "index.csv", ("cell", "mu", "delta", "forcing_mode", "status", "rate", "r_squared",
                                  "plateau_H1", "pass_A", "pass_gate1", "pass_gate2"), rows)

    scaling = []
    groups = {}
    for r in results:
        if r["status"] == "ok" and r["delta"] is not None:
            groups.setdefault((r["mu"], r["forcing_mode"]), []).append(r)
    for (mu, mode), rs in sorted(groups.items()):
        pairs = [(r["delta"], (r["summary"]["twin"].get("plateau") or {}).get("level", 0.0)) for r in rs]
        entry = {"mu": mu, "forcing_mode": mode, "pairs": pairs}
        try:
            entry["slope"] = scaling_fit(pairs)
        except ValueError as exc:
            entry["slope"] = None
            entry["error"] = str(exc)
        scaling.append(entry)
    rate_vs_mu = []
    for r in results:
        if r["status"] == "ok":
            fit = r["summary"]["twin"].get("decay_fit") or {}
            rate_vs_mu.append({"mu": r["mu"], "delta": r["delta"], "forcing_mode": r["forcing_mode"],
                               "rate": fit.get("rate")})
    index = {
        "command": "sweep",
        "config": cfg.raw,
        "provenance": provenance(cfg),
        "cells": [{k: r[k] for k in ("index", "mu", "delta", "forcing_mode", "status")} for r in results],
        "failures": [{"index": r["index"], "error": r["error"]} for r in results if r["status"] != "ok"],
        "scaling_fit": scaling,
        "rate_vs_mu": rate_vs_mu,
    }
    write_json(out / "index.json", index)
    write_json(out / "timing.json", {"wall_clock_s": time.perf_counter() - tic, "workers": workers})
    return index


# -- checks -----------------------------------------------------------------------------

CHECKS = ("observation", "coercivity", "gates")


def check_experiment(cfg: ExperimentConfig, which: str, out: Path) -> tuple[bool, dict]:
    """Run one structural check; returns ``(passed, report)``."""
    if which not in CHECKS:
        raise ValueError(f"unknown check {which!r}; choose from {CHECKS}")
    out = _ensure(Path(out))
    J = cfg.observation
    report: dict = {"command": "check", "which": which, "config": cfg.raw, "provenance": provenance(cfg)}
    if which == "observation":
        c = estimate_constants(J, cfg.grid, cfg.probes)
        ok = c.c_bound <= 1 + 1e-12 and math.isfinite(c.c_approx)
        if J.kind == "cutoff":
            ok = ok and c.c_approx <= 1 + 1e-6
        if J.kind == "identity":
            ok = ok and c.c_approx == 0.0
        report["result"] = {"kind": J.kind, "delta": J.delta, "c_bound": c.c_bound, "c_approx": c.c_approx,
                            "n_probes": c.n_probes}
    else:
        setup = TwinSetup(cfg, reference_spinup(cfg))
        mu = cfg.nudge_section["mu"]
        if which == "coercivity":
            m = coercivity_probe(setup.spin.state.v, mu, J, cfg.gates_section["coercivity_samples"], cfg.seed)
            ok = m >= 0
            report["result"] = {"mu": mu, "delta": J.delta, "min_margin": m,
                                "n_samples": cfg.gates_section["coercivity_samples"]}
        else:
            gc, calib = gate_constants(cfg, setup, J)
            r = check_gates(setup.sup_H2, mu, J.delta, gc)
            ok = r.passed
            report["result"] = {"report": r.as_dict(), "constants": _gc_dict(gc), "calibration": _calib_dict(calib),
                                "smallest_passing_mu": smallest_passing_mu(setup.sup_H2, J.delta, gc)}
    report["passed"] = bool(ok)
    write_json(out / f"check_{which}.json", report)
    return bool(ok), report
