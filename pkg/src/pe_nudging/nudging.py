"""
Nudged (data-assimilated) primitive equations and twin experiments.

The assimilated run solves

    dt vt - P Lap vt + P(ut . grad vt) = P g + mu P (J v - J vt)

with ``g = f`` (exact forcing) or ``g = J f`` (observed forcing).  For
spectrally diagonal ``J`` the whole feedback is Crank-Nicolson (damping
``mu J vt`` implicit, source ``mu J v`` averaged over the step ends);
otherwise it is explicit and ``dt <= 0.5 / mu`` is enforced.

``step_difference`` advances ``V = v - vt`` directly from the equation of
the difference and serves as an independent oracle for the twin run.
"""

from __future__ import annotations

import logging
import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .diagnostics import BudgetTerms, budget_terms, energy_budget, norm_array
from .dynamics import (
    NumericalError,
    SimParams,
    StateSnapshot,
    ab2,
    advect_array,
    check_cfl,
    forcing_array,
    get_solver,
    step_reference,
)
from .grid import GridOps, HVelocity, ops
from .hydrostatic import ProjectedVelocity, project_array, w_array
from .observation import ObservationOp

log = logging.getLogger(__name__)

FORCING_MODES = ("exact", "observed")
T0_POLICIES = ("immediate", "small_gradient_window")


@dataclass(frozen=True, eq=False)
class NudgeParams:
    mu: float
    J: ObservationOp
    forcing_mode: str = "exact"
    tilde_v0: HVelocity | None = None

    def __post_init__(self):
        if not self.mu >= 0:
            raise ValueError(f"mu must be non-negative, got {self.mu}")
        if self.forcing_mode not in FORCING_MODES:
            raise ValueError(f"forcing_mode must be one of {FORCING_MODES}")
        if self.forcing_mode == "observed" and self.J.kind == "identity":
            warnings.warn("observed forcing with the identity operator equals exact forcing", stacklevel=2)

    @property
    def implicit(self) -> bool:
        return self.J.is_diagonal


@dataclass(eq=False)
class TwinRecord:
    times: np.ndarray
    err_L2: np.ndarray
    err_H1: np.ndarray
    err_H2: np.ndarray
    nudge_mag: np.ndarray
    budget_residual: np.ndarray
    t_start: float = 0.0
    t0: float = 0.0
    final_ref: StateSnapshot | None = field(default=None, repr=False)
    final_da: StateSnapshot | None = field(default=None, repr=False)

    def __post_init__(self):
        n = len(self.times)
        for name in ("err_L2", "err_H1", "err_H2", "nudge_mag", "budget_residual"):
            if len(getattr(self, name)) != n:
                raise ValueError(f"series {name} has length {len(getattr(self, name))}, expected {n}")

    @property
    def grad_norm(self) -> np.ndarray:
        return np.sqrt(np.maximum(self.err_H1**2 - self.err_L2**2, 0.0))

    def rows(self):
        for i in range(len(self.times)):
            yield (self.times[i], self.err_L2[i], self.err_H1[i], self.err_H2[i],
                   self.nudge_mag[i], self.budget_residual[i])


def _damping(o: GridOps, n: NudgeParams) -> np.ndarray | None:
    if not n.implicit:
        return None
    return n.mu * n.J.multiplier(o)


def da_solver(p: SimParams, n: NudgeParams):
    o = ops(p.grid)
    if n.implicit:
        return get_solver(p.grid, p.nu, p.dt, ("nudge", n.mu, n.J), _damping(o, n))
    return get_solver(p.grid, p.nu, p.dt)


def da_forcing(o: GridOps, p: SimParams, n: NudgeParams, t: float) -> np.ndarray:
    f = forcing_array(p.forcing, p.grid, t)
    if n.forcing_mode == "observed":
        return n.J.apply_array(o, f)
    return f


def forcing_gap(o: GridOps, p: SimParams, n: NudgeParams, t: float) -> np.ndarray:
    """``F_delta = f - g``."""
    if n.forcing_mode == "exact":
        return np.zeros((2,) + p.grid.shape)
    f = forcing_array(p.forcing, p.grid, t)
    return f - n.J.apply_array(o, f)


def _check_explicit_cap(p: SimParams, n: NudgeParams) -> None:
    if not n.implicit and n.mu > 0 and p.dt > 0.5 / n.mu:
        raise NumericalError(f"dt = {p.dt:g} exceeds the explicit feedback cap 0.5/mu = {0.5 / n.mu:g}")


def _check_times(a: StateSnapshot, b: StateSnapshot, dt: float) -> None:
    if abs(a.t - b.t) > 1e-9 * max(dt, 1.0):
        raise ValueError(f"time mismatch between states: {a.t} vs {b.t}")


def da_tendency(o: GridOps, p: SimParams, n: NudgeParams, t: float,
                vt: np.ndarray, v: np.ndarray) -> np.ndarray:
    wt = w_array(o, vt)
    check_cfl(o, vt, wt, p.dt, p.cfl_max)
    tend = -advect_array(o, vt, wt, vt) + da_forcing(o, p, n, t)
    if not n.implicit and n.mu > 0:
        tend += n.mu * n.J.apply_array(o, v - vt)
    return tend


def step_assimilated(s_ref: StateSnapshot, s_da: StateSnapshot, p: SimParams, n: NudgeParams,
                     s_ref_next: StateSnapshot | None = None) -> StateSnapshot:
    """One CNAB2 step of the assimilated equation."""
    _check_times(s_ref, s_da, p.dt)
    _check_explicit_cap(p, n)
    o = ops(p.grid)
    solver = da_solver(p, n)
    tend = da_tendency(o, p, n, s_da.t, s_da.data, s_ref.data)
    extra = None
    if n.implicit and n.mu > 0:
        if s_ref_next is None:
            s_ref_next = step_reference(s_ref, p)
        m = n.J.multiplier(o)
        extra = (0.5 * p.dt * n.mu) * m * (solver.to_eig(s_ref.data) + solver.to_eig(s_ref_next.data))
    c = solver.step(solver.to_eig(s_da.data), ab2(tend, s_da.history), extra)
    v = solver.from_eig(c)
    if not np.all(np.isfinite(v)):
        raise NumericalError(f"non-finite assimilated state at t = {s_da.t + p.dt:g}")
    return StateSnapshot(s_da.t + p.dt, ProjectedVelocity(HVelocity(p.grid, v)), tend)


def difference_tendency(o: GridOps, p: SimParams, n: NudgeParams, t: float,
                        V: np.ndarray, v: np.ndarray) -> np.ndarray:
    """``-(u.grad)V - (U.grad)v + (U.grad)V + F_delta`` (minus ``mu J V`` when explicit)."""
    w = w_array(o, v)
    W = w_array(o, V)
    check_cfl(o, v - V, w - W, p.dt, p.cfl_max)
    tend = -advect_array(o, v, w, V) - advect_array(o, V, W, v) + advect_array(o, V, W, V)
    tend += forcing_gap(o, p, n, t)
    if not n.implicit and n.mu > 0:
        tend -= n.mu * n.J.apply_array(o, V)
    return tend


def step_difference(sV: StateSnapshot, s_ref: StateSnapshot, p: SimParams, n: NudgeParams) -> StateSnapshot:
    """Advance ``V = v - vt`` with the same IMEX scheme (oracle path)."""
    _check_times(sV, s_ref, p.dt)
    _check_explicit_cap(p, n)
    o = ops(p.grid)
    solver = da_solver(p, n)
    tend = difference_tendency(o, p, n, sV.t, sV.data, s_ref.data)
    c = solver.step(solver.to_eig(sV.data), ab2(tend, sV.history))
    V = solver.from_eig(c)
    if not np.all(np.isfinite(V)):
        raise NumericalError(f"non-finite difference state at t = {sV.t + p.dt:g}")
    return StateSnapshot(sV.t + p.dt, ProjectedVelocity(HVelocity(p.grid, V)), tend)


def initial_da_state(p: SimParams, n: NudgeParams, t: float) -> StateSnapshot:
    o = ops(p.grid)
    if n.tilde_v0 is None:
        data = np.zeros((2,) + p.grid.shape)
    else:
        data = project_array(o, o.dealias(n.tilde_v0.data), dirichlet_bottom=True)
    return StateSnapshot(t, ProjectedVelocity(HVelocity(p.grid, data)))


def _feedback(o: GridOps, n: NudgeParams, V: np.ndarray) -> np.ndarray:
    return n.mu * n.J.apply_array(o, V)


def run_twin(p: SimParams, n: NudgeParams, ref0: StateSnapshot, t0_policy: str = "immediate",
             sample_interval: float | None = None, window_index: int = 1,
             da0: StateSnapshot | None = None) -> TwinRecord:
    """Co-advance reference and assimilated runs for ``p.t_end`` and record error norms.

    Both runs restart their Adams-Bashforth history at ``ref0.t``.  With
    ``t0_policy="small_gradient_window"`` the record's ``t0`` is the sample
    in ``[window_index, window_index + 1]`` (relative time) with the
    smallest ``||grad V||``; fits should start there.
    """
    if t0_policy not in T0_POLICIES:
        raise ValueError(f"t0_policy must be one of {T0_POLICIES}")
    o = ops(p.grid)
    n_steps = p.n_steps
    every = 1 if sample_interval is None else max(1, int(round(sample_interval / p.dt)))
    s_ref = StateSnapshot(ref0.t, ref0.v)
    s_da = da0 if da0 is not None else initial_da_state(p, n, ref0.t)
    t_start = ref0.t

    times, e0, e1, e2, nm, br = [], [], [], [], [], []
    pending = 0.0

    def sample(step, sr, sd, resid):
        V = sr.data - sd.data
        times.append(step * p.dt)
        e0.append(norm_array(o, V, "L2"))
        e1.append(norm_array(o, V, "H1"))
        e2.append(norm_array(o, V, "H2"))
        nm.append(math.sqrt(o.norm2(_feedback(o, n, V))))
        br.append(resid)

    def terms_at(t, V, src):
        return budget_terms(o, t, V, _feedback(o, n, V), src)

    sample(0, s_ref, s_da, 0.0)
    prev_terms: BudgetTerms | None = None
    for k in range(n_steps):
        r_next = step_reference(s_ref, p)
        d_next = step_assimilated(s_ref, s_da, p, n, r_next)
        V = s_ref.data - s_da.data
        src = r_next.history - d_next.history
        if not n.implicit and n.mu > 0:
            src = src + _feedback(o, n, V)
        cur = terms_at(s_ref.t, V, src)
        if prev_terms is not None:
            pending = max(pending, abs(float(energy_budget([prev_terms, cur])[0])), key=abs)
        prev_terms = cur
        s_ref, s_da = r_next, d_next
        if (k + 1) % every == 0 or k + 1 == n_steps:
            if k + 1 == n_steps:
                # close the last step with one extra tendency evaluation
                ref_t = -advect_array(o, s_ref.data, w_array(o, s_ref.data), s_ref.data) \
                    + forcing_array(p.forcing, p.grid, s_ref.t)
                da_t = da_tendency(o, p, n, s_da.t, s_da.data, s_ref.data)
                Vn = s_ref.data - s_da.data
                src_n = ref_t - da_t
                if not n.implicit and n.mu > 0:
                    src_n = src_n + _feedback(o, n, Vn)
                last = terms_at(s_ref.t, Vn, src_n)
                pending = max(pending, abs(float(energy_budget([prev_terms, last])[0])), key=abs)
            sample(k + 1, s_ref, s_da, pending)
            pending = 0.0

    rec = TwinRecord(np.array(times), np.array(e0), np.array(e1), np.array(e2), np.array(nm),
                     np.array(br), t_start=t_start, final_ref=s_ref, final_da=s_da)
    rec.t0 = select_t0(rec, t0_policy, window_index)
    return rec


def select_t0(rec: TwinRecord, policy: str, window_index: int = 1) -> float:
    """Start time for fits: 0, or the minimal-||grad V|| sample in a unit window."""
    if policy == "immediate":
        return 0.0
    sel = (rec.times >= window_index) & (rec.times <= window_index + 1)
    if not np.any(sel):
        log.warning("no samples in window [%d, %d]; using t0 = 0", window_index, window_index + 1)
        return 0.0
    idx = np.nonzero(sel)[0]
    return float(rec.times[idx[np.argmin(rec.grad_norm[idx])]])


def compare_difference(p: SimParams, n: NudgeParams, ref0: StateSnapshot, n_steps: int) -> float:
    """Max over steps of ||V_direct - (v - vt)|| / ||v - vt|| in L2."""
    o = ops(p.grid)
    s_ref = StateSnapshot(ref0.t, ref0.v)
    s_da = initial_da_state(p, n, ref0.t)
    sV = StateSnapshot(ref0.t, ProjectedVelocity(HVelocity(p.grid, s_ref.data - s_da.data)))
    worst = 0.0
    for _ in range(n_steps):
        r_next = step_reference(s_ref, p)
        d_next = step_assimilated(s_ref, s_da, p, n, r_next)
        sV = step_difference(sV, s_ref, p, n)
        s_ref, s_da = r_next, d_next
        twin = s_ref.data - s_da.data
        scale = math.sqrt(o.norm2(twin))
        if scale > 0:
            worst = max(worst, math.sqrt(o.norm2(sV.data - twin)) / scale)
    return worst
