"""
Linearized nudged operator, its bilinear form, coercivity probes and the
parameter gates relating ``mu``, ``delta`` and ``sup ||v||_H2``.

``A phi = -P Lap phi + P(u . grad phi) + P(phihat . grad v) + mu P J phi``
where ``phihat = (phi, w(phi))``.  The bilinear form is

    B(phi, psi) = mu <phi, psi> + <grad phi, grad psi> + <Bpert phi, psi>

with ``Bpert phi = P(u . grad phi) + P(phihat . grad v) + mu P K phi``.  On
compatible fields ``B(phi, psi) = <A phi, psi>`` holds discretely up to
rounding, because the v-type second difference and the staggered gradient
energy are related by exact summation by parts.

Gate constants are not known in closed form.  ``calibrate_gates`` measures
the few ratios that enter the estimate chain on a probe set and combines
them through Young's inequality:

* ``c_tri``: sup ``|<P(phihat . grad v), phi>| / (s ||grad phi||^1.5 ||phi||^0.5)``
* ``c_gate1 = 27/4 c_tri^4`` (Young with weight 1/4 on ``||grad phi||^2``)
* ``c_delta = c_approx^2`` (Young on ``mu c_approx delta ||grad phi|| ||phi||``)
* ``c0 = 27 c_tri^4`` and ``c1 = 2 c_approx``, so that (A) with ``mu >= 1``
  implies both halves of gate 1
* ``c_gate2``: sup of ``||Bpert phi|| / ((s + delta mu) ||phi||_{H^1.5})``
  split into the advective and the remainder part.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .diagnostics import norm_array
from .dynamics import advect_array, diffusion_array
from .grid import GridOps, GridSpec, HVelocity, ops
from .hydrostatic import ConstraintError, ProjectedVelocity, _div_mean_amplitude, project_array, w_array
from .observation import ObservationOp, estimate_constants, ProbeSuite

SOURCES = ("configured", "calibrated")


def _data(f) -> np.ndarray:
    if isinstance(f, (ProjectedVelocity, HVelocity)):
        return f.data
    return np.asarray(f)


def _check_compatible(o: GridOps, a: np.ndarray) -> None:
    peak = np.max(np.abs(a))
    if peak == 0:
        return
    a = a / peak
    if _div_mean_amplitude(o, a) > 1e-10 * math.sqrt(o.norm2(a)):
        raise ConstraintError("phi violates the depth-averaged divergence constraint")


def _P(o: GridOps, a: np.ndarray) -> np.ndarray:
    return project_array(o, a, dirichlet_bottom=True)


def perturbation_array(o: GridOps, v: np.ndarray, phi: np.ndarray, mu: float, J: ObservationOp) -> np.ndarray:
    """``Bpert phi = P(u . grad phi) + P(phihat . grad v) + mu P K phi``."""
    out = advect_array(o, v, w_array(o, v), phi) + advect_array(o, phi, w_array(o, phi), v)
    if mu:
        out = out + mu * (J.apply_array(o, phi) - phi)
    return _P(o, out)


def apply_A(v, phi, mu: float, J: ObservationOp) -> HVelocity:
    """Discrete action of the linearized perturbed operator on ``phi``."""
    vd, pd = _data(v), _data(phi)
    grid = phi.grid if hasattr(phi, "grid") else v.grid
    o = ops(grid)
    _check_compatible(o, pd)
    out = -diffusion_array(o, pd) + advect_array(o, vd, w_array(o, vd), pd)
    out = out + advect_array(o, pd, w_array(o, pd), vd)
    if mu:
        out = out + mu * J.apply_array(o, pd)
    out = _P(o, out)
    out[..., 0] = 0.0
    return HVelocity(grid, out)


def grad_inner(o: GridOps, a: np.ndarray, b: np.ndarray) -> float:
    """``<grad a, grad b>`` by polarisation of the gradient energy."""
    return 0.25 * (o.grad_sq(a + b) - o.grad_sq(a - b))


def bilinear_B(v, phi, psi, mu: float, J: ObservationOp) -> float:
    vd, pd, qd = _data(v), _data(phi), _data(psi)
    o = ops(phi.grid if hasattr(phi, "grid") else v.grid)
    val = mu * o.inner(pd, qd) + grad_inner(o, pd, qd)
    return val + o.inner(perturbation_array(o, vd, pd, mu, J), qd)


# -- probes ------------------------------------------------------------------------


def compatible_probe(o: GridOps, rng: np.random.Generator, n_vertical: int = 4) -> np.ndarray:
    """Random band-limited velocity vanishing at the bottom, constraint-projected."""
    g = o.grid
    slope = rng.uniform(0.5, 3.0)
    amp = (1.0 + o.kmag[..., 0] ** 2) ** (-slope / 2) * o.dealias_mask[..., 0]
    nv = min(n_vertical, o.n_unknown)
    vert = rng.standard_normal((2, nv)) * (1.0 + np.arange(nv)) ** (-rng.uniform(0.5, 2.0))
    coef = rng.standard_normal((2,) + amp.shape + (nv,)) + 1j * rng.standard_normal((2,) + amp.shape + (nv,))
    coef *= amp[None, ..., None] * vert[:, None, None, :]
    out = np.zeros((2,) + g.shape)
    out[..., 1:] = o.ifft(coef @ o.eig_vec[:, :nv].T)
    out = _P(o, out)
    return out / math.sqrt(o.norm2(out))


def probe_set(grid: GridSpec, n: int, seed: int) -> list[np.ndarray]:
    o = ops(grid)
    rngs = [np.random.default_rng(s) for s in np.random.SeedSequence(seed).spawn(n)]
    return [compatible_probe(o, r) for r in rngs]


def coercivity_probe(v, mu: float, J: ObservationOp, n_samples: int = 200, seed: int = 0,
                     probes: Sequence[np.ndarray] | None = None) -> float:
    """Min over probes of ``B(phi, phi) - mu/2 ||phi||^2 - 1/2 ||grad phi||^2``."""
    if n_samples < 1:
        raise ValueError("n_samples must be at least 1")
    grid = v.grid
    o = ops(grid)
    vd = _data(v)
    if probes is None:
        probes = probe_set(grid, n_samples, seed)
    worst = math.inf
    for phi in probes:
        b = mu * o.norm2(phi) + o.grad_sq(phi) + o.inner(perturbation_array(o, vd, phi, mu, J), phi)
        worst = min(worst, b - 0.5 * mu * o.norm2(phi) - 0.5 * o.grad_sq(phi))
    return float(worst)


def boundedness_ratio(v, mu: float, J: ObservationOp, n_samples: int = 50, seed: int = 0) -> float:
    """Max of ``|B(phi, psi)| / (||grad phi|| ||grad psi||)`` over probe pairs."""
    o = ops(v.grid)
    vd = _data(v)
    ps = probe_set(v.grid, 2 * n_samples, seed)
    best = 0.0
    for phi, psi in zip(ps[::2], ps[1::2]):
        val = mu * o.inner(phi, psi) + grad_inner(o, phi, psi) + o.inner(perturbation_array(o, vd, phi, mu, J), psi)
        best = max(best, abs(val) / math.sqrt(o.grad_sq(phi) * o.grad_sq(psi)))
    return best


# -- gates ---------------------------------------------------------------------------


@dataclass(frozen=True)
class GateConstants:
    c0: float
    c1: float
    c_gate1: float
    c_gate2: float
    c_delta: float
    source: str = "configured"

    def __post_init__(self):
        for name in ("c0", "c1", "c_gate1", "c_gate2", "c_delta"):
            val = getattr(self, name)
            if not (val > 0 and math.isfinite(val)):
                raise ValueError(f"gate constant {name} must be positive and finite, got {val}")
        if self.source not in SOURCES:
            raise ValueError(f"source must be one of {SOURCES}")


@dataclass(frozen=True)
class GateReport:
    sup_H2: float
    mu: float
    delta: float
    pass_A: bool
    pass_gate1: bool
    pass_gate2: bool
    margins: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return self.pass_A and self.pass_gate1 and self.pass_gate2

    def as_dict(self) -> dict:
        return {
            "sup_H2": self.sup_H2, "mu": self.mu, "delta": self.delta,
            "pass_A": self.pass_A, "pass_gate1": self.pass_gate1, "pass_gate2": self.pass_gate2,
            "margins": dict(self.margins),
        }


GATE_GROUPS = {
    "A": ("A_mu_min", "A_delta_max", "A_sobolev", "A_observation"),
    "gate1": ("gate1_flow", "gate1_delta"),
    "gate2": ("gate2",),
}


def gate_margins(sup_H2: float, mu: float, delta: float, gc: GateConstants) -> dict:
    s = sup_H2
    return {
        "A_mu_min": mu - 1.0,
        "A_delta_max": 1.0 - delta,
        "A_sobolev": mu - gc.c0 * (s + s**2 + s**4),
        "A_observation": 1.0 - gc.c1 * mu * delta,
        "gate1_flow": mu / 4 - gc.c_gate1 * s**4,
        "gate1_delta": mu / 4 - gc.c_delta * mu**2 * delta**2,
        "gate2": mu**0.75 / 2 - gc.c_gate2 * (s + delta * mu),
    }


def check_gates(sup_H2: float, mu: float, delta: float, gc: GateConstants) -> GateReport:
    """Evaluate (A), gate 1 and gate 2; a margin >= 0 means the inequality holds."""
    if sup_H2 < 0 or mu < 0 or delta < 0:
        raise ValueError("sup_H2, mu and delta must be non-negative")
    m = gate_margins(sup_H2, mu, delta, gc)
    ok = {k: all(m[name] >= 0 for name in names) for k, names in GATE_GROUPS.items()}
    return GateReport(sup_H2, mu, delta, ok["A"], ok["gate1"], ok["gate2"], m)


def smallest_passing_mu(sup_H2: float, delta: float, gc: GateConstants,
                        mu_max: float = 1e6, rtol: float = 1e-6) -> float | None:
    """Smallest ``mu`` in ``[1, mu_max]`` passing every gate, by bisection.

    The lower-bound inequalities are monotone in ``mu``; once the smallest
    ``mu`` satisfying them is found the full report is evaluated there, and
    ``None`` is returned when the upper-bound inequalities already fail.
    """
    increasing = ("A_mu_min", "A_sobolev", "gate1_flow")

    def low_ok(mu):
        m = gate_margins(sup_H2, mu, delta, gc)
        return all(m[k] >= 0 for k in increasing)

    if not low_ok(mu_max):
        return None
    lo, hi = 1.0, mu_max
    if not low_ok(lo):
        while hi - lo > rtol * hi:
            mid = 0.5 * (lo + hi)
            if low_ok(mid):
                hi = mid
            else:
                lo = mid
    else:
        hi = lo
    # gate 2 is concave in mu: walk upward from the lower bound if needed
    mu = hi
    for _ in range(200):
        if check_gates(sup_H2, mu, delta, gc).passed:
            return mu
        if gate_margins(sup_H2, mu, delta, gc)["A_observation"] < 0 or mu > mu_max:
            return None
        mu *= 1.05
    return None


@dataclass(frozen=True)
class Calibration:
    c_tri: float
    c_adv: float
    c_rem: float
    c_approx: float
    n_probes: int
    constants: GateConstants


def _h32(o: GridOps, a: np.ndarray) -> float:
    """Interpolation surrogate ``sqrt(||a||_H1 ||a||_H2)`` for the H^1.5 norm."""
    return math.sqrt(norm_array(o, a, "H1") * norm_array(o, a, "H2"))


def calibrate_gates(snapshots: Sequence, J: ObservationOp, n_probes: int = 60, seed: int = 0,
                    observation_probes: ProbeSuite = ProbeSuite()) -> Calibration:
    """Measure the ratios of the estimate chain over flow snapshots and probes."""
    if not snapshots:
        raise ValueError("need at least one flow snapshot")
    grid = snapshots[0].grid
    o = ops(grid)
    probes = probe_set(grid, n_probes, seed)
    c_approx = estimate_constants(J, grid, observation_probes).c_approx if J.kind != "identity" else 0.0
    c_tri = 0.0
    c_adv = 0.0
    for snap in snapshots:
        vd = _data(snap)
        s = norm_array(o, vd, "H2")
        if s == 0:
            continue
        wv = w_array(o, vd)
        for phi in probes:
            cross = _P(o, advect_array(o, phi, w_array(o, phi), vd))
            gphi = math.sqrt(o.grad_sq(phi))
            nphi = math.sqrt(o.norm2(phi))
            c_tri = max(c_tri, abs(o.inner(cross, phi)) / (s * gphi**1.5 * nphi**0.5))
            full = cross + _P(o, advect_array(o, vd, wv, phi))
            c_adv = max(c_adv, math.sqrt(o.norm2(full)) / (s * _h32(o, phi)))
    # remainder part: ||P K phi|| <= c_rem delta ||phi||_H1
    c_rem = 0.0
    if J.kind != "identity":
        for phi in probes:
            rem = _P(o, J.apply_array(o, phi) - phi)
            c_rem = max(c_rem, math.sqrt(o.norm2(rem)) / (J.delta * norm_array(o, phi, "H1")))
    tiny = 1e-12
    gc = GateConstants(
        c0=max(27.0 * c_tri**4, tiny),
        c1=max(2.0 * c_approx, tiny),
        c_gate1=max(6.75 * c_tri**4, tiny),
        c_gate2=max(c_adv, c_rem, tiny),
        c_delta=max(c_approx**2, tiny),
        source="calibrated",
    )
    return Calibration(c_tri, c_adv, c_rem, c_approx, n_probes, gc)
