"""
Reference primitive equations ``dt v - P Lap v + P(u . grad v) = P f``.

Time integration is CNAB2: Crank-Nicolson for diffusion (and for any
spectrally diagonal linear damping), second-order Adams-Bashforth for
advection and forcing, with a forward-Euler first step.  The implicit
operator is diagonal in (kx, ky, vertical eigenmode) because the v-type
second-difference matrix is diagonalised once by its exact sine
eigenvectors.  The depth-independent pressure gradient is eliminated
exactly inside the implicit solve (one extra influence profile per
horizontal wavenumber), so each step is Crank-Nicolson for the discrete
hydrostatic Stokes operator ``-P Lap``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .grid import GridOps, GridSpec, HVelocity, ops
from .hydrostatic import ProjectedVelocity, project_array, w_array


class NumericalError(RuntimeError):
    """Non-finite values or an explicit-stability violation during stepping."""


class CFLError(NumericalError):
    pass


@dataclass(frozen=True)
class ForcingSpec:
    """Closed-form body force ``amplitude * (mod_a + mod_b sin(omega t)) * shape(x)``.

    ``pattern`` is one of ``none``, ``kolmogorov`` (``(sin(k y), 0)`` times
    the first vertical sine profile) or ``multiscale`` (horizontally
    divergence-free, power-law spectrum ``|k|^-slope`` on
    ``kmin <= |k| <= kmax`` with phases drawn from ``phase_seed``).  Shapes
    are normalised to unit RMS.  ``holder_alpha`` is informational: the
    modulation is smooth, hence Hoelder for every exponent up to 1.
    """

    pattern: str = "kolmogorov"
    amplitude: float = 1.0
    wavenumber: int = 1
    slope: float = 1.0
    kmin: float = 1.0
    kmax: float = 8.0
    phase_seed: int = 0
    mod_a: float = 1.0
    mod_b: float = 0.0
    omega: float = 0.0
    holder_alpha: float = 1.0

    def __post_init__(self):
        if self.pattern not in ("none", "kolmogorov", "multiscale"):
            raise ValueError(f"unknown forcing pattern {self.pattern!r}")
        if not 0 < self.holder_alpha <= 1:
            raise ValueError("holder_alpha must lie in (0, 1]")
        if not all(math.isfinite(x) for x in (self.amplitude, self.mod_a, self.mod_b, self.omega)):
            raise ValueError("forcing parameters must be finite")

    def modulation(self, t: float) -> float:
        return self.mod_a + self.mod_b * math.sin(self.omega * t)


@dataclass(frozen=True)
class SimParams:
    grid: GridSpec = field(default_factory=GridSpec)
    nu: float = 1.0
    dt: float = 0.01
    t_end: float = 1.0
    forcing: ForcingSpec = field(default_factory=ForcingSpec)
    cfl_max: float = 0.5

    def __post_init__(self):
        if not self.dt > 0:
            raise ValueError(f"dt must be positive, got {self.dt}")
        if not self.nu > 0:
            raise ValueError(f"nu must be positive, got {self.nu}")
        if not 0 < self.cfl_max < 1:
            raise ValueError(f"cfl_max must lie in (0, 1), got {self.cfl_max}")
        if self.t_end < 0:
            raise ValueError("t_end must be non-negative")

    @property
    def n_steps(self) -> int:
        return int(round(self.t_end / self.dt))


@dataclass(frozen=True, eq=False)
class StateSnapshot:
    """State at time ``t``.

    ``history`` is the explicit tendency from the previous step (None
    before the first step, which then falls back to forward Euler).
    """

    t: float
    v: ProjectedVelocity
    history: np.ndarray | None = field(default=None, repr=False)

    @property
    def grid(self) -> GridSpec:
        return self.v.grid

    @property
    def data(self) -> np.ndarray:
        return self.v.data


# -- forcing -------------------------------------------------------------------

_shape_cache: dict = {}


def vertical_profile(grid: GridSpec, j: int = 0) -> np.ndarray:
    """``sin((2j+1) pi (x3 + l) / (2l))``: vanishes at the bottom, flat at the top."""
    return np.sin((2 * j + 1) * np.pi * (grid.z + grid.l) / (2 * grid.l))


def forcing_shape(spec: ForcingSpec, grid: GridSpec) -> np.ndarray:
    key = (spec.pattern, spec.wavenumber, spec.slope, spec.kmin, spec.kmax, spec.phase_seed, grid)
    if key in _shape_cache:
        return _shape_cache[key]
    o = ops(grid)
    x, y, z = grid.mesh()
    out = np.zeros((2,) + grid.shape)
    if spec.pattern == "kolmogorov":
        ky = 2 * np.pi / grid.ly * spec.wavenumber
        out[0] = np.sin(ky * y) * vertical_profile(grid)[None, None, :]
    elif spec.pattern == "multiscale":
        rng = np.random.default_rng(spec.phase_seed)
        kmag = o.kmag[..., 0]
        band = (kmag >= spec.kmin) & (kmag <= spec.kmax) & o.dealias_mask[..., 0]
        amp = np.where(band, np.where(kmag > 0, kmag, 1.0) ** (-spec.slope), 0.0)
        profiles = np.stack([vertical_profile(grid, j) for j in range(2)])
        psi_hat = np.zeros(kmag.shape + (grid.nz,), dtype=complex)
        for j in range(2):
            phase = np.exp(2j * np.pi * rng.random(kmag.shape))
            weight = rng.random(kmag.shape)
            psi_hat += (amp * weight * phase / np.where(kmag > 0, kmag, 1.0))[..., None] * profiles[j]
        psi = o.ifft(psi_hat)
        out[0] = -o.dy(psi)
        out[1] = o.dx(psi)
        out = o.dealias(out)
    if spec.pattern != "none":
        rms = math.sqrt(o.norm2(out) / grid.volume)
        if rms > 0:
            out = out / rms
    out.setflags(write=False)
    _shape_cache[key] = out
    return out


def forcing_array(spec: ForcingSpec, grid: GridSpec, t: float) -> np.ndarray:
    if spec.pattern == "none" or spec.amplitude == 0:
        return np.zeros((2,) + grid.shape)
    return spec.amplitude * spec.modulation(t) * forcing_shape(spec, grid)


def forcing_field(spec: ForcingSpec, grid: GridSpec, t: float) -> HVelocity:
    return HVelocity(grid, forcing_array(spec, grid, t))


# -- spatial operators ---------------------------------------------------------


def advect_array(o: GridOps, a: np.ndarray, w: np.ndarray, t: np.ndarray) -> np.ndarray:
    """Skew-symmetric ``(u . grad) t`` with ``u = (a, w)``, dealiased.

    Half advective, half divergence form; the vertical derivative uses a
    summation-by-parts stencil so the discrete energy cancellation holds
    to rounding whenever ``w`` vanishes at both ends and ``t`` is
    band-limited.
    """
    th = o.fft(t)
    adv = a[0] * o.ifft(o.ikx * th) + a[1] * o.ifft(o.iky * th)
    adv += w * o.dz_sbp(t) + o.dz_sbp(w * t)
    sh = o.fft(adv) + o.ikx * o.fft(a[0] * t) + o.iky * o.fft(a[1] * t)
    return o.ifft(0.5 * o.dealias_mask * sh)


def diffusion_array(o: GridOps, v: np.ndarray) -> np.ndarray:
    return o.lap_h(v) + o.d2z_v(v)


def advection(v: ProjectedVelocity, target: HVelocity) -> HVelocity:
    """``u . grad(target)`` in skew-symmetric form, ``u = (v, w(v))``."""
    if isinstance(v, HVelocity):
        v = ProjectedVelocity(v)
    o = ops(v.grid)
    w = w_array(o, v.data)
    return HVelocity(v.grid, advect_array(o, v.data, w, target.data))


def diffusion(v: HVelocity) -> HVelocity:
    """``Lap_H`` spectrally plus v-type second differences in x3."""
    return HVelocity(v.grid, diffusion_array(ops(v.grid), v.data))


# -- implicit solver -------------------------------------------------------------


class ImexSolver:
    """Crank-Nicolson solve of ``(I - dt/2 L) v + dt grad_H p = rhs`` with the constraint.

    ``L = nu Lap - damping`` where ``damping`` is an optional real
    multiplier per horizontal wavenumber (shape (nx, ny, 1)).  States are
    carried as coefficients in the (kx, ky, vertical-eigenmode) basis on
    the unknown nodes 1..N; the bottom node is identically zero.
    """

    def __init__(self, grid: GridSpec, nu: float, dt: float, damping: np.ndarray | None = None):
        o = ops(grid)
        self.o = o
        self.dt = dt
        lin = nu * (-o.k2 + o.eig_val)
        if damping is not None:
            lin = lin - damping
        self.lin = lin
        self.lhs = 1.0 - 0.5 * dt * lin
        self.rhs_fac = 1.0 + 0.5 * dt * lin
        self.s = o.eig_vec
        self.s_inv_t = o.eig_vec_inv.T
        self.s_t = o.eig_vec.T
        self.mean_row = (o.wz[1:] @ o.eig_vec) / grid.l
        self.one = o.eig_vec_inv @ np.ones(o.n_unknown)
        self.m_one = float(self.one @ self.mean_row)
        self.g = self.one / self.lhs
        self.mg = self.g @ self.mean_row
        self.kx = o.kxd[..., 0]
        self.ky = o.kyd[..., 0]

    def to_eig(self, a: np.ndarray) -> np.ndarray:
        return self.o.fft(a[..., 1:]) @ self.s_inv_t

    def from_eig(self, c: np.ndarray) -> np.ndarray:
        out = np.zeros(c.shape[:-3] + self.o.grid.shape)
        out[..., 1:] = self.o.ifft(c @ self.s_t)
        return out

    def _remove_gradient(self, c: np.ndarray, profile: np.ndarray, m_profile) -> np.ndarray:
        m = c @ self.mean_row
        s = (self.kx * m[0] + self.ky * m[1]) * self.o.inv_k2[..., 0]
        s = s / m_profile
        c = c.copy()
        c[0] -= (self.kx * s)[..., None] * profile
        c[1] -= (self.ky * s)[..., None] * profile
        return c

    def project(self, c: np.ndarray) -> np.ndarray:
        return self._remove_gradient(c, self.one, self.m_one)

    def step(self, c_n: np.ndarray, explicit: np.ndarray, extra: np.ndarray | None = None) -> np.ndarray:
        """Advance eigen coefficients; ``explicit`` is a physical-space tendency."""
        rhs = self.rhs_fac * c_n + self.dt * self.to_eig(explicit)
        if extra is not None:
            rhs = rhs + extra
        c = rhs / self.lhs
        c = self._remove_gradient(c, self.g, self.mg)
        c = c * self.o.dealias_mask
        return self.project(c)


_solver_cache: dict = {}


def get_solver(grid: GridSpec, nu: float, dt: float, damping_key=None, damping=None) -> ImexSolver:
    key = (grid, nu, dt, damping_key)
    solver = _solver_cache.get(key)
    if solver is None:
        if len(_solver_cache) > 32:
            _solver_cache.clear()
        solver = ImexSolver(grid, nu, dt, damping)
        _solver_cache[key] = solver
    return solver


def ab2(current: np.ndarray, previous: np.ndarray | None) -> np.ndarray:
    if previous is None:
        return current
    return 1.5 * current - 0.5 * previous


def check_cfl(o: GridOps, v: np.ndarray, w: np.ndarray, dt: float, cfl_max: float) -> None:
    g = o.grid
    umax = float(np.max(np.abs(v))) if v.size else 0.0
    wmax = float(np.max(np.abs(w))) if w.size else 0.0
    if not (math.isfinite(umax) and math.isfinite(wmax)):
        raise NumericalError("non-finite velocity encountered")
    limit = math.inf
    if umax > 0:
        limit = cfl_max * min(g.dx, g.dy) / umax
    if wmax > 0:
        limit = min(limit, cfl_max * g.dz / wmax)
    if dt > limit:
        raise CFLError(f"dt = {dt:g} violates the CFL guard (max stable dt {limit:.4g} at cfl_max {cfl_max:g})")


def reference_tendency(o: GridOps, v: np.ndarray, spec: ForcingSpec, t: float, dt: float, cfl_max: float):
    """Explicit part ``-(u . grad) v + f`` and the vertical velocity."""
    w = w_array(o, v)
    check_cfl(o, v, w, dt, cfl_max)
    return -advect_array(o, v, w, v) + forcing_array(spec, o.grid, t)


def step_reference(s: StateSnapshot, p: SimParams) -> StateSnapshot:
    """One CNAB2 step of the reference equations."""
    if s.grid != p.grid:
        raise ValueError("snapshot grid differs from SimParams grid")
    o = ops(p.grid)
    solver = get_solver(p.grid, p.nu, p.dt)
    tend = reference_tendency(o, s.data, p.forcing, s.t, p.dt, p.cfl_max)
    c = solver.step(solver.to_eig(s.data), ab2(tend, s.history))
    v = solver.from_eig(c)
    if not np.all(np.isfinite(v)):
        raise NumericalError(f"non-finite state after step at t = {s.t + p.dt:g}")
    return StateSnapshot(s.t + p.dt, ProjectedVelocity(HVelocity(p.grid, v)), tend)


# -- spin-up ---------------------------------------------------------------------


def seed_state(grid: GridSpec, amplitude: float = 1.0) -> StateSnapshot:
    """Documented seed: a few low modes with bottom-vanishing vertical profiles, projected.

    ``v1 = sin(y) s0 + 0.6 cos(x + y) s1``, ``v2 = 0.8 sin(x) s0 - 0.4 cos(2x - y) s0``,
    with ``s_j`` the vertical sine profiles, scaled by ``amplitude`` and
    then hydrostatically projected.
    """
    x, y, _ = grid.mesh()
    s0 = vertical_profile(grid, 0)[None, None, :]
    s1 = vertical_profile(grid, 1)[None, None, :]
    ax, ay = 2 * np.pi / grid.lx, 2 * np.pi / grid.ly
    v1 = np.sin(ay * y) * s0 + 0.6 * np.cos(ax * x + ay * y) * s1
    v2 = 0.8 * np.sin(ax * x) * s0 - 0.4 * np.cos(2 * ax * x - ay * y) * s0
    data = amplitude * np.stack([np.broadcast_to(v1, grid.shape), np.broadcast_to(v2, grid.shape)])
    o = ops(grid)
    data = project_array(o, o.dealias(data), dirichlet_bottom=True)
    return StateSnapshot(0.0, ProjectedVelocity(HVelocity(grid, data)))


@dataclass(eq=False)
class SpinUpResult:
    state: StateSnapshot
    times: np.ndarray
    norm_l2: np.ndarray
    norm_h2: np.ndarray

    @property
    def sup_h2(self) -> float:
        return float(np.max(self.norm_h2))

    def tail_max_h2(self, fraction: float = 0.2) -> float:
        n = len(self.norm_h2)
        k = max(1, int(math.ceil(fraction * n)))
        return float(np.max(self.norm_h2[-k:]))


def spin_up(p: SimParams, t_spin: float, amplitude: float = 1.0,
            initial: StateSnapshot | None = None) -> SpinUpResult:
    """Integrate from the seed (or ``initial``) for ``t_spin``; track ||v||_L2 and ||v||_H2."""
    from .diagnostics import norm_array

    o = ops(p.grid)
    s = initial if initial is not None else seed_state(p.grid, amplitude)
    n = int(round(t_spin / p.dt))
    times = [s.t]
    l2 = [norm_array(o, s.data, "L2")]
    h2 = [norm_array(o, s.data, "H2")]
    for _ in range(n):
        s = step_reference(s, p)
        times.append(s.t)
        l2.append(norm_array(o, s.data, "L2"))
        h2.append(norm_array(o, s.data, "H2"))
    return SpinUpResult(s, np.array(times), np.array(l2), np.array(h2))
