"""
Observation operators ``J_delta`` and empirical estimates of their constants.

Two families act on horizontal structure level by level (the vertical is
fully observed):

* ``SpectralCutoff(K)``: keep horizontal modes with Euclidean ``|k| <= K``;
  ``delta = 1/K``.
* ``LocalAverage(h)``: replace the field by its mean over square cells of
  side ``h``; ``delta = h``.

Both are orthogonal projections in the discrete L2 inner product.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .grid import GridOps, GridSpec, HVelocity, ScalarField, ops


@dataclass(frozen=True)
class ObservationOp:
    kind: str = "identity"
    K: float | None = None
    h: float | None = None

    def __post_init__(self):
        if self.kind == "identity":
            return
        if self.kind == "cutoff":
            if self.K is None or not self.K > 0:
                raise ValueError("SpectralCutoff needs K > 0")
        elif self.kind == "average":
            if self.h is None or not self.h > 0:
                raise ValueError("LocalAverage needs h > 0")
        else:
            raise ValueError(f"unknown observation kind {self.kind!r}")

    @property
    def delta(self) -> float:
        if self.kind == "cutoff":
            return 1.0 / self.K
        if self.kind == "average":
            return float(self.h)
        return 0.0

    @property
    def is_diagonal(self) -> bool:
        """True when the operator is a multiplier per horizontal wavenumber."""
        return self.kind in ("identity", "cutoff")

    def multiplier(self, o: GridOps) -> np.ndarray:
        """0/1 multiplier on the real-FFT spectrum, shape (nx, ny//2+1, 1)."""
        if self.kind == "identity":
            return np.ones_like(o.kmag)
        if self.kind == "cutoff":
            return (o.kmag <= self.K + 1e-12).astype(float)
        raise TypeError("LocalAverage is not diagonal in Fourier space")

    def cells(self, grid: GridSpec) -> tuple[int, int]:
        out = []
        for period, n, name in ((grid.lx, grid.nx, "x"), (grid.ly, grid.ny, "y")):
            m = max(1, round(period / self.h))
            if abs(m * self.h - period) > 0.01 * period:
                raise ValueError(f"cell side h = {self.h:g} does not divide the {name}-period {period:g} within 1%")
            if n % m:
                raise ValueError(f"{m} cells do not align with {n} grid points along {name}")
            out.append(m)
        return out[0], out[1]

    def apply_array(self, o: GridOps, a: np.ndarray) -> np.ndarray:
        if self.kind == "identity":
            return np.array(a, copy=True)
        if self.kind == "cutoff":
            return o.ifft(self.multiplier(o) * o.fft(a))
        g = o.grid
        mx, my = self.cells(g)
        px, py = g.nx // mx, g.ny // my
        lead = a.shape[:-3]
        b = a.reshape(lead + (mx, px, my, py, g.nz))
        mean = b.mean(axis=(-4, -2), keepdims=True)
        return np.broadcast_to(mean, b.shape).reshape(a.shape).copy()


def Identity() -> ObservationOp:
    return ObservationOp("identity")


def SpectralCutoff(K: float) -> ObservationOp:
    return ObservationOp("cutoff", K=float(K))


def LocalAverage(h: float) -> ObservationOp:
    return ObservationOp("average", h=float(h))


def _wrap(f, values):
    if isinstance(f, ScalarField):
        return ScalarField(f.grid, values)
    return HVelocity(f.grid, values)


def _values(f):
    return f.values if isinstance(f, ScalarField) else f.data


def observe(J: ObservationOp, f: ScalarField | HVelocity):
    return _wrap(f, J.apply_array(ops(f.grid), _values(f)))


def remainder(J: ObservationOp, f: ScalarField | HVelocity):
    """``K_delta f = J_delta f - f``."""
    a = _values(f)
    return _wrap(f, J.apply_array(ops(f.grid), a) - a)


# -- probe suite and constants ---------------------------------------------------


@dataclass(frozen=True)
class ProbeSuite:
    n_random: int = 120
    n_bumps: int = 40
    n_modes: int = 40
    seed: int = 0

    @property
    def size(self) -> int:
        return self.n_random + self.n_bumps + self.n_modes


@dataclass(frozen=True)
class AxiomConstants:
    c_bound: float
    c_approx: float
    n_probes: int


def random_band_limited(o: GridOps, rng: np.random.Generator, lead: tuple[int, ...] = ()) -> np.ndarray:
    """Random real field inside the dealiasing band with a random spectral slope."""
    g = o.grid
    slope = rng.uniform(0.0, 3.0)
    amp = (1.0 + o.kmag**2) ** (-slope / 2) * o.dealias_mask
    n_prof = min(4, g.nz - 1)
    profiles = np.stack([np.sin((2 * j + 1) * np.pi * (g.z + g.l) / (2 * g.l)) for j in range(n_prof)])
    profiles = np.concatenate([profiles, np.ones((1, g.nz))])
    shape = lead + o.kmag.shape[:2] + (len(profiles),)
    coef = rng.standard_normal(shape) + 1j * rng.standard_normal(shape)
    spec = (amp[..., 0][..., None] * coef) @ profiles
    return o.ifft(spec)


def probe_fields(grid: GridSpec, suite: ProbeSuite) -> list[np.ndarray]:
    """Deterministic scalar probes: random band-limited, bump gradients, single modes."""
    o = ops(grid)
    rng = np.random.default_rng(suite.seed)
    x, y, z = grid.mesh()
    out = [random_band_limited(o, rng) for _ in range(suite.n_random)]
    for _ in range(suite.n_bumps):
        x0, y0 = rng.uniform(0, grid.lx), rng.uniform(0, grid.ly)
        sigma = rng.uniform(0.2, 1.0)
        dist2 = (2 - 2 * np.cos(2 * np.pi * (x - x0) / grid.lx)) * (grid.lx / (2 * np.pi)) ** 2
        dist2 = dist2 + (2 - 2 * np.cos(2 * np.pi * (y - y0) / grid.ly)) * (grid.ly / (2 * np.pi)) ** 2
        bump = np.exp(-dist2 / (2 * sigma**2)) * (1 + 0.5 * np.cos(np.pi * (z + grid.l) / grid.l))
        bump = np.broadcast_to(bump, grid.shape)
        grad = o.dx(bump) if rng.random() < 0.5 else o.dy(bump)
        out.append(o.dealias(grad))
    band = np.argwhere(o.dealias_full[..., 0])
    for _ in range(suite.n_modes):
        ix, iy = band[rng.integers(len(band))]
        kx = o.kx_full[ix, 0, 0]
        ky = o.ky_full[0, iy, 0]
        phase = rng.uniform(0, 2 * np.pi)
        prof = np.cos(rng.integers(0, 3) * np.pi * (z + grid.l) / grid.l)
        out.append(np.broadcast_to(np.cos(kx * x + ky * y + phase) * prof, grid.shape).copy())
    return out


def estimate_constants(J: ObservationOp, grid: GridSpec, probes: ProbeSuite = ProbeSuite()) -> AxiomConstants:
    """Empirical sup of ||Jf||/||f|| and ||Jf - f|| / (delta ||grad f||)."""
    if probes.size < 1:
        raise ValueError("probe suite is empty")
    o = ops(grid)
    c_bound = 0.0
    c_approx = 0.0
    delta = J.delta
    for f in probe_fields(grid, probes):
        nf = math.sqrt(o.norm2(f))
        if nf == 0:
            continue
        jf = J.apply_array(o, f)
        c_bound = max(c_bound, math.sqrt(o.norm2(jf)) / nf)
        rem = math.sqrt(o.norm2(jf - f))
        grad = math.sqrt(o.grad_sq(f))
        if rem == 0:
            continue
        if delta == 0 or grad == 0:
            c_approx = math.inf
        else:
            c_approx = max(c_approx, rem / (delta * grad))
    return AxiomConstants(c_bound, c_approx, probes.size)
