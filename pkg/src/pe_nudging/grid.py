"""
Discrete function spaces on the periodic layer T^2 x (-l, 0).

Horizontal directions are Fourier pseudo-spectral (2/3-rule dealiasing);
the vertical direction uses uniform nodes on [-l, 0], both endpoints
included, with second-order finite differences and trapezoid quadrature.

Node ``iz = 0`` is the bottom (x3 = -l), node ``iz = nz - 1`` is the top
(x3 = 0).  Velocity-type fields vanish at the bottom node and have zero
vertical derivative at the top; w-type fields vanish at both ends.

The array-level kernels used by the time stepper live on :class:`GridOps`
(obtained through :func:`ops`); the dataclass wrappers and module-level
functions are the public, type-checked surface.
"""

from __future__ import annotations

import enum
import functools
import math
from dataclasses import dataclass, field

import numpy as np
import scipy.fft as sfft


class BcKind(enum.Enum):
    """Vertical boundary treatment for finite differences."""

    V_TYPE = "v"  # Neumann at top, Dirichlet at bottom
    W_TYPE = "w"  # Dirichlet at both ends


class SymmetryError(ValueError):
    """Spectral coefficients do not describe a real field."""


@dataclass(frozen=True)
class GridSpec:
    nx: int = 32
    ny: int = 32
    nz: int = 17
    l: float = 1.0
    lx: float = 2 * math.pi
    ly: float = 2 * math.pi
    dealias_fraction: float = 2.0 / 3.0

    def __post_init__(self):
        for name in ("nx", "ny"):
            n = getattr(self, name)
            if n < 8 or n % 2:
                raise ValueError(f"{name} must be even and >= 8, got {n}")
        if self.nz < 5:
            raise ValueError(f"nz must be >= 5, got {self.nz}")
        if not self.l > 0:
            raise ValueError(f"layer depth l must be positive, got {self.l}")
        if not (self.lx > 0 and self.ly > 0):
            raise ValueError("horizontal periods must be positive")
        if not 0 < self.dealias_fraction <= 1:
            raise ValueError(f"dealias_fraction must be in (0, 1], got {self.dealias_fraction}")

    @property
    def shape(self) -> tuple[int, int, int]:
        return (self.nx, self.ny, self.nz)

    @property
    def dx(self) -> float:
        return self.lx / self.nx

    @property
    def dy(self) -> float:
        return self.ly / self.ny

    @property
    def dz(self) -> float:
        return self.l / (self.nz - 1)

    @property
    def x(self) -> np.ndarray:
        return np.arange(self.nx) * self.dx

    @property
    def y(self) -> np.ndarray:
        return np.arange(self.ny) * self.dy

    @property
    def z(self) -> np.ndarray:
        return np.linspace(-self.l, 0.0, self.nz)

    def mesh(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Broadcastable coordinate arrays (x, y, z) of shape (nx,1,1), (1,ny,1), (1,1,nz)."""
        return (
            self.x[:, None, None],
            self.y[None, :, None],
            self.z[None, None, :],
        )

    @property
    def volume(self) -> float:
        return self.lx * self.ly * self.l


def _check_values(grid: GridSpec, values: np.ndarray, lead: tuple[int, ...] = ()) -> np.ndarray:
    values = np.asarray(values, dtype=float)
    expected = lead + grid.shape
    if values.shape != expected:
        raise ValueError(f"field shape {values.shape} does not match grid {expected}")
    if not np.all(np.isfinite(values)):
        raise ValueError("field contains non-finite values")
    return values


@dataclass(frozen=True, eq=False)
class ScalarField:
    grid: GridSpec
    values: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "values", _check_values(self.grid, self.values))

    @classmethod
    def zeros(cls, grid: GridSpec) -> "ScalarField":
        return cls(grid, np.zeros(grid.shape))

    @classmethod
    def from_function(cls, grid: GridSpec, fn) -> "ScalarField":
        x, y, z = grid.mesh()
        return cls(grid, np.broadcast_to(fn(x, y, z), grid.shape).copy())

    def __add__(self, other: "ScalarField") -> "ScalarField":
        return ScalarField(self.grid, self.values + other.values)

    def __sub__(self, other: "ScalarField") -> "ScalarField":
        return ScalarField(self.grid, self.values - other.values)

    def __mul__(self, a: float) -> "ScalarField":
        return ScalarField(self.grid, a * self.values)

    __rmul__ = __mul__


@dataclass(frozen=True, eq=False)
class HVelocity:
    """Horizontal velocity (v1, v2) stored as one (2, nx, ny, nz) array."""

    grid: GridSpec
    data: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "data", _check_values(self.grid, self.data, (2,)))

    @classmethod
    def zeros(cls, grid: GridSpec) -> "HVelocity":
        return cls(grid, np.zeros((2,) + grid.shape))

    @classmethod
    def from_components(cls, v1: ScalarField, v2: ScalarField) -> "HVelocity":
        if v1.grid != v2.grid:
            raise ValueError("components must share the grid")
        return cls(v1.grid, np.stack([v1.values, v2.values]))

    @property
    def comps(self) -> tuple[ScalarField, ScalarField]:
        return ScalarField(self.grid, self.data[0]), ScalarField(self.grid, self.data[1])

    def __add__(self, other: "HVelocity") -> "HVelocity":
        return HVelocity(self.grid, self.data + other.data)

    def __sub__(self, other: "HVelocity") -> "HVelocity":
        return HVelocity(self.grid, self.data - other.data)

    def __mul__(self, a: float) -> "HVelocity":
        return HVelocity(self.grid, a * self.data)

    __rmul__ = __mul__


@dataclass(frozen=True, eq=False)
class SpectralScalar:
    """Horizontal Fourier coefficients per level, indexed (kx, ky, iz).

    Coefficients are normalised so that a real mode ``cos(k.x)`` carries
    1/2 at ``k`` and at ``-k``; ordering follows ``numpy.fft.fftfreq``.
    """

    grid: GridSpec
    coeffs: np.ndarray = field(repr=False)

    def __post_init__(self):
        coeffs = np.asarray(self.coeffs, dtype=complex)
        if coeffs.shape != self.grid.shape:
            raise ValueError(f"coefficient shape {coeffs.shape} does not match grid {self.grid.shape}")
        object.__setattr__(self, "coeffs", coeffs)


class GridOps:
    """Precomputed wavenumbers, masks and vertical stencils for one grid.

    All methods act on plain arrays whose trailing three axes are
    (nx, ny, nz); leading axes (e.g. velocity components) broadcast.
    """

    def __init__(self, grid: GridSpec):
        self.grid = grid
        nx, ny, nz = grid.shape
        mx = np.fft.fftfreq(nx, 1.0 / nx)
        my = np.fft.fftfreq(ny, 1.0 / ny)
        kx = 2 * np.pi / grid.lx * mx
        ky = 2 * np.pi / grid.ly * my
        frac = grid.dealias_fraction
        # full (nx, ny) spectrum, used by the public transforms and setup code
        self.kx_full = kx[:, None, None]
        self.ky_full = ky[None, :, None]
        self.kmag_full = np.sqrt(self.kx_full**2 + self.ky_full**2)
        self.kxd_full = np.where(np.abs(mx) == nx // 2, 0.0, kx)[:, None, None]
        self.kyd_full = np.where(np.abs(my) == ny // 2, 0.0, ky)[None, :, None]
        self.dealias_full = (
            (np.abs(mx) < frac * nx / 2)[:, None, None]
            & (np.abs(my) < frac * ny / 2)[None, :, None]
        )
        # half spectrum (real FFT along y) for the kernels
        myr = my[: ny // 2 + 1].copy()
        myr[-1] = ny // 2
        kyr = 2 * np.pi / grid.ly * myr
        self.kx = kx[:, None, None]
        self.ky = kyr[None, :, None]
        # first derivatives drop the Nyquist mode so d/dx stays skew-adjoint
        kxd = np.where(np.abs(mx) == nx // 2, 0.0, kx)
        kyd = np.where(myr == ny // 2, 0.0, kyr)
        self.kxd = kxd[:, None, None]
        self.kyd = kyd[None, :, None]
        self.ikx = 1j * self.kxd
        self.iky = 1j * self.kyd
        self.k2 = self.kxd**2 + self.kyd**2
        self.kmag = np.sqrt(self.kx**2 + self.ky**2)
        self.dealias_mask = (
            (np.abs(mx) < frac * nx / 2)[:, None, None]
            & (myr < frac * ny / 2)[None, :, None]
        )
        self.inv_k2 = np.where(self.k2 > 0, 1.0 / np.where(self.k2 > 0, self.k2, 1.0), 0.0)

        dz = grid.dz
        w = np.full(nz, dz)
        w[0] = w[-1] = dz / 2
        self.wz = w
        self.cell_area = grid.dx * grid.dy

        # summation-by-parts first derivative: D = H^{-1} Q with Q + Q^T = diag(-1, 0, ..., 0, 1)
        q = np.zeros((nz, nz))
        for i in range(1, nz - 1):
            q[i, i - 1] = -0.5
            q[i, i + 1] = 0.5
        q[0, 0], q[0, 1] = -0.5, 0.5
        q[-1, -2], q[-1, -1] = -0.5, 0.5
        self.d_sbp = q / w[:, None]

        # v-type second derivative on the unknown nodes 1..N (bottom node fixed to 0)
        n = nz - 1
        self.n_unknown = n
        d2 = np.zeros((n, n))
        for i in range(n - 1):
            d2[i, i] = -2.0
            if i > 0:
                d2[i, i - 1] = 1.0
            d2[i, i + 1] = 1.0
        d2[n - 1, n - 2] = 2.0
        d2[n - 1, n - 1] = -2.0
        self.d2_v = d2 / dz**2
        # its exact eigenvectors: sin(theta_j * i), theta_j = (2j+1) pi / (2N)
        idx = np.arange(1, n + 1)
        theta = (2 * np.arange(n) + 1) * np.pi / (2 * n)
        self.eig_vec = np.sin(np.outer(idx, theta))
        self.eig_vec_inv = np.linalg.inv(self.eig_vec)
        self.eig_val = -4.0 / dz**2 * np.sin(theta / 2) ** 2

    # -- horizontal spectral -------------------------------------------------
    def fft(self, a: np.ndarray) -> np.ndarray:
        """Real FFT over (x, y); output has ny // 2 + 1 columns."""
        return sfft.rfft2(a, axes=(-3, -2))

    def ifft(self, a_hat: np.ndarray) -> np.ndarray:
        return sfft.irfft2(a_hat, s=(self.grid.nx, self.grid.ny), axes=(-3, -2))

    def dx(self, a: np.ndarray) -> np.ndarray:
        return self.ifft(self.ikx * self.fft(a))

    def dy(self, a: np.ndarray) -> np.ndarray:
        return self.ifft(self.iky * self.fft(a))

    def div_h(self, v: np.ndarray) -> np.ndarray:
        vh = self.fft(v)
        return self.ifft(self.ikx * vh[0] + self.iky * vh[1])

    def lap_h(self, a: np.ndarray) -> np.ndarray:
        return self.ifft(-self.k2 * self.fft(a))

    def dealias(self, a: np.ndarray) -> np.ndarray:
        return self.ifft(self.dealias_mask * self.fft(a))

    # -- vertical ------------------------------------------------------------
    def dz_sbp(self, a: np.ndarray) -> np.ndarray:
        return a @ self.d_sbp.T

    def d2z_v(self, a: np.ndarray) -> np.ndarray:
        """v-type second derivative; bottom node output is 0, uses the given bottom value."""
        dz2 = self.grid.dz**2
        out = np.zeros_like(a)
        out[..., 1:-1] = (a[..., :-2] - 2 * a[..., 1:-1] + a[..., 2:]) / dz2
        out[..., -1] = 2 * (a[..., -2] - a[..., -1]) / dz2
        return out

    def zint(self, a: np.ndarray) -> np.ndarray:
        """Cumulative trapezoid from the bottom; zero at x3 = -l."""
        out = np.zeros_like(a)
        out[..., 1:] = np.cumsum(0.5 * (a[..., 1:] + a[..., :-1]), axis=-1) * self.grid.dz
        return out

    def depth_mean(self, a: np.ndarray) -> np.ndarray:
        return (a @ self.wz) / self.grid.l

    # -- quadrature ----------------------------------------------------------
    def inner(self, a: np.ndarray, b: np.ndarray) -> float:
        return float(np.sum((a * b) @ self.wz) * self.cell_area)

    def norm2(self, a: np.ndarray) -> float:
        return self.inner(a, a)

    def grad_sq(self, a: np.ndarray) -> float:
        """||grad a||^2: spectral horizontal part plus staggered vertical differences."""
        ah = self.fft(a)
        gx = self.ifft(self.ikx * ah)
        gy = self.ifft(self.iky * ah)
        hor = self.norm2(gx) + self.norm2(gy)
        dzs = np.diff(a, axis=-1) / self.grid.dz
        ver = float(np.sum(dzs**2)) * self.grid.dz * self.cell_area
        return hor + ver

    def hess_sq(self, a: np.ndarray) -> float:
        """Sum over |alpha| = 2 of ||d^alpha a||^2 (mixed terms counted twice)."""
        ah = self.fft(a)
        hh = self.norm2(self.ifft(self.kxd**2 * ah)) + self.norm2(self.ifft(self.kyd**2 * ah))
        hh += 2 * self.norm2(self.ifft(self.kxd * self.kyd * ah))
        dz = self.grid.dz
        gx = self.ifft(self.ikx * ah)
        gy = self.ifft(self.iky * ah)
        mixed = (np.sum(np.diff(gx, axis=-1) ** 2) + np.sum(np.diff(gy, axis=-1) ** 2)) / dz
        mixed = 2 * float(mixed) * self.cell_area
        d2 = self.d2z_v(a)
        return hh + mixed + self.norm2(d2)


@functools.lru_cache(maxsize=16)
def ops(grid: GridSpec) -> GridOps:
    return GridOps(grid)


# -- public operations ---------------------------------------------------------


def to_spectral(f: ScalarField) -> SpectralScalar:
    g = f.grid
    return SpectralScalar(g, np.fft.fft2(f.values, axes=(0, 1)) / (g.nx * g.ny))


def from_spectral(F: SpectralScalar, rtol: float = 1e-12) -> ScalarField:
    g = F.grid
    raw = np.fft.ifft2(F.coeffs, axes=(0, 1)) * (g.nx * g.ny)
    scale = np.max(np.abs(raw)) if raw.size else 0.0
    if np.max(np.abs(raw.imag), initial=0.0) > rtol * max(scale, np.finfo(float).tiny):
        raise SymmetryError("coefficients are not Hermitian-symmetric; field would be complex")
    return ScalarField(g, raw.real.copy())


def dealias(F: SpectralScalar) -> SpectralScalar:
    return SpectralScalar(F.grid, F.coeffs * ops(F.grid).dealias_full)


def d_horizontal(f: ScalarField, axis: int) -> ScalarField:
    if axis not in (1, 2):
        raise ValueError(f"axis must be 1 or 2, got {axis}")
    o = ops(f.grid)
    return ScalarField(f.grid, o.dx(f.values) if axis == 1 else o.dy(f.values))


def d_vertical(f: ScalarField, bc: BcKind) -> ScalarField:
    """Second-order vertical derivative.

    Centered in the interior, one-sided second order at Dirichlet ends; a
    Neumann top (v-type) returns the imposed zero slope there.
    """
    a = f.values
    dz = f.grid.dz
    out = np.empty_like(a)
    out[..., 1:-1] = (a[..., 2:] - a[..., :-2]) / (2 * dz)
    out[..., 0] = (-3 * a[..., 0] + 4 * a[..., 1] - a[..., 2]) / (2 * dz)
    if bc is BcKind.V_TYPE:
        out[..., -1] = 0.0
    elif bc is BcKind.W_TYPE:
        out[..., -1] = (3 * a[..., -1] - 4 * a[..., -2] + a[..., -3]) / (2 * dz)
    else:
        raise ValueError(f"unknown boundary kind {bc!r}")
    return ScalarField(f.grid, out)


def integrate_vertical(f: ScalarField, upper: float | None = None) -> ScalarField:
    """Integral from -l upward.

    With ``upper=None`` returns the cumulative integral at every node;
    otherwise the integral up to ``upper`` (linear interpolation of the
    cumulative trapezoid between nodes), replicated over all levels.
    """
    g = f.grid
    cum = ops(g).zint(f.values)
    if upper is None:
        return ScalarField(g, cum)
    if not -g.l - 1e-12 <= upper <= 1e-12:
        raise ValueError(f"upper limit {upper} outside [-l, 0]")
    pos = (min(max(upper, -g.l), 0.0) + g.l) / g.dz
    i0 = min(int(math.floor(pos)), g.nz - 2)
    frac = pos - i0
    val = (1 - frac) * cum[..., i0] + frac * cum[..., i0 + 1]
    return ScalarField(g, np.repeat(val[..., None], g.nz, axis=-1))


def inner(f, g) -> float:
    """Discrete L^2 inner product (trapezoid in x3, grid sum horizontally)."""
    a = f.values if isinstance(f, ScalarField) else f.data
    b = g.values if isinstance(g, ScalarField) else g.data
    return ops(f.grid).inner(a, b)
