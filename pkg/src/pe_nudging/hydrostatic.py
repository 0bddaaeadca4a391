"""
Hydrostatic structure: depth average, hydrostatic Helmholtz projection,
diagnostic vertical velocity.

The projection removes a depth-independent horizontal gradient so that the
depth average becomes horizontally divergence-free.  With
``dirichlet_bottom=True`` it acts on the subspace of fields vanishing on
the bottom node (the space the dynamics lives in) and is the orthogonal
projection there; with the default it acts on all nodes.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.fft as sfft

from .grid import GridOps, HVelocity, ScalarField, ops


class ConstraintError(ValueError):
    """Depth-averaged horizontal divergence is not (numerically) zero."""


DIV_RTOL = 1e-10


def _div_mean_amplitude(o: GridOps, data: np.ndarray) -> float:
    g = o.grid
    vbar = o.depth_mean(data)  # (2, nx, ny)
    vh = np.fft.fft2(vbar, axes=(-2, -1)) / (g.nx * g.ny)
    dh = 1j * (o.kxd_full[..., 0] * vh[0] + o.kyd_full[..., 0] * vh[1])
    amp = np.abs(dh)
    # a real mode k carries |c_k| + |c_-k|; self-conjugate indices count once
    ix = (-np.arange(g.nx)) % g.nx
    iy = (-np.arange(g.ny)) % g.ny
    mirror = amp[np.ix_(ix, iy)]
    self_conj = (np.arange(g.nx)[:, None] == ix[:, None]) & (np.arange(g.ny)[None, :] == iy[None, :])
    return float(np.max(np.where(self_conj, amp, amp + mirror)))


def _l2(o: GridOps, data: np.ndarray) -> float:
    return float(np.sqrt(o.norm2(data)))


@dataclass(frozen=True, eq=False)
class ProjectedVelocity:
    """Horizontal velocity whose depth average is horizontally divergence-free.

    ``scale`` is an optional reference magnitude (e.g. the L2 norm of the
    field that was projected) so that a result consisting of rounding
    noise is not judged against its own vanishing norm.
    """

    v: HVelocity
    scale: float | None = None

    def __post_init__(self):
        o = ops(self.v.grid)
        res = _div_mean_amplitude(o, self.v.data)
        bound = DIV_RTOL * max(_l2(o, self.v.data), self.scale or 0.0)
        if res > max(bound, 1e-300):
            raise ConstraintError(f"div_H of depth average is {res:.3e}, above {bound:.3e}")

    @property
    def grid(self):
        return self.v.grid

    @property
    def data(self) -> np.ndarray:
        return self.v.data


def depth_average(v: HVelocity) -> HVelocity:
    g = v.grid
    vbar = ops(g).depth_mean(v.data)
    return HVelocity(g, np.repeat(vbar[..., None], g.nz, axis=-1))


def project_array(o: GridOps, data: np.ndarray, dirichlet_bottom: bool = False) -> np.ndarray:
    """Array kernel of :func:`project`."""
    g = o.grid
    out = np.array(data, dtype=float, copy=True)
    if dirichlet_bottom:
        out[..., 0] = 0.0
        w = o.wz[1:]
        vbar = (out[..., 1:] @ w) / w.sum()
    else:
        vbar = o.depth_mean(out)
    vh = sfft.rfft2(vbar, axes=(-2, -1))
    kx, ky = o.kxd[..., 0], o.kyd[..., 0]
    # (-Delta_H)^{-1} only on k != 0; the k = 0 divergence is identically zero
    s = (kx * vh[0] + ky * vh[1]) * o.inv_k2[..., 0]
    corr = sfft.irfft2(np.stack([kx * s, ky * s]), s=(g.nx, g.ny), axes=(-2, -1))
    if dirichlet_bottom:
        out[..., 1:] -= corr[..., None]
    else:
        out -= corr[..., None]
    return out


def project(phi: HVelocity, dirichlet_bottom: bool = False) -> ProjectedVelocity:
    """Hydrostatic Helmholtz projection ``phi + grad_H (-Delta_H)^{-1} div_H phibar``."""
    o = ops(phi.grid)
    out = project_array(o, phi.data, dirichlet_bottom)
    return ProjectedVelocity(HVelocity(phi.grid, out), scale=_l2(o, phi.data))


def check_div_constraint(v: HVelocity | ProjectedVelocity) -> float:
    """Largest real-mode amplitude of div_H of the depth average."""
    data = v.data
    return _div_mean_amplitude(ops(v.grid), data)


def w_array(o: GridOps, data: np.ndarray) -> np.ndarray:
    return -o.zint(o.div_h(data))


def compute_w(v: ProjectedVelocity | HVelocity) -> ScalarField:
    """Vertical velocity ``w = -int_{-l}^{x3} div_H v dz``."""
    if isinstance(v, HVelocity):
        v = ProjectedVelocity(v)  # raises ConstraintError when violated
    o = ops(v.grid)
    return ScalarField(v.grid, w_array(o, v.data))
