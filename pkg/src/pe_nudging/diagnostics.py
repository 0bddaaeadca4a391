"""
Discrete norms, energy-budget monitor, decay and plateau fits.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .grid import GridOps, HVelocity, ScalarField, ops

ORDERS = ("L2", "H1", "H2")


def norm_array(o: GridOps, a: np.ndarray, order: str = "L2") -> float:
    if order not in ORDERS:
        raise ValueError(f"order must be one of {ORDERS}, got {order!r}")
    total = o.norm2(a)
    if order in ("H1", "H2"):
        total += o.grad_sq(a)
    if order == "H2":
        total += o.hess_sq(a)
    return math.sqrt(max(total, 0.0))


def norm(f: ScalarField | HVelocity, order: str = "L2") -> float:
    """L2 / H1 / H2 norm; the Sobolev norms add all derivative energies up to that order."""
    a = f.values if isinstance(f, ScalarField) else f.data
    return norm_array(ops(f.grid), a, order)


# -- energy budget -------------------------------------------------------------


@dataclass(frozen=True)
class BudgetTerms:
    """Instantaneous terms of ``d/dt 1/2||V||^2 = -||grad V||^2 - <mu J V, V> + <G, V>``."""

    t: float
    energy: float       # 1/2 ||V||^2
    dissipation: float  # ||grad V||^2
    nudging: float      # <mu J V, V>
    source: float       # <G, V>, G = cross/advective terms + forcing difference


def budget_terms(o: GridOps, t: float, V: np.ndarray, nudge: np.ndarray | None,
                 source: np.ndarray | None) -> BudgetTerms:
    return BudgetTerms(
        t=t,
        energy=0.5 * o.norm2(V),
        dissipation=o.grad_sq(V),
        nudging=o.inner(nudge, V) if nudge is not None else 0.0,
        source=o.inner(source, V) if source is not None else 0.0,
    )


def energy_budget(terms: Sequence[BudgetTerms]) -> np.ndarray:
    """Per-step residual of the energy balance from consecutive snapshots.

    The time derivative is a forward difference and the other terms are
    trapezoidal averages of their endpoint values, so the residual of any
    second-order scheme is O(dt^2).
    """
    res = np.zeros(max(len(terms) - 1, 0))
    for i in range(len(res)):
        a, b = terms[i], terms[i + 1]
        dt = b.t - a.t
        rate = (b.energy - a.energy) / dt
        avg = 0.5 * ((a.dissipation + b.dissipation) + (a.nudging + b.nudging) - (a.source + b.source))
        res[i] = rate + avg
    return res


# -- fits ----------------------------------------------------------------------


@dataclass(frozen=True)
class DecayFit:
    rate: float
    intercept: float
    window: tuple[float, float]
    r_squared: float

    def __post_init__(self):
        if not self.window[0] < self.window[1]:
            raise ValueError("decay window must satisfy t_a < t_b")


@dataclass(frozen=True)
class PlateauEstimate:
    level: float
    tail_window: tuple[float, float]
    method: str = "max-over-tail"


def default_window(times: np.ndarray, series: np.ndarray, floor_rel: float = 1e-13) -> tuple[float, float]:
    """[0.2 T, 0.8 T] clipped to end before the series reaches ``floor_rel * initial``."""
    times = np.asarray(times, dtype=float)
    series = np.asarray(series, dtype=float)
    t0, t1 = times[0], times[-1]
    ta = t0 + 0.2 * (t1 - t0)
    tb = t0 + 0.8 * (t1 - t0)
    floor = floor_rel * series[0]
    below = np.nonzero(series <= floor)[0]
    if below.size:
        t_floor = times[below[0]]
        if t_floor < tb:
            tb = t_floor - (times[1] - times[0]) if len(times) > 1 else t_floor
            ta = min(ta, t0 + 0.2 * (tb - t0))
    return (float(ta), float(tb))


def fit_decay(times: Sequence[float], series: Sequence[float],
              window: tuple[float, float] | None = None) -> DecayFit:
    """Least-squares line through ``log(series)`` on the window; rate is minus the slope."""
    times = np.asarray(times, dtype=float)
    series = np.asarray(series, dtype=float)
    if window is None:
        window = default_window(times, series)
    sel = (times >= window[0] - 1e-12) & (times <= window[1] + 1e-12)
    if sel.sum() < 2:
        raise ValueError(f"decay window {window} holds fewer than two samples")
    t, y = times[sel], series[sel]
    if np.any(y <= 0):
        raise ValueError("series has non-positive values inside the fit window")
    logy = np.log(y)
    slope, intercept = np.polyfit(t, logy, 1)
    ss_tot = float(np.sum((logy - logy.mean()) ** 2))
    ss_res = float(np.sum((logy - (slope * t + intercept)) ** 2))
    if ss_tot <= 1e-28 * max(1.0, float(np.sum(logy**2))):
        r2 = 1.0
    else:
        r2 = min(1.0, max(0.0, 1.0 - ss_res / ss_tot))
    rate = -float(slope)
    if abs(rate) < 1e-14:
        rate = 0.0
    return DecayFit(rate, float(intercept), (float(t[0]), float(t[-1])), r2)


def plateau(series: Sequence[float], tail_fraction: float = 0.25,
            times: Sequence[float] | None = None) -> PlateauEstimate:
    """Max over the final ``tail_fraction`` of samples (limsup surrogate)."""
    series = np.asarray(series, dtype=float)
    if len(series) < 10:
        raise ValueError("plateau needs at least 10 samples")
    if not 0 < tail_fraction <= 1:
        raise ValueError("tail_fraction must lie in (0, 1]")
    k = max(1, int(math.ceil(tail_fraction * len(series))))
    tail = series[-k:]
    if times is None:
        tw = (float(len(series) - k), float(len(series) - 1))
    else:
        tt = np.asarray(times, dtype=float)
        tw = (float(tt[-k]), float(tt[-1]))
    return PlateauEstimate(float(np.max(tail)), tw)


def scaling_fit(pairs: Sequence[tuple[float, float]]) -> float:
    """Log-log least-squares slope of plateau against delta."""
    arr = np.asarray(pairs, dtype=float)
    if arr.ndim != 2 or arr.shape[0] < 3:
        raise ValueError("scaling_fit needs at least three (delta, plateau) pairs")
    if np.any(arr <= 0):
        raise ValueError("scaling_fit needs positive deltas and plateaus")
    d, p = arr[:, 0], arr[:, 1]
    if d.max() / d.min() < 2:
        raise ValueError("delta spread too small (max/min < 2)")
    slope, _ = np.polyfit(np.log(d), np.log(p), 1)
    return float(slope)
