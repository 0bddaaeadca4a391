import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from conftest import random_velocity
from pe_nudging.dynamics import (
    CFLError,
    ForcingSpec,
    SimParams,
    StateSnapshot,
    advection,
    diffusion,
    forcing_array,
    seed_state,
    spin_up,
    step_reference,
)
from pe_nudging.grid import GridSpec, HVelocity, ops
from pe_nudging.hydrostatic import ProjectedVelocity, check_div_constraint

G = GridSpec(nx=16, ny=16, nz=9)
NO_FORCE = ForcingSpec(pattern="none")


def _pv(grid, data):
    return ProjectedVelocity(HVelocity(grid, data))


def _eigenmode(grid, j=0):
    """v = (0, sin(x) s_j(z)) with s_j the discrete vertical eigenvector (zero at the bottom)."""
    o = ops(grid)
    x, _, _ = grid.mesh()
    prof = np.zeros(grid.nz)
    prof[1:] = o.eig_vec[:, j]
    data = np.zeros((2,) + grid.shape)
    data[1] = np.sin(x) * prof[None, None, :]
    return data, 1.0 + abs(o.eig_val[j])


class TestAdvection:
    def test_zero_velocity(self, rng):
        t = HVelocity(G, rng.standard_normal((2,) + G.shape))
        assert np.max(np.abs(advection(_pv(G, np.zeros((2,) + G.shape)), t).data)) == 0

    def test_constant_target_two_dimensional_flow(self):
        x, y, _ = G.mesh()
        data = np.stack([np.broadcast_to(np.sin(y) + 0 * x, G.shape), np.broadcast_to(np.cos(x) + 0 * y, G.shape)])
        t = HVelocity(G, np.ones((2,) + G.shape))
        assert np.max(np.abs(advection(_pv(G, data), t).data)) < 1e-12

    def test_constant_target_converges_with_depth_resolution(self):
        # the skew correction is half the discrete 3D divergence, which vanishes at order 2
        errs = []
        for nz in (17, 33):
            g = GridSpec(nx=16, ny=16, nz=nz)
            x, y, z = g.mesh()
            data = np.zeros((2,) + g.shape)
            data[0] = np.sin(x) * np.cos(np.pi * (z + 1)) + 0 * y
            t = HVelocity(g, np.ones((2,) + g.shape))
            errs.append(np.max(np.abs(advection(_pv(g, data), t).data)))
        assert errs[1] < 1e-2 and 3.0 <= errs[0] / errs[1] <= 5.0

    @given(st.integers(0, 2**31 - 1))
    def test_energy_neutral(self, seed):
        rng = np.random.default_rng(seed)
        o = ops(G)
        v = random_velocity(G, rng)
        V = random_velocity(G, rng)
        tri = o.inner(advection(_pv(G, v), HVelocity(G, V)).data, V)
        scale = math.sqrt(o.norm2(v)) * o.norm2(V)
        assert abs(tri) <= 1e-11 * scale


class TestDiffusion:
    def test_single_horizontal_mode(self):
        x, y, _ = G.mesh()
        data = np.zeros((2,) + G.shape)
        data[0] = np.cos(2 * x + y)
        assert np.max(np.abs(diffusion(HVelocity(G, data)).data + 5 * data)) < 1e-12

    def test_vertical_order_two(self):
        errs = []
        for nz in (17, 33):
            g = GridSpec(nx=8, ny=8, nz=nz)
            _, _, z = g.mesh()
            data = np.zeros((2,) + g.shape)
            data[0] = np.sin(np.pi * (z + 1) / 2)
            out = diffusion(HVelocity(g, data)).data[0]
            errs.append(np.max(np.abs(out[..., 1:] + (np.pi / 2) ** 2 * data[0][..., 1:])))
        assert 3.0 <= errs[0] / errs[1] <= 5.0

    @given(st.integers(0, 2**31 - 1), st.floats(-3, 3), st.floats(-3, 3))
    def test_linear(self, seed, a, b):
        rng = np.random.default_rng(seed)
        f, g = (HVelocity(G, rng.standard_normal((2,) + G.shape)) for _ in range(2))
        lhs = diffusion(HVelocity(G, a * f.data + b * g.data)).data
        rhs = a * diffusion(f).data + b * diffusion(g).data
        assert np.max(np.abs(lhs - rhs)) <= 1e-12 * max(1.0, np.max(np.abs(rhs)))


class TestStepReference:
    def test_eigenmode_cn_factor(self):
        data, lam = _eigenmode(G)
        dt, n = 0.01, 50
        p = SimParams(grid=G, dt=dt, forcing=NO_FORCE)
        s = StateSnapshot(0.0, _pv(G, data))
        for _ in range(n):
            s = step_reference(s, p)
        ratio = s.data[1].max() / data[1].max()
        cn = ((1 - dt * lam / 2) / (1 + dt * lam / 2)) ** n
        assert ratio == pytest.approx(cn, rel=1e-10)
        # continuous rate 1 + (pi/2)^2 within O(dz^2) + O(dt^2)
        assert -math.log(ratio) / (n * dt) == pytest.approx(1 + (math.pi / 2) ** 2, rel=5e-3)

    def test_temporal_order(self):
        data, lam = _eigenmode(G, 1)
        errs = []
        for dt in (0.02, 0.01):
            p = SimParams(grid=G, dt=dt, forcing=NO_FORCE)
            s = StateSnapshot(0.0, _pv(G, data))
            n = int(round(0.4 / dt))
            for _ in range(n):
                s = step_reference(s, p)
            errs.append(abs(s.data[1].max() / data[1].max() - math.exp(-lam * 0.4)))
        assert 3.0 <= errs[0] / errs[1] <= 5.0

    def test_rest_stays_at_rest(self):
        p = SimParams(grid=G, forcing=NO_FORCE)
        s = StateSnapshot(0.0, _pv(G, np.zeros((2,) + G.shape)))
        for _ in range(5):
            s = step_reference(s, p)
        assert np.all(s.data == 0)

    def test_cfl_violation_names_dt(self):
        p = SimParams(grid=G, dt=0.5, forcing=NO_FORCE)
        s = seed_state(G, amplitude=5.0)
        with pytest.raises(CFLError, match="dt = 0.5"):
            step_reference(s, p)

    def test_forced_run_bounded_with_constraint(self, small_flow):
        p, s = small_flow
        o = ops(p.grid)
        norms = []
        for _ in range(50):
            s = step_reference(s, p)
            assert check_div_constraint(s.v) <= 1e-10 * math.sqrt(o.norm2(s.data))
            assert np.all(s.data[..., 0] == 0)
            norms.append(math.sqrt(o.norm2(s.data)))
        assert max(norms) < 10 * norms[0]

    def test_unforced_energy_law(self):
        """(E1 - E0)/dt + trapezoid of ||grad v||^2 is O(dt^2)."""
        rng = np.random.default_rng(3)
        o = ops(G)
        v0 = 0.3 * random_velocity(G, rng)
        res = []
        for dt in (0.004, 0.002):
            p = SimParams(grid=G, dt=dt, forcing=NO_FORCE)
            s = StateSnapshot(0.0, _pv(G, v0))
            s1 = step_reference(s, p)
            s2 = step_reference(s1, p)
            e = [0.5 * o.norm2(x.data) for x in (s1, s2)]
            d = [o.grad_sq(x.data) for x in (s1, s2)]
            res.append(abs((e[1] - e[0]) / dt + 0.5 * (d[0] + d[1])))
        assert res[1] < res[0]


class TestForcing:
    def test_validation(self):
        with pytest.raises(ValueError):
            ForcingSpec(pattern="spiral")
        with pytest.raises(ValueError):
            ForcingSpec(holder_alpha=0.0)
        with pytest.raises(ValueError):
            SimParams(dt=0.0)
        with pytest.raises(ValueError):
            SimParams(cfl_max=1.0)

    def test_modulation(self):
        f = ForcingSpec(mod_a=1.0, mod_b=0.5, omega=2.0)
        assert f.modulation(math.pi / 4) == pytest.approx(1.5)

    @pytest.mark.parametrize("pattern", ["kolmogorov", "multiscale"])
    def test_unit_rms_and_constraint(self, pattern):
        spec = ForcingSpec(pattern=pattern, amplitude=1.0, kmax=6)
        f = forcing_array(spec, G, 0.0)
        o = ops(G)
        assert math.sqrt(o.norm2(f) / G.volume) == pytest.approx(1.0)
        assert check_div_constraint(HVelocity(G, f)) < 1e-12
        assert np.max(np.abs(f[..., 0])) < 1e-12

    def test_none_is_zero(self):
        assert np.all(forcing_array(NO_FORCE, G, 1.0) == 0)


class TestSpinUp:
    def test_zero_time_returns_seed(self):
        p = SimParams(grid=G, forcing=NO_FORCE)
        su = spin_up(p, 0.0, amplitude=0.3)
        assert np.array_equal(su.state.data, seed_state(G, 0.3).data)
        assert len(su.times) == 1

    def test_unforced_decays_monotonically(self):
        p = SimParams(grid=G, dt=0.01, forcing=NO_FORCE)
        su = spin_up(p, 1.0, amplitude=0.3)
        tail = su.norm_l2[5:]
        assert np.all(np.diff(tail) < 0)
        assert su.norm_l2[-1] < 0.2 * su.norm_l2[0]

    def test_forced_tail_bounded(self):
        p = SimParams(grid=G, dt=0.01, forcing=ForcingSpec(amplitude=0.2))
        su = spin_up(p, 2.0, amplitude=0.2)
        assert np.isfinite(su.tail_max_h2())
        assert su.tail_max_h2() <= su.sup_h2
        assert su.tail_max_h2(0.2) > 0
