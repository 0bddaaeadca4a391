import numpy as np
import pytest
from hypothesis import given, strategies as st

from conftest import random_velocity
from pe_nudging.grid import GridSpec, HVelocity, ops
from pe_nudging.hydrostatic import (
    ConstraintError,
    ProjectedVelocity,
    check_div_constraint,
    compute_w,
    depth_average,
    project,
)

G = GridSpec(nx=16, ny=16, nz=9)


def _barotropic_gradient(grid, psi_fn, dpsi_dx, dpsi_dy):
    x, y, _ = grid.mesh()
    return np.stack([np.broadcast_to(dpsi_dx(x, y), grid.shape), np.broadcast_to(dpsi_dy(x, y), grid.shape)])


class TestDepthAverage:
    def test_z_independent_is_fixed(self, rng):
        data = np.repeat(rng.standard_normal((2, 16, 16, 1)), G.nz, axis=-1)
        assert np.allclose(depth_average(HVelocity(G, data)).data, data)

    def test_odd_profile_averages_to_zero(self):
        _, _, z = G.mesh()
        data = np.broadcast_to(np.sin(2 * np.pi * (z + 1)), (2,) + G.shape).copy()
        assert np.max(np.abs(depth_average(HVelocity(G, data)).data)) < 1e-14

    def test_linear_profile_half(self):
        _, _, z = G.mesh()
        data = np.zeros((2,) + G.shape)
        data[0] = z + 1.0
        assert np.allclose(depth_average(HVelocity(G, data)).data[0], 0.5)


class TestProjection:
    def test_barotropic_gradient_removed(self):
        data = _barotropic_gradient(G, None, lambda x, y: np.cos(x) * np.sin(2 * y),
                                    lambda x, y: 2 * np.sin(x) * np.cos(2 * y))
        assert np.max(np.abs(project(HVelocity(G, data)).data)) < 1e-12

    def test_zero_mean_field_unchanged(self):
        _, _, z = G.mesh()
        x, y, _ = G.mesh()
        data = np.stack([np.cos(x) * np.cos(np.pi * (z + 1)) + 0 * y, np.sin(y) * np.cos(np.pi * (z + 1)) + 0 * x])
        out = project(HVelocity(G, data)).data
        assert np.max(np.abs(out - data)) < 1e-12

    @given(st.integers(0, 2**31 - 1))
    def test_idempotent(self, seed):
        rng = np.random.default_rng(seed)
        phi = HVelocity(G, rng.standard_normal((2,) + G.shape))
        p1 = project(phi)
        p2 = project(p1.v)
        o = ops(G)
        assert np.sqrt(o.norm2(p2.data - p1.data)) <= 1e-12 * np.sqrt(o.norm2(phi.data))

    @given(st.integers(0, 2**31 - 1), st.booleans())
    def test_orthogonal(self, seed, wall):
        rng = np.random.default_rng(seed)
        data = rng.standard_normal((2,) + G.shape)
        if wall:
            data[..., 0] = 0
        p = project(HVelocity(G, data), dirichlet_bottom=wall).data
        o = ops(G)
        assert abs(o.inner(p, data - p)) <= 1e-10 * o.norm2(data)

    def test_output_satisfies_constraint(self, rng):
        data = rng.standard_normal((2,) + G.shape)
        p = project(HVelocity(G, data))
        assert check_div_constraint(p) <= 1e-10 * np.sqrt(ops(G).norm2(data))


class TestConstraint:
    def test_gradient_residual_is_laplacian_amplitude(self):
        x, _, _ = G.mesh()
        data = np.zeros((2,) + G.shape)
        data[0] = np.cos(x)
        assert check_div_constraint(HVelocity(G, data)) == pytest.approx(1.0, rel=1e-12)

    def test_zero_field(self):
        assert check_div_constraint(HVelocity.zeros(G)) == 0.0

    def test_projected_velocity_rejects_violation(self):
        x, _, _ = G.mesh()
        data = np.zeros((2,) + G.shape)
        data[0] = np.cos(x)
        with pytest.raises(ConstraintError):
            ProjectedVelocity(HVelocity(G, data))
        with pytest.raises(ConstraintError):
            compute_w(HVelocity(G, data))


class TestVerticalVelocity:
    def test_streamfunction_flow_has_no_w(self):
        x, y, _ = G.mesh()
        psi_x = np.cos(x) * np.cos(y)  # d/dx of sin(x)cos(y)
        psi_y = -np.sin(x) * np.sin(y)
        data = np.stack([np.broadcast_to(-psi_y, G.shape), np.broadcast_to(psi_x, G.shape)])
        assert np.max(np.abs(compute_w(HVelocity(G, data)).values)) < 1e-13

    def test_closed_form(self):
        g = GridSpec(nx=16, ny=16, nz=33)
        x, y, z = g.mesh()
        s = np.cos(np.pi * (z + 1))  # zero depth integral
        data = np.zeros((2,) + g.shape)
        data[0] = np.sin(x) * s + 0 * y
        w = compute_w(HVelocity(g, data)).values
        expect = -np.cos(x) * np.sin(np.pi * (z + 1)) / np.pi + 0 * y
        assert np.max(np.abs(w - expect)) < 2e-3
        assert np.all(w[..., 0] == 0)

    def test_zero_velocity(self):
        assert np.all(compute_w(HVelocity.zeros(G)).values == 0)

    def test_top_value_and_continuity(self, rng):
        for nz in (9, 17):
            g = GridSpec(nx=16, ny=16, nz=nz)
            data = random_velocity(g, rng)
            w = compute_w(HVelocity(g, data)).values
            assert np.max(np.abs(w[..., -1])) <= 1e-8 * np.sqrt(ops(g).norm2(data))

    def test_continuity_residual_second_order(self):
        res = []
        for nz in (17, 33):
            g = GridSpec(nx=16, ny=16, nz=nz)
            x, y, z = g.mesh()
            data = np.zeros((2,) + g.shape)
            data[0] = np.sin(x) * np.cos(np.pi * (z + 1)) + 0 * y
            o = ops(g)
            w = compute_w(HVelocity(g, data)).values
            dzw = (w[..., 2:] - w[..., :-2]) / (2 * g.dz)
            res.append(np.max(np.abs(o.div_h(data)[..., 1:-1] + dzw)))
        assert 3.0 <= res[0] / res[1] <= 5.0
