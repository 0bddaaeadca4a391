import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from pe_nudging.grid import GridSpec, HVelocity, ScalarField, ops
from pe_nudging.observation import (
    Identity,
    LocalAverage,
    ObservationOp,
    ProbeSuite,
    SpectralCutoff,
    estimate_constants,
    observe,
    probe_fields,
    remainder,
)

G = GridSpec(nx=16, ny=16, nz=9)
OPS = [SpectralCutoff(4), LocalAverage(2 * math.pi / 4)]
SMALL = ProbeSuite(n_random=20, n_bumps=10, n_modes=10, seed=5)


def _field(seed):
    return ScalarField(G, np.random.default_rng(seed).standard_normal(G.shape))


class TestObserve:
    def test_identity(self, rng):
        f = HVelocity(G, rng.standard_normal((2,) + G.shape))
        assert np.array_equal(observe(Identity(), f).data, f.data)
        assert np.all(remainder(Identity(), f).data == 0)

    def test_cutoff_removes_high_mode(self):
        f = ScalarField.from_function(G, lambda x, y, z: np.cos(6 * x) + 0 * y + 0 * z)
        assert np.max(np.abs(observe(SpectralCutoff(4), f).values)) < 1e-14

    def test_cutoff_keeps_constant_and_low_modes(self):
        c = ScalarField(G, np.full(G.shape, 2.0))
        assert np.allclose(observe(SpectralCutoff(4), c).values, 2.0)
        low = ScalarField.from_function(G, lambda x, y, z: np.sin(x + 2 * y) * (z + 1))
        assert np.max(np.abs(remainder(SpectralCutoff(4), low).values)) < 1e-13

    def test_cutoff_is_euclidean(self):
        # |(3, 3)| = 4.24 > 4 although both components are below 4
        f = ScalarField.from_function(G, lambda x, y, z: np.cos(3 * x + 3 * y) + 0 * z)
        assert np.max(np.abs(observe(SpectralCutoff(4), f).values)) < 1e-14

    def test_average_keeps_cellwise_constant(self):
        idx = np.arange(16) // 4
        vals = (idx[:, None] * 3 + idx[None, :])[..., None] * np.linspace(0, 1, 9)
        f = ScalarField(G, vals)
        assert np.allclose(observe(LocalAverage(2 * math.pi / 4), f).values, vals)

    def test_average_requires_dividing_cell(self):
        with pytest.raises(ValueError, match="divide"):
            observe(LocalAverage(1.0), ScalarField.zeros(G))
        with pytest.raises(ValueError, match="align"):
            observe(LocalAverage(2 * math.pi / 3), ScalarField.zeros(G))

    @pytest.mark.parametrize("kw", [{"kind": "cutoff"}, {"kind": "average", "h": -1.0}, {"kind": "spline"}])
    def test_invalid_operator(self, kw):
        with pytest.raises(ValueError):
            ObservationOp(**kw)

    def test_delta(self):
        assert SpectralCutoff(8).delta == 0.125
        assert LocalAverage(0.5).delta == 0.5
        assert Identity().delta == 0.0


class TestProperties:
    @pytest.mark.parametrize("J", OPS)
    @given(st.integers(0, 2**31 - 1), st.floats(-5, 5), st.floats(-5, 5))
    def test_linear(self, J, seed, a, b):
        f, g = _field(seed), _field(seed + 1)
        lhs = observe(J, a * f + b * g).values
        rhs = a * observe(J, f).values + b * observe(J, g).values
        assert np.max(np.abs(lhs - rhs)) <= 1e-12 * max(1.0, np.max(np.abs(rhs)))

    @pytest.mark.parametrize("J", OPS)
    @given(st.integers(0, 2**31 - 1))
    def test_idempotent(self, J, seed):
        jf = observe(J, _field(seed))
        assert np.max(np.abs(observe(J, jf).values - jf.values)) <= 1e-12 * np.max(np.abs(jf.values))

    @pytest.mark.parametrize("J", OPS)
    @given(st.integers(0, 2**31 - 1))
    def test_self_adjoint(self, J, seed):
        f, g = _field(seed), _field(seed + 7)
        o = ops(G)
        lhs = o.inner(observe(J, f).values, g.values)
        rhs = o.inner(f.values, observe(J, g).values)
        assert abs(lhs - rhs) <= 1e-10 * math.sqrt(o.norm2(f.values) * o.norm2(g.values))

    @pytest.mark.parametrize("J", OPS)
    def test_feedback_sign(self, J, rng):
        o = ops(G)
        for _ in range(5):
            V = rng.standard_normal((2,) + G.shape)
            assert o.inner(J.apply_array(o, V), V) >= 0


class TestConstants:
    def test_identity(self):
        c = estimate_constants(Identity(), G, SMALL)
        assert c.c_bound == pytest.approx(1.0, abs=1e-14)
        assert c.c_approx == 0.0

    def test_cutoff_parseval_bound(self):
        c = estimate_constants(SpectralCutoff(4), G, SMALL)
        assert c.c_bound <= 1 + 1e-12
        assert 0 < c.c_approx <= 1 + 1e-6

    def test_average_contraction(self):
        c = estimate_constants(LocalAverage(2 * math.pi / 8), G, SMALL)
        assert c.c_bound <= 1 + 1e-12
        assert math.isfinite(c.c_approx) and c.c_approx > 0

    def test_remainder_bound_on_probes(self):
        J = SpectralCutoff(3)
        c = estimate_constants(J, G, SMALL)
        o = ops(G)
        for f in probe_fields(G, SMALL):
            r = J.apply_array(o, f) - f
            assert math.sqrt(o.norm2(r)) <= c.c_approx * J.delta * math.sqrt(o.grad_sq(f)) * (1 + 1e-12)

    def test_deterministic(self):
        a = estimate_constants(SpectralCutoff(4), G, SMALL)
        b = estimate_constants(SpectralCutoff(4), G, SMALL)
        assert a == b

    def test_monotone_in_K(self):
        vals = [estimate_constants(SpectralCutoff(K), G, SMALL).c_approx / K for K in (2, 3, 4, 5)]
        assert all(b <= a + 1e-15 for a, b in zip(vals, vals[1:]))

    def test_empty_suite(self):
        with pytest.raises(ValueError):
            estimate_constants(Identity(), G, ProbeSuite(0, 0, 0))
