import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from conftest import random_velocity
from pe_nudging.grid import GridSpec, HVelocity, ops
from pe_nudging.hydrostatic import ConstraintError
from pe_nudging.linearized import (
    GateConstants,
    apply_A,
    bilinear_B,
    boundedness_ratio,
    calibrate_gates,
    check_gates,
    coercivity_probe,
    grad_inner,
    probe_set,
    smallest_passing_mu,
)
from pe_nudging.observation import Identity, ProbeSuite, SpectralCutoff

G = GridSpec(nx=16, ny=16, nz=9)
ZERO = HVelocity.zeros(G)
GC = GateConstants(c0=1e-3, c1=1.0, c_gate1=1e-3, c_gate2=0.2, c_delta=1.0)


def _flow(seed=0, amp=0.5):
    return HVelocity(G, amp * random_velocity(G, np.random.default_rng(seed)))


class TestOperator:
    def test_stokes_action_on_eigenmode(self):
        o = ops(G)
        x, _, _ = G.mesh()
        prof = np.zeros(G.nz)
        prof[1:] = o.eig_vec[:, 1]
        data = np.zeros((2,) + G.shape)
        data[1] = np.sin(2 * x) * prof
        out = apply_A(ZERO, HVelocity(G, data), 0.0, Identity()).data
        assert np.max(np.abs(out - (4 + abs(o.eig_val[1])) * data)) < 1e-11

    def test_zero_probe(self):
        assert np.all(apply_A(_flow(), ZERO, 3.0, SpectralCutoff(3)).data == 0)

    @given(st.integers(0, 2**31 - 1), st.floats(-2, 2), st.floats(-2, 2))
    def test_linear_in_phi(self, seed, a, b):
        rng = np.random.default_rng(seed)
        v = _flow(seed + 1)
        f, g = random_velocity(G, rng), random_velocity(G, rng)
        J = SpectralCutoff(3)
        lhs = apply_A(v, HVelocity(G, a * f + b * g), 2.0, J).data
        rhs = a * apply_A(v, HVelocity(G, f), 2.0, J).data + b * apply_A(v, HVelocity(G, g), 2.0, J).data
        assert np.max(np.abs(lhs - rhs)) <= 1e-12 * max(1.0, np.max(np.abs(rhs)))

    def test_rejects_incompatible_probe(self, rng):
        with pytest.raises(ConstraintError):
            apply_A(ZERO, HVelocity(G, rng.standard_normal((2,) + G.shape)), 1.0, Identity())

    def test_form_matches_operator(self, rng):
        # <A phi, psi> = B(phi, psi) for compatible fields
        o = ops(G)
        v = _flow(3)
        J = SpectralCutoff(3)
        phi, psi = random_velocity(G, rng), random_velocity(G, rng)
        a = o.inner(apply_A(v, HVelocity(G, phi), 2.5, J).data, psi)
        b = bilinear_B(v, HVelocity(G, phi), HVelocity(G, psi), 2.5, J)
        assert a == pytest.approx(b, rel=1e-10)


class TestForm:
    def test_grad_inner_diagonal(self, rng):
        o = ops(G)
        a = random_velocity(G, rng)
        assert grad_inner(o, a, a) == pytest.approx(o.grad_sq(a), rel=1e-13)

    @given(st.integers(0, 2**31 - 1))
    def test_stokes_form_symmetric(self, seed):
        rng = np.random.default_rng(seed)
        o = ops(G)
        phi, psi = (HVelocity(G, random_velocity(G, rng)) for _ in range(2))
        b1 = bilinear_B(ZERO, phi, psi, 0.0, Identity())
        b2 = bilinear_B(ZERO, psi, phi, 0.0, Identity())
        assert b1 == pytest.approx(grad_inner(o, phi.data, psi.data), abs=1e-12)
        assert abs(b1 - b2) <= 1e-12 * math.sqrt(o.grad_sq(phi.data) * o.grad_sq(psi.data))

    def test_boundedness_finite(self):
        r = boundedness_ratio(_flow(), 2.0, SpectralCutoff(3), n_samples=10)
        assert math.isfinite(r) and r > 0


class TestCoercivity:
    def test_stokes_margin(self):
        o = ops(G)
        mu = 3.0
        probes = probe_set(G, 10, 4)
        m = coercivity_probe(ZERO, mu, Identity(), probes=probes)
        expect = min(0.5 * mu * o.norm2(p) + 0.5 * o.grad_sq(p) for p in probes)
        assert m == pytest.approx(expect, rel=1e-12)
        assert m >= 0.5 * mu

    def test_probes_unit_and_compatible(self):
        o = ops(G)
        for p in probe_set(G, 5, 0):
            assert o.norm2(p) == pytest.approx(1.0)
            assert np.all(p[..., 0] == 0)
            apply_A(ZERO, HVelocity(G, p), 0.0, Identity())

    def test_seeded(self):
        v = _flow()
        a = coercivity_probe(v, 2.0, SpectralCutoff(3), n_samples=8, seed=11)
        b = coercivity_probe(v, 2.0, SpectralCutoff(3), n_samples=8, seed=11)
        assert a == b

    def test_weak_flow_coercive(self, small_flow):
        _, s = small_flow
        assert coercivity_probe(s.v, 4.0, SpectralCutoff(4), n_samples=20) >= 0

    def test_needs_samples(self):
        with pytest.raises(ValueError):
            coercivity_probe(ZERO, 1.0, Identity(), n_samples=0)


class TestGates:
    def test_constants_validated(self):
        with pytest.raises(ValueError):
            GateConstants(c0=0.0, c1=1.0, c_gate1=1.0, c_gate2=1.0, c_delta=1.0)
        with pytest.raises(ValueError):
            GateConstants(c0=1.0, c1=math.inf, c_gate1=1.0, c_gate2=1.0, c_delta=1.0)
        with pytest.raises(ValueError):
            GateConstants(1.0, 1.0, 1.0, 1.0, 1.0, source="guessed")

    def test_margins_by_hand(self):
        r = check_gates(1.0, 4.0, 0.125, GC)
        m = r.margins
        assert m["A_mu_min"] == 3.0
        assert m["A_sobolev"] == pytest.approx(4.0 - 3e-3)
        assert m["A_observation"] == pytest.approx(0.5)
        assert m["gate1_delta"] == pytest.approx(1.0 - 0.25)
        assert m["gate2"] == pytest.approx(4**0.75 / 2 - 0.2 * 1.5)
        assert r.passed
        assert r.as_dict()["pass_gate2"] is True

    def test_small_mu_fails(self):
        r = check_gates(1.0, 0.5, 0.125, GC)
        assert not r.pass_A and not r.passed

    def test_observation_density_caps_mu(self):
        assert not check_gates(1.0, 20.0, 0.125, GC).pass_A

    def test_negative_inputs(self):
        with pytest.raises(ValueError):
            check_gates(-1.0, 1.0, 0.1, GC)

    def test_smallest_passing_mu(self):
        s, delta = 2.0, 0.1
        mu = smallest_passing_mu(s, delta, GC)
        assert mu is not None and check_gates(s, mu, delta, GC).passed
        assert not check_gates(s, mu / 1.06, delta, GC).passed

    def test_no_passing_mu(self):
        assert smallest_passing_mu(50.0, 0.125, GC) is None


class TestCalibration:
    def test_deterministic_and_positive(self, small_flow):
        _, s = small_flow
        suite = ProbeSuite(n_random=10, n_bumps=5, n_modes=5)
        a = calibrate_gates([s.v], SpectralCutoff(4), n_probes=8, observation_probes=suite)
        b = calibrate_gates([s.v], SpectralCutoff(4), n_probes=8, observation_probes=suite)
        assert a == b
        assert a.c_tri > 0 and a.c_adv > 0 and a.c_rem > 0
        assert a.constants.c1 == pytest.approx(2 * a.c_approx)
        assert a.constants.source == "calibrated"

    def test_identity_has_no_remainder(self, small_flow):
        _, s = small_flow
        c = calibrate_gates([s.v], Identity(), n_probes=4)
        assert c.c_rem == 0.0 and c.c_approx == 0.0

    def test_needs_snapshot(self):
        with pytest.raises(ValueError):
            calibrate_gates([], Identity())
