import json
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import integrate as sint

from ks2d.linear import (
    I_apply,
    I_bound_oracle,
    I_norm_bound,
    Trajectory,
    duhamel_integral,
    exp_trapezoid_weights,
    l1_l2_multiplier_check,
    probe_operator_norm,
    semigroup_apply,
    smoothing_check,
    smoothing_constant,
)
from ks2d.spectral import SpectralField, TorusSpec, build_symbol_table

PI = math.pi
SPEC_PI = TorusSpec(PI, PI, 16, 16)
SPEC_4PI = TorusSpec(4 * PI, 4 * PI, 16, 16)


def mode_field(spec, k, c=1.0):
    """u with coefficient ``c`` at k and its conjugate at -k; v = 0."""
    u = np.zeros(spec.shape, complex)
    u[spec.lattice_index(*k)] = c
    u[spec.lattice_index(-k[0], -k[1])] = np.conj(c)
    return SpectralField(spec, u, np.zeros(spec.shape, complex), gradient=False)


def random_field(spec, seed):
    rng = np.random.default_rng(seed)
    phi = spec.to_spectral(rng.standard_normal(spec.shape))
    return SpectralField.from_potential(spec, phi)


def constant_series(spec, k, c, T, dt):
    nt = int(round(T / dt)) + 1
    u = np.zeros((nt,) + spec.shape, complex)
    u[(slice(None),) + spec.lattice_index(*k)] = c
    return Trajectory(spec, np.arange(nt) * dt, u, np.zeros_like(u), gradient=False)


class TestTrajectory:
    def test_validation(self):
        z = np.zeros((2,) + SPEC_PI.shape, complex)
        with pytest.raises(ValueError):
            Trajectory(SPEC_PI, [0.1, 0.2], z, z)
        with pytest.raises(ValueError):
            Trajectory(SPEC_PI, [0.0, 0.0], z, z)
        with pytest.raises(ValueError):
            Trajectory(SPEC_PI, [0.0, 0.1, 0.2], z, z)

    def test_uniform_and_until(self):
        z = np.zeros((4,) + SPEC_PI.shape, complex)
        tr = Trajectory(SPEC_PI, np.array([0, 1, 2, 3]) * 0.1, z, z)
        assert tr.is_uniform and tr.dt == pytest.approx(0.1)
        assert len(tr.until(0.2)) == 3
        bad = Trajectory(SPEC_PI, [0.0, 0.1, 0.3, 0.4], z, z)
        with pytest.raises(ValueError, match="not uniform"):
            bad.dt


class TestSemigroup:
    def test_identity_at_zero(self):
        f = random_field(SPEC_PI, 0)
        g = semigroup_apply(0.0, f)
        np.testing.assert_array_equal(g.uhat, f.uhat)

    def test_pi_domain_decay(self):
        f = mode_field(SPEC_PI, (1, 0))
        g = semigroup_apply(0.1, f)
        assert abs(g.uhat[SPEC_PI.lattice_index(1, 0)]) == pytest.approx(math.exp(-1.2), rel=1e-14)

    def test_four_pi_growth(self):
        f = mode_field(SPEC_4PI, (1, 1))
        g = semigroup_apply(1.0, f)
        assert abs(g.uhat[SPEC_4PI.lattice_index(1, 1)]) == pytest.approx(math.exp(0.25), rel=1e-14)

    def test_negative_time_rejected(self):
        with pytest.raises(ValueError):
            semigroup_apply(-1e-3, random_field(SPEC_PI, 0))

    @settings(deadline=None, max_examples=40)
    @given(st.floats(0, 2), st.floats(0, 2), st.integers(0, 100))
    def test_semigroup_property(self, t1, t2, seed):
        f = random_field(SPEC_4PI, seed)
        a = semigroup_apply(t1 + t2, f)
        b = semigroup_apply(t1, semigroup_apply(t2, f))
        scale = np.max(np.abs(a.uhat)) + 1e-300
        assert np.max(np.abs(a.uhat - b.uhat)) <= 1e-12 * scale
        assert np.max(np.abs(a.vhat - b.vhat)) <= 1e-12 * scale

    @settings(deadline=None, max_examples=20)
    @given(st.floats(0, 1), st.integers(0, 100))
    def test_invariants_and_symmetrization(self, t, seed):
        rng = np.random.default_rng(seed)
        z = rng.standard_normal((2,) + SPEC_PI.shape) + 1j * rng.standard_normal((2,) + SPEC_PI.shape)
        f = SpectralField(SPEC_PI, z[0], z[1], gradient=False)
        a = semigroup_apply(t, f.symmetrized())
        b = semigroup_apply(t, f).symmetrized()
        np.testing.assert_allclose(a.uhat, b.uhat, atol=1e-14)
        g = semigroup_apply(t, random_field(SPEC_PI, seed))
        assert g.reality_defect() < 1e-14
        assert g.curl_defect() < 1e-14


def phi1(sigma, t):
    """int_0^t exp(sigma (x - t)) dx."""
    return t if sigma == 0 else -math.expm1(-sigma * t) / sigma


def phi2(sigma, t):
    """int_0^t exp(sigma (x - t)) x dx, with a series near sigma t = 0."""
    z = sigma * t
    if abs(z) < 1e-4:
        return t * t * (0.5 - z / 6 + z * z / 24)
    return (z + math.expm1(-z)) / sigma ** 2


class TestQuadrature:
    @pytest.mark.parametrize("z", [1e-8, 0.05, 0.0999, 0.1, 0.1001, 1.0, 50.0, -0.05, -2.0])
    def test_weights_match_quad(self, z):
        # weights integrate the hat functions against exp(z (x - 1)) on [0, 1]
        w_old, w_new = exp_trapezoid_weights(z)
        q_old = sint.quad(lambda x: math.exp(z * (x - 1)) * (1 - x), 0, 1, epsabs=0, epsrel=1e-13)[0]
        q_new = sint.quad(lambda x: math.exp(z * (x - 1)) * x, 0, 1, epsabs=0, epsrel=1e-13)[0]
        assert float(w_old) == pytest.approx(q_old, rel=1e-12)
        assert float(w_new) == pytest.approx(q_new, rel=1e-12)

    @given(st.floats(-1, 200), st.floats(-3, 3), st.floats(-3, 3))
    def test_exact_on_linear_data(self, sigma, a, b):
        dt, nt = 0.01, 51
        s = np.arange(nt) * dt
        J = duhamel_integral(np.array(sigma), a + b * s, dt)
        t = s[-1]
        exact = a * phi1(sigma, t) + b * phi2(sigma, t)
        assert J[-1].real == pytest.approx(exact, rel=1e-9, abs=1e-12)


class TestIApply:
    def test_zero(self):
        h = constant_series(SPEC_PI, (1, 0), 0.0, 0.1, 1e-3)
        out = I_apply("x", h)
        assert np.all(out.uhat == 0)

    def test_constant_closed_form(self):
        k, c, dt = (2, 1), 0.3 - 0.2j, 1e-3
        h = constant_series(SPEC_PI, k, c, 1.0, dt)
        sigma = build_symbol_table(SPEC_PI).sigma[SPEC_PI.lattice_index(*k)]
        out = I_apply("x", h)
        kt1 = 2 * PI * k[0] / PI
        exact = 1j * kt1 * c * (1 - np.exp(-sigma * h.times)) / sigma
        got = out.uhat[:, SPEC_PI.lattice_index(*k)[0], SPEC_PI.lattice_index(*k)[1]]
        assert np.max(np.abs(got - exact)) <= 1e-6 * np.max(np.abs(exact))

    def test_axis_x_kills_y_only_fields(self):
        h = constant_series(SPEC_PI, (0, 2), 1.0, 0.2, 1e-3)
        assert np.all(I_apply("x", h).uhat == 0)
        assert np.any(I_apply("y", h).uhat != 0)

    def test_zero_mode_ignored(self):
        h = constant_series(SPEC_PI, (0, 0), 1.0, 0.2, 1e-3)
        assert np.all(I_apply("x", h).uhat == 0) and np.all(I_apply("y", h).uhat == 0)

    def test_non_uniform_rejected(self):
        z = np.zeros((3,) + SPEC_PI.shape, complex)
        with pytest.raises(ValueError):
            I_apply("x", Trajectory(SPEC_PI, [0.0, 0.1, 0.3], z, z))

    def test_bad_axis(self):
        with pytest.raises(ValueError):
            I_apply("z", constant_series(SPEC_PI, (1, 0), 1.0, 0.1, 0.01))

    @settings(deadline=None, max_examples=25)
    @given(st.floats(-3, 3), st.floats(-3, 3), st.integers(0, 1000))
    def test_linearity(self, a, b, seed):
        rng = np.random.default_rng(seed)
        shape = (11,) + SPEC_PI.shape
        h1 = rng.standard_normal(shape) + 1j * rng.standard_normal(shape)
        h2 = rng.standard_normal(shape) + 1j * rng.standard_normal(shape)
        t = np.arange(11) * 0.01
        T1 = Trajectory(SPEC_PI, t, h1, h2, False)
        T2 = Trajectory(SPEC_PI, t, h2, h1, False)
        T12 = Trajectory(SPEC_PI, t, a * h1 + b * h2, a * h2 + b * h1, False)
        lhs = I_apply("y", T12).uhat
        rhs = a * I_apply("y", T1).uhat + b * I_apply("y", T2).uhat
        scale = (abs(a) + abs(b)) * np.max(np.abs(I_apply("y", T1).uhat)) + 1e-300
        assert np.max(np.abs(lhs - rhs)) <= 1e-12 * scale


class TestNormBounds:
    def test_pi_domain_value(self):
        rep = I_norm_bound(TorusSpec(PI, PI, 32, 32), 1.0, n_probes=0)
        assert rep.bound_I1 == pytest.approx(2 / 11, rel=1e-14)
        assert rep.bound_I2 == pytest.approx(2 / 11, rel=1e-14)

    @pytest.mark.parametrize("alpha", [12.0, 13.0, 0.0])
    def test_no_gap_errors(self, alpha):
        with pytest.raises(ValueError, match="no gap"):
            I_norm_bound(TorusSpec(PI, PI, 32, 32), alpha)

    def test_growing_domain_needs_horizon(self):
        with pytest.raises(ValueError, match="no gap"):
            I_norm_bound(SPEC_4PI, 1.0)

    def test_finite_horizon_matches_brute_force(self):
        rep = I_norm_bound(SPEC_4PI, 1.0, horizon=2.0, n_probes=0)
        sup, sup1 = I_bound_oracle(SPEC_4PI, 1.0, 2.0, "x", nt=201, kmax=7)
        assert rep.bound_I1 == pytest.approx(sup, rel=1e-6)
        assert sup1 > 0  # Omega_1 is non-empty on the 4pi domain

    @pytest.mark.parametrize("alpha", [0.5, 1.0, 6.0])
    def test_probes_below_bound(self, alpha):
        spec = TorusSpec(PI, PI, 32, 32)
        rep = I_norm_bound(spec, alpha, n_probes=30)
        assert 0 < rep.empirical_I1 <= rep.bound_I1
        assert 0 < rep.empirical_I2 <= rep.bound_I2
        # the worst single mode nearly saturates the bound
        assert rep.empirical_I1 > 0.99 * rep.bound_I1

    def test_probe_without_interpolant_sup_can_overshoot(self):
        # sanity of the design: the continuous interpolant sup never undercuts the node sup
        val = probe_operator_norm(SPEC_4PI, 1.0, "x", 2.0, n_probes=4, dt=1e-2)
        assert val <= I_norm_bound(SPEC_4PI, 1.0, horizon=2.0, n_probes=0).bound_I1

    def test_json(self, tmp_path):
        rep = I_norm_bound(TorusSpec(PI, PI, 32, 32), 1.0, n_probes=5)
        p = tmp_path / "r.json"
        rep.to_json(p)
        d = json.loads(p.read_text())
        assert d["bound_I1"] == pytest.approx(2 / 11) and d["n_probes"] == 5


def brute_multiplier(L, N, t, d):
    best = 0.0
    for k1 in range(-N // 2 + 1, N // 2):
        for k2 in range(-N // 2 + 1, N // 2):
            if k1 == 0 and k2 == 0:
                continue
            x2 = (2 * PI * k1 / L) ** 2 + (2 * PI * k2 / L) ** 2
            best = max(best, x2 ** (d / 2) * math.exp(-t * (x2 * x2 - x2)))
    return best


class TestSmoothing:
    @pytest.mark.parametrize("t", [0.01, 0.1, 1.0, 5.0])
    def test_equal_indices(self, t):
        measured, bound = smoothing_check(TorusSpec(4 * PI, 4 * PI, 32, 32), t, 1, 1)
        assert measured == pytest.approx(math.exp(t / 4), rel=1e-13)
        assert measured <= math.exp(t / 4) * (1 + 1e-14)
        assert measured <= bound * (1 + 1e-14)

    def test_gap_decay(self):
        measured, _ = smoothing_check(TorusSpec(PI, PI, 32, 32), 20.0, 1, 0)
        assert measured < 1e-90

    def test_brute_force_lattice_max(self):
        measured, _ = smoothing_check(TorusSpec(4 * PI, 4 * PI, 32, 32), 0.01, 1, 0)
        assert measured == pytest.approx(brute_multiplier(4 * PI, 32, 0.01, 1), rel=1e-12)

    def test_rejects_bad_args(self):
        with pytest.raises(ValueError):
            smoothing_check(SPEC_PI, 0.0, 1, 0)
        with pytest.raises(ValueError):
            smoothing_check(SPEC_PI, 0.1, 0, 1)

    @pytest.mark.parametrize("s,r", [(1, 0), (2, 0), (1, 1)])
    def test_constant_against_dense_grid(self, s, r):
        # independent oracle: brute-force sup over an (x, t) grid
        d = s - r
        x = np.linspace(0.0, 60.0, 120001)[None, :]
        t = np.logspace(-6, 2, 801)[:, None]
        with np.errstate(divide="ignore", invalid="ignore"):
            logm = d * np.log(x) - t * (x ** 4 - x ** 2)
        logm[:, 0] = 0.0 if d == 0 else -np.inf
        env = t[:, 0] / 2 + np.maximum(0.0, -d / 4 * np.log(t[:, 0]))
        grid = float(np.exp(np.max(np.max(logm, axis=1) - env)))
        assert smoothing_constant(s, r) == pytest.approx(grid, rel=2e-4)
        assert smoothing_constant(s, r) >= grid * (1 - 1e-12)

    def test_frozen_constants(self):
        assert smoothing_constant(1, 1) == 1.0
        assert smoothing_constant(2, 0) == pytest.approx(math.exp(-0.5), rel=1e-9)
        assert smoothing_constant(1, 0) == pytest.approx(0.6548907866815301, rel=1e-9)

    @pytest.mark.parametrize("L", [PI, 2 * PI, 4 * PI, 9.0])
    def test_bound_holds_everywhere(self, L):
        spec = TorusSpec(L, L, 64, 64)
        for s, r in [(1, 0), (2, 0), (1, 1)]:
            for t in np.logspace(-3, 1, 13):
                measured, bound = smoothing_check(spec, t, s, r)
                assert measured <= bound * (1 + 1e-12)

    def test_l2_multiplier_report(self):
        meas, env, C = l1_l2_multiplier_check(TorusSpec(4 * PI, 4 * PI, 64, 64), [0.01, 0.1, 1.0])
        assert meas.shape == env.shape == (3,)
        assert np.all(meas <= C * env * (1 + 1e-12))
