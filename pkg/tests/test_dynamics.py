"""Gaussian evolution, propagator matrices, and master-equation coefficients."""

from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from oqnet import dynamics, greens, model, spectral


def closed_spec(omega0_sq=1.0):
    return model.NetworkSpec(coupling=[[omega0_sq]], regions=())


def damped_spec(omega0_sq=1.0, coupling=0.12, cutoff=4.0, temperature=1.2,
                shape="exponential"):
    d = spectral.PowerLawDensity(site=0, coupling=coupling, exponent=1.0,
                                 cutoff=cutoff, cutoff_shape=shape)
    reg = model.Region(id="a", sites=(0,),
                       reservoirs=(model.Reservoir(temperature, d),))
    return model.NetworkSpec(coupling=[[omega0_sq]], regions=(reg,))


@pytest.fixture(scope="module")
def damped_run():
    spec = damped_spec(coupling=0.15, cutoff=2.0)
    gf = greens.solve_G_time(spec, t_max=12.0, h=0.005)
    series = dynamics.propagator_series(gf)
    coeffs = dynamics.master_coefficients(gf, series)
    return spec, gf, series, coeffs


@pytest.fixture(scope="module")
def settled_run():
    spec = damped_spec(coupling=0.15, cutoff=2.0)
    gf = greens.solve_G_time(spec, t_max=60.0, h=0.01)
    series = dynamics.propagator_series(gf)
    coeffs = dynamics.master_coefficients(gf, series)
    return spec, gf, series, coeffs


class TestStates:
    def test_vacuum_satisfies_uncertainty(self):
        state = dynamics.vacuum_state(np.diag([1.0, 4.0]))
        assert state.uncertainty_margin() > -1e-12

    def test_vacuum_variances(self):
        state = dynamics.vacuum_state([[4.0]])
        assert state.cov[0, 0] == pytest.approx(0.25)   # 1/(2 w), w = 2
        assert state.cov[1, 1] == pytest.approx(1.0)    # w/2

    def test_thermal_reduces_to_vacuum_at_t0(self):
        v = np.array([[1.0, -0.2], [-0.2, 2.0]])
        cold = dynamics.thermal_state(v, 0.0)
        vac = dynamics.vacuum_state(v)
        assert np.allclose(cold.cov, vac.cov, atol=1e-14)

    def test_thermal_high_t_equipartition(self):
        temp = 50.0
        state = dynamics.thermal_state([[1.0]], temp)
        assert state.cov[0, 0] == pytest.approx(temp, rel=1e-3)
        assert state.cov[1, 1] == pytest.approx(temp, rel=1e-3)


class TestPropagator:
    def test_identity_at_zero(self, damped_run):
        _, gf, series, _ = damped_run
        pm = series.matrices(0.0)
        assert np.array_equal(pm.phi, np.eye(2))
        assert np.all(pm.sigma == 0.0)

    def test_zero_coupling_rotation(self):
        w0 = 1.7
        spec = closed_spec(omega0_sq=w0 * w0)
        gf = greens.solve_G_time(spec, t_max=5.0, h=1e-3)
        series = dynamics.propagator_series(gf)
        t = 2.0
        pm = series.matrices(t)
        want = np.array([[np.cos(w0 * t), np.sin(w0 * t) / w0],
                         [-w0 * np.sin(w0 * t), np.cos(w0 * t)]])
        assert np.max(np.abs(pm.phi - want)) < 1e-5
        assert np.all(pm.sigma == 0.0)

    def test_sigma_positive_semidefinite(self, damped_run):
        _, gf, series, _ = damped_run
        for i in (1, 10, 400, gf.t.size - 1):
            eigs = np.linalg.eigvalsh(series.sigma(i))
            assert eigs.min() > -1e-12 * max(1.0, eigs.max())

    def test_evolved_covariance_forgets_initial_state(self):
        spec = damped_spec(coupling=0.1, cutoff=4.0)
        gf = greens.solve_G_time(spec, t_max=60.0, h=0.01)
        series = dynamics.propagator_series(gf)
        pm = series.matrices(60.0)
        a = dynamics.evolve_state(dynamics.vacuum_state([[1.0]]), pm)
        b = dynamics.evolve_state(dynamics.thermal_state([[1.0]], 3.0), pm)
        scale = np.max(np.abs(a.cov))
        assert np.max(np.abs(a.cov - b.cov)) < 1e-6 * scale

    def test_evolve_keeps_mean_map_linear(self, damped_run):
        _, gf, series, _ = damped_run
        pm = series.matrices(6.0)
        s1 = dynamics.GaussianState(mean=[1.0, 0.0], cov=np.eye(2) / 2)
        s2 = dynamics.GaussianState(mean=[0.0, 1.0], cov=np.eye(2) / 2)
        e1 = dynamics.evolve_state(s1, pm)
        e2 = dynamics.evolve_state(s2, pm)
        assert np.allclose(e1.mean, pm.phi[:, 0])
        assert np.allclose(e2.mean, pm.phi[:, 1])
        assert np.allclose(e1.cov, e2.cov)  # additive noise is state independent


class TestUncertaintyProperty:
    @settings(max_examples=25, deadline=None)
    @given(seed=st.integers(min_value=0, max_value=10_000))
    def test_evolution_preserves_uncertainty(self, seed, request):
        spec, gf, series, _ = request.getfixturevalue("damped_run")
        rng = np.random.default_rng(seed)
        # random pure state through a symplectic transform, plus classical noise
        k = 1
        h = rng.normal(size=(2 * k, 2 * k))
        h = 0.3 * (h + h.T)
        s = _expm(dynamics.symplectic_form(k) @ h)
        cov = 0.5 * s @ s.T
        noise = rng.normal(size=(2 * k, 2 * k)) * 0.4
        cov = cov + noise @ noise.T
        state = dynamics.GaussianState(mean=rng.normal(size=2 * k), cov=cov)
        assert state.uncertainty_margin() > -1e-10

        pm = series.matrices(float(series.t[rng.integers(1, series.t.size)]))
        out = dynamics.evolve_state(state, pm)
        scale = max(1.0, float(np.max(np.abs(out.cov))))
        assert out.uncertainty_margin() > -1e-6 * scale


def _expm(a):
    from scipy.linalg import expm
    return expm(a)


class TestMasterCoefficients:
    def test_zero_coupling_constant_generator(self):
        w0sq = 2.0
        spec = closed_spec(omega0_sq=w0sq)
        gf = greens.solve_G_time(spec, t_max=4.0, h=1e-3)
        series = dynamics.propagator_series(gf)
        coeffs = dynamics.master_coefficients(gf, series)
        ok = ~coeffs.masked
        assert np.max(np.abs(coeffs.vr_t[ok] - w0sq)) < 1e-6
        assert np.max(np.abs(coeffs.gamma_t[ok])) < 1e-6
        assert np.max(np.abs(coeffs.d_t[ok])) < 1e-12
        assert np.max(np.abs(coeffs.f_t[ok])) < 1e-12

    def test_initial_values(self, damped_run):
        spec, gf, series, coeffs = damped_run
        # V_R(0) is the bare potential; relaxation starts from zero
        assert coeffs.vr_t[0][0, 0] == pytest.approx(spec.coupling[0, 0], abs=1e-9)
        assert coeffs.gamma_t[0][0, 0] == pytest.approx(0.0, abs=1e-9)

    def test_relaxation_vanishes_at_small_times(self, damped_run):
        _, gf, series, coeffs = damped_run
        early = np.abs(coeffs.gamma_t[1:4, 0, 0])
        assert np.all(early < 5e-2)
        assert early[0] < early[2] + 1e-12  # growing out of zero

    def test_long_time_limits(self, settled_run):
        # coefficients settle to constants over the window where G is still
        # numerically resolved, and the limits match the dressed pole of the
        # response fitted directly from the late-time signal
        spec, gf, series, coeffs = settled_run
        lo, hi = gf.index_of(15.0), gf.index_of(30.0)
        win = slice(lo, hi)
        for arr, tol in ((coeffs.vr_t, 2e-2), (coeffs.gamma_t, 2e-2),
                         (coeffs.d_t, 8e-2), (coeffs.f_t, 8e-2)):
            seg = arr[win, 0, 0]
            assert np.max(np.abs(seg - seg.mean())) < tol * max(1.0, abs(seg.mean()))

        g = gf.G[win, 0, 0]
        t = gf.t[win]
        crossings = np.where(np.sign(g[:-1]) != np.sign(g[1:]))[0]
        omega_fit = np.pi / np.mean(np.diff(t[crossings]))
        peaks = np.abs(g[1:-1])[(np.abs(g[1:-1]) >= np.abs(g[:-2]))
                                & (np.abs(g[1:-1]) >= np.abs(g[2:]))]
        tp = t[1:-1][(np.abs(g[1:-1]) >= np.abs(g[:-2]))
                     & (np.abs(g[1:-1]) >= np.abs(g[2:]))]
        rate_fit = -np.polyfit(tp, np.log(peaks), 1)[0]
        vr_lim = coeffs.vr_t[win, 0, 0].mean()
        gamma_lim = coeffs.gamma_t[win, 0, 0].mean()
        assert gamma_lim == pytest.approx(rate_fit, rel=0.05)
        assert vr_lim == pytest.approx(omega_fit ** 2 + rate_fit ** 2, rel=0.05)

    def test_large_cutoff_limit_recovers_renormalized_potential(self):
        # V_R(t) -> V - 2 gamma(0) only in the large-cutoff (Markovian) regime
        spec = damped_spec(omega0_sq=1.0, coupling=0.01, cutoff=40.0,
                           shape="exponential")
        gf = greens.solve_G_time(spec, t_max=25.0, h=0.002)
        series = dynamics.propagator_series(gf)
        coeffs = dynamics.master_coefficients(gf, series)
        vr_inf = greens.renormalized_potential(spec)[0, 0]
        i = gf.index_of(20.0)
        assert coeffs.vr_t[i, 0, 0] == pytest.approx(vr_inf, rel=0.05)

    def test_paper_closed_form_matches_block_solve(self, damped_run):
        _, gf, series, coeffs = damped_run
        for i in (50, 500, 1500):
            vr, gam = dynamics.paper_form_vr_gamma(gf, i)
            assert np.allclose(vr, coeffs.vr_t[i], atol=1e-9)
            assert np.allclose(gam, coeffs.gamma_t[i], atol=1e-9)

    def test_defining_relations(self, damped_run):
        _, gf, series, coeffs = damped_run
        g3 = greens.third_derivative(gf)
        for i in (0, 100, 1000):
            r1 = coeffs.vr_t[i] @ gf.G[i] + 2 * coeffs.gamma_t[i] @ gf.Gdot[i] + gf.Gddot[i]
            r2 = coeffs.vr_t[i] @ gf.Gdot[i] + 2 * coeffs.gamma_t[i] @ gf.Gddot[i] + g3[i]
            assert np.max(np.abs(r1)) < 1e-10
            assert np.max(np.abs(r2)) < 1e-10


class TestGeneratorFidelity:
    def test_first_moments_follow_phi(self):
        spec = damped_spec(coupling=0.15, cutoff=2.0)
        gf = greens.solve_G_time(spec, t_max=12.0, h=0.002)
        series = dynamics.propagator_series(gf)
        coeffs = dynamics.master_coefficients(gf, series)
        mean0 = np.array([0.8, -0.4])
        got = dynamics.propagate_first_moments(coeffs, mean0)
        want = np.array([series.phi(i) @ mean0 for i in range(gf.t.size)])
        assert np.max(np.abs(got - want)) < 1e-5

    def test_second_moments_follow_exact_map(self, damped_run):
        _, gf, series, coeffs = damped_run
        cov0 = dynamics.vacuum_state([[2.0]]).cov
        got = dynamics.propagate_second_moments(coeffs, cov0)
        want = np.array([series.phi(i) @ cov0 @ series.phi(i).T + series.sigma(i)
                         for i in range(gf.t.size)])
        scale = np.max(np.abs(want))
        assert np.max(np.abs(got - want)) < 1e-4 * scale


class TestEnergyFlow:
    def test_identity_at_stationarity(self):
        spec = damped_spec(coupling=0.2, cutoff=2.0, temperature=1.0)
        gf = greens.solve_G_time(spec, t_max=70.0, h=0.008)
        series = dynamics.propagator_series(gf)
        coeffs = dynamics.master_coefficients(gf, series)
        rep = dynamics.stationary_energy_flow(series, coeffs)
        scale = max(abs(rep.master_form), abs(rep.stationary_form), 1e-12)
        assert abs(rep.difference) < 1e-5 * max(1.0, scale)

    def test_single_region_flow_vanishes(self):
        # two baths at different temperatures on one site: net flow still zero
        d = spectral.PowerLawDensity(site=0, coupling=0.08, exponent=1.0,
                                     cutoff=4.0, cutoff_shape="exponential")
        reg = model.Region(id="a", sites=(0,), reservoirs=(
            model.Reservoir(0.5, d), model.Reservoir(2.0, d)))
        spec = model.NetworkSpec(coupling=[[1.0]], regions=(reg,))
        fe = greens.FrequencyEvaluator(spec)
        sig = dynamics.stationary_sigma(fe)
        vr = greens.renormalized_potential(spec)
        flow = float(np.trace(vr @ sig.s01))
        assert abs(flow) < 1e-9

    def test_not_stationary_raises(self):
        spec = damped_spec(coupling=0.05, cutoff=4.0)
        gf = greens.solve_G_time(spec, t_max=6.0, h=0.01)
        series = dynamics.propagator_series(gf)
        coeffs = dynamics.master_coefficients(gf, series)
        with pytest.raises(dynamics.NotStationary):
            dynamics.stationary_energy_flow(series, coeffs)


class TestStationarySigma:
    def test_time_domain_plateau_matches_frequency_integral(self):
        spec = damped_spec(coupling=0.2, cutoff=2.0, temperature=1.0)
        gf = greens.solve_G_time(spec, t_max=70.0, h=0.008)
        series = dynamics.propagator_series(gf)
        fe = greens.FrequencyEvaluator(spec)
        sig = dynamics.stationary_sigma(fe)
        assert series.s00[-1][0, 0] == pytest.approx(sig.s00[0, 0], rel=1e-4)
        assert series.s11[-1][0, 0] == pytest.approx(sig.s11[0, 0], rel=1e-4)
        assert abs(series.s01[-1][0, 0] - sig.s01[0, 0]) < 1e-4 * abs(sig.s00[0, 0])

    def test_equilibrium_variances_thermal(self):
        # weak coupling, single bath: stationary state close to thermal at V_R
        temp = 2.0
        spec = damped_spec(coupling=0.02, cutoff=6.0, temperature=temp)
        fe = greens.FrequencyEvaluator(spec)
        sig = dynamics.stationary_sigma(fe)
        vr = greens.renormalized_potential(spec)
        want = dynamics.thermal_state(vr, temp)
        assert sig.s00[0, 0] == pytest.approx(want.cov[0, 0], rel=0.02)
        assert sig.s11[0, 0] == pytest.approx(want.cov[1, 1], rel=0.02)
