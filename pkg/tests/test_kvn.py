import math
import numpy as np
import pytest
import dynpictures as dp


def gaussian(q, p, q0=0.0, p0=0.0, sigma=0.5):
    return np.exp(-((q - q0) ** 2 + (p - p0) ** 2) / (2 * sigma ** 2))


def rotated_series(times, shift=0.0, n=161):
    """Exact harmonic evolution of a Gaussian centred at (1, 0)"""
    axis = dp.uniform_axis(-5.0, 5.0, n)
    series = []
    for t in times:
        c, s = math.cos(t), math.sin(t)
        rho = dp.grid_density(
            lambda q, p: gaussian((q - shift) * c - p * s, (q - shift) * s + p * c, q0=1.0),
            axis, axis, normalize=False
        )
        series.append((t, rho))
    return series


class TestStates(object):
    def test_gaussian_ensemble_normalized(self):
        phi = dp.gaussian_ensemble(0.7, -0.2, 0.5, 0.3, nodes=10)
        assert phi.norm() == pytest.approx(1.0, abs=1e-12)
        assert dp.density_of(phi).total() == pytest.approx(1.0, abs=1e-12)

    def test_gaussian_moments(self):
        rho = dp.gaussian_density(0.7, -0.2, 0.5, 0.3, nodes=10)
        assert dp.expectation(dp.observable_from_name('q'), rho) == pytest.approx(0.7, abs=1e-12)
        assert dp.expectation(dp.observable_from_name('p'), rho) == pytest.approx(-0.2, abs=1e-12)
        assert dp.expectation(dp.observable_from_name('q2'), rho) == pytest.approx(0.49 + 0.25, abs=1e-12)
        assert dp.expectation(dp.observable_from_name('qp'), rho) == pytest.approx(-0.14, abs=1e-12)

    def test_bad_std(self):
        with pytest.raises(dp.ValidationError):
            dp.gaussian_ensemble(0.0, 0.0, 0.0, 1.0)

    def test_phase_does_not_change_density(self):
        phi = dp.gaussian_ensemble(0.0, 0.0, 1.0, 1.0, nodes=6, phase=lambda q, p: 3.0 * q[:, 0])
        rho = dp.density_of(phi)
        plain = dp.gaussian_density(0.0, 0.0, 1.0, 1.0, nodes=6)
        assert np.max(np.abs(rho.values - plain.values)) < 1e-14

    def test_density_of_unit_modulus(self):
        phi = dp.KvnWaveFunction(
            dp.ENSEMBLE, [(1 + 1j) / math.sqrt(2), 0.0], q=[[0.0], [1.0]], p=[[0.0], [0.0]], weights=[1.0, 1.0]
        )
        rho = dp.density_of(phi)
        assert rho.values[0] == pytest.approx(1.0, abs=1e-15)
        assert rho.values[1] == 0.0

    def test_zero_wavefunction_rejected(self):
        with pytest.raises(dp.ValidationError):
            dp.KvnWaveFunction(dp.ENSEMBLE, [0.0], q=[[0.0]], p=[[0.0]], weights=[1.0])

    def test_negative_density_rejected(self):
        with pytest.raises(dp.ValidationError):
            dp.PhaseSpaceDensity(dp.ENSEMBLE, [-0.1], q=[[0.0]], p=[[0.0]], weights=[1.0])

    def test_signed_density_allowed(self):
        rho = dp.PhaseSpaceDensity(dp.ENSEMBLE, [-0.1, 1.1], q=[[0.0], [1.0]], p=[[0.0], [0.0]],
                                   weights=[1.0, 1.0], signed=True)
        assert rho.normalized().values[0] == pytest.approx(-0.1)

    def test_non_uniform_axis(self):
        with pytest.raises(dp.ValidationError):
            dp.grid_density(gaussian, [0.0, 1.0, 3.0], [0.0, 1.0, 2.0])

    def test_grid_matches_ensemble(self):
        axis = dp.uniform_axis(-4.0, 4.0, 161)
        grid = dp.grid_density(lambda q, p: gaussian(q, p, q0=0.3, p0=-0.4), axis, axis)
        ensemble = dp.gaussian_density(0.3, -0.4, 0.5, 0.5, nodes=10)
        for name in ('q', 'p', 'q2', 'p2'):
            obs = dp.observable_from_name(name)
            assert dp.expectation(obs, grid) == pytest.approx(dp.expectation(obs, ensemble), abs=1e-6)


class TestObservables(object):
    def test_unknown(self):
        with pytest.raises(dp.ValidationError):
            dp.observable_from_name('angular_momentum')

    def test_energy_needs_model(self):
        with pytest.raises(dp.ValidationError):
            dp.observable_from_name('H')

    def test_energy(self):
        obs = dp.observable_from_name('H', model=dp.harmonic())
        assert obs(np.array([[1.0]]), np.array([[2.0]]))[0] == pytest.approx(2.5)

    def test_unnormalized_expectation(self):
        axis = dp.uniform_axis(-4.0, 4.0, 81)
        rho = dp.grid_density(gaussian, axis, axis, normalize=False)
        with pytest.raises(dp.ValidationError):
            dp.expectation(dp.observable_from_name('q'), rho)
        assert dp.expectation(dp.observable_from_name('one'), rho, raw=True) == pytest.approx(rho.total())


class TestEvolution(object):
    def test_point_free_translation(self):
        phi = dp.evolve_wavefunction(dp.point_ensemble(0.0, 1.0), dp.free_particle(), 2.0)
        assert phi.q[0, 0] == pytest.approx(2.0, abs=1e-12)
        assert phi.p[0, 0] == pytest.approx(1.0, abs=1e-12)
        assert phi.values[0] == 1.0

    def test_ensemble_norm_preserved(self):
        phi0 = dp.gaussian_ensemble(1.0, 0.0, 0.3, 0.3, nodes=8)
        phi_t = dp.evolve_wavefunction(phi0, dp.quartic(), 3.0)
        assert dp.norm_drift(phi0, phi_t) < 1e-12

    def test_harmonic_period_returns_support(self):
        phi0 = dp.gaussian_ensemble(1.0, 0.0, 0.3, 0.3, nodes=10)
        phi_t = dp.evolve_wavefunction(phi0, dp.harmonic(), 2 * math.pi)
        assert np.max(np.abs(phi_t.q - phi0.q)) < 1e-8
        assert np.max(np.abs(phi_t.p - phi0.p)) < 1e-8

    def test_zero_time_is_identity(self):
        rho = dp.gaussian_density(0.0, 0.0, 1.0, 1.0, nodes=4)
        assert dp.evolve_density(rho, dp.harmonic(), 0.0) is rho

    def test_dimension_mismatch(self):
        rho = dp.gaussian_density([0.0, 0.0], [0.0, 0.0], [1.0, 1.0], [1.0, 1.0], nodes=3)
        with pytest.raises(dp.ValidationError):
            dp.evolve_density(rho, dp.harmonic(), 1.0)

    def test_grid_quarter_turn(self):
        axis = dp.uniform_axis(-4.0, 4.0, 161)
        rho0 = dp.grid_density(lambda q, p: gaussian(q, p, q0=1.0), axis, axis)
        rho_t = dp.evolve_density(rho0, dp.harmonic(), math.pi / 2)
        assert dp.expectation(dp.observable_from_name('q'), rho_t, raw=True) == pytest.approx(0.0, abs=1e-3)
        assert dp.expectation(dp.observable_from_name('p'), rho_t, raw=True) == pytest.approx(-1.0, abs=1e-3)
        assert rho_t.total() == pytest.approx(1.0, abs=1e-3)


class TestLiouvilleResidual(object):
    def test_stationary_residual_converges(self):
        residuals = []
        for n in (41, 81):
            axis = dp.uniform_axis(-5.0, 5.0, n)
            rho = dp.grid_density(lambda q, p: gaussian(q, p, sigma=1.0), axis, axis)
            series = [(0.0, rho), (0.1, rho), (0.2, rho)]
            residuals.append(dp.liouville_residual(series, dp.harmonic()))
        assert residuals[1] < 0.5 * residuals[0]

    def test_detects_corrupted_series(self):
        times = [0.0, 0.02, 0.04]
        exact = dp.liouville_residual(rotated_series(times), dp.harmonic())
        shifted = dp.liouville_residual(rotated_series(times, shift=0.5), dp.harmonic())
        assert shifted > 5 * exact

    def test_needs_three_slices(self):
        axis = dp.uniform_axis(-1.0, 1.0, 5)
        rho = dp.grid_density(gaussian, axis, axis)
        with pytest.raises(dp.ValidationError):
            dp.liouville_residual([(0.0, rho), (1.0, rho)], dp.harmonic())

    def test_uniform_times(self):
        axis = dp.uniform_axis(-1.0, 1.0, 5)
        rho = dp.grid_density(gaussian, axis, axis)
        with pytest.raises(dp.ValidationError):
            dp.liouville_residual([(0.0, rho), (1.0, rho), (3.0, rho)], dp.harmonic())


class TestMarginals(object):
    def test_delta_momentum_marginal(self):
        nodes = dp.uniform_axis(-3.0, 3.0, 61)
        phi = dp.delta_momentum_ensemble(lambda q: np.exp(-q * q), nodes, 0.5)
        q, values = dp.marginal_q(dp.density_of(phi))
        assert np.all(np.diff(q) > 0)
        assert math.fsum(values * 0.1) == pytest.approx(1.0, abs=1e-12)
        assert np.all(phi.p == 0.5)

    def test_grid_marginals(self):
        axis = dp.uniform_axis(-4.0, 4.0, 81)
        rho = dp.grid_density(gaussian, axis, axis)
        q, mq = dp.marginal_q(rho)
        p, mp = dp.marginal_p(rho)
        assert np.sum(mq) * rho.dq == pytest.approx(1.0, abs=1e-12)
        assert np.sum(mp) * rho.dp == pytest.approx(1.0, abs=1e-12)

    def test_p_marginal_needs_grid(self):
        with pytest.raises(dp.ValidationError):
            dp.marginal_p(dp.gaussian_density(0.0, 0.0, 1.0, 1.0, nodes=3))
