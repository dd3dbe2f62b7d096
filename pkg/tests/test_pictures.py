import math
import numpy as np
import pytest
import dynpictures as dp


OBSERVABLES = ('q', 'p', 'q2', 'H')


def gaussian_grid(n=81, half_width=4.0, sigma=0.5, q0=0.0, p0=0.0):
    axis = dp.uniform_axis(-half_width, half_width, n)
    return dp.grid_density(
        lambda q, p: np.exp(-((q - q0) ** 2 + (p - p0) ** 2) / (2 * sigma ** 2)), axis, axis
    )


class TestPictureEquivalence(object):
    @pytest.mark.parametrize('model', [dp.harmonic(), dp.quartic(), dp.constant_force(F=0.5)])
    def test_three_pictures_agree(self, model):
        rho0 = dp.gaussian_density(0.5, -0.2, 0.4, 0.3, nodes=12)
        for t in (0.0, 2.5, 10.0):
            for name in OBSERVABLES:
                obs = dp.observable_from_name(name, model=model)
                result = dp.picture_expectations(obs, rho0, model, t)
                assert result['max_pairwise_diff'] < 1e-6
                assert result['interaction'] is not None

    def test_free_particle_mean_drift(self):
        rho0 = dp.gaussian_density(0.5, 1.5, 0.4, 0.3, nodes=8)
        model = dp.free_particle(m=2.0)
        value = dp.expectation_heisenberg(dp.observable_from_name('q'), rho0, model, 4.0)
        assert value == pytest.approx(0.5 + 1.5 * 4.0 / 2.0, abs=1e-10)

    def test_harmonic_energy_conserved(self):
        model = dp.harmonic()
        rho0 = dp.gaussian_density(1.0, 0.0, 0.3, 0.3, nodes=10)
        obs = dp.observable_from_name('H', model=model)
        e0 = dp.expectation(obs, rho0)
        assert dp.expectation_schrodinger(obs, rho0, model, 10.0) == pytest.approx(e0, abs=1e-8)

    def test_kicked_map_skips_interaction(self):
        model = dp.standard_map(0.5)
        rho0 = dp.gaussian_density(1.0, 0.0, 0.1, 0.1, nodes=6)
        result = dp.picture_expectations(dp.observable_from_name('p'), rho0, model, 3.0)
        assert result['interaction'] is None
        assert result['max_pairwise_diff'] < 1e-12
        with pytest.raises(dp.UnsupportedSplitError):
            dp.expectation_interaction(dp.observable_from_name('p'), rho0, model, 3.0)

    def test_unnormalized_rejected(self):
        rho = dp.PhaseSpaceDensity(dp.ENSEMBLE, [2.0], q=[[0.0]], p=[[0.0]], weights=[1.0])
        with pytest.raises(dp.ValidationError):
            dp.expectation_schrodinger(dp.observable_from_name('q'), rho, dp.harmonic(), 1.0)

    def test_heisenberg_zero_time(self):
        obs = dp.observable_from_name('q')
        assert dp.heisenberg_observable(obs, dp.harmonic(), 0.0) is obs

    def test_pullback_pushforward(self):
        model = dp.quartic()
        rho0 = dp.gaussian_density(0.5, 0.0, 0.3, 0.3, nodes=5)
        back = dp.pushforward_density(dp.pullback_density(rho0, model, 2.0), model, 2.0)
        assert np.max(np.abs(back.q - rho0.q)) < 1e-10
        assert np.max(np.abs(back.p - rho0.p)) < 1e-10

    def test_relative_difference_floor(self):
        assert dp.relative_difference(1e-9, 2e-9) == pytest.approx(1e-9)
        assert dp.relative_difference(100.0, 101.0) == pytest.approx(1.0 / 101.0)


class TestInteractionPicture(object):
    def test_ensemble_round_trip(self):
        split = dp.harmonic().split
        rho = dp.gaussian_density(0.3, 0.4, 0.5, 0.5, nodes=5)
        again = dp.from_interaction_picture(dp.to_interaction_picture(rho, split, 1.3), split, 1.3)
        assert np.max(np.abs(again.q - rho.q)) < 1e-14
        assert np.max(np.abs(again.p - rho.p)) < 1e-14

    def test_constant_force_interaction_support(self):
        m, F, p0, t = 1.0, 2.0, 1.0, 1.5
        model = dp.constant_force(m=m, F=F)
        nodes = dp.uniform_axis(-3.0, 3.0, 61)
        rho0 = dp.density_of(dp.delta_momentum_ensemble(lambda q: np.exp(-q * q), nodes, p0))
        rho_i = dp.to_interaction_picture(dp.evolve_density(rho0, model, t), model.split, t)
        assert np.max(np.abs(rho_i.q[:, 0] - (nodes - F * t * t / (2 * m)))) < 1e-10
        assert np.max(np.abs(rho_i.p[:, 0] - (p0 + F * t))) < 1e-10

    def test_closed_form_reproduces_profile(self):
        m, F, p0, t = 2.0, 1.5, 0.5, 3.0
        nodes = dp.uniform_axis(-3.0, 3.0, 61)

        def f(q):
            return np.exp(-q * q) / math.sqrt(math.pi)

        shifted = nodes + p0 * t / m + F * t * t / (2 * m)
        rho = dp.constant_force_density(f, p0, F, m, t, shifted)
        assert np.max(np.abs(rho.values - f(nodes))) < 1e-12
        assert np.all(rho.p == p0 + F * t)
        rho_i = dp.constant_force_interaction_density(f, p0, F, m, t, nodes - F * t * t / (2 * m))
        assert np.max(np.abs(rho_i.values - f(nodes))) < 1e-12

    def test_closed_form_needs_positive_mass(self):
        with pytest.raises(dp.ValidationError):
            dp.constant_force_density(lambda q: q * 0, 0.0, 1.0, 0.0, 1.0, [0.0, 1.0, 2.0])
        with pytest.raises(dp.ValidationError):
            dp.constant_force_interaction_density(lambda q: q * 0, 0.0, 1.0, -1.0, 1.0, [0.0, 1.0, 2.0])


def full_flow_forbidden(*args, **kwargs):
    raise AssertionError('the full flow was used')


class TestInteractionCharacteristics(object):
    def test_constant_force_exact(self):
        m, F, t = 2.0, 1.5, 3.0
        split = dp.constant_force(m=m, F=F).split
        q = np.array([0.0, 1.0, -2.0])
        p = np.array([0.5, -1.0, 2.0])
        q_i, p_i = dp.interaction_flow_points(split, q, p, t)
        assert np.max(np.abs(q_i - (q - F * t * t / (2 * m)))) < 1e-10
        assert np.max(np.abs(p_i - (p + F * t))) < 1e-10

    def test_backwards_returns_start(self):
        split = dp.quartic().split
        q = np.array([[0.3], [-0.8]])
        p = np.array([[0.1], [0.4]])
        q_i, p_i = dp.interaction_flow_points(split, q, p, 2.0)
        q_back, p_back = dp.interaction_flow_points(split, q_i, p_i, -2.0, t0=2.0)
        assert q_back.shape == q.shape
        assert np.max(np.abs(q_back - q)) < 1e-9
        assert np.max(np.abs(p_back - p)) < 1e-9

    def test_interaction_expectation_skips_full_flow(self, monkeypatch):
        monkeypatch.setattr('dynpictures.tools._pictures.flow_points', full_flow_forbidden)
        monkeypatch.setattr('dynpictures.tools._kvn.flow_points', full_flow_forbidden)
        rho0 = dp.gaussian_density(1.0, 0.5, 0.3, 0.3, nodes=8)
        value = dp.expectation_interaction(dp.observable_from_name('q'), rho0, dp.harmonic(), 2.0)
        assert value == pytest.approx(math.cos(2.0) + 0.5 * math.sin(2.0), abs=1e-9)

    def test_quartic_pictures_differ_by_integration_error_only(self):
        model = dp.quartic()
        rho0 = dp.gaussian_density(0.5, -0.2, 0.4, 0.3, nodes=12)
        result = dp.picture_expectations(dp.observable_from_name('q2'), rho0, model, 5.0)
        diff = dp.relative_difference(result['interaction'], result['schrodinger'])
        assert 0.0 < diff < 1e-6

    def test_grid_density(self):
        axis = dp.uniform_axis(-5.0, 5.0, 101)
        rho0 = dp.grid_density(lambda q, p: np.exp(-((q - 1.0) ** 2 + p ** 2) / (2 * 0.5 ** 2)), axis, axis)
        value = dp.expectation_interaction(dp.observable_from_name('q'), rho0, dp.harmonic(), 1.0)
        assert value == pytest.approx(math.cos(1.0), abs=1e-3)

    def test_table_flows_support_once(self, monkeypatch):
        calls = []
        original = dp.flow_points

        def counting(*args, **kwargs):
            calls.append(args[3])
            return original(*args, **kwargs)

        monkeypatch.setattr('dynpictures.tools._pictures.flow_points', counting)
        model = dp.harmonic()
        rho0 = dp.gaussian_density(1.0, 0.5, 0.3, 0.3, nodes=8)
        observables = [dp.observable_from_name(name, model=model) for name in OBSERVABLES]
        table = dp.picture_table(observables, rho0, model, 2.5)
        assert calls == [2.5]
        assert [row['observable'] for row in table] == list(OBSERVABLES)
        for row in table:
            assert row['max_pairwise_diff'] < 1e-6

    def test_table_matches_single_calls(self):
        model = dp.quartic()
        rho0 = dp.gaussian_density(0.5, 0.0, 0.3, 0.3, nodes=6)
        observables = [dp.observable_from_name(name, model=model) for name in OBSERVABLES]
        table = dp.picture_table(observables, rho0, model, 1.5)
        for obs, row in zip(observables, table):
            assert row == dp.picture_expectations(obs, rho0, model, 1.5)


class TestInteractionLiouvillian(object):
    def test_coefficients_at_zero(self):
        generator = dp.interaction_liouvillian(dp.harmonic(k=2.0).split, 0.0)
        q = np.array([0.5, -1.0])
        p = np.array([1.0, 2.0])
        assert generator.coeff_p(q, p).tolist() == pytest.approx([1.0, -2.0])
        assert generator.coeff_q(q, p).tolist() == pytest.approx([0.0, 0.0])

    def test_constant_force_coefficients(self):
        generator = dp.interaction_liouvillian(dp.constant_force(m=2.0, F=3.0).split, 4.0)
        q = np.array([0.5])
        p = np.array([1.0])
        assert generator.coeff_p(q, p)[0] == pytest.approx(-3.0)
        assert generator.coeff_q(q, p)[0] == pytest.approx(6.0)

    def test_multi_dimensional_rejected(self):
        with pytest.raises(dp.UnsupportedSplitError):
            dp.interaction_liouvillian(dp.harmonic().split, 1.0, dof=2)

    def test_ensemble_has_no_derivatives(self):
        generator = dp.interaction_liouvillian(dp.harmonic().split, 1.0)
        with pytest.raises(dp.DerivativeError):
            generator.apply(dp.gaussian_density(0.0, 0.0, 1.0, 1.0, nodes=3))

    def test_matches_conjugated_form(self):
        axis = dp.uniform_axis(-5.0, 5.0, 201)
        for split in (dp.harmonic().split, dp.quartic().split):
            diff = dp.conjugated_generator_check(
                split, 0.4, lambda q, p: np.exp(-(q * q + p * p) / (2 * 0.49)), axis, axis
            )
            assert diff < 1e-3


class TestDyson(object):
    def test_config_validation(self):
        with pytest.raises(dp.ValidationError):
            dp.DysonConfig(order=5)
        with pytest.raises(dp.ValidationError):
            dp.DysonConfig(steps=0)

    def test_zero_time(self):
        rho = gaussian_grid(n=21)
        assert dp.dyson_evolve(rho, dp.harmonic().split, dp.DysonConfig(t_final=0.0)) is rho

    def test_ensemble_rejected(self):
        with pytest.raises(dp.DerivativeError):
            dp.dyson_evolve(dp.gaussian_density(0.0, 0.0, 1.0, 1.0, nodes=3),
                            dp.harmonic().split, dp.DysonConfig())

    def test_constant_force_momentum_shift(self):
        F, t = 1.0, 0.5
        rho0 = gaussian_grid()
        rho = dp.dyson_evolve(rho0, dp.constant_force(F=F).split, dp.DysonConfig(order=4, steps=50, t_final=t))
        mean_p = dp.expectation(dp.observable_from_name('p'), rho, raw=True)
        assert mean_p == pytest.approx(F * t, abs=1e-4)
        assert rho.total() == pytest.approx(1.0, abs=1e-6)

    @pytest.mark.parametrize('order', [1, 2, 3, 4])
    def test_constant_force_order(self, order):
        result = dp.dyson_convergence_order(gaussian_grid(), dp.constant_force().split, 0.5, order, steps=20)
        assert result['steps'] == [20, 40, 80]
        assert abs(result['measured_order'] - order) < 0.5

    @pytest.mark.parametrize('order', [1, 2])
    def test_harmonic_order(self, order):
        result = dp.dyson_convergence_order(gaussian_grid(), dp.harmonic().split, 0.5, order, steps=20)
        assert abs(result['measured_order'] - order) < 0.5
