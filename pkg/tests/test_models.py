import numpy as np
import pytest
import dynpictures as dp


class TestModelDescriptor(object):
    def test_defaults_filled(self):
        model = dp.model_from_descriptor({'kind': 'harmonic', 'params': {'k': 4}})
        assert model.params == {'m': 1.0, 'k': 4.0}
        assert model.name == 'harmonic'

    def test_round_trip(self):
        descriptor = {'kind': 'double_well_driven', 'params': {'eps': 2.5}}
        model = dp.model_from_descriptor(descriptor)
        again = dp.model_from_descriptor(dp.model_descriptor(model))
        assert dp.model_descriptor(again) == dp.model_descriptor(model)

    def test_unknown_kind(self):
        with pytest.raises(dp.ValidationError) as excinfo:
            dp.model_from_descriptor({'kind': 'pendulum'})
        assert excinfo.value.field == 'model.kind'

    def test_negative_mass(self):
        with pytest.raises(dp.ValidationError) as excinfo:
            dp.model_from_descriptor({'kind': 'free', 'params': {'m': -1.0}})
        assert excinfo.value.field == 'model.params.m'

    def test_unknown_param(self):
        with pytest.raises(dp.ValidationError) as excinfo:
            dp.model_from_descriptor({'kind': 'harmonic', 'params': {'omega': 2.0}})
        assert excinfo.value.field == 'model.params'

    def test_bool_param_rejected(self):
        with pytest.raises(dp.ValidationError):
            dp.model_from_descriptor({'kind': 'harmonic', 'params': {'k': True}})

    def test_builder_error_gets_field(self):
        with pytest.raises(dp.ValidationError) as excinfo:
            dp.model_from_descriptor({'kind': 'quartic', 'params': {'c': -1.0}})
        assert excinfo.value.field == 'model.params'


class TestBuiltinModels(object):
    def test_split_reproduces_models(self):
        points = [dp.PhasePoint(q, p) for q, p in [(0.5, 1.0), (-1.5, 2.0), (2.0, -0.5)]]
        for model in (dp.free_particle(2.0), dp.harmonic(), dp.inverted_oscillator(),
                      dp.constant_force(), dp.quartic(), dp.double_well_driven()):
            assert model.split.check(model, points, t=0.3) <= 1e-12

    def test_gradients(self):
        points = [dp.PhasePoint(q, p) for q, p in [(0.5, 1.0), (-1.5, 2.0)]]
        for model in (dp.harmonic(2.0, 3.0), dp.quartic(), dp.constant_force(F=2.0), dp.double_well_driven()):
            assert model.check_gradients(points, t=0.2) < 1e-5

    def test_double_well_drive(self):
        model = dp.double_well_driven(a=1.0, b=1.0, eps=2.0, Omega=1.0)
        value = dp.evaluate_hamiltonian(model, dp.PhasePoint(1.0, 0.0), t=np.pi)
        assert value == pytest.approx(-1.0 + 1.0 - 2.0)

    def test_standard_map_inverse(self):
        model = dp.standard_map(2.0)
        q, p = model.kick_map(np.array([0.4]), np.array([1.1]))
        q0, p0 = model.kick_inverse(q, p)
        assert q0[0] == pytest.approx(0.4, abs=1e-14)
        assert p0[0] == pytest.approx(1.1, abs=1e-14)

    def test_standard_map_tangent_unimodular(self):
        model = dp.standard_map(5.0)
        assert np.linalg.det(model.kick_tangent(np.array([0.7]), np.array([0.0]))) == pytest.approx(1.0)

    def test_non_positive_mass(self):
        with pytest.raises(dp.ValidationError):
            dp.harmonic(m=0.0)
