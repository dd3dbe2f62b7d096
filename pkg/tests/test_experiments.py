import json
import os
import pytest
import dynpictures as dp
from dynpictures import scripts


CONFIG_DIR = os.path.join(os.path.dirname(os.path.abspath(__file__)), '..', 'configs')
SHIPPED_CONFIGS = sorted(name for name in os.listdir(CONFIG_DIR) if name.endswith('.json'))


def write_config(tmp_path, data, name='config.json'):
    path = os.path.join(str(tmp_path), name)
    with open(path, 'w') as fp:
        fp.write(json.dumps(data, indent=2))
    return path


def read_summary(out_dir):
    with open(os.path.join(out_dir, 'summary.json')) as fp:
        return json.load(fp)


class TestConfigValidation(object):
    def test_defaults_filled(self):
        cfg = dp.ExperimentConfig.from_dict({'experiment': 'lyapunov'})
        assert cfg.model == {'kind': 'standard_map', 'params': {'K': 10.0}}
        assert cfg.state == {'kind': 'point', 'q': 0.1, 'p': 0.0}
        assert cfg.numerics['T'] == 10000.0
        assert cfg.output == os.path.join('runs', 'lyapunov')

    def test_syntax_error_has_line(self):
        with pytest.raises(dp.ValidationError) as excinfo:
            dp.parse_config_text('{\n  "experiment": ,\n}')
        assert excinfo.value.line == 2

    def test_duplicate_key(self):
        with pytest.raises(dp.ValidationError):
            dp.parse_config_text('{"seed": 1, "seed": 2}')

    def test_unknown_top_level_key(self):
        with pytest.raises(dp.ValidationError) as excinfo:
            dp.ExperimentConfig.from_dict({'experiment': 'lyapunov', 'extra': 1})
        assert excinfo.value.field == 'extra'

    def test_unknown_experiment(self):
        with pytest.raises(dp.ValidationError) as excinfo:
            dp.ExperimentConfig.from_dict({'experiment': 'nope'})
        assert excinfo.value.field == 'experiment'

    def test_negative_mass_reports_line(self):
        data = {'experiment': 'pictures-equivalence', 'model': {'kind': 'harmonic', 'params': {'m': -1.0}}}
        text = json.dumps(data, indent=2)
        expected_line = [i for i, line in enumerate(text.splitlines(), 1) if '"m"' in line][0]
        with pytest.raises(dp.ValidationError) as excinfo:
            dp.ExperimentConfig.from_dict(json.loads(text), text=text)
        assert excinfo.value.field == 'model.params.m'
        assert excinfo.value.line == expected_line

    def test_unknown_numerics_key(self):
        with pytest.raises(dp.ValidationError) as excinfo:
            dp.ExperimentConfig.from_dict({'experiment': 'kvn-unitarity', 'numerics': {'bogus': 1}})
        assert excinfo.value.field == 'numerics.bogus'

    def test_state_kind_per_experiment(self):
        with pytest.raises(dp.ValidationError) as excinfo:
            dp.ExperimentConfig.from_dict({'experiment': 'pictures-equivalence', 'state': {'kind': 'point'}})
        assert excinfo.value.field == 'state.kind'

    def test_integer_fields(self):
        with pytest.raises(dp.ValidationError) as excinfo:
            dp.ExperimentConfig.from_dict({'experiment': 'kvn-unitarity', 'numerics': {'samples': 2.5}})
        assert excinfo.value.field == 'numerics.samples'

    def test_bad_step(self):
        with pytest.raises(dp.ValidationError) as excinfo:
            dp.ExperimentConfig.from_dict({'experiment': 'kvn-unitarity', 'numerics': {'dt': -0.1}})
        assert excinfo.value.field == 'numerics'

    def test_overrides(self):
        data = dp.apply_overrides({'numerics': {}}, [
            'numerics.t_final=5', 'numerics.observables=q,p', 'output=runs/x', 'model.kind=quartic',
        ])
        assert data['numerics']['t_final'] == 5
        assert data['numerics']['observables'] == ['q', 'p']
        assert data['output'] == 'runs/x'
        assert data['model'] == {'kind': 'quartic'}

    def test_override_needs_equals(self):
        with pytest.raises(dp.ValidationError):
            dp.apply_overrides({}, ['numerics.t_final'])

    def test_load_missing_file(self, tmp_path):
        with pytest.raises(dp.ValidationError):
            dp.load_config(os.path.join(str(tmp_path), 'missing.json'))

    @pytest.mark.parametrize('name', SHIPPED_CONFIGS)
    def test_shipped_configs_validate(self, name):
        cfg = dp.load_config(os.path.join(CONFIG_DIR, name))
        assert cfg.output.startswith('runs')

    def test_round_trip_through_resolved_config(self, tmp_path):
        path = write_config(tmp_path, {'experiment': 'kvn-unitarity', 'state': {'kind': 'point'}})
        cfg = dp.load_config(path, overrides=['numerics.samples=3'])
        again = dp.ExperimentConfig.from_dict(cfg.as_dict())
        assert again.as_dict() == cfg.as_dict()


class TestRuns(object):
    def test_pictures_equivalence(self, tmp_path):
        cfg = dp.ExperimentConfig.from_dict({
            'experiment': 'pictures-equivalence',
            'state': {'kind': 'gaussian', 'nodes': 10},
            'numerics': {'t_final': 2.0, 'samples': 3},
        })
        result = dp.run_experiment(cfg, out_dir=str(tmp_path))
        assert result['passed']
        assert len(result['rows']) == 3 * 4
        for name in ('resolved_config.json', 'results.csv', 'summary.json', 'expectations_vs_t.csv'):
            assert os.path.isfile(os.path.join(str(tmp_path), name))
        summary = read_summary(str(tmp_path))
        assert summary['eq4_eq8_eq11_equivalence'] is True
        with open(os.path.join(str(tmp_path), 'resolved_config.json')) as fp:
            resolved = json.load(fp)
        assert 'version' in resolved
        assert resolved['numerics']['samples'] == 3

    def test_constant_force(self, tmp_path):
        cfg = dp.ExperimentConfig.from_dict({
            'experiment': 'constant-force',
            'state': {'kind': 'delta_momentum', 'q_nodes': 401},
            'numerics': {'t_final': 2.0, 'samples': 3},
        })
        result = dp.run_experiment(cfg, out_dir=str(tmp_path))
        assert result['passed']
        assert result['summary']['momentum_support_exact']
        assert result['summary']['printed_form_diff'] > result['summary']['marginal_sup_diff']

    def test_dyson_convergence(self):
        cfg = dp.ExperimentConfig.from_dict({'experiment': 'dyson-convergence'})
        result = dp.run_experiment(cfg, write=False)
        assert result['passed']
        assert set(result['summary']['orders']) == {'1', '2'}

    def test_kvn_unitarity(self, tmp_path):
        cfg = dp.ExperimentConfig.from_dict({
            'experiment': 'kvn-unitarity',
            'state': {'kind': 'gaussian', 'nodes': 10},
            'numerics': {'t_final': 5.0, 'samples': 3},
        })
        result = dp.run_experiment(cfg, out_dir=str(tmp_path))
        assert result['passed']
        assert result['summary']['max_norm_drift'] < 1e-12

    def test_lyapunov_inverted(self, tmp_path):
        cfg = dp.ExperimentConfig.from_dict({
            'experiment': 'lyapunov',
            'model': {'kind': 'inverted'},
            'numerics': {'T': 20, 'expected_lambda1': 1.0, 'lambda1_rtol': 0.01, 'checkpoints': 4},
        })
        result = dp.run_experiment(cfg, out_dir=str(tmp_path))
        assert result['passed']
        assert result['summary']['eq16_det_unity']
        assert result['summary']['lambda1_in_band']
        assert os.path.isfile(os.path.join(str(tmp_path), 'lambda_vs_t.csv'))

    def test_quantum_harmonic_with_gate(self, tmp_path):
        cfg = dp.ExperimentConfig.from_dict({
            'experiment': 'quantum-sensitivity',
            'numerics': {'dim': 16, 'periods': 2, 'samples': 9, 'gate': True},
        })
        result = dp.run_experiment(cfg, out_dir=str(tmp_path))
        summary = result['summary']
        assert result['passed']
        assert summary['eq18_bound']
        assert summary['eq16_eq17_linear_agreement']
        assert summary['truncation_gate']['dims'] == [16, 32]
        assert summary['t0_identity_error'] < 1e-12

    def test_runs_are_deterministic(self, tmp_path):
        cfg = dp.ExperimentConfig.from_dict({
            'experiment': 'kvn-unitarity',
            'state': {'kind': 'gaussian', 'nodes': 6},
            'numerics': {'t_final': 1.0, 'samples': 3},
        })
        texts = []
        for name in ('a', 'b'):
            out_dir = os.path.join(str(tmp_path), name)
            dp.run_experiment(cfg, out_dir=out_dir)
            with open(os.path.join(out_dir, 'results.csv')) as fp:
                texts.append(fp.read())
        assert texts[0] == texts[1]

    @pytest.mark.slow
    def test_compare_chaos(self, tmp_path):
        cfg = dp.ExperimentConfig.from_dict({
            'experiment': 'compare-chaos',
            'numerics': {'dim': 96, 'periods': 20, 'samples': 21},
        })
        result = dp.run_experiment(cfg, out_dir=str(tmp_path))
        summary = result['summary']
        assert summary['eq18_bound']
        for key in ('lambda1', 'lambda1_window', 'classical_slope', 'quantum_slope', 'eq16_classical_growth',
                    'eq17_eq18_bounded_quantum_growth'):
            assert key in summary
        assert os.path.isfile(os.path.join(str(tmp_path), 'log_norm_vs_t.csv'))

    @pytest.mark.slow
    def test_compare_chaos_shipped_config(self, tmp_path):
        cfg = dp.load_config(os.path.join(CONFIG_DIR, 'compare_chaos.json'))
        result = dp.run_experiment(cfg, out_dir=str(tmp_path))
        summary = result['summary']
        assert summary['eq16_classical_growth']
        assert abs(summary['classical_slope'] - summary['lambda1_window']) <= 0.2 * summary['lambda1_window']
        assert summary['eq18_bound']
        assert result['passed']

    @pytest.mark.slow
    def test_double_well_gate(self, tmp_path):
        cfg = dp.load_config(
            os.path.join(CONFIG_DIR, 'quantum_double_well.json'),
            overrides=['numerics.periods=5', 'numerics.samples=11'],
        )
        result = dp.run_experiment(cfg, out_dir=str(tmp_path))
        gate = result['summary']['truncation_gate']
        assert gate['dims'] == [128, 256]
        assert gate['passed']
        assert result['passed']

    def test_hbar_sweep(self, tmp_path):
        cfg = dp.ExperimentConfig.from_dict({
            'experiment': 'hbar-sweep',
            'numerics': {'dim': 32, 'hbars': [1.0, 0.5], 'periods': 4, 'samples': 21},
        })
        result = dp.run_experiment(cfg, out_dir=str(tmp_path))
        summary = result['summary']
        assert result['passed']
        assert len(result['rows']) == 2
        assert summary['hbars'] == [1.0, 0.5]
        t_final = max(row[1] for row in result['plots']['log_norm_vs_t_by_hbar.csv']['rows'])
        for t in summary['tracking_times']:
            assert 0.0 <= t <= t_final + 1e-9
        for name in ('log_norm_vs_t_by_hbar.csv', 'tracking_time_vs_hbar.csv'):
            assert os.path.isfile(os.path.join(str(tmp_path), name))

    def test_hbar_sweep_rejects_non_positive(self):
        cfg = dp.ExperimentConfig.from_dict({
            'experiment': 'hbar-sweep',
            'numerics': {'dim': 16, 'hbars': [1.0, -0.5], 'periods': 2, 'samples': 11},
        })
        with pytest.raises(dp.ValidationError) as excinfo:
            dp.run_experiment(cfg, write=False)
        assert excinfo.value.field == 'numerics.hbars'

    def test_pictures_constant_force_config(self, tmp_path):
        cfg = dp.load_config(
            os.path.join(CONFIG_DIR, 'pictures_constant_force.json'),
            overrides=['state.nodes=10', 'numerics.samples=3'],
        )
        result = dp.run_experiment(cfg, out_dir=str(tmp_path))
        assert result['passed']
        assert result['summary']['eq4_eq8_eq11_equivalence'] is True


class TestCommandLine(object):
    def test_no_command(self):
        assert scripts.main([]) == scripts.EXIT_VALIDATION

    def test_validate(self, tmp_path):
        path = write_config(tmp_path, {'experiment': 'lyapunov'})
        assert scripts.main(['validate', path]) == scripts.EXIT_OK

    def test_validate_bad_config(self, tmp_path):
        path = write_config(tmp_path, {'experiment': 'lyapunov', 'model': {'kind': 'free', 'params': {'m': -1}}})
        assert scripts.main(['validate', path]) == scripts.EXIT_VALIDATION

    def test_run(self, tmp_path):
        path = write_config(tmp_path, {
            'experiment': 'kvn-unitarity',
            'state': {'kind': 'point'},
            'numerics': {'t_final': 1.0, 'samples': 3},
        })
        out_dir = os.path.join(str(tmp_path), 'out')
        assert scripts.main(['run', path, '--out', out_dir]) == scripts.EXIT_OK
        assert read_summary(out_dir)['passed'] is True

    def test_failed_assertion_exit_code(self, tmp_path):
        path = write_config(tmp_path, {
            'experiment': 'constant-force',
            'state': {'kind': 'delta_momentum', 'q_nodes': 201},
            'numerics': {'t_final': 1.0, 'samples': 2},
        })
        out_dir = os.path.join(str(tmp_path), 'out')
        code = scripts.main(['run', path, '--out', out_dir, '--override', 'numerics.tolerance=0'])
        assert code == scripts.EXIT_NUMERIC
        assert read_summary(out_dir)['passed'] is False

    def test_override_error(self, tmp_path):
        path = write_config(tmp_path, {'experiment': 'lyapunov'})
        assert scripts.main(['validate', path, '--override', 'numerics.T=abc']) == scripts.EXIT_VALIDATION
