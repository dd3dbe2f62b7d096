"""Experiment configs and runners

A config is a JSON object with the keys experiment, model, state, numerics,
output and seed. Unknown keys at any level are rejected before anything is
computed. Each run writes resolved_config.json, results.csv, summary.json and
the plot series of its experiment into the output directory.
"""

__all__ = [
    'EXPERIMENTS', 'STATE_PARAMS', 'ExperimentConfig', 'package_version',
    'load_config', 'parse_config_text', 'apply_overrides', 'run_experiment',
]

import json
import math
import os
import numpy as np
import fs_helper as fh
import input_helper as ih
import dynpictures as dp
from dynpictures.tools._phase import IntegratorConfig, PhasePoint
from dynpictures.tools._models import MODEL_PARAMS, model_from_descriptor
from dynpictures.tools._kvn import (
    delta_momentum_ensemble, density_of, expectation, gaussian_ensemble,
    grid_density, marginal_q, observable_from_name, uniform_axis, evolve_wavefunction,
    norm_drift, point_ensemble,
)
from dynpictures.tools._pictures import (
    CONSTANT_FORCE_SIGN_NOTE, constant_force_density, constant_force_interaction_density,
    dyson_convergence_order, picture_table, to_interaction_picture,
)
from dynpictures.tools._chaos_classical import (
    ks_entropy, lyapunov_spectrum, tangent_growth_series,
)
from dynpictures.tools._chaos_quantum import (
    coherent_state, ground_state, growth_rate_fit, number_state, sensitivity_series,
    system_from_descriptor, truncation_gate,
)
from dynpictures.tools._export import RESULTS_CSV, emit_plot_data, write_csv, write_json
try:
    from importlib_metadata import version as _dist_version, PackageNotFoundError
except ImportError:
    from importlib.metadata import version as _dist_version, PackageNotFoundError


logger = fh.get_logger(__name__)

TOP_LEVEL_KEYS = ('experiment', 'model', 'state', 'numerics', 'output', 'seed')

STATE_PARAMS = {
    'gaussian': {'mean_q': 0.0, 'mean_p': 0.0, 'std_q': 0.5, 'std_p': 0.5, 'nodes': 100},
    'delta_momentum': {'center': 0.0, 'width': 0.5, 'p0': 0.5, 'q_min': -6.0, 'q_max': 6.0, 'q_nodes': 1201},
    'point': {'q': 0.1, 'p': 0.0},
    'grid_gaussian': {
        'mean_q': 0.0, 'mean_p': 0.0, 'std_q': 0.5, 'std_p': 0.5,
        'q_min': -4.0, 'q_max': 4.0, 'p_min': -4.0, 'p_max': 4.0, 'nq': 81, 'np': 81,
    },
    'coherent': {'q': 0.0, 'p': 0.0},
    'ground': {},
    'number': {'n': 0},
}

_INTEGRATOR_DEFAULTS = {'dt': 0.01, 'method': 'pefrl'}


def _numerics(**kwargs):
    merged = dict(_INTEGRATOR_DEFAULTS)
    merged.update(kwargs)
    return merged


EXPERIMENTS = {
    'pictures-equivalence': {
        'model': {'kind': 'harmonic'},
        'state': {'kind': 'gaussian'},
        'states': ('gaussian',),
        'numerics': _numerics(t_final=10.0, samples=21, observables=['q', 'p', 'q2', 'H'], tolerance=1e-6),
    },
    'constant-force': {
        'model': {'kind': 'constant_force'},
        'state': {'kind': 'delta_momentum'},
        'states': ('delta_momentum',),
        'numerics': _numerics(t_final=5.0, samples=11, tolerance=1e-8, mean_tolerance=1e-10),
    },
    'dyson-convergence': {
        'model': {'kind': 'constant_force'},
        'state': {'kind': 'grid_gaussian'},
        'states': ('grid_gaussian',),
        'numerics': {'t_final': 0.5, 'steps': 50, 'orders': [1, 2], 'order_tolerance': 0.5},
    },
    'kvn-unitarity': {
        'model': {'kind': 'harmonic'},
        'state': {'kind': 'gaussian'},
        'states': ('gaussian', 'point'),
        'numerics': _numerics(t_final=10.0, samples=11, tolerance=1e-10, phase_k=1.0),
    },
    'lyapunov': {
        'model': {'kind': 'standard_map', 'params': {'K': 10.0}},
        'state': {'kind': 'point'},
        'states': ('point',),
        'numerics': _numerics(
            T=10000.0, renorm_interval=None, transient=None, checkpoints=20, ks_floor=1e-3,
            pairing_tolerance=5e-2, det_tolerance=1e-8, expected_lambda1=None, lambda1_rtol=0.1,
        ),
    },
    'quantum-sensitivity': {
        'model': {'kind': 'harmonic'},
        'state': {'kind': 'ground'},
        'states': ('coherent', 'ground', 'number'),
        'numerics': {
            'dim': 64, 'hbar': 1.0, 'omega_ref': None, 'interior_dim': None, 't_final': None,
            'periods': 200, 'samples': 201, 'steps_per_unit': 50.0, 'gate': False,
            'gate_dim': None, 'gate_tolerance': 1e-4, 'linear_tolerance': 1e-8,
        },
    },
    'compare-chaos': {
        'model': {'kind': 'double_well_driven'},
        'state': {'kind': 'coherent', 'q': 0.1, 'p': 0.0},
        'states': ('coherent',),
        'numerics': _numerics(
            dim=128, hbar=1.0, omega_ref=None, t_final=None, periods=200, samples=101,
            steps_per_unit=50.0, window=None, renorm_interval=1.0, classical_rtol=0.2,
            quantum_ratio=0.05,
        ),
    },
    'hbar-sweep': {
        'model': {'kind': 'double_well_driven'},
        'state': {'kind': 'coherent', 'q': 0.1, 'p': 0.0},
        'states': ('coherent',),
        'numerics': _numerics(
            dim=128, hbars=[1.0, 0.5, 0.25], omega_ref=None, t_final=None, periods=50, samples=101,
            steps_per_unit=50.0, window=None, renorm_interval=1.0, quantum_ratio=0.05,
            tracking_gap=1.0,
        ),
    },
}


def package_version():
    try:
        return _dist_version('dynpictures')
    except PackageNotFoundError:
        return 'unknown'


def _line_of(text, key):
    """Return the 1-based line of the first occurrence of "key" in text"""
    if not text or not key:
        return None
    needle = '"{}"'.format(key)
    for number, line in enumerate(text.splitlines(), 1):
        if needle in line:
            return number
    return None


def _strict_pairs(pairs):
    result = {}
    for key, value in pairs:
        if key in result:
            raise dp.ValidationError('duplicate key {}'.format(repr(key)), field=key)
        result[key] = value
    return result


def parse_config_text(text):
    """Parse JSON config text; syntax errors report line and column"""
    try:
        return json.loads(text, object_pairs_hook=_strict_pairs)
    except json.JSONDecodeError as e:
        raise dp.ValidationError('invalid JSON: {} (column {})'.format(e.msg, e.colno), line=e.lineno)


def _is_number(value):
    return isinstance(value, (int, float)) and not isinstance(value, bool)


def _check_value(value, default, field):
    """Check a config value against the type of its default"""
    if isinstance(default, bool):
        if not isinstance(value, bool):
            raise dp.ValidationError('must be true or false, got {}'.format(repr(value)), field=field)
        return value
    if isinstance(default, int):
        if not _is_number(value) or not math.isfinite(value) or int(value) != value:
            raise dp.ValidationError('must be an integer, got {}'.format(repr(value)), field=field)
        return int(value)
    if isinstance(default, float) or default is None:
        if value is None and default is None:
            return None
        if isinstance(value, list) and default is None:
            return [_check_value(v, 0.0, '{}[{}]'.format(field, i)) for i, v in enumerate(value)]
        if not _is_number(value) or not math.isfinite(value):
            raise dp.ValidationError('must be a finite number, got {}'.format(repr(value)), field=field)
        return value
    if isinstance(default, list):
        if isinstance(value, str):
            value = ih.get_list_from_arg_strings(value)
        if not isinstance(value, list):
            raise dp.ValidationError('must be a list, got {}'.format(repr(value)), field=field)
        if default and not isinstance(default[0], str):
            return [_check_value(v, default[0], '{}[{}]'.format(field, i)) for i, v in enumerate(value)]
        return value
    if isinstance(default, str):
        if not isinstance(value, str):
            raise dp.ValidationError('must be a string, got {}'.format(repr(value)), field=field)
        return value
    return value


def _resolve_section(given, defaults, field):
    if not isinstance(given, dict):
        raise dp.ValidationError('must be an object', field=field)
    unknown = sorted(set(given) - set(defaults))
    if unknown:
        raise dp.ValidationError('unknown key(s) {}'.format(', '.join(unknown)), field='{}.{}'.format(field, unknown[0]))
    resolved = dict(defaults)
    for key, value in given.items():
        resolved[key] = _check_value(value, defaults[key], '{}.{}'.format(field, key))
    return resolved


class ExperimentConfig(object):
    """Validated experiment configuration with every default filled in

    - experiment: one of EXPERIMENTS
    - model: model descriptor {"kind", "params"}
    - state: state descriptor {"kind", ...}
    - numerics: dict of numeric settings
    - output: output directory
    - seed: reserved integer (runs are deterministic)
    """
    def __init__(self, experiment, model, state, numerics, output, seed=0):
        self.experiment = experiment
        self.model = model
        self.state = state
        self.numerics = numerics
        self.output = output
        self.seed = seed

    @classmethod
    def from_dict(cls, data, text=None):
        """Validate a parsed config; field errors carry the config line when text is given"""
        try:
            return cls._from_dict(data)
        except dp.ValidationError as e:
            if e.line is None and e.field and text:
                line = _line_of(text, e.field.split('.')[-1].split('[')[0])
                raise dp.ValidationError(e.message, field=e.field, line=line)
            raise

    @classmethod
    def _from_dict(cls, data):
        if not isinstance(data, dict):
            raise dp.ValidationError('config must be a JSON object')
        unknown = sorted(set(data) - set(TOP_LEVEL_KEYS))
        if unknown:
            raise dp.ValidationError('unknown key(s) {}'.format(', '.join(unknown)), field=unknown[0])
        experiment = data.get('experiment')
        if experiment not in EXPERIMENTS:
            raise dp.ValidationError(
                'must be one of {}, got {}'.format(', '.join(sorted(EXPERIMENTS)), repr(experiment)),
                field='experiment'
            )
        spec = EXPERIMENTS[experiment]

        model = data.get('model', spec['model'])
        model_from_descriptor(model, field='model')
        params = dict(MODEL_PARAMS[model['kind']])
        params.update({k: float(v) for k, v in (model.get('params') or {}).items()})
        model = {'kind': model['kind'], 'params': params}

        state = data.get('state', spec['state'])
        if not isinstance(state, dict):
            raise dp.ValidationError('must be an object', field='state')
        kind = state.get('kind')
        if kind not in spec['states']:
            raise dp.ValidationError(
                'must be one of {} for {}, got {}'.format(', '.join(spec['states']), experiment, repr(kind)),
                field='state.kind'
            )
        defaults = dict(STATE_PARAMS[kind])
        defaults.update({k: v for k, v in spec['state'].items() if k != 'kind' and spec['state']['kind'] == kind})
        defaults['kind'] = kind
        state = _resolve_section(state, defaults, 'state')

        numerics = _resolve_section(data.get('numerics', {}), spec['numerics'], 'numerics')
        if 'dt' in numerics:
            try:
                IntegratorConfig(dt=numerics['dt'], method=numerics['method'])
            except dp.ValidationError as e:
                raise dp.ValidationError(e.message, field='numerics')

        output = data.get('output', os.path.join('runs', experiment))
        if not isinstance(output, str) or not output:
            raise dp.ValidationError('must be a non-empty string', field='output')
        seed = data.get('seed', 0)
        if isinstance(seed, bool) or not isinstance(seed, int):
            raise dp.ValidationError('must be an integer, got {}'.format(repr(seed)), field='seed')
        return cls(experiment, model, state, numerics, output, seed)

    def as_dict(self):
        return {
            'experiment': self.experiment,
            'model': self.model,
            'state': self.state,
            'numerics': self.numerics,
            'output': self.output,
            'seed': self.seed,
        }

    def integrator(self, check_energy=False):
        return IntegratorConfig(dt=self.numerics['dt'], method=self.numerics['method'], check_energy=check_energy)

    def __repr__(self):
        return 'ExperimentConfig(experiment={}, model={})'.format(repr(self.experiment), self.model['kind'])


def _parse_override_value(text):
    try:
        return json.loads(text)
    except ValueError:
        pass
    if any(sep in text for sep in ',;|'):
        return ih.get_list_from_arg_strings(text)
    return text


def apply_overrides(data, overrides):
    """Apply dotted key=value overrides to a parsed config (in place)

    - data: dict parsed from the config file
    - overrides: list of strings like 'numerics.t_final=5'

    Values are parsed as JSON when possible; separated lists such as
    'q,p,q2' become lists of strings; anything else stays a string
    """
    for item in overrides or []:
        if '=' not in item:
            raise dp.ValidationError('override must look like key=value, got {}'.format(repr(item)), field='--override')
        key, _, raw = item.partition('=')
        path = [part for part in key.strip().split('.') if part]
        if not path:
            raise dp.ValidationError('override key is empty', field='--override')
        target = data
        for part in path[:-1]:
            if not isinstance(target.get(part, {}), dict):
                raise dp.ValidationError('cannot descend into non-object', field=key)
            target = target.setdefault(part, {})
        target[path[-1]] = _parse_override_value(raw.strip())
        logger.debug('override {} = {}'.format(key, repr(target[path[-1]])))
    return data


def load_config(path, overrides=None):
    """Read, override and validate an experiment config file; return ExperimentConfig"""
    path = fh.abspath(path)
    if not os.path.isfile(path):
        raise dp.ValidationError('config file not found: {}'.format(path))
    with open(path, 'r') as fp:
        text = fp.read()
    data = apply_overrides(parse_config_text(text), overrides)
    return ExperimentConfig.from_dict(data, text=text)


def _times(t_final, samples):
    if int(samples) < 2:
        raise dp.ValidationError('samples must be at least 2', field='numerics.samples')
    return np.linspace(0.0, float(t_final), int(samples)).tolist()


def _gaussian_profile(center, width):
    def profile(q):
        x = (np.asarray(q, dtype=float) - center) / width
        return np.exp(-0.5 * x * x) / (math.sqrt(2.0 * math.pi) * width)
    return profile


def _build_ensemble(state):
    kind = state['kind']
    if kind == 'gaussian':
        return gaussian_ensemble(state['mean_q'], state['mean_p'], state['std_q'], state['std_p'], nodes=state['nodes'])
    if kind == 'point':
        return point_ensemble(state['q'], state['p'])
    raise dp.ValidationError('state kind {} is not an ensemble'.format(kind), field='state.kind')


def _run_pictures_equivalence(cfg, model):
    num = cfg.numerics
    rho0 = density_of(_build_ensemble(cfg.state))
    integrator = cfg.integrator()
    observables = [observable_from_name(name, model) for name in num['observables']]
    rows = []
    worst = 0.0
    for t in _times(num['t_final'], num['samples']):
        for result in picture_table(observables, rho0, model, t, integrator=integrator):
            worst = max(worst, result['max_pairwise_diff'])
            rows.append([t, result['observable'], result['schrodinger'], result['heisenberg'],
                         result['interaction'], result['max_pairwise_diff']])
    passed = worst < num['tolerance']
    columns = ['t', 'observable', 'schrodinger', 'heisenberg', 'interaction', 'max_pairwise_diff']
    return {
        'columns': columns,
        'rows': rows,
        'summary': {
            'max_pairwise_diff': worst,
            'tolerance': num['tolerance'],
            'eq4_eq8_eq11_equivalence': passed,
        },
        'passed': passed,
        'plots': {
            'expectations_vs_t.csv': {
                'columns': columns,
                'rows': rows,
                'description': 'expectation of each observable in the three pictures against t',
            },
        },
    }


def _run_constant_force(cfg, model):
    if model.name != 'constant_force':
        raise dp.ValidationError('constant-force needs the constant_force model', field='model.kind')
    num = cfg.numerics
    st = cfg.state
    m = model.params['m']
    F = model.params['F']
    p0 = st['p0']
    base = uniform_axis(st['q_min'], st['q_max'], st['q_nodes'])
    dq = base[1] - base[0]
    raw = _gaussian_profile(st['center'], st['width'])
    total = math.fsum((raw(base) * dq).tolist())

    def f(q):
        return raw(q) / total

    rho0 = density_of(delta_momentum_ensemble(f, base, p0))
    q_obs = observable_from_name('q')
    p_obs = observable_from_name('p')
    mean_q0 = expectation(q_obs, rho0)

    rows = []
    marginal_rows = []
    worst_marginal = worst_mean = worst_interaction = worst_printed = 0.0
    support_exact = True
    for t in _times(num['t_final'], num['samples']):
        shift = p0 * t / m + F * t * t / (2.0 * m)
        nodes = base + shift
        rho_t = constant_force_density(f, p0, F, m, t, nodes)
        support_exact = support_exact and bool(np.all(rho_t.p == p0 + F * t))
        # q0 = q - p_t t/m + F t^2/2m inverts q = q0 + p0 t/m + F t^2/2m
        oracle = f(nodes - (p0 + F * t) * t / m + F * t * t / (2.0 * m))
        q_marg, values = marginal_q(rho_t)
        marginal_diff = float(np.max(np.abs(values - oracle)))
        printed = f(nodes + (p0 + F * t) * t / m + F * t * t / (2.0 * m))
        printed_diff = float(np.max(np.abs(printed - oracle)))

        mean_q = expectation(q_obs, rho_t)
        mean_p = expectation(p_obs, rho_t)
        expected_q = mean_q0 + shift
        expected_p = p0 + F * t
        mean_err = max(abs(mean_q - expected_q), abs(mean_p - expected_p))

        rho_i = to_interaction_picture(rho_t, model.split, t)
        closed_i = constant_force_interaction_density(f, p0, F, m, t, rho_i.q[:, 0])
        interaction_diff = float(np.max(np.abs(rho_i.values - closed_i.values)))

        worst_marginal = max(worst_marginal, marginal_diff)
        worst_mean = max(worst_mean, mean_err)
        worst_interaction = max(worst_interaction, interaction_diff)
        worst_printed = max(worst_printed, printed_diff)
        rows.append([t, mean_q, expected_q, mean_p, expected_p, marginal_diff, interaction_diff, printed_diff])
        marginal_rows.extend([t, q, v] for q, v in zip(q_marg.tolist(), values.tolist()))

    passed = (
        worst_marginal < num['tolerance'] and worst_mean < num['mean_tolerance']
        and worst_interaction < num['tolerance'] and support_exact
    )
    return {
        'columns': ['t', 'mean_q', 'expected_mean_q', 'mean_p', 'expected_mean_p',
                    'marginal_sup_diff', 'interaction_form_diff', 'printed_form_diff'],
        'rows': rows,
        'summary': {
            'marginal_sup_diff': worst_marginal,
            'mean_error': worst_mean,
            'interaction_form_diff': worst_interaction,
            'printed_form_diff': worst_printed,
            'momentum_support_exact': support_exact,
            'sign_resolution': CONSTANT_FORCE_SIGN_NOTE,
            'eq14_eq15_constant_force': passed,
        },
        'passed': passed,
        'plots': {
            'constant_force_marginal.csv': {
                'columns': ['t', 'q', 'density'],
                'rows': marginal_rows,
                'description': 'closed-form q-marginal of the constant-force density at each sampled t',
            },
        },
    }


def _run_dyson_convergence(cfg, model):
    if model.split is None:
        raise dp.UnsupportedSplitError('model {} has no kinetic-plus-potential split'.format(model.name), field='model.kind')
    num = cfg.numerics
    st = cfg.state
    q_axis = uniform_axis(st['q_min'], st['q_max'], st['nq'])
    p_axis = uniform_axis(st['p_min'], st['p_max'], st['np'])

    def gaussian(qq, pp):
        return np.exp(-0.5 * ((qq - st['mean_q']) / st['std_q']) ** 2 - 0.5 * ((pp - st['mean_p']) / st['std_p']) ** 2)

    rho0 = grid_density(gaussian, q_axis, p_axis)
    rows = []
    summary_orders = {}
    passed = True
    for order in num['orders']:
        result = dyson_convergence_order(rho0, model.split, num['t_final'], order, steps=num['steps'])
        ok = abs(result['measured_order'] - order) <= num['order_tolerance']
        passed = passed and ok
        summary_orders[str(order)] = {'measured_order': result['measured_order'], 'passed': ok}
        for steps, diff in zip(result['steps'], result['differences']):
            rows.append([order, steps, diff, result['measured_order']])
    return {
        'columns': ['order', 'steps', 'successive_difference', 'measured_order'],
        'rows': rows,
        'summary': {
            'orders': summary_orders,
            'order_tolerance': num['order_tolerance'],
            'eq11_2_dyson_order': passed,
        },
        'passed': passed,
        'plots': {
            'dyson_differences.csv': {
                'columns': ['order', 'steps', 'successive_difference', 'measured_order'],
                'rows': rows,
                'description': 'L2 difference between Dyson results at n and 2n steps',
            },
        },
    }


def _run_kvn_unitarity(cfg, model):
    num = cfg.numerics
    st = cfg.state
    integrator = cfg.integrator()
    if st['kind'] == 'gaussian':
        k = num['phase_k']
        phi0 = gaussian_ensemble(st['mean_q'], st['mean_p'], st['std_q'], st['std_p'], nodes=st['nodes'],
                                 phase=lambda q, p: k * q[:, 0] * p[:, 0])
    else:
        phi0 = _build_ensemble(st)
    rows = []
    worst = worst_roundtrip = 0.0
    for t in _times(num['t_final'], num['samples']):
        phi_t = evolve_wavefunction(phi0, model, t, integrator=integrator)
        drift = norm_drift(phi0, phi_t)
        back = evolve_wavefunction(phi_t, model, -t, integrator=integrator, t0=t)
        roundtrip = float(max(np.max(np.abs(back.q - phi0.q)), np.max(np.abs(back.p - phi0.p))))
        worst = max(worst, drift)
        worst_roundtrip = max(worst_roundtrip, roundtrip)
        rows.append([t, phi_t.norm(), drift, roundtrip])
    passed = worst < num['tolerance']
    return {
        'columns': ['t', 'norm', 'norm_drift', 'roundtrip_error'],
        'rows': rows,
        'summary': {
            'max_norm_drift': worst,
            'max_roundtrip_error': worst_roundtrip,
            'tolerance': num['tolerance'],
            'eq1_unitarity': passed,
        },
        'passed': passed,
        'plots': {
            'norm_vs_t.csv': {
                'columns': ['t', 'norm', 'norm_drift'],
                'rows': [row[:3] for row in rows],
                'description': 'norm of the evolved KvN wavefunction against t',
            },
        },
    }


def _run_lyapunov(cfg, model):
    num = cfg.numerics
    z0 = PhasePoint(cfg.state['q'], cfg.state['p'])
    spectrum = lyapunov_spectrum(
        model, z0, num['T'], renorm_interval=num['renorm_interval'], transient=num['transient'],
        integrator=cfg.integrator(), checkpoints=num['checkpoints'],
    )
    n2 = spectrum.exponents.shape[0]
    lambda_columns = ['lambda_{}'.format(i + 1) for i in range(n2)]
    rows = [[c['t']] + c['exponents'] + [c['det_error']] for c in spectrum.checkpoints]
    lambda1 = float(spectrum.exponents[0])
    det_ok = spectrum.det_error <= num['det_tolerance']
    pairing_ok = spectrum.pairing_residual() < num['pairing_tolerance']
    summary = {
        'exponents': spectrum.exponents.tolist(),
        'lambda1': lambda1,
        'ks_entropy': ks_entropy(spectrum, floor=num['ks_floor']),
        'pairing_residual': spectrum.pairing_residual(),
        'det_error': spectrum.det_error,
        'T': spectrum.T,
        'transient': spectrum.transient,
        'renorm_interval': spectrum.renorm_interval,
        'eq16_det_unity': det_ok,
        'exponent_pairing': pairing_ok,
    }
    passed = det_ok and pairing_ok
    if num['expected_lambda1'] is not None:
        expected = num['expected_lambda1']
        ok = abs(lambda1 - expected) <= num['lambda1_rtol'] * abs(expected)
        summary['expected_lambda1'] = expected
        summary['lambda1_in_band'] = ok
        passed = passed and ok
    growth_every = max(1, len(spectrum.log_growth) // 1000)
    return {
        'columns': ['checkpoint_t'] + lambda_columns + ['det_error'],
        'rows': rows,
        'summary': summary,
        'passed': passed,
        'plots': {
            'lambda_vs_t.csv': {
                'columns': ['t'] + lambda_columns,
                'rows': [row[:-1] for row in rows],
                'description': 'running Lyapunov exponent estimates against accumulation time',
            },
            'log_growth_vs_t.csv': {
                'columns': ['t', 'log_growth'],
                'rows': [list(x) for x in spectrum.log_growth[::growth_every]],
                'description': 'accumulated log stretch of the leading tangent direction',
            },
        },
    }


def _quantum_state(system, state):
    if state['kind'] == 'coherent':
        return coherent_state(system, state['q'], state['p'])
    if state['kind'] == 'number':
        return number_state(system, state['n'])
    return ground_state(system)


def _reference_period(model):
    params = model.params
    if model.name == 'double_well_driven':
        return 2.0 * math.pi / params['Omega']
    if model.name == 'harmonic':
        return 2.0 * math.pi * math.sqrt(params['m'] / params['k'])
    return 1.0


def _linear_sensitivity(model, t):
    """Closed-form classical sensitivity matrix of the linear models (None otherwise)"""
    params = model.params
    if model.name in ('free', 'constant_force'):
        return np.array([[1.0, t / params['m']], [0.0, 1.0]])
    if model.name == 'harmonic':
        m = params['m']
        w = math.sqrt(params['k'] / m)
        return np.array([[math.cos(w * t), math.sin(w * t) / (m * w)],
                         [-m * w * math.sin(w * t), math.cos(w * t)]])
    return None


def _bound_rows(reports):
    rows = []
    for r in reports:
        e = r['expectation']
        lhs = r['lhs_matrix']
        rhs = r['rhs_matrix']
        rows.append([r['t'], e[0, 0], e[0, 1], e[1, 0], e[1, 1],
                     lhs[0, 0], lhs[0, 1], lhs[1, 0], lhs[1, 1],
                     rhs[0, 0], rhs[0, 1], rhs[1, 0], rhs[1, 1],
                     r['margin'], r['satisfied'], r['norm']])
    return rows


_BOUND_COLUMNS = [
    't', 'T11', 'T12', 'T21', 'T22', 'lhs11', 'lhs12', 'lhs21', 'lhs22',
    'rhs11', 'rhs12', 'rhs21', 'rhs22', 'margin', 'satisfied', 'norm_T_quantum',
]


def _run_quantum_sensitivity(cfg, model):
    num = cfg.numerics
    t_final = num['t_final'] or num['periods'] * _reference_period(model)
    times = _times(t_final, num['samples'])

    def factory(dim):
        return system_from_descriptor(cfg.model, dim, hbar=num['hbar'], omega_ref=num['omega_ref'],
                                      interior_dim=num['interior_dim'] if dim == num['dim'] else None)

    def state_factory(system):
        return _quantum_state(system, cfg.state)

    gate = None
    if num['gate']:
        gate = truncation_gate(factory, state_factory, times, (num['dim'], num['gate_dim'] or 2 * num['dim']),
                               steps_per_unit=num['steps_per_unit'], tol=num['gate_tolerance'])
        reports = gate['series']
    else:
        system = factory(num['dim'])
        reports = sensitivity_series(system, state_factory(system), times, steps_per_unit=num['steps_per_unit'])

    identity_error = float(np.max(np.abs(reports[0]['expectation'] - np.eye(2))))
    all_satisfied = all(r['satisfied'] for r in reports)
    summary = {
        'samples': len(reports),
        't_final': t_final,
        'min_margin': min(r['margin'] for r in reports),
        't0_identity_error': identity_error,
        'max_imag_residue': max(r['imag_residue'] for r in reports),
        'eq18_bound': all_satisfied,
        'eq18_normalization': 'lhs is |tr(T rho)| with the -i/hbar factor of the sensitivity operator',
    }
    passed = all_satisfied
    linear_errors = [
        float(np.max(np.abs(r['expectation'] - _linear_sensitivity(model, r['t']))))
        for r in reports if _linear_sensitivity(model, r['t']) is not None
    ]
    if linear_errors:
        summary['classical_match_error'] = max(linear_errors)
        summary['eq16_eq17_linear_agreement'] = max(linear_errors) < num['linear_tolerance']
        passed = passed and summary['eq16_eq17_linear_agreement']
    if gate is not None:
        summary['truncation_gate'] = {'dims': gate['dims'], 'max_change': gate['max_change'], 'passed': gate['passed']}
        passed = passed and gate['passed']
    rows = _bound_rows(reports)
    return {
        'columns': _BOUND_COLUMNS,
        'rows': rows,
        'summary': summary,
        'passed': passed,
        'plots': {
            'bound_margin_vs_t.csv': {
                'columns': ['t', 'margin', 'lhs11', 'rhs11'],
                'rows': [[row[0], row[13], row[5], row[9]] for row in rows],
                'description': 'smallest rhs - lhs of the sensitivity bound against t',
            },
        },
    }


def _chaos_window(cfg, model):
    """Return (t_final, sample times, fit window) of a chaos comparison"""
    num = cfg.numerics
    t_final = num['t_final'] or num['periods'] * _reference_period(model)
    times = _times(t_final, num['samples'])
    window = num['window'] or [0.5 * t_final, t_final]
    if len(window) != 2 or not window[0] < window[1]:
        raise dp.ValidationError('window must be [t_lo, t_hi] with t_lo < t_hi', field='numerics.window')
    return t_final, times, window


def _classical_growth(cfg, model, times, window):
    """Return the classical ln |T|_F series and the finite-time leading
    exponent fitted over window on the same trajectory
    """
    growth = tangent_growth_series(
        model, PhasePoint(cfg.state['q'], cfg.state['p']), times,
        renorm_interval=cfg.numerics['renorm_interval'], integrator=cfg.integrator(),
    )
    classical = [(t, log_norm) for t, log_norm, _ in growth]
    leading = [(t, log_leading) for t, _, log_leading in growth]
    return classical, growth_rate_fit(leading, window, values_are_logs=True)


def _log_or_floor(value):
    return math.log(value) if value > 0 else float('-inf')


def _run_compare_chaos(cfg, model):
    num = cfg.numerics
    t_final, times, window = _chaos_window(cfg, model)
    classical, lambda1_window = _classical_growth(cfg, model, times, window)
    spectrum = lyapunov_spectrum(model, PhasePoint(cfg.state['q'], cfg.state['p']), t_final,
                                 renorm_interval=num['renorm_interval'], integrator=cfg.integrator())
    lambda1 = float(spectrum.exponents[0])
    system = system_from_descriptor(cfg.model, num['dim'], hbar=num['hbar'], omega_ref=num['omega_ref'])
    reports = sensitivity_series(system, coherent_state(system, cfg.state['q'], cfg.state['p']), times,
                                 steps_per_unit=num['steps_per_unit'])
    quantum = [(r['t'], r['norm']) for r in reports]

    # both classical rates come from one trajectory and one window
    classical_slope = growth_rate_fit(classical, window, values_are_logs=True)
    quantum_slope = growth_rate_fit(quantum, window)
    classical_ok = (
        lambda1_window > 0
        and abs(classical_slope - lambda1_window) <= num['classical_rtol'] * lambda1_window
    )
    quantum_ok = lambda1_window > 0 and quantum_slope < num['quantum_ratio'] * lambda1_window
    rows = [[t, _log_or_floor(qn), cl] for (t, qn), (_, cl) in zip(quantum, classical)]
    summary = {
        'lambda1': lambda1,
        'lambda1_window': lambda1_window,
        'classical_slope': classical_slope,
        'quantum_slope': quantum_slope,
        'window': list(window),
        'min_bound_margin': min(r['margin'] for r in reports),
        'eq16_classical_growth': classical_ok,
        'eq18_bound': all(r['satisfied'] for r in reports),
        'eq17_eq18_bounded_quantum_growth': quantum_ok,
    }
    passed = classical_ok and quantum_ok and summary['eq18_bound']
    return {
        'columns': ['t', 'log_norm_T_quantum', 'log_norm_T_classical'],
        'rows': rows,
        'summary': summary,
        'passed': passed,
        'plots': {
            'log_norm_vs_t.csv': {
                'columns': ['t', 'log_norm_T_quantum', 'log_norm_T_classical'],
                'rows': rows,
                'description': 'ln of the Frobenius norm of the quantum and classical sensitivity against t',
            },
        },
    }


def _tracking_time(quantum, classical, gap):
    """Return the first sample time where ln |<T>| and ln |T_cl| differ by more than gap"""
    for (t, qn), (_, cl) in zip(quantum, classical):
        if abs(_log_or_floor(qn) - cl) > gap:
            return t
    return quantum[-1][0]


def _run_hbar_sweep(cfg, model):
    num = cfg.numerics
    hbars = [float(h) for h in num['hbars']]
    if not hbars or any(not h > 0 for h in hbars):
        raise dp.ValidationError('must be a non-empty list of positive values', field='numerics.hbars')
    _, times, window = _chaos_window(cfg, model)
    classical, lambda1_window = _classical_growth(cfg, model, times, window)

    def series_at(hbar):
        system = system_from_descriptor(cfg.model, num['dim'], hbar=hbar, omega_ref=num['omega_ref'])
        return sensitivity_series(system, coherent_state(system, cfg.state['q'], cfg.state['p']), times,
                                  steps_per_unit=num['steps_per_unit'])

    infos = dp.run_concurrently([(series_at, (hbar,), {}) for hbar in hbars])
    for info in infos:
        if info['status'] != 'ok':
            raise info['exception']

    rows = []
    curve_rows = []
    for hbar, info in zip(hbars, infos):
        reports = info['value']
        quantum = [(r['t'], r['norm']) for r in reports]
        rows.append([
            hbar,
            growth_rate_fit(quantum, window),
            _tracking_time(quantum, classical, num['tracking_gap']),
            min(r['margin'] for r in reports),
            all(r['satisfied'] for r in reports),
        ])
        curve_rows.extend([hbar, t, _log_or_floor(qn), cl] for (t, qn), (_, cl) in zip(quantum, classical))

    by_hbar = sorted(rows, key=lambda row: -row[0])
    tracking = [row[2] for row in by_hbar]
    summary = {
        'hbars': hbars,
        'lambda1_window': lambda1_window,
        'window': list(window),
        'quantum_slopes': [row[1] for row in rows],
        'tracking_times': [row[2] for row in rows],
        'tracking_gap': num['tracking_gap'],
        'tracking_grows_as_hbar_shrinks': all(a <= b for a, b in zip(tracking, tracking[1:])),
        'eq17_eq18_bounded_quantum_growth': all(
            row[1] < num['quantum_ratio'] * lambda1_window for row in rows
        ),
        'eq18_bound': all(row[4] for row in rows),
    }
    logger.info('hbar sweep tracking times {}'.format(
        ', '.join('{}: {:.4g}'.format(row[0], row[2]) for row in by_hbar)
    ))
    columns = ['hbar', 'quantum_slope', 'tracking_time', 'min_bound_margin', 'eq18_bound']
    return {
        'columns': columns,
        'rows': rows,
        'summary': summary,
        'passed': summary['eq18_bound'],
        'plots': {
            'log_norm_vs_t_by_hbar.csv': {
                'columns': ['hbar', 't', 'log_norm_T_quantum', 'log_norm_T_classical'],
                'rows': curve_rows,
                'description': 'ln of the Frobenius norm of the quantum and classical sensitivity against t for each hbar',
            },
            'tracking_time_vs_hbar.csv': {
                'columns': ['hbar', 'tracking_time', 'quantum_slope'],
                'rows': [[row[0], row[2], row[1]] for row in by_hbar],
                'description': 'time the quantum sensitivity follows the classical one, against hbar',
            },
        },
    }


_RUNNERS = {
    'pictures-equivalence': _run_pictures_equivalence,
    'constant-force': _run_constant_force,
    'dyson-convergence': _run_dyson_convergence,
    'kvn-unitarity': _run_kvn_unitarity,
    'lyapunov': _run_lyapunov,
    'quantum-sensitivity': _run_quantum_sensitivity,
    'compare-chaos': _run_compare_chaos,
    'hbar-sweep': _run_hbar_sweep,
}


def run_experiment(cfg, out_dir=None, write=True):
    """Run an experiment and write its artifacts

    - cfg: ExperimentConfig
    - out_dir: output directory (default cfg.output)
    - write: if False, skip writing files

    Return dict with summary, columns, rows, plots, passed and out_dir
    """
    out_dir = fh.abspath(out_dir or cfg.output)
    model = model_from_descriptor(cfg.model)
    logger.info('running {} on {} -> {}'.format(cfg.experiment, model.name, out_dir))
    result = _RUNNERS[cfg.experiment](cfg, model)
    result['summary'].update({
        'experiment': cfg.experiment,
        'model': cfg.model,
        'passed': result['passed'],
    })
    result['out_dir'] = out_dir
    if write:
        resolved = cfg.as_dict()
        resolved['output'] = out_dir
        resolved['version'] = package_version()
        write_json(os.path.join(out_dir, 'resolved_config.json'), resolved)
        write_csv(os.path.join(out_dir, RESULTS_CSV), result['columns'], result['rows'])
        write_json(os.path.join(out_dir, 'summary.json'), result['summary'])
        emit_plot_data(result, out_dir)
    logger.info('{} finished: passed={}'.format(cfg.experiment, result['passed']))
    return result
