__all__ = [
    'MODEL_PARAMS', 'free_particle', 'harmonic', 'inverted_oscillator',
    'constant_force', 'quartic', 'double_well_driven', 'standard_map',
    'model_from_descriptor', 'model_descriptor',
]

import math
import numpy as np
import dynpictures as dp
from dynpictures.tools._phase import HamiltonianModel, OperatorSplit


# Default parameters per model kind; descriptor params outside these are rejected
MODEL_PARAMS = {
    'free': {'m': 1.0},
    'harmonic': {'m': 1.0, 'k': 1.0},
    'inverted': {'m': 1.0, 'k': 1.0},
    'constant_force': {'m': 1.0, 'F': 1.0},
    'quartic': {'m': 1.0, 'c': 1.0},
    'double_well_driven': {'m': 1.0, 'a': 10.0, 'b': 0.5, 'eps': 10.0, 'Omega': 6.07},
    'standard_map': {'K': 1.0},
}


def _positive(name, value, field=None):
    if not (isinstance(value, (int, float)) and math.isfinite(value) and value > 0):
        raise dp.ValidationError('{} must be positive, got {}'.format(name, value), field=field)


def _separable_model(name, params, mass, potential, v_prime, v_second,
                     time_dependent=False):
    """Build a 1D model H = p^2/2m + V(q, t) with its OperatorSplit

    - potential, v_prime, v_second: maps (q, t) acting elementwise on arrays
    """
    _positive('mass', mass)

    def split_potential(q, t=0.0):
        return np.sum(potential(np.asarray(q, dtype=float), t), axis=-1)

    def value(q, p, t=0.0):
        q = np.asarray(q, dtype=float)
        p = np.asarray(p, dtype=float)
        return np.sum(p * p, axis=-1) / (2.0 * mass) + np.sum(potential(q, t), axis=-1)

    def grad_q(q, p, t=0.0):
        return v_prime(np.asarray(q, dtype=float), t)

    def grad_p(q, p, t=0.0):
        return np.asarray(p, dtype=float) / mass

    def hess_q(q, p, t=0.0):
        return np.diag(np.atleast_1d(v_second(np.asarray(q, dtype=float), t)))

    def hess_p(q, p, t=0.0):
        return np.eye(np.atleast_1d(p).shape[-1]) / mass

    def split_v_prime(q, t=0.0):
        return v_prime(np.asarray(q, dtype=float), t)

    split = OperatorSplit(mass, split_potential, split_v_prime)
    return HamiltonianModel(
        1, value, grad_q=grad_q, grad_p=grad_p, split=split, separable=True,
        time_dependent=time_dependent, hess_q=hess_q, hess_p=hess_p,
        name=name, params=params
    )


def free_particle(m=1.0):
    """H = p^2/2m"""
    return _separable_model(
        'free', {'m': m}, m,
        lambda q, t: np.zeros_like(q),
        lambda q, t: np.zeros_like(q),
        lambda q, t: np.zeros_like(q),
    )


def harmonic(m=1.0, k=1.0):
    """H = p^2/2m + k q^2/2"""
    _positive('k', k)
    return _separable_model(
        'harmonic', {'m': m, 'k': k}, m,
        lambda q, t: 0.5 * k * q * q,
        lambda q, t: k * q,
        lambda q, t: k * np.ones_like(q),
    )


def inverted_oscillator(m=1.0, k=1.0):
    """H = p^2/2m - k q^2/2 (exponents +-sqrt(k/m))"""
    _positive('k', k)
    return _separable_model(
        'inverted', {'m': m, 'k': k}, m,
        lambda q, t: -0.5 * k * q * q,
        lambda q, t: -k * q,
        lambda q, t: -k * np.ones_like(q),
    )


def constant_force(m=1.0, F=1.0):
    """H = p^2/2m - F q"""
    return _separable_model(
        'constant_force', {'m': m, 'F': F}, m,
        lambda q, t: -F * q,
        lambda q, t: -F * np.ones_like(q),
        lambda q, t: np.zeros_like(q),
    )


def quartic(m=1.0, c=1.0):
    """H = p^2/2m + c q^4/4"""
    _positive('c', c)
    return _separable_model(
        'quartic', {'m': m, 'c': c}, m,
        lambda q, t: 0.25 * c * (q * q) * (q * q),
        lambda q, t: c * q * q * q,
        lambda q, t: 3.0 * c * q * q,
    )


def double_well_driven(m=1.0, a=10.0, b=0.5, eps=10.0, Omega=6.07):
    """H = p^2/2m - a q^2 + b q^4 + eps q cos(Omega t)"""
    _positive('b', b)
    return _separable_model(
        'double_well_driven', {'m': m, 'a': a, 'b': b, 'eps': eps, 'Omega': Omega}, m,
        lambda q, t: -a * q * q + b * (q * q) * (q * q) + eps * q * math.cos(Omega * t),
        lambda q, t: -2.0 * a * q + 4.0 * b * q * q * q + eps * math.cos(Omega * t) * np.ones_like(q),
        lambda q, t: -2.0 * a + 12.0 * b * q * q,
        time_dependent=True,
    )


def standard_map(K=1.0):
    """Kicked rotor p' = p + K sin q, q' = q + p' with kick period 1

    Angles are kept unreduced; use reduce_angle for display. The energy
    function is p^2/2 + K cos q with the kick comb left implicit
    """
    def kick_map(q, p):
        p_new = p + K * np.sin(q)
        return q + p_new, p_new

    def kick_inverse(q, p):
        q_old = q - p
        return q_old, p - K * np.sin(q_old)

    def kick_tangent(q, p):
        c = K * math.cos(float(np.ravel(q)[0]))
        return np.array([[1.0 + c, 1.0], [c, 1.0]])

    def value(q, p, t=0.0):
        q = np.asarray(q, dtype=float)
        p = np.asarray(p, dtype=float)
        return np.sum(0.5 * p * p + K * np.cos(q), axis=-1)

    return HamiltonianModel(
        1, value,
        grad_q=lambda q, p, t=0.0: -K * np.sin(np.asarray(q, dtype=float)),
        grad_p=lambda q, p, t=0.0: np.asarray(p, dtype=float),
        kind='kicked-map', kick_map=kick_map, kick_inverse=kick_inverse,
        kick_tangent=kick_tangent, kick_period=1.0, name='standard_map',
        params={'K': K}
    )


_BUILDERS = {
    'free': free_particle,
    'harmonic': harmonic,
    'inverted': inverted_oscillator,
    'constant_force': constant_force,
    'quartic': quartic,
    'double_well_driven': double_well_driven,
    'standard_map': standard_map,
}


def model_from_descriptor(descriptor, field='model'):
    """Build a HamiltonianModel from {"kind": ..., "params": {...}}

    - descriptor: dict (already parsed JSON)
    - field: dotted path used in validation messages
    """
    if not isinstance(descriptor, dict):
        raise dp.ValidationError('model descriptor must be an object', field=field)
    unknown = sorted(set(descriptor) - {'kind', 'params'})
    if unknown:
        raise dp.ValidationError('unknown key(s) {}'.format(', '.join(unknown)), field=field)
    kind = descriptor.get('kind')
    if kind not in MODEL_PARAMS:
        raise dp.ValidationError(
            'kind must be one of {}, got {}'.format(', '.join(sorted(MODEL_PARAMS)), repr(kind)),
            field=field + '.kind'
        )
    params = descriptor.get('params', {}) or {}
    if not isinstance(params, dict):
        raise dp.ValidationError('params must be an object', field=field + '.params')
    unknown = sorted(set(params) - set(MODEL_PARAMS[kind]))
    if unknown:
        raise dp.ValidationError(
            'unknown parameter(s) {} for {}'.format(', '.join(unknown), kind),
            field=field + '.params'
        )
    resolved = dict(MODEL_PARAMS[kind])
    for key, value in params.items():
        if isinstance(value, bool) or not isinstance(value, (int, float)) or not math.isfinite(value):
            raise dp.ValidationError('must be a finite number, got {}'.format(repr(value)),
                                     field='{}.params.{}'.format(field, key))
        resolved[key] = float(value)
    if 'm' in resolved:
        _positive('mass', resolved['m'], field=field + '.params.m')
    try:
        return _BUILDERS[kind](**resolved)
    except dp.ValidationError as e:
        raise dp.ValidationError(str(e), field=field + '.params')


def model_descriptor(model):
    """Return the JSON descriptor of a built-in model"""
    return {'kind': model.name, 'params': dict(model.params)}
