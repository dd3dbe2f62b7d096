"""Koopman-von Neumann wavefunctions and Liouville densities

Two representations share one layout:

- ensemble: support points (q, p) of shape (M, N), one value per point and a
  quadrature weight per point (the weights carry the reference measure, so a
  Gauss-Hermite ensemble has unit amplitudes and weights summing to 1)
- grid: a uniform tensor grid over a 2D phase-space box (N = 1), values of
  shape (len(q_axis), len(p_axis)) and the cell volume dq*dp as weight
"""

__all__ = [
    'ENSEMBLE', 'GRID', 'KvnWaveFunction', 'PhaseSpaceDensity', 'Observable',
    'observable_from_name', 'gaussian_ensemble', 'gaussian_density',
    'delta_momentum_ensemble', 'point_ensemble', 'grid_wavefunction',
    'grid_density', 'uniform_axis', 'evaluate_grid', 'evolve_wavefunction',
    'evolve_density', 'density_of', 'liouville_residual', 'expectation',
    'marginal_q', 'marginal_p', 'norm_drift', 'NORMALIZATION_TOL',
]

import math
import numpy as np
from scipy import ndimage
import dynpictures as dp
from dynpictures.tools._phase import IntegratorConfig, flow_points


ENSEMBLE = 'ensemble'
GRID = 'grid'
NORMALIZATION_TOL = 1e-10


def uniform_axis(lo, hi, n):
    """Return a uniform axis of n points on [lo, hi]"""
    if n < 3 or not hi > lo:
        raise dp.ValidationError('axis needs n >= 3 and hi > lo, got ({}, {}, {})'.format(lo, hi, n))
    return np.linspace(float(lo), float(hi), int(n))


def _axis_step(axis, name):
    axis = np.asarray(axis, dtype=float)
    if axis.ndim != 1 or axis.shape[0] < 3:
        raise dp.ValidationError('{} axis must be a vector of at least 3 points'.format(name))
    steps = np.diff(axis)
    step = (axis[-1] - axis[0]) / (axis.shape[0] - 1)
    if not step > 0 or np.max(np.abs(steps - step)) > 1e-9 * max(1.0, abs(step)):
        raise dp.ValidationError('{} axis is not uniform'.format(name))
    return float(step)


class _PhaseSpaceField(object):
    """Values attached to an ensemble or a grid"""
    _dtype = float

    def __init__(self, representation, values, q=None, p=None, weights=None,
                 q_axis=None, p_axis=None):
        if representation == ENSEMBLE:
            q = np.atleast_2d(np.asarray(q, dtype=float))
            p = np.atleast_2d(np.asarray(p, dtype=float))
            if q.shape != p.shape:
                raise dp.ValidationError('support q {} and p {} differ in shape'.format(q.shape, p.shape))
            values = np.asarray(values, dtype=self._dtype).ravel()
            weights = np.asarray(weights, dtype=float).ravel()
            if values.shape[0] != q.shape[0] or weights.shape[0] != q.shape[0]:
                raise dp.ValidationError('need one value and one weight per support point')
            if np.any(weights < 0):
                raise dp.ValidationError('quadrature weights must be non-negative')
            self.q = q
            self.p = p
            self.weights = weights
            self.q_axis = self.p_axis = None
        elif representation == GRID:
            dq = _axis_step(q_axis, 'q')
            dpp = _axis_step(p_axis, 'p')
            self.q_axis = np.asarray(q_axis, dtype=float)
            self.p_axis = np.asarray(p_axis, dtype=float)
            values = np.asarray(values, dtype=self._dtype)
            if values.shape != (self.q_axis.shape[0], self.p_axis.shape[0]):
                raise dp.ValidationError('grid values shape {} does not match axes'.format(values.shape))
            self.q = self.p = None
            self.weights = dq * dpp
        else:
            raise dp.ValidationError('representation must be ensemble or grid, got {}'.format(repr(representation)))
        if not np.all(np.isfinite(values)):
            raise dp.ValidationError('non-finite state values')
        self.representation = representation
        self.values = values

    @property
    def dof(self):
        if self.representation == GRID:
            return 1
        return self.q.shape[1]

    @property
    def dq(self):
        return _axis_step(self.q_axis, 'q')

    @property
    def dp(self):
        return _axis_step(self.p_axis, 'p')

    @property
    def cell_volume(self):
        if self.representation != GRID:
            raise dp.ValidationError('cell volume is only defined for grid states')
        return self.weights

    def mesh(self):
        """Return the (Q, P) meshgrid of a grid state"""
        return np.meshgrid(self.q_axis, self.p_axis, indexing='ij')

    def support(self):
        """Return support points as (M, N) arrays for either representation"""
        if self.representation == ENSEMBLE:
            return self.q, self.p
        qq, pp = self.mesh()
        return qq.reshape(-1, 1), pp.reshape(-1, 1)

    def point_weights(self):
        if self.representation == ENSEMBLE:
            return self.weights
        return np.full(self.values.size, self.weights)

    def _quadrature(self, integrand):
        """Compensated sum of weight * integrand over the support"""
        terms = np.ravel(self.point_weights() * np.ravel(integrand))
        return math.fsum(terms.tolist())

    def _clone(self, values, q=None, p=None):
        if self.representation == ENSEMBLE:
            return type(self)(
                ENSEMBLE, values, q=self.q if q is None else q,
                p=self.p if p is None else p, weights=self.weights
            )
        return type(self)(GRID, values, q_axis=self.q_axis, p_axis=self.p_axis)

    def with_support(self, q, p):
        """Return a copy whose ensemble support points are moved to (q, p)"""
        if self.representation != ENSEMBLE:
            raise dp.ValidationError('only ensemble support points can be moved')
        return self._clone(self.values, q=q, p=p)

    def __repr__(self):
        if self.representation == ENSEMBLE:
            return '{}(ensemble, points={}, dof={})'.format(type(self).__name__, self.q.shape[0], self.dof)
        return '{}(grid, shape={})'.format(type(self).__name__, self.values.shape)


class KvnWaveFunction(_PhaseSpaceField):
    """Complex classical wavefunction phi(q, p); |phi|^2 is the density"""
    _dtype = complex

    def __init__(self, representation, values, q=None, p=None, weights=None,
                 q_axis=None, p_axis=None):
        super(KvnWaveFunction, self).__init__(
            representation, values, q=q, p=p, weights=weights, q_axis=q_axis, p_axis=p_axis
        )
        if not self.norm() > 0:
            raise dp.ValidationError('wavefunction norm must be finite and positive')

    def norm_squared(self):
        return self._quadrature(np.abs(self.values) ** 2)

    def norm(self):
        return math.sqrt(self.norm_squared())

    def normalized(self):
        return self._clone(self.values / self.norm())


class PhaseSpaceDensity(_PhaseSpaceField):
    """Non-negative Liouville density rho(q, p)

    - signed: if True, skip the sign check (truncated-series approximants
      such as Dyson steps may undershoot slightly)
    """
    _dtype = float

    def __init__(self, representation, values, q=None, p=None, weights=None,
                 q_axis=None, p_axis=None, signed=False):
        super(PhaseSpaceDensity, self).__init__(
            representation, values, q=q, p=p, weights=weights, q_axis=q_axis, p_axis=p_axis
        )
        self.signed = bool(signed)
        if not self.signed and np.any(self.values < 0):
            raise dp.ValidationError('density values must be non-negative')

    def _clone(self, values, q=None, p=None):
        if self.representation == ENSEMBLE:
            return PhaseSpaceDensity(
                ENSEMBLE, values, q=self.q if q is None else q,
                p=self.p if p is None else p, weights=self.weights, signed=self.signed
            )
        return PhaseSpaceDensity(GRID, values, q_axis=self.q_axis, p_axis=self.p_axis, signed=self.signed)

    def total(self):
        return self._quadrature(self.values)

    def is_normalized(self, tol=NORMALIZATION_TOL):
        return abs(self.total() - 1.0) <= tol

    def normalized(self):
        total = self.total()
        if not total > 0:
            raise dp.ValidationError('cannot normalize a density with zero integral')
        return self._clone(self.values / total)


class Observable(object):
    """A named phase-space function A(q, p) acting on (M, N) batches"""
    def __init__(self, name, func):
        self.name = name
        self.func = func

    def __call__(self, q, p):
        return np.asarray(self.func(np.asarray(q, dtype=float), np.asarray(p, dtype=float)), dtype=float)

    def __repr__(self):
        return 'Observable({})'.format(repr(self.name))


def observable_from_name(name, model=None):
    """Return a built-in Observable

    - name: one of one, q, p, q2, p2, qp, H (H needs model); 1-based suffixes
      select a degree of freedom (q2 is q squared, so use q_2 for the second q)
    - model: HamiltonianModel used by H
    """
    def component(x, i):
        return x.reshape(-1, x.shape[-1])[:, i] if x.ndim > 1 else x[..., i]

    index = 0
    base = name
    if '_' in name:
        base, suffix = name.split('_', 1)
        if not suffix.isdigit() or int(suffix) < 1:
            raise dp.ValidationError('unknown observable {}'.format(repr(name)))
        index = int(suffix) - 1
    table = {
        'one': lambda q, p: np.ones(np.atleast_2d(q).shape[0]),
        'q': lambda q, p: component(np.atleast_2d(q), index),
        'p': lambda q, p: component(np.atleast_2d(p), index),
        'q2': lambda q, p: component(np.atleast_2d(q), index) ** 2,
        'p2': lambda q, p: component(np.atleast_2d(p), index) ** 2,
        'qp': lambda q, p: component(np.atleast_2d(q), index) * component(np.atleast_2d(p), index),
    }
    if base == 'H':
        if model is None:
            raise dp.ValidationError('observable H needs a model')
        return Observable(name, lambda q, p: np.atleast_1d(model.value(np.atleast_2d(q), np.atleast_2d(p), 0.0)))
    if base not in table:
        raise dp.ValidationError('unknown observable {}'.format(repr(name)))
    return Observable(name, table[base])


def gaussian_ensemble(mean_q, mean_p, std_q, std_p, nodes=100, phase=None):
    """Return a normalized Gauss-Hermite ensemble of a Gaussian density

    - mean_q, mean_p, std_q, std_p: scalars or length-N vectors
    - nodes: Gauss-Hermite nodes per phase-space dimension (nodes**(2N) points)
    - phase: optional map (q, p) -> real phase carried by the amplitudes
    """
    mean_q, mean_p, std_q, std_p = [np.atleast_1d(np.asarray(x, dtype=float)) for x in (mean_q, mean_p, std_q, std_p)]
    n = mean_q.shape[0]
    if not (mean_p.shape[0] == std_q.shape[0] == std_p.shape[0] == n):
        raise dp.ValidationError('mean and std vectors must share one dimension')
    if np.any(std_q <= 0) or np.any(std_p <= 0):
        raise dp.ValidationError('standard deviations must be positive')
    if int(nodes) < 1:
        raise dp.ValidationError('nodes must be positive, got {}'.format(nodes))
    x, w = np.polynomial.hermite_e.hermegauss(int(nodes))
    w = w / math.sqrt(2.0 * math.pi)
    grids = np.meshgrid(*([x] * (2 * n)), indexing='ij')
    wgrids = np.meshgrid(*([w] * (2 * n)), indexing='ij')
    xi = np.stack([g.ravel() for g in grids], axis=1)
    weights = np.prod(np.stack([g.ravel() for g in wgrids], axis=1), axis=1)
    q = mean_q + std_q * xi[:, :n]
    p = mean_p + std_p * xi[:, n:]
    amplitude = np.ones(q.shape[0], dtype=complex)
    if phase is not None:
        amplitude = np.exp(1j * np.asarray(phase(q, p), dtype=float))
    phi = KvnWaveFunction(ENSEMBLE, amplitude, q=q, p=p, weights=weights / math.fsum(weights.tolist()))
    return phi.normalized()


def gaussian_density(mean_q, mean_p, std_q, std_p, nodes=100):
    """Return the density of gaussian_ensemble"""
    return density_of(gaussian_ensemble(mean_q, mean_p, std_q, std_p, nodes=nodes))


def delta_momentum_ensemble(f, q_nodes, p0):
    """Return f(q) delta(p - p0) as an ensemble with one shared momentum

    - f: map q -> non-negative real (normalized numerically here)
    - q_nodes: uniform q nodes; quadrature weight is the spacing
    - p0: the shared momentum, stored exactly
    """
    q_nodes = np.asarray(q_nodes, dtype=float).ravel()
    dq = _axis_step(q_nodes, 'q')
    density = np.asarray(f(q_nodes), dtype=float)
    if np.any(density < 0):
        raise dp.ValidationError('f must be non-negative')
    phi = KvnWaveFunction(
        ENSEMBLE, np.sqrt(density).astype(complex), q=q_nodes.reshape(-1, 1),
        p=np.full((q_nodes.shape[0], 1), float(p0)), weights=np.full(q_nodes.shape[0], dq)
    )
    return phi.normalized()


def point_ensemble(q, p):
    """Return a single-point ensemble concentrated at (q, p)"""
    q = np.atleast_1d(np.asarray(q, dtype=float))
    p = np.atleast_1d(np.asarray(p, dtype=float))
    return KvnWaveFunction(ENSEMBLE, [1.0], q=q.reshape(1, -1), p=p.reshape(1, -1), weights=[1.0])


def grid_wavefunction(func, q_axis, p_axis, normalize=True):
    """Sample func(Q, P) on a uniform grid"""
    qq, pp = np.meshgrid(q_axis, p_axis, indexing='ij')
    phi = KvnWaveFunction(GRID, np.asarray(func(qq, pp), dtype=complex), q_axis=q_axis, p_axis=p_axis)
    return phi.normalized() if normalize else phi


def grid_density(func, q_axis, p_axis, normalize=True):
    """Sample a non-negative func(Q, P) on a uniform grid"""
    qq, pp = np.meshgrid(q_axis, p_axis, indexing='ij')
    rho = PhaseSpaceDensity(GRID, np.asarray(func(qq, pp), dtype=float), q_axis=q_axis, p_axis=p_axis)
    return rho.normalized() if normalize else rho


def evaluate_grid(state, q, p, order=3):
    """Cubic-spline interpolation of a grid state at arbitrary points

    Points outside the box evaluate to 0
    """
    if state.representation != GRID:
        raise dp.ValidationError('evaluate_grid needs a grid state')
    q = np.asarray(q, dtype=float)
    p = np.asarray(p, dtype=float)
    coords = np.array([
        ((q - state.q_axis[0]) / state.dq).ravel(),
        ((p - state.p_axis[0]) / state.dp).ravel(),
    ])
    values = state.values
    if np.iscomplexobj(values):
        out = (
            ndimage.map_coordinates(values.real, coords, order=order, mode='constant', cval=0.0)
            + 1j * ndimage.map_coordinates(values.imag, coords, order=order, mode='constant', cval=0.0)
        )
    else:
        out = ndimage.map_coordinates(values, coords, order=order, mode='constant', cval=0.0)
    return out.reshape(q.shape)


def _transport(state, model, t, integrator, t0=0.0):
    """Carry a state along characteristics for time t"""
    if state.dof != model.dof:
        raise dp.ValidationError('state dimension {} does not match model dof {}'.format(state.dof, model.dof))
    if t == 0:
        return state
    if state.representation == ENSEMBLE:
        q, p, _ = flow_points(model, state.q, state.p, t, integrator=integrator, t0=t0)
        return state.with_support(q, p)
    qq, pp = state.mesh()
    q0, p0, _ = flow_points(model, qq.ravel(), pp.ravel(), -t, integrator=integrator, t0=t0 + t)
    values = evaluate_grid(state, q0.reshape(qq.shape), p0.reshape(pp.shape))
    if not np.iscomplexobj(state.values):
        values = np.clip(values, 0.0, None)
    return state._clone(values)


def evolve_wavefunction(phi0, model, t, integrator=None, t0=0.0):
    """Evolve a KvN wavefunction by characteristics, phi_t(z) = phi_0(Phi_{-t}(z))

    - phi0: KvnWaveFunction (ensemble points ride the flow with unchanged
      amplitudes; grid values are interpolated at the inverse-flow points)
    - model: HamiltonianModel
    - t: elapsed time
    - integrator: IntegratorConfig

    No renormalization happens here; norm drift is a diagnostic
    """
    if not math.isfinite(t):
        raise dp.ValidationError('t must be finite, got {}'.format(t))
    return _transport(phi0, model, t, integrator or IntegratorConfig(), t0=t0)


def evolve_density(rho0, model, t, integrator=None, t0=0.0):
    """Evolve a density by characteristics (same transport as the wavefunction)"""
    if not math.isfinite(t):
        raise dp.ValidationError('t must be finite, got {}'.format(t))
    return _transport(rho0, model, t, integrator or IntegratorConfig(), t0=t0)


def density_of(phi):
    """Return |phi|^2 in the representation of phi"""
    values = np.abs(phi.values) ** 2
    if phi.representation == ENSEMBLE:
        return PhaseSpaceDensity(ENSEMBLE, values, q=phi.q, p=phi.p, weights=phi.weights)
    return PhaseSpaceDensity(GRID, values, q_axis=phi.q_axis, p_axis=phi.p_axis)


def liouville_residual(rho_series, model, interior=1):
    """Return the discrete residual norm of d(rho)/dt = {H, rho} on a grid series

    - rho_series: list of (t, PhaseSpaceDensity) with grid representation, at
      least 3 slices, uniform time spacing and identical axes
    - model: HamiltonianModel
    - interior: number of boundary cells dropped on every side

    Time derivatives are central differences between neighbouring slices and
    phase-space derivatives are second-order central differences; the result is
    the root-mean-square over slices of the L2 norm over interior cells
    """
    if len(rho_series) < 3:
        raise dp.ValidationError('need at least 3 time slices, got {}'.format(len(rho_series)))
    times = np.array([float(t) for t, _ in rho_series])
    dt = (times[-1] - times[0]) / (len(times) - 1)
    if not dt > 0 or np.max(np.abs(np.diff(times) - dt)) > 1e-9 * max(1.0, abs(dt)):
        raise dp.ValidationError('time slices must be uniformly spaced')
    first = rho_series[0][1]
    for _, rho in rho_series:
        if rho.representation != GRID:
            raise dp.ValidationError('liouville_residual needs grid densities')
        if rho.values.shape != first.values.shape or np.any(rho.q_axis != first.q_axis) or np.any(rho.p_axis != first.p_axis):
            raise dp.ValidationError('all slices must share the same grid')
    dq = first.dq
    dpp = first.dp
    qq, pp = first.mesh()
    cut = (slice(interior, -interior), slice(interior, -interior))
    squares = []
    for k in range(1, len(rho_series) - 1):
        t = times[k]
        rho = rho_series[k][1].values
        drho_dt = (rho_series[k + 1][1].values - rho_series[k - 1][1].values) / (2.0 * dt)
        drho_dq, drho_dp = np.gradient(rho, dq, dpp)
        h_q = np.asarray(model.grad_q(qq.reshape(-1, 1), pp.reshape(-1, 1), t)).reshape(qq.shape)
        h_p = np.asarray(model.grad_p(qq.reshape(-1, 1), pp.reshape(-1, 1), t)).reshape(qq.shape)
        residual = drho_dt - (h_q * drho_dp - h_p * drho_dq)
        squares.append(math.fsum((residual[cut] ** 2).ravel().tolist()) * dq * dpp)
    return math.sqrt(math.fsum(squares) / len(squares))


def expectation(obs, rho, raw=False):
    """Return the integral of A rho over phase space by the state's quadrature

    - obs: Observable
    - rho: PhaseSpaceDensity
    - raw: if True, skip the normalization check
    """
    if not raw and not rho.is_normalized():
        raise dp.ValidationError(
            'density integrates to {!r}, not 1 (pass raw=True to integrate anyway)'.format(rho.total())
        )
    q, p = rho.support()
    values = np.ravel(obs(q, p))
    if not np.all(np.isfinite(values)):
        raise dp.ValidationError('observable {} is not finite on the support'.format(obs.name))
    return rho._quadrature(np.ravel(rho.values) * values)


def marginal_q(rho):
    """Return (q nodes, q-marginal density)

    Grid states integrate over p; ensembles must share one momentum value and
    sit on uniform q nodes (the delta-in-momentum layout)
    """
    if rho.representation == GRID:
        return rho.q_axis.copy(), rho.values.sum(axis=1) * rho.dp
    if rho.dof != 1 or np.any(rho.p != rho.p[0, 0]):
        raise dp.ValidationError('ensemble q-marginal needs a 1D shared-momentum ensemble')
    order = np.argsort(rho.q[:, 0], kind='mergesort')
    return rho.q[order, 0].copy(), np.asarray(rho.values)[order].copy()


def marginal_p(rho):
    """Return (p nodes, p-marginal density) of a grid state"""
    if rho.representation != GRID:
        raise dp.ValidationError('p-marginal needs a grid state')
    return rho.p_axis.copy(), rho.values.sum(axis=0) * rho.dq


def norm_drift(phi0, phi_t):
    """Return |norm(phi_t) - norm(phi_0)|"""
    return abs(phi_t.norm() - phi0.norm())
