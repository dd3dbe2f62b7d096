"""Canonical phase points, Hamiltonian models and their flow maps

Sign convention: flows follow dq/dt = dH/dp, dp/dt = -dH/dq. The Liouville
operator is L = sum_i [dH/dq_i d/dp_i - dH/dp_i d/dq_i], so a state evolves as
d(phi)/dt = L phi (phi_t = phi_0 composed with the inverse flow) and an
observable carried along a trajectory changes as dA/dt = -(L A).
"""

__all__ = [
    'PhasePoint', 'OperatorSplit', 'HamiltonianModel', 'IntegratorConfig',
    'FlowResult', 'MACHINE_EPS', 'as_batch', 'evaluate_hamiltonian',
    'poisson_bracket_action', 'flow', 'inverse_flow', 'flow_points',
    'flow_with_tangent', 'hessian_blocks', 'energy_drift', 'reduce_angle',
]

import math
from collections import namedtuple
import numpy as np
from scipy.integrate import solve_ivp
import dynpictures as dp


MACHINE_EPS = np.finfo(float).eps
FD_STEP_FACTOR = MACHINE_EPS ** (1.0 / 3.0)
MAX_STEPS = 10 ** 8

# Omelyan position-extended Forest-Ruth-like coefficients
_PEFRL_XI = 0.1786178958448091
_PEFRL_LAMBDA = -0.2123418310626054
_PEFRL_CHI = -0.06626458266981849
_PEFRL_DRIFTS = (
    _PEFRL_XI,
    _PEFRL_CHI,
    1.0 - 2.0 * (_PEFRL_CHI + _PEFRL_XI),
    _PEFRL_CHI,
    _PEFRL_XI,
)
_PEFRL_KICKS = (
    (1.0 - 2.0 * _PEFRL_LAMBDA) / 2.0,
    _PEFRL_LAMBDA,
    _PEFRL_LAMBDA,
    (1.0 - 2.0 * _PEFRL_LAMBDA) / 2.0,
)

FlowResult = namedtuple('FlowResult', 'point t stats')


class PhasePoint(object):
    """Canonical coordinates (q, p) of a system with N degrees of freedom"""
    __slots__ = ('q', 'p')

    def __init__(self, q, p):
        q = np.atleast_1d(np.asarray(q, dtype=float)).copy()
        p = np.atleast_1d(np.asarray(p, dtype=float)).copy()
        if q.ndim != 1 or p.ndim != 1:
            raise dp.ValidationError('q and p must be vectors')
        if q.shape != p.shape:
            raise dp.ValidationError(
                'q has dimension {} but p has dimension {}'.format(q.shape[0], p.shape[0])
            )
        if not (np.all(np.isfinite(q)) and np.all(np.isfinite(p))):
            raise dp.ValidationError('non-finite phase point ({}, {})'.format(q, p))
        q.setflags(write=False)
        p.setflags(write=False)
        self.q = q
        self.p = p

    @classmethod
    def from_array(cls, z):
        z = np.asarray(z, dtype=float).ravel()
        if z.shape[0] % 2:
            raise dp.ValidationError('phase vector must have even length, got {}'.format(z.shape[0]))
        n = z.shape[0] // 2
        return cls(z[:n], z[n:])

    @property
    def dof(self):
        return self.q.shape[0]

    def as_array(self):
        return np.concatenate([self.q, self.p])

    def distance(self, other):
        return float(np.max(np.abs(self.as_array() - other.as_array())))

    def __iter__(self):
        yield self.q
        yield self.p

    def __repr__(self):
        return 'PhasePoint(q={}, p={})'.format(self.q.tolist(), self.p.tolist())


class OperatorSplit(object):
    """H = H0 + V with H0 = p^2/2m (the free part) and V(q, t) the interaction

    - mass: m of the kinetic free part
    - potential: map (q, t) -> V
    - v_prime: map (q, t) -> dV/dq
    """
    def __init__(self, mass, potential, v_prime, kinetic=True):
        if not mass > 0:
            raise dp.ValidationError('mass must be positive, got {}'.format(mass))
        self.mass = float(mass)
        self.potential = potential
        self.v_prime = v_prime
        self.kinetic = kinetic

    def h0(self, q, p, t=0.0):
        p = np.asarray(p, dtype=float)
        return np.sum(p * p, axis=-1) / (2.0 * self.mass)

    def h_interaction(self, q, p, t=0.0):
        return self.potential(np.asarray(q, dtype=float), t)

    def free_flow(self, q, p, t):
        """Exact flow of H0 for time t (q + p t/m, p)"""
        q = np.asarray(q, dtype=float)
        p = np.asarray(p, dtype=float)
        return q + p * (t / self.mass), p.copy()

    def check(self, model, points, t=0.0, atol=1e-12):
        """Return the largest |H0 + V - H| over points (list of PhasePoint)"""
        worst = 0.0
        for z in points:
            total = float(self.h0(z.q, z.p, t)) + float(self.h_interaction(z.q, z.p, t))
            parent = float(model.value(z.q, z.p, t))
            worst = max(worst, abs(total - parent) / max(1.0, abs(parent)))
        if worst > atol:
            raise dp.ValidationError('split does not reproduce the model (error {:.3e})'.format(worst))
        return worst


class HamiltonianModel(object):
    """A Hamiltonian system: energy function, gradients and flow type

    - dof: number of degrees of freedom N
    - value: map (q, p, t) -> H, q and p arrays with last axis N
    - grad_q: map (q, p, t) -> dH/dq (finite differences of value if None)
    - grad_p: map (q, p, t) -> dH/dp (finite differences of value if None)
    - kind: 'smooth-flow' or 'kicked-map'
    - split: optional OperatorSplit (kinetic plus potential)
    - separable: if True, H = K(p) + V(q, t) and the splitting integrator is used
    - time_dependent: if True, H depends explicitly on t
    - hess_q: map (q, p, t) -> d2H/dq2 as NxN (single point only)
    - hess_p: map (q, p, t) -> d2H/dp2 as NxN (single point only)
    - kick_map: for kicked maps, (q, p) -> (q', p') over one period
    - kick_inverse: exact inverse of kick_map
    - kick_tangent: (q, p) -> 2Nx2N Jacobian of kick_map
    - kick_period: period of the kicked map
    - name: short label used in logs and summaries
    - params: dict of the parameters that built the model
    """
    def __init__(self, dof, value, grad_q=None, grad_p=None, kind='smooth-flow',
                 split=None, separable=False, time_dependent=False, hess_q=None,
                 hess_p=None, kick_map=None, kick_inverse=None, kick_tangent=None,
                 kick_period=None, name='', params=None):
        if int(dof) != dof or dof < 1:
            raise dp.ValidationError('dof must be a positive integer, got {}'.format(dof))
        if kind not in ('smooth-flow', 'kicked-map'):
            raise dp.ValidationError('kind must be smooth-flow or kicked-map, got {}'.format(repr(kind)))
        if kind == 'kicked-map':
            if kick_map is None or kick_inverse is None:
                raise dp.ValidationError('kicked-map models need kick_map and kick_inverse')
            if not (kick_period and kick_period > 0):
                raise dp.ValidationError('kicked-map models need kick_period > 0')
        self.dof = int(dof)
        self.value = value
        self._grad_q = grad_q
        self._grad_p = grad_p
        self.kind = kind
        self.split = split
        self.separable = bool(separable)
        self.time_dependent = bool(time_dependent)
        self._hess_q = hess_q
        self._hess_p = hess_p
        self.kick_map = kick_map
        self.kick_inverse = kick_inverse
        self.kick_tangent = kick_tangent
        self.kick_period = kick_period
        self.name = name or kind
        self.params = dict(params or {})

    def __repr__(self):
        return 'HamiltonianModel(name={}, dof={}, params={})'.format(
            repr(self.name), self.dof, self.params
        )

    def grad_q(self, q, p, t=0.0):
        if self._grad_q is not None:
            return self._grad_q(q, p, t)
        return _fd_gradient(lambda x: self.value(x, p, t), q)

    def grad_p(self, q, p, t=0.0):
        if self._grad_p is not None:
            return self._grad_p(q, p, t)
        return _fd_gradient(lambda x: self.value(q, x, t), p)

    def hess_q(self, q, p, t=0.0):
        if self._hess_q is not None:
            return np.atleast_2d(self._hess_q(q, p, t))
        return _fd_jacobian(lambda x: self.grad_q(x, p, t), q)

    def hess_p(self, q, p, t=0.0):
        if self._hess_p is not None:
            return np.atleast_2d(self._hess_p(q, p, t))
        return _fd_jacobian(lambda x: self.grad_p(q, x, t), p)

    def check_dimension(self, z):
        if z.dof != self.dof:
            raise dp.ValidationError(
                'phase point has dimension {} but model {} has dof {}'.format(z.dof, self.name, self.dof)
            )

    def check_gradients(self, points, t=0.0, rtol=1e-5):
        """Compare grad_q/grad_p with central differences of value

        - points: list of PhasePoint
        - t: time at which to evaluate
        - rtol: largest relative error allowed

        Return the worst relative error; raise DerivativeError above rtol
        """
        worst = 0.0
        for z in points:
            self.check_dimension(z)
            pairs = (
                (self.grad_q(z.q, z.p, t), _fd_gradient(lambda x: self.value(x, z.p, t), z.q)),
                (self.grad_p(z.q, z.p, t), _fd_gradient(lambda x: self.value(z.q, x, t), z.p)),
            )
            for supplied, numeric in pairs:
                supplied = np.asarray(supplied, dtype=float)
                scale = max(1.0, float(np.max(np.abs(numeric))))
                worst = max(worst, float(np.max(np.abs(supplied - numeric))) / scale)
        if worst > rtol:
            raise dp.DerivativeError(
                'gradients of {} disagree with finite differences (relative error {:.3e})'.format(self.name, worst)
            )
        return worst


class IntegratorConfig(object):
    """Step-size and method settings for continuous-time flows

    - dt: largest step; |t| is cut into ceil(|t|/dt) equal steps
    - method: 'pefrl' (4th-order splitting for separable H) or 'adaptive'
      (solve_ivp DOP853, also used for non-separable H)
    - rtol, atol: tolerances of the adaptive method
    - energy_budget: allowed |H(end) - H(start)| per unit time (relative to
      max(1, |H|)) for autonomous single-point flows
    - check_energy: if True, raise IntegrationError when the budget is exceeded
    """
    def __init__(self, dt=1e-2, method='pefrl', rtol=1e-12, atol=1e-12,
                 energy_budget=1e-8, check_energy=True):
        if not (dt > 0 and math.isfinite(dt)):
            raise dp.ValidationError('dt must be positive and finite, got {}'.format(dt))
        if method not in ('pefrl', 'adaptive'):
            raise dp.ValidationError('method must be pefrl or adaptive, got {}'.format(repr(method)))
        self.dt = float(dt)
        self.method = method
        self.rtol = float(rtol)
        self.atol = float(atol)
        self.energy_budget = float(energy_budget)
        self.check_energy = bool(check_energy)

    def __repr__(self):
        return 'IntegratorConfig(dt={}, method={})'.format(self.dt, repr(self.method))

    def as_dict(self):
        return {
            'dt': self.dt,
            'method': self.method,
            'rtol': self.rtol,
            'atol': self.atol,
            'energy_budget': self.energy_budget,
            'check_energy': self.check_energy,
        }


def _fd_gradient(func, x):
    """Central-difference gradient of a scalar func at vector x (or a batch of vectors)

    Every point gets a step scaled by its own coordinate
    """
    x = np.asarray(x, dtype=float)
    grad = np.zeros_like(x)
    for i in range(x.shape[-1]):
        h = FD_STEP_FACTOR * np.maximum(1.0, np.abs(x[..., i]))
        xp = x.copy()
        xm = x.copy()
        xp[..., i] += h
        xm[..., i] -= h
        grad[..., i] = (np.asarray(func(xp)) - np.asarray(func(xm))) / (2.0 * h)
    return grad


def _fd_jacobian(func, x):
    """Central-difference Jacobian of a vector func at vector x (single point)"""
    x = np.asarray(x, dtype=float)
    n = x.shape[0]
    jac = np.zeros((n, n))
    for j in range(n):
        h = FD_STEP_FACTOR * max(1.0, abs(float(x[j])))
        xp = x.copy()
        xm = x.copy()
        xp[j] += h
        xm[j] -= h
        jac[:, j] = (np.asarray(func(xp), dtype=float) - np.asarray(func(xm), dtype=float)) / (2.0 * h)
    if not np.all(np.isfinite(jac)):
        raise dp.DerivativeError('non-finite finite-difference Jacobian at {}'.format(x))
    return jac


def as_batch(q, p, dof):
    """Return (q, p) as float arrays of shape (M, dof)"""
    q = np.asarray(q, dtype=float).reshape(-1, dof).copy()
    p = np.asarray(p, dtype=float).reshape(-1, dof).copy()
    if q.shape != p.shape:
        raise dp.ValidationError('q batch {} and p batch {} differ'.format(q.shape, p.shape))
    return q, p


def evaluate_hamiltonian(model, z, t=0.0):
    """Return H(q, p, t) for a PhasePoint z

    - model: HamiltonianModel
    - z: PhasePoint with dimension model.dof
    - t: time
    """
    model.check_dimension(z)
    return float(np.asarray(model.value(z.q, z.p, t)))


def poisson_bracket_action(model, observable, z, t=0.0):
    """Return (L A)(z) = sum_i [dH/dq_i dA/dp_i - dH/dp_i dA/dq_i]

    - model: HamiltonianModel
    - observable: map (q, p) -> real, differentiated numerically
    - z: PhasePoint
    - t: time at which H is evaluated

    Along the flow, d/dt A(Phi_t(z)) = -(L A)(z), so for A=q and H=p^2/2m the
    action is -p/m while dq/dt = p/m
    """
    model.check_dimension(z)
    dA_dq = _fd_gradient(lambda x: observable(x, z.p), z.q)
    dA_dp = _fd_gradient(lambda x: observable(z.q, x), z.p)
    if not (np.all(np.isfinite(dA_dq)) and np.all(np.isfinite(dA_dp))):
        raise dp.DerivativeError('non-finite derivative of observable at {}'.format(z))
    dH_dq = np.asarray(model.grad_q(z.q, z.p, t), dtype=float)
    dH_dp = np.asarray(model.grad_p(z.q, z.p, t), dtype=float)
    return float(np.sum(dH_dq * dA_dp - dH_dp * dA_dq))


def hessian_blocks(model, q, p, t=0.0):
    """Return the full 2Nx2N Hessian of H at a single point

    Separable models use hess_q/hess_p with zero mixed blocks; other models
    use central differences of the gradients
    """
    n = model.dof
    hess = np.zeros((2 * n, 2 * n))
    if model.separable:
        hess[:n, :n] = model.hess_q(q, p, t)
        hess[n:, n:] = model.hess_p(q, p, t)
        return hess

    def full_grad(z):
        return np.concatenate([
            np.asarray(model.grad_q(z[:n], z[n:], t), dtype=float),
            np.asarray(model.grad_p(z[:n], z[n:], t), dtype=float),
        ])

    return _fd_jacobian(full_grad, np.concatenate([q, p]))


def _pefrl_step(model, q, p, t, h, tangent=None):
    """One PEFRL step of size h; the clock advances with the drifts"""
    tau = t
    for i, kick in enumerate(_PEFRL_KICKS):
        c = _PEFRL_DRIFTS[i] * h
        if tangent is not None:
            tangent[:model.dof] += c * model.hess_p(q, p, tau).dot(tangent[model.dof:])
        q = q + c * model.grad_p(q, p, tau)
        tau = tau + c
        d = kick * h
        if tangent is not None:
            tangent[model.dof:] -= d * model.hess_q(q, p, tau).dot(tangent[:model.dof])
        p = p - d * model.grad_q(q, p, tau)
    c = _PEFRL_DRIFTS[-1] * h
    if tangent is not None:
        tangent[:model.dof] += c * model.hess_p(q, p, tau).dot(tangent[model.dof:])
    q = q + c * model.grad_p(q, p, tau)
    return q, p


def _step_count(t, dt):
    steps = int(math.ceil(abs(t) / dt - 1e-12)) if t else 0
    if steps > MAX_STEPS:
        raise dp.IntegrationError(
            'step-size underflow: {} steps of dt={} needed for t={}'.format(steps, dt, t)
        )
    return steps


def _kicks_for(model, t):
    n = int(round(t / model.kick_period))
    if abs(n * model.kick_period - t) > 1e-9 * max(1.0, abs(t)):
        raise dp.ValidationError(
            't={} is not a multiple of the kick period {}'.format(t, model.kick_period)
        )
    return n


def _integrate(model, q, p, t0, t, integrator, tangent=None):
    """Propagate batches q, p (shape (M, N)) from t0 to t0 + t"""
    if model.kind == 'kicked-map':
        n = _kicks_for(model, t)
        for _ in range(abs(n)):
            if tangent is not None and n > 0:
                tangent[:] = np.asarray(model.kick_tangent(q[0], p[0])).dot(tangent)
            if n > 0:
                q, p = model.kick_map(q, p)
            else:
                q, p = model.kick_inverse(q, p)
                if tangent is not None:
                    tangent[:] = np.linalg.solve(np.asarray(model.kick_tangent(q[0], p[0])), tangent)
        return q, p, {'steps': abs(n), 'dt': model.kick_period, 'method': 'exact-map'}

    if integrator.method == 'adaptive' or not model.separable:
        return _integrate_adaptive(model, q, p, t0, t, integrator, tangent)

    steps = _step_count(t, integrator.dt)
    if steps == 0:
        return q, p, {'steps': 0, 'dt': 0.0, 'method': 'pefrl'}
    h = t / steps
    for k in range(steps):
        q, p = _pefrl_step(model, q, p, t0 + k * h, h, tangent=tangent)
    if not (np.all(np.isfinite(q)) and np.all(np.isfinite(p))):
        raise dp.IntegrationError('non-finite state after {} steps of h={}'.format(steps, h))
    return q, p, {'steps': steps, 'dt': h, 'method': 'pefrl'}


def _integrate_adaptive(model, q, p, t0, t, integrator, tangent=None):
    shape = q.shape
    n = model.dof
    size = q.size
    if t == 0:
        return q, p, {'steps': 0, 'dt': 0.0, 'method': 'adaptive'}

    def rhs(s, y):
        qq = y[:size].reshape(shape)
        pp = y[size:2 * size].reshape(shape)
        dq = np.asarray(model.grad_p(qq, pp, s), dtype=float).ravel()
        dp_ = -np.asarray(model.grad_q(qq, pp, s), dtype=float).ravel()
        out = [dq, dp_]
        if tangent is not None:
            hess = hessian_blocks(model, qq[0], pp[0], s)
            jmat = np.zeros_like(hess)
            jmat[:n] = hess[n:]
            jmat[n:] = -hess[:n]
            m = y[2 * size:].reshape(tangent.shape)
            out.append(jmat.dot(m).ravel())
        return np.concatenate(out)

    y0 = [q.ravel(), p.ravel()]
    if tangent is not None:
        y0.append(tangent.ravel())
    sol = solve_ivp(
        rhs, (t0, t0 + t), np.concatenate(y0), method='DOP853',
        rtol=integrator.rtol, atol=integrator.atol, max_step=integrator.dt * 10
    )
    if not sol.success:
        raise dp.IntegrationError('adaptive integration failed: {}'.format(sol.message))
    y = sol.y[:, -1]
    if tangent is not None:
        tangent[:] = y[2 * size:].reshape(tangent.shape)
    return (
        y[:size].reshape(shape),
        y[size:2 * size].reshape(shape),
        {'steps': int(sol.t.shape[0] - 1), 'dt': None, 'method': 'adaptive', 'nfev': int(sol.nfev)},
    )


def flow_points(model, q, p, t, integrator=None, t0=0.0):
    """Propagate a batch of phase points by the flow for time t

    - model: HamiltonianModel
    - q, p: arrays of shape (M, N) (or anything reshapeable to it)
    - t: elapsed time (negative for the inverse flow)
    - integrator: IntegratorConfig
    - t0: starting time (matters for explicitly time-dependent H)

    Return (q_t, p_t, stats)
    """
    integrator = integrator or IntegratorConfig()
    q, p = as_batch(q, p, model.dof)
    return _integrate(model, q, p, float(t0), float(t), integrator)


def energy_drift(model, z0, z1, t0=0.0, t1=0.0):
    """Return |H(z1) - H(z0)| (meaningful for autonomous models)"""
    return abs(evaluate_hamiltonian(model, z1, t1) - evaluate_hamiltonian(model, z0, t0))


def flow(model, z0, t, integrator=None, t0=0.0):
    """Return FlowResult for the flow Phi_t(z0)

    - model: HamiltonianModel
    - z0: PhasePoint
    - t: elapsed time; for kicked maps an integer multiple of the kick period
    - integrator: IntegratorConfig
    - t0: starting time
    """
    if not math.isfinite(t):
        raise dp.ValidationError('t must be finite, got {}'.format(t))
    integrator = integrator or IntegratorConfig()
    model.check_dimension(z0)
    q, p, stats = flow_points(model, z0.q, z0.p, t, integrator=integrator, t0=t0)
    point = PhasePoint(q[0], p[0])
    if model.kind == 'smooth-flow' and not model.time_dependent:
        drift = energy_drift(model, z0, point)
        stats['energy_error'] = drift
        stats['local_error_estimate'] = drift / max(1, stats['steps'])
        budget = integrator.energy_budget * max(1.0, abs(t)) * max(1.0, abs(evaluate_hamiltonian(model, z0)))
        if integrator.check_energy and drift > budget:
            raise dp.IntegrationError(
                'energy drift {:.3e} exceeds budget {:.3e} for {} (t={}, steps={})'.format(
                    drift, budget, model.name, t, stats['steps']
                )
            )
    return FlowResult(point, float(t0) + float(t), stats)


def inverse_flow(model, z, t, integrator=None, t0=0.0):
    """Return FlowResult for Phi_t^{-1}(z), z taken at time t0 + t

    - model: HamiltonianModel
    - z: PhasePoint at time t0 + t
    - t: elapsed time to undo
    - integrator: IntegratorConfig
    - t0: time the returned point belongs to
    """
    result = flow(model, z, -t, integrator=integrator, t0=t0 + t)
    return FlowResult(result.point, float(t0), result.stats)


def flow_with_tangent(model, z0, t, tangent=None, integrator=None, t0=0.0):
    """Propagate a point and a tangent frame (2N x k) together

    For the splitting integrator the frame is pushed by the exact derivative
    of each sub-step, so it is the Jacobian of the numerical flow. Kicked maps
    use their closed-form one-period Jacobian

    Return (PhasePoint, tangent, stats)
    """
    integrator = integrator or IntegratorConfig()
    model.check_dimension(z0)
    if tangent is None:
        tangent = np.eye(2 * model.dof)
    tangent = np.array(tangent, dtype=float)
    q, p = as_batch(z0.q, z0.p, model.dof)
    if model.kind == 'kicked-map' or model.separable and integrator.method == 'pefrl':
        if model.kind == 'kicked-map':
            q, p, stats = _integrate(model, q, p, t0, t, integrator, tangent=tangent)
        else:
            q, p = q[0], p[0]
            steps = _step_count(t, integrator.dt)
            h = t / steps if steps else 0.0
            for k in range(steps):
                q, p = _pefrl_step(model, q, p, t0 + k * h, h, tangent=tangent)
            stats = {'steps': steps, 'dt': h, 'method': 'pefrl'}
    else:
        q, p, stats = _integrate_adaptive(model, q, p, t0, t, integrator, tangent=tangent)
    if not np.all(np.isfinite(tangent)):
        raise dp.IntegrationError('non-finite tangent frame at t={}'.format(t0 + t))
    return PhasePoint(np.ravel(q), np.ravel(p)), tangent, stats


def reduce_angle(q, period=2 * math.pi):
    """Reduce angle coordinates to [0, period) for display and marginals"""
    return np.mod(q, period)
