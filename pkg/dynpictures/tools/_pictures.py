"""Expectation values in the Schrodinger, Heisenberg and interaction pictures

Each picture is computed along its own path:

- schrodinger: the density is carried to time t by the full flow, the
  observable stays fixed
- heisenberg: the observable is composed with the full flow, the density
  stays at 0
- interaction: the density rides the characteristics of L_I(t) from 0 to t,
  dq_I/dt = (t/m) V'(q_I + p_I t/m, t) and dp_I/dt = -V'(q_I + p_I t/m, t);
  the observable is dressed by the free flow only
"""

__all__ = [
    'PictureTag', 'PICTURES', 'InteractionLiouvillian1D', 'DysonConfig',
    'CONSTANT_FORCE_SIGN_NOTE', 'expectation_schrodinger',
    'heisenberg_observable', 'expectation_heisenberg', 'pullback_density',
    'pushforward_density', 'to_interaction_picture', 'from_interaction_picture',
    'interaction_observable', 'interaction_flow_points', 'evolve_interaction_density',
    'expectation_interaction', 'picture_expectations', 'picture_table',
    'interaction_liouvillian', 'conjugated_generator_check', 'dyson_evolve',
    'dyson_convergence_order', 'constant_force_density',
    'constant_force_interaction_density', 'relative_difference',
]

import math
from enum import Enum
import numpy as np
from scipy.integrate import solve_ivp
import fs_helper as fh
import dynpictures as dp
from dynpictures.tools._phase import IntegratorConfig, OperatorSplit, flow_points
from dynpictures.tools._kvn import (
    ENSEMBLE, GRID, Observable, PhaseSpaceDensity, evaluate_grid, evolve_density,
    expectation, _axis_step,
)


logger = fh.get_logger(__name__)

CONSTANT_FORCE_SIGN_NOTE = (
    'rho(q, p, t) = f(q - p t/m + F t^2/2m) delta(p - p0 - F t) from inverting '
    'the flow q = q0 + p0 t/m + F t^2/2m; the argument q + p t/m + F t^2/2m does '
    'not reproduce the trajectories and is not used. The interaction-picture '
    'form f(q + F t^2/2m) delta(p - p0 - F t) agrees with the inversion.'
)


class PictureTag(Enum):
    schrodinger = 'schrodinger'
    heisenberg = 'heisenberg'
    interaction = 'interaction'


PICTURES = tuple(tag.value for tag in PictureTag)


class DysonConfig(object):
    """Settings of the time-ordered Dyson propagation

    - order: truncation order of the per-step exponential, 1 to 4
    - steps: number of time steps
    - t_final: propagation time
    """
    def __init__(self, order=2, steps=100, t_final=1.0):
        if int(order) != order or not 1 <= order <= 4:
            raise dp.ValidationError('order must be an integer in [1, 4], got {}'.format(order))
        if int(steps) != steps or steps < 1:
            raise dp.ValidationError('steps must be a positive integer, got {}'.format(steps))
        if not math.isfinite(t_final):
            raise dp.ValidationError('t_final must be finite, got {}'.format(t_final))
        self.order = int(order)
        self.steps = int(steps)
        self.t_final = float(t_final)

    def __repr__(self):
        return 'DysonConfig(order={}, steps={}, t_final={})'.format(self.order, self.steps, self.t_final)


def relative_difference(a, b):
    """|a - b| scaled by max(1, |a|, |b|)"""
    return abs(a - b) / max(1.0, abs(a), abs(b))


def _require_normalized(rho0):
    if not rho0.is_normalized():
        raise dp.ValidationError('initial density integrates to {!r}, not 1'.format(rho0.total()))


def _require_split(model):
    split = model.split
    if split is None or not isinstance(split, OperatorSplit) or not split.kinetic:
        raise dp.UnsupportedSplitError(
            'model {} has no kinetic-plus-potential split'.format(model.name)
        )
    if model.dof != 1:
        raise dp.UnsupportedSplitError('the interaction picture is only supported in one dimension')
    return split


def expectation_schrodinger(obs, rho0, model, t, integrator=None):
    """Return <A>(t) with the time dependence carried by the density

    - obs: Observable
    - rho0: normalized PhaseSpaceDensity at t=0
    - model: HamiltonianModel
    - t: time
    - integrator: IntegratorConfig
    """
    _require_normalized(rho0)
    rho_t = evolve_density(rho0, model, t, integrator=integrator)
    return expectation(obs, rho_t, raw=rho_t.representation == GRID)


def heisenberg_observable(obs, model, t, integrator=None):
    """Return A(t) = A o Phi_t; evaluating it at z0 runs the flow from z0"""
    if not math.isfinite(t):
        raise dp.ValidationError('t must be finite, got {}'.format(t))
    if t == 0:
        return obs
    integrator = integrator or IntegratorConfig()

    def evolved(q, p):
        q_t, p_t, _ = flow_points(model, q, p, t, integrator=integrator)
        return obs(q_t, p_t)

    return Observable('{}(t={})'.format(obs.name, t), evolved)


def expectation_heisenberg(obs, rho0, model, t, integrator=None):
    """Return <A>(t) with the time dependence carried by the observable"""
    _require_normalized(rho0)
    evolved = heisenberg_observable(obs, model, t, integrator=integrator)
    return expectation(evolved, rho0)


def pullback_density(rho0, model, t, integrator=None):
    """Return rho_t(z) = rho_0(Phi_{-t}(z))

    Ensembles move their support points forward (unit Jacobian keeps the
    weights); grids interpolate rho_0 at the inverse-flow points
    """
    _require_normalized(rho0)
    return evolve_density(rho0, model, t, integrator=integrator)


def pushforward_density(rho_t, model, t, integrator=None):
    """Undo pullback_density: carry a time-t density back to time 0"""
    return evolve_density(rho_t, model, -t, integrator=integrator, t0=t)


def to_interaction_picture(rho_t, split, t):
    """Return rho_I(t) = rho_t o Phi0_t (the free motion undone)

    - rho_t: PhaseSpaceDensity at time t
    - split: OperatorSplit with kinetic free part
    - t: time
    """
    if not split.kinetic:
        raise dp.UnsupportedSplitError('free part must be p^2/2m')
    if t == 0:
        return rho_t
    if rho_t.representation == ENSEMBLE:
        q, p = split.free_flow(rho_t.q, rho_t.p, -t)
        return rho_t.with_support(q, p)
    qq, pp = rho_t.mesh()
    q_t, p_t = split.free_flow(qq, pp, t)
    return rho_t._clone(np.clip(evaluate_grid(rho_t, q_t, p_t), 0.0, None))


def from_interaction_picture(rho_i, split, t):
    """Inverse of to_interaction_picture"""
    if t == 0:
        return rho_i
    if rho_i.representation == ENSEMBLE:
        q, p = split.free_flow(rho_i.q, rho_i.p, t)
        return rho_i.with_support(q, p)
    qq, pp = rho_i.mesh()
    q0, p0 = split.free_flow(qq, pp, -t)
    return rho_i._clone(np.clip(evaluate_grid(rho_i, q0, p0), 0.0, None))


def interaction_observable(obs, split, t):
    """Return A_I(t) = A o Phi0_t"""
    if t == 0:
        return obs

    def dressed(q, p):
        q_t, p_t = split.free_flow(q, p, t)
        return obs(q_t, p_t)

    return Observable('{}_I(t={})'.format(obs.name, t), dressed)


def interaction_flow_points(split, q, p, t, integrator=None, t0=0.0):
    """Carry interaction-picture coordinates along the characteristics of L_I

    - split: OperatorSplit with free part p^2/2m
    - q, p: arrays of the same shape (any layout)
    - t: elapsed time (negative to run backwards)
    - integrator: IntegratorConfig; rtol, atol and dt bound the DOP853 steps
    - t0: starting time

    Return (q_I, p_I) at time t0 + t. The full flow is never used, so the
    result is independent of flow_points
    """
    integrator = integrator or IntegratorConfig()
    q = np.asarray(q, dtype=float)
    p = np.asarray(p, dtype=float)
    if q.shape != p.shape:
        raise dp.ValidationError('q batch {} and p batch {} differ'.format(q.shape, p.shape))
    if t == 0:
        return q.copy(), p.copy()
    size = q.size
    m = split.mass

    def rhs(s, y):
        force = np.asarray(split.v_prime(y[:size] + y[size:] * (s / m), s), dtype=float)
        force = np.broadcast_to(force, (size,))
        return np.concatenate([(s / m) * force, -force])

    sol = solve_ivp(
        rhs, (float(t0), float(t0) + float(t)), np.concatenate([q.ravel(), p.ravel()]),
        method='DOP853', rtol=integrator.rtol, atol=integrator.atol, max_step=integrator.dt * 10
    )
    if not sol.success:
        raise dp.IntegrationError('interaction characteristics failed: {}'.format(sol.message))
    y = sol.y[:, -1]
    if not np.all(np.isfinite(y)):
        raise dp.IntegrationError('non-finite interaction characteristics at t={}'.format(t0 + t))
    return y[:size].reshape(q.shape), y[size:].reshape(p.shape)


def evolve_interaction_density(rho0, split, t, integrator=None):
    """Return rho_I(t) from rho_I(0) = rho0 under d(rho_I)/dt = L_I(t) rho_I

    Ensembles move their support along the interaction characteristics;
    grids interpolate rho0 at the points reached by running them backwards
    """
    if not math.isfinite(t):
        raise dp.ValidationError('t must be finite, got {}'.format(t))
    if t == 0:
        return rho0
    if rho0.representation == ENSEMBLE:
        q, p = interaction_flow_points(split, rho0.q, rho0.p, t, integrator=integrator)
        return rho0.with_support(q, p)
    qq, pp = rho0.mesh()
    q0, p0 = interaction_flow_points(split, qq, pp, -t, integrator=integrator, t0=t)
    return rho0._clone(np.clip(evaluate_grid(rho0, q0, p0), 0.0, None))


def expectation_interaction(obs, rho0, model, t, integrator=None):
    """Return <A>(t) = integral of A_I(t) rho_I(t)

    rho_I(t) comes from the interaction characteristics and A_I(t) from the
    free flow; nothing here runs the full flow of the model
    """
    _require_normalized(rho0)
    split = _require_split(model)
    rho_i = evolve_interaction_density(rho0, split, t, integrator=integrator)
    return expectation(interaction_observable(obs, split, t), rho_i, raw=rho_i.representation == GRID)


def _weighted_mean(rho, values, name):
    values = np.ravel(values)
    if not np.all(np.isfinite(values)):
        raise dp.ValidationError('observable {} is not finite on the support'.format(name))
    return rho._quadrature(np.ravel(rho.values) * values)


def picture_table(observables, rho0, model, t, integrator=None, pictures=PICTURES):
    """Return one picture_expectations dict per observable

    - observables: list of Observable
    - rho0: normalized PhaseSpaceDensity at t=0
    - model: HamiltonianModel
    - t: time
    - integrator: IntegratorConfig
    - pictures: which pictures to compute

    The full flow of the support runs once and serves the Schrodinger and the
    Heisenberg picture; the interaction density is evolved once on its own
    characteristics
    """
    _require_normalized(rho0)
    if not math.isfinite(t):
        raise dp.ValidationError('t must be finite, got {}'.format(t))
    integrator = integrator or IntegratorConfig()
    evaluators = {}
    if 'schrodinger' in pictures or 'heisenberg' in pictures:
        q0, p0 = rho0.support()
        q_t, p_t, _ = flow_points(model, q0, p0, t, integrator=integrator)
        if rho0.representation == ENSEMBLE:
            rho_t = rho0.with_support(q_t, p_t)
        else:
            rho_t = evolve_density(rho0, model, t, integrator=integrator)
        evaluators['schrodinger'] = lambda obs: expectation(obs, rho_t, raw=rho_t.representation == GRID)
        evaluators['heisenberg'] = lambda obs: _weighted_mean(rho0, obs(q_t, p_t), obs.name)
    if 'interaction' in pictures and model.split is not None:
        split = _require_split(model)
        rho_i = evolve_interaction_density(rho0, split, t, integrator=integrator)
        evaluators['interaction'] = lambda obs: expectation(
            interaction_observable(obs, split, t), rho_i, raw=rho_i.representation == GRID
        )

    table = []
    for obs in observables:
        result = {'t': float(t), 'observable': obs.name}
        values = []
        for name in pictures:
            if name not in evaluators:
                result[name] = None
                continue
            result[name] = evaluators[name](obs)
            values.append(result[name])
        diff = 0.0
        for i in range(len(values)):
            for j in range(i + 1, len(values)):
                diff = max(diff, relative_difference(values[i], values[j]))
        result['max_pairwise_diff'] = diff
        table.append(result)
    return table


def picture_expectations(obs, rho0, model, t, integrator=None, pictures=PICTURES):
    """Return a dict with the expectation in each picture and the largest
    pairwise relative difference (scale floored at 1)

    - pictures: which pictures to compute; models without a kinetic split
      skip the interaction picture
    """
    return picture_table([obs], rho0, model, t, integrator=integrator, pictures=pictures)[0]


def _d4(values, h, axis):
    """Fourth-order central first derivative with zero extension"""
    pad = [(0, 0), (0, 0)]
    pad[axis] = (2, 2)
    f = np.pad(values, pad, mode='constant')
    n = values.shape[axis]

    def take(offset):
        return np.take(f, np.arange(2 + offset, 2 + offset + n), axis=axis)

    return (-take(2) + 8.0 * take(1) - 8.0 * take(-1) + take(-2)) / (12.0 * h)


class InteractionLiouvillian1D(object):
    """L_I(t) = coeff_p d/dp + coeff_q d/dq for H = p^2/2m + V(q, t)

    coeff_p = V'(q + p t/m), coeff_q = -(t/m) V'(q + p t/m)
    """
    def __init__(self, split, t):
        self.split = split
        self.t = float(t)

    def _shifted_force(self, q, p, t):
        m = self.split.mass
        return np.asarray(self.split.v_prime(np.asarray(q) + np.asarray(p) * (t / m), t), dtype=float)

    def coeff_p(self, q, p, t=None):
        t = self.t if t is None else t
        return self._shifted_force(q, p, t)

    def coeff_q(self, q, p, t=None):
        t = self.t if t is None else t
        return -(t / self.split.mass) * self._shifted_force(q, p, t)

    def apply(self, state, values=None):
        """Return L_I(t) acting on a grid state's values (or on values sampled on its grid)"""
        if state.representation != GRID:
            raise dp.DerivativeError('the interaction Liouvillian needs a grid state to differentiate')
        values = state.values if values is None else values
        qq, pp = state.mesh()
        force = self._shifted_force(qq, pp, self.t)
        out = force * _d4(values, state.dp, axis=1)
        if self.t:
            out = out - (self.t / self.split.mass) * force * _d4(values, state.dq, axis=0)
        return out


def interaction_liouvillian(split, t, dof=1):
    """Return the conjugated interaction generator L_I(t) of a 1D split

    - split: OperatorSplit with free part p^2/2m
    - t: time
    - dof: degrees of freedom (only 1 is supported)
    """
    if not isinstance(split, OperatorSplit) or not split.kinetic:
        raise dp.UnsupportedSplitError('free part must be p^2/2m')
    if dof != 1:
        raise dp.UnsupportedSplitError('interaction Liouvillian is only supported in one dimension')
    return InteractionLiouvillian1D(split, t)


def conjugated_generator_check(split, t, func, q_axis, p_axis, margin=0.2):
    """Compare the L_I(t) coefficient form with conjugation by the free flow

    - split: OperatorSplit
    - t: time
    - func: smooth map (q, p) -> real used as test function
    - q_axis, p_axis: uniform axes of the grid used for derivatives
    - margin: fraction of each axis dropped at the edges of the comparison

    The conjugated action is [V'(q) d/dp (f o Phi0_{-t})] o Phi0_t, evaluated by
    interpolation. Return the largest absolute difference on the interior
    """
    generator = interaction_liouvillian(split, t)
    qq, pp = np.meshgrid(q_axis, p_axis, indexing='ij')
    sampled = PhaseSpaceDensity(GRID, np.zeros(qq.shape), q_axis=q_axis, p_axis=p_axis, signed=True)
    direct = generator.apply(sampled, values=func(qq, pp))

    m = split.mass
    shifted = func(qq - pp * (t / m), pp)
    bare = np.asarray(split.v_prime(qq, t), dtype=float) * _d4(shifted, sampled.dp, axis=1)
    bare_grid = PhaseSpaceDensity(GRID, bare, q_axis=q_axis, p_axis=p_axis, signed=True)
    conjugated = evaluate_grid(bare_grid, qq + pp * (t / m), pp)

    nq, npp = qq.shape
    cq = int(margin * nq)
    cp = int(margin * npp)
    cut = (slice(cq, nq - cq), slice(cp, npp - cp))
    return float(np.max(np.abs(direct[cut] - conjugated[cut])))


def _taylor_exp(apply, values, order):
    """Truncated exponential sum_{n<=order} X^n values / n!"""
    total = values.copy()
    term = values
    for n in range(1, order + 1):
        term = apply(term) / n
        total = total + term
    return total


def dyson_evolve(rhoI0, split, cfg, t0=0.0):
    """Propagate an interaction-picture density with the time-ordered exponential

    - rhoI0: PhaseSpaceDensity in grid representation at time t0
    - split: OperatorSplit (1D, kinetic free part)
    - cfg: DysonConfig
    - t0: starting time

    The T-exponential is an ordered product of per-step exponentials truncated
    at cfg.order. Orders 1-2 sample L_I at the step midpoint; orders 3-4 use
    the two-point Gauss exponent h/2 (A1 + A2) + sqrt(3) h^2/12 [A2, A1]
    """
    if rhoI0.representation != GRID:
        raise dp.DerivativeError('dyson_evolve needs a grid density (ensembles carry no derivatives)')
    interaction_liouvillian(split, t0)
    h = cfg.t_final / cfg.steps
    values = np.array(rhoI0.values, dtype=float)
    if cfg.t_final == 0:
        return rhoI0
    offset = math.sqrt(3.0) / 6.0
    for k in range(cfg.steps):
        tk = t0 + k * h
        if cfg.order <= 2:
            generator = InteractionLiouvillian1D(split, tk + 0.5 * h)

            def apply(v, generator=generator):
                return h * generator.apply(rhoI0, values=v)
        else:
            g1 = InteractionLiouvillian1D(split, tk + (0.5 - offset) * h)
            g2 = InteractionLiouvillian1D(split, tk + (0.5 + offset) * h)

            def apply(v, g1=g1, g2=g2):
                a1 = g1.apply(rhoI0, values=v)
                a2 = g2.apply(rhoI0, values=v)
                commutator = g2.apply(rhoI0, values=a1) - g1.apply(rhoI0, values=a2)
                return 0.5 * h * (a1 + a2) + (math.sqrt(3.0) * h * h / 12.0) * commutator

        values = _taylor_exp(apply, values, cfg.order)
        if not np.all(np.isfinite(values)):
            raise dp.NumericError('Dyson propagation diverged at step {} (h={})'.format(k, h))
    logger.debug('dyson_evolve order={} steps={} min value={:.3e}'.format(cfg.order, cfg.steps, values.min()))
    return PhaseSpaceDensity(GRID, values, q_axis=rhoI0.q_axis, p_axis=rhoI0.p_axis, signed=True)


def dyson_convergence_order(rhoI0, split, t_final, order, steps=10):
    """Measure the observed order of dyson_evolve from step counts n, 2n, 4n

    Return dict with order, steps, successive differences (grid L2 norms)
    and measured_order = log2(|rho_n - rho_2n| / |rho_2n - rho_4n|)
    """
    counts = [steps, 2 * steps, 4 * steps]
    results = [
        dyson_evolve(rhoI0, split, DysonConfig(order=order, steps=n, t_final=t_final)).values
        for n in counts
    ]
    cell = rhoI0.cell_volume
    diffs = [
        math.sqrt(float(np.sum((results[i] - results[i + 1]) ** 2)) * cell)
        for i in range(2)
    ]
    if not diffs[1] > 0:
        raise dp.NumericError('successive Dyson differences vanished; order cannot be measured')
    measured = math.log(diffs[0] / diffs[1], 2)
    return {
        'order': order,
        'steps': counts,
        'differences': diffs,
        'measured_order': measured,
    }


def constant_force_density(f, p0, F, m, t, q_nodes):
    """Return the exact density at time t for f(q) delta(p - p0) under force F

    - f: map q -> real, normalized over q
    - p0: initial momentum shared by all particles
    - F: constant force
    - m: mass (> 0)
    - t: time
    - q_nodes: uniform q nodes of the returned shared-momentum ensemble

    Momentum support is exactly p0 + F t; the q-profile is f composed with
    the inverse flow (see CONSTANT_FORCE_SIGN_NOTE)
    """
    if not m > 0:
        raise dp.ValidationError('mass must be positive, got {}'.format(m))
    q_nodes = np.asarray(q_nodes, dtype=float).ravel()
    dq = _axis_step(q_nodes, 'q')
    p_t = p0 + F * t
    values = np.asarray(f(q_nodes - p_t * t / m + F * t * t / (2.0 * m)), dtype=float)
    return PhaseSpaceDensity(
        ENSEMBLE, values, q=q_nodes.reshape(-1, 1), p=np.full((q_nodes.shape[0], 1), p_t),
        weights=np.full(q_nodes.shape[0], dq)
    )


def constant_force_interaction_density(f, p0, F, m, t, q_nodes):
    """Return rho_I(q, p, t) = f(q + F t^2/2m) delta(p - p0 - F t)"""
    if not m > 0:
        raise dp.ValidationError('mass must be positive, got {}'.format(m))
    q_nodes = np.asarray(q_nodes, dtype=float).ravel()
    dq = _axis_step(q_nodes, 'q')
    values = np.asarray(f(q_nodes + F * t * t / (2.0 * m)), dtype=float)
    return PhaseSpaceDensity(
        ENSEMBLE, values, q=q_nodes.reshape(-1, 1), p=np.full((q_nodes.shape[0], 1), p0 + F * t),
        weights=np.full(q_nodes.shape[0], dq)
    )
