__all__ = [
    'SensitivityMatrix', 'LyapunovSpectrum', 'KS_NOISE_FLOOR', 'tangent_flow',
    'finite_difference_sensitivity', 'lyapunov_spectrum', 'ks_entropy',
    'literal_spectrum', 'tangent_log_norm_series', 'tangent_growth_series',
]

import math
import numpy as np
import fs_helper as fh
import dynpictures as dp
from dynpictures.tools._phase import IntegratorConfig, PhasePoint, flow_points, flow_with_tangent


logger = fh.get_logger(__name__)

KS_NOISE_FLOOR = 1e-3
DET_TOLERANCE = 1e-8


class SensitivityMatrix(object):
    """Jacobian of the flow d(q, p)/d(q0, p0) at time t

    - entries: 2N x 2N array with blocks [dq/dq0, dq/dp0; dp/dq0, dp/dp0]
    - t: elapsed time
    - base_point: PhasePoint the trajectory started from
    """
    def __init__(self, entries, t, base_point):
        entries = np.array(entries, dtype=float)
        if entries.ndim != 2 or entries.shape[0] != entries.shape[1] or entries.shape[0] % 2:
            raise dp.ValidationError('sensitivity matrix must be 2N x 2N, got {}'.format(entries.shape))
        self.entries = entries
        self.t = float(t)
        self.base_point = base_point

    @property
    def dof(self):
        return self.entries.shape[0] // 2

    def det(self):
        return float(np.linalg.det(self.entries))

    def det_error(self):
        return abs(self.det() - 1.0)

    def block(self, i, j):
        """Return the N x N block (i, j), 0 for q and 1 for p"""
        n = self.dof
        return self.entries[i * n:(i + 1) * n, j * n:(j + 1) * n]

    def __repr__(self):
        return 'SensitivityMatrix(t={}, entries={})'.format(self.t, self.entries.tolist())


class LyapunovSpectrum(object):
    """Sorted Lyapunov exponents with convergence diagnostics

    - exponents: descending array of 2N rates (per time unit, or per kick for maps)
    - T: accumulation time (after the transient)
    - renorm_interval: time between QR re-orthonormalizations
    - transient: time spent aligning the frame before accumulation
    - checkpoints: list of dicts with t, exponents (running estimates), det_error
    - log_growth: list of (t, accumulated log stretch of the leading direction)
    - det_error: |det - 1| of the accumulated tangent map
    """
    def __init__(self, exponents, T, renorm_interval, transient=0.0, checkpoints=None,
                 log_growth=None, det_error=0.0):
        self.exponents = np.sort(np.asarray(exponents, dtype=float))[::-1]
        self.T = float(T)
        self.renorm_interval = float(renorm_interval)
        self.transient = float(transient)
        self.checkpoints = checkpoints or []
        self.log_growth = log_growth or []
        self.det_error = float(det_error)

    def pairing_residual(self):
        """Largest |lambda_i + lambda_{2N+1-i}|"""
        return float(np.max(np.abs(self.exponents + self.exponents[::-1])))

    def as_dict(self):
        return {
            'exponents': self.exponents.tolist(),
            'T': self.T,
            'renorm_interval': self.renorm_interval,
            'transient': self.transient,
            'det_error': self.det_error,
            'pairing_residual': self.pairing_residual(),
        }

    def __repr__(self):
        return 'LyapunovSpectrum(exponents={}, T={})'.format(self.exponents.tolist(), self.T)


def tangent_flow(model, z0, t, integrator=None, t0=0.0):
    """Return the SensitivityMatrix of the flow from z0 over time t

    - model: HamiltonianModel (Hessians closed form or finite differences)
    - z0: PhasePoint
    - t: elapsed time (multiple of the kick period for maps)
    - integrator: IntegratorConfig
    - t0: starting time
    """
    integrator = integrator or IntegratorConfig()
    if t == 0:
        return SensitivityMatrix(np.eye(2 * model.dof), 0.0, z0)
    _, tangent, stats = flow_with_tangent(model, z0, t, integrator=integrator, t0=t0)
    sens = SensitivityMatrix(tangent, t, z0)
    logger.debug('tangent_flow {} t={} steps={} det_error={:.3e}'.format(
        model.name, t, stats['steps'], sens.det_error()
    ))
    return sens


def finite_difference_sensitivity(model, z0, t, h=1e-5, integrator=None, t0=0.0):
    """Central-difference Jacobian of the flow map (test oracle for tangent_flow)

    - h: displacement of each initial coordinate

    All 4N displaced trajectories are propagated as one batch
    """
    if not h > 0:
        raise dp.ValidationError('h must be positive, got {}'.format(h))
    integrator = integrator or IntegratorConfig()
    model.check_dimension(z0)
    n2 = 2 * model.dof
    base = z0.as_array()
    if t == 0:
        return SensitivityMatrix(np.eye(n2), 0.0, z0)
    starts = np.vstack([base + h * e for e in np.eye(n2)] + [base - h * e for e in np.eye(n2)])
    q, p, _ = flow_points(model, starts[:, :model.dof], starts[:, model.dof:], t,
                          integrator=integrator, t0=t0)
    ends = np.hstack([q, p])
    jac = (ends[:n2] - ends[n2:]).T / (2.0 * h)
    return SensitivityMatrix(jac, t, z0)


def _default_interval(model):
    if model.kind == 'kicked-map':
        return float(model.kick_period)
    return 1.0


def _qr_step(tangent, t):
    """Re-orthonormalize a propagated frame; return (Q, log|diag R|)"""
    qmat, rmat = np.linalg.qr(tangent)
    diag = np.abs(np.diag(rmat))
    if not np.all(np.isfinite(diag)) or np.any(diag <= 0):
        raise dp.RenormalizationError('tangent frame lost rank at t={} (|diag R|={})'.format(t, diag.tolist()))
    signs = np.sign(np.diag(rmat))
    return qmat * signs, np.log(diag), rmat * signs[:, None]


def lyapunov_spectrum(model, z0, T, renorm_interval=None, transient=None, integrator=None,
                      checkpoints=20, t0=0.0):
    """Return the LyapunovSpectrum by QR re-orthonormalization of a tangent frame

    - model: HamiltonianModel
    - z0: PhasePoint
    - T: accumulation time (iterations times the period for maps)
    - renorm_interval: time between re-orthonormalizations (default 1 time
      unit, or one kick for maps)
    - transient: time evolved before accumulation starts (default 10% of T,
      rounded to whole intervals)
    - integrator: IntegratorConfig
    - checkpoints: number of running estimates recorded
    - t0: starting time

    The frame starts at the identity; the accumulated logs of |diag R| over T
    divided by T are the exponents, the large-t eigenvalues of ln(T^T T)/(2t)
    """
    renorm_interval = float(renorm_interval or _default_interval(model))
    if not renorm_interval > 0:
        raise dp.ValidationError('renorm_interval must be positive, got {}'.format(renorm_interval))
    if not T >= renorm_interval:
        raise dp.ValidationError('T={} must be at least renorm_interval={}'.format(T, renorm_interval))
    integrator = integrator or IntegratorConfig()
    model.check_dimension(z0)
    n_intervals = int(round(T / renorm_interval))
    if transient is None:
        n_transient = int(round(0.1 * n_intervals))
    else:
        n_transient = int(round(float(transient) / renorm_interval))
    every = max(1, n_intervals // max(1, int(checkpoints)))

    n2 = 2 * model.dof
    frame = np.eye(n2)
    z = z0
    t = float(t0)
    sums = np.zeros(n2)
    log_growth = []
    running = []
    for k in range(n_transient + n_intervals):
        z, propagated, _ = flow_with_tangent(model, z, renorm_interval, tangent=frame,
                                             integrator=integrator, t0=t)
        t = t0 + (k + 1) * renorm_interval
        frame, logs, _ = _qr_step(propagated, t)
        if k < n_transient:
            continue
        sums += logs
        done = k + 1 - n_transient
        elapsed = done * renorm_interval
        log_growth.append((elapsed, float(sums[0])))
        if done % every == 0 or done == n_intervals:
            running.append({
                't': elapsed,
                'exponents': np.sort(sums / elapsed)[::-1].tolist(),
                'det_error': abs(math.expm1(math.fsum(sums.tolist()))),
            })
    accumulated = n_intervals * renorm_interval
    spectrum = LyapunovSpectrum(
        sums / accumulated, accumulated, renorm_interval,
        transient=n_transient * renorm_interval, checkpoints=running,
        log_growth=log_growth, det_error=abs(math.expm1(math.fsum(sums.tolist()))),
    )
    logger.info('lyapunov_spectrum {} T={} exponents={}'.format(
        model.name, accumulated, ['{:.6g}'.format(x) for x in spectrum.exponents]
    ))
    if spectrum.det_error > DET_TOLERANCE:
        logger.warning('accumulated det error {:.3e} exceeds {}'.format(spectrum.det_error, DET_TOLERANCE))
    return spectrum


def ks_entropy(spectrum, floor=KS_NOISE_FLOOR):
    """Return the sum of exponents above the noise floor

    - spectrum: LyapunovSpectrum or a sequence of exponents
    - floor: exponents at or below this are treated as zero
    """
    exponents = getattr(spectrum, 'exponents', spectrum)
    return math.fsum(x for x in np.ravel(exponents).tolist() if x > floor)


def literal_spectrum(model, z0, t, integrator=None, t0=0.0):
    """Return the eigenvalues of ln(T^T T)/(2t), descending (short times only)"""
    if not t > 0:
        raise dp.ValidationError('t must be positive, got {}'.format(t))
    sens = tangent_flow(model, z0, t, integrator=integrator, t0=t0)
    gram = sens.entries.T.dot(sens.entries)
    eigenvalues = np.linalg.eigvalsh(gram)
    if np.any(eigenvalues <= 0) or not np.all(np.isfinite(eigenvalues)):
        raise dp.NumericError('T^T T is not positive definite at t={}; use lyapunov_spectrum'.format(t))
    return np.sort(np.log(eigenvalues) / (2.0 * t))[::-1]


def tangent_log_norm_series(model, z0, times, renorm_interval=None, integrator=None, t0=0.0):
    """Return [(t, ln |T(t)|_F)] along one trajectory without overflow

    - times: increasing sample times (>= t0; whole kicks for maps)
    - renorm_interval: largest stretch between re-orthonormalizations
    """
    return [(t, log_norm) for t, log_norm, _ in tangent_growth_series(
        model, z0, times, renorm_interval=renorm_interval, integrator=integrator, t0=t0
    )]


def tangent_growth_series(model, z0, times, renorm_interval=None, integrator=None, t0=0.0):
    """Return [(t, ln |T(t)|_F, ln |T(t) e_1|)] along one trajectory

    - model: HamiltonianModel
    - z0: PhasePoint
    - times: increasing sample times (>= t0; whole kicks for maps)
    - renorm_interval: largest stretch between re-orthonormalizations
    - integrator: IntegratorConfig
    - t0: starting time

    T(t) = Q R with R the product of the per-interval triangular factors; R is
    kept rescaled by its largest entry and the scale is tracked in log form.
    |T e_1| is R[0, 0], the stretch of the leading QR direction, so a slope
    fitted to the third column over a window is the finite-time leading
    exponent of that window
    """
    renorm_interval = float(renorm_interval or _default_interval(model))
    integrator = integrator or IntegratorConfig()
    model.check_dimension(z0)
    times = [float(x) for x in times]
    if any(b < a for a, b in zip(times, times[1:])) or (times and times[0] < t0):
        raise dp.ValidationError('times must be increasing and start at or after t0')

    n2 = 2 * model.dof
    frame = np.eye(n2)
    triangle = np.eye(n2)
    log_scale = 0.0
    z = z0
    t = float(t0)
    series = []
    for target in times:
        while target - t > 1e-12 * max(1.0, abs(target)):
            h = min(renorm_interval, target - t)
            if model.kind == 'kicked-map':
                h = model.kick_period
            z, propagated, _ = flow_with_tangent(model, z, h, tangent=frame, integrator=integrator, t0=t)
            t += h
            frame, _, rmat = _qr_step(propagated, t)
            triangle = rmat.dot(triangle)
            scale = float(np.max(np.abs(triangle)))
            triangle /= scale
            log_scale += math.log(scale)
        series.append((
            target,
            log_scale + math.log(float(np.linalg.norm(triangle))),
            log_scale + math.log(abs(float(triangle[0, 0]))),
        ))
    return series
