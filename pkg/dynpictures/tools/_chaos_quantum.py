"""Truncated-oscillator quantum mechanics for the sensitivity operator

Canonical operators come from the ladder operators of a reference oscillator
(mass m, frequency omega_ref) in a basis of D number states. The canonical
commutator then holds exactly except in the last basis state, so all checks
are made on the interior subspace spanned by the lowest interior_dim states.

The sensitivity operator has the blocks

    T11 = (-i/hbar) [q(t), p0]     T12 = -(-i/hbar) [q(t), q0]
    T21 = (-i/hbar) [p(t), p0]     T22 = -(-i/hbar) [p(t), q0]

and every entry of its expectation is bounded by (2/hbar) times the product of
the standard deviations of the two operators in the commutator.
"""

__all__ = [
    'HilbertOperator', 'QuantumSystem', 'QuantumState', 'QuantumSensitivity',
    'MIN_SYSTEM_DIM', 'MAX_DIM', 'build_canonical_pair', 'ladder_operator',
    'free_system', 'harmonic_system', 'double_well_system', 'system_from_descriptor',
    'propagator', 'heisenberg_operator', 'sensitivity_operator',
    'sensitivity_expectation', 'bound_check', 'growth_rate_fit', 'coherent_state',
    'number_state', 'ground_state', 'sensitivity_series', 'truncation_gate',
]

import math
import numpy as np
import fs_helper as fh
import dynpictures as dp


logger = fh.get_logger(__name__)

MIN_SYSTEM_DIM = 8
MAX_DIM = 512
HERMITIAN_TOL = 1e-12
UNITARY_TOL = 1e-10
BLOCK_HERMITIAN_TOL = 1e-10
IMAG_WARN_TOL = 1e-8
BOUND_RTOL = 1e-10
BOUND_ATOL = 1e-14
PAD = 2


class HilbertOperator(object):
    """Dense complex D x D matrix with a cached hermiticity flag

    The flag is set when max |A - A^H| <= 1e-12 * max(1, max |A|)
    """
    def __init__(self, entries):
        entries = np.array(entries, dtype=complex)
        if entries.ndim != 2 or entries.shape[0] != entries.shape[1]:
            raise dp.ValidationError('operator must be a square matrix, got {}'.format(entries.shape))
        if not np.all(np.isfinite(entries)):
            raise dp.ValidationError('operator has non-finite entries')
        self.entries = entries
        scale = max(1.0, float(np.max(np.abs(entries))) if entries.size else 1.0)
        self.hermitian = self.hermiticity_error() <= HERMITIAN_TOL * scale

    @property
    def dim(self):
        return self.entries.shape[0]

    def hermiticity_error(self, interior=None):
        a = self.entries if interior is None else self.entries[:interior, :interior]
        return float(np.max(np.abs(a - a.conj().T))) if a.size else 0.0

    def dagger(self):
        return HilbertOperator(self.entries.conj().T)

    def commutator(self, other):
        a = self.entries
        b = other.entries
        return HilbertOperator(a.dot(b) - b.dot(a))

    def interior(self, k):
        return self.entries[:k, :k]

    def unitarity_error(self):
        return float(np.max(np.abs(self.entries.conj().T.dot(self.entries) - np.eye(self.dim))))

    def eigenvalues(self):
        if self.hermitian:
            return np.linalg.eigvalsh(self.entries)
        return np.sort_complex(np.linalg.eigvals(self.entries))

    def __matmul__(self, other):
        return HilbertOperator(self.entries.dot(other.entries))

    def __mul__(self, scalar):
        return HilbertOperator(self.entries * scalar)

    __rmul__ = __mul__

    def __add__(self, other):
        return HilbertOperator(self.entries + other.entries)

    def __sub__(self, other):
        return HilbertOperator(self.entries - other.entries)

    def __repr__(self):
        return 'HilbertOperator(dim={}, hermitian={})'.format(self.dim, self.hermitian)


def ladder_operator(dim):
    """Return the truncated annihilation operator a with a|n> = sqrt(n)|n-1>"""
    return np.diag(np.sqrt(np.arange(1, dim, dtype=float)), 1).astype(complex)


def _canonical_matrices(dim, hbar, mass, omega_ref):
    a = ladder_operator(dim)
    ad = a.conj().T
    q = math.sqrt(hbar / (2.0 * mass * omega_ref)) * (a + ad)
    p = 1j * math.sqrt(hbar * mass * omega_ref / 2.0) * (ad - a)
    return q, p


def build_canonical_pair(dim, hbar=1.0, mass=1.0, omega_ref=1.0, interior_dim=None):
    """Return (q_op, p_op, interior_dim) from the ladder operators of a reference oscillator

    - dim: number of basis states D (>= 2; QuantumSystem needs D >= 8)
    - hbar, mass, omega_ref: positive scales of the reference oscillator
    - interior_dim: size of the subspace checked for the commutator (default D - 2)

    [q, p] = i hbar diag(1, ..., 1, -(D - 1)); the last state carries the truncation
    """
    if int(dim) != dim or dim < 2:
        raise dp.ValidationError('dim must be an integer >= 2, got {}'.format(dim))
    if dim > MAX_DIM:
        raise dp.ValidationError('dim {} exceeds the dense limit {}'.format(dim, MAX_DIM))
    for name, value in (('hbar', hbar), ('mass', mass), ('omega_ref', omega_ref)):
        if not (value > 0 and math.isfinite(value)):
            raise dp.ValidationError('{} must be positive, got {}'.format(name, value))
    dim = int(dim)
    if interior_dim is None:
        interior_dim = max(1, dim - 2)
    if not 1 <= interior_dim < dim:
        raise dp.ValidationError('interior_dim must be in [1, {}), got {}'.format(dim, interior_dim))
    q, p = _canonical_matrices(dim, hbar, mass, omega_ref)
    return HilbertOperator(q), HilbertOperator(p), int(interior_dim)


class QuantumSystem(object):
    """Truncated quantum system H(t) = p^2/2m + V(q) + f(t) W(q)

    - dim: basis size D (8 <= D <= 512)
    - hbar: reduced Planck constant in model units
    - mass: particle mass
    - omega_ref: frequency of the reference oscillator defining the basis
    - potential: polynomial coefficients [c0, c1, ...] of V(q) = sum c_k q^k
    - drive_coeffs: polynomial coefficients of W(q) (None for autonomous H)
    - drive: map t -> f(t)
    - kinetic: if False, H has no p^2/2m term
    - interior_dim: defaults to D - 2
    - name: label for logs

    Polynomial terms are formed in a basis padded by a few states and then
    truncated, so every kept matrix element of q^k and p^2 is exact
    """
    def __init__(self, dim, hbar=1.0, mass=1.0, omega_ref=1.0, potential=(), drive_coeffs=None,
                 drive=None, kinetic=True, interior_dim=None, name='quantum'):
        if int(dim) != dim or dim < MIN_SYSTEM_DIM:
            raise dp.ValidationError('dim must be an integer >= {}, got {}'.format(MIN_SYSTEM_DIM, dim))
        self.q_op, self.p_op, self.interior_dim = build_canonical_pair(
            dim, hbar=hbar, mass=mass, omega_ref=omega_ref, interior_dim=interior_dim
        )
        self.dim = int(dim)
        self.hbar = float(hbar)
        self.mass = float(mass)
        self.omega_ref = float(omega_ref)
        self.potential = [float(c) for c in potential]
        self.drive_coeffs = None if drive_coeffs is None else [float(c) for c in drive_coeffs]
        self.drive = drive
        self.kinetic = bool(kinetic)
        self.name = name
        if (self.drive_coeffs is None) != (drive is None):
            raise dp.ValidationError('drive_coeffs and drive must be given together')
        degree = max(len(self.potential), len(self.drive_coeffs or ()), 3) - 1
        pad = max(PAD, degree)
        q_big, p_big = _canonical_matrices(self.dim + pad, self.hbar, self.mass, self.omega_ref)
        static = np.zeros((self.dim + pad, self.dim + pad), dtype=complex)
        if self.kinetic:
            static += p_big.dot(p_big) / (2.0 * self.mass)
        static += _polynomial(q_big, self.potential)
        self._static = _hermitize(static[:self.dim, :self.dim])
        self._drive_matrix = None
        if self.drive_coeffs is not None:
            self._drive_matrix = _hermitize(_polynomial(q_big, self.drive_coeffs)[:self.dim, :self.dim])
        self.check_commutator()

    @property
    def time_dependent(self):
        return self._drive_matrix is not None

    def hamiltonian(self, t=0.0):
        """Return H(t) as a HilbertOperator"""
        if self._drive_matrix is None:
            return HilbertOperator(self._static)
        return HilbertOperator(self._static + float(self.drive(t)) * self._drive_matrix)

    def check_commutator(self, tol=1e-10):
        """Return max |[q, p] - i hbar I| on the interior; raise TruncationError above tol"""
        k = self.interior_dim
        comm = self.q_op.commutator(self.p_op).interior(k)
        error = float(np.max(np.abs(comm - 1j * self.hbar * np.eye(k))))
        if error > tol * max(1.0, self.hbar):
            raise dp.TruncationError('canonical commutator off by {:.3e} on the interior'.format(error))
        return error

    def __repr__(self):
        return 'QuantumSystem(name={}, dim={}, hbar={})'.format(repr(self.name), self.dim, self.hbar)


def _polynomial(q, coeffs):
    out = np.zeros_like(q)
    power = np.eye(q.shape[0], dtype=complex)
    for k, c in enumerate(coeffs):
        if k:
            power = power.dot(q)
        if c:
            out = out + c * power
    return out


def _hermitize(a):
    return 0.5 * (a + a.conj().T)


class QuantumState(object):
    """Density operator: Hermitian, positive semidefinite, unit trace"""
    def __init__(self, density):
        if isinstance(density, HilbertOperator):
            density = density.entries
        density = np.array(density, dtype=complex)
        op = HilbertOperator(density)
        if not op.hermitian:
            raise dp.ValidationError('density operator is not Hermitian')
        trace = np.trace(density)
        if abs(trace - 1.0) > 1e-12:
            raise dp.ValidationError('density operator has trace {}, not 1'.format(trace))
        lowest = float(np.linalg.eigvalsh(density)[0])
        if lowest < -1e-12:
            raise dp.ValidationError('density operator has negative eigenvalue {:.3e}'.format(lowest))
        self.density = op

    @classmethod
    def from_vector(cls, psi):
        """Pure state |psi><psi| (psi is normalized here)"""
        psi = np.asarray(psi, dtype=complex).ravel()
        norm = np.linalg.norm(psi)
        if not norm > 0:
            raise dp.ValidationError('state vector must be non-zero')
        psi = psi / norm
        return cls(np.outer(psi, psi.conj()))

    @property
    def dim(self):
        return self.density.dim

    def expect(self, op):
        """Return tr(A rho) (complex)"""
        entries = op.entries if isinstance(op, HilbertOperator) else op
        return complex(np.sum(entries * self.density.entries.T))

    def population_outside(self, k):
        """Probability carried by basis states k and above"""
        d = self.density.entries
        return float(np.real(np.trace(d) - np.trace(d[:k, :k])))

    def __repr__(self):
        return 'QuantumState(dim={})'.format(self.dim)


class QuantumSensitivity(object):
    """The 2x2 block sensitivity operator of a 1D system at time t

    - blocks: [[T11, T12], [T21, T22]] HilbertOperators
    - t: time
    - q_t, p_t: Heisenberg-evolved canonical operators
    - hermiticity_error: largest interior |B - B^H| over blocks
    """
    def __init__(self, blocks, t, q_t=None, p_t=None, hermiticity_error=0.0):
        self.blocks = blocks
        self.t = float(t)
        self.q_t = q_t
        self.p_t = p_t
        self.hermiticity_error = float(hermiticity_error)
        self.expectation = None

    def __repr__(self):
        return 'QuantumSensitivity(t={}, dim={})'.format(self.t, self.blocks[0][0].dim)


def free_system(dim, mass=1.0, hbar=1.0, omega_ref=1.0, interior_dim=None):
    return QuantumSystem(dim, hbar=hbar, mass=mass, omega_ref=omega_ref, potential=(),
                         interior_dim=interior_dim, name='free')


def harmonic_system(dim, mass=1.0, k=1.0, hbar=1.0, omega_ref=None, interior_dim=None):
    """H = p^2/2m + k q^2/2; the basis matches the oscillator unless omega_ref is given"""
    omega_ref = omega_ref or math.sqrt(k / mass)
    return QuantumSystem(dim, hbar=hbar, mass=mass, omega_ref=omega_ref, potential=(0.0, 0.0, 0.5 * k),
                         interior_dim=interior_dim, name='harmonic')


def double_well_system(dim, mass=1.0, a=10.0, b=0.5, eps=10.0, Omega=6.07, hbar=1.0,
                       omega_ref=None, interior_dim=None):
    """H = p^2/2m - a q^2 + b q^4 + eps q cos(Omega t)

    The default basis frequency is the small-oscillation frequency at the
    well bottoms, sqrt(4a/m)
    """
    omega_ref = omega_ref or math.sqrt(4.0 * a / mass)
    return QuantumSystem(
        dim, hbar=hbar, mass=mass, omega_ref=omega_ref, potential=(0.0, 0.0, -a, 0.0, b),
        drive_coeffs=(0.0, eps), drive=lambda t: math.cos(Omega * t),
        interior_dim=interior_dim, name='double_well_driven'
    )


def system_from_descriptor(descriptor, dim, hbar=1.0, omega_ref=None, interior_dim=None, field='model'):
    """Build the QuantumSystem matching a model descriptor {"kind", "params"}"""
    from dynpictures.tools._models import MODEL_PARAMS
    kind = descriptor.get('kind')
    params = dict(MODEL_PARAMS.get(kind, {}))
    params.update(descriptor.get('params') or {})
    if kind == 'free':
        return free_system(dim, mass=params['m'], hbar=hbar, omega_ref=omega_ref or 1.0, interior_dim=interior_dim)
    if kind == 'harmonic':
        return harmonic_system(dim, mass=params['m'], k=params['k'], hbar=hbar, omega_ref=omega_ref,
                               interior_dim=interior_dim)
    if kind == 'double_well_driven':
        return double_well_system(dim, hbar=hbar, omega_ref=omega_ref, interior_dim=interior_dim, mass=params['m'],
                                  a=params['a'], b=params['b'], eps=params['eps'], Omega=params['Omega'])
    polynomials = {
        'inverted': lambda: (0.0, 0.0, -0.5 * params['k']),
        'constant_force': lambda: (0.0, -params['F']),
        'quartic': lambda: (0.0, 0.0, 0.0, 0.0, 0.25 * params['c']),
    }
    if kind not in polynomials:
        raise dp.ValidationError('no quantum counterpart for model kind {}'.format(repr(kind)), field=field + '.kind')
    return QuantumSystem(dim, hbar=hbar, mass=params['m'], omega_ref=omega_ref or 1.0,
                         potential=polynomials[kind](), interior_dim=interior_dim, name=kind)


def _check_unitary(U, what='propagator'):
    error = U.unitarity_error()
    if error > UNITARY_TOL:
        raise dp.UnitarityError('{} is not unitary (|U^H U - I| = {:.3e})'.format(what, error))
    return error


def _step_unitary(system, t_mid, h):
    H = system.hamiltonian(t_mid)
    if not H.hermitian:
        raise dp.ValidationError('Hamiltonian sample at t={} is not Hermitian'.format(t_mid))
    energies, vectors = np.linalg.eigh(H.entries)
    return (vectors * np.exp(-1j * energies * (h / system.hbar))).dot(vectors.conj().T)


def _static_unitary(system, t):
    energies, vectors = np.linalg.eigh(system.hamiltonian().entries)
    phases = np.exp(-1j * energies * (t / system.hbar))
    return (vectors * phases).dot(vectors.conj().T)


def propagator(system, t, steps=None, t0=0.0):
    """Return U(t0 + t, t0) as a HilbertOperator

    - system: QuantumSystem
    - t: elapsed time
    - steps: midpoint steps for time-dependent H (required then); autonomous
      H is exponentiated exactly through its eigendecomposition
    - t0: starting time

    Raise UnitarityError if |U^H U - I| exceeds 1e-10
    """
    if not math.isfinite(t):
        raise dp.ValidationError('t must be finite, got {}'.format(t))
    if t == 0:
        return HilbertOperator(np.eye(system.dim))
    if not system.time_dependent:
        U = HilbertOperator(_static_unitary(system, t))
    else:
        if not steps or int(steps) != steps or steps < 1:
            raise dp.ValidationError('time-dependent propagation needs a positive integer steps, got {}'.format(steps))
        h = float(t) / steps
        total = np.eye(system.dim, dtype=complex)
        for k in range(int(steps)):
            total = _step_unitary(system, t0 + (k + 0.5) * h, h).dot(total)
        U = HilbertOperator(total)
    _check_unitary(U)
    return U


def heisenberg_operator(U, A):
    """Return U^H A U; U must be unitary within 1e-10"""
    _check_unitary(U)
    u = U.entries
    return HilbertOperator(u.conj().T.dot(A.entries).dot(u))


def _sensitivity_from_unitary(system, U, t):
    q0 = system.q_op
    p0 = system.p_op
    q_t = heisenberg_operator(U, q0)
    p_t = heisenberg_operator(U, p0)
    c = -1j / system.hbar
    blocks = [
        [c * q_t.commutator(p0), -c * q_t.commutator(q0)],
        [c * p_t.commutator(p0), -c * p_t.commutator(q0)],
    ]
    k = system.interior_dim
    error = max(b.hermiticity_error(interior=k) for row in blocks for b in row)
    scale = max(1.0, max(float(np.max(np.abs(b.interior(k)))) for row in blocks for b in row))
    if error > BLOCK_HERMITIAN_TOL * scale:
        logger.warning('sensitivity blocks at t={} are not Hermitian on the interior ({:.3e})'.format(t, error))
    return QuantumSensitivity(blocks, t, q_t=q_t, p_t=p_t, hermiticity_error=error)


def sensitivity_operator(system, t, steps=None, U=None):
    """Return the QuantumSensitivity at time t

    - system: QuantumSystem
    - t: time
    - steps: as for propagator
    - U: precomputed propagator to reuse
    """
    if U is None:
        U = propagator(system, t, steps=steps)
    return _sensitivity_from_unitary(system, U, t)


def _expectation_matrix(sens, state):
    values = np.array([[state.expect(b) for b in row] for row in sens.blocks])
    return values.real.copy(), float(np.max(np.abs(values.imag)))


def _checked_expectation(sens, state):
    matrix, residue = _expectation_matrix(sens, state)
    if residue > IMAG_WARN_TOL:
        logger.warning('imaginary residue {:.3e} in sensitivity expectation at t={}'.format(residue, sens.t))
    sens.expectation = matrix
    return matrix, residue


def sensitivity_expectation(sens, state):
    """Return the real 2x2 matrix tr(T_ij rho)

    Imaginary residue above 1e-8 is logged as a truncation artifact and dropped
    """
    if sens.blocks[0][0].dim != state.dim:
        raise dp.ValidationError('state dimension {} does not match operator dimension {}'.format(
            state.dim, sens.blocks[0][0].dim
        ))
    return _checked_expectation(sens, state)[0]


def _std(state, op):
    mean = state.expect(op).real
    second = state.expect(op @ op).real
    return math.sqrt(max(0.0, second - mean * mean))


def bound_check(system, state, t, steps=None, sens=None, exception=False):
    """Compare |<T_ij>| with (2/hbar) times the standard deviations of the commutator pair

    - system: QuantumSystem
    - state: QuantumState
    - t: time
    - steps: as for propagator
    - sens: precomputed QuantumSensitivity at t
    - exception: if True, raise TruncationError when the bound fails

    Return a dict with t, lhs_matrix, rhs_matrix, margin (min rhs - lhs),
    satisfied, imag_residue and outside_population
    """
    if sens is None:
        sens = sensitivity_operator(system, t, steps=steps)
    if sens.blocks[0][0].dim != state.dim:
        raise dp.ValidationError('state dimension does not match the system')
    matrix, residue = _checked_expectation(sens, state)
    dq0 = _std(state, system.q_op)
    dp0 = _std(state, system.p_op)
    dqt = _std(state, sens.q_t)
    dpt = _std(state, sens.p_t)
    factor = 2.0 / system.hbar
    rhs = factor * np.array([[dqt * dp0, dqt * dq0], [dpt * dp0, dpt * dq0]])
    lhs = np.abs(matrix)
    satisfied = bool(np.all(lhs <= rhs * (1.0 + BOUND_RTOL) + BOUND_ATOL))
    outside = state.population_outside(system.interior_dim)
    report = {
        't': float(t),
        'expectation': matrix,
        'lhs_matrix': lhs,
        'rhs_matrix': rhs,
        'margin': float(np.min(rhs - lhs)),
        'satisfied': satisfied,
        'imag_residue': residue,
        'outside_population': outside,
    }
    if outside > IMAG_WARN_TOL:
        logger.warning('state has population {:.3e} outside the interior subspace'.format(outside))
    if not satisfied:
        message = 'sensitivity bound violated at t={} (margin {:.3e})'.format(t, report['margin'])
        if exception:
            raise dp.TruncationError(message)
        logger.warning(message)
    return report


def growth_rate_fit(series, window, values_are_logs=False):
    """Return the least-squares slope of ln(value) against t inside window

    - series: list of (t, value)
    - window: (t_lo, t_hi), inclusive
    - values_are_logs: if True, values already hold ln(value)
    """
    t_lo, t_hi = window
    points = [(float(t), float(v)) for t, v in series if t_lo <= t <= t_hi]
    if len(points) < 4:
        raise dp.ValidationError('need at least 4 points in window {}, got {}'.format(window, len(points)))
    times = np.array([t for t, _ in points])
    values = np.array([v for _, v in points])
    if not values_are_logs:
        if np.any(values <= 0):
            raise dp.ValidationError('values must be positive inside the window')
        values = np.log(values)
    slope, _ = np.polyfit(times, values, 1)
    return float(slope)


def coherent_state(system, q0, p0):
    """Return the coherent state of the reference oscillator centred at (q0, p0)"""
    alpha = (q0 * math.sqrt(system.mass * system.omega_ref / (2.0 * system.hbar))
             + 1j * p0 / math.sqrt(2.0 * system.hbar * system.mass * system.omega_ref))
    amplitudes = np.zeros(system.dim, dtype=complex)
    amplitudes[0] = math.exp(-0.5 * abs(alpha) ** 2)
    for n in range(1, system.dim):
        amplitudes[n] = amplitudes[n - 1] * alpha / math.sqrt(n)
    lost = 1.0 - float(np.sum(np.abs(amplitudes) ** 2))
    if lost > 1e-10:
        logger.warning('coherent state loses {:.3e} of its norm to truncation'.format(lost))
    return QuantumState.from_vector(amplitudes)


def number_state(system, n):
    if int(n) != n or not 0 <= n < system.dim:
        raise dp.ValidationError('n must be in [0, {}), got {}'.format(system.dim, n))
    psi = np.zeros(system.dim, dtype=complex)
    psi[int(n)] = 1.0
    return QuantumState.from_vector(psi)


def ground_state(system, t=0.0):
    """Return the lowest eigenvector of H(t)"""
    _, vectors = np.linalg.eigh(system.hamiltonian(t).entries)
    return QuantumState.from_vector(vectors[:, 0])


def sensitivity_series(system, state, times, steps_per_unit=50.0, t0=0.0):
    """Run one propagation and report the bound at each sample time

    - system: QuantumSystem
    - state: QuantumState at t0
    - times: increasing sample times (>= t0)
    - steps_per_unit: midpoint steps per time unit for time-dependent H

    Return list of bound_check reports with an added 'norm' (Frobenius norm
    of the expectation matrix)
    """
    times = [float(x) for x in times]
    if any(b < a for a, b in zip(times, times[1:])) or (times and times[0] < t0):
        raise dp.ValidationError('times must be increasing and start at or after t0')
    total = np.eye(system.dim, dtype=complex)
    t = float(t0)
    reports = []
    for target in times:
        if target > t:
            if system.time_dependent:
                steps = max(1, int(math.ceil((target - t) * steps_per_unit - 1e-9)))
                h = (target - t) / steps
                for k in range(steps):
                    total = _step_unitary(system, t + (k + 0.5) * h, h).dot(total)
            else:
                total = _static_unitary(system, target - t).dot(total)
            t = target
        sens = _sensitivity_from_unitary(system, HilbertOperator(total), target - t0)
        report = bound_check(system, state, target, sens=sens)
        report['norm'] = float(np.linalg.norm(report['expectation']))
        reports.append(report)
    logger.info('sensitivity_series {} dim={} samples={} all satisfied={}'.format(
        system.name, system.dim, len(reports), all(r['satisfied'] for r in reports)
    ))
    return reports


def truncation_gate(system_factory, state_factory, times, dims, steps_per_unit=50.0, tol=1e-4,
                    exception=False):
    """Run sensitivity_series at two basis sizes concurrently and compare

    - system_factory: map dim -> QuantumSystem
    - state_factory: map QuantumSystem -> QuantumState
    - times: sample times
    - dims: (D, D_large), usually (D, 2D)
    - tol: largest allowed change of any lhs/rhs entry
    - exception: if True, raise TruncationError when the gate fails

    Return dict with dims, max_change, passed and both series
    """
    def run(dim):
        system = system_factory(dim)
        return sensitivity_series(system, state_factory(system), times, steps_per_unit=steps_per_unit)

    small, large = dp.run_concurrently([(run, (dims[0],), {}), (run, (dims[1],), {})])
    for info in (small, large):
        if info['status'] != 'ok':
            raise info['exception']
    change = 0.0
    for a, b in zip(small['value'], large['value']):
        for key in ('lhs_matrix', 'rhs_matrix'):
            change = max(change, float(np.max(np.abs(a[key] - b[key]))))
    passed = change < tol
    result = {
        'dims': list(dims),
        'max_change': change,
        'passed': passed,
        'series': small['value'],
        'series_large': large['value'],
    }
    if not passed:
        message = 'truncation gate failed: entries change by {:.3e} from D={} to D={}'.format(change, dims[0], dims[1])
        if exception:
            raise dp.TruncationError(message)
        logger.warning(message)
    return result
