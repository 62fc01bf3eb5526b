"""Rotation estimation on the L-grid.

Observations follow v_i = a * exp(-i k theta_i). relative_rotation(v_i, v_j)
estimates theta_j - theta_i, and a SyncResult holds theta_hat_i up to one
global rotation, so align() multiplies v_i by exp(i k theta_hat_i).
"""

import numpy as np
from scipy import linalg

from rotation_grid import grid_angles, quantize_angle
from steerable_basis import rotate_coeffs
from utils import ConfigurationError, DimensionError, derive_rng, parallel_map, warn

PPM_MAX_ITERS = 200
PPM_TOLERANCE = 1e-6


class PairwisePhaseMatrix:
    def __init__(self, matrix, grid_size):
        """H_ij = exp(i theta_hat_ij), Hermitian with a unit diagonal."""
        matrix = np.asarray(matrix, dtype=complex)
        if matrix.ndim != 2 or matrix.shape[0] != matrix.shape[1]:
            raise DimensionError('pairwise matrix must be square')
        if not np.allclose(matrix, matrix.conj().T, atol=1e-12):
            raise DimensionError('pairwise matrix must satisfy H_ji = conj(H_ij)')
        self.matrix = matrix
        self.grid_size = int(grid_size)

    @property
    def n(self):
        return self.matrix.shape[0]


class SyncResult:
    def __init__(self, rotation_indices, method, grid_size, iterations=0,
                 converged=True, objective_trace=None):
        self.rotation_indices = np.asarray(rotation_indices, dtype=int)
        if np.any(self.rotation_indices < 0) or \
                np.any(self.rotation_indices >= grid_size):
            raise DimensionError('rotation indices must lie in [0, L-1]')
        self.method = method
        self.grid_size = int(grid_size)
        self.iterations = int(iterations)
        self.converged = bool(converged)
        self.objective_trace = [] if objective_trace is None else list(objective_trace)

    def angles(self):
        return grid_angles(self.grid_size, self.rotation_indices)

    def shifted(self, offset):
        """Same estimates moved by one global grid offset."""
        return SyncResult((self.rotation_indices + offset) % self.grid_size,
                          self.method, self.grid_size, self.iterations,
                          self.converged, self.objective_trace)

    def __repr__(self):
        return 'SyncResult(method={!r}, n={}, iterations={})'.format(
            self.method, self.rotation_indices.size, self.iterations)


def phase_table(angular_index, grid_size):
    """E[l, m] = exp(i k_m 2 pi l / L)."""
    return np.exp(1j * np.outer(grid_angles(grid_size), angular_index))


def _check_pair(a, b):
    if not a.same_indices(b):
        raise DimensionError('coefficient vectors use different index maps')


def _best_rotation(reference_values, values, table):
    """argmax_l Re sum_m E[l, m] values[..., m] conj(reference[..., m]);
       np.argmax keeps the smallest index on ties."""
    scores = ((values * reference_values.conj()) @ table.T).real
    return np.argmax(scores, axis=-1)


def relative_rotation(v_i, v_j, grid_size):
    """Grid index l minimising sum |v_i - exp(i k 2 pi l / L) v_j|^2."""
    _check_pair(v_i, v_j)
    table = phase_table(v_i.angular_index, grid_size)
    return int(_best_rotation(v_i.values, v_j.values, table))


def build_pairwise_matrix(observations, grid_size, workers=1):
    """All N(N-1)/2 relative rotations, O(N^2 L M).

       H_ij = exp(i (theta_i - theta_j)) so that H = z z* for z_i = exp(i theta_i).
    """
    n = observations.count
    if n < 2:
        raise ConfigurationError('pairwise synchronization needs N >= 2')
    values = observations.values
    table = phase_table(observations.angular_index, grid_size)

    def row(i):
        # relative_rotation(v_j, v_i) for all j > i
        return _best_rotation(values[i + 1:], values[i][None, :], table)

    H = np.eye(n, dtype=complex)
    for i, estimates in enumerate(parallel_map(row, range(n - 1), workers)):
        H[i, i + 1:] = np.exp(1j * grid_angles(grid_size, estimates))
        H[i + 1:, i] = H[i, i + 1:].conj()
    return PairwisePhaseMatrix(H, grid_size)


def ppm_solve(H, max_iters=PPM_MAX_ITERS, tol=PPM_TOLERANCE, seed=0):
    """Projected power method z <- phase((H + lambda I) z).

       lambda = max(0, -lambda_min(H)) makes the iteration matrix positive
       semidefinite, so z* H z never decreases.

       Parameters:
           H (PairwisePhaseMatrix)
           max_iters (int): iteration cap.
           tol (float):     stop when ||z_new - z|| < tol.
           seed (int):      seed of the random unit-modulus start.

       Returns:
           SyncResult with theta_hat_i = arg z_i quantized to the grid.
    """
    A = H.matrix
    n = H.n
    lam_min = linalg.eigh(A, eigvals_only=True, subset_by_index=[0, 0])[0]
    shift = max(0.0, -lam_min)
    rng = derive_rng(seed)
    z = np.exp(1j * rng.uniform(0, 2 * np.pi, n))
    trace = [float(np.vdot(z, A @ z).real)]
    converged = False
    iterations = 0
    for iterations in range(1, max_iters + 1):
        w = A @ z + shift * z
        magnitude = np.abs(w)
        z_new = np.where(magnitude > 0, w / np.where(magnitude > 0, magnitude, 1), z)
        change = np.linalg.norm(z_new - z)
        z = z_new
        trace.append(float(np.vdot(z, A @ z).real))
        if change < tol:
            converged = True
            break
    if not converged:
        warn('ppm', 'no convergence after {} iterations'.format(max_iters))
    # the global phase is free; quantize relative to the first entry
    z = z * np.conj(z[0])
    return SyncResult(quantize_angle(np.angle(z), H.grid_size), 'ppm',
                      H.grid_size, iterations, converged, trace)


def synchronize(observations, grid_size, seed=0, max_iters=PPM_MAX_ITERS,
                tol=PPM_TOLERANCE, workers=1):
    """Pairwise matrix followed by PPM over all observations."""
    H = build_pairwise_matrix(observations, grid_size, workers)
    return ppm_solve(H, max_iters, tol, seed)


def template_match(observations, reference, grid_size):
    """theta_hat_i = relative_rotation(reference, v_i), O(N L M)."""
    _check_pair(observations, reference)
    table = phase_table(reference.angular_index, grid_size)
    estimates = _best_rotation(reference.values[None, :], observations.values, table)
    return SyncResult(estimates, 'template-matching', grid_size)


def align(observations, sync):
    """Undo the estimated rotations: v_i * exp(i k theta_hat_i)."""
    if sync.rotation_indices.size != observations.count:
        raise DimensionError('one rotation estimate is needed per observation')
    return rotate_coeffs(observations, -sync.angles())


def align_and_average(observations, sync):
    """a_hat = (1/N) sum_i exp(i k theta_hat_i) v_i."""
    aligned = align(observations, sync)
    return aligned.with_values(aligned.values.mean(axis=0))


def pairwise_distances(observations, members):
    """Squared distances over the stored (k >= 0) entries between every
       observation and every member, shape (N, P). Entries are unweighted,
       as in relative_rotation and the EM likelihood."""
    norms_obs = np.sum(np.abs(observations.values) ** 2, axis=1)
    norms_mem = np.sum(np.abs(members.values) ** 2, axis=1)
    cross = (observations.values @ members.values.conj().T).real
    return norms_obs[:, None] + norms_mem[None, :] - 2 * cross


def synchronize_and_match(observations, partition_size, grid_size, seed=0,
                          max_iters=PPM_MAX_ITERS, tol=PPM_TOLERANCE, workers=1):
    """Synchronize the first P observations with PPM, then give every
       observation the rotation of its nearest neighbour among them. Members
       of that subset are matched excluding themselves.

       The neighbour search costs O(P M N).
    """
    n = observations.count
    if not 2 <= partition_size <= n:
        raise ConfigurationError(
            'partition size P={} must satisfy 2 <= P <= N={}'.format(partition_size, n))
    subset = observations[:partition_size]
    phi = synchronize(subset, grid_size, seed, max_iters, tol, workers)

    chunks = np.array_split(np.arange(n), max(1, min(workers, n)))

    def nearest(rows):
        d = pairwise_distances(observations[rows], subset)
        own = rows < partition_size
        d[np.flatnonzero(own), rows[own]] = np.inf
        return np.argmin(d, axis=1)

    neighbours = np.concatenate(parallel_map(nearest, chunks, workers))
    return SyncResult(phi.rotation_indices[neighbours], 'synchronize-and-match',
                      grid_size, phi.iterations, phi.converged, phi.objective_trace)


def template_match_1d(signals, reference):
    """Shift estimates argmax_l R_xy[l], R_xy[l] = sum_n x[n] y[(n + l) mod L].

       Parameters:
           signals (array): (N, L) or (L,).
           reference (array): x, length L.

       Returns:
           integer array of shifts (or one integer for a single signal).
    """
    reference = np.asarray(reference, dtype=float)
    signals = np.asarray(signals, dtype=float)
    L = reference.size
    if signals.shape[-1] != L:
        raise DimensionError('signals and reference differ in length')
    shifted = reference[(np.arange(L)[:, None] - np.arange(L)[None, :]) % L]
    scores = signals @ shifted
    return np.argmax(scores, axis=-1)


SYNC_METHODS = ('synchronize-and-match', 'ppm', 'template-matching')


def estimate_rotations(method, observations, grid_size, seed=0,
                       partition_size=100, workers=1):
    """Dispatch on a synchronization method name.

       'template-matching' uses the first observation as the reference and
       'synchronize-and-match' caps P at N.
    """
    if method == 'synchronize-and-match':
        return synchronize_and_match(observations, min(partition_size, observations.count),
                                     grid_size, seed, workers=workers)
    if method == 'ppm':
        return synchronize(observations, grid_size, seed, workers=workers)
    if method == 'template-matching':
        return template_match(observations, observations[0], grid_size)
    raise ConfigurationError('unknown synchronization method {!r}'.format(method))
