"""Expectation-maximization over steerable coefficients.

The likelihood of observation v_j given rotation offset l is
    exp(-||a * exp(-i k 2 pi l / L) - v_j||^2 / sigma^2),
the complex Gaussian convention: exponent 1/sigma^2 for total per-entry
variance sigma^2. Norms here are sums over the stored entries. Constants
(pi^M sigma^2M, the entropy of the rotation prior) are dropped from the
objective, so only its differences are meaningful.

Rotation offsets are restricted to the centered window of width BW:
    -floor(BW/2), ..., ceil(BW/2) - 1   (mod L),
and BW = L gives standard EM.
"""

import numpy as np
from scipy.special import logsumexp

from dist_learning import kl_divergence
from rotation_grid import RotationDistribution, centered_offsets, grid_angles
from synchronization import align, synchronize_and_match
from utils import (ConfigurationError, DimensionError, NumericalError, Stopwatch,
                   derive_rng, parallel_map, warn)


def exponential_signal_prior(angular_index, A=4.0, B=8.0):
    """Diagonal of Gamma_a = diag((A exp(-k / B))^2)."""
    return (A * np.exp(-np.asarray(angular_index, dtype=float) / B)) ** 2


class EmConfig:
    def __init__(self, grid_size, bandwidth=None, gamma=0.0,
                 signal_prior_covariance=None, tol=1e-5, max_iters=1000,
                 rotation_prior=None):
        """
        Parameters:
            grid_size (int):   L.
            bandwidth (int):   BW, default L.
            gamma (float):     weight of the KL rotation prior.
            signal_prior_covariance (array): diagonal of Gamma_a, or None.
            tol (float):       stopping tolerance on the coefficient change.
            max_iters (int):   T.
            rotation_prior (RotationDistribution): rho_bar, or None.
        """
        self.grid_size = int(grid_size)
        self.bandwidth = self.grid_size if bandwidth is None else int(bandwidth)
        self.gamma = float(gamma)
        self.tol = float(tol)
        self.max_iters = int(max_iters)
        if not 1 <= self.bandwidth <= self.grid_size:
            raise ConfigurationError('BW must satisfy 1 <= BW <= L')
        if self.tol <= 0:
            raise ConfigurationError('tol must be positive')
        if self.gamma < 0:
            raise ConfigurationError('gamma must be non-negative')
        if self.max_iters < 0:
            raise ConfigurationError('T must be non-negative')
        if signal_prior_covariance is not None:
            signal_prior_covariance = np.asarray(signal_prior_covariance, dtype=float)
            if np.any(signal_prior_covariance <= 0):
                raise ConfigurationError('signal prior covariance must be positive')
        self.signal_prior_covariance = signal_prior_covariance
        self.rotation_prior = rotation_prior
        self.prior_window = None
        if rotation_prior is not None:
            if rotation_prior.grid_size != self.grid_size:
                raise ConfigurationError('rotation prior is on a different grid')
            self.prior_window = rotation_prior.restrict(self.bandwidth)

    def offsets(self):
        return centered_offsets(self.bandwidth)

    def uniform_distribution(self):
        return RotationDistribution.uniform(self.grid_size, self.bandwidth)

    def with_prior(self, rotation_prior):
        return EmConfig(self.grid_size, self.bandwidth, self.gamma,
                        self.signal_prior_covariance, self.tol, self.max_iters,
                        rotation_prior)

    def as_dict(self):
        return {
            'L': self.grid_size,
            'BW': self.bandwidth,
            'gamma': self.gamma,
            'tol': self.tol,
            'T': self.max_iters,
            'signal_prior': self.signal_prior_covariance is not None,
        }


class EmState:
    def __init__(self, coeffs, distribution):
        self.coeffs = coeffs
        self.distribution = distribution
        self.iteration = 0
        self.objective_trace = []
        self.weights = None
        self.wall_time = 0.0


class EmReport:
    def __init__(self, coeffs, distribution, iterations, converged, wall_time,
                 objective_trace, coeff_changes, elapsed_trace):
        self.coeffs = coeffs
        self.distribution = distribution
        self.iterations = iterations
        self.converged = converged
        self.wall_time = wall_time
        self.objective_trace = objective_trace
        self.coeff_changes = coeff_changes
        self.elapsed_trace = elapsed_trace
        self.sync_time = 0.0
        self.sync = None

    def trace_rows(self):
        """Rows iteration, objective, coeff_change, elapsed; row t describes
           the iterate a_t."""
        rows = []
        for t, objective in enumerate(self.objective_trace):
            change = self.coeff_changes[t - 1] if t > 0 else ''
            rows.append((t, objective, change, self.elapsed_trace[t]))
        return rows


def _window_phases(angular_index, config):
    """P[l, m] = exp(-i k_m 2 pi o_l / L) for every window offset o_l."""
    return np.exp(-1j * np.outer(grid_angles(config.grid_size, config.offsets()),
                                 angular_index))


def _check_inputs(coeffs, distribution, observations, config):
    if not coeffs.same_indices(observations):
        raise DimensionError('coefficients and observations use different index maps')
    if distribution.grid_size != config.grid_size or \
            distribution.width != config.bandwidth or \
            distribution.window_offset != config.offsets()[0]:
        raise DimensionError('distribution does not cover the centered BW window')
    if config.signal_prior_covariance is not None and \
            config.signal_prior_covariance.shape != (coeffs.M,):
        raise DimensionError('signal prior covariance needs one entry per coefficient')


def _distances(coeffs, observations, config, workers=1):
    """D[j, l] = ||a * P_l - v_j||^2 over stored entries, shape (N, BW)."""
    templates = coeffs.values[None, :] * _window_phases(coeffs.angular_index, config)
    a_norm = np.sum(np.abs(coeffs.values) ** 2)
    values = observations.values
    chunks = np.array_split(np.arange(values.shape[0]), max(1, min(workers, values.shape[0])))

    def block(rows):
        v = values[rows]
        v_norm = np.sum(np.abs(v) ** 2, axis=1)
        cross = (v @ templates.conj().T).real
        return a_norm + v_norm[:, None] - 2 * cross

    return np.vstack(parallel_map(block, chunks, workers))


def _log_terms(coeffs, distribution, observations, sigma, config, workers=1):
    """log rho[l] - D[j, l] / sigma^2; at sigma = 0 the sigma^2-scaled
       limit -D[j, l] on bins with rho > 0."""
    distances = _distances(coeffs, observations, config, workers)
    with np.errstate(divide='ignore'):
        log_rho = np.log(distribution.pmf)
    if sigma == 0:
        return np.where(np.isfinite(log_rho)[None, :], -distances, -np.inf)
    return log_rho[None, :] - distances / sigma ** 2


def _normalize_rows(log_terms, sigma):
    """Weights and per-row log normalizers of the E-step."""
    row_max = log_terms.max(axis=1)
    if not np.all(np.isfinite(row_max)):
        raise NumericalError('E-step row with no admissible rotation')
    if sigma == 0:
        # hard assignment: the first maximizer takes all the weight
        weights = np.zeros_like(log_terms)
        weights[np.arange(log_terms.shape[0]), np.argmax(log_terms, axis=1)] = 1.0
        return weights, row_max
    norms = logsumexp(log_terms, axis=1)
    return np.exp(log_terms - norms[:, None]), norms


def e_step(state, observations, sigma, config, workers=1):
    """w[j, l] proportional to rho_t[l] exp(-||a_t P_l - v_j||^2 / sigma^2),
       normalized per observation. Stores and returns the (N, BW) weights."""
    if sigma < 0:
        raise ConfigurationError('sigma must be non-negative')
    _check_inputs(state.coeffs, state.distribution, observations, config)
    log_terms = _log_terms(state.coeffs, state.distribution, observations,
                           sigma, config, workers)
    state.weights, _ = _normalize_rows(log_terms, sigma)
    return state.weights


def m_step_coeffs(weights, observations, sigma, config):
    """a = (N I + sigma^2 Gamma_a^-1)^-1 sum_j sum_l w[j, l] exp(i k 2 pi o_l / L) v_j."""
    per_offset = weights.T @ observations.values
    phases = _window_phases(observations.angular_index, config)
    total = np.sum(per_offset * phases.conj(), axis=0)
    denominator = float(observations.count)
    if config.signal_prior_covariance is not None:
        denominator = denominator + sigma ** 2 / config.signal_prior_covariance
    return observations.with_values(total / denominator)


def m_step_distribution(weights, config):
    """rho[l] = (W[l] + gamma rho_bar[l]) / sum(W + gamma rho_bar), W = column sums."""
    W = weights.sum(axis=0)
    if config.gamma > 0:
        if config.prior_window is None:
            raise ConfigurationError('gamma > 0 needs a learned rotation prior')
        W = W + config.gamma * config.prior_window.pmf
    return RotationDistribution(W / W.sum(), config.grid_size, config.offsets()[0])


def _log_prior(coeffs, distribution, config):
    total = 0.0
    if config.signal_prior_covariance is not None:
        total -= float(np.sum(np.abs(coeffs.values) ** 2 / config.signal_prior_covariance))
    if config.gamma > 0 and config.prior_window is not None:
        total -= config.gamma * kl_divergence(config.prior_window, distribution)
    return total


def evaluate_objective(state, observations, sigma, config, workers=1):
    """Marginal log-posterior of (a, rho) up to an additive constant:
           sum_j log sum_l rho[l] exp(-||a P_l - v_j||^2 / sigma^2)
           - sum |a|^2 / Gamma_a - gamma KL(rho_bar, rho).
       At sigma = 0 the data term is replaced by its sigma^2-scaled limit
       -sum_j min_l ||a P_l - v_j||^2."""
    _check_inputs(state.coeffs, state.distribution, observations, config)
    log_terms = _log_terms(state.coeffs, state.distribution, observations,
                           sigma, config, workers)
    _, norms = _normalize_rows(log_terms, sigma)
    return float(norms.sum()) + _log_prior(state.coeffs, state.distribution, config)


def rotation_invariant_change(new, old, grid_size):
    """min over all L grid rotations of ||new - old * exp(-i k 2 pi l / L)||^2."""
    rotated = old.values[None, :] * np.exp(
        -1j * np.outer(grid_angles(grid_size), old.angular_index))
    return float(np.min(np.sum(np.abs(new.values[None, :] - rotated) ** 2, axis=1)))


def default_init(observations, config, seed):
    """Mean of the observations plus a seeded complex perturbation of norm
       0.1 ||mean||, with a uniform distribution over the window."""
    mean = observations.values.mean(axis=0)
    scale = np.linalg.norm(mean)
    if scale == 0:
        scale = np.sqrt(np.mean(np.sum(np.abs(observations.values) ** 2, axis=1)))
    rng = derive_rng(seed)
    noise = rng.standard_normal((2, observations.M))
    perturbation = noise[0] + 1j * noise[1]
    norm = np.linalg.norm(perturbation)
    if norm > 0:
        perturbation *= 0.1 * scale / norm
    return observations.with_values(mean + perturbation), config.uniform_distribution()


def run_em(observations, sigma, config, init=None, seed=0, workers=1):
    """Iterate E and M steps until the rotation-invariant coefficient change
       falls below tol or T iterations complete. Iterations count completed
       E/M pairs; non-convergence is reported, not raised.

       Parameters:
           observations (SteerableCoeffs): stack of N vectors.
           sigma (float):   noise level.
           config (EmConfig)
           init (tuple):    (SteerableCoeffs, RotationDistribution); the
                            distribution is restricted to the window.
                            Default: default_init.
           seed (int):      seed of the default initialization.
           workers (int):   threads for the E-step.

       Returns:
           EmReport
    """
    watch = Stopwatch()
    if sigma < 0:
        raise ConfigurationError('sigma must be non-negative')
    if config.gamma > 0 and config.prior_window is None:
        raise ConfigurationError('gamma > 0 needs a learned rotation prior')
    if init is None:
        coeffs, distribution = default_init(observations, config, seed)
    else:
        coeffs, distribution = init
        if distribution.width != config.bandwidth or \
                distribution.window_offset != config.offsets()[0]:
            distribution = distribution.restrict(config.bandwidth)
    _check_inputs(coeffs, distribution, observations, config)

    objectives = []
    changes = []
    elapsed = []
    converged = False
    iterations = 0
    for iterations in range(1, config.max_iters + 1):
        log_terms = _log_terms(coeffs, distribution, observations, sigma, config, workers)
        weights, norms = _normalize_rows(log_terms, sigma)
        objectives.append(float(norms.sum()) + _log_prior(coeffs, distribution, config))
        elapsed.append(watch.elapsed_raw())
        new_coeffs = m_step_coeffs(weights, observations, sigma, config)
        distribution = m_step_distribution(weights, config)
        changes.append(rotation_invariant_change(new_coeffs, coeffs, config.grid_size))
        coeffs = new_coeffs
        if changes[-1] < config.tol:
            converged = True
            break

    objectives.append(evaluate_objective(EmState(coeffs, distribution),
                                         observations, sigma, config, workers))
    elapsed.append(watch.elapsed_raw())
    if config.max_iters > 0 and not converged:
        warn('em', 'no convergence after {} iterations'.format(config.max_iters))
    return EmReport(coeffs, distribution, iterations, converged, watch.elapsed(),
                    objectives, changes, elapsed)


def run_synch_em(observations, sigma, config, learned_prior, partition_size,
                 seed=0, workers=1):
    """Synchronize-and-Match, average the aligned observations into a_0,
       take rho_0 from the learned prior on the BW window, then run EM on
       the aligned observations. Reported wall time includes the
       synchronization.

       Parameters:
           learned_prior: RotationDistribution or LearnedPrior, or None when
                          gamma is 0 (rho_0 is then uniform).
    """
    watch = Stopwatch()
    prior = learned_prior
    if prior is not None and not isinstance(prior, RotationDistribution):
        prior = prior.pmf
    if prior is None and config.gamma > 0:
        raise ConfigurationError('gamma > 0 needs a learned rotation prior')
    if prior is not None and config.rotation_prior is None:
        config = config.with_prior(prior)

    sync = synchronize_and_match(observations, partition_size, config.grid_size,
                                 seed, workers=workers)
    sync_time = watch.elapsed()
    aligned = align(observations, sync)
    a0 = aligned.with_values(aligned.values.mean(axis=0))
    rho0 = prior.restrict(config.bandwidth) if prior is not None \
        else config.uniform_distribution()

    report = run_em(aligned, sigma, config, init=(a0, rho0), seed=seed, workers=workers)
    report.wall_time = watch.elapsed()
    report.sync_time = sync_time
    report.sync = sync
    return report
