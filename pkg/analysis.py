"""Statistical diagnostics on the 1-D model.

dependency_experiment measures how synchronization correlates the aligned
signal with the aligned noise. The shift PMF functions compare the analytic
distribution of the template-matching estimate, under a diagonal covariance
approximation, with a Monte-Carlo histogram.
"""

import math

import numpy as np
from scipy import integrate
from scipy.special import betainc, log_ndtr

from mra_model import generate_1d, signals_to_coeffs
from synchronization import estimate_rotations, template_match_1d
from utils import (ConfigurationError, DimensionError, NumericalError, derive_rng,
                   derive_seed, parallel_map)

DEPENDENCY_METHODS = ('none', 'ppm', 'synchronize-and-match', 'template-matching')
QUADRATURE_TOLERANCE = 1e-10
QUADRATURE_FAILURE = 1e-6


class PearsonReport:
    def __init__(self, coefficients, pvalues, fraction_significant, alpha,
                 trials, sync_method):
        """
        Parameters:
            coefficients (array): r[trial, i, j] between signal entry i and
                                  noise entry j.
            pvalues (array):      two-sided p-values, same shape.
            fraction_significant (float): share of p-values below alpha.
            alpha (float):        significance level.
            trials (int):         number of trials pooled.
            sync_method (str):    'none' or a synchronization method name.
        """
        self.coefficients = coefficients
        self.pvalues = pvalues
        self.fraction_significant = float(fraction_significant)
        self.alpha = float(alpha)
        self.trials = int(trials)
        self.sync_method = sync_method


class ShiftPmf:
    def __init__(self, pmf, source, parameters):
        self.pmf = np.asarray(pmf, dtype=float)
        self.source = source
        self.parameters = parameters


def _centered(samples):
    samples = np.asarray(samples, dtype=float)
    return samples - samples.mean(axis=0)


def pearson_coefficient(a, b):
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != b.shape or a.ndim != 1:
        raise DimensionError('Pearson samples must be vectors of equal length')
    if a.size < 3:
        raise ConfigurationError('Pearson coefficient needs at least 3 samples')
    return float(pearson_matrix(a[:, None], b[:, None])[0, 0])


def pearson_matrix(A, B, constant_as_zero=False):
    """r between every column of A and every column of B (samples in rows).
       Constant columns raise NumericalError, or give r = 0 when
       constant_as_zero is set."""
    A = _centered(A)
    B = _centered(B)
    norm_a = np.sqrt(np.sum(A ** 2, axis=0))
    norm_b = np.sqrt(np.sum(B ** 2, axis=0))
    constant = np.outer(norm_a == 0, np.ones_like(norm_b)) + \
        np.outer(np.ones_like(norm_a), norm_b == 0) > 0
    if np.any(constant) and not constant_as_zero:
        raise NumericalError('Pearson coefficient is undefined for zero variance')
    scale = np.outer(norm_a, norm_b)
    r = np.where(constant, 0.0, (A.T @ B) / np.where(constant, 1.0, scale))
    return np.clip(r, -1.0, 1.0)


def pearson_pvalue(r, n):
    """Two-sided p-value of t = r sqrt((n - 2) / (1 - r^2)) with n - 2 degrees
       of freedom, I_{1 - r^2}((n - 2) / 2, 1 / 2)."""
    if n <= 2:
        raise ConfigurationError('p-value needs more than 2 samples')
    r = np.asarray(r, dtype=float)
    x = np.clip(1.0 - r ** 2, 0.0, 1.0)
    p = betainc((n - 2) / 2.0, 0.5, x)
    return float(p) if p.ndim == 0 else p


def _trial_matrices(L, sigma, n, sync_method, trial_seed, partition_size):
    """Per-observation signal and noise samples, before or after alignment."""
    data = generate_1d(L, n, sigma, trial_seed)
    if sync_method == 'none':
        return data.shifted_truth(), data.noise()
    sync = estimate_rotations(sync_method, signals_to_coeffs(data.signals), L,
                              trial_seed, partition_size)
    estimates = sync.rotation_indices
    columns = np.arange(L)[None, :]
    # roll(x, s - s_hat) and roll(e, -s_hat)
    signal = data.truth[(columns - (data.shifts - estimates)[:, None]) % L]
    noise = data.noise()[np.arange(n)[:, None], (columns + estimates[:, None]) % L]
    return signal, noise


def dependency_experiment(L, sigma, n, trials, sync_method='none', seed=0,
                          alpha=0.05, partition_size=100, workers=1):
    """Share of (signal entry, noise entry, trial) Pearson coefficients that
       are significant at level alpha, all L^2 pairs of every trial pooled.

       Before synchronization the samples are entries of roll(x, s_i) and of
       e_i; after it, of the aligned signal roll(x, s_i - s_hat_i) and the
       aligned noise roll(e_i, -s_hat_i).
    """
    if sync_method not in DEPENDENCY_METHODS:
        raise ConfigurationError('unknown synchronization method {!r}'.format(sync_method))
    if trials < 1 or n < 3:
        raise ConfigurationError('need at least one trial of at least 3 observations')

    def trial(t):
        signal, noise = _trial_matrices(L, sigma, n, sync_method,
                                        derive_seed(seed, t), partition_size)
        r = pearson_matrix(signal, noise, constant_as_zero=True)
        return r, pearson_pvalue(r, n)

    results = parallel_map(trial, range(trials), workers)
    coefficients = np.array([r for r, _ in results])
    pvalues = np.array([p for _, p in results])
    fraction = float(np.mean(pvalues < alpha))
    return PearsonReport(coefficients, pvalues, fraction, alpha, trials, sync_method)


def autocorrelation(x):
    """R_xx[m] = sum_n x[n] x[(n + m) mod L]."""
    x = np.asarray(x, dtype=float)
    L = x.size
    return np.array([np.dot(x, np.roll(x, -m)) for m in range(L)])


def _delta(L, index):
    pmf = np.zeros(L)
    pmf[index] = 1.0
    return pmf


def shift_pmf_analytic(x, sigma, workers=1):
    """p[m] = integral phi_c(u - R[m]) prod_{l != m} Phi_c(u - R[l]) du with
       sigma_c = sigma ||x||, over R[m] +- 10 sigma_c, then renormalized.

       Returns:
           ShiftPmf
    """
    x = np.asarray(x, dtype=float)
    L = x.size
    if L < 3:
        raise ConfigurationError('shift PMF needs L >= 3')
    if sigma < 0:
        raise ConfigurationError('sigma must be non-negative')
    R = autocorrelation(x)
    parameters = {'L': L, 'sigma': float(sigma)}
    if sigma == 0:
        return ShiftPmf(_delta(L, int(np.argmax(R))), 'analytic', parameters)
    sigma_c = sigma * np.linalg.norm(x)

    def bin_mass(m):
        others = np.delete(R, m)

        def integrand(u):
            z = (u - R[m]) / sigma_c
            log_density = -0.5 * z * z - 0.5 * math.log(2 * math.pi) - math.log(sigma_c)
            return math.exp(log_density + np.sum(log_ndtr((u - others) / sigma_c)))

        value, error = integrate.quad(integrand, R[m] - 10 * sigma_c, R[m] + 10 * sigma_c,
                                      epsabs=QUADRATURE_TOLERANCE, limit=200)
        if error > QUADRATURE_FAILURE:
            raise NumericalError(
                'quadrature failed for shift {} (error {:.3g})'.format(m, error))
        return value

    pmf = np.array(parallel_map(bin_mass, range(L), workers))
    pmf = np.clip(pmf, 0.0, None)
    return ShiftPmf(pmf / pmf.sum(), 'analytic', parameters)


def shift_pmf_empirical(x, sigma, samples, seed, batch=10000):
    """Histogram of template_match_1d(x + e, x) over Monte-Carlo draws."""
    x = np.asarray(x, dtype=float)
    L = x.size
    if samples < 1:
        raise ConfigurationError('at least one sample is needed')
    rng = derive_rng(seed)
    counts = np.zeros(L)
    remaining = samples
    while remaining > 0:
        size = min(batch, remaining)
        noisy = x[None, :] + sigma * rng.standard_normal((size, L))
        counts += np.bincount(template_match_1d(noisy, x), minlength=L)
        remaining -= size
    return ShiftPmf(counts / samples, 'empirical',
                    {'L': L, 'sigma': float(sigma), 'samples': int(samples)})


def pmf_mse(p, q):
    return float(np.mean((np.asarray(p) - np.asarray(q)) ** 2))


def pmf_approximation_error(L_values, sigma, realizations, samples, seed, workers=1):
    """Mean over signal realizations of the MSE between the analytic and
       empirical shift PMFs, for every L.

       Returns:
           list of (L, mse)
    """
    out = []
    for L in L_values:
        errors = []
        for r in range(realizations):
            x = derive_rng(seed, L, r).standard_normal(L)
            analytic = shift_pmf_analytic(x, sigma, workers)
            empirical = shift_pmf_empirical(x, sigma, samples, derive_seed(seed, L, r))
            errors.append(pmf_mse(analytic.pmf, empirical.pmf))
        out.append((int(L), float(np.mean(errors))))
    return out
