"""Synthetic multi-reference alignment data.

1-D model: y_i = roll(x, s_i) + e_i, real Gaussian noise of variance sigma^2.
2-D model, in steerable coefficients: v_i = a * exp(-i k theta_i) + e_i with
complex Gaussian noise of total variance sigma^2 per entry (sigma^2 / 2 for
each of the real and imaginary parts). Rotations lie on the L-grid.

Observation i always draws from the generator seeded (seed, i + 1), so any
subset of observations can be regenerated alone.
"""

import math

import numpy as np

from rotation_grid import RotationDistribution, grid_angles
from steerable_basis import SteerableCoeffs, disk_mask
from utils import ConfigurationError, DimensionError, NumericalError, derive_rng


class Dataset1D:
    def __init__(self, signals, truth, shifts, noise_sigma):
        self.signals = np.asarray(signals, dtype=float)
        self.truth = np.asarray(truth, dtype=float)
        self.shifts = np.asarray(shifts, dtype=int)
        self.noise_sigma = float(noise_sigma)
        L = self.truth.size
        if self.signals.ndim != 2 or self.signals.shape[1] != L or \
                self.shifts.shape != (self.signals.shape[0],):
            raise DimensionError('signals, truth and shifts do not agree in size')
        if np.any(self.shifts < 0) or np.any(self.shifts >= L):
            raise DimensionError('shifts must lie in [0, L-1]')

    @property
    def length(self):
        return self.truth.size

    @property
    def n(self):
        return self.signals.shape[0]

    def shifted_truth(self):
        """roll(x, s_i) for every observation, shape (N, L)."""
        idx = (np.arange(self.length)[None, :] - self.shifts[:, None]) % self.length
        return self.truth[idx]

    def noise(self):
        return self.signals - self.shifted_truth()


class Dataset2D:
    def __init__(self, coeff_observations, truth_coeffs, rotations, noise_sigma,
                 rotation_grid_size):
        self.coeff_observations = coeff_observations
        self.truth_coeffs = truth_coeffs
        self.rotations = np.asarray(rotations, dtype=int)
        self.noise_sigma = float(noise_sigma)
        self.rotation_grid_size = int(rotation_grid_size)
        if not coeff_observations.is_stack or \
                self.rotations.shape != (coeff_observations.count,):
            raise DimensionError('one rotation is needed per observation')
        if not coeff_observations.same_indices(truth_coeffs):
            raise DimensionError('observations and truth use different index maps')
        if np.any(self.rotations < 0) or np.any(self.rotations >= self.rotation_grid_size):
            raise DimensionError('rotation indices must lie in [0, L-1]')

    @property
    def n(self):
        return self.coeff_observations.count


class SyntheticImageSpec:
    def __init__(self, number_of_blobs=5, width_range=(0.08, 0.2),
                 amplitude_range=(0.5, 1.0), seed=0):
        """
        Parameters:
            number_of_blobs (int): Gaussian blobs in the image.
            width_range (tuple):   blob standard deviation as a fraction of
                                   the disk radius.
            amplitude_range (tuple): blob peak heights before normalization.
            seed (int):            generator seed.
        """
        if number_of_blobs < 0:
            raise ConfigurationError('number_of_blobs must be non-negative')
        self.number_of_blobs = int(number_of_blobs)
        self.width_range = tuple(width_range)
        self.amplitude_range = tuple(amplitude_range)
        self.seed = int(seed)

    def as_dict(self):
        return {
            'number_of_blobs': self.number_of_blobs,
            'width_range': list(self.width_range),
            'amplitude_range': list(self.amplitude_range),
            'seed': self.seed
        }


def _check_noise(n, sigma):
    if n < 1:
        raise ConfigurationError('at least one observation is needed')
    if sigma < 0:
        raise ConfigurationError('sigma must be non-negative')


def generate_1d(length, n, sigma, seed):
    """
    Parameters:
        length (int): L >= 2.
        n (int):      number of observations.
        sigma (float): noise standard deviation.
        seed (int):   base seed.

    Returns:
        Dataset1D, with x ~ N(0, I_L) and shifts uniform on [0, L-1].
    """
    if length < 2:
        raise ConfigurationError('L must be at least 2')
    _check_noise(n, sigma)
    truth = derive_rng(seed).standard_normal(length)
    signals = np.empty((n, length))
    shifts = np.empty(n, dtype=int)
    for i in range(n):
        rng = derive_rng(seed, i + 1)
        shifts[i] = rng.integers(length)
        signals[i] = np.roll(truth, shifts[i]) + sigma * rng.standard_normal(length)
    return Dataset1D(signals, truth, shifts, sigma)


def generate_2d(truth, n, sigma, grid_size, rotation_distribution=None, seed=0):
    """
    Parameters:
        truth (SteerableCoeffs): a, a single vector.
        n (int):                 number of observations.
        sigma (float):           noise level; each entry has variance sigma^2.
        grid_size (int):         L, the number of grid rotations.
        rotation_distribution (RotationDistribution): default uniform.
        seed (int):              base seed.

    Returns:
        Dataset2D
    """
    _check_noise(n, sigma)
    if truth.is_stack:
        raise DimensionError('truth must be a single coefficient vector')
    if rotation_distribution is None:
        rotation_distribution = RotationDistribution.uniform(grid_size)
    if rotation_distribution.grid_size != grid_size:
        raise ConfigurationError('rotation distribution is on a different grid')
    pmf = rotation_distribution.full()
    values = np.empty((n, truth.M), dtype=complex)
    rotations = np.empty(n, dtype=int)
    scale = sigma / math.sqrt(2)
    for i in range(n):
        rng = derive_rng(seed, i + 1)
        rotations[i] = rng.choice(grid_size, p=pmf)
        noise = rng.standard_normal((2, truth.M))
        phase = np.exp(-1j * truth.angular_index * grid_angles(grid_size, rotations[i]))
        values[i] = truth.values * phase + scale * (noise[0] + 1j * noise[1])
    return Dataset2D(truth.with_values(values), truth, rotations, sigma, grid_size)


def snr(truth_image, sigma):
    """||I||_F^2 / (L_px^2 sigma^2); math.inf when sigma is 0."""
    if sigma < 0:
        raise ConfigurationError('sigma must be non-negative')
    if sigma == 0:
        return math.inf
    image = np.asarray(truth_image, dtype=float)
    return float(np.sum(image ** 2) / (image.shape[0] ** 2 * sigma ** 2))


def sigma_for_snr(truth_image, target_snr):
    """Noise level giving the requested SNR for this image."""
    if target_snr <= 0:
        raise ConfigurationError('SNR must be positive')
    if math.isinf(target_snr):
        return 0.0
    image = np.asarray(truth_image, dtype=float)
    return math.sqrt(np.sum(image ** 2) / (image.shape[0] ** 2 * target_snr))


def relative_error_2d(estimate, truth, grid_size):
    """min over grid rotations theta of
       ||rotate_coeffs(estimate, theta) - truth|| / ||truth||,
       norms taken in the full representation (pixel Frobenius norm)."""
    if not estimate.same_indices(truth):
        raise DimensionError('estimate and truth use different index maps')
    weights = truth.weights()
    truth_norm = math.sqrt(np.sum(weights * np.abs(truth.values) ** 2))
    if truth_norm == 0:
        raise NumericalError('relative error is undefined for a zero truth')
    angles = grid_angles(grid_size)
    rotated = estimate.values[None, :] * \
        np.exp(-1j * np.outer(angles, truth.angular_index))
    distances = np.sum(weights * np.abs(rotated - truth.values) ** 2, axis=1)
    return float(math.sqrt(max(distances.min(), 0.0)) / truth_norm)


def relative_error_1d(estimate, truth):
    """min over cyclic shifts s of ||roll(estimate, s) - truth|| / ||truth||."""
    estimate = np.asarray(estimate, dtype=float)
    truth = np.asarray(truth, dtype=float)
    if estimate.shape != truth.shape or truth.ndim != 1:
        raise DimensionError('estimate and truth must be vectors of equal length')
    truth_norm = np.linalg.norm(truth)
    if truth_norm == 0:
        raise NumericalError('relative error is undefined for a zero truth')
    L = truth.size
    shifted = estimate[(np.arange(L)[None, :] - np.arange(L)[:, None]) % L]
    return float(np.linalg.norm(shifted - truth, axis=1).min() / truth_norm)


def make_synthetic_image(spec, grid_size, disk_radius=None, target_norm=None):
    """Sum of Gaussian blobs centered inside 0.6 c, zeroed outside the disk
       and scaled to Frobenius norm target_norm (default grid_size, so that
       SNR = 1 / sigma^2).

       Parameters:
           spec (SyntheticImageSpec)
           grid_size (int):     pixels per side.
           disk_radius (float): c, default (grid_size - 1) / 2.
           target_norm (float): Frobenius norm of the result.

       Returns:
           numpy array (grid_size, grid_size)
    """
    c = (grid_size - 1) / 2.0 if disk_radius is None else float(disk_radius)
    target_norm = float(grid_size) if target_norm is None else float(target_norm)
    rng = derive_rng(spec.seed)
    center = (grid_size - 1) / 2.0
    rows, cols = np.mgrid[0:grid_size, 0:grid_size] - center
    image = np.zeros((grid_size, grid_size))
    for _ in range(spec.number_of_blobs):
        radius = 0.6 * c * math.sqrt(rng.uniform())
        angle = rng.uniform(0, 2 * np.pi)
        width = rng.uniform(*spec.width_range) * c
        amplitude = rng.uniform(*spec.amplitude_range)
        dx = cols - radius * math.cos(angle)
        dy = rows - radius * math.sin(angle)
        image += amplitude * np.exp(-(dx ** 2 + dy ** 2) / (2 * width ** 2))
    image[~disk_mask(grid_size, c)] = 0.0
    norm = np.linalg.norm(image)
    if norm > 0:
        image *= target_norm / norm
    return image


def signals_to_coeffs(signals):
    """Steerable coefficients of 1-D signals: rfft(y) / sqrt(L).

       A cyclic shift by s becomes rotate_coeffs by 2 pi s / L, so the 2-D
       synchronization code runs on 1-D data unchanged. For even L the
       Nyquist bin is scaled by 1/sqrt(2) so that the weighted coefficient
       norm equals the signal norm.
    """
    signals = np.asarray(signals, dtype=float)
    L = signals.shape[-1]
    values = np.fft.rfft(signals, axis=-1) / math.sqrt(L)
    if L % 2 == 0:
        values[..., -1] /= math.sqrt(2)
    angular = np.arange(values.shape[-1])
    return SteerableCoeffs(values, angular, np.zeros_like(angular))


def coeffs_to_signals(coeffs, length):
    """Inverse of signals_to_coeffs."""
    values = coeffs.values * math.sqrt(length)
    if length % 2 == 0:
        values = values.copy()
        values[..., -1] *= math.sqrt(2)
    return np.fft.irfft(values, n=length, axis=-1)