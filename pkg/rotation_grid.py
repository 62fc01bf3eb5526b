"""Rotation grid helpers and the probability mass function over grid angles.

Angles are multiples of 2*pi/L. A distribution may cover the whole grid or a
contiguous window of it; bin b of a window refers to grid index
(window_offset + b) mod L.
"""

import numpy as np

from utils import ConfigurationError, DimensionError

PMF_TOLERANCE = 1e-9


def grid_angles(grid_size, offsets=None):
    """Angles in radians for grid offsets (default 0..L-1)."""
    if offsets is None:
        offsets = np.arange(grid_size)
    return 2 * np.pi * np.asarray(offsets, dtype=float) / grid_size


def centered_offsets(bandwidth):
    """Signed grid offsets of a window of width BW centered at zero:
       -floor(BW/2), ..., ceil(BW/2) - 1."""
    start = -(bandwidth // 2)
    return np.arange(start, start + bandwidth)


def signed_offset(index, grid_size):
    """Map grid indices to signed offsets in [-L/2, L/2)."""
    half = grid_size // 2
    return (np.asarray(index) + half) % grid_size - half


def quantize_angle(angle, grid_size):
    """Round angles (radians) half-up to the nearest grid index mod L."""
    x = np.asarray(angle, dtype=float) * grid_size / (2 * np.pi)
    return np.floor(x + 0.5).astype(int) % grid_size


class RotationDistribution:
    def __init__(self, pmf, grid_size, window_offset=0):
        """
        Parameters:
            pmf (array):         non-negative probabilities, one per bin.
            grid_size (int):     L, the number of grid rotations.
            window_offset (int): grid offset of bin 0.

        The pmf is renormalized after validation so it sums to 1 within 1e-12.
        """
        pmf = np.array(pmf, dtype=float)
        if pmf.ndim != 1 or pmf.size == 0:
            raise DimensionError('distribution must be a non-empty vector')
        if pmf.size > grid_size:
            raise DimensionError(
                'window of {} bins exceeds grid of {}'.format(pmf.size, grid_size))
        if np.any(pmf < 0) or not np.all(np.isfinite(pmf)):
            raise ConfigurationError('distribution has negative or non-finite entries')
        total = pmf.sum()
        if abs(total - 1) > PMF_TOLERANCE:
            raise ConfigurationError(
                'distribution sums to {:.12g}, not 1'.format(total))
        self.pmf = pmf / total
        self.grid_size = int(grid_size)
        self.window_offset = int(window_offset)

    @classmethod
    def uniform(cls, grid_size, bandwidth=None):
        bandwidth = grid_size if bandwidth is None else bandwidth
        return cls(np.full(bandwidth, 1.0 / bandwidth), grid_size,
                   centered_offsets(bandwidth)[0])

    @classmethod
    def delta(cls, grid_size, bandwidth=None):
        """All mass on rotation 0, stored on a centered window."""
        bandwidth = grid_size if bandwidth is None else bandwidth
        offsets = centered_offsets(bandwidth)
        pmf = (offsets == 0).astype(float)
        return cls(pmf, grid_size, offsets[0])

    @property
    def width(self):
        return self.pmf.size

    def offsets(self):
        """Signed grid offsets of every bin."""
        return self.window_offset + np.arange(self.width)

    def indices(self):
        """Grid indices in [0, L-1] of every bin."""
        return self.offsets() % self.grid_size

    def full(self):
        """Probability of every grid index 0..L-1."""
        out = np.zeros(self.grid_size)
        np.add.at(out, self.indices(), self.pmf)
        return out

    def restrict(self, bandwidth):
        """Restrict to the centered window of width BW and renormalize.

           A window that carries no mass gives the uniform distribution over
           the window.
        """
        if not 1 <= bandwidth <= self.grid_size:
            raise ConfigurationError('BW must lie in [1, L]')
        offsets = centered_offsets(bandwidth)
        values = self.full()[offsets % self.grid_size]
        total = values.sum()
        if total <= 0:
            values = np.ones(bandwidth)
            total = float(bandwidth)
        return RotationDistribution(values / total, self.grid_size, offsets[0])

    def same_window(self, other):
        return (self.grid_size == other.grid_size and
                self.window_offset == other.window_offset and
                self.width == other.width)

    def centered_mass(self, bandwidth):
        """Mass inside the centered window of width BW."""
        offsets = centered_offsets(min(bandwidth, self.grid_size))
        return float(self.full()[offsets % self.grid_size].sum())

    def __repr__(self):
        return 'RotationDistribution(L={}, width={}, offset={})'.format(
            self.grid_size, self.width, self.window_offset)
