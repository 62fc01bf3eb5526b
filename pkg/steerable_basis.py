"""Fourier-Bessel basis on a disk, steerable rotations and steerable PCA.

Only angular frequencies k >= 0 are stored; a real image is
    I = sum_{k=0} a_{0,q} u^{0,q} + sum_{k>0} 2 Re(a_{k,q} u^{k,q}),
so norms and inner products of stored vectors count k > 0 entries twice
when they stand for pixel-domain quantities (see coefficient_weights).
"""

import numpy as np
from scipy import linalg, special
from scipy.optimize import brentq

from utils import ConfigurationError, DimensionError, NumericalError

ROOT_TOLERANCE = 1e-12
PINV_TOLERANCE = 1e-8


def coefficient_weights(angular_index):
    """Multiplicity of each stored entry in the full (+k, -k) representation."""
    return np.where(np.asarray(angular_index) == 0, 1.0, 2.0)


class SteerableCoeffs:
    def __init__(self, values, angular_index, radial_index):
        """
        Parameters:
            values (array):        complex, shape (M,) or a stack (N, M).
            angular_index (array): k for every entry, k >= 0.
            radial_index (array):  q for every entry.
        """
        self.values = np.asarray(values, dtype=complex)
        self.angular_index = np.asarray(angular_index, dtype=int)
        self.radial_index = np.asarray(radial_index, dtype=int)
        if self.angular_index.ndim != 1 or \
                self.radial_index.shape != self.angular_index.shape:
            raise DimensionError('index vectors must be 1-D and of equal length')
        if self.values.ndim not in (1, 2) or \
                self.values.shape[-1] != self.angular_index.size:
            raise DimensionError(
                'values of shape {} do not match {} index entries'.format(
                    self.values.shape, self.angular_index.size))
        if np.any(self.angular_index < 0):
            raise DimensionError('only k >= 0 coefficients are stored')

    @property
    def M(self):
        return self.angular_index.size

    @property
    def is_stack(self):
        return self.values.ndim == 2

    @property
    def count(self):
        """Number of vectors held (1 for a single vector)."""
        return self.values.shape[0] if self.is_stack else 1

    def __getitem__(self, i):
        if not self.is_stack:
            raise TypeError('a single coefficient vector cannot be indexed')
        return self.with_values(self.values[i])

    def with_values(self, values):
        return SteerableCoeffs(values, self.angular_index, self.radial_index)

    def same_indices(self, other):
        return np.array_equal(self.angular_index, other.angular_index) and \
            np.array_equal(self.radial_index, other.radial_index)

    def weights(self):
        return coefficient_weights(self.angular_index)

    def norm(self):
        """Norm of the represented real image (Frobenius norm in pixels for
           an orthonormal basis)."""
        return np.sqrt(np.sum(self.weights() * np.abs(self.values) ** 2, axis=-1))

    def copy(self):
        return self.with_values(self.values.copy())

    def __repr__(self):
        return 'SteerableCoeffs(M={}, count={})'.format(self.M, self.count)


def rotate_coeffs(coeffs, angle):
    """Rotate counter-clockwise by angle (radians): entry j is multiplied by
       exp(-i k[j] angle).

       Parameters:
           coeffs (SteerableCoeffs): a vector or a stack.
           angle (float or array):   one angle, or one per stacked vector.

       Returns:
           SteerableCoeffs
    """
    angle = np.asarray(angle, dtype=float)
    if angle.ndim == 1:
        angle = angle[:, None]
    return coeffs.with_values(
        coeffs.values * np.exp(-1j * coeffs.angular_index * angle))


# Bessel roots

def _bessel_root(k, q, lo, hi):
    try:
        return brentq(lambda x: special.jv(k, x), lo, hi,
                      xtol=ROOT_TOLERANCE, maxiter=500)
    except (ValueError, RuntimeError) as e:
        raise NumericalError(
            'Bessel root search failed for (k={}, q={}): {}'.format(k, q, e))


def _next_root_after(k, q, start):
    """First zero of J_k above start. Zeros of J_k are more than 2 apart,
       so unit steps cannot skip one."""
    lo = start
    f_lo = special.jv(k, lo)
    for _ in range(64):
        hi = lo + 1.0
        f_hi = special.jv(k, hi)
        if f_lo == 0:
            return lo
        if np.sign(f_lo) != np.sign(f_hi):
            return _bessel_root(k, q, lo, hi)
        lo, f_lo = hi, f_hi
    raise NumericalError(
        'Bessel root search failed for (k={}, q={}): no sign change'.format(k, q))


def bessel_roots(limit):
    """All roots R_{k,q} <= limit of J_k, k = 0, 1, ...

       Zeros of J_0 are bracketed by ((q - 1/2) pi, q pi); zeros of J_{k+1}
       by the interlacing j_{k,q} < j_{k+1,q} < j_{k,q+1}.

       Parameters:
           limit (float): largest root to return.

       Returns:
           list: (k, q, root) tuples ordered by k then q, q starting at 1.
    """
    order = []
    q = 1
    while True:
        r = _bessel_root(0, q, (q - 0.5) * np.pi, q * np.pi)
        order.append(r)
        if r > limit:
            break
        q += 1

    table = []
    k = 0
    while order[0] <= limit:
        table.extend((k, i + 1, r) for i, r in enumerate(order) if r <= limit)
        following = []
        for i in range(len(order) - 1):
            r = _bessel_root(k + 1, i + 1, order[i], order[i + 1])
            following.append(r)
            if r > limit:
                break
        if following[-1] <= limit:
            following.append(_next_root_after(
                k + 1, len(following) + 1, order[len(following)]))
        order = following
        k += 1
    return table


class FourierBesselBasis:
    def __init__(self, grid_size, disk_radius, bandlimit, angular_index,
                 radial_index, bessel_roots, normalizers, sample_matrix):
        """Use build_basis (or containers.load_basis) rather than calling
           this directly. Derived quantities (disk mask, pseudo-inverse) are
           recomputed here from the stored sample matrix."""
        self.grid_size = int(grid_size)
        self.disk_radius = float(disk_radius)
        self.bandlimit = float(bandlimit)
        self.angular_index = np.asarray(angular_index, dtype=int)
        self.radial_index = np.asarray(radial_index, dtype=int)
        self.bessel_roots = np.asarray(bessel_roots, dtype=float)
        self.normalizers = np.asarray(normalizers, dtype=float)
        self.sample_matrix = np.asarray(sample_matrix, dtype=complex)
        self.mask = disk_mask(self.grid_size, self.disk_radius)
        if self.sample_matrix.shape != (int(self.mask.sum()), self.angular_index.size):
            raise DimensionError('sample matrix does not match the disk and index maps')
        self._columns = {
            (k, q): j for j, (k, q) in
            enumerate(zip(self.angular_index, self.radial_index))
        }
        if len(self._columns) != self.angular_index.size:
            raise DimensionError('(k, q) pairs of a basis must be unique')
        self.pseudo_inverse = self._pseudo_inverse()

    @property
    def M(self):
        return self.angular_index.size

    def column_index(self, k, q):
        try:
            return self._columns[(int(k), int(q))]
        except KeyError:
            raise DimensionError('basis has no column (k={}, q={})'.format(k, q))

    def real_design(self):
        """Real least-squares design matrix: u for k = 0, and 2 Re(u),
           -2 Im(u) for k > 0, matching the k >= 0 image synthesis."""
        parts = []
        for j, k in enumerate(self.angular_index):
            u = self.sample_matrix[:, j]
            if k == 0:
                parts.append(u.real[:, None])
            else:
                parts.append(np.stack((2 * u.real, -2 * u.imag), axis=1))
        return np.hstack(parts)

    def _pseudo_inverse(self):
        design = self.real_design()
        pinv = np.linalg.pinv(design)
        residual = np.abs(pinv @ design - np.eye(design.shape[1])).max()
        if residual > PINV_TOLERANCE:
            raise NumericalError(
                'basis pseudo-inverse is ill-conditioned (residual {:.3g})'.format(residual))
        rows = []
        position = 0
        for k in self.angular_index:
            if k == 0:
                rows.append(pinv[position].astype(complex))
                position += 1
            else:
                rows.append(pinv[position] + 1j * pinv[position + 1])
                position += 2
        return np.array(rows)

    def __repr__(self):
        return 'FourierBesselBasis(grid_size={}, c={}, M={})'.format(
            self.grid_size, self.disk_radius, self.M)


def pixel_polar(grid_size):
    """Polar coordinates of pixel centers, origin at the grid center,
       x along columns and y along rows."""
    center = (grid_size - 1) / 2.0
    y, x = np.mgrid[0:grid_size, 0:grid_size] - center
    return np.hypot(x, y), np.arctan2(y, x)


def disk_mask(grid_size, disk_radius):
    r, _ = pixel_polar(grid_size)
    return r <= disk_radius + 1e-9


def build_basis(grid_size, disk_radius=None, bandlimit=1.0, normalize=True):
    """Sample the Fourier-Bessel functions
           u^{k,q}(r, theta) = N_{k,q} J_k(R_{k,q} r / c) e^{i k theta},
           N_{k,q} = 1 / (c sqrt(pi) |J_{k+1}(R_{k,q})|),
       at in-disk pixel centers, for every (k, q) with R_{k,q} <= bandlimit * pi * c.

       Parameters:
           grid_size (int):     pixels per side, at least 3.
           disk_radius (float): c in pixels, default (grid_size - 1) / 2.
           bandlimit (float):   fraction of the sampling limit pi * c.
           normalize (bool):    orthonormalize the sampled radial functions
                                within every angular block. Mixing radial
                                functions of one k keeps the basis steerable.

       Returns:
           FourierBesselBasis
    """
    if grid_size < 3:
        raise ConfigurationError('grid_size must be at least 3')
    max_radius = (grid_size - 1) / 2.0
    c = max_radius if disk_radius is None else float(disk_radius)
    if not 0 < c <= max_radius:
        raise ConfigurationError(
            'disk radius {} outside (0, {}]'.format(c, max_radius))
    if not 0 < bandlimit <= 1:
        raise ConfigurationError('bandlimit must lie in (0, 1]')

    table = bessel_roots(bandlimit * np.pi * c)
    if not table:
        raise ConfigurationError('band limit admits no basis functions')
    k = np.array([t[0] for t in table])
    q = np.array([t[1] for t in table])
    roots = np.array([t[2] for t in table])
    normalizers = 1.0 / (c * np.sqrt(np.pi) * np.abs(special.jv(k + 1, roots)))

    r, theta = pixel_polar(grid_size)
    mask = disk_mask(grid_size, c)
    r_in = r[mask]
    theta_in = theta[mask]
    radial = special.jv(k[None, :], roots[None, :] * r_in[:, None] / c) * normalizers

    if normalize:
        for order in np.unique(k):
            idx = np.flatnonzero(k == order)
            Q, R = np.linalg.qr(radial[:, idx])
            radial[:, idx] = Q * np.sign(np.diag(R))

    sample_matrix = radial * np.exp(1j * k[None, :] * theta_in[:, None])
    return FourierBesselBasis(grid_size, c, bandlimit, k, q, roots,
                              normalizers, sample_matrix)


def _check_image(image, basis):
    image = np.asarray(image, dtype=float)
    if image.shape[-2:] != (basis.grid_size, basis.grid_size):
        raise DimensionError('image of shape {} does not match a {}x{} basis'.format(
            image.shape, basis.grid_size, basis.grid_size))
    return image


def expand(image, basis):
    """Least-squares Fourier-Bessel coefficients of one image."""
    image = _check_image(image, basis)
    if image.ndim != 2:
        raise DimensionError('expand takes one image; use expand_many for stacks')
    values = basis.pseudo_inverse @ image[basis.mask]
    values[basis.angular_index == 0] = values[basis.angular_index == 0].real
    return SteerableCoeffs(values, basis.angular_index, basis.radial_index)


def expand_many(images, basis):
    """Expand a stack of images (N, L, L) with one matrix product."""
    images = _check_image(images, basis)
    if images.ndim != 3:
        raise DimensionError('expand_many takes a stack of images')
    values = images[:, basis.mask] @ basis.pseudo_inverse.T
    values[:, basis.angular_index == 0] = values[:, basis.angular_index == 0].real
    return SteerableCoeffs(values, basis.angular_index, basis.radial_index)


def reconstruct(coeffs, basis):
    """Real image from coefficients whose (k, q) pairs are basis columns.
       Pixels outside the disk are zero."""
    columns = [basis.column_index(k, q)
               for k, q in zip(coeffs.angular_index, coeffs.radial_index)]
    synthesis = basis.sample_matrix[:, columns]
    weighted = coeffs.values * coeffs.weights()
    pixels = (synthesis @ weighted.T).real.T
    if coeffs.is_stack:
        out = np.zeros((coeffs.count, basis.grid_size, basis.grid_size))
        out[:, basis.mask] = pixels
    else:
        out = np.zeros((basis.grid_size, basis.grid_size))
        out[basis.mask] = pixels
    return out


# steerable PCA

class SpcaBasis:
    def __init__(self, angular_index, radial_index, components, eigenvalues,
                 mean, noise_variance):
        """
        Parameters:
            angular_index, radial_index (array): index maps of the input
                coefficients the basis was trained on.
            components (dict):  k -> (d_k, r_k) matrix with orthonormal columns.
            eigenvalues (dict): k -> retained eigenvalues, descending.
            mean (array):       sample mean of the training coefficients.
            noise_variance (float): sigma^2 used for truncation.
        """
        self.angular_index = np.asarray(angular_index, dtype=int)
        self.radial_index = np.asarray(radial_index, dtype=int)
        self.components = components
        self.eigenvalues = eigenvalues
        self.mean = mean
        self.noise_variance = float(noise_variance)
        self.blocks = {k: np.flatnonzero(self.angular_index == k)
                       for k in np.unique(self.angular_index)}
        out_k = []
        out_q = []
        for k in sorted(self.components):
            r = self.components[k].shape[1]
            out_k.extend([k] * r)
            out_q.extend(range(r))
        self.output_angular_index = np.array(out_k, dtype=int)
        self.output_radial_index = np.array(out_q, dtype=int)

    @property
    def M(self):
        return self.output_angular_index.size

    def retained_counts(self):
        return {int(k): int(self.components.get(k, np.zeros((0, 0))).shape[1])
                for k in self.blocks}


def spca_train(observations, noise_variance, rank_tolerance=1e-10):
    """Steerable PCA: eigen-decompose the second-moment matrix of every
       angular block and keep eigenvalues above the Marchenko-Pastur edge
       noise_variance * (1 + sqrt(d_k / N))^2.

       The second moment is not centered: the rotation-invariant mean lives
       in the k = 0 block and is kept as a component there.

       Parameters:
           observations (SteerableCoeffs): stack of N >= 2 vectors.
           noise_variance (float):         sigma^2 per coefficient.
           rank_tolerance (float):         eigenvalues below this fraction of
                                           the block's largest are treated as 0.

       Returns:
           SpcaBasis
    """
    if not observations.is_stack or observations.count < 2:
        raise ConfigurationError('sPCA needs at least two observations')
    if noise_variance < 0:
        raise ConfigurationError('noise variance must be non-negative')
    X = observations.values
    n = X.shape[0]
    components = {}
    eigenvalues = {}
    for k in np.unique(observations.angular_index):
        idx = np.flatnonzero(observations.angular_index == k)
        block = X[:, idx]
        second_moment = block.conj().T @ block / n
        evals, evecs = linalg.eigh(second_moment)
        evals = evals[::-1]
        evecs = evecs[:, ::-1]
        edge = noise_variance * (1 + np.sqrt(idx.size / n)) ** 2
        floor = rank_tolerance * max(evals[0], 0.0)
        keep = evals > max(edge, floor)
        if np.any(keep):
            components[int(k)] = evecs[:, keep]
            eigenvalues[int(k)] = evals[keep]
    return SpcaBasis(observations.angular_index, observations.radial_index,
                     components, eigenvalues, X.mean(axis=0), noise_variance)


def _check_spca(coeffs, spca):
    if spca.M == 0:
        raise ConfigurationError('sPCA basis is untrained or retains no components')
    if not (np.array_equal(coeffs.angular_index, spca.angular_index) and
            np.array_equal(coeffs.radial_index, spca.radial_index)):
        raise DimensionError('coefficients do not match the sPCA training index maps')


def spca_expand(coeffs, spca):
    """Project Fourier-Bessel coefficients onto the retained components."""
    _check_spca(coeffs, spca)
    parts = []
    for k in sorted(spca.components):
        parts.append(coeffs.values[..., spca.blocks[k]] @ spca.components[k].conj())
    return SteerableCoeffs(np.concatenate(parts, axis=-1),
                           spca.output_angular_index, spca.output_radial_index)


def spca_reconstruct(coeffs, spca):
    """Map sPCA coefficients back to the Fourier-Bessel coefficients."""
    if spca.M == 0:
        raise ConfigurationError('sPCA basis is untrained or retains no components')
    if not np.array_equal(coeffs.angular_index, spca.output_angular_index):
        raise DimensionError('coefficients were not produced by this sPCA basis')
    shape = coeffs.values.shape[:-1] + (spca.angular_index.size,)
    out = np.zeros(shape, dtype=complex)
    position = 0
    for k in sorted(spca.components):
        U = spca.components[k]
        r = U.shape[1]
        out[..., spca.blocks[k]] = coeffs.values[..., position:position + r] @ U.T
        position += r
    return SteerableCoeffs(out, spca.angular_index, spca.radial_index)
