"""Learned distribution of the rotation error left by synchronization, the
KL rotation prior built on it, and bandwidth selection."""

import csv
import json
import os

import numpy as np
import regex as re

from containers import read_csv
from mra_model import generate_2d
from rotation_grid import RotationDistribution, signed_offset
from steerable_basis import spca_expand, spca_train
from synchronization import align_and_average, estimate_rotations, relative_rotation
from utils import (CODE_VERSION, ConfigurationError, ContainerError, DimensionError,
                   derive_seed, parallel_map, utc_now, warn)

KL_FLOOR = 1e-12


class LearnedPrior:
    def __init__(self, pmf, sigma, n_per_trial, repetitions, sync_method,
                 image_source=None, seed=0):
        """
        Parameters:
            pmf (RotationDistribution): rho_bar on the centered window of width L.
            sigma (float):       noise level the prior was learned at.
            n_per_trial (int):   observations per repetition.
            repetitions (int):   R.
            sync_method (str):   synchronization method name.
            image_source (dict): description of the truth-image sampler.
            seed (int):          base seed.
        """
        self.pmf = pmf
        self.sigma = float(sigma)
        self.n_per_trial = int(n_per_trial)
        self.repetitions = int(repetitions)
        self.sync_method = sync_method
        self.image_source = image_source or {}
        self.seed = int(seed)

    @property
    def grid_size(self):
        return self.pmf.grid_size

    def metadata(self):
        return {
            'L': self.grid_size,
            'sigma': self.sigma,
            'n_per_trial': self.n_per_trial,
            'repetitions': self.repetitions,
            'sync_method': self.sync_method,
            'image_source': json.dumps(self.image_source, sort_keys=True),
            'seed': self.seed,
        }


def _as_distribution(prior):
    return prior.pmf if isinstance(prior, LearnedPrior) else prior


def global_offset(aligned_mean, truth, grid_size):
    """theta_c: the grid rotation taking the aligned average closest to the truth."""
    return relative_rotation(aligned_mean, truth, grid_size)


def error_histogram(sync, rotations, aligned_mean, truth, grid_size):
    """Fractions of centered errors theta_hat_i - theta_i - theta_c per
       signed bin -L/2 .. L/2 - 1."""
    offset = global_offset(aligned_mean, truth, grid_size)
    errors = signed_offset(sync.rotation_indices - rotations - offset, grid_size)
    counts = np.bincount(errors + grid_size // 2, minlength=grid_size)
    return counts / float(errors.size)


def learn_distribution(image_source, sigma, n, grid_size, sync_method,
                       repetitions, seed, partition_size=100, workers=1,
                       source_spec=None, spca=False):
    """Monte-Carlo estimate of the centered rotation error after
       synchronization.

       Parameters:
           image_source (callable): repetition index -> truth SteerableCoeffs.
           sigma (float):       noise level.
           n (int):             observations per repetition.
           grid_size (int):     L.
           sync_method (str):   'synchronize-and-match', 'ppm' or
                                'template-matching'.
           repetitions (int):   R >= 1.
           seed (int):          base seed; repetition r uses (seed, r).
           partition_size (int): P for Synchronize-and-Match.
           workers (int):       repetitions run in parallel.
           source_spec (dict):  recorded with the prior.
           spca (bool):         synchronize the steerable PCA coefficients of
                                every repetition, as Synch-EM runs on them.

       Returns:
           LearnedPrior
    """
    if repetitions < 1:
        raise ConfigurationError('at least one repetition is needed')

    def repetition(r):
        rep_seed = derive_seed(seed, r)
        truth = image_source(r)
        data = generate_2d(truth, n, sigma, grid_size, seed=rep_seed)
        observations = data.coeff_observations
        if spca:
            basis = spca_train(observations, sigma ** 2)
            if basis.M:
                observations = spca_expand(observations, basis)
                truth = spca_expand(truth, basis)
            else:
                warn('prior', 'repetition {}: sPCA keeps no components, '
                              'using the full coefficients'.format(r))
        sync = estimate_rotations(sync_method, observations, grid_size,
                                  rep_seed, partition_size)
        mean = align_and_average(observations, sync)
        return error_histogram(sync, data.rotations, mean, truth, grid_size)

    total = np.zeros(grid_size)
    for histogram in parallel_map(repetition, range(repetitions), workers):
        total += histogram
    pmf = RotationDistribution(total / repetitions, grid_size, -(grid_size // 2))
    spec = dict(source_spec or {}, spca=bool(spca))
    return LearnedPrior(pmf, sigma, n, repetitions, sync_method, spec, seed)


def kl_divergence(p, q):
    """sum p log(p / q) with q clamped at 1e-12 and 0 log 0 = 0."""
    if not p.same_window(q):
        raise DimensionError('KL divergence needs distributions on the same window')
    support = p.pmf > 0
    q_values = np.maximum(q.pmf[support], KL_FLOOR)
    return float(np.sum(p.pmf[support] * np.log(p.pmf[support] / q_values)))


def log_prior(rho, prior, gamma):
    """-gamma KL(rho_bar, rho), rho_bar restricted to the centered window of
       rho. The constant gamma * entropy(rho_bar) is not included."""
    if gamma == 0:
        return 0.0
    reference = _as_distribution(prior).restrict(rho.width)
    return -gamma * kl_divergence(reference, rho)


def select_bandwidth(prior, mass_threshold):
    """Smallest even BW whose centered window holds at least mass_threshold
       of the prior, capped at L."""
    if not 0 < mass_threshold < 1:
        raise ConfigurationError('mass threshold must lie in (0, 1)')
    distribution = _as_distribution(prior)
    L = distribution.grid_size
    for bandwidth in range(2, L + 1, 2):
        if distribution.centered_mass(bandwidth) >= mass_threshold - 1e-12:
            return bandwidth
    return L


def save_prior(path, prior):
    """CSV with '# key: value' metadata lines, then bin_offset,probability."""
    metadata = dict(prior.metadata(), code_version=CODE_VERSION, created=utc_now())
    directory = os.path.dirname(path)
    if directory:
        os.makedirs(directory, exist_ok=True)
    with open(path, 'w', newline='') as f:
        for key in sorted(metadata):
            f.write('# {}: {}\n'.format(key, metadata[key]))
        writer = csv.writer(f)
        writer.writerow(['bin_offset', 'probability'])
        writer.writerows(zip(prior.pmf.offsets().tolist(), prior.pmf.pmf.tolist()))


def load_prior(path):
    try:
        with open(path) as f:
            header = [line for line in f if line.startswith('#')]
    except OSError as e:
        raise ContainerError('{}: {}'.format(path, e.strerror or e))
    metadata = {}
    for line in header:
        match = re.match(r'^#\s*(\w+):\s*(.*?)\s*$', line)
        if match:
            metadata[match.group(1)] = match.group(2)
    rows = read_csv(path)
    if 'L' not in metadata or not rows:
        raise ContainerError('{}: not a rotation prior'.format(path))
    try:
        offsets = np.array([int(r['bin_offset']) for r in rows])
        probabilities = np.array([float(r['probability']) for r in rows])
        grid_size = int(metadata['L'])
        image_source = json.loads(metadata.get('image_source', '{}'))
    except (KeyError, ValueError) as e:
        raise ContainerError('{}: malformed prior ({})'.format(path, e))
    if not np.array_equal(offsets, offsets[0] + np.arange(offsets.size)):
        raise ContainerError('{}: bin offsets must be contiguous'.format(path))
    pmf = RotationDistribution(probabilities, grid_size, offsets[0])
    return LearnedPrior(pmf, float(metadata.get('sigma', 0)),
                        int(metadata.get('n_per_trial', 0)),
                        int(metadata.get('repetitions', 0)),
                        metadata.get('sync_method', ''), image_source,
                        int(metadata.get('seed', 0)))