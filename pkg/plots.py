"""SVG figures for benchmark outputs. Each function reads a CSV written by
bench_cli and writes one figure; matplotlib is optional and loaded on use."""

import os

import numpy as np

from containers import read_csv
from utils import ConfigurationError


def _pyplot():
    try:
        import matplotlib
        matplotlib.use('Agg')
        import matplotlib.pyplot as plt
    except ImportError as e:
        raise ConfigurationError('plotting needs matplotlib ({})'.format(e))
    return plt


def _save(figure, plt, path):
    directory = os.path.dirname(path)
    if directory:
        os.makedirs(directory, exist_ok=True)
    figure.tight_layout()
    figure.savefig(path, format='svg')
    plt.close(figure)


def plot_sweep(aggregated_path, path):
    """Relative error, iterations and wall time against SNR, one line per
       method and gamma."""
    plt = _pyplot()
    rows = read_csv(aggregated_path)
    series = {}
    for row in rows:
        label = row['method']
        if row['method'] == 'synch-em':
            label = '{} (gamma={:g})'.format(label, float(row['gamma']))
        series.setdefault(label, []).append(row)

    figure, axes = plt.subplots(1, 3, figsize=(15, 4.5))
    panels = [('relative_error', 'relative error', True),
              ('iterations', 'iterations', False),
              ('wall_time', 'wall time (s)', True)]
    for axis, (field, title, logy) in zip(axes, panels):
        for label, members in series.items():
            members = sorted(members, key=lambda r: float(r['snr']))
            snr = np.array([float(r['snr']) for r in members])
            mean = np.array([float(r[field + '_mean']) for r in members])
            std = np.array([float(r[field + '_std']) for r in members])
            axis.errorbar(snr, mean, yerr=std, marker='o', capsize=3, label=label)
        axis.set_xscale('log')
        if logy:
            axis.set_yscale('log')
        axis.set_xlabel('SNR')
        axis.set_title(title)
    axes[0].legend(fontsize='small')
    _save(figure, plt, path)


def plot_prior(prior_path, path):
    plt = _pyplot()
    rows = read_csv(prior_path)
    offsets = [int(r['bin_offset']) for r in rows]
    probabilities = [float(r['probability']) for r in rows]
    figure, axis = plt.subplots(figsize=(7, 4))
    axis.bar(offsets, probabilities, width=1.0)
    axis.set_xlabel('rotation error (grid steps)')
    axis.set_ylabel('probability')
    _save(figure, plt, path)


def plot_shift_pmf(pmf_path, path):
    """Empirical histogram as bars, analytic approximation as a line."""
    plt = _pyplot()
    rows = read_csv(pmf_path)
    shifts = [int(r['shift']) for r in rows]
    figure, axis = plt.subplots(figsize=(7, 4))
    axis.bar(shifts, [float(r['empirical']) for r in rows], width=1.0, alpha=0.5,
             label='empirical')
    axis.plot(shifts, [float(r['analytic']) for r in rows], color='black',
              marker='.', label='analytic')
    axis.set_xlabel('shift')
    axis.set_ylabel('probability')
    axis.legend()
    _save(figure, plt, path)
