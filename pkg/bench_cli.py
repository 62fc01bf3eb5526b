"""Command-line front end for the benchmark experiments.

    python bench_cli.py generate    --set snr=1/100,1/10
    python bench_cli.py learn-prior --set snr=1/100 --set L=360
    python bench_cli.py run         --method synch-em --set prior_path=out/prior_snr{snr}.csv
    python bench_cli.py sweep       --config experiment.json --plot
    python bench_cli.py analyze     --study pearson

Every command accepts --config (JSON), --set KEY=VALUE, --seed,
--output-dir, --workers, --plot and --verbose. Errors are reported as one
line, 'error [category]: message', with a category-specific exit code.
"""

import json
import math
import os
import sys
from functools import wraps

import click
import numpy as np
import regex as re

import local
from analysis import (dependency_experiment, pmf_approximation_error,
                      shift_pmf_analytic, shift_pmf_empirical)
from containers import (load_or_build_basis, save_dataset, write_coeffs_csv, write_csv,
                        write_signals_csv, write_sync_csv)
from dist_learning import learn_distribution, load_prior, save_prior
from em import EmConfig, exponential_signal_prior, run_em, run_synch_em
from mra_model import (SyntheticImageSpec, coeffs_to_signals, generate_1d, generate_2d,
                       make_synthetic_image, relative_error_1d, relative_error_2d,
                       sigma_for_snr, signals_to_coeffs)
from steerable_basis import expand, spca_expand, spca_reconstruct, spca_train
from synchronization import align, estimate_rotations
from utils import (EXIT_CODES, ConfigurationError, RunManifest, Stopwatch,
                   SynchEmError, derive_rng, derive_seed, parallel_map)

METHODS = ('standard-em', 'synch-em', 'sync-only', 'template-matching',
           'tm-em', 'ppm-em')
STUDIES = ('pearson', 'shift-pmf')
PRIOR_IMAGE_OFFSET = 1000000

METRIC_FIELDS = ['snr', 'sigma', 'method', 'gamma', 'trial', 'seed',
                 'relative_error', 'iterations', 'converged', 'wall_time',
                 'sync_time']
AGGREGATE_FIELDS = ['snr', 'method', 'gamma', 'trials',
                    'relative_error_mean', 'relative_error_std',
                    'iterations_mean', 'iterations_std',
                    'wall_time_mean', 'wall_time_std']
TRACE_FIELDS = ['iteration', 'objective', 'coeff_change', 'elapsed']


# configuration

def _snr_item(item):
    if isinstance(item, (int, float)) and not isinstance(item, bool):
        return float(item)
    match = re.match(r'^\s*([^/\s]+)\s*/\s*([^/\s]+)\s*$', str(item))
    try:
        if match:
            return float(match.group(1)) / float(match.group(2))
        return float(str(item).strip())
    except (ValueError, ZeroDivisionError):
        raise ConfigurationError('bad SNR value {!r}'.format(item))


def parse_snr(value):
    """SNR list from a number, a list, or text such as '1/100,0.1,inf'."""
    if isinstance(value, (list, tuple)):
        return [_snr_item(v) for v in value]
    if isinstance(value, (int, float)) and not isinstance(value, bool):
        return [float(value)]
    items = [v for v in re.split(r'\s*,\s*', str(value).strip().strip('[]')) if v]
    return [_snr_item(v) for v in items]


def parse_override(text):
    """KEY=VALUE; the value is read as JSON when possible, as text otherwise."""
    match = re.match(r'^\s*(\w+)\s*=(.*)$', text)
    if not match:
        raise ConfigurationError('--set expects KEY=VALUE, got {!r}'.format(text))
    key, raw = match.group(1), match.group(2).strip()
    if key == 'snr':
        return key, parse_snr(raw)
    try:
        return key, json.loads(raw)
    except ValueError:
        return key, raw


def snr_label(snr):
    return '{:g}'.format(snr)


class ExperimentConfig:
    def __init__(self, values=None):
        self.values = dict(local.DEFAULTS)
        values = values or {}
        unknown = sorted(set(values) - set(local.DEFAULTS))
        if unknown:
            raise ConfigurationError(
                'unknown configuration keys: {}'.format(', '.join(unknown)))
        self.values.update(values)
        self.values['snr'] = parse_snr(self.values['snr'])
        self.validate()

    @classmethod
    def load(cls, path=None, overrides=(), seed=None):
        """Defaults, then the JSON file (sections one level deep are
           flattened), then --set overrides, then --seed."""
        values = {}
        if path:
            try:
                with open(path) as f:
                    data = json.load(f)
            except OSError as e:
                raise ConfigurationError('cannot read {}: {}'.format(path, e.strerror))
            except ValueError as e:
                raise ConfigurationError('{} is not valid JSON: {}'.format(path, e))
            if not isinstance(data, dict):
                raise ConfigurationError('{} must hold a JSON object'.format(path))
            for key, value in data.items():
                if isinstance(value, dict):
                    values.update(value)
                else:
                    values[key] = value
        for text in overrides:
            key, value = parse_override(text)
            values[key] = value
        if seed is not None:
            values['seed'] = seed
        return cls(values)

    def __getitem__(self, key):
        return self.values[key]

    def validate(self):
        v = self.values
        try:
            checks = [
                (len(v['snr']) > 0, 'SNR list is empty'),
                (all(s > 0 for s in v['snr']), 'SNR values must be positive'),
                (v['model'] in ('1d', '2d'), "model must be '1d' or '2d'"),
                (int(v['L']) >= 2, 'L must be at least 2'),
                (1 <= int(v['BW']) <= int(v['L']), 'BW must satisfy 1 <= BW <= L'),
                (int(v['P']) >= 2, 'P must be at least 2'),
                (int(v['N']) >= 2, 'N must be at least 2'),
                (int(v['trials']) >= 1, 'trials must be at least 1'),
                (int(v['T']) >= 0, 'T must be non-negative'),
                (float(v['tol']) > 0, 'tol must be positive'),
                (float(v['gamma']) >= 0, 'gamma must be non-negative'),
                (all(float(g) >= 0 for g in v['gammas']), 'gammas must be non-negative'),
                (int(v['grid_size']) >= 3, 'grid_size must be at least 3'),
                (set(v['methods']) <= set(METHODS),
                 'methods must be among {}'.format(', '.join(METHODS))),
            ]
        except (TypeError, ValueError, KeyError) as e:
            raise ConfigurationError('invalid configuration value: {}'.format(e))
        for ok, message in checks:
            if not ok:
                raise ConfigurationError(message)

    def snapshot(self):
        return json.loads(json.dumps(self.values, default=str))


# trials

class TrialRunner:
    def __init__(self, config, output_dir, write_traces=False, echo=None):
        self.config = config
        self.output_dir = output_dir
        self.write_traces = write_traces
        self.echo = echo or (lambda message: None)
        self._basis = None
        self._priors = {}

    def basis(self):
        if self._basis is None:
            self._basis = load_or_build_basis(
                os.path.join(self.output_dir, local.BASIS_CACHE),
                int(self.config['grid_size']),
                bandlimit=float(self.config['bandlimit']))
        return self._basis

    def truth_image(self, trial):
        spec = SyntheticImageSpec(int(self.config['blobs']),
                                  seed=derive_seed(self.config['seed'], trial))
        return make_synthetic_image(spec, int(self.config['grid_size']))

    def truth(self, trial):
        image = self.truth_image(trial)
        return image, expand(image, self.basis())

    def image_source_spec(self):
        return {
            'generator': 'gaussian-blobs',
            'blobs': int(self.config['blobs']),
            'grid_size': int(self.config['grid_size']),
            'bandlimit': float(self.config['bandlimit']),
            'seed': int(self.config['seed']),
        }

    def signal_prior(self, angular_index):
        if not self.config['signal_prior']:
            return None
        return exponential_signal_prior(angular_index, float(self.config['signal_prior_A']),
                                        float(self.config['signal_prior_B']))

    def prior(self, snr):
        path = self.config['prior_path']
        if not path:
            return None
        path = str(path).format(snr=snr_label(snr))
        if path not in self._priors:
            self._priors[path] = load_prior(path)
        return self._priors[path]

    def check_prior(self, methods, gammas):
        if 'synch-em' in methods and any(g > 0 for g in gammas) and \
                not self.config['prior_path']:
            raise ConfigurationError('method synch-em with gamma > 0 needs prior_path')

    def em_config(self, bandwidth, gamma, angular_index):
        return EmConfig(int(self.config['L']), bandwidth, gamma,
                        self.signal_prior(angular_index), float(self.config['tol']),
                        int(self.config['T']))

    def estimate(self, method, observations, sigma, gamma, snr, seed):
        """Returns (estimate, iterations, converged, wall_time, sync_time, report,
           sync); report is None for the methods without EM, sync is None for
           standard EM."""
        L = int(self.config['L'])
        P = min(int(self.config['P']), observations.count)
        if method == 'standard-em':
            report = run_em(observations, sigma,
                            self.em_config(L, 0.0, observations.angular_index), seed=seed)
            return report.coeffs, report.iterations, report.converged, \
                report.wall_time, 0.0, report, None
        if method == 'synch-em':
            report = run_synch_em(observations, sigma,
                                  self.em_config(int(self.config['BW']), gamma,
                                                 observations.angular_index),
                                  self.prior(snr), P, seed)
            return report.coeffs, report.iterations, report.converged, \
                report.wall_time, report.sync_time, report, report.sync
        watch = Stopwatch()
        sync_method = {
            'sync-only': 'synchronize-and-match',
            'template-matching': 'template-matching',
            'tm-em': 'template-matching',
            'ppm-em': 'ppm',
        }[method]
        sync = estimate_rotations(sync_method, observations, L, seed, P)
        aligned = align(observations, sync)
        a0 = aligned.with_values(aligned.values.mean(axis=0))
        sync_time = watch.elapsed()
        if method in ('sync-only', 'template-matching'):
            return a0, 0, True, sync_time, sync_time, None, sync
        config = self.em_config(L, 0.0, observations.angular_index)
        report = run_em(aligned, sigma, config, init=(a0, config.uniform_distribution()),
                        seed=seed)
        return report.coeffs, report.iterations, report.converged, \
            watch.elapsed(), sync_time, report, sync

    def run_trial(self, task):
        """task = (snr_index, snr, method, gamma, trial); returns a metrics row."""
        snr_index, snr, method, gamma, trial = task
        seed = derive_seed(self.config['seed'], trial, snr_index)
        N = int(self.config['N'])
        L = int(self.config['L'])
        if self.config['model'] == '1d':
            sigma = 0.0 if math.isinf(snr) else 1.0 / math.sqrt(snr)
            data = generate_1d(L, N, sigma, derive_seed(self.config['seed'], trial))
            observations = signals_to_coeffs(data.signals)
            result = self.estimate(method, observations, sigma, gamma, snr, seed)
            error = relative_error_1d(coeffs_to_signals(result[0], L), data.truth)
        else:
            image, truth = self.truth(trial)
            sigma = sigma_for_snr(image, snr)
            data = generate_2d(truth, N, sigma, L, seed=seed)
            observations = data.coeff_observations
            spca = None
            if self.config['spca']:
                spca = spca_train(observations, sigma ** 2)
                observations = spca_expand(observations, spca)
            result = self.estimate(method, observations, sigma, gamma, snr, seed)
            estimate = result[0]
            if spca is not None:
                estimate = spca_reconstruct(estimate, spca)
            error = relative_error_2d(estimate, truth, L)
        _, iterations, converged, wall_time, sync_time, report, sync = result
        stem = '{}_snr{}_gamma{:g}_trial{}'.format(method, snr_label(snr), gamma, trial)
        if report is not None and self.write_traces:
            write_csv(os.path.join(self.output_dir, 'traces', stem + '.csv'),
                      TRACE_FIELDS, report.trace_rows())
        if sync is not None and self.write_traces:
            write_sync_csv(os.path.join(self.output_dir, 'sync', stem + '.csv'), sync)
        self.echo('{} snr={} gamma={:g} trial={}: error {:.4g}, {} iterations'.format(
            method, snr_label(snr), gamma, trial, error, iterations))
        return {
            'snr': snr, 'sigma': sigma, 'method': method, 'gamma': gamma,
            'trial': trial, 'seed': seed, 'relative_error': error,
            'iterations': iterations, 'converged': int(converged),
            'wall_time': wall_time, 'sync_time': sync_time
        }


def aggregate(rows):
    """Mean and spread per (snr, method, gamma), in order of first appearance."""
    groups = {}
    for row in rows:
        groups.setdefault((row['snr'], row['method'], row['gamma']), []).append(row)
    out = []
    for (snr, method, gamma), members in groups.items():
        errors = np.array([r['relative_error'] for r in members])
        iterations = np.array([r['iterations'] for r in members], dtype=float)
        times = np.array([r['wall_time'] for r in members])
        out.append({
            'snr': snr, 'method': method, 'gamma': gamma, 'trials': len(members),
            'relative_error_mean': errors.mean(), 'relative_error_std': errors.std(),
            'iterations_mean': iterations.mean(), 'iterations_std': iterations.std(),
            'wall_time_mean': times.mean(), 'wall_time_std': times.std()
        })
    return out


# command plumbing

class Session:
    def __init__(self, command, config_path, overrides, seed, output_dir, workers,
                 plot, verbose):
        self.command = command
        self.config = ExperimentConfig.load(config_path, overrides, seed)
        root = os.environ.get('SYNCHEM_OUTPUT_ROOT', local.OUTPUT_ROOT)
        self.output_dir = output_dir or root
        os.makedirs(self.output_dir, exist_ok=True)
        self.workers = max(1, workers)
        self.plot = plot
        self.verbose = verbose
        self.manifest = RunManifest({
            'MANIFEST_DB': os.path.join(self.output_dir, local.MANIFEST_DB)
        })
        self.run_id = self.manifest.start_run(command, self.config.snapshot(),
                                              self.config['seed'])

    def path(self, name):
        return os.path.join(self.output_dir, name)

    def echo(self, message):
        if self.verbose:
            click.echo(message, err=True)


def common_options(command):
    options = [
        click.option('--config', 'config_path', type=click.Path(),
                     help='JSON experiment file.'),
        click.option('--set', 'overrides', multiple=True, metavar='KEY=VALUE',
                     help='Override one configuration key.'),
        click.option('--seed', type=int, help='Base seed.'),
        click.option('--output-dir', type=click.Path(), help='Output directory.'),
        click.option('--workers', type=int, default=1, show_default=True,
                     help='Worker threads.'),
        click.option('--plot', is_flag=True, help='Also write SVG plots.'),
        click.option('--verbose', '-v', is_flag=True, help='Verbose output.'),
    ]
    for option in reversed(options):
        command = option(command)
    return command


def reports_errors(command):
    @wraps(command)
    def wrapper(*args, **kwargs):
        try:
            return command(*args, **kwargs)
        except SynchEmError as e:
            click.echo('error [{}]: {}'.format(e.category, e), err=True)
            sys.exit(EXIT_CODES[e.category])
        except OSError as e:
            click.echo('error [io]: {}'.format(e), err=True)
            sys.exit(EXIT_CODES['io'])
    return wrapper


def _plotting():
    try:
        import plots
    except ImportError as e:
        raise ConfigurationError('--plot needs matplotlib ({})'.format(e))
    return plots


@click.group()
def cli():
    """Synch-EM benchmark commands."""


@cli.command('generate', short_help='Write seeded datasets for every SNR.')
@common_options
@reports_errors
def cmd_generate(config_path, overrides, seed, output_dir, workers, plot, verbose):
    """Write one dataset container per SNR and trial, plus the truth."""
    session = Session('generate', config_path, overrides, seed, output_dir,
                      workers, plot, verbose)
    config = session.config
    runner = TrialRunner(config, session.output_dir, echo=session.echo)
    L = int(config['L'])
    N = int(config['N'])
    written = 0
    for snr_index, snr in enumerate(config['snr']):
        for trial in range(int(config['trials'])):
            name = 'dataset_snr{}_trial{}.mra'.format(snr_label(snr), trial)
            if config['model'] == '1d':
                sigma = 0.0 if math.isinf(snr) else 1.0 / math.sqrt(snr)
                data = generate_1d(L, N, sigma, derive_seed(config['seed'], trial))
                write_signals_csv(session.path('truth_trial{}.csv'.format(trial)), data.truth)
            else:
                image, truth = runner.truth(trial)
                data = generate_2d(truth, N, sigma_for_snr(image, snr), L,
                                   seed=derive_seed(config['seed'], trial, snr_index))
                write_coeffs_csv(session.path('truth_trial{}.csv'.format(trial)), truth)
            save_dataset(session.path(name), data)
            session.echo('wrote {}'.format(name))
            written += 1
    click.echo('wrote {} datasets to {}'.format(written, session.output_dir))


@cli.command('learn-prior', short_help='Learn the rotation-error prior per SNR.')
@common_options
@reports_errors
def cmd_learn_prior(config_path, overrides, seed, output_dir, workers, plot, verbose):
    """Monte-Carlo rotation-error distribution after synchronization,
       written to prior_snr<SNR>.csv."""
    session = Session('learn-prior', config_path, overrides, seed, output_dir,
                      workers, plot, verbose)
    config = session.config
    if config['model'] != '2d':
        raise ConfigurationError('learn-prior works on the 2d model')
    runner = TrialRunner(config, session.output_dir, echo=session.echo)
    reference = runner.truth_image(PRIOR_IMAGE_OFFSET)

    def image_source(r):
        return runner.truth(PRIOR_IMAGE_OFFSET + r)[1]

    runner.basis()
    for snr in config['snr']:
        prior = learn_distribution(
            image_source, sigma_for_snr(reference, snr), int(config['prior_N']),
            int(config['L']), config['prior_sync_method'],
            int(config['prior_repetitions']), int(config['seed']),
            int(config['P']), session.workers, runner.image_source_spec(),
            bool(config['spca']))
        path = session.path('prior_snr{}.csv'.format(snr_label(snr)))
        save_prior(path, prior)
        if session.plot:
            _plotting().plot_prior(path, path[:-4] + '.svg')
        click.echo('wrote {}'.format(path))


def _run_tasks(session, tasks, write_traces):
    runner = TrialRunner(session.config, session.output_dir, write_traces, session.echo)
    runner.check_prior([t[2] for t in tasks], [t[3] for t in tasks])
    if session.config['model'] == '2d':
        runner.basis()
    rows = parallel_map(runner.run_trial, tasks, session.workers)
    for row in rows:
        session.manifest.add_trial(session.run_id, row)
    return rows


@cli.command('run', short_help='Run one method over the SNR list.')
@click.option('--method', type=click.Choice(METHODS), default='synch-em',
              show_default=True)
@common_options
@reports_errors
def cmd_run(method, config_path, overrides, seed, output_dir, workers, plot, verbose):
    """Trials of one method at every SNR; writes metrics.csv and EM traces."""
    session = Session('run', config_path, overrides, seed, output_dir,
                      workers, plot, verbose)
    config = session.config
    gamma = float(config['gamma']) if method == 'synch-em' else 0.0
    tasks = [(i, snr, method, gamma, trial)
             for i, snr in enumerate(config['snr'])
             for trial in range(int(config['trials']))]
    rows = _run_tasks(session, tasks, write_traces=True)
    path = session.path('metrics.csv')
    write_csv(path, METRIC_FIELDS, rows)
    click.echo('wrote {} ({} rows)'.format(path, len(rows)))


@cli.command('sweep', short_help='SNR x method x gamma grid with aggregation.')
@common_options
@reports_errors
def cmd_sweep(config_path, overrides, seed, output_dir, workers, plot, verbose):
    """Every method in 'methods' (and every gamma in 'gammas' for synch-em)
       at every SNR; writes metrics.csv and aggregated.csv."""
    session = Session('sweep', config_path, overrides, seed, output_dir,
                      workers, plot, verbose)
    config = session.config
    tasks = []
    for i, snr in enumerate(config['snr']):
        for method in config['methods']:
            gammas = [float(g) for g in config['gammas']] if method == 'synch-em' else [0.0]
            for gamma in gammas:
                for trial in range(int(config['trials'])):
                    tasks.append((i, snr, method, gamma, trial))
    rows = _run_tasks(session, tasks, write_traces=False)
    write_csv(session.path('metrics.csv'), METRIC_FIELDS, rows)
    aggregated = session.path('aggregated.csv')
    write_csv(aggregated, AGGREGATE_FIELDS, aggregate(rows))
    if session.plot:
        _plotting().plot_sweep(aggregated, session.path('sweep.svg'))
    click.echo('wrote {} ({} rows)'.format(aggregated, len(rows)))


@cli.command('analyze', short_help='Pearson dependency or shift-PMF study.')
@click.option('--study', type=click.Choice(STUDIES), default='pearson',
              show_default=True)
@common_options
@reports_errors
def cmd_analyze(study, config_path, overrides, seed, output_dir, workers, plot, verbose):
    """pearson writes pearson.csv; shift-pmf writes shift_pmf_L<L>.csv for
       one signal per L and pmf_error.csv."""
    session = Session('analyze', config_path, overrides, seed, output_dir,
                      workers, plot, verbose)
    config = session.config
    seed = int(config['seed'])
    if study == 'pearson':
        rows = []
        for method in config['pearson_methods']:
            report = dependency_experiment(
                int(config['pearson_L']), float(config['pearson_sigma']),
                int(config['pearson_N']), int(config['pearson_trials']), method,
                seed, float(config['alpha']), int(config['P']), session.workers)
            session.echo('{}: {:.4f}'.format(method, report.fraction_significant))
            rows.append((method, report.trials, report.alpha, report.fraction_significant))
        path = session.path('pearson.csv')
        write_csv(path, ['sync_method', 'trials', 'alpha', 'fraction_significant'], rows)
        click.echo('wrote {}'.format(path))
        return

    sigma = float(config['pmf_sigma'])
    samples = int(config['pmf_samples'])
    for L in config['pmf_L']:
        x = derive_rng(seed, int(L), 0).standard_normal(int(L))
        analytic = shift_pmf_analytic(x, sigma, session.workers)
        empirical = shift_pmf_empirical(x, sigma, samples, derive_seed(seed, int(L), 0))
        path = session.path('shift_pmf_L{}.csv'.format(int(L)))
        write_csv(path, ['shift', 'analytic', 'empirical'],
                  zip(range(int(L)), analytic.pmf.tolist(), empirical.pmf.tolist()))
        if session.plot:
            _plotting().plot_shift_pmf(path, path[:-4] + '.svg')
    errors = pmf_approximation_error([int(L) for L in config['pmf_L']], sigma,
                                     int(config['pmf_realizations']), samples, seed,
                                     session.workers)
    path = session.path('pmf_error.csv')
    write_csv(path, ['L', 'mse'], errors)
    click.echo('wrote {}'.format(path))


if __name__ == '__main__':
    cli()
