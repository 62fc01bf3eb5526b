# Default settings for the benchmark commands. Experiment files (JSON) and
# --set KEY=VALUE override DEFAULTS key by key; SYNCHEM_OUTPUT_ROOT overrides
# OUTPUT_ROOT.

OUTPUT_ROOT = 'output'
MANIFEST_DB = 'manifest.db'
BASIS_CACHE = 'basis.fbb'

DEFAULTS = {
    # data model: '2d' (steerable coefficients of synthetic images) or '1d'
    'model': '2d',
    'N': 1000,
    'snr': [1 / 100, 1 / 10, 1.0],
    'trials': 10,
    'seed': 0,

    # rotation grid, EM and Synchronize-and-Match
    'L': 360,
    'BW': 36,
    'gamma': 100.0,
    'gammas': [100.0],
    'tol': 1e-5,
    'T': 1000,
    'P': 100,
    'methods': ['standard-em', 'synch-em', 'sync-only'],

    # signal prior Gamma_a = diag((A exp(-k / B))^2)
    'signal_prior': False,
    'signal_prior_A': 4.0,
    'signal_prior_B': 8.0,

    # learned rotation prior; prior_path may hold a {snr} placeholder
    'prior_path': None,
    'prior_N': 500,
    'prior_repetitions': 10,
    'prior_sync_method': 'synchronize-and-match',

    # images and basis
    'grid_size': 33,
    'bandlimit': 1.0,
    'blobs': 5,
    'spca': False,

    # analysis studies
    'alpha': 0.05,
    'pearson_L': 21,
    'pearson_sigma': 2.0,
    'pearson_N': 1000,
    'pearson_trials': 20,
    'pearson_methods': ['none', 'ppm', 'synchronize-and-match'],
    'pmf_L': [11, 21, 31, 41],
    'pmf_sigma': 3.0,
    'pmf_samples': 100000,
    'pmf_realizations': 10,
}
