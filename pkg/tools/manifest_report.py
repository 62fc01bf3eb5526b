#!/usr/bin/env python
"""Usage:
    manifest_report.py <manifest_db>
    manifest_report.py <manifest_db> --run <run_id> [--config]

List the runs recorded in a manifest, or the trials of one run.
With --config, print the resolved configuration the run was started with.
"""

import json, os, sys

from docopt import docopt

sys.path.insert(0, os.path.join(os.path.dirname(os.path.abspath(__file__)), '..'))

from utils import RunManifest

if __name__ == '__main__':
    options = docopt(__doc__)

    if not os.path.exists(options['<manifest_db>']):
        sys.stderr.write('error [io]: no manifest at {}\n'.format(options['<manifest_db>']))
        sys.exit(5)

    manifest = RunManifest({'MANIFEST_DB': options['<manifest_db>']})

    if not options['--run']:
        for run_id, command, code_version, seed, created in manifest.get_runs():
            print('{}\t{}\t{}\tseed={}\t{}'.format(run_id, command, code_version,
                                                   seed, created))
        sys.exit(0)

    run_id = int(options['<run_id>'])
    if options['--config']:
        try:
            print(json.dumps(manifest.get_config(run_id), indent=2, sort_keys=True))
        except KeyError:
            sys.stderr.write('error [config]: no run {}\n'.format(run_id))
            sys.exit(2)
        sys.exit(0)

    print('trial\tseed\tmethod\tsnr\tgamma\trelative_error\titerations\twall_time')
    for row in manifest.get_trials(run_id):
        print('\t'.join(str(v) for v in row))
