#!/usr/bin/env python
"""Usage:
    check_container.py <container>...
    check_container.py --compare <container_a> <container_b>

Print the header of each MRA1, MRA2 or FBB1 container and check that its
payload reads back completely. With --compare, check that two containers
have the same kind and header fields (the noise level and payload may
differ).
"""

import os, sys

from docopt import docopt

sys.path.insert(0, os.path.join(os.path.dirname(os.path.abspath(__file__)), '..'))

from containers import load_basis, load_dataset, read_header
from utils import EXIT_CODES, ContainerError

SHAPE_FIELDS = ('magic', 'version', 'N', 'M', 'L', 'grid_size', 'npix')


def check(path):
    """Returns the header fields; raises ContainerError if the file is bad."""
    fields = read_header(path)
    if fields['magic'] == 'FBB1':
        load_basis(path)
    else:
        load_dataset(path)
    return fields


if __name__ == '__main__':
    options = docopt(__doc__)

    try:
        if options['--compare']:
            a = check(options['<container_a>'])
            b = check(options['<container_b>'])
            mismatched = [f for f in SHAPE_FIELDS if a.get(f) != b.get(f)]
            if mismatched:
                for f in mismatched:
                    print('{}: {} != {}'.format(f, a.get(f), b.get(f)))
                sys.exit(1)
            print('containers match')
        else:
            for path in options['<container>']:
                fields = check(path)
                print('{}: {}'.format(path, ', '.join(
                    '{}={}'.format(k, v) for k, v in sorted(fields.items()))))
    except ContainerError as e:
        sys.stderr.write('error [io]: {}\n'.format(e))
        sys.exit(EXIT_CODES['io'])
