"""Binary containers and CSV files.

All binary payloads are little-endian float64; complex arrays are stored
with real and imaginary parts interleaved. Headers:

    MRA1  magic, version u32, N u32, L u32, sigma f64
          truth (L), shifts (N), signals (N*L)
    MRA2  magic, version u32, N u32, M u32, L u32, sigma f64
          angular index (M), radial index (M), truth (2M),
          rotations (N), observations (N*2M)
    FBB1  magic, version u32, grid_size u32, M u32, npix u32, normalized u32,
          c f64, bandlimit f64
          angular index (M), radial index (M), normalizers (M),
          Bessel roots (M), sample matrix (npix*2M)
"""

import csv
import os
import struct

import numpy as np

from mra_model import Dataset1D, Dataset2D
from steerable_basis import FourierBesselBasis, SteerableCoeffs, build_basis
from utils import ContainerError

VERSION = 1

HEADERS = {
    b'MRA1': struct.Struct('<4sIIId'),
    b'MRA2': struct.Struct('<4sIIIId'),
    b'FBB1': struct.Struct('<4sIIIIIdd'),
}

FIELDS = {
    b'MRA1': ('magic', 'version', 'N', 'L', 'sigma'),
    b'MRA2': ('magic', 'version', 'N', 'M', 'L', 'sigma'),
    b'FBB1': ('magic', 'version', 'grid_size', 'M', 'npix', 'normalized',
              'disk_radius', 'bandlimit'),
}


def _real(values):
    return np.ascontiguousarray(values, dtype='<f8').tobytes()


def _complex(values):
    return np.ascontiguousarray(values, dtype=np.complex128).view('<f8').tobytes()


class _Reader:
    def __init__(self, payload, path):
        self.payload = payload
        self.path = path
        self.position = 0

    def real(self, count):
        end = self.position + 8 * count
        if end > len(self.payload):
            raise ContainerError('{}: truncated payload'.format(self.path))
        out = np.frombuffer(self.payload[self.position:end], dtype='<f8').astype(float)
        self.position = end
        return out

    def complex(self, count):
        return self.real(2 * count).view(np.complex128)

    def finish(self):
        if self.position != len(self.payload):
            raise ContainerError('{}: trailing bytes after payload'.format(self.path))


def _open(path, expected=None):
    try:
        with open(path, 'rb') as f:
            data = f.read()
    except OSError as e:
        raise ContainerError('{}: {}'.format(path, e.strerror or e))
    magic = data[:4]
    if magic not in HEADERS or (expected is not None and magic not in expected):
        raise ContainerError('{}: unexpected magic {!r}'.format(path, magic))
    header = HEADERS[magic]
    if len(data) < header.size:
        raise ContainerError('{}: truncated header'.format(path))
    fields = dict(zip(FIELDS[magic], header.unpack(data[:header.size])))
    fields['magic'] = magic.decode('ascii')
    if fields['version'] != VERSION:
        raise ContainerError('{}: unsupported version {}'.format(path, fields['version']))
    return fields, _Reader(data[header.size:], path)


def _write(path, header, payload):
    directory = os.path.dirname(path)
    if directory:
        os.makedirs(directory, exist_ok=True)
    with open(path, 'wb') as f:
        f.write(header)
        for part in payload:
            f.write(part)


def read_header(path):
    """Header fields of any container as a dict."""
    fields, _ = _open(path)
    return fields


def save_dataset(path, dataset):
    if isinstance(dataset, Dataset1D):
        header = HEADERS[b'MRA1'].pack(b'MRA1', VERSION, dataset.n,
                                       dataset.length, dataset.noise_sigma)
        payload = [_real(dataset.truth), _real(dataset.shifts), _real(dataset.signals)]
    elif isinstance(dataset, Dataset2D):
        obs = dataset.coeff_observations
        header = HEADERS[b'MRA2'].pack(b'MRA2', VERSION, dataset.n, obs.M,
                                       dataset.rotation_grid_size,
                                       dataset.noise_sigma)
        payload = [
            _real(obs.angular_index),
            _real(obs.radial_index),
            _complex(dataset.truth_coeffs.values),
            _real(dataset.rotations),
            _complex(obs.values)
        ]
    else:
        raise TypeError('not a dataset: {!r}'.format(dataset))
    _write(path, header, payload)


def load_dataset(path):
    """Read an MRA1 or MRA2 container.

       Returns:
           Dataset1D or Dataset2D
    """
    fields, reader = _open(path, expected=(b'MRA1', b'MRA2'))
    n = fields['N']
    if fields['magic'] == 'MRA1':
        L = fields['L']
        truth = reader.real(L)
        shifts = reader.real(n).astype(int)
        signals = reader.real(n * L).reshape(n, L)
        reader.finish()
        return Dataset1D(signals, truth, shifts, fields['sigma'])
    M = fields['M']
    angular = reader.real(M).astype(int)
    radial = reader.real(M).astype(int)
    truth = SteerableCoeffs(reader.complex(M), angular, radial)
    rotations = reader.real(n).astype(int)
    observations = SteerableCoeffs(reader.complex(n * M).reshape(n, M), angular, radial)
    reader.finish()
    return Dataset2D(observations, truth, rotations, fields['sigma'], fields['L'])


def save_basis(path, basis, normalized=True):
    npix, M = basis.sample_matrix.shape
    header = HEADERS[b'FBB1'].pack(b'FBB1', VERSION, basis.grid_size, M, npix,
                                   int(normalized), basis.disk_radius,
                                   basis.bandlimit)
    payload = [
        _real(basis.angular_index),
        _real(basis.radial_index),
        _real(basis.normalizers),
        _real(basis.bessel_roots),
        _complex(basis.sample_matrix)
    ]
    _write(path, header, payload)


def load_basis(path):
    """Read an FBB1 container; the pseudo-inverse and disk mask are
       recomputed rather than stored."""
    fields, reader = _open(path, expected=(b'FBB1',))
    M = fields['M']
    angular = reader.real(M).astype(int)
    radial = reader.real(M).astype(int)
    normalizers = reader.real(M)
    roots = reader.real(M)
    sample = reader.complex(fields['npix'] * M).reshape(fields['npix'], M)
    reader.finish()
    return FourierBesselBasis(fields['grid_size'], fields['disk_radius'],
                              fields['bandlimit'], angular, radial, roots,
                              normalizers, sample)


def load_or_build_basis(path, grid_size, disk_radius=None, bandlimit=1.0,
                        normalize=True):
    """Load a cached basis if its parameters match, otherwise build and
       cache it. path may be None to skip caching."""
    c = (grid_size - 1) / 2.0 if disk_radius is None else float(disk_radius)
    if path and os.path.exists(path):
        fields = read_header(path)
        if fields['magic'] == 'FBB1' and fields['grid_size'] == grid_size and \
                fields['disk_radius'] == c and fields['bandlimit'] == bandlimit and \
                bool(fields['normalized']) == bool(normalize):
            return load_basis(path)
    basis = build_basis(grid_size, c, bandlimit, normalize)
    if path:
        save_basis(path, basis, normalize)
    return basis


# CSV

def write_csv(path, header, rows):
    """
    Parameters:
        path (str):    output file; parent directories are created.
        header (list): column names.
        rows (iterable): sequences or dicts keyed by the header.
    """
    directory = os.path.dirname(path)
    if directory:
        os.makedirs(directory, exist_ok=True)
    with open(path, 'w', newline='') as f:
        writer = csv.writer(f)
        writer.writerow(header)
        for row in rows:
            if isinstance(row, dict):
                row = [row[h] for h in header]
            writer.writerow(row)


def read_csv(path):
    """Rows of a CSV file as dicts of strings, skipping '#' comment lines."""
    try:
        with open(path, newline='') as f:
            lines = [line for line in f if not line.startswith('#')]
    except OSError as e:
        raise ContainerError('{}: {}'.format(path, e.strerror or e))
    return list(csv.DictReader(lines))


def write_coeffs_csv(path, coeffs):
    """One row per vector, columns re_j,im_j for every stored entry."""
    header = []
    for j in range(coeffs.M):
        header.extend(['re_{}'.format(j), 'im_{}'.format(j)])
    values = np.atleast_2d(coeffs.values)
    rows = [np.column_stack((v.real, v.imag)).ravel().tolist() for v in values]
    write_csv(path, header, rows)


def write_signals_csv(path, signals):
    signals = np.atleast_2d(signals)
    write_csv(path, ['x_{}'.format(j) for j in range(signals.shape[1])],
              signals.tolist())


def write_sync_csv(path, sync):
    write_csv(path, ['index', 'rotation_index', 'method'],
              [(i, int(r), sync.method) for i, r in enumerate(sync.rotation_indices)])
