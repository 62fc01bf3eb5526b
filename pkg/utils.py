import apsw
import datetime
import json
import os
import sys
import threading
import time
from concurrent.futures import ThreadPoolExecutor

import numpy as np
import pytz

CODE_VERSION = '1.0.0'


class SynchEmError(Exception):
    """Base class for errors the command line reports by category."""
    category = 'error'


class ConfigurationError(SynchEmError):
    category = 'config'


class DimensionError(SynchEmError):
    category = 'dimension'


class NumericalError(SynchEmError):
    category = 'numerical'


class ContainerError(SynchEmError):
    category = 'io'


EXIT_CODES = {
    'config': 2,
    'dimension': 3,
    'numerical': 4,
    'io': 5,
    'error': 1
}


def warn(component, message):
    """Write a one-line warning to stderr.

       Parameters:
           component (str): short name of the emitting component, e.g. 'ppm'.
           message (str):   warning text.
    """
    sys.stderr.write('{}: {}\n'.format(component, message))


def derive_rng(seed, *keys):
    """Get a generator for a derived seed, e.g. (seed, trial, observation).

       Parameters:
           seed (int): base seed.
           keys (int): further integers mixed into the seed sequence.

       Returns:
           numpy.random.Generator
    """
    return np.random.default_rng([int(seed)] + [int(k) for k in keys])


def derive_seed(seed, *keys):
    """Collapse (seed, keys...) into a single 32-bit integer seed."""
    sequence = np.random.SeedSequence([int(seed)] + [int(k) for k in keys])
    return int(sequence.generate_state(1)[0])


def parallel_map(fn, items, workers=1):
    """Map fn over items, preserving order.

       Every caller derives its seeds from the item itself, so results do not
       depend on the number of workers.

       Parameters:
           fn (callable): function of one argument.
           items (iterable): arguments.
           workers (int): number of threads; 1 runs serially.

       Returns:
           list: fn(item) for each item, in input order.
    """
    items = list(items)
    if workers is None or workers <= 1 or len(items) <= 1:
        return [fn(i) for i in items]
    with ThreadPoolExecutor(max_workers=workers) as executor:
        return list(executor.map(fn, items))


class Stopwatch:
    """Monotonic wall clock, reported in seconds at millisecond resolution."""

    def __init__(self):
        self._start = time.perf_counter()

    def elapsed(self):
        return round(time.perf_counter() - self._start, 3)

    def elapsed_raw(self):
        return time.perf_counter() - self._start


def utc_now():
    """Current time as an ISO-8601 UTC string."""
    return datetime.datetime.now(pytz.utc).isoformat()


class RunManifest:
    def __init__(self, config):
        """
        Parameters:
            config (dict): needs 'MANIFEST_DB', the path to the SQLite file.
                           The file and its tables are created on first use.
        """
        self.config = config
        self._lock = threading.Lock()
        directory = os.path.dirname(self.config['MANIFEST_DB'])
        if directory:
            os.makedirs(directory, exist_ok=True)
        with apsw.Connection(self.config['MANIFEST_DB']) as con:
            con.execute('''
                create table if not exists runs(
                    run_id integer primary key,
                    command text,
                    config text,
                    code_version text,
                    seed integer,
                    created text
                );
            ''')
            con.execute('''
                create table if not exists trials(
                    run_id integer,
                    trial integer,
                    seed integer,
                    method text,
                    snr real,
                    gamma real,
                    relative_error real,
                    iterations integer,
                    wall_time real,
                    created text
                );
            ''')

    def start_run(self, command, config_snapshot, seed):
        """
        Record a new run.

        Parameters:
            command (str):          CLI subcommand name.
            config_snapshot (dict): the resolved experiment configuration.
            seed (int):             base seed of the run.

        Returns:
            int: the run id.
        """
        with self._lock:
            with apsw.Connection(self.config['MANIFEST_DB']) as con:
                con.execute('''
                    insert into runs (command, config, code_version, seed, created)
                    values (?, ?, ?, ?, ?);
                    ''',
                            (
                                command,
                                json.dumps(config_snapshot, sort_keys=True),
                                CODE_VERSION,
                                int(seed),
                                utc_now()
                            )
                            )
                return con.last_insert_rowid()

    def add_trial(self, run_id, row):
        """
        Append one trial's metrics.

        Parameters:
            run_id (int): id returned by start_run.
            row (dict):   needs trial, seed, method, snr, gamma,
                          relative_error, iterations, wall_time.
        """
        with self._lock:
            with apsw.Connection(self.config['MANIFEST_DB']) as con:
                con.execute('''
                    insert into trials (run_id, trial, seed, method, snr, gamma,
                                        relative_error, iterations, wall_time,
                                        created)
                    values (?, ?, ?, ?, ?, ?, ?, ?, ?, ?);
                    ''',
                            (
                                run_id,
                                int(row['trial']),
                                int(row['seed']),
                                row['method'],
                                float(row['snr']),
                                float(row['gamma']),
                                float(row['relative_error']),
                                int(row['iterations']),
                                float(row['wall_time']),
                                utc_now()
                            )
                            )

    def get_runs(self):
        with apsw.Connection(self.config['MANIFEST_DB']) as con:
            return con.execute(
                'select run_id, command, code_version, seed, created from runs order by run_id;'
            ).fetchall()

    def get_trials(self, run_id):
        with apsw.Connection(self.config['MANIFEST_DB']) as con:
            return con.execute('''
                select trial, seed, method, snr, gamma, relative_error,
                       iterations, wall_time
                from trials where run_id = ? order by rowid;
                ''', (run_id,)).fetchall()

    def get_config(self, run_id):
        with apsw.Connection(self.config['MANIFEST_DB']) as con:
            rows = con.execute(
                'select config from runs where run_id = ?;', (run_id,)
            ).fetchall()
        if not rows:
            raise KeyError(run_id)
        return json.loads(rows[0][0])
