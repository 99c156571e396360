# experiment output directory: per run logs, validation data and reports

from acharness.configurator import Trajectory
from acharness.configurator import TrajectoryEntry
from acharness.space import configuration_from_json
import csv
import io
import json
import os
import random
import re
import threading
import ujson


TRAJECTORY_HEADER = ('elapsed_s', 'target_cpu_s', 'train_cost', 'config_id',
                     'config_json')
VALIDATION_HEADER = ('config_id', 'instance', 'seed', 'status', 'cost')
SERIES_HEADER = ('elapsed_s', 'q25', 'median', 'q75', 'n_runs')
SCATTER_HEADER = ('config_id', 'train_cost', 'test_cost')

TEST_NAMESPACE = 'test'
TRAIN_NAMESPACE = 'train'

_RUN_DIR_RE = re.compile(r'^run-(?P<index>\d+)$')


def write_file_atomic(file_path, data):
    swap_file_path = '%s.swp-%s-%s-%s' % (
        file_path,
        os.getpid(),
        threading.current_thread().ident,
        random.randint(1, 1000000)
    )
    try:
        with open(swap_file_path, 'w', encoding='utf-8') as fp:
            fp.write(data)
        # write file as atomic operation
        os.replace(swap_file_path, file_path)
    except Exception as e:
        try:
            os.remove(swap_file_path)
        except OSError:
            pass
        raise e


def format_float(x):
    if x is None:
        return ''
    return repr(float(x))


def parse_float(text):
    return float(text) if text != '' else None


def csv_text(header, rows):
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator='\n')
    writer.writerow(header)
    for row in rows:
        writer.writerow(row)
    return buf.getvalue()


def format_trajectory(trajectory):
    rows = []
    for entry in trajectory.entries:
        rows.append((format_float(entry.elapsed),
                     format_float(entry.target_cpu),
                     format_float(entry.train_cost),
                     entry.config.id,
                     entry.config.to_json()))
    return csv_text(TRAJECTORY_HEADER, rows)


def parse_trajectory_fp(fp, space, run_seed=None):
    reader = csv.reader(fp)
    header = next(reader, None)
    if header is None or tuple(header) != TRAJECTORY_HEADER:
        raise ValueError('not a trajectory file, header: %r' % (header,))
    entries = []
    for row in reader:
        if not row:
            continue
        elapsed, target_cpu, train_cost, config_id, config_json = row
        config = configuration_from_json(space, config_json)
        assert config.id == config_id, \
            'configuration id mismatch: %s != %s' % (config.id, config_id)
        entries.append(TrajectoryEntry(float(elapsed), float(target_cpu),
                                       config, parse_float(train_cost)))
    return Trajectory(tuple(entries), run_seed)


def read_trajectory(path, space, run_seed=None):
    with open(path, 'r', encoding='utf-8', newline='') as fp:
        return parse_trajectory_fp(fp, space, run_seed)


class RunLogWriter(object):

    """
    Append only json lines log

    Every record is written with a single write on a file opened in append
    mode, so concurrent writers never interleave within a line.
    """

    def __init__(self, path):
        self.path = path
        self.lock = threading.Lock()
        self.fp = open(path, 'a', encoding='utf-8')

    def append(self, record):
        line = ujson.dumps(record, sort_keys=True) + '\n'
        with self.lock:
            self.fp.write(line)
            self.fp.flush()

    def close(self):
        with self.lock:
            self.fp.close()

    def __enter__(self):
        return self

    def __exit__(self, exc_type, exc_val, exc_tb):
        self.close()


def read_run_log(path):
    with open(path, 'r', encoding='utf-8') as fp:
        for line in fp:
            line = line.strip()
            if not line:
                continue
            try:
                yield ujson.loads(line)
            except ValueError:
                # a run killed mid write leaves a torn last line
                continue


class ExperimentDirectory(object):
    '''
    Lays out the outputs of one experiment

        <out>/run-<i>/trajectory.csv, runs.jsonl
        <out>/incumbent.json, health.json
        <out>/train/..., <out>/test/...

    Test costs only ever go below the test namespace.
    '''

    def __init__(self, base_path):
        if os.path.exists(base_path):
            if not os.path.isdir(base_path):
                raise IOError(
                    '`{}` exists and is not a directory!'.format(base_path))
        else:
            os.makedirs(base_path)
        self.base_path = base_path

    def _dir(self, *parts):
        path = os.path.join(self.base_path, *parts)
        if not os.path.isdir(path):
            os.makedirs(path)
        return path

    def run_dir(self, index):
        return self._dir('run-%d' % index)

    def namespace_dir(self, namespace):
        assert namespace in (TRAIN_NAMESPACE, TEST_NAMESPACE), \
            'unknown namespace: %s' % namespace
        return self._dir(namespace)

    def run_indexes(self):
        indexes = []
        for name in os.listdir(self.base_path):
            m = _RUN_DIR_RE.match(name)
            if m and os.path.isdir(os.path.join(self.base_path, name)):
                indexes.append(int(m.group('index')))
        return sorted(indexes)

    def trajectory_path(self, index):
        return os.path.join(self.run_dir(index), 'trajectory.csv')

    def run_log_path(self, index):
        return os.path.join(self.run_dir(index), 'runs.jsonl')

    def open_run_log(self, index):
        return RunLogWriter(self.run_log_path(index))

    def write_trajectory(self, index, trajectory):
        write_file_atomic(self.trajectory_path(index),
                          format_trajectory(trajectory))

    def read_trajectories(self, space):
        trajectories = []
        for index in self.run_indexes():
            path = self.trajectory_path(index)
            if os.path.exists(path):
                trajectories.append(read_trajectory(path, space, index))
        return trajectories

    def read_run_logs(self):
        for index in self.run_indexes():
            path = self.run_log_path(index)
            if os.path.exists(path):
                for record in read_run_log(path):
                    yield record

    def path(self, name, namespace=None):
        if namespace is None:
            return os.path.join(self.base_path, name)
        return os.path.join(self.namespace_dir(namespace), name)

    def write_json(self, name, obj, namespace=None):
        path = self.path(name, namespace)
        write_file_atomic(path, json.dumps(obj, indent=2, sort_keys=True) +
                          '\n')
        return path

    def write_csv(self, name, header, rows, namespace=None):
        path = self.path(name, namespace)
        write_file_atomic(path, csv_text(header, rows))
        return path

    def write_incumbent(self, config, run_seed=None):
        return self.write_json('incumbent.json', dict(
            config_id=config.id,
            config=config.values,
            run_seed=run_seed,
        ))


def read_configurations(path, space):
    """
    Configurations to validate, one json object per line

    An incumbent.json file holding a single configuration is accepted too.
    """

    with open(path, 'r', encoding='utf-8') as fp:
        text = fp.read()
    try:
        obj = json.loads(text)
    except ValueError:
        obj = None
    if isinstance(obj, dict):
        values = obj['config'] if 'config_id' in obj else obj
        return [space.make_configuration(values)]
    configs = []
    for line in text.splitlines():
        line = line.strip()
        if line and not line.startswith('#'):
            configs.append(configuration_from_json(space, line))
    return configs
