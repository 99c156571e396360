from acharness.space import CATEGORICAL
from acharness.space import Condition
from acharness.space import ConfigSpace
from acharness.space import Parameter
from acharness.space import REAL
from acharness.space import format_config_space
from acharness.space import parse_config_space
from acharness.space import validate_config
from acharness.utils import stable_hash_int
from acharness.wrapper.sat import Cnf
from acharness.wrapper.sat import SAT
from acharness.wrapper.sat import UNSAT
from acharness.wrapper.sat import format_dimacs
from collections import namedtuple
import itertools
import json
import math
import numpy as np
import os


QUADRATIC_BOWL = 'quadratic_bowl'
SEED_NOISE = 'seed_noise'
INSTANCE_SHIFT = 'instance_shift'
HETEROGENEOUS = 'heterogeneous'
LANDSCAPE_KINDS = (QUADRATIC_BOWL, SEED_NOISE, INSTANCE_SHIFT, HETEROGENEOUS)

FIXTURE_MODES = ('honest', 'ignore_kill', 'fork_escape', 'lie_runtime',
                 'wrong_answer', 'memory_hog', 'crash')


Landscape = namedtuple(
    'Landscape', 'kind params instance_hardness noise_scale space')


def make_landscape(kind, space, params=None, instance_hardness=None,
                   noise_scale=0.0):
    assert kind in LANDSCAPE_KINDS, 'unknown landscape kind: %s' % kind
    assert noise_scale >= 0, 'noise_scale must be >= 0: %s' % noise_scale
    params = dict(params or {})
    if kind in (QUADRATIC_BOWL, SEED_NOISE, INSTANCE_SHIFT):
        assert 'optimum' in params, '%s needs an optimum' % kind
    if kind == INSTANCE_SHIFT:
        assert 'test_optimum' in params and 'test_instances' in params, \
            'instance_shift needs test_optimum and test_instances'
        params['test_instances'] = frozenset(params['test_instances'])
    return Landscape(kind, params, dict(instance_hardness or {}),
                     float(noise_scale), space)


def load_landscape(path):
    """
    Load a landscape spec file

    The json object holds kind, params, instance_hardness, noise_scale and
    pcs_file, the latter relative to the spec file.
    """

    with open(path, 'r') as fp:
        spec = json.load(fp)
    pcs_file = spec['pcs_file']
    if not os.path.isabs(pcs_file):
        pcs_file = os.path.join(os.path.dirname(os.path.abspath(path)),
                                pcs_file)
    space = parse_config_space(pcs_file)
    return make_landscape(spec['kind'], space, spec.get('params'),
                          spec.get('instance_hardness'),
                          spec.get('noise_scale', 0.0))


def landscape_to_json(landscape, pcs_file):
    params = dict(landscape.params)
    if 'test_instances' in params:
        params['test_instances'] = sorted(params['test_instances'])
    return json.dumps(dict(
        kind=landscape.kind,
        params=params,
        instance_hardness=landscape.instance_hardness,
        noise_scale=landscape.noise_scale,
        pcs_file=pcs_file,
    ), indent=2, sort_keys=True)


def _unit(*parts):
    # uniform in [0, 1) from a stable hash
    return stable_hash_int(*parts) / float(2 ** 64)


def instance_hardness(landscape, instance):
    hardness = landscape.instance_hardness.get(instance)
    if hardness is not None:
        return float(hardness)
    lo, hi = landscape.params.get('hardness_range', (1.0, 1.0))
    return lo + (hi - lo) * _unit('hardness', instance)


def squared_distance(space, values, optimum, wrap=False):
    """
    Sum of squared per parameter distances

    Categorical mismatches count 1. With wrap, numeric distances are
    measured on a circle of the parameter's range, normalized to it.
    Inactive parameters do not contribute.
    """

    total = 0.0
    for param in space.parameters:
        if param.name not in values or param.name not in optimum:
            continue
        value = values[param.name]
        target = optimum[param.name]
        if param.kind == CATEGORICAL:
            total += 0.0 if value == target else 1.0
            continue
        d = float(value) - float(target)
        if wrap:
            span = float(param.hi - param.lo) or 1.0
            d = abs(d) / span
            d = min(d, 1.0 - d)
        total += d * d
    return total


def instance_optimum(landscape, instance):
    """per instance optimum of the heterogeneous landscape"""
    rng = np.random.default_rng(stable_hash_int(
        'optimum', landscape.params.get('optimum_seed', 0), instance))
    optimum = {}
    for param in landscape.space.parameters:
        if param.kind == CATEGORICAL:
            optimum[param.name] = param.choices[
                int(rng.integers(len(param.choices)))]
        elif param.kind == REAL:
            optimum[param.name] = float(rng.uniform(param.lo, param.hi))
        else:
            optimum[param.name] = int(rng.integers(param.lo, param.hi + 1))
    return optimum


def seed_noise_factor(noise_scale, config_id, seed):
    """mean one lognormal multiplier drawn from (configuration, seed)"""
    if noise_scale == 0:
        return 1.0
    z = np.random.default_rng(stable_hash_int(
        'noise', config_id, seed)).standard_normal()
    return math.exp(noise_scale * z - 0.5 * noise_scale * noise_scale)


def synth_runtime(landscape, config, instance, seed):
    """closed form runtime of a configuration on an instance, in seconds"""
    violations = validate_config(landscape.space, config)
    if violations:
        raise ValueError('invalid configuration: %s' % '; '.join(violations))

    values = config.values
    scale = float(landscape.params.get('scale', 1.0))
    h = instance_hardness(landscape, instance)
    kind = landscape.kind

    if kind == HETEROGENEOUS:
        optimum = instance_optimum(landscape, instance)
        dist = squared_distance(landscape.space, values, optimum, wrap=True)
        return h * (1.0 + scale * dist)

    optimum = landscape.params['optimum']
    if kind == INSTANCE_SHIFT and \
            instance in landscape.params['test_instances']:
        optimum = landscape.params['test_optimum']
    base = h * (1.0 + scale * squared_distance(
        landscape.space, values, optimum))

    if kind == SEED_NOISE:
        return base * seed_noise_factor(landscape.noise_scale, config.id,
                                        seed)
    return base


def make_bowl_space(n_params, lo=0.0, hi=10.0, default=0.0,
                    categorical=False):
    params = [Parameter('x%d' % i, REAL, float(default), float(lo),
                        float(hi))
              for i in range(n_params)]
    if categorical:
        params.append(Parameter('mode', CATEGORICAL, 'a',
                                choices=('a', 'b')))
        params.append(Parameter('boost', REAL, 0.0, 0.0, 1.0,
                                condition=Condition('mode', 'b')))
    return ConfigSpace(params)


def make_planted_cnf(n_vars, n_clauses, rng, width=3):
    """random satisfiable k-cnf: every clause agrees with a hidden model"""
    model = [bool(rng.integers(2)) for _ in range(n_vars)]
    clauses = []
    while len(clauses) < n_clauses:
        variables = rng.choice(n_vars, size=min(width, n_vars),
                               replace=False) + 1
        clause = [int(v) if rng.integers(2) else -int(v) for v in variables]
        if any((lit > 0) == model[abs(lit) - 1] for lit in clause):
            clauses.append(tuple(clause))
    return Cnf(n_vars, tuple(clauses)), model


def make_unsat_cnf(n_vars):
    """all 2**n sign patterns over n variables; no assignment survives"""
    clauses = []
    for signs in itertools.product((1, -1), repeat=n_vars):
        clauses.append(tuple(s * (i + 1) for i, s in enumerate(signs)))
    return Cnf(n_vars, tuple(clauses))


def _write_lines(path, lines):
    with open(path, 'w') as fp:
        for line in lines:
            fp.write('%s\n' % line)


FIXTURE_COMMAND = ('{python} -m acharness.fixture --landscape landscape.json '
                   '--mode %s%s {instance} 0 {cutoff} 0 {seed} {params}')


def write_synthetic_scenario(directory, kind=QUADRATIC_BOWL, n_params=5,
                             n_train=100, n_test=100, cutoff=300.0,
                             budget_runs=2000, budget_wallclock=None,
                             execution='oracle', mode='honest', sleep=False,
                             metric='runtime_par10', seed=0,
                             noise_scale=1.5, hardness_range=(0.5, 2.0),
                             time_scale=1.0, deterministic=None,
                             seed_policy='managed', sat_instances=False,
                             output_parser=None, solution_checker='none',
                             extra=None):
    """
    Write a complete synthetic experiment into directory

    Creates the pcs file, instance files and lists, the landscape spec and
    the scenario file, and returns the scenario file's path. Instances are
    tiny text files, or small cnfs with known answers when sat_instances
    is set. time_scale multiplies all hardness values, so sandboxed runs
    can be kept short.
    """

    rng = np.random.default_rng(seed)
    if not os.path.isdir(directory):
        os.makedirs(directory)
    instance_dir = os.path.join(directory, 'instances')
    if not os.path.isdir(instance_dir):
        os.makedirs(instance_dir)

    space = make_bowl_space(n_params)
    with open(os.path.join(directory, 'params.pcs'), 'w') as fp:
        fp.write(format_config_space(space))

    train = []
    test = []
    answers = []
    for prefix, count, names in (('train', n_train, train),
                                 ('test', n_test, test)):
        for i in range(count):
            if sat_instances:
                name = os.path.join('instances', '%s_%03d.cnf' % (prefix, i))
                # every fourth instance is unsatisfiable
                if i % 4 == 3:
                    cnf = make_unsat_cnf(3)
                    answer = UNSAT
                else:
                    cnf, _ = make_planted_cnf(8, 20, rng)
                    answer = SAT
                with open(os.path.join(directory, name), 'w') as fp:
                    fp.write(format_dimacs(cnf, comment=answer))
                answers.append('%s %s' % (name, answer))
            else:
                name = os.path.join('instances', '%s_%03d.txt' % (prefix, i))
                with open(os.path.join(directory, name), 'w') as fp:
                    fp.write('synthetic instance %s %d\n' % (prefix, i))
            names.append(name)
    _write_lines(os.path.join(directory, 'train.txt'), train)
    _write_lines(os.path.join(directory, 'test.txt'), test)

    lo, hi = hardness_range
    hardness = dict(
        (name, time_scale * float(rng.uniform(lo, hi)))
        for name in train + test)
    optimum = dict(('x%d' % i, float(rng.uniform(2.0, 8.0)))
                   for i in range(n_params))
    params = dict(optimum=optimum, scale=1.0)
    if kind == INSTANCE_SHIFT:
        params['test_optimum'] = dict(
            (name, float(10.0 - v)) for name, v in optimum.items())
        params['test_instances'] = test
    if kind == HETEROGENEOUS:
        params = dict(optimum_seed=seed, scale=float(n_params))
    landscape = make_landscape(kind, space, params, hardness,
                               noise_scale if kind == SEED_NOISE else 0.0)
    with open(os.path.join(directory, 'landscape.json'), 'w') as fp:
        fp.write(landscape_to_json(landscape, 'params.pcs'))

    if deterministic is None:
        deterministic = kind != SEED_NOISE
    if output_parser is None:
        output_parser = 'sat' if sat_instances else 'exit_code'

    lines = [
        '# synthetic %s experiment' % kind,
        'command = ' + FIXTURE_COMMAND % (mode, ' --sleep' if sleep else ''),
        'pcs_file = params.pcs',
        'train_instance_file = train.txt',
        'test_instance_file = test.txt',
        'cutoff_time = %r' % float(cutoff),
        'memory_limit = 1024',
        'metric = %s' % metric,
        'deterministic = %s' % ('true' if deterministic else 'false'),
        'execution = %s' % execution,
        'landscape_file = landscape.json',
        'seed_policy = %s' % seed_policy,
        'output_parser = %s' % output_parser,
        'solution_checker = %s' % solution_checker,
    ]
    if budget_runs is not None:
        lines.append('budget_runs = %d' % budget_runs)
    if budget_wallclock is not None:
        lines.append('budget_wallclock = %r' % float(budget_wallclock))
    if metric == 'quality':
        lines.append('worst_quality = %r' % (10.0 * cutoff))
    if sat_instances:
        _write_lines(os.path.join(directory, 'answers.txt'), answers)
        lines.append('reference_answers = answers.txt')
    for key, value in sorted((extra or {}).items()):
        lines.append('%s = %s' % (key, value))

    path = os.path.join(directory, 'scenario.txt')
    _write_lines(path, lines)
    return path
