from acharness.result import METRICS
from acharness.result import QUALITY
from acharness.result import SUCCESS
from acharness.space import ConfigSpaceError
from acharness.space import parse_config_space
from collections import namedtuple
from string import Formatter
import os
import psutil
import re


class ScenarioError(ValueError):

    def __init__(self, msg, line=None, field=None):
        if field is not None:
            msg = '%s: %s' % (field, msg)
        if line is not None:
            msg = 'line %d: %s' % (line, msg)
        super(ScenarioError, self).__init__(msg)
        self.line = line
        self.field = field


TEMPLATE_PLACEHOLDERS = ('instance', 'seed', 'cutoff', 'params', 'python')

EXECUTION_SANDBOX = 'sandbox'
EXECUTION_ORACLE = 'oracle'

KEEP_ARTIFACTS_CHOICES = ('on_failure', 'always', 'never')
SOLUTION_CHECKERS = ('none', 'sat')

# file systems that are shared between machines; run outputs written there
# congest the whole cluster
SHARED_FS_TYPES = ('nfs', 'nfs4', 'lustre', 'gpfs', 'cifs', 'smbfs',
                   'smb3', 'beegfs', 'glusterfs', 'ceph', 'fuse.sshfs')

# thresholds behind the scenario sanity warnings
MIN_SOLVED_FRACTION = 0.75
MIN_BUDGET_DEFAULT_RUNS = 200
MIN_TRAIN_INSTANCES = 300


WrapperHooks = namedtuple(
    'WrapperHooks', 'command_builder output_parser solution_checker')


class SeedPolicy(namedtuple('SeedPolicy', 'kind k')):

    def __str__(self):
        if self.kind == 'fixed-set':
            return 'fixed-set(%d)' % self.k
        return self.kind


MANAGED_SEEDS = SeedPolicy('managed', None)

_SEED_POLICY_RE = re.compile(r'^fixed-set\((?P<k>-?\d+)\)$')


def parse_seed_policy(text):
    text = text.strip()
    if text == 'managed':
        return MANAGED_SEEDS
    m = _SEED_POLICY_RE.match(text)
    if not m:
        raise ValueError('unknown seed policy: %s' % text)
    k = int(m.group('k'))
    if k < 1:
        raise ValueError('fixed-set needs at least one seed: %s' % text)
    return SeedPolicy('fixed-set', k)


Scenario = namedtuple('Scenario', [
    'command_template',
    'space',
    'train_instances',
    'test_instances',
    'cutoff_max',
    'memory_limit',
    'metric',
    'budget_runs',
    'budget_wallclock',
    'deterministic',
    'wrapper_hooks',
    'temp_root',
    'param_format',
    'worst_quality',
    'validation_seeds',
    'seed_policy',
    'max_seeds_per_instance',
    'capping_multiplier',
    'grace',
    'wall_cutoff',
    'keep_artifacts',
    'landscape_file',
    'execution',
    'reference_answers',
    'directory',
    'pcs_file',
    'train_instance_file',
    'test_instance_file',
    'reference_answers_file',
])


ScenarioWarning = namedtuple('ScenarioWarning', 'code message')


def _parse_bool(text):
    lowered = text.strip().lower()
    if lowered in ('true', 'yes', 'on', '1'):
        return True
    if lowered in ('false', 'no', 'off', '0'):
        return False
    raise ValueError('not a boolean: %s' % text)


def _positive_float(text):
    value = float(text)
    if not value > 0:
        raise ValueError('must be > 0: %s' % text)
    return value


def _non_negative_float(text):
    value = float(text)
    if not value >= 0:
        raise ValueError('must be >= 0: %s' % text)
    return value


def _non_negative_int(text):
    value = int(text)
    if value < 0:
        raise ValueError('must be >= 0: %s' % text)
    return value


def _positive_int(text):
    value = int(text)
    if value < 1:
        raise ValueError('must be >= 1: %s' % text)
    return value


def _multiplier(text):
    value = float(text)
    if not value >= 1:
        raise ValueError('must be >= 1: %s' % text)
    return value


def _one_of(choices):
    def convert(text):
        text = text.strip()
        if text not in choices:
            raise ValueError('expected one of %s, got %r' % (
                '|'.join(choices), text))
        return text
    return convert


def _metric(text):
    return _one_of(METRICS)(text)


# key -> converter; path keys are handled separately
SCENARIO_KEYS = dict(
    command=str,
    cutoff_time=_positive_float,
    budget_runs=_non_negative_int,
    budget_wallclock=_non_negative_float,
    metric=_metric,
    memory_limit=_positive_float,
    deterministic=_parse_bool,
    output_parser=str,
    solution_checker=_one_of(SOLUTION_CHECKERS),
    command_builder=str,
    param_format=str,
    worst_quality=float,
    validation_seeds=_positive_int,
    seed_policy=parse_seed_policy,
    max_seeds_per_instance=_positive_int,
    capping_multiplier=_multiplier,
    grace=_positive_float,
    wall_cutoff=_positive_float,
    keep_artifacts=_one_of(KEEP_ARTIFACTS_CHOICES),
    execution=_one_of((EXECUTION_SANDBOX, EXECUTION_ORACLE)),
)
PATH_KEYS = ('pcs_file', 'train_instance_file', 'test_instance_file',
             'landscape_file', 'temp_root', 'reference_answers')
REQUIRED_KEYS = ('command', 'pcs_file', 'train_instance_file',
                 'test_instance_file', 'cutoff_time', 'metric',
                 'memory_limit')


def read_scenario_pairs(fp):
    """
    Read the raw key = value pairs of a scenario file

    Returns a dict of key -> (value, line number). Only whole line comments
    are supported, since command templates may legitimately contain '#'.
    """

    pairs = {}
    for lineno, raw_line in enumerate(fp, 1):
        line = raw_line.strip()
        if not line or line.startswith('#'):
            continue
        if '=' not in line:
            raise ScenarioError('expected "key = value": %s' % line,
                                line=lineno)
        key, value = line.split('=', 1)
        key = key.strip()
        value = value.strip()
        if key not in SCENARIO_KEYS and key not in PATH_KEYS:
            raise ScenarioError('unknown key: %s' % key, line=lineno)
        if key in pairs:
            raise ScenarioError('duplicate key: %s' % key, line=lineno)
        pairs[key] = (value, lineno)
    return pairs


def read_instance_list(path):
    instances = []
    with open(path, 'r', encoding='utf-8') as fp:
        for line in fp:
            instance = line.strip()
            if instance:
                instances.append(instance)
    return instances


def _normalize_answer(answer):
    answer = answer.strip().upper()
    if answer in ('SAT', 'SATISFIABLE'):
        return 'SAT'
    if answer in ('UNSAT', 'UNSATISFIABLE'):
        return 'UNSAT'
    raise ValueError('unknown answer %r' % answer)


def read_reference_answers(path):
    answers = {}
    with open(path, 'r', encoding='utf-8') as fp:
        for lineno, line in enumerate(fp, 1):
            line = line.strip()
            if not line or line.startswith('#'):
                continue
            parts = line.rsplit(None, 1)
            if len(parts) != 2:
                raise ScenarioError('expected "instance answer": %s' % line,
                                    line=lineno, field='reference_answers')
            instance, answer = parts
            try:
                answers[instance] = _normalize_answer(answer)
            except ValueError as e:
                raise ScenarioError(str(e), line=lineno,
                                    field='reference_answers')
    return answers


def template_placeholders(template):
    names = []
    for _, field_name, _, _ in Formatter().parse(template):
        if field_name is not None:
            names.append(field_name)
    return names


def resolve_path(directory, path):
    path = os.path.expanduser(path)
    if not os.path.isabs(path):
        path = os.path.join(directory, path)
    return os.path.normpath(path)


def _convert(pairs, key, default=None):
    if key not in pairs:
        return default
    value, lineno = pairs[key]
    try:
        return SCENARIO_KEYS[key](value)
    except ValueError as e:
        raise ScenarioError(str(e), line=lineno, field=key)


def _path(pairs, key, directory, must_exist=True):
    if key not in pairs:
        return None
    value, lineno = pairs[key]
    path = resolve_path(directory, value)
    if must_exist and not os.path.exists(path):
        raise ScenarioError('file not found: %s' % path, line=lineno,
                            field=key)
    return path


def _check_instances(instances, directory, field):
    if not instances:
        raise ScenarioError('no instances listed', field=field)
    seen = set()
    for instance in instances:
        if instance in seen:
            raise ScenarioError('duplicate instance: %s' % instance,
                                field=field)
        seen.add(instance)
        if not os.path.exists(resolve_path(directory, instance)):
            raise ScenarioError('instance not found: %s' % instance,
                                field=field)


def parse_scenario_fp(fp, directory):
    pairs = read_scenario_pairs(fp)

    for key in REQUIRED_KEYS:
        if key not in pairs:
            raise ScenarioError('missing required key', field=key)
    if 'budget_runs' not in pairs and 'budget_wallclock' not in pairs:
        raise ScenarioError(
            'at least one of budget_runs or budget_wallclock must be set',
            field='budget')

    pcs_file = _path(pairs, 'pcs_file', directory)
    try:
        space = parse_config_space(pcs_file)
    except ConfigSpaceError as e:
        raise ScenarioError(str(e), field='pcs_file')

    train_instance_file = _path(pairs, 'train_instance_file', directory)
    test_instance_file = _path(pairs, 'test_instance_file', directory)
    train = read_instance_list(train_instance_file)
    test = read_instance_list(test_instance_file)
    _check_instances(train, directory, 'train_instance_file')
    _check_instances(test, directory, 'test_instance_file')
    overlap = sorted(set(train) & set(test))
    if overlap:
        raise ScenarioError('train/test overlap: %s' % ', '.join(overlap[:5]),
                            field='test_instance_file')

    metric = _convert(pairs, 'metric')
    worst_quality = _convert(pairs, 'worst_quality')
    if metric == QUALITY and worst_quality is None:
        raise ScenarioError('required for metric quality',
                            field='worst_quality')

    cutoff_max = _convert(pairs, 'cutoff_time')
    wall_cutoff = _convert(pairs, 'wall_cutoff')
    if wall_cutoff is not None and wall_cutoff < cutoff_max:
        raise ScenarioError('must be >= cutoff_time', field='wall_cutoff')

    hooks = WrapperHooks(
        command_builder=_convert(pairs, 'command_builder', 'template'),
        output_parser=_convert(pairs, 'output_parser', 'exit_code'),
        solution_checker=_convert(pairs, 'solution_checker', 'none'),
    )

    command_template = _convert(pairs, 'command')
    if hooks.command_builder == 'template':
        unknown = [x for x in template_placeholders(command_template)
                   if x not in TEMPLATE_PLACEHOLDERS]
        if unknown:
            raise ScenarioError(
                'unknown placeholder(s): %s' % ', '.join(unknown),
                line=pairs['command'][1], field='command')

    param_format = _convert(pairs, 'param_format', '-{name} {value}')
    bad = [x for x in template_placeholders(param_format)
           if x not in ('name', 'value')]
    if bad:
        raise ScenarioError('unknown placeholder(s): %s' % ', '.join(bad),
                            field='param_format')

    deterministic = _convert(pairs, 'deterministic', False)

    execution = _convert(pairs, 'execution', EXECUTION_SANDBOX)
    landscape_file = _path(pairs, 'landscape_file', directory)
    if execution == EXECUTION_ORACLE and landscape_file is None:
        raise ScenarioError('oracle execution needs a landscape_file',
                            field='execution')

    reference_answers_file = _path(pairs, 'reference_answers', directory)
    reference_answers = {}
    if reference_answers_file is not None:
        reference_answers = read_reference_answers(reference_answers_file)

    return Scenario(
        command_template=command_template,
        space=space,
        train_instances=tuple(train),
        test_instances=tuple(test),
        cutoff_max=cutoff_max,
        memory_limit=_convert(pairs, 'memory_limit'),
        metric=metric,
        budget_runs=_convert(pairs, 'budget_runs'),
        budget_wallclock=_convert(pairs, 'budget_wallclock'),
        deterministic=deterministic,
        wrapper_hooks=hooks,
        temp_root=_path(pairs, 'temp_root', directory, must_exist=False),
        param_format=param_format,
        worst_quality=worst_quality,
        validation_seeds=_convert(pairs, 'validation_seeds',
                                  1 if deterministic else 3),
        seed_policy=_convert(pairs, 'seed_policy', MANAGED_SEEDS),
        max_seeds_per_instance=_convert(pairs, 'max_seeds_per_instance', 5),
        capping_multiplier=_convert(pairs, 'capping_multiplier', 2.0),
        grace=_convert(pairs, 'grace', 2.0),
        wall_cutoff=wall_cutoff,
        keep_artifacts=_convert(pairs, 'keep_artifacts', 'on_failure'),
        landscape_file=landscape_file,
        execution=execution,
        reference_answers=reference_answers,
        directory=os.path.normpath(os.path.abspath(directory)),
        pcs_file=pcs_file,
        train_instance_file=train_instance_file,
        test_instance_file=test_instance_file,
        reference_answers_file=reference_answers_file,
    )


def parse_scenario(path):
    directory = os.path.dirname(os.path.abspath(path))
    with open(path, 'r', encoding='utf-8') as fp:
        return parse_scenario_fp(fp, directory)


def _format_float(value):
    return repr(float(value))


def format_scenario(scenario):
    """
    Serialize a scenario back into the key = value format

    Paths are written out resolved, so the text parses to an equal
    Scenario from any file placed in the scenario's directory.
    """

    hooks = scenario.wrapper_hooks
    pairs = [
        ('command', scenario.command_template),
        ('pcs_file', scenario.pcs_file),
        ('train_instance_file', scenario.train_instance_file),
        ('test_instance_file', scenario.test_instance_file),
        ('cutoff_time', _format_float(scenario.cutoff_max)),
        ('memory_limit', _format_float(scenario.memory_limit)),
        ('metric', scenario.metric),
    ]
    if scenario.budget_runs is not None:
        pairs.append(('budget_runs', str(scenario.budget_runs)))
    if scenario.budget_wallclock is not None:
        pairs.append(('budget_wallclock',
                      _format_float(scenario.budget_wallclock)))
    pairs.extend([
        ('deterministic', 'true' if scenario.deterministic else 'false'),
        ('command_builder', hooks.command_builder),
        ('output_parser', hooks.output_parser),
        ('solution_checker', hooks.solution_checker),
        ('param_format', scenario.param_format),
        ('validation_seeds', str(scenario.validation_seeds)),
        ('seed_policy', str(scenario.seed_policy)),
        ('max_seeds_per_instance', str(scenario.max_seeds_per_instance)),
        ('capping_multiplier', _format_float(scenario.capping_multiplier)),
        ('grace', _format_float(scenario.grace)),
        ('keep_artifacts', scenario.keep_artifacts),
        ('execution', scenario.execution),
    ])
    optional = [
        ('worst_quality', scenario.worst_quality, _format_float),
        ('wall_cutoff', scenario.wall_cutoff, _format_float),
        ('temp_root', scenario.temp_root, str),
        ('landscape_file', scenario.landscape_file, str),
        ('reference_answers', scenario.reference_answers_file, str),
    ]
    for key, value, fmt in optional:
        if value is not None:
            pairs.append((key, fmt(value)))
    return ''.join('%s = %s\n' % (k, v) for k, v in pairs)


def resolve_temp_root(scenario=None, override=None, environ=None):
    """
    Pick the root directory for per-run temp dirs

    An explicit override (flag or harness config) wins, then the scenario's
    temp_root, then $TMPDIR, then /tmp.
    """

    if override:
        return override
    if scenario is not None and scenario.temp_root:
        return scenario.temp_root
    if environ is None:
        environ = os.environ
    return environ.get('TMPDIR') or '/tmp'


def filesystem_type(path):
    """type of the file system holding path, or None when unknown"""
    path = os.path.realpath(path)
    best = None
    for part in psutil.disk_partitions(all=True):
        mount = part.mountpoint
        if path == mount or path.startswith(mount.rstrip('/') + '/') or \
                mount == '/':
            if best is None or len(mount) > len(best.mountpoint):
                best = part
    return best.fstype if best is not None else None


def _solved_fraction(trial_results):
    statuses = trial_results.statuses
    total = 0
    solved = 0
    for row in statuses:
        for status in row:
            total += 1
            if status == SUCCESS:
                solved += 1
    if total == 0:
        return None
    return solved / total


def _mean_runtime(trial_results, cutoff_max):
    values = []
    for row in trial_results.cpu_times:
        for cpu_time in row:
            values.append(min(float(cpu_time), cutoff_max))
    if not values:
        return None
    return sum(values) / len(values)


def check_scenario(scenario, trial_results=None, temp_root=None):
    """
    Sanity check a scenario against experiment setup rules of thumb

    trial_results is an optional cost matrix of default configuration runs
    on a sample of training instances. Only warnings are produced; nothing
    here rejects a scenario.
    """

    warnings = []

    mean_runtime = None
    if trial_results is not None:
        fraction = _solved_fraction(trial_results)
        if fraction is not None and fraction < MIN_SOLVED_FRACTION:
            warnings.append(ScenarioWarning(
                'solvability',
                'default configuration solved %.0f%% of tried training '
                'instances within the cutoff; at least 75%% is recommended, '
                'otherwise use easier instances or a larger cutoff' % (
                    fraction * 100)))
        mean_runtime = _mean_runtime(trial_results, scenario.cutoff_max)

    if scenario.budget_wallclock is not None and mean_runtime:
        needed = MIN_BUDGET_DEFAULT_RUNS * mean_runtime
        if scenario.budget_wallclock < needed:
            warnings.append(ScenarioWarning(
                'budget',
                'budget of %.1fs covers only %.0f runs of the default '
                'configuration; a budget of 200 to 1000 times its mean '
                'runtime is recommended' % (
                    scenario.budget_wallclock,
                    scenario.budget_wallclock / mean_runtime)))
    elif scenario.budget_wallclock is None and \
            scenario.budget_runs is not None and \
            scenario.budget_runs < MIN_BUDGET_DEFAULT_RUNS:
        warnings.append(ScenarioWarning(
            'budget',
            'budget of %d runs; a budget of 200 to 1000 runs of the default '
            'configuration is recommended' % scenario.budget_runs))

    n_train = len(scenario.train_instances)
    if n_train < MIN_TRAIN_INSTANCES:
        warnings.append(ScenarioWarning(
            'train-size',
            'only %d training instances; at least 300 are recommended to '
            'avoid over-tuning to the training set' % n_train))

    if not scenario.deterministic and scenario.validation_seeds == 1:
        warnings.append(ScenarioWarning(
            'validation-seeds',
            'target is not deterministic but validation uses a single seed '
            'per instance; use several seeds per test instance'))

    for param in scenario.space:
        if 'seed' in param.name.lower():
            warnings.append(ScenarioWarning(
                'seed-like-parameter',
                'parameter %s looks like a random seed; seeds should be set '
                'by the configurator, not tuned' % param.name))

    root = resolve_temp_root(scenario, override=temp_root)
    fstype = filesystem_type(root) if os.path.exists(root) else None
    if fstype is not None and fstype.lower() in SHARED_FS_TYPES:
        warnings.append(ScenarioWarning(
            'shared-temp-dir',
            'temp root %s is on a shared %s file system; run outputs '
            'should be written to local disk' % (root, fstype)))

    return warnings
