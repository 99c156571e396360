from acharness.utils import namedtuple_with_defaults
from acharness.utils import stable_hash_hex
from collections import namedtuple
import json
import math
import numpy as np
import re


REAL = 'real'
INTEGER = 'integer'
CATEGORICAL = 'categorical'
PARAMETER_KINDS = (REAL, INTEGER, CATEGORICAL)

# seeds are handled by the configurator and must never be tuned
RESERVED_PARAMETER_NAMES = ('seed',)


class ConfigSpaceError(ValueError):

    def __init__(self, msg, line=None, param=None):
        if line is not None:
            msg = 'line %d: %s' % (line, msg)
        super(ConfigSpaceError, self).__init__(msg)
        self.line = line
        self.param = param


Condition = namedtuple('Condition', 'parent value')


class Parameter(namedtuple_with_defaults(
        'Parameter', 'name kind default lo hi choices log_scale condition',
        (None, None, None, False, None))):

    def in_domain(self, value):
        if self.kind == CATEGORICAL:
            return value in self.choices
        if isinstance(value, bool):
            return False
        if self.kind == INTEGER:
            if not isinstance(value, (int, np.integer)):
                return False
        elif not isinstance(value, (int, float, np.integer, np.floating)):
            return False
        if not math.isfinite(value):
            return False
        return self.lo <= value <= self.hi

    def coerce(self, value):
        """best effort conversion of a python value to this kind

        Values that cannot be converted are returned unchanged so that
        validation can report them.
        """
        if self.kind == REAL:
            if isinstance(value, (int, float, np.integer, np.floating)) and \
                    not isinstance(value, bool):
                return float(value)
        elif self.kind == INTEGER:
            if isinstance(value, (np.integer, int)) and \
                    not isinstance(value, bool):
                return int(value)
            if isinstance(value, (float, np.floating)) and \
                    float(value).is_integer():
                return int(value)
        elif self.kind == CATEGORICAL:
            if not isinstance(value, str) and value is not None:
                return str(value)
        return value

    def parse_value(self, text):
        if self.kind == REAL:
            return float(text)
        elif self.kind == INTEGER:
            try:
                return int(text)
            except ValueError:
                as_float = float(text)
                if not as_float.is_integer():
                    raise ValueError('not an integer: %s' % text)
                return int(as_float)
        return text

    def format_value(self, value):
        if self.kind == REAL:
            return repr(float(value))
        return str(value)


def format_domain(param):
    if param.kind == CATEGORICAL:
        return '{%s}' % ','.join(param.choices)
    return '[%s,%s]' % (param.format_value(param.lo),
                        param.format_value(param.hi))


def check_parameter(param):
    name = param.name
    if name.lower() in RESERVED_PARAMETER_NAMES:
        raise ConfigSpaceError(
            'parameter %r is reserved: random seeds are managed by the '
            'configurator and are not tunable' % name, param=name)
    if param.kind not in PARAMETER_KINDS:
        raise ConfigSpaceError('%s: unknown kind %r' % (name, param.kind),
                               param=name)
    if param.kind == CATEGORICAL:
        if not param.choices:
            raise ConfigSpaceError('%s: empty categorical domain' % name,
                                   param=name)
        if len(set(param.choices)) != len(param.choices):
            raise ConfigSpaceError('%s: duplicate categorical values' % name,
                                   param=name)
        if param.log_scale:
            raise ConfigSpaceError('%s: log scale on a categorical' % name,
                                   param=name)
    else:
        if param.kind == REAL and not param.lo < param.hi:
            raise ConfigSpaceError('%s: empty range, need lo < hi' % name,
                                   param=name)
        if param.kind == INTEGER and not param.lo <= param.hi:
            raise ConfigSpaceError('%s: empty range, need lo <= hi' % name,
                                   param=name)
        if param.log_scale and param.lo <= 0:
            raise ConfigSpaceError('%s: log scale needs lo > 0' % name,
                                   param=name)
    if not param.in_domain(param.default):
        raise ConfigSpaceError(
            '%s: default %r outside domain %s' % (
                name, param.default, format_domain(param)), param=name)


class ConfigSpace(object):

    def __init__(self, parameters):
        self.parameters = tuple(parameters)
        self._by_name = {}
        for param in self.parameters:
            check_parameter(param)
            if param.name in self._by_name:
                raise ConfigSpaceError(
                    'duplicate parameter name: %s' % param.name,
                    param=param.name)
            self._by_name[param.name] = param

        for param in self.parameters:
            cond = param.condition
            if cond is None:
                continue
            parent = self._by_name.get(cond.parent)
            if parent is None:
                raise ConfigSpaceError(
                    '%s: unknown parent in condition: %s' % (
                        param.name, cond.parent), param=param.name)
            if not parent.in_domain(cond.value):
                raise ConfigSpaceError(
                    '%s: condition value %r not in domain of %s' % (
                        param.name, cond.value, cond.parent),
                    param=param.name)

        self.order = self._topological_order()

    def _topological_order(self):
        # parents before children, otherwise declaration order
        ordered = []
        placed = set()
        pending = list(self.parameters)
        while pending:
            remaining = []
            for param in pending:
                cond = param.condition
                if cond is None or cond.parent in placed:
                    ordered.append(param)
                    placed.add(param.name)
                else:
                    remaining.append(param)
            if len(remaining) == len(pending):
                names = ', '.join(p.name for p in remaining)
                raise ConfigSpaceError(
                    'condition cycle among: %s' % names,
                    param=remaining[0].name)
            pending = remaining
        return tuple(ordered)

    def __len__(self):
        return len(self.parameters)

    def __iter__(self):
        return iter(self.parameters)

    def __contains__(self, name):
        return name in self._by_name

    def __getitem__(self, name):
        return self._by_name[name]

    def __eq__(self, other):
        return isinstance(other, ConfigSpace) and \
            self.parameters == other.parameters

    def __ne__(self, other):
        return not self == other

    def __repr__(self):
        return 'ConfigSpace(%s)' % ', '.join(p.name for p in self.parameters)

    @property
    def names(self):
        return [p.name for p in self.parameters]

    def is_active(self, param, values):
        if isinstance(param, str):
            param = self._by_name[param]
        cond = param.condition
        if cond is None:
            return True
        parent = self._by_name[cond.parent]
        if not self.is_active(parent, values):
            return False
        return values.get(cond.parent) == cond.value

    def default_configuration(self):
        values = {}
        for param in self.order:
            if self.is_active(param, values):
                values[param.name] = param.default
        return Configuration(values)

    def make_configuration(self, values):
        coerced = {}
        for name, value in values.items():
            param = self._by_name.get(name)
            coerced[name] = param.coerce(value) if param else value
        return Configuration(coerced)


def config_id(values):
    canonical = json.dumps(values, sort_keys=True, separators=(',', ':'),
                           default=str)
    return stable_hash_hex(canonical)


class Configuration(object):

    """Immutable assignment of values to the active parameters"""

    __slots__ = ('_values', 'id')

    def __init__(self, values):
        object.__setattr__(self, '_values', dict(values))
        object.__setattr__(self, 'id', config_id(self._values))

    def __setattr__(self, name, value):
        raise AttributeError('Configuration is immutable')

    def __reduce__(self):
        return (Configuration, (self._values,))

    @property
    def values(self):
        return dict(self._values)

    def __getitem__(self, name):
        return self._values[name]

    def __contains__(self, name):
        return name in self._values

    def __len__(self):
        return len(self._values)

    def get(self, name, default=None):
        return self._values.get(name, default)

    def items(self):
        return sorted(self._values.items())

    def __eq__(self, other):
        return isinstance(other, Configuration) and self.id == other.id

    def __ne__(self, other):
        return not self == other

    def __hash__(self):
        return hash(self.id)

    def __repr__(self):
        return 'Configuration(%s %r)' % (self.id, self._values)

    def to_json(self):
        return json.dumps(self._values, sort_keys=True)


def configuration_from_json(space, text):
    values = json.loads(text)
    assert isinstance(values, dict), 'configuration json must be an object'
    return space.make_configuration(values)


def sample_random_config(space, rng):
    """
    draw a configuration uniformly from the space

    rng is a numpy Generator; the draw is deterministic given its state.
    Conditional children are only drawn when their parent makes them
    active.
    """

    values = {}
    for param in space.order:
        if not space.is_active(param, values):
            continue
        values[param.name] = _sample_value(param, rng)
    return Configuration(values)


def _sample_value(param, rng):
    if param.kind == CATEGORICAL:
        return param.choices[int(rng.integers(len(param.choices)))]

    if param.kind == REAL:
        if param.log_scale:
            value = math.exp(rng.uniform(math.log(param.lo),
                                         math.log(param.hi)))
        else:
            value = rng.uniform(param.lo, param.hi)
        return float(min(param.hi, max(param.lo, value)))

    if param.log_scale:
        value = int(round(math.exp(rng.uniform(math.log(param.lo),
                                               math.log(param.hi)))))
        return min(param.hi, max(param.lo, value))
    return int(rng.integers(param.lo, param.hi + 1))


def validate_config(space, config):
    values = config.values if isinstance(config, Configuration) else config
    violations = []
    for name in sorted(values):
        if name not in space:
            violations.append('unknown parameter: %s' % name)

    for param in space.order:
        name = param.name
        active = space.is_active(param, values)
        if not active:
            if name in values:
                violations.append('inactive parameter assigned: %s' % name)
            continue
        if name not in values:
            violations.append('missing value for active parameter: %s' %
                              name)
            continue
        value = values[name]
        if param.kind == INTEGER and not isinstance(
                value, (int, np.integer)):
            violations.append('%s not an integer' % name)
        elif param.kind == CATEGORICAL and not param.in_domain(value):
            violations.append('%s invalid choice %r' % (name, value))
        elif not param.in_domain(value):
            violations.append('%s out of range' % name)
    return violations


_PARAM_RE = re.compile(
    r'^(?P<name>[A-Za-z_][\w.\-]*)\s+'
    r'(?P<kind>\w+)\s+'
    r'(?P<domain>\[[^\]]*\]|\{[^}]*\})\s+'
    r'(?:default\s+)?(?P<default>\S+)'
    r'(?P<log>\s+log)?\s*$')

_CONDITION_RE = re.compile(
    r'^\s*(?P<parent>[A-Za-z_][\w.\-]*)\s*==\s*(?P<value>\S+)\s*$')


def _parse_domain(kind, domain_text, name):
    inner = domain_text[1:-1]
    if kind == CATEGORICAL:
        if not domain_text.startswith('{'):
            raise ConfigSpaceError('%s: categorical domain must be {...}' %
                                   name)
        choices = [x.strip() for x in inner.split(',')]
        if any(not x for x in choices):
            raise ConfigSpaceError('%s: empty categorical value' % name)
        return None, None, tuple(choices)

    if not domain_text.startswith('['):
        raise ConfigSpaceError('%s: numeric domain must be [lo,hi]' % name)
    bounds = [x.strip() for x in inner.split(',')]
    if len(bounds) != 2:
        raise ConfigSpaceError('%s: domain needs exactly two bounds' % name)
    convert = float if kind == REAL else int
    try:
        lo, hi = [convert(x) for x in bounds]
    except ValueError:
        raise ConfigSpaceError('%s: bad %s bounds %s' % (
            name, kind, domain_text))
    return lo, hi, None


def parse_parameter_line(line):
    """parse one pcs line into a Parameter with an unresolved condition

    The condition value stays a string until every parameter is known,
    since parents may be declared after their children.
    """

    condition = None
    if '|' in line:
        line, cond_text = line.split('|', 1)
        m = _CONDITION_RE.match(cond_text)
        if not m:
            raise ConfigSpaceError('bad condition: %s' % cond_text.strip())
        condition = Condition(m.group('parent'), m.group('value'))

    m = _PARAM_RE.match(line.strip())
    if not m:
        raise ConfigSpaceError('cannot parse parameter: %s' % line.strip())

    name = m.group('name')
    kind = m.group('kind')
    if kind not in PARAMETER_KINDS:
        raise ConfigSpaceError('%s: unknown kind %r' % (name, kind))
    lo, hi, choices = _parse_domain(kind, m.group('domain'), name)
    param = Parameter(name, kind, None, lo, hi, choices,
                      bool(m.group('log')), condition)
    try:
        default = param.parse_value(m.group('default'))
    except ValueError:
        raise ConfigSpaceError('%s: bad default %r' % (
            name, m.group('default')))
    return param._replace(default=default)


def parse_config_space_fp(fp):
    params = []
    lines_by_name = {}
    for lineno, raw_line in enumerate(fp, 1):
        line = raw_line.split('#', 1)[0].strip()
        if not line:
            continue
        try:
            param = parse_parameter_line(line)
        except ConfigSpaceError as e:
            raise ConfigSpaceError(str(e), line=lineno)
        params.append(param)
        lines_by_name.setdefault(param.name, lineno)

    by_name = dict((p.name, p) for p in params)
    resolved = []
    for param in params:
        cond = param.condition
        if cond is not None and cond.parent in by_name:
            parent = by_name[cond.parent]
            try:
                value = parent.parse_value(cond.value)
            except ValueError:
                raise ConfigSpaceError(
                    '%s: bad condition value %r' % (param.name, cond.value),
                    line=lines_by_name[param.name])
            param = param._replace(condition=Condition(cond.parent, value))
        resolved.append(param)

    try:
        return ConfigSpace(resolved)
    except ConfigSpaceError as e:
        if e.param is None:
            raise
        line = lines_by_name.get(e.param)
        raise ConfigSpaceError(str(e), line=line, param=e.param)


def parse_config_space(path):
    with open(path, 'r', encoding='utf-8') as fp:
        return parse_config_space_fp(fp)


def format_parameter(param):
    parts = [param.name, param.kind, format_domain(param),
             'default', param.format_value(param.default)]
    if param.log_scale:
        parts.append('log')
    line = ' '.join(parts)
    cond = param.condition
    if cond is not None:
        parent_value = str(cond.value)
        if isinstance(cond.value, float):
            parent_value = repr(cond.value)
        line += ' | %s==%s' % (cond.parent, parent_value)
    return line


def format_config_space(space):
    return ''.join(format_parameter(p) + '\n' for p in space.parameters)
