from acharness.result import CRASHED
from acharness.result import STATUSES
from acharness.result import SUCCESS
from acharness.wrapper.sat import SAT
from acharness.wrapper.sat import UNSAT
from acharness.utils import namedtuple_with_defaults
from zope.dottedname.resolve import resolve
import re
import subprocess


# exit codes of the sat competition convention
SAT_EXIT_CODES = (0, 10, 20)

EXEC_HOOK_PREFIX = 'exec:'
EXEC_HOOK_TIMEOUT = 60


class PartialResult(namedtuple_with_defaults(
        'PartialResult',
        'status quality claimed_answer model reported_runtime detail',
        (None, None, (), None, None))):
    pass


_RUNTIME_RE = re.compile(r'^(?:c\s+)?runtime\s*[:=]?\s*(?P<value>\S+)\s*$',
                         re.IGNORECASE)


def read_text(path):
    with open(path, 'r', errors='replace') as fp:
        return fp.read()


def find_reported_runtime(text):
    """the target's own runtime claim, kept only for anomaly checks"""
    for line in text.splitlines():
        m = _RUNTIME_RE.match(line.strip())
        if m:
            try:
                return float(m.group('value'))
            except ValueError:
                return float('nan')
    return None


def parse_exit_code_output(stdout_path, stderr_path, exit_code):
    text = read_text(stdout_path)
    status = SUCCESS if exit_code == 0 else CRASHED
    detail = None if exit_code == 0 else 'exit code %s' % exit_code
    return PartialResult(status, reported_runtime=find_reported_runtime(text),
                         detail=detail)


def parse_quality_output(stdout_path, stderr_path, exit_code):
    text = read_text(stdout_path)
    reported_runtime = find_reported_runtime(text)
    if exit_code != 0:
        return PartialResult(CRASHED, reported_runtime=reported_runtime,
                             detail='exit code %s' % exit_code)
    lines = [x.strip() for x in text.splitlines()
             if x.strip() and not _RUNTIME_RE.match(x.strip()) and
             not x.startswith('c ')]
    try:
        if len(lines) != 1:
            raise ValueError('expected a single value, got %d lines' %
                             len(lines))
        quality = float(lines[0])
    except ValueError as e:
        return PartialResult(CRASHED, reported_runtime=reported_runtime,
                             detail='unparseable quality: %s' % e)
    return PartialResult(SUCCESS, quality=quality,
                         reported_runtime=reported_runtime)


def parse_sat_output(stdout_path, stderr_path, exit_code):
    text = read_text(stdout_path)
    reported_runtime = find_reported_runtime(text)
    if exit_code not in SAT_EXIT_CODES:
        return PartialResult(CRASHED, reported_runtime=reported_runtime,
                             detail='exit code %s' % exit_code)

    answer = None
    model = []
    for line in text.splitlines():
        line = line.strip()
        if line.startswith('s '):
            claim = line[2:].strip().upper()
            if claim == 'SATISFIABLE':
                answer = SAT
            elif claim == 'UNSATISFIABLE':
                answer = UNSAT
        elif line.startswith('v '):
            for token in line[2:].split():
                try:
                    lit = int(token)
                except ValueError:
                    return PartialResult(
                        CRASHED, reported_runtime=reported_runtime,
                        detail='bad model literal %r' % token)
                if lit != 0:
                    model.append(lit)

    if answer is None:
        return PartialResult(CRASHED, reported_runtime=reported_runtime,
                             detail='no solution line')
    return PartialResult(SUCCESS, claimed_answer=answer, model=tuple(model),
                         reported_runtime=reported_runtime)


class ExecutableHook(object):

    """
    Output parser running an external program

    The program gets the stdout path, stderr path and exit code as
    arguments and prints `status [quality] [answer]` on one line.
    """

    def __init__(self, path, timeout=EXEC_HOOK_TIMEOUT):
        self.path = path
        self.timeout = timeout

    def __call__(self, stdout_path, stderr_path, exit_code):
        completed = subprocess.run(
            [self.path, stdout_path, stderr_path, str(exit_code)],
            stdout=subprocess.PIPE, stderr=subprocess.DEVNULL,
            timeout=self.timeout, check=True)
        fields = completed.stdout.decode('utf-8', 'replace').split()
        if not fields:
            raise ValueError('hook %s printed nothing' % self.path)
        status = fields[0].upper()
        quality = None
        answer = None
        for field in fields[1:]:
            if field.upper() in (SAT, UNSAT):
                answer = field.upper()
            elif quality is None:
                quality = float(field)
        reported_runtime = find_reported_runtime(read_text(stdout_path))
        return PartialResult(status, quality=quality, claimed_answer=answer,
                             reported_runtime=reported_runtime)


BUILTIN_OUTPUT_PARSERS = {
    'exit_code': parse_exit_code_output,
    'quality': parse_quality_output,
    'sat': parse_sat_output,
}


def resolve_output_parser(name):
    parser = BUILTIN_OUTPUT_PARSERS.get(name)
    if parser is not None:
        return parser
    if name.startswith(EXEC_HOOK_PREFIX):
        return ExecutableHook(name[len(EXEC_HOOK_PREFIX):])
    return resolve(name)


def normalize_partial(value):
    """hooks may return a PartialResult or a plain dict"""
    if isinstance(value, PartialResult):
        partial = value
    elif isinstance(value, dict):
        fields = dict(value)
        fields['status'] = str(fields.get('status', '')).upper()
        if 'model' in fields:
            fields['model'] = tuple(fields['model'] or ())
        partial = PartialResult(**fields)
    else:
        raise TypeError('output hook returned %r' % (value,))
    if partial.status not in STATUSES:
        raise ValueError('output hook returned unknown status %r' %
                         (partial.status,))
    return partial
