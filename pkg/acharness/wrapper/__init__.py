from acharness.diagnostics import sanity_check_result
from acharness.log import JsonRunLogger
from acharness.result import ABORT
from acharness.result import CRASHED
from acharness.result import MEMOUT
from acharness.result import SUCCESS
from acharness.result import TIMEOUT
from acharness.result import VERDICT_NOT_CHECKED
from acharness.result import VERDICT_WRONG_ANSWER
from acharness.result import make_run_result
from acharness.sandbox import DEFAULT_POLL_INTERVAL
from acharness.sandbox import LIMIT_CPU
from acharness.sandbox import LIMIT_MEMORY
from acharness.sandbox import LIMIT_WALL
from acharness.sandbox import SandboxAbort
from acharness.sandbox import default_wall_cutoff
from acharness.sandbox import execute_limited
from acharness.sandbox import make_resource_limits
from acharness.sandbox import make_run_tag
from acharness.scenario import resolve_path
from acharness.scenario import resolve_temp_root
from acharness.space import validate_config
from acharness.stats import FakeStatsd
from acharness.stats import RunStatsHandler
from acharness.utils import format_stacktrace_one_line
from acharness.utils import namedtuple_with_defaults
from acharness.wrapper.hooks import PartialResult
from acharness.wrapper.hooks import normalize_partial
from acharness.wrapper.hooks import resolve_output_parser
from acharness.wrapper.sat import DimacsError
from acharness.wrapper.sat import VerificationVerdict
from acharness.wrapper.sat import verify_sat_solution
from collections import namedtuple
from zope.dottedname.resolve import resolve
import logging
import math
import os
import shlex
import shutil
import sys


WIRE_FORMAT_VERSION = 1

RESULT_LINE_FORMAT = \
    'RESULT status=%s cost=%.6f cpu=%.6f wall=%.6f seed=%d'

HOOK_FAILURE_PREFIX = 'output hook failed: '


class WrapperAbort(Exception):
    pass


RunRequest = namedtuple('RunRequest', 'config instance seed cutoff limits')


class WrapperSettings(namedtuple_with_defaults(
        'WrapperSettings',
        'temp_root poll_interval keep_artifacts memory_slack wall_cpu_ratio '
        'grace experiment kill_tree',
        (None, DEFAULT_POLL_INTERVAL, 'on_failure', 0.05, 3.0, None, None,
         True))):
    pass


def make_wrapper_settings(scenario, cfg=None, temp_root=None,
                          experiment=None):
    """
    Combine scenario values with harness configuration

    Harness configuration values win over the scenario, an explicit
    temp_root wins over both.
    """

    kwargs = dict(
        keep_artifacts=scenario.keep_artifacts,
        grace=scenario.grace,
        experiment=experiment,
    )
    cfg_temp_root = None
    if cfg is not None:
        kwargs.update(
            poll_interval=cfg.poll_interval,
            memory_slack=cfg.memory_slack,
            wall_cpu_ratio=cfg.wall_cpu_ratio,
        )
        if cfg.grace is not None:
            kwargs['grace'] = cfg.grace
        if cfg.keep_artifacts and cfg.keep_artifacts != 'on_failure':
            kwargs['keep_artifacts'] = cfg.keep_artifacts
        cfg_temp_root = cfg.temp_root
    kwargs['temp_root'] = resolve_temp_root(
        scenario, override=temp_root or cfg_temp_root)
    return WrapperSettings(**kwargs)


def make_run_request(scenario, config, instance, seed, cutoff=None,
                     grace=None):
    if cutoff is None:
        cutoff = scenario.cutoff_max
    assert 0 < cutoff <= scenario.cutoff_max, \
        'cutoff %r outside (0, %r]' % (cutoff, scenario.cutoff_max)
    if grace is None:
        grace = scenario.grace
    wall_cutoff = scenario.wall_cutoff or default_wall_cutoff(cutoff)
    limits = make_resource_limits(cutoff, scenario.memory_limit,
                                  wall_cutoff=max(wall_cutoff, cutoff),
                                  grace=grace)
    return RunRequest(config, instance, int(seed), float(cutoff), limits)


def parse_call(argv, scenario, grace=None):
    """
    Parse a wrapper call of the form

        <instance> <info> <cutoff> <runlength> <seed> [-name value]...

    info and runlength are accepted and ignored. Any malformed
    call raises WrapperAbort, which must reach the configurator as ABORT.
    """

    if len(argv) < 5:
        raise WrapperAbort('expected at least 5 arguments, got %d' %
                           len(argv))
    instance, _, cutoff_text, _, seed_text = argv[:5]
    rest = argv[5:]

    try:
        cutoff = float(cutoff_text)
    except ValueError:
        raise WrapperAbort('bad cutoff: %r' % cutoff_text)
    if not (math.isfinite(cutoff) and 0 < cutoff <= scenario.cutoff_max):
        raise WrapperAbort('cutoff %r outside (0, %r]' % (
            cutoff_text, scenario.cutoff_max))

    try:
        seed = int(seed_text)
    except ValueError:
        raise WrapperAbort('bad seed: %r' % seed_text)
    if seed < 0:
        raise WrapperAbort('seed must be non-negative: %d' % seed)

    if instance not in scenario.train_instances and \
            instance not in scenario.test_instances:
        raise WrapperAbort('instance not in scenario: %s' % instance)

    if len(rest) % 2 != 0:
        raise WrapperAbort('parameter list must be -name value pairs')
    space = scenario.space
    values = {}
    for i in range(0, len(rest), 2):
        flag, value_text = rest[i], rest[i + 1]
        if not flag.startswith('-') or len(flag) < 2:
            raise WrapperAbort('expected -name, got %r' % flag)
        name = flag[1:]
        if name not in space:
            raise WrapperAbort('unknown parameter: %s' % name)
        if name in values:
            raise WrapperAbort('parameter given twice: %s' % name)
        try:
            values[name] = space[name].parse_value(value_text)
        except ValueError:
            raise WrapperAbort('bad value for %s: %r' % (name, value_text))

    config = space.make_configuration(values)
    violations = validate_config(space, config)
    if violations:
        raise WrapperAbort('invalid configuration: %s' %
                           '; '.join(violations))

    return make_run_request(scenario, config, instance, seed, cutoff,
                            grace=grace)


def format_cutoff(cutoff):
    # sub second cutoffs stay exact
    return repr(float(cutoff))


def render_params(config, space, param_format):
    tokens = []
    for param in space.parameters:
        if param.name not in config:
            continue
        rendered = param_format.format(
            name=param.name, value=param.format_value(config[param.name]))
        tokens.extend(shlex.split(rendered))
    return tokens


def render_template(request, scenario):
    """
    Expand the command template into an argv list

    A standalone {params} token expands into the parameter tokens; inside
    a larger token it expands to them joined by spaces. The instance is
    inserted exactly as the scenario lists it.
    """

    param_tokens = render_params(request.config, scenario.space,
                                 scenario.param_format)
    fields = dict(
        instance=request.instance,
        seed=request.seed,
        cutoff=format_cutoff(request.cutoff),
        python=sys.executable,
        params=' '.join(param_tokens),
    )
    argv = []
    for token in shlex.split(scenario.command_template):
        if token == '{params}':
            argv.extend(param_tokens)
            continue
        try:
            argv.append(token.format(**fields))
        except (KeyError, IndexError) as e:
            raise WrapperAbort('unresolved placeholder in %r: %s' % (
                token, e))
    return argv


def build_command(request, scenario):
    builder_name = scenario.wrapper_hooks.command_builder
    if builder_name == 'template':
        return render_template(request, scenario)
    builder = resolve(builder_name)
    argv = [str(x) for x in builder(request, scenario)]
    if not argv:
        raise WrapperAbort('command builder %s returned nothing' %
                           builder_name)
    return argv


def interpret_output(stdout_path, stderr_path, exit_code, parser_hook):
    """
    Map raw target output to a partial result through the parser hook

    Any failure inside the hook becomes a CRASHED result carrying the
    stacktrace; it never propagates.
    """

    try:
        parser = resolve_output_parser(parser_hook)
        return normalize_partial(parser(stdout_path, stderr_path, exit_code))
    except Exception:
        return PartialResult(
            CRASHED, detail=HOOK_FAILURE_PREFIX + '%s: %s' % (
                parser_hook, format_stacktrace_one_line()))


def make_run_workdir(temp_root, tag):
    workdir = os.path.join(temp_root, 'acrun-%s' % tag)
    os.makedirs(workdir)
    return workdir


def keep_artifacts_for(policy, result):
    if policy == 'always':
        return True
    if policy == 'never':
        return False
    # timeouts are routine under capping and keep nothing
    return result.status in (CRASHED, MEMOUT, ABORT)


def format_result_line(result):
    return RESULT_LINE_FORMAT % (result.status, result.cost,
                                 result.cpu_time, result.wall_time,
                                 result.seed)


def emit_result(result, out=None):
    if out is None:
        out = sys.stdout
    # a single write keeps concurrent records on separate lines
    out.write(format_result_line(result) + '\n')
    out.flush()


def abort_result(request, scenario, detail, seed=None):
    if seed is None:
        seed = request.seed if request is not None else 0
    return make_run_result(
        ABORT, scenario.metric, scenario.cutoff_max, 0.0, 0.0, 0.0, seed,
        detail=detail, worst_quality=scenario.worst_quality)


def _status_from_limit(limit_hit):
    if limit_hit in (LIMIT_CPU, LIMIT_WALL):
        return TIMEOUT
    if limit_hit == LIMIT_MEMORY:
        return MEMOUT
    return None


def _verify(request, scenario, partial):
    instance_path = resolve_path(scenario.directory, request.instance)
    reference = scenario.reference_answers.get(request.instance)
    try:
        return verify_sat_solution(instance_path, partial.claimed_answer,
                                   partial.model, reference)
    except (DimacsError, OSError) as e:
        return VerificationVerdict(
            VERDICT_NOT_CHECKED, 'instance unreadable for checking: %s' % e)


def run_request(request, scenario, settings=None, logger=None, stats=None):
    """
    Run one target call end to end and return its standardized result

    The command is built, run in the sandbox, its output parsed and
    optionally verified. Runtime costs always come from the sandbox's cpu
    accounting.
    """

    if settings is None:
        settings = make_wrapper_settings(scenario)
    if logger is None:
        logger = JsonRunLogger(logging.getLogger('acharness.run'))
    if stats is None:
        stats = RunStatsHandler(FakeStatsd())

    tag = make_run_tag()
    workdir = None
    try:
        argv = build_command(request, scenario)
        workdir = make_run_workdir(settings.temp_root, tag)
        outcome = execute_limited(
            argv, request.limits, workdir, cwd=scenario.directory,
            poll_interval=settings.poll_interval,
            kill_tree=settings.kill_tree, tag=tag,
            experiment=settings.experiment)
    except (SandboxAbort, WrapperAbort, OSError) as e:
        logger.aborted(request, e)
        stats.abort()
        result = abort_result(request, scenario, str(e))
        return result._replace(artifacts_dir=workdir)

    status = _status_from_limit(outcome.limit_hit)
    partial = None
    verdict = None
    detail = None
    if status is None:
        partial = interpret_output(outcome.stdout_path, outcome.stderr_path,
                                   outcome.exit_code,
                                   scenario.wrapper_hooks.output_parser)
        status = partial.status
        detail = partial.detail
        if detail and detail.startswith(HOOK_FAILURE_PREFIX):
            logger.hook_failed(request, detail)
            stats.hook_error()
        if status == SUCCESS and \
                scenario.wrapper_hooks.solution_checker == 'sat':
            verdict, detail = _verify(request, scenario, partial)
            if verdict == VERDICT_WRONG_ANSWER:
                status = CRASHED
    else:
        detail = '%s limit hit' % outcome.limit_hit

    # a target ignoring its soft kill may burn cpu until the hard kill;
    # the record never claims more than the limits allow
    limits = request.limits
    cpu_time = outcome.cpu_time
    if status == TIMEOUT:
        cpu_time = min(cpu_time, limits.cpu_cutoff + settings.poll_interval +
                       limits.grace)

    result = make_run_result(
        status, scenario.metric, scenario.cutoff_max, cpu_time,
        outcome.wall_time, outcome.max_memory, request.seed,
        exit_code=outcome.exit_code,
        quality=partial.quality if partial is not None else None,
        verdict=verdict, detail=detail,
        worst_quality=scenario.worst_quality)

    anomalies = sanity_check_result(
        result._replace(cpu_time=outcome.cpu_time), request,
        reported_runtime=partial.reported_runtime if partial else None,
        resolution=settings.poll_interval,
        memory_slack=settings.memory_slack,
        wall_cpu_ratio=settings.wall_cpu_ratio)
    if verdict == VERDICT_WRONG_ANSWER:
        anomalies.append('verdict=wrong_answer')
    if outcome.orphan_count_after:
        anomalies.append('orphans survived: %d' % outcome.orphan_count_after)
    if outcome.stale:
        anomalies.append('stale resource accounting')
    result = result._replace(anomalies=tuple(anomalies))

    if keep_artifacts_for(settings.keep_artifacts, result):
        result = result._replace(artifacts_dir=workdir)
    else:
        shutil.rmtree(workdir, ignore_errors=True)

    logger.run_done(request, result)
    stats.run_done(result)
    return result
