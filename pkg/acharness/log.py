from acharness.utils import format_stacktrace_one_line
from enum import Enum
import json
import logging
import sys


def round_if_float(x, ndigits=6):
    try:
        return round(x, ndigits)
    except TypeError:
        # shouldn't practically happen, but prefer to just log the original
        # instead of explode
        return x


def make_run_dict(request):
    """helper function to make a dict from a run request for logging"""
    return dict(
        config_id=request.config.id,
        instance=request.instance,
        seed=request.seed,
        cutoff=round_if_float(request.cutoff),
    )


class LogLevel(Enum):
    DEBUG = logging.DEBUG
    INFO = logging.INFO
    WARNING = logging.WARNING
    ERROR = logging.ERROR


class LogCategory(Enum):
    LIFECYCLE = 1
    SANDBOX = 2
    RUN = 3
    RACE = 4
    VALIDATION = 5
    DIAGNOSTICS = 6


def log_level_name(log_level):
    return log_level.name.lower()


def log_category_name(log_category):
    return log_category.name.lower()


class JsonLogger(object):

    """Base json logger; every record is one json object per line"""

    category = LogCategory.LIFECYCLE

    def __init__(self, logger, run_id=None):
        self.logger = logger
        self.run_id = run_id

    def log(self, log_level, msg, exception=None, formatted_stacktrace=None,
            category=None, **extra):
        try:
            log_level_str = log_level_name(log_level)
            logging_log_level = log_level.value
        except Exception:
            sys.stderr.write('ERROR: code error: invalid log level: %s\n' %
                             log_level)
            log_level_str = log_level_name(LogLevel.ERROR)
            logging_log_level = logging.ERROR

        json_obj = dict(
            category=log_category_name(category or self.category),
            type=log_level_str,
            msg=msg,
        )
        if self.run_id is not None:
            json_obj['run_id'] = self.run_id
        if exception:
            json_obj['exception'] = str(exception)
        if formatted_stacktrace:
            json_obj['stacktrace'] = formatted_stacktrace
        json_obj.update(extra)
        json_str = json.dumps(json_obj, sort_keys=True)
        self.logger.log(logging_log_level, json_str)

    def lifecycle(self, msg, *args):
        if args:
            msg = msg % args
        self.log(LogLevel.INFO, msg, category=LogCategory.LIFECYCLE)

    def warning(self, msg, **extra):
        self.log(LogLevel.WARNING, msg, **extra)

    def error(self, msg, exception, **extra):
        stacktrace = format_stacktrace_one_line()
        self.log(LogLevel.ERROR, msg, exception, stacktrace, **extra)


class JsonSandboxLogger(JsonLogger):

    """Json logger for process jail events"""

    category = LogCategory.SANDBOX

    def spawned(self, tag, pid, command):
        self.log(LogLevel.DEBUG, 'spawned', tag=tag, pid=pid,
                 command=' '.join(command))

    def limit_hit(self, tag, limit, snapshot):
        self.log(LogLevel.INFO, 'limit hit', tag=tag, limit=limit,
                 cpu=round_if_float(snapshot.cpu_time),
                 wall=round_if_float(snapshot.wall_time),
                 mem=round_if_float(snapshot.max_memory))

    def terminated(self, tag, report):
        self.log(LogLevel.INFO, 'tree terminated', tag=tag,
                 soft_killed=report.soft_killed,
                 hard_killed=report.hard_killed)

    def unkillable(self, tag, pids):
        self.log(LogLevel.ERROR, 'unkillable processes', tag=tag, pids=pids)

    def orphan_scan_denied(self, n_denied):
        self.log(LogLevel.WARNING, 'process table partially unreadable',
                 denied=n_denied)


class JsonRunLogger(JsonLogger):

    """Json logger for wrapped target algorithm runs"""

    category = LogCategory.RUN

    def run_done(self, request, result):
        json_extra = make_run_dict(request)
        json_extra.update(
            status=result.status,
            cost=round_if_float(result.cost),
            cpu=round_if_float(result.cpu_time),
            wall=round_if_float(result.wall_time),
        )
        if result.anomalies:
            json_extra['anomalies'] = list(result.anomalies)
        if result.artifacts_dir:
            json_extra['artifacts'] = result.artifacts_dir
        self.log(LogLevel.INFO, 'run done', **json_extra)

    def hook_failed(self, request, detail):
        self.log(LogLevel.WARNING, 'output hook failed', detail=detail,
                 **make_run_dict(request))

    def aborted(self, request, exception):
        stacktrace = format_stacktrace_one_line()
        extra = make_run_dict(request) if request is not None else {}
        self.log(LogLevel.ERROR, 'run aborted', exception, stacktrace,
                 **extra)


class JsonConfiguratorLogger(JsonLogger):

    """Json logger for configurator and validation progress"""

    category = LogCategory.RACE

    def begin_run(self, run_seed):
        self.log(LogLevel.INFO, 'configurator run begin', run_seed=run_seed)

    def end_run(self, run_seed, n_runs, incumbent_id):
        self.log(LogLevel.INFO, 'configurator run end', run_seed=run_seed,
                 n_runs=n_runs, incumbent=incumbent_id)

    def incumbent_changed(self, incumbent_id, train_cost, n_pairs):
        self.log(LogLevel.INFO, 'new incumbent', incumbent=incumbent_id,
                 train_cost=round_if_float(train_cost), pairs=n_pairs)

    def race_done(self, race_id, challenger_id, decision, n_runs):
        self.log(LogLevel.DEBUG, 'race done', race=race_id,
                 challenger=challenger_id, decision=decision, n_runs=n_runs)

    def seed_policy_warning(self, policy):
        self.log(LogLevel.WARNING,
                 'fixed seed set in use; tuning may over-fit to these seeds',
                 seed_policy=str(policy))

    def validation_progress(self, n_done, n_total):
        self.log(LogLevel.INFO, 'validation progress',
                 category=LogCategory.VALIDATION, done=n_done, total=n_total)
