from acharness.log import JsonRunLogger
from acharness.result import ABORT
from acharness.result import QUALITY
from acharness.result import SUCCESS
from acharness.result import TIMEOUT
from acharness.result import make_run_result
from acharness.scenario import EXECUTION_ORACLE
from acharness.stats import FakeStatsd
from acharness.stats import RunStatsHandler
from acharness.synthetic import load_landscape
from acharness.synthetic import synth_runtime
from acharness.wrapper import make_wrapper_settings
from acharness.wrapper import run_request
import logging
import queue
import threading


# cpu charged to an oracle quality run; quality targets are not timed
ORACLE_QUALITY_CPU = 0.01


class ExperimentAbort(Exception):

    """a target run came back ABORT; the experiment cannot continue"""

    def __init__(self, msg, request=None, result=None):
        super(ExperimentAbort, self).__init__(msg)
        self.request = request
        self.result = result


class SandboxRunner(object):

    """Runs requests through the wrapper, one sandboxed process each"""

    simulated = False

    def __init__(self, scenario, settings=None, logger=None, stats=None):
        self.scenario = scenario
        self.settings = settings or make_wrapper_settings(scenario)
        self.grace = self.settings.grace
        self.logger = logger
        self.stats = stats

    def __call__(self, request):
        return run_request(request, self.scenario, self.settings,
                           self.logger, self.stats)


class OracleRunner(object):

    """
    Answers requests from a synthetic landscape's closed form

    Results follow the sandbox's conventions: runs longer than their cutoff
    are TIMEOUT with cpu time equal to the cutoff, and wall time equals cpu
    time, which is what the simulated clock advances by.
    """

    simulated = True
    grace = None

    def __init__(self, scenario, landscape, logger=None, stats=None):
        self.scenario = scenario
        self.landscape = landscape
        if logger is None:
            logger = JsonRunLogger(logging.getLogger('acharness.run'))
        if stats is None:
            stats = RunStatsHandler(FakeStatsd())
        self.logger = logger
        self.stats = stats

    def __call__(self, request):
        scenario = self.scenario
        value = synth_runtime(self.landscape, request.config,
                              request.instance, request.seed)
        if scenario.metric == QUALITY:
            result = make_run_result(
                SUCCESS, scenario.metric, scenario.cutoff_max,
                ORACLE_QUALITY_CPU, ORACLE_QUALITY_CPU, 0.0, request.seed,
                exit_code=0, quality=value,
                worst_quality=scenario.worst_quality)
        elif value > request.cutoff:
            result = make_run_result(
                TIMEOUT, scenario.metric, scenario.cutoff_max,
                request.cutoff, request.cutoff, 0.0, request.seed,
                detail='cpu limit hit',
                worst_quality=scenario.worst_quality)
        else:
            result = make_run_result(
                SUCCESS, scenario.metric, scenario.cutoff_max, value, value,
                0.0, request.seed, exit_code=0,
                worst_quality=scenario.worst_quality)
        self.logger.run_done(request, result)
        self.stats.run_done(result)
        return result


def make_runner(scenario, cfg=None, temp_root=None, experiment=None,
                logger=None, stats=None):
    if scenario.execution == EXECUTION_ORACLE:
        landscape = load_landscape(scenario.landscape_file)
        return OracleRunner(scenario, landscape, logger, stats)
    settings = make_wrapper_settings(scenario, cfg, temp_root=temp_root,
                                     experiment=experiment)
    return SandboxRunner(scenario, settings, logger, stats)


def check_not_aborted(request, result):
    if result.status == ABORT:
        raise ExperimentAbort(
            'target run aborted on %s seed %d: %s' % (
                request.instance, request.seed, result.detail),
            request, result)
    return result


def threaded_runs(requests, n_threads, runner):
    """
    Run requests on n_threads worker threads

    Results come back in request order. After the first ABORT, remaining
    requests are skipped and ExperimentAbort is raised once all threads
    have stopped.
    """

    requests = list(requests)
    if n_threads <= 1 or len(requests) <= 1:
        return [check_not_aborted(r, runner(r)) for r in requests]

    input_queue = queue.Queue(n_threads * 10)
    output_queue = queue.Queue(len(requests))
    stop = threading.Event()

    def _run():
        while True:
            item = input_queue.get()
            if item is None:
                break
            index, request = item
            if stop.is_set():
                output_queue.put((index, None))
                continue
            result = runner(request)
            if result.status == ABORT:
                stop.set()
            output_queue.put((index, result))

    run_threads = []
    for i in range(n_threads):
        run_thread = threading.Thread(target=_run)
        run_thread.start()
        run_threads.append(run_thread)

    for item in enumerate(requests):
        input_queue.put(item)
    for run_thread in run_threads:
        input_queue.put(None)

    results = [None] * len(requests)
    for i in range(len(requests)):
        index, result = output_queue.get()
        results[index] = result

    for run_thread in run_threads:
        run_thread.join()

    for request, result in zip(requests, results):
        if result is not None:
            check_not_aborted(request, result)
    return results
