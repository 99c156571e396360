from acharness.utils import namedtuple_with_defaults
import math


SUCCESS = 'SUCCESS'
TIMEOUT = 'TIMEOUT'
MEMOUT = 'MEMOUT'
CRASHED = 'CRASHED'
# reserved for harness level failures; the configurator stops on it
ABORT = 'ABORT'
STATUSES = (SUCCESS, TIMEOUT, MEMOUT, CRASHED, ABORT)

RUNTIME_PAR10 = 'runtime_par10'
RUNTIME_PAR1 = 'runtime_par1'
QUALITY = 'quality'
METRICS = (RUNTIME_PAR10, RUNTIME_PAR1, QUALITY)

PENALTY_FACTORS = {
    RUNTIME_PAR10: 10,
    RUNTIME_PAR1: 1,
}

# anomaly and verdict annotations carried on results
VERDICT_VERIFIED = 'verified'
VERDICT_WRONG_ANSWER = 'wrong_answer'
VERDICT_NOT_CHECKED = 'not_checked'


class RunResult(namedtuple_with_defaults(
        'RunResult',
        'status cost cpu_time wall_time max_memory seed exit_code anomalies '
        'artifacts_dir quality verdict detail',
        (0.0, None, (), None, None, None, None))):

    @property
    def failed(self):
        return self.status != SUCCESS

    @property
    def is_wrong_answer(self):
        return self.verdict == VERDICT_WRONG_ANSWER


def is_runtime_metric(metric):
    return metric in PENALTY_FACTORS


def penalty_cost(metric, cutoff_max, worst_quality=None):
    """cost charged to any unsuccessful run under the metric"""
    if metric == QUALITY:
        assert worst_quality is not None, \
            'quality metric needs a worst_quality value'
        return float(worst_quality)
    factor = PENALTY_FACTORS[metric]
    return float(factor * cutoff_max)


def assign_cost(status, metric, cutoff_max, cpu_time, quality=None,
                worst_quality=None):
    if status == SUCCESS:
        if metric == QUALITY:
            if quality is None or not math.isfinite(quality):
                return penalty_cost(metric, cutoff_max, worst_quality)
            return float(quality)
        return float(cpu_time)
    return penalty_cost(metric, cutoff_max, worst_quality)


def penalized_cost(result, metric, cutoff_max, worst_quality=None):
    """per run cost as counted by aggregation

    Recomputed from the status so that a penalty always refers to the
    fixed cutoff_max, whatever cutoff the run itself was given.
    """
    if result.status == SUCCESS:
        return result.cost
    return penalty_cost(metric, cutoff_max, worst_quality)


def make_run_result(status, metric, cutoff_max, cpu_time, wall_time,
                    max_memory, seed, exit_code=None, anomalies=(),
                    artifacts_dir=None, quality=None, verdict=None,
                    detail=None, worst_quality=None):
    assert status in STATUSES, 'unknown status: %s' % status
    # measurements are clamped; negative values only come from broken
    # accounting and never from the target
    cpu_time = max(0.0, float(cpu_time))
    wall_time = max(0.0, float(wall_time))
    max_memory = max(0.0, float(max_memory))
    cost = assign_cost(status, metric, cutoff_max, cpu_time, quality,
                       worst_quality)
    return RunResult(
        status=status,
        cost=cost,
        cpu_time=cpu_time,
        wall_time=wall_time,
        max_memory=max_memory,
        seed=seed,
        exit_code=exit_code,
        anomalies=tuple(anomalies),
        artifacts_dir=artifacts_dir,
        quality=quality,
        verdict=verdict,
        detail=detail,
    )


def result_to_dict(result):
    return dict(
        status=result.status,
        cost=result.cost,
        cpu_time=result.cpu_time,
        wall_time=result.wall_time,
        max_memory=result.max_memory,
        seed=result.seed,
        exit_code=result.exit_code,
        anomalies=list(result.anomalies),
        artifacts_dir=result.artifacts_dir,
        quality=result.quality,
        verdict=result.verdict,
        detail=result.detail,
    )


def result_from_dict(d):
    fields = dict(d)
    fields['anomalies'] = tuple(fields.get('anomalies') or ())
    return RunResult(**fields)
