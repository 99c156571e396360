from acharness.configurator import mean_cost
from acharness.log import JsonConfiguratorLogger
from acharness.result import SUCCESS
from acharness.result import penalized_cost
from acharness.runner import threaded_runs
from acharness.utils import stable_hash_int
from acharness.wrapper import make_run_request
from collections import namedtuple
from scipy.stats import rankdata
import logging
import math
import numpy as np


OVERTUNING_RHO = 0.5

CostMatrix = namedtuple('CostMatrix', [
    'configs',
    'columns',
    'costs',
    'statuses',
    'cpu_times',
    'metric',
    'cutoff_max',
    'worst_quality',
])

OvertuningReport = namedtuple('OvertuningReport', [
    'pairs',
    'rho',
    'subset',
    'subset_pairs',
    'subset_rho',
    'flags',
])

ValidationPoint = namedtuple('ValidationPoint',
                             'elapsed config_id test_cost train_cost')

SeriesPoint = namedtuple('SeriesPoint', 'elapsed q25 median q75 n_runs')


def validation_seeds(instances, k, deterministic=False, base_seed=0):
    """
    k seeds per instance, shared by every validated configuration

    Drawn from their own stream, so they never coincide with the seeds a
    configurator run tuned on.
    """

    if deterministic:
        return dict((instance, [0]) for instance in instances)
    seeds = {}
    for instance in instances:
        rng = np.random.default_rng(
            stable_hash_int('validation', base_seed, instance))
        seeds[instance] = [int(x) for x in
                           rng.integers(0, 2 ** 63, size=k, dtype=np.int64)]
    return seeds


def validate_configs(configs, instances, k, scenario, runner, workers=1,
                     logger=None, base_seed=0, run_log=None):
    """
    Run every configuration on every (instance, seed) column with cutoff_max

    Runs go through runner, so validation uses the same wrapper path as the
    configurator. Any ABORT raises ExperimentAbort.
    """

    configs = list(configs)
    instances = list(instances)
    assert configs, 'nothing to validate'
    assert instances, 'no instances to validate on'
    assert k >= 1, 'need at least one seed per instance: %s' % k
    if logger is None:
        logger = JsonConfiguratorLogger(
            logging.getLogger('acharness.validation'))

    if scenario.deterministic and k > 1:
        logger.warning('deterministic target: validating with one seed per '
                       'instance instead of %d' % k)
        k = 1

    seeds = validation_seeds(instances, k, scenario.deterministic, base_seed)
    columns = [(instance, seed) for instance in instances
               for seed in seeds[instance]]
    cutoff_max = scenario.cutoff_max

    costs = np.zeros((len(configs), len(columns)))
    cpu_times = np.zeros((len(configs), len(columns)))
    statuses = []
    for row, config in enumerate(configs):
        requests = [make_run_request(scenario, config, instance, seed,
                                     cutoff_max, grace=runner.grace)
                    for instance, seed in columns]
        results = threaded_runs(requests, workers, runner)
        row_statuses = []
        for col, (request, result) in enumerate(zip(requests, results)):
            assert request.cutoff == cutoff_max, \
                'validation run with a reduced cutoff'
            costs[row, col] = penalized_cost(result, scenario.metric,
                                             cutoff_max,
                                             scenario.worst_quality)
            cpu_times[row, col] = result.cpu_time
            row_statuses.append(result.status)
            if run_log is not None:
                run_log.append(dict(
                    config_id=config.id,
                    instance=request.instance,
                    seed=request.seed,
                    status=result.status,
                    cost=float(costs[row, col]),
                ))
        statuses.append(row_statuses)
        logger.validation_progress(row + 1, len(configs))

    return CostMatrix(configs, columns, costs, statuses, cpu_times,
                      scenario.metric, cutoff_max, scenario.worst_quality)


def row_aggregates(matrix):
    return [mean_cost([float(c) for c in row]) for row in matrix.costs]


def aggregate_by_config(matrix):
    return dict((config.id, aggregate) for config, aggregate in
                zip(matrix.configs, row_aggregates(matrix)))


def summary_rows(matrix):
    """(config_id, aggregate, solved, runs) per validated configuration"""
    rows = []
    for config, aggregate, statuses in zip(
            matrix.configs, row_aggregates(matrix), matrix.statuses):
        solved = sum(1 for status in statuses if status == SUCCESS)
        rows.append((config.id, aggregate, solved, len(statuses)))
    return rows


def validation_rows(matrix):
    for row, config in enumerate(matrix.configs):
        for col, (instance, seed) in enumerate(matrix.columns):
            yield (config.id, instance, seed, matrix.statuses[row][col],
                   float(matrix.costs[row, col]))


def final_incumbent(trajectory):
    assert trajectory.entries, 'empty trajectory'
    return trajectory.entries[-1].config


def select_best_of_n(trajectories, train_matrix):
    """
    Final incumbent with the lowest training aggregate

    Ties go to the lower run seed. Only the training matrix is consulted.
    """

    if not trajectories:
        raise ValueError('no trajectories to select from')
    aggregates = aggregate_by_config(train_matrix)
    candidates = []
    for trajectory in trajectories:
        config = final_incumbent(trajectory)
        assert config.id in aggregates, \
            'final incumbent %s was not validated on training data' % \
            config.id
        candidates.append((aggregates[config.id], trajectory.run_seed,
                           config))
    candidates.sort(key=lambda x: (x[0], x[1]))
    return candidates[0][2]


def spearman(x, y):
    """
    Rank correlation with average ranks for ties

    Returns None when either side has no rank variance.
    """

    if len(x) != len(y):
        raise ValueError('length mismatch: %d != %d' % (len(x), len(y)))
    if len(x) < 2:
        raise ValueError('need at least 2 pairs, got %d' % len(x))
    rx = rankdata(x)
    ry = rankdata(y)
    if np.all(rx == rx[0]) or np.all(ry == ry[0]):
        return None
    rho = float(np.corrcoef(rx, ry)[0, 1])
    return max(-1.0, min(1.0, rho))


def _format_rho(rho):
    return 'undefined' if rho is None else '%.3f' % rho


def overtuning_report(train_costs, test_costs, subset=None,
                      threshold=OVERTUNING_RHO):
    """
    Compare training and test aggregates of the same configurations

    With subset, the correlation is also computed over the best subset
    fraction of configurations by training cost. Low correlation means
    the training set does not represent the test set.
    """

    assert len(train_costs) == len(test_costs), \
        'train and test aggregates cover different configurations'
    pairs = [(float(a), float(b)) for a, b in zip(train_costs, test_costs)]
    rho = spearman([a for a, _ in pairs], [b for _, b in pairs])

    flags = []
    if rho is None or rho < threshold:
        flags.append('train/test rank correlation %s over %d configurations '
                     'is below %.2f' % (_format_rho(rho), len(pairs),
                                        threshold))

    subset_pairs = None
    subset_rho = None
    if subset is not None:
        assert 0 < subset <= 1, 'subset must be a fraction: %s' % subset
        n = max(2, int(round(subset * len(pairs))))
        ranked = sorted(range(len(pairs)), key=lambda i: (pairs[i][0], i))
        subset_pairs = [pairs[i] for i in ranked[:n]]
        subset_rho = spearman([a for a, _ in subset_pairs],
                              [b for _, b in subset_pairs])
        if subset_rho is None or subset_rho < threshold:
            flags.append(
                'train/test rank correlation %s over the best %d '
                'configurations is below %.2f; instances look '
                'heterogeneous' % (_format_rho(subset_rho), n, threshold))

    return OvertuningReport(pairs, rho, subset, subset_pairs, subset_rho,
                            tuple(flags))


def overtuning_report_to_dict(report, config_ids=None):
    pairs = [dict(train=a, test=b) for a, b in report.pairs]
    if config_ids is not None:
        for pair, config_id in zip(pairs, config_ids):
            pair['config_id'] = config_id
    result = dict(
        scatter=pairs,
        rho=report.rho,
        subset=report.subset,
        subset_rho=report.subset_rho,
        flags=list(report.flags),
    )
    if report.subset_pairs is not None:
        result['subset_size'] = len(report.subset_pairs)
    return result


def trajectory_validation(trajectory, instances, scenario, k, runner,
                          train_instances=None, workers=1, logger=None,
                          base_seed=0, run_log=None):
    """
    Validate every incumbent of a trajectory

    Returns one point per trajectory entry, aligned to the time the
    incumbent took over. Training costs are only computed when
    train_instances are given.
    """

    assert trajectory.entries, 'empty trajectory'
    configs = []
    seen = set()
    for entry in trajectory.entries:
        if entry.config.id not in seen:
            seen.add(entry.config.id)
            configs.append(entry.config)

    test = aggregate_by_config(validate_configs(
        configs, instances, k, scenario, runner, workers, logger, base_seed,
        run_log))
    train = None
    if train_instances is not None:
        train = aggregate_by_config(validate_configs(
            configs, train_instances, k, scenario, runner, workers, logger,
            base_seed))

    points = []
    for entry in trajectory.entries:
        points.append(ValidationPoint(
            entry.elapsed, entry.config.id, test[entry.config.id],
            train[entry.config.id] if train is not None else None))
    return points


def _value_at(points, t, field):
    value = None
    for point in points:
        if point.elapsed <= t:
            value = getattr(point, field)
        else:
            break
    return value


def aggregate_series(series_list, field='test_cost'):
    """
    Median and quartiles across runs at every incumbent change time

    Each run contributes the value of its incumbent at that time; runs
    without an incumbent yet are left out.
    """

    times = sorted(set(p.elapsed for points in series_list for p in points))
    rows = []
    for t in times:
        values = [v for v in (_value_at(points, t, field)
                              for points in series_list)
                  if v is not None]
        if not values:
            continue
        q25, median, q75 = np.percentile(values, [25, 50, 75])
        rows.append(SeriesPoint(t, float(q25), float(median), float(q75),
                                len(values)))
    return rows


def make_report(overtuning=None, config_ids=None, summary=None,
                machine=None, thresholds=None):
    report = dict(machine_fingerprint=machine, thresholds=thresholds)
    if overtuning is not None:
        report['overtuning'] = overtuning_report_to_dict(overtuning,
                                                         config_ids)
    if summary is not None:
        report['summary'] = [
            dict(config_id=config_id,
                 cost=None if not math.isfinite(cost) else cost,
                 solved=solved, runs=runs)
            for config_id, cost, solved, runs in summary]
    return report
