from acharness.result import CRASHED
from acharness.result import SUCCESS
from acharness.sandbox import DEFAULT_POLL_INTERVAL
from acharness.sandbox import EXPERIMENT_ENV
from acharness.sandbox import scan_tagged
from collections import Counter
from collections import namedtuple
import math
import platform
import psutil


DEFAULT_THRESHOLDS = dict(
    wall_cpu_ratio=3.0,
    crash_rate=0.25,
    variance_ratio=5.0,
    overtuning_rho=0.5,
    load_per_core=1.5,
    memory_slack=0.05,
)

# short runs are dominated by process startup; wall/cpu is only judged
# once wall time exceeds cpu time by this much
WALL_CPU_MIN_GAP = 1.0
SWAP_PERCENT_WARNING = 10.0

HEALTHY = 'healthy'
WARNINGS = 'warnings'
ANOMALIES = 'anomalies'
HEALTH_EXIT_CODES = {HEALTHY: 0, WARNINGS: 1, ANOMALIES: 2}

ANOMALY_CUTOFF = 'cutoff not respected'
ANOMALY_REPORTED_RUNTIME = 'faulty self-reported runtime'
ANOMALY_NON_FINITE = 'non-finite measurement'
ANOMALY_MEMORY = 'memory limit exceeded'
ANOMALY_WALL_CPU = 'wallclock>>cpu'


def _finite(x):
    return x is None or (isinstance(x, (int, float)) and math.isfinite(x))


def sanity_check_result(result, request, reported_runtime=None,
                        resolution=DEFAULT_POLL_INTERVAL, memory_slack=0.05,
                        wall_cpu_ratio=3.0):
    """
    Flag results that point at a broken target, wrapper or machine

    reported_runtime is the runtime the target printed about itself; it is
    only judged here and never used as a cost.
    """

    anomalies = []

    if reported_runtime is not None and (
            not math.isfinite(reported_runtime) or reported_runtime < 0):
        anomalies.append('%s: %r' % (ANOMALY_REPORTED_RUNTIME,
                                     reported_runtime))

    for name in ('cost', 'cpu_time', 'wall_time', 'max_memory', 'quality'):
        value = getattr(result, name)
        if not _finite(value):
            anomalies.append('%s: %s=%r' % (ANOMALY_NON_FINITE, name, value))

    limits = request.limits
    cutoff = request.cutoff
    grace = limits.grace if limits is not None else 0.0
    if result.cpu_time > cutoff + grace + resolution:
        anomalies.append('%s: cpu=%.3f cutoff=%.3f' % (
            ANOMALY_CUTOFF, result.cpu_time, cutoff))

    memory_limit = limits.memory_limit if limits is not None else None
    if memory_limit is not None and \
            result.max_memory > memory_limit * (1.0 + memory_slack):
        anomalies.append('%s: mem=%.1f limit=%.1f' % (
            ANOMALY_MEMORY, result.max_memory, memory_limit))

    if result.status == SUCCESS and \
            result.wall_time > wall_cpu_ratio * result.cpu_time and \
            result.wall_time - result.cpu_time > WALL_CPU_MIN_GAP:
        anomalies.append('%s: wall=%.3f cpu=%.3f' % (
            ANOMALY_WALL_CPU, result.wall_time, result.cpu_time))

    return anomalies


def anomaly_kind(anomaly):
    return anomaly.split(':', 1)[0].strip()


def scan_orphans(experiment_tag, logger=None, env_key=EXPERIMENT_ENV):
    """
    pids of live processes still carrying the experiment's marker

    Processes whose environment cannot be read are skipped and reported
    through the logger.
    """
    scan = scan_tagged(experiment_tag, env_key=env_key)
    if scan.denied and logger is not None:
        logger.orphan_scan_denied(scan.denied)
    return sorted(p.pid for p in scan.processes)


HealthReport = namedtuple('HealthReport', [
    'status',
    'warnings',
    'anomaly_counts',
    'crash_rate',
    'n_challenger_runs',
    'final_costs',
    'run_variance_ratio',
    'orphans',
    'machine',
    'thresholds',
])


def health_report_to_dict(report):
    return dict(
        status=report.status,
        exit_code=HEALTH_EXIT_CODES[report.status],
        warnings=list(report.warnings),
        anomaly_counts=dict(report.anomaly_counts),
        crash_rate=report.crash_rate,
        n_challenger_runs=report.n_challenger_runs,
        final_costs=list(report.final_costs),
        run_variance_ratio=report.run_variance_ratio,
        orphans=list(report.orphans),
        machine=report.machine,
        thresholds=dict(report.thresholds),
    )


def final_train_cost(trajectory):
    entries = getattr(trajectory, 'entries', trajectory)
    if not entries:
        return None
    return entries[-1].train_cost


def variance_ratio(costs):
    if len(costs) < 2:
        return None
    lo = min(costs)
    hi = max(costs)
    if lo <= 0:
        return float('inf') if hi > 0 else 1.0
    return hi / lo


def experiment_health(run_log, trajectories, thresholds=None, orphans=(),
                      machine=None):
    """
    Summarize the monitoring signs of an experiment

    run_log is an iterable of run records as written to runs.jsonl and
    trajectories are the (possibly unfinished) trajectories of the
    independent configurator runs.
    """

    limits = dict(DEFAULT_THRESHOLDS)
    if thresholds:
        limits.update((k, v) for k, v in thresholds.items() if v is not None)

    warnings = []
    anomaly_counts = Counter()
    n_challenger = 0
    n_crashed = 0
    n_total = 0
    n_total_crashed = 0
    for record in run_log:
        result = record.get('result') or {}
        status = result.get('status')
        for anomaly in result.get('anomalies') or ():
            anomaly_counts[anomaly_kind(anomaly)] += 1
        n_total += 1
        if status == CRASHED:
            n_total_crashed += 1
        if record.get('role') == 'challenger':
            n_challenger += 1
            if status == CRASHED:
                n_crashed += 1

    # without race roles, e.g. pure validation logs, judge all runs
    if n_challenger == 0:
        n_challenger, n_crashed = n_total, n_total_crashed

    crash_rate = n_crashed / n_challenger if n_challenger else 0.0
    if crash_rate > limits['crash_rate']:
        warnings.append(
            'crash rate %.0f%% of %d challenger runs exceeds %.0f%%' % (
                crash_rate * 100, n_challenger, limits['crash_rate'] * 100))

    final_costs = []
    for trajectory in trajectories:
        cost = final_train_cost(trajectory)
        if cost is not None:
            final_costs.append(cost)
    ratio = variance_ratio(final_costs)
    if ratio is not None and ratio > limits['variance_ratio']:
        warnings.append(
            'final training costs of %d independent runs vary by a factor '
            'of %.1f (threshold %.1f)' % (
                len(final_costs), ratio, limits['variance_ratio']))

    if machine is not None:
        warnings.extend(machine.get('warnings', ()))

    orphans = sorted(orphans or ())
    if anomaly_counts or orphans:
        status = ANOMALIES
    elif warnings:
        status = WARNINGS
    else:
        status = HEALTHY

    return HealthReport(
        status=status,
        warnings=tuple(warnings),
        anomaly_counts=dict(sorted(anomaly_counts.items())),
        crash_rate=crash_rate,
        n_challenger_runs=n_challenger,
        final_costs=tuple(final_costs),
        run_variance_ratio=ratio,
        orphans=tuple(orphans),
        machine=machine,
        thresholds=limits,
    )


def machine_health(load_per_core=1.5):
    """snapshot of machine load and swapping as warnings"""
    warnings = []
    n_cores = psutil.cpu_count() or 1
    load1, load5, load15 = psutil.getloadavg()
    if load1 / n_cores > load_per_core:
        warnings.append('load average %.2f on %d cores; timings are '
                        'unreliable on a loaded machine' % (load1, n_cores))
    swap = psutil.swap_memory()
    if swap.percent >= SWAP_PERCENT_WARNING:
        warnings.append('machine is swapping: %.0f%% swap in use' %
                        swap.percent)
    return dict(
        load_average=[load1, load5, load15],
        cores=n_cores,
        swap_percent=swap.percent,
        warnings=warnings,
    )


def cpu_model():
    try:
        with open('/proc/cpuinfo') as fp:
            for line in fp:
                if line.lower().startswith('model name'):
                    return line.split(':', 1)[1].strip()
    except OSError:
        pass
    return platform.processor() or 'unknown'


def machine_fingerprint():
    """provenance of the measurements; results do not carry over machines"""
    return dict(
        hostname=platform.node(),
        cpu_model=cpu_model(),
        physical_cores=psutil.cpu_count(logical=False),
        logical_cores=psutil.cpu_count(),
        memory_mib=int(psutil.virtual_memory().total / (1024 * 1024)),
        platform=platform.platform(),
        python=platform.python_version(),
    )
