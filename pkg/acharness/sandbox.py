from acharness.log import JsonSandboxLogger
from collections import namedtuple
from time import monotonic
import logging
import os
import psutil
import signal
import subprocess
import threading
import time
import uuid


# environment markers inherited by every process a run spawns; the orphan
# scans attribute survivors through them
RUN_TAG_ENV = 'ACHARNESS_RUN_TAG'
EXPERIMENT_ENV = 'ACHARNESS_EXPERIMENT'

DEFAULT_GRACE = 2.0
DEFAULT_POLL_INTERVAL = 0.1
MAX_POLL_INTERVAL = 0.5
# escalation gives up after this many grace periods
ABORT_GRACE_MULTIPLE = 5
REAP_INTERVAL = 0.02
SIGNAL_WAIT_INTERVAL = 0.05

MIB = 1024.0 * 1024.0

LIMIT_NONE = 'none'
LIMIT_CPU = 'cpu'
LIMIT_WALL = 'wall'
LIMIT_MEMORY = 'memory'


class SandboxAbort(Exception):

    def __init__(self, msg, record=None):
        super(SandboxAbort, self).__init__(msg)
        self.record = record or {}


ResourceLimits = namedtuple(
    'ResourceLimits', 'cpu_cutoff wall_cutoff memory_limit grace')


def default_wall_cutoff(cpu_cutoff):
    # catches targets that sleep instead of compute
    return max(2.0 * cpu_cutoff, cpu_cutoff + 30.0)


def make_resource_limits(cpu_cutoff, memory_limit, wall_cutoff=None,
                         grace=None):
    if grace is None:
        grace = DEFAULT_GRACE
    if wall_cutoff is None:
        wall_cutoff = default_wall_cutoff(cpu_cutoff)
    limits = ResourceLimits(float(cpu_cutoff), float(wall_cutoff),
                            memory_limit, float(grace))
    check_resource_limits(limits)
    return limits


def check_resource_limits(limits):
    assert limits.cpu_cutoff > 0, \
        'cpu_cutoff must be positive: %s' % limits.cpu_cutoff
    assert limits.wall_cutoff >= limits.cpu_cutoff, \
        'wall_cutoff %s below cpu_cutoff %s' % (
            limits.wall_cutoff, limits.cpu_cutoff)
    assert limits.grace > 0, 'grace must be positive: %s' % limits.grace


RawRunOutcome = namedtuple('RawRunOutcome', [
    'exit_code',
    'signal',
    'cpu_time',
    'wall_time',
    'max_memory',
    'stdout_path',
    'stderr_path',
    'watcher_path',
    'limit_hit',
    'orphan_count_after',
    'termination',
    'tag',
    'stale',
])

ResourceSnapshot = namedtuple(
    'ResourceSnapshot', 'cpu_time wall_time max_memory stale')

TerminationReport = namedtuple(
    'TerminationReport', 'soft_killed hard_killed unkillable')

EMPTY_TERMINATION = TerminationReport((), (), ())

TaggedScan = namedtuple('TaggedScan', 'processes denied')


def make_run_tag():
    return uuid.uuid4().hex[:16]


def is_alive(proc):
    """
    alive and not a zombie

    Zombies have finished; they only wait to be reaped by their parent.
    This never reaps anything itself, so the launcher keeps the exit
    status and resource usage of its own child.
    """
    try:
        return proc.is_running() and proc.status() != psutil.STATUS_ZOMBIE
    except psutil.NoSuchProcess:
        return False
    except psutil.AccessDenied:
        return True


def scan_tagged(tag, env_key=RUN_TAG_ENV, since=None, pgid=None):
    """
    Find live processes carrying the tag in their environment

    since is an epoch timestamp; processes created well before it are
    skipped without reading their environment. Processes whose
    environment cannot be read are counted as denied.
    """

    own_pid = os.getpid()
    found = []
    denied = 0
    for proc in psutil.process_iter(['pid', 'create_time']):
        if proc.pid == own_pid:
            continue
        create_time = proc.info.get('create_time')
        if since is not None and create_time is not None and \
                create_time < since - 1.0:
            continue
        try:
            matched = proc.environ().get(env_key) == tag
            if not matched and pgid is not None:
                matched = os.getpgid(proc.pid) == pgid
        except (psutil.NoSuchProcess, ProcessLookupError):
            continue
        except (psutil.AccessDenied, PermissionError):
            denied += 1
            continue
        if matched and is_alive(proc):
            found.append(proc)
    return TaggedScan(found, denied)


class ProcessGroup(object):

    """
    Handle on a launched target: its root process, session and run tag
    """

    def __init__(self, proc, tag, started, started_epoch):
        self.proc = proc
        self.pid = proc.pid
        # start_new_session makes the child the leader of its own group
        self.pgid = proc.pid
        self.tag = tag
        self.started = started
        self.started_epoch = started_epoch
        self.rusage = None
        self.reaped_at = None
        self._lock = threading.Lock()
        self._cpu_by_process = {}
        self._last = ResourceSnapshot(0.0, 0.0, 0.0, False)
        try:
            self._root = psutil.Process(proc.pid)
        except psutil.NoSuchProcess:
            self._root = None

    def members(self):
        found = {}
        root = self._root
        if root is not None and self.rusage is None:
            try:
                found[root.pid] = root
                for child in root.children(recursive=True):
                    found[child.pid] = child
            except psutil.NoSuchProcess:
                pass
        scan = scan_tagged(self.tag, since=self.started_epoch,
                           pgid=self.pgid)
        for proc in scan.processes:
            found.setdefault(proc.pid, proc)
        return [p for p in found.values() if is_alive(p)]

    def set_reaped(self, rusage):
        with self._lock:
            self.rusage = rusage
            self.reaped_at = monotonic()

    def _rusage_cpu(self):
        if self.rusage is None:
            return 0.0
        return self.rusage.ru_utime + self.rusage.ru_stime

    def _rusage_memory(self):
        if self.rusage is None:
            return 0.0
        # ru_maxrss is in KiB on linux
        return self.rusage.ru_maxrss / 1024.0

    def measure(self):
        with self._lock:
            stale = False
            try:
                members = self.members()
            except Exception:
                members = []
                stale = True

            rss_total = 0
            for proc in members:
                try:
                    with proc.oneshot():
                        times = proc.cpu_times()
                        rss = proc.memory_info().rss
                        key = (proc.pid, proc.create_time())
                except psutil.NoSuchProcess:
                    continue
                except psutil.AccessDenied:
                    stale = True
                    continue
                own = times.user + times.system
                self._cpu_by_process[key] = max(
                    self._cpu_by_process.get(key, 0.0), own)
                rss_total += rss

            cpu_time = max(sum(self._cpu_by_process.values()),
                           self._rusage_cpu(), self._last.cpu_time)
            end = self.reaped_at if self.reaped_at is not None \
                else monotonic()
            wall_time = max(end - self.started, self._last.wall_time)
            max_memory = max(rss_total / MIB, self._rusage_memory(),
                             self._last.max_memory)
            snapshot = ResourceSnapshot(cpu_time, wall_time, max_memory,
                                        stale)
            self._last = snapshot
            return snapshot

    @property
    def last(self):
        return self._last


def measure_resources(group):
    return group.measure()


def _signal_group(pgid, signum):
    try:
        os.killpg(pgid, signum)
    except (ProcessLookupError, PermissionError):
        pass


def _signal(proc, signum):
    try:
        proc.send_signal(signum)
        return True
    except (psutil.NoSuchProcess, psutil.AccessDenied):
        return False


def _wait_dead(group, deadline, signum, signalled):
    """poll until the tree is gone or the deadline passes

    Late members, e.g. forked while the first signal was in flight, get the
    same signal when they appear.
    """
    while True:
        alive = group.members()
        for proc in alive:
            if proc.pid not in signalled:
                if _signal(proc, signum):
                    signalled[proc.pid] = proc
        if not alive or monotonic() >= deadline:
            return alive
        time.sleep(SIGNAL_WAIT_INTERVAL)


def terminate_tree(group, grace, logger=None):
    """
    Stop every process of a run: SIGTERM, then SIGKILL after grace

    Covers the process group, descendants that changed group and tagged
    escapees that started their own session. Retries the hard kill for up
    to 5 grace periods, then raises SandboxAbort naming the survivors.
    """

    start = monotonic()
    soft = {}
    _signal_group(group.pgid, signal.SIGTERM)
    for proc in group.members():
        if _signal(proc, signal.SIGTERM):
            soft[proc.pid] = proc
    alive = _wait_dead(group, start + grace, signal.SIGTERM, soft)

    hard = {}
    abort_deadline = start + ABORT_GRACE_MULTIPLE * grace
    while alive:
        _signal_group(group.pgid, signal.SIGKILL)
        for proc in alive:
            if _signal(proc, signal.SIGKILL):
                hard[proc.pid] = proc
        alive = _wait_dead(group, min(monotonic() + grace, abort_deadline),
                           signal.SIGKILL, hard)
        if monotonic() >= abort_deadline:
            break

    if alive:
        pids = sorted(p.pid for p in alive)
        states = {}
        for proc in alive:
            try:
                states[proc.pid] = proc.status()
            except psutil.Error:
                states[proc.pid] = 'unknown'
        if logger is not None:
            logger.unkillable(group.tag, pids)
        raise SandboxAbort(
            'unkillable processes after %.1fs: %s' % (
                monotonic() - start, pids),
            record=dict(tag=group.tag, pids=pids, states=states))

    report = TerminationReport(
        soft_killed=tuple(sorted(pid for pid in soft if pid not in hard)),
        hard_killed=tuple(sorted(hard)),
        unkillable=(),
    )
    if logger is not None:
        logger.terminated(group.tag, report)
    return report


def merge_reports(first, second):
    hard = set(first.hard_killed) | set(second.hard_killed)
    soft = (set(first.soft_killed) | set(second.soft_killed)) - hard
    return TerminationReport(tuple(sorted(soft)), tuple(sorted(hard)),
                             tuple(first.unkillable) +
                             tuple(second.unkillable))


class Watcher(threading.Thread):

    """
    Thread that samples the run's resources and enforces its limits

    On a breach the whole tree is terminated from this thread; the
    launching thread only reaps the root.
    """

    def __init__(self, group, limits, poll_interval, log_fp, logger,
                 kill_tree=True):
        super(Watcher, self).__init__()
        self.name = 'Watcher-' + group.tag
        self.daemon = True
        self.group = group
        self.limits = limits
        self.poll_interval = poll_interval
        self.log_fp = log_fp
        self.logger = logger
        self.kill_tree = kill_tree
        self.finished = threading.Event()
        self.limit_hit = LIMIT_NONE
        self.report = EMPTY_TERMINATION
        self.error = None

    def breached(self, snapshot):
        limits = self.limits
        if snapshot.cpu_time >= limits.cpu_cutoff:
            return LIMIT_CPU
        if snapshot.wall_time >= limits.wall_cutoff:
            return LIMIT_WALL
        if limits.memory_limit is not None and \
                snapshot.max_memory > limits.memory_limit:
            return LIMIT_MEMORY
        return None

    def run(self):
        try:
            while not self.finished.is_set():
                snapshot = self.group.measure()
                self.log_fp.write('%.3f %.3f %.1f\n' % (
                    snapshot.wall_time, snapshot.cpu_time,
                    snapshot.max_memory))
                limit = self.breached(snapshot)
                if limit is not None:
                    self.limit_hit = limit
                    self.logger.limit_hit(self.group.tag, limit, snapshot)
                    self.stop_target()
                    return
                self.finished.wait(self.poll_interval)
        except Exception as e:
            self.error = e

    def stop_target(self):
        if self.kill_tree:
            self.report = terminate_tree(self.group, self.limits.grace,
                                         self.logger)
        else:
            # only the direct child is killed; whatever it spawned lives on
            try:
                os.kill(self.group.pid, signal.SIGKILL)
            except ProcessLookupError:
                pass

    def stop(self):
        self.finished.set()


def _decode_status(status):
    if os.WIFSIGNALED(status):
        signum = os.WTERMSIG(status)
        return -signum, signum
    return os.WEXITSTATUS(status), None


def execute_limited(command, limits, workdir, env=None, cwd=None,
                    poll_interval=DEFAULT_POLL_INTERVAL, kill_tree=True,
                    tag=None, experiment=None, logger=None):
    """
    Run command in its own session under cpu, wall and memory limits

    Output goes to stdout.log and stderr.log in workdir, samples and the
    final verdict to watcher.log. Returns once no process of the run
    remains. Raises SandboxAbort if the command cannot be spawned or the
    tree cannot be killed.
    """

    assert command, 'empty command'
    assert os.path.isdir(workdir), 'workdir missing: %s' % workdir
    assert 0 < poll_interval <= MAX_POLL_INTERVAL, \
        'poll interval out of range: %s' % poll_interval
    check_resource_limits(limits)
    if logger is None:
        logger = JsonSandboxLogger(logging.getLogger('acharness.sandbox'))
    if tag is None:
        tag = make_run_tag()

    run_env = dict(os.environ if env is None else env)
    run_env[RUN_TAG_ENV] = tag
    if experiment is not None:
        run_env[EXPERIMENT_ENV] = experiment
    # scratch files of the target land in the run's own directory
    run_env['TMPDIR'] = workdir

    stdout_path = os.path.join(workdir, 'stdout.log')
    stderr_path = os.path.join(workdir, 'stderr.log')
    watcher_path = os.path.join(workdir, 'watcher.log')

    with open(stdout_path, 'wb') as out_fp, \
            open(stderr_path, 'wb') as err_fp, \
            open(watcher_path, 'w') as watcher_fp:
        started_epoch = time.time()
        started = monotonic()
        try:
            proc = subprocess.Popen(
                command, stdin=subprocess.DEVNULL, stdout=out_fp,
                stderr=err_fp, cwd=cwd, env=run_env,
                start_new_session=True, close_fds=True)
        except (OSError, ValueError) as e:
            raise SandboxAbort('spawn failed: %s' % e,
                               record=dict(tag=tag, command=command))
        logger.spawned(tag, proc.pid, command)

        group = ProcessGroup(proc, tag, started, started_epoch)
        watcher = Watcher(group, limits, poll_interval, watcher_fp, logger,
                          kill_tree=kill_tree)
        watcher.start()

        backstop = started + limits.wall_cutoff + \
            ABORT_GRACE_MULTIPLE * limits.grace + 0.5
        try:
            while True:
                pid, status, rusage = os.wait4(proc.pid, os.WNOHANG)
                if pid != 0:
                    break
                if watcher.error is not None:
                    raise watcher.error
                if monotonic() > backstop:
                    raise SandboxAbort(
                        'run exceeded its wall backstop',
                        record=dict(tag=tag, pid=proc.pid))
                time.sleep(REAP_INTERVAL)
        except BaseException:
            watcher.stop()
            _signal_group(group.pgid, signal.SIGKILL)
            raise
        exit_code, signum = _decode_status(status)
        # keep Popen from trying to reap the pid again
        proc.returncode = exit_code
        group.set_reaped(rusage)

        watcher.stop()
        watcher.join()
        if watcher.error is not None:
            raise watcher.error
        report = watcher.report
        limit_hit = watcher.limit_hit

        if kill_tree:
            leftovers = group.members()
            if leftovers:
                report = merge_reports(
                    report, terminate_tree(group, limits.grace, logger))

        snapshot = group.measure()
        if limit_hit == LIMIT_NONE:
            # the run may have crossed a limit between two samples
            if snapshot.cpu_time >= limits.cpu_cutoff:
                limit_hit = LIMIT_CPU
            elif snapshot.wall_time >= limits.wall_cutoff:
                limit_hit = LIMIT_WALL
            elif limits.memory_limit is not None and \
                    snapshot.max_memory > limits.memory_limit:
                limit_hit = LIMIT_MEMORY

        scan = scan_tagged(tag, since=started_epoch)
        if scan.denied:
            logger.orphan_scan_denied(scan.denied)

        watcher_fp.write('VERDICT limit_hit=%s cpu=%.6f wall=%.6f mem=%.1f\n' %
                         (limit_hit, snapshot.cpu_time, snapshot.wall_time,
                          snapshot.max_memory))

    return RawRunOutcome(
        exit_code=exit_code,
        signal=signum,
        cpu_time=snapshot.cpu_time,
        wall_time=snapshot.wall_time,
        max_memory=snapshot.max_memory,
        stdout_path=stdout_path,
        stderr_path=stderr_path,
        watcher_path=watcher_path,
        limit_hit=limit_hit,
        orphan_count_after=len(scan.processes),
        termination=report,
        tag=tag,
        stale=snapshot.stale,
    )
