from acharness.log import JsonConfiguratorLogger
from acharness.result import SUCCESS
from acharness.result import TIMEOUT
from acharness.result import is_runtime_metric
from acharness.result import penalized_cost
from acharness.result import result_to_dict
from acharness.runner import check_not_aborted
from acharness.runner import make_runner
from acharness.space import sample_random_config
from acharness.stats import ConfiguratorStatsHandler
from acharness.stats import FakeStatsd
from acharness.wrapper import make_run_request
from collections import namedtuple
from time import monotonic
import logging
import numpy as np


# smallest cutoff adaptive capping hands out; a zero cutoff is never issued
CAP_FLOOR = 0.1

# consecutive races without a single new target run before giving up; only
# reachable on tiny spaces where every challenger is already cached
MAX_IDLE_RACES = 1000

KEEP = 'keep'
REPLACE = 'replace'

ROLE_INCUMBENT = 'incumbent'
ROLE_CHALLENGER = 'challenger'

FIXED_SET = 'fixed-set'


IncumbentStats = namedtuple('IncumbentStats', 'config evaluated aggregate')

class TrajectoryEntry(namedtuple('TrajectoryEntry',
                                 'elapsed target_cpu config train_cost')):
    """
    One incumbent change of a configurator run

    train_cost is the incumbent's aggregate over its (instance, seed) pairs
    at the time it took over. The pair list grows between entries, so these
    values are not comparable along a trajectory and need not decrease;
    compare incumbents with trajectory_validation on a fixed instance set.
    """

    __slots__ = ()

Trajectory = namedtuple('Trajectory', 'entries run_seed')

RaceOutcome = namedtuple('RaceOutcome', 'decision stats n_runs n_capped')


class BudgetExhausted(Exception):
    pass


def mean_cost(costs):
    return sum(costs) / len(costs)


def aggregate_cost(results, metric, cutoff_max, worst_quality=None):
    """
    Mean penalized cost of a list of results

    Unsuccessful runs count as the metric's penalty with respect to
    cutoff_max, never the cutoff they were run with.
    """

    if not results:
        raise ValueError('cannot aggregate an empty result list')
    return mean_cost([penalized_cost(r, metric, cutoff_max, worst_quality)
                      for r in results])


def make_incumbent_stats(config, evaluated):
    evaluated = tuple(evaluated)
    pairs = [(instance, seed) for instance, seed, _ in evaluated]
    assert len(set(pairs)) == len(pairs), \
        'duplicate (instance, seed) pair for %s' % config.id
    aggregate = None
    if evaluated:
        aggregate = mean_cost([cost for _, _, cost in evaluated])
    return IncumbentStats(config, evaluated, aggregate)


def extend_stats(stats, instance, seed, cost):
    return make_incumbent_stats(
        stats.config, stats.evaluated + ((instance, seed, cost),))


def adaptive_cap(incumbent_prefix_sum, spent, multiplier, cutoff_max):
    """cutoff that still lets the challenger match the incumbent's prefix"""
    assert incumbent_prefix_sum >= 0 and spent >= 0, \
        'capping inputs must be non-negative'
    assert multiplier >= 1, 'capping multiplier must be >= 1: %s' % multiplier
    return min(cutoff_max,
               max(CAP_FLOOR, multiplier * incumbent_prefix_sum - spent))


def draw_fixed_seeds(rng, k):
    if k < 1:
        raise ValueError('fixed seed set needs k >= 1, got %s' % k)
    return [int(x) for x in rng.integers(0, 2 ** 63, size=k, dtype=np.int64)]


def next_seed(policy, rng, pair_index, fixed_seeds=None,
              deterministic=False):
    """
    Seed for the pair_index-th (instance, seed) pair on an instance

    Deterministic targets always get seed 0. Managed seeds are fresh
    draws; a fixed set cycles through k seeds drawn once per run.
    """

    if deterministic:
        return 0
    if policy.kind == FIXED_SET:
        if policy.k is None or policy.k < 1:
            raise ValueError('fixed seed set needs k >= 1: %s' % (policy,))
        if fixed_seeds is None:
            fixed_seeds = draw_fixed_seeds(rng, policy.k)
        return fixed_seeds[pair_index % policy.k]
    return int(rng.integers(0, 2 ** 64, dtype=np.uint64))


class PairSchedule(object):

    """
    The ordered (instance, seed) pairs incumbents are evaluated on

    Instances are shuffled once; the list walks all instances with the
    first seed before any instance gets a second one.
    """

    def __init__(self, instances, policy, order_rng, seed_rng,
                 max_seeds_per_instance, deterministic=False):
        assert instances, 'no training instances'
        self.order = [instances[i] for i in
                      order_rng.permutation(len(instances))]
        self.policy = policy
        self.seed_rng = seed_rng
        self.deterministic = deterministic
        self.fixed_seeds = None
        if deterministic:
            seeds_per_instance = 1
        elif policy.kind == FIXED_SET:
            self.fixed_seeds = draw_fixed_seeds(seed_rng, policy.k)
            seeds_per_instance = min(max_seeds_per_instance, policy.k)
        else:
            seeds_per_instance = max_seeds_per_instance
        self.capacity = len(self.order) * seeds_per_instance
        self._seeds = []

    def __len__(self):
        return self.capacity

    def pair(self, index):
        assert 0 <= index < self.capacity, \
            'pair %d outside schedule of %d' % (index, self.capacity)
        n = len(self.order)
        while len(self._seeds) <= index:
            slot = len(self._seeds) // n
            self._seeds.append(next_seed(self.policy, self.seed_rng, slot,
                                         self.fixed_seeds,
                                         self.deterministic))
        return self.order[index % n], self._seeds[index]


def race_challenger(incumbent, challenger, scenario, run_fn,
                    multiplier=None):
    """
    Race a challenger against the incumbent on the incumbent's pairs

    run_fn(config, instance, seed, cutoff) runs the challenger. The
    challenger is rejected as soon as its cost sum on the shared prefix
    exceeds the incumbent's, and replaces the incumbent only with a
    strictly lower aggregate over the full list. With a multiplier, runtime
    metric runs are adaptively capped.
    """

    assert incumbent.evaluated, 'incumbent has no evaluated pairs'
    metric = scenario.metric
    cutoff_max = scenario.cutoff_max
    capping = multiplier is not None and is_runtime_metric(metric)

    evaluated = []
    incumbent_sum = 0.0
    challenger_sum = 0.0
    n_capped = 0
    for instance, seed, incumbent_cost in incumbent.evaluated:
        incumbent_sum += incumbent_cost
        cutoff = cutoff_max
        if capping:
            cutoff = adaptive_cap(incumbent_sum, challenger_sum, multiplier,
                                  cutoff_max)
        if cutoff < cutoff_max:
            n_capped += 1
        result = run_fn(challenger, instance, seed, cutoff)
        cost = penalized_cost(result, metric, cutoff_max,
                              scenario.worst_quality)
        evaluated.append((instance, seed, cost))
        if result.status == TIMEOUT and cutoff < cutoff_max:
            # the true runtime exceeds what could still match the incumbent
            return RaceOutcome(KEEP, incumbent, len(evaluated), n_capped)
        challenger_sum += cost
        if challenger_sum > incumbent_sum:
            return RaceOutcome(KEEP, incumbent, len(evaluated), n_capped)

    stats = make_incumbent_stats(challenger, evaluated)
    if stats.aggregate < incumbent.aggregate:
        return RaceOutcome(REPLACE, stats, len(evaluated), n_capped)
    return RaceOutcome(KEEP, incumbent, len(evaluated), n_capped)


def make_run_record(run_index, race_id, role, request, result):
    return dict(
        run_index=run_index,
        race_id=race_id,
        role=role,
        capped_cutoff=request.cutoff,
        request=dict(
            config_id=request.config.id,
            config=request.config.values,
            instance=request.instance,
            seed=request.seed,
            cutoff=request.cutoff,
        ),
        result=result_to_dict(result),
    )


class Configurator(object):

    """
    Random sampling configurator with racing and adaptive capping

    Starts from the default configuration, then races uniformly sampled
    challengers against the incumbent until the budget is spent. The
    incumbent's pair list grows by one after every race.
    """

    def __init__(self, scenario, runner, run_seed, logger=None, stats=None,
                 run_log=None, seed_policy=None, capping_multiplier=None,
                 max_seeds_per_instance=None, clock=monotonic,
                 max_idle_races=MAX_IDLE_RACES):
        self.scenario = scenario
        self.runner = runner
        self.run_seed = run_seed
        if logger is None:
            logger = JsonConfiguratorLogger(
                logging.getLogger('acharness.configurator'), run_id=run_seed)
        if stats is None:
            stats = ConfiguratorStatsHandler(FakeStatsd())
        self.logger = logger
        self.stats = stats
        self.run_log = run_log
        self.seed_policy = seed_policy or scenario.seed_policy
        multiplier = capping_multiplier or scenario.capping_multiplier
        self.multiplier = multiplier if is_runtime_metric(
            scenario.metric) else None
        self.max_seeds_per_instance = \
            max_seeds_per_instance or scenario.max_seeds_per_instance
        self.clock = clock
        self.max_idle_races = max_idle_races

        self.train_set = frozenset(scenario.train_instances)
        self.test_set = frozenset(scenario.test_instances)
        self.cache = {}
        self.n_runs = 0
        self.target_cpu = 0.0
        self.simulated_elapsed = 0.0
        self.started = None
        self.last_elapsed = 0.0
        self.out_of_budget = False
        # incumbent history so far; readable after an abort
        self.entries = []

    def elapsed(self):
        if self.runner.simulated:
            return self.simulated_elapsed
        return self.clock() - self.started

    def exhausted(self):
        scenario = self.scenario
        if scenario.budget_runs is not None and \
                self.n_runs >= scenario.budget_runs:
            return True
        if scenario.budget_wallclock is not None and \
                self.elapsed() >= scenario.budget_wallclock:
            return True
        return False

    def stamp(self):
        # trajectory times are strictly increasing even without new runs
        elapsed = max(self.elapsed(), self.last_elapsed + 1e-6)
        self.last_elapsed = elapsed
        return elapsed

    def cached(self, config, instance, seed, cutoff):
        result = self.cache.get((config.id, instance, seed))
        if result is None:
            return None
        if cutoff >= self.scenario.cutoff_max:
            return result
        if result.status == SUCCESS and result.cpu_time <= cutoff:
            return result
        return None

    def run(self, config, instance, seed, cutoff, race_id, role):
        assert instance in self.train_set and instance not in self.test_set, \
            'configurator issued a non-training instance: %s' % instance
        result = self.cached(config, instance, seed, cutoff)
        if result is not None:
            return result
        if self.exhausted():
            raise BudgetExhausted()

        request = make_run_request(self.scenario, config, instance, seed,
                                   cutoff, grace=self.runner.grace)
        result = self.runner(request)
        self.n_runs += 1
        self.target_cpu += result.cpu_time
        if self.runner.simulated:
            self.simulated_elapsed += result.wall_time
        if self.run_log is not None:
            self.run_log.append(make_run_record(
                self.n_runs, race_id, role, request, result))
        check_not_aborted(request, result)
        if cutoff >= self.scenario.cutoff_max:
            self.cache[(config.id, instance, seed)] = result
        return result

    def grow(self, stats, schedule, race_id):
        """evaluate stats' configuration on the next scheduled pair"""
        n = len(stats.evaluated)
        if n >= len(schedule):
            return stats
        instance, seed = schedule.pair(n)
        try:
            result = self.run(stats.config, instance, seed,
                              self.scenario.cutoff_max, race_id,
                              ROLE_INCUMBENT)
        except BudgetExhausted:
            self.out_of_budget = True
            return stats
        cost = penalized_cost(result, self.scenario.metric,
                              self.scenario.cutoff_max,
                              self.scenario.worst_quality)
        return extend_stats(stats, instance, seed, cost)

    def entry(self, stats):
        return TrajectoryEntry(self.stamp(), self.target_cpu, stats.config,
                               stats.aggregate)

    def configure(self):
        scenario = self.scenario
        self.started = self.clock()
        self.logger.begin_run(self.run_seed)
        if self.seed_policy.kind == FIXED_SET and not scenario.deterministic:
            self.logger.seed_policy_warning(self.seed_policy)

        order_ss, sample_ss, seed_ss = \
            np.random.SeedSequence(self.run_seed).spawn(3)
        sample_rng = np.random.default_rng(sample_ss)
        schedule = PairSchedule(
            list(scenario.train_instances), self.seed_policy,
            np.random.default_rng(order_ss), np.random.default_rng(seed_ss),
            self.max_seeds_per_instance, scenario.deterministic)

        incumbent = make_incumbent_stats(
            scenario.space.default_configuration(), ())
        entries = self.entries = []
        race_id = 0
        idle = 0
        try:
            incumbent = self.grow(incumbent, schedule, race_id)
            entries.append(self.entry(incumbent))
            if incumbent.evaluated:
                self.logger.incumbent_changed(
                    incumbent.config.id, incumbent.aggregate,
                    len(incumbent.evaluated))
            while incumbent.evaluated and not self.out_of_budget:
                race_id += 1
                challenger = sample_random_config(scenario.space, sample_rng)
                runs_before = self.n_runs

                def run_fn(config, instance, seed, cutoff):
                    return self.run(config, instance, seed, cutoff, race_id,
                                    ROLE_CHALLENGER)

                outcome = race_challenger(incumbent, challenger, scenario,
                                          run_fn, self.multiplier)
                self.logger.race_done(race_id, challenger.id,
                                      outcome.decision, outcome.n_runs)
                self.stats.race_done(outcome.decision, outcome.n_runs,
                                     outcome.n_capped)
                incumbent = outcome.stats
                if outcome.decision == REPLACE:
                    entries.append(self.entry(incumbent))
                    self.logger.incumbent_changed(
                        incumbent.config.id, incumbent.aggregate,
                        len(incumbent.evaluated))
                    self.stats.incumbent_changed(incumbent.aggregate,
                                                 len(incumbent.evaluated))
                incumbent = self.grow(incumbent, schedule, race_id)

                idle = idle + 1 if self.n_runs == runs_before else 0
                if idle >= self.max_idle_races:
                    self.logger.warning(
                        'no new target runs in %d races, stopping' % idle)
                    break
        except BudgetExhausted:
            pass

        last = entries[-1] if entries else None
        if last is None or last.config != incumbent.config or \
                last.train_cost != incumbent.aggregate:
            entries.append(self.entry(incumbent))

        self.logger.end_run(self.run_seed, self.n_runs, incumbent.config.id)
        return Trajectory(tuple(entries), self.run_seed)


def configure(scenario, run_seed, runner=None, cfg=None, **kwargs):
    """run one configurator run and return its trajectory"""
    if runner is None:
        runner = make_runner(scenario, cfg)
    return Configurator(scenario, runner, run_seed, **kwargs).configure()
