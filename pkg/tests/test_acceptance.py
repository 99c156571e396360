'''
End to end properties of the harness on synthetic targets.

Sizes are reduced by default; set ACHARNESS_ACCEPTANCE=1 for the full
repetition counts.
'''

from mock import Mock
from mock import patch
import os
import time
import unittest


REPO_ROOT = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))

FULL = os.environ.get('ACHARNESS_ACCEPTANCE') == '1'


def _scale(small, full):
    return full if FULL else small


class TempDirMixin(object):

    def setUp(self):
        from tempfile import mkdtemp
        self.tmp = mkdtemp()
        env_patch = patch.dict(os.environ, {'PYTHONPATH': REPO_ROOT})
        env_patch.start()
        self.addCleanup(env_patch.stop)

    def tearDown(self):
        import shutil
        shutil.rmtree(self.tmp)

    def _scenario(self, name, **kwargs):
        from acharness.scenario import parse_scenario
        from acharness.synthetic import write_synthetic_scenario
        return parse_scenario(write_synthetic_scenario(
            os.path.join(self.tmp, name), **kwargs))

    def _oracle(self, scenario):
        from acharness.runner import make_runner
        return make_runner(scenario, logger=Mock(), stats=Mock())


class TestSandboxTermination(TempDirMixin, unittest.TestCase):

    def _check_mode(self, mode):
        from acharness.sandbox import EXPERIMENT_ENV
        from acharness.sandbox import make_run_tag
        from acharness.sandbox import scan_tagged
        from acharness.wrapper import make_run_request
        from acharness.wrapper import make_wrapper_settings
        from acharness.wrapper import run_request
        grace = 0.3
        cutoff = 1.0
        scenario = self._scenario(mode, n_params=2, n_train=2, n_test=2,
                                  cutoff=cutoff, execution='sandbox',
                                  mode=mode)
        experiment = make_run_tag()
        runs = os.path.join(self.tmp, 'runs-' + mode)
        os.makedirs(runs)
        settings = make_wrapper_settings(scenario, temp_root=runs,
                                         experiment=experiment)
        settings = settings._replace(poll_interval=0.05, grace=grace)
        config = scenario.space.default_configuration()
        for i in range(_scale(3, 50)):
            request = make_run_request(scenario, config,
                                       scenario.train_instances[0], i,
                                       grace=grace)
            started = time.monotonic()
            result = run_request(request, scenario, settings, Mock(),
                                 Mock())
            elapsed = time.monotonic() - started
            self.assertEqual('TIMEOUT', result.status)
            self.assertLessEqual(elapsed, cutoff + 5 * grace + 1.0)
        scan = scan_tagged(experiment, env_key=EXPERIMENT_ENV)
        self.assertEqual([], scan.processes)

    def test_ignore_kill(self):
        self._check_mode('ignore_kill')

    def test_fork_escape(self):
        self._check_mode('fork_escape')


class TestCutoffFidelity(TempDirMixin, unittest.TestCase):

    def test_timeouts_near_cutoff(self):
        from acharness.wrapper import make_run_request
        from acharness.wrapper import make_wrapper_settings
        from acharness.wrapper import run_request
        import math
        scenario = self._scenario('busy', n_params=2, n_train=2, n_test=2,
                                  cutoff=2.5, execution='sandbox')
        runs = os.path.join(self.tmp, 'runs')
        os.makedirs(runs)
        settings = make_wrapper_settings(scenario, temp_root=runs)
        settings = settings._replace(poll_interval=0.05)
        config = scenario.space.default_configuration()
        trials = 0
        within = 0
        for cutoff in (0.5, 0.8, 1.0, 2.5):
            for i in range(_scale(1, 10)):
                request = make_run_request(
                    scenario, config, scenario.train_instances[0], i, cutoff)
                result = run_request(request, scenario, settings, Mock(),
                                     Mock())
                self.assertEqual('TIMEOUT', result.status)
                trials += 1
                if cutoff <= result.cpu_time <= cutoff + 1.0:
                    within += 1
        self.assertGreaterEqual(within, math.ceil(0.95 * trials))


class TestSolutionChecking(TempDirMixin, unittest.TestCase):

    def _costs(self, checker):
        from acharness.wrapper.sat import SAT
        from acharness.wrapper import make_run_request
        from acharness.wrapper import make_wrapper_settings
        from acharness.wrapper import run_request
        scenario = self._scenario(
            checker, n_params=2, n_train=20, n_test=4, cutoff=10.0,
            execution='sandbox', sat_instances=True, mode='wrong_answer',
            solution_checker=checker, time_scale=0.01)
        runs = os.path.join(self.tmp, 'runs-' + checker)
        os.makedirs(runs)
        settings = make_wrapper_settings(scenario, temp_root=runs)
        settings = settings._replace(poll_interval=0.05,
                                     keep_artifacts='never')
        satisfiable = [name for name in scenario.train_instances
                       if scenario.reference_answers[name] == SAT]
        config = scenario.space.default_configuration()
        costs = []
        for instance in satisfiable[:_scale(4, 20)]:
            request = make_run_request(scenario, config, instance, 0)
            costs.append(run_request(request, scenario, settings, Mock(),
                                     Mock()).cost)
        return costs

    def test_wrong_answers_cost_the_penalty(self):
        checked = self._costs('sat')
        unchecked = self._costs('none')
        self.assertEqual([100.0] * len(checked), checked)
        self.assertTrue(all(cost < 100.0 for cost in unchecked))


class TestPenalizedAggregation(unittest.TestCase):

    def test_matches_brute_force(self):
        from acharness.configurator import aggregate_cost
        from acharness.result import make_run_result
        import numpy as np
        rng = np.random.default_rng(11)
        statuses = ['SUCCESS', 'TIMEOUT', 'MEMOUT', 'CRASHED']
        cutoff_max = 7.5
        for _ in range(_scale(200, 1000)):
            results = []
            for _ in range(int(rng.integers(1, 30))):
                status = statuses[int(rng.integers(len(statuses)))]
                cpu = float(rng.uniform(0.0, cutoff_max))
                results.append(make_run_result(status, 'runtime_par10',
                                               cutoff_max, cpu, cpu, 0.0, 0))
            total = 0.0
            for result in results:
                if result.status == 'SUCCESS':
                    total += result.cpu_time
                else:
                    total += 10.0 * cutoff_max
            expected = total / len(results)
            self.assertEqual(expected, aggregate_cost(
                results, 'runtime_par10', cutoff_max))


class TestRacingEquivalence(unittest.TestCase):

    def test_capped_races_decide_like_full_evaluation(self):
        from acharness.configurator import make_incumbent_stats
        from acharness.configurator import race_challenger
        from acharness.result import make_run_result
        from acharness.space import sample_random_config
        from acharness.synthetic import make_bowl_space
        from acharness.synthetic import make_landscape
        from acharness.synthetic import synth_runtime
        import numpy as np
        rng = np.random.default_rng(5)
        space = make_bowl_space(3)
        cutoff_max = 1e6
        scenario = Mock(metric='runtime_par10', cutoff_max=cutoff_max,
                        worst_quality=None)
        instances = ['i%d' % i for i in range(10)]
        capped_cpu = 0.0
        full_cpu = 0.0
        for _ in range(200):
            optimum = dict(('x%d' % i, float(rng.uniform(2.0, 8.0)))
                           for i in range(3))
            hardness = dict((name, float(rng.uniform(0.5, 2.0)))
                            for name in instances)
            landscape = make_landscape('quadratic_bowl', space,
                                       dict(optimum=optimum), hardness)
            incumbent = sample_random_config(space, rng)
            challenger = sample_random_config(space, rng)
            stats = make_incumbent_stats(incumbent, [
                (name, 0, synth_runtime(landscape, incumbent, name, 0))
                for name in instances])
            full = [synth_runtime(landscape, challenger, name, 0)
                    for name in instances]
            full_cpu += sum(full)
            expected = 'replace' if sum(full) / len(full) < stats.aggregate \
                else 'keep'

            spent = []

            def run_fn(config, instance, seed, cutoff):
                runtime = synth_runtime(landscape, config, instance, seed)
                if runtime > cutoff:
                    spent.append(cutoff)
                    return make_run_result('TIMEOUT', 'runtime_par10',
                                           cutoff_max, cutoff, cutoff, 0.0,
                                           seed)
                spent.append(runtime)
                return make_run_result('SUCCESS', 'runtime_par10',
                                       cutoff_max, runtime, runtime, 0.0,
                                       seed)

            outcome = race_challenger(stats, challenger, scenario, run_fn,
                                      multiplier=1.0)
            capped_cpu += sum(spent)
            self.assertEqual(expected, outcome.decision)
        self.assertLessEqual(capped_cpu, 0.7 * full_cpu)


class TestConfiguratorProgress(TempDirMixin, unittest.TestCase):

    def test_incumbents_beat_default(self):
        from acharness.configurator import configure
        from acharness.evaluation import row_aggregates
        from acharness.evaluation import trajectory_validation
        from acharness.evaluation import validate_configs
        scenario = self._scenario('bowl', n_params=5, n_train=100,
                                  n_test=100, budget_runs=2000)
        runner = self._oracle(scenario)
        default_test = row_aggregates(validate_configs(
            [scenario.space.default_configuration()],
            scenario.test_instances, 1, scenario, runner,
            logger=Mock()))[0]
        for run_seed in range(_scale(2, 8)):
            trajectory = configure(scenario, run_seed, runner=runner,
                                   logger=Mock())
            points = trajectory_validation(
                trajectory, scenario.test_instances, scenario, 1, runner,
                train_instances=scenario.train_instances, logger=Mock())
            self.assertLessEqual(points[-1].test_cost, 0.2 * default_test)
            train = [p.train_cost for p in points]
            for earlier, later in zip(train, train[1:]):
                self.assertLessEqual(later, earlier + 1e-9)


class TestSeedOverTuning(TempDirMixin, unittest.TestCase):

    def _final(self, scenario, runner, policy, run_seed):
        from acharness.configurator import configure
        from acharness.evaluation import final_incumbent
        from acharness.evaluation import row_aggregates
        from acharness.evaluation import validate_configs
        from acharness.scenario import parse_seed_policy
        trajectory = configure(scenario, run_seed, runner=runner,
                               logger=Mock(),
                               seed_policy=parse_seed_policy(policy))
        test_cost = row_aggregates(validate_configs(
            [final_incumbent(trajectory)], scenario.test_instances, 3,
            scenario, runner, logger=Mock()))[0]
        return trajectory.entries[-1].train_cost, test_cost

    def test_fixed_seed_over_tunes(self):
        import numpy as np
        scenario = self._scenario('noise', kind='seed_noise', n_params=3,
                                  n_train=50, n_test=50, cutoff=3000.0,
                                  budget_runs=1000)
        runner = self._oracle(scenario)
        managed = []
        fixed = []
        fixed_train = []
        for run_seed in range(_scale(3, 10)):
            managed.append(self._final(scenario, runner, 'managed',
                                       run_seed)[1])
            train, test = self._final(scenario, runner, 'fixed-set(1)',
                                      run_seed)
            fixed.append(test)
            fixed_train.append(train)
        self.assertGreater(np.median(fixed), np.median(managed))
        self.assertLess(np.median(fixed_train), np.median(fixed))


class TestOvertuningDetection(TempDirMixin, unittest.TestCase):

    def _report(self, kind, seed, n_params):
        from acharness.evaluation import overtuning_report
        from acharness.space import sample_random_config
        from acharness.synthetic import load_landscape
        from acharness.synthetic import synth_runtime
        import numpy as np
        scenario = self._scenario('%s-%d' % (kind, seed), kind=kind,
                                  n_params=n_params, n_train=50, n_test=50,
                                  seed=seed)
        landscape = load_landscape(scenario.landscape_file)
        rng = np.random.default_rng(seed)
        configs = [sample_random_config(scenario.space, rng)
                   for _ in range(100)]

        def mean_cost(config, instances):
            return np.mean([synth_runtime(landscape, config, name, 0)
                            for name in instances])

        train = [mean_cost(c, scenario.train_instances) for c in configs]
        test = [mean_cost(c, scenario.test_instances) for c in configs]
        return overtuning_report(train, test)

    def test_heterogeneous_flagged(self):
        repetitions = _scale(3, 10)
        flagged = sum(1 for seed in range(repetitions)
                      if self._report('heterogeneous', seed, 3).flags)
        self.assertGreaterEqual(flagged, repetitions - 1 if FULL
                                else repetitions)

    def test_bowl_correlates(self):
        report = self._report('quadratic_bowl', 0, 2)
        self.assertGreater(report.rho, 0.95)
        self.assertEqual((), report.flags)

    def test_spearman_against_rank_oracle(self):
        from acharness.evaluation import spearman
        import numpy as np

        def average_ranks(values):
            ranks = [0.0] * len(values)
            for i, v in enumerate(values):
                below = sum(1 for w in values if w < v)
                equal = sum(1 for w in values if w == v)
                ranks[i] = below + (equal + 1) / 2.0
            return ranks

        rng = np.random.default_rng(2)
        for _ in range(100):
            x = rng.integers(0, 6, size=15).tolist()
            y = rng.integers(0, 6, size=15).tolist()
            rx = np.array(average_ranks(x))
            ry = np.array(average_ranks(y))
            dx = rx - rx.mean()
            dy = ry - ry.mean()
            denominator = np.sqrt((dx * dx).sum() * (dy * dy).sum())
            rho = spearman(x, y)
            if denominator == 0:
                self.assertIsNone(rho)
            else:
                self.assertAlmostEqual((dx * dy).sum() / denominator, rho,
                                       delta=1e-12)


class TestSingleWrapperPath(TempDirMixin, unittest.TestCase):

    def test_wrap_matches_internal_runs(self):
        from acharness.command import acharness_main
        from acharness.space import sample_random_config
        from acharness.wrapper import format_cutoff
        from acharness.wrapper import format_result_line
        from acharness.wrapper import make_run_request
        from acharness.wrapper import render_params
        from io import StringIO
        import numpy as np
        scenario = self._scenario('wrap', n_params=3, n_train=5, n_test=5)
        path = os.path.join(scenario.directory, 'scenario.txt')
        runner = self._oracle(scenario)
        rng = np.random.default_rng(9)
        for _ in range(_scale(20, 100)):
            config = sample_random_config(scenario.space, rng)
            instance = scenario.train_instances[
                int(rng.integers(len(scenario.train_instances)))]
            seed = int(rng.integers(0, 2 ** 31))
            cutoff = float(rng.uniform(1.0, scenario.cutoff_max))
            internal = format_result_line(runner(make_run_request(
                scenario, config, instance, seed, cutoff)))
            argv = ['wrap', path, instance, '0', format_cutoff(cutoff), '0',
                    str(seed)]
            argv.extend(render_params(config, scenario.space,
                                      scenario.param_format))
            with patch('sys.stdout', new_callable=StringIO) as stdout:
                self.assertEqual(0, acharness_main(argv))
            self.assertEqual(internal + '\n', stdout.getvalue())

    def _result_fields(self, line):
        fields = dict(token.split('=', 1) for token in line.split()[1:])
        return fields['status'], fields['cost'], fields['seed']

    def test_wrap_matches_sandboxed_runs(self):
        from acharness.command import acharness_main
        from acharness.runner import SandboxRunner
        from acharness.runner import make_runner
        from acharness.space import sample_random_config
        from acharness.wrapper import build_command
        from acharness.wrapper import format_cutoff
        from acharness.wrapper import format_result_line
        from acharness.wrapper import make_run_request
        from acharness.wrapper import parse_call
        from acharness.wrapper import render_params
        from acharness.wrapper.sat import SAT
        from io import StringIO
        import numpy as np
        # a wrong answer on a satisfiable instance is always CRASHED
        scenario = self._scenario(
            'wrap-sandbox', n_params=2, n_train=8, n_test=4, cutoff=10.0,
            execution='sandbox', sat_instances=True, mode='wrong_answer',
            solution_checker='sat', time_scale=0.01)
        path = os.path.join(scenario.directory, 'scenario.txt')
        runner = make_runner(scenario, temp_root=self.tmp, logger=Mock(),
                             stats=Mock())
        self.assertIsInstance(runner, SandboxRunner)
        satisfiable = [name for name in scenario.train_instances
                       if scenario.reference_answers[name] == SAT]
        rng = np.random.default_rng(4)
        for i in range(_scale(2, 10)):
            config = sample_random_config(scenario.space, rng)
            instance = satisfiable[i % len(satisfiable)]
            seed = int(rng.integers(0, 2 ** 31))
            request = make_run_request(scenario, config, instance, seed,
                                       scenario.cutoff_max,
                                       grace=runner.grace)
            call = [instance, '0', format_cutoff(scenario.cutoff_max), '0',
                    str(seed)]
            call.extend(render_params(config, scenario.space,
                                      scenario.param_format))

            parsed = parse_call(call, scenario, grace=runner.grace)
            self.assertEqual(request, parsed)
            self.assertEqual(build_command(request, scenario),
                             build_command(parsed, scenario))

            internal = format_result_line(runner(request))
            with patch('sys.stdout', new_callable=StringIO) as stdout:
                acharness_main(['wrap', '--temp-root', self.tmp, path] +
                               call)
            wrapped = stdout.getvalue().splitlines()[-1]
            self.assertEqual(('CRASHED', '100.000000', str(seed)),
                             self._result_fields(internal))
            self.assertEqual(self._result_fields(internal),
                             self._result_fields(wrapped))


class TestScenarioChecks(TempDirMixin, unittest.TestCase):

    def _codes(self, scenario, fstype='ext4'):
        from acharness.evaluation import validate_configs
        from acharness.scenario import check_scenario
        import numpy as np
        rng = np.random.default_rng(0)
        sample = [scenario.train_instances[i] for i in sorted(rng.choice(
            len(scenario.train_instances), size=10, replace=False))]
        trials = validate_configs([scenario.space.default_configuration()],
                                  sample, 1, scenario, self._oracle(scenario),
                                  logger=Mock())
        with patch('acharness.scenario.filesystem_type',
                   return_value=fstype):
            return [w.code for w in check_scenario(scenario, trials,
                                                   temp_root=self.tmp)]

    def test_healthy_reference(self):
        scenario = self._scenario('healthy', n_params=2, n_train=300,
                                  n_test=10)
        self.assertEqual([], self._codes(scenario))

    def test_every_violation(self):
        scenario = self._scenario(
            'violating', kind='seed_noise', n_params=2, n_train=10,
            n_test=10, cutoff=1.0, budget_runs=50,
            noise_scale=0.0,
            extra=dict(validation_seeds=1))
        self.assertEqual(['solvability', 'budget', 'train-size',
                          'validation-seeds', 'shared-temp-dir'],
                         self._codes(scenario, fstype='nfs'))
