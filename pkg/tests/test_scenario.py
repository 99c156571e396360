from mock import patch
import unittest


SCENARIO = '''\
# a small sat scenario
command = ./solver {instance} --seed {seed} --cutoff {cutoff} {params}
pcs_file = params.pcs
train_instance_file = train.txt
test_instance_file = test.txt
cutoff_time = 10
memory_limit = 512
metric = runtime_par10
budget_runs = 500
'''


class ScenarioDirMixin(object):

    def setUp(self):
        from tempfile import mkdtemp
        self.tmp = mkdtemp()
        self._write('params.pcs', 'x real [0,10] default 0\n'
                                  'y integer [0,10] default 5\n')
        for name in ('a.cnf', 'b.cnf', 'c.cnf'):
            self._write(name, 'p cnf 1 1\n1 0\n')
        self._write('train.txt', 'a.cnf\nb.cnf\n')
        self._write('test.txt', 'c.cnf\n')

    def tearDown(self):
        import shutil
        shutil.rmtree(self.tmp)

    def _write(self, name, text):
        import os
        path = os.path.join(self.tmp, name)
        with open(path, 'w') as fp:
            fp.write(text)
        return path

    def _parse(self, text=SCENARIO):
        from acharness.scenario import parse_scenario
        return parse_scenario(self._write('scenario.txt', text))


class TestParseScenario(ScenarioDirMixin, unittest.TestCase):

    def test_parse(self):
        import os
        from acharness.scenario import EXECUTION_SANDBOX
        from acharness.scenario import MANAGED_SEEDS
        scenario = self._parse()
        self.assertEqual(('a.cnf', 'b.cnf'), scenario.train_instances)
        self.assertEqual(('c.cnf',), scenario.test_instances)
        self.assertEqual(10.0, scenario.cutoff_max)
        self.assertEqual(512.0, scenario.memory_limit)
        self.assertEqual('runtime_par10', scenario.metric)
        self.assertEqual(500, scenario.budget_runs)
        self.assertIsNone(scenario.budget_wallclock)
        self.assertFalse(scenario.deterministic)
        self.assertEqual(3, scenario.validation_seeds)
        self.assertEqual(MANAGED_SEEDS, scenario.seed_policy)
        self.assertEqual(5, scenario.max_seeds_per_instance)
        self.assertEqual(2.0, scenario.capping_multiplier)
        self.assertEqual(EXECUTION_SANDBOX, scenario.execution)
        self.assertEqual('exit_code', scenario.wrapper_hooks.output_parser)
        self.assertEqual(os.path.join(self.tmp, 'params.pcs'),
                         scenario.pcs_file)
        self.assertEqual(['x', 'y'], scenario.space.names)

    def test_deterministic_defaults_to_one_validation_seed(self):
        scenario = self._parse(SCENARIO + 'deterministic = true\n')
        self.assertTrue(scenario.deterministic)
        self.assertEqual(1, scenario.validation_seeds)

    def test_fixed_seed_policy(self):
        scenario = self._parse(SCENARIO + 'seed_policy = fixed-set(4)\n')
        self.assertEqual('fixed-set', scenario.seed_policy.kind)
        self.assertEqual(4, scenario.seed_policy.k)

    def test_train_test_overlap(self):
        from acharness.scenario import ScenarioError
        self._write('test.txt', 'c.cnf\nb.cnf\n')
        with self.assertRaises(ScenarioError) as cm:
            self._parse()
        self.assertIn('b.cnf', str(cm.exception))
        self.assertEqual('test_instance_file', cm.exception.field)

    def test_missing_instance_file(self):
        from acharness.scenario import ScenarioError
        self._write('train.txt', 'a.cnf\nmissing.cnf\n')
        with self.assertRaises(ScenarioError) as cm:
            self._parse()
        self.assertIn('missing.cnf', str(cm.exception))

    def test_duplicate_instance(self):
        from acharness.scenario import ScenarioError
        self._write('train.txt', 'a.cnf\na.cnf\n')
        with self.assertRaises(ScenarioError):
            self._parse()

    def test_missing_required_key(self):
        from acharness.scenario import ScenarioError
        text = SCENARIO.replace('memory_limit = 512\n', '')
        with self.assertRaises(ScenarioError) as cm:
            self._parse(text)
        self.assertEqual('memory_limit', cm.exception.field)

    def test_needs_a_budget(self):
        from acharness.scenario import ScenarioError
        text = SCENARIO.replace('budget_runs = 500\n', '')
        with self.assertRaises(ScenarioError):
            self._parse(text)

    def test_unknown_key(self):
        from acharness.scenario import ScenarioError
        with self.assertRaises(ScenarioError) as cm:
            self._parse(SCENARIO + 'paramfile = x\n')
        self.assertEqual(10, cm.exception.line)

    def test_duplicate_key(self):
        from acharness.scenario import ScenarioError
        with self.assertRaises(ScenarioError):
            self._parse(SCENARIO + 'cutoff_time = 5\n')

    def test_bad_value_reports_line(self):
        from acharness.scenario import ScenarioError
        text = SCENARIO.replace('cutoff_time = 10', 'cutoff_time = -1')
        with self.assertRaises(ScenarioError) as cm:
            self._parse(text)
        self.assertEqual(6, cm.exception.line)
        self.assertEqual('cutoff_time', cm.exception.field)

    def test_unknown_placeholder(self):
        from acharness.scenario import ScenarioError
        text = SCENARIO.replace('{params}', '{parameters}')
        with self.assertRaises(ScenarioError) as cm:
            self._parse(text)
        self.assertIn('parameters', str(cm.exception))

    def test_quality_needs_worst_quality(self):
        from acharness.scenario import ScenarioError
        text = SCENARIO.replace('runtime_par10', 'quality')
        with self.assertRaises(ScenarioError):
            self._parse(text)
        scenario = self._parse(text + 'worst_quality = 1000\n')
        self.assertEqual(1000.0, scenario.worst_quality)

    def test_wall_cutoff_below_cpu_cutoff(self):
        from acharness.scenario import ScenarioError
        with self.assertRaises(ScenarioError):
            self._parse(SCENARIO + 'wall_cutoff = 5\n')

    def test_oracle_needs_landscape(self):
        from acharness.scenario import ScenarioError
        with self.assertRaises(ScenarioError):
            self._parse(SCENARIO + 'execution = oracle\n')

    def test_command_may_contain_hash(self):
        text = SCENARIO.replace('{params}', '{params} # not a comment')
        scenario = self._parse(text)
        self.assertTrue(scenario.command_template.endswith('# not a comment'))

    def test_reference_answers(self):
        self._write('answers.txt', 'a.cnf SAT\nb.cnf unsatisfiable\n')
        scenario = self._parse(SCENARIO + 'reference_answers = answers.txt\n')
        self.assertEqual({'a.cnf': 'SAT', 'b.cnf': 'UNSAT'},
                         scenario.reference_answers)

    def test_format_round_trip(self):
        from acharness.scenario import format_scenario
        scenario = self._parse(SCENARIO + 'seed_policy = fixed-set(2)\n'
                                          'wall_cutoff = 30\n')
        again = self._parse(format_scenario(scenario))
        self.assertEqual(scenario, again)


class TestParseSeedPolicy(unittest.TestCase):

    def _call_fut(self, text):
        from acharness.scenario import parse_seed_policy
        return parse_seed_policy(text)

    def test_managed(self):
        from acharness.scenario import MANAGED_SEEDS
        self.assertEqual(MANAGED_SEEDS, self._call_fut(' managed '))

    def test_fixed(self):
        policy = self._call_fut('fixed-set(1)')
        self.assertEqual(1, policy.k)
        self.assertEqual('fixed-set(1)', str(policy))

    def test_zero_seeds(self):
        with self.assertRaises(ValueError):
            self._call_fut('fixed-set(0)')

    def test_unknown(self):
        with self.assertRaises(ValueError):
            self._call_fut('random')


class TestResolveTempRoot(unittest.TestCase):

    def test_override_wins(self):
        from acharness.scenario import resolve_temp_root
        self.assertEqual('/fast', resolve_temp_root(
            None, override='/fast', environ=dict(TMPDIR='/t')))

    def test_environment(self):
        from acharness.scenario import resolve_temp_root
        self.assertEqual('/t', resolve_temp_root(
            None, environ=dict(TMPDIR='/t')))
        self.assertEqual('/tmp', resolve_temp_root(None, environ={}))


def _trials(statuses, cpu_times):
    from acharness.evaluation import CostMatrix
    import numpy as np
    return CostMatrix([None] * len(statuses), [], np.zeros((1, 1)),
                      statuses, np.array(cpu_times, dtype=float),
                      'runtime_par10', 10.0, None)


@patch('acharness.scenario.filesystem_type', return_value='ext4')
class TestCheckScenario(ScenarioDirMixin, unittest.TestCase):

    def _codes(self, scenario, trials=None):
        from acharness.scenario import check_scenario
        return [w.code for w in check_scenario(scenario, trials,
                                               temp_root=self.tmp)]

    def test_small_scenario(self, fs):
        codes = self._codes(self._parse())
        self.assertEqual(['train-size'], codes)

    def test_low_solvability(self, fs):
        trials = _trials([['SUCCESS', 'TIMEOUT', 'TIMEOUT', 'SUCCESS']],
                        [[1.0, 10.0, 10.0, 1.0]])
        codes = self._codes(self._parse(), trials)
        self.assertIn('solvability', codes)

    def test_enough_solved(self, fs):
        trials = _trials([['SUCCESS', 'SUCCESS', 'SUCCESS', 'TIMEOUT']],
                        [[1.0, 1.0, 1.0, 10.0]])
        codes = self._codes(self._parse(), trials)
        self.assertNotIn('solvability', codes)

    def test_small_run_budget(self, fs):
        text = SCENARIO.replace('budget_runs = 500', 'budget_runs = 50')
        self.assertIn('budget', self._codes(self._parse(text)))

    def test_small_wallclock_budget(self, fs):
        text = SCENARIO.replace('budget_runs = 500',
                                'budget_wallclock = 100')
        trials = _trials([['SUCCESS', 'SUCCESS']], [[2.0, 2.0]])
        self.assertIn('budget', self._codes(self._parse(text), trials))
        # 200 mean runtimes fit
        text = SCENARIO.replace('budget_runs = 500',
                                'budget_wallclock = 400')
        self.assertNotIn('budget', self._codes(self._parse(text), trials))

    def test_single_validation_seed(self, fs):
        scenario = self._parse(SCENARIO + 'validation_seeds = 1\n')
        self.assertIn('validation-seeds', self._codes(scenario))
        scenario = self._parse(SCENARIO + 'validation_seeds = 1\n'
                                          'deterministic = true\n')
        self.assertNotIn('validation-seeds', self._codes(scenario))

    def test_seed_like_parameter(self, fs):
        self._write('params.pcs', 'rand_seed_offset integer [0,9] '
                                  'default 0\n')
        self.assertIn('seed-like-parameter', self._codes(self._parse()))

    def test_shared_temp_dir(self, fs):
        fs.return_value = 'nfs4'
        self.assertIn('shared-temp-dir', self._codes(self._parse()))
