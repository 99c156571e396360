from mock import Mock
import unittest


def _oracle_scenario(directory, **kwargs):
    from acharness.scenario import parse_scenario
    from acharness.synthetic import write_synthetic_scenario
    options = dict(n_params=2, n_train=4, n_test=4)
    options.update(kwargs)
    return parse_scenario(write_synthetic_scenario(directory, **options))


def _fake_result(request, status='SUCCESS'):
    from acharness.result import make_run_result
    return make_run_result(status, 'runtime_par10', 10.0, 1.0, 1.0, 0.0,
                           request.seed, detail='boom')


def _requests(n):
    from acharness.wrapper import RunRequest
    return [RunRequest(None, 'i%d' % i, i, 1.0, None) for i in range(n)]


class TestOracleRunner(unittest.TestCase):

    def setUp(self):
        from tempfile import mkdtemp
        self.tmp = mkdtemp()

    def tearDown(self):
        import shutil
        shutil.rmtree(self.tmp)

    def _runner(self, scenario):
        from acharness.runner import make_runner
        return make_runner(scenario, logger=Mock(), stats=Mock())

    def _request(self, scenario, config, cutoff=None):
        from acharness.wrapper import make_run_request
        return make_run_request(scenario, config, scenario.train_instances[0],
                                1, cutoff)

    def test_success_costs_runtime(self):
        from acharness.synthetic import load_landscape
        from acharness.synthetic import synth_runtime
        scenario = _oracle_scenario(self.tmp)
        landscape = load_landscape(scenario.landscape_file)
        config = scenario.space.make_configuration(
            landscape.params['optimum'])
        runner = self._runner(scenario)
        self.assertTrue(runner.simulated)
        result = runner(self._request(scenario, config))
        expected = synth_runtime(landscape, config,
                                 scenario.train_instances[0], 1)
        self.assertEqual('SUCCESS', result.status)
        self.assertAlmostEqual(expected, result.cost)
        self.assertEqual(result.cpu_time, result.wall_time)
        runner.logger.run_done.assert_called_once()
        runner.stats.run_done.assert_called_once_with(result)

    def test_timeout_charged_cutoff(self):
        scenario = _oracle_scenario(self.tmp)
        runner = self._runner(scenario)
        result = runner(self._request(
            scenario, scenario.space.default_configuration(), cutoff=0.5))
        self.assertEqual('TIMEOUT', result.status)
        self.assertEqual(0.5, result.cpu_time)
        # penalty refers to the maximum cutoff, never the capped one
        self.assertEqual(3000.0, result.cost)

    def test_quality(self):
        from acharness.runner import ORACLE_QUALITY_CPU
        scenario = _oracle_scenario(self.tmp, metric='quality', cutoff=10.0)
        runner = self._runner(scenario)
        result = runner(self._request(
            scenario, scenario.space.default_configuration()))
        self.assertEqual('SUCCESS', result.status)
        self.assertEqual(result.quality, result.cost)
        self.assertEqual(ORACLE_QUALITY_CPU, result.cpu_time)

    def test_sandbox_runner_for_sandbox_execution(self):
        from acharness.runner import SandboxRunner
        scenario = _oracle_scenario(self.tmp, execution='sandbox')
        runner = self._runner(scenario)
        self.assertIsInstance(runner, SandboxRunner)
        self.assertFalse(runner.simulated)
        self.assertEqual(scenario.grace, runner.grace)


class TestCheckNotAborted(unittest.TestCase):

    def test_abort_raises(self):
        from acharness.runner import ExperimentAbort
        from acharness.runner import check_not_aborted
        request = _requests(1)[0]
        result = _fake_result(request, 'ABORT')
        with self.assertRaises(ExperimentAbort) as cm:
            check_not_aborted(request, result)
        self.assertIs(result, cm.exception.result)
        self.assertIn('boom', str(cm.exception))

    def test_other_statuses_pass(self):
        from acharness.runner import check_not_aborted
        request = _requests(1)[0]
        for status in ('SUCCESS', 'TIMEOUT', 'MEMOUT', 'CRASHED'):
            result = _fake_result(request, status)
            self.assertIs(result, check_not_aborted(request, result))


class TestThreadedRuns(unittest.TestCase):

    def _call_fut(self, requests, n_threads, runner):
        from acharness.runner import threaded_runs
        return threaded_runs(requests, n_threads, runner)

    def test_results_in_request_order(self):
        requests = _requests(25)
        for n_threads in (1, 4):
            results = self._call_fut(requests, n_threads, _fake_result)
            self.assertEqual(list(range(25)), [r.seed for r in results])

    def test_empty(self):
        self.assertEqual([], self._call_fut([], 4, _fake_result))

    def test_abort_stops_experiment(self):
        from acharness.runner import ExperimentAbort

        def runner(request):
            if request.seed == 7:
                return _fake_result(request, 'ABORT')
            return _fake_result(request)

        for n_threads in (1, 3):
            with self.assertRaises(ExperimentAbort) as cm:
                self._call_fut(_requests(30), n_threads, runner)
            self.assertEqual(7, cm.exception.request.seed)
