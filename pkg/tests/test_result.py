from hypothesis import given
from hypothesis import strategies as st
import unittest


class TestMakeRunResult(unittest.TestCase):

    def _call_fut(self, status, cpu_time, metric='runtime_par10',
                  cutoff_max=10.0, **kwargs):
        from acharness.result import make_run_result
        return make_run_result(status, metric, cutoff_max, cpu_time,
                               cpu_time, 0.0, 1, **kwargs)

    def test_success_costs_cpu_time(self):
        result = self._call_fut('SUCCESS', 3.5)
        self.assertEqual(3.5, result.cost)
        self.assertFalse(result.failed)

    def test_timeout_par10(self):
        self.assertEqual(100.0, self._call_fut('TIMEOUT', 10.0).cost)

    def test_crash_par1(self):
        result = self._call_fut('CRASHED', 0.2, metric='runtime_par1')
        self.assertEqual(10.0, result.cost)
        self.assertTrue(result.failed)

    def test_memout_penalized(self):
        self.assertEqual(100.0, self._call_fut('MEMOUT', 1.0).cost)

    def test_quality(self):
        result = self._call_fut('SUCCESS', 1.0, metric='quality',
                                quality=42.0, worst_quality=1000.0)
        self.assertEqual(42.0, result.cost)
        result = self._call_fut('CRASHED', 1.0, metric='quality',
                                worst_quality=1000.0)
        self.assertEqual(1000.0, result.cost)

    def test_quality_missing_value_penalized(self):
        result = self._call_fut('SUCCESS', 1.0, metric='quality',
                                quality=float('nan'), worst_quality=1000.0)
        self.assertEqual(1000.0, result.cost)

    def test_negative_measurements_clamped(self):
        self.assertEqual(0.0, self._call_fut('SUCCESS', -4.2).cpu_time)

    def test_unknown_status(self):
        with self.assertRaises(AssertionError):
            self._call_fut('UNKNOWN', 1.0)

    @given(st.sampled_from(['TIMEOUT', 'MEMOUT', 'CRASHED']),
           st.floats(min_value=0.01, max_value=1000.0))
    def test_failures_cost_the_penalty(self, status, cutoff_max):
        result = self._call_fut(status, cutoff_max / 2, cutoff_max=cutoff_max)
        self.assertEqual(10 * cutoff_max, result.cost)


class TestPenalizedCost(unittest.TestCase):

    def test_penalty_refers_to_cutoff_max(self):
        from acharness.result import make_run_result
        from acharness.result import penalized_cost
        # run capped at 2s out of a 10s maximum
        result = make_run_result('TIMEOUT', 'runtime_par10', 2.0, 2.0, 2.0,
                                 0.0, 1)
        self.assertEqual(20.0, result.cost)
        self.assertEqual(100.0, penalized_cost(result, 'runtime_par10', 10.0))

    def test_success_unchanged(self):
        from acharness.result import make_run_result
        from acharness.result import penalized_cost
        result = make_run_result('SUCCESS', 'runtime_par10', 10.0, 1.5, 1.5,
                                 0.0, 1)
        self.assertEqual(1.5, penalized_cost(result, 'runtime_par10', 10.0))


class TestResultDict(unittest.TestCase):

    def test_round_trip(self):
        from acharness.result import make_run_result
        from acharness.result import result_from_dict
        from acharness.result import result_to_dict
        import json
        result = make_run_result('SUCCESS', 'runtime_par10', 10.0, 1.5, 1.7,
                                 12.0, 9, exit_code=0,
                                 anomalies=('wallclock>>cpu: x',))
        d = json.loads(json.dumps(result_to_dict(result)))
        self.assertEqual(result, result_from_dict(d))
