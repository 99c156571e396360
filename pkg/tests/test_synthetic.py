from hypothesis import given
from hypothesis import settings
from hypothesis import strategies as st
import unittest


def _landscape(kind='quadratic_bowl', **kwargs):
    from acharness.synthetic import make_bowl_space
    from acharness.synthetic import make_landscape
    space = make_bowl_space(2)
    params = dict(optimum=dict(x0=3.0, x1=4.0), scale=1.0)
    params.update(kwargs.pop('params', {}))
    hardness = kwargs.pop('instance_hardness', dict(a=2.0, b=0.5))
    return make_landscape(kind, space, params, hardness, **kwargs)


def _config(landscape, **values):
    return landscape.space.make_configuration(values)


class TestSynthRuntime(unittest.TestCase):

    def _call_fut(self, landscape, config, instance='a', seed=1):
        from acharness.synthetic import synth_runtime
        return synth_runtime(landscape, config, instance, seed)

    def test_bowl_at_optimum_is_hardness(self):
        landscape = _landscape()
        self.assertEqual(2.0, self._call_fut(
            landscape, _config(landscape, x0=3.0, x1=4.0)))
        self.assertEqual(0.5, self._call_fut(
            landscape, _config(landscape, x0=3.0, x1=4.0), 'b'))

    def test_bowl_distance(self):
        landscape = _landscape()
        # 2 * (1 + 9 + 16)
        self.assertEqual(52.0, self._call_fut(
            landscape, _config(landscape, x0=0.0, x1=0.0)))

    def test_deterministic_landscape_ignores_seed(self):
        landscape = _landscape()
        config = _config(landscape, x0=1.0, x1=1.0)
        self.assertEqual(self._call_fut(landscape, config, seed=1),
                         self._call_fut(landscape, config, seed=2))

    def test_seed_noise_depends_on_seed(self):
        landscape = _landscape('seed_noise', noise_scale=1.5)
        config = _config(landscape, x0=1.0, x1=1.0)
        runtimes = set(self._call_fut(landscape, config, seed=s)
                       for s in range(10))
        self.assertEqual(10, len(runtimes))
        self.assertEqual(self._call_fut(landscape, config, seed=3),
                         self._call_fut(landscape, config, seed=3))

    def test_seed_noise_mean_is_one(self):
        from acharness.synthetic import seed_noise_factor
        factors = [seed_noise_factor(0.5, 'cfg', s) for s in range(5000)]
        self.assertAlmostEqual(1.0, sum(factors) / len(factors), delta=0.03)

    def test_instance_shift(self):
        landscape = _landscape(
            'instance_shift',
            params=dict(test_optimum=dict(x0=7.0, x1=6.0),
                        test_instances=['b']))
        config = _config(landscape, x0=3.0, x1=4.0)
        self.assertEqual(2.0, self._call_fut(landscape, config, 'a'))
        # 0.5 * (1 + 16 + 4)
        self.assertEqual(10.5, self._call_fut(landscape, config, 'b'))

    def test_heterogeneous_optimum_per_instance(self):
        from acharness.synthetic import instance_optimum
        landscape = _landscape('heterogeneous',
                               params=dict(optimum_seed=5, scale=2.0))
        opt_a = instance_optimum(landscape, 'a')
        opt_b = instance_optimum(landscape, 'b')
        self.assertNotEqual(opt_a, opt_b)
        self.assertEqual(opt_a, instance_optimum(landscape, 'a'))
        config = landscape.space.make_configuration(opt_a)
        self.assertEqual(2.0, self._call_fut(landscape, config, 'a'))
        self.assertGreater(self._call_fut(landscape, config, 'b'), 0.5)

    def test_invalid_config(self):
        landscape = _landscape()
        with self.assertRaises(ValueError):
            self._call_fut(landscape, _config(landscape, x0=30.0, x1=1.0))

    def test_hardness_range_fallback(self):
        from acharness.synthetic import instance_hardness
        landscape = _landscape(instance_hardness={},
                               params=dict(hardness_range=(1.0, 3.0)))
        h = instance_hardness(landscape, 'unlisted')
        self.assertTrue(1.0 <= h < 3.0)
        self.assertEqual(h, instance_hardness(landscape, 'unlisted'))

    @settings(max_examples=50, deadline=None)
    @given(st.floats(min_value=0.0, max_value=10.0),
           st.floats(min_value=0.0, max_value=10.0))
    def test_bowl_minimum_at_optimum(self, x0, x1):
        landscape = _landscape()
        at_optimum = self._call_fut(landscape,
                                    _config(landscape, x0=3.0, x1=4.0))
        self.assertGreaterEqual(
            self._call_fut(landscape, _config(landscape, x0=x0, x1=x1)),
            at_optimum)


class TestSquaredDistance(unittest.TestCase):

    def test_categorical_mismatch_counts_one(self):
        from acharness.synthetic import make_bowl_space
        from acharness.synthetic import squared_distance
        space = make_bowl_space(1, categorical=True)
        self.assertEqual(1.0, squared_distance(
            space, dict(x0=1.0, mode='a'), dict(x0=1.0, mode='b')))

    def test_inactive_skipped(self):
        from acharness.synthetic import make_bowl_space
        from acharness.synthetic import squared_distance
        space = make_bowl_space(1, categorical=True)
        self.assertEqual(0.0, squared_distance(
            space, dict(x0=1.0, mode='a'),
            dict(x0=1.0, mode='a', boost=0.5)))

    def test_wrap(self):
        from acharness.synthetic import make_bowl_space
        from acharness.synthetic import squared_distance
        space = make_bowl_space(1)
        # 9 apart on a circle of 10 is 1 apart, normalized 0.1
        self.assertAlmostEqual(0.01, squared_distance(
            space, dict(x0=0.5), dict(x0=9.5), wrap=True))


class TestLandscapeFile(unittest.TestCase):

    def setUp(self):
        from tempfile import mkdtemp
        self.tmp = mkdtemp()

    def tearDown(self):
        import shutil
        shutil.rmtree(self.tmp)

    def test_round_trip(self):
        from acharness.space import format_config_space
        from acharness.synthetic import landscape_to_json
        from acharness.synthetic import load_landscape
        import os
        landscape = _landscape(
            'instance_shift',
            params=dict(test_optimum=dict(x0=7.0, x1=6.0),
                        test_instances=['b']))
        with open(os.path.join(self.tmp, 'p.pcs'), 'w') as fp:
            fp.write(format_config_space(landscape.space))
        path = os.path.join(self.tmp, 'landscape.json')
        with open(path, 'w') as fp:
            fp.write(landscape_to_json(landscape, 'p.pcs'))
        self.assertEqual(landscape, load_landscape(path))


class TestWriteSyntheticScenario(unittest.TestCase):

    def setUp(self):
        from tempfile import mkdtemp
        self.tmp = mkdtemp()

    def tearDown(self):
        import shutil
        shutil.rmtree(self.tmp)

    def _call_fut(self, **kwargs):
        from acharness.scenario import parse_scenario
        from acharness.synthetic import write_synthetic_scenario
        return parse_scenario(write_synthetic_scenario(self.tmp, **kwargs))

    def test_bowl(self):
        from acharness.synthetic import load_landscape
        scenario = self._call_fut(n_train=10, n_test=5)
        self.assertEqual(10, len(scenario.train_instances))
        self.assertEqual(5, len(scenario.test_instances))
        self.assertEqual('oracle', scenario.execution)
        self.assertTrue(scenario.deterministic)
        self.assertEqual(300.0, scenario.cutoff_max)
        self.assertEqual(2000, scenario.budget_runs)
        landscape = load_landscape(scenario.landscape_file)
        self.assertEqual(15, len(landscape.instance_hardness))
        for value in landscape.params['optimum'].values():
            self.assertTrue(2.0 <= value <= 8.0)

    def test_repeatable(self):
        import os
        self._call_fut(seed=3)
        with open(os.path.join(self.tmp, 'landscape.json')) as fp:
            first = fp.read()
        self._call_fut(seed=3)
        with open(os.path.join(self.tmp, 'landscape.json')) as fp:
            self.assertEqual(first, fp.read())

    def test_seed_noise_not_deterministic(self):
        scenario = self._call_fut(kind='seed_noise', n_train=3, n_test=3)
        self.assertFalse(scenario.deterministic)

    def test_quality_metric(self):
        scenario = self._call_fut(metric='quality', n_train=3, n_test=3,
                                  cutoff=10.0)
        self.assertEqual(100.0, scenario.worst_quality)

    def test_sat_instances(self):
        from acharness.wrapper.sat import parse_dimacs
        import os
        scenario = self._call_fut(sat_instances=True, n_train=8, n_test=4)
        self.assertEqual('sat', scenario.wrapper_hooks.output_parser)
        self.assertEqual('UNSAT',
                         scenario.reference_answers['instances/train_003.cnf'])
        self.assertEqual('SAT',
                         scenario.reference_answers['instances/train_000.cnf'])
        cnf = parse_dimacs(os.path.join(self.tmp, 'instances/train_000.cnf'))
        self.assertEqual(8, cnf.num_vars)
        self.assertEqual(20, len(cnf.clauses))

    def test_extra_keys(self):
        scenario = self._call_fut(n_train=3, n_test=3,
                                  extra=dict(capping_multiplier='1.5'))
        self.assertEqual(1.5, scenario.capping_multiplier)
