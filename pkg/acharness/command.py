from acharness.config import make_config_from_argparse
from acharness.configurator import Configurator
from acharness.configurator import Trajectory
from acharness.diagnostics import HEALTH_EXIT_CODES
from acharness.diagnostics import experiment_health
from acharness.diagnostics import health_report_to_dict
from acharness.diagnostics import machine_fingerprint
from acharness.diagnostics import machine_health
from acharness.diagnostics import scan_orphans
from acharness.evaluation import aggregate_series
from acharness.evaluation import final_incumbent
from acharness.evaluation import make_report
from acharness.evaluation import overtuning_report
from acharness.evaluation import row_aggregates
from acharness.evaluation import select_best_of_n
from acharness.evaluation import summary_rows
from acharness.evaluation import trajectory_validation
from acharness.evaluation import validate_configs
from acharness.evaluation import validation_rows
from acharness.log import JsonConfiguratorLogger
from acharness.log import JsonRunLogger
from acharness.log import JsonSandboxLogger
from acharness.result import ABORT
from acharness.runner import ExperimentAbort
from acharness.runner import make_runner
from acharness.sandbox import make_run_tag
from acharness.scenario import ScenarioError
from acharness.scenario import check_scenario
from acharness.scenario import parse_scenario
from acharness.scenario import parse_seed_policy
from acharness.space import ConfigSpaceError
from acharness.space import sample_random_config
from acharness.stats import ConfiguratorStatsHandler
from acharness.stats import RunStatsHandler
from acharness.stats import make_statsd_client_from_cfg
from acharness.store import ExperimentDirectory
from acharness.store import SCATTER_HEADER
from acharness.store import SERIES_HEADER
from acharness.store import TEST_NAMESPACE
from acharness.store import TRAIN_NAMESPACE
from acharness.store import VALIDATION_HEADER
from acharness.store import read_configurations
from acharness.wrapper import WrapperAbort
from acharness.wrapper import abort_result
from acharness.wrapper import emit_result
from acharness.wrapper import parse_call
from multiprocessing.pool import ThreadPool
import argparse
import json
import logging
import logging.config
import numpy as np
import os
import sys


EXIT_OK = 0
EXIT_WARNINGS = 1
EXIT_ABORT = 2

EXPERIMENT_FILE = 'experiment.json'


class HarnessArgumentParser(argparse.ArgumentParser):
    def error(self, message):
        sys.stderr.write('error: %s\n' % message)
        self.print_help(sys.stderr)
        sys.exit(2)


def make_logger(cfg, logger_name, loglevel=logging.INFO):
    if getattr(cfg, 'logconfig') is not None:
        logging.config.fileConfig(cfg.logconfig)
    elif not logging.getLogger().handlers:
        # records are json already; stdout belongs to RESULT lines
        logging.basicConfig(stream=sys.stderr, format='%(message)s')
    logger = logging.getLogger(logger_name)
    logger.setLevel(loglevel)
    return logger


def _stats_client(cfg):
    return make_statsd_client_from_cfg(cfg)


def _make_runner(cfg, args, scenario, experiment=None):
    run_logger = JsonRunLogger(make_logger(cfg, 'acharness.run'))
    stats = RunStatsHandler(_stats_client(cfg))
    return make_runner(scenario, cfg, temp_root=args.temp_root,
                       experiment=experiment, logger=run_logger, stats=stats)


def _validation_seeds(cfg, args, scenario):
    seeds = getattr(args, 'seeds', None)
    if seeds is None:
        seeds = cfg.validation_seeds
    if seeds is None:
        seeds = scenario.validation_seeds
    return seeds


def _unique(configs):
    seen = set()
    unique = []
    for config in configs:
        if config.id not in seen:
            seen.add(config.id)
            unique.append(config)
    return unique


def _write_experiment_file(exp, scenario_path, scenario, experiment_tag):
    path = exp.path(EXPERIMENT_FILE)
    with open(path, 'w') as fp:
        json.dump(dict(experiment_tag=experiment_tag,
                       scenario_file=os.path.abspath(scenario_path),
                       scenario_directory=scenario.directory,
                       machine=machine_fingerprint()),
                  fp, indent=2, sort_keys=True)


def _read_experiment_file(exp):
    path = exp.path(EXPERIMENT_FILE)
    if not os.path.exists(path):
        return {}
    with open(path) as fp:
        return json.load(fp)


def acharness_run(cfg, args):
    """k independent configurator runs, then best of n on training data"""
    scenario = parse_scenario(args.scenario)
    logger = make_logger(cfg, 'acharness.configurator')
    json_logger = JsonConfiguratorLogger(logger)
    stats = _stats_client(cfg)
    exp = ExperimentDirectory(args.out)
    experiment_tag = make_run_tag()
    _write_experiment_file(exp, args.scenario, scenario, experiment_tag)
    runner = _make_runner(cfg, args, scenario, experiment=experiment_tag)

    seed_policy = None
    if cfg.seed_policy:
        seed_policy = parse_seed_policy(cfg.seed_policy)

    def _configure(index):
        run_seed = args.run_seed + index
        with exp.open_run_log(index) as run_log:
            configurator = Configurator(
                scenario, runner, run_seed,
                logger=JsonConfiguratorLogger(logger, run_id=run_seed),
                stats=ConfiguratorStatsHandler(stats),
                run_log=run_log,
                seed_policy=seed_policy,
                capping_multiplier=cfg.capping_multiplier,
                max_seeds_per_instance=cfg.max_seeds_per_instance)
            try:
                trajectory = configurator.configure()
            finally:
                # anytime: whatever was found so far stays on disk
                exp.write_trajectory(index, Trajectory(
                    tuple(configurator.entries), run_seed))
        return trajectory

    json_logger.lifecycle('experiment %s: %d runs on %d workers',
                          experiment_tag, args.n_runs, cfg.workers)
    try:
        if cfg.workers > 1 and args.n_runs > 1:
            pool = ThreadPool(min(cfg.workers, args.n_runs))
            try:
                trajectories = pool.map(_configure, range(args.n_runs))
            finally:
                pool.close()
                pool.join()
        else:
            trajectories = [_configure(i) for i in range(args.n_runs)]

        finals = _unique(final_incumbent(t) for t in trajectories)
        train_matrix = validate_configs(
            finals, scenario.train_instances,
            _validation_seeds(cfg, args, scenario), scenario, runner,
            workers=cfg.workers,
            logger=json_logger)
    except ExperimentAbort as e:
        json_logger.error('experiment aborted', e)
        sys.stderr.write('aborted: %s\n' % e)
        return EXIT_ABORT

    exp.write_csv('validation.csv', VALIDATION_HEADER,
                  validation_rows(train_matrix), namespace=TRAIN_NAMESPACE)
    best = select_best_of_n(trajectories, train_matrix)
    best_seed = min(t.run_seed for t in trajectories
                    if final_incumbent(t) == best)
    exp.write_incumbent(best, run_seed=best_seed)
    json_logger.lifecycle('experiment %s done, incumbent %s',
                          experiment_tag, best.id)
    sys.stdout.write('%s\n' % best.to_json())
    return EXIT_OK


def acharness_validate(cfg, args):
    scenario = parse_scenario(args.scenario)
    space = scenario.space
    candidates = []
    if args.configs:
        candidates = read_configurations(args.configs, space)
    if args.set == TEST_NAMESPACE and len(candidates) > 1 and \
            not args.scatter:
        sys.stderr.write(
            'error: refusing to validate %d candidate configurations on the '
            'test set; picking among them by test cost leaks test data into '
            'the selection. Select on training data first (acharness run '
            'does), or pass --scatter for a train/test scatter study.\n' %
            len(candidates))
        return EXIT_ABORT

    configs = list(candidates)
    if args.with_default:
        configs.insert(0, space.default_configuration())
    configs = _unique(configs)
    if not configs:
        sys.stderr.write('error: no configurations to validate\n')
        return EXIT_ABORT

    instances = scenario.test_instances if args.set == TEST_NAMESPACE \
        else scenario.train_instances
    logger = JsonConfiguratorLogger(make_logger(cfg, 'acharness.validation'))
    runner = _make_runner(cfg, args, scenario)
    try:
        matrix = validate_configs(configs, instances,
                                  _validation_seeds(cfg, args, scenario),
                                  scenario, runner, workers=cfg.workers,
                                  logger=logger)
    except ExperimentAbort as e:
        logger.error('validation aborted', e)
        sys.stderr.write('aborted: %s\n' % e)
        return EXIT_ABORT

    exp = ExperimentDirectory(args.out)
    exp.write_csv('validation.csv', VALIDATION_HEADER,
                  validation_rows(matrix), namespace=args.set)
    summary = summary_rows(matrix)
    exp.write_json('report.json', make_report(
        summary=summary, machine=machine_fingerprint(),
        thresholds=cfg.diagnostic_thresholds()), namespace=args.set)
    for config_id, cost, solved, runs in summary:
        sys.stdout.write('%s %s=%.6f solved=%d/%d\n' % (
            config_id, scenario.metric, cost, solved, runs))
    return EXIT_OK


def acharness_wrap(cfg, args):
    """one wrapper call in the wire format; prints a single RESULT line"""
    scenario = parse_scenario(args.scenario)
    runner = _make_runner(cfg, args, scenario)
    try:
        request = parse_call(args.call, scenario, grace=runner.grace)
    except WrapperAbort as e:
        JsonRunLogger(make_logger(cfg, 'acharness.run')).aborted(None, e)
        emit_result(abort_result(None, scenario, str(e)))
        return EXIT_ABORT
    result = runner(request)
    emit_result(result)
    return EXIT_ABORT if result.status == ABORT else EXIT_OK


def acharness_check(cfg, args):
    scenario = parse_scenario(args.scenario)
    trials = None
    if args.trial_runs:
        rng = np.random.default_rng(args.trial_seed)
        train = list(scenario.train_instances)
        n = min(args.trial_runs, len(train))
        sample = [train[i] for i in
                  sorted(rng.choice(len(train), size=n, replace=False))]
        runner = _make_runner(cfg, args, scenario)
        logger = JsonConfiguratorLogger(make_logger(cfg, 'acharness.check'))
        try:
            trials = validate_configs([scenario.space.default_configuration()],
                                      sample, 1, scenario, runner,
                                      workers=cfg.workers, logger=logger)
        except ExperimentAbort as e:
            sys.stderr.write('aborted: %s\n' % e)
            return EXIT_ABORT

    warnings = check_scenario(scenario, trials, temp_root=args.temp_root)
    for warning in warnings:
        sys.stdout.write('warning [%s]: %s\n' % (warning.code,
                                                 warning.message))
    return EXIT_WARNINGS if warnings else EXIT_OK


def acharness_health(cfg, args):
    exp = ExperimentDirectory(args.experiment_dir)
    experiment = _read_experiment_file(exp)
    scenario_path = args.scenario or experiment.get('scenario_file')
    if scenario_path is None:
        sys.stderr.write('error: %s has no %s; pass --scenario\n' % (
            args.experiment_dir, EXPERIMENT_FILE))
        return EXIT_ABORT
    scenario = parse_scenario(scenario_path)
    sandbox_logger = JsonSandboxLogger(make_logger(cfg, 'acharness.sandbox'))

    orphans = ()
    experiment_tag = experiment.get('experiment_tag')
    if experiment_tag is not None:
        orphans = scan_orphans(experiment_tag, logger=sandbox_logger)

    report = experiment_health(
        list(exp.read_run_logs()), exp.read_trajectories(scenario.space),
        thresholds=cfg.diagnostic_thresholds(), orphans=orphans,
        machine=machine_health(cfg.load_per_core))
    exp.write_json('health.json', health_report_to_dict(report))
    for warning in report.warnings:
        sys.stdout.write('warning: %s\n' % warning)
    for kind, count in sorted(report.anomaly_counts.items()):
        sys.stdout.write('anomaly: %s (%d runs)\n' % (kind, count))
    if report.orphans:
        sys.stdout.write('orphans: %s\n' % ' '.join(
            str(pid) for pid in report.orphans))
    sys.stdout.write('%s\n' % report.status)
    return HEALTH_EXIT_CODES[report.status]


def acharness_report(cfg, args):
    """train/test scatter over random configurations and incumbents"""
    scenario = parse_scenario(args.scenario)
    space = scenario.space
    exp = ExperimentDirectory(args.out)
    logger = JsonConfiguratorLogger(make_logger(cfg, 'acharness.report'))
    runner = _make_runner(cfg, args, scenario)
    k = _validation_seeds(cfg, args, scenario)
    n_configs = args.n_configs
    if n_configs is None:
        n_configs = cfg.scatter_configs

    trajectories = exp.read_trajectories(space)
    rng = np.random.default_rng(args.seed)
    configs = [space.default_configuration()]
    configs.extend(final_incumbent(t) for t in trajectories if t.entries)
    configs.extend(sample_random_config(space, rng)
                   for _ in range(n_configs))
    configs = _unique(configs)
    if len(configs) < 2:
        logger.warning('too few configurations for a report',
                       n_configs=len(configs))
        sys.stderr.write('error: rank correlation needs at least 2 '
                         'configurations; raise --n-configs or run the '
                         'configurator first\n')
        return EXIT_ABORT

    try:
        train_matrix = validate_configs(
            configs, scenario.train_instances, k, scenario, runner,
            workers=cfg.workers, logger=logger)
        test_matrix = validate_configs(
            configs, scenario.test_instances, k, scenario, runner,
            workers=cfg.workers, logger=logger)
        series = [trajectory_validation(
            t, scenario.test_instances, scenario, k, runner,
            train_instances=scenario.train_instances, workers=cfg.workers,
            logger=logger) for t in trajectories if t.entries]
    except ExperimentAbort as e:
        logger.error('report aborted', e)
        sys.stderr.write('aborted: %s\n' % e)
        return EXIT_ABORT

    train_costs = row_aggregates(train_matrix)
    test_costs = row_aggregates(test_matrix)
    report = overtuning_report(train_costs, test_costs, subset=args.subset,
                               threshold=cfg.overtuning_rho)
    config_ids = [c.id for c in configs]

    exp.write_csv('scatter.csv', SCATTER_HEADER,
                  [(cid, repr(a), repr(b)) for cid, a, b in
                   zip(config_ids, train_costs, test_costs)],
                  namespace=TEST_NAMESPACE)
    exp.write_csv('validation.csv', VALIDATION_HEADER,
                  validation_rows(test_matrix), namespace=TEST_NAMESPACE)
    if series:
        for field, namespace in (('test_cost', TEST_NAMESPACE),
                                 ('train_cost', TRAIN_NAMESPACE)):
            exp.write_csv('trajectory_validation.csv', SERIES_HEADER,
                          aggregate_series(series, field),
                          namespace=namespace)
    exp.write_json('report.json', make_report(
        report, config_ids, summary_rows(test_matrix),
        machine=machine_fingerprint(),
        thresholds=cfg.diagnostic_thresholds()), namespace=TEST_NAMESPACE)

    rho = 'undefined' if report.rho is None else '%.3f' % report.rho
    sys.stdout.write('spearman rho over %d configurations: %s\n' % (
        len(configs), rho))
    if report.subset_rho is not None:
        sys.stdout.write('spearman rho over the best %d: %.3f\n' % (
            len(report.subset_pairs), report.subset_rho))
    for flag in report.flags:
        sys.stdout.write('warning: %s\n' % flag)
    return EXIT_WARNINGS if report.flags else EXIT_OK


def _add_common_args(subparser):
    # shared by all commands, but given after the command name
    subparser.add_argument('--config', required=False, default=None,
                           help='Harness configuration yaml file.')
    subparser.add_argument('--temp-root', required=False, default=None,
                           help='Root directory for per run temp dirs; '
                                'must be on a local disk.')
    subparser.add_argument('--workers', type=int, required=False,
                           default=None,
                           help='Number of concurrent target runs.')


def make_parser():
    parser = HarnessArgumentParser(
        prog='acharness',
        description='Hardened algorithm configuration harness')
    subparsers = parser.add_subparsers(dest='command')
    subparsers.required = True

    subparser = subparsers.add_parser(
        'run', help='independent configurator runs plus best of n selection')
    _add_common_args(subparser)
    subparser.add_argument('scenario', help='Scenario file.')
    subparser.add_argument('--out', required=True,
                           help='Experiment output directory.')
    subparser.add_argument('--n-runs', type=int, default=1,
                           help='Number of independent configurator runs '
                                '(default: %(default)s).')
    subparser.add_argument('--run-seed', type=int, default=0,
                           help='Seed of the first run; run i uses '
                                'run-seed + i (default: %(default)s).')
    subparser.add_argument('--seeds', type=int, default=None,
                           help='Seeds per training instance when '
                                'selecting the best run.')
    subparser.set_defaults(func=acharness_run)

    subparser = subparsers.add_parser(
        'validate', help='evaluate configurations on train or test')
    _add_common_args(subparser)
    subparser.add_argument('scenario', help='Scenario file.')
    subparser.add_argument('configs', nargs='?', default=None,
                           help='Configurations as json lines, or an '
                                'incumbent.json file.')
    subparser.add_argument('--out', required=True,
                           help='Experiment output directory.')
    subparser.add_argument('--set', choices=(TRAIN_NAMESPACE,
                                             TEST_NAMESPACE),
                           default=TEST_NAMESPACE,
                           help='Instance set (default: %(default)s).')
    subparser.add_argument('--seeds', type=int, default=None,
                           help='Seeds per instance.')
    subparser.add_argument('--with-default', action='store_true',
                           help='Also validate the default configuration '
                                'as a baseline.')
    subparser.add_argument('--scatter', action='store_true',
                           help='Allow several candidates on the test set '
                                'for a train/test scatter study.')
    subparser.set_defaults(func=acharness_validate)

    subparser = subparsers.add_parser(
        'wrap', help='run one target call in the wrapper wire format')
    _add_common_args(subparser)
    subparser.add_argument('scenario', help='Scenario file.')
    subparser.add_argument('call', nargs=argparse.REMAINDER,
                           help='<instance> <info> <cutoff> <runlength> '
                                '<seed> [-name value]...')
    subparser.set_defaults(func=acharness_wrap)

    subparser = subparsers.add_parser(
        'check', help='warn about common experiment setup mistakes')
    _add_common_args(subparser)
    subparser.add_argument('scenario', help='Scenario file.')
    subparser.add_argument('--trial-runs', type=int, default=0,
                           help='Run the default configuration on this many '
                                'training instances first (default: '
                                '%(default)s).')
    subparser.add_argument('--trial-seed', type=int, default=0,
                           help='Seed for picking trial instances.')
    subparser.set_defaults(func=acharness_check)

    subparser = subparsers.add_parser(
        'health', help='monitoring signs of an experiment')
    _add_common_args(subparser)
    subparser.add_argument('experiment_dir',
                           help='Experiment output directory.')
    subparser.add_argument('--scenario', default=None,
                           help='Scenario file of the experiment (default: '
                                'the one recorded by run).')
    subparser.set_defaults(func=acharness_health)

    subparser = subparsers.add_parser(
        'report', help='train/test over-tuning report and plot data')
    _add_common_args(subparser)
    subparser.add_argument('scenario', help='Scenario file.')
    subparser.add_argument('--out', required=True,
                           help='Experiment output directory.')
    subparser.add_argument('--n-configs', type=int, default=None,
                           help='Random configurations in the scatter '
                                '(default: evaluation scatter-configs).')
    subparser.add_argument('--subset', type=float, default=0.2,
                           help='Fraction of best configurations for the '
                                'second correlation (default: %(default)s).')
    subparser.add_argument('--seeds', type=int, default=None,
                           help='Seeds per instance.')
    subparser.add_argument('--seed', type=int, default=0,
                           help='Seed for sampling random configurations.')
    subparser.set_defaults(func=acharness_report)

    return parser


def acharness_main(argv_args=None):
    if argv_args is None:
        argv_args = sys.argv[1:]

    parser = make_parser()
    args = parser.parse_args(argv_args)

    config_fh = None
    if args.config is not None:
        assert os.path.exists(args.config), \
            'Config file {} does not exist!'.format(args.config)
        config_fh = open(args.config)
    try:
        cfg = make_config_from_argparse(config_fh, temp_root=args.temp_root,
                                        workers=args.workers)
    finally:
        if config_fh is not None:
            config_fh.close()

    try:
        return args.func(cfg, args)
    except (ScenarioError, ConfigSpaceError) as e:
        sys.stderr.write('error: %s\n' % e)
        return EXIT_ABORT


if __name__ == '__main__':
    sys.exit(acharness_main())
