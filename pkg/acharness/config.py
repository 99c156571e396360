from yaml import safe_load
import os


class HarnessConfiguration(object):
    '''
    Flatten harness configuration from yaml

    This covers the settings of the harness itself (logging, metrics,
    sandbox tuning, thresholds). The experiment is defined by the scenario
    file, not here.
    '''

    def __init__(self, yml):
        self.yml = yml

        self.logconfig = self._cfg('logging config')

        self.statsd_host = None
        self.statsd_port = None
        self.statsd_prefix = None
        if self.yml.get('statsd'):
            self.statsd_host = self._cfg('statsd host')
            self.statsd_port = self._cfg('statsd port')
            self.statsd_prefix = self._cfg('statsd prefix')

        self.poll_interval = self._cfg('sandbox poll-interval')
        assert 0 < self.poll_interval <= 0.5, \
            'sandbox poll-interval must be in (0, 0.5]: %s' % \
            self.poll_interval
        self.grace = self._cfg('sandbox grace')
        assert self.grace is None or self.grace > 0, \
            'sandbox grace must be positive: %s' % self.grace
        self.memory_slack = self._cfg('sandbox memory-slack')
        self.temp_root = self._cfg('sandbox temp-root')
        self.keep_artifacts = self._cfg('sandbox keep-artifacts')

        self.capping_multiplier = self._cfg('configurator capping-multiplier')
        assert self.capping_multiplier is None or \
            self.capping_multiplier >= 1, \
            'capping-multiplier must be >= 1: %s' % self.capping_multiplier
        self.max_seeds_per_instance = \
            self._cfg('configurator max-seeds-per-instance')
        self.seed_policy = self._cfg('configurator seed-policy')

        self.wall_cpu_ratio = self._cfg('diagnostics wall-cpu-ratio')
        self.crash_rate = self._cfg('diagnostics crash-rate')
        self.variance_ratio = self._cfg('diagnostics variance-ratio')
        self.overtuning_rho = self._cfg('diagnostics overtuning-rho')
        self.load_per_core = self._cfg('diagnostics load-per-core')

        self.scatter_configs = self._cfg('evaluation scatter-configs')
        self.validation_seeds = self._cfg('evaluation seeds')

        self.workers = self._cfg('workers')
        assert self.workers > 0, 'workers must be positive: %s' % self.workers

    def __repr__(self):
        return 'HarnessConfiguration(%r)' % (self.yml,)

    def _cfg(self, yamlkeys_str):
        yamlkeys = yamlkeys_str.split()
        yamlval = self.yml
        for subkey in yamlkeys:
            yamlval = yamlval[subkey]
        return yamlval

    def subtree(self, yamlkeys_str):
        yamlkeys = yamlkeys_str.split()
        yamlval = self.yml
        for subkey in yamlkeys:
            yamlval = yamlval.get(subkey)
            if yamlval is None:
                break
        return yamlval

    def diagnostic_thresholds(self):
        return dict(
            wall_cpu_ratio=self.wall_cpu_ratio,
            crash_rate=self.crash_rate,
            variance_ratio=self.variance_ratio,
            overtuning_rho=self.overtuning_rho,
            load_per_core=self.load_per_core,
            memory_slack=self.memory_slack,
        )


def default_yml_config():
    return {
        'logging': {
            'config': None,
        },
        'statsd': None,
        'sandbox': {
            'poll-interval': 0.1,
            # None means: use the scenario's value, which defaults to 2s
            'grace': None,
            'memory-slack': 0.05,
            'temp-root': None,
            'keep-artifacts': 'on_failure',
        },
        'configurator': {
            # None means: use the scenario's value
            'capping-multiplier': None,
            'max-seeds-per-instance': None,
            'seed-policy': None,
        },
        'diagnostics': {
            'wall-cpu-ratio': 3.0,
            'crash-rate': 0.25,
            'variance-ratio': 5.0,
            'overtuning-rho': 0.5,
            'load-per-core': 1.5,
        },
        'evaluation': {
            'scatter-configs': 100,
            'seeds': None,
        },
        'workers': 1,
    }


def merge_cfg(dest, source):
    for k, v in source.items():
        if isinstance(v, dict):
            subdest = dest.get(k)
            if not isinstance(subdest, dict):
                subdest = dest[k] = {}
            merge_cfg(subdest, v)
        else:
            dest[k] = v
    return dest


def _override_cfg(container, yamlkeys, value):
    """
    Override a hierarchical key in the config, setting it to the value.

    Note that yamlkeys should be a non-empty list of strings.
    """

    key = yamlkeys[0]
    rest = yamlkeys[1:]

    if len(rest) == 0:
        # no rest means we found the key to update.
        container[key] = value

    elif isinstance(container.get(key), dict):
        # still need to find the leaf in the tree, so recurse.
        _override_cfg(container[key], rest, value)

    else:
        # need to create a sub-tree down to the leaf to insert into.
        subtree = {}
        _override_cfg(subtree, rest, value)
        container[key] = subtree


def _make_yaml_key(s):
    """
    Turn an environment variable into a yaml key

    Keys in YAML files are generally lower case and use dashes instead of
    underscores.
    """

    return s.lower().replace("_", "-")


ENV_PREFIX = 'ACHARNESS__'


def make_config_from_argparse(config_file_handle=None, default_yml=None,
                              temp_root=None, workers=None, environ=None):
    """ Generate config from various sources. The configurations chain
        includes these in order:
        1. a hardcoded default_yml_config
        2. a passed-in config file
        3. environment variables with prefix `ACHARNESS__`
        4. explicit override arguments such as temp_root

        the configuration values at the end of the chain override the values
        of those at the beginning of the chain
    """
    if default_yml is None:
        default_yml = default_yml_config()
    if environ is None:
        environ = os.environ

    cfg = default_yml
    if config_file_handle is not None:
        yml_data = safe_load(config_file_handle)
        if yml_data:
            cfg = merge_cfg(default_yml, yml_data)

    # keys in the environment have the form ACHARNESS__FOO__BAR (note the
    # _double_ underscores), which will decode the value as YAML and insert
    # it in cfg['foo']['bar'].
    for k in sorted(environ):
        if k.startswith(ENV_PREFIX):
            keys = [_make_yaml_key(x) for x in k.split('__')[1:]]
            value = safe_load(environ[k])
            _override_cfg(cfg, keys, value)

    if temp_root is not None:
        _override_cfg(cfg, ['sandbox', 'temp-root'], temp_root)

    if workers is not None:
        _override_cfg(cfg, ['workers'], workers)

    return HarnessConfiguration(cfg)
