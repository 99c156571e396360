class FakeStatsd(object):
    def __init__(self, *args, **kwargs):
        pass

    def incr(self, *args, **kwargs):
        pass

    def decr(self, *args, **kwargs):
        pass

    def gauge(self, *args, **kwargs):
        pass

    def set(self, *args, **kwargs):
        pass

    def timing(self, *args, **kwargs):
        pass

    def pipeline(self):
        return self

    def __enter__(self):
        return self

    def __exit__(self, type, value, traceback):
        pass


def make_statsd_client_from_cfg(cfg):
    if cfg is not None and cfg.statsd_host:
        import statsd
        stats = statsd.StatsClient(cfg.statsd_host, cfg.statsd_port,
                                   prefix=cfg.statsd_prefix)
    else:
        stats = FakeStatsd()
    return stats


class RunStatsHandler(object):

    def __init__(self, stats):
        self.stats = stats

    def run_done(self, result):
        with self.stats.pipeline() as pipe:
            pipe.incr('run.status.%s' % result.status.lower(), 1)
            # statsd timings are in milliseconds
            pipe.timing('run.time.cpu', result.cpu_time * 1000)
            pipe.timing('run.time.wall', result.wall_time * 1000)
            pipe.gauge('run.memory', result.max_memory)
            if result.anomalies:
                pipe.incr('run.anomalies', len(result.anomalies))

    def hook_error(self):
        self.stats.incr('run.errors.hook', 1)

    def abort(self):
        self.stats.incr('run.errors.abort', 1)


class ConfiguratorStatsHandler(object):

    def __init__(self, stats):
        self.stats = stats

    def race_done(self, decision, n_runs, n_capped):
        with self.stats.pipeline() as pipe:
            pipe.incr('configurator.race.%s' % decision, 1)
            pipe.gauge('configurator.race.runs', n_runs)
            pipe.incr('configurator.race.capped', n_capped)

    def incumbent_changed(self, train_cost, n_pairs):
        with self.stats.pipeline() as pipe:
            pipe.incr('configurator.incumbent.changes', 1)
            pipe.gauge('configurator.incumbent.cost', train_cost)
            pipe.gauge('configurator.incumbent.pairs', n_pairs)
