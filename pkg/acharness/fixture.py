"""
Spawnable synthetic target algorithm

    python -m acharness.fixture --landscape L --mode M \
        <instance> <info> <cutoff> <runlength> <seed> [-name value]...

The runtime comes from the landscape's closed form. Misbehaving modes
reproduce the failures a harness has to survive.
"""

from acharness.space import validate_config
from acharness.synthetic import FIXTURE_MODES
from acharness.synthetic import load_landscape
from acharness.synthetic import synth_runtime
from acharness.wrapper.sat import parse_dimacs
import argparse
import os
import resource
import signal
import sys
import time


MEMORY_CHUNK = 16 * 1024 * 1024
PAGE = 4096
LIED_RUNTIME = -4.2


def busy_until(cpu_seconds):
    x = 0
    while time.process_time() < cpu_seconds:
        for i in range(10000):
            x += i * i
    return x


def spend(runtime, sleep=False):
    if sleep:
        time.sleep(runtime)
    else:
        busy_until(runtime)


def solve_cnf(cnf):
    """(answer, model) through sympy's dpll; model lists every variable"""
    # imported here, sympy's import time counts against every run's cpu
    from sympy import And
    from sympy import Or
    from sympy import Symbol
    from sympy.logic.algorithms.dpll2 import dpll_satisfiable
    if any(len(clause) == 0 for clause in cnf.clauses):
        return 'UNSAT', None
    symbols = dict((v, Symbol('x%d' % v)) for v in range(1, cnf.num_vars + 1))
    expr = And(*[Or(*[symbols[lit] if lit > 0 else ~symbols[-lit]
                      for lit in clause])
                 for clause in cnf.clauses])
    model = dpll_satisfiable(expr)
    if model is False:
        return 'UNSAT', None
    # unassigned variables are free
    return 'SAT', [v if model.get(symbols[v], True) else -v
                   for v in range(1, cnf.num_vars + 1)]


def print_answer(answer, model, out):
    if answer == 'SAT':
        out.write('s SATISFIABLE\n')
        out.write('v %s 0\n' % ' '.join(str(lit) for lit in model))
    else:
        out.write('s UNSATISFIABLE\n')


def escape(lifetime):
    """double fork a busy child out of the process group"""
    pid = os.fork()
    if pid:
        os.waitpid(pid, 0)
        return
    os.setsid()
    if os.fork():
        os._exit(0)
    devnull = os.open(os.devnull, os.O_RDWR)
    for fd in (0, 1, 2):
        os.dup2(devnull, fd)
    deadline = time.monotonic() + lifetime
    while time.monotonic() < deadline:
        busy_until(time.process_time() + 0.1)
    os._exit(0)


def hog_memory(limit_mib):
    chunks = []
    while len(chunks) * MEMORY_CHUNK < limit_mib * 1024 * 1024:
        chunk = bytearray(MEMORY_CHUNK)
        for i in range(0, MEMORY_CHUNK, PAGE):
            chunk[i] = 1
        chunks.append(chunk)
        time.sleep(0.01)
    return chunks


def crash():
    resource.setrlimit(resource.RLIMIT_CORE, (0, 0))
    os.kill(os.getpid(), signal.SIGSEGV)


def parse_call(call, space):
    if len(call) < 5:
        raise SystemExit('expected <instance> <info> <cutoff> <runlength> '
                         '<seed> [-name value]...')
    instance, _, cutoff, _, seed = call[:5]
    rest = call[5:]
    values = {}
    for i in range(0, len(rest) - 1, 2):
        name = rest[i].lstrip('-')
        values[name] = space[name].parse_value(rest[i + 1])
    config = space.make_configuration(values)
    violations = validate_config(space, config)
    if violations:
        raise SystemExit('invalid configuration: %s' % '; '.join(violations))
    return instance, float(cutoff), int(seed), config


def make_parser():
    parser = argparse.ArgumentParser(
        prog='acharness.fixture',
        description='Synthetic target algorithm with closed form runtimes')
    parser.add_argument('--landscape', required=True,
                        help='landscape spec file (json)')
    parser.add_argument('--mode', default='honest', choices=FIXTURE_MODES)
    parser.add_argument('--sleep', action='store_true',
                        help='sleep instead of burning cpu')
    parser.add_argument('--escape-lifetime', type=float, default=60.0,
                        help='seconds the fork_escape child keeps running')
    parser.add_argument('--hog-limit', type=int, default=4096,
                        help='MiB the memory_hog mode allocates at most')
    parser.add_argument('call', nargs=argparse.REMAINDER,
                        help='wrapper call: instance info cutoff runlength '
                             'seed [-name value]...')
    return parser


def fixture_main(argv=None, out=None):
    args = make_parser().parse_args(argv)
    if out is None:
        out = sys.stdout
    landscape = load_landscape(args.landscape)
    instance, cutoff, seed, config = parse_call(args.call, landscape.space)
    mode = args.mode
    is_cnf = instance.endswith('.cnf')

    if mode == 'crash':
        crash()
        return 1

    if mode == 'wrong_answer':
        out.write('s UNSATISFIABLE\n')
        out.flush()
        return 0

    if mode == 'ignore_kill':
        signal.signal(signal.SIGTERM, signal.SIG_IGN)
    elif mode == 'fork_escape':
        escape(args.escape_lifetime)
    elif mode == 'memory_hog':
        hog_memory(args.hog_limit)

    runtime = synth_runtime(landscape, config, instance, seed)
    spend(runtime, args.sleep)

    reported = LIED_RUNTIME if mode == 'lie_runtime' else runtime
    out.write('c runtime %.6f\n' % reported)
    if is_cnf:
        answer, model = solve_cnf(parse_dimacs(instance))
        print_answer(answer, model, out)
    else:
        out.write('%.6f\n' % runtime)
    out.flush()
    return 0


if __name__ == '__main__':
    sys.exit(fixture_main())
