from acharness.result import VERDICT_NOT_CHECKED
from acharness.result import VERDICT_VERIFIED
from acharness.result import VERDICT_WRONG_ANSWER
from collections import namedtuple


SAT = 'SAT'
UNSAT = 'UNSAT'


class DimacsError(ValueError):
    pass


Cnf = namedtuple('Cnf', 'num_vars clauses')

VerificationVerdict = namedtuple('VerificationVerdict', 'verdict detail')


def parse_dimacs_fp(fp):
    """
    Parse a DIMACS cnf

    Clauses are 0 terminated and may span lines. A line holding only '%'
    ends the formula, as in the SATLIB benchmark files.
    """

    num_vars = None
    n_declared = None
    clauses = []
    current = []
    for lineno, line in enumerate(fp, 1):
        line = line.strip()
        if not line or line.startswith('c'):
            continue
        if line.startswith('%'):
            break
        if line.startswith('p'):
            parts = line.split()
            if len(parts) != 4 or parts[1] != 'cnf':
                raise DimacsError('line %d: bad problem line: %s' % (
                    lineno, line))
            try:
                num_vars = int(parts[2])
                n_declared = int(parts[3])
            except ValueError:
                raise DimacsError('line %d: bad problem line: %s' % (
                    lineno, line))
            continue
        if num_vars is None:
            raise DimacsError('line %d: clause before problem line' % lineno)
        for token in line.split():
            try:
                lit = int(token)
            except ValueError:
                raise DimacsError('line %d: bad literal %r' % (lineno, token))
            if lit == 0:
                clauses.append(tuple(current))
                current = []
            else:
                if abs(lit) > num_vars:
                    raise DimacsError('line %d: variable %d out of range' % (
                        lineno, abs(lit)))
                current.append(lit)
    if current:
        clauses.append(tuple(current))
    if num_vars is None:
        raise DimacsError('missing problem line')
    if n_declared is not None and n_declared != len(clauses):
        raise DimacsError('declared %d clauses, found %d' % (
            n_declared, len(clauses)))
    return Cnf(num_vars, tuple(clauses))


def parse_dimacs(path):
    with open(path, 'r') as fp:
        return parse_dimacs_fp(fp)


def format_dimacs(cnf, comment=None):
    lines = []
    if comment:
        lines.append('c %s' % comment)
    lines.append('p cnf %d %d' % (cnf.num_vars, len(cnf.clauses)))
    for clause in cnf.clauses:
        lines.append(' '.join(str(lit) for lit in clause) + ' 0')
    return '\n'.join(lines) + '\n'


def model_assignment(model):
    """map variable -> truth value; conflicting or zero literals are errors"""
    assignment = {}
    for lit in model:
        if not isinstance(lit, int) or isinstance(lit, bool) or lit == 0:
            raise ValueError('bad literal %r' % (lit,))
        var = abs(lit)
        value = lit > 0
        if assignment.get(var, value) != value:
            raise ValueError('variable %d assigned both ways' % var)
        assignment[var] = value
    return assignment


def first_violated_clause(cnf, assignment):
    for index, clause in enumerate(cnf.clauses, 1):
        satisfied = False
        for lit in clause:
            value = assignment.get(abs(lit))
            if value is not None and value == (lit > 0):
                satisfied = True
                break
        if not satisfied:
            return index, clause
    return None


def verify_sat_solution(cnf, claimed_answer, model=None, reference=None):
    """
    Check a solver's answer against the formula

    A SAT claim is verified by evaluating every clause under the model.
    An UNSAT claim can only be compared with a known reference answer;
    without one it stays unchecked.
    """

    if isinstance(cnf, str):
        cnf = parse_dimacs(cnf)

    if claimed_answer == SAT:
        try:
            assignment = model_assignment(model or ())
        except ValueError as e:
            return VerificationVerdict(VERDICT_WRONG_ANSWER,
                                       'malformed model: %s' % e)
        if not assignment and cnf.clauses:
            return VerificationVerdict(VERDICT_WRONG_ANSWER,
                                       'SAT claimed without a model')
        violated = first_violated_clause(cnf, assignment)
        if violated is not None:
            index, clause = violated
            return VerificationVerdict(
                VERDICT_WRONG_ANSWER,
                'clause %d violated: %s' % (
                    index, ' '.join(str(x) for x in clause)))
        return VerificationVerdict(VERDICT_VERIFIED,
                                   'all %d clauses satisfied' %
                                   len(cnf.clauses))

    if claimed_answer == UNSAT:
        if reference == SAT:
            return VerificationVerdict(
                VERDICT_WRONG_ANSWER,
                'claimed UNSAT but the reference answer is SAT')
        if reference == UNSAT:
            return VerificationVerdict(VERDICT_VERIFIED,
                                       'matches reference answer UNSAT')
        return VerificationVerdict(VERDICT_NOT_CHECKED,
                                   'no reference answer for UNSAT claim')

    return VerificationVerdict(VERDICT_NOT_CHECKED,
                               'no answer claimed: %r' % (claimed_answer,))
