from collections import namedtuple
import hashlib
import sys
import traceback


def format_stacktrace_one_line(exc_info=None):
    # exc_info is expected to be an exception tuple from sys.exc_info()
    if exc_info is None:
        exc_info = sys.exc_info()
    exc_type, exc_value, exc_traceback = exc_info
    exception_lines = traceback.format_exception(exc_type, exc_value,
                                                 exc_traceback)
    stacktrace = ' | '.join([x.replace('\n', '')
                             for x in exception_lines])
    return stacktrace


def stable_hash_int(*parts):
    """
    64 bit integer derived from the textual form of the parts

    Unlike hash(), the value is identical across interpreter runs, which
    keeps landscapes and seed streams reproducible bit for bit.
    """
    m = hashlib.sha256()
    for part in parts:
        m.update(repr(part).encode('utf-8'))
        m.update(b'\x00')
    return int.from_bytes(m.digest()[:8], 'big')


def stable_hash_hex(text, length=12):
    m = hashlib.sha1()
    m.update(text.encode('utf-8'))
    return m.hexdigest()[:length]


def namedtuple_with_defaults(name, props, defaults):
    t = namedtuple(name, props)
    t.__new__.__defaults__ = defaults
    return t
