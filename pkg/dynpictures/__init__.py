import logging
import os
import socket
import sys
import threading
import time
import traceback
import fs_helper as fh


logger = fh.get_logger(__name__)

LOG_LEVEL_ENV_VAR = 'DYNPICTURES_LOG_LEVEL'


def set_log_level_from_env(_logger=None):
    """Apply DYNPICTURES_LOG_LEVEL to the console handlers of a logger

    - _logger: logger object to use (default is the package logger)

    File handlers created by fs_helper keep their own level
    """
    _logger = _logger or logger
    level_name = os.environ.get(LOG_LEVEL_ENV_VAR, '').strip().upper()
    if not level_name:
        return
    level = getattr(logging, level_name, None)
    if not isinstance(level, int):
        _logger.warning('Ignoring unknown {} value {}'.format(LOG_LEVEL_ENV_VAR, repr(level_name)))
        return
    for handler in _logger.handlers:
        if not isinstance(handler, logging.FileHandler):
            handler.setLevel(level)


class DynPicturesError(Exception):
    pass


class ValidationError(DynPicturesError, ValueError):
    """Construction or usage error

    - field: dotted path of the offending config field, if any
    - line: line number in the config file, if known
    """
    def __init__(self, message, field=None, line=None):
        self.message = message
        self.field = field
        self.line = line
        prefix = ''
        if field:
            prefix += '{}: '.format(field)
        if line is not None:
            prefix = 'line {}: '.format(line) + prefix
        super(ValidationError, self).__init__(prefix + message)


class UnsupportedSplitError(ValidationError):
    pass


class NumericError(DynPicturesError):
    pass


class IntegrationError(NumericError):
    pass


class DerivativeError(NumericError):
    pass


class RenormalizationError(NumericError):
    pass


class UnitarityError(NumericError):
    pass


class TruncationError(NumericError):
    pass


def call_func(func, *args, **kwargs):
    """Call a func with arbitrary args/kwargs and capture uncaught exceptions

    The following kwargs will be popped and used internally:

    - logger: logger object to use
    - verbose: if True (default), print line separator & tracebacks when caught

    The returned dict will always have at least the following keys:

    - `func_name`
    - `args`
    - `kwargs`
    - `status` (ok/error)
    - `elapsed_seconds`

    If the function call was successful, there will also be a `value` key. If
    there was an uncaught exception, the following additional keys will be
    provided in the return dict

    - `exception` (the exception object itself)
    - `error_type`
    - `error_value`
    - `fqdn`
    - `func_doc`
    - `func_module`
    - `time_epoch`
    - `time_string`
    - `traceback_string`
    """
    _logger = kwargs.pop('logger', logger)
    verbose = kwargs.pop('verbose', True)
    try:
        _logfile = fh.get_logger_filenames(_logger)[0]
    except IndexError:
        _logfile = None

    info = {
        'func_name': getattr(func, '__name__', repr(type(func))),
        'args': repr(args),
        'kwargs': repr(kwargs),
    }

    start = time.time()
    try:
        value = func(*args, **kwargs)
        info.update({
            'status': 'ok',
            'value': value
        })
    except Exception as e:
        etype, evalue, tb = sys.exc_info()
        epoch = time.time()
        info.update({
            'status': 'error',
            'exception': e,
            'traceback_string': traceback.format_exc(),
            'error_type': repr(etype),
            'error_value': repr(evalue),
            'func_doc': getattr(func, '__doc__', ''),
            'func_module': getattr(func, '__module__', ''),
            'fqdn': socket.getfqdn(),
            'time_epoch': epoch,
            'time_string': time.strftime(
                '%Y_%m%d-%a-%H%M%S', time.localtime(epoch)
            )
        })
        if verbose:
            print('=' * 70)
        _logger.error('func={} error={}'.format(
            info['func_name'],
            info['error_value'],
        ))
        if verbose:
            print(info['traceback_string'])
        if _logfile:
            with open(_logfile, 'a') as fp:
                fp.write(info['traceback_string'])
    info['elapsed_seconds'] = time.time() - start

    return info


class BackgroundRun(object):
    """Run a single independent computation in a background thread

    The callable is executed by `call_func`, so the `logger` and `verbose`
    keyword arguments (if passed in) will be used by `call_func`. Call `result`
    to wait for the info dict
    """
    def __init__(self, func, *args, **kwargs):
        """
        - func: callable object
        """
        self._func = func
        self._args = args
        self._kwargs = kwargs
        self._info = None

        self._thread = threading.Thread(target=self.run)
        self._thread.daemon = True
        self._thread.start()

    def run(self):
        self._info = call_func(self._func, *self._args, **self._kwargs)

    def result(self, timeout=None):
        """Wait for the computation and return the info dict from `call_func`

        - timeout: number of seconds to wait before giving up (returns None)
        """
        self._thread.join(timeout)
        return self._info


def run_concurrently(calls, verbose=False):
    """Run independent (func, args, kwargs) triples in background threads

    - calls: list of (func, args, kwargs) tuples
    - verbose: passed to `call_func`

    Return the list of info dicts in the same order as calls
    """
    runs = []
    for func, args, kwargs in calls:
        kwargs = dict(kwargs)
        kwargs.setdefault('verbose', verbose)
        runs.append(BackgroundRun(func, *args, **kwargs))
    return [run.result() for run in runs]


set_log_level_from_env()


from dynpictures import tools
from dynpictures.tools import *
