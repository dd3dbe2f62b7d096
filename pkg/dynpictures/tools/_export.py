__all__ = [
    'format_number', 'atomic_write_text', 'write_json', 'write_csv',
    'export_ensemble_csv', 'export_grid_json', 'emit_plot_data',
]

import csv
import io
import json
import math
import os
import numpy as np
import fs_helper as fh
import dynpictures as dp
from dynpictures.tools._kvn import ENSEMBLE, GRID


logger = fh.get_logger(__name__)

RESULTS_CSV = 'results.csv'


def format_number(value):
    """Render a number with 17 significant digits (bools and strings pass through)"""
    if isinstance(value, (bool, np.bool_)):
        return 'true' if value else 'false'
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        value = float(value)
        if math.isnan(value):
            return 'nan'
        if math.isinf(value):
            return 'inf' if value > 0 else '-inf'
        return '{:.17g}'.format(value)
    if value is None:
        return ''
    return str(value)


def atomic_write_text(path, text):
    """Write text to a temp file next to path, then rename it into place"""
    path = fh.abspath(path)
    dirname = os.path.dirname(path)
    if dirname and not os.path.isdir(dirname):
        os.makedirs(dirname)
    tmp = path + '.tmp'
    with open(tmp, 'w', newline='') as fp:
        fp.write(text)
        fp.flush()
        os.fsync(fp.fileno())
    os.replace(tmp, path)
    logger.debug('wrote {}'.format(path))
    return path


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        value = float(obj)
        if not math.isfinite(value):
            return format_number(value)
        return float(format_number(value))
    return obj


def write_json(path, payload):
    """Atomically write payload as sorted, indented JSON"""
    return atomic_write_text(path, json.dumps(_jsonable(payload), indent=2, sort_keys=True) + '\n')


def write_csv(path, columns, rows, description=None):
    """Atomically write rows under a header of column names

    - columns: list of column names
    - rows: iterable of sequences, one value per column
    - description: optional text written first as a '# ' line
    """
    buf = io.StringIO()
    if description:
        buf.write('# {}\n'.format(description))
    writer = csv.writer(buf, lineterminator='\n')
    writer.writerow(columns)
    for row in rows:
        if len(row) != len(columns):
            raise dp.ValidationError('row has {} values for {} columns'.format(len(row), len(columns)))
        writer.writerow([format_number(v) for v in row])
    return atomic_write_text(path, buf.getvalue())


def export_ensemble_csv(path, state):
    """Write an ensemble state as columns q1..qN, p1..pN, re, im, weight"""
    if state.representation != ENSEMBLE:
        raise dp.ValidationError('export_ensemble_csv needs an ensemble state')
    n = state.dof
    columns = ['q{}'.format(i + 1) for i in range(n)] + ['p{}'.format(i + 1) for i in range(n)] + ['re', 'im', 'weight']
    values = np.asarray(state.values)
    rows = []
    for k in range(values.shape[0]):
        value = complex(values[k])
        rows.append(list(state.q[k]) + list(state.p[k]) + [value.real, value.imag, state.weights[k]])
    return write_csv(path, columns, rows)


def export_grid_json(path, state):
    """Write a grid state as a JSON header (axes, shape, dtype) plus flat row-major values

    Complex states store 're' and 'im' arrays; real states store 'values'
    """
    if state.representation != GRID:
        raise dp.ValidationError('export_grid_json needs a grid state')
    payload = {
        'kind': type(state).__name__,
        'shape': list(state.values.shape),
        'order': 'row-major (q index outer, p index inner)',
        'q_axis': {'start': state.q_axis[0], 'stop': state.q_axis[-1], 'num': state.q_axis.shape[0]},
        'p_axis': {'start': state.p_axis[0], 'stop': state.p_axis[-1], 'num': state.p_axis.shape[0]},
    }
    values = np.asarray(state.values)
    if np.iscomplexobj(values):
        payload['dtype'] = 'complex'
        payload['re'] = values.real.ravel()
        payload['im'] = values.imag.ravel()
    else:
        payload['dtype'] = 'float'
        payload['values'] = values.ravel()
    return write_json(path, payload)


def emit_plot_data(results, out_dir=None):
    """Write one CSV per plot-ready series

    - results: dict returned by run_experiment, or the path of a run directory
        - dict: its 'plots' entry maps file names to
          {'columns': [...], 'rows': [...], 'description': str}
        - path: nothing is written; the plot CSVs already in the directory
          are returned
    - out_dir: directory to write into (default results['out_dir'])

    Return the list of plot CSV paths (empty, with a warning, when there is
    nothing to write or the run directory is empty or missing)
    """
    if isinstance(results, str):
        run_dir = fh.abspath(results)
        names = []
        if os.path.isdir(run_dir):
            names = sorted(
                name for name in os.listdir(run_dir)
                if name.endswith('.csv') and name != RESULTS_CSV
            )
        if not names:
            logger.warning('no plot series found in {}'.format(run_dir))
        return [os.path.join(run_dir, name) for name in names]
    out_dir = out_dir or (results or {}).get('out_dir')
    plots = (results or {}).get('plots') or {}
    if not plots:
        logger.warning('no plot series to write in {}'.format(out_dir))
        return []
    if not out_dir:
        raise dp.ValidationError('out_dir is needed to write plot series')
    paths = []
    for filename in sorted(plots):
        series = plots[filename]
        paths.append(write_csv(
            os.path.join(out_dir, filename), series['columns'], series['rows'],
            description=series.get('description')
        ))
    return paths
