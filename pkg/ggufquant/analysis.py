# @Author: ggufquant
# @Date:   2026-10-19
# @Filename: analysis.py
"""Quality metrics, result ingestion, Pareto analysis and recommendations."""

import collections
import csv
import json
import math
import os
import warnings

import numpy as np

from astropy.table import Table

from .exceptions import InputError, ResultsError
from .schemes import DATA_DIR, SCHEMES, size_reduction
from .utils.output import format_warning

warnings.showwarning = format_warning

SHIPPED_RESULTS = os.path.join(DATA_DIR, 'llama-3.1-8b-results.csv')

BENCHMARKS = ('gsm8k', 'hellaswag', 'ifeval', 'mmlu', 'truthfulqa_mc2')
IFEVAL_PARTS = ('ifeval_prompt_strict', 'ifeval_prompt_loose',
                'ifeval_inst_strict', 'ifeval_inst_loose')
NUMERIC_COLUMNS = BENCHMARKS + IFEVAL_PARTS + (
    'avg', 'ppl', 'size_mib', 'reduction', 'pp512', 'pp512_std', 'tg128',
    'tg128_std', 'quant_time_s', 'gsm8k_strict', 'gsm8k_flexible')
PERCENT_COLUMNS = BENCHMARKS + IFEVAL_PARTS + ('avg', 'gsm8k_strict', 'gsm8k_flexible')
BREAKDOWN_PREFIX = 'mmlu_'
CROSS_CHECK_TOLERANCE = 0.01

OBJECTIVES = collections.OrderedDict([
    ('size', ('size_mib', 'min')),
    ('avg', ('avg', 'max')),
    ('ppl', ('ppl', 'min')),
    ('tg', ('tg128', 'max')),
    ('pp', ('pp512', 'max')),
] + [(name, (name, 'max')) for name in BENCHMARKS])

SCENARIOS = collections.OrderedDict([
    ('edge', {
        'description': 'edge or mobile deployment under a tight memory budget',
        'max_size_mib': 4000., 'objective': 'avg'}),
    ('interactive', {
        'description': 'interactive use where prompt processing latency dominates',
        'min_avg': 67.5, 'objective': 'pp'}),
    ('throughput', {
        'description': 'batch generation on CPU with a quality floor',
        'min_avg': 68., 'objective': 'tg'}),
    ('accuracy', {
        'description': 'accuracy-critical use with a moderate size reduction',
        'min_reduction': 40., 'objective': 'ppl'}),
    ('reasoning', {
        'description': 'math and multi-step reasoning on a compressed model',
        'min_reduction': 60., 'objective': 'gsm8k'}),
    ('instruction', {
        'description': 'instruction following on a compressed model',
        'min_reduction': 60., 'objective': 'ifeval'}),
    ('calibration', {
        'description': 'language-modelling quality measured by perplexity under a size cap',
        'max_size_mib': 8500., 'objective': 'ppl'}),
])


class BenchmarkRow(collections.namedtuple('BenchmarkRow', (
        'scheme',) + NUMERIC_COLUMNS + ('extra', 'source'))):
    """One evaluated scheme; missing values are None.

    `extra` holds breakdown columns (`mmlu_<subject>`), `source` the file
    line (or JSON entry) the row came from.
    """
    __slots__ = ()

    def get(self, column):
        if column in self._fields:
            return getattr(self, column)
        return self.extra.get(column)


ParetoPoint = collections.namedtuple('ParetoPoint', [
    'scheme_id', 'reduction', 'avg_loss', 'on_frontier', 'dominated_by'])

Recommendation = collections.namedtuple('Recommendation', [
    'ranking', 'rows', 'objective', 'rejected', 'report'])


def make_row(scheme, source=None, **values):
    """BenchmarkRow from keyword values; unknown keys go to `extra`."""
    fields = dict.fromkeys(NUMERIC_COLUMNS)
    extra = collections.OrderedDict()
    for key, value in values.items():
        if key in fields:
            fields[key] = value
        else:
            extra[key] = value
    return BenchmarkRow(scheme=scheme, extra=extra, source=source, **fields)


# ---- metrics -----------------------------------------------------------------

def perplexity(logprobs):
    """exp(-mean(logprobs)) of natural-log next-token probabilities."""
    logprobs = np.asarray(logprobs, dtype=np.float64).ravel()
    if logprobs.size == 0:
        raise InputError('perplexity of an empty log-probability stream')
    if not np.all(np.isfinite(logprobs)):
        raise InputError('log-probability stream contains non-finite values')
    if np.any(logprobs > 0):
        raise InputError('log-probabilities have to be <= 0')
    # exact summation, so the result does not depend on the order
    return math.exp(-math.fsum(logprobs) / logprobs.size)


def windowed_perplexity(logprob_fn, tokens, n_ctx=512):
    """Perplexity over non-overlapping windows of `n_ctx` tokens.

    Parameters
    ----------
    logprob_fn : callable
        Maps a window of token ids to the log-probabilities of tokens
        ``1 .. n_ctx - 1`` given their prefixes.
    tokens : array-like
        Token stream; a trailing partial window is dropped.
    n_ctx : int
        Window length. Only the predictions in the second half of every
        window are scored, so each scored token has at least n_ctx/2 tokens
        of context.

    """
    tokens = np.asarray(tokens, dtype=np.int64).ravel()
    if n_ctx < 2:
        raise InputError('window length has to be at least 2, got {}'.format(n_ctx))
    n_windows = tokens.size // n_ctx
    if n_windows == 0:
        raise InputError('{} tokens do not fill a window of {}'.format(tokens.size, n_ctx))
    first = n_ctx // 2
    scored = []
    for index in range(n_windows):
        window = tokens[index * n_ctx:(index + 1) * n_ctx]
        logprobs = np.asarray(logprob_fn(window), dtype=np.float64)
        if logprobs.size != n_ctx - 1:
            raise InputError('log-probability function returned {} values for a window '
                             'of {}'.format(logprobs.size, n_ctx))
        scored.append(logprobs[first - 1:])
    return perplexity(np.concatenate(scored))


def _check_percent(value, what):
    if value is None or not np.isfinite(value) or not 0. <= value <= 100.:
        raise InputError('{} has to be a percentage in [0, 100], got {}'.format(what, value))


def ifeval_aggregate(accuracies):
    """Unweighted mean of the four IFEval accuracies (prompt/instruction x strict/loose)."""
    accuracies = list(accuracies)
    if len(accuracies) != 4:
        raise InputError('IFEval needs 4 accuracies, got {}'.format(len(accuracies)))
    for value in accuracies:
        _check_percent(value, 'IFEval accuracy')
    return math.fsum(accuracies) / 4.


def avg_score(row):
    """Unweighted mean of the five headline benchmark scores (PPL excluded)."""
    scores = []
    for name in BENCHMARKS:
        value = row.get(name)
        if value is None:
            raise ResultsError("scheme '{}' lacks the {} score".format(
                row.get('scheme'), name))
        scores.append(value)
    return math.fsum(scores) / len(scores)


def avg_loss(avg, baseline_avg):
    """Relative drop of the average versus the baseline, in percent."""
    if baseline_avg <= 0:
        raise InputError('baseline average has to be positive, got {}'.format(baseline_avg))
    return 100. * (baseline_avg - avg) / baseline_avg


# ---- Pareto ------------------------------------------------------------------

def pareto_frontier(points):
    """Indices of the non-dominated (reduction, avg_loss) points.

    A point is dominated when another one has at least its reduction and at
    most its loss with one of both strict. Points identical in both
    coordinates dominate neither each other. O(n log n).
    """
    points = np.asarray(points, dtype=np.float64).reshape(-1, 2)
    if points.shape[0] == 0:
        return []
    reduction, loss = points[:, 0], points[:, 1]
    order = np.lexsort((loss, -reduction))
    frontier = []
    best_higher = np.inf
    start = 0
    while start < order.size:
        stop = start
        while stop < order.size and reduction[order[stop]] == reduction[order[start]]:
            stop += 1
        group = order[start:stop]
        group_min = loss[group[0]]
        for index in group:
            if loss[index] == group_min and best_higher > loss[index]:
                frontier.append(int(index))
        best_higher = min(best_higher, group_min)
        start = stop
    return sorted(frontier)


def dominators(points):
    """For every point the index of its strongest dominator (lowest loss) or None."""
    points = np.asarray(points, dtype=np.float64).reshape(-1, 2)
    result = []
    for reduction, loss in points:
        dominating = ((points[:, 0] >= reduction) & (points[:, 1] <= loss)
                      & ((points[:, 0] > reduction) | (points[:, 1] < loss)))
        candidates = np.flatnonzero(dominating)
        if candidates.size == 0:
            result.append(None)
            continue
        best = min(candidates, key=lambda index: (points[index, 1], -points[index, 0]))
        result.append(int(best))
    return result


def _baseline_row(rows, baseline):
    for row in rows:
        if row.scheme == baseline:
            return row
    raise ResultsError("baseline scheme '{}' is not among the results".format(baseline))


def row_reduction(row, baseline_row):
    """Size reduction of a row: from sizes when both are known, else as given."""
    if row is baseline_row:
        return 0.
    if row.size_mib is not None and baseline_row.size_mib is not None:
        return size_reduction(row.size_mib, baseline_row.size_mib)
    if row.reduction is not None:
        return row.reduction
    raise ResultsError("scheme '{}' has neither a size nor a reduction".format(row.scheme))


def pareto_points(rows, baseline='F16'):
    """ParetoPoint per row, frontier membership and dominators included."""
    base = _baseline_row(rows, baseline)
    base_avg = avg_score(base)
    coordinates = [(row_reduction(row, base), avg_loss(avg_score(row), base_avg))
                   for row in rows]
    frontier = set(pareto_frontier(coordinates))
    dominated_by = dominators(coordinates)
    return [ParetoPoint(row.scheme, reduction, loss, index in frontier,
                        None if dominated_by[index] is None
                        else rows[dominated_by[index]].scheme)
            for index, (row, (reduction, loss)) in enumerate(zip(rows, coordinates))]


# ---- recommendation ----------------------------------------------------------

def _objective_column(objective):
    if objective in OBJECTIVES:
        return OBJECTIVES[objective]
    raise InputError("unknown objective '{}'; valid objectives: {}".format(
        objective, ', '.join(OBJECTIVES)))


def _row_avg(row):
    if all(row.get(name) is not None for name in BENCHMARKS):
        return avg_score(row)
    return row.avg


def _row_reduction_or_none(row, base):
    if base is None:
        return row.reduction
    try:
        return row_reduction(row, base)
    except ResultsError:
        return None


def recommend(rows, max_size_mib=None, min_avg=None, max_ppl=None, min_reduction=None,
              objective=None, baseline='F16', include_baseline=False):
    """Rank the schemes that satisfy hard constraints by an objective.

    Parameters
    ----------
    rows : list of BenchmarkRow
    max_size_mib, min_avg, max_ppl, min_reduction : float
        Hard constraints; None disables a constraint.
    objective : str
        'size', 'avg', 'ppl', 'tg', 'pp' or a benchmark column; defaults to
        'avg' when only constraints are given.
    baseline : str
        Reference scheme for the size reduction.
    include_baseline : bool
        Also rank the baseline itself.

    Returns
    -------
    Recommendation
        `ranking` lists scheme ids best first (ties broken by higher Avg, then
        smaller size); `rejected` maps every constraint to the schemes it
        removed; `report` explains an empty result.

    """
    constraints = collections.OrderedDict([
        ('max_size_mib', max_size_mib), ('min_avg', min_avg), ('max_ppl', max_ppl),
        ('min_reduction', min_reduction)])
    active = collections.OrderedDict(
        (name, value) for name, value in constraints.items() if value is not None)
    if not active and objective is None:
        raise InputError('recommend needs at least one constraint or an objective')
    objective = objective or 'avg'
    column, direction = _objective_column(objective)

    base = next((row for row in rows if row.scheme == baseline), None)
    if min_reduction is not None and base is None:
        _baseline_row(rows, baseline)

    def measured(row):
        return collections.OrderedDict([
            ('max_size_mib', row.size_mib),
            ('min_avg', _row_avg(row)),
            ('max_ppl', row.ppl),
            ('min_reduction', _row_reduction_or_none(row, base)),
        ])

    def score(row, values):
        return values['min_avg'] if column == 'avg' else row.get(column)

    rejected = collections.OrderedDict((name, []) for name in list(active) + [column])
    feasible = []
    for row in rows:
        if row.scheme == baseline and not include_baseline:
            continue
        values = measured(row)
        ok = True
        for name, limit in active.items():
            value = values[name]
            if value is None or (value > limit if name.startswith('max') else value < limit):
                rejected[name].append(row.scheme)
                ok = False
        if score(row, values) is None:
            rejected[column].append(row.scheme)
            ok = False
        if ok:
            feasible.append((row, values))

    sign = 1. if direction == 'min' else -1.
    feasible.sort(key=lambda item: (sign * score(*item),
                                    -(item[1]['min_avg'] or 0.),
                                    item[0].size_mib if item[0].size_mib is not None
                                    else np.inf))

    report = []
    if not feasible:
        report.append('no scheme satisfies all constraints')
        for name, schemes in rejected.items():
            if schemes:
                report.append('{} = {} rejects {}'.format(
                    name, active.get(name, 'required'), ', '.join(schemes)))
    return Recommendation([row.scheme for row, _ in feasible],
                          [row for row, _ in feasible], objective, rejected, report)


def recommend_scenario(rows, scenario, baseline='F16'):
    if scenario not in SCENARIOS:
        raise InputError("unknown scenario '{}'; valid scenarios: {}".format(
            scenario, ', '.join(SCENARIOS)))
    settings = {key: value for key, value in SCENARIOS[scenario].items()
                if key != 'description'}
    return recommend(rows, baseline=baseline, **settings)


def quant_time_ordering(rows):
    """Mean quantization time per scheme family.

    Returns
    -------
    collections.OrderedDict
        {'legacy': seconds, 'kquant': seconds, 'kquant_slower': bool}; absolute
        times are hardware specific, only the ordering carries over.

    """
    times = collections.defaultdict(list)
    for row in rows:
        if row.quant_time_s is None or row.scheme not in SCHEMES:
            continue
        times[SCHEMES[row.scheme].family].append(row.quant_time_s)
    if not times['legacy'] or not times['kquant']:
        raise ResultsError('quantization times of legacy and K-quant schemes are needed')
    legacy = float(np.mean(times['legacy']))
    kquant = float(np.mean(times['kquant']))
    return collections.OrderedDict([('legacy', legacy), ('kquant', kquant),
                                    ('kquant_slower', kquant > legacy)])


# ---- ingestion ---------------------------------------------------------------

def _parse_number(text, column, source):
    if isinstance(text, (int, float)) and not isinstance(text, bool):
        return float(text)
    if text is None or (isinstance(text, str) and not text.strip()):
        return None
    try:
        return float(text)
    except (TypeError, ValueError):
        raise ResultsError('{}: column {} is not a number: {!r}'.format(source, column, text))


def _validate_columns(columns, source):
    unknown = [column for column in columns
               if column != 'scheme' and column not in NUMERIC_COLUMNS
               and not column.startswith(BREAKDOWN_PREFIX)]
    if unknown:
        raise ResultsError('{}: unknown column(s) {}'.format(source, ', '.join(unknown)))
    if 'scheme' not in columns:
        raise ResultsError("{}: missing column 'scheme'".format(source))


def parse_row(record, source):
    """Validate one raw {column: value} record into a BenchmarkRow."""
    scheme = str(record.get('scheme') or '').strip()
    if not scheme:
        raise ResultsError('{}: empty scheme'.format(source))
    values = collections.OrderedDict()
    for column, text in record.items():
        if column == 'scheme':
            continue
        value = _parse_number(text, column, source)
        if value is None:
            continue
        if not np.isfinite(value):
            raise ResultsError('{}: column {} is not finite'.format(source, column))
        if column in PERCENT_COLUMNS or column.startswith(BREAKDOWN_PREFIX):
            if not 0. <= value <= 100.:
                raise ResultsError('{}: {} = {} is not a percentage'.format(
                    source, column, value))
        values[column] = value
    if 'ppl' in values and values['ppl'] < 1.:
        raise ResultsError('{}: perplexity {} is below 1'.format(source, values['ppl']))
    if 'size_mib' in values and values['size_mib'] <= 0.:
        raise ResultsError('{}: size {} is not positive'.format(source, values['size_mib']))

    parts = [values.get(name) for name in IFEVAL_PARTS]
    if all(part is not None for part in parts):
        aggregate = ifeval_aggregate(parts)
        if 'ifeval' not in values:
            values['ifeval'] = aggregate
        elif abs(values['ifeval'] - aggregate) > CROSS_CHECK_TOLERANCE:
            warnings.warn('{}: ifeval {} differs from the mean of its parts {:.4f}'.format(
                source, values['ifeval'], aggregate))

    row = make_row(scheme, source=source, **values)
    if row.avg is not None and all(row.get(name) is not None for name in BENCHMARKS):
        recomputed = avg_score(row)
        if abs(row.avg - recomputed) > CROSS_CHECK_TOLERANCE:
            warnings.warn('{}: avg {} differs from the recomputed {:.4f}'.format(
                source, row.avg, recomputed))
    return row


def _csv_records(path):
    with open(path, newline='', encoding='utf-8') as file:
        lines = [(number, line) for number, line in enumerate(file.read().splitlines(), 1)
                 if line.strip() and not line.lstrip().startswith('#')]
    if not lines:
        raise ResultsError("'{}' contains no header".format(path))
    header_line, header = lines[0]
    columns = [column.strip() for column in next(csv.reader([header]))]
    _validate_columns(columns, '{}:{}'.format(path, header_line))
    for number, line in lines[1:]:
        source = '{}:{}'.format(path, number)
        cells = next(csv.reader([line]))
        if len(cells) != len(columns):
            yield source, ResultsError('{}: expected {} fields, got {}'.format(
                source, len(columns), len(cells)))
            continue
        yield source, collections.OrderedDict(zip(columns, cells))


def _json_records(path):
    with open(path, encoding='utf-8') as file:
        try:
            data = json.load(file)
        except ValueError as error:
            raise ResultsError("'{}' is not valid JSON: {}".format(path, error))
    if isinstance(data, dict):
        data = data.get('rows')
    if not isinstance(data, list):
        raise ResultsError("'{}' has to hold a list of rows or {{'rows': [...]}}".format(path))
    for index, record in enumerate(data):
        source = '{}:entry {}'.format(path, index)
        if not isinstance(record, dict):
            yield source, ResultsError('{}: row is not an object'.format(source))
            continue
        try:
            _validate_columns(list(record), source)
        except ResultsError as error:
            yield source, error
            continue
        yield source, record


def load_results(path=SHIPPED_RESULTS, strict=False):
    """Read benchmark rows from a CSV or JSON results file.

    Malformed rows are rejected one by one with their line number (a warning
    each, or a `ResultsError` listing all of them when `strict`).
    """
    if not os.path.exists(path):
        raise ResultsError("results file '{}' does not exist".format(path))
    records = _json_records(path) if path.lower().endswith('.json') else _csv_records(path)

    rows, errors, seen = [], [], set()
    for source, record in records:
        try:
            if isinstance(record, ResultsError):
                raise record
            row = parse_row(record, source)
            if row.scheme in seen:
                raise ResultsError("{}: duplicate scheme '{}'".format(source, row.scheme))
        except (ResultsError, InputError) as error:
            errors.append(str(error))
            continue
        seen.add(row.scheme)
        rows.append(row)

    if errors and strict:
        raise ResultsError('rejected rows:\n  ' + '\n  '.join(errors))
    for error in errors:
        warnings.warn('rejected row: {}'.format(error))
    if not rows:
        raise ResultsError("'{}' contains no usable rows".format(path))
    return rows


def results_table(rows, baseline='F16'):
    """Table of the results with recomputed Avg, reduction, AvgLoss and frontier flags."""
    points = {point.scheme_id: point for point in pareto_points(rows, baseline)}
    extra_columns = []
    for row in rows:
        for column in list(row.extra) + ['gsm8k_strict', 'gsm8k_flexible']:
            if row.get(column) is not None and column not in extra_columns:
                extra_columns.append(column)

    names = (['scheme'] + list(BENCHMARKS) + extra_columns
             + ['avg', 'ppl', 'size_mib', 'reduction', 'avg_loss', 'pp512', 'pp512_std',
                'tg128', 'tg128_std', 'on_frontier', 'dominated_by'])
    columns = collections.OrderedDict((name, []) for name in names)
    for row in rows:
        point = points[row.scheme]
        values = dict(scheme=row.scheme, avg=avg_score(row), reduction=point.reduction,
                      avg_loss=point.avg_loss, on_frontier=point.on_frontier,
                      dominated_by=point.dominated_by or '')
        for name in names:
            columns[name].append(values[name] if name in values else row.get(name))

    table = Table()
    for name, values in columns.items():
        if name in ('scheme', 'dominated_by'):
            table[name] = [str(value) for value in values]
        elif name == 'on_frontier':
            table[name] = np.array(values, dtype=bool)
        else:
            table[name] = np.array([np.nan if value is None else value for value in values],
                                   dtype=np.float64)
    table.meta['baseline'] = baseline
    return table
