# @Author: ggufquant
# @Date:   2026-10-19
# @Filename: plotting.py

import io
import os

import numpy as np

import matplotlib
from matplotlib.figure import Figure

from astropy.io import ascii
from astropy.table import Table

from .analysis import avg_score, pareto_points
from .utils.output import format_value, save_file

QUALITY_COLUMNS = [
    ('scheme', 'Scheme'),
    ('gsm8k', 'GSM8K'),
    ('hellaswag', 'HSwag'),
    ('ifeval', 'IFEval'),
    ('mmlu', 'MMLU'),
    ('truthfulqa_mc2', 'TQA_mc2'),
    ('avg', 'Avg'),
    ('ppl', 'PPL'),
]

# fixed salt and no date, so identical input gives identical SVG bytes
SVG_RC = {'svg.hashsalt': 'ggufquant', 'svg.fonttype': 'none'}


def table_to_text(table):
    buffer = io.StringIO()
    ascii.write(table, buffer, format='fixed_width_two_line')
    return buffer.getvalue()


def quality_table(rows, baseline='F16'):
    """Scores, Avg and PPL as in the evaluation table plus size, reduction and AvgLoss.

    All cells are preformatted strings (two decimals, halves rounded away
    from zero); missing values show as '--'.
    """
    points = {point.scheme_id: point for point in pareto_points(rows, baseline)}
    breakdown = []
    for row in rows:
        for column in ['gsm8k_strict', 'gsm8k_flexible'] + list(row.extra):
            if row.get(column) is not None and column not in breakdown:
                breakdown.append(column)

    columns = QUALITY_COLUMNS[:2] + [(name, name) for name in breakdown] + QUALITY_COLUMNS[2:]
    columns += [('size_mib', 'Size (MiB)'), ('reduction', 'Red. (%)'),
                ('avg_loss', 'AvgLoss (%)'), ('frontier', 'Frontier')]
    cells = {label: [] for _, label in columns}
    for row in rows:
        point = points[row.scheme]
        if point.on_frontier:
            status = 'yes'
        elif point.dominated_by is not None:
            status = 'by {}'.format(point.dominated_by)
        else:
            status = 'no'
        computed = {'avg': avg_score(row), 'reduction': point.reduction,
                    'avg_loss': point.avg_loss, 'frontier': status}
        for name, label in columns:
            if name == 'scheme':
                cells[label].append(row.scheme)
            elif name == 'frontier':
                cells[label].append(computed[name])
            else:
                cells[label].append(format_value(computed.get(name, row.get(name))))
    return Table([cells[label] for _, label in columns],
                 names=[label for _, label in columns])


def throughput_table(rows):
    """pp512 and tg128 tokens/s as 'mean ± std' for the rows that carry them."""
    names, pp, tg = [], [], []
    for row in rows:
        if row.pp512 is None and row.tg128 is None:
            continue
        names.append(row.scheme)
        pp.append(_mean_std(row.pp512, row.pp512_std))
        tg.append(_mean_std(row.tg128, row.tg128_std))
    if not names:
        return None
    return Table([names, pp, tg], names=['Scheme', 'pp512 (t/s)', 'tg128 (t/s)'])


def _mean_std(mean, std):
    if mean is None:
        return '--'
    if std is None:
        return format_value(mean)
    return '{} ± {}'.format(format_value(mean), format_value(std))


def report_text(rows, baseline='F16'):
    """Full text report: quality table, throughput table and the Pareto summary."""
    points = pareto_points(rows, baseline)
    frontier = sorted((point for point in points if point.on_frontier),
                      key=lambda point: (point.reduction, point.scheme_id))
    dominated = [point for point in points if point.dominated_by is not None]

    sections = ['Quality and size (baseline {})'.format(baseline), '',
                table_to_text(quality_table(rows, baseline))]
    throughput = throughput_table(rows)
    if throughput is not None:
        sections += ['CPU throughput', '', table_to_text(throughput)]
    sections.append('Pareto frontier (size reduction up, AvgLoss down): {}'.format(
        ', '.join(point.scheme_id for point in frontier)))
    for point in dominated:
        sections.append('  {} dominated by {}'.format(point.scheme_id, point.dominated_by))
    return '\n'.join(sections) + '\n'


def plot_pareto(points, path, title='Compression vs benchmark quality loss'):
    """Scatter of (reduction, AvgLoss) with the frontier polyline, saved as SVG."""
    frontier = sorted((point for point in points if point.on_frontier),
                      key=lambda point: (point.reduction, point.avg_loss))
    with matplotlib.rc_context(SVG_RC):
        fig = Figure(figsize=(6.4, 4.8))
        ax = fig.subplots()
        on = [point for point in points if point.on_frontier]
        off = [point for point in points if not point.on_frontier]
        if off:
            ax.scatter([p.reduction for p in off], [p.avg_loss for p in off],
                       color='0.6', marker='o', label='dominated', zorder=2)
        ax.scatter([p.reduction for p in on], [p.avg_loss for p in on],
                   color='C3', marker='D', label='frontier', zorder=3)
        ax.plot([p.reduction for p in frontier], [p.avg_loss for p in frontier],
                color='C3', lw=1, zorder=1)
        for point in points:
            ax.annotate(point.scheme_id, (point.reduction, point.avg_loss),
                        textcoords='offset points', xytext=(4, 4), fontsize=7)
        ax.axhline(0., color='0.8', lw=0.8, ls='--', zorder=0)
        ax.set_xlabel('Size reduction vs F16 (%)')
        ax.set_ylabel('AvgLoss (%)')
        ax.set_title(title)
        ax.legend(loc='upper left', fontsize=8)
        values = np.array([[p.reduction, p.avg_loss] for p in points])
        if values.shape[0] == 1:
            ax.set_xlim(values[0, 0] - 1., values[0, 0] + 1.)
            ax.set_ylim(values[0, 1] - 1., values[0, 1] + 1.)
        fig.savefig(path, format='svg', metadata={'Date': None})
    return path


def emit_report(rows, baseline='F16', output_directory='', basename='report',
                verbose=True):
    """Write `<basename>.txt` and `<basename>.svg`; return both paths."""
    if not output_directory:
        output_directory = os.getcwd()
    if not os.path.exists(output_directory):
        os.makedirs(output_directory)

    path_text = os.path.join(output_directory, basename + '.txt')
    with open(path_text, 'w', encoding='utf-8', newline='\n') as file:
        file.write(report_text(rows, baseline))
    save_file(basename + '.txt', output_directory, verbose=verbose)

    path_svg = os.path.join(output_directory, basename + '.svg')
    plot_pareto(pareto_points(rows, baseline), path_svg)
    save_file(basename + '.svg', output_directory, verbose=verbose)
    return path_text, path_svg
