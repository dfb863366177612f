# SPDX-License-Identifier: GPL-2.0-only
#
# Copyright (C) 2026 dner-aid-tool contributors
#
"""
Report Rendering (text table and CSV)
"""
import csv
import io
from dataclasses import dataclass
from decimal import Decimal
from typing import Sequence

from .metrics import F1Check, MetricsReport, RankReport

METRICS = ('precision', 'recall', 'f1')
METRIC_TITLE = {'precision': 'P', 'recall': 'R', 'f1': 'F1'}


@dataclass(frozen=True)
class ReportArtifacts:
    text:        str
    metrics_csv: str
    ranks_csv:   str


def _csv(rows: Sequence[Sequence]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator='\n')
    writer.writerows(rows)
    return buf.getvalue()


def _table(title_list: Sequence[str], rows: Sequence[Sequence[str]]) -> list[str]:
    col_len = [len(t) for t in title_list]
    for row in rows:
        for i, val in enumerate(row):
            col_len[i] = max(col_len[i], len(val))

    div = '+' + ''.join('-{}-+'.format('-' * x) for x in col_len)
    fs = '|' + ''.join(' {{:{}s}} |'.format(x) for x in col_len)
    return [div, fs.format(*title_list), div, *(fs.format(*row) for row in rows), div]


def mark_best(metrics: Sequence[MetricsReport]) -> dict[tuple[str, str, str], str]:
    """(system, dataset, metric) -> 'best' | 'second' | ''; ties share a mark."""
    marks = {}
    datasets = dict.fromkeys(m.dataset for m in metrics)
    for ds in datasets:
        rows = [m for m in metrics if m.dataset == ds]
        for name in METRICS:
            values = sorted({m.metric(name) for m in rows}, reverse=True)
            for m in rows:
                val = m.metric(name)
                mark = ''
                if val == values[0]:
                    mark = 'best'
                elif len(values) > 1 and val == values[1]:
                    mark = 'second'
                marks[(m.system, m.dataset, name)] = mark
    return marks


def _fmt(value: Decimal, mark: str) -> str:
    text = f'{value:.2f}'
    if mark == 'best':
        return f'*{text}*'
    if mark == 'second':
        return f'_{text}_'
    return text


def render_metrics_text(metrics: Sequence[MetricsReport]) -> list[str]:
    """Systems as rows, one P/R/F1 column group per dataset."""
    datasets = list(dict.fromkeys(m.dataset for m in metrics))
    systems = list(dict.fromkeys(m.system for m in metrics))
    cell = {(m.system, m.dataset): m for m in metrics}
    marks = mark_best(metrics)

    title_list = ['System'] + [f'{ds} {METRIC_TITLE[n]}' for ds in datasets for n in METRICS]
    rows = []
    for sys_ in systems:
        row = [sys_]
        for ds in datasets:
            m = cell.get((sys_, ds))
            for name in METRICS:
                row.append('-' if m is None else _fmt(m.metric(name), marks[(sys_, ds, name)]))
        rows.append(row)
    return _table(title_list, rows)


def render_rank_text(ranks: RankReport) -> list[str]:
    lines = [f'--- [Ranks] k={len(ranks.systems)} N={len(ranks.blocks)}']
    rows = [[s, f'{r:.4f}'] for s, r in sorted(zip(ranks.systems, ranks.average_ranks),
                                                key=lambda x: (x[1], x[0]))]
    lines.extend(_table(['System', 'AvgRank'], rows))
    lines.append(f'Friedman chi2   : {ranks.friedman_statistic:.4f}')
    lines.append(f'Iman-Davenport F: {ranks.iman_davenport:.4f}')
    if ranks.critical_difference is not None:
        lines.append(f'Nemenyi CD      : {ranks.critical_difference:.4f} (alpha={ranks.alpha})')
        for no, grp in enumerate(ranks.groups(), start=1):
            lines.append(f'Group {no}: {", ".join(grp)}')
    return lines


def render_f1_checks(checks: Sequence[F1Check]) -> list[str]:
    rows = [[c.system, c.dataset, f'{c.printed:.2f}', f'{c.computed:.2f}',
             'ok' if c.ok else 'INCONSISTENT'] for c in checks]
    return ['--- [F1 Consistency]'] + _table(['System', 'Dataset', 'Printed', 'Computed', 'Check'],
                                             rows)


def render_report(metrics: Sequence[MetricsReport], ranks: RankReport=None) -> ReportArtifacts:
    """
    Build the text table and both CSV files.

    Best value per (dataset, metric) column is written as *x*, the second
    best as _x_; the CSV carries the same marks in flag columns.
    """
    marks = mark_best(metrics)
    rows = [['system', 'dataset', *METRICS, *(f'{n}_mark' for n in METRICS)]]
    for m in metrics:
        rows.append([m.system, m.dataset, *(f'{m.metric(n):.2f}' for n in METRICS),
                     *(marks[(m.system, m.dataset, n)] for n in METRICS)])
    metrics_csv = _csv(rows)

    text = ['--- [Metrics]'] + render_metrics_text(metrics)

    ranks_csv = ''
    if ranks is not None:
        groups = ranks.groups()
        rrows = [['system', 'average_rank', 'cd_groups', *ranks.blocks,
                  'critical_difference', 'alpha', 'friedman_chi2', 'iman_davenport_f']]
        for no, sys_ in enumerate(ranks.systems):
            member = ';'.join(str(g) for g, grp in enumerate(groups, start=1) if sys_ in grp)
            cd = '' if ranks.critical_difference is None else f'{ranks.critical_difference:.4f}'
            rrows.append([sys_, f'{ranks.average_ranks[no]:.4f}', member,
                          *(f'{row[no]:g}' for row in ranks.ranks),
                          cd, '' if ranks.alpha is None else ranks.alpha,
                          f'{ranks.friedman_statistic:.4f}', f'{ranks.iman_davenport:.4f}'])
        ranks_csv = _csv(rrows)
        text += [''] + render_rank_text(ranks)

    return ReportArtifacts('\n'.join(text) + '\n', metrics_csv, ranks_csv)
