# SPDX-License-Identifier: GPL-2.0-only
#
# Copyright (C) 2026 dner-aid-tool contributors
#
"""
Published Benchmark Numbers

Dataset statistics and P/R/F1 of nine systems on CADEC, ShARe13 and
ShARe14, kept as printed so that their internal arithmetic can be checked.
"""
from dataclasses import dataclass
from decimal import Decimal

from .metrics import (CorpusStats, F1Check, MetricsReport, average_relative_improvement,
                      check_f1_consistency, relative_improvement)

DATASETS = ('CADEC', 'ShARe13', 'ShARe14')

DATASET_STATS = {
    'CADEC':   CorpusStats(1250, 7597, 122938, 6318, 679, {'ADE': 6318}),
    'ShARe13': CorpusStats(299, 18767, 278942, 11148, 1088, {'Disorder': 11148}),
    'ShARe14': CorpusStats(431, 34618, 522355, 19073, 1656, {'Disorder': 19073}),
}

# system: (P, R, F1) per dataset in DATASETS order
_BENCHMARK = {
    'transition': (('67.30', '67.50', '67.40'), ('80.44', '74.81', '77.52'), ('76.18', '81.20', '78.60')),
    'span':       (('68.50', '69.90', '69.19'), ('83.44', '79.81', '81.62'), ('81.75', '81.57', '81.17')),
    'grid':       (('69.60', '70.85', '70.22'), ('83.20', '78.60', '80.83'), ('78.69', '82.15', '80.39')),
    'w2ner':      (('72.59', '70.15', '71.35'), ('83.97', '79.08', '81.45'), ('79.82', '82.11', '80.95')),
    'toe':        (('75.36', '69.16', '72.13'), ('83.78', '79.52', '81.59'), ('80.78', '81.57', '81.21')),
    'gpt-3.5':    (('60.55', '71.85', '65.72'), ('79.80', '82.17', '80.97'), ('79.82', '82.41', '81.09')),
    'gpt-4':      (('62.43', '79.90', '70.09'), ('80.14', '83.22', '81.64'), ('80.80', '82.35', '81.55')),
    'voting':     (('76.55', '68.83', '72.49'), ('84.62', '79.11', '81.77'), ('81.46', '81.99', '81.69')),
    'arbiter':    (('76.03', '70.11', '72.95'), ('82.52', '81.55', '82.03'), ('81.51', '82.12', '81.76')),
}

ENSEMBLE = 'arbiter'

# published relative F1 improvements of the arbiter ensemble, per dataset
PUBLISHED_IMPROVEMENTS = {
    'toe':    ('1.13', '0.54', '0.67'),
    'voting': ('0.63', '0.32', '0.09'),
    'gpt':    ('7.42', '0.89', '0.54'),     # average over gpt-3.5 and gpt-4
}

_VERSUS = {'toe': ('toe',), 'voting': ('voting',), 'gpt': ('gpt-3.5', 'gpt-4')}


def reference_metrics() -> list[MetricsReport]:
    rows = []
    for system, per_ds in _BENCHMARK.items():
        for ds, (p, r, f1) in zip(DATASETS, per_ds):
            rows.append(MetricsReport(system, ds, Decimal(p), Decimal(r), Decimal(f1)))
    return rows


def reference_f1(system: str, dataset: str) -> Decimal:
    return Decimal(_BENCHMARK[system][DATASETS.index(dataset)][2])


def check_reference_f1(tolerance=Decimal('0.10')) -> list[F1Check]:
    return check_f1_consistency(reference_metrics(), tolerance)


@dataclass(frozen=True)
class ImprovementCheck:
    versus:    str
    dataset:   str
    published: Decimal
    computed:  Decimal
    ok:        bool


def reproduce_improvements(tolerance=Decimal('0.02')) -> list[ImprovementCheck]:
    """Recompute the published relative improvements from the F1 column."""
    tol = Decimal(tolerance)
    checks = []
    for versus, published in PUBLISHED_IMPROVEMENTS.items():
        for ds, pub in zip(DATASETS, published):
            ours = reference_f1(ENSEMBLE, ds)
            bases = [reference_f1(s, ds) for s in _VERSUS[versus]]
            if len(bases) == 1:
                val = relative_improvement(ours, bases[0])
            else:
                val = average_relative_improvement(ours, bases)
            checks.append(ImprovementCheck(versus, ds, Decimal(pub), val,
                                           abs(val - Decimal(pub)) <= tol))
    return checks
