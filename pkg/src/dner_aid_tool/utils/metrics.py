# SPDX-License-Identifier: GPL-2.0-only
#
# Copyright (C) 2026 dner-aid-tool contributors
#
"""
Exact-Match Scoring, Corpus Statistics and Rank Analysis

Percentages are Decimal values rounded half-up to 2 places at the end;
intermediate arithmetic keeps full precision.
"""
import math
from collections import Counter
from dataclasses import dataclass, field
from decimal import Decimal
from typing import Iterable, Mapping, Sequence

import numpy as np
from scipy.stats import rankdata

from .common import (AlignmentError, DomainError, InputError, UnsupportedError,
                     round_half_up)
from .corpus_parser import GoldDocument
from .entity import Entity

HUNDRED = Decimal(100)

# Studentized range statistic divided by sqrt(2), k = 2..10
NEMENYI_Q = {
    0.05: (1.960, 2.343, 2.569, 2.728, 2.850, 2.949, 3.031, 3.102, 3.164),
    0.10: (1.645, 2.052, 2.291, 2.459, 2.589, 2.693, 2.780, 2.855, 2.920),
}


def _dec(value) -> Decimal:
    if isinstance(value, Decimal):
        return value
    if isinstance(value, float):
        return Decimal(repr(value))
    return Decimal(value)


##############################################################################
### Matching


@dataclass(frozen=True)
class MatchCounts:
    tp: int = 0
    fp: int = 0
    fn: int = 0
    disc_tp: int = 0
    disc_fp: int = 0
    disc_fn: int = 0

    def __add__(self, other: 'MatchCounts') -> 'MatchCounts':
        return MatchCounts(self.tp + other.tp, self.fp + other.fp, self.fn + other.fn,
                           self.disc_tp + other.disc_tp, self.disc_fp + other.disc_fp,
                           self.disc_fn + other.disc_fn)

    def discontinuous(self) -> 'MatchCounts':
        return MatchCounts(self.disc_tp, self.disc_fp, self.disc_fn,
                           self.disc_tp, self.disc_fp, self.disc_fn)


def match_entities(gold: Iterable[Entity], pred: Iterable[Entity]) -> MatchCounts:
    """Exact match on (label, token index set)."""
    gold, pred = frozenset(gold), frozenset(pred)
    dgold = {e for e in gold if e.is_discontinuous}
    dpred = {e for e in pred if e.is_discontinuous}
    return MatchCounts(len(gold & pred), len(pred - gold), len(gold - pred),
                       len(dgold & dpred), len(dpred - dgold), len(dgold - dpred))


def evaluate_corpus(gold: Mapping[str, Iterable[Entity]],
                    pred: Mapping[str, Iterable[Entity]]) -> MatchCounts:
    """Micro-aggregated counts over records aligned by record_id."""
    missing = [rid for rid in gold if rid not in pred]
    extra = [rid for rid in pred if rid not in gold]
    if missing or extra:
        msg = []
        if missing:
            msg.append(f'missing in predictions: {", ".join(missing)}')
        if extra:
            msg.append(f'not in gold: {", ".join(extra)}')
        raise AlignmentError('record ids differ; ' + '; '.join(msg))
    total = MatchCounts()
    for rid, ents in gold.items():
        total += match_entities(ents, pred[rid])
    return total


##############################################################################
### Metrics


@dataclass(frozen=True)
class MetricsReport:
    system:    str
    dataset:   str
    precision: Decimal
    recall:    Decimal
    f1:        Decimal
    counts:    MatchCounts | None = None

    def metric(self, name: str) -> Decimal:
        return getattr(self, name)


def _ratio(num, den) -> Decimal:
    return Decimal(0) if den == 0 else HUNDRED * Decimal(num) / Decimal(den)


def _harmonic(p: Decimal, r: Decimal) -> Decimal:
    return Decimal(0) if p + r == 0 else 2 * p * r / (p + r)


def compute_prf(counts: MatchCounts) -> tuple[Decimal, Decimal, Decimal]:
    """Precision, recall and F1 in percent (0/0 gives 0)."""
    p = _ratio(counts.tp, counts.tp + counts.fp)
    r = _ratio(counts.tp, counts.tp + counts.fn)
    return round_half_up(p), round_half_up(r), round_half_up(_harmonic(p, r))


def metrics_report(system: str, dataset: str, counts: MatchCounts) -> MetricsReport:
    return MetricsReport(system, dataset, *compute_prf(counts), counts)


def f1_from_pr(precision, recall) -> Decimal:
    """F1 from already printed precision and recall."""
    return round_half_up(_harmonic(_dec(precision), _dec(recall)))


@dataclass(frozen=True)
class F1Check:
    system:   str
    dataset:  str
    printed:  Decimal
    computed: Decimal
    ok:       bool

    @property
    def delta(self) -> Decimal:
        return self.computed - self.printed


def check_f1_consistency(rows: Iterable[MetricsReport],
                         tolerance=Decimal('0.10')) -> list[F1Check]:
    """Compare each printed F1 with the one implied by its P and R."""
    tol = _dec(tolerance)
    checks = []
    for row in rows:
        computed = f1_from_pr(row.precision, row.recall)
        printed = _dec(row.f1)
        checks.append(F1Check(row.system, row.dataset, printed, computed,
                              abs(computed - printed) <= tol))
    return checks


def relative_improvement(ours, baseline) -> Decimal:
    """100 * (ours - baseline) / baseline, rounded to 2 places."""
    return round_half_up(_relative(ours, baseline))


def _relative(ours, baseline) -> Decimal:
    ours, baseline = _dec(ours), _dec(baseline)
    if baseline <= 0:
        raise DomainError(f'baseline must be positive, got {baseline}.')
    return HUNDRED * (ours - baseline) / baseline


def average_relative_improvement(ours, baselines: Sequence) -> Decimal:
    """Mean of full-precision relative improvements, rounded once."""
    if not baselines:
        raise InputError('no baseline given.')
    vals = [_relative(ours, b) for b in baselines]
    return round_half_up(sum(vals) / len(vals))


##############################################################################
### Corpus Statistics


@dataclass(frozen=True)
class CorpusStats:
    documents:     int = 0
    sentences:     int = 0
    tokens:        int = 0
    entities:      int = 0
    discontinuous: int = 0
    labels:        dict = field(default_factory=dict, compare=False)

    @property
    def disc_fraction(self) -> Decimal:
        return round_half_up(_ratio(self.discontinuous, self.entities))


def corpus_stats(documents: Sequence[GoldDocument]) -> CorpusStats:
    labels = Counter()
    n_sent = n_tok = n_ent = n_disc = 0
    for doc in documents:
        for sent, ents in doc.sentences:
            n_sent += 1
            n_tok += len(sent)
            n_ent += len(ents)
            n_disc += sum(e.is_discontinuous for e in ents)
            labels.update(e.label for e in ents)
    return CorpusStats(len(documents), n_sent, n_tok, n_ent, n_disc,
                       dict(sorted(labels.items())))


##############################################################################
### Ranks


@dataclass(frozen=True)
class RankReport:
    systems:            tuple[str, ...]
    blocks:             tuple[str, ...]
    ranks:              tuple[tuple[float, ...], ...]
    average_ranks:      tuple[float, ...]
    friedman_statistic: float
    iman_davenport:     float
    critical_difference: float | None = None
    alpha:              float | None = None

    def groups(self) -> list[tuple[str, ...]]:
        if self.critical_difference is None:
            return []
        return cd_groups(dict(zip(self.systems, self.average_ranks)),
                         self.critical_difference)


def friedman_ranks(systems: Sequence[str], table: Sequence[Sequence],
                   blocks: Sequence[str]=None) -> RankReport:
    """
    Rank k systems within each of N blocks.

    table has one row per block and one column per system; higher scores
    rank better.
    """
    systems = tuple(systems)
    k, n = len(systems), len(table)
    if len(set(systems)) != k:
        raise InputError(f'system labels are not distinct: {list(systems)}.')
    if k < 2 or n < 2:
        raise InputError(f'rank analysis needs k >= 2 and N >= 2 (k={k}, N={n}).')
    if blocks is None:
        blocks = tuple(f'block{i}' for i in range(n))
    elif len(blocks) != n:
        raise InputError(f'{len(blocks)} block labels for {n} rows.')
    for no, row in enumerate(table):
        if len(row) != k:
            raise InputError(f'block {blocks[no]} has {len(row)} cells, expected {k}.')
        for val in row:
            if val is None or (isinstance(val, float) and math.isnan(val)):
                raise InputError(f'block {blocks[no]} has a missing cell.')

    mat = np.array([[float(v) for v in row] for row in table], dtype=float)
    ranks = np.vstack([rankdata(-row, method='average') for row in mat])
    avg = ranks.mean(axis=0)
    chi2 = 12 * n / (k * (k + 1)) * (np.sum(avg ** 2) - k * (k + 1) ** 2 / 4)
    chi2 = max(0.0, float(chi2))
    denom = n * (k - 1) - chi2
    f_id = math.inf if denom <= 0 else (n - 1) * chi2 / denom
    return RankReport(systems, tuple(blocks), tuple(tuple(r) for r in ranks.tolist()),
                      tuple(avg.tolist()), chi2, f_id)


def nemenyi_cd(k: int, n: int, alpha: float=0.05) -> float:
    """Critical difference q_alpha(k) * sqrt(k(k+1) / 6N)."""
    if alpha not in NEMENYI_Q:
        raise UnsupportedError(f'alpha {alpha} not in {sorted(NEMENYI_Q)}.')
    table = NEMENYI_Q[alpha]
    if not (2 <= k <= len(table) + 1):
        raise UnsupportedError(f'k={k} outside the constant table (2..{len(table) + 1}).')
    if n < 1:
        raise InputError(f'N must be >= 1, got {n}.')
    return table[k-2] * math.sqrt(k * (k + 1) / (6 * n))


def rank_report(systems: Sequence[str], table: Sequence[Sequence],
                blocks: Sequence[str]=None, alpha: float=0.05) -> RankReport:
    rep = friedman_ranks(systems, table, blocks)
    cd = nemenyi_cd(len(rep.systems), len(rep.blocks), alpha)
    return RankReport(rep.systems, rep.blocks, rep.ranks, rep.average_ranks,
                      rep.friedman_statistic, rep.iman_davenport, cd, alpha)


def cd_groups(average_ranks: Mapping[str, float], cd: float) -> list[tuple[str, ...]]:
    """Maximal runs of systems whose average ranks lie within one CD."""
    items = sorted(average_ranks.items(), key=lambda x: (x[1], x[0]))
    groups, last_end = [], -1
    for i in range(len(items)):
        j = i
        while j + 1 < len(items) and items[j+1][1] - items[i][1] <= cd:
            j += 1
        if j > i and j > last_end:
            groups.append(tuple(name for name, _ in items[i:j+1]))
            last_end = j
    return groups


def score_table(reports: Sequence[MetricsReport], systems: Sequence[str],
                metrics: Sequence[str]=('f1',)) -> tuple[list[str], list[list[Decimal]]]:
    """
    Arrange reports into (dataset, metric) blocks by system columns.

    Blocks missing any system are reported as missing cells.
    """
    cell = {(r.system, r.dataset): r for r in reports}
    datasets = list(dict.fromkeys(r.dataset for r in reports))
    labels, table = [], []
    for ds in datasets:
        for name in metrics:
            labels.append(f'{ds}/{name}')
            table.append([cell[(s, ds)].metric(name) if (s, ds) in cell else None
                          for s in systems])
    return labels, table
