# SPDX-License-Identifier: GPL-2.0-only
#
# Copyright (C) 2026 dner-aid-tool contributors
#
"""
Hard Voting over Per-Model Prediction Sets
"""
import logging
from collections import defaultdict
from dataclasses import dataclass
from enum import Enum
from typing import Iterable, Mapping, Sequence

from .common import InputError
from .entity import Entity, PredictionSet

logger = logging.getLogger(__name__)


class TieRule(str, Enum):
    EXCLUDE = 'exclude'
    INCLUDE = 'include'


@dataclass(frozen=True)
class VoteConfig:
    """
    threshold: minimum number of supporting models (None: strict majority).
    tie_rule:  whether a count of exactly half the models, one vote short
               of the threshold, is accepted when threshold is set.
    """
    threshold: int | None = None
    tie_rule:  TieRule = TieRule.EXCLUDE

    def __post_init__(self):
        object.__setattr__(self, 'tie_rule', TieRule(self.tie_rule))

    def resolve(self, model_count: int) -> int:
        """Effective threshold for model_count models."""
        if model_count < 1:
            raise InputError('voting needs at least one model.')
        thr = (model_count + 2) // 2 if self.threshold is None else self.threshold
        if not (1 <= thr <= model_count):
            raise InputError(f'threshold {thr} outside 1..{model_count}.')
        return thr

    def accepts(self, count: int, model_count: int) -> bool:
        thr = self.resolve(model_count)
        if count >= thr:
            return True
        return (self.threshold is not None and self.tie_rule == TieRule.INCLUDE
                and count == thr - 1
                and 2 * count == model_count)


@dataclass(frozen=True)
class Tally:
    entity:    Entity
    count:     int
    model_ids: tuple[str, ...]


def tally(predictions: Sequence[PredictionSet]) -> list[Tally]:
    """Count distinct supporting models per entity of one record."""
    if not predictions:
        return []
    rids = {p.record_id for p in predictions}
    if len(rids) > 1:
        raise InputError(f'tally over mixed records {sorted(rids)}.')
    mids = [p.model_id for p in predictions]
    if len(set(mids)) != len(mids):
        raise InputError(f'duplicate model ids in {mids}.')

    support = defaultdict(set)
    for pset in predictions:
        for ent in pset.entities:
            support[ent].add(pset.model_id)
    return sorted((Tally(ent, len(mods), tuple(sorted(mods)))
                   for ent, mods in support.items()),
                  key=lambda t: t.entity.key)


def vote(tallies: Iterable[Tally], config: VoteConfig, model_count: int) -> frozenset[Entity]:
    """Entities whose support reaches the threshold."""
    config.resolve(model_count)
    return frozenset(t.entity for t in tallies if config.accepts(t.count, model_count))


def vote_corpus(record_ids: Sequence[str],
                predictions: Mapping[str, Mapping[str, PredictionSet]],
                model_ids: Sequence[str],
                config: VoteConfig) -> dict[str, frozenset[Entity]]:
    """
    Vote every record across a fixed model list.

    predictions maps model_id -> record_id -> PredictionSet. A model with
    no entry for a record predicts the empty set and still counts.
    """
    fused = {}
    for rid in record_ids:
        psets = []
        for mid in model_ids:
            pset = predictions.get(mid, {}).get(rid)
            if pset is None:
                logger.debug('model %s has no record %s, empty set assumed', mid, rid)
                pset = PredictionSet(mid, rid, frozenset())
            psets.append(pset)
        fused[rid] = vote(tally(psets), config, len(model_ids))
    return fused
