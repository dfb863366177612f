# SPDX-License-Identifier: GPL-2.0-only
#
# Copyright (C) 2026 dner-aid-tool contributors
#
import random

import pytest

from dner_aid_tool.utils.common import InputError
from dner_aid_tool.utils.entity import Entity, PredictionSet
from dner_aid_tool.utils.voting import TieRule, VoteConfig, tally, vote, vote_corpus


def ade(*indices):
    return Entity.from_indices('ADE', indices)


UNIVERSE = [ade(0), ade(0, 1), ade(0, 2), ade(1, 3), ade(2), ade(3, 4),
            Entity.from_indices('Drug', [0])]


@pytest.mark.parametrize('m, thr', [(1, 1), (2, 2), (3, 2), (4, 3), (5, 3), (6, 4)])
def test_default_threshold_is_strict_majority(m, thr):
    assert VoteConfig().resolve(m) == thr


def test_threshold_bounds():
    with pytest.raises(InputError):
        VoteConfig().resolve(0)
    with pytest.raises(InputError):
        VoteConfig(threshold=6).resolve(5)
    with pytest.raises(InputError):
        VoteConfig(threshold=0).resolve(5)


def test_tie_rule_only_at_exact_half():
    inc = VoteConfig(threshold=3, tie_rule='include')
    assert inc.tie_rule is TieRule.INCLUDE
    assert inc.accepts(2, 4) and not VoteConfig(threshold=3).accepts(2, 4)
    assert not VoteConfig(threshold=2, tie_rule='include').accepts(1, 3)
    assert not VoteConfig(threshold=4, tie_rule='include').accepts(2, 4)


def test_tally_counts_models_not_occurrences():
    psets = [PredictionSet('a', 'r', {ade(0), ade(1, 3)}),
             PredictionSet('b', 'r', {ade(0)}),
             PredictionSet('c', 'r', set())]
    got = {t.entity: (t.count, t.model_ids) for t in tally(psets)}
    assert got == {ade(0): (2, ('a', 'b')), ade(1, 3): (1, ('a',))}
    assert [t.entity.key for t in tally(psets)] == sorted(e.key for e in got)


def test_tally_input_checks():
    assert tally([]) == []
    with pytest.raises(InputError):
        tally([PredictionSet('a', 'r1'), PredictionSet('b', 'r2')])
    with pytest.raises(InputError):
        tally([PredictionSet('a', 'r'), PredictionSet('a', 'r')])


def test_label_is_part_of_the_vote():
    psets = [PredictionSet('a', 'r', {ade(0)}),
             PredictionSet('b', 'r', {Entity.from_indices('Drug', [0])}),
             PredictionSet('c', 'r', {ade(0)})]
    assert vote(tally(psets), VoteConfig(), 3) == {ade(0)}


def _random_psets(rng, m):
    return [PredictionSet(f'm{i}', 'r', set(rng.sample(UNIVERSE, rng.randint(0, 4))))
            for i in range(m)]


def test_vote_matches_oracle():
    rng = random.Random(2024)
    for _ in range(1000):
        m = rng.randint(1, 7)
        psets = _random_psets(rng, m)
        thr = rng.randint(1, m)
        rule = rng.choice(list(TieRule))
        expect = set()
        for ent in UNIVERSE:
            count = sum(ent in p.entities for p in psets)
            if count >= thr or (rule == TieRule.INCLUDE and count == thr - 1
                                and 2 * count == m):
                expect.add(ent)
        got = vote(tally(psets), VoteConfig(thr, rule), m)
        assert got == expect
        assert got <= set().union(*(p.entities for p in psets))


def test_vote_is_permutation_invariant():
    rng = random.Random(5)
    for _ in range(200):
        psets = _random_psets(rng, rng.randint(1, 6))
        shuffled = psets[:]
        rng.shuffle(shuffled)
        assert vote(tally(psets), VoteConfig(), len(psets)) == \
            vote(tally(shuffled), VoteConfig(), len(psets))


def test_vote_is_monotone():
    rng = random.Random(9)
    for _ in range(200):
        m = rng.randint(2, 6)
        psets = _random_psets(rng, m)
        prev = None
        for thr in range(1, m + 1):
            cur = vote(tally(psets), VoteConfig(thr), m)
            assert prev is None or cur <= prev
            prev = cur
        # one more supporting model never removes an accepted entity
        base = vote(tally(psets), VoteConfig(), m)
        extra = rng.choice(UNIVERSE)
        grown = psets[:-1] + [PredictionSet(psets[-1].model_id, 'r',
                                            psets[-1].entities | {extra})]
        assert base <= vote(tally(grown), VoteConfig(), m)


def test_sample_corpus_vote(gold, model_predictions, model_ids, manifest):
    rids = [r.record_id for r in gold]
    fused = vote_corpus(rids, model_predictions, model_ids, VoteConfig())
    assert list(fused) == rids
    ents = [e for s in fused.values() for e in s]
    assert len(ents) == manifest['voting']['entities']
    assert sum(e.is_discontinuous for e in ents) == manifest['voting']['discontinuous']
    assert fused['post2:3'] == {ade(0, 1, 2, 3), ade(1, 2, 3)}
    assert fused['post2:1'] == frozenset()

    loose = vote_corpus(rids, model_predictions, model_ids, VoteConfig(threshold=2))
    assert ade(0, 1, 2, 5) in loose['post2:3']
    strict = vote_corpus(rids, model_predictions, model_ids, VoteConfig(threshold=5))
    assert strict['post1:1'] == {ade(0, 1, 2)}
    assert strict['post1:0'] == frozenset()


def test_missing_model_record_counts_as_empty():
    preds = {'a': {'r': PredictionSet('a', 'r', {ade(0)})},
             'b': {'r': PredictionSet('b', 'r', {ade(0)})},
             'c': {}}
    assert vote_corpus(['r'], preds, ['a', 'b', 'c'], VoteConfig())['r'] == {ade(0)}
    assert vote_corpus(['r'], preds, ['a', 'b', 'c'], VoteConfig(threshold=3))['r'] == set()


def test_tie_rule_needs_explicit_threshold():
    inc = VoteConfig(tie_rule='include')
    assert inc.resolve(4) == 3
    assert not inc.accepts(2, 4)
    assert VoteConfig(threshold=3, tie_rule='include').accepts(2, 4)
    psets = [PredictionSet('a', 'r', {ade(0)}), PredictionSet('b', 'r', {ade(0)}),
             PredictionSet('c', 'r', set()), PredictionSet('d', 'r', set())]
    assert vote(tally(psets), inc, 4) == frozenset()
