# SPDX-License-Identifier: GPL-2.0-only
#
# Copyright (C) 2026 dner-aid-tool contributors
#
import io
import json

import pytest

from dner_aid_tool.utils.common import ConsistencyError, ParseError
from dner_aid_tool.utils.entity import Entity
from dner_aid_tool.utils.uniform import (dumps_record, read_uniform, record_to_dict,
                                         write_uniform)

STIFF_LEG = {
    'text': 'stiff upper leg , quad area .',
    'sentence': ['stiff', 'upper', 'leg', ',', 'quad', 'area', '.'],
    'entity_list': [{'text': 'stiff upper leg', 'index': [0, 1, 2], 'label': 'ADE'},
                    {'text': 'stiff quad area', 'index': [0, 4, 5], 'label': 'ADE'}],
    'record_id': 'post1:1',
}


def _read(*objs, **kw):
    return read_uniform([json.dumps(o) + '\n' for o in objs], **kw)


def test_read_discontinuous_record():
    rec, = _read(STIFF_LEG)
    assert rec.record_id == 'post1:1'
    assert rec.to_entities() == {Entity.from_indices('ADE', [0, 1, 2]),
                                 Entity.from_indices('ADE', [0, 4, 5])}
    assert record_to_dict(rec) == STIFF_LEG


def test_text_mismatch_is_consistency_error():
    obj = json.loads(json.dumps(STIFF_LEG))
    obj['entity_list'][1]['text'] = 'stiff quad areas'
    with pytest.raises(ConsistencyError):
        _read(obj)


def test_missing_label_takes_default():
    obj = json.loads(json.dumps(STIFF_LEG))
    del obj['entity_list'][0]['label']
    rec, = _read(obj, default_label='Disorder')
    assert rec.entity_list[0].label == 'Disorder'
    assert rec.entity_list[1].label == 'ADE'


def test_unknown_fields_kept_and_ordered():
    obj = dict(STIFF_LEG, source='forum', attempts=2)
    obj['entity_list'] = [dict(STIFF_LEG['entity_list'][0], score=0.5)]
    rec, = _read(obj)
    assert rec.extra == {'source': 'forum', 'attempts': 2}
    assert list(record_to_dict(rec)) == ['text', 'sentence', 'entity_list', 'record_id',
                                         'attempts', 'source']
    assert record_to_dict(rec)['entity_list'][0] == {
        'text': 'stiff upper leg', 'index': [0, 1, 2], 'label': 'ADE', 'score': 0.5}


def test_write_then_read_sample(gold):
    sink = io.StringIO()
    text = write_uniform(gold, sink)
    assert sink.getvalue() == text
    assert text.count('\n') == len(gold)
    assert read_uniform(io.StringIO(text)) == gold


def test_dumps_keeps_unicode():
    obj = dict(STIFF_LEG, text='stiff upper leg , quad área .',
               sentence=['stiff', 'upper', 'leg', ',', 'quad', 'área', '.'],
               entity_list=[])
    rec, = _read(obj)
    assert 'área' in dumps_record(rec)


@pytest.mark.parametrize('mutate, needle', [
    (lambda o: o.pop('sentence'), 'schema mismatch'),
    (lambda o: o['entity_list'][0].update(index=[2, 1]), 'strictly increasing'),
    (lambda o: o['entity_list'][0].update(index=[0, 9]), 'out of range'),
    (lambda o: o['entity_list'][0].update(index=['0']), '/entity_list/0/index/0'),
])
def test_malformed_records(mutate, needle):
    obj = json.loads(json.dumps(STIFF_LEG))
    mutate(obj)
    with pytest.raises(ParseError, match=needle):
        _read(obj, source='u.jsonl')


def test_duplicate_and_invalid_json():
    with pytest.raises(ParseError, match='duplicate record'):
        _read(STIFF_LEG, STIFF_LEG)
    with pytest.raises(ParseError) as ei:
        read_uniform(['\n', 'not json\n'])
    assert ei.value.line == 2
