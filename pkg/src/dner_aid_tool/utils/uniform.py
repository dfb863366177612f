# SPDX-License-Identifier: GPL-2.0-only
#
# Copyright (C) 2026 dner-aid-tool contributors
#
"""
Uniform Record Reader/Writer

One JSON object per line:

    {"text": ..., "sentence": [...], "entity_list": [{"text", "index", "label"}],
     "record_id": ...}

Unknown fields are kept in ``extra`` and written back after the known ones.
"""
import json
from typing import Iterable, TextIO

from jsonschema import Draft202012Validator
from jsonschema.exceptions import best_match

from .common import ParseError
from .entity import SpanError, UniformEntity, UniformRecord

UNIFORM_SCHEMA = {
    '$schema': 'https://json-schema.org/draft/2020-12/schema',
    'type': 'object',
    'required': ['text', 'sentence', 'entity_list', 'record_id'],
    'properties': {
        'text': {'type': 'string'},
        'sentence': {'type': 'array', 'items': {'type': 'string'}},
        'record_id': {'type': 'string'},
        'entity_list': {
            'type': 'array',
            'items': {
                'type': 'object',
                'required': ['text', 'index'],
                'properties': {
                    'text': {'type': 'string'},
                    'index': {'type': 'array', 'items': {'type': 'integer'}},
                    'label': {'type': 'string', 'minLength': 1},
                },
            },
        },
    },
}

_RECORD_KEYS = ('text', 'sentence', 'entity_list', 'record_id')
_ENTITY_KEYS = ('text', 'index', 'label')
_VALIDATOR = Draft202012Validator(UNIFORM_SCHEMA)


def record_to_dict(record: UniformRecord) -> dict:
    """Canonical key order: known fields first, unknown ones sorted."""
    ents = []
    for ent in record.entity_list:
        obj = {'text': ent.text, 'index': list(ent.index), 'label': ent.label}
        obj.update({k: ent.extra[k] for k in sorted(ent.extra) if k not in _ENTITY_KEYS})
        ents.append(obj)
    obj = {'text': record.text, 'sentence': list(record.sentence),
           'entity_list': ents, 'record_id': record.record_id}
    obj.update({k: record.extra[k] for k in sorted(record.extra) if k not in _RECORD_KEYS})
    return obj


def record_from_dict(obj: dict, default_label: str='ADE') -> UniformRecord:
    ents = tuple(UniformEntity(e['text'], tuple(e['index']), e.get('label', default_label),
                               {k: v for k, v in e.items() if k not in _ENTITY_KEYS})
                 for e in obj['entity_list'])
    return UniformRecord(obj['record_id'], obj['text'], tuple(obj['sentence']), ents,
                         {k: v for k, v in obj.items() if k not in _RECORD_KEYS})


def dumps_record(record: UniformRecord) -> str:
    return json.dumps(record_to_dict(record), ensure_ascii=False)


def write_uniform(records: Iterable[UniformRecord], sink: TextIO=None) -> str:
    """Serialize records; also write them to sink when given."""
    text = ''.join(dumps_record(rec) + '\n' for rec in records)
    if sink is not None:
        sink.write(text)
    return text


def read_uniform(stream: Iterable[str], default_label: str='ADE',
                 source=None) -> list[UniformRecord]:
    """
    Read uniform records.

    Schema and index problems raise ParseError; an entity text that does
    not match its indexed tokens raises ConsistencyError.
    """
    records, seen = [], set()
    for no, line in enumerate(stream, start=1):
        if line.strip() == '':
            continue
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as e:
            raise ParseError(f'invalid JSON: {e.msg}', source=source, line=no) from None
        rid = obj.get('record_id') if isinstance(obj, dict) else None
        err = best_match(_VALIDATOR.iter_errors(obj))
        if err is not None:
            path = '/'.join(str(p) for p in err.absolute_path)
            raise ParseError(f'schema mismatch at /{path}: {err.message}',
                             source=source, line=no, record_id=rid)
        if rid in seen:
            raise ParseError('duplicate record.', source=source, line=no, record_id=rid)
        seen.add(rid)
        try:
            records.append(record_from_dict(obj, default_label))
        except SpanError as e:
            raise ParseError(str(e), source=source, line=no, record_id=rid) from None
    return records
