# SPDX-License-Identifier: GPL-2.0-only
#
# Copyright (C) 2026 dner-aid-tool contributors
#
import json
from pathlib import Path

import pytest

from dner_aid_tool.utils.corpus_parser import gold_records, load_gold
from dner_aid_tool.utils.entity import Entity
from dner_aid_tool.utils.pred_parser import ModelFormatKind, load_predictions

SAMPLE_DIR = Path(__file__).resolve().parent.parent / 'py_sample' / 'sample_ade'

MODELS = (
    ('transition', 'transition.jsonl', ModelFormatKind.TRANSITION_BASED),
    ('span',       'span.jsonl',       ModelFormatKind.SPAN_RELATION),
    ('clique',     'clique.jsonl',     ModelFormatKind.CHAR_SPAN_LIST),
    ('w2ner',      'w2ner.jsonl',      ModelFormatKind.INDEX_LIST),
    ('toe',        'toe.jsonl',        ModelFormatKind.INDEX_LIST_TAGGED),
)


def ade(*indices) -> Entity:
    return Entity.from_indices('ADE', indices)


@pytest.fixture
def sample_dir() -> Path:
    return SAMPLE_DIR


@pytest.fixture
def manifest() -> dict:
    with open(SAMPLE_DIR / 'manifest.json', encoding='utf-8') as fp:
        return json.load(fp)


@pytest.fixture
def gold_docs():
    return load_gold(SAMPLE_DIR / 'gold.txt')


@pytest.fixture
def gold(gold_docs):
    return gold_records(gold_docs)


@pytest.fixture
def sentences(gold):
    return {r.record_id: r.to_sentence() for r in gold}


@pytest.fixture
def model_predictions(sentences):
    """model_id -> record_id -> PredictionSet for the five sample models."""
    out = {}
    for mid, name, kind in MODELS:
        psets = load_predictions(SAMPLE_DIR / name, kind, model_id=mid, sentences=sentences)
        out[mid] = {p.record_id: p for p in psets}
    return out


@pytest.fixture
def model_ids():
    return [m[0] for m in MODELS]


@pytest.fixture
def model_files():
    """(model_id, path, kind) for the five sample models."""
    return [(mid, SAMPLE_DIR / name, kind) for mid, name, kind in MODELS]
