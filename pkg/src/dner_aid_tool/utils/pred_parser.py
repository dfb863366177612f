# SPDX-License-Identifier: GPL-2.0-only
#
# Copyright (C) 2026 dner-aid-tool contributors
#
"""
Prediction Parser for the Five Baseline Output Formats

Every prediction file is JSON lines, one record per sentence, keyed by
record_id. Parsers are strict on structure and lenient on extra fields.
"""
import json
import logging
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import networkx as nx
from jsonschema import Draft202012Validator
from jsonschema.exceptions import best_match

from .common import AlignmentError, DnerError, ParseError, open_text
from .entity import (Entity, Fragment, PredictionSet, Sentence, SpanError,
                     UniformRecord, check_index_list)

logger = logging.getLogger(__name__)


##############################################################################
### Global Variable


class ModelFormatKind(str, Enum):
    TRANSITION_BASED  = 'transition'         # transition-based parser
    SPAN_RELATION     = 'span_relation'      # spans plus same-entity relations
    CHAR_SPAN_LIST    = 'char_span_list'     # character spans over word2char_span
    INDEX_LIST        = 'index_list'         # sorted token index lists
    INDEX_LIST_TAGGED = 'index_list_tagged'  # index lists with a tag scheme


class GraphMode(str, Enum):
    COMPONENTS = 'components'
    CLIQUES    = 'cliques'


_SPAN = {
    'type': 'array',
    'prefixItems': [{'type': 'integer', 'minimum': 0},
                    {'type': 'integer', 'minimum': 0}],
    'minItems': 2,
    'maxItems': 2,
}

_TYPE = {'type': 'string', 'minLength': 1}

_INDEX_ENTITIES = {
    'type': 'array',
    'items': {
        'type': 'object',
        'required': ['index'],
        'properties': {
            'type': _TYPE,
            'index': {'type': 'array', 'items': {'type': 'integer', 'minimum': 0}},
        },
    },
}

RECORD_SCHEMA = {
    ModelFormatKind.TRANSITION_BASED: {
        '$schema': 'https://json-schema.org/draft/2020-12/schema',
        'type': 'object',
        'required': ['record_id', 'entities'],
        'properties': {
            'record_id': {'type': 'string'},
            'entities': {
                'type': 'array',
                'items': {
                    'type': 'object',
                    'required': ['spans'],
                    'properties': {
                        'type': _TYPE,
                        'spans': {'type': 'array', 'minItems': 1, 'items': _SPAN},
                    },
                },
            },
        },
    },
    ModelFormatKind.SPAN_RELATION: {
        '$schema': 'https://json-schema.org/draft/2020-12/schema',
        'type': 'object',
        'required': ['record_id', 'ner'],
        'properties': {
            'record_id': {'type': 'string'},
            'ner': {
                'type': 'array',
                'items': {
                    'type': 'array',
                    'prefixItems': [{'type': 'integer', 'minimum': 0},
                                    {'type': 'integer', 'minimum': 0},
                                    _TYPE],
                    'minItems': 2,
                    'maxItems': 3,
                },
            },
            'relations': {
                'type': 'array',
                'items': {
                    'type': 'array',
                    'prefixItems': [{'type': 'integer', 'minimum': 0},
                                    {'type': 'integer', 'minimum': 0},
                                    {'type': 'string'}],
                    'minItems': 2,
                    'maxItems': 3,
                },
            },
        },
    },
    ModelFormatKind.CHAR_SPAN_LIST: {
        '$schema': 'https://json-schema.org/draft/2020-12/schema',
        'type': 'object',
        'required': ['record_id', 'text', 'word2char_span', 'entity_list'],
        'properties': {
            'record_id': {'type': 'string'},
            'text': {'type': 'string'},
            'word2char_span': {'type': 'array', 'items': _SPAN},
            'entity_list': {
                'type': 'array',
                'items': {
                    'type': 'object',
                    'required': ['char_spans'],
                    'properties': {
                        'type': _TYPE,
                        'char_spans': {'type': 'array', 'minItems': 1, 'items': _SPAN},
                    },
                },
            },
        },
    },
    ModelFormatKind.INDEX_LIST: {
        '$schema': 'https://json-schema.org/draft/2020-12/schema',
        'type': 'object',
        'required': ['record_id', 'entities'],
        'properties': {
            'record_id': {'type': 'string'},
            'entities': _INDEX_ENTITIES,
        },
    },
    ModelFormatKind.INDEX_LIST_TAGGED: {
        '$schema': 'https://json-schema.org/draft/2020-12/schema',
        'type': 'object',
        'required': ['record_id', 'entities'],
        'properties': {
            'record_id': {'type': 'string'},
            'tag_scheme': {'type': 'string', 'minLength': 1},
            'entities': _INDEX_ENTITIES,
        },
    },
}

_VALIDATORS = {kind: Draft202012Validator(schema)
               for kind, schema in RECORD_SCHEMA.items()}


##############################################################################
### Fragment Graph


class GraphError(DnerError, ValueError):
    pass


class LabelConflictError(GraphError):
    pass


@dataclass(frozen=True)
class FragmentGraph:
    """Labelled fragments linked by undirected same-entity edges."""
    nodes: tuple[tuple[Fragment, str], ...]
    edges: tuple[tuple[int, int], ...] = ()

    def __post_init__(self):
        object.__setattr__(self, 'nodes', tuple((f, l) for f, l in self.nodes))
        object.__setattr__(self, 'edges', tuple((int(a), int(b)) for a, b in self.edges))
        size = len(self.nodes)
        for a, b in self.edges:
            if not (0 <= a < size and 0 <= b < size):
                raise GraphError(f'edge ({a},{b}) references an unknown node.')
            if a == b:
                raise GraphError(f'self loop on node {a}.')

    @classmethod
    def from_spans(cls, spans: Sequence[tuple[int, int, str]],
                   edges: Sequence[tuple[int, int]]=()) -> 'FragmentGraph':
        return cls(tuple((Fragment(s, e), label) for s, e, label in spans), tuple(edges))

    def to_networkx(self) -> nx.Graph:
        graph = nx.Graph()
        graph.add_nodes_from(range(len(self.nodes)))
        graph.add_edges_from(self.edges)
        return graph


def resolve_fragment_graph(graph: FragmentGraph,
                           mode: GraphMode=GraphMode.COMPONENTS) -> list[Entity]:
    """
    Turn a fragment graph into entities.

    components: one entity per connected component.
    cliques:    one entity per maximal clique.
    Isolated nodes are singleton entities in both modes.
    """
    mode = GraphMode(mode)
    nx_graph = graph.to_networkx()

    components = [sorted(c) for c in nx.connected_components(nx_graph)]
    for comp in components:
        labels = {graph.nodes[n][1] for n in comp}
        if len(labels) > 1:
            raise LabelConflictError(
                f'nodes {comp} carry conflicting labels {sorted(labels)}.')

    if mode == GraphMode.COMPONENTS:
        groups = components
    else:
        groups = [sorted(c) for c in nx.find_cliques(nx_graph)]

    seen, entities = set(), []
    for group in groups:
        label = graph.nodes[group[0]][1]
        ent = Entity.from_spans(label, [(graph.nodes[n][0].start, graph.nodes[n][0].end)
                                        for n in group])
        if ent not in seen:
            seen.add(ent)
            entities.append(ent)
    return sorted(entities, key=lambda e: (e.indices, e.label))


##############################################################################
### Character Span


def char_span_to_token_indices(sentence: Sentence,
                               char_spans: Sequence[Sequence[int]]) -> list[int]:
    """Map inclusive character spans onto the whole tokens they cover."""
    starts = {cs: i for i, (cs, _) in enumerate(sentence.char_spans)}
    ends = {ce: i for i, (_, ce) in enumerate(sentence.char_spans)}
    indices = set()
    for cs, ce in char_spans:
        if cs not in starts or ce not in ends or ends[ce] < starts[cs]:
            raise AlignmentError(
                f'char span ({cs},{ce}) does not cover whole tokens.')
        indices.update(range(starts[cs], ends[ce] + 1))
    if not indices:
        raise AlignmentError('char spans cover no token.')
    return sorted(indices)


##############################################################################
### Record Parser


def _entities_of(kind: ModelFormatKind, obj: dict, sentence: Sentence | None,
                 default_label: str, graph_mode: GraphMode) -> list[Entity]:
    if kind == ModelFormatKind.TRANSITION_BASED:
        return [Entity.from_spans(ent.get('type', default_label), ent['spans'])
                for ent in obj['entities']]

    if kind == ModelFormatKind.SPAN_RELATION:
        spans = [(n[0], n[1], n[2] if len(n) > 2 else default_label) for n in obj['ner']]
        edges = [(r[0], r[1]) for r in obj.get('relations', [])]
        for a, b in edges:
            if a >= len(spans) or b >= len(spans):
                raise GraphError(f'relation ({a},{b}) references an unknown span.')
        graph = FragmentGraph.from_spans(spans, [e for e in edges if e[0] != e[1]])
        return resolve_fragment_graph(graph, graph_mode)

    if kind == ModelFormatKind.CHAR_SPAN_LIST:
        text, w2c = obj['text'], obj['word2char_span']
        for cs, ce in w2c:
            if any(isinstance(v, bool) or not isinstance(v, int) for v in (cs, ce)):
                raise AlignmentError(f'word2char_span ({cs},{ce}) holds a non-integer bound.')
            if ce >= len(text):
                raise AlignmentError(f'word2char_span ({cs},{ce}) lies outside the text.')
        own = Sentence(text, tuple(text[cs:ce+1] for cs, ce in w2c), tuple(map(tuple, w2c)))
        if sentence is not None and own.tokens != sentence.tokens:
            raise AlignmentError('word2char_span tokens differ from the reference sentence.')
        return [Entity.from_indices(ent.get('type', default_label),
                                    char_span_to_token_indices(own, ent['char_spans']))
                for ent in obj['entity_list']]

    # index lists: must already be strictly increasing
    entities = []
    for ent in obj['entities']:
        check_index_list(ent['index'])
        entities.append(Entity.from_indices(ent.get('type', default_label), ent['index']))
    return entities


def parse_model_output(kind: ModelFormatKind, stream: Iterable[str], *,
                       model_id: str=None,
                       sentences: Mapping[str, Sentence]=None,
                       graph_mode: GraphMode=GraphMode.COMPONENTS,
                       default_label: str='ADE',
                       source=None) -> list[PredictionSet]:
    """
    Parse one model's prediction file.

    Parameters
    ----------
    kind : ModelFormatKind
        Declared format of the file.
    stream : iterable of str
        JSON lines.
    sentences : mapping, optional
        record_id -> reference Sentence, enables record and range checks.
    """
    kind = ModelFormatKind(kind)
    model_id = model_id or kind.value
    validator = _VALIDATORS[kind]
    out, seen = [], set()

    for no, line in enumerate(stream, start=1):
        if line.strip() == '':
            continue
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as e:
            raise ParseError(f'invalid JSON: {e.msg}', source=source, line=no,
                             kind=kind.value) from None
        rid = obj.get('record_id') if isinstance(obj, dict) else None
        err = best_match(validator.iter_errors(obj))
        if err is not None:
            path = '/'.join(str(p) for p in err.absolute_path)
            raise ParseError(f'schema mismatch at /{path}: {err.message}',
                             source=source, line=no, record_id=rid, kind=kind.value)
        if rid in seen:
            raise ParseError('duplicate record.', source=source, line=no,
                             record_id=rid, kind=kind.value)
        seen.add(rid)

        sentence = None
        if sentences is not None:
            if rid not in sentences:
                raise ParseError('record id not found in the reference corpus.',
                                 source=source, line=no, record_id=rid, kind=kind.value)
            sentence = sentences[rid]
        try:
            entities = _entities_of(kind, obj, sentence, default_label, graph_mode)
            if sentence is not None:
                for ent in entities:
                    ent.check_range(len(sentence))
        except (SpanError, GraphError, AlignmentError) as e:
            raise ParseError(str(e), source=source, line=no, record_id=rid,
                             kind=kind.value) from None

        pset = PredictionSet(model_id, rid, frozenset(entities))
        if len(pset.entities) < len(entities):
            logger.debug('%s %s: dropped %d duplicate entities', model_id, rid,
                         len(entities) - len(pset.entities))
        out.append(pset)
    return out


def load_predictions(path, kind: ModelFormatKind, **kwargs) -> list[PredictionSet]:
    """Parse a prediction file (plain or gzip)."""
    path = Path(path)
    with open_text(path) as fp:
        return parse_model_output(kind, fp, source=path, **kwargs)


def normalize_predictions(psets: Iterable[PredictionSet],
                          references: Mapping[str, UniformRecord]) -> list[UniformRecord]:
    """Write prediction sets as uniform records anchored on the reference text."""
    records = []
    for pset in psets:
        ref = references[pset.record_id]
        records.append(UniformRecord.from_entities(pset.record_id, ref.to_sentence(),
                                                   pset.entities, ref.extra))
    return records
