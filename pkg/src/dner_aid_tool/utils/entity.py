# SPDX-License-Identifier: GPL-2.0-only
#
# Copyright (C) 2026 dner-aid-tool contributors
#
"""
Entity Model for Discontinuous NER

Token indices are 0-based and inclusive everywhere. A fragment is one
contiguous run of tokens; an entity is a label plus sorted, disjoint and
non-adjacent fragments. Every value is immutable.
"""
import json
from dataclasses import dataclass, field
from typing import Iterable, Sequence

from .common import AlignmentError, ConsistencyError, DnerError


##############################################################################
### Error


class SpanError(DnerError, ValueError):
    """Base of span algebra errors."""


class InvalidIndicesError(SpanError):
    pass


class InvalidFragmentsError(SpanError):
    pass


class TokenRangeError(SpanError):
    pass


class NotRepresentableError(SpanError):
    """Entity configuration cannot be written in the BIO scheme."""


##############################################################################
### Data Structure


@dataclass(frozen=True)
class Sentence:
    """Tokenized sentence with inclusive per-token character spans."""
    text:       str
    tokens:     tuple[str, ...]
    char_spans: tuple[tuple[int, int], ...]

    def __post_init__(self):
        object.__setattr__(self, 'tokens', tuple(self.tokens))
        object.__setattr__(self, 'char_spans',
                           tuple((int(s), int(e)) for s, e in self.char_spans))
        if len(self.tokens) != len(self.char_spans):
            raise AlignmentError(
                f'{len(self.tokens)} tokens but {len(self.char_spans)} char spans.')
        prev_end = -1
        for tok, (cs, ce) in zip(self.tokens, self.char_spans):
            if cs <= prev_end or ce < cs:
                raise AlignmentError(f'char span ({cs},{ce}) overlaps or is reversed.')
            if self.text[cs:ce+1] != tok:
                raise AlignmentError(
                    f'char span ({cs},{ce}) reads {self.text[cs:ce+1]!r}, '
                    f'token is {tok!r}.')
            prev_end = ce

    def __len__(self) -> int:
        return len(self.tokens)

    @classmethod
    def from_tokens(cls, tokens: Sequence[str], text: str=None) -> 'Sentence':
        """
        Build a sentence from tokens.

        Without text the tokens are joined by single spaces. With text the
        tokens are located left to right, skipping whitespace only.
        """
        tokens = tuple(tokens)
        if text is None:
            text = ' '.join(tokens)
        spans, pos = [], 0
        for tok in tokens:
            if tok == '':
                raise AlignmentError('empty token.')
            while pos < len(text) and text[pos].isspace():
                pos += 1
            if not text.startswith(tok, pos):
                raise AlignmentError(f'token {tok!r} not found at offset {pos}.')
            spans.append((pos, pos + len(tok) - 1))
            pos += len(tok)
        return cls(text, tokens, tuple(spans))


@dataclass(frozen=True, order=True)
class Fragment:
    """One contiguous piece of an entity (inclusive token range)."""
    start: int
    end:   int

    def __post_init__(self):
        for val in (self.start, self.end):
            if not isinstance(val, int) or isinstance(val, bool):
                raise InvalidFragmentsError(f'fragment bound {val!r} is not an integer.')
        if not (0 <= self.start <= self.end):
            raise InvalidFragmentsError(
                f'fragment [{self.start},{self.end}] violates 0 <= start <= end.')

    def indices(self) -> range:
        return range(self.start, self.end + 1)


@dataclass(frozen=True)
class Entity:
    """
    A possibly discontinuous entity.

    Fragments are sorted on construction; overlapping or touching fragments
    are rejected (use from_indices/from_spans to merge them). Equality and
    hashing follow the canonical identity (label, token-index set).
    """
    label:     str
    fragments: tuple[Fragment, ...]

    def __post_init__(self):
        frags = tuple(sorted(Fragment(*f) if not isinstance(f, Fragment) else f
                             for f in self.fragments))
        if not frags:
            raise InvalidFragmentsError('entity without fragment.')
        for prv, cur in zip(frags, frags[1:]):
            if cur.start <= prv.end + 1:
                raise InvalidFragmentsError(
                    f'fragments [{prv.start},{prv.end}] and [{cur.start},{cur.end}] '
                    'overlap or are adjacent.')
        object.__setattr__(self, 'fragments', frags)

    @classmethod
    def from_indices(cls, label: str, indices: Iterable[int]) -> 'Entity':
        """Build from any collection of token indices (duplicates merged)."""
        idx = sorted(set(indices))
        return cls(label, tuple(fragments_from_indices(idx)))

    @classmethod
    def from_spans(cls, label: str, spans: Iterable[Sequence[int]]) -> 'Entity':
        """Build from inclusive (start, end) spans in any order."""
        idx = set()
        for start, end in spans:
            idx.update(Fragment(start, end).indices())
        return cls.from_indices(label, idx)

    @property
    def indices(self) -> tuple[int, ...]:
        return tuple(indices_from_fragments(self.fragments))

    @property
    def is_discontinuous(self) -> bool:
        return len(self.fragments) > 1

    @property
    def key(self) -> str:
        return canonical_key(self)

    def check_range(self, n_tokens: int):
        if self.fragments[-1].end >= n_tokens:
            raise TokenRangeError(
                f'entity ends at token {self.fragments[-1].end}, '
                f'sentence has {n_tokens} tokens.')

    def text(self, sentence: Sentence) -> str:
        return entity_text(sentence, self.indices)


@dataclass(frozen=True)
class UniformEntity:
    """Entity in the uniform record shape: text, index list and label."""
    text:  str
    index: tuple[int, ...]
    label: str
    extra: dict = field(default_factory=dict, compare=False, hash=False)

    def __post_init__(self):
        object.__setattr__(self, 'index', tuple(self.index))

    def to_entity(self) -> Entity:
        return Entity(self.label, tuple(fragments_from_indices(self.index)))

    @classmethod
    def from_entity(cls, entity: Entity, tokens: Sequence[str]) -> 'UniformEntity':
        return cls(_join(tokens, entity.indices), entity.indices, entity.label)


@dataclass(frozen=True)
class UniformRecord:
    """Post-processed per-sentence record shared by both ensembling paths."""
    record_id:   str
    text:        str
    sentence:    tuple[str, ...]
    entity_list: tuple[UniformEntity, ...] = ()
    extra:       dict = field(default_factory=dict, compare=False, hash=False)

    def __post_init__(self):
        object.__setattr__(self, 'sentence', tuple(self.sentence))
        object.__setattr__(self, 'entity_list', tuple(self.entity_list))
        for ent in self.entity_list:
            check_index_list(ent.index, len(self.sentence))
            if (expect := _join(self.sentence, ent.index)) != ent.text:
                raise ConsistencyError(
                    f'record {self.record_id}: entity text {ent.text!r} does not '
                    f'match indexed tokens {expect!r}.')

    @classmethod
    def from_entities(cls, record_id: str, sentence: Sentence,
                      entities: Iterable[Entity], extra: dict=None) -> 'UniformRecord':
        ents = sorted(entities, key=lambda e: (e.indices, e.label))
        for ent in ents:
            ent.check_range(len(sentence))
        return cls(record_id, sentence.text, sentence.tokens,
                   tuple(UniformEntity.from_entity(e, sentence.tokens) for e in ents),
                   dict(extra or {}))

    def to_entities(self) -> frozenset[Entity]:
        return frozenset(ent.to_entity() for ent in self.entity_list)

    def to_sentence(self) -> Sentence:
        try:
            return Sentence.from_tokens(self.sentence, self.text)
        except AlignmentError:
            return Sentence.from_tokens(self.sentence)

    def without_entities(self) -> 'UniformRecord':
        return UniformRecord(self.record_id, self.text, self.sentence, (), dict(self.extra))


@dataclass(frozen=True)
class PredictionSet:
    """One model's entities for one sentence."""
    model_id:  str
    record_id: str
    entities:  frozenset[Entity] = frozenset()

    def __post_init__(self):
        object.__setattr__(self, 'entities', frozenset(self.entities))


##############################################################################
### Span Algebra


def check_index_list(indices: Sequence[int], n_tokens: int=None):
    """Raise unless indices are non-empty, strictly increasing, in range."""
    if len(indices) == 0:
        raise InvalidIndicesError('empty index list.')
    prev = -1
    for i in indices:
        if not isinstance(i, int) or isinstance(i, bool):
            raise InvalidIndicesError(f'index {i!r} is not an integer.')
        if i <= prev:
            raise InvalidIndicesError(
                f'index list {list(indices)} is not strictly increasing and non-negative.')
        prev = i
    if n_tokens is not None and prev >= n_tokens:
        raise TokenRangeError(f'index {prev} out of range for {n_tokens} tokens.')


def fragments_from_indices(indices: Sequence[int]) -> list[Fragment]:
    """Split a strictly increasing index list into maximal runs."""
    check_index_list(indices)
    frags, start = [], indices[0]
    for prv, cur in zip(indices, indices[1:]):
        if cur != prv + 1:
            frags.append(Fragment(start, prv))
            start = cur
    frags.append(Fragment(start, indices[-1]))
    return frags


def indices_from_fragments(fragments: Sequence[Fragment]) -> list[int]:
    """Inverse of fragments_from_indices."""
    if len(fragments) == 0:
        raise InvalidFragmentsError('empty fragment list.')
    out = []
    for frag in fragments:
        if out and frag.start <= out[-1] + 1:
            raise InvalidFragmentsError(
                f'fragment [{frag.start},{frag.end}] overlaps or touches its predecessor.')
        out.extend(frag.indices())
    return out


def _join(tokens: Sequence[str], indices: Sequence[int]) -> str:
    return ' '.join(tokens[i] for i in indices)


def entity_text(sentence: Sentence, indices: Sequence[int]) -> str:
    """Tokens at indices joined by single spaces."""
    if len(indices) == 0:
        raise TokenRangeError('empty token selection.')
    for i in indices:
        if not (0 <= i < len(sentence.tokens)):
            raise TokenRangeError(
                f'index {i} out of range for {len(sentence.tokens)} tokens.')
    return _join(sentence.tokens, indices)


def canonical_key(entity: Entity) -> str:
    return json.dumps([entity.label, [[f.start, f.end] for f in entity.fragments]],
                      ensure_ascii=False, separators=(',', ':'))


##############################################################################
### BIO Scheme


def bio_encode(sentence: Sentence, entities: Iterable[Entity],
               typed: bool=False) -> list[str]:
    """Write continuous, non-overlapping entities as B/I/O labels."""
    labels = ['O'] * len(sentence)
    for ent in entities:
        if ent.is_discontinuous:
            raise NotRepresentableError(
                f'discontinuous entity {canonical_key(ent)} has no BIO form.')
        ent.check_range(len(sentence))
        frag = ent.fragments[0]
        if any(labels[i] != 'O' for i in frag.indices()):
            raise NotRepresentableError(
                f'entity {canonical_key(ent)} overlaps another entity.')
        suffix = f'-{ent.label}' if typed else ''
        labels[frag.start] = 'B' + suffix
        for i in range(frag.start + 1, frag.end + 1):
            labels[i] = 'I' + suffix
    return labels


def bio_decode(labels: Sequence[str], default_label: str) -> list[Entity]:
    """
    Read B/I/O labels back into entities.

    A dangling I (at the start, after O, or after a differently typed tag)
    opens a new entity as if it were B.
    """
    entities, start, cur_label = [], None, None

    def close(end: int):
        if start is not None:
            entities.append(Entity(cur_label, (Fragment(start, end),)))

    for i, tag in enumerate(labels):
        head, _, typ = tag.partition('-')
        label = typ or default_label
        if head == 'B' or (head == 'I' and (start is None or label != cur_label)):
            close(i - 1)
            start, cur_label = i, label
        elif head == 'I':
            continue
        elif head == 'O':
            close(i - 1)
            start, cur_label = None, None
        else:
            raise SpanError(f'unknown BIO tag {tag!r} at position {i}.')
    close(len(labels) - 1)
    return entities
