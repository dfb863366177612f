# SPDX-License-Identifier: GPL-2.0-only
#
# Copyright (C) 2026 dner-aid-tool contributors
#
"""
Gold Corpus Parser

Grammar (UTF-8, one record per block):

    <space-joined tokens>
    <annotations or empty line>
    <blank line>

An annotation line holds segments joined by '|', each segment being
'start,end[,start,end...] LABEL' with inclusive 0-based token indices.
A block made of the single line '-DOCSTART- <doc_id>' opens a document.
"""
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable

from .common import AlignmentError, ParseError, open_text
from .entity import Entity, Sentence, SpanError, UniformRecord

logger = logging.getLogger(__name__)

DOC_MARK = '-DOCSTART-'


@dataclass
class GoldDocument:
    """A document and its annotated sentences."""
    doc_id:    str
    sentences: list[tuple[Sentence, frozenset[Entity]]] = field(default_factory=list)

    def record_id(self, ordinal: int) -> str:
        return f'{self.doc_id}:{ordinal}'

    def records(self) -> list[UniformRecord]:
        return [UniformRecord.from_entities(self.record_id(no), sent, ents)
                for no, (sent, ents) in enumerate(self.sentences)]


def _parse_annotation(line: str, n_tokens: int, default_label: str,
                      no: int, source) -> frozenset[Entity]:
    entities = set()
    for seg in line.split('|'):
        seg = seg.strip()
        if seg == '':
            raise ParseError(f'empty annotation segment in {line!r}.',
                             source=source, line=no)
        idx_part, *label_part = seg.split()
        if len(label_part) > 1:
            raise ParseError(f'unexpected text in segment {seg!r}.',
                             source=source, line=no)
        label = label_part[0] if label_part else default_label
        try:
            nums = [int(x) for x in idx_part.split(',')]
        except ValueError:
            raise ParseError(f'bad index list or separator in {seg!r}.',
                             source=source, line=no) from None
        if len(nums) % 2:
            raise ParseError(f'odd index count in {seg!r}.', source=source, line=no)
        spans = list(zip(nums[0::2], nums[1::2]))
        try:
            ent = Entity.from_spans(label, spans)
            ent.check_range(n_tokens)
        except SpanError as e:
            raise ParseError(f'{e} (segment {seg!r})', source=source, line=no) from None
        entities.add(ent)
    return frozenset(entities)


def parse_gold(stream: Iterable[str], doc_id: str='doc', default_label: str='ADE',
               source=None) -> list[GoldDocument]:
    """
    Parse gold annotations.

    Parameters
    ----------
    stream : iterable of str
        Lines of the gold file.
    doc_id : str
        Document id used when the file has no document marker.
    default_label : str
        Label for segments written without one.
    """
    ST_SENT, ST_ANNO, ST_SEP = range(3)

    docs, doc, state = [], None, ST_SENT
    sentence = None

    def add(sent: Sentence, ents: frozenset):
        nonlocal doc
        if doc is None:
            doc = GoldDocument(doc_id)
            docs.append(doc)
        doc.sentences.append((sent, ents))

    for no, line in enumerate(stream, start=1):
        line = line.rstrip('\r\n')
        if state == ST_SENT:
            if line.strip() == '':
                continue
            if line.startswith(DOC_MARK):
                toks = line.split()
                if len(toks) != 2:
                    raise ParseError('document marker needs exactly one id.',
                                     source=source, line=no)
                if any(d.doc_id == toks[1] for d in docs):
                    raise ParseError(f'duplicate document id {toks[1]!r}.',
                                     source=source, line=no)
                doc = GoldDocument(toks[1])
                docs.append(doc)
                state = ST_SEP
                continue
            try:
                sentence = Sentence.from_tokens(line.split(), line.strip())
            except AlignmentError as e:
                raise ParseError(str(e), source=source, line=no) from None
            state = ST_ANNO
        elif state == ST_ANNO:
            if line.strip() == '':
                ents = frozenset()
            else:
                ents = _parse_annotation(line, len(sentence), default_label, no, source)
            add(sentence, ents)
            sentence, state = None, ST_SEP
        elif state == ST_SEP:
            if line.strip() != '':
                raise ParseError('expected a blank separator line.',
                                 source=source, line=no)
            state = ST_SENT

    # sentence on the last line without annotation line
    if state == ST_ANNO:
        add(sentence, frozenset())

    logger.info('gold %s: %d documents, %d sentences', source or '<stream>',
                len(docs), sum(len(d.sentences) for d in docs))
    return docs


def load_gold(path, default_label: str='ADE') -> list[GoldDocument]:
    """Parse a gold file (plain or gzip)."""
    path = Path(path)
    doc_id = path.name.split('.')[0]
    with open_text(path) as fp:
        return parse_gold(fp, doc_id=doc_id, default_label=default_label, source=path)


def gold_records(docs: list[GoldDocument]) -> list[UniformRecord]:
    """Flatten documents into uniform records in file order."""
    records = []
    for doc in docs:
        records.extend(doc.records())
    return records
