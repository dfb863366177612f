# SPDX-License-Identifier: GPL-2.0-only
#
# Copyright (C) 2026 dner-aid-tool contributors
#
"""
LLM Arbitration of Candidate Entity Lists

Each record's candidate lists are canonicalised, rendered into a prompt,
sent to a chat client and the answer is checked token by token against
the record sentence. Whatever goes wrong ends in the voting result.
"""
import hashlib
import json
import logging
import re
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Any, Callable, Mapping, Sequence

from .common import ConfigError, DnerError
from .entity import (Entity, PredictionSet, SpanError, UniformEntity, UniformRecord,
                     check_index_list)
from .llm_client import TokenBucket, TransportError, submit
from .voting import VoteConfig, tally, vote

logger = logging.getLogger(__name__)


##############################################################################
### Global Variable

TASK_DESCRIPTION = (
    'You are an NER expert in the medical field who can identify side effect '
    'symptom entities and want to select the best answer from the output of '
    'five discontinuous named entity recognition models in a Health data set.')

ANNOTATION_DESCRIPTION = (
    'An entity can be any adverse reaction or adverse event. These symptoms may '
    'be physical, such as nausea, vomiting, heart palpitations, headache, rash, '
    'redness, and swelling, or psychological, such as anxiety, delusions, or '
    'psychosis. An entity may be discontinuous: its tokens need not be adjacent '
    'in the sentence.')

SAMPLE_DESCRIPTION = (
    'Input: {"text": "stiff upper leg , quad area .", '
    '"sentence": ["stiff", "upper", "leg", ",", "quad", "area", "."], '
    '"entity_list_1": [{"text": "stiff upper leg", "index": [0, 1, 2], "label": "ADE"}], '
    '"entity_list_2": [{"text": "stiff upper leg", "index": [0, 1, 2], "label": "ADE"}, '
    '{"text": "stiff quad area", "index": [0, 4, 5], "label": "ADE"}]}\n'
    'Output: {"entity_list": [{"text": "stiff upper leg", "index": [0, 1, 2], "label": "ADE"}, '
    '{"text": "stiff quad area", "index": [0, 4, 5], "label": "ADE"}]}\n'
    '"sentence" holds the tokens of "text", "index" the 0-based token positions '
    'of an entity and each "entity_list_N" the answer of one model.')

ORDER_INVARIANCE_CLAUSE = (
    'Act as an arbitrator between the "entity_list" inputs. Your judgment must '
    'not be influenced by the order of the entity lists or by the order of the '
    'entities inside a list.')

TOKEN_RESTRICTION_CLAUSE = (
    'Select every entity only from tokens of the "sentence" list, keeping their '
    'order and spelling. Never use synonyms or words that do not appear in '
    '"sentence". The "text" of an entity must be its tokens joined by single spaces.')

OUTPUT_INSTRUCTION = (
    'Answer with one JSON object {"entity_list": [{"text": ..., "index": [...], '
    '"label": ...}]} and nothing else.')

BATCH_OUTPUT_INSTRUCTION = (
    'Answer with one JSON object {"records": {<record_id>: {"entity_list": '
    '[{"text": ..., "index": [...], "label": ...}]}}} covering every record, '
    'and nothing else.')

CORRECTION_INSTRUCTION = (
    'Your previous answer could not be read. Reply again with only the JSON '
    'object described above, without any explanation.')


class UnparseableResponseError(DnerError):
    """No entity list can be extracted from a response."""


class OutcomeSource(str, Enum):
    ARBITRATED = 'arbitrated'
    FALLBACK   = 'fallback_voting'


class RejectReason(str, Enum):
    UNKNOWN_TOKEN = 'unknown_token'
    BAD_INDICES   = 'bad_indices'
    TEXT_MISMATCH = 'text_mismatch'
    NOT_IN_UNION  = 'not_in_union'
    UNPARSEABLE   = 'unparseable'


##############################################################################
### Data Structure


@dataclass(frozen=True)
class PromptConfig:
    task_description:         str = TASK_DESCRIPTION
    annotation_description:   str = ANNOTATION_DESCRIPTION
    sample_description:       str = SAMPLE_DESCRIPTION
    order_invariance_clause:  str = ORDER_INVARIANCE_CLAUSE
    token_restriction_clause: str = TOKEN_RESTRICTION_CLAUSE
    model_name:      str = 'gpt-4'
    temperature:     float = 0.0
    max_retries:     int = 3
    request_timeout: float = 60.0
    concurrency:     int = 4
    rate_limit:      float | None = None    # requests per second
    batch_size:      int = 1
    default_label:   str = 'ADE'

    def __post_init__(self):
        for name in ('task_description', 'annotation_description', 'sample_description',
                     'order_invariance_clause', 'token_restriction_clause'):
            if not getattr(self, name).strip():
                raise ConfigError(f'prompt section {name} is empty.')
        if self.temperature < 0:
            raise ConfigError('temperature must be >= 0.')
        if self.max_retries < 0:
            raise ConfigError('max_retries must be >= 0.')
        if self.request_timeout <= 0:
            raise ConfigError('request_timeout must be > 0.')
        if self.concurrency < 1 or self.batch_size < 1:
            raise ConfigError('concurrency and batch_size must be >= 1.')
        if self.rate_limit is not None and self.rate_limit <= 0:
            raise ConfigError('rate_limit must be > 0.')

    def sections(self) -> tuple[str, ...]:
        return (self.task_description, self.annotation_description,
                self.sample_description, self.order_invariance_clause,
                self.token_restriction_clause)


@dataclass(frozen=True)
class ArbitrationRequest:
    """
    Gold-free record plus one candidate list per model.

    Once canonicalized, keys of candidate_lists are pseudonyms and aliases
    maps each pseudonym back to its model id.
    """
    record:          UniformRecord
    candidate_lists: dict[str, tuple[UniformEntity, ...]]
    canonicalized:   bool = False
    aliases:         dict[str, str] = field(default_factory=dict)

    @classmethod
    def from_predictions(cls, record: UniformRecord,
                         predictions: Sequence[PredictionSet]) -> 'ArbitrationRequest':
        tokens = record.sentence
        lists = {p.model_id: tuple(UniformEntity.from_entity(e, tokens)
                                   for e in sorted(p.entities, key=lambda e: (e.indices, e.label)))
                 for p in predictions}
        return cls(record.without_entities(), lists)

    def union(self) -> frozenset[Entity]:
        return frozenset(ent.to_entity() for lst in self.candidate_lists.values()
                         for ent in lst)


@dataclass(frozen=True)
class Prompt:
    system: str
    user:   str

    def messages(self) -> list[dict]:
        return [{'role': 'system', 'content': self.system},
                {'role': 'user', 'content': self.user}]

    def digest(self) -> str:
        data = json.dumps(self.messages(), ensure_ascii=False, separators=(',', ':'))
        return hashlib.sha256(data.encode('utf-8')).hexdigest()

    def with_correction(self) -> 'Prompt':
        return Prompt(self.system, f'{self.user}\n\n{CORRECTION_INSTRUCTION}')


@dataclass(frozen=True)
class Rejection:
    item:   Any
    reason: RejectReason

    def to_dict(self) -> dict:
        return {'item': self.item, 'reason': self.reason.value}


@dataclass(frozen=True)
class ArbitrationOutcome:
    record_id:         str
    entities:          frozenset[Entity]
    source:            OutcomeSource
    raw_response:      str = ''
    validation_report: tuple[Rejection, ...] = ()
    attempt_count:     int = 0
    prompt_digest:     str = ''
    latency:           float = 0.0
    error:             str | None = None


##############################################################################
### Prompt


def _list_digest(entities: Sequence[UniformEntity]) -> str:
    data = json.dumps([[e.text, list(e.index), e.label] for e in entities],
                      ensure_ascii=False, separators=(',', ':'))
    return hashlib.sha256(data.encode('utf-8')).hexdigest()


def canonicalize_inputs(request: ArbitrationRequest) -> ArbitrationRequest:
    """
    Make the request independent of model order.

    Every list is sorted by (index, label) and deduplicated; lists are then
    ordered by the SHA-256 of their content and renamed entity_list_1..n.
    """
    if request.canonicalized:
        return request
    lists = []
    for mid, ents in request.candidate_lists.items():
        uniq = sorted(set(ents), key=lambda e: (e.index, e.label))
        lists.append((_list_digest(uniq), mid, tuple(uniq)))
    lists.sort(key=lambda x: (x[0], x[1]))
    candidates, aliases = {}, {}
    for no, (_, mid, ents) in enumerate(lists, start=1):
        candidates[f'entity_list_{no}'] = ents
        aliases[f'entity_list_{no}'] = mid
    return replace(request, candidate_lists=candidates, canonicalized=True, aliases=aliases)


def _record_payload(request: ArbitrationRequest, with_id: bool=False) -> dict:
    obj = {}
    if with_id:
        obj['record_id'] = request.record.record_id
    obj['text'] = request.record.text
    obj['sentence'] = list(request.record.sentence)
    for alias, ents in request.candidate_lists.items():
        obj[alias] = [{'text': e.text, 'index': list(e.index), 'label': e.label}
                      for e in ents]
    return obj


def build_prompt(request: ArbitrationRequest, config: PromptConfig) -> Prompt:
    """Render the system sections and the serialized record."""
    system = '\n\n'.join(config.sections())
    payload = json.dumps(_record_payload(request), ensure_ascii=False)
    return Prompt(system, f'{payload}\n\n{OUTPUT_INSTRUCTION}')


def build_batch_prompt(requests: Sequence[ArbitrationRequest], config: PromptConfig) -> Prompt:
    """Several records in one user message, keyed by record_id."""
    if len(requests) == 1:
        return build_prompt(requests[0], config)
    system = '\n\n'.join(config.sections())
    payload = json.dumps({'records': [_record_payload(r, with_id=True) for r in requests]},
                         ensure_ascii=False)
    return Prompt(system, f'{payload}\n\n{BATCH_OUTPUT_INSTRUCTION}')


##############################################################################
### Response


_FENCE_RE = re.compile(r'```(?:json)?\s*(.*?)```', re.S)


def _json_values(text: str):
    """Every JSON object or array in text: whole text, fenced blocks, then inline."""
    try:
        yield json.loads(text)
    except json.JSONDecodeError:
        pass
    for block in _FENCE_RE.findall(text):
        try:
            yield json.loads(block.strip())
        except json.JSONDecodeError:
            continue
    decoder = json.JSONDecoder()
    for m in re.finditer(r'[\[{]', text):
        try:
            yield decoder.raw_decode(text, m.start())[0]
        except json.JSONDecodeError:
            continue


def _is_answer(value) -> bool:
    return isinstance(value, dict) and ('entity_list' in value or 'records' in value)


def extract_json(raw: str):
    """
    JSON value of a response text.

    An object holding "entity_list" or "records" wins over any value found
    before it; otherwise the first object or array is returned.
    """
    first = None
    for value in _json_values(raw.strip()):
        if _is_answer(value):
            return value
        if first is None:
            first = (value,)
    if first is None:
        raise UnparseableResponseError('no JSON value in the response.')
    return first[0]


def _entity_items(obj) -> list:
    if isinstance(obj, str):
        obj = extract_json(obj)
    if isinstance(obj, dict) and isinstance(obj.get('entity_list'), list):
        return obj['entity_list']
    if isinstance(obj, list):
        if not all(isinstance(item, dict) for item in obj):
            raise UnparseableResponseError('bare list holds non-object items.')
        return obj
    raise UnparseableResponseError('response holds no entity list.')


def parse_and_validate_response(raw, record: UniformRecord, union: frozenset[Entity],
                                strict_union: bool=False,
                                default_label: str='ADE') -> tuple[frozenset[Entity], list[Rejection]]:
    """
    Keep the response entities that are readable from the record sentence.

    raw is the response text or an already decoded segment. Items are
    checked for unknown tokens, then indices, then text, then (strict_union)
    membership of the candidate union.
    """
    items = _entity_items(raw)
    tokens = record.sentence
    vocab = set(tokens)
    labels = {e.label for e in union}
    fill_label = next(iter(labels)) if len(labels) == 1 else default_label

    accepted, report = set(), []

    def reject(item, reason):
        report.append(Rejection(item, reason))
        logger.debug('%s: rejected %r (%s)', record.record_id, item, reason.value)

    for item in items:
        if not isinstance(item, dict) or not isinstance(item.get('text'), str):
            reject(item, RejectReason.UNPARSEABLE)
            continue
        label = item.get('label', fill_label)
        if not isinstance(label, str) or label == '':
            reject(item, RejectReason.UNPARSEABLE)
            continue
        if any(tok not in vocab for tok in item['text'].split()):
            reject(item, RejectReason.UNKNOWN_TOKEN)
            continue
        index = item.get('index')
        try:
            if not isinstance(index, list):
                raise SpanError('index is not a list.')
            check_index_list(index, len(tokens))
        except SpanError:
            reject(item, RejectReason.BAD_INDICES)
            continue
        if ' '.join(tokens[i] for i in index) != item['text']:
            reject(item, RejectReason.TEXT_MISMATCH)
            continue
        ent = Entity.from_indices(label, index)
        if strict_union and ent not in union:
            reject(item, RejectReason.NOT_IN_UNION)
            continue
        accepted.add(ent)
    return frozenset(accepted), report


def _batch_segments(raw: str, record_ids: Sequence[str]) -> dict:
    obj = extract_json(raw)
    recs = obj.get('records') if isinstance(obj, dict) else None
    if not isinstance(recs, dict):
        raise UnparseableResponseError('batch response holds no "records" object.')
    return {rid: recs[rid] for rid in record_ids if rid in recs}


##############################################################################
### Arbitration


class _RateLimited:
    def __init__(self, client, bucket: TokenBucket):
        self._client = client
        self._bucket = bucket

    def complete(self, request):
        self._bucket.acquire()
        return self._client.complete(request)


def _arbitrate_batch(jobs: Sequence[tuple[UniformRecord, Sequence[PredictionSet]]],
                     vote_config: VoteConfig, config: PromptConfig, client,
                     strict_union: bool, sleep: Callable) -> list[ArbitrationOutcome]:
    requests = [canonicalize_inputs(ArbitrationRequest.from_predictions(rec, preds))
                for rec, preds in jobs]
    voted = {rec.record_id: vote(tally(list(preds)), vote_config, len(preds))
             for rec, preds in jobs}
    results, reports, raws = {}, {}, {}
    raw_text, attempts, digest, error = '', 0, '', None
    pending = list(requests)
    t0 = time.monotonic()

    for round_no in range(2):
        prompt = build_batch_prompt(pending, config)
        if round_no:
            prompt = prompt.with_correction()
        if not digest:
            digest = prompt.digest()
        rids = [r.record.record_id for r in pending]
        try:
            sub = submit(prompt, config, client, record_ids=rids, requests=pending, sleep=sleep)
        except TransportError as e:
            attempts += e.attempts
            error = f'{type(e).__name__}: {e}'
            logger.warning('%s: %s, falling back to voting', ','.join(rids), error)
            break
        attempts += sub.attempts
        raw_text = sub.text

        try:
            segments = ({rids[0]: raw_text} if len(pending) == 1
                        else _batch_segments(raw_text, rids))
        except UnparseableResponseError as e:
            segments, error = {}, str(e)
        retry = []
        for req in pending:
            rid = req.record.record_id
            if rid not in segments:
                retry.append(req)
                continue
            try:
                results[rid], reports[rid] = parse_and_validate_response(
                    segments[rid], req.record, req.union(), strict_union,
                    config.default_label)
                raws[rid] = raw_text
            except UnparseableResponseError as e:
                error = str(e)
                retry.append(req)
        pending = retry
        if not pending:
            error = None
            break
        logger.info('%s: unreadable answer, sending correction',
                    ','.join(r.record.record_id for r in pending))

    latency = time.monotonic() - t0
    outcomes = []
    for req in requests:
        rid = req.record.record_id
        if rid in results:
            outcomes.append(ArbitrationOutcome(rid, results[rid], OutcomeSource.ARBITRATED,
                                               raws[rid], tuple(reports[rid]), attempts,
                                               digest, latency))
        else:
            outcomes.append(ArbitrationOutcome(rid, voted[rid], OutcomeSource.FALLBACK,
                                               raw_text, (), attempts, digest, latency,
                                               error or 'unparseable response'))
    return outcomes


def arbitrate_record(record: UniformRecord, predictions: Sequence[PredictionSet],
                     vote_config: VoteConfig, prompt_config: PromptConfig, client,
                     strict_union: bool=False,
                     sleep: Callable=time.sleep) -> ArbitrationOutcome:
    """
    Arbitrate one record.

    predictions holds one PredictionSet per participating model (empty sets
    included); the voting result over them is the fallback.
    """
    return _arbitrate_batch([(record, predictions)], vote_config, prompt_config,
                            client, strict_union, sleep)[0]


def arbitrate_corpus(records: Sequence[UniformRecord],
                     predictions: Mapping[str, Mapping[str, PredictionSet]],
                     model_ids: Sequence[str],
                     vote_config: VoteConfig, prompt_config: PromptConfig, client,
                     strict_union: bool=False,
                     sleep: Callable=time.sleep) -> list[ArbitrationOutcome]:
    """Arbitrate every record with a bounded worker pool, outcomes in record order."""
    if prompt_config.rate_limit is not None:
        client = _RateLimited(client, TokenBucket(prompt_config.rate_limit,
                                                  max(1, prompt_config.concurrency)))
    jobs = []
    for rec in records:
        preds = [predictions.get(mid, {}).get(rec.record_id)
                 or PredictionSet(mid, rec.record_id) for mid in model_ids]
        jobs.append((rec, preds))
    size = prompt_config.batch_size
    batches = [jobs[i:i+size] for i in range(0, len(jobs), size)]

    with ThreadPoolExecutor(max_workers=prompt_config.concurrency) as pool:
        futures = [pool.submit(_arbitrate_batch, batch, vote_config, prompt_config,
                               client, strict_union, sleep) for batch in batches]
        outcomes = [out for fut in futures for out in fut.result()]

    n_fb = sum(o.source == OutcomeSource.FALLBACK for o in outcomes)
    logger.info('arbitrated %d records, %d fell back to voting', len(outcomes), n_fb)
    return outcomes


def transcript_line(outcome: ArbitrationOutcome) -> str:
    obj = {'record_id': outcome.record_id,
           'prompt_sha256': outcome.prompt_digest,
           'raw_response': outcome.raw_response,
           'source': outcome.source.value,
           'attempts': outcome.attempt_count,
           'validation_report': [r.to_dict() for r in outcome.validation_report],
           'latency_s': round(outcome.latency, 3)}
    if outcome.error is not None:
        obj['error'] = outcome.error
    return json.dumps(obj, ensure_ascii=False)
