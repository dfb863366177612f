# SPDX-License-Identifier: GPL-2.0-only
#
# Copyright (C) 2026 dner-aid-tool contributors
#
"""
Chat-Completion Clients for the Arbiter

A client is any object with ``complete(ChatRequest) -> str``. The live
client talks to an OpenAI-compatible endpoint; the mock client answers
from a script or a built-in policy and needs no credentials.
"""
import json
import logging
import threading
import time
from collections import Counter, defaultdict
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable

import openai
from jsonschema import ValidationError, validate
from tenacity import (Retrying, before_sleep_log, retry_if_exception_type,
                      stop_after_attempt, wait_exponential_jitter)

from .common import ConfigError, DnerError, open_text

logger = logging.getLogger(__name__)


##############################################################################
### Error


class TransportError(DnerError):
    """Request failed for good."""
    def __init__(self, msg: str, attempts: int=1):
        super().__init__(msg)
        self.attempts = attempts


class RetryableError(TransportError):
    """Rate limit or server error, worth another attempt."""


class RequestTimeoutError(TransportError):
    pass


##############################################################################
### Request / Response


@dataclass(frozen=True)
class ChatRequest:
    """
    One chat-completion call.

    requests holds the canonicalised arbitration requests the prompt was
    built from; only mock policies read it.
    """
    record_ids:  tuple[str, ...]
    messages:    tuple[dict, ...]
    model:       str
    temperature: float = 0.0
    timeout:     float = 60.0
    requests:    tuple = ()

    @property
    def key(self) -> str:
        return ','.join(self.record_ids)

    @property
    def batched(self) -> bool:
        return len(self.record_ids) > 1


@dataclass(frozen=True)
class Submission:
    text:     str
    attempts: int


def submit(prompt, config, client, *, record_ids=(), requests=(),
           sleep: Callable[[float], Any]=time.sleep) -> Submission:
    """
    Send a prompt, retrying rate-limit and server errors.

    Backoff is exponential (1s, 2s, 4s, ...) plus up to 1s of jitter, for
    at most config.max_retries retries.
    """
    request = ChatRequest(tuple(record_ids), tuple(prompt.messages()), config.model_name,
                          config.temperature, config.request_timeout, tuple(requests))
    retrying = Retrying(stop=stop_after_attempt(config.max_retries + 1),
                        wait=wait_exponential_jitter(initial=1, exp_base=2, jitter=1),
                        retry=retry_if_exception_type(RetryableError),
                        before_sleep=before_sleep_log(logger, logging.WARNING),
                        sleep=sleep,
                        reraise=True)
    attempts = 0
    try:
        for attempt in retrying:
            with attempt:
                attempts = attempt.retry_state.attempt_number
                text = client.complete(request)
    except RetryableError as e:
        raise TransportError(f'giving up after {attempts} attempts: {e}', attempts) from e
    except TransportError as e:
        e.attempts = attempts
        raise
    return Submission(text, attempts)


##############################################################################
### Live Client


class LiveClient:
    """OpenAI-compatible chat-completions client."""

    def __init__(self, api_key: str, endpoint: str=None, timeout: float=60.0,
                 client=None):
        if client is None:
            client = openai.OpenAI(api_key=api_key, base_url=endpoint,
                                   max_retries=0, timeout=timeout)
        self._client = client

    def complete(self, request: ChatRequest) -> str:
        try:
            resp = self._client.chat.completions.create(
                        model=request.model,
                        messages=list(request.messages),
                        temperature=request.temperature,
                        timeout=request.timeout)
        except (openai.RateLimitError, openai.InternalServerError) as e:
            raise RetryableError(f'{request.key}: {type(e).__name__}: {e}') from e
        except openai.APITimeoutError as e:
            raise RequestTimeoutError(f'{request.key}: timeout after {request.timeout}s') from e
        except openai.APIStatusError as e:
            if e.status_code >= 500:
                raise RetryableError(f'{request.key}: HTTP {e.status_code}') from e
            raise TransportError(f'{request.key}: HTTP {e.status_code}: {e}') from e
        except openai.APIError as e:
            raise TransportError(f'{request.key}: {type(e).__name__}: {e}') from e
        return resp.choices[0].message.content or ''


##############################################################################
### Mock Client


MOCK_POLICIES = ('majority', 'union', 'echo_first')

MOCK_SCRIPT_SCHEMA = {
    '$schema': 'https://json-schema.org/draft/2020-12/schema',
    'type': 'object',
    'additionalProperties': False,
    'properties': {
        'policy': {'enum': [*MOCK_POLICIES, None]},
        'responses': {
            'type': 'object',
            'additionalProperties': {
                'anyOf': [
                    {'type': 'string'},
                    {'type': 'array', 'minItems': 1, 'items': {'type': 'string'}},
                ],
            },
        },
        'default': {'type': ['string', 'null']},
    },
}


def _policy_entities(policy: str, areq) -> list:
    lists = [areq.candidate_lists[k] for k in sorted(areq.candidate_lists,
                                                      key=_alias_order)]
    if policy == 'echo_first':
        return list(lists[0]) if lists else []
    counts = Counter(ent for lst in lists for ent in set(lst))
    need = 1 if policy == 'union' else (len(lists) + 2) // 2
    return [ent for ent, n in counts.items() if n >= need]


def _alias_order(alias: str):
    head, _, tail = alias.rpartition('_')
    return (head, int(tail)) if tail.isdigit() else (alias, 0)


def _answer(entities) -> dict:
    ents = sorted(entities, key=lambda e: (e.index, e.label))
    return {'entity_list': [{'text': e.text, 'index': list(e.index), 'label': e.label}
                            for e in ents]}


@dataclass
class MockClient:
    """
    Scripted client.

    responses: record_id (or comma-joined ids of a batch) -> text, or a list
               of texts consumed one per attempt (the last one repeats).
    policy:    answer computed from the candidate lists when no scripted
               response matches.
    default:   text used when neither applies.
    """
    policy:    str | None = None
    responses: dict = field(default_factory=dict)
    default:   str | None = None

    def __post_init__(self):
        self._lock = threading.Lock()
        self._calls = defaultdict(int)

    @classmethod
    def from_source(cls, source: str) -> 'MockClient':
        """Build from a policy name or a script file path."""
        if source in MOCK_POLICIES:
            return cls(policy=source)
        path = Path(source)
        try:
            with open_text(path) as fp:
                script = json.load(fp)
        except (OSError, json.JSONDecodeError) as e:
            raise ConfigError(f'cannot load mock script ({path}): {e}') from None
        try:
            validate(instance=script, schema=MOCK_SCRIPT_SCHEMA)
        except ValidationError as e:
            raise ConfigError(f'mock script schema check fail ({path}): {e.message}') from None
        return cls(script.get('policy'), script.get('responses', {}), script.get('default'))

    def calls(self, key: str) -> int:
        with self._lock:
            return self._calls[key]

    def complete(self, request: ChatRequest) -> str:
        with self._lock:
            attempt = self._calls[request.key]
            self._calls[request.key] += 1

        if request.key in self.responses:
            script = self.responses[request.key]
            if isinstance(script, str):
                return script
            return script[min(attempt, len(script) - 1)]
        if self.policy is not None and request.requests:
            if request.batched:
                return json.dumps({'records': {
                    areq.record.record_id: _answer(_policy_entities(self.policy, areq))
                    for areq in request.requests}}, ensure_ascii=False)
            return json.dumps(_answer(_policy_entities(self.policy, request.requests[0])),
                              ensure_ascii=False)
        if self.default is not None:
            return self.default
        raise TransportError(f'mock client has no answer for {request.key}.')


##############################################################################
### Rate Limit


class TokenBucket:
    """Blocking token bucket: rate tokens per second, burst of capacity."""

    def __init__(self, rate: float, capacity: int=1,
                 clock: Callable[[], float]=time.monotonic,
                 sleep: Callable[[float], Any]=time.sleep):
        if rate <= 0 or capacity < 1:
            raise ConfigError('rate limit needs rate > 0 and capacity >= 1.')
        self.rate = float(rate)
        self.capacity = capacity
        self._clock = clock
        self._sleep = sleep
        self._tokens = float(capacity)
        self._stamp = clock()
        self._lock = threading.Lock()

    def _refill(self):
        now = self._clock()
        self._tokens = min(self.capacity, self._tokens + (now - self._stamp) * self.rate)
        self._stamp = now

    def try_acquire(self) -> bool:
        with self._lock:
            self._refill()
            if self._tokens >= 1:
                self._tokens -= 1
                return True
            return False

    def acquire(self):
        while True:
            with self._lock:
                self._refill()
                if self._tokens >= 1:
                    self._tokens -= 1
                    return
                wait = (1 - self._tokens) / self.rate
            self._sleep(wait)
