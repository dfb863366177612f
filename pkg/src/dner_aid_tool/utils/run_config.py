# SPDX-License-Identifier: GPL-2.0-only
#
# Copyright (C) 2026 dner-aid-tool contributors
#
"""
Run Configuration

A run is described by one JSON document. Relative paths resolve against
the document's directory and command line flags override its fields.
"""
import json
import logging
import os
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

from dotenv import load_dotenv
from jsonschema import ValidationError, validate

from .arbiter import PromptConfig
from .common import ConfigError, open_text
from .llm_client import MOCK_POLICIES, LiveClient, MockClient
from .pred_parser import GraphMode, ModelFormatKind
from .voting import VoteConfig

logger = logging.getLogger(__name__)

API_KEY_ENV = 'DNER_ARBITER_API_KEY'
RESOLVED_NAME = 'run-config.resolved'

ENSEMBLE_MODES = ('voting', 'arbitrated', 'both')
CLIENT_KINDS = ('mock', 'live')

RUN_CONFIG_SCHEMA = {
    '$schema': 'https://json-schema.org/draft/2020-12/schema',
    'type': 'object',
    'additionalProperties': False,
    'properties': {
        'gold': {'type': 'string'},
        'default_label': {'type': 'string', 'minLength': 1},
        'models': {
            'type': 'array',
            'items': {
                'type': 'object',
                'additionalProperties': False,
                'required': ['id', 'path', 'kind'],
                'properties': {
                    'id': {'type': 'string', 'pattern': r'^[A-Za-z0-9_.-]+$'},
                    'path': {'type': 'string'},
                    'kind': {'enum': [k.value for k in ModelFormatKind]},
                },
            },
        },
        'mode': {'enum': list(ENSEMBLE_MODES)},
        'vote': {
            'type': 'object',
            'additionalProperties': False,
            'properties': {
                'threshold': {'type': ['integer', 'null'], 'minimum': 1},
                'tie_rule': {'enum': ['exclude', 'include']},
            },
        },
        'prompt': {
            'type': 'object',
            'additionalProperties': False,
            'properties': {
                'task_description': {'type': 'string'},
                'annotation_description': {'type': 'string'},
                'sample_description': {'type': 'string'},
                'order_invariance_clause': {'type': 'string'},
                'token_restriction_clause': {'type': 'string'},
                'model_name': {'type': 'string'},
                'temperature': {'type': 'number', 'minimum': 0},
                'max_retries': {'type': 'integer', 'minimum': 0},
                'request_timeout': {'type': 'number', 'exclusiveMinimum': 0},
                'batch_size': {'type': 'integer', 'minimum': 1},
            },
        },
        'client': {'enum': [*CLIENT_KINDS, None]},
        'mock_script': {'type': 'string'},
        'endpoint': {'type': 'string'},
        'out': {'type': 'string'},
        'concurrency': {'type': 'integer', 'minimum': 1},
        'rate_limit': {'type': ['number', 'null'], 'exclusiveMinimum': 0},
        'strict_union': {'type': 'boolean'},
        'graph_mode': {'enum': [m.value for m in GraphMode]},
        'evaluate': {
            'type': 'object',
            'additionalProperties': False,
            'properties': {
                'systems': {
                    'type': 'array',
                    'items': {
                        'type': 'object',
                        'additionalProperties': False,
                        'required': ['id', 'path'],
                        'properties': {
                            'id': {'type': 'string'},
                            'path': {'type': 'string'},
                        },
                    },
                },
                'baseline': {'type': 'string'},
                'metrics': {
                    'type': 'array',
                    'minItems': 1,
                    'items': {'enum': ['precision', 'recall', 'f1']},
                },
                'alpha': {'enum': [0.05, 0.1]},
            },
        },
    },
}


@dataclass(frozen=True)
class ModelInput:
    id:   str
    path: Path
    kind: ModelFormatKind


@dataclass(frozen=True)
class SystemInput:
    id:   str
    path: Path


@dataclass(frozen=True)
class RunConfig:
    gold:          Path | None = None
    default_label: str = 'ADE'
    models:        tuple[ModelInput, ...] = ()
    mode:          str = 'voting'
    vote:          VoteConfig = field(default_factory=VoteConfig)
    prompt:        PromptConfig = field(default_factory=PromptConfig)
    client:        str | None = None
    mock_script:   str | None = None
    endpoint:      str | None = None
    out:           Path = Path('out')
    strict_union:  bool = False
    graph_mode:    GraphMode = GraphMode.COMPONENTS
    systems:       tuple[SystemInput, ...] = ()
    baseline:      str | None = None
    metrics:       tuple[str, ...] = ('f1',)
    alpha:         float = 0.05

    @property
    def model_ids(self) -> list[str]:
        return [m.id for m in self.models]

    def check(self) -> 'RunConfig':
        """Raise ConfigError on cross-field problems."""
        ids = self.model_ids
        if len(set(ids)) != len(ids):
            raise ConfigError(f'duplicate model ids {ids}.')
        if self.mode not in ENSEMBLE_MODES:
            raise ConfigError(f'unknown mode {self.mode!r}.')
        if self.mode != 'voting' and self.client is None:
            raise ConfigError(f'mode {self.mode} needs a client (mock or live).')
        if self.client == 'mock' and self.mock_script is None:
            raise ConfigError('mock client needs a script or a policy name.')
        if self.vote.threshold is not None and ids and self.vote.threshold > len(ids):
            raise ConfigError(f'threshold {self.vote.threshold} exceeds {len(ids)} models.')
        return self

    def snapshot(self) -> dict:
        """Resolved configuration, paths absolute, free of secrets."""
        return {
            'gold': None if self.gold is None else str(self.gold),
            'default_label': self.default_label,
            'models': [{'id': m.id, 'path': str(m.path), 'kind': m.kind.value}
                       for m in self.models],
            'mode': self.mode,
            'vote': {'threshold': self.vote.threshold, 'tie_rule': self.vote.tie_rule.value},
            'prompt': asdict(self.prompt),
            'client': self.client,
            'mock_script': self.mock_script,
            'endpoint': self.endpoint,
            'out': str(self.out),
            'strict_union': self.strict_union,
            'graph_mode': self.graph_mode.value,
            'evaluate': {'systems': [{'id': s.id, 'path': str(s.path)} for s in self.systems],
                         'baseline': self.baseline,
                         'metrics': list(self.metrics),
                         'alpha': self.alpha},
        }

    def snapshot_text(self, **extra) -> str:
        """JSON snapshot; extra holds command inputs that live outside the config."""
        return json.dumps({**self.snapshot(), **extra}, indent=2, ensure_ascii=False) + '\n'


def _resolve(base: Path, value: str) -> Path:
    path = Path(value).expanduser()
    return path if path.is_absolute() else (base / path).resolve()


def config_from_dict(data: dict, base: Path=Path('.')) -> RunConfig:
    """Validate a config document and build a RunConfig."""
    try:
        validate(instance=data, schema=RUN_CONFIG_SCHEMA)
    except ValidationError as e:
        path = '/'.join(str(p) for p in e.absolute_path)
        raise ConfigError(f'config schema check fail at /{path}: {e.message}') from None

    base = Path(base).resolve()
    prompt_kw = dict(data.get('prompt', {}))
    if 'concurrency' in data:
        prompt_kw['concurrency'] = data['concurrency']
    if 'rate_limit' in data:
        prompt_kw['rate_limit'] = data['rate_limit']
    default_label = data.get('default_label', 'ADE')
    prompt_kw.setdefault('default_label', default_label)

    mock = data.get('mock_script')
    if mock is not None and mock not in MOCK_POLICIES:
        mock = str(_resolve(base, mock))
    ev = data.get('evaluate', {})

    cfg = RunConfig(
        gold=None if 'gold' not in data else _resolve(base, data['gold']),
        default_label=default_label,
        models=tuple(ModelInput(m['id'], _resolve(base, m['path']), ModelFormatKind(m['kind']))
                     for m in data.get('models', [])),
        mode=data.get('mode', 'voting'),
        vote=VoteConfig(**data.get('vote', {})),
        prompt=PromptConfig(**prompt_kw),
        client=data.get('client'),
        mock_script=mock,
        endpoint=data.get('endpoint'),
        out=_resolve(base, data.get('out', 'out')),
        strict_union=data.get('strict_union', False),
        graph_mode=GraphMode(data.get('graph_mode', 'components')),
        systems=tuple(SystemInput(s['id'], _resolve(base, s['path']))
                      for s in ev.get('systems', [])),
        baseline=ev.get('baseline'),
        metrics=tuple(ev.get('metrics', ('f1',))),
        alpha=ev.get('alpha', 0.05),
    )
    return cfg


def load_run_config(path) -> RunConfig:
    """Load a config file; every referenced input must exist."""
    path = Path(path)
    try:
        with open_text(path) as fp:
            data = json.load(fp)
    except OSError as e:
        raise ConfigError(str(e)) from None
    except json.JSONDecodeError as e:
        raise ConfigError(f'config is not JSON ({path}): {e.msg} (ln:{e.lineno})') from None
    cfg = config_from_dict(data, path.parent)
    check_inputs(cfg)
    logger.info('config %s: %d models, mode %s', path, len(cfg.models), cfg.mode)
    return cfg


def check_inputs(cfg: RunConfig):
    for path in ([] if cfg.gold is None else [cfg.gold]) + [m.path for m in cfg.models]:
        if not Path(path).exists():
            raise ConfigError(f'Cannot find the file ({path}).')


def apply_overrides(cfg: RunConfig, **kwargs) -> RunConfig:
    """
    Merge command line values (None means not given) into cfg.

    Recognized keys: mode, threshold, strict_union, client, mock_script,
    endpoint, model_name, temperature, concurrency, out.
    """
    kw = {k: v for k, v in kwargs.items() if v is not None}
    top, prompt_kw = {}, {}
    for key in ('mode', 'strict_union', 'client', 'endpoint'):
        if key in kw:
            top[key] = kw[key]
    if 'out' in kw:
        top['out'] = Path(kw['out']).resolve()
    if 'mock_script' in kw:
        mock = kw['mock_script']
        top['mock_script'] = mock if mock in MOCK_POLICIES else str(Path(mock).resolve())
        top.setdefault('client', cfg.client or 'mock')
    if 'threshold' in kw:
        top['vote'] = replace(cfg.vote, threshold=kw['threshold'])
    for key in ('model_name', 'temperature', 'concurrency'):
        if key in kw:
            prompt_kw[key] = kw[key]
    if prompt_kw:
        top['prompt'] = replace(cfg.prompt, **prompt_kw)
    return replace(cfg, **top)


def make_client(cfg: RunConfig):
    """Client for the arbitrated path; the live one needs the API key."""
    if cfg.client == 'mock':
        return MockClient.from_source(cfg.mock_script)
    if cfg.client == 'live':
        load_dotenv()
        key = os.environ.get(API_KEY_ENV)
        if not key:
            raise ConfigError(f'live client needs the {API_KEY_ENV} environment variable.')
        return LiveClient(key, cfg.endpoint, cfg.prompt.request_timeout)
    raise ConfigError('no client selected.')
