# SPDX-License-Identifier: GPL-2.0-only
#
# Copyright (C) 2026 dner-aid-tool contributors
#
import json

import pytest

from dner_aid_tool.utils.common import ConfigError
from dner_aid_tool.utils.llm_client import LiveClient, MockClient
from dner_aid_tool.utils.pred_parser import GraphMode, ModelFormatKind
from dner_aid_tool.utils.run_config import (API_KEY_ENV, RunConfig, apply_overrides,
                                            config_from_dict, load_run_config,
                                            make_client)
from dner_aid_tool.utils.voting import TieRule


def test_load_sample_config(sample_dir):
    cfg = load_run_config(sample_dir / 'run.json')
    assert cfg.model_ids == ['transition', 'span', 'clique', 'w2ner', 'toe']
    assert cfg.models[2].kind is ModelFormatKind.CHAR_SPAN_LIST
    assert cfg.gold == (sample_dir / 'gold.txt').resolve()
    assert cfg.mode == 'both' and cfg.client == 'mock' and cfg.mock_script == 'majority'
    assert cfg.prompt.concurrency == 2
    assert cfg.vote.tie_rule is TieRule.EXCLUDE
    assert cfg.graph_mode is GraphMode.COMPONENTS
    assert cfg.metrics == ('precision', 'recall', 'f1')
    assert cfg.baseline == 'toe'
    cfg.check()


@pytest.mark.parametrize('data, needle', [
    ({'mode': 'bagging'}, '/mode'),
    ({'models': [{'id': 'a b', 'path': 'x', 'kind': 'index_list'}]}, '/models/0/id'),
    ({'models': [{'id': 'a', 'path': 'x', 'kind': 'bio'}]}, '/models/0/kind'),
    ({'vote': {'threshold': 0}}, '/vote/threshold'),
    ({'evaluate': {'alpha': 0.01}}, '/evaluate/alpha'),
    ({'colour': 'red'}, '/'),
])
def test_schema_errors(data, needle):
    with pytest.raises(ConfigError, match='config schema check fail at ' + needle):
        config_from_dict(data)


def test_paths_resolve_against_config_dir(tmp_path):
    cfg = config_from_dict({'gold': 'g.txt', 'mock_script': 'script.json',
                            'models': [{'id': 'a', 'path': 'sub/a.jsonl', 'kind': 'index_list'}]},
                           tmp_path)
    assert cfg.gold == tmp_path.resolve() / 'g.txt'
    assert cfg.models[0].path == tmp_path.resolve() / 'sub' / 'a.jsonl'
    assert cfg.mock_script == str(tmp_path.resolve() / 'script.json')


def test_cross_field_checks():
    two = config_from_dict({'models': [{'id': 'a', 'path': 'a', 'kind': 'index_list'},
                                       {'id': 'a', 'path': 'b', 'kind': 'index_list'}]})
    with pytest.raises(ConfigError, match='duplicate'):
        two.check()
    with pytest.raises(ConfigError, match='needs a client'):
        RunConfig(mode='arbitrated').check()
    with pytest.raises(ConfigError, match='mock client'):
        RunConfig(mode='arbitrated', client='mock').check()
    one = config_from_dict({'models': [{'id': 'a', 'path': 'a', 'kind': 'index_list'}],
                            'vote': {'threshold': 2}})
    with pytest.raises(ConfigError, match='exceeds'):
        one.check()


def test_missing_inputs_and_bad_json(tmp_path):
    path = tmp_path / 'run.json'
    path.write_text(json.dumps({'gold': 'nope.txt'}), encoding='utf-8')
    with pytest.raises(ConfigError, match='Cannot find'):
        load_run_config(path)
    path.write_text('{"gold": ', encoding='utf-8')
    with pytest.raises(ConfigError, match='not JSON'):
        load_run_config(path)
    with pytest.raises(ConfigError):
        load_run_config(tmp_path / 'absent.json')


def test_overrides():
    cfg = apply_overrides(RunConfig(), mode='arbitrated', threshold=2, mock_script='union',
                          model_name='gpt-3.5-turbo', temperature=0.5, concurrency=None)
    assert cfg.mode == 'arbitrated'
    assert cfg.vote.threshold == 2
    assert cfg.client == 'mock' and cfg.mock_script == 'union'
    assert cfg.prompt.model_name == 'gpt-3.5-turbo' and cfg.prompt.temperature == 0.5
    assert cfg.prompt.concurrency == 4
    cfg.check()


def test_snapshot_has_no_secret(monkeypatch, sample_dir):
    monkeypatch.setenv(API_KEY_ENV, 'sk-secret-value')
    cfg = load_run_config(sample_dir / 'run.json')
    text = cfg.snapshot_text()
    assert 'sk-secret-value' not in text
    snap = json.loads(text)
    assert snap['prompt']['model_name'] == 'gpt-4'
    assert snap['models'][0] == {'id': 'transition',
                                 'path': str(sample_dir.resolve() / 'transition.jsonl'),
                                 'kind': 'transition'}


def test_make_client(monkeypatch):
    assert isinstance(make_client(RunConfig(client='mock', mock_script='majority')), MockClient)
    monkeypatch.setattr('dner_aid_tool.utils.run_config.load_dotenv', lambda: False)
    monkeypatch.delenv(API_KEY_ENV, raising=False)
    with pytest.raises(ConfigError, match=API_KEY_ENV):
        make_client(RunConfig(client='live'))
    monkeypatch.setenv(API_KEY_ENV, 'sk-test')
    assert isinstance(make_client(RunConfig(client='live', endpoint='http://localhost:1/v1')),
                      LiveClient)
    with pytest.raises(ConfigError):
        make_client(RunConfig())
