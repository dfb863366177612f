# SPDX-License-Identifier: GPL-2.0-only
#
# Copyright (C) 2026 dner-aid-tool contributors
#
import csv
import io
import json

import pytest

from dner_aid_tool import dner_ens
from dner_aid_tool.utils.uniform import read_uniform


def _run(*argv):
    return dner_ens.main([str(a) for a in argv])


def _csv_rows(path):
    with open(path, encoding='utf-8') as fp:
        return list(csv.DictReader(fp))


def _records(path):
    with open(path, encoding='utf-8') as fp:
        return read_uniform(fp)


@pytest.fixture
def run_json(sample_dir):
    return sample_dir / 'run.json'


@pytest.fixture
def normalized(tmp_path, run_json):
    assert _run('normalize', '--config', run_json, '--out', tmp_path) == 0
    return tmp_path


def test_normalize_writes_uniform_files(normalized, model_ids, manifest):
    names = {p.name for p in normalized.iterdir()}
    assert {'gold.uniform.jsonl', 'run-config.resolved'} <= names
    assert {f'{m}.uniform.jsonl' for m in model_ids} <= names
    assert not [n for n in names if n.endswith('.tmp')]
    gold = _records(normalized / 'gold.uniform.jsonl')
    assert sum(len(r.entity_list) for r in gold) == manifest['gold']['entities']
    toe = _records(normalized / 'toe.uniform.jsonl')
    assert sum(len(r.entity_list) for r in toe) == manifest['models']['toe']['entities']
    snap = json.loads((normalized / 'run-config.resolved').read_text(encoding='utf-8'))
    assert snap['out'] == str(normalized.resolve())


def test_ensemble_and_evaluate(normalized, run_json, capsys):
    assert _run('ensemble', '--config', run_json, '--out', normalized) == 0
    voting = _records(normalized / 'fused.voting.jsonl')
    arbitrated = _records(normalized / 'fused.arbitrated.jsonl')
    assert voting == arbitrated
    transcript = [json.loads(l) for l in
                  (normalized / 'transcript.jsonl').read_text(encoding='utf-8').splitlines()]
    assert [t['record_id'] for t in transcript] == [r.record_id for r in voting]
    assert {t['source'] for t in transcript} == {'arbitrated'}
    assert 'voting' in capsys.readouterr().out

    assert _run('evaluate', '--config', run_json, '--out', normalized, '--discontinuous') == 0
    rows = {(r['system'], r['dataset']): r for r in _csv_rows(normalized / 'metrics.csv')}
    assert (rows[('voting', 'gold')]['precision'], rows[('voting', 'gold')]['f1']) == \
        ('90.00', '90.00')
    assert rows[('w2ner', 'gold')]['f1'] == '94.74'
    assert rows[('w2ner', 'gold')]['f1_mark'] == 'best'
    assert rows[('arbitrated', 'gold')]['f1'] == '90.00'
    assert rows[('voting', 'gold-disc')]['recall'] == '66.67'
    ranks = _csv_rows(normalized / 'ranks.csv')
    assert len(ranks) == 7
    assert 'gold/f1' in ranks[0] and 'gold-disc/precision' in ranks[0]
    impr = _csv_rows(normalized / 'improvements.csv')
    voting_row = next(r for r in impr if r['system'] == 'voting' and r['dataset'] == 'gold')
    assert voting_row['relative_improvement'] == '12.50'
    out = capsys.readouterr().out
    assert '--- [Metrics]' in out and 'Relative F1 improvement over toe' in out


def test_garbage_arbiter_falls_back(normalized, run_json, sample_dir):
    assert _run('ensemble', '--config', run_json, '--out', normalized,
                '--mode', 'arbitrated', '--mock-script', sample_dir / 'mock_garbage.json') == 0
    assert not (normalized / 'fused.voting.jsonl').exists()
    lines = (normalized / 'transcript.jsonl').read_text(encoding='utf-8').splitlines()
    assert all(json.loads(l)['source'] == 'fallback_voting' for l in lines)
    assert _run('ensemble', '--config', run_json, '--out', normalized, '--mode', 'voting') == 0
    assert _records(normalized / 'fused.arbitrated.jsonl') == \
        _records(normalized / 'fused.voting.jsonl')


def test_threshold_override(normalized, run_json):
    assert _run('ensemble', '--config', run_json, '--out', normalized,
                '--mode', 'voting', '--threshold', '5') == 0
    voting = _records(normalized / 'fused.voting.jsonl')
    assert sum(len(r.entity_list) for r in voting) == 3


def test_ensemble_needs_normalize(tmp_path, run_json):
    assert _run('ensemble', '--config', run_json, '--out', tmp_path) == 1
    assert list(tmp_path.iterdir()) == []


def test_bad_model_file_leaves_no_output(tmp_path, sample_dir):
    bad = tmp_path / 'bad.jsonl'
    bad.write_text('{"record_id": "post1:0", "entities": [{"index": [5, 3]}]}\n',
                   encoding='utf-8')
    out = tmp_path / 'out'
    assert _run('normalize', '--gold', sample_dir / 'gold.txt',
                '--model', f'w2ner:index_list:{sample_dir / "w2ner.jsonl"}',
                '--model', f'bad:index_list:{bad}', '--out', out) == 1
    assert list(out.iterdir()) == []


def test_flags_without_config(tmp_path, sample_dir):
    assert _run('normalize', '--gold', sample_dir / 'gold.txt',
                '--model', f'toe:index_list_tagged:{sample_dir / "toe.jsonl"}',
                '--model', f'w2ner:index_list:{sample_dir / "w2ner.jsonl"}',
                '--out', tmp_path) == 0
    assert _run('ensemble', '--gold', sample_dir / 'gold.txt',
                '--model', f'toe:index_list_tagged:{sample_dir / "toe.jsonl"}',
                '--model', f'w2ner:index_list:{sample_dir / "w2ner.jsonl"}',
                '--mode', 'arbitrated', '--mock-script', 'union', '--out', tmp_path) == 0
    assert (tmp_path / 'fused.arbitrated.jsonl').exists()


def test_missing_gold_file(tmp_path):
    assert _run('normalize', '--gold', tmp_path / 'nope.txt', '--out', tmp_path / 'o') == 1


def test_stats(sample_dir, tmp_path, capsys):
    assert _run('stats', sample_dir / 'gold.txt', '--out', tmp_path) == 0
    out = capsys.readouterr().out
    row = next(l for l in out.splitlines() if l.startswith('| gold'))
    assert [c.strip() for c in row.strip('|').split('|')] == [
        'gold', '2', '7', '50', '10', '3', '30.00', 'ADE:10']
    rows = _csv_rows(tmp_path / 'stats.csv')
    assert rows[0]['Disc.%'] == '30.00'
    snap = json.loads((tmp_path / 'run-config.resolved').read_text(encoding='utf-8'))
    assert snap['stats']['gold_files'] == [str((sample_dir / 'gold.txt').resolve())]
    assert snap['out'] == str(tmp_path.resolve())


def test_report_reference(tmp_path, capsys):
    assert _run('report', '--reference', '--baseline', 'toe', '--out', tmp_path) == 0
    out = capsys.readouterr().out
    assert '26 of 27 rows consistent, flagged: span/ShARe14' in out
    assert 'DEVIATES' in out
    for name in ('metrics.csv', 'metrics.txt', 'ranks.csv', 'improvements.csv',
                 'f1_check.csv', 'run-config.resolved'):
        assert (tmp_path / name).exists()
    checks = (tmp_path / 'f1_check.csv').read_text(encoding='utf-8').splitlines()
    assert 'span,ShARe14,81.17,81.66,inconsistent' in checks
    snap = json.loads((tmp_path / 'run-config.resolved').read_text(encoding='utf-8'))
    assert snap['report'] == {'input': 'reference', 'rows': 27}
    assert snap['evaluate']['baseline'] == 'toe'


def test_report_values_only_input(tmp_path, capsys):
    table = tmp_path / 'scores.csv'
    table.write_text('system,dataset,precision,recall\n'
                     'a,x,62.43,79.90\nb,x,80,70\na,y,70,70\nb,y,60,60\n', encoding='utf-8')
    assert _run('report', '--input', table) == 0
    out = capsys.readouterr().out
    assert '4 of 4 rows consistent' in out
    assert '70.09' in out
    assert list(tmp_path.iterdir()) == [table]

    table.write_text('system,dataset,precision\n', encoding='utf-8')
    assert _run('report', '--input', table) == 1
    table.write_text('system,dataset,precision,recall\na,x,high,1\n', encoding='utf-8')
    assert _run('report', '--input', table) == 1


def test_usage_errors(capsys):
    with pytest.raises(SystemExit) as ei:
        _run('ensemble', '--mode', 'stacking')
    assert ei.value.code == 2
    with pytest.raises(SystemExit) as ei:
        _run('report')
    assert ei.value.code == 2
    with pytest.raises(SystemExit) as ei:
        _run('normalize', '--model', 'just-a-path')
    assert ei.value.code == 2
    with pytest.raises(SystemExit) as ei:
        _run('-version')
    assert ei.value.code == 0


def test_report_input_writes_snapshot(tmp_path):
    table = tmp_path / 'scores.csv'
    table.write_text('system,dataset,precision,recall\na,x,80,80\nb,x,70,70\n',
                     encoding='utf-8')
    out = tmp_path / 'rep'
    assert _run('report', '--input', table, '--out', out) == 0
    snap = json.loads((out / 'run-config.resolved').read_text(encoding='utf-8'))
    assert snap['report'] == {'input': str(table.resolve()), 'rows': 2}


def test_explicit_gold_wins_over_normalized(normalized, tmp_path):
    other = tmp_path / 'other.txt'
    other.write_text('Mild rash today .\n1,1 ADE\n', encoding='utf-8')
    system = tmp_path / 'sys.jsonl'
    system.write_text(json.dumps({'text': 'Mild rash today .',
                                  'sentence': ['Mild', 'rash', 'today', '.'],
                                  'entity_list': [{'text': 'rash', 'index': [1],
                                                   'label': 'ADE'}],
                                  'record_id': 'other:0'}) + '\n', encoding='utf-8')
    assert _run('evaluate', '--gold', other, '--system', f's={system}',
                '--out', normalized) == 0
    rows = _csv_rows(normalized / 'metrics.csv')
    assert [(r['system'], r['dataset'], r['f1']) for r in rows] == [('s', 'other', '100.00')]


def _pipeline_outputs(out, run_json):
    assert _run('normalize', '--config', run_json, '--out', out) == 0
    assert _run('ensemble', '--config', run_json, '--out', out) == 0
    assert _run('evaluate', '--config', run_json, '--out', out, '--discontinuous') == 0
    files = {}
    for path in sorted(out.iterdir()):
        text = path.read_text(encoding='utf-8').replace(str(out.resolve()), '<out>')
        if path.name == 'transcript.jsonl':
            lines = [json.loads(l) for l in text.splitlines()]
            for line in lines:
                line.pop('latency_s')
            text = lines
        files[path.name] = text
    return files


def test_pipeline_is_deterministic(tmp_path, run_json):
    first = _pipeline_outputs(tmp_path / 'a', run_json)
    second = _pipeline_outputs(tmp_path / 'b', run_json)
    assert {'fused.voting.jsonl', 'fused.arbitrated.jsonl', 'metrics.csv'} <= set(first)
    assert first == second
