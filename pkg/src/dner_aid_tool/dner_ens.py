#!/usr/bin/env python3
# -*- coding: utf-8 -*-
# SPDX-License-Identifier: GPL-2.0-only
#
# Discontinuous NER Ensemble Tool
#
# Copyright (C) 2026 dner-aid-tool contributors
#
import argparse
import csv
import logging
import sys
from dataclasses import replace
from decimal import Decimal, InvalidOperation
from pathlib import Path

from . import __version__
from .utils.arbiter import OutcomeSource, arbitrate_corpus, transcript_line
from .utils.common import (AtomicOutputs, DnerError, InputError, open_text,
                           setup_logging)
from .utils.corpus_parser import gold_records, load_gold
from .utils.entity import PredictionSet, UniformRecord
from .utils.metrics import (MetricsReport, check_f1_consistency, corpus_stats,
                            evaluate_corpus, f1_from_pr, metrics_report, rank_report,
                            relative_improvement, score_table)
from .utils.pred_parser import ModelFormatKind, load_predictions, normalize_predictions
from .utils.reference import reference_metrics, reproduce_improvements
from .utils.report import render_f1_checks, render_report
from .utils.run_config import (RESOLVED_NAME, ModelInput, RunConfig, SystemInput,
                               apply_overrides, load_run_config, make_client)
from .utils.uniform import read_uniform, write_uniform
from .utils.voting import vote_corpus

logger = logging.getLogger(__name__)

GOLD_UNIFORM = 'gold.uniform.jsonl'
FUSED_VOTING = 'fused.voting.jsonl'
FUSED_ARBITRATED = 'fused.arbitrated.jsonl'
TRANSCRIPT = 'transcript.jsonl'


##############################################################################
### Procedure


def _read_uniform_file(path, default_label: str) -> list[UniformRecord]:
    path = Path(path)
    with open_text(path) as fp:
        return read_uniform(fp, default_label, source=path)


def _gold_uniform(cfg: RunConfig) -> list[UniformRecord]:
    """The configured gold file, else the normalized gold of the output directory."""
    if cfg.gold is not None:
        return gold_records(load_gold(cfg.gold, cfg.default_label))
    path = cfg.out / GOLD_UNIFORM
    if not path.exists():
        raise InputError(f'no gold given and {path} does not exist.')
    return _read_uniform_file(path, cfg.default_label)


def _summary(name: str, records: list[UniformRecord]) -> str:
    ents = [e for r in records for e in r.to_entities()]
    disc = sum(e.is_discontinuous for e in ents)
    return f'{name:<16s} records {len(records):>6d}  entities {len(ents):>6d}  discontinuous {disc:>5d}'


def cmd_normalize(cfg: RunConfig) -> list[str]:
    """Write the gold and every model's predictions as uniform records."""
    if cfg.gold is None:
        raise InputError('normalize needs a gold file.')
    gold = gold_records(load_gold(cfg.gold, cfg.default_label))
    refs = {r.record_id: r for r in gold}
    sentences = {rid: r.to_sentence() for rid, r in refs.items()}

    lines = [_summary('gold', gold)]
    with AtomicOutputs(cfg.out) as outs:
        outs.write_text(GOLD_UNIFORM, write_uniform(gold))
        for model in cfg.models:
            psets = load_predictions(model.path, model.kind, model_id=model.id,
                                     sentences=sentences, graph_mode=cfg.graph_mode,
                                     default_label=cfg.default_label)
            records = normalize_predictions(psets, refs)
            outs.write_text(f'{model.id}.uniform.jsonl', write_uniform(records))
            lines.append(_summary(model.id, records))
        outs.write_text(RESOLVED_NAME, cfg.snapshot_text())
    return lines


def cmd_ensemble(cfg: RunConfig) -> list[str]:
    """Fuse the normalized model outputs by voting and/or arbitration."""
    if not cfg.models:
        raise InputError('ensemble needs at least one model.')
    client = make_client(cfg) if cfg.mode != 'voting' else None

    refs = [r.without_entities() for r in _gold_uniform(cfg)]
    rids = [r.record_id for r in refs]
    by_id = {r.record_id: r for r in refs}
    preds = {}
    for mid in cfg.model_ids:
        path = cfg.out / f'{mid}.uniform.jsonl'
        if not path.exists():
            raise InputError(f'{path} does not exist, run normalize first.')
        preds[mid] = {r.record_id: PredictionSet(mid, r.record_id, r.to_entities())
                      for r in _read_uniform_file(path, cfg.default_label)}
        if extra := sorted(set(preds[mid]) - set(by_id)):
            raise InputError(f'model {mid} has records not in gold: {", ".join(extra)}.')

    lines = []
    with AtomicOutputs(cfg.out) as outs:
        if cfg.mode in ('voting', 'both'):
            fused = vote_corpus(rids, preds, cfg.model_ids, cfg.vote)
            records = [UniformRecord.from_entities(rid, by_id[rid].to_sentence(), fused[rid])
                       for rid in rids]
            outs.write_text(FUSED_VOTING, write_uniform(records))
            lines.append(_summary('voting', records))

        if cfg.mode in ('arbitrated', 'both'):
            outcomes = arbitrate_corpus(refs, preds, cfg.model_ids, cfg.vote, cfg.prompt,
                                        client, cfg.strict_union)
            records = [UniformRecord.from_entities(o.record_id,
                                                   by_id[o.record_id].to_sentence(),
                                                   o.entities) for o in outcomes]
            outs.write_text(FUSED_ARBITRATED, write_uniform(records))
            outs.write_text(TRANSCRIPT, ''.join(transcript_line(o) + '\n' for o in outcomes))
            n_fb = sum(o.source == OutcomeSource.FALLBACK for o in outcomes)
            lines.append(_summary('arbitrated', records) + f'  fallback {n_fb:>5d}')
        outs.write_text(RESOLVED_NAME, cfg.snapshot_text())
    return lines


def _default_systems(cfg: RunConfig) -> tuple[SystemInput, ...]:
    systems = [SystemInput(mid, cfg.out / f'{mid}.uniform.jsonl') for mid in cfg.model_ids]
    systems += [SystemInput('voting', cfg.out / FUSED_VOTING),
                SystemInput('arbitrated', cfg.out / FUSED_ARBITRATED)]
    return tuple(s for s in systems if s.path.exists())


def _improvement_rows(metrics: list[MetricsReport], baseline: str) -> list[list[str]]:
    base = {m.dataset: m for m in metrics if m.system == baseline}
    if not base:
        raise InputError(f'baseline system {baseline!r} not found.')
    rows = [['system', 'dataset', 'baseline', 'f1', 'baseline_f1', 'relative_improvement']]
    for m in metrics:
        if m.system == baseline or m.dataset not in base:
            continue
        b = base[m.dataset]
        rows.append([m.system, m.dataset, baseline, f'{m.f1:.2f}', f'{b.f1:.2f}',
                     f'{relative_improvement(m.f1, b.f1):.2f}'])
    return rows


def _build_reports(metrics: list[MetricsReport], systems: list[str], metric_names,
                   baseline: str, alpha: float) -> tuple[dict[str, str], list[str]]:
    """Report files by name and the lines printed on stdout."""
    blocks, table = score_table(metrics, systems, metric_names)
    ranks = None
    if len(systems) >= 2 and len(blocks) >= 2:
        ranks = rank_report(systems, table, blocks, alpha)
    art = render_report(metrics, ranks)
    files = {'metrics.csv': art.metrics_csv, 'metrics.txt': art.text}
    if ranks is not None:
        files['ranks.csv'] = art.ranks_csv
    lines = art.text.rstrip('\n').split('\n')
    if baseline is not None:
        rows = _improvement_rows(metrics, baseline)
        files['improvements.csv'] = ''.join(','.join(r) + '\n' for r in rows)
        lines.append('')
        lines.append(f'--- [Relative F1 improvement over {baseline}]')
        lines.extend(f'{r[0]:<16s} {r[1]:<12s} {r[5]:>7s}%' for r in rows[1:])
    return files, lines


def cmd_evaluate(cfg: RunConfig, dataset: str=None, discontinuous: bool=False) -> list[str]:
    """Score every system against the gold; ranks when the table allows it."""
    gold = {r.record_id: r.to_entities() for r in _gold_uniform(cfg)}
    systems = cfg.systems or _default_systems(cfg)
    if not systems:
        raise InputError('no system to evaluate.')
    if dataset is None:
        dataset = cfg.gold.name.split('.')[0] if cfg.gold is not None else 'dataset'

    metrics = []
    for sys_in in systems:
        if not sys_in.path.exists():
            raise InputError(f'Cannot find the file ({sys_in.path}).')
        pred = {r.record_id: r.to_entities()
                for r in _read_uniform_file(sys_in.path, cfg.default_label)}
        counts = evaluate_corpus(gold, pred)
        metrics.append(metrics_report(sys_in.id, dataset, counts))
        if discontinuous:
            metrics.append(metrics_report(sys_in.id, f'{dataset}-disc', counts.discontinuous()))
        logger.info('%s: tp %d fp %d fn %d', sys_in.id, counts.tp, counts.fp, counts.fn)

    files, lines = _build_reports(metrics, [s.id for s in systems], cfg.metrics,
                                  cfg.baseline, cfg.alpha)
    with AtomicOutputs(cfg.out) as outs:
        for name, content in files.items():
            outs.write_text(name, content)
        outs.write_text(RESOLVED_NAME, replace(cfg, systems=tuple(systems)).snapshot_text())
    return lines


def cmd_stats(gold_paths: list[Path], default_label: str, out: Path=None,
              cfg: RunConfig=None) -> list[str]:
    title = ['Dataset', 'Documents', 'Sentences', 'Tokens', 'Entities', 'Disc.E', 'Disc.%', 'Labels']
    rows = []
    for path in gold_paths:
        st = corpus_stats(load_gold(path, default_label))
        labels = ';'.join(f'{k}:{v}' for k, v in st.labels.items())
        rows.append([path.name.split('.')[0], str(st.documents), str(st.sentences),
                     str(st.tokens), str(st.entities), str(st.discontinuous),
                     f'{st.disc_fraction:.2f}', labels])
    if out is not None:
        with AtomicOutputs(out) as outs:
            outs.write_text('stats.csv', ''.join(','.join(r) + '\n' for r in [title] + rows))
            cfg = replace(cfg or RunConfig(), default_label=default_label, out=out.resolve())
            outs.write_text(RESOLVED_NAME, cfg.snapshot_text(
                stats={'gold_files': [str(p.resolve()) for p in gold_paths]}))

    col_len = [max(len(r[i]) for r in [title] + rows) for i in range(len(title))]
    div = '+' + ''.join('-{}-+'.format('-' * x) for x in col_len)
    fs = '|' + ''.join(' {{:{}s}} |'.format(x) for x in col_len)
    return [div, fs.format(*title), div, *(fs.format(*r) for r in rows), div]


def load_metric_rows(path) -> list[MetricsReport]:
    """Values-only input: CSV with system,dataset,precision,recall[,f1]."""
    path = Path(path)
    rows = []
    with open_text(path) as fp:
        reader = csv.DictReader(fp)
        need = {'system', 'dataset', 'precision', 'recall'}
        if reader.fieldnames is None or not need <= set(reader.fieldnames):
            raise InputError(f'{path}: header needs {sorted(need)}.')
        for no, row in enumerate(reader, start=2):
            try:
                p, r = Decimal(row['precision']), Decimal(row['recall'])
                f1 = Decimal(row['f1']) if row.get('f1') else f1_from_pr(p, r)
            except InvalidOperation:
                raise InputError(f'{path}: bad number (ln:{no})') from None
            rows.append(MetricsReport(row['system'], row['dataset'], p, r, f1))
    return rows


def cmd_report(metrics: list[MetricsReport], out: Path=None, baseline: str=None,
               alpha: float=0.05, metric_names=('precision', 'recall', 'f1'),
               reference: bool=False, cfg: RunConfig=None, source: Path=None) -> list[str]:
    checks = check_f1_consistency(metrics)
    lines = render_f1_checks(checks)
    bad = [c for c in checks if not c.ok]
    lines.append(f'{len(checks) - len(bad)} of {len(checks)} rows consistent'
                 + (f', flagged: {", ".join(f"{c.system}/{c.dataset}" for c in bad)}' if bad else ''))

    if reference:
        lines.append('')
        lines.append('--- [Published relative improvements]')
        for chk in reproduce_improvements():
            lines.append(f'vs {chk.versus:<7s} {chk.dataset:<8s} published {chk.published:>5}  '
                         f'computed {chk.computed:>5}  {"ok" if chk.ok else "DEVIATES"}')

    systems = list(dict.fromkeys(m.system for m in metrics))
    files, rep_lines = _build_reports(metrics, systems, metric_names, baseline, alpha)
    lines += [''] + rep_lines
    files['f1_check.csv'] = ''.join(
        f'{c.system},{c.dataset},{c.printed:.2f},{c.computed:.2f},{"ok" if c.ok else "inconsistent"}\n'
        for c in checks)
    if out is not None:
        cfg = replace(cfg or RunConfig(), out=out.resolve(), baseline=baseline, alpha=alpha,
                      metrics=tuple(metric_names))
        files[RESOLVED_NAME] = cfg.snapshot_text(report={
            'input': 'reference' if reference or source is None else str(Path(source).resolve()),
            'rows': len(metrics)})
        with AtomicOutputs(out) as outs:
            for name, content in files.items():
                outs.write_text(name, content)
    return lines


##############################################################################
### Main


def _parse_model(text: str) -> ModelInput:
    try:
        mid, kind, path = text.split(':', 2)
        return ModelInput(mid, Path(path).resolve(), ModelFormatKind(kind))
    except ValueError:
        raise argparse.ArgumentTypeError(f'expected ID:KIND:PATH, got {text!r}') from None


def _parse_system(text: str) -> SystemInput:
    sid, sep, path = text.partition('=')
    if not sep or not sid or not path:
        raise argparse.ArgumentTypeError(f'expected ID=PATH, got {text!r}')
    return SystemInput(sid, Path(path).resolve())


def create_argparse() -> argparse.ArgumentParser:
    """Create an argument parser."""
    parser = argparse.ArgumentParser(
                formatter_class=argparse.RawTextHelpFormatter,
                description='Discontinuous NER Ensemble Tool')
    parser.add_argument('-version', '--version', action='version',
                        version=f'%(prog)s {__version__}')

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument('--config', '-config', dest='config', metavar='<json_file>',
                        help='Run configuration.')
    common.add_argument('--out', '-out', dest='out', metavar='<directory>',
                        help='Output directory.')
    common.add_argument('--verbose', '-verbose', dest='is_verb', action='store_true',
                        help='Print process message.')
    common.add_argument('--debug', '-debug', dest='is_dbg', action='store_true',
                        help='Print debug message.')

    inputs = argparse.ArgumentParser(add_help=False)
    inputs.add_argument('--gold', dest='gold', metavar='<file>',
                        help='Gold annotation file.')
    inputs.add_argument('--model', dest='models', metavar='<id:kind:path>', action='append',
                        type=_parse_model, help='Model prediction file (repeatable).')
    inputs.add_argument('--label', dest='default_label', metavar='<label>',
                        help='Label of unlabelled entities.')

    subparsers = parser.add_subparsers(dest='command', required=True)

    subparsers.add_parser('normalize', parents=[common, inputs],
                          help='Write gold and predictions as uniform records.')

    ens = subparsers.add_parser('ensemble', parents=[common, inputs],
                                help='Fuse normalized predictions.')
    ens.add_argument('--mode', dest='mode', choices=['voting', 'arbitrated', 'both'])
    ens.add_argument('--threshold', dest='threshold', type=int, metavar='<int>',
                     help='Minimum number of supporting models.')
    ens.add_argument('--strict-union', dest='strict_union', action='store_const', const=True,
                     help='Reject arbitrated entities no model proposed.')
    ens.add_argument('--client', dest='client', choices=['mock', 'live'])
    ens.add_argument('--mock-script', dest='mock_script', metavar='<file|policy>',
                     help='Mock script file or one of: majority, union, echo_first.')
    ens.add_argument('--endpoint', dest='endpoint', metavar='<url>')
    ens.add_argument('--model-name', dest='model_name', metavar='<name>')
    ens.add_argument('--temperature', dest='temperature', type=float, metavar='<float>')
    ens.add_argument('--concurrency', dest='concurrency', type=int, metavar='<int>')

    ev = subparsers.add_parser('evaluate', parents=[common, inputs],
                               help='Score systems against the gold.')
    ev.add_argument('--system', dest='systems', metavar='<id=path>', action='append',
                    type=_parse_system, help='Uniform prediction file (repeatable).')
    ev.add_argument('--baseline', dest='baseline', metavar='<system>')
    ev.add_argument('--dataset', dest='dataset', metavar='<name>')
    ev.add_argument('--discontinuous', dest='discontinuous', action='store_true',
                    help='Add discontinuous-only rows.')
    ev.add_argument('--metrics', dest='metric_names', nargs='+',
                    choices=['precision', 'recall', 'f1'],
                    help='Metrics forming the rank blocks (default: f1).')

    st = subparsers.add_parser('stats', parents=[common],
                               help='Corpus statistics of gold files.')
    st.add_argument('gold_files', nargs='*', metavar='<gold_file>')
    st.add_argument('--label', dest='default_label', metavar='<label>')

    rp = subparsers.add_parser('report', parents=[common],
                               help='Values-only report over printed P/R(/F1).')
    src = rp.add_mutually_exclusive_group(required=True)
    src.add_argument('--input', dest='input', metavar='<csv_file>',
                     help='CSV with system,dataset,precision,recall[,f1].')
    src.add_argument('--reference', dest='reference', action='store_true',
                     help='Use the embedded published benchmark table.')
    rp.add_argument('--baseline', dest='baseline', metavar='<system>')
    rp.add_argument('--alpha', dest='alpha', type=float, choices=[0.05, 0.1], default=0.05)

    return parser


def _run_config(args) -> RunConfig:
    cfg = load_run_config(args.config) if args.config else RunConfig()
    top = {}
    if getattr(args, 'gold', None):
        top['gold'] = Path(args.gold).resolve()
    if getattr(args, 'models', None):
        top['models'] = tuple(args.models)
    if getattr(args, 'default_label', None):
        top['default_label'] = args.default_label
        top['prompt'] = replace(cfg.prompt, default_label=args.default_label)
    if getattr(args, 'systems', None):
        top['systems'] = tuple(args.systems)
    if getattr(args, 'baseline', None):
        top['baseline'] = args.baseline
    if getattr(args, 'metric_names', None):
        top['metrics'] = tuple(args.metric_names)
    cfg = replace(cfg, **top)
    cfg = apply_overrides(cfg, out=args.out,
                          **{k: getattr(args, k, None) for k in (
                             'mode', 'threshold', 'strict_union', 'client', 'mock_script',
                             'endpoint', 'model_name', 'temperature', 'concurrency')})
    return cfg.check()


def main(argv: list[str]=None) -> int:
    """Main function."""
    parser = create_argparse()
    args = parser.parse_args(argv)
    setup_logging(args.is_verb, args.is_dbg)

    try:
        if args.command in ('stats', 'report'):
            cfg = load_run_config(args.config) if args.config else RunConfig()
        if args.command == 'stats':
            paths = [Path(p) for p in args.gold_files] or ([cfg.gold] if cfg.gold else [])
            if not paths:
                raise InputError('stats needs at least one gold file.')
            out = Path(args.out) if args.out else None
            lines = cmd_stats(paths, args.default_label or cfg.default_label, out, cfg)
        elif args.command == 'report':
            metrics = reference_metrics() if args.reference else load_metric_rows(args.input)
            out = Path(args.out) if args.out else None
            lines = cmd_report(metrics, out, args.baseline, args.alpha,
                               reference=args.reference, cfg=cfg, source=args.input)
        else:
            cfg = _run_config(args)
            if args.command == 'normalize':
                lines = cmd_normalize(cfg)
            elif args.command == 'ensemble':
                lines = cmd_ensemble(cfg)
            else:
                lines = cmd_evaluate(cfg, args.dataset, args.discontinuous)
    except (DnerError, OSError) as e:
        logger.error('%s', e)
        return 1

    for line in lines:
        print(line)
    return 0


if __name__ == '__main__':
    sys.exit(main())
