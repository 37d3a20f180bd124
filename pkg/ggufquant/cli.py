# @Author: ggufquant
# @Date:   2026-10-19
# @Filename: cli.py
"""Command-line entry point: ``ggufquant <subcommand> ...``.

Results go to stdout (human readable, or JSON with ``--json``); banners,
progress bars, warnings and errors go to stderr. Exit codes: 0 success,
2 usage error, 3 input error, 4 internal error.
"""

import argparse
import collections
import json
import sys
import warnings

import numpy as np

from . import config_file
from .analysis import (OBJECTIVES, SHIPPED_RESULTS, SCENARIOS, load_results,
                       pareto_points, recommend, recommend_scenario)
from .bench import MIN_REPEATS, MODES, ThroughputBench, tiny_model_perplexity
from .block_codecs import layout_doc, layout_table
from .config_file import get_values_from_config_file, read_mix_rules
from .exceptions import GGUFQuantError, InputError, SchemeError
from .gguf_io import (metadata_as_plain, model_summary, read_gguf, tensor_checksums,
                      tensor_table, write_gguf)
from .parallel_processing import default_num_threads
from .plotting import emit_report, table_to_text
from .quantize import FLOAT_FILE_TYPES, GGUFQuantize, convert, dequantize_model
from .schemes import LLAMA_INVENTORY, SCHEMES, get_scheme, load_inventory, scheme_summary
from .utils.output import format_value, format_warning, say

warnings.showwarning = format_warning

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_INPUT = 3
EXIT_INTERNAL = 4


def scheme_id(text):
    try:
        return get_scheme(text).id
    except SchemeError:
        raise argparse.ArgumentTypeError(
            "unknown scheme '{}'; valid ids: {}".format(text, ', '.join(SCHEMES)))


def positive_int(text):
    try:
        value = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError("'{}' is not an integer".format(text))
    if value < 1:
        raise argparse.ArgumentTypeError('has to be at least 1, got {}'.format(value))
    return value


def bench_repeats(text):
    value = positive_int(text)
    if value < MIN_REPEATS:
        raise argparse.ArgumentTypeError('has to be at least {}, got {}'.format(
            MIN_REPEATS, value))
    return value


def _jsonable(value):
    if isinstance(value, np.generic):
        return value.item()
    if isinstance(value, np.ndarray):
        return value.tolist()
    raise TypeError('{!r} is not JSON serializable'.format(value))


def _print_json(obj):
    print(json.dumps(obj, indent=2, default=_jsonable))


def _settings(args, config_key, **defaults):
    """Defaults, overridden by the config file section, overridden by flags."""
    settings = argparse.Namespace(**defaults)
    if args.config:
        get_values_from_config_file(settings, args.config, config_key=config_key)
    _override(settings, args, {key: key for key in defaults})
    return settings


def _override(target, args, mapping):
    for attribute, flag in mapping.items():
        value = getattr(args, flag, None)
        if value is not None:
            setattr(target, attribute, value)


def _verbose(args, default=True):
    return default if args.verbose is None else args.verbose


# ---- subcommands -------------------------------------------------------------

def run_quantize(args):
    job = GGUFQuantize(args.input, args.output, args.scheme,
                       config_file=args.config or '')
    _override(job, args, {'mix_rules': 'mix_rules', 'n_layers': 'n_layers',
                          'use_ncpus': 'threads', 'verbose': 'verbose'})
    summary = job.quantize()
    if args.json:
        _print_json(summary)
    else:
        print('{}: size {:.2f} MiB, reduction {:.2f}%, {:.2f} s'.format(
            summary['scheme'], summary['size_mib'], summary['reduction'],
            summary['seconds']))


def run_dequantize(args):
    model = read_gguf(args.input)
    n_bytes = write_gguf(dequantize_model(model, dtype=args.dtype), args.output)
    say("wrote '{}'".format(args.output), verbose=_verbose(args))
    if args.json:
        _print_json({'output': args.output, 'dtype': args.dtype, 'file_bytes': n_bytes})
    else:
        print('{}: {} bytes'.format(args.output, n_bytes))


def run_inspect(args):
    model = read_gguf(args.input)
    summary = model_summary(model)
    table = tensor_table(model)
    checksums = tensor_checksums(model) if args.checksums else None
    if args.json:
        tensors = []
        for row in table:
            record = collections.OrderedDict(
                (name, row[name].item() if hasattr(row[name], 'item') else row[name])
                for name in table.colnames)
            if checksums is not None:
                record['sha256'] = checksums[record['name']]
            tensors.append(record)
        _print_json(collections.OrderedDict([
            ('file', args.input), ('summary', summary),
            ('metadata', metadata_as_plain(model)), ('tensors', tensors)]))
        return

    print('file: {}'.format(args.input))
    print('GGUF version {}, {} metadata keys, {} tensors'.format(
        summary['version'], summary['n_metadata'], summary['n_tensors']))
    for key, item in metadata_as_plain(model).items():
        value = item['value']
        if isinstance(value, list) and len(value) > 8:
            value = '[{} items]'.format(len(value))
        print('  {} ({}) = {}'.format(key, item['type'], value))
    table['bpw'].format = '.4f'
    if checksums is not None:
        table['sha256'] = [checksums[name] for name in table['name']]
    print(table_to_text(table), end='')
    print('tensor data {:.2f} MiB, file {:.2f} MiB, {:.4f} bits per weight'.format(
        summary['data_mib'], summary['file_mib'], summary['bpw']))
    print('formats: {}'.format(', '.join(
        '{} x{}'.format(name, count) for name, count in summary['formats'].items())))


def run_bench(args):
    job = ThroughputBench(scheme=args.scheme or 'F16', path_to_file=args.model,
                          config_file=args.config or '')
    _override(job, args, {
        'n_prompt': 'pp', 'n_gen': 'tg', 'repeats': 'repeats', 'warmup': 'warmup',
        'use_ncpus': 'threads', 'mix_rules': 'mix_rules', 'n_layers': 'n_layers',
        'hidden': 'hidden', 'ffn': 'ffn', 'kv': 'kv', 'vocab': 'vocab',
        'random_seed': 'seed', 'verbose': 'verbose'})
    if args.scheme is not None:
        job.scheme = args.scheme
    if args.mode is not None:
        job.modes = MODES if args.mode == 'both' else (args.mode,)
    results = job.bench()
    if args.json:
        _print_json([result.to_dict() for result in results])
        return
    for result in results:
        if result.aborted:
            print('{} {}: aborted ({})'.format(result.scheme_id, result.test, result.error))
        else:
            print('{} {}: {:.2f} ± {:.2f} tokens/s ({} repeats, {} threads)'.format(
                result.scheme_id, result.test, result.tokens_per_second, result.std,
                result.repeats, result.n_threads))


def _recommendation(args, rows, settings):
    constraints = dict(max_size_mib=settings.max_size_mib, min_avg=settings.min_avg,
                       max_ppl=settings.max_ppl, min_reduction=settings.min_reduction)
    if args.scenario is not None:
        return recommend_scenario(rows, args.scenario, baseline=settings.baseline)
    if settings.objective is None and all(value is None for value in constraints.values()):
        return None
    return recommend(rows, objective=settings.objective, baseline=settings.baseline,
                     **constraints)


def run_analyze(args):
    settings = _settings(args, 'analyze', baseline='F16', objective=None,
                         max_size_mib=None, min_avg=None, max_ppl=None,
                         min_reduction=None, results=SHIPPED_RESULTS)
    rows = load_results(settings.results, strict=args.strict)
    points = pareto_points(rows, settings.baseline)
    frontier = sorted((point for point in points if point.on_frontier),
                      key=lambda point: (point.reduction, point.scheme_id))
    recommendation = _recommendation(args, rows, settings)

    if args.json:
        output = collections.OrderedDict([
            ('baseline', settings.baseline),
            ('points', [point._asdict() for point in points]),
            ('frontier', [point.scheme_id for point in frontier]),
        ])
        if recommendation is not None:
            output['recommendation'] = collections.OrderedDict([
                ('objective', recommendation.objective),
                ('ranking', recommendation.ranking),
                ('rejected', recommendation.rejected),
                ('report', recommendation.report),
            ])
        _print_json(output)
        return

    print('{:<8} {:>10} {:>12}  {}'.format('scheme', 'red. (%)', 'AvgLoss (%)', 'status'))
    for point in points:
        if point.on_frontier:
            status = 'frontier'
        elif point.dominated_by is not None:
            status = 'dominated by {}'.format(point.dominated_by)
        else:
            status = ''
        print('{:<8} {:>10} {:>12}  {}'.format(
            point.scheme_id, format_value(point.reduction), format_value(point.avg_loss),
            status))
    print('Pareto frontier: {}'.format(', '.join(point.scheme_id for point in frontier)))
    if recommendation is None:
        return
    if recommendation.ranking:
        print('recommended ({}): {}'.format(recommendation.objective,
                                            ', '.join(recommendation.ranking)))
    else:
        for line in recommendation.report:
            print(line)


def run_report(args):
    settings = _settings(args, 'report', baseline='F16', basename='report',
                         results=SHIPPED_RESULTS, output_directory='')
    rows = load_results(settings.results, strict=args.strict)
    paths = emit_report(rows, baseline=settings.baseline,
                        output_directory=settings.output_directory,
                        basename=settings.basename, verbose=_verbose(args))
    if args.json:
        _print_json({'text': paths[0], 'figure': paths[1]})
    else:
        print('\n'.join(paths))


def run_sizes(args):
    settings = _settings(args, 'DEFAULT', inventory=LLAMA_INVENTORY, mix_rules=None)
    rules = read_mix_rules(settings.mix_rules) if settings.mix_rules else None
    summary = scheme_summary(load_inventory(settings.inventory), mix_rules=rules)
    if args.json:
        _print_json(summary)
        return
    print('{:<8} {:<7} {:>10} {:>9} {:>7}'.format(
        'scheme', 'family', 'MiB', 'red. (%)', 'bpw'))
    for row in summary:
        print('{:<8} {:<7} {:>10} {:>9} {:>7}'.format(
            row['scheme'], row['family'], format_value(row['size_mib']),
            format_value(row['reduction']), format_value(row['bpw'], decimals=3)))


def run_layout_doc(args):
    if args.json:
        _print_json(layout_table())
    else:
        print(layout_doc())


def run_perplexity(args):
    settings = _settings(args, 'bench', use_ncpus=None, random_seed=111, mix_rules=None)
    n_threads = args.threads or settings.use_ncpus or default_num_threads()
    model = read_gguf(args.input)
    if args.scheme is not None:
        rules = read_mix_rules(settings.mix_rules) if settings.mix_rules else None
        model, _ = convert(model, args.scheme, mix_rules=rules, n_jobs=n_threads)
    seed = args.seed if args.seed is not None else settings.random_seed
    ppl = tiny_model_perplexity(model, n_tokens=args.tokens, n_ctx=args.ctx,
                                seed=seed, n_threads=n_threads)
    if args.json:
        _print_json({'file': args.input, 'scheme': args.scheme, 'n_tokens': args.tokens,
                     'n_ctx': args.ctx, 'perplexity': ppl})
    else:
        print('perplexity {:.4f} ({} tokens, context {})'.format(ppl, args.tokens, args.ctx))


def run_init_config(args):
    path = config_file.make(all_keywords=args.all, description=not args.no_description,
                            output_directory=args.output_dir, filename=args.filename)
    print(path)


# ---- parser ------------------------------------------------------------------

def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument('--config', default=None,
                        help='ggufquant INI configuration file (flags take precedence)')
    common.add_argument('--verbose', dest='verbose', action='store_true', default=None,
                        help='print diagnostics to stderr')
    common.add_argument('--quiet', dest='verbose', action='store_false', default=None,
                        help='suppress diagnostics')
    common.add_argument('--json', action='store_true', help='machine readable output')

    threads = argparse.ArgumentParser(add_help=False)
    threads.add_argument('--threads', type=positive_int, default=None,
                         help='worker threads (default: config, then $GGUFQUANT_NUM_THREADS, then 1)')

    rules = argparse.ArgumentParser(add_help=False)
    rules.add_argument('--mix-rules', dest='mix_rules', default=None,
                       help='mix-rule INI file replacing the shipped per-tensor rules')

    results = argparse.ArgumentParser(add_help=False)
    results.add_argument('--results', default=None,
                         help='CSV or JSON results file (default: the shipped evaluation)')
    results.add_argument('--baseline', default=None, help='reference scheme id (F16)')
    results.add_argument('--strict', action='store_true',
                         help='fail on the first malformed row instead of skipping it')

    parser = argparse.ArgumentParser(
        prog='ggufquant',
        description='Quantize GGUF models, benchmark packed kernels and analyze '
                    'size/quality trade-offs.')
    subparsers = parser.add_subparsers(dest='command', metavar='<command>')
    subparsers.required = True

    sub = subparsers.add_parser('quantize', parents=[common, threads, rules],
                                help='convert a F16/F32 GGUF file to a scheme')
    sub.add_argument('input', help='input GGUF file')
    sub.add_argument('output', help='output GGUF file')
    sub.add_argument('scheme', type=scheme_id,
                     help='scheme id: {}'.format(', '.join(SCHEMES)))
    sub.add_argument('--n-layers', dest='n_layers', type=positive_int, default=None,
                     help='model depth for per-layer rules (default: from metadata)')
    sub.set_defaults(func=run_quantize)

    sub = subparsers.add_parser('dequantize', parents=[common],
                                help='decode every tensor back to F32 or F16')
    sub.add_argument('input')
    sub.add_argument('output')
    sub.add_argument('--dtype', choices=list(FLOAT_FILE_TYPES), default='F32')
    sub.set_defaults(func=run_dequantize)

    sub = subparsers.add_parser('inspect', parents=[common],
                                help='print metadata, tensor types, bpw and sizes')
    sub.add_argument('input')
    sub.add_argument('--checksums', action='store_true',
                     help='add the sha256 of every tensor payload')
    sub.set_defaults(func=run_inspect)

    sub = subparsers.add_parser('bench', parents=[common, threads, rules],
                                help='prefill/decode throughput of the packed kernels')
    sub.add_argument('--scheme', type=scheme_id, default=None)
    sub.add_argument('--model', default=None,
                     help='GGUF file to run instead of the synthetic layer stack')
    sub.add_argument('--pp', type=positive_int, default=None, help='prompt tokens (512)')
    sub.add_argument('--tg', type=positive_int, default=None, help='generated tokens (128)')
    sub.add_argument('--repeats', type=bench_repeats, default=None,
                     help='timed repeats, at least {}'.format(MIN_REPEATS))
    sub.add_argument('--warmup', type=int, default=None)
    sub.add_argument('--mode', choices=list(MODES) + ['both'], default=None)
    sub.add_argument('--n-layers', dest='n_layers', type=positive_int, default=None)
    sub.add_argument('--hidden', type=positive_int, default=None)
    sub.add_argument('--ffn', type=positive_int, default=None)
    sub.add_argument('--kv', type=positive_int, default=None)
    sub.add_argument('--vocab', type=positive_int, default=None)
    sub.add_argument('--seed', type=int, default=None)
    sub.set_defaults(func=run_bench)

    sub = subparsers.add_parser('analyze', parents=[common, results],
                                help='AvgLoss, Pareto frontier and recommendations')
    sub.add_argument('--objective', choices=list(OBJECTIVES), default=None)
    sub.add_argument('--scenario', choices=list(SCENARIOS), default=None)
    sub.add_argument('--max-size-mib', dest='max_size_mib', type=float, default=None)
    sub.add_argument('--min-avg', dest='min_avg', type=float, default=None)
    sub.add_argument('--max-ppl', dest='max_ppl', type=float, default=None)
    sub.add_argument('--min-reduction', dest='min_reduction', type=float, default=None)
    sub.set_defaults(func=run_analyze)

    sub = subparsers.add_parser('report', parents=[common, results],
                                help='write the text table and the Pareto SVG')
    sub.add_argument('--output-dir', dest='output_directory', default=None)
    sub.add_argument('--basename', default=None)
    sub.set_defaults(func=run_report)

    sub = subparsers.add_parser('sizes', parents=[common, rules],
                                help='predicted size, reduction and bpw of every scheme')
    sub.add_argument('--inventory', default=None,
                     help='tensor inventory file (default: the shipped 8B inventory)')
    sub.set_defaults(func=run_sizes)

    sub = subparsers.add_parser('layout-doc', parents=[common],
                                help='print the packed block layouts')
    sub.set_defaults(func=run_layout_doc)

    sub = subparsers.add_parser('perplexity', parents=[common, threads, rules],
                                help='perplexity of a model on a synthetic token stream')
    sub.add_argument('input')
    sub.add_argument('--scheme', type=scheme_id, default=None,
                     help='convert a float model to this scheme first')
    sub.add_argument('--tokens', type=positive_int, default=2048)
    sub.add_argument('--ctx', type=positive_int, default=512)
    sub.add_argument('--seed', type=int, default=None)
    sub.set_defaults(func=run_perplexity)

    sub = subparsers.add_parser('init-config', parents=[common],
                                help='write a commented default configuration file')
    sub.add_argument('--output-dir', dest='output_dir', default='')
    sub.add_argument('--filename', default='ggufquant.ini')
    sub.add_argument('--all', action='store_true', help='include every parameter')
    sub.add_argument('--no-description', dest='no_description', action='store_true')
    sub.set_defaults(func=run_init_config)
    return parser


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exit:
        return EXIT_OK if not exit.code else EXIT_USAGE

    try:
        args.func(args)
    except InputError as error:
        sys.stderr.write('ggufquant: error: {}\n'.format(error))
        return EXIT_INPUT
    except GGUFQuantError as error:
        sys.stderr.write('ggufquant: internal error: {}: {}\n'.format(
            type(error).__name__, error))
        return EXIT_INTERNAL
    except Exception as error:
        sys.stderr.write('ggufquant: internal error: {}: {}\n'.format(
            type(error).__name__, error))
        return EXIT_INTERNAL
    return EXIT_OK


if __name__ == '__main__':
    sys.exit(main())
