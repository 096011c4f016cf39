"""
Command-line interface, installed as `emotion-structure`.

Exit codes: 0 on success, 1 for input or configuration errors, 2 for numerical failures.
"""
import argparse
import json
import logging
import os
import sys
from pathlib import Path

from . import __version__, artifacts
from .categories import DATASETS
from .config import DEFAULT_OUTPUT_DIR, OUTPUT_DIR_ENV, PipelineConfig, load_config, write_config
from .errors import EmotionStructureError, InputError, NullModelError, StageError
from .evaluation import (DEFAULT_N_CLUSTERS, CategoryAssignment, category_matching_rate, cluster_categories,
                         identity_assignment, matching_rate, theoretical_chance_rate)
from .gwot import SolverConfig, solve_gwot
from .ingest import (average_all, average_group, read_model_responses, read_rater_records,
                     read_rating_csv, records_for_group, split_groups, write_rating_csv)
from .pipeline import NULL_SELECTORS, align, drop_zero_pairs, run_null, run_pipeline
from .rsa import per_stimulus_correlations, rdm_correlation
from .structure import Dissimilarity, build_rdm, drop_zero_rows
from .synth import planted_dataset

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_INPUT = 1
EXIT_NUMERICAL = 2

LOG_LEVELS = ('DEBUG', 'INFO', 'WARNING', 'ERROR')
METRICS = tuple(d.value for d in Dissimilarity)


def _output_dir(args) -> Path:
    path = Path(args.output_dir or os.environ.get(OUTPUT_DIR_ENV) or DEFAULT_OUTPUT_DIR)
    path.mkdir(parents=True, exist_ok=True)
    return path


def _read_categories_file(path) -> list[str]:
    names = [line.strip() for line in Path(path).read_text(encoding='utf-8').splitlines() if line.strip()]
    if not names:
        raise InputError(f'{path}: no category names')
    return names


def cmd_ingest(args) -> int:
    out = _output_dir(args)
    if args.responses:
        if args.categories:
            categories, scale, divisor = _read_categories_file(args.categories), args.scale, None
        else:
            categories, scale, divisor = DATASETS[args.dataset]
        matrix = read_model_responses(args.responses, list(categories), scale, divisor)
        print(write_rating_csv(matrix, out / 'ratings_model.csv'))
        return EXIT_OK

    records = read_rater_records(args.records, args.scale)
    categories = sorted({r.emotion_category for r in records})
    if args.split:
        split = split_groups(records, args.seed)
        group1 = average_group(records_for_group(records, split.group1), categories)
        group2 = average_group(records_for_group(records, split.group2), categories, list(group1.stimulus_ids))
        print(write_rating_csv(group1, out / 'ratings_group1.csv'))
        print(write_rating_csv(group2, out / 'ratings_group2.csv'))
    else:
        print(write_rating_csv(average_all(records, categories), out / 'ratings.csv'))
    return EXIT_OK


def cmd_rdm(args) -> int:
    matrix = read_rating_csv(args.ratings, args.scale)
    if args.metric == Dissimilarity.COSINE.value:
        matrix, dropped = drop_zero_rows(matrix)
        if dropped:
            logger.warning('Dropped all-zero stimuli: %s', ', '.join(dropped))
    rdm = build_rdm(matrix, args.metric)
    print(artifacts.write_rdm(rdm, _output_dir(args) / f'rdm.{args.format}'))
    return EXIT_OK


def cmd_rsa(args) -> int:
    reference = read_rating_csv(args.reference, args.scale)
    comparison = align(read_rating_csv(args.comparison, args.scale), reference)
    reference, comparison, _ = drop_zero_pairs(reference, comparison)
    correlations = per_stimulus_correlations(reference, comparison)
    out = _output_dir(args)
    artifacts.write_correlations(correlations, out / 'correlations.csv')
    summary = correlations.summary()
    summary['rdm_r'] = rdm_correlation(build_rdm(reference, args.metric), build_rdm(comparison, args.metric))
    artifacts.write_json(summary, out / 'correlation_summary.json')
    print(f'mean r = {summary["mean_r"]:.4f}, RDM r = {summary["rdm_r"]:.4f}')
    return EXIT_OK


def cmd_gwot(args) -> int:
    d1 = artifacts.read_rdm(args.rdm_reference, args.metric)
    d2 = artifacts.read_rdm(args.rdm_comparison, args.metric)
    config = SolverConfig(n_restarts=args.n_restarts, max_fw_iterations=args.max_iterations,
                          convergence_tol=args.tol, base_seed=args.seed,
                          histogram_match_inputs=not args.no_histogram_match,
                          product_warm_start=args.warm_start, pairwise_exchange=not args.no_exchange,
                          n_jobs=args.n_jobs)
    result = solve_gwot(d1, d2, config)
    out = _output_dir(args)
    artifacts.write_plan_json(result.best_plan, out / 'plan.json')
    artifacts.write_plan_csv(result.best_plan, out / 'plan.csv')
    artifacts.write_solver_log(result, out / 'solver_log.jsonl')
    print(f'GWD = {result.best_gwd:.6g} (restart {result.best_restart} of {len(result.per_restart_gwd)})')
    return EXIT_OK


def cmd_evaluate(args) -> int:
    plan = artifacts.read_plan(args.plan)
    if plan.row_ids is None or plan.col_ids is None:
        raise InputError(f'{args.plan}: plan has no stimulus ids')
    out = _output_dir(args)
    rate = matching_rate(plan, identity_assignment(plan.row_ids, plan.col_ids))
    category_rate, k = None, None
    if args.categories:
        categories = artifacts.read_categories(args.categories)
    elif args.ratings:
        categories = cluster_categories(read_rating_csv(args.ratings, args.scale).subset(plan.row_ids), args.k)
        artifacts.write_categories(categories, out / 'categories.csv')
    else:
        categories = None
    if categories is not None:
        category_rate, k = category_matching_rate(plan, categories), categories.k
    artifacts.write_evaluation(out / 'evaluation.json', rate, category_rate, k, plan.n)
    line = f'matching rate = {rate:.2f}% (chance {theoretical_chance_rate(plan.n):.3f}%)'
    if category_rate is not None:
        line += f', category matching rate = {category_rate:.2f}%'
    print(line)
    return EXIT_OK


def _pipeline_config(args) -> PipelineConfig:
    overrides = []
    if args.seed is not None:
        overrides.append(f'base_seed={args.seed}')
    if args.output_dir is not None:
        overrides.append(f'output_dir={json.dumps(args.output_dir)}')
    if args.n_restarts is not None:
        overrides.append(f'solver.n_restarts={args.n_restarts}')
    if args.n_jobs is not None:
        overrides.append(f'solver.n_jobs={args.n_jobs}')
    return load_config(args.config, overrides + list(args.set))


def cmd_null(args) -> int:
    summary = run_null(_pipeline_config(args), args.selector)
    lo, hi = summary.interval_95
    print(f'{summary.metric_name}: 95% interval [{lo:.6g}, {hi:.6g}] over {summary.n_shuffles} shuffles')
    return EXIT_OK


def cmd_pipeline(args) -> int:
    config = _pipeline_config(args)
    report = run_pipeline(config)
    for section in report.subsets:
        print(f'{section.name}: n={section.n} mean_r={section.mean_r:.4f} '
              f'matching={section.matching_rate_pct:.2f}%')
    print(Path(config.output_dir) / 'report.json')
    return EXIT_OK


def cmd_synth(args) -> int:
    out = _output_dir(args)
    dataset = planted_dataset(args.n_stimuli, args.n_categories, args.n_dims, args.separation,
                              args.spread, args.noise, seed=args.seed)
    write_rating_csv(dataset.reference, out / 'reference.csv')
    write_rating_csv(dataset.comparison, out / 'comparison.csv')
    artifacts.write_categories(CategoryAssignment(dataset.reference.stimulus_ids, dataset.labels), out / 'labels.csv')
    config = PipelineConfig()
    config.inputs.reference = 'reference.csv'
    config.inputs.comparison = 'comparison.csv'
    config.n_clusters = args.n_categories
    config.top_k = [k for k in (args.n_stimuli // 2, args.n_stimuli // 4) if k >= args.n_categories]
    config.output_dir = str((out / 'run').resolve())
    print(write_config(config, out / 'pipeline.json'))
    return EXIT_OK


def _add_output(parser):
    parser.add_argument('-o', '--output-dir', default=None,
                        help=f'Output directory (default: ${OUTPUT_DIR_ENV} or {DEFAULT_OUTPUT_DIR})')


def _add_config_flags(parser):
    parser.add_argument('config', help='JSON pipeline config')
    parser.add_argument('--seed', type=int, default=None, help='Override base_seed')
    parser.add_argument('--n-restarts', type=int, default=None, help='Override solver.n_restarts')
    parser.add_argument('--n-jobs', type=int, default=None, help='Override solver.n_jobs')
    parser.add_argument('--set', action='append', default=[], metavar='KEY=VALUE',
                        help='Override any config key, e.g. --set null.enabled=false (repeatable)')
    _add_output(parser)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog='emotion-structure',
                                     description='Compare emotion-rating structures with RSA and GW optimal transport.')
    parser.add_argument('--version', action='version', version=f'%(prog)s {__version__}')
    parser.add_argument('--log-level', default='INFO', choices=LOG_LEVELS, type=str.upper)
    commands = parser.add_subparsers(dest='command', required=True)

    p = commands.add_parser('ingest', help='Rater records or model responses -> rating CSV')
    source = p.add_mutually_exclusive_group(required=True)
    source.add_argument('--records', help='Long-format rater CSV or directory of <rater>__<category>.csv')
    source.add_argument('--responses', help='Directory of <stimulus_id>[__<rep>].txt model responses')
    p.add_argument('--split', action='store_true', help='Average two random rater halves separately')
    p.add_argument('--dataset', choices=sorted(DATASETS), default='koide-majima',
                   help='Category list and response scale for --responses')
    p.add_argument('--categories', help='File with one category name per line (overrides --dataset)')
    p.add_argument('--scale', type=float, default=100.0)
    p.add_argument('--seed', type=int, default=0)
    _add_output(p)
    p.set_defaults(handler=cmd_ingest)

    p = commands.add_parser('rdm', help='Rating CSV -> RDM')
    p.add_argument('ratings')
    p.add_argument('--scale', type=float, default=100.0)
    p.add_argument('--metric', choices=METRICS, default='cosine')
    p.add_argument('--format', choices=('csv', 'json'), default='csv')
    _add_output(p)
    p.set_defaults(handler=cmd_rdm)

    p = commands.add_parser('rsa', help='Per-stimulus and RDM correlations of two rating CSVs')
    p.add_argument('reference')
    p.add_argument('comparison')
    p.add_argument('--scale', type=float, default=100.0)
    p.add_argument('--metric', choices=METRICS, default='cosine')
    _add_output(p)
    p.set_defaults(handler=cmd_rsa)

    p = commands.add_parser('gwot', help='Align two RDMs with GW optimal transport')
    p.add_argument('rdm_reference')
    p.add_argument('rdm_comparison')
    p.add_argument('--metric', choices=METRICS, default='cosine', help='Dissimilarity of CSV inputs (JSON RDMs record their own)')
    p.add_argument('--n-restarts', type=int, default=None, help='Default: 10000 / 1000 / 200 by problem size')
    p.add_argument('--max-iterations', type=int, default=SolverConfig.max_fw_iterations)
    p.add_argument('--tol', type=float, default=SolverConfig.convergence_tol)
    p.add_argument('--seed', type=int, default=0)
    p.add_argument('--n-jobs', type=int, default=1)
    p.add_argument('--no-histogram-match', action='store_true')
    p.add_argument('--warm-start', action='store_true', help='Start restart 0 from the product coupling')
    p.add_argument('--no-exchange', action='store_true', help='Plain Frank-Wolfe restarts without pairwise-exchange polishing')
    _add_output(p)
    p.set_defaults(handler=cmd_gwot)

    p = commands.add_parser('evaluate', help='Matching rates of a transport plan')
    p.add_argument('plan', help='plan.json or plan.csv')
    p.add_argument('--ratings', help='Reference ratings to derive Ward categories from')
    p.add_argument('--categories', help='Category CSV (stimulus_id, category)')
    p.add_argument('--k', type=int, default=DEFAULT_N_CLUSTERS)
    p.add_argument('--scale', type=float, default=100.0)
    _add_output(p)
    p.set_defaults(handler=cmd_evaluate)

    p = commands.add_parser('null', help='Run one null analysis from a pipeline config')
    _add_config_flags(p)
    p.add_argument('--metric', dest='selector', required=True, help='One of ' + ', '.join(NULL_SELECTORS))
    p.set_defaults(handler=cmd_null)

    p = commands.add_parser('pipeline', help='Run every stage from a pipeline config')
    _add_config_flags(p)
    p.set_defaults(handler=cmd_pipeline)

    p = commands.add_parser('synth', help='Write a planted-category demo dataset and config')
    p.add_argument('--n-stimuli', type=int, default=200)
    p.add_argument('--n-categories', type=int, default=10)
    p.add_argument('--n-dims', type=int, default=34)
    p.add_argument('--separation', type=float, default=70.0)
    p.add_argument('--spread', type=float, default=8.0)
    p.add_argument('--noise', type=float, default=5.0)
    p.add_argument('--seed', type=int, default=0)
    _add_output(p)
    p.set_defaults(handler=cmd_synth)
    return parser


def exit_code(exc: BaseException) -> int:
    """Maps an exception to the process exit code; unwraps stage and shuffle wrappers."""
    while isinstance(exc, (StageError, NullModelError)):
        exc = exc.cause
    if isinstance(exc, ArithmeticError | AssertionError):
        return EXIT_NUMERICAL
    return EXIT_INPUT


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=args.log_level, stream=sys.stderr,
                        format='%(asctime)s %(levelname)s %(name)s: %(message)s')
    try:
        return args.handler(args)
    except (EmotionStructureError, ValueError, OSError, ArithmeticError, AssertionError) as exc:
        logger.error('%s', exc)
        return exit_code(exc)


if __name__ == '__main__':
    sys.exit(main())
