#!/usr/bin/env python3
"""
Gaussian Proper Agnostic Learner CLI
Command-line interface for data generation, the three learning pipelines,
the comparison baselines and the verification suites

Usage Examples:
    # Generate a planted-halfspace dataset with 10% label noise
    python learner_cli.py gen-data --dim 4 --n-train 5000 --noise rcn:0.1 --out data.txt

    # Learn a halfspace from a planted model
    python learner_cli.py learn-halfspace --dim 6 --epsilon 0.15 --seed 3 --out report.json

    # Learn a Boolean function of two halfspaces from a dataset file
    python learner_cli.py learn-boolean --K 2 --dataset data.txt --eps-cover 0.25

    # Compare against the L2 polynomial baseline and brute force
    python learner_cli.py baseline-l2 --dim 4 --k 3
    python learner_cli.py brute-force --dim 2 --epsilon 0.2

    # Run the property suites
    python learner_cli.py verify --suite hermite cellerm --quick

Exit codes: 0 success, 2 guarantee or check failed, 3 resource budget
exceeded or certification failed, 4 input error, 1 anything else.
"""

import argparse
import json
import logging
import sys
from pathlib import Path
from typing import Any, Dict, List, Optional

import pandas as pd

from agnostic_learner import PIPELINES, baseline_l2, brute_force_proper, planted_model
from learner_config import CONCEPTS, TASKS, LearnerConfig, RunReport, json_default
from learner_errors import InputError, LearnerError
from synthetic_data_manager import sample_dataset, write_dataset
from verification_suites import SUITES, run_suites

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_FAILED_CHECK = 2

# flag dest -> LearnerConfig field
CONFIG_FLAGS = {
    'dim': 'dim',
    'epsilon': 'epsilon',
    'delta': 'delta',
    'k': 'degree_k',
    'K': 'K',
    'mu': 'mu',
    'nu': 'nu',
    'eta': 'eta',
    'seed': 'seed',
    'n_train': 'n_train',
    'n_valid': 'n_valid',
    'n_test': 'n_test',
    'dataset': 'dataset',
    'max_degree': 'max_degree',
    'max_cover': 'max_cover',
    'max_candidates': 'max_candidates',
    'max_tuples': 'max_tuples',
    'max_iterations': 'max_iterations',
    'c0': 'c0',
    'cnu': 'cnu',
    'threads': 'threads',
    'eps_cover': 'eps_cover',
    'solver_method': 'solver_method',
    'require_certificate': 'require_certificate',
    'concept': 'concept',
    'concept_threshold': 'concept_threshold',
    'noise': 'noise',
}

COMMAND_TASKS = {
    'learn-halfspace': 'halfspace',
    'learn-boolean': 'boolean',
    'learn-intersection': 'intersection',
}


class LearnerArgumentParser(argparse.ArgumentParser):
    """Usage errors surface as InputError so they map to the input-error exit code"""

    def error(self, message: str):
        raise InputError(f"{self.prog}: {message}", stage='cli')


class LearnerCLI:
    """Command-line interface for the learner"""

    def print_header(self, title: str):
        """Print formatted header"""
        print(f"\n{'='*60}")
        print(f"🎯 {title}")
        print(f"{'='*60}")

    def print_success(self, message: str):
        print(f"✅ {message}")

    def print_error(self, message: str):
        print(f"❌ {message}")

    def print_info(self, message: str):
        print(f"ℹ️  {message}")

    def print_warning(self, message: str):
        print(f"⚠️  {message}")

    # ------------------------------------------------------------------ config

    def build_config(self, args: argparse.Namespace) -> LearnerConfig:
        """--config file first, explicit flags on top, task from the subcommand"""
        base = LearnerConfig.from_json(args.config) if getattr(args, 'config', None) else None
        overrides = {field: getattr(args, flag) for flag, field in CONFIG_FLAGS.items()
                     if getattr(args, flag, None) is not None}
        task = COMMAND_TASKS.get(args.command) or getattr(args, 'task', None)
        if task is not None:
            overrides['task'] = task
        if base is None:
            return LearnerConfig(**overrides)
        return base.with_overrides(**overrides)

    # ---------------------------------------------------------------- commands

    def generate_data(self, args: argparse.Namespace) -> int:
        config = self.build_config(args)
        model = planted_model(config)
        self.print_header(f"Generating {config.n_train} points in d={config.dim}")
        self.print_info(f"Concept: {type(model.concept).__name__}, noise: {model.noise.describe()}")
        data = sample_dataset(model, config.n_train, config.dim, domain='train', threads=config.threads)
        write_dataset(args.out, data, fmt=args.format)
        summary = pd.Series(data.summary())
        print(summary.to_string())
        self.print_success(f"Dataset written to {args.out} ({args.format})")
        return EXIT_OK

    def learn(self, args: argparse.Namespace) -> int:
        config = self.build_config(args)
        self.print_header(f"{args.command}: d={config.dim}, K={config.K}, eps={config.epsilon}")
        report = PIPELINES[config.task](config)
        return self.finish_report(report, args)

    def compare(self, args: argparse.Namespace) -> int:
        config = self.build_config(args)
        self.print_header(f"{args.command}: d={config.dim}, eps={config.epsilon}")
        runner = baseline_l2 if args.command == 'baseline-l2' else brute_force_proper
        return self.finish_report(runner(config), args)

    def verify(self, args: argparse.Namespace) -> int:
        self.print_header(f"Verification suites: {', '.join(args.suite) if args.suite else 'all'}")
        result = run_suites(args.suite, seed=args.seed if args.seed is not None else 0, quick=args.quick)
        frame = pd.DataFrame(result['checks'])
        if not frame.empty:
            table = frame.groupby('suite')['passed'].agg(['sum', 'count'])
            print(table.rename(columns={'sum': 'passed', 'count': 'checks'}).to_string())
            for row in frame[~frame['passed']].itertuples():
                self.print_error(f"[{row.suite}] {row.name}: value={row.value} bound={row.bound}")
        self.emit_json(result, args.out)
        if result['passed']:
            self.print_success(f"All {result['n_checks']} checks passed")
            return EXIT_OK
        self.print_error(f"{result['n_failed']} of {result['n_checks']} checks failed")
        return EXIT_FAILED_CHECK

    # ------------------------------------------------------------------ output

    def emit_json(self, payload: Dict[str, Any], out: Optional[str]) -> None:
        text = json.dumps(payload, indent=2, default=json_default)
        if out:
            Path(out).write_text(text + "\n")
            self.print_info(f"Report written to {out}")
        else:
            print(text)

    def finish_report(self, report: RunReport, args: argparse.Namespace) -> int:
        if report.errors:
            errors = {k: v for k, v in report.errors.items() if not k.startswith('n_')}
            print(pd.Series(errors, name='error').to_string())
        if report.subspace:
            self.print_info(f"Subspace rank {report.subspace.get('r')}, cover size {report.cover.get('size')}")
        if out := args.out:
            report.write(out)
        else:
            print(report.to_json())

        passed = report.guarantee.get('passed')
        failed_checks = [name for name, check in report.checks.items()
                         if isinstance(check, dict) and check.get('passed') is False
                         and name not in ('solver_certified',)]
        if failed_checks:
            self.print_warning(f"Checks failed: {failed_checks}")
        if passed is False:
            self.print_error(f"Guarantee failed: err_test={report.guarantee['err_test']:.4f} > "
                             f"OPT_ub + eps = {report.guarantee['opt_upper_bound'] + report.guarantee['epsilon']:.4f}")
            return EXIT_FAILED_CHECK
        self.print_success(f"Test error {report.errors.get('test', float('nan')):.4f}"
                           + ("" if passed is None else " (guarantee met)"))
        return EXIT_OK

    def write_partial_report(self, error: LearnerError, args: argparse.Namespace) -> None:
        report = error.partial_report
        if report is None or not getattr(args, 'out', None):
            return
        report.write(args.out)
        self.print_warning(f"Partial report (failed stage '{report.failed_stage}') written to {args.out}")


def _add_common_flags(parser: argparse.ArgumentParser) -> None:
    """Flags shared by every run command; None means 'keep the config value'"""
    group = parser.add_argument_group('run parameters')
    group.add_argument('--config', help='JSON file of LearnerConfig fields; flags override it')
    group.add_argument('--dim', type=int, help='Ambient dimension d (default: 4)')
    group.add_argument('--epsilon', type=float, help='Target accuracy in (0, 1/2) (default: 0.2)')
    group.add_argument('--delta', type=float, help='Failure probability in (0, 1/2) (default: 0.1)')
    group.add_argument('--k', type=int, help='Polynomial degree (default: formula, capped by --max-degree)')
    group.add_argument('--K', type=int, help='Number of halfspaces (default: 1)')
    group.add_argument('--mu', type=float, help='Ridge weight (default: 1/128)')
    group.add_argument('--nu', type=float, help='Nuclear-norm weight (default: formula)')
    group.add_argument('--eta', type=float, help='Eigenvalue threshold (default: formula)')
    group.add_argument('--eps-cover', type=float, help='Cover accuracy (default: formula)')
    group.add_argument('--seed', type=int, help='Master seed (default: 0)')
    group.add_argument('--n-train', type=int, help='Regression sample size N1')
    group.add_argument('--n-valid', type=int, help='Validation sample size N2 (default: formula)')
    group.add_argument('--n-test', type=int, help='Test sample size')
    group.add_argument('--dataset', help='Dataset file (text or binary) instead of a planted model')
    group.add_argument('--concept', choices=CONCEPTS, help='Planted concept (default: auto)')
    group.add_argument('--concept-threshold', type=float, help='Threshold of the planted concept')
    group.add_argument('--noise', help='Noise model: none, rcn:p, slab:p or random_labels (default: rcn:0.1)')
    group.add_argument('--max-degree', type=int, help='Degree cap (default: 8)')
    group.add_argument('--max-cover', type=int, help='Largest allowed cover (default: 200000)')
    group.add_argument('--max-candidates', type=int,
                       help='Largest allowed set of candidate directions for a sphere net (default: 2000000)')
    group.add_argument('--max-tuples', type=int, help='Largest allowed tuple search (default: 5000000)')
    group.add_argument('--max-iterations', type=int, help='Solver iteration budget (default: 20000)')
    group.add_argument('--c0', type=float, help='Degree / threshold constant C0 (default: 1)')
    group.add_argument('--cnu', type=float, help='Nuclear-norm constant c_nu (default: 1/8)')
    group.add_argument('--solver-method', choices=['accelerated', 'subgradient'], help='Regression solver')
    group.add_argument('--require-certificate', action='store_const', const=True,
                       help='Fail with exit code 3 when the solver cannot certify its tolerance')
    group.add_argument('--threads', type=int, help='Worker threads (default: 1)')
    group.add_argument('--out', help='Output path (report JSON, or dataset for gen-data)')


def create_parser() -> argparse.ArgumentParser:
    """Create command-line argument parser"""
    parser = LearnerArgumentParser(
        description="Gaussian Proper Agnostic Learner",
        formatter_class=argparse.RawDescriptionHelpFormatter,
        epilog="""
Examples:
  %(prog)s gen-data --dim 4 --n-train 5000 --noise rcn:0.1 --out data.txt
  %(prog)s learn-halfspace --dim 6 --epsilon 0.15 --out report.json
  %(prog)s learn-boolean --K 2 --dim 4 --eps-cover 0.25
  %(prog)s learn-intersection --K 2 --dim 4 --noise none
  %(prog)s brute-force --dim 2
  %(prog)s verify --suite hermite nuclear --quick
        """
    )
    verbosity = parser.add_mutually_exclusive_group()
    verbosity.add_argument('--verbose', action='store_true', help='Debug logging')
    verbosity.add_argument('--quiet', action='store_true', help='Warnings and errors only')

    subparsers = parser.add_subparsers(dest='command', help='Available commands')

    gen_parser = subparsers.add_parser('gen-data', help='Sample a dataset from a planted model')
    _add_common_flags(gen_parser)
    gen_parser.add_argument('--task', choices=TASKS, default='halfspace', help='Task used to resolve K (default: halfspace)')
    gen_parser.add_argument('--format', choices=['text', 'binary'], default='text', help='File format (default: text)')

    for command, help_text in (('learn-halfspace', 'Proper agnostic learning of a halfspace'),
                               ('learn-boolean', 'Proper learning of a Boolean function of K halfspaces'),
                               ('learn-intersection', 'Proper learning of an intersection of K halfspaces')):
        _add_common_flags(subparsers.add_parser(command, help=help_text))

    for command, help_text in (('baseline-l2', 'L2 polynomial threshold baseline (improper)'),
                               ('brute-force', 'Full-dimensional grid ERM, d <= 3')):
        sub = subparsers.add_parser(command, help=help_text)
        _add_common_flags(sub)
        sub.add_argument('--task', choices=TASKS, default='halfspace', help='Task used for the degree formula')

    verify_parser = subparsers.add_parser('verify', help='Run the property suites')
    verify_parser.add_argument('--suite', nargs='*', default=[], help=f"Suites to run (default: all of {list(SUITES)})")
    verify_parser.add_argument('--seed', type=int, help='Seed (default: 0)')
    verify_parser.add_argument('--quick', action='store_true', help='Smaller instance counts')
    verify_parser.add_argument('--out', help='Write the JSON report here instead of stdout')

    return parser


def configure_logging(args: argparse.Namespace) -> None:
    level = logging.DEBUG if args.verbose else logging.WARNING if args.quiet else logging.INFO
    logging.basicConfig(
        level=level,
        format='%(asctime)s - %(levelname)s - %(message)s',
        datefmt='%Y-%m-%d %H:%M:%S'
    )
    logging.getLogger().setLevel(level)


def main(argv: Optional[List[str]] = None) -> int:
    """Main CLI function; returns the exit code"""
    parser = create_parser()
    try:
        args = parser.parse_args(argv)
    except InputError as e:
        parser.print_usage(sys.stderr)
        print(f"❌ {e}", file=sys.stderr)
        return e.exit_code
    configure_logging(args)

    if not args.command:
        parser.print_help()
        return EXIT_OK

    cli = LearnerCLI()
    try:
        if args.command == 'gen-data':
            if not args.out:
                parser.error("gen-data needs --out")
            return cli.generate_data(args)
        if args.command in COMMAND_TASKS:
            return cli.learn(args)
        if args.command in ('baseline-l2', 'brute-force'):
            return cli.compare(args)
        return cli.verify(args)
    except LearnerError as e:
        logger.error(f"❌ {type(e).__name__}{f' in stage {e.stage}' if e.stage else ''}: {e}")
        cli.print_error(str(e))
        cli.write_partial_report(e, args)
        return e.exit_code
    except KeyboardInterrupt:
        print("\n⚠️  Operation cancelled by user")
        return 1
    except Exception as e:
        logger.error(f"CLI error: {e}")
        print(f"\n❌ Error: {e}")
        return 1


if __name__ == "__main__":
    sys.exit(main())
