#!/usr/bin/env python3
"""
Agnostic Learner Pipeline
Runs regression, spectral reduction, cover construction and ERM end to end for
halfspaces, Boolean functions of K halfspaces and intersections, plus the two
comparison points: an L2 polynomial threshold baseline and a brute-force
proper learner for d <= 3.
"""

import logging
import math
import time
from contextlib import contextmanager
from typing import Callable, Dict, Iterator, Optional, Tuple

import numpy as np

from approximation_oracle import correlation_residual
from cover_search import (Cover, Hypothesis, build_cover, empirical_error, erm_halfspace, search_boolean,
                          search_intersection)
from hermite_engine import feature_map, multi_index_array
from learner_config import LearnerConfig, ResolvedParameters, RunReport
from learner_errors import CertificationError, InputError, LearnerError, ResourceBudgetError
from regression_solver import RegressionProblem, SolveResult, solve
from spectral_reduction import RANK_TOL, Subspace, check_dimension_bound, influence_matrix, rank_trace_bound, top_subspace
from synthetic_data_manager import (LabeledDataset, NoiseModel, PlantedModel, constant_concept,
                                    domain_generator, planted_halfspace, planted_intersection, planted_xor,
                                    read_dataset, sample_dataset)

logger = logging.getLogger(__name__)

BRUTE_FORCE_MAX_DIM = 3
RIDGE_FALLBACK = 1e-8
CONDITION_LIMIT = 1e12
FILE_SPLIT = (0.5, 0.25)


# ============================================================================
# DATA SOURCES
# ============================================================================

class DataSource:
    """
    Training, validation and test sets for one run

    A planted model draws the three sets from disjoint seed domains. A dataset
    file is shuffled once and split into halves and quarters.
    """

    def __init__(self, model: Optional[PlantedModel] = None, dataset: Optional[LabeledDataset] = None,
                 seed: int = 0, threads: int = 1):
        if (model is None) == (dataset is None):
            raise InputError("A data source needs exactly one of a planted model or a dataset")
        self.model = model
        self.threads = threads
        self._splits: Dict[str, LabeledDataset] = {}
        if dataset is not None:
            order = domain_generator(seed, 'train').permutation(dataset.size)
            n_train = int(dataset.size * FILE_SPLIT[0])
            n_valid = int(dataset.size * FILE_SPLIT[1])
            cuts = {'train': order[:n_train], 'validation': order[n_train:n_train + n_valid],
                    'test': order[n_train + n_valid:]}
            for name, rows in cuts.items():
                if rows.size == 0:
                    raise InputError(f"Dataset of {dataset.size} points is too small to split")
                self._splits[name] = LabeledDataset(dataset.points[rows], dataset.labels[rows])

    @classmethod
    def from_config(cls, config: LearnerConfig) -> 'DataSource':
        if config.dataset:
            data = read_dataset(config.dataset)
            if data.dim != config.dim:
                logger.warning(f"⚠️ Dataset dimension {data.dim} overrides configured d={config.dim}")
            return cls(dataset=data, seed=config.seed, threads=config.threads)
        return cls(model=planted_model(config), threads=config.threads)

    @property
    def dim(self) -> int:
        return self.model.concept.dim if self.model else self._splits['train'].dim

    @property
    def opt_upper_bound(self) -> Optional[float]:
        return self.model.opt_upper_bound if self.model else None

    def _draw(self, domain: str, n: int) -> LabeledDataset:
        if self.model is not None:
            return sample_dataset(self.model, n, self.dim, domain=domain, threads=self.threads)
        data = self._splits[domain]
        if n < data.size:
            return LabeledDataset(data.points[:n], data.labels[:n])
        return data

    def train(self, n: int) -> LabeledDataset:
        return self._draw('train', n)

    def validation(self, n: int) -> LabeledDataset:
        return self._draw('validation', n)

    def test(self, n: int) -> LabeledDataset:
        return self._draw('test', n)


def planted_model(config: LearnerConfig) -> PlantedModel:
    """Planted concept for the configured task; 'auto' picks halfspace, XOR or intersection"""
    concept = config.concept
    if concept == 'auto':
        concept = {'halfspace': 'halfspace', 'boolean': 'xor', 'intersection': 'intersection'}[config.task]
    d = config.dim
    if concept == 'halfspace':
        target = planted_halfspace(d, seed=config.seed, threshold=config.concept_threshold or 0.0)
    elif concept == 'xor':
        target = planted_xor(d, threshold=config.concept_threshold or 0.0)
    elif concept == 'intersection':
        threshold = 0.5 if config.concept_threshold is None else config.concept_threshold
        target = planted_intersection(d, K=max(config.K, 1), threshold=threshold)
    else:
        target = constant_concept(d, 1 if concept == 'constant+' else -1)
    return PlantedModel(target, NoiseModel.parse(config.noise), config.seed)


# ============================================================================
# PIPELINE
# ============================================================================

class StageTimer:
    def __init__(self):
        self.timings: Dict[str, float] = {}
        self._start = time.perf_counter()

    @contextmanager
    def stage(self, name: str) -> Iterator[None]:
        start = time.perf_counter()
        try:
            yield
        finally:
            self.timings[name] = self.timings.get(name, 0.0) + time.perf_counter() - start

    def finish(self) -> Dict[str, float]:
        self.timings['total'] = time.perf_counter() - self._start
        return dict(self.timings)


def _fail(error: LearnerError, report: RunReport, timer: StageTimer, stage: str) -> LearnerError:
    report.status = 'failed'
    report.failed_stage = error.stage or stage
    report.timings = timer.finish()
    error.stage = error.stage or stage
    error.partial_report = report
    return error


def _hypothesis_errors(h, train: LabeledDataset, valid: LabeledDataset, test: LabeledDataset) -> Dict[str, float]:
    return {
        'train': empirical_error(h, train),
        'validation': empirical_error(h, valid),
        'test': empirical_error(h, test),
        'n_train': train.size,
        'n_validation': valid.size,
        'n_test': test.size,
    }


def _guarantee(err_test: float, opt_ub: Optional[float], epsilon: float) -> Dict[str, object]:
    return {
        'err_test': err_test,
        'opt_upper_bound': opt_ub,
        'epsilon': epsilon,
        'passed': None if opt_ub is None else bool(err_test <= opt_ub + epsilon),
    }


def _solve_stage(config: LearnerConfig, params: ResolvedParameters, train: LabeledDataset,
                 report: RunReport) -> SolveResult:
    problem = RegressionProblem(
        dataset=train,
        degree=params.degree,
        mu=params.mu,
        nu=params.nu,
        opt_tolerance=params.opt_tolerance,
        eps_target=params.eps_trunc,
        seed=config.seed,
        trunc_radius_override=params.trunc_radius,
        max_iterations=config.max_iterations,
        method=config.solver_method,
        threads=config.threads,
    )
    try:
        result = solve(problem)
    except CertificationError as e:
        if config.require_certificate:
            raise
        logger.warning(f"⚠️ {e}; continuing with the incumbent")
        result = e.result
    report.solver = result.summary()
    report.solver.update({
        'ball_radius': problem.ball_radius,
        'trunc_radius': problem.trunc_radius,
        'n_coeffs': problem.n_coeffs,
        'n_truncated': int(np.sum(~problem.inside)),
        'opt_tolerance': params.opt_tolerance,
    })
    return result


def _run_pipeline(config: LearnerConfig, source: Optional[DataSource],
                  search: Callable[[Cover, LabeledDataset], Tuple[Hypothesis, float]]) -> RunReport:
    source = source or DataSource.from_config(config)
    params = config.resolve()
    report = RunReport(task=config.task, config=config.to_dict(), parameters=params.to_dict())
    timer = StageTimer()
    stage = 'data'
    logger.info(f"🚀 Running {config.task} pipeline: d={source.dim}, K={config.K}, eps={config.epsilon}, "
                f"k={params.degree}, eta={params.eta:.4g}, nu={params.nu:.4g}")
    try:
        with timer.stage('data'):
            train = source.train(params.n_train)

        stage = 'solve'
        with timer.stage('solve'):
            result = _solve_stage(config, params, train, report)

        stage = 'spectral'
        with timer.stage('spectral'):
            M = influence_matrix(result.coeffs)
            V = top_subspace(M, params.eta)
            trace_sqrt_value, rank_trace = rank_trace_bound(M)
            report.subspace = {**V.to_dict(), 'trace': M.trace(), 'trace_sqrt': trace_sqrt_value,
                               'eta': params.eta}
            bound = check_dimension_bound(V, M, params.eta)
            report.checks['dimension_bound'] = {'rank': V.rank, 'bound': bound, 'passed': True}
            report.checks['rank_trace'] = {'trace_sqrt': trace_sqrt_value, 'bound': rank_trace,
                                           'passed': bool(trace_sqrt_value <= rank_trace * (1 + 1e-12) + M.dim * math.sqrt(RANK_TOL))}

        stage = 'cover'
        with timer.stage('cover'):
            cover = build_cover(V, params.eps_cover, max_cover=config.max_cover, seed=config.seed,
                                max_candidates=config.max_candidates)
            report.cover = {'size': len(cover), 'eps_cover': params.eps_cover, 'rank': V.rank}

        stage = 'search'
        with timer.stage('data'):
            n_valid, capped = params.validation_size(len(cover))
            valid = source.validation(n_valid)
        report.checks['validation_size'] = {'n': valid.size, 'capped': capped}
        with timer.stage('search'):
            h, err_valid = search(cover, valid)
        report.hypothesis = h.to_dict()

        stage = 'evaluate'
        with timer.stage('evaluate'):
            test = source.test(params.n_test)
            report.errors = _hypothesis_errors(h, train, valid, test)
            if report.errors['validation'] != err_valid:
                logger.warning("⚠️ Recomputed validation error differs from the search result")
            report.checks['erm_exact'] = {'passed': report.errors['validation'] == err_valid}
            report.guarantee = _guarantee(report.errors['test'], source.opt_upper_bound, config.epsilon)
            if source.model is not None:
                report.checks['correlation_residual'] = _residual_check(source.model.concept, V, test, config)
        report.checks['solver_certified'] = {'passed': bool(report.solver.get('certified'))}
        report.checks['degree_capped'] = {'formula_degree': params.formula_degree, 'capped': params.degree_capped}
    except ResourceBudgetError as e:
        if e.best_so_far and e.best_so_far[0] is not None:
            report.hypothesis = e.best_so_far[0].to_dict()
            report.errors = {'validation': e.best_so_far[1]}
        raise _fail(e, report, timer, stage)
    except LearnerError as e:
        raise _fail(e, report, timer, stage)

    report.timings = timer.finish()
    passed = report.guarantee.get('passed')
    logger.info(f"✅ {config.task} pipeline done: test error {report.errors['test']:.4f}"
                + ("" if passed is None else f", guarantee {'passed' if passed else 'FAILED'}"))
    return report


def _residual_check(concept: Hypothesis, V: Subspace, test: LabeledDataset, config: LearnerConfig) -> Dict:
    n = min(test.size, config.residual_points)
    sample = LabeledDataset(test.points[:n], test.labels[:n])
    residual = correlation_residual(concept, V, sample, n_mc=config.n_mc, seed=config.seed, threads=config.threads)
    # (f - f_V) y lies in [-2, 2]
    std_err = 2.0 / math.sqrt(n)
    return {
        'value': residual,
        'std_err': std_err,
        'bound': config.epsilon + 3.0 * std_err,
        'passed': bool(residual <= config.epsilon + 3.0 * std_err),
    }


def run_algorithm1(config: LearnerConfig, source: Optional[DataSource] = None) -> RunReport:
    """Proper agnostic learning of a halfspace"""
    if config.task != 'halfspace':
        raise InputError(f"run_algorithm1 needs task 'halfspace', got: {config.task}")
    return _run_pipeline(config, source, lambda cover, valid: erm_halfspace(cover, valid, threads=config.threads))


def run_algorithm2(config: LearnerConfig, source: Optional[DataSource] = None) -> RunReport:
    """Proper agnostic learning of a Boolean function of K halfspaces"""
    if config.task != 'boolean':
        raise InputError(f"run_algorithm2 needs task 'boolean', got: {config.task}")
    return _run_pipeline(config, source, lambda cover, valid: search_boolean(
        cover, config.K, valid, max_tuples=config.max_tuples, threads=config.threads))


def run_intersection(config: LearnerConfig, source: Optional[DataSource] = None) -> RunReport:
    """Proper agnostic learning of an intersection of K halfspaces"""
    if config.task != 'intersection':
        raise InputError(f"run_intersection needs task 'intersection', got: {config.task}")
    return _run_pipeline(config, source, lambda cover, valid: search_intersection(
        cover, config.K, valid, max_tuples=config.max_tuples, threads=config.threads))


PIPELINES = {
    'halfspace': run_algorithm1,
    'boolean': run_algorithm2,
    'intersection': run_intersection,
}


# ============================================================================
# COMPARISON POINTS
# ============================================================================

def fit_l2_polynomial(train: LabeledDataset, degree: int) -> Tuple[np.ndarray, bool]:
    """Least-squares Hermite coefficients of y; ridge 1e-8 when the normal equations are singular"""
    Phi = feature_map(train.points, multi_index_array(train.dim, degree))
    gram = Phi.T @ Phi
    rhs = Phi.T @ train.labels.astype(float)
    ridge = False
    try:
        if np.linalg.cond(gram) > CONDITION_LIMIT:
            raise np.linalg.LinAlgError("ill-conditioned normal equations")
        coeffs = np.linalg.solve(gram, rhs)
    except np.linalg.LinAlgError:
        ridge = True
        coeffs = np.linalg.solve(gram + RIDGE_FALLBACK * train.size * np.eye(gram.shape[0]), rhs)
    return coeffs, ridge


def _ptf_errors(coeffs: np.ndarray, degree: int, data: LabeledDataset) -> float:
    values = feature_map(data.points, multi_index_array(data.dim, degree)) @ coeffs
    return float(np.mean(np.where(values >= 0.0, 1, -1) != data.labels))


def baseline_l2(config: LearnerConfig, source: Optional[DataSource] = None) -> RunReport:
    """Degree-k polynomial threshold function fit by least squares (improper)"""
    source = source or DataSource.from_config(config)
    params = config.resolve()
    report = RunReport(task='baseline-l2', config=config.to_dict(), parameters=params.to_dict())
    timer = StageTimer()
    with timer.stage('data'):
        train = source.train(params.n_train)
        test = source.test(params.n_test)
    with timer.stage('solve'):
        coeffs, ridge = fit_l2_polynomial(train, params.degree)
    with timer.stage('evaluate'):
        report.errors = {
            'train': _ptf_errors(coeffs, params.degree, train),
            'test': _ptf_errors(coeffs, params.degree, test),
            'n_train': train.size,
            'n_test': test.size,
        }
    report.solver = {'method': 'least_squares', 'ridge_fallback': ridge, 'ridge': RIDGE_FALLBACK if ridge else 0.0}
    report.hypothesis = {'kind': 'ptf', 'degree': params.degree, 'n_coeffs': int(coeffs.size),
                         'coeffs': [repr(float(c)) for c in coeffs]}
    report.guarantee = _guarantee(report.errors['test'], source.opt_upper_bound, config.epsilon)
    if ridge:
        logger.warning(f"⚠️ Normal equations singular; used ridge {RIDGE_FALLBACK:g}")
    report.timings = timer.finish()
    logger.info(f"✅ L2 baseline (k={params.degree}): test error {report.errors['test']:.4f}")
    return report


def brute_force_proper(config: LearnerConfig, source: Optional[DataSource] = None) -> RunReport:
    """ERM over a full-dimensional halfspace grid at resolution eps/4, d <= 3 only"""
    if source is None and config.dataset is None and config.dim > BRUTE_FORCE_MAX_DIM:
        raise InputError(f"Brute force is limited to d <= {BRUTE_FORCE_MAX_DIM}, got d={config.dim}", stage='brute-force')
    source = source or DataSource.from_config(config)
    if source.dim > BRUTE_FORCE_MAX_DIM:
        raise InputError(f"Brute force is limited to d <= {BRUTE_FORCE_MAX_DIM}, got d={source.dim}", stage='brute-force')
    params = config.resolve()
    report = RunReport(task='brute-force', config=config.to_dict(), parameters=params.to_dict())
    timer = StageTimer()
    with timer.stage('data'):
        train = source.train(params.n_train)
        test = source.test(params.n_test)
    with timer.stage('cover'):
        full = Subspace(np.eye(source.dim), np.ones(source.dim))
        cover = build_cover(full, config.epsilon / 4.0, max_cover=config.max_cover, seed=config.seed,
                            max_candidates=config.max_candidates)
        report.cover = {'size': len(cover), 'eps_cover': config.epsilon / 4.0, 'rank': source.dim}
    with timer.stage('search'):
        h, _ = erm_halfspace(cover, train, threads=config.threads)
    with timer.stage('evaluate'):
        report.errors = {'train': empirical_error(h, train), 'test': empirical_error(h, test),
                         'n_train': train.size, 'n_test': test.size}
    report.hypothesis = h.to_dict()
    report.guarantee = _guarantee(report.errors['test'], source.opt_upper_bound, config.epsilon)
    report.timings = timer.finish()
    logger.info(f"✅ Brute force over {len(cover)} halfspaces: test error {report.errors['test']:.4f}")
    return report
