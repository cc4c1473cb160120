#!/usr/bin/env python3
"""
Small end-to-end runs of the learning pipelines and the comparison points
"""

import json

import numpy as np
import pytest

from agnostic_learner import (PIPELINES, DataSource, baseline_l2, brute_force_proper, fit_l2_polynomial,
                              planted_model, run_algorithm1, run_algorithm2, run_intersection)
from learner_config import LearnerConfig, json_default
from learner_errors import InputError, ResourceBudgetError
from synthetic_data_manager import LabeledDataset


def _config(**overrides):
    base = dict(dim=2, epsilon=0.2, degree_k=2, n_train=2000, n_test=2000, n_valid=1000,
                max_iterations=2000, n_mc=300, residual_points=400, noise='rcn:0.1', seed=1)
    base.update(overrides)
    return LearnerConfig(**base)


# ============================================================================
# PIPELINES
# ============================================================================

def test_halfspace_pipeline_report():
    report = run_algorithm1(_config())
    assert report.status == 'ok'
    assert report.errors['test'] <= 0.1 + 0.2
    assert report.guarantee['passed']
    assert report.checks['dimension_bound']['passed']
    assert report.checks['rank_trace']['passed']
    assert report.checks['erm_exact']['passed']
    assert report.subspace['r'] >= 1
    assert set(report.timings) >= {'data', 'solve', 'spectral', 'cover', 'search', 'evaluate', 'total'}
    assert report.hypothesis['kind'] == 'halfspace'


def test_boolean_pipeline_learns_xor():
    config = _config(task='boolean', K=2, dim=3, noise='none', eps_cover=0.25, n_valid=800)
    report = run_algorithm2(config)
    assert report.status == 'ok'
    assert report.subspace['r'] >= 2
    assert report.errors['test'] <= 0.25


def test_intersection_pipeline_uses_conjunction():
    config = _config(task='intersection', K=2, dim=3, noise='none', eps_cover=0.25, n_valid=800)
    report = run_intersection(config)
    assert report.hypothesis['truth_table'] == '0001'
    assert report.errors['test'] <= 0.3


def test_pipelines_check_their_task():
    with pytest.raises(InputError):
        run_algorithm1(_config(task='boolean', K=2))
    with pytest.raises(InputError):
        run_algorithm2(_config())
    with pytest.raises(InputError):
        run_intersection(_config())
    assert set(PIPELINES) == {'halfspace', 'boolean', 'intersection'}


def test_reports_are_deterministic():
    first = run_algorithm1(_config(seed=4)).deterministic_view()
    second = run_algorithm1(_config(seed=4)).deterministic_view()
    assert json.dumps(first, default=json_default) == json.dumps(second, default=json_default)


def test_cover_budget_leaves_partial_report():
    with pytest.raises(ResourceBudgetError) as info:
        run_algorithm1(_config(max_cover=5))
    report = info.value.partial_report
    assert report.status == 'failed'
    assert report.failed_stage == 'cover'
    assert report.solver['n_coeffs'] == 6
    assert info.value.exit_code == 3


def test_search_budget_keeps_best_hypothesis():
    config = _config(task='boolean', K=2, dim=3, noise='none', eps_cover=0.25, n_valid=300, max_tuples=10)
    with pytest.raises(ResourceBudgetError) as info:
        run_algorithm2(config)
    report = info.value.partial_report
    assert report.failed_stage == 'search'
    assert report.hypothesis['kind'] == 'boolean'
    assert 0.0 <= report.errors['validation'] <= 1.0


# ============================================================================
# DATA SOURCES
# ============================================================================

def test_planted_model_auto_concepts():
    assert planted_model(_config()).concept.dim == 2
    xor = planted_model(_config(task='boolean', K=2, dim=3)).concept
    assert xor.truth_table.tolist() == [-1, 1, 1, -1]
    inter = planted_model(_config(task='intersection', K=2, dim=3)).concept
    assert inter.halfspaces[0].threshold == 0.5
    assert planted_model(_config(concept='constant-')).concept.constant_sign == -1


def test_file_dataset_is_split_in_halves_and_quarters():
    rng = np.random.default_rng(0)
    data = LabeledDataset(rng.standard_normal((40, 2)), np.where(rng.random(40) < 0.5, 1, -1))
    source = DataSource(dataset=data, seed=3)
    train, valid, test = source.train(100), source.validation(100), source.test(100)
    assert (train.size, valid.size, test.size) == (20, 10, 10)
    assert source.opt_upper_bound is None
    rows = np.concatenate([train.points, valid.points, test.points])
    assert np.unique(rows, axis=0).shape[0] == 40
    assert source.train(5).size == 5


def test_data_source_needs_exactly_one_input():
    with pytest.raises(InputError):
        DataSource()
    with pytest.raises(InputError):
        DataSource(dataset=LabeledDataset(np.zeros((2, 2)), np.array([1, -1])))


def test_pipeline_on_dataset_file_has_no_guarantee(tmp_path):
    from synthetic_data_manager import sample_dataset, write_dataset
    model = planted_model(_config())
    path = tmp_path / "data.txt"
    write_dataset(path, sample_dataset(model, 4000, 2), fmt='text')
    report = run_algorithm1(_config(dataset=str(path), n_valid=None))
    assert report.guarantee['passed'] is None
    assert report.errors['n_train'] == 2000
    assert 'correlation_residual' not in report.checks


# ============================================================================
# COMPARISON POINTS
# ============================================================================

def test_l2_baseline():
    report = baseline_l2(_config())
    assert report.task == 'baseline-l2'
    assert report.hypothesis['n_coeffs'] == 6
    assert report.errors['test'] <= 0.3


def test_l2_fit_falls_back_to_ridge_on_duplicated_points():
    data = LabeledDataset(np.ones((10, 2)), np.ones(10, dtype=int))
    coeffs, ridge = fit_l2_polynomial(data, 2)
    assert ridge
    assert np.all(np.isfinite(coeffs))


def test_brute_force_proper():
    report = brute_force_proper(_config(n_train=1000))
    assert report.task == 'brute-force'
    assert report.cover['rank'] == 2
    assert report.errors['test'] <= 0.1 + 0.2


def test_brute_force_refuses_high_dimension():
    with pytest.raises(InputError):
        brute_force_proper(_config(dim=4))


def test_brute_force_reaches_three_dimensions():
    with pytest.raises(ResourceBudgetError):
        brute_force_proper(_config(dim=3, max_candidates=1000))
    report = brute_force_proper(_config(dim=3, epsilon=0.45, max_cover=1_000_000, n_train=300, n_test=1000))
    assert report.cover['rank'] == 3
    assert report.errors['test'] <= 0.1 + 0.45


def test_brute_force_guards_the_dataset_dimension(tmp_path):
    from synthetic_data_manager import sample_dataset, write_dataset
    plane = tmp_path / "plane.txt"
    write_dataset(plane, sample_dataset(planted_model(_config()), 400, 2), fmt='text')
    report = brute_force_proper(LearnerConfig(dataset=str(plane), n_train=1000))
    assert report.cover['rank'] == 2
    assert report.errors['n_train'] == 200

    space = tmp_path / "space.txt"
    write_dataset(space, sample_dataset(planted_model(_config(dim=4)), 40, 4), fmt='text')
    with pytest.raises(InputError):
        brute_force_proper(LearnerConfig(dim=2, dataset=str(space)))


# ============================================================================
# DEGENERATE SETTINGS
# ============================================================================

def test_single_halfspace_pipelines_agree():
    shared = dict(concept='halfspace', eps_cover=0.2)
    halfspace = run_algorithm1(_config(**shared))
    boolean = run_algorithm2(_config(task='boolean', K=1, **shared))
    intersection = run_intersection(_config(task='intersection', K=1, **shared))
    assert intersection.errors['validation'] == halfspace.errors['validation']
    assert intersection.errors['test'] == halfspace.errors['test']
    assert boolean.errors['validation'] <= halfspace.errors['validation']
    assert abs(boolean.errors['test'] - halfspace.errors['test']) <= 0.05


def test_pipeline_is_total_at_degree_one_without_nuclear_penalty():
    report = run_algorithm1(_config(degree_k=1, nu=0.0))
    assert report.status == 'ok'
    assert 0.0 <= report.errors['test'] <= 1.0
    assert report.hypothesis['kind'] == 'halfspace'


def test_coin_flip_labels_stay_near_one_half():
    report = run_algorithm1(_config(noise='random_labels'))
    assert report.errors['test'] <= 0.55
