#!/usr/bin/env python3
"""
Tests for planted models, seeded sampling and dataset files
"""

import numpy as np
import pytest
from numpy.testing import assert_allclose

from cover_search import empirical_error
from learner_errors import DatasetParseError, InputError
from synthetic_data_manager import (LabeledDataset, NoiseModel, PlantedModel, constant_concept, domain_generator,
                                    planted_halfspace, planted_intersection, planted_xor, read_dataset,
                                    sample_dataset, write_dataset)


def _model(noise='rcn:0.1', seed=0, d=3):
    return PlantedModel(planted_halfspace(d, seed=seed), NoiseModel.parse(noise), seed)


def test_noise_model_parsing():
    assert NoiseModel.parse('none') == NoiseModel('none', 0.0)
    assert NoiseModel.parse('rcn:0.1') == NoiseModel('rcn', 0.1)
    assert NoiseModel.parse('slab:0.05').opt_upper_bound == 0.05
    assert NoiseModel.parse('random_labels').opt_upper_bound == 0.5
    assert NoiseModel.parse('rcn:0.25').describe() == 'rcn:0.25'
    for bad in ('rcn:0.6', 'gaussian', 'rcn:abc'):
        with pytest.raises(InputError):
            NoiseModel.parse(bad)


def test_seed_domains_are_independent_streams():
    a = domain_generator(7, 'train').standard_normal(5)
    b = domain_generator(7, 'test').standard_normal(5)
    c = domain_generator(7, 'train', chunk=1).standard_normal(5)
    assert not np.allclose(a, b)
    assert not np.allclose(a, c)
    assert np.array_equal(a, domain_generator(7, 'train').standard_normal(5))
    with pytest.raises(InputError):
        domain_generator(7, 'holdout')


def test_sampling_is_deterministic_and_thread_independent():
    model = _model()
    one = sample_dataset(model, 20000, 3, threads=1)
    many = sample_dataset(model, 20000, 3, threads=4)
    assert np.array_equal(one.points, many.points)
    assert np.array_equal(one.labels, many.labels)
    other = sample_dataset(model, 20000, 3, domain='validation')
    assert not np.array_equal(one.points[:10], other.points[:10])


def test_noiseless_labels_follow_concept():
    model = _model('none')
    data = sample_dataset(model, 1000, 3)
    assert empirical_error(model.concept, data) == 0.0


def test_rcn_flip_rate():
    model = _model('rcn:0.2')
    data = sample_dataset(model, 40000, 3)
    rate = empirical_error(model.concept, data)
    assert abs(rate - 0.2) <= 4.0 * np.sqrt(0.2 * 0.8 / 40000)


def test_slab_noise_flips_the_band():
    model = _model('slab:0.1')
    data = sample_dataset(model, 40000, 3)
    flipped = model.concept.predict(data.points) != data.labels
    margin = np.abs(data.points @ model.slab_direction())
    assert flipped.mean() == pytest.approx(0.1, abs=0.01)
    assert margin[flipped].max() <= margin[~flipped].min()


def test_random_labels_are_balanced():
    data = sample_dataset(_model('random_labels'), 40000, 3)
    assert data.positive_rate() == pytest.approx(0.5, abs=0.02)


def test_concept_factories():
    X = np.random.default_rng(0).standard_normal((500, 4))
    xor = planted_xor(4)
    assert np.array_equal(xor.predict(X), np.where((X[:, 0] >= 0) != (X[:, 1] >= 0), 1, -1))
    inter = planted_intersection(4, K=2, threshold=0.5)
    assert np.array_equal(inter.predict(X), np.where((X[:, 0] >= -0.5) & (X[:, 1] >= -0.5), 1, -1))
    assert constant_concept(4, -1).predict(X).tolist() == [-1] * 500
    assert_allclose(np.linalg.norm(planted_halfspace(4, seed=3).normal), 1.0)
    with pytest.raises(InputError):
        planted_xor(1)
    with pytest.raises(InputError):
        planted_intersection(2, K=3)


def test_dimension_mismatch_rejected():
    with pytest.raises(InputError):
        sample_dataset(_model(d=3), 10, 4)
    with pytest.raises(InputError):
        sample_dataset(_model(), 0, 3)


def test_labeled_dataset_validation_and_frame():
    with pytest.raises(InputError):
        LabeledDataset(np.zeros((3, 2)), np.array([1, 0, -1]))
    with pytest.raises(InputError):
        LabeledDataset(np.zeros((3, 2)), np.array([1, -1]))
    with pytest.raises(InputError):
        LabeledDataset(np.array([[np.inf, 0.0]]), np.array([1]))
    data = LabeledDataset(np.ones((2, 2)), np.array([1, -1]))
    frame = data.to_frame()
    assert list(frame.columns) == ['x1', 'x2', 'y']
    assert data.summary()['positive_rate'] == 0.5


@pytest.mark.parametrize("fmt", ["text", "binary"])
def test_dataset_files_preserve_values(tmp_path, fmt):
    data = sample_dataset(_model(), 257, 3)
    path = tmp_path / f"data.{fmt}"
    write_dataset(path, data, fmt=fmt)
    loaded = read_dataset(path)
    assert np.array_equal(loaded.points, data.points)
    assert np.array_equal(loaded.labels, data.labels)


def test_text_parse_errors_carry_line_numbers(tmp_path):
    path = tmp_path / "bad.txt"
    path.write_text("2 3\n0.1 0.2 +1\n0.3 abc -1\n0.5 0.6 +1\n")
    with pytest.raises(DatasetParseError) as info:
        read_dataset(path)
    assert info.value.line_number == 3

    path.write_text("2 2\n0.1 0.2 +1\n0.3 0.4 0\n")
    with pytest.raises(DatasetParseError) as info:
        read_dataset(path)
    assert info.value.line_number == 3

    path.write_text("2 3\n0.1 0.2 +1\n0.3 0.4 -1\n")
    with pytest.raises(DatasetParseError):
        read_dataset(path)

    path.write_text("2 1\n")
    with pytest.raises(DatasetParseError) as info:
        read_dataset(path)
    assert info.value.line_number == 2

    path.write_text("two 1\n0.1 0.2 +1\n")
    with pytest.raises(DatasetParseError) as info:
        read_dataset(path)
    assert info.value.line_number == 1


def test_binary_parse_errors(tmp_path):
    data = LabeledDataset(np.zeros((2, 2)), np.array([1, -1]))
    path = tmp_path / "data.bin"
    write_dataset(path, data, fmt='binary')
    raw = bytearray(path.read_bytes())
    path.write_bytes(bytes(raw[:-1]))
    with pytest.raises(DatasetParseError):
        read_dataset(path)
    raw[-1] = 0
    path.write_bytes(bytes(raw))
    with pytest.raises(DatasetParseError):
        read_dataset(path)
    with pytest.raises(InputError):
        read_dataset(tmp_path / "missing.txt")
    with pytest.raises(InputError):
        write_dataset(path, data, fmt='csv')
