import math

import numpy as np
import pytest

from conftest import random_mask
from oracles import brute_sdf, brute_sq_edt
from segcalib.distance import EmptyMaskError, edt, sdf_from_labels, sdf_from_mask, squared_edt
from segcalib.grid import DomainError


def test_row_fixture():
    s = sdf_from_mask(np.array([[0, 1, 1, 1, 0]], dtype=np.uint8))
    assert s.tolist() == [[1.0, -1.0, -2.0, -1.0, 1.0]]


def test_squared_edt_matches_brute_force(rng):
    for shape in [(1, 1), (1, 7), (7, 1), (5, 9), (13, 13)]:
        for _ in range(10):
            m = random_mask(rng, shape)
            if not m.any():
                m.flat[rng.integers(m.size)] = 1
            assert np.array_equal(squared_edt(m), brute_sq_edt(m))


def test_sparse_masks(rng):
    for _ in range(20):
        m = np.zeros((17, 23), dtype=np.uint8)
        m[tuple(rng.integers(0, 17, 1)), tuple(rng.integers(0, 23, 1))] = 1
        assert np.array_equal(squared_edt(m), brute_sq_edt(m))


def test_single_pixel_distance():
    m = np.zeros((5, 5), dtype=np.uint8)
    m[0, 0] = 1
    assert edt(m)[3, 4] == 5.0


def test_sdf_matches_brute_force(rng):
    for _ in range(20):
        m = random_mask(rng, (9, 11))
        if m.all() or not m.any():
            continue
        assert np.array_equal(sdf_from_mask(m), brute_sdf(m))


def test_sdf_sign_convention(rng):
    m = random_mask(rng, (12, 12), 0.4)
    s = sdf_from_mask(m)
    assert np.all(s[m == 1] < 0) and np.all(s[m == 0] > 0)


def test_edt_of_empty_mask_raises():
    with pytest.raises(EmptyMaskError):
        edt(np.zeros((4, 4), dtype=np.uint8))


def test_sdf_of_absent_and_full_class():
    d = math.hypot(4, 6)
    assert np.all(sdf_from_mask(np.zeros((4, 6), dtype=np.uint8)) == d)
    assert np.all(sdf_from_mask(np.ones((4, 6), dtype=np.uint8)) == -d)


def test_max_abs_normalization(rng):
    m = random_mask(rng, (10, 10))
    s = sdf_from_mask(m, "max_abs")
    assert np.abs(s).max() == pytest.approx(1.0)
    with pytest.raises(DomainError):
        sdf_from_mask(m, "minmax")


def test_sdf_from_labels_shapes(rng):
    y = rng.integers(0, 3, (2, 8, 8))
    s = sdf_from_labels(y, 3)
    assert s.shape == (2, 3, 8, 8)
    assert np.array_equal(s[1, 2], sdf_from_mask((y[1] == 2).astype(np.uint8)))
    assert sdf_from_labels(y[0], 3).shape == (3, 8, 8)


def test_vectorized_oracle_agrees_with_loop_oracle(rng):
    from oracles import allpairs_sq_edt
    for _ in range(5):
        m = random_mask(rng, (6, 7))
        m[0, 0] = 1
        assert np.array_equal(allpairs_sq_edt(m), brute_sq_edt(m))
