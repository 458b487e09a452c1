import itertools
import math

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from uavtrack.amc import (
    ResponseMap, UnitCells, amc_matrix, argmax_center, bidirectional_distances, response_map,
)
from uavtrack.types import FeatureMap, GridGeometry

from conftest import planted_map, random_unit


def test_response_single_planted_cell(small_geom):
    e = np.eye(8)[2]
    fm = planted_map(small_geom, [(20, 10, e)])
    r = response_map(fm, e).values
    assert r[10, 20] == 1.0
    r[10, 20] = 0
    assert np.all(r == 0)


def test_response_antipodal(small_geom, rng):
    e = random_unit(rng, 8)
    fm = FeatureMap(small_geom, np.broadcast_to(-e, (24, 32, 8)).copy())
    np.testing.assert_allclose(response_map(fm, e).values, -1.0, atol=1e-12)


def test_response_matches_per_cell_oracle(rng):
    geom = GridGeometry(32, 32, 16)
    values = rng.standard_normal((32, 32, 16))
    values[3, 4] = 0.0
    fm = FeatureMap(geom, values)
    e = random_unit(rng, 16)
    r = response_map(fm, e).values
    assert r.min() >= -1 and r.max() <= 1
    mpmath.mp.dps = 30
    em = [mpmath.mpf(float(x)) for x in e]
    for y in range(0, 32, 3):
        for x in range(0, 32, 3):
            v = [mpmath.mpf(float(c)) for c in values[y, x]]
            n = mpmath.sqrt(sum(c * c for c in v))
            want = 0 if n == 0 else sum(a * b for a, b in zip(v, em)) / n
            assert abs(r[y, x] - float(want)) < 1e-6
    assert r[3, 4] == 0.0


def test_response_dimension_mismatch(small_geom):
    fm = planted_map(small_geom, [])
    with pytest.raises(ValueError):
        response_map(fm, np.ones(4) / 2)


def test_argmax_unique_peak(small_geom):
    v = np.zeros((24, 32))
    v[10, 20] = 0.5
    assert argmax_center(ResponseMap(small_geom, v)) == (20, 10)


def test_argmax_tie_smallest_row_major(small_geom):
    v = np.zeros((24, 32))
    v[5, 5] = v[5, 6] = 0.9
    assert argmax_center(ResponseMap(small_geom, v)) == (5, 5)
    v[4, 30] = 0.9
    assert argmax_center(ResponseMap(small_geom, v)) == (30, 4)


def test_argmax_all_zero(small_geom):
    assert argmax_center(ResponseMap(small_geom, np.zeros((24, 32)))) == (0, 0)


def test_forward_distance_345(small_geom):
    e = np.eye(8)[0]
    fm = planted_map(small_geom, [(5, 5, e)])
    d_f, d_b = bidirectional_distances([e], [(5, 5)], [e], [(8, 9)], fm, fm)
    assert d_f[0, 0] == 5.0
    assert d_b[0, 0] == 0.0


def test_perfect_correspondence_zero(small_geom):
    e = np.eye(8)[3]
    prev = planted_map(small_geom, [(4, 6, e)])
    cur = planted_map(small_geom, [(12, 6, e)])
    d_f, d_b = bidirectional_distances([e], [(4, 6)], [e], [(12, 6)], cur, prev)
    assert d_f[0, 0] == 0 and d_b[0, 0] == 0


def test_distances_match_bruteforce(rng):
    geom = GridGeometry(20, 30, 16)
    tr_e = [random_unit(rng, 16) for _ in range(2)]
    de_e = [random_unit(rng, 16) for _ in range(3)]
    prev = planted_map(geom, [(int(rng.integers(30)), int(rng.integers(20)), e) for e in tr_e + de_e], rng, 0.05)
    cur = planted_map(geom, [(int(rng.integers(30)), int(rng.integers(20)), e) for e in tr_e + de_e], rng, 0.05)
    tr_c = rng.uniform(0, 20, size=(2, 2))
    de_c = rng.uniform(0, 20, size=(3, 2))
    d_f, d_b = bidirectional_distances(tr_e, tr_c, de_e, de_c, cur, prev)

    def peak(fm, e):
        best, arg = -2.0, None
        for y in range(geom.height):
            for x in range(geom.width):
                v = fm.values[y, x]
                n = math.sqrt(sum(c * c for c in v))
                s = sum(a * b for a, b in zip(v, e)) / n if n else 0.0
                if s > best + 1e-12:
                    best, arg = s, (x, y)
        return arg

    for j, i in itertools.product(range(2), range(3)):
        q = peak(cur, tr_e[j])
        assert d_f[j, i] == pytest.approx(math.dist(q, de_c[i]), abs=1e-12)
        q = peak(prev, de_e[i])
        assert d_b[j, i] == pytest.approx(math.dist(q, tr_c[j]), abs=1e-12)


def test_geometry_mismatch():
    a = FeatureMap(GridGeometry(4, 4, 2), np.zeros((4, 4, 2)))
    b = FeatureMap(GridGeometry(4, 5, 2), np.zeros((4, 5, 2)))
    with pytest.raises(ValueError):
        bidirectional_distances([[1, 0]], [(0, 0)], [[1, 0]], [(0, 0)], a, b)


def test_amc_examples():
    assert amc_matrix([[0.0]], [[0.0]], 5)[0, 0] == 0.0
    mpmath.mp.dps = 40
    want = 1 - mpmath.exp(mpmath.mpf(-10) / 50)
    got = amc_matrix([[5.0]], [[5.0]], 5.0)[0, 0]
    assert abs(got - float(want)) < 1e-15
    assert got == pytest.approx(0.181269, abs=1e-6)


def test_amc_monotone_and_bounded():
    d = np.linspace(0, 1e4, 1001)
    c = amc_matrix(d[None, :], np.zeros((1, 1001)), 5.0)[0]
    assert np.all(np.diff(c) >= 0)
    assert np.all(np.diff(c[:30]) > 0)  # beyond ~1800 cells the cost rounds to 1.0
    assert c[0] == 0 and c[-1] <= 1.0 and c[-1] > 0.999999


@given(st.lists(st.floats(0, 500), min_size=4, max_size=4),
       st.lists(st.floats(0, 500), min_size=4, max_size=4),
       st.floats(0.1, 50))
def test_amc_symmetric_in_arguments(a, b, sigma):
    a, b = np.reshape(a, (2, 2)), np.reshape(b, (2, 2))
    np.testing.assert_array_equal(amc_matrix(a, b, sigma), amc_matrix(b, a, sigma))


@given(st.floats(0, 500), st.floats(0, 500), st.floats(0, 100))
def test_amc_monotone_in_each_entry(df, db, bump):
    assert amc_matrix([[df + bump]], [[db]])[0, 0] >= amc_matrix([[df]], [[db]])[0, 0]


@settings(max_examples=30, deadline=None)
@given(st.integers(1, 10), st.integers(0, 2**31))
def test_planted_peak_true_pair_is_row_and_column_min(n, seed):
    rng = np.random.default_rng(seed)
    geom = GridGeometry(16, 24, 32)
    # orthonormal embeddings so every other planted cell is orthogonal
    q, _ = np.linalg.qr(rng.standard_normal((32, n)))
    embs = q.T
    cells = rng.choice(16 * 24, size=2 * n, replace=False)
    prev_xy = [(int(c % 24), int(c // 24)) for c in cells[:n]]
    cur_xy = [(int(c % 24), int(c // 24)) for c in cells[n:]]
    prev = planted_map(geom, [(x, y, e) for (x, y), e in zip(prev_xy, embs)])
    cur = planted_map(geom, [(x, y, e) for (x, y), e in zip(cur_xy, embs)])
    d_f, d_b = bidirectional_distances(embs, prev_xy, embs, cur_xy, cur, prev)
    c = amc_matrix(d_f, d_b, 5.0)
    for j in range(n):
        assert c[j, j] == 0.0
        assert c[j, j] <= c[j].min() and c[j, j] <= c[:, j].min()


def test_unit_cells_scale_invariant_peaks(rng):
    geom = GridGeometry(20, 20, 16)
    fm = FeatureMap(geom, rng.standard_normal((20, 20, 16)))
    scaled = FeatureMap(geom, fm.values * 7.3)
    e = np.stack([random_unit(rng, 16) for _ in range(5)])
    np.testing.assert_array_equal(UnitCells(fm).peaks(e), UnitCells(scaled).peaks(e))
