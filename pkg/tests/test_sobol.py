"""Sobol generator against scipy's unscrambled generator and known first points."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.stats import qmc

from rtpinn.errors import UnsupportedDimensionError
from rtpinn.sobol import sobol_sequence


def test_first_points_one_dimension():
    np.testing.assert_array_equal(sobol_sequence(1, 4, skip=0)[:, 0], [0.0, 0.5, 0.75, 0.25])
    assert sobol_sequence(1, 3, 1)[2, 0] == 0.25


@pytest.mark.parametrize("dim", [1, 2, 5, 16])
def test_matches_scipy_unscrambled(dim):
    ours = sobol_sequence(dim, 2048, skip=0)
    ref = qmc.Sobol(dim, scramble=False).random(2048)
    np.testing.assert_array_equal(ours, ref)


@given(dim=st.integers(1, 16), n=st.integers(0, 300), skip=st.integers(0, 300))
@settings(max_examples=40, deadline=None)
def test_skip_is_a_suffix(dim, n, skip):
    full = sobol_sequence(dim, n + skip, skip=0)
    np.testing.assert_array_equal(sobol_sequence(dim, n, skip=skip), full[skip:])


@given(dim=st.integers(1, 16), m=st.integers(1, 10))
@settings(max_examples=30, deadline=None)
def test_net_is_stratified_in_each_coordinate(dim, m):
    pts = sobol_sequence(dim, 2**m, skip=0)
    assert np.all((pts >= 0) & (pts < 1))
    for j in range(dim):
        counts = np.bincount((pts[:, j] * 2**m).astype(int), minlength=2**m)
        assert np.all(counts == 1)


def test_bit_identical_across_calls():
    assert sobol_sequence(7, 1000).tobytes() == sobol_sequence(7, 1000).tobytes()


def test_mean_of_product():
    assert abs(np.mean(np.prod(sobol_sequence(3, 4096), axis=1)) - 0.125) < 2e-3


@pytest.mark.parametrize("dim", [0, 17])
def test_rejects_unsupported_dimension(dim):
    with pytest.raises(UnsupportedDimensionError):
        sobol_sequence(dim, 4)
