"""Slowly increasing weight construction and its defining properties."""

from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from skewtherm.errors import ArgumentError, EstimationError
from skewtherm.slowvar import SlowFunction, construct_slow, slow_properties_check, unit_slow


def inverse_square(n_max):
    ns = np.arange(n_max + 1, dtype=float)
    ns[0] = 1.0
    b = ns**-2.0
    b[0] = 0.0
    return b


def test_construct_inverse_square_invariants():
    n = 10**6
    b = inverse_square(n)
    c = construct_slow(b)
    report = slow_properties_check(c, n, coefficients=b)
    assert report["monotone_defect"] == 0.0
    assert report["submultiplicative_defect"] <= 0.0
    assert report["end_ratio"] <= 1.01
    assert report["enhancement"] >= 3.0
    assert report["rate_decreasing"] == 1.0


def test_ratio_small_past_thousand():
    b = inverse_square(10**6)
    c = construct_slow(b)
    logs = c.log_values_up_to(10**6)
    ratios = np.exp(np.diff(logs[1000:]))
    assert ratios.max() <= 1.01


def test_submultiplicative_exhaustive_small():
    b = inverse_square(10**5)
    c = construct_slow(b)
    logs = c.log_values_up_to(2000)
    for n in range(1, 1000):
        for k in range(1, 1000, 37):
            if n + k <= 2000:
                assert logs[n + k] <= logs[n] + logs[k] + 1e-12


def test_geometric_coefficients_give_unit_weight():
    g = 0.7
    b = g ** np.arange(0, 2001, dtype=float)
    b[0] = 0.0
    c = construct_slow(b)
    assert c.is_unit
    assert np.all(c.values_up_to(100) == 1.0)


def test_anchor_values_pin_reciprocal_tail():
    b = inverse_square(10**6)
    c = construct_slow(b, gamma_hint=1.0)
    for n_r, d_r in zip(c.anchors, c.anchor_exponents):
        # c at an anchor equals 1 / D at that anchor
        assert c.log_value(n_r) == pytest.approx(2.0 * math.log(n_r), rel=1e-12)
        assert d_r == pytest.approx(2.0 * math.log(n_r) / n_r, rel=1e-12)


def test_anchor_thinning_halves_exponents():
    b = inverse_square(10**6)
    c = construct_slow(b)
    for d1, d2 in zip(c.anchor_exponents, c.anchor_exponents[1:]):
        assert d2 <= d1 / 2.0


def test_unit_slow_trivial_report():
    rep = slow_properties_check(unit_slow(), 10**4, coefficients=inverse_square(10**4))
    assert rep["submultiplicative_defect"] <= 0.0
    assert rep["end_ratio"] == 1.0
    assert rep["enhancement"] == pytest.approx(1.0)


def test_degenerate_inputs_rejected():
    with pytest.raises(EstimationError):
        construct_slow(np.zeros(100))
    with pytest.raises(ArgumentError):
        construct_slow(-inverse_square(50))


@settings(max_examples=30, deadline=None)
@given(
    rate=st.floats(min_value=0.2, max_value=0.95),
    power=st.floats(min_value=0.5, max_value=3.0),
)
def test_subexponential_rate_detected(rate, power):
    """Rate estimates at the grid end track the true geometric rate."""
    n = 3000
    ns = np.arange(n + 1, dtype=float)
    ns[0] = 1.0
    b = rate**ns * ns**-power
    b[0] = 0.0
    c = construct_slow(b)
    logs = c.log_values_up_to(n)
    # the constructed weight is subexponential on the grid
    assert logs[n] / n <= 0.05


def test_properties_check_flags_fast_growth():
    bad = SlowFunction(anchors=(4,), anchor_exponents=(0.5,))
    rep = slow_properties_check(bad, 2000)
    assert rep["end_rate"] > 0.05  # clearly not subexponential on this grid
