"""Radial fast path against brute-force ball computations."""

from __future__ import annotations

import itertools

import numpy as np
import pytest

from skewtherm.groups import FreeGroup
from skewtherm.radial import (
    RadialAlgebra,
    RadialVector,
    discounted_walk_vector,
    horner_weighted_sum,
    return_coefficients,
)


def ball(backend: FreeGroup, radius: int):
    """All reduced words up to the radius (brute force)."""
    letters = [i for i in range(1, backend.rank + 1)] + [
        -i for i in range(1, backend.rank + 1)
    ]
    out = {(): None}
    frontier = [()]
    for _ in range(radius):
        nxt = []
        for w in frontier:
            for s in letters:
                g = backend.compose(w, (s,))
                if g not in out and len(g) == len(w) + 1:
                    out[g] = None
                    nxt.append(g)
        frontier = nxt
    return list(out)


def test_sphere_sizes_match_bruteforce():
    backend = FreeGroup(2)
    alg = RadialAlgebra(2, max_radius=6)
    elements = ball(backend, 5)
    for k in range(6):
        count = sum(1 for g in elements if len(g) == k)
        assert count == alg.sphere_size(k)


def test_overlap_counts_match_bruteforce():
    backend = FreeGroup(2)
    alg = RadialAlgebra(2, max_radius=8)
    elements = ball(backend, 5)
    rng = np.random.default_rng(2)
    for _ in range(12):
        g = elements[int(rng.integers(0, len(elements)))]
        j = len(g)
        for k in range(5):
            expected = {}
            for x in elements:
                if len(x) != k:
                    continue
                length = len(backend.compose(backend.inverse(g), x))
                m = (j + k - length) // 2
                expected[m] = expected.get(m, 0) + 1
            got = dict(alg.overlap_counts(j, k))
            assert got == expected


def test_step_value_matches_bruteforce_convolution():
    backend = FreeGroup(2)
    alg = RadialAlgebra(2, max_radius=8)
    elements = ball(backend, 6)
    rng = np.random.default_rng(3)
    values = rng.random(9)
    letters = [(1,), (-1,), (2,), (-2,)]

    def u(g):
        return values[len(g)] if len(g) <= 8 else 0.0

    stepped = alg.step_value(values)
    for g in elements:
        if len(g) > 5:
            continue
        brute = 0.25 * sum(u(backend.compose(backend.inverse(s), g)) for s in letters)
        assert stepped[len(g)] == pytest.approx(brute, rel=1e-12)


def test_mass_value_consistency():
    alg = RadialAlgebra(2, max_radius=40)
    value = alg.identity_value()
    mass = value.copy()
    for _ in range(12):
        value = alg.step_value(value)
        mass = alg.step_mass(mass)
    for k in range(0, 13):
        assert mass[k] == pytest.approx(value[k] * alg.sphere_size(k), rel=1e-12)
    assert mass.sum() == pytest.approx(1.0, rel=1e-12)


def test_translated_inner_matches_bruteforce():
    backend = FreeGroup(2)
    alg = RadialAlgebra(2, max_radius=10)
    elements = ball(backend, 5)
    rng = np.random.default_rng(4)
    uvals = np.zeros(11)
    wvals = np.zeros(11)
    uvals[:6] = rng.random(6)
    wvals[:6] = rng.random(6)
    u = RadialVector.from_value(alg, uvals)
    w = RadialVector.from_value(alg, wvals)
    for g in [(), (1,), (1, 2), (2, -1, 2), (1, 2, 1, 2)]:
        brute = 0.0
        for x in elements:
            moved = backend.compose(backend.inverse(g), x)
            if len(moved) <= 5:
                brute += uvals[len(moved)] * wvals[len(x)]
        got = u.translated_inner(len(g), w)
        assert got == pytest.approx(brute, rel=1e-11)


def test_translated_inner_radial_constancy():
    """Same-length elements give identical pairings (brute force)."""
    backend = FreeGroup(2)
    alg = RadialAlgebra(2, max_radius=10)
    elements = ball(backend, 5)
    rng = np.random.default_rng(9)
    uvals = np.zeros(11)
    uvals[:6] = rng.random(6)
    u = RadialVector.from_value(alg, uvals)
    for j, reps in [(2, [(1, 2), (2, 2), (-1, 2)]), (3, [(1, 2, 1), (2, -1, -2)])]:
        brutes = []
        for g in reps:
            brute = 0.0
            for x in elements:
                moved = backend.compose(backend.inverse(g), x)
                if len(moved) <= 5:
                    brute += uvals[len(moved)] * uvals[len(x)]
            brutes.append(brute)
        assert max(brutes) - min(brutes) <= 1e-9 * max(brutes)
        assert u.translated_inner(j, u) == pytest.approx(brutes[0], rel=1e-11)


def test_return_coefficients_small_n():
    alg = RadialAlgebra(2, max_radius=10)
    coeffs = return_coefficients(alg, 6)
    # brute force over all letter strings of the uniform walk
    letters = [(1,), (-1,), (2,), (-2,)]
    backend = FreeGroup(2)
    for n in range(1, 7):
        brute = 0.0
        for word in itertools.product(letters, repeat=n):
            g = ()
            for s in word:
                g = backend.compose(g, s)
            if g == ():
                brute += 0.25**n
        assert coeffs[n] == pytest.approx(brute, rel=1e-12)


def test_horner_matches_direct_sum():
    alg = RadialAlgebra(2, max_radius=30)
    rng = np.random.default_rng(5)
    base = rng.random(31)
    weights = np.zeros(9)
    weights[3:] = rng.random(6)
    beta = 0.83
    direct = np.zeros_like(base)
    power = base.copy()
    for n in range(3, 9):
        if n > 3:
            power = beta * alg.step_value(power)
        direct += weights[n] * power
    got = horner_weighted_sum(alg, base, weights, start=3, step_scale=beta)
    assert np.allclose(got, direct, rtol=1e-12)


def test_discounted_walk_vector_matches_layers():
    alg = RadialAlgebra(2, max_radius=20)
    c = np.ones(9)
    beta = 0.9
    u = discounted_walk_vector(alg, 8, c, beta)
    direct_val = np.zeros(21)
    value = alg.identity_value()
    for n in range(1, 9):
        value = alg.step_value(value)
        direct_val += beta**n * value
    assert np.allclose(u.value, direct_val, rtol=1e-12)
