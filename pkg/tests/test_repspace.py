"""Cone vectors, translation, convolution, reflection."""

from __future__ import annotations

import numpy as np
import pytest

from skewtherm.errors import ArgumentError, BackendMismatch, BudgetExceeded
from skewtherm.groups import AbelianQuotient, FreeAbelian, FreeGroup
from skewtherm.repspace import (
    ConeVector,
    FiniteDensity,
    RepSpace,
    convolve,
    delta,
    inner,
    matrix_coefficient,
    star,
    translate,
)


def z_space():
    return RepSpace(FreeAbelian(1))


def random_cone(space, rng, size=6, span=8):
    weights = {}
    for _ in range(size):
        p = (int(rng.integers(-span, span + 1)),)
        weights[p] = float(rng.random())
    return ConeVector(space, weights)


def test_inner_examples():
    sp = z_space()
    d0 = delta(sp, (0,))
    d1 = delta(sp, (1,))
    assert inner(d0, d0) == 1.0
    assert inner(d0, d1) == 0.0
    f = ConeVector(sp, {(0,): 1.0, (1,): 2.0})
    v = ConeVector(sp, {(1,): 3.0})
    assert inner(f, v) == 6.0


def test_translate_examples():
    sp = z_space()
    d0 = delta(sp, (0,))
    assert translate((0,), d0).weights == {(0,): 1.0}
    moved = translate((1,), d0)
    assert moved.weights == {(1,): 1.0}


def test_unitarity_random():
    sp = z_space()
    rng = np.random.default_rng(3)
    for _ in range(100):
        f = random_cone(sp, rng)
        v = random_cone(sp, rng)
        g = (int(rng.integers(-5, 6)),)
        lhs = inner(translate(g, f), translate(g, v))
        assert lhs == pytest.approx(inner(f, v), rel=1e-12, abs=1e-14)
        assert translate(g, f).norm() == pytest.approx(f.norm(), rel=1e-12)


def test_matrix_coefficient_examples():
    sp = z_space()
    d0 = delta(sp, (0,))
    assert matrix_coefficient((0,), d0, d0) == 1.0
    assert matrix_coefficient((1,), d0, d0) == 0.0
    # mod-2 quotient: the doubled vector pairs to 2 under the flip
    q = RepSpace(AbelianQuotient(1, ((2,),)))
    f = ConeVector(q, {(0,): 1.0, (1,): 1.0})
    d0q = delta(q, (0,))
    assert matrix_coefficient((1,), d0q, d0q) == 0.0
    assert matrix_coefficient((1,), f, f) == 2.0


def test_convolve_examples():
    f2 = FreeGroup(2)
    sp = RepSpace(f2)
    de = delta(sp, ())
    phi = FiniteDensity(f2, {(1,): 1.0})
    out = convolve(phi, de)
    assert out.weights == {(1,): 1.0}
    # one step of a walk on the integers
    z = FreeAbelian(1)
    spz = RepSpace(z)
    p = FiniteDensity(z, {(1,): 0.75, (-1,): 0.25})
    step = convolve(p, delta(spz, (0,)))
    assert step[(1,)] == pytest.approx(0.75)
    assert step[(-1,)] == pytest.approx(0.25)
    zero = FiniteDensity(z, {})
    assert convolve(zero, delta(spz, (0,))).weights == {}


def test_star_examples():
    z = FreeAbelian(1)
    sym = FiniteDensity(z, {(1,): 0.5, (-1,): 0.5})
    assert star(sym).masses == sym.masses
    f2 = FreeGroup(2)
    one = FiniteDensity(f2, {(1,): 1.0})
    assert star(one).masses == {(-1,): 1.0}
    rng = np.random.default_rng(4)
    rand = FiniteDensity(
        z, {(int(rng.integers(-5, 6)),): float(rng.random()) for _ in range(6)}
    )
    assert star(star(rand)).masses == rand.masses


def test_adjoint_identity():
    sp = z_space()
    rng = np.random.default_rng(5)
    z = sp.backend
    for _ in range(50):
        f = random_cone(sp, rng)
        v = random_cone(sp, rng)
        phi = FiniteDensity(
            z, {(int(rng.integers(-4, 5)),): float(rng.random()) for _ in range(5)}
        )
        lhs = inner(convolve(phi, f), v)
        rhs = inner(f, convolve(star(phi), v))
        assert lhs == pytest.approx(rhs, rel=1e-12, abs=1e-14)


def test_cone_preserved_and_cauchy_schwarz():
    sp = z_space()
    rng = np.random.default_rng(6)
    for _ in range(50):
        f = random_cone(sp, rng)
        v = random_cone(sp, rng)
        g = (int(rng.integers(-4, 5)),)
        assert all(w >= 0 for w in translate(g, f).weights.values())
        assert inner(f, v) <= f.norm() * v.norm() + 1e-12


def test_negative_weight_rejected():
    sp = z_space()
    with pytest.raises(ArgumentError):
        ConeVector(sp, {(0,): -1.0})


def test_space_mismatch():
    a = delta(RepSpace(FreeAbelian(1)), (0,))
    b = delta(RepSpace(FreeAbelian(2)), (0, 0))
    with pytest.raises(BackendMismatch):
        inner(a, b)


def test_prune_tracks_mass():
    sp = z_space()
    f = ConeVector(sp, {(0,): 1.0, (1,): 1e-20})
    pruned = f.pruned(1e-15)
    assert (1,) not in pruned.weights
    assert pruned.pruned_mass == pytest.approx(1e-20)


def test_budget_guard():
    z = FreeAbelian(1)
    spz = RepSpace(z)
    wide = ConeVector(spz, {(k,): 1.0 for k in range(100)})
    phi = FiniteDensity(z, {(k,): 1.0 for k in range(10)})
    with pytest.raises(BudgetExceeded):
        convolve(phi, wide, budget=50)


from hypothesis import given, settings
from hypothesis import strategies as st

_points = st.integers(min_value=-6, max_value=6)
_weights = st.floats(min_value=0.0, max_value=5.0, allow_nan=False)
_cone = st.dictionaries(st.tuples(_points), _weights, min_size=1, max_size=6)
_density = st.dictionaries(st.tuples(_points), _weights, min_size=1, max_size=5)


@settings(max_examples=60, deadline=None)
@given(f=_cone, v=_cone, g=_points)
def test_property_translation_is_unitary(f, v, g):
    sp = z_space()
    fv = ConeVector(sp, f)
    vv = ConeVector(sp, v)
    lhs = inner(translate((g,), fv), translate((g,), vv))
    assert lhs == pytest.approx(inner(fv, vv), rel=1e-12, abs=1e-12)


@settings(max_examples=60, deadline=None)
@given(f=_cone, v=_cone, phi=_density)
def test_property_reflection_is_adjoint(f, v, phi):
    sp = z_space()
    fv = ConeVector(sp, f)
    vv = ConeVector(sp, v)
    dens = FiniteDensity(sp.backend, phi)
    lhs = inner(convolve(dens, fv), vv)
    rhs = inner(fv, convolve(star(dens), vv))
    assert lhs == pytest.approx(rhs, rel=1e-12, abs=1e-12)


@settings(max_examples=40, deadline=None)
@given(f=_cone, g=_points, h=_points)
def test_property_translation_composes(f, g, h):
    sp = z_space()
    fv = ConeVector(sp, f)
    composed = translate(sp.backend.compose((g,), (h,)), fv)
    stacked = translate((g,), translate((h,), fv))
    assert composed.weights == stacked.weights
