"""Path sampling, decay statistics, and summability majorants."""

from __future__ import annotations

import numpy as np
import pytest

from skewtherm import systems
from skewtherm.decaylab import (
    adversarial_lower_bound,
    adversarial_vector,
    borel_cantelli_bound,
    decay_report,
    heavy_tail_vector,
    sample_paths,
)
from skewtherm.errors import ArgumentError, DivergenceGuard
from skewtherm.repspace import ConeVector, RepSpace, delta
from skewtherm.thermo import equilibrium_chain, transfer_spectrum


def chain_for(system):
    return equilibrium_chain(transfer_spectrum(system.spec))


def test_sampling_deterministic_and_stationary():
    fs = systems.full_shift([0.5, 0.5])
    chain = chain_for(fs)
    a = sample_paths(fs, chain, count=200, length=100, seed=9)
    b = sample_paths(fs, chain, count=200, length=100, seed=9)
    assert [p.letters for p in a] == [p.letters for p in b]
    freq = np.mean([p.letters.count(0) / 100 for p in a])
    assert freq == pytest.approx(0.5, abs=0.02)


def test_sampling_threads_reproduce_sequential():
    fs = systems.full_shift([0.5, 0.5])
    chain = chain_for(fs)
    seq = sample_paths(fs, chain, count=64, length=50, seed=4, threads=1)
    par = sample_paths(fs, chain, count=64, length=50, seed=4, threads=4)
    assert [p.letters for p in seq] == [p.letters for p in par]


def test_golden_mean_letter_frequency_matches_stationary():
    gm = systems.golden_mean_shift(weights=(1.0, 1.0))
    chain = chain_for(gm)
    paths = sample_paths(gm, chain, count=400, length=200, seed=5)
    freq1 = np.mean([p.letters.count(1) / 200 for p in paths])
    assert freq1 == pytest.approx(chain.stationary[1], abs=0.02)


def test_products_consistent_with_marking():
    zw = systems.z_walk(0.5)
    chain = chain_for(zw)
    (path,) = sample_paths(zw, chain, count=1, length=30, seed=2)
    for k in range(1, 31):
        assert path.products[k - 1] == zw.marking.product(path.letters[:k])


def test_f2_no_late_returns():
    f2 = systems.f2_simple_walk()
    chain = chain_for(f2)
    paths = sample_paths(f2, chain, count=1000, length=200, seed=42)
    rep = decay_report(f2, None, None, gamma=0.95, paths=paths, burn_in=50)
    assert rep.exceedance_rate <= 1e-3
    assert not rep.persistent


def test_exceedances_monotone_in_gamma():
    zw = systems.z_walk(0.5)
    chain = chain_for(zw)
    paths = sample_paths(zw, chain, count=300, length=120, seed=11)
    counts = []
    for gamma in (0.7, 0.8, 0.9, 0.97):
        rep = decay_report(zw, None, None, gamma=gamma, paths=paths, burn_in=5)
        counts.append(rep.exceedance_count)
    assert all(a <= b for a, b in zip(counts, counts[1:]))


def test_z3_transient_returns_finite():
    z3 = systems.z3_walk()
    chain = chain_for(z3)
    paths = sample_paths(z3, chain, count=200, length=300, seed=3)
    rep = decay_report(z3, None, None, gamma=0.99, paths=paths, burn_in=1)
    # transience: on average only a handful of returns per path, none late
    assert rep.exceedance_count / 200 < 3.0
    assert not rep.persistent


def test_heavy_tail_persistent_exceedances():
    zw = systems.z_walk(0.5)
    chain = chain_for(zw)
    paths = sample_paths(zw, chain, count=200, length=200, seed=7)
    v = heavy_tail_vector(zw, exponent=0.75, cutoff=4000)
    rep = decay_report(zw, None, v, gamma=0.9, paths=paths, burn_in=50)
    assert rep.persistent
    assert rep.max_exceedance_step == 200


def test_majorant_bounds_empirical_sum():
    f2 = systems.f2_simple_walk()
    chain = chain_for(f2)
    paths = sample_paths(f2, chain, count=1000, length=200, seed=42)
    rep = decay_report(f2, None, None, gamma=0.95, paths=paths, burn_in=50)
    bound = borel_cantelli_bound(f2, None, None, gamma=0.95, n_max=2000)
    assert np.isfinite(bound)
    assert rep.empirical_sum() <= bound


def test_orthogonal_vector_gives_zero_bound():
    zw = systems.z_walk(0.5)
    space = RepSpace(zw.backend)
    far = ConeVector(space, {(10**6,): 1.0})  # unreachable within any test horizon
    bound = borel_cantelli_bound(zw, None, far, gamma=0.9, n_max=50)
    assert bound == 0.0
    chain = chain_for(zw)
    paths = sample_paths(zw, chain, count=50, length=60, seed=1)
    rep = decay_report(zw, None, far, gamma=0.9, paths=paths, burn_in=1)
    assert rep.exceedance_count == 0


def test_divergence_guard_triggers():
    f2 = systems.f2_simple_walk()
    with pytest.raises(DivergenceGuard):
        borel_cantelli_bound(f2, None, None, gamma=0.85, n_max=400)


def test_adversarial_vector_lower_bound():
    zw = systems.z_walk(0.5)
    v, diag = adversarial_vector(zw, eta=0.9, t_grid=[1.2, 1.1, 1.05, 1.02, 1.01], n_max=600)
    assert diag["pieces"] == 5.0
    check = adversarial_lower_bound(v, zw, gamma=0.8, radius=6)
    assert check["min_margin"] >= 1.0


def test_adversarial_identity_pairing_dominates():
    zw = systems.z_walk(0.5)
    v, _ = adversarial_vector(zw, eta=0.9, t_grid=[1.2, 1.1], n_max=300)
    from skewtherm.repspace import inner

    assert inner(v, v) >= 0.9**2  # first stacked piece alone is a unit vector


def test_adversarial_rejects_nonamenable_backend():
    f2 = systems.f2_simple_walk()
    with pytest.raises(ArgumentError):
        adversarial_vector(f2, eta=0.9, t_grid=[1.1], n_max=50)


def test_adversarial_rejects_asymmetric_walk():
    zb = systems.z_walk(0.75)
    with pytest.raises(ArgumentError):
        adversarial_vector(zb, eta=0.9, t_grid=[1.1], n_max=50)
