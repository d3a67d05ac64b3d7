"""Word enumeration, weights, periodic and first-return sums."""

from __future__ import annotations

import itertools
import math

import numpy as np
import pytest

from skewtherm import systems
from skewtherm.errors import ArgumentError, DomainError
from skewtherm.shiftspace import (
    ShiftSpec,
    birkhoff_weight,
    count_words,
    enumerate_words,
    first_return_sum,
    periodic_sum,
)


def brute_words(spec, first, last, n):
    """Independent enumeration oracle: filter all strings."""
    out = []
    for word in itertools.product(range(spec.n_letters), repeat=n):
        if word[0] == first and word[-1] == last and spec.is_admissible(word):
            out.append(word)
    return out


def test_golden_mean_words_oracle():
    gm = systems.golden_mean_shift()
    got = [w.letters for w in enumerate_words(gm.spec, 0, 0, 3)]
    assert got == brute_words(gm.spec, 0, 0, 3)
    assert got == [(0, 0, 0), (0, 1, 0)]
    assert len(got) == 2


def test_single_letter_word():
    gm = systems.golden_mean_shift()
    assert [w.letters for w in enumerate_words(gm.spec, 1, 1, 1)] == [(1,)]
    assert [w.letters for w in enumerate_words(gm.spec, 1, 0, 1)] == []


def test_full_four_letter_middle_free():
    fs = systems.full_shift([0.25] * 4)
    words = list(enumerate_words(fs.spec, 0, 1, 3))
    assert len(words) == 4


def test_word_count_matches_matrix_power():
    rng = np.random.default_rng(11)
    built = 0
    while built < 4:
        tau = rng.integers(0, 2, size=(4, 4)).astype(bool)
        np.fill_diagonal(tau, True)  # keeps the matrix primitive
        try:
            spec = ShiftSpec(
                n_letters=4,
                transitions=tuple(tuple(bool(x) for x in row) for row in tau),
                memory=1,
                log_weights={(i,): 0.0 for i in range(4)},
                letter_start=0,
                letter_end=0,
                tail_preperiod=(0,),
                tail_period=(0,),
            )
        except ArgumentError:
            continue
        built += 1
        for n in range(1, 13):
            b, e = int(rng.integers(0, 4)), int(rng.integers(0, 4))
            count = sum(1 for _ in enumerate_words(spec, b, e, n)) if n <= 8 else None
            expected = count_words(spec, b, e, n)
            if count is not None:
                assert count == expected
            power = np.linalg.matrix_power(tau.astype(object), n - 1)
            assert expected == int(power[b, e])


def test_enumeration_rejects_bad_arguments():
    gm = systems.golden_mean_shift()
    with pytest.raises(ArgumentError):
        list(enumerate_words(gm.spec, 0, 0, 0))
    with pytest.raises(ArgumentError):
        list(enumerate_words(gm.spec, 0, 7, 3))


def test_birkhoff_constant_quarter_weight():
    fs = systems.full_shift([0.25] * 4)
    w = (0, 1, 2)
    assert birkhoff_weight(fs.spec, w) == pytest.approx(1.0 / 64.0, rel=1e-14)


def test_birkhoff_empty_word_is_one():
    fs = systems.full_shift([0.5, 0.5])
    assert birkhoff_weight(fs.spec, ()) == 1.0


def test_birkhoff_memory_one_letter_product():
    fs = systems.full_shift([0.5, 0.5])
    assert birkhoff_weight(fs.spec, (0, 1, 0)) == pytest.approx(1.0 / 8.0, rel=1e-14)


def _memory2_spec():
    return ShiftSpec(
        n_letters=2,
        transitions=systems.full_transitions(2),
        memory=2,
        log_weights={
            (0, 0): math.log(0.3),
            (0, 1): math.log(0.7),
            (1, 0): math.log(0.6),
            (1, 1): math.log(0.4),
        },
        letter_start=0,
        letter_end=1,
        tail_preperiod=(0,),
        tail_period=(1,),
    )


def test_cocycle_multiplicativity():
    fs = systems.full_shift([0.5, 0.5])
    tail = (0, 1, 0, 1)
    w, u = (0, 1), (1, 1, 0)
    lhs = birkhoff_weight(fs.spec, w + u, tail)
    rhs = birkhoff_weight(fs.spec, w, u + tail) * birkhoff_weight(fs.spec, u, tail)
    assert lhs == pytest.approx(rhs, rel=0)  # exact for memory 1

    spec2 = _memory2_spec()
    lhs2 = birkhoff_weight(spec2, w + u, tail)
    rhs2 = birkhoff_weight(spec2, w, u + tail) * birkhoff_weight(spec2, u, tail)
    assert lhs2 == pytest.approx(rhs2, rel=1e-12)


def test_holder_surrogate_exact_for_finite_memory():
    spec2 = _memory2_spec()
    w = (0, 1, 1, 0)
    # tails agreeing on the first memory-1 = 1 letters give identical weights
    t1 = (1, 0, 1, 0)
    t2 = (1, 1, 0, 0)
    assert birkhoff_weight(spec2, w, t1) == birkhoff_weight(spec2, w, t2)


def test_inadmissible_concatenation_raises():
    gm = systems.golden_mean_shift()
    with pytest.raises(DomainError):
        birkhoff_weight(gm.spec, (0, 1, 1))
    # word ends with 1 but tail starts with 1: 11 forbidden
    with pytest.raises(DomainError):
        birkhoff_weight(gm.spec, (0, 1), (1, 0))


def brute_periodic(spec, first, n, marking=None, constrained=False):
    total = 0.0
    for body in itertools.product(range(spec.n_letters), repeat=n - 1):
        word = (first,) + body
        if not all(spec.tau[word[i], word[(i + 1) % n]] for i in range(n)):
            continue
        if constrained and marking.product(word) != marking.backend.identity():
            continue
        logw = 0.0
        for i in range(n):
            window = tuple(word[(i + j) % n] for j in range(spec.memory))
            logw += spec.log_window(window)
        total += math.exp(logw)
    return total


def test_periodic_sum_full_two_shift():
    fs = systems.full_shift([0.5, 0.5])
    assert periodic_sum(fs.spec, 0, 3) == pytest.approx(0.5, rel=1e-14)
    assert periodic_sum(fs.spec, 0, 3) == pytest.approx(brute_periodic(fs.spec, 0, 3))


def test_periodic_sum_no_fixed_point():
    gm = systems.golden_mean_shift()
    assert periodic_sum(gm.spec, 1, 1) == 0.0


def test_periodic_sum_constrained_z():
    zw = systems.z_walk(0.5)
    got = periodic_sum(zw.spec, 0, 2, zw.marking, constrained=True)
    assert got == pytest.approx(0.25, rel=1e-14)
    assert got == pytest.approx(
        brute_periodic(zw.spec, 0, 2, zw.marking, constrained=True)
    )


def test_periodic_sum_matches_bruteforce_memory2():
    spec2 = _memory2_spec()
    for n in range(2, 7):
        assert periodic_sum(spec2, 0, n) == pytest.approx(
            brute_periodic(spec2, 0, n), rel=1e-12
        )


def test_first_return_full_two_shift():
    fs = systems.full_shift([0.5, 0.5])
    for n in range(1, 8):
        assert first_return_sum(fs.spec, n, 0) == pytest.approx(2.0**-n, rel=1e-14)


def test_first_return_golden_mean_n2():
    gm = systems.golden_mean_shift(weights=(0.5, 0.5))
    # only the word 01 returns to 0 at time 2
    assert first_return_sum(gm.spec, 2, 0) == pytest.approx(0.25, rel=1e-14)


def test_first_return_self_loop_positive():
    gm = systems.golden_mean_shift(weights=(0.5, 0.5))
    assert first_return_sum(gm.spec, 2, 0) > 0.0


def test_first_return_below_periodic():
    fs = systems.full_shift([0.5, 0.5])
    gm = systems.golden_mean_shift(weights=(0.5, 0.5))
    for spec in (fs.spec, gm.spec):
        for n in range(2, 11):
            assert first_return_sum(spec, n, 0) <= periodic_sum(spec, 0, n) + 1e-15


def brute_first_return_pair(spec, A, a, n):
    """Oracle for the two-letter first-return coefficient."""
    tail = spec.tail_for(a, spec.memory + 1)
    total = 0.0
    for body in itertools.product(range(spec.n_letters), repeat=n - 1):
        word = (A,) + body
        if word[-1] != a or not spec.is_admissible(word):
            continue
        inner = word[1:-1]
        if any(
            inner[i] == A and inner[i + 1] == a for i in range(len(inner) - 1)
        ):
            continue
        total += birkhoff_weight(spec, word, tail)
    return total


def test_first_return_pair_matches_bruteforce():
    fs = systems.full_shift([0.5, 0.5])
    zw = systems.z_walk(0.5)
    for system in (fs, zw):
        spec = system.spec
        A, a = spec.letter_start, spec.letter_end
        for n in range(2, 9):
            got = first_return_sum(spec, n, A, a)
            assert got == pytest.approx(brute_first_return_pair(spec, A, a, n), rel=1e-12)


def test_tail_validation():
    with pytest.raises(ArgumentError):
        ShiftSpec(
            n_letters=2,
            transitions=((True, True), (True, False)),
            memory=1,
            log_weights={(0,): 0.0, (1,): 0.0},
            letter_start=0,
            letter_end=0,
            tail_preperiod=(),
            tail_period=(1,),  # 11 forbidden: period cannot repeat letter 1
        )


def test_twisted_tail_validation():
    zw = systems.z_walk(0.5)
    zw.spec.validate_twisted_tail()
    gm = systems.golden_mean_shift()
    with pytest.raises(ArgumentError):
        gm.spec.validate_twisted_tail()
    systems.golden_mean_shift(twisted_tail=True).spec.validate_twisted_tail()


def test_reduce_words_parallel_matches_sequential():
    gm = systems.golden_mean_shift(weights=(0.5, 0.5))

    def weight(w):
        return birkhoff_weight(gm.spec, w)

    direct = sum(weight(w) for w in enumerate_words(gm.spec, 0, 0, 9))
    from skewtherm.shiftspace import reduce_words

    seq = reduce_words(gm.spec, 0, 0, 9, weight, threads=1)
    par = reduce_words(gm.spec, 0, 0, 9, weight, threads=4)
    assert seq == par  # identical merge order, bit-identical sums
    assert seq == pytest.approx(direct, rel=1e-15)


def _memory2_marked_system():
    from skewtherm.groups import FreeAbelian, Marking
    from skewtherm import systems as _sys

    spec = _memory2_spec()
    marking = Marking(FreeAbelian(1), ((1,), (-1,)))
    return _sys.System(spec, marking)


def test_periodic_sum_constrained_memory2_bruteforce():
    system = _memory2_marked_system()
    for n in range(2, 8):
        got = periodic_sum(system.spec, 0, n, system.marking, constrained=True)
        want = brute_periodic(system.spec, 0, n, system.marking, constrained=True)
        assert got == pytest.approx(want, rel=1e-12)


def brute_first_return_single(spec, A, n):
    tail = (A,) + spec.tail_for(A, spec.memory + 1)
    total = 0.0
    for body in itertools.product(range(spec.n_letters), repeat=n - 1):
        word = (A,) + body
        if A in body or not spec.is_admissible(word):
            continue
        if not spec.tau[word[-1], A]:
            continue
        total += birkhoff_weight(spec, word, tail)
    return total


def test_first_return_single_memory2_bruteforce():
    spec = _memory2_spec()
    for n in range(1, 9):
        got = first_return_sum(spec, n, 0)
        assert got == pytest.approx(brute_first_return_single(spec, 0, n), rel=1e-12)


def test_first_return_pair_memory2_bruteforce():
    spec = _memory2_spec()
    for n in range(2, 9):
        got = first_return_sum(spec, n, 0, 1)
        assert got == pytest.approx(brute_first_return_pair(spec, 0, 1, n), rel=1e-12)
