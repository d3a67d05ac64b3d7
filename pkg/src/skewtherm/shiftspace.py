"""Finite-alphabet subshift kernel.

A :class:`ShiftSpec` bundles a mixing transition matrix, a strictly positive
weight function of finite memory ``m`` (the weight of a point depends on its
first ``m`` letters), two distinguished letters bracketing the counted words,
and an eventually periodic base tail used to close finite words into points
of the one-sided shift.  Weighted word sums, periodic sums and first-return
series are all built from these ingredients.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Dict, Iterator, List, Optional, Sequence, Tuple

import numpy as np

from .errors import ArgumentError, DomainError
from .groups import Marking


@dataclass(frozen=True)
class Word:
    """An admissible finite word over a spec's alphabet."""

    letters: Tuple[int, ...]

    def __len__(self) -> int:
        return len(self.letters)

    def __iter__(self):
        return iter(self.letters)


def _as_letters(w) -> Tuple[int, ...]:
    if isinstance(w, Word):
        return w.letters
    return tuple(int(x) for x in w)


@dataclass(frozen=True)
class ShiftSpec:
    """Subshift of finite type with a finite-memory positive weight function.

    ``log_weights`` maps each admissible word of length ``memory`` to the log
    weight of any point starting with that word.  ``letter_start`` and
    ``letter_end`` are the default first/last letters of counted words;
    ``tail_preperiod`` followed by repeating ``tail_period`` is the base tail
    glued after a word (its first letter must extend ``letter_end``).
    """

    n_letters: int
    transitions: Tuple[Tuple[bool, ...], ...]
    memory: int
    log_weights: Dict[Tuple[int, ...], float]
    letter_start: int
    letter_end: int
    tail_preperiod: Tuple[int, ...]
    tail_period: Tuple[int, ...]

    def __post_init__(self):
        n = self.n_letters
        if n < 1:
            raise ArgumentError("alphabet must be nonempty")
        tau = np.array(self.transitions, dtype=bool)
        if tau.shape != (n, n):
            raise ArgumentError("transition matrix shape mismatch")
        object.__setattr__(self, "_tau", tau)
        if self.memory < 1:
            raise ArgumentError("memory must be >= 1")
        for letter in (self.letter_start, self.letter_end):
            self._check_letter(letter)
        if not _is_primitive(tau):
            raise ArgumentError("transition matrix must be irreducible and aperiodic")
        for window, value in self.log_weights.items():
            if len(window) != self.memory:
                raise ArgumentError(f"weight window {window} has wrong length")
            if not self.is_admissible(window):
                raise ArgumentError(f"weight window {window} is not admissible")
            if not math.isfinite(value):
                raise ArgumentError(f"log weight for {window} must be finite")
        for window in self.admissible_windows(self.memory):
            if window not in self.log_weights:
                raise ArgumentError(f"missing weight for admissible window {window}")
        if not self.tail_period:
            raise ArgumentError("tail period must be nonempty")
        probe = self.tail_preperiod + self.tail_period + self.tail_period
        if not self.is_admissible(probe):
            raise ArgumentError("base tail is not admissible")
        if not tau[self.tail_period[-1], self.tail_period[0]]:
            raise ArgumentError("tail period does not close up admissibly")
        if not tau[self.letter_end, probe[0]]:
            raise ArgumentError("tail must extend the word-end letter")

    # -- basic structure ----------------------------------------------------

    def _check_letter(self, letter: int) -> None:
        if not (0 <= letter < self.n_letters):
            raise ArgumentError(f"unknown letter {letter}")

    @property
    def tau(self) -> np.ndarray:
        return self._tau  # type: ignore[attr-defined]

    def allows(self, i: int, j: int) -> bool:
        return bool(self.tau[i, j])

    def is_admissible(self, word: Sequence[int]) -> bool:
        w = _as_letters(word)
        for letter in w:
            self._check_letter(letter)
        return all(self.tau[w[i], w[i + 1]] for i in range(len(w) - 1))

    def admissible_windows(self, k: int) -> List[Tuple[int, ...]]:
        out = []
        for window in itertools.product(range(self.n_letters), repeat=k):
            if self.is_admissible(window):
                out.append(window)
        return out

    def word(self, letters: Sequence[int]) -> Word:
        w = _as_letters(letters)
        if not self.is_admissible(w):
            raise DomainError(f"word {w} is not admissible")
        return Word(w)

    # -- base tail ----------------------------------------------------------

    def tail_letter(self, i: int) -> int:
        if i < len(self.tail_preperiod):
            return self.tail_preperiod[i]
        j = (i - len(self.tail_preperiod)) % len(self.tail_period)
        return self.tail_period[j]

    def tail_prefix(self, n: int) -> Tuple[int, ...]:
        return tuple(self.tail_letter(i) for i in range(n))

    def validate_twisted_tail(self) -> None:
        """Tail must start at ``letter_start`` and never revisit it afterwards."""
        if self.tail_letter(0) != self.letter_start:
            raise ArgumentError("twisted mode needs the tail to start at letter_start")
        rest = self.tail_preperiod[1:] + self.tail_period
        if self.letter_start in rest:
            raise ArgumentError("twisted mode needs letter_start only at position 0")

    def greedy_tail_from(self, letter: int, length: int) -> Tuple[int, ...]:
        """Deterministic admissible continuation starting at ``letter``."""
        out = [letter]
        while len(out) < length:
            row = self.tau[out[-1]]
            nxt = int(np.argmax(row))
            if not row[nxt]:
                raise DomainError(f"letter {out[-1]} has no successor")
            out.append(nxt)
        return tuple(out)

    def tail_for(self, end_letter: int, length: int) -> Tuple[int, ...]:
        """Tail to glue after a word ending at ``end_letter``.

        Uses the configured base tail when admissible there, otherwise a
        greedy admissible continuation.
        """
        if self.tau[end_letter, self.tail_letter(0)]:
            return self.tail_prefix(length)
        row = self.tau[end_letter]
        first = int(np.argmax(row))
        return self.greedy_tail_from(first, length)

    # -- weights ------------------------------------------------------------

    def log_window(self, window: Sequence[int]) -> float:
        key = _as_letters(window)
        try:
            return self.log_weights[key]
        except KeyError:
            raise DomainError(f"window {key} is not admissible") from None

    def window_weight(self, window: Sequence[int]) -> float:
        return math.exp(self.log_window(window))

    def rescaled(self, log_factor: float) -> "ShiftSpec":
        """New spec with every log weight shifted by ``log_factor``."""
        return ShiftSpec(
            n_letters=self.n_letters,
            transitions=self.transitions,
            memory=self.memory,
            log_weights={k: v + log_factor for k, v in self.log_weights.items()},
            letter_start=self.letter_start,
            letter_end=self.letter_end,
            tail_preperiod=self.tail_preperiod,
            tail_period=self.tail_period,
        )


def _is_primitive(tau: np.ndarray) -> bool:
    """Irreducible + aperiodic via the Wielandt primitivity bound."""
    n = tau.shape[0]
    if n == 1:
        return bool(tau[0, 0])
    power = tau.copy()
    for _ in range((n - 1) ** 2 + 1):
        if power.all():
            return True
        power = (power @ tau) > 0
    return bool(power.all())


# -- word enumeration -------------------------------------------------------


def enumerate_words(spec: ShiftSpec, first: int, last: int, n: int) -> Iterator[Word]:
    """Stream the admissible length-``n`` words from ``first`` to ``last``.

    Deterministic lexicographic order; the count equals the (first, last)
    entry of the (n-1)-th power of the transition matrix.
    """
    if n < 1:
        raise ArgumentError("word length must be >= 1")
    spec._check_letter(first)
    spec._check_letter(last)
    if n == 1:
        if first == last:
            yield Word((first,))
        return
    reach = _reach_table(spec, last, n)
    if not reach[n - 1][first]:
        return

    prefix = [first]

    def dfs() -> Iterator[Word]:
        depth = len(prefix)
        if depth == n:
            yield Word(tuple(prefix))
            return
        for s in range(spec.n_letters):
            if spec.tau[prefix[-1], s] and reach[n - depth - 1][s]:
                prefix.append(s)
                yield from dfs()
                prefix.pop()

    yield from dfs()


def _reach_table(spec: ShiftSpec, last: int, n: int) -> List[np.ndarray]:
    """reach[k][s]: some admissible path of k more steps from s ends at ``last``."""
    reach = [np.zeros(spec.n_letters, dtype=bool) for _ in range(n)]
    reach[0][last] = True
    for k in range(1, n):
        reach[k] = spec.tau @ reach[k - 1] > 0
    return reach


def count_words(spec: ShiftSpec, first: int, last: int, n: int) -> int:
    if n < 1:
        raise ArgumentError("word length must be >= 1")
    power = np.linalg.matrix_power(spec.tau.astype(object), n - 1)
    return int(power[first, last])


def reduce_words(
    spec: ShiftSpec,
    first: int,
    last: int,
    n: int,
    map_word,
    threads: Optional[int] = None,
) -> float:
    """Sum ``map_word(word)`` over the enumerated words.

    The word set is partitioned by the second letter and the partial sums are
    merged in letter order, so parallel and sequential runs agree exactly.
    """
    from .parallel import ordered_map

    if n == 1:
        return sum(map_word(w) for w in enumerate_words(spec, first, last, n))

    def chunk(second: int) -> float:
        if not spec.tau[first, second]:
            return 0.0
        total = 0.0
        for w in enumerate_words(spec, second, last, n - 1):
            total += map_word(Word((first,) + w.letters))
        return total

    parts = ordered_map(chunk, list(range(spec.n_letters)), threads)
    return float(sum(parts))


# -- weighted word sums -----------------------------------------------------


def birkhoff_weight(spec: ShiftSpec, word, tail: Optional[Sequence[int]] = None) -> float:
    """Product of the memory-``m`` window weights along ``word`` glued to ``tail``.

    The empty word gives 1.  For memory 1 the tail never enters; otherwise
    the last ``m - 1`` windows read into it.
    """
    w = _as_letters(word)
    if not w:
        return 1.0
    m = spec.memory
    t = spec.tail_prefix(m) if tail is None else _as_letters(tail)
    if len(t) < m:
        raise ArgumentError(f"tail must supply at least {m} letters")
    full = w + t[:m]
    if not spec.is_admissible(full):
        raise DomainError("word does not glue admissibly to the tail")
    total = 0.0
    for i in range(len(w)):
        total += spec.log_window(full[i : i + m])
    return math.exp(total)


class _SuffixDP:
    """Forward DP over words; tracks the trailing ``max(1, m-1)`` letters.

    Interior weight windows (fully inside the word) are charged as soon as
    they complete; for memory 1 every letter is its own window.  Windows
    crossing into a tail are charged at readout via :meth:`boundary_factor`.
    """

    def __init__(self, spec: ShiftSpec, first_letters: Sequence[int]):
        self.spec = spec
        self.keep = max(1, spec.memory - 1)
        self.states: Dict[Tuple[int, ...], float] = {}
        m = spec.memory
        for letter in first_letters:
            w0 = spec.window_weight((letter,)) if m == 1 else 1.0
            key = (letter,)
            self.states[key] = self.states.get(key, 0.0) + w0
        self.length = 1

    def step(self, allow) -> None:
        spec = self.spec
        m = spec.memory
        nxt: Dict[Tuple[int, ...], float] = {}
        new_len = self.length + 1
        for suffix, mass in self.states.items():
            for s in range(spec.n_letters):
                if not spec.tau[suffix[-1], s]:
                    continue
                if not allow(new_len, suffix[-1], s):
                    continue
                new = suffix + (s,)
                if m == 1:
                    factor = spec.window_weight((s,))
                elif new_len >= m:
                    factor = spec.window_weight(new[-m:])
                else:
                    factor = 1.0
                key = new[-self.keep :]
                nxt[key] = nxt.get(key, 0.0) + mass * factor
        self.states = nxt
        self.length = new_len

    def boundary_factor(self, suffix: Tuple[int, ...], tail: Tuple[int, ...]) -> float:
        m = self.spec.memory
        if m == 1:
            return 1.0
        if self.length < m:
            raise ArgumentError("boundary factor undefined for words shorter than memory")
        glued = suffix + tail
        total = 0.0
        for j in range(m - 1):
            total += self.spec.log_window(glued[j : j + m])
        return math.exp(total)


def periodic_sum(
    spec: ShiftSpec,
    first: int,
    n: int,
    marking: Optional[Marking] = None,
    constrained: bool = False,
) -> float:
    """Weighted count of period-``n`` points starting at ``first``.

    With ``constrained=True`` only points whose marking product over one
    period is the group identity are counted (``marking`` required).
    """
    if n < 1:
        raise ArgumentError("period must be >= 1")
    spec._check_letter(first)
    if constrained and marking is None:
        raise ArgumentError("constrained periodic sums need a marking")
    m = spec.memory
    if n < max(2, m - 1):
        return _periodic_sum_bruteforce(spec, first, n, marking, constrained)
    if m == 1:
        return _periodic_sum_m1(spec, first, n, marking, constrained)
    return _periodic_sum_windows(spec, first, n, marking, constrained)


def _cyclic_weight(spec: ShiftSpec, word: Tuple[int, ...]) -> float:
    n = len(word)
    total = 0.0
    for i in range(n):
        window = tuple(word[(i + j) % n] for j in range(spec.memory))
        total += spec.log_window(window)
    return math.exp(total)


def _periodic_sum_bruteforce(spec, first, n, marking, constrained) -> float:
    total = 0.0
    for body in itertools.product(range(spec.n_letters), repeat=n - 1):
        word = (first,) + body
        if not all(spec.tau[word[i], word[(i + 1) % n]] for i in range(n)):
            continue
        if constrained and marking.product(word) != marking.backend.identity():
            continue
        try:
            total += _cyclic_weight(spec, word)
        except DomainError:
            continue
    return total


def _periodic_sum_m1(spec, first, n, marking, constrained) -> float:
    identity = marking.backend.identity() if constrained else None
    start_g = marking.label(first) if constrained else None
    states: Dict[Tuple[int, object], float] = {
        (first, start_g): spec.window_weight((first,))
    }
    for _ in range(n - 1):
        nxt: Dict[Tuple[int, object], float] = {}
        for (letter, g), mass in states.items():
            for s in range(spec.n_letters):
                if not spec.tau[letter, s]:
                    continue
                g2 = marking.backend.compose(g, marking.label(s)) if constrained else None
                key = (s, g2)
                nxt[key] = nxt.get(key, 0.0) + mass * spec.window_weight((s,))
        states = nxt
    total = 0.0
    for (letter, g), mass in states.items():
        if not spec.tau[letter, first]:
            continue
        if constrained and g != identity:
            continue
        total += mass
    return total


def _periodic_sum_windows(spec, first, n, marking, constrained) -> float:
    m = spec.memory
    identity = marking.backend.identity() if constrained else None
    starts = [w for w in spec.admissible_windows(m - 1) if w[0] == first]
    total = 0.0
    for start in starts:
        states: Dict[Tuple[Tuple[int, ...], object], float] = {(start, identity): 1.0}
        for _ in range(n):
            nxt: Dict[Tuple[Tuple[int, ...], object], float] = {}
            for (window, g), mass in states.items():
                g2 = (
                    marking.backend.compose(g, marking.label(window[0]))
                    if constrained
                    else None
                )
                for s in range(spec.n_letters):
                    if not spec.tau[window[-1], s]:
                        continue
                    full = window + (s,)
                    try:
                        w = spec.window_weight(full)
                    except DomainError:
                        continue
                    key = (full[1:], g2)
                    nxt[key] = nxt.get(key, 0.0) + mass * w
            states = nxt
        total += states.get((start, identity), 0.0)
    return total


# -- first-return series ----------------------------------------------------


def first_return_sum(
    spec: ShiftSpec,
    n: int,
    return_letter: Optional[int] = None,
    end_letter: Optional[int] = None,
) -> float:
    """n-th coefficient of a first-return series at ``return_letter``.

    Single-letter variant (``end_letter=None``): words of length ``n`` that
    start at the return letter, avoid it strictly afterwards, and can be
    followed by it again.  Two-letter variant: words running from the return
    letter to ``end_letter`` that avoid the adjacent two-letter return
    pattern strictly inside.
    """
    if n < 1:
        raise ArgumentError("length must be >= 1")
    A = spec.letter_start if return_letter is None else return_letter
    spec._check_letter(A)
    if end_letter is None:
        return _first_return_single(spec, A, n)
    spec._check_letter(end_letter)
    return _first_return_pair(spec, A, end_letter, n)


def _first_return_single(spec: ShiftSpec, A: int, n: int) -> float:
    m = spec.memory
    if n < m:
        total = 0.0
        for word in enumerate_words_any_end(spec, A, n):
            if A in word[1:]:
                continue
            if not spec.tau[word[-1], A]:
                continue
            tail = (A,) + spec.tail_for(A, m)[:m]
            total += birkhoff_weight(spec, word, tail)
        return total

    def allow(_new_len, _prev, s):
        return s != A

    dp = _SuffixDP(spec, [A])
    for _ in range(n - 1):
        dp.step(allow)
    total = 0.0
    for suffix, mass in dp.states.items():
        if not spec.tau[suffix[-1], A]:
            continue
        tail = (A,) + spec.tail_for(A, m)[:m]
        total += mass * dp.boundary_factor(suffix, tail)
    return total


def _first_return_pair(spec: ShiftSpec, A: int, a: int, n: int) -> float:
    m = spec.memory
    tail = spec.tail_for(a, m + 1)
    if n < max(2, m):
        total = 0.0
        for word in enumerate_words_any_end(spec, A, n):
            if word[-1] != a:
                continue
            if any(word[i] == A and word[i + 1] == a for i in range(1, n - 2)):
                continue
            total += birkhoff_weight(spec, word, tail)
        return total

    def allow(new_len, prev, s):
        if new_len == n and s != a:
            return False
        # forbid the (A, a) pattern at positions (i, i+1) for 2 <= i <= n-2
        if 3 <= new_len <= n - 1 and prev == A and s == a:
            return False
        return True

    dp = _SuffixDP(spec, [A])
    for _ in range(n - 1):
        dp.step(allow)
    total = 0.0
    for suffix, mass in dp.states.items():
        if suffix[-1] != a:
            continue
        total += mass * dp.boundary_factor(suffix, tail)
    return total


def enumerate_words_any_end(spec: ShiftSpec, first: int, n: int) -> Iterator[Tuple[int, ...]]:
    """All admissible words of length n starting at ``first`` (small n only)."""
    if n == 1:
        yield (first,)
        return
    for body in itertools.product(range(spec.n_letters), repeat=n - 1):
        word = (first,) + body
        if spec.is_admissible(word):
            yield word
