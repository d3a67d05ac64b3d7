"""Group backends and letter markings.

A backend owns a canonical, hashable key per group element, the product and
inverse in that key form, and a left coset space on which the group acts.
Supported backends: free groups (reduced words), free abelian lattices
(integer vectors), abelian quotients (residues modulo an integer sublattice,
Hermite-reduced), and permutation groups acting on a finite point set.

For the infinite backends the coset space is the group itself and points are
simply element keys, created lazily as they appear; no shared orbit table is
kept, so concurrent use is safe by construction.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, List, Optional, Sequence, Tuple

import numpy as np

from .errors import ArgumentError, BackendMismatch

Key = tuple


class GroupBackend:
    """Abstract group backend; subclasses fix the element key format."""

    kind: str = "abstract"

    def identity(self) -> Key:
        raise NotImplementedError

    def compose(self, g: Key, h: Key) -> Key:
        raise NotImplementedError

    def inverse(self, g: Key) -> Key:
        raise NotImplementedError

    def canonical(self, g) -> Key:
        """Coerce an element description to its canonical key."""
        raise NotImplementedError

    def coset_points(self) -> Optional[List]:
        """Finite point set of the coset space, or None when it is the group itself."""
        return None

    def act(self, g: Key, p):
        """Left translation action in the inverse convention: returns g^{-1} . p."""
        return self.compose(self.inverse(g), p)

    def check_same(self, other: "GroupBackend") -> None:
        if self is not other and self != other:
            raise BackendMismatch(f"backends differ: {self} vs {other}")

    def sample_element(self, rng: np.random.Generator, size: int = 4) -> Key:
        """Random element for property tests (product of random generators)."""
        gens = self._test_generators()
        g = self.identity()
        for _ in range(int(rng.integers(0, size + 1))):
            pick = gens[int(rng.integers(0, len(gens)))]
            if rng.integers(0, 2):
                pick = self.inverse(pick)
            g = self.compose(g, pick)
        return g

    def _test_generators(self) -> List[Key]:
        raise NotImplementedError


@dataclass(frozen=True, eq=True)
class FreeGroup(GroupBackend):
    """Free group of the given rank; keys are freely reduced tuples of nonzero ints.

    Letter i in 1..rank is the i-th generator, -i its inverse.
    """

    rank: int
    kind: str = field(default="free", init=False)

    def __post_init__(self):
        if self.rank < 1:
            raise ArgumentError("free group rank must be >= 1")

    def identity(self) -> Key:
        return ()

    def generator(self, i: int) -> Key:
        if not (1 <= abs(i) <= self.rank) or i == 0:
            raise ArgumentError(f"generator index {i} out of range for rank {self.rank}")
        return (i,)

    def canonical(self, g) -> Key:
        return self.reduce(tuple(g))

    def reduce(self, word: Sequence[int]) -> Key:
        out: List[int] = []
        for s in word:
            if s == 0 or abs(s) > self.rank:
                raise ArgumentError(f"bad free-group letter {s}")
            if out and out[-1] == -s:
                out.pop()
            else:
                out.append(s)
        return tuple(out)

    def compose(self, g: Key, h: Key) -> Key:
        # splice at the cancellation boundary instead of re-reducing everything
        i = len(g)
        j = 0
        while i > 0 and j < len(h) and g[i - 1] == -h[j]:
            i -= 1
            j += 1
        return g[:i] + h[j:]

    def inverse(self, g: Key) -> Key:
        return tuple(-s for s in reversed(g))

    def length(self, g: Key) -> int:
        return len(g)

    def _test_generators(self) -> List[Key]:
        return [(i,) for i in range(1, self.rank + 1)]


@dataclass(frozen=True, eq=True)
class FreeAbelian(GroupBackend):
    """Free abelian group Z^d; keys are integer d-tuples."""

    dim: int
    kind: str = field(default="free-abelian", init=False)

    def __post_init__(self):
        if self.dim < 1:
            raise ArgumentError("dimension must be >= 1")

    def identity(self) -> Key:
        return (0,) * self.dim

    def canonical(self, g) -> Key:
        v = tuple(int(x) for x in g)
        if len(v) != self.dim:
            raise ArgumentError(f"expected {self.dim} coordinates, got {len(v)}")
        return v

    def compose(self, g: Key, h: Key) -> Key:
        return tuple(a + b for a, b in zip(g, h))

    def inverse(self, g: Key) -> Key:
        return tuple(-a for a in g)

    def norm1(self, g: Key) -> int:
        return sum(abs(a) for a in g)

    def _test_generators(self) -> List[Key]:
        eye = np.eye(self.dim, dtype=int)
        return [tuple(row) for row in eye]


def _hermite_rows(mat: np.ndarray) -> np.ndarray:
    """Row-style Hermite normal form of an integer matrix (rows span the lattice)."""
    m = mat.astype(object).copy()
    rows, cols = m.shape
    r = 0
    for c in range(cols):
        pivot = None
        for i in range(r, rows):
            if m[i, c] != 0:
                pivot = i
                break
        if pivot is None:
            continue
        m[[r, pivot]] = m[[pivot, r]]
        # clear below by gcd elimination
        for i in range(r + 1, rows):
            while m[i, c] != 0:
                q = m[r, c] // m[i, c]
                m[r] = m[r] - q * m[i]
                m[[r, i]] = m[[i, r]]
        if m[r, c] < 0:
            m[r] = -m[r]
        # reduce above
        for i in range(r):
            q = m[i, c] // m[r, c]
            m[i] = m[i] - q * m[r]
        r += 1
        if r == rows:
            break
    # drop zero rows
    keep = [i for i in range(rows) if any(x != 0 for x in m[i])]
    return m[keep] if keep else m[:0]


@dataclass(frozen=True, eq=True)
class AbelianQuotient(GroupBackend):
    """Z^d modulo the sublattice spanned by the given integer rows.

    Keys are the canonical residues after Hermite reduction; coordinates
    without a pivot stay unreduced (infinite quotient directions).
    """

    dim: int
    sublattice: Tuple[Tuple[int, ...], ...]
    kind: str = field(default="abelian-quotient", init=False)

    def __post_init__(self):
        if self.dim < 1:
            raise ArgumentError("dimension must be >= 1")
        rows = np.array(self.sublattice, dtype=int).reshape(-1, self.dim)
        hnf = _hermite_rows(rows)
        pivots = []
        for row in hnf:
            nz = [j for j in range(self.dim) if row[j] != 0]
            pivots.append(nz[0])
        object.__setattr__(self, "_hnf", hnf)
        object.__setattr__(self, "_pivots", pivots)

    def identity(self) -> Key:
        return (0,) * self.dim

    def canonical(self, g) -> Key:
        v = np.array([int(x) for x in g], dtype=object)
        if v.shape != (self.dim,):
            raise ArgumentError(f"expected {self.dim} coordinates")
        hnf = self._hnf  # type: ignore[attr-defined]
        for row, piv in zip(hnf, self._pivots):  # type: ignore[attr-defined]
            q = v[piv] // row[piv]
            v = v - q * row
        return tuple(int(x) for x in v)

    def compose(self, g: Key, h: Key) -> Key:
        return self.canonical(tuple(a + b for a, b in zip(g, h)))

    def inverse(self, g: Key) -> Key:
        return self.canonical(tuple(-a for a in g))

    def coset_points(self) -> Optional[List]:
        # finite only if every coordinate has a pivot
        if len(self._pivots) != self.dim:  # type: ignore[attr-defined]
            return None
        pts: List[Key] = []
        hnf = self._hnf  # type: ignore[attr-defined]
        diag = [int(hnf[i][self._pivots[i]]) for i in range(self.dim)]  # type: ignore[attr-defined]
        grid = np.indices(diag).reshape(self.dim, -1).T
        for row in grid:
            pts.append(self.canonical(tuple(int(x) for x in row)))
        return sorted(set(pts))

    def _test_generators(self) -> List[Key]:
        eye = np.eye(self.dim, dtype=int)
        return [self.canonical(tuple(row)) for row in eye]


@dataclass(frozen=True, eq=True)
class FinitePermutation(GroupBackend):
    """Subgroup of Sym(n_points); keys are image tuples, acting on 0..n_points-1."""

    n_points: int
    kind: str = field(default="finite-permutation", init=False)

    def __post_init__(self):
        if self.n_points < 1:
            raise ArgumentError("need at least one point")

    def identity(self) -> Key:
        return tuple(range(self.n_points))

    def canonical(self, g) -> Key:
        perm = tuple(int(x) for x in g)
        if sorted(perm) != list(range(self.n_points)):
            raise ArgumentError(f"not a permutation of {self.n_points} points: {perm}")
        return perm

    def compose(self, g: Key, h: Key) -> Key:
        # function composition: (g h)(x) = g(h(x))
        return tuple(g[h[x]] for x in range(self.n_points))

    def inverse(self, g: Key) -> Key:
        inv = [0] * self.n_points
        for i, x in enumerate(g):
            inv[x] = i
        return tuple(inv)

    def coset_points(self) -> Optional[List]:
        return list(range(self.n_points))

    def act(self, g: Key, p: int):
        if not (0 <= p < self.n_points):
            raise ArgumentError(f"unknown point {p}")
        return self.inverse(g)[p]

    def from_cycles(self, cycles: Iterable[Iterable[int]]) -> Key:
        perm = list(range(self.n_points))
        for cyc in cycles:
            cyc = list(cyc)
            for i, x in enumerate(cyc):
                perm[x] = cyc[(i + 1) % len(cyc)]
        return self.canonical(perm)

    def _test_generators(self) -> List[Key]:
        cycle = tuple((i + 1) % self.n_points for i in range(self.n_points))
        swap = list(range(self.n_points))
        if self.n_points >= 2:
            swap[0], swap[1] = swap[1], swap[0]
        return [cycle, tuple(swap)]


@dataclass(frozen=True)
class Marking:
    """Assignment of a group element to every alphabet letter.

    ``visibility_asserted`` records the user's claim that the marked words
    reach every group element up to a fixed finite set; it is not checkable
    in general and is only echoed into reports.
    """

    backend: GroupBackend
    labels: Tuple[Key, ...]
    visibility_asserted: bool = False

    def __post_init__(self):
        object.__setattr__(
            self, "labels", tuple(self.backend.canonical(g) for g in self.labels)
        )

    @property
    def alphabet_size(self) -> int:
        return len(self.labels)

    def label(self, letter: int) -> Key:
        if not (0 <= letter < len(self.labels)):
            raise ArgumentError(f"letter {letter} outside alphabet")
        return self.labels[letter]

    def product(self, word: Sequence[int]) -> Key:
        """Marking product along a word, multiplying left to right."""
        g = self.backend.identity()
        for letter in word:
            g = self.backend.compose(g, self.label(letter))
        return g


def marking_product(word: Sequence[int], marking: Marking) -> Key:
    return marking.product(word)
