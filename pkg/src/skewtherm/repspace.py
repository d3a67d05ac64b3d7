"""Non-negative vectors in l2 of a coset space, and finite group densities.

The representation never materialises operators: a group element acts by
relabelling support keys, a finitely supported density acts by a weighted sum
of translates.  All vectors live in the cone of non-negative functions, which
every operation preserves.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Dict, Optional

from .errors import ArgumentError, BudgetExceeded
from .groups import GroupBackend, Key

DEFAULT_SUPPORT_BUDGET = 2_000_000


@dataclass(frozen=True)
class RepSpace:
    """Coset space carrying the unitary translation action of the backend.

    ``points is None`` means the space is the group itself (point keys are
    element keys, created lazily); otherwise the finite point list is closed
    under the action.
    """

    backend: GroupBackend

    @property
    def points(self):
        return self.backend.coset_points()

    def check_point(self, p) -> None:
        pts = self.points
        if pts is not None and p not in pts:
            raise ArgumentError(f"unknown coset point {p}")

    def translate_point(self, g: Key, p):
        """Forward translate: the support of rho(g)f at g.p."""
        return self.backend.act(self.backend.inverse(g), p)

    def check_same(self, other: "RepSpace") -> None:
        self.backend.check_same(other.backend)


@dataclass(frozen=True)
class ConeVector:
    """Finitely supported non-negative function on a coset space."""

    space: RepSpace
    weights: Dict
    pruned_mass: float = 0.0

    def __post_init__(self):
        for p, w in self.weights.items():
            if w < 0:
                raise ArgumentError(f"negative weight {w} at {p}")

    def __getitem__(self, p) -> float:
        return self.weights.get(p, 0.0)

    @property
    def support_size(self) -> int:
        return len(self.weights)

    def norm(self) -> float:
        return math.sqrt(sum(w * w for w in self.weights.values()))

    def total_mass(self) -> float:
        return sum(self.weights.values())

    def scaled(self, factor: float) -> "ConeVector":
        if factor < 0:
            raise ArgumentError("cone vectors only scale by non-negative factors")
        return ConeVector(self.space, {p: factor * w for p, w in self.weights.items()},
                          self.pruned_mass)

    def plus(self, other: "ConeVector") -> "ConeVector":
        self.space.check_same(other.space)
        out = dict(self.weights)
        for p, w in other.weights.items():
            out[p] = out.get(p, 0.0) + w
        return ConeVector(self.space, out, self.pruned_mass + other.pruned_mass)

    def pruned(self, eps_rel: float = 1e-15) -> "ConeVector":
        """Drop weights below eps_rel times the max weight; track lost mass."""
        if not self.weights:
            return self
        cut = eps_rel * max(self.weights.values())
        kept = {p: w for p, w in self.weights.items() if w >= cut}
        lost = sum(w for p, w in self.weights.items() if w < cut)
        return ConeVector(self.space, kept, self.pruned_mass + lost)


def delta(space: RepSpace, point) -> ConeVector:
    space.check_point(point)
    return ConeVector(space, {point: 1.0})


def delta_identity(space: RepSpace) -> ConeVector:
    """Indicator of the identity coset (base point of a finite point set)."""
    pts = space.points
    if pts is None:
        return delta(space, space.backend.identity())
    return delta(space, pts[0])


def inner(f: ConeVector, v: ConeVector) -> float:
    """Plain l2 pairing; symmetric and non-negative on the cone."""
    f.space.check_same(v.space)
    small, large = (f, v) if f.support_size <= v.support_size else (v, f)
    return sum(w * large[p] for p, w in small.weights.items())


def translate(g: Key, f: ConeVector, budget: Optional[int] = None) -> ConeVector:
    """Unitary translation: (rho(g) f)(p) = f(g^{-1} p), realised on keys."""
    space = f.space
    g = space.backend.canonical(g)
    out: Dict = {}
    for p, w in f.weights.items():
        out[space.translate_point(g, p)] = w
    _check_budget(len(out), budget)
    return ConeVector(space, out, f.pruned_mass)


def matrix_coefficient(g: Key, f: ConeVector, v: ConeVector) -> float:
    """Diagonal-type coefficient <rho(g) f, v>."""
    return inner(translate(g, f), v)


@dataclass(frozen=True)
class FiniteDensity:
    """Finitely supported non-negative function on the group itself."""

    backend: GroupBackend
    masses: Dict

    def __post_init__(self):
        canon: Dict = {}
        for g, m in self.masses.items():
            if m < 0:
                raise ArgumentError(f"negative mass {m} at {g}")
            key = self.backend.canonical(g)
            canon[key] = canon.get(key, 0.0) + m
        object.__setattr__(self, "masses", canon)

    def __getitem__(self, g) -> float:
        return self.masses.get(self.backend.canonical(g), 0.0)

    def total(self) -> float:
        return sum(self.masses.values())


def star(phi: FiniteDensity) -> FiniteDensity:
    """Mass at g moves to g^{-1}; involutive."""
    inv = phi.backend.inverse
    out: Dict = {}
    for g, m in phi.masses.items():
        key = inv(g)
        out[key] = out.get(key, 0.0) + m
    return FiniteDensity(phi.backend, out)


def convolve(
    phi: FiniteDensity,
    f: ConeVector,
    budget: Optional[int] = None,
    eps_prune: float = 0.0,
) -> ConeVector:
    """Weighted sum of translates: sum_h phi(h) rho(h) f.

    ``eps_prune > 0`` drops output weights below ``eps_prune * max``; the
    dropped mass is recorded on the result.
    """
    space = f.space
    phi.backend.check_same(space.backend)
    out: Dict = {}
    for h, m in phi.masses.items():
        if m == 0.0:
            continue
        for p, w in f.weights.items():
            q = space.translate_point(h, p)
            out[q] = out.get(q, 0.0) + m * w
        _check_budget(len(out), budget)
    result = ConeVector(space, out, f.pruned_mass)
    if eps_prune > 0.0:
        result = result.pruned(eps_prune)
    return result


def _check_budget(size: int, budget: Optional[int]) -> None:
    limit = DEFAULT_SUPPORT_BUDGET if budget is None else budget
    if size > limit:
        raise BudgetExceeded("support size", size, limit)
