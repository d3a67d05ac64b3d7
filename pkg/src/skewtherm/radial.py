"""Radial fast path for the uniform nearest-neighbour walk on a free group.

Functions that are constant on spheres (radial) are stored as 1-D arrays
indexed by word length.  A uniform generator step acts on radial functions by
a three-term recursion; inner products, translated inner products and
resolvent-type weighted sums then cost O(max_radius) per step instead of
touching the exponentially large ball.  Two array forms are used side by
side: the value on a sphere, and the total mass of a sphere (value times
sphere size); keeping both avoids overflowing sphere sizes at large radius.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import List, Sequence, Tuple

import numpy as np

from .errors import ArgumentError


@dataclass(frozen=True)
class RadialAlgebra:
    """Sphere bookkeeping for the free group of the given rank."""

    rank: int
    max_radius: int

    def __post_init__(self):
        if self.rank < 1:
            raise ArgumentError("rank must be >= 1")
        if self.max_radius < 2:
            raise ArgumentError("max_radius must be >= 2")

    @property
    def degree(self) -> int:
        return 2 * self.rank

    @property
    def branch(self) -> int:
        return 2 * self.rank - 1

    def sphere_size(self, k: int) -> int:
        if k == 0:
            return 1
        return self.degree * self.branch ** (k - 1)

    def log_sphere_size(self, k: int) -> float:
        if k == 0:
            return 0.0
        return math.log(self.degree) + (k - 1) * math.log(self.branch)

    # -- one uniform-generator step ------------------------------------------

    def step_value(self, v: np.ndarray) -> np.ndarray:
        """Convolution of a radial value function with the uniform step.

        (p * v)(0) = v(1); (p * v)(k) = v(k-1)/2r + v(k+1)(2r-1)/2r.
        The same operator gives conditional expectations of the radius chain.
        """
        q = self.degree
        out = np.zeros_like(v)
        out[0] = v[1]
        out[1:-1] = v[:-2] / q + v[2:] * (self.branch / q)
        out[-1] = v[-2] / q
        return out

    def step_mass(self, m: np.ndarray) -> np.ndarray:
        """Push the sphere-mass distribution through one uniform step."""
        q = self.degree
        out = np.zeros_like(m)
        out[0] = m[1] / q
        out[1] = m[0] + (m[2] / q if len(m) > 2 else 0.0)
        if len(m) > 2:
            out[2:-1] = m[1:-2] * (self.branch / q) + m[3:] / q
            out[-1] = m[-2] * (self.branch / q)
        return out

    def identity_value(self) -> np.ndarray:
        v = np.zeros(self.max_radius + 1)
        v[0] = 1.0
        return v

    def radius_distribution(self, steps: int, start_radius: int = 0) -> np.ndarray:
        """Radius distribution of the uniform walk after ``steps`` steps."""
        m = np.zeros(self.max_radius + 1)
        if start_radius > self.max_radius:
            raise ArgumentError("start radius beyond max_radius")
        m[start_radius] = 1.0
        for _ in range(steps):
            m = self.step_mass(m)
        return m

    # -- pair counts for translated inner products ----------------------------

    def overlap_counts(self, j: int, k: int) -> List[Tuple[int, int]]:
        """Pairs (m, count): number of length-k words with common prefix
        exactly m against a fixed reduced word of length j."""
        if j == 0:
            return [(0, self.sphere_size(k))]
        if k == 0:
            return [(0, 1)]
        out: List[Tuple[int, int]] = []
        top = min(j, k)
        for m in range(top + 1):
            if m == 0:
                out.append((0, self.branch ** k))
            elif m < top:
                out.append((m, (self.degree - 2) * self.branch ** (k - m - 1)))
            elif m == j == k:
                out.append((m, 1))
            elif m == j < k:
                out.append((m, self.branch ** (k - j)))
            else:  # m == k < j
                out.append((m, 1))
        return out

    def _overlap_fractions(self, j: int, k: int) -> List[Tuple[int, float]]:
        """(m, count / sphere_size(k)) with the ratio computed in logs."""
        out = []
        log_sk = self.log_sphere_size(k)
        for m, count in self.overlap_counts(j, k):
            out.append((m, math.exp(math.log(count) - log_sk)))
        return out


@dataclass(frozen=True)
class RadialVector:
    """Radial function stored as (value per sphere, mass per sphere)."""

    algebra: RadialAlgebra
    value: np.ndarray
    mass: np.ndarray

    @staticmethod
    def from_value(algebra: RadialAlgebra, value: np.ndarray) -> "RadialVector":
        mass = np.zeros_like(value)
        for k in range(len(value)):
            if value[k] != 0.0:
                mass[k] = math.exp(math.log(abs(value[k])) + algebra.log_sphere_size(k))
                if value[k] < 0:
                    mass[k] = -mass[k]
        return RadialVector(algebra, value.copy(), mass)

    def norm_sq(self) -> float:
        return float(np.dot(self.mass, self.value))

    def norm(self) -> float:
        return math.sqrt(max(self.norm_sq(), 0.0))

    def inner(self, other: "RadialVector") -> float:
        return float(np.dot(self.mass, other.value))

    def translated_inner(self, j: int, other: "RadialVector") -> float:
        """<rho(g) self, other> for any g of word length j."""
        if j == 0:
            return self.inner(other)
        alg = self.algebra
        total = 0.0
        kmax = len(other.mass) - 1
        for k in range(kmax + 1):
            mk = other.mass[k]
            if mk == 0.0:
                continue
            acc = 0.0
            for m, frac in alg._overlap_fractions(j, k):
                idx = j + k - 2 * m
                if idx <= kmax:
                    acc += frac * self.value[idx]
            total += mk * acc
        return total

    def step(self) -> "RadialVector":
        alg = self.algebra
        return RadialVector(alg, alg.step_value(self.value), alg.step_mass(self.mass))

    def scaled(self, factor: float) -> "RadialVector":
        return RadialVector(self.algebra, self.value * factor, self.mass * factor)

    def plus(self, other: "RadialVector") -> "RadialVector":
        return RadialVector(self.algebra, self.value + other.value, self.mass + other.mass)


def walk_layer_series(
    algebra: RadialAlgebra,
    n_max: int,
    weights_per_t: Sequence[np.ndarray],
) -> List[RadialVector]:
    """Accumulate sum_n w_t[n] * (n-step walk distribution) for several weight rows.

    ``weights_per_t[i][n]`` multiplies the n-step layer (index 0 unused).
    Returns one RadialVector per weight row, all in a single pass over n.
    """
    value = algebra.identity_value()
    mass = value.copy()
    acc = [
        (np.zeros_like(value), np.zeros_like(value)) for _ in weights_per_t
    ]
    for n in range(1, n_max + 1):
        value = algebra.step_value(value)
        mass = algebra.step_mass(mass)
        for row, (av, am) in zip(weights_per_t, acc):
            w = row[n]
            if w != 0.0:
                av += w * value
                am += w * mass
    return [RadialVector(algebra, av, am) for (av, am) in acc]


def discounted_walk_vector(
    algebra: RadialAlgebra,
    n_max: int,
    coefficients: np.ndarray,
    step_scale: float,
) -> RadialVector:
    """sum_n coefficients[n] * step_scale^n * (n-step walk distribution).

    The scale is applied per step so all intermediates stay in float range
    even when step_scale^n alone would overflow.
    """
    value = algebra.identity_value()
    mass = value.copy()
    av = np.zeros_like(value)
    am = np.zeros_like(value)
    for n in range(1, n_max + 1):
        value = step_scale * algebra.step_value(value)
        mass = step_scale * algebra.step_mass(mass)
        w = coefficients[n]
        if w != 0.0:
            av += w * value
            am += w * mass
    return RadialVector(algebra, av, am)


def return_coefficients(algebra: RadialAlgebra, n_max: int) -> np.ndarray:
    """Identity-return masses of the uniform walk, indices 1..n_max."""
    mass = algebra.identity_value()
    out = np.zeros(n_max + 1)
    for n in range(1, n_max + 1):
        mass = algebra.step_mass(mass)
        out[n] = mass[0]
    return out


def radius_one_coefficients(algebra: RadialAlgebra, n_max: int) -> np.ndarray:
    """Mass of the radius-1 sphere after n steps, indices 1..n_max."""
    mass = algebra.identity_value()
    out = np.zeros(n_max + 1)
    for n in range(1, n_max + 1):
        mass = algebra.step_mass(mass)
        out[n] = mass[1]
    return out


def horner_weighted_sum(
    algebra: RadialAlgebra,
    base_value: np.ndarray,
    weights: np.ndarray,
    start: int,
    step_scale: float = 1.0,
) -> np.ndarray:
    """W = sum_{n >= start} weights[n] (scale * P)^{n-start}(base), backward Horner.

    P is the uniform-step expectation operator on radial value arrays; the
    scale absorbs non-probability letter weights.
    """
    n_max = len(weights) - 1
    if start > n_max:
        return np.zeros_like(base_value)
    acc = weights[n_max] * base_value
    for n in range(n_max - 1, start - 1, -1):
        acc = step_scale * algebra.step_value(acc)
        acc += weights[n] * base_value
    return acc
