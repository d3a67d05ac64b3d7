"""Approximating twisted measures and limits of matrix coefficients.

A one-sided approximating measure is a normalised weighted sum of Dirac
masses at points ``(word) + base tail``; the weight of a word couples its
marked group element to a reference vector through the representation.  The
two-sided variant doubles the word across the origin and is asymptotically
shift invariant.  This module builds both at finite truncation, exposes their
cylinder masses, and packages the derived diagnostics: coefficient-ratio
tables, regrouping identities, local Gibbs bounds, cocycle estimates,
spherical profiles on free groups, the exact boundary pairing, and drift.

All builders internally fold the discount t into the letter weights (weights
divided by t), so accumulated masses scale like (radius / t)^n and stay in
float range at any truncation depth.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from .engines import effective_last_letters, generic_layers, lattice_layers, pick_engine
from .errors import ArgumentError, DivergenceGuard, DomainError
from .gdensity import coefficient_values
from .parallel import ordered_map
from .groups import FreeAbelian, FreeGroup, Key
from .radial import RadialAlgebra, RadialVector, discounted_walk_vector, horner_weighted_sum
from .repspace import ConeVector, FiniteDensity, RepSpace, convolve, delta, inner, star, translate
from .shiftspace import birkhoff_weight
from .systems import System

# ---------------------------------------------------------------------------
# measure containers


@dataclass
class CylinderMeasure:
    """Cylinder masses of an approximating measure at fixed (t, N).

    One-sided modes key masses by cylinder words of length ``depth``; the
    two-sided mode keys by (past word, future word) pairs.  ``normalizer`` is
    the finite-truncation normalising inner product (computed in discounted
    units).
    """

    mode: str
    system: System
    t: float
    n_max: int
    depth: int
    c_id: str
    masses: Dict
    normalizer: float
    gamma_hat: float
    diagnostics: Dict[str, float] = field(default_factory=dict)
    _mass2_fn: Optional[Callable] = None

    def mass(self, word: Sequence[int]) -> float:
        if self.mode == "two-sided":
            raise ArgumentError("one-sided mass query on a two-sided measure")
        w = tuple(word)
        if len(w) > self.depth:
            raise ArgumentError(f"measure materialised to depth {self.depth}")
        total = 0.0
        for cyl, m in self.masses.items():
            if cyl[: len(w)] == w:
                total += m
        return total

    def mass2(self, past: Sequence[int], future: Sequence[int]) -> float:
        if self.mode != "two-sided":
            raise ArgumentError("two-sided mass query on a one-sided measure")
        p, f = tuple(past), tuple(future)
        if self._mass2_fn is not None:
            return self._mass2_fn(p, f)
        total = 0.0
        for (cp, cf), m in self.masses.items():
            if len(cp) >= len(p) and (len(p) == 0 or cp[-len(p):] == p) and cf[: len(f)] == f:
                total += m
        return total

    def total_mass(self) -> float:
        return float(sum(self.masses.values()))


def _discounted(system: System, t: float) -> System:
    """Same system with every letter weight divided by t."""
    if t <= 0:
        raise ArgumentError("discount t must be positive")
    return System(system.spec.rescaled(-math.log(t)), system.marking, system.name)


# Radius beyond which near-critical sphere masses leave float range; the
# l2-profile there is below exp(-60) of the peak, so truncation is harmless.
RADIAL_RADIUS_CAP = 1200


def _radial_cap(n_max: int) -> int:
    return min(n_max + 2, RADIAL_RADIUS_CAP)


# ---------------------------------------------------------------------------
# one-sided sparse builder


def _cone_delta(system: System) -> ConeVector:
    return delta(RepSpace(system.backend), system.backend.identity())


def _aggregate_density(
    system_d: System, n_max: int, c_vals: np.ndarray, first_letters, last_letters
) -> FiniteDensity:
    """c-weighted aggregate of the discounted system's layers."""
    agg: Dict[Key, float] = {}
    if pick_engine(system_d) == "lattice":
        lasts = effective_last_letters(system_d, last_letters)
        stream = (
            layer.to_dict(lasts)
            for layer in lattice_layers(system_d, n_max, first_letters)
        )
    else:
        stream = generic_layers(system_d, n_max, first_letters, last_letters)
    for n, layer in enumerate(stream, start=1):
        w = c_vals[n]
        for g, m in layer.items():
            agg[g] = agg.get(g, 0.0) + w * m
    return FiniteDensity(system_d.backend, agg)


def approx_measure(
    system: System,
    mode: str,
    t: float,
    n_max: int,
    depth: int,
    f: Optional[ConeVector] = None,
    c=None,
    shift: Optional[Key] = None,
    gamma_hat: Optional[float] = None,
) -> CylinderMeasure:
    """One- or two-sided approximating measure at finite truncation.

    mode "plain" pairs against the forward-convolved vector, "star" against
    the reflected density's convolution, "two-sided" builds the doubled
    construction (symmetric integer systems only).
    """
    if mode == "two-sided":
        if f is not None or shift is not None:
            raise ArgumentError("two-sided mode supports only the identity vector")
        return two_sided_measure(system, t, n_max, depth, c, gamma_hat)
    if mode not in ("plain", "star"):
        raise ArgumentError(f"unknown measure mode {mode!r}")
    if system.is_free_uniform_walk:
        if f is not None or shift is not None:
            raise ArgumentError("radial measures support only the identity vector")
        if mode == "star":
            mode = "plain"  # symmetric walk: the reflected density coincides
        return radial_measure(system, t, n_max, depth, c, gamma_hat)
    backend = system.backend
    if (
        isinstance(backend, FreeAbelian)
        and backend.dim == 1
        and system.spec.memory == 1
        and f is None
    ):
        return _one_sided_line(system, mode, t, n_max, depth, c, shift, gamma_hat)
    return _one_sided_sparse(system, mode, t, n_max, depth, f, c, shift, gamma_hat)


def _one_sided_sparse(
    system: System,
    mode: str,
    t: float,
    n_max: int,
    depth: int,
    f: Optional[ConeVector],
    c,
    shift: Optional[Key],
    gamma_hat: Optional[float],
) -> CylinderMeasure:
    spec = system.spec
    spec.validate_twisted_tail()
    sysd = _discounted(system, t)
    specd = sysd.spec
    backend = system.backend
    marking = system.marking
    c_vals = coefficient_values(c, n_max)
    fvec = f if f is not None else _cone_delta(system)

    dens = _aggregate_density(sysd, n_max, c_vals, spec.letter_start, spec.letter_end)
    u_ref = convolve(dens, fvec)
    q_vec = u_ref if mode == "plain" else convolve(star(dens), fvec)
    normalizer = inner(u_ref, q_vec)
    if normalizer <= 0:
        raise DivergenceGuard("normalising inner product vanished")
    q_query = (
        q_vec
        if shift is None
        else translate(backend.inverse(backend.canonical(shift)), q_vec)
    )

    psi_cache: Dict[Key, float] = {}

    def psi(g: Key) -> float:
        val = psi_cache.get(g)
        if val is None:
            val = inner(translate(g, fvec), q_query)
            psi_cache[g] = val
        return val

    m = specd.memory
    keep = max(1, m - 1)
    a_letter = specd.letter_end
    masses: Dict[Tuple[int, ...], float] = {}
    tail = specd.tail_prefix(depth + m)
    tail_mass = 0.0
    head_guard = max(1, n_max - max(2, n_max // 20))

    # states: (prefix of word capped at depth, trailing context, group) -> weight
    states: Dict[Tuple[Tuple[int, ...], Tuple[int, ...], Key], float] = {}
    for s in range(specd.n_letters):
        w0 = specd.window_weight((s,)) if m == 1 else 1.0
        states[((s,), (s,), marking.label(s))] = w0
    for n in range(1, n_max + 1):
        if n > 1:
            nxt: Dict[Tuple[Tuple[int, ...], Tuple[int, ...], Key], float] = {}
            for (prefix, ctx, g), massval in states.items():
                for s in range(specd.n_letters):
                    if not specd.tau[ctx[-1], s]:
                        continue
                    new_ctx = (ctx + (s,))[-keep:]
                    if m == 1:
                        factor = specd.window_weight((s,))
                    elif n >= m:
                        factor = specd.window_weight((ctx + (s,))[-m:])
                    else:
                        factor = 1.0
                    new_prefix = prefix + (s,) if len(prefix) < depth else prefix
                    key = (new_prefix, new_ctx, backend.compose(g, marking.label(s)))
                    prev = nxt.get(key)
                    nxt[key] = massval * factor if prev is None else prev + massval * factor
            states = nxt
        w_n = c_vals[n]
        for (prefix, ctx, g), massval in states.items():
            if ctx[-1] != a_letter:
                continue
            boundary = 1.0
            if m > 1:
                glued = ctx + tail[:m]
                acc = 0.0
                for j in range(len(ctx)):
                    acc += specd.log_window(glued[j : j + m])
                boundary = math.exp(acc)
            atom_prefix = prefix if n >= depth else prefix + tail[: depth - n]
            contribution = w_n * massval * boundary * psi(g) / normalizer
            masses[atom_prefix] = masses.get(atom_prefix, 0.0) + contribution
            if n >= head_guard:
                tail_mass += contribution
    diag = {
        "tail_mass": tail_mass,
        "total_mass": float(sum(masses.values())),
    }
    meas = CylinderMeasure(
        mode=mode,
        system=system,
        t=t,
        n_max=n_max,
        depth=depth,
        c_id="unit" if c is None else getattr(c, "name", "custom"),
        masses=masses,
        normalizer=normalizer,
        gamma_hat=gamma_hat if gamma_hat is not None else t,
        diagnostics=diag,
    )
    diag["start_cylinder_mass"] = meas.mass((spec.letter_start,))
    return meas


def _one_sided_line(
    system: System,
    mode: str,
    t: float,
    n_max: int,
    depth: int,
    c,
    shift: Optional[Key],
    gamma_hat: Optional[float],
) -> CylinderMeasure:
    """Array-accelerated one-sided measure for rank-1 integer markings.

    States carry (cylinder prefix, last letter) with a dense position array,
    so the per-step cost is a handful of shifted adds per prefix instead of a
    dictionary sweep over every reachable group element.
    """
    spec = system.spec
    spec.validate_twisted_tail()
    c_vals = coefficient_values(c, n_max)
    steps = [system.marking.label(s)[0] for s in range(spec.n_letters)]
    off = n_max * max(1, max(abs(e) for e in steps)) + 1
    size = 2 * off + 1
    letter_w = [spec.window_weight((s,)) / t for s in range(spec.n_letters)]
    a_letter = spec.letter_end
    tail = spec.tail_prefix(depth + 1)

    u_arr = _restricted_aggregate(system, n_max, c_vals, size, off, steps, letter_w)
    q_arr = u_arr if mode == "plain" else u_arr[::-1].copy()
    normalizer = float(np.dot(u_arr, q_arr))
    if normalizer <= 0:
        raise DivergenceGuard("normalising inner product vanished")
    if shift is None:
        psi_arr = q_arr
    else:
        # coefficient of g against the group-shifted reference: Q(shift . g)
        e = int(system.backend.canonical(shift)[0])
        psi_arr = np.zeros(size)
        lo, hi = max(0, -e), min(size, size - e)
        psi_arr[lo:hi] = q_arr[lo + e : hi + e]

    masses: Dict[Tuple[int, ...], float] = {}
    tail_mass = 0.0
    head_guard = max(1, n_max - max(2, n_max // 20))
    states: Dict[Tuple[Tuple[int, ...], int], np.ndarray] = {}
    for s in range(spec.n_letters):
        arr = np.zeros(size)
        arr[off + steps[s]] = letter_w[s]
        states[((s,), s)] = arr
    for n in range(1, n_max + 1):
        if n > 1:
            nxt: Dict[Tuple[Tuple[int, ...], int], np.ndarray] = {}
            for (prefix, last), arr in states.items():
                for s in range(spec.n_letters):
                    if not spec.tau[last, s]:
                        continue
                    new_prefix = prefix + (s,) if len(prefix) < depth else prefix
                    shifted = np.zeros(size)
                    e = steps[s]
                    lo, hi = max(0, e), min(size, size + e)
                    shifted[lo:hi] = arr[lo - e : hi - e] * letter_w[s]
                    key = (new_prefix, s)
                    if key in nxt:
                        nxt[key] += shifted
                    else:
                        nxt[key] = shifted
            states = nxt
        w_n = c_vals[n]
        for (prefix, last), arr in states.items():
            if last != a_letter:
                continue
            atom_prefix = prefix if n >= depth else prefix + tail[: depth - n]
            contribution = w_n * float(np.dot(arr, psi_arr)) / normalizer
            masses[atom_prefix] = masses.get(atom_prefix, 0.0) + contribution
            if n >= head_guard:
                tail_mass += contribution
    diag = {"tail_mass": tail_mass, "total_mass": float(sum(masses.values()))}
    meas = CylinderMeasure(
        mode=mode,
        system=system,
        t=t,
        n_max=n_max,
        depth=depth,
        c_id="unit" if c is None else getattr(c, "name", "custom"),
        masses=masses,
        normalizer=normalizer,
        gamma_hat=gamma_hat if gamma_hat is not None else t,
        diagnostics=diag,
    )
    diag["start_cylinder_mass"] = meas.mass((spec.letter_start,))
    return meas


# ---------------------------------------------------------------------------
# radial one-sided measure (uniform free-group walk)


@dataclass
class RadialMeasureData:
    algebra: RadialAlgebra
    u: RadialVector
    beta: float  # discounted per-step scale: (degree * letter weight) / t
    letter_weight_d: float  # discounted letter weight
    c_row: np.ndarray  # c_n, index 0 unused


def radial_measure(
    system: System,
    t: float,
    n_max: int,
    depth: int,
    c=None,
    gamma_hat: Optional[float] = None,
) -> CylinderMeasure:
    """Letter-summed approximating measure for the uniform free-group walk.

    Cylinder masses come from resolvent-type radial sums: a depth-L cylinder
    with marked radius j has long-word mass w0^L W_L(j) / F, where W_L is the
    Horner sum of the discounted, c-boosted step semigroup applied to the
    reference vector, plus at most one short-word atom per length.
    """
    spec = system.spec
    spec.validate_twisted_tail()
    backend: FreeGroup = system.backend  # type: ignore[assignment]
    c_vals = coefficient_values(c, n_max)
    w0d = system.uniform_letter_weight / t
    alg = RadialAlgebra(backend.rank, max_radius=_radial_cap(n_max))
    beta = w0d * 2 * backend.rank
    u = discounted_walk_vector(alg, n_max, c_vals, beta)
    normalizer = u.norm_sq()
    if normalizer <= 0:
        raise DivergenceGuard("radial normaliser vanished")

    data = RadialMeasureData(
        algebra=alg, u=u, beta=beta, letter_weight_d=w0d, c_row=c_vals
    )
    masses: Dict[Tuple[int, ...], float] = {}
    w_table = horner_weighted_sum(alg, u.value, c_vals, start=depth, step_scale=beta)
    marking = system.marking
    tail = spec.tail_prefix(depth + 1)
    L = depth
    for word in itertools.product(range(spec.n_letters), repeat=L):
        j = backend.length(marking.product(word))
        mass = (w0d**L) * float(w_table[j]) / normalizer if j < len(u.value) else 0.0
        # short atoms: word of length k < L equal to the cylinder start,
        # with the base tail supplying the rest
        for k in range(1, L):
            if tail[: L - k] == word[k:]:
                jk = backend.length(marking.product(word[:k]))
                if jk < len(u.value):
                    mass += c_vals[k] * (w0d**k) * float(u.value[jk]) / normalizer
        masses[word] = mass
    meas = CylinderMeasure(
        mode="plain",
        system=system,
        t=t,
        n_max=n_max,
        depth=depth,
        c_id="unit" if c is None else getattr(c, "name", "custom"),
        masses=masses,
        normalizer=normalizer,
        gamma_hat=gamma_hat if gamma_hat is not None else t,
        diagnostics={"radial": 1.0, "total_mass": float(sum(masses.values()))},
    )
    meas.diagnostics["start_cylinder_mass"] = meas.mass((spec.letter_start,))
    meas._radial_data = data  # type: ignore[attr-defined]
    return meas


# ---------------------------------------------------------------------------
# two-sided measure on symmetric integer systems


def _past_tail_letter(spec) -> int:
    """Fixed letter filling the far past (never the distinguished end letter)."""
    for p in range(spec.n_letters):
        if p == spec.letter_end:
            continue
        if spec.tau[p, p] and spec.tau[p, spec.letter_end]:
            return p
    raise ArgumentError("no admissible far-past filler letter")


def two_sided_measure(
    system: System,
    t: float,
    n_max: int,
    depth: int,
    c=None,
    gamma_hat: Optional[float] = None,
) -> CylinderMeasure:
    """Two-sided doubled measure for memory-1 rank-1 abelian markings.

    Atoms place one marked word on each side of the origin; cylinder masses
    reduce to correlations of suffix-resolved past and prefix-resolved future
    aggregates.  The identity coefficient couples the two sides.
    """
    spec = system.spec
    backend = system.backend
    if not isinstance(backend, FreeAbelian) or backend.dim != 1:
        raise ArgumentError("two-sided engine needs a rank-1 free-abelian marking")
    if spec.memory != 1:
        raise ArgumentError("two-sided engine needs memory-1 weights")
    spec.validate_twisted_tail()
    if not spec.tau[spec.letter_end, spec.letter_start]:
        raise ArgumentError("two-sided mode needs the end letter to precede the start letter")
    c_vals = coefficient_values(c, n_max)
    steps = [system.marking.label(s)[0] for s in range(spec.n_letters)]
    off = n_max * max(1, max(abs(e) for e in steps)) + 1
    size = 2 * off + 1
    lp, lf = depth, depth + 1
    a_letter = spec.letter_end
    A_letter = spec.letter_start
    x_past = _past_tail_letter(spec)
    tail = spec.tail_prefix(lf + 1)
    letter_w = [spec.window_weight((s,)) / t for s in range(spec.n_letters)]

    # past words: start at A, any end; suffix-resolved aggregates
    past_long: Dict[Tuple[int, ...], np.ndarray] = {}
    past_short: Dict[Tuple[int, ...], np.ndarray] = {}
    states: Dict[Tuple[int, ...], np.ndarray] = {}
    init = np.zeros(size)
    init[off + steps[A_letter]] = letter_w[A_letter]
    states[(A_letter,)] = init
    for m in range(1, n_max + 1):
        if m > 1:
            nxt: Dict[Tuple[int, ...], np.ndarray] = {}
            for key, arr in states.items():
                for s in range(spec.n_letters):
                    if not spec.tau[key[-1], s]:
                        continue
                    new_key = (key + (s,))[-lp:] if len(key) >= lp else key + (s,)
                    shifted = np.zeros(size)
                    e = steps[s]
                    lo, hi = max(0, e), min(size, size + e)
                    shifted[lo:hi] = arr[lo - e : hi - e] * letter_w[s]
                    if new_key in nxt:
                        nxt[new_key] += shifted
                    else:
                        nxt[new_key] = shifted
            states = nxt
        target = past_long if m >= lp else past_short
        for key, arr in states.items():
            bucket = key[-lp:] if m >= lp else key
            if bucket in target:
                target[bucket] += c_vals[m] * arr
            else:
                target[bucket] = c_vals[m] * arr

    # future words: any start, end at a; prefix-resolved aggregates
    fut_long: Dict[Tuple[int, ...], np.ndarray] = {}
    fut_short: Dict[Tuple[int, ...], np.ndarray] = {}
    fstates: Dict[Tuple[Tuple[int, ...], int], np.ndarray] = {}
    for s in range(spec.n_letters):
        arr = np.zeros(size)
        arr[off + steps[s]] = letter_w[s]
        fstates[((s,), s)] = arr
    for n in range(1, n_max + 1):
        if n > 1:
            nxt2: Dict[Tuple[Tuple[int, ...], int], np.ndarray] = {}
            for (prefix, last), arr in fstates.items():
                for s in range(spec.n_letters):
                    if not spec.tau[last, s]:
                        continue
                    new_prefix = prefix + (s,) if len(prefix) < lf else prefix
                    shifted = np.zeros(size)
                    e = steps[s]
                    lo, hi = max(0, e), min(size, size + e)
                    shifted[lo:hi] = arr[lo - e : hi - e] * letter_w[s]
                    key2 = (new_prefix, s)
                    if key2 in nxt2:
                        nxt2[key2] += shifted
                    else:
                        nxt2[key2] = shifted
            fstates = nxt2
        for (prefix, last), arr in fstates.items():
            if last != a_letter:
                continue
            target2 = fut_long if n >= lf else fut_short
            if prefix in target2:
                target2[prefix] += c_vals[n] * arr
            else:
                target2[prefix] = c_vals[n] * arr

    agg_aa = _restricted_aggregate(system, n_max, c_vals, size, off, steps, letter_w)
    normalizer = float(np.dot(agg_aa, agg_aa[::-1]))
    if normalizer <= 0:
        raise DivergenceGuard("two-sided normaliser vanished")

    def past_sources(past: Tuple[int, ...]):
        """Yield (junction letter, position array) over matching past words."""
        lpn = len(past)
        for key, arr in past_long.items():
            if lpn == 0 or key[-lpn:] == past:
                yield key[-1], arr
        for key, arr in past_short.items():
            mlen = len(key)
            if mlen >= lpn:
                if lpn == 0 or key[-lpn:] == past:
                    yield key[-1], arr
            else:
                if past[-mlen:] != key:
                    continue
                lead = past[: lpn - mlen]
                expected = (x_past,) * (lpn - mlen - 1) + (a_letter,)
                if lead == expected:
                    yield key[-1], arr

    def fut_sources(future: Tuple[int, ...]):
        lfn = len(future)
        for key, arr in fut_long.items():
            if lfn == 0 or key[:lfn] == future:
                yield key[0], arr
        for key, arr in fut_short.items():
            nlen = len(key)
            if nlen >= lfn:
                if lfn == 0 or key[:lfn] == future:
                    yield key[0], arr
            else:
                if future[:nlen] != key:
                    continue
                if tail[: lfn - nlen] == future[nlen:]:
                    yield key[0], arr

    def mass2(past: Tuple[int, ...], future: Tuple[int, ...]) -> float:
        if len(past) > lp or len(future) > lf:
            raise ArgumentError("cylinder deeper than the materialised resolution")
        total = 0.0
        for b_last, parr in past_sources(past):
            for f_first, farr in fut_sources(future):
                if not spec.tau[b_last, f_first]:
                    continue
                total += float(np.dot(parr, farr[::-1]))
        return total / normalizer

    masses: Dict[Tuple[Tuple[int, ...], Tuple[int, ...]], float] = {}
    for ppat in _patterns_up_to(spec, depth):
        for fpat in _patterns_up_to(spec, depth):
            if ppat and fpat and not spec.tau[ppat[-1], fpat[0]]:
                continue
            if not ppat and not fpat:
                continue
            masses[(ppat, fpat)] = mass2(ppat, fpat)
    meas = CylinderMeasure(
        mode="two-sided",
        system=system,
        t=t,
        n_max=n_max,
        depth=depth,
        c_id="unit" if c is None else getattr(c, "name", "custom"),
        masses=masses,
        normalizer=normalizer,
        gamma_hat=gamma_hat if gamma_hat is not None else t,
        diagnostics={},
        _mass2_fn=mass2,
    )
    meas.diagnostics["junction_mass"] = mass2((a_letter,), (A_letter,))
    meas.diagnostics["total_mass"] = mass2((), ())
    return meas


def _restricted_aggregate(system, n_max, c_vals, size, off, steps, letter_w):
    """c-aggregated positions of discounted words from letter_start to letter_end."""
    spec = system.spec
    agg = np.zeros(size)
    arrs = [np.zeros(size) for _ in range(spec.n_letters)]
    A, a = spec.letter_start, spec.letter_end
    arrs[A][off + steps[A]] = letter_w[A]
    if A == a:
        agg += c_vals[1] * arrs[A]
    for n in range(2, n_max + 1):
        nxt = [np.zeros(size) for _ in range(spec.n_letters)]
        for j in range(spec.n_letters):
            if not arrs[j].any():
                continue
            for s in range(spec.n_letters):
                if not spec.tau[j, s]:
                    continue
                e = steps[s]
                lo, hi = max(0, e), min(size, size + e)
                nxt[s][lo:hi] += arrs[j][lo - e : hi - e] * letter_w[s]
        arrs = nxt
        agg += c_vals[n] * arrs[a]
    return agg


def _patterns_up_to(spec, depth: int) -> List[Tuple[int, ...]]:
    out: List[Tuple[int, ...]] = [()]
    for L in range(1, depth + 1):
        for word in itertools.product(range(spec.n_letters), repeat=L):
            if spec.is_admissible(word):
                out.append(word)
    return out


def shift_invariance_defect(measure: CylinderMeasure, depth: int) -> float:
    """Max |m(E) - m(shift^{-1} E)| over two-sided cylinders up to ``depth``."""
    if measure.mode != "two-sided":
        raise ArgumentError("shift invariance is a two-sided diagnostic")
    spec = measure.system.spec
    worst = 0.0
    for ppat in _patterns_up_to(spec, depth):
        for fpat in _patterns_up_to(spec, depth):
            if not ppat and not fpat:
                continue
            if ppat and fpat and not spec.tau[ppat[-1], fpat[0]]:
                continue
            m_e = measure.mass2(ppat, fpat)
            if ppat:
                m_pre = measure.mass2(ppat[:-1], (ppat[-1],) + fpat)
            else:
                m_pre = sum(
                    measure.mass2((), (b,) + fpat)
                    for b in range(spec.n_letters)
                    if not fpat or spec.tau[b, fpat[0]]
                )
            worst = max(worst, abs(m_e - m_pre))
    return worst


# ---------------------------------------------------------------------------
# coefficient ratio tables


@dataclass
class UpsilonTable:
    kind: str
    t_grid: Tuple[float, ...]
    entries: Dict[Key, Tuple[float, ...]]
    extrapolated: Dict[Key, float]
    gamma_hat: float
    diagnostics: Dict[str, float] = field(default_factory=dict)
    by_length: Optional[Dict[int, Tuple[float, ...]]] = None  # radial tables only

    def _row(self, g) -> Tuple[float, ...]:
        row = self.entries.get(g)
        if row is None and self.by_length is not None:
            row = self.by_length.get(len(g))
        if row is None:
            raise ArgumentError(f"no ratio entry for {g!r}")
        return row

    def value(self, g) -> float:
        if g in self.extrapolated:
            return self.extrapolated[g]
        return _extrapolate(self._row(g))

    def at_finest(self, g) -> float:
        return self._row(g)[-1]


def descending_grid(gamma_hat: float, delta: float = 0.5, points: int = 6) -> Tuple[float, ...]:
    """Geometric grid descending toward the estimated radius."""
    return tuple(gamma_hat * (1.0 + delta * 2.0 ** (-k)) for k in range(points))


def _extrapolate(values: Sequence[float]) -> float:
    if len(values) == 1:
        return float(values[0])
    return float(2.0 * values[-1] - values[-2])


def upsilon(
    system: System,
    kind: str,
    targets: Sequence,
    t_grid: Sequence[float],
    n_max: int,
    f: Optional[ConeVector] = None,
    c=None,
    gamma_hat: Optional[float] = None,
) -> UpsilonTable:
    """Ratios of translated to plain pairings along a descending grid.

    kind "plain" pairs the convolved vector with itself, "star" with the
    reflected density's convolution.
    """
    if kind not in ("plain", "star"):
        raise ArgumentError(f"unknown upsilon kind {kind!r}")
    if len(t_grid) == 0:
        raise ArgumentError("empty t grid")
    if any(t2 >= t1 for t1, t2 in zip(t_grid, t_grid[1:])):
        raise ArgumentError("t grid must strictly descend")
    backend = system.backend
    keys = [backend.canonical(g) for g in targets]
    gh = gamma_hat if gamma_hat is not None else float(t_grid[-1])
    if system.is_free_uniform_walk:
        if f is not None:
            raise ArgumentError("radial ratio tables support only the identity vector")
        return _upsilon_radial(system, kind, keys, t_grid, n_max, c, gh)
    if isinstance(backend, FreeAbelian) and backend.dim <= 2 and f is None and system.spec.memory == 1:
        return _upsilon_lattice(system, kind, keys, t_grid, n_max, c, gh)
    return _upsilon_generic(system, kind, keys, t_grid, n_max, f, c, gh)


def _upsilon_radial(system, kind, keys, t_grid, n_max, c, gamma_hat) -> UpsilonTable:
    backend: FreeGroup = system.backend  # type: ignore[assignment]
    c_vals = coefficient_values(c, n_max)
    alg = RadialAlgebra(backend.rank, max_radius=_radial_cap(n_max))
    base_scale = system.uniform_letter_weight * 2 * backend.rank
    top = max((len(k) for k in keys), default=0)
    lengths = list(range(0, top + 1))

    def ratios_at(t: float) -> List[float]:
        u = discounted_walk_vector(alg, n_max, c_vals, base_scale / t)
        norm = u.norm_sq()
        return [u.translated_inner(j, u) / norm for j in lengths]

    columns = ordered_map(ratios_at, list(t_grid))
    by_length: Dict[int, List[float]] = {
        j: [col[idx] for col in columns] for idx, j in enumerate(lengths)
    }
    table = {k: tuple(by_length[len(k)]) for k in keys}
    return UpsilonTable(
        kind=kind,
        t_grid=tuple(float(t) for t in t_grid),
        entries=table,
        extrapolated={k: _extrapolate(v) for k, v in table.items()},
        gamma_hat=gamma_hat,
        diagnostics={"engine": 1.0},
        by_length={j: tuple(v) for j, v in by_length.items()},
    )


def _upsilon_lattice(system, kind, keys, t_grid, n_max, c, gamma_hat) -> UpsilonTable:
    spec = system.spec
    backend = system.backend
    c_vals = coefficient_values(c, n_max)
    dim = backend.dim

    def ratios_at(t: float) -> List[float]:
        sysd = _discounted(system, t)
        lasts = effective_last_letters(sysd, spec.letter_end)
        u_arr = None
        for n, layer in enumerate(
            lattice_layers(sysd, n_max, spec.letter_start), start=1
        ):
            combined = layer.combined(lasts)
            if u_arr is None:
                u_arr = np.zeros_like(combined)
            u_arr += c_vals[n] * combined
        q_arr = u_arr if kind == "plain" else (u_arr[::-1] if dim == 1 else u_arr[::-1, ::-1])
        denom = float(np.dot(u_arr.ravel(), q_arr.ravel()))
        if denom <= 0:
            raise DivergenceGuard("ratio denominator vanished")
        out = []
        for k in keys:
            shifted = _lattice_translate(u_arr, k, dim)
            out.append(float(np.dot(shifted.ravel(), q_arr.ravel())) / denom)
        return out

    columns = ordered_map(ratios_at, list(t_grid))
    entries: Dict[Key, List[float]] = {
        k: [col[i] for col in columns] for i, k in enumerate(keys)
    }
    table = {k: tuple(v) for k, v in entries.items()}
    return UpsilonTable(
        kind=kind,
        t_grid=tuple(float(t) for t in t_grid),
        entries=table,
        extrapolated={k: _extrapolate(v) for k, v in table.items()},
        gamma_hat=gamma_hat,
        diagnostics={"engine": 2.0},
    )


def _lattice_translate(arr: np.ndarray, g: Tuple[int, ...], dim: int) -> np.ndarray:
    out = np.zeros_like(arr)
    if dim == 1:
        (e,) = g
        n = arr.shape[0]
        lo, hi = max(0, e), min(n, n + e)
        out[lo:hi] = arr[lo - e : hi - e]
        return out
    e0, e1 = g
    n0, n1 = arr.shape
    lo0, hi0 = max(0, e0), min(n0, n0 + e0)
    lo1, hi1 = max(0, e1), min(n1, n1 + e1)
    out[lo0:hi0, lo1:hi1] = arr[lo0 - e0 : hi0 - e0, lo1 - e1 : hi1 - e1]
    return out


def _upsilon_generic(system, kind, keys, t_grid, n_max, f, c, gamma_hat) -> UpsilonTable:
    c_vals = coefficient_values(c, n_max)
    fvec = f if f is not None else _cone_delta(system)
    spec = system.spec

    def ratios_at(t: float) -> List[float]:
        sysd = _discounted(system, t)
        dens = _aggregate_density(sysd, n_max, c_vals, spec.letter_start, spec.letter_end)
        u = convolve(dens, fvec)
        q = u if kind == "plain" else convolve(star(dens), fvec)
        denom = inner(u, q)
        if denom <= 0:
            raise DivergenceGuard("ratio denominator vanished")
        return [inner(translate(k, u), q) / denom for k in keys]

    columns = ordered_map(ratios_at, list(t_grid))
    entries: Dict[Key, List[float]] = {
        k: [col[i] for col in columns] for i, k in enumerate(keys)
    }
    table = {k: tuple(v) for k, v in entries.items()}
    return UpsilonTable(
        kind=kind,
        t_grid=tuple(float(t) for t in t_grid),
        entries=table,
        extrapolated={k: _extrapolate(v) for k, v in table.items()},
        gamma_hat=gamma_hat,
        diagnostics={"engine": 3.0},
    )


# ---------------------------------------------------------------------------
# diagnostics tying measures to coefficient tables


def _cylinder_weight(system: System, word: Tuple[int, ...], length: int) -> float:
    """Common weight of the first ``length`` steps on the cylinder of ``word``."""
    spec = system.spec
    m = spec.memory
    if len(word) < length + m - 1:
        raise ArgumentError("cylinder too shallow to determine the weight")
    total = 0.0
    for i in range(length):
        total += spec.log_window(word[i : i + m])
    return math.exp(total)


def coefficient_identity_check(
    word: Sequence[int], measure: CylinderMeasure, table: UpsilonTable
) -> float:
    """Relative gap between the weighted cylinder mass and the ratio table.

    ``word`` carries n marked letters plus a trailing re-entry letter.  On
    letter-summed (radial) measures the trailing letter is summed out, so the
    n-letter cylinder is used directly.
    """
    w = tuple(word)
    n = len(w) - 1
    if n < 1:
        raise ArgumentError("word must have length at least 2")
    gamma = measure.gamma_hat
    if measure.diagnostics.get("radial"):
        weight = _cylinder_weight(measure.system, w[:n], n)
        lhs = gamma**n * measure.mass(w[:n]) / weight
    else:
        weight = _cylinder_weight(measure.system, w, n)
        lhs = gamma**n * measure.mass(w) / weight
    g = measure.system.marking.product(w[:n])
    ups = table.value(measure.system.backend.canonical(g))
    if ups <= 0:
        raise ArgumentError("vanishing reference ratio")
    return abs(lhs - ups) / ups


def rhs_gibbs_check(measure: CylinderMeasure, depth: int) -> float:
    """Max of mass([w A]) / (weight(w) gamma^{-|w|}) over shallow cylinders."""
    system = measure.system
    spec = system.spec
    gamma = measure.gamma_hat
    worst = 0.0
    a_start = spec.letter_start
    for r in range(1, depth + 1):
        if r + 1 > measure.depth:
            break
        for word in itertools.product(range(spec.n_letters), repeat=r):
            full = word + (a_start,)
            if not spec.is_admissible(full):
                continue
            mass = measure.mass(full)
            if mass <= 0:
                continue
            if len(full) < r + spec.memory - 1:
                continue
            weight = _cylinder_weight(system, full, r)
            worst = max(worst, mass / (weight * gamma ** (-r)))
    return worst


def cocycle_check(
    word: Sequence[int],
    z_word: Sequence[int],
    measure: CylinderMeasure,
) -> Tuple[float, float]:
    """Cocycle estimate at (word, [z]) and the multiplicative-identity defect.

    The estimate is gamma^n weight(word on [word z])^{-1} m([word z]) / m([z]).
    The defect compares an identity-marked double word against the product of
    the inverse-word and forward-word estimates at matched cylinders.
    """
    system = measure.system
    w = tuple(word)
    z = tuple(z_word)

    def h_est(v: Tuple[int, ...], zz: Tuple[int, ...]) -> float:
        nv = len(v)
        full = v + zz
        weight = _cylinder_weight(system, full, nv)
        denom = measure.mass(zz)
        if denom <= 0:
            raise DomainError("zero-mass base cylinder")
        return measure.gamma_hat ** nv * measure.mass(full) / (weight * denom)

    h_forward = h_est(w, z)
    w_inv = _inverse_word(system, w)
    if w_inv is None:
        return h_forward, float("nan")
    h_id = h_est(w_inv + w, z)
    h_inv = h_est(w_inv, z)
    h_at_shifted = h_est(w, w + z)
    defect = abs(h_id - h_inv * h_at_shifted)
    return h_forward, defect


def _inverse_word(system: System, word: Tuple[int, ...]) -> Optional[Tuple[int, ...]]:
    """Reversed letter-wise inverse, when each letter label has an inverse letter."""
    marking = system.marking
    backend = system.backend
    inv_letters = []
    for s in reversed(word):
        target = backend.inverse(marking.label(s))
        found = None
        for k in range(system.spec.n_letters):
            if marking.label(k) == target:
                found = k
                break
        if found is None:
            return None
        inv_letters.append(found)
    out = tuple(inv_letters)
    if not system.spec.is_admissible(out + word):
        return None
    return out


# ---------------------------------------------------------------------------
# the regrouping identity and remainder diagnostics


def main_equality_residual(
    system: System,
    word_and_letter: Sequence[int],
    t: float,
    n_max: int,
    c=None,
    f: Optional[ConeVector] = None,
    shift: Optional[Key] = None,
) -> float:
    """Relative error between the direct and regrouped cylinder functionals.

    The functional integrates t^r / (weight of the first r steps) over the
    cylinder of ``word_and_letter`` (= w followed by one more letter); the
    regrouped form sums shifted-coefficient densities started at that letter
    plus the short-word boundary terms.  Exact regrouping: the residual is
    float noise.
    """
    spec = system.spec
    backend = system.backend
    marking = system.marking
    wb = tuple(word_and_letter)
    r = len(wb) - 1
    if r < 1:
        raise ArgumentError("need a word plus a trailing letter")
    b_letter = wb[-1]
    m = spec.memory
    c_vals = coefficient_values(c, n_max)
    fvec = f if f is not None else _cone_delta(system)
    depth = r + 1 + max(0, m - 1)

    measure = approx_measure(system, "plain", t, n_max, depth, f=f, c=c, shift=shift)
    lhs = 0.0
    for cyl, mass in measure.masses.items():
        if cyl[: len(wb)] == wb:
            lhs += mass * t**r / _cylinder_weight(system, cyl, r)

    # regrouped side, on the discounted system (t absorbed into weights)
    sysd = _discounted(system, t)
    dens_full = _aggregate_density(sysd, n_max, c_vals, spec.letter_start, spec.letter_end)
    u_ref = convolve(dens_full, fvec)
    q_vec = u_ref
    normalizer = inner(u_ref, q_vec)
    q_query = (
        q_vec
        if shift is None
        else translate(backend.inverse(backend.canonical(shift)), q_vec)
    )
    g_w = marking.product(wb[:r])
    psi_cache: Dict[Key, float] = {}

    def psi_shifted(g: Key) -> float:
        val = psi_cache.get(g)
        if val is None:
            val = inner(translate(backend.compose(g_w, g), fvec), q_query)
            psi_cache[g] = val
        return val

    main_term = 0.0
    for n, layer in enumerate(
        generic_layers(sysd, n_max - r, b_letter, spec.letter_end), start=1
    ):
        main_term += c_vals[n + r] * sum(mass * psi_shifted(g) for g, mass in layer.items())
    main_term /= normalizer

    boundary = 0.0
    tail = spec.tail_prefix(n_max + m + len(wb))
    for n in range(1, r + 1):
        v = wb[:n]
        rest = wb[n:]
        if tail[: len(rest)] != rest:
            continue
        if v[-1] != spec.letter_end:
            continue
        try:
            weight_v = birkhoff_weight(spec, v, tail[:m])
        except DomainError:
            continue
        g_v = marking.product(v)
        coef = inner(translate(g_v, fvec), q_query)
        atom_word = v + tail[: r + m - 1]
        w_r = _cylinder_weight(system, atom_word[: r + m], r)
        boundary += (
            t ** (-n) * c_vals[n] * weight_v * coef * t**r / (w_r * normalizer)
        )
    rhs = main_term + boundary
    scale = max(abs(lhs), abs(rhs), 1e-300)
    return abs(lhs - rhs) / scale


def remainder_head(
    system: System,
    r: int,
    t: float,
    n_max: int,
    c=None,
    f: Optional[ConeVector] = None,
    first_letter: Optional[int] = None,
) -> float:
    """Head remainder: discounted mass of lengths <= r against the reference."""
    spec = system.spec
    c_vals = coefficient_values(c, n_max)
    fvec = f if f is not None else _cone_delta(system)
    sysd = _discounted(system, t)
    dens_full = _aggregate_density(sysd, n_max, c_vals, spec.letter_start, spec.letter_end)
    u_ref = convolve(dens_full, fvec)
    normalizer = inner(u_ref, u_ref)
    B = spec.letter_start if first_letter is None else first_letter
    dens_head = _aggregate_density(sysd, r, c_vals, B, spec.letter_end)
    head = convolve(dens_head, fvec)
    return inner(head, u_ref) / normalizer


# ---------------------------------------------------------------------------
# spherical profile, boundary pairing, drift


@dataclass
class SphericalProfile:
    t_grid: Tuple[float, ...]
    per_t: np.ndarray  # shape (len(grid), radius_max + 2)
    extrapolated: np.ndarray
    gamma_hat: float
    rank: int = 2

    def eigen_defect(self, rate: float, radii: int, grid_index: int = -1) -> float:
        """Relative gap of one uniform step against ``rate`` on radii <= radii."""
        return _eigen_defect(self.per_t[grid_index], rate, radii, self.rank)


def _eigen_defect(profile: np.ndarray, rate: float, radii: int, rank: int = 2) -> float:
    deg = 2 * rank
    stepped = np.zeros(radii + 1)
    for j in range(radii + 1):
        if j == 0:
            stepped[0] = profile[1]
        else:
            stepped[j] = profile[j - 1] / deg + profile[j + 1] * (deg - 1) / deg
    ref = rate * profile[: radii + 1]
    return float(np.linalg.norm(stepped - ref) / np.linalg.norm(ref))


def spherical_profile(
    system: System,
    radius_max: int,
    t_grid: Sequence[float],
    n_max: int,
    c=None,
    gamma_hat: Optional[float] = None,
) -> SphericalProfile:
    """Per-radius normalised translated pairings for the uniform free walk."""
    if not system.is_free_uniform_walk:
        raise ArgumentError("spherical profiles need the uniform free-group walk")
    backend: FreeGroup = system.backend  # type: ignore[assignment]
    c_vals = coefficient_values(c, n_max)
    alg = RadialAlgebra(backend.rank, max_radius=_radial_cap(n_max) + radius_max)
    base_scale = system.uniform_letter_weight * 2 * backend.rank
    per_t = np.zeros((len(t_grid), radius_max + 2))
    for i, t in enumerate(t_grid):
        u = discounted_walk_vector(alg, n_max, c_vals, base_scale / t)
        norm = u.norm_sq()
        for j in range(radius_max + 2):
            per_t[i, j] = u.translated_inner(j, u) / norm
    extrap = 2.0 * per_t[-1] - per_t[-2] if len(t_grid) > 1 else per_t[-1].copy()
    return SphericalProfile(
        t_grid=tuple(float(t) for t in t_grid),
        per_t=per_t,
        extrapolated=extrap,
        gamma_hat=gamma_hat if gamma_hat is not None else float(t_grid[-1]),
        rank=backend.rank,
    )


def boundary_coefficient(g) -> float:
    """Exact boundary pairing for the rank-2 free group at the symmetric point.

    Sums the square-rooted boundary cocycle over the overlap shells of the
    uniform visual measure; admits the closed form (1 + |g|/2) 3^{-|g|/2}.
    """
    if isinstance(g, int):
        n = g
    else:
        word = FreeGroup(2).reduce(tuple(g))
        n = len(word)
    if n < 0:
        raise ArgumentError("length must be non-negative")
    if n == 0:
        return 1.0
    root3 = math.sqrt(3.0)
    total = 0.75 * root3 ** (-n)  # no overlap
    for k in range(1, n):
        shell = 0.25 * 3.0 ** (-k + 1) * (2.0 / 3.0)
        total += shell * root3 ** (2 * k - n)
    total += 0.25 * 3.0 ** (-n + 1) * root3**n
    return total


def equilibrium_drift(system: System, n: int) -> float:
    """Mean normalised marked length under the uniform letter measure."""
    if not system.is_free_uniform_walk:
        raise ArgumentError("equilibrium drift implemented for uniform free walks")
    backend: FreeGroup = system.backend  # type: ignore[assignment]
    alg = RadialAlgebra(backend.rank, max_radius=n + 2)
    dist = alg.radius_distribution(n)
    return float(np.dot(dist, np.arange(len(dist)))) / n


def drift_profile(measure: CylinderMeasure, n: int) -> float:
    """Expected normalised marked length at depth n under a radial measure."""
    data: Optional[RadialMeasureData] = getattr(measure, "_radial_data", None)
    if data is None:
        raise ArgumentError("drift profiles need a radial one-sided measure")
    system = measure.system
    backend: FreeGroup = system.backend  # type: ignore[assignment]
    spec = system.spec
    alg = data.algebra
    norm = measure.normalizer
    w_table = horner_weighted_sum(alg, data.u.value, data.c_row, start=n, step_scale=data.beta)
    q_n = alg.radius_distribution(n)
    js = np.arange(len(q_n))
    long_num = data.beta**n * float(np.dot(q_n * js, w_table[: len(q_n)]))
    long_den = data.beta**n * float(np.dot(q_n, w_table[: len(q_n)]))
    short_num = 0.0
    short_den = 0.0
    marking = system.marking
    tail = spec.tail_prefix(n)
    for k in range(1, n):
        wgt = data.c_row[k] * data.letter_weight_d**k
        if wgt == 0.0:
            continue
        for word in itertools.product(range(spec.n_letters), repeat=k):
            g = marking.product(word)
            val = float(data.u.value[backend.length(g)])
            if val == 0.0:
                continue
            full = marking.product(word + tail[: n - k])
            contrib = wgt * val
            short_num += contrib * backend.length(full)
            short_den += contrib
    num = (long_num + short_num) / norm
    den = (long_den + short_den) / norm
    if den <= 0:
        raise DomainError("vanishing level mass")
    return num / (n * den)
