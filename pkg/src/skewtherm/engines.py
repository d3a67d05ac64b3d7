"""Length-layer engines for marked word sums.

A layer at length n maps group keys to the weighted count of admissible
length-n words carrying that marking product, glued to the base tail.  Three
engines cover the practical regimes:

* ``generic_layers``: hash-keyed states, any backend, any memory; words grow
  by prepending so every weight window is final when charged.
* ``lattice_layers``: dense arrays over an integer box for free-abelian
  markings with memory-1 weights.
* the radial fast path in :mod:`skewtherm.radial`, selected for uniform
  free-group walks, where layers are functions of word length only.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Dict, Iterator, Sequence, Tuple

import numpy as np

from .errors import ArgumentError, BudgetExceeded
from .groups import FreeAbelian, Key
from .systems import System

DEFAULT_STATE_BUDGET = 5_000_000


def pick_engine(system: System) -> str:
    if system.is_free_uniform_walk:
        return "radial"
    backend = system.backend
    if isinstance(backend, FreeAbelian) and backend.dim <= 2 and system.spec.memory == 1:
        return "lattice"
    return "generic"


def _letter_filter(system: System, letters) -> Tuple[int, ...]:
    if letters is None:
        return tuple(range(system.spec.n_letters))
    if isinstance(letters, int):
        letters = (letters,)
    out = tuple(int(s) for s in letters)
    for s in out:
        system.spec._check_letter(s)
    return out


def effective_last_letters(system: System, last_letters) -> Tuple[int, ...]:
    """Requested end letters that also glue admissibly to the base tail."""
    spec = system.spec
    x0 = spec.tail_letter(0)
    return tuple(s for s in _letter_filter(system, last_letters) if spec.tau[s, x0])


# -- generic hash-keyed engine ------------------------------------------------


def generic_layers(
    system: System,
    n_max: int,
    first_letters=None,
    last_letters=None,
    state_budget: int = DEFAULT_STATE_BUDGET,
) -> Iterator[Dict[Key, float]]:
    """Yield per-length group layers, lengths 1..n_max.

    Words are restricted to start in ``first_letters`` and end in
    ``last_letters`` (None = unrestricted); weights include the glue to the
    spec's base tail.
    """
    spec = system.spec
    marking = system.marking
    backend = marking.backend
    firsts = set(_letter_filter(system, first_letters))
    lasts = set(_letter_filter(system, last_letters))
    m = spec.memory
    keep = max(1, m - 1)
    tail_ctx = spec.tail_prefix(keep)
    identity = backend.identity()

    # state: (context = first `keep` letters of word+tail, group key) -> weight
    states: Dict[Tuple[Tuple[int, ...], Key], float] = {(tail_ctx, identity): 1.0}
    for n in range(1, n_max + 1):
        nxt: Dict[Tuple[Tuple[int, ...], Key], float] = {}
        for (ctx, g), mass in states.items():
            for s in range(spec.n_letters):
                if n == 1 and s not in lasts:
                    continue
                if not spec.tau[s, ctx[0]]:
                    continue
                window = ((s,) + ctx)[:m]
                if m == 1:
                    factor = spec.window_weight((s,))
                else:
                    if len(window) < m:
                        raise ArgumentError("context shorter than memory window")
                    factor = spec.window_weight(window)
                g2 = backend.compose(marking.label(s), g)
                key = (((s,) + ctx)[:keep], g2)
                prev = nxt.get(key)
                nxt[key] = mass * factor if prev is None else prev + mass * factor
        if len(nxt) > state_budget:
            raise BudgetExceeded("generic layer states", len(nxt), state_budget)
        states = nxt
        layer: Dict[Key, float] = {}
        for (ctx, g), mass in states.items():
            if ctx[0] in firsts:
                layer[g] = layer.get(g, 0.0) + mass
        yield layer


# -- dense lattice engine ------------------------------------------------------


@dataclass
class LatticeLayer:
    """Per-letter mass arrays over the integer box [-offset, offset]^dim.

    Entries beyond the current reach radius are guaranteed zero; consumers may
    read the full arrays or just the origin.
    """

    arrays: np.ndarray  # shape (n_letters, side) or (n_letters, side, side)
    offset: int
    dim: int
    steps: Tuple[Tuple[int, ...], ...]
    reach: int

    def origin_mass(self, last_letters: Sequence[int]) -> float:
        idx = (self.offset,) * self.dim
        return float(sum(self.arrays[(s,) + idx] for s in last_letters))

    def combined(self, last_letters: Sequence[int]) -> np.ndarray:
        out = np.zeros_like(self.arrays[0])
        for s in last_letters:
            out += self.arrays[s]
        return out

    def to_dict(self, last_letters: Sequence[int], tol: float = 0.0) -> Dict[Key, float]:
        total = self.combined(last_letters)
        out: Dict[Key, float] = {}
        for pos in np.argwhere(total > tol):
            key = tuple(int(c) - self.offset for c in pos)
            out[key] = float(total[tuple(pos)])
        return out


def lattice_layers(
    system: System,
    n_max: int,
    first_letters=None,
) -> Iterator[LatticeLayer]:
    """Dense layer recursion for free-abelian markings (memory 1, dim <= 2).

    Words grow by appending; the layer for length n is yielded with per-letter
    resolution so callers can restrict the final letter.  The update works on
    a growing view of the box, so early steps stay cheap.  A yielded layer's
    arrays are reused as scratch two iterations later: consume (or copy) each
    layer before advancing the generator.
    """
    spec = system.spec
    backend = system.backend
    if not isinstance(backend, FreeAbelian) or backend.dim > 2:
        raise ArgumentError("lattice engine needs a free-abelian marking of dim <= 2")
    if spec.memory != 1:
        raise ArgumentError("lattice engine supports memory-1 weights only")
    dim = backend.dim
    steps = tuple(system.marking.label(s) for s in range(spec.n_letters))
    step_reach = max(1, max((max(abs(c) for c in s) if s else 0) for s in steps))
    offset = n_max * step_reach + 1
    side = 2 * offset + 1
    shape = (spec.n_letters,) + (side,) * dim
    firsts = _letter_filter(system, first_letters)
    letter_w = [spec.window_weight((s,)) for s in range(spec.n_letters)]
    tau = spec.tau

    arrays = np.zeros(shape)
    buffer = np.zeros(shape)
    origin = (offset,) * dim
    for s in firsts:
        pos = tuple(o + c for o, c in zip(origin, steps[s]))
        arrays[(s,) + pos] += letter_w[s]
    yield LatticeLayer(arrays, offset, dim, steps, step_reach)

    for n in range(2, n_max + 1):
        reach = n * step_reach
        lo, hi = offset - reach, offset + reach + 1
        view = arrays[(slice(None),) + (slice(lo, hi),) * dim]
        out = buffer[(slice(None),) + (slice(lo, hi),) * dim]
        out[...] = 0.0
        if tau.all():
            src = view.sum(axis=0)
            for k in range(spec.n_letters):
                _shift_into(out[k], src, steps[k], dim, letter_w[k])
        else:
            for k in range(spec.n_letters):
                src = np.zeros(view.shape[1:])
                for j in range(spec.n_letters):
                    if tau[j, k]:
                        src += view[j]
                _shift_into(out[k], src, steps[k], dim, letter_w[k])
        arrays, buffer = buffer, arrays
        yield LatticeLayer(arrays, offset, dim, steps, reach)


def _shift_into(out: np.ndarray, a: np.ndarray, step: Tuple[int, ...], dim: int,
                scale: float) -> None:
    """out += scale * (a translated by step), zero fill outside."""
    if dim == 1:
        (e,) = step
        n = a.shape[0]
        lo, hi = max(0, e), min(n, n + e)
        out[lo:hi] += scale * a[lo - e : hi - e]
        return
    e0, e1 = step
    n0, n1 = a.shape
    lo0, hi0 = max(0, e0), min(n0, n0 + e0)
    lo1, hi1 = max(0, e1), min(n1, n1 + e1)
    out[lo0:hi0, lo1:hi1] += scale * a[lo0 - e0 : hi0 - e0, lo1 - e1 : hi1 - e1]


def layers_as_dicts(
    system: System,
    n_max: int,
    first_letters=None,
    last_letters=None,
    state_budget: int = DEFAULT_STATE_BUDGET,
) -> Iterator[Dict[Key, float]]:
    """Engine-dispatched layer stream in hash-keyed form."""
    if pick_engine(system) == "lattice":
        lasts = effective_last_letters(system, last_letters)
        for layer in lattice_layers(system, n_max, first_letters):
            yield layer.to_dict(lasts)
    else:
        yield from generic_layers(
            system, n_max, first_letters, last_letters, state_budget
        )
