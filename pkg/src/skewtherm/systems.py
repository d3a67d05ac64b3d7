"""Canonical marked systems used across experiments and tests."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Dict, Optional, Sequence, Tuple

from .errors import ArgumentError
from .groups import AbelianQuotient, FreeAbelian, FreeGroup, GroupBackend, Marking
from .repspace import RepSpace
from .shiftspace import ShiftSpec


@dataclass(frozen=True)
class System:
    """A subshift together with a marking of its letters in a group."""

    spec: ShiftSpec
    marking: Marking
    name: str = ""

    @property
    def backend(self) -> GroupBackend:
        return self.marking.backend

    def space(self) -> RepSpace:
        return RepSpace(self.backend)

    @property
    def is_full_shift(self) -> bool:
        return bool(self.spec.tau.all())

    @property
    def uniform_letter_weight(self) -> Optional[float]:
        """Common letter weight if memory is 1 and all letters agree."""
        if self.spec.memory != 1:
            return None
        values = {round(v, 15) for v in self.spec.log_weights.values()}
        if len(values) == 1:
            return math.exp(next(iter(self.spec.log_weights.values())))
        return None

    @property
    def is_free_uniform_walk(self) -> bool:
        """Uniform full-shift walk marked by the free generators (radial path)."""
        backend = self.backend
        if not isinstance(backend, FreeGroup):
            return False
        if not self.is_full_shift or self.uniform_letter_weight is None:
            return False
        expected = {(i,) for i in range(1, backend.rank + 1)}
        expected |= {(-i,) for i in range(1, backend.rank + 1)}
        return set(self.marking.labels) == expected and len(self.marking.labels) == len(expected)


def full_transitions(n: int) -> Tuple[Tuple[bool, ...], ...]:
    return tuple(tuple(True for _ in range(n)) for _ in range(n))


def memory1_weights(probs: Sequence[float]) -> Dict[Tuple[int, ...], float]:
    return {(i,): math.log(p) for i, p in enumerate(probs)}


def trivial_marking(n_letters: int) -> Marking:
    backend = AbelianQuotient(1, ((1,),))
    return Marking(backend, tuple((0,) for _ in range(n_letters)))


def free_uniform_walk(rank: int = 2) -> System:
    """Uniform walk on the free group; letters are the 2r generators."""
    n = 2 * rank
    labels = []
    for i in range(1, rank + 1):
        labels.append((i,))
        labels.append((-i,))
    spec = ShiftSpec(
        n_letters=n,
        transitions=full_transitions(n),
        memory=1,
        log_weights=memory1_weights([1.0 / n] * n),
        letter_start=0,
        letter_end=2 if n > 2 else 0,
        tail_preperiod=(0,),
        tail_period=(2,) if n > 2 else (0,),
    )
    marking = Marking(FreeGroup(rank), tuple(labels), visibility_asserted=True)
    return System(spec, marking, name=f"free{rank}-uniform-walk")


def f2_simple_walk() -> System:
    return free_uniform_walk(2)


def z_walk(p_plus: float = 0.5) -> System:
    """Nearest-neighbour walk on the integers with step law (p_plus, 1 - p_plus)."""
    if not (0.0 < p_plus < 1.0):
        raise ArgumentError("p_plus must lie in (0, 1)")
    spec = ShiftSpec(
        n_letters=2,
        transitions=full_transitions(2),
        memory=1,
        log_weights=memory1_weights([p_plus, 1.0 - p_plus]),
        letter_start=0,
        letter_end=1,
        tail_preperiod=(0,),
        tail_period=(1,),
    )
    marking = Marking(FreeAbelian(1), ((1,), (-1,)), visibility_asserted=True)
    return System(spec, marking, name=f"z-walk-p{p_plus:g}")


def z2_walk() -> System:
    """Symmetric nearest-neighbour walk on the square lattice."""
    spec = ShiftSpec(
        n_letters=4,
        transitions=full_transitions(4),
        memory=1,
        log_weights=memory1_weights([0.25] * 4),
        letter_start=0,
        letter_end=1,
        tail_preperiod=(0,),
        tail_period=(1,),
    )
    labels = ((1, 0), (-1, 0), (0, 1), (0, -1))
    marking = Marking(FreeAbelian(2), labels, visibility_asserted=True)
    return System(spec, marking, name="z2-walk")


def z3_walk() -> System:
    spec = ShiftSpec(
        n_letters=6,
        transitions=full_transitions(6),
        memory=1,
        log_weights=memory1_weights([1.0 / 6] * 6),
        letter_start=0,
        letter_end=1,
        tail_preperiod=(0,),
        tail_period=(1,),
    )
    labels = ((1, 0, 0), (-1, 0, 0), (0, 1, 0), (0, -1, 0), (0, 0, 1), (0, 0, -1))
    marking = Marking(FreeAbelian(3), labels, visibility_asserted=True)
    return System(spec, marking, name="z3-walk")


def z_mod_walk(modulus: int) -> System:
    """Symmetric two-letter walk on the cyclic group of the given order."""
    if modulus < 2:
        raise ArgumentError("modulus must be >= 2")
    spec = ShiftSpec(
        n_letters=2,
        transitions=full_transitions(2),
        memory=1,
        log_weights=memory1_weights([0.5, 0.5]),
        letter_start=0,
        letter_end=1,
        tail_preperiod=(0,),
        tail_period=(1,),
    )
    backend = AbelianQuotient(1, ((modulus,),))
    marking = Marking(backend, ((1,), (-1,)), visibility_asserted=True)
    return System(spec, marking, name=f"z-mod-{modulus}-walk")


def full_shift(
    probs: Sequence[float],
    marking: Optional[Marking] = None,
    letter_start: int = 0,
    letter_end: Optional[int] = None,
) -> System:
    n = len(probs)
    end = (1 if n > 1 else 0) if letter_end is None else letter_end
    spec = ShiftSpec(
        n_letters=n,
        transitions=full_transitions(n),
        memory=1,
        log_weights=memory1_weights(probs),
        letter_start=letter_start,
        letter_end=end,
        tail_preperiod=(letter_start,),
        tail_period=((1,) if n > 1 else (0,)) if letter_start == 0 else (0,),
    )
    mk = marking if marking is not None else trivial_marking(n)
    return System(spec, mk, name=f"full-{n}-shift")


def golden_mean_shift(
    weights: Sequence[float] = (1.0, 1.0),
    marking: Optional[Marking] = None,
    twisted_tail: bool = False,
) -> System:
    """Two letters, the pattern 11 forbidden.

    ``twisted_tail`` picks the start letter 1 with tail 1 0 0 0 ..., the only
    configuration whose tail revisits the start letter exactly once.
    """
    if twisted_tail:
        start, end, pre, period = 1, 0, (1,), (0,)
    else:
        start, end, pre, period = 0, 0, (0,), (0,)
    spec = ShiftSpec(
        n_letters=2,
        transitions=((True, True), (True, False)),
        memory=1,
        log_weights={(0,): math.log(weights[0]), (1,): math.log(weights[1])},
        letter_start=start,
        letter_end=end,
        tail_preperiod=pre,
        tail_period=period,
    )
    mk = marking if marking is not None else trivial_marking(2)
    return System(spec, mk, name="golden-mean")


def z_marked_golden_mean(twisted_tail: bool = False) -> System:
    base = golden_mean_shift(weights=(0.5, 0.5), twisted_tail=twisted_tail)
    marking = Marking(FreeAbelian(1), ((1,), (-1,)), visibility_asserted=True)
    return System(base.spec, marking, name="golden-mean-z")
