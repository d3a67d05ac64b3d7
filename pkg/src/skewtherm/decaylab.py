"""Monte-Carlo checks of eventual coefficient decay along typical paths.

Paths are sampled from the equilibrium chain with a counter-based generator
(numpy Philox), one child key per path, so runs are reproducible across
platforms and path order.  The decay report counts excursions of the pairing
<rho(marked product) f, v> above a geometric envelope; the summability bound
majorises the expected excursion count by a discounted density pairing with
an empirical Gibbs constant.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .errors import ArgumentError, DivergenceGuard
from .gdensity import gram_sequence, root_test
from .groups import FreeAbelian, Key
from .parallel import ordered_map
from .repspace import ConeVector, RepSpace, convolve, delta, inner, translate
from .systems import System
from .thermo import EquilibriumChain
from .twisted import _aggregate_density, _cone_delta, _discounted

RNG_NAME = "numpy-philox-4x64-10"


@dataclass
class PathSample:
    """One sampled letter path with its running marked products."""

    seed: int
    path_index: int
    letters: Tuple[int, ...]
    products: Tuple[Key, ...]  # products of the first k letters, k = 1..len


def _context_letter_paths(chain: EquilibriumChain, rng, length: int) -> List[int]:
    """Sample a letter path of the given length from the stationary chain."""
    n = len(chain.stationary)
    state = int(rng.choice(n, p=chain.stationary))
    letters = list(chain.contexts[state])
    while len(letters) < length:
        state = int(rng.choice(n, p=chain.rows[state]))
        letters.append(chain.contexts[state][-1])
    return letters[:length]


def sample_paths(
    system: System,
    chain: EquilibriumChain,
    count: int,
    length: int,
    seed: int,
    threads: Optional[int] = None,
) -> List[PathSample]:
    """Deterministic equilibrium paths; one Philox child stream per path."""
    if count < 1 or length < 1:
        raise ArgumentError("count and length must be positive")
    marking = system.marking
    backend = marking.backend

    def build(i: int) -> PathSample:
        rng = np.random.Generator(np.random.Philox(key=seed, counter=[0, 0, 0, i]))
        letters = _context_letter_paths(chain, rng, length)
        products = []
        g = backend.identity()
        for s in letters:
            g = backend.compose(g, marking.label(s))
            products.append(g)
        return PathSample(seed=seed, path_index=i, letters=tuple(letters), products=tuple(products))

    return ordered_map(build, list(range(count)), threads)


@dataclass
class DecayReport:
    gamma: float
    burn_in: int
    n_paths: int
    length: int
    exceedance_count: int
    observations: int
    max_exceedance_step: int
    per_step_frequency: np.ndarray  # index n: fraction of paths exceeding at n
    persistent: bool

    @property
    def exceedance_rate(self) -> float:
        return self.exceedance_count / max(1, self.observations)

    def empirical_sum(self) -> float:
        """Empirical counterpart of the summed excursion probabilities."""
        return float(np.sum(self.per_step_frequency[1:]))


def decay_report(
    system: System,
    f: Optional[ConeVector],
    v: Optional[ConeVector],
    gamma: float,
    paths: Sequence[PathSample],
    burn_in: int,
) -> DecayReport:
    """Count steps n with pairing above gamma^n, per path, past the burn-in."""
    if not (0 < gamma < 1):
        raise ArgumentError("gamma must lie in (0, 1)")
    space = RepSpace(system.backend)
    fvec = f if f is not None else delta(space, system.backend.identity())
    vvec = v if v is not None else fvec
    f_is_delta = fvec.support_size == 1
    f_point = next(iter(fvec.weights)) if f_is_delta else None
    f_weight = fvec.weights.get(f_point, 1.0) if f_is_delta else 1.0
    length = max(len(p.letters) for p in paths)
    exceed = 0
    observations = 0
    max_step = 0
    freq = np.zeros(length + 1)
    coef_cache: Dict[Key, float] = {}

    def coefficient(g: Key) -> float:
        val = coef_cache.get(g)
        if val is None:
            if f_is_delta:
                # <rho(g) f, v> = weight * v(g . point)
                moved = space.translate_point(g, f_point)
                val = f_weight * vvec[moved]
            else:
                val = inner(translate(g, fvec), vvec)
            coef_cache[g] = val
        return val

    for sample in paths:
        for n, g in enumerate(sample.products, start=1):
            value = coefficient(g)
            hit = value > gamma**n
            if hit:
                freq[n] += 1
            if n >= burn_in:
                observations += 1
                if hit:
                    exceed += 1
                    max_step = max(max_step, n)
    freq /= max(1, len(paths))
    tail_lo = max(burn_in, int(0.9 * length))
    persistent = bool(np.all(freq[tail_lo : length + 1] > 0))
    return DecayReport(
        gamma=gamma,
        burn_in=burn_in,
        n_paths=len(paths),
        length=length,
        exceedance_count=exceed,
        observations=observations,
        max_exceedance_step=max_step,
        per_step_frequency=freq,
        persistent=persistent,
    )


def borel_cantelli_bound(
    system: System,
    f: Optional[ConeVector],
    v: Optional[ConeVector],
    gamma: float,
    n_max: int,
    gibbs_constant: float = 1.0,
    margin: float = 0.02,
) -> float:
    """Truncated summability majorant for the excursion probabilities.

    Sums the discounted pairing of all-letter-pair densities against (f, v)
    at discount gamma, scaled by the empirical Gibbs constant.  Guards that
    gamma clears the estimated decay exponent of the pairing sequence.
    """
    coeffs = gram_pair_sequence(system, f, v, n_max)
    if not np.any(coeffs > 0):
        return 0.0
    est = root_test(coeffs)
    guard = min(est.value, est.diagnostics.get("fit_gamma", est.value))
    if gamma <= guard + margin:
        raise DivergenceGuard(
            f"gamma {gamma} within the margin of the decay exponent {guard:.4f}"
        )
    total = 0.0
    for n in range(1, n_max + 1):
        total += coeffs[n] * gamma ** (-n)
    return gibbs_constant * total


def gram_pair_sequence(
    system: System,
    f: Optional[ConeVector],
    v: Optional[ConeVector],
    n_max: int,
) -> np.ndarray:
    """a_n = sum over all words of length n of weight times <rho(marking) f, v>."""
    if f is None and v is None and system.is_free_uniform_walk:
        return gram_sequence(system, n_max, kind="f", f=None)
    space = RepSpace(system.backend)
    fvec = f if f is not None else delta(space, system.backend.identity())
    vvec = v if v is not None else fvec
    from .engines import layers_as_dicts

    out = np.zeros(n_max + 1)
    cache: Dict[Key, float] = {}

    def pair(g: Key) -> float:
        val = cache.get(g)
        if val is None:
            val = inner(translate(g, fvec), vvec)
            cache[g] = val
        return val

    for n, layer in enumerate(layers_as_dicts(system, n_max), start=1):
        out[n] = sum(mass * pair(g) for g, mass in layer.items())
    return out


def heavy_tail_vector(system: System, exponent: float, cutoff: int) -> ConeVector:
    """Truncated inverse-power vector |k|^{-exponent} on an integer lattice."""
    backend = system.backend
    if not isinstance(backend, FreeAbelian):
        raise ArgumentError("heavy-tail vectors live on integer lattices")
    if exponent <= backend.dim / 2.0:
        raise ArgumentError("exponent too small for square summability")
    space = RepSpace(backend)
    weights: Dict = {}
    if backend.dim == 1:
        for k in range(-cutoff, cutoff + 1):
            weights[(k,)] = 1.0 if k == 0 else abs(k) ** (-exponent)
    else:
        rng = range(-cutoff, cutoff + 1)
        import itertools as _it

        for point in _it.product(rng, repeat=backend.dim):
            norm = sum(abs(c) for c in point)
            weights[point] = 1.0 if norm == 0 else norm ** (-exponent)
    return ConeVector(space, weights)


def adversarial_vector(
    system: System,
    eta: float,
    t_grid: Sequence[float],
    n_max: int,
    c=None,
) -> Tuple[ConeVector, Dict[str, float]]:
    """Stacked discounted-density vector with slowly decaying self-pairings.

    Only symmetric walks on integer lattices qualify; the vector stacks the
    normalised convolution vectors along the grid with geometric weights eta^q.
    The diagnostics report min over tested radii of <rho(g) v, v> / target.
    """
    if not (0.0 < eta < 1.0):
        raise ArgumentError("eta must lie in (0, 1)")
    backend = system.backend
    if not isinstance(backend, FreeAbelian):
        raise ArgumentError("the stacked construction needs an amenable lattice marking")
    if not _is_symmetric_walk(system):
        raise ArgumentError("the stacked construction needs a symmetric walk")
    fvec = _cone_delta(system)
    from .gdensity import coefficient_values

    c_vals = coefficient_values(c, n_max)
    stacked: Optional[ConeVector] = None
    for q, t in enumerate(t_grid, start=1):
        sysd = _discounted(system, t)
        dens = _aggregate_density(
            sysd, n_max, c_vals, system.spec.letter_start, system.spec.letter_end
        )
        u = convolve(dens, fvec)
        norm = u.norm()
        if norm <= 0:
            raise DivergenceGuard("empty density vector in the stack")
        piece = u.scaled(eta**q / norm)
        stacked = piece if stacked is None else stacked.plus(piece)
    return stacked, {"norm": stacked.norm(), "pieces": float(len(t_grid))}


def _is_symmetric_walk(system: System) -> bool:
    spec = system.spec
    if spec.memory != 1 or not system.is_full_shift:
        return False
    marking = system.marking
    backend = system.backend
    for s in range(spec.n_letters):
        target = backend.inverse(marking.label(s))
        match = None
        for k in range(spec.n_letters):
            if marking.label(k) == target:
                match = k
                break
        if match is None:
            return False
        if abs(spec.log_weights[(s,)] - spec.log_weights[(match,)]) > 1e-12:
            return False
    return True


def adversarial_lower_bound(
    vector: ConeVector, system: System, gamma: float, radius: int
) -> Dict[str, float]:
    """Verify <rho(g) v, v> >= gamma^{|g|} on lattice points up to the radius."""
    backend = system.backend
    if not isinstance(backend, FreeAbelian):
        raise ArgumentError("lower-bound scan needs a lattice backend")
    worst_margin = math.inf
    worst_radius = 0
    import itertools as _it

    rng = range(-radius, radius + 1)
    for point in _it.product(rng, repeat=backend.dim):
        norm = sum(abs(c) for c in point)
        if norm == 0 or norm > radius:
            continue
        value = inner(translate(point, vector), vector)
        margin = value / gamma**norm
        if margin < worst_margin:
            worst_margin = margin
            worst_radius = norm
    return {"min_margin": worst_margin, "at_radius": float(worst_radius)}
