"""Truncated group densities, their Gram sequences and convergence radii.

The density at discount t and truncation N puts mass
``sum_{n<=N} t^{-n} c_n (weighted count of marked words of length n)`` on each
group element; its total mass is the corresponding truncated return series.
Gram sequences pair the length layers against a cone vector; the radius of
convergence of the resulting power series is estimated by a windowed root
test with a subexponential-correction fit as a diagnostic.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple

import numpy as np

from .engines import (
    DEFAULT_STATE_BUDGET,
    effective_last_letters,
    generic_layers,
    lattice_layers,
    layers_as_dicts,
    pick_engine,
)
from .errors import ArgumentError, EstimationError
from .groups import Key
from .radial import RadialAlgebra, return_coefficients
from .repspace import ConeVector, FiniteDensity, matrix_coefficient
from .systems import System


def coefficient_values(c, n_max: int) -> np.ndarray:
    """Materialise a slow-function-like object as values at 1..n_max (index 0 unused)."""
    out = np.ones(n_max + 1)
    if c is None:
        return out
    if hasattr(c, "values_up_to"):
        vals = c.values_up_to(n_max)
        out[1:] = vals[1:]
        return out
    if callable(c):
        for n in range(1, n_max + 1):
            out[n] = float(c(n))
        return out
    arr = np.asarray(c, dtype=float)
    if len(arr) < n_max + 1:
        raise ArgumentError("coefficient array shorter than n_max")
    return arr[: n_max + 1].copy()


@dataclass
class GDensity:
    """Truncated thermodynamic density with per-length layers."""

    system: System
    t: float
    n_max: int
    first_letters: Tuple[int, ...]
    last_letters: Tuple[int, ...]
    c_id: str
    layers: List[Dict[Key, float]]  # index n-1: raw layer at length n
    c_vals: np.ndarray

    @property
    def zeta(self) -> float:
        """Total discounted mass; equals the truncated return series."""
        return sum(
            self.t ** (-n) * self.c_vals[n] * sum(layer.values())
            for n, layer in enumerate(self.layers, start=1)
        )

    def aggregate(self) -> Dict[Key, float]:
        out: Dict[Key, float] = {}
        for n, layer in enumerate(self.layers, start=1):
            w = self.t ** (-n) * self.c_vals[n]
            for g, mass in layer.items():
                out[g] = out.get(g, 0.0) + w * mass
        return out

    def as_finite_density(self) -> FiniteDensity:
        return FiniteDensity(self.system.backend, self.aggregate())

    def layer_mass(self, n: int, g) -> float:
        key = self.system.backend.canonical(g)
        return self.layers[n - 1].get(key, 0.0)

    def aggregate_mass(self, g) -> float:
        key = self.system.backend.canonical(g)
        total = 0.0
        for n, layer in enumerate(self.layers, start=1):
            total += self.t ** (-n) * self.c_vals[n] * layer.get(key, 0.0)
        return total


def build_density(
    system: System,
    t: float,
    n_max: int,
    c=None,
    first_letters=None,
    last_letters=None,
    state_budget: int = DEFAULT_STATE_BUDGET,
) -> GDensity:
    """Materialised truncated density (diagnostic scale; layers kept as dicts)."""
    if t <= 0:
        raise ArgumentError("discount t must be positive")
    if n_max < 1:
        raise ArgumentError("n_max must be >= 1")
    if n_max * abs(math.log(t)) > 600.0:
        raise ArgumentError(
            "discount powers would leave float range at this truncation; "
            "use the streaming estimators for deep runs"
        )
    c_vals = coefficient_values(c, n_max)
    firsts = tuple(
        s for s in range(system.spec.n_letters)
        if first_letters is None or s in _as_set(first_letters)
    )
    lasts = effective_last_letters(system, last_letters)
    layers = [
        dict(layer)
        for layer in layers_as_dicts(
            system, n_max, first_letters, last_letters, state_budget
        )
    ]
    return GDensity(
        system=system,
        t=t,
        n_max=n_max,
        first_letters=firsts,
        last_letters=lasts,
        c_id="unit" if c is None else getattr(c, "name", "custom"),
        layers=layers,
        c_vals=c_vals,
    )


def _as_set(letters):
    if isinstance(letters, int):
        return {letters}
    return set(letters)


def _coefficient_of_pair(system: System, f: Optional[ConeVector]):
    """Function g -> <rho(g) f, f>, with a cached generic fallback."""
    if f is None:
        identity = system.backend.identity()

        def psi(g):
            return 1.0 if g == identity else 0.0

        return psi
    cache: Dict[Key, float] = {}

    def psi(g):
        key = system.backend.canonical(g)
        if key not in cache:
            cache[key] = matrix_coefficient(key, f, f)
        return cache[key]

    return psi


def gram_sequence(
    system: System,
    n_max: int,
    kind: str = "f",
    f: Optional[ConeVector] = None,
    c=None,
    first_letters=None,
    last_letters=None,
    state_budget: int = DEFAULT_STATE_BUDGET,
) -> np.ndarray:
    """Per-length coefficients of the chosen Gram series (index 0 unused).

    kind "f": pair each layer against the coefficient of f.
    kind "star": order-K coefficient of the series whose K-th term couples
    split layers through the product of their markings.
    kind "full": same with the first marking inverted (the squared-norm form).
    """
    if n_max < 1:
        raise ArgumentError("n_max must be >= 1")
    if kind not in ("f", "star", "full"):
        raise ArgumentError(f"unknown gram kind {kind!r}")
    c_vals = coefficient_values(c, n_max)
    if kind == "f":
        raw = _gram_f_raw(system, n_max, f, first_letters, last_letters, state_budget)
        return raw * c_vals
    # pairwise kinds need materialised layers
    layers = [
        layer
        for layer in layers_as_dicts(
            system, n_max, first_letters, last_letters, state_budget
        )
    ]
    backend = system.backend
    psi = _coefficient_of_pair(system, f)
    out = np.zeros(n_max + 1)
    for K in range(2, n_max + 1):
        total = 0.0
        for m in range(1, K):
            n = K - m
            lm, ln = layers[m - 1], layers[n - 1]
            if not lm or not ln:
                continue
            cw = c_vals[m] * c_vals[n]
            if f is None:
                if kind == "star":
                    for h, wm in lm.items():
                        wn = ln.get(backend.inverse(h))
                        if wn:
                            total += cw * wm * wn
                else:
                    for h, wm in lm.items():
                        wn = ln.get(h)
                        if wn:
                            total += cw * wm * wn
            else:
                for h1, wm in lm.items():
                    base = backend.inverse(h1) if kind == "full" else h1
                    for h2, wn in ln.items():
                        total += cw * wm * wn * psi(backend.compose(base, h2))
        out[K] = total
    return out


def _gram_f_raw(
    system, n_max, f, first_letters, last_letters, state_budget
) -> np.ndarray:
    engine = pick_engine(system)
    out = np.zeros(n_max + 1)
    if engine == "radial" and f is None:
        backend = system.backend
        alg = RadialAlgebra(backend.rank, max_radius=n_max + 2)
        scale = system.uniform_letter_weight * 2 * backend.rank
        coeffs = return_coefficients(alg, n_max)
        powers = scale ** np.arange(n_max + 1)
        res = coeffs * powers
        if first_letters is not None or last_letters is not None:
            raise ArgumentError("radial gram path has no letter restrictions")
        out[: n_max + 1] = res
        return out
    if engine == "lattice" and f is None:
        lasts = effective_last_letters(system, last_letters)
        for n, layer in enumerate(lattice_layers(system, n_max, first_letters), start=1):
            out[n] = layer.origin_mass(lasts)
        return out
    if engine == "lattice" and f is not None:
        offsets = _lattice_psi_support(system, f)
        lasts = effective_last_letters(system, last_letters)
        for n, layer in enumerate(lattice_layers(system, n_max, first_letters), start=1):
            total = layer.combined(lasts)
            acc = 0.0
            for pos, weight in offsets:
                idx = tuple(p + layer.offset for p in pos)
                if all(0 <= i < total.shape[d] for d, i in enumerate(idx)):
                    acc += weight * float(total[idx])
            out[n] = acc
        return out
    psi = _coefficient_of_pair(system, f)
    stream = generic_layers(system, n_max, first_letters, last_letters, state_budget)
    for n, layer in enumerate(stream, start=1):
        out[n] = sum(mass * psi(g) for g, mass in layer.items())
    return out


def _lattice_psi_support(system: System, f: ConeVector) -> List[Tuple[Tuple[int, ...], float]]:
    """Support of g -> <rho(g) f, f> for a lattice vector, as (point, value)."""
    backend = system.backend
    pairs: Dict[Tuple[int, ...], float] = {}
    for p, wp in f.weights.items():
        for q, wq in f.weights.items():
            g = tuple(b - a for a, b in zip(p, q))
            pairs[g] = pairs.get(g, 0.0) + wp * wq
    return list(pairs.items())


@dataclass
class GammaEstimate:
    """Windowed root-test estimate of a series' convergence radius."""

    value: float
    method: str
    coefficients: np.ndarray
    diagnostics: Dict[str, float] = field(default_factory=dict)


def root_test(
    coefficients: np.ndarray,
    window_fraction: float = 1.0 / 3.0,
    min_points: int = 5,
) -> GammaEstimate:
    """Largest n-th root over the trailing window of nonzero coefficients."""
    a = np.asarray(coefficients, dtype=float)
    n_max = len(a) - 1
    lo = max(1, int(math.ceil(n_max * (1.0 - window_fraction))))
    idx = [n for n in range(lo, n_max + 1) if a[n] > 0.0]
    if len(idx) < min_points:
        idx = [n for n in range(1, n_max + 1) if a[n] > 0.0][-max(min_points, 1):]
    if len(idx) < min_points:
        raise EstimationError(
            f"root test needs at least {min_points} positive coefficients, got {len(idx)}"
        )
    roots = [a[n] ** (1.0 / n) for n in idx]
    value = max(roots)
    diag = {
        "window_lo": float(idx[0]),
        "window_hi": float(idx[-1]),
        "points": float(len(idx)),
    }
    ns = np.array(idx, dtype=float)
    logs = np.log(a[idx])
    design = np.column_stack([np.ones_like(ns), ns, np.log(ns)])
    coef, *_ = np.linalg.lstsq(design, logs, rcond=None)
    resid = logs - design @ coef
    diag["fit_gamma"] = float(math.exp(coef[1]))
    diag["fit_power"] = float(-coef[2])
    diag["fit_log_const"] = float(coef[0])
    diag["fit_rms"] = float(np.sqrt(np.mean(resid**2))) if len(idx) > 3 else 0.0
    return GammaEstimate(value=value, method="root-test", coefficients=a, diagnostics=diag)


def gamma_estimate(
    system: System,
    n_max: int,
    kind: str = "f",
    f: Optional[ConeVector] = None,
    c=None,
    first_letters=None,
    last_letters=None,
    window_fraction: float = 1.0 / 3.0,
    state_budget: int = DEFAULT_STATE_BUDGET,
) -> GammaEstimate:
    """Convergence-radius estimate for the chosen Gram series."""
    coeffs = gram_sequence(
        system, n_max, kind, f, c, first_letters, last_letters, state_budget
    )
    return root_test(coeffs, window_fraction)


def gamma_by_t_sweep(
    coefficients: np.ndarray,
    threshold: float = 1e12,
    tol: float = 1e-4,
) -> GammaEstimate:
    """Bracket the abscissa by sweeping t against a partial-sum blowup threshold."""
    a = np.asarray(coefficients, dtype=float)
    pos = np.nonzero(a > 0)[0]
    if len(pos) == 0:
        raise EstimationError("t-sweep needs positive coefficients")
    hi = max(a[n] ** (1.0 / n) for n in pos) * 2.0 + 1.0
    lo = 1e-9

    def blows_up(t: float) -> bool:
        total = 0.0
        for n in pos:
            total += a[n] * t ** (-float(n))
            if total > threshold:
                return True
        return False

    if not blows_up(lo):
        return GammaEstimate(lo, "t-sweep", a, {"note": 1.0})
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if blows_up(mid):
            lo = mid
        else:
            hi = mid
    return GammaEstimate(0.5 * (lo + hi), "t-sweep", a, {"threshold": threshold})
