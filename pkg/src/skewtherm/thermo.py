"""Pressure machinery: transfer spectra, growth rates, tilts, equilibrium chains.

The transfer operator of a memory-m weight system acts on functions of the
leading max(1, m-1) letters, so its spectrum is that of a finite non-negative
matrix over letter contexts.  Growth rates of periodic and first-return sums
are read off by windowed log-linear fits with a power-law correction term.
Abelianisation tilts multiply the weight of a window by exp<xi, label of its
first letter>; the tilted spectral radius is log-convex in xi and is
minimised by coordinate search plus a derivative polish.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Dict, Optional, Sequence, Tuple

import numpy as np

from .errors import ArgumentError, EstimationError, NonConvergence
from .radial import RadialAlgebra, radius_one_coefficients
from .shiftspace import ShiftSpec, birkhoff_weight, first_return_sum, periodic_sum
from .systems import System


@dataclass
class TransferData:
    """Perron data of the (possibly tilted) weight matrix over contexts."""

    contexts: Tuple[Tuple[int, ...], ...]
    matrix: np.ndarray
    spectral_radius: float
    right_vector: np.ndarray  # positive, L h = lambda h
    left_vector: np.ndarray  # positive, l L = lambda l
    tilt: Tuple[float, ...]

    @property
    def pressure(self) -> float:
        return math.log(self.spectral_radius)

    def residual(self) -> float:
        h = self.right_vector
        return float(
            np.linalg.norm(self.matrix @ h - self.spectral_radius * h) / np.linalg.norm(h)
        )


def _contexts(spec: ShiftSpec) -> Tuple[Tuple[int, ...], ...]:
    k = max(1, spec.memory - 1)
    return tuple(spec.admissible_windows(k))


def _tilt_of_letter(tilt, ab_labels, letter: int) -> float:
    if tilt is None:
        return 0.0
    vec = ab_labels[letter]
    return float(sum(x * y for x, y in zip(tilt, vec)))


def transfer_matrix(
    spec: ShiftSpec,
    tilt: Optional[Sequence[float]] = None,
    ab_labels: Optional[Sequence[Sequence[float]]] = None,
) -> Tuple[Tuple[Tuple[int, ...], ...], np.ndarray]:
    if tilt is not None and ab_labels is None:
        raise ArgumentError("a tilt needs abelianised letter labels")
    ctxs = _contexts(spec)
    index = {c: i for i, c in enumerate(ctxs)}
    n = len(ctxs)
    mat = np.zeros((n, n))
    m = spec.memory
    for c in ctxs:
        i = index[c]
        if m == 1:
            base = spec.window_weight(c) * math.exp(_tilt_of_letter(tilt, ab_labels, c[0]))
            for s in range(spec.n_letters):
                if spec.tau[c[0], s]:
                    mat[i, index[(s,)]] = base
        else:
            for s in range(spec.n_letters):
                if not spec.tau[c[-1], s]:
                    continue
                window = c + (s,)
                if not spec.is_admissible(window):
                    continue
                w = spec.window_weight(window) * math.exp(
                    _tilt_of_letter(tilt, ab_labels, window[0])
                )
                mat[i, index[window[1:]]] = w
    return ctxs, mat


def _power_iteration(mat: np.ndarray, tol: float = 1e-14, max_iter: int = 200_000):
    n = mat.shape[0]
    v = np.ones(n)
    lam = 0.0
    for _ in range(max_iter):
        w = mat @ v
        new_lam = float(np.max(w)) if np.max(w) > 0 else 0.0
        if new_lam <= 0:
            raise NonConvergence("transfer matrix has a zero row cycle")
        w = w / new_lam
        if abs(new_lam - lam) <= tol * new_lam and np.max(np.abs(w - v)) <= tol:
            return new_lam, w
        lam, v = new_lam, w
    raise NonConvergence("power iteration hit the iteration cap")


def transfer_spectrum(
    spec: ShiftSpec,
    tilt: Optional[Sequence[float]] = None,
    ab_labels: Optional[Sequence[Sequence[float]]] = None,
) -> TransferData:
    """Perron root and positive eigenvectors by two-sided power iteration."""
    ctxs, mat = transfer_matrix(spec, tilt, ab_labels)
    lam, right = _power_iteration(mat)
    lam_l, left = _power_iteration(mat.T)
    lam = 0.5 * (lam + lam_l)
    td = TransferData(
        contexts=ctxs,
        matrix=mat,
        spectral_radius=lam,
        right_vector=right / right.sum(),
        left_vector=left / left.sum(),
        tilt=tuple(tilt) if tilt is not None else (),
    )
    if td.residual() > 1e-10:
        raise NonConvergence(f"Perron residual {td.residual():.2e} above 1e-10")
    return td


def normalized_spec(spec: ShiftSpec) -> ShiftSpec:
    """Rescale weights so the top spectral radius is 1 (zero pressure)."""
    td = transfer_spectrum(spec)
    return spec.rescaled(-td.pressure)


# -- growth-rate fits ---------------------------------------------------------


def tail_rate_fit(
    coefficients: np.ndarray, window_fraction: float = 1.0 / 3.0, min_points: int = 5
) -> Tuple[float, Dict[str, float]]:
    """Fit log a_n = const + n * rate - beta * log n on the trailing window."""
    a = np.asarray(coefficients, dtype=float)
    n_max = len(a) - 1
    lo = max(1, int(math.ceil(n_max * (1.0 - window_fraction))))
    idx = [n for n in range(lo, n_max + 1) if a[n] > 0.0]
    if len(idx) < min_points:
        idx = [n for n in range(1, n_max + 1) if a[n] > 0.0]
    if len(idx) < min_points:
        raise EstimationError("not enough positive coefficients for a rate fit")
    ns = np.array(idx, dtype=float)
    logs = np.log(a[idx])
    design = np.column_stack([np.ones_like(ns), ns, np.log(ns)])
    coef, *_ = np.linalg.lstsq(design, logs, rcond=None)
    resid = logs - design @ coef
    diag = {
        "power": float(-coef[2]),
        "rms": float(np.sqrt(np.mean(resid**2))),
        "points": float(len(idx)),
        "window_lo": float(idx[0]),
        "window_hi": float(idx[-1]),
    }
    return float(coef[1]), diag


def gurevic_pressure(
    system: System,
    n_max: int,
    constrained: bool = False,
    first_letter: Optional[int] = None,
    window_fraction: float = 1.0 / 3.0,
) -> float:
    """Exponential growth rate of (optionally identity-constrained) periodic sums."""
    if n_max < 8:
        raise ArgumentError("n_max must be >= 8")
    B = system.spec.letter_start if first_letter is None else first_letter
    coeffs = periodic_coefficients(system, n_max, constrained, B)
    if not np.any(coeffs > 0):
        raise EstimationError("all periodic sums vanish")
    rate, _ = tail_rate_fit(coeffs, window_fraction)
    return rate


def periodic_coefficients(
    system: System, n_max: int, constrained: bool, first_letter: int
) -> np.ndarray:
    out = np.zeros(n_max + 1)
    if constrained and system.is_free_uniform_walk:
        backend = system.backend
        alg = RadialAlgebra(backend.rank, max_radius=n_max + 2)
        scale = system.uniform_letter_weight * 2 * backend.rank
        ones = radius_one_coefficients(alg, n_max)
        deg = 2 * backend.rank
        for n in range(2, n_max + 1):
            out[n] = scale**n * ones[n - 1] / (deg * deg)
        return out
    for n in range(1, n_max + 1):
        out[n] = periodic_sum(
            system.spec, first_letter, n, system.marking, constrained=constrained
        )
    return out


def spr_gamma(
    system: System,
    n_max: int,
    return_letter: Optional[int] = None,
    window_fraction: float = 1.0 / 3.0,
) -> float:
    """Root-test value of the first-return series (0 when no return words exist)."""
    spec = system.spec
    coeffs = np.zeros(n_max + 1)
    for n in range(1, n_max + 1):
        coeffs[n] = first_return_sum(spec, n, return_letter)
    pos = [n for n in range(2, n_max + 1) if coeffs[n] > 0]
    if not pos:
        return 0.0
    lo = max(2, int(math.ceil(n_max * (1.0 - window_fraction))))
    window = [n for n in pos if n >= lo] or pos
    return max(coeffs[n] ** (1.0 / n) for n in window)


# -- tilted pressure minimisation ----------------------------------------------


@dataclass
class TiltResult:
    xi: Tuple[float, ...]
    pressure: float
    letter_tilts: Tuple[float, ...]
    gradient_norm: float
    iterations: int


def tilt_minimize(
    spec: ShiftSpec,
    ab_labels: Sequence[Sequence[float]],
    dim: int,
    bracket: float = 10.0,
    xi_tol: float = 1e-10,
) -> TiltResult:
    """Minimise the tilted pressure over xi in R^dim (dim <= 4).

    Coordinate-wise ternary search on the log spectral radius followed by a
    central-difference Newton polish on each coordinate.
    """
    if not (1 <= dim <= 4):
        raise ArgumentError("tilt dimension must be between 1 and 4")
    if len(ab_labels) != spec.n_letters:
        raise ArgumentError("need one abelianised label per letter")

    def value(xi: np.ndarray) -> float:
        td = transfer_spectrum(spec, tilt=tuple(xi), ab_labels=ab_labels)
        return td.pressure

    xi = np.zeros(dim)
    iterations = 0
    for _sweep in range(60):
        moved = 0.0
        for d in range(dim):
            lo, hi = -bracket, bracket

            def f(x: float) -> float:
                trial = xi.copy()
                trial[d] = x
                return value(trial)

            while hi - lo > max(xi_tol, 1e-9):
                m1 = lo + (hi - lo) / 3.0
                m2 = hi - (hi - lo) / 3.0
                if f(m1) <= f(m2):
                    hi = m2
                else:
                    lo = m1
                iterations += 1
            new = 0.5 * (lo + hi)
            moved = max(moved, abs(new - xi[d]))
            xi[d] = new
        if moved <= 1e-7:
            break
    # derivative polish, one Newton pass per coordinate
    h = 1e-5
    for _ in range(8):
        grad = np.zeros(dim)
        moved = 0.0
        for d in range(dim):
            e = np.zeros(dim)
            e[d] = h
            fp, fm = value(xi + e), value(xi - e)
            f0 = value(xi)
            g = (fp - fm) / (2 * h)
            hess = (fp - 2 * f0 + fm) / (h * h)
            grad[d] = g
            if hess > 1e-12:
                step = -g / hess
                step = max(-0.5, min(0.5, step))
                xi[d] += step
                moved = max(moved, abs(step))
        iterations += 1
        if moved < 1e-11:
            break
    grad = np.zeros(dim)
    for d in range(dim):
        e = np.zeros(dim)
        e[d] = h
        grad[d] = (value(xi + e) - value(xi - e)) / (2 * h)
    letter_tilts = tuple(
        float(sum(x * y for x, y in zip(xi, ab_labels[s]))) for s in range(spec.n_letters)
    )
    return TiltResult(
        xi=tuple(float(x) for x in xi),
        pressure=value(xi),
        letter_tilts=letter_tilts,
        gradient_norm=float(np.linalg.norm(grad)),
        iterations=iterations,
    )


# -- equilibrium chain and cylinder measures ------------------------------------


@dataclass
class EquilibriumChain:
    """Stationary Markov chain of the normalised transfer data."""

    contexts: Tuple[Tuple[int, ...], ...]
    rows: np.ndarray  # stochastic matrix over contexts
    stationary: np.ndarray

    def letter_of(self, ctx_index: int) -> int:
        return self.contexts[ctx_index][-1]


def equilibrium_chain(td: TransferData) -> EquilibriumChain:
    h = td.right_vector
    lam = td.spectral_radius
    n = len(h)
    rows = np.zeros((n, n))
    for i in range(n):
        for j in range(n):
            if td.matrix[i, j] > 0:
                rows[i, j] = td.matrix[i, j] * h[j] / (lam * h[i])
    sums = rows.sum(axis=1)
    if np.max(np.abs(sums - 1.0)) > 1e-12:
        raise NonConvergence("equilibrium rows failed to normalise to 1 within 1e-12")
    stat = td.left_vector * td.right_vector
    stat = stat / stat.sum()
    return EquilibriumChain(contexts=td.contexts, rows=rows, stationary=stat)


@dataclass
class CylinderCalculus:
    """Exact cylinder masses of the conformal and equilibrium measures."""

    spec: ShiftSpec  # normalised weights (unit spectral radius)
    td: TransferData
    _index: Dict[Tuple[int, ...], int]

    @staticmethod
    def build(spec: ShiftSpec) -> "CylinderCalculus":
        td = transfer_spectrum(spec)
        norm = spec.rescaled(-td.pressure)
        td_n = transfer_spectrum(norm)
        index = {c: i for i, c in enumerate(td_n.contexts)}
        return CylinderCalculus(norm, td_n, index)

    @property
    def _peel(self) -> int:
        return max(1, self.spec.memory - 1)

    def conformal_mass(self, word: Sequence[int]) -> float:
        """Mass of the cylinder under the fixed conformal measure."""
        w = tuple(word)
        if not self.spec.is_admissible(w):
            return 0.0
        peel = self._peel
        if len(w) < peel:
            total = 0.0
            for s in range(self.spec.n_letters):
                if self.spec.tau[w[-1], s]:
                    total += self.conformal_mass(w + (s,))
            return total
        m = self.spec.memory
        log_mass = 0.0
        for i in range(len(w) - peel):
            log_mass += self.spec.log_window(w[i : i + m])
        h = self.td.right_vector
        tail_ctx = w[len(w) - peel :]
        return math.exp(log_mass) * h[self._index[tail_ctx]] / h.sum()

    def equilibrium_mass(self, word: Sequence[int]) -> float:
        w = tuple(word)
        if not self.spec.is_admissible(w):
            return 0.0
        peel = self._peel
        if len(w) < peel:
            total = 0.0
            for s in range(self.spec.n_letters):
                if self.spec.tau[w[-1], s]:
                    total += self.equilibrium_mass(w + (s,))
            return total
        lead = w[:peel]
        ell = self.td.left_vector
        h = self.td.right_vector
        z = float(np.dot(ell, h) / h.sum())
        return ell[self._index[lead]] * self.conformal_mass(w) / z

    def transfer_applied_mass(self, word: Sequence[int]) -> float:
        """Conformal mass of the transfer image of the cylinder indicator."""
        w = tuple(word)
        m = self.spec.memory
        if len(w) < m:
            total = 0.0
            for s in range(self.spec.n_letters):
                if self.spec.tau[w[-1], s]:
                    total += self.transfer_applied_mass(w + (s,))
            return total
        if len(w) == 1:
            successors = sum(
                self.conformal_mass((b,))
                for b in range(self.spec.n_letters)
                if self.spec.tau[w[0], b]
            )
            return self.spec.window_weight(w[:m]) * successors
        return self.spec.window_weight(w[:m]) * self.conformal_mass(w[1:])


def conformal_and_gibbs_check(
    spec: ShiftSpec, depth: int
) -> Tuple[float, Tuple[float, float]]:
    """Max relative eigen-defect of the conformal measure, and the empirical
    interval of equilibrium-to-weight ratios, over cylinders up to ``depth``."""
    if depth > 10:
        raise ArgumentError("depth capped at 10")
    calc = CylinderCalculus.build(spec)
    norm = calc.spec
    max_defect = 0.0
    lo, hi = math.inf, -math.inf
    for n in range(1, depth + 1):
        for w in norm.admissible_windows(n):
            nu = calc.conformal_mass(w)
            if nu <= 0:
                continue
            image = calc.transfer_applied_mass(w)
            max_defect = max(max_defect, abs(image - nu) / nu)
            tail = norm.tail_for(w[-1], norm.memory + 1)
            weight = birkhoff_weight(norm, w, tail)
            ratio = calc.equilibrium_mass(w) / weight
            lo, hi = min(lo, ratio), max(hi, ratio)
    return max_defect, (lo, hi)


@dataclass
class PressureReport:
    gurevic: float
    extension: Optional[float]
    spr_gamma: float
    spectral_pressure: float
    diagnostics: Dict[str, float] = field(default_factory=dict)


def pressure_report(system: System, n_max: int, constrained: bool = True) -> PressureReport:
    td = transfer_spectrum(system.spec)
    unconstrained = gurevic_pressure(system, n_max, constrained=False)
    ext = gurevic_pressure(system, n_max, constrained=True) if constrained else None
    spr = spr_gamma(system, min(n_max, 60))
    return PressureReport(
        gurevic=unconstrained,
        extension=ext,
        spr_gamma=spr,
        spectral_pressure=td.pressure,
        diagnostics={"residual": td.residual()},
    )
