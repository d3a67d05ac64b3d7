"""Slowly increasing weight functions that force divergence at the abscissa.

Given non-negative series coefficients B_n with root-test value gamma, the
shifted sequence D_n = gamma^{-n} B_n is summable while (1/n) log(1/D_n)
tends to zero.  Anchors N_1 < N_2 < ... are chosen sparsely (each roughly the
square of the last, thinned so the anchor exponents at least halve) and the
weight c is fixed to 1/D at the anchors with geometric interpolation between
them.  The log of c is then concave and piecewise linear through the origin,
which yields exact monotonicity, submultiplicativity c_{n+k} <= c_n c_k, and
step ratios tending to one.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Dict, Optional, Sequence, Tuple

import numpy as np

from .errors import ArgumentError, EstimationError
from .gdensity import root_test


@dataclass(frozen=True)
class SlowFunction:
    """Piecewise-geometric weight; anchors pin c to the reciprocal tail shape."""

    anchors: Tuple[int, ...]
    anchor_exponents: Tuple[float, ...]  # d(r) = log(1 / D_{N_r}) / N_r
    name: str = "slow"

    def __post_init__(self):
        if len(self.anchors) != len(self.anchor_exponents):
            raise ArgumentError("anchors and exponents must align")
        if any(n2 <= n1 for n1, n2 in zip(self.anchors, self.anchors[1:])):
            raise ArgumentError("anchors must increase")
        if any(d <= 0 for d in self.anchor_exponents):
            raise ArgumentError("anchor exponents must be positive")
        knots = [0.0] + [float(n) for n in self.anchors]
        logs = [0.0] + [d * n for n, d in zip(self.anchors, self.anchor_exponents)]
        object.__setattr__(self, "_knots", np.array(knots))
        object.__setattr__(self, "_logs", np.array(logs))
        if len(logs) >= 2:
            slope = (logs[-1] - logs[-2]) / (knots[-1] - knots[-2])
        else:
            slope = 0.0
        object.__setattr__(self, "_final_slope", float(slope))

    @property
    def is_unit(self) -> bool:
        return len(self.anchors) == 0

    def log_value(self, n: float) -> float:
        if self.is_unit or n <= 0:
            return 0.0
        knots, logs = self._knots, self._logs  # type: ignore[attr-defined]
        if n >= knots[-1]:
            return float(logs[-1] + (n - knots[-1]) * self._final_slope)  # type: ignore[attr-defined]
        return float(np.interp(n, knots, logs))

    def __call__(self, n: float) -> float:
        return math.exp(self.log_value(n))

    def log_values_up_to(self, n_max: int) -> np.ndarray:
        ns = np.arange(n_max + 1, dtype=float)
        if self.is_unit:
            return np.zeros(n_max + 1)
        knots, logs = self._knots, self._logs  # type: ignore[attr-defined]
        out = np.interp(ns, knots, logs)
        beyond = ns > knots[-1]
        out[beyond] = logs[-1] + (ns[beyond] - knots[-1]) * self._final_slope  # type: ignore[attr-defined]
        return out

    def values_up_to(self, n_max: int) -> np.ndarray:
        return np.exp(self.log_values_up_to(n_max))


def unit_slow() -> SlowFunction:
    return SlowFunction(anchors=(), anchor_exponents=(), name="unit")


def construct_slow(
    coefficients: Sequence[float],
    gamma_hint: Optional[float] = None,
    first_anchor: int = 2,
    window_fraction: float = 1.0 / 3.0,
    name: str = "slow",
) -> SlowFunction:
    """Build the anchored weight from series coefficients (index 0 ignored).

    The root-test value of the coefficients fixes the shift; anchors follow
    the squaring schedule, accepting a candidate only when its exponent is
    positive and at most half the previous one.
    """
    b = np.asarray(coefficients, dtype=float)
    if len(b) < 3:
        raise ArgumentError("need coefficients up to at least n = 2")
    if np.any(b < 0):
        raise ArgumentError("coefficients must be non-negative")
    if not np.any(b[1:] > 0):
        raise EstimationError("all coefficients vanish")
    n_max = len(b) - 1
    if gamma_hint is not None:
        gamma = float(gamma_hint)
        if gamma <= 0:
            raise ArgumentError("gamma hint must be positive")
    else:
        gamma = root_test(b, window_fraction).value

    log_gamma = math.log(gamma)

    def exponent(n: int) -> Optional[float]:
        if b[n] <= 0:
            return None
        # d = log(1 / D_n) / n with D_n = gamma^{-n} b_n
        log_d_inv = -(math.log(b[n]) - n * log_gamma)
        if log_d_inv <= 0:
            return None
        return log_d_inv / n

    anchors = []
    exps = []
    candidate = max(2, first_anchor)
    # first anchor: earliest candidate with a positive exponent
    while candidate <= n_max:
        d = exponent(candidate)
        if d is not None:
            anchors.append(candidate)
            exps.append(d)
            break
        candidate += 1
    while anchors:
        nxt = anchors[-1] * anchors[-1]
        accepted = False
        while nxt <= n_max:
            d = exponent(nxt)
            if d is not None and d <= exps[-1] / 2.0:
                anchors.append(nxt)
                exps.append(d)
                accepted = True
                break
            nxt = nxt * nxt
        if not accepted:
            # final try: the grid end itself
            d = exponent(n_max) if n_max > anchors[-1] else None
            if d is not None and d <= exps[-1] / 2.0:
                anchors.append(n_max)
                exps.append(d)
            break
    return SlowFunction(tuple(anchors), tuple(exps), name=name)


def _log_sum_exp(values: np.ndarray) -> float:
    m = float(np.max(values))
    if not math.isfinite(m):
        return m
    return m + math.log(float(np.sum(np.exp(values - m))))


def slow_properties_check(
    c: SlowFunction,
    grid_max: int,
    coefficients: Optional[Sequence[float]] = None,
    gamma_hint: Optional[float] = None,
    n_pairs: int = 10_000,
    seed: int = 0,
) -> Dict[str, float]:
    """Verify the defining properties on a finite grid and report diagnostics.

    Checks: positivity, monotonicity, submultiplicativity on random pairs,
    step ratio at the grid end, subexponential rate at the grid end, and (when
    the source coefficients are supplied) the divergence enhancement factor
    sum c_n D_n / sum D_n.
    """
    logs = c.log_values_up_to(grid_max)
    report: Dict[str, float] = {}
    report["min_value_ok"] = 1.0  # exp of finite logs is positive
    diffs = np.diff(logs)
    report["monotone_defect"] = float(max(0.0, -np.min(diffs))) if len(diffs) else 0.0
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(n_pairs):
        n = int(rng.integers(1, grid_max))
        k = int(rng.integers(1, grid_max - n + 1)) if n < grid_max else 1
        gap = logs[min(n + k, grid_max)] - logs[n] - logs[k]
        worst = max(worst, gap)
    report["submultiplicative_defect"] = float(worst)
    report["end_ratio"] = float(math.exp(logs[grid_max] - logs[grid_max - 1]))
    report["end_rate"] = float(logs[grid_max] / grid_max)
    mid = grid_max // 2
    report["rate_decreasing"] = float(logs[grid_max] / grid_max <= logs[mid] / mid + 1e-15)
    if coefficients is not None:
        b = np.asarray(coefficients, dtype=float)
        n_max = min(grid_max, len(b) - 1)
        gamma = (
            float(gamma_hint)
            if gamma_hint is not None
            else root_test(b).value
        )
        ns = np.arange(1, n_max + 1, dtype=float)
        with np.errstate(divide="ignore"):
            log_d = np.where(b[1 : n_max + 1] > 0, np.log(b[1 : n_max + 1]), -np.inf)
        log_d = log_d - ns * math.log(gamma)
        finite = np.isfinite(log_d)
        log_plain = _log_sum_exp(log_d[finite])
        log_boost = _log_sum_exp((log_d + logs[1 : n_max + 1])[finite])
        report["log_enhancement"] = float(log_boost - log_plain)
        report["enhancement"] = float(math.exp(min(700.0, log_boost - log_plain)))
    return report
