"""Batch driver: experiment configs in, JSON-lines records out.

A config names a system (preset or explicit spec + group + marking) and one
experiment with its parameters.  Each run emits one record per reported
quantity; records echo the resolved config, versions, the RNG name, and the
seed, so identical configs reproduce byte-identical value fields.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
import time
from typing import Any, Dict, List, Optional

import numpy as np

from . import __version__
from .errors import (
    ArgumentError,
    BudgetExceeded,
    DivergenceGuard,
    DomainError,
    EstimationError,
    NonConvergence,
    SkewthermError,
)
from .decaylab import (
    RNG_NAME,
    adversarial_lower_bound,
    adversarial_vector,
    borel_cantelli_bound,
    decay_report,
    heavy_tail_vector,
    sample_paths,
)
from .gdensity import build_density, gamma_estimate
from .groups import AbelianQuotient, FinitePermutation, FreeAbelian, FreeGroup, Marking
from .parallel import resolve_threads
from .shiftspace import ShiftSpec
from .slowvar import construct_slow, slow_properties_check
from .systems import (
    System,
    f2_simple_walk,
    free_uniform_walk,
    full_shift,
    golden_mean_shift,
    z2_walk,
    z3_walk,
    z_mod_walk,
    z_marked_golden_mean,
    z_walk,
)
from .thermo import (
    conformal_and_gibbs_check,
    equilibrium_chain,
    gurevic_pressure,
    spr_gamma,
    tilt_minimize,
    transfer_spectrum,
)
from .twisted import (
    approx_measure,
    boundary_coefficient,
    coefficient_identity_check,
    descending_grid,
    drift_profile,
    equilibrium_drift,
    shift_invariance_defect,
    spherical_profile,
    upsilon,
)

SCHEMA_VERSION = 1

EXIT_OK = 0
EXIT_UNEXPECTED = 1
EXIT_SCHEMA = 2
EXIT_BUDGET = 3
EXIT_NUMERIC = 4

_PRESETS = {
    "f2_simple_walk": f2_simple_walk,
    "z_walk": lambda p_plus=0.5: z_walk(p_plus),
    "z2_walk": z2_walk,
    "z3_walk": z3_walk,
    "z_mod_walk": lambda modulus=3: z_mod_walk(modulus),
    "golden_mean": lambda twisted_tail=False: golden_mean_shift(
        weights=(0.5, 0.5), twisted_tail=twisted_tail
    ),
    "golden_mean_z": lambda twisted_tail=False: z_marked_golden_mean(twisted_tail),
    "full_shift": lambda probs=(0.5, 0.5): full_shift(list(probs)),
    "free_uniform_walk": lambda rank=2: free_uniform_walk(rank),
}


class ConfigError(ValueError):
    pass


def _require(cond: bool, msg: str) -> None:
    if not cond:
        raise ConfigError(msg)


def load_system(block: Dict[str, Any]) -> System:
    _require(isinstance(block, dict), "system block must be an object")
    if "preset" in block:
        name = block["preset"]
        _require(name in _PRESETS, f"unknown system preset {name!r}")
        params = block.get("params", {})
        _require(isinstance(params, dict), "system params must be an object")
        return _PRESETS[name](**params)
    _require("spec" in block and "group" in block and "marking" in block,
             "system needs either a preset or spec+group+marking")
    sp = block["spec"]
    try:
        weights = {
            tuple(int(x) for x in key.split(",")): float(val)
            for key, val in sp["log_weights"].items()
        }
        spec = ShiftSpec(
            n_letters=int(sp["n_letters"]),
            transitions=tuple(tuple(bool(x) for x in row) for row in sp["transitions"]),
            memory=int(sp.get("memory", 1)),
            log_weights=weights,
            letter_start=int(sp["letter_start"]),
            letter_end=int(sp["letter_end"]),
            tail_preperiod=tuple(int(x) for x in sp.get("tail_preperiod", [])),
            tail_period=tuple(int(x) for x in sp["tail_period"]),
        )
    except (KeyError, TypeError, ValueError, ArgumentError) as exc:
        raise ConfigError(f"bad spec block: {exc}") from exc
    grp = block["group"]
    kind = grp.get("kind")
    try:
        if kind == "free":
            backend = FreeGroup(int(grp["rank"]))
        elif kind == "free-abelian":
            backend = FreeAbelian(int(grp["dim"]))
        elif kind == "abelian-quotient":
            backend = AbelianQuotient(
                int(grp["dim"]), tuple(tuple(int(x) for x in row) for row in grp["sublattice"])
            )
        elif kind == "finite-permutation":
            backend = FinitePermutation(int(grp["n_points"]))
        else:
            raise ConfigError(f"unknown group kind {kind!r}")
    except (KeyError, TypeError, ValueError, ArgumentError) as exc:
        raise ConfigError(f"bad group block: {exc}") from exc
    mk = block["marking"]
    try:
        labels = tuple(tuple(int(x) for x in lab) for lab in mk["labels"])
        marking = Marking(backend, labels, bool(mk.get("visibility_asserted", False)))
    except (KeyError, TypeError, ValueError, ArgumentError) as exc:
        raise ConfigError(f"bad marking block: {exc}") from exc
    _require(marking.alphabet_size == spec.n_letters,
             "marking must label every letter exactly once")
    return System(spec, marking, name=block.get("name", "custom"))


def _grid_base(est) -> float:
    """Safe grid anchor: the fit-corrected radius, never below the root test."""
    return max(est.value, est.diagnostics.get("fit_gamma", est.value))


# -- experiment runners -------------------------------------------------------


def _run_kesten(system: System, params: Dict[str, Any], ctx) -> List[Dict[str, Any]]:
    n_max = int(params.get("n_max", 2000))
    est = gamma_estimate(system, n_max)
    return [
        {
            "quantity": "gamma",
            "values": {"gamma": est.value, "method": est.method},
            "diagnostics": est.diagnostics,
        }
    ]


def _run_pressure(system: System, params: Dict[str, Any], ctx) -> List[Dict[str, Any]]:
    n_max = int(params.get("n_max", 60))
    constrained = bool(params.get("constrained", True))
    td = transfer_spectrum(system.spec)
    records = [
        {
            "quantity": "spectral_pressure",
            "values": {"pressure": td.pressure},
            "diagnostics": {"residual": td.residual()},
        },
        {
            "quantity": "gurevic_pressure",
            "values": {"pressure": gurevic_pressure(system, n_max, constrained=False)},
            "diagnostics": {},
        },
        {
            "quantity": "spr_gamma",
            "values": {"spr_gamma": spr_gamma(system, min(n_max * 4, 1200))},
            "diagnostics": {},
        },
    ]
    if constrained:
        records.insert(
            2,
            {
                "quantity": "extension_pressure",
                "values": {"pressure": gurevic_pressure(system, n_max, constrained=True)},
                "diagnostics": {},
            },
        )
    depth = int(params.get("conformal_depth", 0))
    if depth:
        defect, interval = conformal_and_gibbs_check(system.spec, depth)
        records.append(
            {
                "quantity": "conformal_gibbs",
                "values": {
                    "conformal_defect": defect,
                    "gibbs_lo": interval[0],
                    "gibbs_hi": interval[1],
                },
                "diagnostics": {},
            }
        )
    return records


def _run_density(system: System, params: Dict[str, Any], ctx) -> List[Dict[str, Any]]:
    t = float(params["t"])
    n_max = int(params.get("n_max", 40))
    budget = int(ctx["budgets"].get("states", 5_000_000))
    dens = build_density(system, t, n_max, state_budget=budget)
    agg = dens.aggregate()
    return [
        {
            "quantity": "density_summary",
            "values": {
                "zeta": dens.zeta,
                "aggregate_mass": float(sum(agg.values())),
                "support": len(agg),
            },
            "diagnostics": {"n_max": float(n_max)},
        }
    ]


def _run_twisted(system: System, params: Dict[str, Any], ctx) -> List[Dict[str, Any]]:
    n_max = int(params.get("n_max", 800))
    depth = int(params.get("depth", 4))
    mode = params.get("mode", "plain")
    est = gamma_estimate(system, int(params.get("gamma_n_max", min(n_max, 2000))))
    base = _grid_base(est)
    t = float(params["t"]) if "t" in params else base * (1.0 + float(params.get("t_rel", 0.02)))
    meas = approx_measure(system, mode, t, n_max, depth, gamma_hat=base)
    records = [
        {
            "quantity": "twisted_measure",
            "values": {
                "t": t,
                "start_cylinder_mass": meas.diagnostics.get("start_cylinder_mass", 0.0),
                "total_mass": meas.diagnostics.get("total_mass", 0.0),
                "normalizer": meas.normalizer,
            },
            "diagnostics": {"gamma_hat": base, "mode": mode},
        }
    ]
    if mode == "two-sided":
        records.append(
            {
                "quantity": "shift_invariance",
                "values": {"defect": shift_invariance_defect(meas, min(depth, 3))},
                "diagnostics": {"t": t},
            }
        )
    targets = params.get("upsilon_targets")
    if targets:
        grid = descending_grid(base, points=int(params.get("grid_points", 6)))
        table = upsilon(
            system,
            params.get("upsilon_kind", "plain"),
            [tuple(g) for g in targets],
            grid,
            n_max,
            gamma_hat=base,
        )
        records.append(
            {
                "quantity": "upsilon",
                "values": {
                    "entries": {str(k): list(v) for k, v in table.entries.items()},
                    "extrapolated": {str(k): v for k, v in table.extrapolated.items()},
                },
                "diagnostics": {"grid": list(table.t_grid)},
            }
        )
    return records


def _run_spherical(system: System, params: Dict[str, Any], ctx) -> List[Dict[str, Any]]:
    radius_max = int(params.get("radius_max", 6))
    n_max = int(params.get("n_max", 4000))
    points = int(params.get("grid_points", 8))
    est = gamma_estimate(system, int(params.get("gamma_n_max", 2000)))
    base = _grid_base(est)
    grid = descending_grid(base, points=points)
    prof = spherical_profile(system, radius_max, grid, n_max, gamma_hat=base)
    defect = prof.eigen_defect(base, min(radius_max - 1, 4))
    return [
        {
            "quantity": "spherical_profile",
            "values": {
                "per_radius_finest": [float(x) for x in prof.per_t[-1][: radius_max + 1]],
                "per_radius_extrapolated": [
                    float(x) for x in prof.extrapolated[: radius_max + 1]
                ],
                "eigen_defect": defect,
            },
            "diagnostics": {"grid": list(prof.t_grid), "gamma_hat": base},
        }
    ]


def _run_boundary(system: System, params: Dict[str, Any], ctx) -> List[Dict[str, Any]]:
    lengths = params.get("lengths", list(range(0, 13)))
    values = {}
    deltas = {}
    for n in lengths:
        n = int(n)
        val = boundary_coefficient(n)
        closed = (1.0 + n / 2.0) * math.sqrt(3.0) ** (-n)
        values[str(n)] = val
        deltas[str(n)] = abs(val - closed)
    return [
        {
            "quantity": "boundary_coefficient",
            "values": {"by_length": values},
            "diagnostics": {"closed_form_gap": deltas},
        }
    ]


def _run_tilt(system: System, params: Dict[str, Any], ctx) -> List[Dict[str, Any]]:
    ab_labels = params.get("ab_labels")
    if ab_labels is None:
        backend = system.backend
        _require(isinstance(backend, FreeAbelian), "tilt needs abelian labels")
        ab_labels = [list(system.marking.label(s)) for s in range(system.spec.n_letters)]
    dim = len(ab_labels[0])
    res = tilt_minimize(system.spec, ab_labels, dim)
    records = [
        {
            "quantity": "tilt_minimum",
            "values": {
                "xi": list(res.xi),
                "pressure": res.pressure,
                "letter_tilts": list(res.letter_tilts),
            },
            "diagnostics": {
                "gradient_norm": res.gradient_norm,
                "iterations": float(res.iterations),
            },
        }
    ]
    targets = params.get("upsilon_targets")
    if targets:
        n_max = int(params.get("n_max", 3000))
        est = gamma_estimate(system, int(params.get("gamma_n_max", 1500)))
        base = _grid_base(est)
        grid = descending_grid(base, points=int(params.get("grid_points", 8)))
        table = upsilon(
            system, "star", [tuple(g) for g in targets], grid, n_max, gamma_hat=base
        )
        records.append(
            {
                "quantity": "upsilon_star",
                "values": {
                    "extrapolated": {str(k): v for k, v in table.extrapolated.items()}
                },
                "diagnostics": {"grid": list(table.t_grid)},
            }
        )
    return records


def _run_decay(system: System, params: Dict[str, Any], ctx) -> List[Dict[str, Any]]:
    count = int(params.get("count", 1000))
    length = int(params.get("length", 200))
    gamma = float(params.get("gamma", 0.95))
    burn_in = int(params.get("burn_in", 50))
    seed = ctx["seed"]
    td = transfer_spectrum(system.spec)
    chain = equilibrium_chain(td)
    paths = sample_paths(system, chain, count, length, seed, threads=ctx["threads"])
    v = None
    if params.get("heavy_tail"):
        ht = params["heavy_tail"]
        v = heavy_tail_vector(system, float(ht.get("exponent", 0.75)), int(ht.get("cutoff", 2000)))
    rep = decay_report(system, None, v, gamma, paths, burn_in)
    records = [
        {
            "quantity": "decay_report",
            "values": {
                "exceedance_count": rep.exceedance_count,
                "exceedance_rate": rep.exceedance_rate,
                "max_exceedance_step": rep.max_exceedance_step,
                "persistent": rep.persistent,
                "empirical_sum": rep.empirical_sum(),
            },
            "diagnostics": {"burn_in": float(burn_in), "gamma": gamma},
        }
    ]
    if params.get("majorant", True) and v is None:
        bound = borel_cantelli_bound(system, None, None, gamma, int(params.get("n_max", 2000)))
        records.append(
            {
                "quantity": "summability_majorant",
                "values": {
                    "majorant": bound,
                    "empirical_sum": rep.empirical_sum(),
                    "bounded": bool(bound >= rep.empirical_sum()),
                },
                "diagnostics": {},
            }
        )
    return records


def _run_slowvar(system: System, params: Dict[str, Any], ctx) -> List[Dict[str, Any]]:
    n_max = int(params.get("n_max", 10**6))
    source = params.get("source", "inverse-square")
    if source == "inverse-square":
        ns = np.arange(n_max + 1, dtype=float)
        ns[0] = 1.0
        coeffs = ns**-2.0
        coeffs[0] = 0.0
    elif source == "coefficients":
        coeffs = np.array([0.0] + [float(x) for x in params["coefficients"]])
    else:
        raise ConfigError(f"unknown slowvar source {source!r}")
    c = construct_slow(coeffs, gamma_hint=params.get("gamma_hint"))
    report = slow_properties_check(
        c, min(n_max, len(coeffs) - 1), coefficients=coeffs,
        gamma_hint=params.get("gamma_hint"), seed=ctx["seed"],
    )
    return [
        {
            "quantity": "slow_function",
            "values": {
                "anchors": list(c.anchors),
                "anchor_exponents": list(c.anchor_exponents),
                **{k: float(v) for k, v in report.items()},
            },
            "diagnostics": {},
        }
    ]


def _run_drift(system: System, params: Dict[str, Any], ctx) -> List[Dict[str, Any]]:
    n = int(params.get("n", 10))
    eq_n = int(params.get("equilibrium_n", 400))
    est = gamma_estimate(system, int(params.get("gamma_n_max", 2000)))
    base = _grid_base(est)
    t = base * (1.0 + float(params.get("t_rel", 0.002)))
    meas = approx_measure(
        system, "plain", t, int(params.get("n_max", 4000)), max(n, 2), gamma_hat=base
    )
    return [
        {
            "quantity": "drift",
            "values": {
                "equilibrium_drift": equilibrium_drift(system, eq_n),
                "twisted_drift": drift_profile(meas, n),
                "depth": n,
            },
            "diagnostics": {"t": t, "gamma_hat": base},
        }
    ]


_RUNNERS = {
    "kesten": _run_kesten,
    "pressure": _run_pressure,
    "density": _run_density,
    "twisted": _run_twisted,
    "spherical": _run_spherical,
    "boundary": _run_boundary,
    "tilt": _run_tilt,
    "decay": _run_decay,
    "slowvar": _run_slowvar,
    "drift": _run_drift,
}


def run_config(config: Dict[str, Any], seed: Optional[int], threads: int) -> List[Dict[str, Any]]:
    _require(isinstance(config, dict), "config must be a JSON object")
    version = config.get("schema_version")
    _require(version == SCHEMA_VERSION, f"schema_version must be {SCHEMA_VERSION}")
    _require("system" in config, "config needs a system block")
    _require("experiment" in config, "config needs an experiment block")
    system = load_system(config["system"])
    exp = config["experiment"]
    _require(isinstance(exp, dict) and "name" in exp, "experiment needs a name")
    name = exp["name"]
    _require(name in _RUNNERS, f"unknown experiment {name!r}")
    params = {k: v for k, v in exp.items() if k != "name"}
    budgets = config.get("budgets", {})
    _require(isinstance(budgets, dict), "budgets must be an object")
    for key, value in budgets.items():
        _require(isinstance(value, (int, float)) and value > 0, f"budget {key} must be positive")
    resolved_seed = seed if seed is not None else int(config.get("seed", 0))
    ctx = {"seed": resolved_seed, "threads": threads, "budgets": budgets}
    t0 = time.perf_counter()
    records = _RUNNERS[name](system, params, ctx)
    elapsed = time.perf_counter() - t0
    resolved = {
        "schema_version": SCHEMA_VERSION,
        "system": config["system"],
        "experiment": exp,
        "seed": resolved_seed,
        "budgets": budgets,
    }
    out = []
    for rec in records:
        out.append(
            {
                "experiment": name,
                "quantity": rec["quantity"],
                "params": resolved,
                "values": rec["values"],
                "diagnostics": rec.get("diagnostics", {}),
                "versions": {
                    "skewtherm": __version__,
                    "numpy": np.__version__,
                    "rng": RNG_NAME,
                },
                "seed": resolved_seed,
                "wall_time_s": round(elapsed, 6),
            }
        )
    return out


def _emit(records: List[Dict[str, Any]], out_path: Optional[str]) -> None:
    lines = [json.dumps(rec, sort_keys=True) for rec in records]
    if out_path:
        with open(out_path, "w") as fh:
            for line in lines:
                fh.write(line + "\n")
    else:
        for line in lines:
            print(line)


def _error_record(kind: str, message: str) -> Dict[str, Any]:
    return {
        "error": {"kind": kind, "message": message},
        "versions": {"skewtherm": __version__, "numpy": np.__version__, "rng": RNG_NAME},
    }


def main(argv: Optional[List[str]] = None) -> int:
    parser = argparse.ArgumentParser(
        prog="skewtherm",
        description="Run marked-subshift experiments from a JSON config and emit JSON lines.",
    )
    parser.add_argument("--config", required=True, help="path to the experiment config (JSON)")
    parser.add_argument("--out", default=None, help="output path (default: stdout)")
    parser.add_argument("--threads", type=int, default=None,
                        help="worker threads (0 = auto, default: SKEWTHERM_THREADS or 1)")
    parser.add_argument("--seed", type=int, default=None, help="override the config seed")
    parser.add_argument("--sequential", action="store_true",
                        help="force deterministic sequential mode (threads = 1)")
    args = parser.parse_args(argv)

    threads = 1 if args.sequential else resolve_threads(args.threads)
    try:
        with open(args.config) as fh:
            config = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        _emit([_error_record("config", str(exc))], args.out)
        return EXIT_SCHEMA
    try:
        records = run_config(config, args.seed, threads)
    except (ConfigError, ArgumentError) as exc:
        _emit([_error_record("validation", str(exc))], args.out)
        return EXIT_SCHEMA
    except BudgetExceeded as exc:
        _emit([_error_record("budget", str(exc))], args.out)
        return EXIT_BUDGET
    except (DivergenceGuard, EstimationError, NonConvergence, DomainError) as exc:
        _emit([_error_record("numerical", str(exc))], args.out)
        return EXIT_NUMERIC
    except SkewthermError as exc:
        _emit([_error_record("error", str(exc))], args.out)
        return EXIT_UNEXPECTED
    _emit(records, args.out)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
