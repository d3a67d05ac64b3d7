"""Config validation, record layout, determinism, exit codes."""

from __future__ import annotations

import json
import math
import os
import subprocess
import sys

import pytest

from skewtherm.cli import EXIT_BUDGET, EXIT_NUMERIC, EXIT_SCHEMA, main, run_config
from skewtherm.parallel import resolve_threads


def run_cli(tmp_path, config, extra=None):
    cfg = tmp_path / "config.json"
    cfg.write_text(json.dumps(config))
    out = tmp_path / "out.jsonl"
    code = main(["--config", str(cfg), "--out", str(out)] + (extra or []))
    records = [json.loads(line) for line in out.read_text().splitlines()]
    return code, records


def test_kesten_record(tmp_path):
    code, records = run_cli(
        tmp_path,
        {
            "schema_version": 1,
            "system": {"preset": "z_walk", "params": {"p_plus": 0.75}},
            "experiment": {"name": "kesten", "n_max": 800},
            "seed": 1,
        },
    )
    assert code == 0
    (rec,) = records
    assert rec["quantity"] == "gamma"
    assert rec["values"]["gamma"] == pytest.approx(math.sqrt(3) / 2, abs=0.01)
    assert rec["params"]["experiment"]["n_max"] == 800
    assert rec["versions"]["rng"] == "numpy-philox-4x64-10"
    assert "wall_time_s" in rec


def test_boundary_record(tmp_path):
    code, records = run_cli(
        tmp_path,
        {
            "schema_version": 1,
            "system": {"preset": "f2_simple_walk"},
            "experiment": {"name": "boundary", "lengths": [2]},
        },
    )
    assert code == 0
    assert records[0]["values"]["by_length"]["2"] == pytest.approx(2 / 3, rel=1e-12)


def test_malformed_config_exits_with_schema_code(tmp_path):
    code, records = run_cli(
        tmp_path,
        {"schema_version": 1, "system": {"preset": "nope"}, "experiment": {"name": "kesten"}},
    )
    assert code == EXIT_SCHEMA
    assert records[0]["error"]["kind"] == "validation"
    code2, records2 = run_cli(tmp_path, {"schema_version": 99})
    assert code2 == EXIT_SCHEMA


def test_budget_exit(tmp_path):
    code, records = run_cli(
        tmp_path,
        {
            "schema_version": 1,
            "system": {"preset": "z_mod_walk", "params": {"modulus": 3}},
            "experiment": {"name": "density", "t": 1.2, "n_max": 10},
            "budgets": {"states": 2},
        },
    )
    assert code == EXIT_BUDGET
    assert records[0]["error"]["kind"] == "budget"


def test_numeric_guard_exit(tmp_path):
    code, records = run_cli(
        tmp_path,
        {
            "schema_version": 1,
            "system": {"preset": "f2_simple_walk"},
            "experiment": {
                "name": "decay",
                "count": 10,
                "length": 20,
                "gamma": 0.5,
                "burn_in": 2,
                "n_max": 200,
            },
        },
    )
    assert code == EXIT_NUMERIC
    assert records[0]["error"]["kind"] == "numerical"


def test_value_fields_byte_identical(tmp_path):
    config = {
        "schema_version": 1,
        "system": {"preset": "z_walk"},
        "experiment": {"name": "kesten", "n_max": 500},
        "seed": 7,
    }
    _, first = run_cli(tmp_path, config)
    _, second = run_cli(tmp_path, config)

    def stripped(records):
        return json.dumps(
            [{k: r[k] for k in r if k != "wall_time_s"} for r in records], sort_keys=True
        )

    assert stripped(first) == stripped(second)


def test_decay_seed_changes_paths_not_schema(tmp_path):
    config = {
        "schema_version": 1,
        "system": {"preset": "z_walk"},
        "experiment": {
            "name": "decay",
            "count": 30,
            "length": 40,
            "gamma": 0.9,
            "burn_in": 5,
            "majorant": False,
        },
    }
    code_a, rec_a = run_cli(tmp_path, config, extra=["--seed", "1"])
    code_b, rec_b = run_cli(tmp_path, config, extra=["--seed", "2"])
    assert code_a == code_b == 0
    assert rec_a[0]["seed"] == 1 and rec_b[0]["seed"] == 2


def test_custom_system_block(tmp_path):
    config = {
        "schema_version": 1,
        "system": {
            "spec": {
                "n_letters": 2,
                "transitions": [[1, 1], [1, 0]],
                "memory": 1,
                "log_weights": {"0": math.log(0.5), "1": math.log(0.5)},
                "letter_start": 0,
                "letter_end": 0,
                "tail_preperiod": [0],
                "tail_period": [0],
            },
            "group": {"kind": "abelian-quotient", "dim": 1, "sublattice": [[2]]},
            "marking": {"labels": [[1], [1]]},
        },
        "experiment": {
            "name": "pressure",
            "n_max": 30,
            "constrained": True,
            "conformal_depth": 4,
        },
    }
    code, records = run_cli(tmp_path, config)
    assert code == 0
    names = {r["quantity"] for r in records}
    assert {
        "spectral_pressure",
        "gurevic_pressure",
        "extension_pressure",
        "spr_gamma",
        "conformal_gibbs",
    } <= names
    (conf,) = [r for r in records if r["quantity"] == "conformal_gibbs"]
    assert conf["values"]["conformal_defect"] <= 1e-9


def test_sequential_flag_matches_default(tmp_path):
    config = {
        "schema_version": 1,
        "system": {"preset": "z_walk", "params": {"p_plus": 0.75}},
        "experiment": {
            "name": "tilt",
            "upsilon_targets": [[1]],
            "n_max": 400,
            "grid_points": 3,
            "gamma_n_max": 400,
        },
    }
    _, plain = run_cli(tmp_path, config)
    _, seq = run_cli(tmp_path, config, extra=["--sequential"])

    def values(records):
        return json.dumps([r["values"] for r in records], sort_keys=True)

    assert values(plain) == values(seq)


def test_threads_env_resolution(monkeypatch):
    monkeypatch.delenv("SKEWTHERM_THREADS", raising=False)
    assert resolve_threads(None) == 1
    assert resolve_threads(3) == 3
    monkeypatch.setenv("SKEWTHERM_THREADS", "5")
    assert resolve_threads(None) == 5
    assert resolve_threads(2) == 2
    assert resolve_threads(0) == (os.cpu_count() or 1)


def test_console_entrypoint_runs(tmp_path):
    cfg = tmp_path / "c.json"
    cfg.write_text(
        json.dumps(
            {
                "schema_version": 1,
                "system": {"preset": "f2_simple_walk"},
                "experiment": {"name": "boundary", "lengths": [0, 1]},
            }
        )
    )
    proc = subprocess.run(
        [sys.executable, "-m", "skewtherm.cli", "--config", str(cfg)],
        capture_output=True,
        text=True,
    )
    assert proc.returncode == 0
    assert json.loads(proc.stdout.splitlines()[0])["quantity"] == "boundary_coefficient"


@pytest.mark.parametrize(
    "experiment",
    [
        {"name": "twisted", "mode": "plain", "n_max": 200, "depth": 3, "t_rel": 0.05,
         "gamma_n_max": 400, "upsilon_targets": [[1]], "grid_points": 3},
        {"name": "twisted", "mode": "two-sided", "n_max": 200, "depth": 2, "t_rel": 0.05,
         "gamma_n_max": 400},
        {"name": "slowvar", "n_max": 100000},
        {"name": "drift", "n": 6, "n_max": 800, "equilibrium_n": 200, "gamma_n_max": 800},
        {"name": "spherical", "radius_max": 4, "n_max": 800, "grid_points": 3,
         "gamma_n_max": 800},
    ],
    ids=["twisted-plain", "twisted-two-sided", "slowvar", "drift", "spherical"],
)
def test_experiment_runners_end_to_end(tmp_path, experiment):
    preset = (
        {"preset": "f2_simple_walk"}
        if experiment["name"] in ("drift", "spherical")
        else {"preset": "z_walk"}
    )
    code, records = run_cli(
        tmp_path,
        {"schema_version": 1, "system": preset, "experiment": experiment, "seed": 3},
    )
    assert code == 0
    assert records
    for rec in records:
        assert rec["experiment"] == experiment["name"]
        assert "values" in rec and rec["values"]


def test_decay_values_identical_across_thread_counts(tmp_path):
    config = {
        "schema_version": 1,
        "system": {"preset": "z_walk"},
        "experiment": {
            "name": "decay",
            "count": 40,
            "length": 60,
            "gamma": 0.9,
            "burn_in": 5,
            "majorant": False,
        },
        "seed": 11,
    }
    _, seq = run_cli(tmp_path, config, extra=["--sequential"])
    _, par = run_cli(tmp_path, config, extra=["--threads", "4"])
    assert json.dumps([r["values"] for r in seq], sort_keys=True) == json.dumps(
        [r["values"] for r in par], sort_keys=True
    )


def test_negative_budget_rejected(tmp_path):
    code, records = run_cli(
        tmp_path,
        {
            "schema_version": 1,
            "system": {"preset": "z_walk"},
            "experiment": {"name": "kesten", "n_max": 100},
            "budgets": {"states": -1},
        },
    )
    assert code == EXIT_SCHEMA
