"""Instance generation, canonical serialization, suites, and the CLI."""

import json
import os

import numpy as np
import pytest

from twoweight.cli import main
from twoweight.extremal import AscentOptions
from twoweight.harness import (
    THREADS_ENV,
    ConfigError,
    GeneratorConfig,
    Instance,
    SuiteConfig,
    gen_instance,
    instance_f,
    rows_digest,
    run_suite,
)

FAST_ASCENT = AscentOptions(restarts=4, max_iter=60, seed=0)


# -- configs and generation -----------------------------------------------------


def test_generator_config_validation():
    with pytest.raises(ConfigError):
        GeneratorConfig(sigma="gaussian").validate()
    with pytest.raises(ConfigError):
        GeneratorConfig(tau="dense").validate()
    with pytest.raises(ConfigError):
        GeneratorConfig(tau="fractional").validate()  # alpha missing
    with pytest.raises(ConfigError):
        GeneratorConfig(tau="fractional", alpha=1.5, d=1).validate()
    with pytest.raises(ConfigError):
        GeneratorConfig(p=3.0, q=2.0).validate()  # p > q
    with pytest.raises(ConfigError):
        GeneratorConfig(depth=-1).validate()
    GeneratorConfig(tau="fractional", alpha=0.5).validate()


def test_generator_tag_round_trips_style():
    cfg = GeneratorConfig(d=2, depth=2, tau="fractional", alpha=0.5, p=1.5, q=2.5)
    tag = cfg.tag()
    assert "d2D2" in tag and "fractional" in tag and "a0.5" in tag and "p1.5q2.5" in tag


@pytest.mark.parametrize("style", ["lognormal", "spikes", "uniform"])
def test_gen_instance_styles(style):
    inst = gen_instance(GeneratorConfig(sigma=style, omega=style), seed=7)
    assert inst.sigma.total > 0 and inst.omega.total > 0
    assert np.all(inst.sigma.leaf_mass >= 0)


def test_spikes_floor_behavior():
    lively = gen_instance(GeneratorConfig(sigma="spikes", depth=5), seed=1)
    assert np.all(lively.sigma.leaf_mass > 0)  # tiny floor, never exactly zero
    zeroed = gen_instance(
        GeneratorConfig(sigma="spikes", depth=5, allow_zero_sigma=True), seed=1
    )
    assert np.any(zeroed.sigma.leaf_mass == 0.0)


def test_gen_instance_deterministic():
    cfg = GeneratorConfig(d=1, depth=4, tau="sparse")
    a = gen_instance(cfg, seed=123).to_json()
    b = gen_instance(cfg, seed=123).to_json()
    assert a == b
    c = gen_instance(cfg, seed=124).to_json()
    assert a != c


def test_instance_f_deterministic_and_positive():
    inst = gen_instance(GeneratorConfig(), seed=5)
    f1, f2 = instance_f(inst), instance_f(inst)
    np.testing.assert_array_equal(f1, f2)
    assert np.all(f1 > 0)


# -- serialization ---------------------------------------------------------------


def test_json_round_trip_byte_exact():
    for style in ("random", "sparse", "root_only"):
        inst = gen_instance(GeneratorConfig(d=2, depth=2, tau=style), seed=9)
        text = inst.to_json()
        back = Instance.from_json(text)
        assert back.to_json() == text


def test_fractional_rule_deserialization():
    inst = gen_instance(GeneratorConfig(tau="fractional", alpha=0.5), seed=3)
    # a rule-only payload (no dense values) reconstructs the same weights
    data = inst.to_json_dict()
    data["tau"] = {"rule": "fractional", "alpha": 0.5}
    rebuilt = Instance.from_json_dict(data)
    np.testing.assert_allclose(rebuilt.tau.tau, inst.tau.tau, rtol=1e-15)


def test_unrecognized_tau_payload():
    inst = gen_instance(GeneratorConfig(), seed=4)
    data = inst.to_json_dict()
    data["tau"] = {"rule": "mystery"}
    with pytest.raises(ConfigError):
        Instance.from_json_dict(data)


def test_rows_digest_ignores_timing():
    rows_a = [{"seed": 1, "local": 0.5, "time_total": 0.010}]
    rows_b = [{"seed": 1, "local": 0.5, "time_total": 99.0}]
    assert rows_digest(rows_a) == rows_digest(rows_b)
    rows_c = [{"seed": 1, "local": 0.6, "time_total": 0.010}]
    assert rows_digest(rows_a) != rows_digest(rows_c)


# -- suites ------------------------------------------------------------------------


def _small_suite(**kw):
    defaults = dict(
        generators=[
            GeneratorConfig(d=1, depth=3),
            GeneratorConfig(d=2, depth=2, tau="sparse"),
        ],
        n=3,
        seed=11,
        ascent=FAST_ASCENT,
    )
    defaults.update(kw)
    return SuiteConfig(**defaults)


def test_suite_runs_clean():
    report = run_suite(_small_suite())
    assert report.ok and report.exit_code == 0
    assert len(report.rows) == 6
    # the default exponents are p = q = 2, so the L2 block must be present
    for row in report.rows:
        assert {"c1", "c2", "c3", "ratio_sufficiency", "local", "strong", "weak"} <= set(row)
        assert row["audit_clean"]
    assert report.aggregates["n_rows"] == 6
    assert report.aggregates["n_violations"] == 0
    assert report.aggregates["audit_dirty_seeds"] == []
    # each constant is <= the norm, so the sum is at most twice the norm
    assert report.aggregates["ratio_sufficiency_min"] >= 0.5 - 1e-12
    assert report.aggregates["ratio_sufficiency_max"] <= 16.0


def test_suite_digest_reproducible_across_thread_counts():
    r1 = run_suite(_small_suite(threads=1))
    r2 = run_suite(_small_suite(threads=3))
    assert r1.digest == r2.digest
    assert [  # full row equality, timing aside
        {k: v for k, v in row.items() if not k.startswith("time_")} for row in r1.rows
    ] == [{k: v for k, v in row.items() if not k.startswith("time_")} for row in r2.rows]


def test_suite_seed_changes_digest():
    r1 = run_suite(_small_suite())
    r2 = run_suite(_small_suite(seed=12))
    assert r1.digest != r2.digest


def test_empty_suite():
    report = run_suite(SuiteConfig(generators=[], n=0))
    assert report.ok and report.rows == []
    assert report.digest == rows_digest([])


def test_suite_report_files(tmp_path):
    out = tmp_path / "report"
    report = run_suite(_small_suite(out_dir=str(out)))
    lines = (out / "rows.jsonl").read_text().strip().splitlines()
    assert len(lines) == len(report.rows)
    for line in lines:
        json.loads(line)
    csv_text = (out / "aggregates.csv").read_text()
    assert csv_text.startswith("metric,value")
    assert "digest," + report.digest in csv_text.replace("\r", "")
    assert not list(out.glob("counterexample_*.json"))  # clean suite


def test_suite_off_diagonal_rows():
    cfg = SuiteConfig(
        generators=[GeneratorConfig(d=1, depth=3, p=1.5, q=2.0)],
        n=2,
        seed=0,
        ascent=FAST_ASCENT,
    )
    report = run_suite(cfg)
    assert report.ok
    for row in report.rows:
        assert "c3" not in row  # the L2 block is diagonal-only
        assert row["weak"] <= row["strong"] * (1 + 1e-12)


def test_resolve_threads(monkeypatch):
    assert SuiteConfig(threads=5).resolve_threads() == 5
    assert SuiteConfig(threads=-2).resolve_threads() == 1
    monkeypatch.setenv(THREADS_ENV, "3")
    assert SuiteConfig().resolve_threads() == 3
    monkeypatch.setenv(THREADS_ENV, "lots")
    with pytest.raises(ConfigError):
        SuiteConfig().resolve_threads()
    monkeypatch.delenv(THREADS_ENV, raising=False)
    assert SuiteConfig().resolve_threads() >= 1


# -- CLI ---------------------------------------------------------------------------


def _gen_file(tmp_path, name="inst.json", extra=()):
    path = tmp_path / name
    rc = main(["gen", "--d", "1", "--depth", "3", "--seed", "21", "--out", str(path), *extra])
    assert rc == 0
    return path


def test_cli_gen_deterministic(tmp_path):
    p1 = _gen_file(tmp_path, "a.json")
    p2 = _gen_file(tmp_path, "b.json")
    assert p1.read_bytes() == p2.read_bytes()
    inst = Instance.from_json(p1.read_text())
    assert inst.seed == 21 and inst.grid.depth == 3


def test_cli_gen_stdout(capsys):
    rc = main(["gen", "--seed", "2"])
    assert rc == 0
    payload = json.loads(capsys.readouterr().out)
    assert payload["seed"] == 2


def test_cli_apply(tmp_path, capsys):
    inst_path = _gen_file(tmp_path)
    rc = main(["apply", "--instance", str(inst_path)])
    assert rc == 0
    leaves = json.loads(capsys.readouterr().out)["leaves"]
    assert len(leaves) == 8 and all(v >= 0 for v in leaves)

    f_path = tmp_path / "f.json"
    f_path.write_text(json.dumps([1.0] * 8))
    rc = main(["apply", "--instance", str(inst_path), "--f", str(f_path)])
    assert rc == 0

    f_path.write_text(json.dumps([1.0] * 5))
    assert main(["apply", "--instance", str(inst_path), "--f", str(f_path)]) == 2


def test_cli_testing(tmp_path, capsys):
    inst_path = _gen_file(tmp_path)
    rc = main(["testing", "--instance", str(inst_path)])
    out = json.loads(capsys.readouterr().out)
    assert rc == 0
    for key in ("local", "local_dual", "global", "global_dual", "carleson", "cet"):
        assert key in out
    assert out["carleson"] ** 0.5 <= out["cet"] * (1 + 1e-8)


def test_cli_norm(tmp_path, capsys):
    inst_path = _gen_file(tmp_path)
    rc = main(["norm", "--instance", str(inst_path)])
    out = json.loads(capsys.readouterr().out)
    assert rc == 0
    assert "exact" in out  # default exponents are on the diagonal
    assert out["weak"]["value"] <= out["strong"]["value"] * (1 + 1e-8)
    assert "extremal_f" not in out["strong"]
    rc = main(["norm", "--instance", str(inst_path), "--extremals"])
    out = json.loads(capsys.readouterr().out)
    assert rc == 0 and isinstance(out["strong"]["extremal_f"], list)


def test_cli_decompose(tmp_path, capsys):
    inst_path = _gen_file(tmp_path)
    rc = main(["decompose", "--instance", str(inst_path)])
    out = json.loads(capsys.readouterr().out)
    assert rc == 0
    assert out["whitney"]["violations"] == []
    assert out["classified"]["violations"] == []
    assert out["principal"]["violations"] == []
    assert len(out["whitney"]["layers"]) >= 1


def test_cli_verify(tmp_path, capsys):
    out_dir = tmp_path / "suite"
    rc = main([
        "verify", "--d", "1", "--depth", "3", "--n", "2", "--seed", "3",
        "--threads", "2", "--out", str(out_dir),
    ])
    summary = json.loads(capsys.readouterr().out)
    assert rc == 0
    assert summary["ok"] is True and summary["n_rows"] == 2
    assert (out_dir / "rows.jsonl").exists()
    assert (out_dir / "aggregates.csv").exists()


def test_cli_config_error_exit_code(capsys):
    assert main(["gen", "--sigma", "gaussian"]) == 2
    assert "config error" in capsys.readouterr().err


def test_cli_missing_instance_file(tmp_path, capsys):
    assert main(["norm", "--instance", str(tmp_path / "nope.json")]) == 2
    assert "config error" in capsys.readouterr().err
