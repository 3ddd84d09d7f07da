import csv
import json
from dataclasses import replace

import jsonschema
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from quadlab.cli import main
from quadlab.errors import ConfigError
from quadlab.harness.report import emit_report, report_dict, strip_timing, validate_report
from quadlab.harness.scenario import CaseConfig, dump_config, gen_case, parse_config
from quadlab.harness.suites import SUITES, TRACE_COLUMNS, CheckReport, run_suite
from quadlab.quadric import QuadricSpec


def same_scenario(s1, s2):
    assert np.array_equal(s1.spec.a, s2.spec.a)
    assert [p.z for p in s1.params] == [p.z for p in s2.params]
    assert s1.pair_seeds == s2.pair_seeds
    for x, y in ((s1.state0.V, s2.state0.V), (s1.state0.Lam, s2.state0.Lam), (s1.state0.R, s2.state0.R)):
        assert np.array_equal(x, y)
    for t in (0.0, 0.5, 1.0):
        assert np.array_equal(s1.path.u(t), s2.path.u(t))
        assert np.array_equal(s1.path.S(t), s2.path.S(t))


def test_gen_case_is_deterministic():
    cfg = CaseConfig(n=3, seed=4, z_count=2)
    s1, s2 = gen_case(cfg), gen_case(cfg)
    same_scenario(s1, s2)
    assert dump_config(s1.resolved_config()) == dump_config(s2.resolved_config())
    assert not np.array_equal(gen_case(replace(cfg, seed=5)).spec.a, s1.spec.a)


def test_explicit_replay_of_resolved_config():
    sc = gen_case(CaseConfig(n=2, seed=6, z_count=3))
    text = dump_config(sc.resolved_config())
    same_scenario(sc, gen_case(parse_config(text)))


@pytest.mark.parametrize("n", [2, 3, 4])
def test_generated_parameters_are_admissible(n):
    for seed in range(4):
        sc = gen_case(CaseConfig(n=n, seed=seed, z_count=2))
        a = sc.spec.a
        gaps = np.abs(a[:, None] - a[None, :]) + 10 * np.eye(n + 1)
        assert gaps.min() >= 0.1
        assert np.all((np.abs(a) >= 0.3 - 1e-12) & (np.abs(a) <= 2 + 1e-12))
        QuadricSpec(a)
        for p in sc.params:
            assert abs(p.z) >= 1e-3 and np.min(np.abs(a - p.z)) >= 1e-3


def test_run_suite_is_deterministic_up_to_timing():
    cfg = CaseConfig(n=2, seed=3, z_count=1, steps=200)
    docs = [strip_timing(report_dict(run_suite(gen_case(cfg), ["quadric", "hazzidakis", "commutation"]))) for _ in range(2)]
    assert docs[0] == docs[1]
    assert docs[0]["pass"]


def test_zero_path_frameflow_passes():
    report = run_suite(gen_case(CaseConfig(path="zero", steps=100)), ["frameflow"])
    assert report.checks and report.passed


def test_empty_suite_gives_empty_valid_report(tmp_path):
    out = tmp_path / "r.json"
    assert main(["verify", "--suite", "", "--report", str(out)]) == 0
    doc = json.loads(out.read_text())
    validate_report(doc)
    assert doc["checks"] == [] and doc["pass"] is True


def test_report_schema_round_trip():
    report = run_suite(gen_case(CaseConfig(z_count=1)), ["calg", "hazzidakis"])
    doc = json.loads(emit_report(report, None))
    validate_report(doc)
    assert doc["pass"] == all(c["pass"] for c in doc["checks"])
    assert {"name", "max_residual", "tol", "pass", "signs", "ms"} <= set(doc["checks"][0])
    assert len(doc["case"]["a"]) == 3 and all(len(p) == 2 for p in doc["case"]["a"])
    broken = dict(doc, checks=[{"name": "x"}])
    with pytest.raises(jsonschema.ValidationError):
        validate_report(broken)


def test_verdict_is_conjunction():
    report = run_suite(gen_case(CaseConfig(z_count=1)), ["calg"])
    assert report.passed
    report.checks[0].passed = False
    assert not report.passed and report.exit_code() == 1
    assert CheckReport({}).passed


def test_trace_files(tmp_path):
    code = main(["verify", "--suite", "frameflow,backlund", "--steps", "200", "--z-count", "1", "--trace", str(tmp_path)])
    assert code == 0
    names = sorted(p.name for p in tmp_path.iterdir())
    assert names == ["trace_base.csv", "trace_z0.csv"]
    for name in names:
        with open(tmp_path / name) as fh:
            rows = list(csv.reader(fh))
        assert rows[0] == list(TRACE_COLUMNS)
        assert len(rows) == 1 + 201
        assert float(rows[1][0]) == 0 and float(rows[-1][0]) == 1.0
    with open(tmp_path / "trace_z0.csv") as fh:
        last = list(csv.reader(fh))[-1]
    assert all(cell != "" for cell in last)


def test_r0_fault_fails_frameflow(tmp_path, capsys):
    out = tmp_path / "r.json"
    code = main(["verify", "--fault", "r0_orth", "--suite", "frameflow,hazzidakis", "--steps", "100", "--report", str(out)])
    assert code == 1
    doc = json.loads(out.read_text())
    failed = {c["name"] for c in doc["checks"] if not c["pass"]}
    assert "initial_orthogonality" in failed
    assert all(c["pass"] for c in doc["checks"] if c["suite"] == "hazzidakis")
    assert "FAIL" in capsys.readouterr().out


def test_u0_fault_reports_singularity(tmp_path):
    out = tmp_path / "r.json"
    code = main(["verify", "--fault", "u0_singular", "--suite", "backlund", "--z-count", "1", "--steps", "100", "--report", str(out)])
    assert code == 3
    doc = json.loads(out.read_text())
    assert doc["pass"] is False and doc["exit_code"] == 3
    assert any(c.get("singular") for c in doc["checks"])


@pytest.mark.parametrize(
    "text",
    ["n=9", "bogus=1", "n=abc", "just words", "a=1,2", "z=0", "fault=meltdown", "tol_alg=-1"],
)
def test_bad_configs_exit_2(tmp_path, text, capsys):
    cfg = tmp_path / "case.cfg"
    cfg.write_text(text + "\n")
    with pytest.raises(ConfigError):
        parse_config(text)
    assert main(["verify", "--config", str(cfg), "--suite", "calg"]) == 2
    assert "error" in capsys.readouterr().err


def test_usage_errors_exit_2(tmp_path):
    assert main(["verify", "--config", str(tmp_path / "missing.cfg")]) == 2
    assert main(["verify", "--suite", "nonsense"]) == 2
    with pytest.raises(SystemExit) as info:
        main(["frobnicate"])
    assert info.value.code == 2


def test_unwritable_report_path_is_nonzero(tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("")
    code = main(["verify", "--suite", "calg", "--report", str(blocker / "r.json")])
    assert code != 0


def test_gen_case_cli_round_trip(tmp_path):
    out = tmp_path / "case.cfg"
    assert main(["gen-case", "--n", "3", "--seed", "2", "--z-count", "2", "--out", str(out)]) == 0
    cfg = parse_config(out.read_text())
    assert cfg.n == 3 and cfg.seed == 2 and len(cfg.a) == 4 and len(cfg.z) == 2
    report = tmp_path / "r.json"
    assert main(["verify", "--config", str(out), "--suite", "hazzidakis", "--report", str(report)]) == 0
    doc = json.loads(report.read_text())
    assert doc["case"]["a"] == [[x.real, x.imag] for x in cfg.a]


def test_sweep_z_merges_in_order(tmp_path):
    out = tmp_path / "r.json"
    assert main(["sweep-z", "--count", "2", "--suite", "commutation", "--steps", "200", "--report", str(out)]) == 0
    names = [c["name"] for c in json.loads(out.read_text())["checks"]]
    assert any("[z0]" in s for s in names) and any("[z1]" in s for s in names)
    assert names.index(next(s for s in names if "[z0]" in s)) < names.index(next(s for s in names if "[z1]" in s))


def test_all_suites_are_registered():
    assert set(SUITES) == {"calg", "quadric", "frameflow", "backlund", "hazzidakis", "commutation"}


complex_list = st.lists(
    st.complex_numbers(min_magnitude=0.01, max_magnitude=10, allow_nan=False, allow_infinity=False),
    min_size=1,
    max_size=4,
)


@settings(max_examples=50)
@given(st.integers(2, 4), st.integers(0, 2**31 - 1), complex_list, st.floats(1e-14, 1e-3))
def test_config_dump_parse_round_trip(n, seed, zs, tol):
    cfg = CaseConfig(n=n, seed=seed, z=tuple(zs), tol_alg=tol)
    assert parse_config(dump_config(cfg)) == cfg
