import json
import subprocess
import sys
from pathlib import Path

import pytest

from riskshare.cli import run
from riskshare.problemfile import check_schema

FIXTURES = Path(__file__).resolve().parent.parent / "fixtures"
WORKED = str(FIXTURES / "overlap_ceilings.json")
LOSS = '{"a": 4, "b": 5, "c": 6}'


def _run(capsys, *argv):
    code = run(list(argv))
    captured = capsys.readouterr()
    doc = json.loads(captured.out) if captured.out else None
    return code, doc, captured.err


def test_validate_worked_fixture(capsys):
    code, doc, err = _run(capsys, "validate", WORKED)
    assert code == 0
    assert doc["status"] == "ok"
    assert doc["outputs"]["nsa"]["verdict"] == "pi(0)=0"
    assert doc["outputs"]["star"]["passed"]
    check_schema(doc, "result")


def test_lambda_worked_fixture(capsys):
    code, doc, err = _run(capsys, "lambda", WORKED, "--loss", LOSS)
    assert code == 0
    out = doc["outputs"]
    assert out["value"]["value"] == pytest.approx(8.0, abs=1e-9)
    assert out["value"]["tol"] == 1e-8
    assert out["payoff"]["value"] == {"a": 3.0, "b": 2.0, "c": 3.0}
    total = {k: sum(v["value"][k] for v in out["allocation"].values())
             for k in ("a", "b", "c")}
    assert total == {"a": 4.0, "b": 5.0, "c": 6.0}
    check_schema(doc, "result")


def test_rho_of_zero_on_normalized_agent(capsys):
    code, doc, err = _run(capsys, "rho", str(FIXTURES / "entropic_pair.json"),
                     "--agent", "1", "--loss", "{}")
    assert code == 0
    assert abs(doc["outputs"]["value"]["value"]) <= 1e-9


def test_rho_outside_support_is_domain_exit(capsys):
    code, _, err = _run(capsys, "rho", WORKED, "--agent", "1",
                   "--loss", '{"c": 1}')
    assert code == 2
    assert "support" in err


def test_agent_index_out_of_range(capsys):
    code, _, err = _run(capsys, "rho", WORKED, "--agent", "7", "--loss", "{}")
    assert code == 1


def test_arbitrage_fixture_fails_validation(capsys):
    code, doc, err = _run(capsys, "validate",
                     str(FIXTURES / "arbitrage_triple.json"))
    assert code == 1
    assert doc["status"] == "failed_validation"
    assert doc["outputs"]["nsa"]["verdict"] == "pi(0)=-inf"
    assert doc["outputs"]["nsa"]["dim_v"] == 3
    check_schema(doc, "result")


def test_lambda_on_arbitrage_is_domain_exit(capsys):
    code, _, err = _run(capsys, "lambda", str(FIXTURES / "arbitrage_triple.json"),
                   "--loss", "{}")
    assert code == 2
    assert "arbitrage" in err


def test_grid_refusal_is_domain_exit(capsys):
    code, _, err = _run(capsys, "oracle", WORKED, "--check", "lambda",
                   "--loss", LOSS, "--grid-step", "1e-5")
    assert code == 2
    assert "coarsen" in err


def test_reruns_are_byte_identical(tmp_path, capsys):
    paths = [tmp_path / "one.json", tmp_path / "two.json"]
    for p in paths:
        assert run(["equilibrium", WORKED, "--output", str(p)]) == 0
    assert capsys.readouterr().out == ""
    assert paths[0].read_bytes() == paths[1].read_bytes()


def test_equilibrium_outputs(capsys):
    code, doc, err = _run(capsys, "equilibrium", WORKED)
    assert code == 0
    out = doc["outputs"]
    assert out["value"]["value"] == pytest.approx(8.0)
    assert out["transfers"]["north"]["value"] == pytest.approx(-3.0)
    assert out["transfers"]["south"]["value"] == pytest.approx(3.0)
    assert out["verification"]["passed"]
    check_schema(doc, "result")


def test_equilibrium_endowment_flag_overrides(capsys):
    inline = '[{"a": 1, "b": 2, "c": 1}, {"a": 3, "b": 3, "c": 5}]'
    code, doc, err = _run(capsys, "equilibrium", WORKED, "--endowments", inline)
    assert code == 0
    assert doc["outputs"]["value"]["value"] == pytest.approx(15.0 - 7.0)


def test_equilibrium_without_endowments(capsys, tmp_path):
    doc = json.loads(Path(WORKED).read_text())
    del doc["endowments"]
    p = tmp_path / "bare.json"
    p.write_text(json.dumps(doc))
    code, _, err = _run(capsys, "equilibrium", str(p))
    assert code == 1
    assert "endowments" in err


def test_pareto_zeta_preserves_total_risk(capsys):
    _, base, err = _run(capsys, "pareto", WORKED, "--loss", LOSS)
    code, shifted, err = _run(capsys, "pareto", WORKED, "--loss", LOSS,
                         "--zeta", "0.5")
    assert code == 0
    risks = lambda d: {k: v["value"]
                       for k, v in d["outputs"]["agent_risks"].items()}
    assert risks(base) != risks(shifted)
    assert sum(risks(shifted).values()) == pytest.approx(8.0, abs=1e-8)


def test_split_command(capsys):
    code, doc, err = _run(capsys, "split", str(FIXTURES / "split_entropic.json"),
                     "--loss", '{"low": 0, "high": 2}')
    assert code == 0
    out = doc["outputs"]
    assert out["n_star"] == 2
    assert out["bound_used"] and out["bound_functional"]["passed"]
    assert out["lower_bound"]["value"] == pytest.approx(1.0)
    assert [pt["n"] for pt in out["sweep"]] == [1, 2, 3, 4]
    check_schema(doc, "result")


def test_split_needs_split_section(capsys):
    code, _, err = _run(capsys, "split", WORKED, "--loss", LOSS)
    assert code == 1
    assert "split section" in err


@pytest.mark.parametrize("check", ["lambda", "pareto", "subgradient"])
def test_oracle_checks_pass_on_worked_fixture(capsys, check):
    code, doc, err = _run(capsys, "oracle", WORKED, "--check", check,
                     "--loss", LOSS, "--grid-margin", "3")
    assert code == 0
    check_schema(doc, "result")
    if check == "lambda":
        out = doc["outputs"]
        assert out["agree"]
        assert out["bracket"]["low"]["value"] <= 8.0 \
            <= out["bracket"]["high"]["value"] + 1e-9
    if check == "pareto":
        assert doc["outputs"]["pareto"] and doc["outputs"]["witness"] is None
    if check == "subgradient":
        assert doc["outputs"]["mode"] == "smooth"
        assert doc["outputs"]["passed"]


def test_usage_errors_exit_one(capsys):
    assert run(["rho", WORKED]) == 1          # missing --agent/--loss
    assert run(["no-such-command", WORKED]) == 1
    assert run(["--help"]) == 0


def test_malformed_loss_flag(capsys):
    code, _, err = _run(capsys, "lambda", WORKED, "--loss", '{"a": oops')
    assert code == 1
    code, _, err = _run(capsys, "lambda", WORKED, "--loss", '{"zz": 1}')
    assert code == 1
    code, _, err = _run(capsys, "lambda", WORKED, "--loss", '[1, 2, 3]')
    assert code == 1


def test_console_script_entry_point():
    proc = subprocess.run(
        [sys.executable, "-m", "riskshare.cli"],
        capture_output=True, text=True)
    assert proc.returncode == 1


def test_validate_seed_changes_probes_not_verdict(capsys):
    code0, doc0, err = _run(capsys, "validate", WORKED, "--seed", "0")
    code1, doc1, err = _run(capsys, "validate", WORKED, "--seed", "123")
    assert code0 == code1 == 0
    assert doc0["outputs"]["nsa"] == doc1["outputs"]["nsa"]
    assert doc0["flags"]["seed"] == 0 and doc1["flags"]["seed"] == 123
