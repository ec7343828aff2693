import json

import numpy as np
import pytest
from click.testing import CliRunner

from mvsde.cli import main, parse_event
from mvsde.errors import InvalidArgumentError
from mvsde.rate import EventSpec


@pytest.fixture
def runner():
    return CliRunner()


def test_parse_event_grammar(tmp_path):
    ev = parse_event("pin:1.5,2.5:0.1", dim=2)
    assert ev.kind == "pin_terminal" and ev.tol == 0.1
    np.testing.assert_allclose(ev.target, [1.5, 2.5])
    half = parse_event("half:1.0:3.0", dim=1)
    assert half.kind == "halfspace" and half.level == 3.0
    for bad in ("pin:1.0", "blob:1:2", "pin:1,2:0.1", "pin:abc:0.1"):
        with pytest.raises(InvalidArgumentError):
            parse_event(bad, dim=1)


def test_models_and_version(runner):
    out = runner.invoke(main, ["models"])
    assert out.exit_code == 0
    assert "example11" in out.output
    assert runner.invoke(main, ["--version"]).exit_code == 0


def test_simulate_writes_manifest(runner, tmp_path):
    report = tmp_path / "sim.json"
    out = runner.invoke(
        main,
        [
            "simulate", "--eps", "0.05", "--particles", "100", "--steps", "50",
            "--seed", "4", "--out", str(report),
        ],
    )
    assert out.exit_code == 0, out.output
    data = json.loads(report.read_text())
    assert data["manifest"]["command"] == "simulate"
    assert data["manifest"]["seed"] == 4
    assert "terminal_mean" in data["summary"]


def test_unknown_model_exits_2(runner):
    out = runner.invoke(main, ["simulate", "--model", "nope"])
    assert out.exit_code == 2
    assert "error:" in out.output


def test_skeleton_limit_and_path_out(runner, tmp_path):
    csv = tmp_path / "limit.csv"
    out = runner.invoke(
        main, ["skeleton", "--kind", "limit", "--steps", "200", "--path-out", str(csv)]
    )
    assert out.exit_code == 0, out.output
    assert "2.718281828" in out.output
    assert csv.read_text().startswith("t,x0")


def test_rate_pin_and_control_roundtrip(runner, tmp_path):
    ctl_file = tmp_path / "ctl.json"
    out = runner.invoke(
        main,
        [
            "rate", "--kind", "ldp", "--event", "pin:3.218281828:0.001",
            "--steps", "200", "--control-out", str(ctl_file),
        ],
    )
    assert out.exit_code == 0, out.output
    assert "rate value: 0.1245" in out.output
    # feed the optimized control back through the skeleton solver
    out2 = runner.invoke(
        main,
        ["skeleton", "--kind", "ldp", "--steps", "200", "--control", str(ctl_file)],
    )
    assert out2.exit_code == 0, out2.output
    assert "3.217" in out2.output  # lands on the pin ball boundary


def test_rate_mdp_value(runner):
    out = runner.invoke(
        main, ["rate", "--kind", "mdp", "--event", "pin:1.0:0.0", "--steps", "400"]
    )
    assert out.exit_code == 0, out.output
    assert "0.1565177" in out.output


def test_rate_unreachable_exits_4(runner):
    # pure jump paths cannot go below -T: the halfspace -x >= 2 is out of reach
    out = runner.invoke(
        main,
        [
            "rate", "--model", "pure_jump", "--event", "half:-1.0:2.0",
            "--steps", "60", "--cells", "6", "--starts", "2",
        ],
    )
    assert out.exit_code == 4, out.output
    assert "unreachable" in out.output


def test_rate_mdp_rejects_path_events(runner, tmp_path):
    ref = tmp_path / "ref.csv"
    ref.write_text("t,x0\n0.0,0.0\n1.0,0.0\n")
    out = runner.invoke(
        main, ["rate", "--kind", "mdp", "--event", f"path:{ref}:0.1", "--steps", "50"]
    )
    assert out.exit_code == 2, out.output


def test_verify_ldp_gate_and_jobs_stability(runner, tmp_path):
    args = [
        "verify-ldp", "--event", "half:1.0:3.218281828", "--eps-list", "0.3,0.2",
        "--particles", "2000", "--steps", "100", "--seed", "3",
        "--target", "0.125", "--tol", "0.5",
    ]
    r1 = tmp_path / "r1.json"
    r2 = tmp_path / "r2.json"
    out1 = runner.invoke(main, args + ["--jobs", "1", "--out", str(r1)])
    assert out1.exit_code == 0, out1.output
    assert "PASS" in out1.output
    out2 = runner.invoke(main, args + ["--jobs", "2", "--out", str(r2)])
    assert out2.exit_code == 0
    assert json.loads(r1.read_text()) == json.loads(r2.read_text())
    # absurd target with a tight tolerance trips the gate
    out3 = runner.invoke(
        main,
        args[:-4] + ["--target", "9.0", "--tol", "0.001"],
    )
    assert out3.exit_code == 4
    assert "FAIL" in out3.output


def test_verify_limit_quick(runner):
    out = runner.invoke(
        main,
        [
            "verify-limit", "--eps-list", "0.2,0.05", "--particles", "300",
            "--steps", "80", "--jobs", "2",
        ],
    )
    assert out.exit_code == 0, out.output
    assert "slope" in out.output


def test_bad_event_grammar_exits_2(runner):
    out = runner.invoke(main, ["rate", "--event", "pin:1.0"])
    assert out.exit_code == 2
