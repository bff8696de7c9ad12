import json
from pathlib import Path

import numpy as np
import pytest

from thomlab.cli import main
from thomlab.flow import integrate_gradient, write_trajectory_csv
from thomlab.potential import radial_power

QUARTIC_RUN = """
[scenario]
kind = "gradient"
label = "quartic decay"
seed = 0

[potential]
radial = {{ n = 2, power = 4, coef = 0.25 }}
{negate}

[run]
y0 = [0.06, 0.08]
t_end = {t_end}

[analyses.rate]
[analyses.classify]

{checks}
"""

GOOD_CHECKS = """
[[checks]]
name = "order"
path = "rate.ell_star"
op = "rel"
target = 4.0
rtol = 0.001

[[checks]]
name = "prefactor"
path = "rate.alpha0"
op = "rel"
target = 0.25
rtol = 0.02

[[checks]]
name = "kind"
path = "classify.kind"
op = "eq"
target = "slow"
"""


def write_scenario(tmp_path, text, name="scenario.toml"):
    p = tmp_path / name
    p.write_text(text)
    return p


def quartic_toml(t_end=1e4, checks=GOOD_CHECKS, negate=""):
    return QUARTIC_RUN.format(t_end=t_end, checks=checks, negate=negate)


def test_run_gradient_scenario_artifacts(tmp_path, capsys):
    cfg = write_scenario(tmp_path, quartic_toml())
    out = tmp_path / "out"
    rc = main(["run", "--config", str(cfg), "--out", str(out)])
    assert rc == 0
    stdout = capsys.readouterr().out
    assert stdout.count("PASS") == 3 and "FAIL" not in stdout

    payload = json.loads((out / "results.json").read_text())
    for key in ("label", "kind", "seed", "version", "config_sha256", "results", "checks", "passed"):
        assert key in payload
    assert payload["passed"] is True
    assert payload["kind"] == "gradient"
    assert len(payload["config_sha256"]) == 64

    assert (out / "trajectory.csv").exists()
    header = (out / "trajectory.csv").read_text().splitlines()[0]
    assert header.startswith("t,")
    for fig in ("decay.svg", "secant.svg"):
        blob = (out / fig).read_text()
        assert "<svg" in blob[:400]


def test_run_is_bit_reproducible(tmp_path):
    cfg = write_scenario(tmp_path, quartic_toml())
    out1, out2 = tmp_path / "a", tmp_path / "b"
    assert main(["run", "--config", str(cfg), "--out", str(out1)]) == 0
    assert main(["run", "--config", str(cfg), "--out", str(out2)]) == 0
    assert (out1 / "results.json").read_bytes() == (out2 / "results.json").read_bytes()
    assert (out1 / "trajectory.csv").read_bytes() == (out2 / "trajectory.csv").read_bytes()
    assert (out1 / "decay.svg").read_bytes() == (out2 / "decay.svg").read_bytes()


def test_failing_check_exits_one(tmp_path, capsys):
    bad = GOOD_CHECKS.replace("target = 4.0", "target = 3.0")
    cfg = write_scenario(tmp_path, quartic_toml(checks=bad))
    rc = main(["run", "--config", str(cfg), "--out", str(tmp_path / "out")])
    assert rc == 1
    assert "FAIL" in capsys.readouterr().out
    payload = json.loads((tmp_path / "out" / "results.json").read_text())
    assert payload["passed"] is False


def test_malformed_configs_exit_two(tmp_path, capsys):
    broken = write_scenario(tmp_path, "[scenario\nkind = ", name="broken.toml")
    assert main(["run", "--config", str(broken), "--out", str(tmp_path / "o1")]) == 2

    nokind = write_scenario(tmp_path, "[scenario]\nlabel = 'x'\n", name="nokind.toml")
    assert main(["run", "--config", str(nokind), "--out", str(tmp_path / "o2")]) == 2

    badkind = write_scenario(
        tmp_path, "[scenario]\nkind = 'nonsense'\n", name="badkind.toml"
    )
    assert main(["run", "--config", str(badkind), "--out", str(tmp_path / "o3")]) == 2

    assert main(["run", "--config", str(tmp_path / "missing.toml")]) == 2
    err = capsys.readouterr().err
    assert "config error" in err


def test_numerical_failure_exits_three(tmp_path, capsys):
    cfg = write_scenario(tmp_path, quartic_toml(negate="negate = true", t_end=1e4))
    rc = main(["run", "--config", str(cfg), "--out", str(tmp_path / "out")])
    assert rc == 3
    assert "numerical failure" in capsys.readouterr().err


SWEEP_NEGATE = """
[scenario]
kind = "sweep"
label = "sign sweep"

[potential]
radial = { n = 2, power = 4, coef = 0.25 }

[run]
y0 = [0.06, 0.08]
t_end = 200.0

[analyses.rate]

[sweep]
kind = "gradient"

[sweep.grid]
"potential.negate" = [false, true]

[sweep.extract]
ell_star = "rate.ell_star"
"""


def test_sweep_records_rows_in_grid_order_with_failures(tmp_path):
    cfg = write_scenario(tmp_path, SWEEP_NEGATE)
    out = tmp_path / "out"
    assert main(["sweep", "--config", str(cfg), "--out", str(out)]) == 0
    lines = (out / "sweep.csv").read_text().splitlines()
    assert lines[0] == "potential.negate,status,ell_star,error"
    assert len(lines) == 3
    row_ok = lines[1].split(",")
    assert row_ok[0] == "False" and row_ok[1] == "ok"
    assert float(row_ok[2]) == pytest.approx(4.0, abs=1e-9)
    row_err = lines[2].split(",")
    assert row_err[0] == "True" and row_err[1] == "error"
    assert "BlowUp" in lines[2]
    # per-point artifacts for the successful run only
    assert (out / "point_000" / "results.json").exists()


def test_sweep_empty_grid_writes_header_only(tmp_path):
    text = SWEEP_NEGATE.replace('"potential.negate" = [false, true]\n', "")
    cfg = write_scenario(tmp_path, text)
    out = tmp_path / "out"
    assert main(["sweep", "--config", str(cfg), "--out", str(out)]) == 0
    lines = (out / "sweep.csv").read_text().splitlines()
    assert len(lines) == 1


SWEEP_NUMERIC = """
[scenario]
kind = "sweep"

[potential]
radial = { n = 2, power = 4, coef = 0.25 }

[run]
y0 = [0.06, 0.08]

[analyses.rate]

[sweep]
kind = "gradient"

[sweep.grid]
"run.t_end" = [300.0, 3000.0]

[sweep.extract]
alpha0 = "rate.alpha0"
"""


def test_sweep_numeric_axis_renders_plot(tmp_path):
    cfg = write_scenario(tmp_path, SWEEP_NUMERIC)
    out = tmp_path / "out"
    assert main(["sweep", "--config", str(cfg), "--out", str(out)]) == 0
    assert (out / "sweep.svg").exists()
    lines = (out / "sweep.csv").read_text().splitlines()
    assert [l.split(",")[0] for l in lines[1:]] == ["300.0", "3000.0"]
    for line in lines[1:]:
        assert float(line.split(",")[2]) == pytest.approx(0.25, rel=0.05)


PDE_EVOLVE = """
[scenario]
kind = "pde"
label = "even harmonic decay"

[pde]
mode = "evolve"
K = 16
dt = 1e-3
t_end = 4.0

[pde.initial.cos]
2 = 0.05

[[checks]]
name = "fast decay"
path = "pde.log_slope"
op = "abs"
target = -3.0
atol = 0.1
"""


def test_pde_evolve_scenario(tmp_path):
    cfg = write_scenario(tmp_path, PDE_EVOLVE)
    out = tmp_path / "out"
    assert main(["run", "--config", str(cfg), "--out", str(out)]) == 0
    for art in ("series.csv", "state_final.csv", "groups.svg", "decay.svg", "results.json"):
        assert (out / art).exists()


REDUCE_SCENARIO = """
[scenario]
kind = "reduce"

[reduce]
model = "cubic"
K = 32
radii = [0.02, 0.04, 0.08]
directions = 16

[[checks]]
name = "order"
path = "reduce.p"
op = "eq"
target = 4

[[checks]]
name = "verdict"
path = "reduce.verdict"
op = "eq"
target = "positive"
"""


def test_reduce_scenario_writes_model_report(tmp_path):
    cfg = write_scenario(tmp_path, REDUCE_SCENARIO)
    out = tmp_path / "out"
    assert main(["run", "--config", str(cfg), "--out", str(out)]) == 0
    report = json.loads((out / "reduced_model.json").read_text())
    assert report["p"] == 4
    assert report["verdict"] == "positive"
    assert report["best_value"] > 0


HEAVYBALL_RUN = """
[scenario]
kind = "heavyball"

[potential]
radial = { n = 2, power = 4, coef = -0.25 }

[run]
y0 = [0.05, 0.0]
m = -1.0
v0 = "quasistatic"
t_end = 1e4

[analyses.rate]
"""


def test_heavyball_scenario_with_quasistatic_start(tmp_path):
    cfg = write_scenario(tmp_path, HEAVYBALL_RUN)
    out = tmp_path / "out"
    assert main(["run", "--config", str(cfg), "--out", str(out)]) == 0
    payload = json.loads((out / "results.json").read_text())
    assert payload["results"]["rate"]["ell_star"] == pytest.approx(4.0, abs=1e-6)


ANALYZE_SCENARIO = """
[scenario]
kind = "analyze"

[analyze]
trajectory = "traj.csv"

[analyses.rate]
[analyses.verify]
"""


def test_analyze_scenario_reads_saved_trajectory(tmp_path):
    traj = integrate_gradient(radial_power(2, 4, 0.25), [0.18, 0.24], t_end=1e5)
    write_trajectory_csv(traj, tmp_path / "traj.csv")
    cfg = write_scenario(tmp_path, ANALYZE_SCENARIO)
    out = tmp_path / "out"
    assert main(["run", "--config", str(cfg), "--out", str(out)]) == 0
    payload = json.loads((out / "results.json").read_text())
    assert payload["results"]["rate"]["ell_star"] == pytest.approx(4.0, abs=1e-6)
    assert payload["results"]["verify"]["passed"] is True


def test_direct_subcommands_round_trip(tmp_path, capsys):
    rc = main(
        ["critical-points", "--builtin", "bubble_sheet", "--n-starts", "64",
         "--out", str(tmp_path / "cp.json")]
    )
    assert rc == 0
    blob = json.loads((tmp_path / "cp.json").read_text())
    assert blob["verdict"] == "positive"
    assert len(blob["critical_points"]) == 6
    capsys.readouterr()

    traj = integrate_gradient(radial_power(2, 4, 0.25), [0.06, 0.08], t_end=1e4)
    write_trajectory_csv(traj, tmp_path / "traj.csv")
    rc = main(["fit-rate", "--trajectory", str(tmp_path / "traj.csv"),
               "--out", str(tmp_path / "fit.json")])
    assert rc == 0
    fit = json.loads((tmp_path / "fit.json").read_text())
    assert fit["ell_star"] == pytest.approx(4.0, abs=1e-9)
    capsys.readouterr()

    rc = main(["classify", "--trajectory", str(tmp_path / "traj.csv")])
    assert rc == 0
    assert '"slow"' in capsys.readouterr().out


def test_version_flag(capsys):
    with pytest.raises(SystemExit) as exc:
        main(["--version"])
    assert exc.value.code == 0
