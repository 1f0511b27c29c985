import csv
import json

import pytest

from busgame import cli, oracle
from busgame.equilibria import EquilibriumProfile, solve_noncoop
from busgame.game import GameConfig

GAME = {"D": 10, "T": 1, "v_min": 1, "v_max": 4, "epsilon": 0.05}


def _write(tmp_path, data, name="exp.json"):
    path = tmp_path / name
    path.write_text(json.dumps(data))
    return str(path)


def _run(tmp_path, command, data, *extra):
    out = tmp_path / "out"
    code = cli.main([command, "--config", _write(tmp_path, data), "--out", str(out), *extra])
    return code, out


def _csv(path):
    with open(path, newline="") as fh:
        return list(csv.reader(fh))


def test_solve_json_matches_library(tmp_path):
    code, out = _run(tmp_path, "solve", {"game": GAME, "x0": 0, "y0": 1})
    assert code == 0
    data = json.loads((out / "profile.json").read_text())
    ref = solve_noncoop(0, 1, GameConfig.from_dict(GAME))
    assert EquilibriumProfile.from_dict(data) == ref
    assert data["case_tag"] == "NC-b"


def test_solve_strategy_density(tmp_path):
    code, out = _run(tmp_path, "solve", {"game": GAME, "d0": 1}, "--format", "csv")
    assert code == 0
    rows = _csv(out / "strategy_density.csv")
    assert rows[0] == ["player", "kind", "speed_lo", "speed_hi", "mass"]
    xs = [r for r in rows[1:] if r[0] == "x"]
    assert xs[0] == ["x", "atom", "1.0", "1.0", "0.8"]
    bins = [r for r in xs if r[1] == "bin"]
    assert len(bins) == 40
    assert float(bins[0][2]) == 2.0 and float(bins[-1][3]) == 4.0
    assert sum(float(r[4]) for r in xs) == pytest.approx(1.0)


def test_bare_game_config_is_accepted(tmp_path):
    code, out = _run(tmp_path, "solve", GAME, "--d0", "5")
    assert code == 0
    assert json.loads((out / "profile.json").read_text())["case_tag"] == "NC-d"


def test_verify_passes_and_reports(tmp_path, capsys):
    code, out = _run(tmp_path, "verify", {"game": GAME, "x0": 0, "y0": 0, "grid_n": 501})
    assert code == 0
    rep = json.loads((out / "report.json").read_text())
    assert rep["verdict"] == "pass" and rep["case_tag"] == "NC-a"
    assert "verify: NC-a pass" in capsys.readouterr().out


def test_verify_failure_exits_3(tmp_path, monkeypatch):
    real = oracle.verify_epsilon_equilibrium

    def strict(*args, **kw):
        rep = real(*args, **kw)
        return oracle.VerificationReport(**{**rep.to_dict(), "verdict": "fail"})

    monkeypatch.setattr(oracle, "verify_epsilon_equilibrium", strict)
    code, out = _run(tmp_path, "verify", {"game": GAME, "d0": 1, "grid_n": 101})
    assert code == 3
    assert json.loads((out / "report.json").read_text())["verdict"] == "fail"


def test_verify_coop_tie_case_fails(tmp_path):
    code, _ = _run(tmp_path, "verify", {"game": GAME, "d0": 1, "mode": "coop", "grid_n": 101})
    assert code == 3


@pytest.mark.parametrize("game, field", [
    ({"D": 10, "T": 1, "v_min": 1, "v_max": 6}, "T, v_max"),
    ({"D": 10, "T": 1, "v_min": 1}, "v_max"),
    ({"D": -1, "T": 1, "v_min": 1, "v_max": 4}, "D"),
])
def test_malformed_config_exits_2(tmp_path, capsys, game, field):
    code, _ = _run(tmp_path, "solve", {"game": game, "d0": 1})
    assert code == 2
    err = capsys.readouterr().err
    assert err.startswith("error: game") and field in err


def test_malformed_experiment_exits_2(tmp_path, capsys):
    assert _run(tmp_path, "solve", {"game": GAME, "horizon": 0})[0] == 2
    assert "horizon" in capsys.readouterr().err
    assert _run(tmp_path, "survival", {"game": GAME})[0] == 2
    assert "d0" in capsys.readouterr().err
    path = tmp_path / "broken.json"
    path.write_text("{not json")
    assert cli.main(["solve", "--config", str(path)]) == 2
    assert cli.main(["solve", "--config", str(tmp_path / "missing.json")]) == 2


def test_infeasible_epsilon_exits_2(tmp_path, capsys):
    game = dict(GAME, epsilon=1.0)
    assert _run(tmp_path, "solve", {"game": game, "d0": 1})[0] == 2
    assert "epsilon" in capsys.readouterr().err.lower()


def test_survival_csv_is_reproducible(tmp_path):
    data = {"game": GAME, "d0": 1, "n_runs": 2000, "k_max": 5}
    code, out = _run(tmp_path, "survival", data, "--format", "csv", "--seed", "7")
    assert code == 0
    first = (out / "survival.csv").read_bytes()
    rows = _csv(out / "survival.csv")
    assert rows[0] == ["k", "estimate", "std_error", "bound"]
    assert len(rows) == 7 and rows[1][:2] == ["0", "1.0"]
    _run(tmp_path, "survival", data, "--format", "csv", "--seed", "7")
    assert (out / "survival.csv").read_bytes() == first
    _run(tmp_path, "survival", data, "--format", "csv", "--seed", "8")
    assert (out / "survival.csv").read_bytes() != first


def test_simulate_coop_trace(tmp_path):
    data = {"game": GAME, "d0": 1, "mode": "coop", "horizon": 3}
    code, out = _run(tmp_path, "simulate", data, "--format", "csv")
    assert code == 0
    rows = _csv(out / "traces.csv")
    col = rows[0].index("d_n")
    assert [float(r[col]) for r in rows[1:]] == [1.0, 4.0, 5.0, 5.0]


def test_simulate_constant_gap_above_escape(tmp_path):
    data = {"game": GAME, "d0": 4, "horizon": 20, "n_runs": 3}
    code, out = _run(tmp_path, "simulate", data)
    assert code == 0
    traces = json.loads((out / "traces.json").read_text())["traces"]
    assert len(traces) == 3
    for tr in traces:
        assert tr["N"] == 0 and set(tr["d_sequence"]) == {4.0}


def test_boundary_and_noisy_outputs(tmp_path):
    code, out = _run(tmp_path, "boundary", {"game": GAME, "n_runs": 500}, "--format", "csv")
    assert code == 0
    assert _csv(out / "boundary.csv")[0] == ["statistic", "estimate", "std_error", "theory"]
    assert _csv(out / "boundary_pmf.csv")[0] == ["M", "probability"]
    assert _run(tmp_path, "boundary", {"game": GAME, "d0": 1, "n_runs": 10})[0] == 2
    noisy = {"game": dict(GAME, sigma=0.1), "d0": 1, "n_runs": 50, "horizon": 50}
    code, out = _run(tmp_path, "noisy", noisy)
    assert code == 0
    res = json.loads((out / "noisy.json").read_text())
    assert res["estimate"]["frac_reached"] == 1.0


def test_sweep_writes_one_row_per_value(tmp_path):
    data = {"game": GAME, "d0": 1, "horizon": 5,
            "sweep": {"parameter": "sigma", "values": [0.0, 0.1], "command": "simulate"}}
    code, out = _run(tmp_path, "sweep", data, "--format", "csv")
    assert code == 0
    rows = _csv(out / "sweep.csv")
    assert rows[0][0] == "sigma" and len(rows) == 3
    assert (out / "sigma=0.1" / "traces.csv").exists()
    bad = dict(data, sweep={"parameter": "colour", "values": [1]})
    assert _run(tmp_path, "sweep", bad)[0] == 2


def test_no_temporary_files_left(tmp_path):
    for cmd, extra in [("solve", {}), ("verify", {"grid_n": 51}), ("simulate", {"horizon": 4})]:
        _run(tmp_path, cmd, {"game": GAME, "d0": 1, **extra})
    assert not [p for p in (tmp_path / "out").rglob("*") if p.name.endswith(".tmp")]
