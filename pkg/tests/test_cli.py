import csv
import math

import pytest

from d2dpolicy import cli
from d2dpolicy.channel import dbm_to_watts
from d2dpolicy.cli import (
    CSV_FIELDS,
    RECIPES,
    ConfigError,
    emit_csv,
    format_csv,
    main,
    parse_config,
    read_csv,
    run_experiment,
    sim_config,
    sweep_points,
)
from d2dpolicy.sim import aggregate, run_sessions
from d2dpolicy.strategies import StrategyKind

SMALL = "n_topologies = 3\nslots_per_topology = 300\nseed = 4\n"


def test_defaults():
    s = parse_config("")
    assert (s.R, s.L, s.gamma, s.T_d) == (250.0, 100.0, 0.99, 0.8)
    assert s.radio.alpha == 4.0 and s.radio.A == 1.0
    assert s.radio.N0 == pytest.approx(dbm_to_watts(-90.0))
    assert s.radio.rho == pytest.approx(dbm_to_watts(-90.0))
    assert s.radio.theta == 1.0 and s.radio.I_ic == 0.0
    assert (s.n_topologies, s.slots_per_topology) == (500, 10_000)


def test_theta_db():
    assert parse_config("theta_db = 3").radio.theta == pytest.approx(10 ** 0.3)


def test_lists_and_comments():
    s = parse_config("W = 3, 1, 3  # dupes collapse\nstrategies = awa-s, GEO_S\nxi_db = 0,10\nladder = -10:4")
    assert s.W_values == (1, 3)
    assert s.strategies == (StrategyKind.AWA_S, StrategyKind.GEO_S)
    assert s.xi_db_values == (0.0, 10.0)
    assert s.ladder == (-10.0, 4)


@pytest.mark.parametrize("text,key,line", [
    ("gamma = abc", "gamma", 1),
    ("\nW = 1, x", "W", 2),
    ("seed = 1\nbogus = 3", "bogus", 2),
    ("gamma = 1.5", "gamma", 1),
    ("seed = 1\nseed = 2", "seed", 2),
    ("ladder = 3", "ladder", 1),
    ("strategies = FOO", "strategies", 1),
    ("out = /nonexistent/dir/x.csv", "out", 1),
])
def test_config_errors_name_key_and_line(text, key, line):
    with pytest.raises(ConfigError) as ei:
        parse_config(text)
    assert ei.value.key == key and ei.value.line == line
    assert f"line {line}" in str(ei.value)


def test_malformed_line():
    with pytest.raises(ConfigError) as ei:
        parse_config("just words")
    assert ei.value.line == 1


def test_sweep_points_blank_axes():
    s = parse_config("strategies = AWA_S, GEO_S, NO_D2D, AWAM_S\nW = 1, 2\nxi_db = 0, 10")
    pts = sweep_points(s)
    assert len(pts) == 4 + 2 + 1 + 2
    no = [p for p in pts if p.kind is StrategyKind.NO_D2D][0]
    assert no.W is None and no.xi_db is None
    assert all(p.xi_db is None for p in pts if p.kind in (StrategyKind.GEO_S, StrategyKind.AWAM_S))


def test_single_point_equals_direct_simulation():
    s = parse_config(SMALL + "strategies = AWA_S\nW = 2\nxi_db = 10")
    row = run_experiment(s)[0]
    pt = sweep_points(s)[0]
    direct = aggregate(run_sessions(sim_config(s, pt)))
    assert row["omega_U"] == direct.omega_U and row["omega_S"] == direct.omega_S


def test_csv_shape_and_round_trip(tmp_path):
    s = parse_config(SMALL)
    rows = run_experiment(s)
    path = tmp_path / "t.csv"
    emit_csv(rows, path)
    text = path.read_text()
    assert text.endswith("\n")
    table = list(csv.reader(text.splitlines()))
    assert tuple(table[0]) == CSV_FIELDS
    assert all(len(r) == 11 for r in table)
    back = read_csv(path)
    for a, b in zip(rows, back):
        for k, v in a.items():
            assert b[k] == v
        assert abs(b["omega_sum"] - (b["omega_U"] + b["omega_S"])) <= 1e-12
        assert all(math.isfinite(b[f]) for f in CSV_FIELDS[3:9])


def test_error_rows_and_column(monkeypatch):
    real = cli.run_sessions

    def flaky(cfg, threads=1):
        if cfg.strategy.kind is StrategyKind.GEO_S:
            raise ArithmeticError("solver gave up")
        return real(cfg, threads)

    monkeypatch.setattr(cli, "run_sessions", flaky)
    rows = run_experiment(parse_config(SMALL))
    assert [("error" in r) for r in rows] == [False, True, False]
    text = format_csv(rows)
    assert text.splitlines()[0].endswith(",error")
    assert "solver gave up" in text
    with pytest.raises(ValueError):
        format_csv([])


def test_main_writes_identical_bytes(tmp_path):
    cfg = tmp_path / "c.txt"
    cfg.write_text(SMALL)
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    assert main(["--config", str(cfg), "--out", str(a), "--threads", "2"]) == 0
    assert main(["--config", str(cfg), "--out", str(b)]) == 0
    assert a.read_bytes() == b.read_bytes()
    c = tmp_path / "c.csv"
    assert main(["--config", str(cfg), "--out", str(c), "--seed", "5"]) == 0
    assert c.read_bytes() != a.read_bytes()


def test_main_stdout(tmp_path, capsys):
    cfg = tmp_path / "c.txt"
    cfg.write_text(SMALL + "strategies = NO_D2D")
    assert main(["--config", str(cfg)]) == 0
    out = capsys.readouterr().out
    assert out.splitlines()[0] == ",".join(CSV_FIELDS)
    assert out.splitlines()[1].startswith("NO_D2D,,,")


def test_main_exit_codes(tmp_path, monkeypatch):
    assert main(["--config", str(tmp_path / "missing.txt")]) == 2
    bad = tmp_path / "bad.txt"
    bad.write_text("gamma = 2")
    assert main(["--config", str(bad)]) == 2
    cfg = tmp_path / "c.txt"
    cfg.write_text(SMALL)
    assert main(["--config", str(cfg), "--out", "/nonexistent/x.csv"]) == 2
    assert main(["--config", str(cfg), "--threads", "0"]) == 2

    def boom(cfg, threads=1):
        raise RuntimeError("no")

    monkeypatch.setattr(cli, "run_sessions", boom)
    assert main(["--config", str(cfg), "--out", str(tmp_path / "o.csv")]) == 1


def test_recipes_cover_axes():
    assert set(RECIPES) == {"fig4", "fig5", "fig6", "fig7", "fig8", "fig9"}
    for name, r in RECIPES.items():
        assert len(r["W_values"]) == 10
    assert RECIPES["fig4"]["xi_db_values"] == tuple(float(x) for x in range(0, 21, 2))
    assert StrategyKind.AWAM_S in RECIPES["fig9"]["strategies"]


def test_recipe_respects_config_axes(tmp_path, monkeypatch):
    seen = []
    monkeypatch.setattr(cli, "run_experiment", lambda spec, threads=1: seen.append(spec) or [
        {"strategy": "NO_D2D", "W": None, "xi_db": None, "slots": 1, "seed": 0}])
    cfg = tmp_path / "c.txt"
    cfg.write_text("W = 4")
    main(["--config", str(cfg), "--recipe", "fig5", "--scale", "paper", "--out", str(tmp_path / "o.csv")])
    spec = seen[0]
    assert spec.W_values == (4,)
    assert spec.strategies == (StrategyKind.AWA_S,)
    assert (spec.n_topologies, spec.slots_per_topology) == (5000, 1000)
