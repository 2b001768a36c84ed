import csv
import json
import math

import pytest

from parelax.cli import (main, parse_domain, parse_function, parse_scalar)
from parelax.emit import brute_force_check, read_model
from parelax.expr import problem_from_envelope

from conftest import toy_envelope


def test_parse_scalar_literals():
    assert parse_scalar("pi") == pytest.approx(math.pi)
    assert parse_scalar("-pi/2") == pytest.approx(-math.pi / 2)
    assert parse_scalar("3pi/2") == pytest.approx(3 * math.pi / 2)
    assert parse_scalar("2pi") == pytest.approx(2 * math.pi)
    assert parse_scalar("e^-4") == pytest.approx(math.exp(-4))
    assert parse_scalar("e^2") == pytest.approx(math.exp(2))
    assert parse_scalar("e") == pytest.approx(math.e)
    assert parse_scalar("1e-3") == pytest.approx(0.001)
    assert parse_scalar("-2.5") == -2.5
    with pytest.raises(ValueError):
        parse_scalar("two")


def test_parse_domain_and_function():
    iv = parse_domain("0:pi")
    assert (iv.lo, iv.hi) == pytest.approx((0.0, math.pi))
    assert parse_function("const0").is_constant
    with pytest.raises(ValueError):
        parse_function("tan")


def test_approx_para_sin_table_cell(tmp_path, capsys):
    out = tmp_path / "sin.json"
    code = main(["approx", "para", "--fn", "sin", "--domain", "0:pi",
                 "--eps", "1", "--out", str(out)])
    assert code == 0
    assert "1 pieces" in capsys.readouterr().out
    artifact = json.loads(out.read_text())
    assert artifact["verification"]["passed"] is True
    assert len(artifact["approximation"]["pieces"]) == 1
    assert artifact["approximation"]["side"] == "under"


def test_approx_para_const0(tmp_path):
    out = tmp_path / "c.json"
    code = main(["approx", "para", "--fn", "const0", "--domain", "0:1",
                 "--eps", "0.5", "--out", str(out)])
    assert code == 0
    artifact = json.loads(out.read_text())
    assert len(artifact["approximation"]["pieces"]) == 1


def test_approx_pwl_ln_figure_cell(tmp_path):
    out = tmp_path / "ln.json"
    code = main(["approx", "pwl", "--fn", "ln", "--domain", "e^-4:e^2",
                 "--eps", "0.1", "--out", str(out)])
    assert code == 0
    artifact = json.loads(out.read_text())
    assert len(artifact["approximation"]["breakpoints"]) - 1 == 10


def test_approx_above_side(tmp_path):
    out = tmp_path / "above.json"
    code = main(["approx", "para", "--fn", "sin", "--domain", "0:pi",
                 "--eps", "0.01", "--side", "above", "--out", str(out)])
    assert code == 0
    artifact = json.loads(out.read_text())
    assert artifact["approximation"]["side"] == "over"
    assert len(artifact["approximation"]["pieces"]) == 5


def test_approx_rejects_bad_domain():
    assert main(["approx", "para", "--fn", "sin", "--domain", "zero:pi",
                 "--eps", "1"]) == 3


def test_count_table_csv(tmp_path):
    out = tmp_path / "table.csv"
    code = main(["count-table", "--fn", "sin", "--eps", "1", "--out", str(out)])
    assert code == 0
    with open(out) as handle:
        rows = list(csv.DictReader(handle))
    assert len(rows) == 12  # 6 domains x 1 eps x both sides
    cell = {(r["domain"], r["side"]): int(r["pieces"]) for r in rows}
    assert cell[("0:pi", "below")] == 1
    assert cell[("0:2pi", "above")] == 2
    assert all(r["verified"] == "1" for r in rows)


def test_count_table_deterministic(tmp_path):
    a = tmp_path / "a.csv"
    b = tmp_path / "b.csv"
    main(["count-table", "--fn", "sin", "--eps", "1", "--out", str(a)])
    main(["count-table", "--fn", "sin", "--eps", "1", "--out", str(b)])
    assert a.read_bytes() == b.read_bytes()


def test_count_table_parallel_matches_serial(tmp_path):
    serial = tmp_path / "serial.csv"
    parallel = tmp_path / "parallel.csv"
    main(["count-table", "--fn", "sin", "--eps", "0.1", "--out", str(serial)])
    main(["count-table", "--fn", "sin", "--eps", "0.1", "--jobs", "2",
          "--out", str(parallel)])
    assert serial.read_bytes() == parallel.read_bytes()


def test_approx_refuses_failing_artifact(tmp_path, monkeypatch):
    import parelax.cli as cli_mod

    def always_fail(*args, **kwargs):
        return {"passed": False, "samples": 0}

    monkeypatch.setattr(cli_mod.para, "report_to_json", lambda report: always_fail())
    out = tmp_path / "artifact.json"
    code = main(["approx", "para", "--fn", "sin", "--domain", "0:pi",
                 "--eps", "1", "--out", str(out)])
    assert code == 2
    assert not out.exists()


def test_relax_pipeline_para_and_pwl(tmp_path):
    problem_path = tmp_path / "toy.json"
    problem_path.write_text(json.dumps(toy_envelope("sin", 0.1)))
    for technique in ("para", "pwl"):
        base = tmp_path / f"model_{technique}"
        code = main(["relax", str(problem_path), "--technique", technique,
                     "--eps", "0.1", "--out-base", str(base)])
        assert code == 0
        text = (tmp_path / f"model_{technique}.lp").read_text()
        model = read_model(text, "lp-text")
        problem = problem_from_envelope(toy_envelope("sin", 0.1))
        report = brute_force_check(model, problem, grid=10**4)
        assert report.sandwich_ok
        as_json = read_model((tmp_path / f"model_{technique}.json").read_text(), "json")
        assert as_json == model


def test_relax_uses_cache(tmp_path):
    problem_path = tmp_path / "toy.json"
    problem_path.write_text(json.dumps(toy_envelope("sin", 0.1)))
    cache = tmp_path / "cache.jsonl"
    code = main(["relax", str(problem_path), "--technique", "para",
                 "--eps", "0.1", "--cache", str(cache),
                 "--out-base", str(tmp_path / "m")])
    assert code == 0
    assert cache.exists()
    assert len(cache.read_text().strip().splitlines()) >= 1


def test_relax_bad_problem_exits_4(tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({
        "variables": [{"name": "x1", "lb": 0.0, "ub": 1.0}],
        "objective": {"coeffs": {}},
        "constraints": [{"expr": "sin(x1", "rhs": 0.0}],
    }))
    code = main(["relax", str(bad), "--technique", "para", "--eps", "0.1",
                 "--out-base", str(tmp_path / "m")])
    assert code == 4


def test_relax_growth_summary(tmp_path, capsys):
    problem_path = tmp_path / "toy.json"
    problem_path.write_text(json.dumps(toy_envelope("sin", 0.1)))
    main(["relax", str(problem_path), "--technique", "pwl", "--eps", "0.1",
          "--out-base", str(tmp_path / "m")])
    out = capsys.readouterr().out
    # 8 pieces at eps=0.1 on [0, 2pi]: 15 added variables, 7 binary
    assert "(+15, 7 binary)" in out


def test_plot_data_csv_and_figure(tmp_path):
    artifact = tmp_path / "a.json"
    main(["approx", "para", "--fn", "sin", "--domain", "0:pi",
          "--eps", "0.1", "--out", str(artifact)])
    csv_path = tmp_path / "plot.csv"
    fig_path = tmp_path / "plot.svg"
    code = main(["plot-data", str(artifact), "--samples", "200",
                 "--out", str(csv_path), "--fig", str(fig_path)])
    assert code == 0
    with open(csv_path) as handle:
        rows = list(csv.reader(handle))
    header, data = rows[0], rows[1:]
    assert len(data) == 201  # samples + 1
    n_pieces = len(header) - 3
    assert n_pieces == 1  # single parabola at eps = 0.1 on [0, pi]
    for row in data[:: 40]:
        env = float(row[2])
        pieces = [float(v) for v in row[3:] if v]
        assert env == pytest.approx(max(pieces), abs=1e-12)
    assert fig_path.exists() and fig_path.stat().st_size > 0


def test_plot_data_deterministic(tmp_path):
    artifact = tmp_path / "a.json"
    main(["approx", "para", "--fn", "exp", "--domain=-1:1",
          "--eps", "0.5", "--out", str(artifact)])
    outs = []
    for tag in ("one", "two"):
        csv_path = tmp_path / f"{tag}.csv"
        fig_path = tmp_path / f"{tag}.svg"
        main(["plot-data", str(artifact), "--samples", "64",
              "--out", str(csv_path), "--fig", str(fig_path)])
        outs.append((csv_path.read_bytes(), fig_path.read_bytes()))
    assert outs[0] == outs[1]


def test_plot_data_pwl_artifact(tmp_path):
    artifact = tmp_path / "p.json"
    main(["approx", "pwl", "--fn", "sin", "--domain", "0:pi",
          "--eps", "0.1", "--out", str(artifact)])
    csv_path = tmp_path / "plot.csv"
    code = main(["plot-data", str(artifact), "--samples", "100",
                 "--out", str(csv_path)])
    assert code == 0
    with open(csv_path) as handle:
        rows = list(csv.reader(handle))
    assert len(rows) == 102  # header + samples + 1
    assert len(rows[0]) == 3 + 4  # x, f, envelope, four pieces
