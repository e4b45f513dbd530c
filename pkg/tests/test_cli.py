import csv
import io
import math

import pytest

from mgkern.cli import RunConfig, main, parse_args, parse_t_grid


def run(capsys, *argv):
    code = main(list(argv))
    out = capsys.readouterr()
    return code, out.out, out.err


def rows(text):
    return list(csv.DictReader(io.StringIO(text)))


def test_t_grid_parsing():
    ts = parse_t_grid("0.01:1:log3")
    assert ts == pytest.approx([0.01, 0.1, 1.0])
    assert parse_t_grid("0.2:1:lin5") == pytest.approx([0.2, 0.4, 0.6, 0.8, 1.0])
    assert parse_t_grid("0.1,0.2") == [0.1, 0.2]
    with pytest.raises(ValueError):
        parse_t_grid("1:0.1:log3")


def test_parse_args_builds_config():
    cfg = parse_args(["be-constant", "--graph", "star:3", "--t-grid", "0.1,0.2", "--eps", "1e-10", "--threads", "2"])
    assert isinstance(cfg, RunConfig)
    assert cfg.command == "be-constant" and cfg.graph == "star:3"
    assert cfg.t_values == (0.1, 0.2) and cfg.eps == 1e-10 and cfg.threads == 2
    assert parse_args(["ratio-sup", "--graph", "spider:3", "--t", "0.5", "--grid-n", "4"]).grid_n == 4


@pytest.mark.parametrize(
    "argv,needle",
    [
        (["kernel", "--graph", "interval:1", "--t", "0", "--x", "e:0.1", "--y", "e:0.2"], "times must be positive"),
        (["kernel", "--graph", "interval:1", "--t", "1", "--eps", "-1", "--x", "e:0.1", "--y", "e:0.2"], "eps must be positive"),
        (["ratio-sup", "--graph", "spider:3", "--t", "0.1", "--grid-n", "0"], "grid density"),
    ],
)
def test_invalid_config_values_exit_nonzero(capsys, argv, needle):
    code, out, err = run(capsys, *argv)
    assert code == 1 and out == ""
    assert err.startswith("error=ValueError") and needle in err


def test_kernel_command(capsys, tmp_path):
    gfile = tmp_path / "star.g"
    gfile.write_text("vertex c\nvertex a\nvertex b\nedge e0 c a 1\nedge e1 c b 1\n")
    code, out, _ = run(capsys, "kernel", "--graph", str(gfile), "--t", "0.1", "--x", "e0:0.3", "--y", "e1:0.5")
    assert code == 0
    r = rows(out)
    assert [x["kind"] for x in r] == ["heat", "form", "grad"]
    assert all(float(x["tolerance"]) == 1e-12 for x in r)
    # two legs glued at a vertex form an interval of length 2
    assert float(r[0]["value"]) > 0


def test_spider_oracle_command(capsys):
    code, out, _ = run(capsys, "spider-oracle", "--legs", "4", "--t", "0.05", "--pairs", "5", "--seed", "3")
    assert code == 0
    body, last = out.rsplit("\n", 2)[0], out.strip().splitlines()[-1]
    assert last.startswith("max_abs_diff=")
    assert float(last.split("=")[1]) < 1e-10
    assert len(rows(body)) == 10


def test_output_is_deterministic(capsys):
    a = run(capsys, "spider-oracle", "--legs", "3", "--t", "0.2", "--pairs", "4", "--seed", "9")[1]
    b = run(capsys, "spider-oracle", "--legs", "3", "--t", "0.2", "--pairs", "4", "--seed", "9")[1]
    assert a == b


def test_spectrum_command(capsys):
    code, out, _ = run(capsys, "spectrum", "--graph", "star:3", "--lambda-max", "25")
    r = rows(out)
    assert [int(x["multiplicity"]) for x in r] == [1, 2, 1, 2]
    assert float(r[1]["lambda"]) == pytest.approx(math.pi**2 / 4, abs=1e-12)


def test_be_constant_command(capsys):
    code, out, _ = run(capsys, "be-constant", "--graph", "spider:3", "--t-grid", "0.01:0.05:log2")
    assert code == 0
    last = out.strip().splitlines()[-1]
    assert last.startswith("C1=")
    value = float(last[3:].split("±")[0])
    assert value == pytest.approx(2.0, abs=1e-3)


def test_be_constant_with_user_function(capsys):
    code, out, _ = run(capsys, "be-constant", "--graph", "interval:1", "--t-grid", "0.1:0.1:log1",
                       "--trig", "e:0,1,3.141592653589793")
    assert code == 0
    assert float(out.strip().splitlines()[-1][3:].split("±")[0]) <= 1.0


def test_discontinuous_user_function_rejected(capsys):
    code, _, err = run(capsys, "be-constant", "--graph", "star:3", "--t-grid", "0.1,0.2", "--poly", "e0:1", "--poly", "e1:0")
    assert code == 1
    assert err.startswith("error=")


def test_config_file(capsys, tmp_path):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("graph = spider:2\nt_grid = 0.05,0.1  # two times\n")
    code, out, _ = run(capsys, "be-constant", "--config", str(cfg))
    assert code == 0
    assert len(rows(out.rsplit("\n", 2)[0])) == 2
    # explicit flags win over the file
    code, out, _ = run(capsys, "be-constant", "--config", str(cfg), "--t-grid", "0.05")
    assert len(rows(out.rsplit("\n", 2)[0])) == 1


def test_out_flag(capsys, tmp_path):
    dest = tmp_path / "res.csv"
    code, out, _ = run(capsys, "cheeger", "--graph", "interval:1", "--out", str(dest))
    assert code == 0 and out == ""
    r = rows(dest.read_text())
    assert float(r[0]["h"]) == pytest.approx(2.0)


def test_duality_command(capsys):
    assert run(capsys, "duality", "--graph", "circles:3")[1].strip() == "orientation=yes, harmonic_dim=3"
    assert run(capsys, "duality", "--graph", "star:3")[1].strip() == "orientation=no, harmonic_dim=0"


def test_perimeter_and_buser_and_bm(capsys):
    code, out, _ = run(capsys, "perimeter", "--graph", "star:3", "--interval", "e0:0.2:0.5")
    r = rows(out)
    assert int(r[0]["combinatorial"]) == 2
    assert float(r[0]["heat_estimate"]) == pytest.approx(2.0, abs=1e-3)
    code, out, _ = run(capsys, "buser", "--graph", "interval:1")
    assert rows(out)[0]["holds"] == "yes"
    code, out, _ = run(capsys, "bm-check", "--K", "0", "--t", "0.9", "--scale", "1", "--atoms", "8")
    assert float(rows(out)[0]["margin"]) == pytest.approx(0.1 * math.log(2), abs=1e-12)


def test_ratio_sup_command(capsys):
    code, out, _ = run(capsys, "ratio-sup", "--graph", "spider:3", "--t", "0.05", "--grid-n", "8")
    assert float(rows(out)[0]["ratio_sup"]) == pytest.approx(2.0, abs=1e-3)


def test_errors(capsys, tmp_path):
    code, _, err = run(capsys, "kernel", "--graph", str(tmp_path / "missing.g"), "--t", "1", "--x", "e:0", "--y", "e:0")
    assert code == 1 and err.startswith("error=")
    code, _, err = run(capsys, "kernel", "--graph", "interval:1", "--t", "1", "--x", "e:3", "--y", "e:0")
    assert code == 1 and "error=" in err
    bad = tmp_path / "bad.g"
    bad.write_text("vertex a\nedge e a b -1\n")
    code, _, err = run(capsys, "spectrum", "--graph", str(bad))
    assert code == 1


def test_unknown_command_exits_two(capsys):
    with pytest.raises(SystemExit) as exc:
        main(["frobnicate"])
    assert exc.value.code == 2
    assert "usage" in capsys.readouterr().err
