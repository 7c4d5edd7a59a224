import csv
import io

import pytest

from empst import Config, PrioritySearchTree
from empst.cli import main
from empst.workload import ParseError, format_op, generate_ops, parse_workload, run_ops, shrink


def run_cli(tmp_path, text, *flags):
    wl = tmp_path / "w.txt"
    wl.write_text(text)
    out = tmp_path / "out.txt"
    code = main(["run", str(wl), "--out", str(out), *flags])
    return code, out.read_text() if out.exists() else ""


def test_report_lists_inserted_point(tmp_path):
    code, out = run_cli(tmp_path, "I 1 2\nR 0 5 0\n")
    assert code == 0
    assert out.splitlines()[0] == "R 0 5 0 -> 1: 1,2"


def test_topk_after_delete_is_empty(tmp_path):
    code, out = run_cli(tmp_path, "I 1 2\nD 1 2\nT 0 5 3\n", "--oracle")
    assert code == 0
    assert out.splitlines()[0] == "T 0 5 3 -> 0:"


def test_check_and_stats_lines(tmp_path):
    code, out = run_cli(tmp_path, "# comment\nI 1 2\nCHECK\nSTATS\n", "--check-every", "1")
    lines = out.splitlines()
    assert code == 0 and lines[0] == "CHECK ok" and lines[1].startswith("STATS reads=")
    assert "checks=4" in lines[-1]  # three cadence checks plus the explicit one


@pytest.mark.parametrize("text", ["X 1 2\n", "I 1\n", "R 5 1 0\n", "T 0 1 -1\n", "I a b\n"])
def test_parse_errors_exit_2(tmp_path, text, capsys):
    code, _ = run_cli(tmp_path, "I 0 0\n" + text)
    assert code == 2
    assert "line 2" in capsys.readouterr().err


def test_parse_error_carries_line_number():
    with pytest.raises(ParseError) as e:
        parse_workload(["I 1 2", "", "Q"])
    assert e.value.lineno == 3


def test_bad_config_exits_2(tmp_path):
    assert run_cli(tmp_path, "I 1 2\n", "--epsilon", "3/4")[0] == 2
    assert run_cli(tmp_path, "I 1 2\n", "--epsilon", "x")[0] == 2
    assert run_cli(tmp_path, "I 1 2\n", "-B", "2")[0] == 2


def test_divergence_exits_1_with_small_trace(tmp_path, monkeypatch, capsys):
    real = PrioritySearchTree.report

    def lossy(self, x1, x2, y=float("-inf")):
        res = real(self, x1, x2, y)
        return [p for p in res if p != (7, 7)]

    monkeypatch.setattr(PrioritySearchTree, "report", lossy)
    ops = generate_ops(300, seed=1, coord=64, B=16)
    text = "".join(format_op(op) + "\n" for op in ops) + "I 7 7\nR 0 64 0\n"
    code, _ = run_cli(tmp_path, text, "--oracle")
    err = capsys.readouterr().err
    assert code == 1
    assert "divergence" in err
    trace = [line.strip() for line in err.splitlines() if line.startswith("  ")]
    assert trace == ["I 7 7", "R 0 64 0"]


def test_shrink_returns_passing_trace_unchanged():
    ops = parse_workload("I 1 2\nR 0 5 0\n")
    assert shrink(ops, Config(B=16)) == ops


def test_same_seed_same_output(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    assert main(["gen", "--ops", "2000", "--seed", "4", "--out", str(a)]) == 0
    assert main(["gen", "--ops", "2000", "--seed", "4", "--out", str(b)]) == 0
    assert a.read_bytes() == b.read_bytes()
    r1, r2 = tmp_path / "r1", tmp_path / "r2"
    assert main(["run", str(a), "--oracle", "--out", str(r1)]) == 0
    assert main(["run", str(a), "--oracle", "--out", str(r2)]) == 0
    assert r1.read_bytes() == r2.read_bytes()


def test_bench_csv(tmp_path):
    out = tmp_path / "b.csv"
    args = ["bench", "update-scaling", "--sizes", "8:9", "--block-sizes", "8,16", "--out", str(out)]
    assert main(args) == 0
    first = out.read_bytes()
    rows = list(csv.DictReader(io.StringIO(first.decode())))
    assert list(rows[0]) == ["mode", "B", "epsilon", "N", "ops", "reads", "writes", "ios_per_op"]
    assert [(r["B"], r["N"]) for r in rows] == [("8", "256"), ("8", "512"), ("16", "256"), ("16", "512")]
    assert main(args) == 0
    assert out.read_bytes() == first


@pytest.mark.parametrize("mode", ["query-scaling", "construction-scaling"])
def test_bench_other_modes(tmp_path, mode):
    out = tmp_path / "b.csv"
    assert main(["bench", mode, "--sizes", "10:10", "--queries", "5", "--out", str(out)]) == 0
    rows = list(csv.DictReader(out.open()))
    assert len(rows) == 1 and float(rows[0]["ios_per_op"]) > 0


def test_save_then_load(tmp_path):
    blk = tmp_path / "t.blk"
    code, _ = run_cli(tmp_path, "I 1 2\nI 3 4\nI 5 1\n", "--save", str(blk))
    assert code == 0
    code, out = run_cli(tmp_path, "R 0 9 2\n", "--load", str(blk))
    assert code == 0 and out.splitlines()[0] == "R 0 9 2 -> 2: 1,2 3,4"
    code, _ = run_cli(tmp_path, "R 0 9 2\n", "--load", str(tmp_path / "w.txt"))
    assert code == 2


def test_ten_thousand_ops_in_lockstep(tmp_path):
    wl = tmp_path / "w.txt"
    assert main(["gen", "--ops", "10000", "--seed", "9", "--coord", "100000", "--out", str(wl)]) == 0
    out = tmp_path / "r.txt"
    assert main(["run", str(wl), "--oracle", "--check-every", "500", "--out", str(out)]) == 0
    assert "ops=10000" in out.read_text().splitlines()[-1]


def test_run_ops_api():
    ops = generate_ops(500, seed=3, coord=1000)
    t, rep = run_ops(ops, Config(B=8), oracle=True, check_every=50)
    assert rep.ops == 500 and rep.checks == 10
    assert rep.updates + rep.queries == 500
