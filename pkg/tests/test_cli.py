import csv
import io
import json
from contextlib import redirect_stdout

import pytest

from trgppo.bandit_dynamics import BanditSpec, ordering_delta_threshold
from trgppo.cli import config_hash, main, parse_seeds
from trgppo.clip_solver import eval_g


def run(argv):
    buf = io.StringIO()
    with redirect_stdout(buf):
        code = main(argv)
    return code, buf.getvalue()


def values(text):
    out = {}
    for line in text.splitlines():
        if " = " in line:
            k, v = line.split(" = ")
            out[k] = float(v)
    return out


@pytest.fixture(autouse=True)
def table_cache(tmp_path, monkeypatch):
    monkeypatch.setenv("TRGPPO_TABLE_CACHE", str(tmp_path / "tables"))


class TestSolve:
    def test_recovers_ppo_bound(self):
        code, out = run(["solve", "--p", "0.2", "--delta", repr(eval_g(0.2, 1.2))])
        assert code == 0
        assert values(out)["u"] == pytest.approx(1.2, abs=1e-9)

    def test_tiny_budget(self):
        code, out = run(["solve", "--p", "0.5", "--delta", "1e-12", "--epsilon", "0.2"])
        v = values(out)
        assert code == 0
        assert v["l"] == pytest.approx(1.0, abs=1e-5) and v["u"] == pytest.approx(1.0, abs=1e-5)
        assert (v["l_truncated"], v["u_truncated"]) == (0.8, 1.2)

    def test_bad_probability_is_usage_error(self):
        assert run(["solve", "--p", "1.5", "--delta", "0.1"])[0] == 1

    def test_missing_flags(self):
        assert run(["solve", "--p", "0.3"])[0] == 1

    def test_unparseable_flag(self, capsys):
        with pytest.raises(SystemExit) as exc:
            main(["solve", "--p", "abc"])
        assert exc.value.code == 1


class TestTable:
    def test_build_and_query(self, tmp_path):
        code, out = run(["table-build", "--delta", "0.05", "--grid", "128", "--text",
                         "--out", str(tmp_path)])
        assert code == 0
        assert list(tmp_path.glob("*.csv"))
        code, out = run(["table-query", "--delta", "0.05", "--grid", "128", "--p", "0.3",
                         "--out", str(tmp_path)])
        row = list(csv.DictReader(io.StringIO(out)))[0]
        assert eval_g(0.3, float(row["upper"])) == pytest.approx(0.05, abs=1e-10)

    def test_query_rejects_bad_p(self):
        assert run(["table-query", "--delta", "0.05", "--p", "0"])[0] == 1


class TestBanditExact:
    def test_example1_rows(self):
        code, out = run(["bandit-exact", "--iterations", "3"])
        rows = list(csv.DictReader(io.StringIO(out)))
        assert code == 0
        assert float(rows[0]["E_ppo"]) == 0.8
        assert float(rows[1]["E_ppo"]) == pytest.approx(0.824, abs=1e-12)
        # default budget satisfies the ordering condition at the start
        for r in rows:
            assert float(r["E_trgppo"]) <= float(r["E_ppo"]) + 1e-12

    def test_horizon_zero(self):
        _, out = run(["bandit-exact", "--iterations", "0"])
        rows = list(csv.DictReader(io.StringIO(out)))
        assert len(rows) == 1 and float(rows[0]["E_ppo"]) == pytest.approx(1 - 0.2)

    def test_config_file(self, tmp_path):
        cfg = tmp_path / "b.cfg"
        cfg.write_text("rewards = 1.0, 0.4, -1.0\ninit = 0.3, 0.5, 0.2\nhorizon = 2\n")
        out_csv = tmp_path / "e.csv"
        assert run(["bandit-exact", "--config", str(cfg), "--out", str(out_csv)])[0] == 0
        rows = list(csv.DictReader(open(out_csv)))
        assert len(rows) == 3 and float(rows[0]["E_ppo"]) == pytest.approx(0.7)
        want = 0.5 * ordering_delta_threshold([0.3, 0.5, 0.2], BanditSpec((1.0, 0.4, -1.0)), 0.2)
        assert float(rows[0]["delta"]) == pytest.approx(want)

    def test_budget_exceeded_is_usage_error(self):
        assert run(["bandit-exact", "--iterations", "40"])[0] == 1


class TestRuns:
    def test_report_on_empty_directory(self, tmp_path):
        code, out = run(["report", "--out", str(tmp_path / "nothing")])
        assert code == 0
        assert out.splitlines() == ["kind\tenv\tmethod\truns\tfailed\tmean_final_return"
                                    "\tmean_entropy\tmean_max_kl"]

    def test_train_layout_and_byte_identical_rerun(self, tmp_path):
        argv = ["train", "--env", "chain", "--method", "PPO,TRGPPO", "--seeds", "2",
                "--iterations", "2"]
        assert run(argv + ["--out", str(tmp_path / "a")])[0] == 0
        assert run(argv + ["--out", str(tmp_path / "b")])[0] == 0
        run_dirs = sorted((tmp_path / "a" / "runs").iterdir())
        assert len(run_dirs) == 4
        for d in run_dirs:
            manifest = json.loads((d / "manifest.json").read_text())
            assert manifest["status"] == "ok"
            assert manifest["config_hash"] in d.name
            for name in ("manifest.json", "returns.csv", "diagnostics.csv"):
                twin = tmp_path / "b" / "runs" / d.name / name
                assert (d / name).read_bytes() == twin.read_bytes()
        summary = list(csv.DictReader(open(tmp_path / "a" / "reports" / "summary.csv")))
        assert [r["method"] for r in summary] == ["PPO", "TRGPPO"]
        assert (tmp_path / "a" / "reports" / "summary.csv").read_bytes() == \
            (tmp_path / "b" / "reports" / "summary.csv").read_bytes()

    def test_report_aggregates_existing_runs(self, tmp_path):
        run(["train", "--env", "chain", "--method", "PPO", "--seeds", "1", "--iterations", "2",
             "--out", str(tmp_path)])
        code, out = run(["report", "--out", str(tmp_path)])
        assert code == 0 and "PPO" in out

    def test_train_config_file(self, tmp_path):
        cfg = tmp_path / "run.cfg"
        cfg.write_text("[run]\nenv = bandit\nmethod = PPO-entropy\nseeds = 1\niterations = 2\n"
                       "learning_rate = 0.001\n")
        assert run(["train", "--config", str(cfg), "--out", str(tmp_path / "o")])[0] == 0
        manifest = json.loads(next((tmp_path / "o" / "runs").glob("*/manifest.json")).read_text())
        assert manifest["config"]["learning_rate"] == 0.001
        assert manifest["variant"]["entropy_coef"] == 0.01

    def test_unknown_config_key(self, tmp_path):
        cfg = tmp_path / "bad.cfg"
        cfg.write_text("colour = blue\n")
        assert run(["train", "--config", str(cfg), "--out", str(tmp_path / "o")])[0] == 1

    def test_unknown_env_and_method(self, tmp_path):
        assert run(["train", "--env", "pong", "--out", str(tmp_path)])[0] == 1
        assert run(["train", "--method", "SAC", "--out", str(tmp_path)])[0] == 1

    def test_bandit_train_trap_table(self, tmp_path):
        code, out = run(["bandit-train", "--env", "bandit", "--seeds", "4", "--iterations", "20",
                         "--out", str(tmp_path)])
        assert code == 0
        rows = list(csv.DictReader(open(tmp_path / "reports" / "trap_rates.csv")))
        assert [r["method"] for r in rows] == ["PPO", "TRGPPO"]
        assert all(r["total"] == "4" for r in rows)
        assert len(list((tmp_path / "runs").iterdir())) == 8


def test_parse_seeds():
    assert parse_seeds("3") == [0, 1, 2]
    assert parse_seeds("4,9") == [4, 9]
    assert parse_seeds("5-7") == [5, 6, 7]
    with pytest.raises(Exception):
        parse_seeds("x")


def test_config_hash_stable():
    assert config_hash({"a": 1, "b": [1, 2]}) == config_hash({"b": [1, 2], "a": 1})
    assert config_hash({"a": 1}) != config_hash({"a": 2})
