import json
import os
import tracemalloc
from pathlib import Path

import pytest

from qaplp import cli
from qaplp import experiments as ex
from qaplp.instance import make_uniform, read_instance
from qaplp.model import build_model
from qaplp.simplex import solve

GOLDEN = Path(__file__).parent / "golden"


def rec(name, n, lp, oracle, iters, secs, pbm=1, cls="claim-consistent", mode="no-opcost", seed=1):
    gap = None if oracle is None else oracle - lp
    return ex.ExperimentRecord(name=name, n=n, mode=mode, seed=seed, form="dual", valid_cuts=True,
                               status="optimal", pbm_count=pbm, iterations=iters, seconds=secs,
                               lp_value=lp, oracle_value=oracle, gap=gap, integral=True,
                               decomposition="decomposed", classification=cls, rng="PCG64")


FIXED = [
    *(rec(f"QAPn6{k}", 6, 20000.0 + 111 * k, 20000.0 + 111 * k, 30000 + 10 * k, 600.5 + k, seed=k)
      for k in range(1, 6)),
    rec("QAPn6x", 6, 15000.0, 15000.0, 45000, 900.25, mode="uniform", seed=None),
    rec("QAPo61", 6, 31000.5, 31000.5, 28000, 500.0, pbm=2, mode="with-opcost"),
    rec("QAPo62", 6, 29000.0, 29500.0, 27000, 480.0, cls="gap-found", mode="with-opcost", seed=2),
    rec("QAPn41", 4, 19907.0, 19907.0, 87, 0.03),
]


def regenerate():
    (GOLDEN / "table.txt").write_text(ex.format_table(FIXED))
    (GOLDEN / "table.csv").write_text(ex.format_csv(FIXED))


if os.environ.get("QAPLP_REGENERATE_GOLDEN"):
    regenerate()


class TestTable:
    def test_golden_text(self):
        assert ex.format_table(FIXED) == (GOLDEN / "table.txt").read_text()

    def test_golden_csv(self):
        assert ex.format_csv(FIXED) == (GOLDEN / "table.csv").read_text()

    def test_average_excludes_uniform(self):
        lines = ex.format_table(FIXED).splitlines()
        avg = next(line for line in lines if line.startswith("Average") and "20333" in line)
        assert "30030" in avg and "603.50" in avg

    def test_single_record(self):
        lines = ex.format_table(FIXED[-1:]).splitlines()
        data = [line for line in lines[2:]]
        assert len(data) == 2 and data[0].split()[1:7] == data[1].split()[1:7]

    def test_groups_by_n(self):
        names = [line.split()[0] for line in ex.format_table(FIXED).splitlines()[2:]]
        assert names.index("QAPn41") < names.index("QAPn61")
        assert names.count("Average") == 3

    def test_empty(self):
        with pytest.raises(ValueError):
            ex.format_table([])


class TestRecords:
    def test_json_key_order_and_roundtrip(self, tmp_path):
        r = FIXED[0]
        assert list(json.loads(r.to_json())) == [
            "name", "n", "mode", "seed", "form", "valid_cuts", "status", "pbm_count", "iterations",
            "seconds", "lp_value", "oracle_value", "gap", "integral", "decomposition", "classification", "rng"]
        path = tmp_path / "r.jsonl"
        ex.write_records(FIXED, path)
        assert ex.read_records(path) == FIXED

    def test_names(self):
        assert ex.instance_name(6, "no-opcost", 3) == "QAPn63"
        assert ex.instance_name(6, "with-opcost", 10) == "QAPo610"
        assert ex.instance_name(6, uniform=True) == "QAPn6x"

    def test_seed_lists(self):
        assert ex.parse_seeds("1..3,7") == [1, 2, 3, 7]
        with pytest.raises(ValueError):
            ex.parse_seeds("5..1")

    def test_config_validation(self):
        with pytest.raises(ValueError):
            ex.ExperimentConfig(n=1)
        with pytest.raises(ValueError):
            ex.ExperimentConfig(repetitions=0)
        with pytest.raises(ValueError):
            ex.ExperimentConfig(source="file")


class TestRuns:
    def test_uniform_n4(self):
        r = ex.run_experiment(ex.ExperimentConfig(n=4, source="uniform")).record
        assert r.name == "QAPn4x" and r.lp_value == pytest.approx(6000) and r.gap == pytest.approx(0, abs=1e-6)

    def test_reproducible_record(self):
        cfg = ex.ExperimentConfig(n=4, seed=1)
        a, b = ex.run_experiment(cfg).record, ex.run_experiment(cfg).record
        a.seconds = b.seconds = 0.0
        assert a == b and a.name == "QAPn41" and all(v is not None for v in vars(a).values())

    def test_oracle_limit(self):
        r = ex.run_experiment(ex.ExperimentConfig(n=4, seed=2, oracle_limit=3)).record
        assert r.oracle_value is None and r.gap is None

    def test_sweep(self):
        cfg = ex.ExperimentConfig(n=4)
        seeds = ex.parse_seeds("1..6")
        a, b = ex.run_sweep(cfg, seeds), ex.run_sweep(cfg, seeds)
        assert sum(a.tally.values()) == 6 and a.tally == b.tally
        assert set(a.tally) == {"claim-consistent", "gap-found", "nonintegral-vertex", "decomposition-failed"}
        with pytest.raises(ValueError):
            ex.run_sweep(ex.ExperimentConfig(n=9), [1])

    def test_replay_command(self):
        r = FIXED[7]
        assert r.replay_command() == "qaplp solve --n 6 --mode with-opcost --seed 2 --form dual"


class TestMemoryGuard:
    @pytest.mark.parametrize("n", [4, 5, 6])
    def test_estimate_within_factor_two(self, n):
        # warm-up so one-time import and lazy-load costs are not counted
        solve(build_model(make_uniform(3)), iter_limit=5)
        tracemalloc.start()
        model = build_model(make_uniform(n))
        solve(model, iter_limit=20)
        _, peak = tracemalloc.get_traced_memory()
        tracemalloc.stop()
        est = ex.estimate_memory(n)
        assert peak / 2 <= est <= 2 * peak
        assert ex.estimate_nonzeros(n) == model.A.nnz

    def test_refusal(self):
        with pytest.raises(ex.MemoryGuardError, match="exceeds"):
            ex.check_memory(7, True, 1)


class TestCli:
    def run(self, capsys, *argv):
        code = cli.main([str(a) for a in argv])
        return code, capsys.readouterr()

    def test_gen_names_and_determinism(self, tmp_path, capsys):
        code, out = self.run(capsys, "gen", "--n", 6, "--seeds", "1..5", "--out", tmp_path / "a")
        assert code == 0
        names = sorted(p.name for p in (tmp_path / "a").iterdir())
        assert names == [f"QAPn6{k}.dat" for k in range(1, 6)]
        self.run(capsys, "gen", "--n", 6, "--seeds", "1..5", "--out", tmp_path / "b")
        for name in names:
            assert (tmp_path / "a" / name).read_text() == (tmp_path / "b" / name).read_text()
        assert read_instance(tmp_path / "a" / "QAPn63.dat").meta["seed"] == 3

    def test_gen_uniform(self, tmp_path, capsys):
        self.run(capsys, "gen", "--uniform", "--n", 6, "--out", tmp_path)
        assert read_instance(tmp_path / "QAPn6x.dat") == make_uniform(6)

    def test_solve_table_audit(self, tmp_path, capsys):
        self.run(capsys, "gen", "--n", 4, "--seeds", "1", "--out", tmp_path)
        records, solution = tmp_path / "r.jsonl", tmp_path / "s.json"
        code, out = self.run(capsys, "solve", tmp_path / "QAPn41.dat", "--records", records,
                             "--solution", solution, "--verify")
        assert code == 0 and "verify:" in out.out and "ok" in out.out
        code, _ = self.run(capsys, "solve", "--uniform", "--n", 4, "--records", records)
        code, out = self.run(capsys, "table", records)
        assert "QAPn41" in out.out and "QAPn4x" in out.out
        code, out = self.run(capsys, "table", "--csv", records)
        assert out.out.startswith("Problem,PBMs")
        code, out = self.run(capsys, "audit", tmp_path / "QAPn41.dat", "--solution", solution)
        assert json.loads(out.out)["classification"] == "claim-consistent"

    def test_build_export(self, tmp_path, capsys):
        code, out = self.run(capsys, "build", "--uniform", "--n", 4, "--no-cuts")
        assert code == 0 and "177 rows, 132 columns" in out.out
        code, out = self.run(capsys, "export", "--uniform", "--n", 4, "--out", tmp_path / "m.mps")
        assert (tmp_path / "m.mps").read_text().startswith("NAME          QAPn4x")

    def test_sweep_cli(self, capsys):
        code, out = self.run(capsys, "sweep", "--n", 4, "--seeds", "1..3")
        assert json.loads(out.out)["runs"] == 3

    def test_memory_refusal(self, capsys):
        code, out = self.run(capsys, "solve", "--n", 5, "--memory-limit-mb", 1)
        assert code == 2 and "refusing" in out.err

    def test_growth(self, capsys):
        code, out = self.run(capsys, "growth", "--ns", "4..6")
        assert code == 0 and "exponent triple" in out.out
