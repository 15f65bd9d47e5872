import csv
import json

import numpy as np
import pytest

from gwcrp import cli, io
from gwcrp.errors import DataError
from gwcrp.graph import SpatialGraph, lattice_graph
from gwcrp.pipeline import auto_cutpoints
from gwcrp.sampler import GwcrpConfig, run_chain
from gwcrp.simulation import SimulationDesign, generate_dataset
from gwcrp.survival import HazardPartition, ParamVector, RegionSummary

FAST = ["--iters", "200", "--burnin", "50"]


def toy_design(n=3, lam=(0.05,), cuts=(), m=40):
    g = SpatialGraph.from_edges([(f"R{i}", f"R{i + 1}") for i in range(n - 1)])
    return SimulationDesign(g, [0] * n, ({"beta": [0.8], "lambda": list(lam)},), subjects_per_region=m,
                            partition=HazardPartition(cuts), name="toy")


@pytest.fixture
def toy(tmp_path):
    d = toy_design()
    io.write_survival_csv(tmp_path / "data.csv", generate_dataset(d, 1))
    io.write_graph(tmp_path / "graph.txt", d.graph)
    return tmp_path


def run(*args):
    return cli.main([str(a) for a in args])


def read_csv(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


class TestSurvivalCsv:
    def test_round_trip(self, tmp_path):
        data = generate_dataset(toy_design(), 3)
        io.write_survival_csv(tmp_path / "d.csv", data)
        back = io.read_survival_csv(tmp_path / "d.csv")
        assert back.region_ids == data.region_ids
        assert np.array_equal(back.time, data.time) and np.array_equal(back.X, data.X)
        assert np.array_equal(back.event, data.event)

    @pytest.mark.parametrize("body,msg", [
        ("region,time,event\na,1,2\n", "event must be 0 or 1"),
        ("region,time,event\na,-1,1\n", "time must be"),
        ("region,time,event,x1\na,1,1\n", "expected 4 fields"),
        ("region,time,event,x1\na,1,1,abc\n", ":2:"),
        ("id,time,event\n", "header"),
        ("", "empty"),
        ("region,time,event\n", "no records"),
    ])
    def test_errors(self, tmp_path, body, msg):
        (tmp_path / "bad.csv").write_text(body)
        with pytest.raises(DataError, match=msg):
            io.read_survival_csv(tmp_path / "bad.csv")

    def test_no_covariates_and_blank_lines(self, tmp_path):
        (tmp_path / "d.csv").write_text("region,time,event\nb,1.5,1\n\na,2,0\n")
        d = io.read_survival_csv(tmp_path / "d.csv")
        assert d.p == 0 and d.region_ids == ("b", "a")


class TestGraphFile:
    def test_round_trip_with_isolated(self, tmp_path):
        g = SpatialGraph.from_edges([("a", "b"), ("b", "c"), ("z",)])
        io.write_graph(tmp_path / "g.txt", g)
        back = io.read_graph(tmp_path / "g.txt")
        assert set(back.region_ids) == {"a", "b", "c", "z"}
        assert back.distances[back.index("a"), back.index("c")] == 2
        assert np.isinf(back.distances[back.index("a"), back.index("z")])

    def test_comments_and_errors(self, tmp_path):
        (tmp_path / "g.txt").write_text("# header\na b  # trailing\n\nb,c\n")
        assert io.read_graph(tmp_path / "g.txt").n == 3
        (tmp_path / "bad.txt").write_text("a b c\n")
        with pytest.raises(DataError, match="one or two"):
            io.read_graph(tmp_path / "bad.txt")
        (tmp_path / "loop.txt").write_text("a a\n")
        with pytest.raises(DataError, match="self-loop"):
            io.read_graph(tmp_path / "loop.txt")


class TestDesignFile:
    def test_round_trip(self, tmp_path):
        d = toy_design(lam=(0.1, 0.05), cuts=(2.0,))
        io.write_design(tmp_path / "d.json", d)
        back = io.read_design(tmp_path / "d.json")
        assert back.partition == d.partition and back.cluster_params == d.cluster_params

    def test_schema_violation(self, tmp_path):
        (tmp_path / "d.json").write_text(json.dumps({"edges": [], "true_labels": [1]}))
        with pytest.raises(DataError, match="schema"):
            io.read_design(tmp_path / "d.json")


def test_trace_round_trip(tmp_path):
    sums = [RegionSummary(np.ones(1), ParamVector([], [x]), np.eye(1) * 0.2, 5) for x in (-1, 0, 2)]
    tr = run_chain(sums, np.ones((3, 3)), GwcrpConfig(iterations=30, burn_in=10))
    io.write_trace_ndjson(tmp_path / "t.ndjson", tr)
    iters, labels, k, ll = io.read_trace_ndjson(tmp_path / "t.ndjson")
    assert iters.tolist() == list(range(11, 31))
    assert np.array_equal(labels, tr.labels) and np.array_equal(k, tr.k) and ll is None


def test_atomic_write_leaves_no_temp(tmp_path):
    io.write_json(tmp_path / "a.json", {"x": np.float64(1.5), "y": np.arange(2), "z": float("inf")})
    assert [p.name for p in tmp_path.iterdir()] == ["a.json"]
    assert json.loads((tmp_path / "a.json").read_text()) == {"x": 1.5, "y": [0, 1], "z": None}


class TestAutoCutpoints:
    def test_single_piece(self):
        assert auto_cutpoints(generate_dataset(toy_design(), 0), 1) == ()

    def test_anchor_is_median_event_time(self):
        data = generate_dataset(toy_design(m=200), 0)
        cuts = auto_cutpoints(data, 3)
        ev = data.time[data.event]
        assert cuts[-1] == pytest.approx(np.median(ev))
        assert cuts[0] == pytest.approx(np.quantile(ev[ev < cuts[-1]], 0.5))

    def test_fails_on_empty_piece(self):
        with pytest.raises(DataError):
            auto_cutpoints(generate_dataset(toy_design(m=3), 0), 8)


class TestCli:
    def test_fit_toy(self, toy):
        assert run("fit", "--data", toy / "data.csv", "--graph", toy / "graph.txt", "--cutpoints", "",
                   "--h", 0.5, "--out", toy / "out", *FAST) == 0
        s = json.loads((toy / "out" / "summary.json").read_text())
        io.validate(s, "summary")
        assert s["k_hat"] in (1, 2, 3) and s["J"] == 1 and s["h"] == 0.5
        rows = read_csv(toy / "out" / "cluster_map.csv")
        assert [r["region"] for r in rows] == ["R0", "R1", "R2"]
        assert (toy / "out" / "k_trace.png").stat().st_size > 0
        lines = (toy / "out" / "trace.ndjson").read_text().splitlines()
        assert len(lines) == 150 and set(json.loads(lines[0])) == {"iter", "labels", "k", "loglik_per_region"}

    def test_fit_deterministic(self, toy):
        args = ["fit", "--data", toy / "data.csv", "--graph", toy / "graph.txt", "--auto-cutpoints", 1,
                "--seed", 5, "--no-plots", *FAST]
        assert run(*args, "--out", toy / "a") == 0
        assert run(*args, "--out", toy / "b") == 0
        for f in ("summary.json", "trace.ndjson", "cluster_map.csv", "estimates.csv"):
            assert (toy / "a" / f).read_bytes() == (toy / "b" / f).read_bytes()

    def test_empty_piece_exit_code(self, toy, capsys):
        d = toy_design()
        data = generate_dataset(d, 1)
        # push every event of R1 below 0.5 out of the first piece
        keep = ~((data.region == 1) & (data.time < 0.5) & data.event)
        sub = type(data)(data.region[keep], data.time[keep], data.event[keep], data.X[keep], data.region_ids)
        io.write_survival_csv(toy / "gap.csv", sub)
        code = run("fit", "--data", toy / "gap.csv", "--graph", toy / "graph.txt", "--cutpoints", "0.5",
                   "--out", toy / "o", *FAST)
        assert code == 2
        assert "R1" in capsys.readouterr().err

    def test_missing_file_exit_code(self, toy):
        assert run("fit", "--data", toy / "nope.csv", "--graph", toy / "graph.txt", "--cutpoints", "",
                   "--out", toy / "o") == 2

    def test_region_mismatch(self, toy, capsys):
        io.write_graph(toy / "g2.txt", SpatialGraph.from_edges([("R0", "R1"), ("R1", "R2"), ("R3",)]))
        assert run("fit", "--data", toy / "data.csv", "--graph", toy / "g2.txt", "--cutpoints", "",
                   "--out", toy / "o") == 2
        assert "R3" in capsys.readouterr().err

    def test_internal_error_exit_code(self, toy, monkeypatch):
        def boom(*a, **k):
            raise RuntimeError("boom")

        monkeypatch.setattr(cli, "fit", boom)
        assert run("fit", "--data", toy / "data.csv", "--graph", toy / "graph.txt", "--cutpoints", "",
                   "--out", toy / "o") == 1

    def test_select_one_cell_equals_fit(self, toy):
        common = ["--data", toy / "data.csv", "--graph", toy / "graph.txt", "--seed", 3, "--no-plots", *FAST]
        assert run("fit", *common, "--cutpoints", "", "--h", 0.4, "--out", toy / "f") == 0
        assert run("select", *common, "--j-grid", 1, "--h-grid", 0.4, "--out", toy / "s") == 0
        assert (toy / "f" / "summary.json").read_bytes() == (toy / "s" / "summary.json").read_bytes()

    def test_select_dedupes_grid(self, toy):
        assert run("select", "--data", toy / "data.csv", "--graph", toy / "graph.txt", "--j-grid", "1,1",
                   "--h-grid", "0,0.5,0.5,0:0.5:1", "--out", toy / "s", *FAST) == 0
        rows = read_csv(toy / "s" / "lpml_grid.csv")
        assert [(r["h"], r["J"]) for r in rows] == [("0.0", "1"), ("0.5", "1"), ("1.0", "1")]
        assert all(r["status"] == "ok" for r in rows)
        assert (toy / "s" / "lpml.png").exists()

    def test_config_precedence(self, toy):
        cfg = {"alpha": 2.0, "iters": 120, "burnin": 20, "seed": 11, "plots": False, "cutpoints": []}
        (toy / "cfg.json").write_text(json.dumps(cfg))
        assert run("fit", "--config", toy / "cfg.json", "--data", toy / "data.csv", "--graph", toy / "graph.txt",
                   "--seed", 12, "--out", toy / "o") == 0
        eff = json.loads((toy / "o" / "config.json").read_text())
        assert eff["alpha"] == 2.0 and eff["iters"] == 120 and eff["seed"] == 12 and eff["sigma0"] == 100.0
        io.validate(eff, "config")
        s = json.loads((toy / "o" / "summary.json").read_text())
        assert s["iterations"] == 120 and s["seed"] == 12
        assert not (toy / "o" / "k_trace.png").exists()

    def test_config_unknown_key(self, toy):
        (toy / "cfg.json").write_text(json.dumps({"alpah": 2}))
        assert run("fit", "--config", toy / "cfg.json", "--out", toy / "o") == 2

    def test_simulate(self, tmp_path):
        assert run("simulate", "--design", "design2", "--replicates", 2, "--out", tmp_path) == 0
        assert io.read_survival_csv(tmp_path / "replicate_001.csv").region_ids[0] == "r0c0"
        assert io.read_design(tmp_path / "design.json").k == 2
        rows = read_csv(tmp_path / "true_cluster_map.csv")
        assert len(rows) == 64 and {r["label"] for r in rows} == {"1", "2"}

    def test_evaluate_single_cluster(self, tmp_path):
        d = SimulationDesign(lattice_graph(2, 2), [0, 0, 0, 0], ({"beta": [1.0], "lambda": [0.1, 0.08]},),
                             partition=HazardPartition((2.0,)), subjects_per_region=80, name="one")
        io.write_design(tmp_path / "one.json", d)
        assert run("evaluate", "--design", tmp_path / "one.json", "--replicates", 1, "--h-grid", "0,1",
                   "--out", tmp_path / "ev", *FAST) == 0
        report = json.loads((tmp_path / "ev" / "evaluation.json").read_text())
        io.validate(report, "evaluation")
        assert report["replicates_completed"] == 1
        sel = read_csv(tmp_path / "ev" / "selected_h.csv")[0]
        if sel["k_hat"] == "1":
            assert float(sel["rand_index"]) == 1.0
        for f in ("k_hat.csv", "rand_index.csv", "ab_amse.csv", "lpml_grid.csv", "k_hat_hist.png",
                  "rand_index.png"):
            assert (tmp_path / "ev" / f).exists()
        methods = {r["method"] for r in read_csv(tmp_path / "ev" / "ab_amse.csv")}
        assert methods == {"h=0", "h=1", "optimal", "CRP"}

    def test_grid_parser(self):
        assert cli._floats("0:0.2:1,3") == [0.0, 0.2, 0.4, 0.6, 0.8, 1.0, 3.0]
        assert cli._floats("") == []
        assert cli._ints("2,3") == [2, 3]

    def test_default_grid(self):
        from gwcrp.pipeline import DEFAULT_H_GRID

        assert list(DEFAULT_H_GRID) == cli._floats("0:0.2:2,3:1:10")
