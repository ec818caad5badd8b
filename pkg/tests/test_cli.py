import json
import math

import numpy as np
import pytest

from orliczot import DiscreteMeasure, ParameterError, write_graph, write_measure
from orliczot.batch import (
    RunConfig,
    bench,
    bench_pairs,
    kernel_matrix,
    pairwise_matrix,
    read_matrix,
    write_matrix,
)
from orliczot.cli import main
from orliczot.instances import random_graph, random_measure


@pytest.fixture
def p3_files(tmp_path, p3, p3_pair):
    write_graph(p3, tmp_path / "g.txt")
    write_measure(p3_pair[0], tmp_path / "mu.txt")
    write_measure(p3_pair[1], tmp_path / "nu.txt")
    return tmp_path


class TestRunConfig:
    def test_defaults(self):
        params = RunConfig().params()
        assert (params.b, params.lam, params.alpha) == (1.0, 1.0, 0.0)
        assert (params.w1.a1, params.w1.a0) == (1.0, 1.0)

    def test_weight_follows_b(self):
        assert RunConfig(b=2.0).params().w1.a1 == 2.0

    @pytest.mark.parametrize("kw", [{"method": "emd"}, {"phi": "cubic"}, {"eps": -1.0}, {"t_bar": 0.0},
                                    {"workers": 0}, {"bracket": "x"}, {"format": "xml"}, {"b": -1.0}])
    def test_invalid(self, kw):
        with pytest.raises(ParameterError):
            RunConfig(**kw)

    def test_mapping_keys(self):
        cfg = RunConfig.from_mapping({"lambda": 0.5, "tol-t": 1e-3})
        assert cfg.lam == 0.5 and cfg.tol_t == 1e-3
        with pytest.raises(ParameterError):
            RunConfig.from_mapping({"colour": 1})


class TestPairwise:
    def test_identical(self, p3):
        m = DiscreteMeasure.from_dict({1: 1.0})
        res = pairwise_matrix(RunConfig(), graph=p3, measures=[m, m])
        np.testing.assert_array_equal(res.matrix, np.zeros((2, 2)))

    def test_p3(self, p3, p3_pair):
        res = pairwise_matrix(RunConfig(), graph=p3, measures=list(p3_pair))
        assert res.matrix[0, 1] == res.matrix[1, 0] == pytest.approx(2.25)
        assert res.matrix[0, 0] == 0.0

    def test_upper_triangle_only(self, p3):
        ms = [DiscreteMeasure.from_dict({i: 1.0}) for i in range(3)]
        assert pairwise_matrix(RunConfig(), graph=p3, measures=ms).solves == 3

    def test_asymmetric_weights_full_square(self, p3):
        ms = [DiscreteMeasure.from_dict({i: 1.0 + i}) for i in range(3)]
        res = pairwise_matrix(RunConfig(w1="1,1", w2="0.5,0.5"), graph=p3, measures=ms)
        assert res.solves == 6

    def test_parallel_matches_serial(self, rng):
        g = random_graph(rng, 40)
        ms = [random_measure(rng, 40, 8) for _ in range(6)]
        for phi in ("exp1", "power:2"):
            serial = pairwise_matrix(RunConfig(phi=phi), graph=g, measures=ms).matrix
            parallel = pairwise_matrix(RunConfig(phi=phi, workers=3), graph=g, measures=ms).matrix
            assert serial.tobytes() == parallel.tobytes()

    def test_errors_become_nan(self, p3, p3_pair):
        cfg = RunConfig(method="ept", phi="exp1", eps=1e-3, max_iter=1, sinkhorn_tol=1e-14)
        res = pairwise_matrix(cfg, graph=p3, measures=list(p3_pair))
        assert np.isnan(res.matrix[0, 1])
        assert res.errors and "NumericalError" in res.errors[0]["error"]

    def test_needs_two(self, p3):
        with pytest.raises(ParameterError):
            pairwise_matrix(RunConfig(), graph=p3, measures=[DiscreteMeasure.from_dict({1: 1.0})])


class TestMatrixIO:
    @pytest.mark.parametrize("fmt", ["csv", "bin"])
    def test_roundtrip(self, tmp_path, rng, fmt):
        D = rng.random((4, 4))
        D[1, 2] = math.nan
        write_matrix(D, tmp_path / "D", fmt)
        back = read_matrix(tmp_path / "D")
        assert back.tobytes() == D.tobytes()

    def test_binary_header(self, tmp_path):
        write_matrix(np.eye(2), tmp_path / "D", "bin", meta={"names": ["a", "b"]})
        head = (tmp_path / "D").read_bytes().split(b"\n", 1)[0]
        assert json.loads(head) == {"shape": [2, 2], "dtype": "<f8", "order": "C", "names": ["a", "b"]}


class TestKernel:
    def test_zero(self):
        np.testing.assert_array_equal(kernel_matrix(np.zeros((3, 3)), 0.7), np.ones((3, 3)))

    def test_value(self):
        assert kernel_matrix(np.array([[2.25]]), 1.0)[0, 0] == pytest.approx(0.105399, abs=1e-6)

    def test_diag_add(self):
        D = np.array([[0.0, 1.0], [1.0, 0.0]])
        K0, K1 = kernel_matrix(D, 1.0), kernel_matrix(D, 1.0, diag_add=1.0)
        np.testing.assert_array_equal(np.diag(K1) - np.diag(K0), [1.0, 1.0])
        assert K1[0, 1] == K0[0, 1]

    def test_bad_scale(self):
        with pytest.raises(ParameterError):
            kernel_matrix(np.zeros((1, 1)), 0.0)


class TestBench:
    def test_single_pair(self, p3, p3_pair):
        rep = bench(RunConfig(phi="exp1"), [p3_pair], graph=p3)
        assert sorted(r["method"] for r in rep.rows) == ["ept", "ost"]
        assert rep.speedup > 0

    def test_repeat_keeps_values(self, p3, p3_pair):
        once = bench(RunConfig(phi="exp1"), [p3_pair], graph=p3)
        thrice = bench(RunConfig(phi="exp1"), [p3_pair], graph=p3, repeat=3)
        assert [r["value"] for r in once.rows] == [r["value"] for r in thrice.rows]

    def test_bad_repeat(self, p3, p3_pair):
        with pytest.raises(ParameterError):
            bench(RunConfig(phi="exp1"), [p3_pair], graph=p3, repeat=0)

    def test_failed_pair_is_timed(self, p3, p3_pair, capsys):
        rep = bench(RunConfig(phi="exp1", eps=0.1, max_iter=1, sinkhorn_tol=1e-30), [p3_pair], graph=p3)
        ept = [r for r in rep.rows if r["method"] == "ept"][0]
        assert math.isnan(ept["value"]) and ept["seconds"] > 0
        assert "pair 0 ept" in capsys.readouterr().err

    def test_pairs_deterministic(self, rng):
        g = random_graph(rng, 30)
        a, b = bench_pairs(g, 5, 10, seed=4), bench_pairs(g, 5, 10, seed=4)
        assert all(x.equals(y) and u.equals(v) for (x, u), (y, v) in zip(a, b))

    def test_csv(self, tmp_path, p3, p3_pair):
        rep = bench(RunConfig(phi="exp1"), [p3_pair, p3_pair], graph=p3)
        rep.write_csv(tmp_path / "b.csv")
        lines = (tmp_path / "b.csv").read_text().splitlines()
        assert lines[0] == "pair,method,seconds,value" and len(lines) == 5


class TestCommandLine:
    def test_ost(self, p3_files, capsys):
        d = p3_files
        assert main(["ost", "--graph", str(d / "g.txt"), "--mu", str(d / "mu.txt"), "--nu", str(d / "nu.txt")]) == 0
        out = json.loads(capsys.readouterr().out)
        assert out["value"] == pytest.approx(2.25) and out["k_opt"] is None

    def test_ost_power(self, p3_files, capsys):
        d = p3_files
        main(["ost", "--graph", str(d / "g.txt"), "--mu", str(d / "mu.txt"), "--nu", str(d / "nu.txt"),
              "--phi", "power:2"])
        out = json.loads(capsys.readouterr().out)
        assert out["k_opt"] == pytest.approx(2.309401, abs=1e-6)

    def test_ept(self, p3_files, capsys):
        d = p3_files
        assert main(["ept", "--graph", str(d / "g.txt"), "--mu", str(d / "mu.txt"), "--nu", str(d / "nu.txt"),
                     "--phi", "linear", "--eps", "0"]) == 0
        assert json.loads(capsys.readouterr().out)["value"] == pytest.approx(1.5)

    def test_config_and_override(self, p3_files, capsys):
        d = p3_files
        (d / "c.json").write_text(json.dumps({"phi": "power:2", "lambda": 1.0, "graph": str(d / "g.txt")}))
        main(["--config", str(d / "c.json"), "ost", "--mu", str(d / "mu.txt"), "--nu", str(d / "nu.txt")])
        assert json.loads(capsys.readouterr().out)["value"] == pytest.approx(1.616025, abs=1e-6)
        main(["--config", str(d / "c.json"), "ost", "--mu", str(d / "mu.txt"), "--nu", str(d / "nu.txt"),
              "--phi", "linear"])
        assert json.loads(capsys.readouterr().out)["value"] == pytest.approx(2.25)

    def test_exit_codes(self, p3_files, capsys):
        d = p3_files
        base = ["ost", "--graph", str(d / "g.txt"), "--mu", str(d / "mu.txt"), "--nu", str(d / "nu.txt")]
        assert main(base + ["--alpha", "5"]) == 2
        assert main(base + ["--phi", "cubic"]) == 2
        assert main(["ost", "--graph", str(d / "missing"), "--mu", str(d / "mu.txt"), "--nu", str(d / "nu.txt")]) == 4
        (d / "bad.json").write_text("{")
        assert main(["--config", str(d / "bad.json")] + base) == 4
        (d / "far.txt").write_text("9 1.0\n")
        assert main(["ost", "--graph", str(d / "g.txt"), "--mu", str(d / "far.txt"), "--nu", str(d / "nu.txt")]) == 4

    def test_numerical_exit(self, p3_files):
        d = p3_files
        assert main(["ept", "--graph", str(d / "g.txt"), "--mu", str(d / "mu.txt"), "--nu", str(d / "nu.txt"),
                     "--phi", "exp1", "--eps", "0.001", "--max-iter", "1", "--sinkhorn-tol", "1e-14"]) == 3

    def test_pairwise_kernel(self, p3_files, capsys):
        d = p3_files
        (d / "ms").mkdir()
        for name in ("a", "b", "c"):
            (d / "ms" / name).write_text((d / ("mu.txt" if name != "b" else "nu.txt")).read_text())
        assert main(["pairwise", "--graph", str(d / "g.txt"), "--measures", str(d / "ms"),
                     "--out", str(d / "D.bin"), "--format", "bin", "--workers", "2"]) == 0
        D = read_matrix(d / "D.bin")
        assert D[0, 1] == pytest.approx(2.25) and D[0, 2] == 0.0
        assert json.loads((d / "D.bin.errors.json").read_text()) == []
        assert main(["kernel", "--distances", str(d / "D.bin"), "--t-bar", "1", "--diag-add", "1",
                     "--out", str(d / "K.csv")]) == 0
        K = read_matrix(d / "K.csv")
        assert K[0, 1] == pytest.approx(math.exp(-2.25)) and K[0, 0] == 2.0

    def test_gen_graph(self, tmp_path, capsys):
        assert main(["gen-graph", "--nodes", "30", "--flavor", "sqrt", "--seed", "2",
                     "--out", str(tmp_path / "g.txt")]) == 0
        assert (tmp_path / "g.txt").read_text().startswith("nodes 30 root 0")
        assert main(["gen-graph", "--nodes", "1"]) == 2

    def test_bench(self, tmp_path, capsys):
        assert main(["bench", "--generate", "sqrt:60", "--pairs", "2", "--max-supports", "5", "--phi", "exp1",
                     "--out", str(tmp_path / "b.csv")]) == 0
        summary = json.loads(capsys.readouterr().out)
        assert summary["pairs"] == 2

    def test_verify(self, tmp_path, capsys):
        assert main(["verify", "--instances", "1", "--checks", "symmetry", "sparsity",
                     "--out", str(tmp_path / "r.json")]) == 0
        report = json.loads((tmp_path / "r.json").read_text())
        assert report["passed"] and set(report["checks"]) == {"symmetry", "sparsity"}

    def test_verify_failure_exit(self, monkeypatch, capsys):
        from orliczot import reference

        def bad(rng, n):
            yield reference.OracleReport.compare("symmetry", "forced", 1.0, 2.0, 1e-9)

        monkeypatch.setitem(reference.CHECKS, "symmetry", bad)
        assert main(["verify", "--instances", "1", "--checks", "symmetry"]) == 1
        assert not json.loads(capsys.readouterr().out)["passed"]
