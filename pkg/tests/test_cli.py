"""Command-line interface, exercised in-process via main()."""

import csv
import json

import numpy as np
import pytest

from sepnls.cli import main
from sepnls.datafiles import read_dataset, read_json


def run_cli(tmp_path, command, cfg, out="out", seed=None, threads=None):
    cfg_path = tmp_path / f"{command}.json"
    cfg_path.write_text(json.dumps(cfg))
    outdir = tmp_path / out
    argv = [command, "--config", str(cfg_path), "--out", str(outdir)]
    if seed is not None:
        argv += ["--seed", str(seed)]
    if threads is not None:
        argv += ["--threads", str(threads)]
    return main(argv), outdir


@pytest.fixture()
def scalar1_dataset(tmp_path):
    """A zero-noise scalar1 dataset written through the CLI itself."""
    code, outdir = run_cli(
        tmp_path, "simulate",
        {"model": "scalar1", "sim": {"sigma": 0.0, "seed": 4}, "name": "ds"},
        out="data",
    )
    assert code == 0
    return str(outdir / "ds")


class TestSimulate:
    def test_writes_dataset_and_log(self, tmp_path):
        code, outdir = run_cli(
            tmp_path, "simulate",
            {"model": "scalar1", "sim": {"seed": 4}, "name": "run"},
        )
        assert code == 0
        with open(outdir / "run.csv", newline="") as fh:
            rows = list(csv.reader(fh))
        assert rows[0] == ["k", "x_1", "z_1"]
        assert len(rows) == 101
        meta = read_json(str(outdir / "run.model.json"))
        assert meta["truth1"] == [1.0, 1.0]
        assert meta["truth2"] == [0.1]
        assert meta["sigma"] == [0.3]
        assert meta["seed"] == 4
        assert (outdir / "run.log").exists()

    def test_zero_noise_round_trips_generator_exactly(self, tmp_path,
                                                      scalar1_dataset):
        from sepnls.models import SimSpec, simulate

        ds, model, _ = read_dataset(scalar1_dataset)
        direct = simulate(SimSpec(model_id="scalar1", sigma=0.0, seed=4))
        # write/read goes through repr, which round-trips floats exactly
        assert np.array_equal(ds.z, direct.dataset.z)
        assert ds.z[:, 0] == pytest.approx(
            2.0 * np.cos(model.eta + 0.1) + 1.0, rel=1e-14)

    def test_same_seed_same_bytes(self, tmp_path):
        cfg = {"model": "scalar2", "sim": {"seed": 12}, "name": "d"}
        _, out_a = run_cli(tmp_path, "simulate", cfg, out="a")
        _, out_b = run_cli(tmp_path, "simulate", cfg, out="b")
        assert (out_a / "d.csv").read_bytes() == (out_b / "d.csv").read_bytes()
        assert (out_a / "d.model.json").read_bytes() == \
            (out_b / "d.model.json").read_bytes()

    def test_seed_flag_overrides_config(self, tmp_path):
        cfg = {"model": "scalar1", "sim": {"seed": 12}, "name": "d"}
        _, out_a = run_cli(tmp_path, "simulate", cfg, out="a", seed=99)
        _, out_b = run_cli(tmp_path, "simulate", cfg, out="b")
        assert (out_a / "d.csv").read_bytes() != (out_b / "d.csv").read_bytes()
        assert read_json(str(out_a / "d.model.json"))["seed"] == 99


class TestEstimate:
    def test_dataset_reference_recovers_truth(self, tmp_path, scalar1_dataset):
        code, outdir = run_cli(
            tmp_path, "estimate", {"dataset": scalar1_dataset}, out="est",
        )
        assert code == 0
        payload = read_json(str(outdir / "estimate.json"))
        assert payload["converged"] is True
        assert payload["xi1"] == pytest.approx([1.0, 1.0], abs=1e-6)
        assert payload["xi2"] == pytest.approx([0.1], abs=1e-6)
        assert payload["model_id"] == "scalar1"
        assert payload["alternations"] >= 1

    def test_inline_simulation(self, tmp_path):
        code, outdir = run_cli(
            tmp_path, "estimate",
            {"model": "scalar2", "sim": {"sigma": 0.0, "seed": 3}},
        )
        assert code == 0
        payload = read_json(str(outdir / "estimate.json"))
        assert payload["xi2"] == pytest.approx([0.05, 0.1], abs=1e-5)

    def test_non_convergence_exits_3(self, tmp_path):
        code, outdir = run_cli(
            tmp_path, "estimate",
            {
                "model": "scalar1",
                "sim": {"seed": 3},
                "solver": {"max_outer_alternations": 1, "r_tol": 1e-12},
            },
        )
        assert code == 3
        payload = read_json(str(outdir / "estimate.json"))
        assert payload["converged"] is False

    def test_threads_do_not_change_result(self, tmp_path, scalar1_dataset):
        cfg = {"dataset": scalar1_dataset}
        _, out_a = run_cli(tmp_path, "estimate", cfg, out="t1", threads=1)
        _, out_b = run_cli(tmp_path, "estimate", cfg, out="t4", threads=4)
        assert (out_a / "estimate.json").read_bytes() == \
            (out_b / "estimate.json").read_bytes()


class TestStage1Map:
    def test_map_and_summary(self, tmp_path, scalar1_dataset):
        code, outdir = run_cli(
            tmp_path, "stage1-map", {"dataset": scalar1_dataset}, out="map",
        )
        assert code == 0
        with open(outdir / "stage1_map.csv", newline="") as fh:
            rows = list(csv.reader(fh))
        assert rows[0] == ["xi2p_1", "norm_xi2p", "traceR", "screened_ok"]
        assert len(rows) == 1 + 101  # the bundled scalar1 grid
        summary = read_json(str(outdir / "stage1.json"))
        assert summary["model_id"] == "scalar1"
        assert summary["verdict"] in ("UniqueMinimum", "Flat", "Clustered")
        assert summary["chosen_xi2p"] == pytest.approx([0.1], abs=1e-9)
        assert summary["n_candidates"] == 101


class TestBounds:
    def test_report_written(self, tmp_path, scalar1_dataset):
        code, outdir = run_cli(
            tmp_path, "bounds",
            {"dataset": scalar1_dataset, "bounds": {"nsamples": 100, "seed": 1}},
            out="bnd",
        )
        assert code == 0
        doc = read_json(str(outdir / "bounds.json"))
        b = doc["bounds"]
        assert set(b) == {"ell1", "ell2", "L_A", "L_b", "E1", "E2", "E",
                          "J_stage1", "J_final", "bracket_holds"}
        assert b["bracket_holds"] is True
        assert b["J_final"] <= b["J_stage1"] + 1e-9
        assert b["E"] >= max(b["E1"], b["E2"]) - 1e-12


class TestMcAndBench:
    def test_mc_smoke(self, tmp_path):
        code, outdir = run_cli(
            tmp_path, "mc",
            {"model": "scalar1", "n_runs": 2, "master_seed": 123},
        )
        assert code == 0
        with open(outdir / "mc_runs.csv", newline="") as fh:
            rows = list(csv.reader(fh))
        assert rows[0] == ["run", "estimator", "converged", "err_norm", "correct"]
        assert len(rows) == 1 + 2 * 3  # proposed, nlp, hk per run
        summary = read_json(str(outdir / "mc_summary.json"))
        assert set(summary["estimators"]) == {"proposed", "nlp", "hk"}
        assert summary["master_seed"] == 123

    def test_mc_non_scalar1_drops_two_step(self, tmp_path):
        code, outdir = run_cli(
            tmp_path, "mc",
            {"model": "scalar2", "n_runs": 1, "master_seed": 5},
        )
        assert code == 0
        summary = read_json(str(outdir / "mc_summary.json"))
        assert set(summary["estimators"]) == {"proposed", "nlp"}

    def test_bench_runs_references_only(self, tmp_path):
        code, outdir = run_cli(
            tmp_path, "bench",
            {"model": "scalar1", "n_runs": 2, "master_seed": 123},
        )
        assert code == 0
        summary = read_json(str(outdir / "mc_summary.json"))
        assert set(summary["estimators"]) == {"nlp", "hk"}

    def test_seed_flag_overrides_master_seed(self, tmp_path):
        base = {"model": "scalar1", "n_runs": 2, "master_seed": 1}
        _, out_a = run_cli(tmp_path, "mc", base, out="a", seed=123)
        _, out_b = run_cli(tmp_path, "mc",
                           {**base, "master_seed": 123}, out="b")
        assert (out_a / "mc_runs.csv").read_bytes() == \
            (out_b / "mc_runs.csv").read_bytes()


class TestConfigErrors:
    def assert_error(self, tmp_path, command, cfg, fragment, capsys):
        code, _ = run_cli(tmp_path, command, cfg)
        assert code == 2
        assert fragment in capsys.readouterr().err

    def test_unknown_key(self, tmp_path, capsys):
        self.assert_error(tmp_path, "estimate",
                          {"model": "scalar1", "bogus": 1},
                          "unknown key", capsys)

    def test_unknown_model(self, tmp_path, capsys):
        self.assert_error(tmp_path, "simulate", {"model": "scalar9"},
                          "unknown model", capsys)

    def test_missing_model_for_inline_sim(self, tmp_path, capsys):
        self.assert_error(tmp_path, "estimate", {"sim": {"seed": 1}},
                          "needs 'model'", capsys)

    def test_missing_dataset_files(self, tmp_path, capsys):
        self.assert_error(tmp_path, "estimate",
                          {"dataset": str(tmp_path / "nope")},
                          "missing dataset", capsys)

    def test_dataset_and_sim_both_given(self, tmp_path, capsys):
        self.assert_error(
            tmp_path, "estimate",
            {"model": "scalar1", "dataset": "x", "sim": {}},
            "not both", capsys)

    def test_config_root_must_be_object(self, tmp_path, capsys):
        cfg_path = tmp_path / "bad.json"
        cfg_path.write_text("[1, 2]")
        code = main(["simulate", "--config", str(cfg_path),
                     "--out", str(tmp_path / "o")])
        assert code == 2
        assert "JSON object" in capsys.readouterr().err

    def test_missing_config_file(self, tmp_path, capsys):
        code = main(["simulate", "--config", str(tmp_path / "absent.json"),
                     "--out", str(tmp_path / "o")])
        assert code == 2

    def test_unknown_sampler_key(self, tmp_path, capsys):
        self.assert_error(
            tmp_path, "estimate",
            {"model": "scalar1", "sampler": {"bogus_knob": 3}},
            "sampler", capsys)
