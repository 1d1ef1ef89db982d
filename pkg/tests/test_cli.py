import csv
import json

import numpy as np
import pytest

from spcekit.cli import (
    load_config,
    main,
    run_benchmark,
    run_fit,
    run_replicate,
    unconditional_variance,
)
from spcekit.exceptions import ConfigurationError, ValidationError
from spcekit.simulators import bimodal_conditional_moments, gbm_conditional_moments
from spcekit.spce import SpceModel

from conftest import constant_model

SMALL_FIT = {"simulator": "gbm", "n": 40, "seed": 3,
             "latents": ["normal"], "degrees": [1], "qnorms": [1.0]}


def write_json(path, obj):
    path.write_text(json.dumps(obj))
    return str(path)


class TestLoadConfig:
    def test_json(self, tmp_path):
        path = write_json(tmp_path / "c.json", {"simulator": "gbm"})
        assert load_config(path) == {"simulator": "gbm"}

    def test_toml(self, tmp_path):
        path = tmp_path / "c.toml"
        path.write_text('simulator = "gbm"\nn = 50\n')
        cfg = load_config(str(path))
        assert cfg == {"simulator": "gbm", "n": 50}

    def test_missing_file(self):
        with pytest.raises(ConfigurationError):
            load_config("/nonexistent/config.json")


class TestFit:
    def test_smoke_and_determinism(self, tmp_path):
        out1, out2 = tmp_path / "run1", tmp_path / "run2"
        run_fit(dict(SMALL_FIT), str(out1))
        run_fit(dict(SMALL_FIT), str(out2))
        model = SpceModel.load(out1 / "model.json")
        assert model.sigma > 0
        assert (out1 / "model.json").read_bytes() == (out2 / "model.json").read_bytes()
        assert (out1 / "report.json").read_bytes() == (out2 / "report.json").read_bytes()

    def test_cli_exit_codes(self, tmp_path, capsys):
        cfg = write_json(tmp_path / "c.json", {"dataset": "/missing/data.json"})
        assert main(["fit", cfg]) == 2
        assert "error:" in capsys.readouterr().err
        assert main(["fit", str(tmp_path / "absent.json")]) == 2
        # no partial outputs on failure
        assert not (tmp_path / "model.json").exists()

    def test_design_size_floor(self, tmp_path):
        cfg = write_json(tmp_path / "c.json", {"simulator": "gbm", "n": 5})
        assert main(["fit", cfg, "--out", str(tmp_path)]) == 2


class TestSampleCommand:
    @pytest.fixture
    def model_file(self, tmp_path):
        path = tmp_path / "model.json"
        constant_model(c0=3.0, sigma=1e-9).save(path)
        return str(path)

    def test_conditional_constant(self, model_file, tmp_path):
        out = str(tmp_path / "draws.csv")
        assert main(["sample", model_file, "--x", "0.0", "-n", "20",
                     "--seed", "1", "--out", out]) == 0
        draws = np.loadtxt(out, skiprows=1)
        np.testing.assert_allclose(draws, 3.0, atol=1e-6)

    def test_seed_reproducible(self, model_file, tmp_path):
        a, b = str(tmp_path / "a.csv"), str(tmp_path / "b.csv")
        for out in (a, b):
            assert main(["sample", model_file, "--unconditional", "-n", "10",
                         "--seed", "5", "--out", out]) == 0
        assert open(a).read() == open(b).read()

    def test_zero_samples_usage_error(self, model_file, tmp_path):
        assert main(["sample", model_file, "--x", "0.0", "-n", "0"]) == 2

    def test_missing_x_usage_error(self, model_file):
        assert main(["sample", model_file, "-n", "5"]) == 2


class TestSobolCommand:
    def test_json_csv_consistency(self, tmp_path):
        run_fit(dict(SMALL_FIT), str(tmp_path))
        out = str(tmp_path / "sobol.json")
        assert main(["sobol", str(tmp_path / "model.json"), "--out", out]) == 0
        report = json.loads(open(out).read())
        with open(tmp_path / "sobol.csv") as fh:
            rows = list(csv.DictReader(fh))
        assert len(rows) == 2
        for i, row in enumerate(rows):
            assert float(row["first_order"]) == report["first_order"][i]
            assert float(row["total"]) == report["total"][i]
            assert 0.0 <= float(row["first_order"]) <= float(row["total"]) <= 1.0


class TestValidateModel:
    def test_valid_and_invalid(self, tmp_path, capsys):
        path = tmp_path / "model.json"
        constant_model().save(path)
        assert main(["validate-model", str(path)]) == 0
        d = json.loads(path.read_text())
        d["sigma"] = -1.0
        path.write_text(json.dumps(d))
        assert main(["validate-model", str(path)]) == 2


class TestBenchmark:
    def test_small_grid_outputs(self, tmp_path):
        config = {"simulator": "gbm", "ladder": [40, 60], "replicates": 2,
                  "seed": 1, "test_size": 4, "n_quantile_samples": 400,
                  "u_grid_size": 101, "latents": ["normal"], "degrees": [1],
                  "qnorms": [1.0]}
        rows, summary = run_benchmark(config, out_dir=str(tmp_path))
        assert len(rows) == 4
        assert {row["N"] for row in rows} == {40, 60}
        for row in rows:
            assert row["epsilon"] > 0
            assert row["oracle_epsilon"] > 0
        assert set(summary) == {"40", "60"}
        assert summary["40"]["count"] == 2

        with open(tmp_path / "results.csv") as fh:
            table = list(csv.DictReader(fh))
        assert len(table) == 4
        assert all(t["status"] == "ok" for t in table)
        report = json.loads((tmp_path / "summary.json").read_text())
        assert report["summary"]["40"]["mean"] == summary["40"]["mean"]
        assert "runtime" not in json.dumps(report)

    def test_summary_deterministic(self, tmp_path):
        config = {"simulator": "gbm", "ladder": [40], "replicates": 1, "seed": 2,
                  "test_size": 3, "n_quantile_samples": 300, "u_grid_size": 51,
                  "latents": ["normal"], "degrees": [1], "qnorms": [1.0]}
        run_benchmark(config, out_dir=str(tmp_path / "a"))
        run_benchmark(config, out_dir=str(tmp_path / "b"))
        assert ((tmp_path / "a" / "summary.json").read_bytes()
                == (tmp_path / "b" / "summary.json").read_bytes())

    def test_bad_config(self):
        with pytest.raises(ConfigurationError):
            run_benchmark({"simulator": "unknown"})
        with pytest.raises(ConfigurationError):
            run_benchmark({"simulator": "gbm", "replicates": 0})


class TestUnconditionalVariance:
    def test_gbm_against_monte_carlo(self, rng):
        from spcekit.simulators import GBM_MARGINALS, gbm_batch, lhs_design

        x = lhs_design(200_000, GBM_MARGINALS, rng=rng)
        draws = gbm_batch(x, rng)
        assert unconditional_variance("gbm") == pytest.approx(draws.var(), rel=0.02)

    def test_bimodal_against_monte_carlo(self, rng):
        from spcekit.simulators import bimodal_batch

        x = rng.uniform(0, 1, 200_000)
        draws = bimodal_batch(x, rng)
        assert unconditional_variance("bimodal") == pytest.approx(draws.var(), rel=0.02)

    def test_sir_requires_pooled(self):
        with pytest.raises(ValidationError):
            unconditional_variance("sir")
