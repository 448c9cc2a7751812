import json

from cellkalman.cli import cli
from cellkalman.harness import RunConfig


def write_config(tmp_path, **kw):
    cfg = RunConfig(**kw)
    path = tmp_path / "config.json"
    cfg.to_json(path)
    return path


def read_bytes(path):
    return path.read_bytes()


class TestGenerate:
    def test_writes_dataset(self, tmp_path):
        out = tmp_path / "d"
        cfg = write_config(tmp_path, t_steps=40)
        assert cli(["generate", "--config", str(cfg), "--out", str(out)]) == 0
        for name in ("stream.csv", "states.csv", "complex.json", "meta.json", "config.json"):
            assert (out / name).exists()
        meta = json.loads((out / "meta.json").read_text())
        assert len(meta["true_activation"]) == 9

    def test_byte_identical_reruns(self, tmp_path):
        out1, out2 = tmp_path / "a", tmp_path / "b"
        cfg = write_config(tmp_path, t_steps=30)
        assert cli(["generate", "--config", str(cfg), "--seed", "7", "--out", str(out1)]) == 0
        assert cli(["generate", "--config", str(cfg), "--seed", "7", "--out", str(out2)]) == 0
        for name in ("stream.csv", "states.csv", "complex.json", "meta.json"):
            assert read_bytes(out1 / name) == read_bytes(out2 / name)


class TestForecast:
    def test_writes_report(self, tmp_path):
        out = tmp_path / "r"
        cfg = write_config(tmp_path, t_steps=40)
        assert cli(["forecast", "--config", str(cfg), "--out", str(out)]) == 0
        assert (out / "report.json").exists()
        assert (out / "steps.csv").exists()
        doc = json.loads((out / "report.json").read_text())
        assert doc["steps"] == 40

    def test_deterministic_outputs(self, tmp_path):
        cfg = write_config(tmp_path, t_steps=30)
        out1, out2 = tmp_path / "r1", tmp_path / "r2"
        cli(["forecast", "--config", str(cfg), "--out", str(out1)])
        cli(["forecast", "--config", str(cfg), "--out", str(out2)])
        assert read_bytes(out1 / "report.json") == read_bytes(out2 / "report.json")
        assert read_bytes(out1 / "steps.csv") == read_bytes(out2 / "steps.csv")

    def test_csv_stream_source(self, tmp_path):
        gen_out = tmp_path / "data"
        cfg = write_config(tmp_path, t_steps=30)
        cli(["generate", "--config", str(cfg), "--out", str(gen_out)])
        run_cfg = RunConfig(
            t_steps=30,
            complex_source={"file": str(gen_out / "complex.json")},
            stream_source={"csv": str(gen_out / "stream.csv")},
        )
        cfg2 = tmp_path / "run.json"
        run_cfg.to_json(cfg2)
        out = tmp_path / "r3"
        assert cli(["forecast", "--config", str(cfg2), "--out", str(out)]) == 0

    def test_missing_override(self, tmp_path):
        cfg = write_config(tmp_path, t_steps=30)
        out = tmp_path / "r4"
        assert cli(["forecast", "--config", str(cfg), "--missing", "0.2",
                    "--out", str(out)]) == 0


class TestIdentify:
    def test_writes_identification_report(self, tmp_path):
        out = tmp_path / "i"
        cfg = write_config(tmp_path, t_steps=200)
        assert cli(["identify", "--config", str(cfg), "--out", str(out)]) == 0
        doc = json.loads((out / "identification.json").read_text())
        assert len(doc["candidates"]) == 9
        assert doc["confusion"] is not None and "f1" in doc["confusion"]
        metrics = json.loads((out / "metrics.json").read_text())
        assert "identification" in metrics
        assert (out / "inferred_complex.json").exists()

    def test_epsilon_override(self, tmp_path):
        out = tmp_path / "i2"
        cfg = write_config(tmp_path, t_steps=200)
        assert cli(["identify", "--config", str(cfg), "--epsilon", "-1.0",
                    "--out", str(out)]) == 0
        doc = json.loads((out / "identification.json").read_text())
        assert doc["accepted_cells"] == []


class TestDecompose:
    def test_writes_diagnostics(self, tmp_path):
        out = tmp_path / "dg"
        cfg = write_config(tmp_path, t_steps=5)
        assert cli(["decompose", "--config", str(cfg), "--out", str(out)]) == 0
        doc = json.loads((out / "diagnostics.json").read_text())
        assert doc["ranks"] == {"r_g": 9, "r_c": 8}


class TestExitCodes:
    def test_missing_config_file(self, tmp_path):
        assert cli(["forecast", "--config", str(tmp_path / "nope.json"),
                    "--out", str(tmp_path)]) == 1

    def test_invalid_config_value(self, tmp_path):
        path = tmp_path / "bad.json"
        path.write_text(json.dumps({"missing_rate": 2.0}))
        assert cli(["forecast", "--config", str(path), "--out", str(tmp_path)]) == 1

    def test_invalid_missing_flag(self, tmp_path):
        cfg = write_config(tmp_path, t_steps=10)
        assert cli(["forecast", "--config", str(cfg), "--missing", "1.5",
                    "--out", str(tmp_path)]) == 1

    def test_numerical_failure_exit_code(self, tmp_path):
        cfg = write_config(tmp_path, t_steps=10, sigma_obs=1e-12, sigma_process=5.0)
        assert cli(["forecast", "--config", str(cfg), "--out", str(tmp_path)]) == 2

    def test_usage_error(self, capsys):
        assert cli([]) == 1
        assert cli(["unknown-command"]) == 1
