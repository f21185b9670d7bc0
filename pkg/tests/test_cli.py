"""End-to-end exercise of the command-line pipeline on a small dataset."""
import numpy as np
import pytest

from restopred import cli
from restopred.artifacts import read_manifest


@pytest.fixture(scope="module")
def pipeline_dirs(tmp_path_factory):
    """synth -> ingest -> cluster -> train on a small but real dataset."""
    root = tmp_path_factory.mktemp("pipeline")
    data = root / "data"
    work = root / "work"
    models = root / "models"
    assert cli.main(["synth", "--out-dir", str(data), "--seed", "3",
                     "--horizon-days", "140"]) == 0
    assert cli.main(["ingest", "--outages", str(data / "outages.csv"),
                     "--weather", str(data / "weather.csv"),
                     "--out-dir", str(work)]) == 0
    assert cli.main([
        "cluster", "--cleaned", str(work / "cleaned.csv"), "--out-dir", str(work),
        "--seed", "0", "--path", "landmark", "--k-range", "2..6",
        "--features", "customers_interrupted,cause_key,equipment_cause_key,"
                      "weather_condition,hour_of_day",
    ]) == 0
    assert cli.main([
        "train", "--cleaned", str(work / "cleaned.csv"), "--cluster-dir", str(work),
        "--out-dir", str(models), "--seed", "0", "--hidden-sizes", "8",
        "--max-epochs", "40", "--tsne-points", "600", "--tsne-iters", "300",
    ]) == 0
    return data, work, models


class TestPipeline:
    def test_synth_outputs_exist(self, pipeline_dirs):
        data, _, _ = pipeline_dirs
        for name in ("outages.csv", "weather.csv", "labels.csv", "synth_manifest.txt"):
            assert (data / name).exists()

    def test_ingest_keeps_all_generated_rows(self, pipeline_dirs):
        data, work, _ = pipeline_dirs
        manifest = read_manifest(work / "ingest_manifest.txt")
        assert manifest["rows_rejected"] == "0"
        assert int(manifest["rows_out"]) > 0

    def test_cluster_artifacts(self, pipeline_dirs):
        _, work, _ = pipeline_dirs
        for name in ("sdesc_model.txt", "cluster_summary.csv", "dbi_curve.csv",
                     "features.csv", "features_meta.txt", "cluster_manifest.txt"):
            assert (work / name).exists()
        manifest = read_manifest(work / "cluster_manifest.txt")
        assert int(manifest["chosen_k"]) >= 2
        summary = (work / "cluster_summary.csv").read_text().splitlines()
        assert summary[0].startswith("cluster,samples")
        # ordered by descending average restoration time
        rts = [float(line.split(",")[3]) for line in summary[1:]]
        assert rts == sorted(rts, reverse=True)

    def test_train_artifacts_and_provenance(self, pipeline_dirs):
        _, work, models = pipeline_dirs
        manifest = read_manifest(models / "train_manifest.txt")
        k = int(read_manifest(work / "cluster_manifest.txt")["chosen_k"])
        model_files = sorted(models.glob("model_cluster_*.txt"))
        assert len(model_files) == k
        assert (models / "tsne_map.txt").exists()
        assert "transfer_source" in manifest

    def test_predict_on_training_rows_matches_assignments(self, pipeline_dirs):
        _, work, models = pipeline_dirs
        out = models / "predictions.csv"
        assert cli.main([
            "predict", "--cleaned", str(work / "cleaned.csv"),
            "--cluster-dir", str(work), "--train-dir", str(models),
            "--out", str(out),
        ]) == 0
        from restopred.artifacts import load_sdesc_model

        model = load_sdesc_model(work / "sdesc_model.txt")
        lines = out.read_text().splitlines()[1:]
        routed = np.array([int(line.split(",")[1]) for line in lines])
        match = (routed == model.assignments).mean()
        assert match >= 0.95

    def test_eval_writes_report_and_replays_bit_identically(self, pipeline_dirs, tmp_path):
        _, work, _ = pipeline_dirs
        out1 = tmp_path / "eval1"
        out2 = tmp_path / "eval2"
        args = ["eval", "--cleaned", str(work / "cleaned.csv"),
                "--cluster-dir", str(work), "--seed", "0",
                "--hidden-sizes", "8", "--max-epochs", "25"]
        assert cli.main(args + ["--out-dir", str(out1)]) == 0
        assert cli.main(args + ["--out-dir", str(out2)]) == 0
        assert (out1 / "eval_report.txt").read_bytes() == (out2 / "eval_report.txt").read_bytes()
        assert (out1 / "eval_raw.csv").read_bytes() == (out2 / "eval_raw.csv").read_bytes()
        assert (out1 / "eval_manifest.txt").read_bytes() == (out2 / "eval_manifest.txt").read_bytes()
        manifest = read_manifest(out1 / "eval_manifest.txt")
        assert any(key.startswith("mape.cluster_scratch") for key in manifest)


class TestErrors:
    def test_usage_error_exit_code(self):
        assert cli.main(["cluster"]) == 1  # missing required flags

    def test_missing_input_is_data_error(self, tmp_path):
        code = cli.main(["ingest", "--outages", str(tmp_path / "no.csv"),
                         "--weather", str(tmp_path / "no2.csv"),
                         "--out-dir", str(tmp_path)])
        assert code == 2

    def test_unknown_command_is_usage_error(self):
        assert cli.main(["frobnicate"]) == 1

    def test_version_flag(self, capsys):
        with pytest.raises(SystemExit) as exc:
            cli.build_parser().parse_args(["--version"])
        assert exc.value.code == 0

    def test_config_file_flag_precedence(self, tmp_path):
        config = tmp_path / "cfg.txt"
        config.write_text("seed = 5\nhorizon_days = 30\n")
        out = tmp_path / "synth"
        assert cli.main(["synth", "--out-dir", str(out), "--config", str(config),
                         "--horizon-days", "20"]) == 0
        manifest = read_manifest(out / "synth_manifest.txt")
        assert manifest["seed"] == "5"  # from config file
        assert manifest["horizon_days"] == "20"  # flag wins

    def test_numerical_failure_exit_code(self, tmp_path):
        data = tmp_path / "data"
        work = tmp_path / "work"
        assert cli.main(["synth", "--out-dir", str(data), "--seed", "1",
                         "--horizon-days", "15"]) == 0
        assert cli.main(["ingest", "--outages", str(data / "outages.csv"),
                         "--weather", str(data / "weather.csv"),
                         "--out-dir", str(work)]) == 0
        # an absurd gamma leaves no core points: numerical failure -> 3
        code = cli.main(["cluster", "--cleaned", str(work / "cleaned.csv"),
                         "--out-dir", str(work), "--gamma", "100000",
                         "--xi", "0.001"])
        assert code == 3
