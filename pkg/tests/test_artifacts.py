import numpy as np
import pytest

from restopred import artifacts, classify, sdesc
from restopred.errors import ArtifactError
from restopred.neural import (LmConfig, MlpArchitecture, get_params, train_lm)


class TestGenericArtifact:
    def test_round_trip_scalars_and_arrays(self, tmp_path):
        path = tmp_path / "x.txt"
        arr2 = np.array([[1.5, -2.25], [1e-17, 3.0]])
        arr1 = np.array([7, -3, 0], dtype=np.int64)
        artifacts.write_artifact(path, "demo", {"alpha": 0.1, "name": "thing"},
                                 {"m2": arr2, "v1": arr1})
        scalars, arrays = artifacts.read_artifact(path, "demo")
        assert scalars["name"] == "thing"
        assert float(scalars["alpha"]) == 0.1
        assert np.array_equal(arrays["m2"], arr2)
        assert arrays["v1"].dtype == np.int64
        assert np.array_equal(arrays["v1"], arr1)

    def test_version_line_first(self, tmp_path):
        path = tmp_path / "x.txt"
        artifacts.write_artifact(path, "demo", {}, {})
        assert path.read_text().splitlines()[0] == "restopred-artifact/1 kind=demo"

    def test_kind_mismatch_rejected(self, tmp_path):
        path = tmp_path / "x.txt"
        artifacts.write_artifact(path, "demo", {}, {})
        with pytest.raises(ArtifactError, match="expected header"):
            artifacts.read_artifact(path, "other")

    def test_garbage_header_rejected(self, tmp_path):
        path = tmp_path / "x.txt"
        path.write_text("restopred-artifact/999 kind=demo\n")
        with pytest.raises(ArtifactError):
            artifacts.read_artifact(path, "demo")

    def test_missing_file(self, tmp_path):
        with pytest.raises(ArtifactError, match="not found"):
            artifacts.read_artifact(tmp_path / "nope.txt", "demo")


class TestRegressorArtifact:
    def test_round_trip_and_predicts_without_data(self, tmp_path):
        rng = np.random.default_rng(0)
        X = rng.normal(0, 1, (40, 3))
        y = 5 + X[:, 0] * 2 + rng.normal(0, 0.1, 40)
        model = train_lm(MlpArchitecture(3, (4, 2)), X, y, LmConfig(max_epochs=20, seed=0))
        path = tmp_path / "reg.txt"
        artifacts.save_regressor(model, path)
        loaded = artifacts.load_regressor(path)
        assert np.array_equal(get_params(loaded), get_params(model))
        assert loaded.target_scale == model.target_scale
        assert loaded.provenance.epochs_run == model.provenance.epochs_run
        from restopred.neural import predict_batch

        assert np.array_equal(predict_batch(loaded, X), predict_batch(model, X))


class TestSdescArtifact:
    def test_round_trip(self, tmp_path):
        rng = np.random.default_rng(1)
        centers = np.array([[0, 0], [0, 1], [1, 0], [1, 1]], float)
        X = centers[np.repeat(np.arange(4), 50)] + rng.normal(0, 0.05, (200, 2))
        cfg = sdesc.SdescConfig(xi=0.15, gamma=6, kernel_bandwidth="self-tuning",
                                k_range=(2, 5), path="reference", seed=0)
        model = sdesc.fit(X, cfg)
        path = tmp_path / "sdesc.txt"
        artifacts.save_sdesc_model(model, path)
        loaded = artifacts.load_sdesc_model(path)
        assert loaded.k == model.k
        assert np.array_equal(loaded.assignments, model.assignments)
        assert np.array_equal(loaded.codes.codes, model.codes.codes)
        assert np.array_equal(loaded.embedding, model.embedding)
        assert loaded.config == model.config
        assert loaded.dbi_curve == model.dbi_curve


class TestTsneArtifact:
    def test_round_trip_and_routing_identical(self, tmp_path):
        rng = np.random.default_rng(2)
        X = np.vstack([rng.normal(0, 0.3, (30, 2)), rng.normal(5, 0.3, (30, 2))])
        labels = np.repeat([0, 1], 30)
        tmap = classify.fit_tsne(X, labels, classify.TsneConfig(perplexity=8, n_iter=80, seed=0))
        path = tmp_path / "tsne.txt"
        artifacts.save_tsne_map(tmap, path)
        loaded = artifacts.load_tsne_map(path)
        assert np.array_equal(loaded.points, tmap.points)
        assert np.array_equal(loaded.bandwidths, tmap.bandwidths)
        probe = rng.normal(2.5, 1, (10, 2))
        a, _ = classify.route_many(tmap, probe)
        b, _ = classify.route_many(loaded, probe)
        assert np.array_equal(a, b)


class TestManifest:
    def test_round_trip(self, tmp_path):
        path = tmp_path / "m.txt"
        artifacts.write_manifest(path, [("seed", 7), ("mape.global", 12.5), ("note", "x")])
        loaded = artifacts.read_manifest(path)
        assert loaded["seed"] == "7"
        assert float(loaded["mape.global"]) == 12.5

    def test_header_enforced(self, tmp_path):
        path = tmp_path / "m.txt"
        path.write_text("something else\n")
        with pytest.raises(ArtifactError):
            artifacts.read_manifest(path)

    def test_file_hash_stable(self, tmp_path):
        path = tmp_path / "f.bin"
        path.write_bytes(b"hello world")
        assert artifacts.file_sha256(path) == artifacts.file_sha256(path)

    def test_index_hash_order_sensitive(self):
        a = artifacts.index_hash(np.array([1, 2, 3]))
        b = artifacts.index_hash(np.array([3, 2, 1]))
        assert a != b
