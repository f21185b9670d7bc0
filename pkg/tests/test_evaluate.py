import numpy as np
import pytest

from restopred import evaluate
from restopred.artifacts import index_hash
from restopred.neural import LmConfig, MlpArchitecture


class TestSplitIndices:
    def test_fractions_and_disjointness(self):
        train, val, test = evaluate.split_indices(1000, seed=3)
        assert len(train) == 700 and len(val) == 150 and len(test) == 150
        combined = np.concatenate([train, val, test])
        assert len(np.unique(combined)) == 1000

    def test_reproducible_given_seed(self):
        a = evaluate.split_indices(500, seed=9)
        b = evaluate.split_indices(500, seed=9)
        for x, y in zip(a, b):
            assert np.array_equal(x, y)
        assert index_hash(a[0]) == index_hash(b[0])

    def test_different_seeds_differ(self):
        a = evaluate.split_indices(500, seed=1)
        b = evaluate.split_indices(500, seed=2)
        assert not np.array_equal(a[0], b[0])


def toy_problem(seed=0, m=400, k=2):
    """Clustered regression where cluster id shifts the target baseline."""
    rng = np.random.default_rng(seed)
    assignments = rng.integers(0, k, m)
    X = rng.normal(0, 1, (m, 3))
    X[:, 0] += assignments * 2.0
    y = 100.0 * (assignments + 1) + 8.0 * X[:, 1] + rng.normal(0, 3, m)
    return X, y, assignments


class TestRunComparison:
    def test_variants_present(self):
        X, y, assignments = toy_problem()
        report = evaluate.run_comparison(
            X, y, assignments, seed=0,
            arch=MlpArchitecture(3, (4,)), cfg=LmConfig(max_epochs=25, seed=0),
        )
        assert set(report.comparison) == {"global", "cluster_scratch", "cluster_transfer"}
        assert report.variant_errors == {}
        assert report.global_metrics is not None
        for metrics in report.comparison["cluster_scratch"].values():
            assert metrics.mape_pct >= 0
            assert metrics.pct_within[30.0] <= metrics.pct_within[60.0] <= metrics.pct_within[90.0]

    def test_degenerate_single_cluster_matches_global_exactly(self):
        X, y, _ = toy_problem(seed=1)
        assignments = np.zeros(len(y), dtype=int)
        report = evaluate.run_comparison(
            X, y, assignments, seed=0,
            arch=MlpArchitecture(3, (4,)), cfg=LmConfig(max_epochs=20, seed=0),
            include_transfer=False,
        )
        g = report.comparison["global"][0]
        s = report.comparison["cluster_scratch"][0]
        assert g.mape_pct == s.mape_pct
        assert g.pred_range_min == s.pred_range_min
        raw_g = report.raw["global"]
        raw_s = report.raw["cluster_scratch"]
        assert raw_g == raw_s

    def test_improvement_ratio_and_difference(self):
        X, y, assignments = toy_problem(seed=2)
        report = evaluate.run_comparison(
            X, y, assignments, seed=0,
            arch=MlpArchitecture(3, (4,)), cfg=LmConfig(max_epochs=25, seed=0),
            include_transfer=False,
        )
        for c in report.comparison["global"]:
            ratio, diff = report.improvement("global", "cluster_scratch", c)
            base = report.comparison["global"][c].mape_pct
            new = report.comparison["cluster_scratch"][c].mape_pct
            assert diff == pytest.approx(base - new)
            assert ratio == pytest.approx((base - new) / new * 100.0)

    def test_split_hashes_recorded(self):
        X, y, assignments = toy_problem(seed=3, m=200)
        report = evaluate.run_comparison(
            X, y, assignments, seed=7,
            arch=MlpArchitecture(3, (3,)), cfg=LmConfig(max_epochs=10, seed=0),
            include_transfer=False,
        )
        train, val, test = evaluate.split_indices(200, 7)
        assert report.split_hashes["train"] == index_hash(train)
        assert report.split_hashes["test"] == index_hash(test)


class TestReportSerialization:
    def make_report(self):
        X, y, assignments = toy_problem(seed=4, m=300)
        return evaluate.run_comparison(
            X, y, assignments, seed=0,
            arch=MlpArchitecture(3, (3,)), cfg=LmConfig(max_epochs=15, seed=0),
        )

    def test_raw_predictions_recompute_bit_identically(self, tmp_path):
        from restopred.metrics import mape

        report = self.make_report()
        path = tmp_path / "raw.csv"
        evaluate.write_raw_predictions(report, path)
        loaded = evaluate.read_raw_predictions(path)
        for variant, clusters in loaded.items():
            for c, (actual, predicted) in clusters.items():
                assert mape(actual, predicted) == report.comparison[variant][c].mape_pct

    def test_text_report_written(self, tmp_path):
        report = self.make_report()
        path = tmp_path / "report.txt"
        evaluate.write_report_text(report, path)
        text = path.read_text()
        assert "[global]" in text
        assert "[improvement: cluster_scratch vs global]" in text


class TestClusterMetricsRangeModes:
    def test_iqr_mode(self):
        actual = np.array([100.0, 100.0, 100.0, 100.0])
        predicted = np.array([100.0, 110.0, 120.0, 140.0])
        mae = evaluate.cluster_metrics(actual, predicted).pred_range_min
        iqr = evaluate.cluster_metrics(actual, predicted, range_mode="iqr").pred_range_min
        assert mae == pytest.approx(17.5)
        err = np.abs(actual - predicted)
        q75, q25 = np.percentile(err, [75, 25])
        assert iqr == pytest.approx(q75 - q25)

    def test_unknown_mode_rejected(self):
        with pytest.raises(ValueError, match="range_mode"):
            evaluate.cluster_metrics(np.ones(3), np.ones(3), range_mode="median")


class TestVariantErrorFlagging:
    def test_transfer_flagged_when_a_cluster_lacks_validation_rows(self):
        rng = np.random.default_rng(5)
        m = 60
        X = rng.normal(0, 1, (m, 2))
        y = 50 + 5 * X[:, 0] + rng.normal(0, 1, m)
        assignments = np.zeros(m, dtype=int)
        # one tiny cluster that will miss the validation split entirely
        train_idx, val_idx, test_idx = evaluate.split_indices(m, seed=0)
        lonely = train_idx[0]
        assignments[lonely] = 1
        report = evaluate.run_comparison(
            X, y, assignments, seed=0,
            arch=MlpArchitecture(2, (2,)), cfg=LmConfig(max_epochs=5, seed=0),
        )
        assert "cluster_transfer" in report.variant_errors
