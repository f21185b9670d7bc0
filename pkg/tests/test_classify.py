import numpy as np
import pytest
from scipy.spatial.distance import cdist

from restopred import classify
from restopred.errors import TsneError


def three_blobs(seed=0, per=50, spread=0.3):
    rng = np.random.default_rng(seed)
    centers = np.array([[0.0, 0.0], [4.0, 0.0], [2.0, 4.0]])
    truth = np.repeat(np.arange(3), per)
    X = centers[truth] + rng.normal(0, spread, (3 * per, 2))
    return X, truth


@pytest.fixture(scope="module")
def blob_map():
    X, truth = three_blobs()
    cfg = classify.TsneConfig(perplexity=30.0, n_iter=1000, seed=0)
    return classify.fit_tsne(X, truth, cfg), X, truth


class TestJointProbabilities:
    def test_symmetrized_joints_sum_to_one(self):
        rng = np.random.default_rng(1)
        X = rng.normal(0, 1, (25, 4))
        P, _ = classify.joint_probabilities(X, 7.0)
        assert abs(P.sum() - 1.0) < 1e-9
        assert np.array_equal(P, P.T)

    def test_identical_points_maximize_conditional(self):
        rng = np.random.default_rng(2)
        X = rng.normal(0, 1, (20, 3))
        X[7] = X[3]  # j=7 duplicates i=3
        d2 = cdist(X, X, "sqeuclidean")
        cond, _ = classify.conditional_bandwidths(d2, 5.0)
        assert cond[3].argmax() == 7

    def test_perplexity_calibration_within_tolerance(self):
        rng = np.random.default_rng(3)
        X = rng.normal(0, 1, (60, 5))
        d2 = cdist(X, X, "sqeuclidean")
        _, variances = classify.conditional_bandwidths(d2, 12.0)
        achieved = classify._achieved_perplexity(d2, variances)
        assert np.abs(achieved - 12.0).max() < 1e-3


class TestGradient:
    def test_matches_finite_differences(self):
        rng = np.random.default_rng(4)
        X = rng.normal(0, 1, (20, 3))
        P, _ = classify.joint_probabilities(X, 5.0)
        Y = rng.normal(0, 1, (20, 2))
        _, grad = classify.kl_and_grad(P, Y)
        fd = np.empty_like(Y)
        eps = 1e-5
        for i in range(20):
            for j in range(2):
                up = Y.copy()
                up[i, j] += eps
                down = Y.copy()
                down[i, j] -= eps
                fd[i, j] = (classify.kl_and_grad(P, up)[0]
                            - classify.kl_and_grad(P, down)[0]) / (2 * eps)
        rel = np.abs(grad - fd) / np.maximum.reduce(
            [np.abs(grad), np.abs(fd), np.full_like(grad, 1e-3)])
        assert rel.max() < 1e-4


class TestFitTsne:
    def test_kl_halves_on_blobs(self, blob_map):
        tmap, _, _ = blob_map
        assert tmap.kl_trace[-1] < 0.5 * tmap.kl_trace[0]

    def test_kl_trace_nonnegative_and_final_below_initial(self, blob_map):
        tmap, _, _ = blob_map
        assert (tmap.kl_trace >= 0).all()
        assert tmap.kl_trace[-1] <= tmap.kl_trace[0]
        assert len(tmap.kl_trace) == tmap.config.n_iter + 1

    def test_trace_matches_direct_kl(self, blob_map):
        tmap, X, _ = blob_map
        P, _ = classify.joint_probabilities(X, tmap.config.perplexity)
        kl, _ = classify.kl_and_grad(P, tmap.points)
        assert tmap.kl_trace[-1] == pytest.approx(kl, abs=1e-12)

    def test_deterministic(self):
        X, truth = three_blobs(seed=5, per=12)
        cfg = classify.TsneConfig(perplexity=5.0, n_iter=60, seed=3)
        a = classify.fit_tsne(X, truth, cfg)
        b = classify.fit_tsne(X, truth, cfg)
        assert np.array_equal(a.points, b.points)

    def test_too_few_samples(self):
        with pytest.raises(TsneError, match="10 samples"):
            classify.fit_tsne(np.zeros((5, 2)), np.zeros(5),
                              classify.TsneConfig(perplexity=2.0))

    def test_infeasible_perplexity(self):
        X = np.random.default_rng(6).normal(0, 1, (30, 2))
        with pytest.raises(TsneError, match="perplexity"):
            classify.fit_tsne(X, np.zeros(30), classify.TsneConfig(perplexity=15.0))


class TestEmbedUnseen:
    def test_training_row_lands_near_its_map_point(self, blob_map):
        tmap, X, _ = blob_map
        for i in (0, 60, 120):
            y = classify.embed_unseen(tmap, X[i])
            spacing = np.sort(cdist(tmap.points[i : i + 1], tmap.points)[0])[1:6].mean()
            assert np.linalg.norm(y - tmap.points[i]) <= 3.0 * spacing

    def test_convex_combination_of_map_points(self, blob_map):
        tmap, X, _ = blob_map
        y = classify.embed_unseen(tmap, X.mean(axis=0))
        lo = tmap.points.min(axis=0) - 1e-9
        hi = tmap.points.max(axis=0) + 1e-9
        assert (y >= lo).all() and (y <= hi).all()

    def test_identical_rows_identical_embeddings(self, blob_map):
        tmap, X, _ = blob_map
        x = X[11] + 0.05
        assert np.array_equal(classify.embed_unseen(tmap, x),
                              classify.embed_unseen(tmap, x))

    def test_rerun_mode_places_point_with_its_blob(self):
        # the rerun map has its own coordinates, so verify against a refit of
        # the stacked data rather than against the original map
        X, truth = three_blobs(seed=7, per=12)
        cfg = classify.TsneConfig(perplexity=5.0, n_iter=120, seed=0)
        tmap = classify.fit_tsne(X, truth, cfg)
        probe = X[0] + 0.01
        y = classify.embed_unseen(tmap, probe, method="rerun")
        refit = classify.fit_tsne(np.vstack([X, probe[None, :]]),
                                  np.concatenate([truth, [-1]]), cfg)
        assert np.array_equal(y, refit.points[-1])
        dists = [np.linalg.norm(refit.points[:-1][truth == c] - y, axis=1).min()
                 for c in range(3)]
        assert int(np.argmin(dists)) == 0

    def test_unknown_method_rejected(self, blob_map):
        tmap, X, _ = blob_map
        with pytest.raises(ValueError, match="method"):
            classify.embed_unseen(tmap, X[0], method="magic")


class TestRoute:
    def test_duplicate_of_training_row_routes_home(self, blob_map):
        tmap, X, truth = blob_map
        cid, dists = classify.route(tmap, X[80])
        assert cid == truth[80]
        assert set(dists) == {0, 1, 2}

    def test_tie_breaks_to_lower_id_for_equal_sizes(self):
        tmap = classify.TsneMap(
            points=np.array([[0.0, 0.0], [2.0, 0.0]]),
            labels=np.array([0, 1]),
            kl_trace=np.zeros(1),
            config=classify.TsneConfig(),
            high_dim_ref=np.array([[0.0], [2.0]]),
            bandwidths=np.array([1.0, 1.0]),
        )
        cid, dists = classify.route(tmap, np.array([1.0]))
        assert dists[0] == pytest.approx(dists[1])
        assert cid == 0

    def test_tie_breaks_to_larger_cluster(self):
        tmap = classify.TsneMap(
            points=np.array([[0.0, 0.0], [2.0, 0.0], [2.0, 0.0]]),
            labels=np.array([0, 1, 1]),
            kl_trace=np.zeros(1),
            config=classify.TsneConfig(),
            high_dim_ref=np.array([[0.0], [2.0], [2.0]]),
            bandwidths=np.array([1.0, 1.0, 1.0]),
        )
        cid, _ = classify.route(tmap, np.array([1.0]))
        assert cid == 1

    def test_rigid_motion_invariance(self, blob_map):
        tmap, X, _ = blob_map
        theta = 0.7
        R = np.array([[np.cos(theta), -np.sin(theta)], [np.sin(theta), np.cos(theta)]])
        moved = classify.TsneMap(
            points=tmap.points @ R.T + np.array([5.0, -3.0]),
            labels=tmap.labels,
            kl_trace=tmap.kl_trace,
            config=tmap.config,
            high_dim_ref=tmap.high_dim_ref,
            bandwidths=tmap.bandwidths,
        )
        for i in (3, 77, 140):
            a, _ = classify.route(tmap, X[i] + 0.1)
            b, _ = classify.route(moved, X[i] + 0.1)
            assert a == b

    def test_route_many_agrees_with_route(self, blob_map):
        tmap, X, _ = blob_map
        rows = X[::25] + 0.05
        routed, dists = classify.route_many(tmap, rows)
        for i, x in enumerate(rows):
            single, _ = classify.route(tmap, x)
            assert routed[i] == single

    def test_held_out_blob_routing(self):
        X, truth = three_blobs(seed=8)
        cfg = classify.TsneConfig(perplexity=25.0, n_iter=600, seed=0)
        tmap = classify.fit_tsne(X, truth, cfg)
        rng = np.random.default_rng(9)
        centers = np.array([[0.0, 0.0], [4.0, 0.0], [2.0, 4.0]])
        unseen_truth = np.repeat(np.arange(3), 40)
        unseen = centers[unseen_truth] + rng.normal(0, 0.3, (120, 2))
        routed, _ = classify.route_many(tmap, unseen)
        assert (routed != unseen_truth).mean() <= 0.05


class TestExport:
    def test_plot_data_csv(self, blob_map, tmp_path):
        tmap, _, _ = blob_map
        path = tmp_path / "pts.csv"
        classify.export_plot_data(tmap, path)
        lines = path.read_text().splitlines()
        assert lines[0] == "x,y,label"
        assert len(lines) == len(tmap.points) + 1
