import itertools

import numpy as np
import pytest
from scipy.stats import rankdata

import robustkde as rk
from robustkde import (
    Dataset, DensityModel, KernelSpec, LossSpec,
    fit_kde, kl_divergence, roc_auc, run_benchmark, sample_from_model,
    signed_rank_across_datasets, wilcoxon_signed_rank,
)
from robustkde.evaluation import (
    BenchmarkRow, _exact_signed_rank_counts, rows_to_csv, rows_to_json,
)
from robustkde.exceptions import DataError, UnsupportedError

GAUSS1 = KernelSpec("gaussian", 1.0, 1)


class TestSampling:
    def test_single_point_clt(self):
        model = fit_kde(np.array([[3.0]]), GAUSS1)
        count = 40_000
        xs = sample_from_model(model, count, seed=1)
        assert abs(xs.mean() - 3.0) < 3.0 / np.sqrt(count)

    def test_point_mass_weights(self):
        pts = np.array([[0.0], [50.0], [100.0]])
        model = DensityModel(kind="rkde", kernel=GAUSS1, train=pts,
                             weights=np.array([0.0, 1.0, 0.0]), loss=LossSpec("quadratic"))
        xs = sample_from_model(model, 500, seed=2)
        assert np.all(np.abs(xs - 50.0) < 6.0)

    def test_deterministic(self):
        model = fit_kde(np.random.default_rng(3).normal(size=(10, 2)),
                        KernelSpec("gaussian", 0.5, 2))
        a = sample_from_model(model, 100, seed=7)
        b = sample_from_model(model, 100, seed=7)
        np.testing.assert_array_equal(a, b)

    def test_vkde_uses_per_point_sigma(self):
        pts = np.array([[0.0], [100.0]])
        model = rk.fit_vkde(pts, GAUSS1)
        xs = sample_from_model(model, 2000, seed=4)
        assert xs.shape == (2000, 1)

    def test_student_rejected(self):
        model = fit_kde(np.zeros((2, 1)), KernelSpec("student", 1.0, 1, nu=1.0))
        with pytest.raises(UnsupportedError):
            sample_from_model(model, 10, seed=5)


class TestKlDivergence:
    def test_identical_models(self):
        model = fit_kde(np.random.default_rng(6).normal(size=(15, 1)), GAUSS1)
        est = kl_divergence(model, model, 20_000, seed=8)
        assert est.value == 0.0 and not est.infinite

    def test_gaussian_closed_form(self):
        # single bumps at distance 2, unit bandwidth: KL(N(0,1)||N(2,1)) = 2
        m0 = fit_kde(np.array([[0.0]]), GAUSS1)
        m2 = fit_kde(np.array([[2.0]]), GAUSS1)
        est = kl_divergence(m0, m2, 100_000, seed=9)
        assert abs(est.value - 2.0) <= 3 * est.stderr

    def test_clipping_flagged(self):
        m0 = fit_kde(np.array([[0.0]]), GAUSS1)
        far = fit_kde(np.array([[1e4]]), KernelSpec("gaussian", 0.01, 1))
        est = kl_divergence(m0, far, 500, seed=10)
        assert est.infinite
        assert est.value == pytest.approx(700.0)

    def test_dimension_checked(self):
        m1 = fit_kde(np.zeros((2, 1)), GAUSS1)
        m2 = fit_kde(np.zeros((2, 2)), KernelSpec("gaussian", 1.0, 2))
        with pytest.raises(DataError):
            kl_divergence(m1, m2, 10, seed=0)


class TestRocAuc:
    def test_perfect_separation(self):
        model = fit_kde(np.array([[0.0]]), GAUSS1)
        rep = roc_auc(model, np.array([[0.1], [0.2]]), np.array([[4.0], [9.0]]))
        assert rep.auc == 1.0

    def test_identical_distributions(self):
        model = fit_kde(np.array([[0.0]]), GAUSS1)
        same = np.array([[0.1], [3.0]])
        rep = roc_auc(model, same, same)
        assert rep.auc == 0.5

    def test_hand_ranked_case(self):
        # densities: nominal {k(0.1), k(0.2)} both above anomalous {k(1), k(3)}
        model = fit_kde(np.array([[0.0]]), GAUSS1)
        rep = roc_auc(model, np.array([[0.1], [0.2]]), np.array([[1.0], [3.0]]))
        assert rep.auc == 1.0

    def test_roc_monotone_and_anchored(self):
        rng = np.random.default_rng(11)
        model = fit_kde(rng.normal(size=(20, 1)), GAUSS1)
        rep = roc_auc(model, rng.normal(size=(30, 1)), rng.uniform(2, 6, size=(25, 1)))
        roc = np.array(rep.roc)
        assert tuple(roc[0]) == (0.0, 0.0)
        assert tuple(roc[-1]) == (1.0, 1.0)
        assert np.all(np.diff(roc[:, 0]) >= 0)
        assert np.all(np.diff(roc[:, 1]) >= 0)

    def test_rank_auc_equals_trapezoid(self):
        rng = np.random.default_rng(12)
        for _ in range(5):
            model = fit_kde(rng.normal(size=(15, 1)), GAUSS1)
            nom = rng.normal(size=(20, 1))
            anom = rng.normal(1.0, 2.0, size=(17, 1))
            rep = roc_auc(model, nom, anom)
            roc = np.array(rep.roc)
            assert rep.auc == pytest.approx(np.trapezoid(roc[:, 1], roc[:, 0]), abs=1e-9)

    def test_empty_rejected(self):
        model = fit_kde(np.array([[0.0]]), GAUSS1)
        with pytest.raises(DataError):
            roc_auc(model, np.empty((0, 1)), np.array([[1.0]]))


def _brute_force_two_sided_p(h):
    h = np.asarray(h, dtype=float)
    h = h[h != 0]
    ranks = rankdata(np.abs(h))
    r1 = ranks[h > 0].sum()
    r2 = ranks[h < 0].sum()
    t = min(r1, r2)
    total = ranks.sum()
    count = 0
    for signs in itertools.product((False, True), repeat=len(h)):
        w_plus = sum(r for r, s in zip(ranks, signs) if s)
        if w_plus <= t + 1e-12 or w_plus >= total - t - 1e-12:
            count += 1
    return count / 2 ** len(h)


class TestWilcoxon:
    def test_paper_critical_value_n15(self):
        # 15 distinct magnitudes; negatives placed to hit T = 25 and T = 26
        mags = np.arange(1.0, 16.0)
        h25 = mags.copy()
        h25[[11, 12]] *= -1  # ranks 12 + 13 = 25
        r = wilcoxon_signed_rank(h25)
        assert r.t_stat == 25.0
        assert r.p_value <= 0.05
        h26 = mags.copy()
        h26[[10, 14]] *= -1  # ranks 11 + 15 = 26
        r2 = wilcoxon_signed_rank(h26)
        assert r2.t_stat == 26.0
        assert r2.p_value > 0.05

    def test_all_same_sign(self):
        r = wilcoxon_signed_rank(np.arange(1.0, 9.0))
        assert r.t_stat == 0.0
        assert r.p_value == pytest.approx(2.0 / 2 ** 8)

    def test_tied_pair(self):
        r = wilcoxon_signed_rank([1.0, -1.0])
        assert r.r1 == r.r2 == 1.5
        assert r.p_value == 1.0

    def test_zeros_dropped(self):
        r = wilcoxon_signed_rank([0.0, 1.0, -2.0, 0.0])
        assert r.n_effective == 2

    def test_all_zero_rejected(self):
        with pytest.raises(DataError):
            wilcoxon_signed_rank([0.0, 0.0])

    def test_rank_sum_identity(self):
        rng = np.random.default_rng(13)
        for _ in range(10):
            h = rng.normal(size=rng.integers(2, 20))
            h = h[h != 0]
            r = wilcoxon_signed_rank(h)
            n = r.n_effective
            assert r.r1 + r.r2 == pytest.approx(n * (n + 1) / 2)
            assert r.t_stat <= min(r.r1, r.r2) + 1e-12

    def test_exact_matches_brute_force(self):
        rng = np.random.default_rng(14)
        for _ in range(8):
            n = int(rng.integers(2, 11))
            h = np.round(rng.normal(size=n), 1)
            if np.all(h == 0):
                continue
            r = wilcoxon_signed_rank(h)
            assert r.p_value == pytest.approx(_brute_force_two_sided_p(h), abs=1e-12)

    def test_dp_distribution_sums_to_one(self):
        for n in (4, 8, 12):
            ranks = rankdata(np.arange(1, n + 1))
            counts = _exact_signed_rank_counts(np.rint(2 * ranks).astype(int))
            assert int(sum(counts)) == 2 ** n

    def test_normal_approximation_close_to_exact(self):
        # n = 26 routes to the normal path; compare against the exact DP
        rng = np.random.default_rng(15)
        h = rng.normal(size=26)
        r = wilcoxon_signed_rank(h)
        ranks = rankdata(np.abs(h))
        counts = _exact_signed_rank_counts(np.rint(2 * ranks).astype(int))
        total = int(np.rint(2 * ranks).astype(int).sum())
        t2 = int(round(2 * r.t_stat))
        exact = min(1.0, (int(sum(counts[:t2 + 1])) + int(sum(counts[total - t2:]))) / 2 ** 26)
        assert r.p_value == pytest.approx(exact, abs=0.01)


def _toy_dataset(seed=0, n=120, name="toy"):
    rng = np.random.default_rng(seed)
    nominal = rng.normal(size=(n, 2))
    pool = rng.uniform(-6, 6, size=(60, 2))
    return Dataset(name, nominal, pool)


class TestBenchmark:
    def test_table_shape_and_determinism(self):
        ds = _toy_dataset()
        rows1 = run_benchmark(ds, ["kde", "rkde"], [0.0, 0.2], 2, seed=21)
        rows2 = run_benchmark(ds, ["kde", "rkde"], [0.0, 0.2], 2, seed=21)
        assert len(rows1) == 2 * 2 * 2
        assert rows1 == rows2

    def test_anomaly_proportion_recorded(self):
        ds = _toy_dataset(1)
        rows = run_benchmark(ds, ["kde"], [0.25], 1, seed=22)
        assert rows[0].anomaly_proportion == pytest.approx(0.25 / 1.25)

    def test_epsilon_zero_keeps_train_nominal(self):
        # with eps = 0 the whole pool stays available as anomalous test data,
        # and mix_contamination adds nothing (checked in test_data); here the
        # row must still carry a finite AUC
        ds = _toy_dataset(2)
        rows = run_benchmark(ds, ["kde"], [0.0], 1, seed=23)
        assert np.isfinite(rows[0].auc)

    def test_respects_dataset_partitions(self):
        ds0 = _toy_dataset(3)
        parts = ((np.arange(0, 60), np.arange(60, 120)),)
        ds = Dataset(ds0.name, ds0.nominal, ds0.contaminating, partitions=parts)
        rows = run_benchmark(ds, ["kde"], [0.0], 1, seed=24)
        assert len(rows) == 1
        with pytest.raises(DataError):
            run_benchmark(ds, ["kde"], [0.0], 2, seed=24)

    def test_unknown_estimator_rejected(self):
        with pytest.raises(DataError):
            run_benchmark(_toy_dataset(4), ["svm"], [0.0], 1, seed=25)

    def test_thread_count_does_not_change_results(self, monkeypatch):
        ds = _toy_dataset(5)
        rows1 = run_benchmark(ds, ["kde"], [0.0, 0.2], 3, seed=26)
        monkeypatch.setenv("RKDE_THREADS", "3")
        rows2 = run_benchmark(ds, ["kde"], [0.0, 0.2], 3, seed=26)
        assert rows1 == rows2


class TestSignedRankAcrossDatasets:
    def test_known_winner(self):
        rows = []
        for k in range(6):
            for est_name, kl in (("kde", 5.0 + k), ("rkde", 1.0 + 0.1 * k)):
                rows.append(BenchmarkRow(dataset=f"d{k}", estimator=est_name, epsilon=0.2,
                                         anomaly_proportion=0.2 / 1.2, permutation=0,
                                         kl=kl, kl_infinite=False, auc=0.5, seed=0))
        res = signed_rank_across_datasets(rows, "kl", "rkde", "kde", 0.2)
        # rkde has smaller KL on all 6 datasets: R1 takes the full rank sum
        assert res.r1 == 21.0 and res.r2 == 0.0
        assert res.p_value == pytest.approx(2 / 2 ** 6)


class TestSerialization:
    def test_csv_and_json(self, tmp_path):
        ds = _toy_dataset(6, n=60)
        rows = run_benchmark(ds, ["kde"], [0.0], 1, seed=27)
        csv_path = tmp_path / "rows.csv"
        json_path = tmp_path / "rows.json"
        rows_to_csv(rows, csv_path)
        rows_to_json(rows, json_path)
        lines = csv_path.read_text().strip().splitlines()
        assert lines[0].split(",")[:3] == ["dataset", "estimator", "epsilon"]
        assert len(lines) == 1 + len(rows)
        import json as json_mod
        doc = json_mod.loads(json_path.read_text())
        assert len(doc) == len(rows)
        assert doc[0]["roc"][0] == [0.0, 0.0]
