import numpy as np
import pytest

from robustkde import Dataset, load_csv, make_rng, mix_contamination, synth_gaussian_mixture, synth_uniform_box
from robustkde.exceptions import DataError


class TestLoadCsv:
    def test_label_split(self, tmp_path):
        p = tmp_path / "d.csv"
        p.write_text("x,y,label\n1,2,0\n3,4,0\n5,6,1\n")
        ds = load_csv(p, "label", ["0"])
        assert ds.nominal.shape == (2, 2)
        assert ds.contaminating.shape == (1, 2)
        np.testing.assert_array_equal(ds.nominal, [[1, 2], [3, 4]])
        assert ds.name == "d"

    def test_non_numeric_cell_reports_line(self, tmp_path):
        p = tmp_path / "bad.csv"
        p.write_text("x,label\n1,0\noops,0\n3,1\n")
        with pytest.raises(DataError, match=r"lines \[3\]"):
            load_csv(p, "label", ["0"])

    def test_missing_label_column(self, tmp_path):
        p = tmp_path / "nolabel.csv"
        p.write_text("x,y\n1,2\n")
        with pytest.raises(DataError, match="label column"):
            load_csv(p, "label", ["0"])

    def test_empty_file(self, tmp_path):
        p = tmp_path / "empty.csv"
        p.write_text("")
        with pytest.raises(DataError, match="header"):
            load_csv(p, "label", ["0"])

    def test_no_nominal_rows(self, tmp_path):
        p = tmp_path / "allcontam.csv"
        p.write_text("x,label\n1,1\n")
        with pytest.raises(DataError, match="no rows matched"):
            load_csv(p, "label", ["0"])


class TestSynthGaussianMixture:
    def test_single_component_covariance(self):
        cov = np.array([[2.0, 0.5], [0.5, 1.0]])
        xs = synth_gaussian_mixture([[0.0, 0.0]], [cov], [1.0], 20_000, seed=1)
        emp = np.cov(xs, rowvar=False)
        np.testing.assert_allclose(emp, cov, rtol=0.10)

    def test_degenerate_mixing_weight(self):
        xs = synth_gaussian_mixture([[0.0], [100.0]],
                                    [np.eye(1) * 0.01, np.eye(1) * 0.01],
                                    [1.0, 0.0], 300, seed=2)
        assert np.all(np.abs(xs) < 2.0)

    def test_seed_reproducible(self):
        args = ([[0.0, 1.0]], [np.eye(2)], [1.0], 50)
        np.testing.assert_array_equal(synth_gaussian_mixture(*args, seed=3),
                                      synth_gaussian_mixture(*args, seed=3))

    def test_weights_validated(self):
        with pytest.raises(DataError):
            synth_gaussian_mixture([[0.0]], [np.eye(1)], [0.4], 10, seed=4)


class TestSynthUniformBox:
    def test_bounds_respected(self):
        xs = synth_uniform_box([(0.0, 1.0), (2.0, 3.0)], 1000, seed=5)
        assert xs.shape == (1000, 2)
        assert xs[:, 0].min() >= 0.0 and xs[:, 0].max() <= 1.0
        assert xs[:, 1].min() >= 2.0 and xs[:, 1].max() <= 3.0

    def test_empty(self):
        assert synth_uniform_box([(0.0, 1.0)], 0, seed=6).shape == (0, 1)

    def test_mean_near_center(self):
        n = 30_000
        xs = synth_uniform_box([(-1.0, 3.0)], n, seed=7)
        # uniform on [-1, 3]: mean 1, sd = 4/sqrt(12)
        assert abs(xs.mean() - 1.0) < 3 * (4 / np.sqrt(12)) / np.sqrt(n)

    def test_bad_bounds(self):
        with pytest.raises(DataError):
            synth_uniform_box([(1.0, 0.0)], 5, seed=8)


class TestMixContamination:
    def test_epsilon_zero(self):
        nom = np.arange(10.0).reshape(5, 2)
        train, mask = mix_contamination(nom, np.ones((4, 2)), 0.0, seed=9)
        np.testing.assert_array_equal(train, nom)
        assert mask.sum() == 0 and mask.shape == (5,)

    def test_floor_rule(self):
        nom = np.zeros((10, 1))
        pool = np.arange(100.0)[:, None]
        train, mask = mix_contamination(nom, pool, 0.3, seed=10)
        assert mask.sum() == 3           # floor(0.3 * 10)
        assert train.shape == (13, 1)
        assert mask.shape == (13,)

    def test_no_duplicate_pool_rows(self):
        nom = np.zeros((20, 1))
        pool = np.arange(30.0)[:, None]
        train, mask = mix_contamination(nom, pool, 0.9, seed=11)
        drawn = train[mask][:, 0]
        assert len(np.unique(drawn)) == len(drawn) == 18

    def test_pool_too_small(self):
        with pytest.raises(DataError):
            mix_contamination(np.zeros((10, 1)), np.zeros((2, 1)), 0.5, seed=12)

    def test_reproducible(self):
        nom = np.zeros((8, 1))
        pool = np.arange(50.0)[:, None]
        a, _ = mix_contamination(nom, pool, 0.5, seed=13)
        b, _ = mix_contamination(nom, pool, 0.5, seed=13)
        np.testing.assert_array_equal(a, b)


class TestDataset:
    def test_partition_overlap_rejected(self):
        with pytest.raises(DataError):
            Dataset("x", np.zeros((4, 1)), np.zeros((0, 1)),
                    partitions=((np.array([0, 1]), np.array([1, 2])),))

    def test_nan_rejected(self):
        with pytest.raises(DataError):
            Dataset("x", np.array([[np.nan]]), np.zeros((0, 1)))

    def test_dimension_mismatch(self):
        with pytest.raises(DataError):
            Dataset("x", np.zeros((2, 2)), np.zeros((2, 3)))


class TestMakeRng:
    def test_streams_reproducible_and_distinct(self):
        a = make_rng(42, 1).random(5)
        b = make_rng(42, 1).random(5)
        c = make_rng(42, 2).random(5)
        np.testing.assert_array_equal(a, b)
        assert not np.array_equal(a, c)

    def test_philox_backing(self):
        assert isinstance(make_rng(0).bit_generator, np.random.Philox)
