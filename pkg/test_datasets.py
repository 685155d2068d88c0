import numpy as np
import pytest
from scipy.integrate import trapezoid

from densmat.datasets import (
    Dataset,
    DatasetMeta,
    fit_minmax,
    gen_mixture_1d,
    gen_spirals_2d,
    grid_1d,
    grid_2d,
    load_csv,
    minmax_scale,
    mixture_1d_pdf,
    pca_reduce,
    spiral_points,
    split,
    uniform_box,
    write_csv,
)
from densmat.exceptions import DataError, InvalidArgumentError


class TestGenerators:
    def test_mixture_is_seeded_and_has_the_right_mean(self):
        a = gen_mixture_1d(10_000, seed=3)
        b = gen_mixture_1d(10_000, seed=3)
        assert a.features.shape == (10_000, 1)
        assert np.array_equal(a.features, b.features)
        assert a.features.mean() == pytest.approx(3.5, abs=0.1)

    def test_mixture_pdf_integrates_to_one(self):
        x = np.linspace(-10, 15, 20_001)
        assert trapezoid(mixture_1d_pdf(x), x) == pytest.approx(1.0, abs=1e-6)

    def test_spirals_are_balanced_and_on_their_arms(self):
        data = gen_spirals_2d(300, seed=0, noise=0.0)
        assert np.bincount(data.class_labels())[1:].tolist() == [100, 100, 100]
        radius = np.linalg.norm(data.features, axis=1)
        arm = data.class_labels() - 1
        assert np.allclose(spiral_points(radius, arm), data.features, atol=1e-12)

    def test_spirals_validation(self):
        with pytest.raises(InvalidArgumentError):
            gen_spirals_2d(2, seed=0)
        with pytest.raises(InvalidArgumentError):
            gen_spirals_2d(10, seed=0, noise=-1.0)

    def test_grids_and_uniform_box(self):
        assert grid_1d().shape == (1000, 1)
        assert grid_1d()[0, 0] == -5.0 and grid_1d()[-1, 0] == 10.0
        X = np.array([[0.0, 0.0], [2.0, 1.0]])
        assert grid_2d(X, per_axis=10).shape == (100, 2)
        box = uniform_box(X, 500, seed=0)
        assert box.min() >= 0.0 and box[:, 0].max() <= 2.0 and box[:, 1].max() <= 1.0


class TestCsv:
    def test_round_trip_with_label_column(self, tmp_path):
        data = gen_spirals_2d(30, seed=4)
        path = write_csv(data, tmp_path / "spirals.csv")
        assert path.read_text().splitlines()[0] == "x0,x1,label"
        loaded = load_csv(path, label_column="label", has_header=True)
        assert np.array_equal(loaded.features, data.features)
        assert np.array_equal(loaded.labels, data.labels)
        assert loaded.meta.columns == ["x0", "x1"]

    def test_label_column_by_index_without_header(self, tmp_path):
        path = tmp_path / "plain.csv"
        path.write_text("1,0.5,2.5\n2,1.5,3.5\n")
        loaded = load_csv(path, label_column=0)
        assert loaded.labels.tolist() == [1.0, 2.0]
        assert loaded.features.tolist() == [[0.5, 2.5], [1.5, 3.5]]

    def test_rows_with_nan_or_inf_are_dropped(self, tmp_path):
        path = tmp_path / "holes.csv"
        path.write_text("1.0,2.0\nnan,3.0\n4.0,inf\n5.0,6.0\n")
        assert load_csv(path).features.tolist() == [[1.0, 2.0], [5.0, 6.0]]

    def test_ragged_row_reports_its_line(self, tmp_path):
        path = tmp_path / "ragged.csv"
        path.write_text("a,b\n1,2\n3\n")
        with pytest.raises(DataError) as info:
            load_csv(path, has_header=True)
        assert info.value.line == 3

    def test_unparsable_value(self, tmp_path):
        path = tmp_path / "text.csv"
        path.write_text("1,2\n3,abc\n")
        with pytest.raises(DataError) as info:
            load_csv(path)
        assert info.value.line == 2

    def test_missing_file(self, tmp_path):
        with pytest.raises(DataError):
            load_csv(tmp_path / "absent.csv")

    def test_unknown_label_name(self, tmp_path):
        path = tmp_path / "named.csv"
        path.write_text("a,b\n1,2\n")
        with pytest.raises(InvalidArgumentError):
            load_csv(path, label_column="target", has_header=True)


class TestPreprocessing:
    def test_minmax_maps_to_unit_interval_and_constant_columns_to_zero(self):
        X = np.array([[0.0, 5.0, 1.0], [10.0, 5.0, 3.0], [5.0, 5.0, 2.0]])
        scaler = fit_minmax(X)
        scaled = scaler.transform(X)
        assert scaled.min() == 0.0 and scaled.max() == 1.0
        assert np.all(scaled[:, 1] == 0.0)
        assert np.allclose(scaler.inverse(scaled)[:, [0, 2]], X[:, [0, 2]])

    def test_minmax_scale_records_the_scaler(self):
        data = gen_spirals_2d(30, seed=0)
        scaled, scaler = minmax_scale(data)
        assert scaled.meta.scaler == scaler.to_dict()
        assert np.array_equal(scaled.labels, data.labels)

    def test_pca_finds_the_dominant_direction(self):
        rng = np.random.default_rng(0)
        t = rng.normal(size=200)
        X = np.column_stack([t, 2.0 * t, -t]) + 1e-3 * rng.normal(size=(200, 3))
        data = Dataset(features=X, labels=None, meta=DatasetMeta(source="line"))
        reduced, projection = pca_reduce(data, 1)
        assert reduced.features.shape == (200, 1)
        direction = projection.components[0]
        assert abs(direction @ np.array([1.0, 2.0, -1.0]) / np.sqrt(6.0)) == pytest.approx(1.0, abs=1e-4)
        assert np.allclose(projection.inverse(reduced.features), X, atol=1e-2)

    def test_pca_rank_range(self):
        data = gen_spirals_2d(30, seed=0)
        with pytest.raises(InvalidArgumentError):
            pca_reduce(data, 3)

    def test_split_sizes_and_determinism(self):
        data = gen_spirals_2d(100, seed=0)
        train, test = split(data, test_fraction=0.25, seed=1)
        again, _ = split(data, test_fraction=0.25, seed=1)
        assert (train.n, test.n) == (75, 25)
        assert np.array_equal(train.features, again.features)

    def test_stratified_split_preserves_class_balance(self):
        data = gen_spirals_2d(300, seed=0)
        _, test = split(data, test_fraction=0.2, stratify=True, seed=0)
        assert np.bincount(test.class_labels())[1:].tolist() == [20, 20, 20]

    def test_split_fraction_range(self):
        with pytest.raises(InvalidArgumentError):
            split(gen_spirals_2d(30, seed=0), test_fraction=1.0)
