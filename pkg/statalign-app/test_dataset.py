import numpy as np
import pytest

from core.exceptions import (
    DatasetError, DatasetParseError, DimensionMismatchError,
    EmptySelectionError, UnknownClassError, UnknownCovariateError
)
from services.dataset import (
    CovariatePredicate, LabeledDataset, class_index, concat_datasets, covariate_rows,
    downsample_class, load_dataset, remove_class, save_dataset, select_by_covariate, select_rows
)


def make_dataset(seed=0, counts=(30, 20, 10)):
    rng = np.random.default_rng(seed)
    labels = np.concatenate([np.full(c, k) for k, c in enumerate(counts)])
    n = labels.size
    return LabeledDataset(
        features=rng.normal(size=(n, 3)),
        labels=labels,
        domain_tag="synthetic",
        covariates={"T": rng.uniform(-10, 20, size=n)},
    )


def test_class_index_partitions_rows():
    ds = make_dataset()
    index = class_index(ds)
    assert index.counts() == {0: 30, 1: 20, 2: 10}
    rows = np.sort(np.concatenate([index[c] for c in ds.classes]))
    np.testing.assert_array_equal(rows, np.arange(ds.n))


def test_features_are_read_only():
    ds = make_dataset()
    with pytest.raises(ValueError):
        ds.features[0, 0] = 1.0


def test_rejects_non_finite_features():
    with pytest.raises(DatasetError):
        LabeledDataset(features=np.array([[1.0, np.nan]]))


def test_rejects_label_length_mismatch():
    with pytest.raises(DatasetError):
        LabeledDataset(features=np.zeros((3, 2)), labels=np.array([0, 1]))


def test_downsample_keeps_exact_count_and_other_classes():
    ds = make_dataset()
    out = downsample_class(ds, 1, 5, seed=3)
    assert out.rows_of(1).size == 5
    assert out.rows_of(0).size == 30
    assert out.rows_of(2).size == 10
    # Порядок строк сохраняется
    assert np.all(np.diff(out.index) > 0)


def test_downsample_is_deterministic_per_seed():
    ds = make_dataset()
    a = downsample_class(ds, 0, 7, seed=11)
    b = downsample_class(ds, 0, 7, seed=11)
    np.testing.assert_array_equal(a.index, b.index)


def test_downsample_to_zero_and_full():
    ds = make_dataset()
    assert 2 not in downsample_class(ds, 2, 0, seed=0).classes
    assert downsample_class(ds, 2, 10, seed=0).n == ds.n


def test_downsample_errors():
    ds = make_dataset()
    with pytest.raises(UnknownClassError):
        downsample_class(ds, 7, 1, seed=0)
    with pytest.raises(DatasetError):
        downsample_class(ds, 2, 11, seed=0)


def test_remove_class():
    ds = make_dataset()
    out = remove_class(ds, 1)
    assert out.classes == [0, 2]
    assert out.n == 40
    with pytest.raises(UnknownClassError):
        remove_class(out, 1)


def test_select_by_covariate():
    ds = make_dataset()
    predicate = CovariatePredicate.parse("< 0")
    cold = select_by_covariate(ds, "T", predicate, max_n=None, seed=0)
    assert np.all(cold.covariates["T"] < 0)
    assert cold.n == int(np.sum(ds.covariates["T"] < 0))

    capped = select_by_covariate(ds, "T", CovariatePredicate(">=", 0.0), max_n=5, seed=1)
    assert capped.n == 5
    assert np.all(capped.covariates["T"] >= 0)


def test_covariate_rows_among_subset():
    ds = make_dataset()
    rows = covariate_rows(ds, "T", CovariatePredicate(">", -100.0), None, seed=0, among=ds.normal_rows)
    np.testing.assert_array_equal(rows, ds.normal_rows)


def test_covariate_errors():
    ds = make_dataset()
    with pytest.raises(UnknownCovariateError):
        select_by_covariate(ds, "humidity", CovariatePredicate("<", 0.0), None, seed=0)
    with pytest.raises(EmptySelectionError):
        select_by_covariate(ds, "T", CovariatePredicate(">", 1e6), None, seed=0)
    with pytest.raises(DatasetError):
        CovariatePredicate.parse("about 3")


def test_select_rows_and_concat():
    ds = make_dataset()
    head = select_rows(ds, 0, 20)
    np.testing.assert_array_equal(head.features, ds.features[:20])
    with pytest.raises(EmptySelectionError):
        select_rows(ds, 100, None)

    merged = concat_datasets([head, select_rows(ds, 20, None)], "merged")
    np.testing.assert_array_equal(merged.features, ds.features)
    np.testing.assert_array_equal(merged.labels, ds.labels)
    np.testing.assert_array_equal(merged.covariates["T"], ds.covariates["T"])

    with pytest.raises(DimensionMismatchError):
        concat_datasets([ds, LabeledDataset(features=np.zeros((2, 2)))], "bad")


def test_save_load_is_bit_exact(tmp_path):
    ds = make_dataset(seed=5)
    csv_path, manifest_path = save_dataset(ds, tmp_path / "domain.csv")
    assert manifest_path.is_file()
    loaded = load_dataset(csv_path)
    np.testing.assert_array_equal(loaded.features, ds.features)
    np.testing.assert_array_equal(loaded.labels, ds.labels)
    np.testing.assert_array_equal(loaded.covariates["T"], ds.covariates["T"])
    assert loaded.domain_tag == "synthetic"


def test_load_reports_bad_cell(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text("f0,f1,label\n1.0,2.0,0\n3.0,abc,1\n")
    with pytest.raises(DatasetParseError) as info:
        load_dataset(path)
    assert info.value.row == 1
    assert info.value.column == "f1"


def test_load_reports_short_label_column(tmp_path):
    path = tmp_path / "short.csv"
    path.write_text("f0,label\n1.0,0\n2.0,\n")
    with pytest.raises(DatasetParseError) as info:
        load_dataset(path)
    assert info.value.row == 1


def test_load_missing_file(tmp_path):
    with pytest.raises(DatasetError):
        load_dataset(tmp_path / "absent.csv")


def test_covariate_cap_above_match_count_keeps_every_match():
    rng = np.random.default_rng(3)
    temperature = np.concatenate([rng.uniform(-15, -0.1, size=110), rng.uniform(0.0, 25, size=190)])
    rng.shuffle(temperature)
    ds = LabeledDataset(
        features=rng.normal(size=(300, 3)),
        labels=np.zeros(300, dtype=np.int64),
        domain_tag="bridge",
        covariates={"T": temperature},
    )
    rows = covariate_rows(ds, "T", CovariatePredicate.parse("<0"), max_n=200, seed=0)
    np.testing.assert_array_equal(rows, np.flatnonzero(temperature < 0))
    assert rows.size == 110
    assert select_by_covariate(ds, "T", CovariatePredicate.parse("<0"), max_n=200, seed=9).n == 110
