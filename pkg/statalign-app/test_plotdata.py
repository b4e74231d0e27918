import numpy as np
import pandas as pd
import pytest
from scipy.integrate import trapezoid

from services.bench import BenchReport, MethodRow, default_case_config, run_case
from services.dataset import LabeledDataset
from services.plotdata import bar_data, export_plotdata, kde_curves, scatter_subsample


@pytest.fixture
def dataset():
    rng = np.random.default_rng(0)
    return LabeledDataset(
        features=np.vstack([rng.normal(0.0, 1.0, size=(60, 2)), rng.normal(5.0, 0.5, size=(40, 2))]),
        labels=np.repeat([0, 3], [60, 40]),
        domain_tag="demo",
    )


def test_scatter_subsample_is_deterministic(dataset):
    a = scatter_subsample(dataset, 0.2, seed=4)
    b = scatter_subsample(dataset, 0.2, seed=4)
    pd.testing.assert_frame_equal(a, b)
    assert len(a) == 20
    assert list(a.columns) == ["f0", "f1", "label", "domain"]
    assert not scatter_subsample(dataset, 0.2, seed=5).equals(a)


def test_kde_curves_per_class(dataset):
    curves = kde_curves(dataset, points=300)
    assert list(curves.columns) == ["domain", "feature", "label", "x", "density"]
    assert set(curves["label"]) == {0, 3}
    assert len(curves) == 2 * 2 * 300
    for _, group in curves.groupby(["feature", "label"]):
        assert np.all(group["density"] >= 0)
        assert trapezoid(group["density"], group["x"]) == pytest.approx(1.0, abs=0.02)


def test_constant_feature_is_skipped():
    ds = LabeledDataset(features=np.column_stack([np.ones(10), np.arange(10.0)]), labels=np.zeros(10))
    curves = kde_curves(ds, points=50)
    assert set(curves["feature"]) == {"f1"}


def test_bar_data_from_summary():
    report = BenchReport(case="toy", rows=[
        MethodRow(method="nca", alignment="nca", repeat=0, macro_f1=1.0),
        MethodRow(method="n_stand", alignment="n_stand", repeat=0, macro_f1=0.25),
    ])
    bars = bar_data(report)
    assert bars["method"].tolist() == ["nca", "n_stand"]
    assert bars["mean"].tolist() == [1.0, 0.25]


def test_export_from_dataset(tmp_path, dataset):
    written = export_plotdata(dataset, tmp_path, fraction=0.5, seed=1, points=64)
    assert set(written) == {"scatter_demo", "kde_demo"}
    assert len(pd.read_csv(written["scatter_demo"])) == 50


def test_export_from_report_file(tmp_path):
    config = default_case_config("toy").model_copy(update={"repeats": 1})
    run_case(config, tmp_path)
    written = export_plotdata(tmp_path / "report.json", fraction=0.5, seed=0, points=32)
    assert written["bars"] == tmp_path / "plots" / "bars.csv"
    assert "scatter_nca_source" in written
    assert "kde_nca_target" in written
