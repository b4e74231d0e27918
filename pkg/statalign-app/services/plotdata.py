"""
Экспорт данных для графиков: диаграммы рассеяния, KDE по классам и
столбчатые диаграммы macro-F1. Сами графики не строятся.
"""

import logging
from pathlib import Path
from typing import Dict, Optional, Union

import numpy as np
import pandas as pd

from core.exceptions import StatAlignError
from core.settings import get_settings
from services.bench import BenchReport, load_report
from services.dataset import LabeledDataset, load_dataset
from services.models import kde_fit

logger = logging.getLogger(__name__)


def scatter_subsample(ds: LabeledDataset, fraction: float, seed: int) -> pd.DataFrame:
    """Случайная доля строк (без возвращения) для диаграммы рассеяния."""
    size = max(1, int(round(fraction * ds.n)))
    rng = np.random.default_rng(seed)
    rows = np.sort(rng.choice(ds.n, size=size, replace=False))
    frame = pd.DataFrame(ds.features[rows], columns=[f"f{j}" for j in range(ds.d)])
    frame["label"] = ds.labels[rows] if ds.labels is not None else -1
    frame["domain"] = ds.domain_tag
    return frame


def kde_curves(ds: LabeledDataset, points: int) -> pd.DataFrame:
    """KDE каждого признака для каждого класса в длинном формате."""
    frames = []
    groups = ds.classes if ds.labels is not None else [None]
    for class_id in groups:
        rows = np.arange(ds.n) if class_id is None else ds.rows_of(class_id)
        for feature in range(ds.d):
            values = ds.features[rows, feature]
            try:
                model = kde_fit(values)
            except StatAlignError as exc:
                logger.warning(f"Skipping KDE for {ds.domain_tag} f{feature} class {class_id}: {exc}")
                continue
            grid = model.grid(points)
            frames.append(pd.DataFrame({
                "domain": ds.domain_tag,
                "feature": f"f{feature}",
                "label": -1 if class_id is None else class_id,
                "x": grid,
                "density": model.density(grid),
            }))
    if not frames:
        return pd.DataFrame(columns=["domain", "feature", "label", "x", "density"])
    return pd.concat(frames, ignore_index=True)


def bar_data(report: BenchReport) -> pd.DataFrame:
    """Среднее, минимум и максимум macro-F1 по методам."""
    if not report.summary:
        report.summarise()
    return pd.DataFrame(
        [{"method": s.method, "mean": s.mean, "min": s.min, "max": s.max, "n_ok": s.n_ok} for s in report.summary]
    )


def export_plotdata(
    source: Union[BenchReport, LabeledDataset, str, Path],
    out_dir: Optional[Union[str, Path]] = None,
    fraction: Optional[float] = None,
    seed: Optional[int] = None,
    points: Optional[int] = None,
) -> Dict[str, Path]:
    """
    Записывает CSV для графиков.

    Args:
        source: Отчет, путь к report.json или набор данных
        out_dir: Каталог вывода; по умолчанию plots/ рядом с отчетом
        fraction: Доля строк для рассеяния (по умолчанию 0.2)
        seed: Сид прореживания
        points: Число точек сетки KDE

    Returns:
        Словарь имя -> путь записанного файла
    """
    bench = get_settings().bench
    fraction = fraction if fraction is not None else bench.plot_fraction
    seed = seed if seed is not None else bench.seed
    points = points if points is not None else bench.kde_points

    report: Optional[BenchReport] = None
    datasets: Dict[str, LabeledDataset] = {}
    default_dir = Path(bench.out_dir) / "plots"
    if isinstance(source, LabeledDataset):
        datasets[source.domain_tag] = source
    else:
        if not isinstance(source, BenchReport):
            default_dir = Path(source).parent / "plots"
            source = load_report(source)
        report = source
        for name, path in report.artifacts.items():
            if Path(path).is_file():
                datasets[name] = load_dataset(path)
            else:
                logger.warning(f"Artifact '{name}' not found at {path}")

    out_dir = Path(out_dir) if out_dir is not None else default_dir
    out_dir.mkdir(parents=True, exist_ok=True)
    written: Dict[str, Path] = {}

    if report is not None:
        written["bars"] = out_dir / "bars.csv"
        bar_data(report).to_csv(written["bars"], index=False)

    for name, ds in sorted(datasets.items()):
        written[f"scatter_{name}"] = out_dir / f"scatter_{name}.csv"
        scatter_subsample(ds, fraction, seed).to_csv(written[f"scatter_{name}"], index=False)
        written[f"kde_{name}"] = out_dir / f"kde_{name}.csv"
        kde_curves(ds, points).to_csv(written[f"kde_{name}"], index=False)

    logger.info(f"Plot data written to {out_dir} ({len(written)} files)")
    return written
