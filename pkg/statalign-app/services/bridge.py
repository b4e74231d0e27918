"""
Конвейер частичной адаптации для двух мостов на синтетических данных.

Синтетический генератор заменяет реальные данные мониторинга: источник
(конструкция с повреждением) и цель до и после ремонта. У каждого домена
два нормальных состояния, разделенных температурой (окружающая и
низкая), повреждение есть только в источнике.

Этапы:
  1. NCORAL: цель после ремонта выравнивается на цель до ремонта по первым
     n строкам каждого набора.
  2. NCORAL: объединенная цель выравнивается на источник по нормальным
     строкам, сбалансированным по температуре.
  3. Гауссова смесь из трех компонент на объединенных данных после
     прореживания строк окружающего состояния.
"""

import logging
import time
from pathlib import Path
from typing import Any, Dict, Optional, Tuple

import numpy as np
import pandas as pd
from pydantic import BaseModel, Field

from core.settings import get_settings
from services.alignment import AlignmentResult, ncoral
from services.bench import CELL_ERRORS, BenchReport, CaseConfig, MethodRow, method_seed, repeat_seeds
from services.dataset import (
    NORMAL_CLASS, CovariatePredicate, LabeledDataset, concat_datasets, covariate_rows, save_dataset, select_rows
)
from services.metrics import confusion, macro_f1
from services.models import gmm_fit, gmm_predict

logger = logging.getLogger(__name__)

DAMAGE_CLASS = 1
TEMPERATURE = "T"
CONDITIONS = ("source_ambient", "source_cold", "source_damage", "target_ambient", "target_cold")


class DomainShift(BaseModel):
    """Преобразование латентных признаков в признаки домена: (z * scale) R + offset."""
    scale: Tuple[float, float] = (1.0, 1.0)
    rotation_deg: float = 0.0
    offset: Tuple[float, float] = (0.0, 0.0)

    def apply(self, latent: np.ndarray) -> np.ndarray:
        angle = np.deg2rad(self.rotation_deg)
        rotation = np.array([[np.cos(angle), np.sin(angle)], [-np.sin(angle), np.cos(angle)]])
        return (latent * np.asarray(self.scale)) @ rotation + np.asarray(self.offset)


class BridgeStandInConfig(BaseModel):
    """Параметры синтетических доменов и этапов конвейера."""

    noise: float = Field(0.3, gt=0, description="Разброс кластеров в латентном пространстве")
    cold_shift: Tuple[float, float] = Field((2.5, 2.5), description="Сдвиг низкотемпературного состояния")
    damage_shift: Tuple[float, float] = Field((-2.5, -1.0), description="Сдвиг повреждения")
    temperature_trend: float = Field(0.01, description="Наклон признаков по температуре")
    source_counts: Tuple[int, int, int] = Field((300, 80, 120), description="Окружающее, низкое, повреждение")
    pre_counts: Tuple[int, int] = Field((250, 60), description="Цель до ремонта: окружающее, низкое")
    post_counts: Tuple[int, int] = Field((220, 60), description="Цель после ремонта: окружающее, низкое")
    source_shift: DomainShift = Field(default_factory=lambda: DomainShift(offset=(4.0, 10.0)))
    pre_shift: DomainShift = Field(
        default_factory=lambda: DomainShift(scale=(0.5, 0.8), rotation_deg=5.0, offset=(12.0, 30.0))
    )
    post_shift: DomainShift = Field(
        default_factory=lambda: DomainShift(scale=(0.55, 0.85), rotation_deg=5.0, offset=(12.6, 31.0))
    )
    stage1_rows: int = Field(200, ge=2, description="Первые строки для выравнивания после ремонта")
    balanced_max: int = Field(110, ge=2, description="Максимум строк на температурное состояние")
    ambient_keep: int = Field(150, ge=1, description="Строк окружающего состояния на домен для GMM")
    components: int = Field(3, ge=1, description="Число компонент смеси")


def _domain(
    config: BridgeStandInConfig,
    shift: DomainShift,
    counts: Tuple[int, ...],
    rng: np.random.Generator,
    tag: str,
) -> LabeledDataset:
    """Генерирует домен: нормальные строки в случайном порядке, повреждение в конце."""
    n_ambient, n_cold = counts[0], counts[1]
    n_damage = counts[2] if len(counts) > 2 else 0

    t_ambient = rng.uniform(0.5, 25.0, n_ambient)
    t_cold = rng.uniform(-10.0, -0.5, n_cold)
    temperature = np.concatenate([t_ambient, t_cold])
    latent = rng.normal(0.0, config.noise, size=(temperature.size, 2))
    latent[n_ambient:] += np.asarray(config.cold_shift)
    latent[:n_ambient] += config.temperature_trend * (t_ambient - 12.0)[:, None] * np.array([-1.0, -0.5])
    order = rng.permutation(temperature.size)
    latent, temperature = latent[order], temperature[order]
    labels = np.full(temperature.size, NORMAL_CLASS)

    if n_damage:
        damaged = rng.normal(0.0, config.noise, size=(n_damage, 2)) + np.asarray(config.damage_shift)
        latent = np.vstack([latent, damaged])
        temperature = np.concatenate([temperature, rng.uniform(0.5, 25.0, n_damage)])
        labels = np.concatenate([labels, np.full(n_damage, DAMAGE_CLASS)])

    return LabeledDataset(
        features=shift.apply(latent),
        labels=labels,
        domain_tag=tag,
        covariates={TEMPERATURE: temperature},
    )


def generate_bridge_domains(config: BridgeStandInConfig, seed: int) -> Dict[str, LabeledDataset]:
    """Источник, цель до ремонта и цель после ремонта."""
    rng = np.random.default_rng(np.random.SeedSequence([seed, 1]))
    return {
        "source": _domain(config, config.source_shift, config.source_counts, rng, "source"),
        "pre": _domain(config, config.pre_shift, config.pre_counts, rng, "target_pre"),
        "post": _domain(config, config.post_shift, config.post_counts, rng, "target_post"),
    }


def align_repair(pre: LabeledDataset, post: LabeledDataset, rows: int) -> AlignmentResult:
    """
    Этап 1: NCORAL по первым rows строкам обоих наборов, применение ко всем строкам.
    """
    pre_head = select_rows(pre, 0, rows)
    post_head = select_rows(post, 0, rows)
    fitted = ncoral(pre_head.features, post_head.features, pre_head.normal_rows, post_head.normal_rows,
                    get_settings().align)
    return AlignmentResult(
        source=fitted.source_map.apply(pre.features),
        target=fitted.target_map.apply(post.features),
        source_map=fitted.source_map,
        target_map=fitted.target_map,
    )


def balanced_normal_rows(ds: LabeledDataset, per_condition: int, seed: int) -> np.ndarray:
    """Нормальные строки с равным числом строк при T < 0 и T > 0."""
    normal = ds.normal_rows
    cold = covariate_rows(ds, TEMPERATURE, CovariatePredicate("<", 0.0), per_condition, seed, among=normal)
    ambient = covariate_rows(ds, TEMPERATURE, CovariatePredicate(">", 0.0), per_condition, seed + 1, among=normal)
    return np.sort(np.concatenate([cold, ambient]))


def _condition_counts(ds: LabeledDataset) -> Tuple[int, int]:
    temperature = ds.covariates[TEMPERATURE][ds.normal_rows]
    return int(np.sum(temperature < 0)), int(np.sum(temperature > 0))


def _conditions(ds: LabeledDataset, prefix: str) -> np.ndarray:
    temperature = ds.covariates[TEMPERATURE]
    condition = np.where(temperature < 0, f"{prefix}_cold", f"{prefix}_ambient").astype(object)
    condition[ds.labels == DAMAGE_CLASS] = f"{prefix}_damage"
    return condition


def _ambient_downsample(conditions: np.ndarray, keep: int, seed: int) -> np.ndarray:
    """Строки для обучения смеси: строки окружающего состояния прорежены до keep на домен."""
    rng = np.random.default_rng(seed)
    rows = []
    for condition in np.unique(conditions):
        members = np.flatnonzero(conditions == condition)
        if condition.endswith("_ambient") and members.size > keep:
            members = np.sort(rng.choice(members, size=keep, replace=False))
        rows.append(members)
    return np.sort(np.concatenate(rows))


def run_pipeline(
    domains: Dict[str, LabeledDataset],
    config: BridgeStandInConfig,
    seed: int,
) -> Dict[str, Any]:
    """
    Три этапа конвейера на готовых доменах.

    Returns:
        Словарь с выровненными данными, назначениями кластеров, таблицей
        сопряженности и числом ложных срабатываний
    """
    source, pre, post = domains["source"], domains["pre"], domains["post"]

    stage1 = align_repair(pre, post, config.stage1_rows)
    target = concat_datasets(
        [pre.with_features(stage1.source), post.with_features(stage1.target)], domain_tag="target"
    )

    per_condition = min(config.balanced_max, *_condition_counts(source), *_condition_counts(target))
    normal_s = balanced_normal_rows(source, per_condition, seed)
    normal_t = balanced_normal_rows(target, per_condition, seed + 2)
    stage2 = ncoral(source.features, target.features, normal_s, normal_t, get_settings().align)

    pool = np.vstack([stage2.source, stage2.target])
    conditions = np.concatenate([_conditions(source, "source"), _conditions(target, "target")])
    training = _ambient_downsample(conditions, config.ambient_keep, seed + 3)
    model = gmm_fit(pool[training], config.components, seed, get_settings().model)
    clusters, _ = gmm_predict(model, pool)

    crosstab = pd.crosstab(pd.Series(clusters, name="cluster"), pd.Series(conditions, name="condition"))
    crosstab = crosstab.reindex(columns=[c for c in CONDITIONS if c in crosstab.columns], fill_value=0)
    damage_counts = crosstab["source_damage"] if "source_damage" in crosstab else pd.Series(dtype=int)
    damage_cluster = int(damage_counts.idxmax()) if len(damage_counts) and damage_counts.max() > 0 else None

    is_target = np.char.startswith(conditions.astype(str), "target")
    flagged = clusters == damage_cluster if damage_cluster is not None else np.zeros(clusters.size, bool)
    y_true = (conditions == "source_damage").astype(np.int64)

    return {
        "stage1": stage1,
        "stage2": stage2,
        "pool": pool,
        "conditions": conditions,
        "clusters": clusters,
        "model": model,
        "crosstab": crosstab,
        "damage_cluster": damage_cluster,
        "false_positives": int(np.sum(flagged & is_target)),
        "source_false_alarms": int(np.sum(flagged & (conditions != "source_damage") & ~is_target)),
        "y_true": y_true,
        "y_pred": flagged.astype(np.int64),
        "balanced_per_condition": per_condition,
    }


def run_bridge_style(case: CaseConfig, plot_dir: Optional[Path] = None) -> BenchReport:
    """
    Сценарий bridge: синтетические домены, три этапа и отчет по повторам.

    macro-F1 строки считается для обнаружения повреждения (кластер
    повреждения против остальных) по всем строкам объединенного набора.
    """
    config = BridgeStandInConfig(**case.bridge)
    name = "ncoral+gmm"
    rows = []
    for repeat in range(case.repeats):
        data_seed = repeat_seeds(case.seed, repeat)["source"]
        seed = method_seed(case.seed, name, repeat)
        started = time.perf_counter()
        row = MethodRow(method=name, alignment="ncoral", da="gmm", repeat=repeat,
                        seeds={"data": data_seed, "method": seed})
        try:
            result = run_pipeline(generate_bridge_domains(config, data_seed), config, seed)
            row.macro_f1 = macro_f1(result["y_true"], result["y_pred"])
            row.confusion = confusion(result["y_true"], result["y_pred"]).to_dict()
            row.hyperparameters = {
                "stage1_rows": config.stage1_rows,
                "balanced_per_condition": result["balanced_per_condition"],
                "ambient_keep": config.ambient_keep,
                "components": config.components,
            }
            row.extras = {
                "damage_cluster": result["damage_cluster"],
                "false_positives": result["false_positives"],
                "source_false_alarms": result["source_false_alarms"],
                "crosstab": {str(k): v for k, v in result["crosstab"].to_dict(orient="index").items()},
                "gmm_converged": result["model"].converged,
            }
            if plot_dir is not None and repeat == 0:
                _save_pool(plot_dir, result)
        except CELL_ERRORS as exc:
            row.error = f"{type(exc).__name__}: {exc}"
            logger.warning(f"[bridge] repeat {repeat} failed: {exc}")
        row.wall_time = time.perf_counter() - started
        logger.info(f"[bridge] repeat {repeat}: false positives={row.extras.get('false_positives')}")
        rows.append(row)

    report = BenchReport(case="bridge", rows=rows)
    if plot_dir is not None:
        report.artifacts = {p.stem: str(p) for p in sorted(plot_dir.glob("*.csv"))}
    return report


def _save_pool(plot_dir: Path, result: Dict[str, Any]) -> None:
    conditions = result["conditions"]
    labels = np.asarray([CONDITIONS.index(c) for c in conditions])
    pool = LabeledDataset(
        features=result["pool"],
        labels=labels,
        domain_tag="bridge_pool",
        covariates={"cluster": result["clusters"].astype(np.float64)},
    )
    save_dataset(pool, plot_dir / "bridge_pool.csv")
