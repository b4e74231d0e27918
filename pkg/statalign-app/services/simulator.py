"""
Симулятор популяции многоэтажных сдвиговых конструкций.

Каждая выборка: случайные модуль упругости, плотность, разброс жесткости
и массы по этажам и демпфирование, сборка матриц M, C, K сосредоточенных
масс и извлечение затухающих собственных частот (Гц) из матрицы
пространства состояний.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, Mapping, Optional, Tuple, Union

import numpy as np
from dotenv import dotenv_values
from pydantic import BaseModel, Field, ValidationError, model_validator

from core.config import SimulationConfig
from core.exceptions import ConfigError, OverdampedModeError, SimulationError
from services.dataset import LabeledDataset

logger = logging.getLogger(__name__)

# Балки на этаж: четыре консоли параллельно
BEAMS_PER_STOREY = 4
_IMAG_TOL = 1e-9


class BeamGeometry(BaseModel):
    """Геометрия консольной балки, м."""
    length: float = Field(..., gt=0, description="l_b")
    width: float = Field(..., gt=0, description="w_b")
    thickness: float = Field(..., gt=0, description="t_b")


class MassGeometry(BaseModel):
    """Геометрия сосредоточенной массы этажа, м."""
    length: float = Field(..., gt=0, description="l_m")
    width: float = Field(..., gt=0, description="w_m")
    thickness: float = Field(..., gt=0, description="t_m")


class CrackGeometry(BaseModel):
    """Трещина: глубина по ширине сечения и положение от свободного конца, м."""
    length: float = Field(..., ge=0, description="l_cr")
    location: float = Field(..., gt=0, description="l_loc, от свободного конца")


class GaussianDist(BaseModel):
    mean: float = Field(..., gt=0)
    variance: float = Field(..., ge=0)


class GammaDist(BaseModel):
    """Гамма-распределение в параметризации форма-масштаб."""
    shape: float = Field(..., gt=0)
    scale: float = Field(..., gt=0)


class StructureSpec(BaseModel):
    """
    Описание конструкции в единицах СИ.

    Attributes:
        storeys: Число этажей N
        beam: Геометрия балок
        mass: Геометрия масс
        crack: Геометрия трещины
        E: Модуль упругости, Па (нормальное распределение)
        rho: Плотность, кг/м^3 (нормальное распределение)
        c: Коэффициент демпфирования, Н*с/м (гамма-распределение)
        n_features: Число младших затухающих частот в признаках
        storey_stiffness_cv: Коэффициент вариации жесткости отдельного этажа
        storey_mass_cv: Коэффициент вариации массы отдельного этажа
    """
    storeys: int = Field(..., ge=1)
    beam: BeamGeometry
    mass: MassGeometry
    crack: CrackGeometry
    E: GaussianDist
    rho: GaussianDist
    c: GammaDist
    n_features: int = Field(3, ge=1)
    storey_stiffness_cv: float = Field(0.0, ge=0.0, lt=0.2)
    storey_mass_cv: float = Field(0.0, ge=0.0, lt=0.2)

    @model_validator(mode="after")
    def check_geometry(self):
        if self.crack.location >= self.beam.length:
            raise ValueError("crack location must lie within the beam (l_loc < l_b)")
        if self.crack.length >= self.beam.width:
            raise ValueError("crack length must be smaller than beam width (l_cr < w_b)")
        if self.n_features > self.storeys:
            raise ValueError(f"n_features={self.n_features} exceeds storeys={self.storeys}")
        return self

    def metadata(self) -> Dict:
        """Конвенции, с которыми интерпретированы параметры распределений."""
        return {
            "gaussian_second_parameter": "variance",
            "gamma_parameterisation": "shape-scale",
            "crack_zone_length": "2 * beam thickness",
            "crack_location_origin": "beam tip",
            "features_unit": "Hz",
            "storey_scatter": "independent gaussian factors 1 + cv * eps per storey",
        }


@dataclass(frozen=True)
class SampleDraw:
    """Реализация случайных свойств одной конструкции."""
    E: float
    rho: float
    c: float
    damage_storey: Optional[int] = None
    stiffness_factors: Optional[Tuple[float, ...]] = None
    mass_factors: Optional[Tuple[float, ...]] = None


@dataclass(frozen=True, eq=False)
class ModalFeatures:
    """Затухающие собственные частоты: рад/с и Гц, по возрастанию."""
    omega_d: np.ndarray
    f_d: np.ndarray


def _second_moment(width: float, thickness: float) -> float:
    return width * thickness ** 3 / 12.0


def beam_tip_stiffness(E: float, l_b: float, w_b: float, t_b: float) -> float:
    """
    Жесткость консоли на конце k_b = 3EI / l_b^3, I = w_b t_b^3 / 12.

    Raises:
        SimulationError: Если какой-либо параметр не положителен
    """
    if min(E, l_b, w_b, t_b) <= 0:
        raise SimulationError("beam parameters must be positive", E=E, l_b=l_b, w_b=w_b, t_b=t_b)
    return 3.0 * E * _second_moment(w_b, t_b) / l_b ** 3


def damaged_beam_stiffness(E: float, l_b: float, w_b: float, t_b: float, l_cr: float, l_loc: float) -> float:
    """
    Жесткость консоли с зоной ослабленного сечения.

    Зона длиной 2 t_b с центром на расстоянии l_loc от свободного конца,
    момент инерции в зоне I_cr = (w_b - l_cr) t_b^3 / 12. Податливость
    delta = int_0^l_b u^2 / (E I(u)) du (u от конца) берется кусочно.

    Raises:
        SimulationError: Если l_cr >= w_b или параметры не положительны
    """
    intact = beam_tip_stiffness(E, l_b, w_b, t_b)
    if l_cr >= w_b:
        raise SimulationError(f"crack length {l_cr} leaves no section (w_b={w_b})", l_cr=l_cr, w_b=w_b)
    if l_cr < 0:
        raise SimulationError(f"crack length must be non-negative, got {l_cr}", l_cr=l_cr)
    if l_cr == 0:
        return intact

    inertia = _second_moment(w_b, t_b)
    inertia_cr = _second_moment(w_b - l_cr, t_b)
    u1 = min(max(l_loc - t_b, 0.0), l_b)
    u2 = min(max(l_loc + t_b, 0.0), l_b)
    compliance = l_b ** 3 / (3.0 * E * inertia)
    compliance += (1.0 / inertia_cr - 1.0 / inertia) * (u2 ** 3 - u1 ** 3) / (3.0 * E)
    return 1.0 / compliance


def _shear_assembly(values: np.ndarray) -> np.ndarray:
    """Трехдиагональная сборка сдвигового здания по жесткостям этажей."""
    n = values.size
    matrix = np.zeros((n, n))
    for i in range(n):
        matrix[i, i] += values[i]
        if i > 0:
            matrix[i - 1, i - 1] += values[i]
            matrix[i - 1, i] -= values[i]
            matrix[i, i - 1] -= values[i]
    return matrix


def _storey_factors(factors: Tuple[float, ...], n: int, what: str) -> np.ndarray:
    values = np.asarray(factors, dtype=np.float64)
    if values.shape != (n,) or np.any(values <= 0):
        raise SimulationError(f"{what} factors must be {n} positive values", factors=list(factors))
    return values


def build_system(spec: StructureSpec, draw: SampleDraw) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """
    Собирает матрицы масс, демпфирования и жесткости.

    Args:
        spec: Описание конструкции
        draw: Реализация свойств; damage_storey нумеруется с 1

    Returns:
        Кортеж (M, C, K) размера N x N
    """
    n = spec.storeys
    if draw.damage_storey is not None and not 1 <= draw.damage_storey <= n:
        raise SimulationError(
            f"damage storey {draw.damage_storey} outside [1, {n}]", damage_storey=draw.damage_storey
        )
    beam = spec.beam
    k_b = beam_tip_stiffness(draw.E, beam.length, beam.width, beam.thickness)
    stiffness = np.full(n, BEAMS_PER_STOREY * k_b)
    if draw.damage_storey is not None:
        k_d = damaged_beam_stiffness(
            draw.E, beam.length, beam.width, beam.thickness, spec.crack.length, spec.crack.location
        )
        stiffness[draw.damage_storey - 1] = k_d + (BEAMS_PER_STOREY - 1) * k_b

    storey_mass = np.full(n, spec.mass.length * spec.mass.width * spec.mass.thickness * draw.rho)
    if draw.stiffness_factors is not None:
        stiffness = stiffness * _storey_factors(draw.stiffness_factors, n, "stiffness")
    if draw.mass_factors is not None:
        storey_mass = storey_mass * _storey_factors(draw.mass_factors, n, "mass")
    M = np.diag(storey_mass)
    C = _shear_assembly(np.full(n, draw.c))
    K = _shear_assembly(stiffness)
    return M, C, K


def damped_frequencies(M: np.ndarray, C: np.ndarray, K: np.ndarray, n_features: int) -> ModalFeatures:
    """
    Затухающие собственные частоты из матрицы [[0, I], [-M^-1 K, -M^-1 C]].

    Raises:
        OverdampedModeError: Если у запрошенной моды нет мнимой части
    """
    n = M.shape[0]
    minv_k = np.linalg.solve(M, K)
    minv_c = np.linalg.solve(M, C)
    state = np.block([[np.zeros((n, n)), np.eye(n)], [-minv_k, -minv_c]])
    eigenvalues = np.linalg.eigvals(state)

    scale = np.abs(eigenvalues)
    oscillating = eigenvalues.imag > _IMAG_TOL * np.maximum(scale, 1.0)
    omega_d = np.sort(eigenvalues.imag[oscillating])
    if omega_d.size < n_features:
        raise OverdampedModeError(
            f"mode {omega_d.size + 1} is overdamped: only {omega_d.size} oscillating modes, "
            f"{n_features} requested",
            mode=int(omega_d.size + 1), requested=n_features
        )
    omega_d = omega_d[:n_features]
    return ModalFeatures(omega_d=omega_d, f_d=omega_d / (2.0 * np.pi))


def storey_scatter(cv: float, n: int, rng: np.random.Generator) -> Optional[Tuple[float, ...]]:
    """Множители 1 + cv * eps, eps ~ N(0, 1), по этажам; None при cv = 0."""
    if cv <= 0.0:
        return None
    return tuple(float(v) for v in 1.0 + cv * rng.standard_normal(n))


def _draw_sample(
    spec: StructureSpec, rng: np.random.Generator, damage_storey: Optional[int], config: SimulationConfig
) -> Tuple[SampleDraw, ModalFeatures]:
    E = rng.normal(spec.E.mean, np.sqrt(spec.E.variance))
    rho = rng.normal(spec.rho.mean, np.sqrt(spec.rho.variance))
    if E <= 0 or rho <= 0:
        raise SimulationError(f"non-positive material draw E={E}, rho={rho}", E=float(E), rho=float(rho))
    stiffness_factors = storey_scatter(spec.storey_stiffness_cv, spec.storeys, rng)
    mass_factors = storey_scatter(spec.storey_mass_cv, spec.storeys, rng)

    for attempt in range(config.max_damping_redraws):
        c = rng.gamma(spec.c.shape, spec.c.scale)
        draw = SampleDraw(
            E=float(E), rho=float(rho), c=float(c), damage_storey=damage_storey,
            stiffness_factors=stiffness_factors, mass_factors=mass_factors,
        )
        try:
            return draw, damped_frequencies(*build_system(spec, draw), spec.n_features)
        except OverdampedModeError:
            logger.debug(f"Overdamped draw c={c:.4g}, redrawing (attempt {attempt + 1})")
    raise SimulationError(
        f"damping redrawn {config.max_damping_redraws} times without an underdamped system",
        redraws=config.max_damping_redraws
    )


def generate_domain(
    spec: StructureSpec,
    class_counts: Mapping[int, int],
    seed: int,
    domain_tag: str = "simulated",
    config: Optional[SimulationConfig] = None,
) -> LabeledDataset:
    """
    Генерирует набор признаков популяции.

    Класс 0 соответствует неповрежденной конструкции, класс i повреждению
    этажа i. Поток случайных чисел каждой выборки выводится из
    (seed, номер выборки), поэтому результат не зависит от порядка.

    Args:
        spec: Описание конструкции
        class_counts: Число выборок по классам
        seed: Сид
        domain_tag: Имя домена
        config: Параметры симулятора

    Returns:
        Набор с признаками в Гц и ковариатами E, rho, c
    """
    config = config or SimulationConfig()
    for class_id, count in class_counts.items():
        if not 0 <= int(class_id) <= spec.storeys:
            raise SimulationError(
                f"class {class_id} outside [0, {spec.storeys}]", class_id=int(class_id)
            )
        if int(count) < 0:
            raise SimulationError(f"negative count for class {class_id}", class_id=int(class_id))

    plan = [int(c) for c in sorted(class_counts) for _ in range(int(class_counts[c]))]
    if not plan:
        raise SimulationError("class_counts request no samples")

    features = np.empty((len(plan), spec.n_features))
    covariates = {name: np.empty(len(plan)) for name in ("E", "rho", "c")}
    for sample_index, class_id in enumerate(plan):
        rng = np.random.default_rng(np.random.SeedSequence([seed, sample_index]))
        draw, modal = _draw_sample(spec, rng, class_id or None, config)
        features[sample_index] = modal.f_d
        covariates["E"][sample_index] = draw.E
        covariates["rho"][sample_index] = draw.rho
        covariates["c"][sample_index] = draw.c

    logger.info(f"Simulated {len(plan)} samples for '{domain_tag}' ({spec.storeys} storeys)")
    return LabeledDataset(
        features=features,
        labels=np.asarray(plan, dtype=np.int64),
        domain_tag=domain_tag,
        covariates=covariates,
    )


# Ключи файла спецификации и множители перевода в СИ
_SPEC_KEYS = {
    "BEAM_LENGTH_MM": 1e-3,
    "BEAM_WIDTH_MM": 1e-3,
    "BEAM_THICKNESS_MM": 1e-3,
    "MASS_LENGTH_MM": 1e-3,
    "MASS_WIDTH_MM": 1e-3,
    "MASS_THICKNESS_MM": 1e-3,
    "CRACK_LENGTH_MM": 1e-3,
    "CRACK_LOCATION_MM": 1e-3,
    "E_MEAN_GPA": 1e9,
    "E_VARIANCE_GPA2": 1e18,
    "RHO_MEAN": 1.0,
    "RHO_VARIANCE": 1.0,
    "DAMPING_SHAPE": 1.0,
    "DAMPING_SCALE": 1.0,
}


def structure_spec_from_mapping(values: Mapping[str, Optional[str]], source: str = "<mapping>") -> StructureSpec:
    """
    Строит StructureSpec из пар ключ-значение в единицах таблиц (мм, ГПа).

    Raises:
        ConfigError: Если ключ отсутствует или значение некорректно
    """
    missing = [key for key in ["STOREYS", *_SPEC_KEYS] if not values.get(key)]
    if missing:
        raise ConfigError(f"{source}: missing keys {missing}", source=source, missing=missing)
    try:
        si = {key: float(values[key]) * factor for key, factor in _SPEC_KEYS.items()}
        return StructureSpec(
            storeys=int(values["STOREYS"]),
            beam=BeamGeometry(length=si["BEAM_LENGTH_MM"], width=si["BEAM_WIDTH_MM"], thickness=si["BEAM_THICKNESS_MM"]),
            mass=MassGeometry(length=si["MASS_LENGTH_MM"], width=si["MASS_WIDTH_MM"], thickness=si["MASS_THICKNESS_MM"]),
            crack=CrackGeometry(length=si["CRACK_LENGTH_MM"], location=si["CRACK_LOCATION_MM"]),
            E=GaussianDist(mean=si["E_MEAN_GPA"], variance=si["E_VARIANCE_GPA2"]),
            rho=GaussianDist(mean=si["RHO_MEAN"], variance=si["RHO_VARIANCE"]),
            c=GammaDist(shape=si["DAMPING_SHAPE"], scale=si["DAMPING_SCALE"]),
            n_features=int(values.get("N_FEATURES") or 3),
            storey_stiffness_cv=float(values.get("STOREY_STIFFNESS_CV") or 0.0),
            storey_mass_cv=float(values.get("STOREY_MASS_CV") or 0.0),
        )
    except (ValueError, ValidationError) as exc:
        raise ConfigError(f"{source}: invalid structure spec: {exc}", source=source)


def load_structure_spec(path: Union[str, Path]) -> StructureSpec:
    """Читает файл спецификации конструкции формата KEY=VALUE."""
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"structure spec not found: {path}", path=str(path))
    return structure_spec_from_mapping(dotenv_values(path), source=str(path))
