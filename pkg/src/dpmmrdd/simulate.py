"""Synthetic fuzzy-RDD cohorts in the statin / LDL-cholesterol setting.

Covariates (age, systolic blood pressure, HDL) drive a risk score that acts
as the forcing variable; treatment switches on with imperfect compliance at
the threshold and lowers the outcome by ``effect``.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy import stats
from scipy.special import expit, logit

from .cohort import (CATEGORICAL_PREFIX, DEFAULT_THRESHOLD, Cohort, CovariateSchema,
                     validate_cohort, write_cohort_csv)

COVARIATE_NAMES = ("age", "sbp", "hdl")

# scale of the logistic that carries compliance across the threshold
_COMPLIANCE_SCALE = 1e-5
_RISK_LOW, _RISK_HIGH = 0.01, 0.6

CONFOUNDING_LEVELS = {"none": 0.0, "low": 1.0, "moderate": 3.0, "high": 6.0}


@dataclass(frozen=True)
class SimConfig:
    n: int = 2000
    effect: float = -2.0
    x0: float = DEFAULT_THRESHOLD
    compliance_above: float = 0.85
    compliance_below: float = 0.10
    confounding_scale: float | str = "low"
    seed: int = 0
    baseline: float = 3.7
    slope: float = 1.5
    gamma: tuple[float, ...] = (0.1, 0.1, 0.1)
    noise_sd: float = 0.8
    risk_signal: float = 0.8
    risk_noise: float = 0.6
    # level counts of optional categorical covariates (tied to age bands)
    cat_levels: tuple[int, ...] = ()

    def __post_init__(self):
        if self.n < 50:
            raise ValueError(f"n must be >= 50, got {self.n}")
        if not 0 <= self.compliance_below <= self.compliance_above <= 1:
            raise ValueError("need 0 <= compliance_below <= compliance_above <= 1")
        if not 0 < self.x0 < 1:
            raise ValueError(f"x0 must lie in (0, 1), got {self.x0}")
        if len(self.gamma) != len(COVARIATE_NAMES):
            raise ValueError(f"gamma needs {len(COVARIATE_NAMES)} components")
        if any(r < 2 for r in self.cat_levels):
            raise ValueError("categorical covariates need at least 2 levels")
        self.confounding  # validates the level name

    @property
    def confounding(self) -> float:
        if isinstance(self.confounding_scale, str):
            try:
                return CONFOUNDING_LEVELS[self.confounding_scale]
            except KeyError:
                raise ValueError(f"unknown confounding level {self.confounding_scale!r}") from None
        return float(self.confounding_scale)


@dataclass(frozen=True)
class StudyConfig:
    sim: SimConfig = field(default_factory=SimConfig)
    n_reps: int = 20

    def __post_init__(self):
        if self.n_reps < 1:
            raise ValueError("n_reps must be >= 1")


def replicate_seed(seed: int, r: int) -> int:
    return int(seed) ^ int(r)


def _risk_offset(x0: float) -> float:
    # centres the risk distribution so the median covariate profile scores x0
    return float(logit((x0 - _RISK_LOW) / (_RISK_HIGH - _RISK_LOW)))


def treatment_probability(xc: np.ndarray, cfg: SimConfig) -> np.ndarray:
    lo, hi = cfg.compliance_below, cfg.compliance_above
    return lo + (hi - lo) * expit(np.asarray(xc) / _COMPLIANCE_SCALE)


def simulate_cohort(cfg: SimConfig) -> Cohort:
    rng = np.random.default_rng(cfg.seed)
    n = cfg.n

    age = rng.uniform(50.0, 70.0, n)
    sbp = rng.normal(135.0, 15.0, n)
    a = (0.5 - 1.3) / 0.3
    hdl = stats.truncnorm.rvs(a, np.inf, loc=1.3, scale=0.3, size=n, random_state=rng)
    cont = np.column_stack([age, sbp, hdl])

    # population-level standardization keeps cohorts comparable across seeds
    std = np.column_stack([
        (age - 60.0) / (20.0 / np.sqrt(12.0)),
        (sbp - 135.0) / 15.0,
        (hdl - 1.3) / 0.3,
    ])
    lin = cfg.risk_signal * (std[:, 0] + std[:, 1] - std[:, 2]) / np.sqrt(3.0)
    lin = lin + rng.normal(0.0, cfg.risk_noise, n)
    x = _RISK_LOW + (_RISK_HIGH - _RISK_LOW) * expit(lin + _risk_offset(cfg.x0))

    xc = x - cfg.x0
    u = rng.uniform(size=n)
    if cfg.compliance_below == 0.0 and cfg.compliance_above == 1.0:
        t = (x >= cfg.x0).astype(np.int64)  # sharp design
    else:
        t = (u < treatment_probability(xc, cfg)).astype(np.int64)

    y = (cfg.baseline + cfg.slope * xc + cfg.effect * t
         + cfg.confounding * std @ np.asarray(cfg.gamma)
         + rng.normal(0.0, cfg.noise_sd, n))

    cat_cols = []
    for r in cfg.cat_levels:
        band = np.minimum((age - 50.0) / 20.0 * r, r - 1e-9).astype(np.int64) + 1
        noise = rng.uniform(size=n) < 0.15
        band[noise] = rng.integers(1, r + 1, size=int(noise.sum()))
        cat_cols.append(band)
    cat = np.column_stack(cat_cols) if cat_cols else np.zeros((n, 0), dtype=np.int64)

    schema = CovariateSchema(
        cont_names=COVARIATE_NAMES,
        cat_names=tuple(f"{CATEGORICAL_PREFIX}{j + 1}" for j in range(len(cfg.cat_levels))),
        cat_levels=tuple(cfg.cat_levels),
    )
    width = len(str(n))
    ids = np.array([f"u{i:0{width}d}" for i in range(n)], dtype=object)
    return validate_cohort(Cohort(ids, x, t, y, cont, cat, schema, cfg.x0))


def simulate_study(cfg: StudyConfig) -> list[Cohort]:
    """``n_reps`` cohorts; replicate ``r`` uses seed ``cfg.sim.seed ^ r``."""
    return [simulate_replicate(cfg, r) for r in range(cfg.n_reps)]


def simulate_replicate(cfg: StudyConfig, r: int) -> Cohort:
    return simulate_cohort(replace(cfg.sim, seed=replicate_seed(cfg.sim.seed, r)))


def write_study(cohorts: Sequence[Cohort], out_dir) -> list:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    return [write_cohort_csv(c, out / f"rep_{r}.csv") for r, c in enumerate(cohorts)]


REALLIKE = SimConfig(n=1386, effect=-1.6, compliance_above=0.70, compliance_below=0.15,
                     confounding_scale="moderate", seed=20_200_601, cat_levels=(4,))


def simulate_reallike(cfg: SimConfig = REALLIKE) -> Cohort:
    """Stand-in for a registry extract: 1,386 patients, one categorical age band."""
    c = simulate_cohort(cfg)
    schema = replace(c.schema, cat_names=(f"{CATEGORICAL_PREFIX}ageband",))
    return validate_cohort(replace(c, schema=schema))
