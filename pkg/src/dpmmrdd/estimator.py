"""Bayesian estimation of the jump in outcome, the jump in treatment
probability, and their ratio (the local average treatment effect).

The outcome is linear in the centred forcing variable on each side of the
threshold with a shared residual scale; the intercept above equals the
intercept below plus ``lambda``, so the outcome jump is ``lambda`` itself.
Treatment counts on each side are binomial with either Beta priors
("unconstrained") or Normal priors on the logits ("flexible").
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

LATE_EPS = 1e-6


class EstimationError(ValueError):
    pass


@dataclass(frozen=True)
class OutcomePriors:
    beta0b_mean: float = 3.7
    beta0b_var: float = 0.25
    lambda_mean: float = -2.0
    lambda_var: float = 1.0
    beta1_mean: float = 0.0
    beta1_var: float = 2.0
    sigma_upper: float = 5.0

    def __post_init__(self):
        if min(self.beta0b_var, self.lambda_var, self.beta1_var) <= 0:
            raise ValueError("prior variances must be positive")
        if not self.sigma_upper > 0:
            raise ValueError("sigma_upper must be positive")

    @property
    def mean(self) -> np.ndarray:
        return np.array([self.beta0b_mean, self.lambda_mean, self.beta1_mean, self.beta1_mean])

    @property
    def precision(self) -> np.ndarray:
        return np.diag(1.0 / np.array([self.beta0b_var, self.lambda_var,
                                       self.beta1_var, self.beta1_var]))


@dataclass(frozen=True)
class DenominatorPriors:
    model: str = "unconstrained"
    beta_a: float = 1.0
    beta_b: float = 1.0
    logit_a_mean: float = 2.0
    logit_b_mean: float = -2.0
    logit_var: float = 1.0

    def __post_init__(self):
        if self.model not in ("unconstrained", "flexible"):
            raise ValueError(f"unknown denominator model {self.model!r}")
        if not (self.beta_a > 0 and self.beta_b > 0):
            raise ValueError("Beta prior parameters must be positive")
        if not self.logit_var > 0:
            raise ValueError("logit_var must be positive")


@dataclass(frozen=True)
class SamplerConfig:
    n_iter: int = 10_000
    burn_in: int = 2_000
    thin: int = 1
    seed: int = 0

    def __post_init__(self):
        if self.n_iter < 1 or self.burn_in < 0 or self.thin < 1:
            raise ValueError("need n_iter >= 1, burn_in >= 0, thin >= 1")

    @property
    def n_draws(self) -> int:
        return self.n_iter // self.thin


OUTCOME_SAMPLER = SamplerConfig(10_000, 2_000, 1)
FLEXIBLE_SAMPLER = SamplerConfig(20_000, 5_000, 2)


@dataclass(frozen=True)
class LateEstimate:
    median: float
    mean: float
    lower: float
    upper: float
    n_draws: int = 0

    def as_row(self) -> list[float]:
        return [self.median, self.mean, self.lower, self.upper]


@dataclass(eq=False)
class PosteriorDraws:
    delta_beta: np.ndarray
    delta_pi: dict[str, np.ndarray]
    late: dict[str, np.ndarray]  # NaN where the denominator draw was excluded
    components: dict[str, np.ndarray] = field(default_factory=dict)

    @property
    def n_excluded(self) -> dict[str, int]:
        return {k: int(np.isnan(v).sum()) for k, v in self.late.items()}

    def write_csv(self, path) -> Path:
        path = Path(path)
        cols = [("delta_beta", self.delta_beta)]
        for name in ("unct", "flex"):
            if name in self.delta_pi:
                cols.append((f"delta_pi_{name}", self.delta_pi[name]))
        for name in ("unct", "flex"):
            if name in self.late:
                cols.append((f"late_{name}", self.late[name]))
        with path.open("w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["draw"] + [c for c, _ in cols])
            for k in range(len(self.delta_beta)):
                w.writerow([k] + ["" if np.isnan(v[k]) else repr(float(v[k])) for _, v in cols])
        return path


# --- outcome model -------------------------------------------------------


def _design(xc: np.ndarray, z: np.ndarray) -> np.ndarray:
    above = z.astype(bool)
    X = np.zeros((len(xc), 4))
    X[:, 0] = 1.0
    X[above, 1] = 1.0
    X[above, 2] = xc[above]
    X[~above, 3] = xc[~above]
    return X


def _check_sides(xc, z, allow_empty):
    above = z.astype(bool)
    if allow_empty and len(xc) == 0:
        return
    for side, mask in (("above", above), ("below", ~above)):
        if mask.sum() < 2:
            raise EstimationError(f"fewer than 2 units {side} the threshold")
        if np.ptp(xc[mask]) == 0:
            raise EstimationError(f"forcing variable is constant {side} the threshold")


def slice_sample_scale(sigma: float, n: int, rss: float, upper: float, width: float,
                       rng: np.random.Generator) -> float:
    """One slice-sampling update of a residual scale on ``(0, upper)``.

    Target density is proportional to ``sigma**-n * exp(-rss / (2 sigma**2))``
    (flat prior on the interval). Stepping out with a fixed ``width``, then
    shrinkage.
    """

    def logf(s):
        if s <= 0.0 or s >= upper:
            return -math.inf
        return -n * math.log(s) - rss / (2.0 * s * s)

    logy = logf(sigma) + math.log(1.0 - rng.random())
    lo = sigma - width * rng.random()
    hi = lo + width
    while lo > 0.0 and logf(lo) > logy:
        lo -= width
    while hi < upper and logf(hi) > logy:
        hi += width
    lo, hi = max(lo, 0.0), min(hi, upper)
    while True:
        cand = lo + (hi - lo) * rng.random()
        if logf(cand) > logy:
            return cand
        if cand < sigma:
            lo = cand
        else:
            hi = cand


def fit_ate(xc, y, z, priors: OutcomePriors | None = None, cfg: SamplerConfig | None = None,
            allow_empty: bool = False) -> dict[str, np.ndarray]:
    """Blocked Gibbs sampler for the two-sided linear outcome model.

    Location parameters ``(beta0b, lambda, beta1a, beta1b)`` are drawn jointly
    given the scale; the scale is slice-sampled. ``delta_beta`` is the
    ``lambda`` chain. ``allow_empty`` permits a data-free run (prior only).
    """
    priors = priors or OutcomePriors()
    cfg = cfg or OUTCOME_SAMPLER
    xc = np.asarray(xc, dtype=float)
    y = np.asarray(y, dtype=float)
    z = np.asarray(z)
    _check_sides(xc, z, allow_empty)
    X = _design(xc, z)
    n = len(y)
    xtx = X.T @ X
    xty = X.T @ y
    yty = float(y @ y)
    if n and np.linalg.matrix_rank(xtx) < 4:
        raise EstimationError("degenerate design matrix")
    d = priors.precision
    dm = d @ priors.mean
    upper = priors.sigma_upper

    sd_y = float(np.std(y)) if n > 1 else upper / 2
    sigma = min(max(sd_y, 1e-3), upper * 0.999)
    width = upper if n < 2 else max(1e-4, 3.0 * sigma / math.sqrt(2.0 * n))

    rng = np.random.default_rng(cfg.seed)
    n_total = cfg.burn_in + cfg.n_iter
    normals = rng.standard_normal((n_total, 4))
    out = np.empty((cfg.n_draws, 5))
    kept = 0
    for it in range(n_total):
        prec = xtx / (sigma * sigma) + d
        chol = np.linalg.cholesky(prec)
        mean = np.linalg.solve(prec, xty / (sigma * sigma) + dm)
        theta = mean + np.linalg.solve(chol.T, normals[it])
        rss = max(yty - 2.0 * float(theta @ xty) + float(theta @ xtx @ theta), 0.0)
        sigma = slice_sample_scale(sigma, n, rss, upper, width, rng)
        post = it - cfg.burn_in
        if post >= 0 and (post + 1) % cfg.thin == 0 and kept < cfg.n_draws:
            out[kept, :4] = theta
            out[kept, 4] = sigma
            kept += 1
    return {
        "beta0b": out[:, 0], "lambda": out[:, 1], "beta1a": out[:, 2], "beta1b": out[:, 3],
        "sigma": out[:, 4], "beta0a": out[:, 0] + out[:, 1], "delta_beta": out[:, 1],
    }


# --- denominator models --------------------------------------------------


def _side_counts(t, z):
    t = np.asarray(t).astype(int)
    above = np.asarray(z).astype(bool)
    return int(t[above].sum()), int(above.sum()), int(t[~above].sum()), int((~above).sum())


def _log_sigmoid(x: float) -> float:
    return -math.log1p(math.exp(-x)) if x > -30 else x - math.log1p(math.exp(x))


def _rwm_logit(s: int, n: int, mean: float, var: float, cfg: SamplerConfig,
               rng: np.random.Generator) -> np.ndarray:
    """Random-walk Metropolis on a logit; step tuned to 0.3-0.5 acceptance in burn-in."""

    def logpost(th):
        return s * _log_sigmoid(th) + (n - s) * _log_sigmoid(-th) - (th - mean) ** 2 / (2.0 * var)

    n_total = cfg.burn_in + cfg.n_iter
    steps = rng.standard_normal(n_total)
    log_u = np.log(rng.uniform(size=n_total))
    th = mean if n == 0 else math.log((s + 0.5) / (n - s + 0.5))
    cur = logpost(th)
    step = 2.4 * math.sqrt(min(var, 1.0 / max(n * 0.25, 1e-12)) if n else var)
    out = np.empty(cfg.n_draws)
    kept, acc, batch = 0, 0, 100
    for it in range(n_total):
        prop = th + step * steps[it]
        lp = logpost(prop)
        if log_u[it] < lp - cur:
            th, cur = prop, lp
            acc += 1
        if it < cfg.burn_in and (it + 1) % batch == 0:
            rate = acc / batch
            if rate < 0.3:
                step *= 0.8
            elif rate > 0.5:
                step *= 1.25
            acc = 0
        post = it - cfg.burn_in
        if post >= 0 and (post + 1) % cfg.thin == 0 and kept < cfg.n_draws:
            out[kept] = th
            kept += 1
    return out


def fit_denominator(t, z, priors: DenominatorPriors | None = None,
                    cfg: SamplerConfig | None = None, allow_empty: bool = False,
                    n_draws: int | None = None, sharp: bool = False) -> dict[str, np.ndarray]:
    """Posterior draws of the treatment probabilities above and below.

    ``sharp=True`` asserts ``t == z`` and returns a denominator fixed at 1.
    """
    priors = priors or DenominatorPriors()
    t = np.asarray(t)
    z = np.asarray(z)
    s_a, n_a, s_b, n_b = _side_counts(t, z)
    if not allow_empty and (n_a == 0 or n_b == 0):
        raise EstimationError("a side of the threshold has no units")
    if priors.model == "flexible":
        cfg = cfg or FLEXIBLE_SAMPLER
    else:
        cfg = cfg or OUTCOME_SAMPLER
    size = n_draws if n_draws is not None else cfg.n_draws
    if sharp:
        if np.any(t.astype(int) != z.astype(int)):
            raise EstimationError("sharp mode needs treatment equal to the threshold indicator")
        ones = np.ones(size)
        return {"pi_a": ones, "pi_b": np.zeros(size), "delta_pi": ones.copy()}

    rng = np.random.default_rng(cfg.seed)
    if priors.model == "unconstrained":
        pi_a = rng.beta(priors.beta_a + s_a, priors.beta_b + n_a - s_a, size=size)
        pi_b = rng.beta(priors.beta_a + s_b, priors.beta_b + n_b - s_b, size=size)
        return {"pi_a": pi_a, "pi_b": pi_b, "delta_pi": pi_a - pi_b}

    ra, rb = rng.spawn(2)
    th_a = _rwm_logit(s_a, n_a, priors.logit_a_mean, priors.logit_var, cfg, ra)
    th_b = _rwm_logit(s_b, n_b, priors.logit_b_mean, priors.logit_var, cfg, rb)
    pi_a = 1.0 / (1.0 + np.exp(-th_a))
    pi_b = 1.0 / (1.0 + np.exp(-th_b))
    return {"pi_a": pi_a, "pi_b": pi_b, "logit_a": th_a, "logit_b": th_b,
            "delta_pi": pi_a - pi_b}


# --- ratio and summaries -------------------------------------------------


def compute_late(delta_beta, delta_pi, eps: float = LATE_EPS) -> tuple[np.ndarray, int]:
    """Draw-by-draw ratio; draws with ``|delta_pi| < eps`` are dropped and counted."""
    delta_beta = np.asarray(delta_beta, dtype=float)
    delta_pi = np.asarray(delta_pi, dtype=float)
    if delta_beta.shape != delta_pi.shape:
        raise EstimationError("numerator and denominator draw counts differ")
    keep = np.abs(delta_pi) >= eps
    if not keep.any():
        raise EstimationError("every denominator draw is numerically zero")
    return delta_beta[keep] / delta_pi[keep], int((~keep).sum())


def _late_full(delta_beta, delta_pi, eps=LATE_EPS) -> np.ndarray:
    late, _ = compute_late(delta_beta, delta_pi, eps)
    full = np.full(len(delta_beta), np.nan)
    full[np.abs(delta_pi) >= eps] = late
    return full


def summarize(draws, min_draws: int = 100) -> LateEstimate:
    """Median, mean and equal-tailed 95% interval (linear interpolation)."""
    d = np.asarray(draws, dtype=float)
    d = d[~np.isnan(d)]
    if len(d) < min_draws:
        raise EstimationError(f"need at least {min_draws} draws, got {len(d)}")
    lo, med, hi = np.quantile(d, [0.025, 0.5, 0.975])
    return LateEstimate(float(med), float(d.mean()), float(lo), float(hi), len(d))


# --- estimator -----------------------------------------------------------


DENOMINATORS = {"unct": "unconstrained", "flex": "flexible"}


def estimate_late(xc, y, z, t, outcome_priors: OutcomePriors | None = None,
                  denominator_priors: Mapping[str, DenominatorPriors] | None = None,
                  outcome_cfg: SamplerConfig = OUTCOME_SAMPLER,
                  flexible_cfg: SamplerConfig = FLEXIBLE_SAMPLER,
                  seed: int | np.random.SeedSequence = 0, sharp: bool = False,
                  models=("unct", "flex")) -> PosteriorDraws:
    """Numerator and both denominators as independent chains, paired by index."""
    ss = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
    s_out, s_unct, s_flex = ss.spawn(3)
    seeds = {"unct": s_unct, "flex": s_flex}
    ate = fit_ate(xc, y, z, outcome_priors,
                  SamplerConfig(outcome_cfg.n_iter, outcome_cfg.burn_in, outcome_cfg.thin,
                                int(s_out.generate_state(1)[0])))
    n_draws = len(ate["delta_beta"])
    den_priors = dict(denominator_priors or {})
    delta_pi, late, comps = {}, {}, dict(ate)
    for name in models:
        pr = den_priors.get(name, DenominatorPriors(model=DENOMINATORS[name]))
        base = flexible_cfg if pr.model == "flexible" else outcome_cfg
        if pr.model == "flexible" and base.n_draws != n_draws:
            raise EstimationError("flexible sampler must yield as many draws as the outcome chain")
        cfg = SamplerConfig(base.n_iter, base.burn_in, base.thin,
                            int(seeds[name].generate_state(1)[0]))
        den = fit_denominator(t, z, pr, cfg, n_draws=n_draws, sharp=sharp)
        delta_pi[name] = den["delta_pi"]
        late[name] = _late_full(ate["delta_beta"], den["delta_pi"])
        comps[f"pi_a_{name}"] = den["pi_a"]
        comps[f"pi_b_{name}"] = den["pi_b"]
    return PosteriorDraws(ate["delta_beta"], delta_pi, late, comps)


class BayesianFuzzyRDD(BaseEstimator):
    """Fuzzy regression-discontinuity estimator with Bayesian linear sides.

    ``fit(x, y, t)`` takes the raw forcing variable; units with
    ``x >= threshold`` form the upper side. After fitting, ``summary_`` maps
    ``"ate"``, ``"late_unct"`` and ``"late_flex"`` to :class:`LateEstimate`.
    """

    def __init__(self, threshold=0.20, beta0b_mean=3.7, beta0b_var=0.25, lambda_mean=-2.0,
                 lambda_var=1.0, beta1_var=2.0, sigma_upper=5.0, n_iter=10_000, burn_in=2_000,
                 flex_n_iter=20_000, flex_burn_in=5_000, sharp=False, random_state=0):
        self.threshold = threshold
        self.beta0b_mean = beta0b_mean
        self.beta0b_var = beta0b_var
        self.lambda_mean = lambda_mean
        self.lambda_var = lambda_var
        self.beta1_var = beta1_var
        self.sigma_upper = sigma_upper
        self.n_iter = n_iter
        self.burn_in = burn_in
        self.flex_n_iter = flex_n_iter
        self.flex_burn_in = flex_burn_in
        self.sharp = sharp
        self.random_state = random_state

    def fit(self, x, y, t):
        x = np.asarray(x, dtype=float).ravel()
        y = np.asarray(y, dtype=float).ravel()
        t = np.asarray(t).ravel()
        if not len(x) == len(y) == len(t):
            raise ValueError("x, y and t must have the same length")
        xc = x - self.threshold
        z = (x >= self.threshold).astype(np.int8)
        priors = OutcomePriors(self.beta0b_mean, self.beta0b_var, self.lambda_mean,
                               self.lambda_var, 0.0, self.beta1_var, self.sigma_upper)
        thin = max(1, self.flex_n_iter // self.n_iter)
        self.draws_ = estimate_late(
            xc, y, z, t, priors,
            outcome_cfg=SamplerConfig(self.n_iter, self.burn_in, 1),
            flexible_cfg=SamplerConfig(self.n_iter * thin, self.flex_burn_in, thin),
            seed=self.random_state, sharp=self.sharp,
        )
        self.summary_ = {"ate": summarize(self.draws_.delta_beta)}
        for name, late in self.draws_.late.items():
            self.summary_[f"late_{name}"] = summarize(late)
        self._coef = {k: float(np.mean(v)) for k, v in self.draws_.components.items()
                      if k in ("beta0b", "beta0a", "beta1a", "beta1b")}
        return self

    def predict(self, x):
        """Posterior-mean regression line evaluated at ``x``."""
        check_is_fitted(self, "draws_")
        x = np.asarray(x, dtype=float)
        xc = x - self.threshold
        c = self._coef
        return np.where(x >= self.threshold, c["beta0a"] + c["beta1a"] * xc,
                        c["beta0b"] + c["beta1b"] * xc)
