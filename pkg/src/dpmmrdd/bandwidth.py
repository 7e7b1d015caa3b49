"""Classical bandwidth selectors: boundary cross-validation, an asymptotic-MSE
plug-in, local randomization, and fixed windows."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from functools import lru_cache
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np
from scipy import integrate, stats

from .cohort import Cohort

CV_GRID = tuple(np.geomspace(0.01, 0.30, 30))
LR_GRID = tuple(np.geomspace(0.01, 0.25, 15))
M2_EPS = 1e-8

IK_COMPONENTS = ("f", "sigma2_a", "sigma2_b", "m2_a", "m2_b", "Ck")


class BandwidthError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class BandwidthResult:
    method: str
    h: float
    unit_index: np.ndarray = field(repr=False)
    diagnostics: dict = field(default_factory=dict, repr=False)
    flag: str = ""  # "fallback" (IK), "first_window_failed" (LR)

    def __post_init__(self):
        if not self.h > 0:
            raise BandwidthError(f"bandwidth must be positive, got {self.h}")

    def unit_ids(self, ids: Sequence) -> list:
        return [ids[i] for i in self.unit_index]


def subset_by_bandwidth(cohort: Cohort, h: float) -> np.ndarray:
    """Indices of units with ``x0 - h <= x <= x0 + h``."""
    if not h > 0:
        raise BandwidthError(f"bandwidth must be positive, got {h}")
    x = cohort.x
    mask = (x >= cohort.x0 - h) & (x <= cohort.x0 + h)
    above = x >= cohort.x0
    if not (mask & above).any() or not (mask & ~above).any():
        raise BandwidthError(f"a side of the threshold is empty within h={h}")
    return np.flatnonzero(mask)


def fixed_window(cohort: Cohort, h: float) -> BandwidthResult:
    return BandwidthResult("fixed", float(h), subset_by_bandwidth(cohort, h))


# --- cross-validation ----------------------------------------------------


def _side_predictions(x, v, targets, h, below):
    """One-sided local linear predictions at each target.

    Below the threshold the fit uses ``[x_i - h, x_i)``, above ``(x_i, x_i + h]``.
    Returns predictions with NaN where fewer than two distinct points are usable.
    """
    order = np.argsort(x, kind="stable")
    xs, vs = x[order], v[order]
    # centre for numerical stability
    c = xs.mean() if len(xs) else 0.0
    xs = xs - c
    t = targets - c
    cum = lambda a: np.concatenate([[0.0], np.cumsum(a)])
    s0, s1, s2 = cum(np.ones_like(xs)), cum(xs), cum(xs * xs)
    sy, sxy = cum(vs), cum(xs * vs)
    if below:
        lo = np.searchsorted(xs, t - h, side="left")
        hi = np.searchsorted(xs, t, side="left")
    else:
        lo = np.searchsorted(xs, t, side="right")
        hi = np.searchsorted(xs, t + h, side="right")
    n = s0[hi] - s0[lo]
    sx = s1[hi] - s1[lo]
    sxx = s2[hi] - s2[lo]
    syy = sy[hi] - sy[lo]
    sxyv = sxy[hi] - sxy[lo]
    with np.errstate(invalid="ignore", divide="ignore"):
        mx = sx / n
        var = sxx / n - mx * mx
        cov = sxyv / n - mx * (syy / n)
        slope = cov / var
        pred = syy / n + slope * (t - mx)
    span = np.where(n > 0, xs[np.maximum(hi - 1, 0)] - xs[np.minimum(lo, len(xs) - 1)], 0.0)
    ok = (n >= 2) & (span > 0)
    return np.where(ok, pred, np.nan)


def cv_criterion(h: float, x, v, x0: float, delta: float = 0.5, return_skips: bool = False):
    """Mean squared boundary prediction error of variable ``v`` at bandwidth ``h``.

    Evaluated on units between the ``delta`` quantile of the lower side and
    the ``1 - delta`` quantile of the upper side. Units whose one-sided
    window holds fewer than two distinct points are skipped.
    """
    if not h > 0:
        raise BandwidthError(f"bandwidth must be positive, got {h}")
    if not 0.5 <= delta <= 1:
        raise BandwidthError(f"delta must lie in [0.5, 1], got {delta}")
    x = np.asarray(x, dtype=float)
    v = np.asarray(v, dtype=float)
    below = x < x0
    if below.sum() < 2 or (~below).sum() < 2:
        raise BandwidthError("need at least 2 units on each side")
    q_b = np.quantile(x[below], delta)
    q_a = np.quantile(x[~below], 1.0 - delta)
    sq, skipped = [], 0
    for is_below in (True, False):
        side = below if is_below else ~below
        xs, vs = x[side], v[side]
        sel = (xs >= q_b) & (xs <= q_a)
        pred = _side_predictions(xs, vs, xs[sel], h, below=is_below)
        err = (vs[sel] - pred) ** 2
        skipped += int(np.isnan(err).sum())
        sq.append(err[~np.isnan(err)])
    sq = np.concatenate(sq)
    if len(sq) == 0:
        raise BandwidthError(f"every boundary prediction was skipped at h={h}")
    value = float(sq.mean())
    return (value, skipped) if return_skips else value


def _cv_curve(x, v, x0, delta, grid):
    values = []
    for h in grid:
        try:
            values.append(cv_criterion(h, x, v, x0, delta))
        except BandwidthError:
            values.append(math.nan)
    return np.array(values)


def _grid_argmin(grid, values):
    if np.all(np.isnan(values)):
        raise BandwidthError("criterion undefined on the whole grid")
    return float(grid[int(np.nanargmin(values))])  # first minimum = smaller h


def cv_select(cohort: Cohort, delta: float = 0.5, h_grid: Sequence[float] = CV_GRID,
              fuzzy: bool = True) -> BandwidthResult:
    """Grid argmin of the boundary CV criterion (smaller ``h`` on ties).

    In the fuzzy version the criterion is also computed for the treatment
    and the smaller of the two selected bandwidths is kept; a treatment that
    is constant within each side carries no information and is ignored.
    """
    grid = np.sort(np.asarray(h_grid, dtype=float))
    if len(grid) == 0:
        raise BandwidthError("empty bandwidth grid")
    curve_y = _cv_curve(cohort.x, cohort.y, cohort.x0, delta, grid)
    h = h_y = _grid_argmin(grid, curve_y)
    diag = {"h": grid, "criterion_y": curve_y, "h_y": h_y}
    if fuzzy:
        below = cohort.x < cohort.x0
        t = cohort.t
        degenerate = np.ptp(t[below]) == 0 and np.ptp(t[~below]) == 0
        if not degenerate:
            curve_t = _cv_curve(cohort.x, t, cohort.x0, delta, grid)
            diag["criterion_t"] = curve_t
            try:
                h_t = _grid_argmin(grid, curve_t)
                diag["h_t"] = h_t
                h = min(h_y, h_t)
            except BandwidthError:
                pass
    return BandwidthResult("cv", h, subset_by_bandwidth(cohort, h), diag)


# --- IK plug-in ----------------------------------------------------------


_KERNELS = {"rectangular": lambda u: 1.0, "triangular": lambda u: 1.0 - u}


@lru_cache(maxsize=None)
def kernel_constant(kernel: str) -> float:
    """Boundary constant ``(V / (4 B^2))^(1/5)`` of a one-sided local linear fit."""
    if kernel not in _KERNELS:
        raise BandwidthError(f"unknown kernel {kernel!r}")
    k = _KERNELS[kernel]
    nu = [integrate.quad(lambda u, j=j: u ** j * k(u), 0, 1)[0] for j in range(4)]
    den = nu[0] * nu[2] - nu[1] ** 2
    bias = 0.5 * (nu[2] ** 2 - nu[1] * nu[3]) / den
    var = integrate.quad(lambda u: (nu[2] - nu[1] * u) ** 2 * k(u) ** 2, 0, 1)[0] / den ** 2
    return (var / (4.0 * bias * bias)) ** 0.2


def ik_formula(f, sigma2_a, sigma2_b, m2_a, m2_b, Ck, n) -> float:
    return Ck * ((sigma2_a + sigma2_b) / (f * (m2_a + m2_b) ** 2)) ** 0.2 * n ** -0.2


def ik_plugins(x, y, x0: float) -> dict[str, float]:
    """Density, conditional variances and curvatures at the threshold."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    n = len(x)
    sd = float(np.std(x, ddof=1))
    iqr = float(np.subtract(*np.percentile(x, [75, 25])))
    spread = min(sd, iqr / 1.34) if iqr > 0 else sd
    h_kde = 0.9 * spread * n ** -0.2
    f = float(np.mean(stats.norm.pdf((x - x0) / h_kde)) / h_kde)

    h1 = 1.84 * sd * n ** -0.2
    above = x >= x0
    out = {"f": f}
    for tag, side in (("a", above), ("b", ~above)):
        xs, ys = x[side] - x0, y[side]
        win = np.abs(xs) <= h1
        if win.sum() < 3:
            # pilot window too narrow: widen to the three nearest units
            win = np.zeros(len(xs), dtype=bool)
            win[np.argsort(np.abs(xs))[:3]] = True
        coef = np.polyfit(xs[win], ys[win], 1)
        resid = ys[win] - np.polyval(coef, xs[win])
        out[f"sigma2_{tag}"] = float(resid @ resid / (win.sum() - 2))
        quart = np.polyfit(xs, ys, 4)
        out[f"m2_{tag}"] = float(2.0 * quart[-3])
    return out


def ik_bandwidth(cohort: Cohort, kernel: str = "triangular",
                 plugins: Mapping[str, float] | None = None,
                 n: int | None = None) -> BandwidthResult:
    """Plug-in bandwidth minimizing the asymptotic MSE at the threshold.

    ``plugins`` overrides any of ``f, sigma2_a, sigma2_b, m2_a, m2_b, Ck``
    and ``n`` the sample size, for checking the closed form in isolation.
    """
    above = cohort.x >= cohort.x0
    if plugins is None or not set(IK_COMPONENTS) <= set(plugins):
        if above.sum() < 20 or (~above).sum() < 20:
            raise BandwidthError("need at least 20 units on each side")
        comp = ik_plugins(cohort.x, cohort.y, cohort.x0)
        comp["Ck"] = kernel_constant(kernel)
    else:
        comp = {}
    comp.update(plugins or {})
    n = cohort.n if n is None else n
    flag = ""
    if abs(comp["m2_a"] + comp["m2_b"]) < M2_EPS:
        h = float(np.ptp(cohort.x)) / 2.0
        flag = "fallback"
    else:
        h = ik_formula(comp["f"], comp["sigma2_a"], comp["sigma2_b"], comp["m2_a"],
                       comp["m2_b"], comp["Ck"], n)
    comp["h"] = h
    return BandwidthResult("ik", h, subset_by_bandwidth(cohort, h), comp, flag)


# --- local randomization -------------------------------------------------


def _min_p(cov: np.ndarray, z: np.ndarray) -> float:
    ps = []
    for j in range(cov.shape[1]):
        a, b = cov[z, j], cov[~z, j]
        if np.ptp(np.concatenate([a, b])) == 0:
            ps.append(1.0)
            continue
        ps.append(float(stats.mannwhitneyu(a, b, alternative="two-sided").pvalue))
    return min(ps)


LR_RULES = ("largest", "sequential")


def lr_window(cohort: Cohort, covariates: np.ndarray | None = None, alpha_level: float = 0.15,
              window_grid: Sequence[float] = LR_GRID, rule: str = "largest") -> BandwidthResult:
    """Widest window in which covariates stay balanced across the threshold.

    Each window tests every covariate (rank-sum, upper vs lower side) and
    keeps the smallest p-value; windows with fewer than 2 units on a side
    are skipped. A window passes when its min-p exceeds ``alpha_level``.
    ``rule="largest"`` returns the largest passing window of the grid;
    ``rule="sequential"`` grows the window from the smallest and stops at the
    first rejection. When no window qualifies the smallest evaluated window
    is returned with flag ``"first_window_failed"``. The p-value trace covers
    the whole grid.
    """
    if rule not in LR_RULES:
        raise BandwidthError(f"unknown rule {rule!r}")
    grid = np.asarray(window_grid, dtype=float)
    if len(grid) == 0 or np.any(np.diff(grid) <= 0):
        raise BandwidthError("window grid must be nonempty and strictly ascending")
    cov = cohort.cont if covariates is None else np.asarray(covariates, dtype=float)
    if cov.ndim == 1:
        cov = cov[:, None]
    if cov.shape[1] < 1:
        raise BandwidthError("need at least one covariate")
    x, x0 = cohort.x, cohort.x0
    above = x >= x0
    trace = []
    for h in grid:
        inside = (x >= x0 - h) & (x <= x0 + h)
        za = inside & above
        zb = inside & ~above
        if za.sum() < 2 or zb.sum() < 2:
            trace.append(math.nan)
            continue
        trace.append(_min_p(cov[inside], above[inside]))
    trace = np.array(trace)

    evaluated = np.flatnonzero(~np.isnan(trace))
    if len(evaluated) == 0:
        raise BandwidthError("no window in the grid has 2 units on each side")
    passing = evaluated[trace[evaluated] > alpha_level]
    if rule == "sequential":
        failed = evaluated[trace[evaluated] <= alpha_level]
        if len(failed):
            passing = passing[passing < failed[0]]
    flag = ""
    if len(passing):
        chosen = grid[passing[-1]]
    else:
        chosen, flag = grid[evaluated[0]], "first_window_failed"
    diag = {"h": grid, "min_p": trace, "skipped": int(np.isnan(trace).sum()), "rule": rule}
    return BandwidthResult("lr", float(chosen), subset_by_bandwidth(cohort, chosen), diag, flag)


# --- diagnostics export --------------------------------------------------


def _fmt(v) -> str:
    return "" if isinstance(v, float) and math.isnan(v) else repr(float(v))


def write_diagnostics_csv(result: BandwidthResult, path) -> Path:
    path = Path(path)
    d = result.diagnostics
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        if result.method == "cv":
            w.writerow(["h", "criterion"])
            for h, c in zip(d["h"], d["criterion_y"]):
                w.writerow([_fmt(h), _fmt(c)])
        elif result.method == "lr":
            w.writerow(["h", "min_p"])
            for h, p in zip(d["h"], d["min_p"]):
                w.writerow([_fmt(h), _fmt(p)])
        elif result.method == "ik":
            cols = list(IK_COMPONENTS) + ["h"]
            w.writerow(cols)
            w.writerow([_fmt(d[c]) for c in cols])
        else:
            w.writerow(["h"])
            w.writerow([_fmt(result.h)])
    return path
