"""End-to-end runs: cohorts in, clustering-based and bandwidth-based LATE
estimates out, pooled over replicates."""

from __future__ import annotations

import csv
import math
import platform
import re
from collections import OrderedDict
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from importlib import metadata, resources
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from . import bandwidth as bw
from .cohort import Cohort, CohortError, load_cohort_csv, standardize_covariates, write_cohort_csv
from .dpmm import DpmmPriors, McmcConfig, MixedData, run_dpmm
from .estimator import (EstimationError, OutcomePriors, SamplerConfig, estimate_late,
                        summarize)
from .partition import best_partition, compute_psm, default_k_range
from .selection import (STRATEGIES, SelectionError, select_all, summarize_clusters,
                        write_cluster_summary_csv, write_selection_csv)
from .simulate import SimConfig, StudyConfig, simulate_replicate

ESTIMANDS = ("LATE_flex", "LATE_unct")
_DRAW_KEYS = {"LATE_flex": "flex", "LATE_unct": "unct"}
BASELINES = ("LR", "IK", "h=0.10", "h=0.05", "CV")
PLOT_KINDS = ("scatter_selection", "binned_means", "forest")
BUNDLED = "bundled"

EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_RUN = 0, 2, 3, 4


class ConfigError(ValueError):
    pass


class PipelineError(RuntimeError):
    pass


# --- configuration -------------------------------------------------------

_bool = lambda s: {"true": True, "1": True, "yes": True, "false": False, "0": False,
                   "no": False}[str(s).strip().lower()]
_opt_float = lambda s: None if str(s).strip().lower() in ("", "none") else float(s)
_str_list = lambda s: tuple(p.strip() for p in str(s).split(",") if p.strip())
_int_list = lambda s: tuple(int(p) for p in _str_list(s))

# key -> (parser, default)
SCHEMA: "OrderedDict[str, tuple]" = OrderedDict([
    ("mode", (str, "simulate")),
    ("input", (str, "")),
    ("seed", (int, 0)),
    ("reps", (int, 20)),
    ("threads", (int, 1)),
    ("out", (str, "results")),
    ("x0", (float, 0.20)),
    ("sim.n", (int, 2000)),
    ("sim.effect", (float, -2.0)),
    ("sim.compliance_above", (float, 0.85)),
    ("sim.compliance_below", (float, 0.10)),
    ("sim.confounding", (str, "low")),
    ("sim.cat_levels", (_int_list, ())),
    ("dpmm.kappa0", (_opt_float, None)),
    ("dpmm.a", (float, 0.5)),
    ("dpmm.alpha_shape", (float, 2.0)),
    ("dpmm.alpha_rate", (float, 1.0)),
    ("dpmm.fixed_alpha", (_opt_float, None)),
    ("dpmm.label_switch", (_bool, True)),
    ("cluster.n_iter", (int, 5000)),
    ("cluster.burn_in", (int, 2000)),
    ("cluster.thin", (int, 1)),
    ("cluster.k_max", (int, 20)),
    ("estimation.n_iter", (int, 10_000)),
    ("estimation.burn_in", (int, 2000)),
    ("estimation.flex_n_iter", (int, 20_000)),
    ("estimation.flex_burn_in", (int, 5000)),
    ("estimation.flex_thin", (int, 2)),
    ("estimation.sharp", (_bool, False)),
    ("outcome.beta0b_mean", (float, 3.7)),
    ("outcome.beta0b_var", (float, 0.25)),
    ("outcome.lambda_mean", (float, -2.0)),
    ("outcome.lambda_var", (float, 1.0)),
    ("outcome.beta1_var", (float, 2.0)),
    ("outcome.sigma_upper", (float, 5.0)),
    ("selection.zeta", (_opt_float, None)),
    ("selection.lower", (float, 0.1)),
    ("selection.upper", (float, 0.9)),
    ("selection.strategies", (_str_list, STRATEGIES)),
    ("baselines.methods", (_str_list, BASELINES)),
    ("baselines.cv_delta", (float, 0.5)),
    ("baselines.lr_alpha", (float, 0.15)),
    ("baselines.lr_rule", (str, "largest")),
    ("baselines.ik_kernel", (str, "triangular")),
    ("plot.bins", (int, 20)),
    ("output.write_cohorts", (_bool, True)),
])


def parse_config_text(text: str) -> dict[str, str]:
    """``key = value`` lines; ``#`` starts a comment."""
    out = {}
    for k, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {k}: expected 'key = value'")
        key, value = (p.strip() for p in line.split("=", 1))
        if key not in SCHEMA:
            raise ConfigError(f"line {k}: unknown key {key!r}")
        out[key] = value
    return out


def _format_value(v) -> str:
    if v is None:
        return "none"
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, tuple):
        return ",".join(str(p) for p in v)
    return str(v)


@dataclass(frozen=True)
class RunConfig:
    mode: str
    input: str
    study: StudyConfig
    dpmm_priors: DpmmPriors
    cluster_mcmc: McmcConfig
    outcome_sampler: SamplerConfig
    flexible_sampler: SamplerConfig
    outcome_priors: OutcomePriors
    bounds: tuple[float, float]
    strategies: tuple[str, ...]
    baselines: tuple[str, ...]
    out: Path
    seed: int
    threads: int = 1
    n_reps: int = 20
    label_switch: bool = True
    k_max: int = 20
    sharp: bool = False
    cv_delta: float = 0.5
    lr_alpha: float = 0.15
    lr_rule: str = "largest"
    ik_kernel: str = "triangular"
    plot_bins: int = 20
    write_cohorts: bool = True
    settings: tuple = field(default=(), repr=False)  # resolved key/value pairs

    @property
    def x0(self) -> float:
        return self.study.sim.x0

    @property
    def methods(self) -> tuple[str, ...]:
        return self.strategies + self.baselines

    @classmethod
    def from_mapping(cls, values: Mapping[str, object] | None = None) -> "RunConfig":
        raw = dict(values or {})
        unknown = set(raw) - set(SCHEMA)
        if unknown:
            raise ConfigError(f"unknown keys: {', '.join(sorted(unknown))}")
        v = {}
        for key, (parse, default) in SCHEMA.items():
            if key in raw and not isinstance(raw[key], str):
                v[key] = raw[key]
            elif key in raw:
                try:
                    v[key] = parse(raw[key])
                except (ValueError, KeyError):
                    raise ConfigError(f"bad value for {key}: {raw[key]!r}") from None
            else:
                v[key] = default
        try:
            return cls._build(v)
        except (ValueError, TypeError) as exc:
            if isinstance(exc, ConfigError):
                raise
            raise ConfigError(str(exc)) from None

    @classmethod
    def _build(cls, v: dict) -> "RunConfig":
        if v["mode"] not in ("simulate", "analyze"):
            raise ConfigError(f"mode must be simulate or analyze, got {v['mode']!r}")
        if v["mode"] == "analyze" and not v["input"]:
            raise ConfigError("analyze mode needs an input path")
        if v["threads"] < 1 or v["reps"] < 1:
            raise ConfigError("threads and reps must be >= 1")
        for s in v["selection.strategies"]:
            if s not in STRATEGIES:
                raise ConfigError(f"unknown strategy {s!r}")
        for b in v["baselines.methods"]:
            if b not in ("LR", "IK", "CV") and not re.fullmatch(r"h=\d*\.?\d+", b):
                raise ConfigError(f"unknown baseline {b!r}")
        if v["baselines.lr_rule"] not in ("largest", "sequential"):
            raise ConfigError("baselines.lr_rule must be 'largest' or 'sequential'")
        if v["baselines.ik_kernel"] not in ("triangular", "rectangular"):
            raise ConfigError("baselines.ik_kernel must be 'triangular' or 'rectangular'")
        methods = tuple(v["selection.strategies"]) + tuple(v["baselines.methods"])
        if len(set(methods)) != len(methods):
            raise ConfigError("duplicate method names")
        conf = v["sim.confounding"]
        try:
            conf = float(conf)
        except ValueError:
            pass
        sim = SimConfig(n=v["sim.n"], effect=v["sim.effect"], x0=v["x0"],
                        compliance_above=v["sim.compliance_above"],
                        compliance_below=v["sim.compliance_below"], confounding_scale=conf,
                        seed=v["seed"], cat_levels=tuple(v["sim.cat_levels"]))
        if v["selection.zeta"] is not None:
            from .selection import SelectionError, balance_bounds
            try:
                bounds = balance_bounds(v["selection.zeta"])
            except SelectionError as exc:
                raise ConfigError(str(exc)) from None
        else:
            bounds = (v["selection.lower"], v["selection.upper"])
            if not 0 <= bounds[0] <= bounds[1] <= 1:
                raise ConfigError("need 0 <= selection.lower <= selection.upper <= 1")
        thin = v["estimation.flex_thin"]
        flex = SamplerConfig(v["estimation.flex_n_iter"], v["estimation.flex_burn_in"], thin)
        out_s = SamplerConfig(v["estimation.n_iter"], v["estimation.burn_in"], 1)
        if flex.n_draws != out_s.n_draws:
            raise ConfigError("estimation.flex_n_iter / flex_thin must equal estimation.n_iter")
        if v["plot.bins"] < 1:
            raise ConfigError("plot.bins must be >= 1")
        settings = tuple((k, _format_value(v[k])) for k in SCHEMA)
        return cls(
            mode=v["mode"], input=v["input"], study=StudyConfig(sim, v["reps"]),
            dpmm_priors=DpmmPriors(kappa0=v["dpmm.kappa0"], a=v["dpmm.a"],
                                   alpha_shape=v["dpmm.alpha_shape"],
                                   alpha_rate=v["dpmm.alpha_rate"],
                                   fixed_alpha=v["dpmm.fixed_alpha"]),
            cluster_mcmc=McmcConfig(v["cluster.n_iter"], v["cluster.burn_in"], v["cluster.thin"]),
            outcome_sampler=out_s, flexible_sampler=flex,
            outcome_priors=OutcomePriors(v["outcome.beta0b_mean"], v["outcome.beta0b_var"],
                                         v["outcome.lambda_mean"], v["outcome.lambda_var"], 0.0,
                                         v["outcome.beta1_var"], v["outcome.sigma_upper"]),
            bounds=bounds, strategies=tuple(v["selection.strategies"]),
            baselines=tuple(v["baselines.methods"]), out=Path(v["out"]), seed=v["seed"],
            threads=v["threads"], n_reps=v["reps"], label_switch=v["dpmm.label_switch"],
            k_max=v["cluster.k_max"], sharp=v["estimation.sharp"], cv_delta=v["baselines.cv_delta"],
            lr_alpha=v["baselines.lr_alpha"], lr_rule=v["baselines.lr_rule"], ik_kernel=v["baselines.ik_kernel"],
            plot_bins=v["plot.bins"], write_cohorts=v["output.write_cohorts"], settings=settings,
        )


def load_config(path=None, overrides: Mapping[str, object] | None = None) -> RunConfig:
    values: dict[str, object] = {}
    if path is not None:
        values.update(parse_config_text(Path(path).read_text()))
    values.update({k: v for k, v in (overrides or {}).items() if v is not None})
    return RunConfig.from_mapping(values)


def bundled_cohort_path() -> Path:
    return Path(str(resources.files("dpmmrdd") / "data" / "reallike_cohort.csv"))


# --- results -------------------------------------------------------------


@dataclass(frozen=True)
class MethodRow:
    rep: int
    estimand: str
    method: str
    n_units: int
    median: float = math.nan
    mean: float = math.nan
    lower: float = math.nan
    upper: float = math.nan
    n_excluded: int = 0
    h: float = math.nan
    status: str = "ok"
    reason: str = ""


@dataclass(eq=False)
class ReplicateResult:
    rep: int
    rows: list[MethodRow]
    draws: dict[tuple[str, str], np.ndarray]
    n_units: dict[str, int]
    selections: dict = field(default_factory=dict)
    labels: np.ndarray | None = None
    quarantine: str = ""


@dataclass(frozen=True)
class ComparisonRow:
    estimand: str
    method: str
    median: float
    mean: float
    lower: float
    upper: float
    n_units: float
    n_reps: int

    @property
    def available(self) -> bool:
        return not math.isnan(self.median)


class ComparisonTable:
    """Pooled summaries keyed by ``(estimand, method)``."""

    columns = ("estimand", "method", "median", "mean", "lower", "upper", "n_units", "n_reps")

    def __init__(self, rows: Sequence[ComparisonRow]):
        self.rows = list(rows)
        self._index = {(r.estimand, r.method): r for r in self.rows}

    def __len__(self) -> int:
        return len(self.rows)

    def __iter__(self):
        return iter(self.rows)

    def row(self, estimand: str, method: str) -> ComparisonRow:
        return self._index[(estimand, method)]

    def write_csv(self, path) -> Path:
        path = Path(path)
        with path.open("w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(self.columns)
            for r in self.rows:
                w.writerow([r.estimand, r.method, _num(r.median), _num(r.mean), _num(r.lower),
                            _num(r.upper), _num(r.n_units), r.n_reps])
        return path

    def format(self) -> str:
        lines = [f"{'estimand':<10} {'method':<7} {'median':>8} {'mean':>8} {'lower':>8} "
                 f"{'upper':>8} {'n':>7}"]
        for r in self.rows:
            if r.available:
                lines.append(f"{r.estimand:<10} {r.method:<7} {r.median:8.3f} {r.mean:8.3f} "
                             f"{r.lower:8.3f} {r.upper:8.3f} {r.n_units:7.1f}")
            else:
                lines.append(f"{r.estimand:<10} {r.method:<7} {'unavailable':>35}")
        return "\n".join(lines)


@dataclass(eq=False)
class PipelineResult:
    config: RunConfig
    table: ComparisonTable
    replicates: list[ReplicateResult]
    cohorts: list[Cohort]


def _num(v) -> str:
    if v is None or (isinstance(v, float) and math.isnan(v)):
        return ""
    return repr(float(v))


# --- per-replicate work --------------------------------------------------


def _replicate_seeds(seed: int, r: int, n_methods: int):
    root = np.random.SeedSequence(seed, spawn_key=(r,))
    dpmm_ss, *method_ss = root.spawn(1 + n_methods)
    return int(dpmm_ss.generate_state(1)[0]), method_ss


def _cluster(cohort: Cohort, cfg: RunConfig, seed: int):
    cont = standardize_covariates(cohort).values
    data = MixedData.build(cont, cohort.cat, cohort.schema.cat_levels)
    mcmc = replace(cfg.cluster_mcmc, seed=seed)
    chain = run_dpmm(data, cfg.dpmm_priors, mcmc, label_switch=cfg.label_switch)
    psm = compute_psm(chain)
    k_range = [k for k in default_k_range(cohort.n) if k <= cfg.k_max]
    part = best_partition(psm, k_range or None)
    return chain, psm, part


def _baseline_subset(cohort: Cohort, name: str, cfg: RunConfig):
    if name == "LR":
        cov = np.column_stack([cohort.cont, cohort.cat]) if cohort.cat.size else cohort.cont
        return bw.lr_window(cohort, cov, alpha_level=cfg.lr_alpha, rule=cfg.lr_rule)
    if name == "IK":
        return bw.ik_bandwidth(cohort, kernel=cfg.ik_kernel)
    if name == "CV":
        return bw.cv_select(cohort, delta=cfg.cv_delta)
    return bw.fixed_window(cohort, float(name[2:]))


def run_replicate(cfg: RunConfig, r: int, cohort: Cohort) -> ReplicateResult:
    """Cluster, select, fit; writes this replicate's own files under ``cfg.out``."""
    out = Path(cfg.out)
    dpmm_seed, method_ss = _replicate_seeds(cfg.seed, r, len(cfg.methods))
    z = (cohort.x >= cohort.x0).astype(np.int8)
    subsets: dict[str, np.ndarray] = {}
    h_of: dict[str, float] = {}
    failed: dict[str, str] = {}
    quarantine = ""
    selections, labels = {}, None

    if cfg.strategies:
        try:
            _, psm, part = _cluster(cohort, cfg, dpmm_seed)
            labels = part.labels
            summaries = summarize_clusters(part, psm, z, bounds=cfg.bounds)
            write_cluster_summary_csv(summaries, out / f"cluster_summary_rep{r}.csv")
            selections = select_all(summaries, labels, cohort.n, cfg.strategies)
            write_selection_csv(selections, labels, list(cohort.ids), out / f"selection_rep{r}.csv")
            for name, sel in selections.items():
                subsets[name] = sel.unit_index
        except (SelectionError, CohortError) as exc:
            quarantine = f"clustering: {exc}"
            for name in cfg.strategies:
                failed[name] = quarantine

    for name in cfg.baselines:
        try:
            res = _baseline_subset(cohort, name, cfg)
        except bw.BandwidthError as exc:
            failed[name] = f"bandwidth: {exc}"
            continue
        subsets[name] = res.unit_index
        h_of[name] = res.h
        if res.method in ("cv", "lr", "ik"):
            bw.write_diagnostics_csv(res, out / f"diagnostics_{res.method}_rep{r}.csv")

    rows, draws, sizes = [], {}, {}
    for m_idx, name in enumerate(cfg.methods):
        if name in failed:
            for est in ("ATE",) + ESTIMANDS:
                rows.append(MethodRow(r, est, name, 0, status="failed", reason=failed[name]))
            continue
        idx = subsets[name]
        sub = cohort.subset(idx)
        sizes[name] = len(idx)
        xc = sub.x - sub.x0
        zs = (sub.x >= sub.x0).astype(np.int8)
        try:
            post = estimate_late(xc, sub.y, zs, sub.t, cfg.outcome_priors,
                                 outcome_cfg=cfg.outcome_sampler,
                                 flexible_cfg=cfg.flexible_sampler,
                                 seed=method_ss[m_idx], sharp=cfg.sharp)
        except EstimationError as exc:
            for est in ("ATE",) + ESTIMANDS:
                rows.append(MethodRow(r, est, name, len(idx), status="failed",
                                      reason=f"estimation: {exc}", h=h_of.get(name, math.nan)))
            continue
        per = {"ATE": (post.delta_beta, 0)}
        for est in ESTIMANDS:
            key = _DRAW_KEYS[est]
            per[est] = (post.late[key], post.n_excluded[key])
        for est, (d, n_exc) in per.items():
            s = summarize(d)
            rows.append(MethodRow(r, est, name, len(idx), s.median, s.mean, s.lower, s.upper,
                                  n_exc, h_of.get(name, math.nan)))
            if est in ESTIMANDS:
                draws[(est, name)] = d[~np.isnan(d)]
    return ReplicateResult(r, rows, draws, sizes, selections, labels, quarantine)


def _run_one(args):
    cfg, r, cohort = args
    return run_replicate(cfg, r, cohort)


# --- orchestration -------------------------------------------------------


def load_cohorts(cfg: RunConfig) -> list[Cohort]:
    if cfg.mode == "simulate":
        return [simulate_replicate(cfg.study, r) for r in range(cfg.n_reps)]
    src = bundled_cohort_path() if cfg.input == BUNDLED else Path(cfg.input)
    if src.is_dir():
        files = sorted(src.glob("rep_*.csv"), key=lambda p: int(re.sub(r"\D", "", p.stem)))
        if not files:
            raise CohortError(f"{src}: no rep_<r>.csv files")
        files = files[:cfg.n_reps]
    else:
        files = [src]
    return [load_cohort_csv(f, x0=cfg.x0) for f in files]


def pool(replicates: Sequence[ReplicateResult], cfg: RunConfig) -> ComparisonTable:
    """Concatenate draws over replicates per (estimand, method), then summarize."""
    rows = []
    for est in ESTIMANDS:
        for name in cfg.methods:
            parts = [rep.draws[(est, name)] for rep in replicates if (est, name) in rep.draws]
            sizes = [rep.n_units.get(name, math.nan) for rep in replicates if (est, name) in rep.draws]
            if parts:
                try:
                    s = summarize(np.concatenate(parts))
                    rows.append(ComparisonRow(est, name, s.median, s.mean, s.lower, s.upper,
                                              float(np.mean(sizes)), len(parts)))
                    continue
                except EstimationError:
                    pass
            rows.append(ComparisonRow(est, name, math.nan, math.nan, math.nan, math.nan,
                                      math.nan, 0))
    return ComparisonTable(rows)


def write_per_replicate_csv(replicates: Sequence[ReplicateResult], path) -> Path:
    path = Path(path)
    cols = ("rep", "estimand", "method", "n_units", "median", "mean", "lower", "upper",
            "n_excluded", "h", "status", "reason")
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(cols)
        for rep in replicates:
            for m in rep.rows:
                w.writerow([m.rep, m.estimand, m.method, m.n_units, _num(m.median), _num(m.mean),
                            _num(m.lower), _num(m.upper), m.n_excluded, _num(m.h), m.status,
                            m.reason])
    return path


def write_draws(rep: ReplicateResult, path) -> Path:
    np.savez(path, **{f"{est}|{method}": d for (est, method), d in sorted(rep.draws.items())})
    return Path(path)


def _versions() -> list[tuple[str, str]]:
    out = []
    for dist in ("artifact", "numpy", "scipy", "scikit-learn"):
        try:
            out.append((dist, metadata.version(dist)))
        except metadata.PackageNotFoundError:
            out.append((dist, "unknown"))
    out.append(("python", platform.python_version()))
    return out


def write_manifest(cfg: RunConfig, replicates: Sequence[ReplicateResult], path) -> Path:
    path = Path(path)
    lines = ["# run manifest", "[config]"]
    lines += [f"{k} = {v}" for k, v in cfg.settings]
    lines += ["[versions]"] + [f"{k} = {v}" for k, v in _versions()]
    lines += ["[replicates]"]
    for rep in replicates:
        n_fail = len({m.method for m in rep.rows if m.status != "ok"})
        note = f" quarantined ({rep.quarantine})" if rep.quarantine else ""
        lines.append(f"rep {rep.rep}: {n_fail} failed methods{note}")
    path.write_text("\n".join(lines) + "\n")
    return path


def run_pipeline(cfg: RunConfig) -> PipelineResult:
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    cohorts = load_cohorts(cfg)
    if cfg.mode == "simulate" and cfg.write_cohorts:
        (out / "cohorts").mkdir(exist_ok=True)
        for r, c in enumerate(cohorts):
            write_cohort_csv(c, out / "cohorts" / f"rep_{r}.csv")
    jobs = [(cfg, r, c) for r, c in enumerate(cohorts)]
    if cfg.threads > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=min(cfg.threads, len(jobs))) as ex:
            replicates = list(ex.map(_run_one, jobs))
    else:
        replicates = [_run_one(j) for j in jobs]

    table = pool(replicates, cfg)
    table.write_csv(out / "comparison_table.csv")
    write_per_replicate_csv(replicates, out / "per_replicate.csv")
    for rep in replicates:
        write_draws(rep, out / f"draws_rep{rep.rep}.npz")
    result = PipelineResult(cfg, table, replicates, cohorts)
    for kind in PLOT_KINDS:
        emit_plot_data(result, kind, out, n_bins=cfg.plot_bins)
    write_manifest(cfg, replicates, out / "run_manifest.txt")
    return result


# --- plot data -----------------------------------------------------------


def binned_means(x, y, t, n_bins: int):
    """Equal-width bins over the range of ``x`` (last bin closed).

    Returns ``(lo_edges, hi_edges, counts, mean_y, mean_t)``; empty bins get NaN means.
    """
    x = np.asarray(x, dtype=float)
    if n_bins < 1:
        raise ValueError("n_bins must be >= 1")
    lo, hi = float(x.min()), float(x.max())
    edges = np.linspace(lo, hi, n_bins + 1)
    width = (hi - lo) / n_bins
    idx = np.zeros(len(x), dtype=np.intp) if width == 0 else \
        np.minimum(((x - lo) / width).astype(np.intp), n_bins - 1)
    counts = np.bincount(idx, minlength=n_bins)
    with np.errstate(invalid="ignore", divide="ignore"):
        my = np.bincount(idx, weights=np.asarray(y, dtype=float), minlength=n_bins) / counts
        mt = np.bincount(idx, weights=np.asarray(t, dtype=float), minlength=n_bins) / counts
    return edges[:-1], edges[1:], counts, my, mt


def _reference_replicate(result: PipelineResult):
    for rep in result.replicates:
        if rep.selections:
            return rep, result.cohorts[rep.rep]
    return result.replicates[0], result.cohorts[0]


def emit_plot_data(result: PipelineResult, kind: str, out_dir, n_bins: int = 20) -> Path:
    """Write ``plot_<kind>.csv``. Scatter and binned data describe the first
    replicate with a successful clustering."""
    if kind not in PLOT_KINDS:
        raise ValueError(f"unknown plot kind {kind!r}; expected one of {PLOT_KINDS}")
    path = Path(out_dir) / f"plot_{kind}.csv"
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        if kind == "forest":
            w.writerow(["estimand", "method", "median", "lower", "upper"])
            for r in result.table:
                w.writerow([r.estimand, r.method, _num(r.median), _num(r.lower), _num(r.upper)])
        elif kind == "binned_means":
            _, cohort = _reference_replicate(result)
            w.writerow(["bin", "x_lo", "x_hi", "n", "mean_y", "mean_t"])
            for b, row in enumerate(zip(*binned_means(cohort.x, cohort.y, cohort.t, n_bins))):
                lo, hi, n, my, mt = row
                w.writerow([b, _num(lo), _num(hi), int(n), _num(my), _num(mt)])
        else:
            rep, cohort = _reference_replicate(result)
            w.writerow(["strategy", "id", "x", "y", "t", "selected"])
            for name, sel in rep.selections.items():
                chosen = np.zeros(cohort.n, dtype=bool)
                chosen[sel.unit_index] = True
                for i in range(cohort.n):
                    w.writerow([name, cohort.ids[i], _num(cohort.x[i]), _num(cohort.y[i]),
                                int(cohort.t[i]), int(chosen[i])])
    return path


# --- report --------------------------------------------------------------


def report(out_dir, cfg: RunConfig | None = None) -> ComparisonTable:
    """Rebuild the pooled table and forest data from saved per-replicate draws."""
    out = Path(out_dir)
    files = sorted(out.glob("draws_rep*.npz"), key=lambda p: int(re.sub(r"\D", "", p.stem)))
    if not files:
        raise PipelineError(f"{out}: no draws_rep<r>.npz files")
    replicates, methods = [], []
    for f in files:
        r = int(re.sub(r"\D", "", f.stem))
        with np.load(f) as z:
            draws = {tuple(k.split("|", 1)): z[k] for k in z.files}
        for _, m in draws:
            if m not in methods:
                methods.append(m)
        replicates.append(ReplicateResult(r, [], draws, _sizes_from_csv(out, r)))
    if cfg is None:
        order = [m for m in STRATEGIES + BASELINES if m in methods]
        order += [m for m in methods if m not in order]
        cfg = RunConfig.from_mapping({
            "selection.strategies": tuple(m for m in order if m in STRATEGIES),
            "baselines.methods": tuple(m for m in order if m not in STRATEGIES),
        })
    table = pool(replicates, cfg)
    table.write_csv(out / "comparison_table.csv")
    emit_plot_data(PipelineResult(cfg, table, replicates, []), "forest", out)
    return table


def _sizes_from_csv(out: Path, r: int) -> dict[str, int]:
    sizes: dict[str, int] = {}
    path = out / "per_replicate.csv"
    if not path.exists():
        return sizes
    with path.open(newline="") as fh:
        for row in csv.DictReader(fh):
            if int(row["rep"]) == r and row["status"] == "ok":
                sizes[row["method"]] = int(row["n_units"])
    return sizes
