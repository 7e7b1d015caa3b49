"""Cohort data model, threshold geometry and covariate preprocessing."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted

DEFAULT_THRESHOLD = 0.20
CATEGORICAL_PREFIX = "cat_"
_REQUIRED_COLUMNS = ("id", "x", "t", "y")


class CohortError(ValueError):
    """Raised when a cohort violates its invariants."""


class CohortFormatError(CohortError):
    """Raised when a cohort CSV cannot be parsed."""


@dataclass(frozen=True)
class Unit:
    id: str
    x: float
    t: int
    y: float
    cont_covs: tuple[float, ...] = ()
    cat_covs: tuple[int, ...] = ()


@dataclass(frozen=True)
class CovariateSchema:
    cont_names: tuple[str, ...] = ()
    cat_names: tuple[str, ...] = ()
    cat_levels: tuple[int, ...] = ()

    @property
    def n_continuous(self) -> int:
        return len(self.cont_names)

    @property
    def n_categorical(self) -> int:
        return len(self.cat_names)


@dataclass(frozen=True, eq=False)
class Cohort:
    """Column-oriented cohort.

    ``cont`` is ``(N, J1)`` float, ``cat`` is ``(N, J2)`` int with category
    labels in ``1..R_j``. Arrays are made read-only on construction.
    """

    ids: np.ndarray
    x: np.ndarray
    t: np.ndarray
    y: np.ndarray
    cont: np.ndarray
    cat: np.ndarray
    schema: CovariateSchema = field(default_factory=CovariateSchema)
    x0: float = DEFAULT_THRESHOLD

    def __post_init__(self):
        n = len(self.x)
        cont = np.asarray(self.cont, dtype=float).reshape(n, -1)
        cat = np.asarray(self.cat, dtype=np.int64).reshape(n, -1)
        object.__setattr__(self, "ids", np.asarray(self.ids, dtype=object))
        object.__setattr__(self, "x", np.asarray(self.x, dtype=float))
        object.__setattr__(self, "t", np.asarray(self.t))
        object.__setattr__(self, "y", np.asarray(self.y, dtype=float))
        object.__setattr__(self, "cont", cont)
        object.__setattr__(self, "cat", cat)
        for arr in (self.ids, self.x, self.t, self.y, self.cont, self.cat):
            arr.flags.writeable = False

    def __len__(self) -> int:
        return len(self.x)

    @property
    def n(self) -> int:
        return len(self.x)

    @property
    def units(self) -> list[Unit]:
        return [self.unit(i) for i in range(self.n)]

    def unit(self, i: int) -> Unit:
        return Unit(
            id=str(self.ids[i]),
            x=float(self.x[i]),
            t=int(self.t[i]),
            y=float(self.y[i]),
            cont_covs=tuple(float(v) for v in self.cont[i]),
            cat_covs=tuple(int(v) for v in self.cat[i]),
        )

    @classmethod
    def from_units(cls, units: Sequence[Unit], schema: CovariateSchema | None = None,
                   x0: float = DEFAULT_THRESHOLD) -> "Cohort":
        n = len(units)
        j1 = len(units[0].cont_covs) if n else 0
        j2 = len(units[0].cat_covs) if n else 0
        if schema is None:
            schema = CovariateSchema(
                cont_names=tuple(f"cont{j + 1}" for j in range(j1)),
                cat_names=tuple(f"{CATEGORICAL_PREFIX}{j + 1}" for j in range(j2)),
                cat_levels=tuple(
                    max(u.cat_covs[j] for u in units) for j in range(j2)
                ),
            )
        for u in units:
            if len(u.cont_covs) != j1 or len(u.cat_covs) != j2:
                raise CohortError(f"unit {u.id}: covariate vector length differs from cohort")
        return cls(
            ids=np.array([u.id for u in units], dtype=object),
            x=np.array([u.x for u in units], dtype=float),
            t=np.array([u.t for u in units]),
            y=np.array([u.y for u in units], dtype=float),
            cont=np.array([u.cont_covs for u in units], dtype=float).reshape(n, j1),
            cat=np.array([u.cat_covs for u in units], dtype=np.int64).reshape(n, j2),
            schema=schema,
            x0=x0,
        )

    def subset(self, index: np.ndarray | Sequence[int]) -> "Cohort":
        """Cohort restricted to the given positional indices (order kept)."""
        idx = np.asarray(index, dtype=np.intp)
        return Cohort(self.ids[idx], self.x[idx], self.t[idx], self.y[idx],
                      self.cont[idx], self.cat[idx], self.schema, self.x0)


@dataclass(frozen=True, eq=False)
class CenteredView:
    xc: np.ndarray
    z: np.ndarray


@dataclass(frozen=True, eq=False)
class StandardizedMatrix:
    values: np.ndarray
    means: np.ndarray
    sds: np.ndarray


def validate_cohort(raw: Cohort) -> Cohort:
    """Check every unit and cohort invariant; return the cohort untouched.

    Raises
    ------
    CohortError
        On the first violated invariant, naming the offending unit id.
    """
    n = raw.n
    if n < 2:
        raise CohortError(f"cohort needs at least 2 units, got {n}")
    for name in ("ids", "t", "y"):
        if len(getattr(raw, name)) != n:
            raise CohortError(f"column {name!r} has length {len(getattr(raw, name))}, expected {n}")
    if raw.cont.shape != (n, raw.schema.n_continuous):
        raise CohortError(
            f"continuous covariates have shape {raw.cont.shape}, schema declares "
            f"{raw.schema.n_continuous} columns"
        )
    if raw.cat.shape != (n, raw.schema.n_categorical):
        raise CohortError(
            f"categorical covariates have shape {raw.cat.shape}, schema declares "
            f"{raw.schema.n_categorical} columns"
        )
    if len(raw.schema.cat_levels) != raw.schema.n_categorical:
        raise CohortError("schema must declare a level count for each categorical covariate")
    if not (math.isfinite(raw.x0)):
        raise CohortError("threshold x0 is not finite")

    seen: set[str] = set()
    for i in range(n):
        uid = str(raw.ids[i])
        if uid in seen:
            raise CohortError(f"duplicate id {uid!r}")
        seen.add(uid)
        if not math.isfinite(raw.x[i]):
            raise CohortError(f"unit {uid}: forcing value x is not finite")
        if not math.isfinite(raw.y[i]):
            raise CohortError(f"unit {uid}: outcome y is not finite")
        ti = raw.t[i]
        if ti not in (0, 1):
            raise CohortError(f"unit {uid}: treatment not binary (t={ti!r})")
        if raw.schema.n_continuous and not np.all(np.isfinite(raw.cont[i])):
            raise CohortError(f"unit {uid}: continuous covariate is missing or not finite")
        for j, r in enumerate(raw.schema.cat_levels):
            v = raw.cat[i, j]
            if not 1 <= v <= r:
                raise CohortError(
                    f"unit {uid}: category {v} of {raw.schema.cat_names[j]!r} outside 1..{r}"
                )
    return raw


def require_both_sides(cohort: Cohort) -> None:
    z = cohort.x >= cohort.x0
    if z.all() or not z.any():
        raise CohortError("analysis needs at least one unit on each side of the threshold")


def center_forcing(cohort: Cohort) -> CenteredView:
    """Centered forcing variable and threshold indicator (``x >= x0`` gives 1)."""
    x = np.asarray(cohort.x, dtype=float)
    return CenteredView(xc=x - cohort.x0, z=(x >= cohort.x0).astype(np.int8))


class CovariateStandardizer(TransformerMixin, BaseEstimator):
    """Column-wise z-scoring that refuses zero-variance columns.

    Uses the sample standard deviation (``ddof=1``). Column names, when
    given, are only used in error messages.
    """

    def __init__(self, names: Sequence[str] | None = None):
        self.names = names

    def fit(self, X, y=None):
        X = check_array(X, dtype=float, ensure_min_samples=2)
        sds = X.std(axis=0, ddof=1)
        for j, sd in enumerate(sds):
            if not sd > 0:
                label = self.names[j] if self.names is not None else f"column {j}"
                raise CohortError(f"covariate {label!r} has zero variance")
        self.mean_ = X.mean(axis=0)
        self.scale_ = sds
        self.n_features_in_ = X.shape[1]
        return self

    def transform(self, X):
        check_is_fitted(self, "mean_")
        X = check_array(X, dtype=float)
        return (X - self.mean_) / self.scale_

    def inverse_transform(self, X):
        check_is_fitted(self, "mean_")
        return np.asarray(X, dtype=float) * self.scale_ + self.mean_


def standardize_covariates(cohort: Cohort) -> StandardizedMatrix:
    if cohort.n < 2:
        raise CohortError("standardization needs at least 2 units")
    if cohort.schema.n_continuous == 0:
        empty = np.zeros((cohort.n, 0))
        return StandardizedMatrix(empty, np.zeros(0), np.zeros(0))
    scaler = CovariateStandardizer(names=cohort.schema.cont_names).fit(cohort.cont)
    return StandardizedMatrix(scaler.transform(cohort.cont), scaler.mean_, scaler.scale_)


# --- CSV -----------------------------------------------------------------


def _format_float(v: float) -> str:
    return repr(float(v))


def write_cohort_csv(cohort: Cohort, path: str | Path) -> Path:
    """Write ``id,x,t,y,<cont...>,<cat_...>``; floats use round-trip repr."""
    path = Path(path)
    header = list(_REQUIRED_COLUMNS) + list(cohort.schema.cont_names) + list(cohort.schema.cat_names)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for i in range(cohort.n):
            row = [str(cohort.ids[i]), _format_float(cohort.x[i]), str(int(cohort.t[i])),
                   _format_float(cohort.y[i])]
            row += [_format_float(v) for v in cohort.cont[i]]
            row += [str(int(v)) for v in cohort.cat[i]]
            w.writerow(row)
    return path


def load_cohort_csv(path: str | Path, x0: float = DEFAULT_THRESHOLD,
                    categorical: Iterable[str] | None = None,
                    cat_levels: Sequence[int] | None = None) -> Cohort:
    """Parse and validate a cohort CSV.

    Columns after ``id,x,t,y`` are continuous covariates unless their name
    starts with ``cat_`` or is listed in ``categorical``. Level counts are
    the observed maxima unless ``cat_levels`` is given.
    """
    path = Path(path)
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise CohortFormatError(f"{path}: empty file") from None
        rows = list(reader)

    for col in _REQUIRED_COLUMNS:
        if col not in header:
            raise CohortFormatError(f"{path}: missing required column {col!r}")
    if len(set(header)) != len(header):
        raise CohortFormatError(f"{path}: duplicate column names in header")
    extra = [h for h in header if h not in _REQUIRED_COLUMNS]
    cat_set = set(categorical or ())
    cat_names = [h for h in extra if h.startswith(CATEGORICAL_PREFIX) or h in cat_set]
    cont_names = [h for h in extra if h not in cat_names]
    pos = {h: k for k, h in enumerate(header)}

    ids, xs, ts, ys, cont, cat = [], [], [], [], [], []
    for r, row in enumerate(rows, start=2):  # row 1 is the header
        if not row or all(not c.strip() for c in row):
            continue
        if len(row) != len(header):
            raise CohortFormatError(
                f"{path}: row {r} has {len(row)} fields, expected {len(header)}"
            )

        def num(col, kind=float):
            raw = row[pos[col]].strip()
            try:
                v = kind(raw)
            except ValueError:
                raise CohortFormatError(
                    f"{path}: row {r}: column {col!r} is not numeric ({raw!r})"
                ) from None
            return v

        ids.append(row[pos["id"]].strip())
        xs.append(num("x"))
        tv = num("t")
        if not float(tv).is_integer():
            raise CohortFormatError(f"{path}: row {r}: treatment not binary (t={tv!r})")
        ts.append(int(tv))
        ys.append(num("y"))
        cont.append([num(c) for c in cont_names])
        cat.append([num(c, int) for c in cat_names])

    n = len(ids)
    cat_arr = np.array(cat, dtype=np.int64).reshape(n, len(cat_names))
    if cat_levels is None:
        levels = tuple(int(cat_arr[:, j].max()) if n else 1 for j in range(len(cat_names)))
    else:
        levels = tuple(int(v) for v in cat_levels)
    schema = CovariateSchema(tuple(cont_names), tuple(cat_names), levels)
    cohort = Cohort(
        ids=np.array(ids, dtype=object),
        x=np.array(xs, dtype=float),
        t=np.array(ts, dtype=np.int64),
        y=np.array(ys, dtype=float),
        cont=np.array(cont, dtype=float).reshape(n, len(cont_names)),
        cat=cat_arr,
        schema=schema,
        x0=x0,
    )
    try:
        return validate_cohort(cohort)
    except CohortError as exc:
        raise CohortError(f"{path}: {exc}") from None
