"""Dirichlet process mixture of Gaussian and categorical components.

Posterior simulation uses the dependent slice sampler on the stick-breaking
representation: given slice variables only finitely many sticks can receive
units, so each sweep works with a finite, growing list of clusters. Each
cluster carries a Gaussian (mean, covariance) for the continuous covariates
and one probability vector per categorical covariate; the two parts are
independent given the allocation.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np
from sklearn.base import BaseEstimator, ClusterMixin
from sklearn.utils.validation import check_array

from .partition import PosteriorSimilarityMatrix, best_partition, compute_psm

_LOG_2PI = np.log(2.0 * np.pi)
_JITTER = 1e-10
_MAX_STICKS = 2000
_V_MAX = 1.0 - 2.0 ** -53


# --- configuration -------------------------------------------------------


@dataclass(frozen=True)
class McmcConfig:
    n_iter: int = 5000
    burn_in: int = 2000
    thin: int = 1
    seed: int = 0

    def __post_init__(self):
        if self.n_iter < 1:
            raise ValueError("n_iter must be >= 1")
        if self.burn_in < 0:
            raise ValueError("burn_in must be >= 0")
        if self.thin < 1:
            raise ValueError("thin must be >= 1")

    @property
    def n_draws(self) -> int:
        return self.n_iter // self.thin


@dataclass(frozen=True)
class DpmmPriors:
    """Hyperparameters; ``None`` fields take data-dimension defaults.

    Defaults assume standardized continuous data: ``mu0 = 0``,
    ``Sigma0 = R0 = I`` and ``kappa0 = J1 + 2``. ``a`` is either a scalar
    applied to every category or one vector per categorical covariate.
    """

    mu0: np.ndarray | None = None
    Sigma0: np.ndarray | None = None
    R0: np.ndarray | None = None
    kappa0: float | None = None
    a: float | Sequence[Sequence[float]] = 0.5
    alpha_shape: float = 2.0
    alpha_rate: float = 1.0
    fixed_alpha: float | None = None
    alpha_init: float = 1.0

    def resolve(self, j1: int, levels: Sequence[int]) -> "DpmmPriors":
        mu0 = np.zeros(j1) if self.mu0 is None else np.asarray(self.mu0, dtype=float)
        sigma0 = np.eye(j1) if self.Sigma0 is None else np.asarray(self.Sigma0, dtype=float)
        r0 = np.eye(j1) if self.R0 is None else np.asarray(self.R0, dtype=float)
        kappa0 = float(j1 + 2) if self.kappa0 is None else float(self.kappa0)
        if np.isscalar(self.a):
            a = tuple(np.full(r, float(self.a)) for r in levels)
        else:
            a = tuple(np.asarray(v, dtype=float) for v in self.a)
        resolved = replace(self, mu0=mu0, Sigma0=sigma0, R0=r0, kappa0=kappa0, a=a)
        resolved.validate(j1, levels)
        return resolved

    def validate(self, j1: int, levels: Sequence[int]) -> None:
        if self.mu0.shape != (j1,):
            raise ValueError(f"mu0 must have length {j1}")
        for name in ("Sigma0", "R0"):
            m = getattr(self, name)
            if m.shape != (j1, j1):
                raise ValueError(f"{name} must be {j1}x{j1}")
            if not np.allclose(m, m.T):
                raise ValueError(f"{name} must be symmetric")
            if j1:
                try:
                    np.linalg.cholesky(m)
                except np.linalg.LinAlgError:
                    raise ValueError(f"{name} must be positive definite") from None
        if not self.kappa0 > j1 - 1:
            raise ValueError(f"kappa0 must exceed J1 - 1 = {j1 - 1}")
        if len(self.a) != len(levels):
            raise ValueError("need one Dirichlet vector per categorical covariate")
        for vec, r in zip(self.a, levels):
            if vec.shape != (r,) or np.any(vec <= 0):
                raise ValueError("Dirichlet parameters must be positive, one per category")
        if not (self.alpha_shape > 0 and self.alpha_rate > 0):
            raise ValueError("alpha hyperprior parameters must be positive")
        if self.fixed_alpha is not None and not self.fixed_alpha > 0:
            raise ValueError("fixed_alpha must be positive")


@dataclass(frozen=True, eq=False)
class MixedData:
    cont: np.ndarray  # (N, J1), standardized
    cat: np.ndarray  # (N, J2), labels 1..R_j
    levels: tuple[int, ...] = ()

    @classmethod
    def build(cls, cont, cat=None, levels=None) -> "MixedData":
        cont = np.asarray(cont, dtype=float)
        if cont.ndim == 1:
            cont = cont[:, None]
        n = cont.shape[0]
        cat = np.zeros((n, 0), dtype=np.int64) if cat is None else np.asarray(cat, dtype=np.int64)
        cat = cat.reshape(n, -1)
        if levels is None:
            levels = tuple(int(cat[:, j].max()) for j in range(cat.shape[1]))
        levels = tuple(int(r) for r in levels)
        if len(levels) != cat.shape[1]:
            raise ValueError("levels must list one count per categorical column")
        for j, r in enumerate(levels):
            if cat.shape[0] and (cat[:, j].min() < 1 or cat[:, j].max() > r):
                raise ValueError(f"categorical column {j} outside 1..{r}")
        if not np.all(np.isfinite(cont)):
            raise ValueError("continuous data must be finite")
        return cls(cont, cat, levels)

    @property
    def n(self) -> int:
        return self.cont.shape[0]

    @property
    def j1(self) -> int:
        return self.cont.shape[1]


@dataclass(eq=False)
class AllocationState:
    s: np.ndarray  # (N,) stick labels, 0-based
    v: np.ndarray  # (K,) stick-breaking fractions
    mu: np.ndarray  # (K, J1)
    sigma: np.ndarray  # (K, J1, J1)
    chol: np.ndarray  # (K, J1, J1) lower Cholesky factors of sigma
    phi: list = field(default_factory=list)  # per covariate (K, R_j)
    alpha: float = 1.0
    u: np.ndarray | None = None

    @property
    def weights(self) -> np.ndarray:
        return stick_weights(self.v)

    @property
    def n_sticks(self) -> int:
        return len(self.v)

    def counts(self) -> np.ndarray:
        return np.bincount(self.s, minlength=self.n_sticks)

    def n_occupied(self) -> int:
        return int(np.count_nonzero(np.bincount(self.s)))

    def copy(self) -> "AllocationState":
        return AllocationState(
            s=self.s.copy(), v=self.v.copy(), mu=self.mu.copy(), sigma=self.sigma.copy(),
            chol=self.chol.copy(), phi=[p.copy() for p in self.phi], alpha=self.alpha,
            u=None if self.u is None else self.u.copy(),
        )


@dataclass(frozen=True, eq=False)
class PartitionChain:
    draws: np.ndarray  # (n_draws, N)
    n_clusters_trace: np.ndarray
    alpha_trace: np.ndarray
    n_accepted_swaps: int = 0

    def __len__(self) -> int:
        return self.draws.shape[0]


# --- elementary pieces ---------------------------------------------------


def stick_weights(v: np.ndarray) -> np.ndarray:
    v = np.asarray(v, dtype=float)
    rest = np.concatenate([[1.0], np.cumprod(1.0 - v)[:-1]])
    return v * rest


def _safe_cholesky(m: np.ndarray) -> np.ndarray:
    try:
        return np.linalg.cholesky(m)
    except np.linalg.LinAlgError:
        j = m.shape[-1]
        return np.linalg.cholesky(m + _JITTER * np.eye(j))


def sample_invwishart(scale: np.ndarray, df: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """Batched inverse-Wishart draws via the Bartlett decomposition.

    ``scale`` is ``(K, J, J)``; ``df`` is ``(K,)``. The mean of each draw is
    ``scale / (df - J - 1)``.
    """
    scale = np.asarray(scale, dtype=float)
    k, j, _ = scale.shape
    df = np.broadcast_to(np.asarray(df, dtype=float), (k,))
    c = _safe_cholesky(scale)
    a = np.zeros((k, j, j))
    rows, cols = np.tril_indices(j, -1)
    a[:, rows, cols] = rng.standard_normal((k, len(rows)))
    diag = np.sqrt(rng.chisquare(df[:, None] - np.arange(j)[None, :]))
    a[:, np.arange(j), np.arange(j)] = diag
    b = c @ np.swapaxes(np.linalg.inv(a), 1, 2)
    sigma = b @ np.swapaxes(b, 1, 2)
    return 0.5 * (sigma + np.swapaxes(sigma, 1, 2))


def gaussian_loglik(X: np.ndarray, mu: np.ndarray, chol: np.ndarray) -> np.ndarray:
    """``(N, K)`` matrix of multivariate normal log densities."""
    n, j = X.shape
    k = mu.shape[0]
    if j == 0:
        return np.zeros((n, k))
    linv = np.linalg.inv(chol)
    logdet = np.log(np.diagonal(chol, axis1=1, axis2=2)).sum(axis=1)
    out = np.empty((n, k))
    for c in range(k):
        z = (X - mu[c]) @ linv[c].T
        out[:, c] = -0.5 * np.einsum("ij,ij->i", z, z)
    out -= 0.5 * j * _LOG_2PI + logdet[None, :]
    return out


def categorical_loglik(cat: np.ndarray, phi: Sequence[np.ndarray]) -> np.ndarray:
    n = cat.shape[0]
    k = phi[0].shape[0] if phi else 0
    out = np.zeros((n, k))
    for j, p in enumerate(phi):
        logp = np.log(np.maximum(p, np.finfo(float).tiny))
        out += logp[:, cat[:, j] - 1].T
    return out


def mixed_loglik(data: MixedData, state: AllocationState) -> np.ndarray:
    """``log p(D_i | Theta_c)`` for every unit and instantiated stick."""
    ll = gaussian_loglik(data.cont, state.mu, state.chol)
    if data.cat.shape[1]:
        ll = ll + categorical_loglik(data.cat, state.phi)
    return ll


def _prior_gaussian(k: int, priors: DpmmPriors, rng) -> tuple[np.ndarray, np.ndarray]:
    j1 = len(priors.mu0)
    if j1 == 0:
        return np.zeros((k, 0)), np.zeros((k, 0, 0))
    mu = rng.multivariate_normal(priors.mu0, priors.Sigma0, size=k, method="cholesky")
    sigma = sample_invwishart(np.broadcast_to(priors.R0, (k, j1, j1)), np.full(k, priors.kappa0), rng)
    return mu.reshape(k, j1), sigma


def _prior_phi(k: int, priors: DpmmPriors, rng) -> list:
    out = []
    for a in priors.a:
        g = rng.gamma(np.broadcast_to(a, (k, len(a))))
        out.append(_normalize_rows(g, a, rng))
    return out


def _normalize_rows(g: np.ndarray, shape: np.ndarray, rng) -> np.ndarray:
    tot = g.sum(axis=1, keepdims=True)
    bad = tot[:, 0] <= 0
    if np.any(bad):  # every gamma underflowed; fall back to the Dirichlet mean
        g[bad] = np.broadcast_to(shape, g.shape)[bad]
        tot = g.sum(axis=1, keepdims=True)
    return g / tot


def initial_state(data: MixedData, priors: DpmmPriors, rng: np.random.Generator,
                  labels: np.ndarray | None = None) -> AllocationState:
    """State with every unit in stick 0 (or the given labels) and prior draws."""
    n = data.n
    s = np.zeros(n, dtype=np.intp) if labels is None else np.asarray(labels, dtype=np.intp)
    alpha = priors.fixed_alpha if priors.fixed_alpha is not None else priors.alpha_init
    k = int(s.max()) + 2
    v = rng.beta(1.0, alpha, size=k)
    mu, sigma = _prior_gaussian(k, priors, rng)
    state = AllocationState(s=s, v=v, mu=mu, sigma=sigma, chol=_batch_chol(sigma),
                            phi=_prior_phi(k, priors, rng), alpha=float(alpha))
    gibbs_update_gaussian_params(state, data, priors, rng)
    gibbs_update_categorical_params(state, data, priors, rng)
    return state


def _batch_chol(sigma: np.ndarray) -> np.ndarray:
    if sigma.shape[-1] == 0:
        return sigma.copy()
    try:
        return np.linalg.cholesky(sigma)
    except np.linalg.LinAlgError:
        return np.stack([_safe_cholesky(m) for m in sigma])


# --- Gibbs / slice updates -----------------------------------------------


def _resize_params(state: AllocationState, k: int, priors: DpmmPriors, rng) -> None:
    have = state.mu.shape[0]
    if k <= have:
        state.mu = state.mu[:k]
        state.sigma = state.sigma[:k]
        state.chol = state.chol[:k]
        state.phi = [p[:k] for p in state.phi]
        return
    extra = k - have
    mu, sigma = _prior_gaussian(extra, priors, rng)
    state.mu = np.concatenate([state.mu, mu])
    state.sigma = np.concatenate([state.sigma, sigma])
    state.chol = np.concatenate([state.chol, _batch_chol(sigma)])
    state.phi = [np.concatenate([p, q]) for p, q in zip(state.phi, _prior_phi(extra, priors, rng))]


def update_stick_weights(state: AllocationState, priors: DpmmPriors,
                         rng: np.random.Generator) -> AllocationState:
    """Draw stick fractions given the allocation, slice variables integrated out.

    Keeps sticks up to the last occupied one plus a single empty stick.
    """
    k_occ = int(state.s.max()) + 1
    counts = np.bincount(state.s, minlength=k_occ)
    beyond = counts[::-1].cumsum()[::-1] - counts
    v = rng.beta(1.0 + counts, state.alpha + beyond)
    extra = rng.beta(1.0, state.alpha)
    state.v = np.minimum(np.append(v, extra), _V_MAX)
    _resize_params(state, k_occ + 1, priors, rng)
    return state


def update_concentration(state: AllocationState, priors: DpmmPriors,
                         rng: np.random.Generator) -> AllocationState:
    """Conjugate Gamma update of the concentration given the stick fractions.

    Each instantiated fraction is ``Beta(1, alpha)`` a priori, so the
    conditional is ``Gamma(shape + K, rate - sum(log(1 - v)))``.
    """
    if priors.fixed_alpha is not None:
        state.alpha = float(priors.fixed_alpha)
        return state
    shape = priors.alpha_shape + len(state.v)
    rate = priors.alpha_rate - np.log1p(-state.v).sum()
    state.alpha = float(rng.gamma(shape, 1.0 / rate))
    return state


def swap_labels(state: AllocationState, c: int) -> AllocationState:
    """Exchange the clusters on sticks ``c`` and ``c + 1``; weights stay put."""
    a, b = c, c + 1
    s = state.s
    in_a, in_b = s == a, s == b
    s[in_a], s[in_b] = b, a
    for arr in (state.mu, state.sigma, state.chol, *state.phi):
        arr[[a, b]] = arr[[b, a]]
    return state


def _swap_pairs(counts: np.ndarray, k: int) -> np.ndarray:
    occ = counts[:k] > 0
    return np.flatnonzero(occ[:-1] | occ[1:])


def label_switch_move(state: AllocationState, rng: np.random.Generator) -> tuple[AllocationState, bool]:
    """Metropolis move swapping the labels of two adjacent sticks.

    The pair is chosen uniformly among adjacent pairs with at least one
    occupied member; the acceptance ratio accounts for the stick weights and
    for the change in the number of eligible pairs.
    """
    k = state.n_sticks
    if k < 2:
        return state, False
    counts = np.bincount(state.s, minlength=k)
    pairs = _swap_pairs(counts, k)
    if len(pairs) == 0:
        return state, False
    c = int(pairs[rng.integers(len(pairs))])
    w = state.weights
    n_a, n_b = counts[c], counts[c + 1]
    swapped = counts.copy()
    swapped[c], swapped[c + 1] = n_b, n_a
    log_ratio = (n_b - n_a) * (np.log(w[c]) - np.log(w[c + 1]))
    log_ratio += np.log(len(pairs)) - np.log(len(_swap_pairs(swapped, k)))
    if np.log(rng.uniform()) < log_ratio:
        swap_labels(state, c)
        return state, True
    return state, False


def extend_sticks(state: AllocationState, priors: DpmmPriors,
                  rng: np.random.Generator) -> AllocationState:
    """Instantiate sticks until the unallocated mass is below ``min(u)``."""
    u_min = float(state.u.min())
    v = list(state.v)
    rest = float(np.prod(1.0 - state.v))
    while rest > u_min and len(v) < _MAX_STICKS:
        nv = min(float(rng.beta(1.0, state.alpha)), _V_MAX)
        v.append(nv)
        rest *= 1.0 - nv
    if len(v) > state.n_sticks:
        state.v = np.asarray(v)
        _resize_params(state, len(v), priors, rng)
    return state


def draw_slice_variables(state: AllocationState, rng: np.random.Generator) -> AllocationState:
    state.u = rng.uniform(size=len(state.s)) * state.weights[state.s]
    return state


def allocation_probabilities(state: AllocationState, data: MixedData) -> np.ndarray:
    """Rows of ``P(S_i = c | u, w, Theta)``: restricted to sticks with ``w_c > u_i``."""
    ll = mixed_loglik(data, state)
    ll = np.where(state.weights[None, :] > state.u[:, None], ll, -np.inf)
    ll -= ll.max(axis=1, keepdims=True)
    p = np.exp(ll)
    p /= p.sum(axis=1, keepdims=True)
    return p


def slice_update_allocations(state: AllocationState, data: MixedData, rng: np.random.Generator,
                             priors: DpmmPriors | None = None) -> AllocationState:
    """Draw slice variables, extend the sticks, and reallocate every unit.

    When ``state.u`` is already set (and ``priors`` is None) the slice
    variables are kept: useful for isolating the allocation step.
    """
    if priors is not None:
        draw_slice_variables(state, rng)
        extend_sticks(state, priors, rng)
    elif state.u is None:
        draw_slice_variables(state, rng)
    p = allocation_probabilities(state, data)
    cum = np.cumsum(p, axis=1)
    r = rng.uniform(size=data.n)[:, None] * cum[:, -1:]
    s = np.minimum((cum < r).sum(axis=1), state.n_sticks - 1)
    state.s = s.astype(np.intp)
    return state


def _group(s: np.ndarray, k: int):
    order = np.argsort(s, kind="stable")
    counts = np.bincount(s, minlength=k)
    bounds = np.concatenate([[0], np.cumsum(counts)])
    return order, counts, bounds


def gibbs_update_gaussian_params(state: AllocationState, data: MixedData, priors: DpmmPriors,
                                 rng: np.random.Generator) -> AllocationState:
    """Mean given covariance, then covariance given mean, per occupied stick.

    Empty sticks are refreshed from the prior.
    """
    j1 = data.j1
    k = state.n_sticks
    if j1 == 0:
        state.mu = np.zeros((k, 0))
        state.sigma = state.chol = np.zeros((k, 0, 0))
        return state
    order, counts, bounds = _group(state.s, k)
    occupied = np.flatnonzero(counts)
    empty = np.flatnonzero(counts == 0)
    mu = state.mu.copy()
    scale = np.empty((len(occupied), j1, j1))
    sigma0_inv = np.linalg.inv(priors.Sigma0)
    prior_term = sigma0_inv @ priors.mu0
    for idx, c in enumerate(occupied):
        xc = data.cont[order[bounds[c]:bounds[c + 1]]]
        n_c = xc.shape[0]
        sig_inv = np.linalg.inv(state.sigma[c])
        prec = sigma0_inv + n_c * sig_inv
        cov = np.linalg.inv(prec)
        cov = 0.5 * (cov + cov.T)
        mean = cov @ (prior_term + sig_inv @ xc.sum(axis=0))
        mu[c] = mean + _safe_cholesky(cov) @ rng.standard_normal(j1)
        dev = xc - mu[c]
        scale[idx] = priors.R0 + dev.T @ dev
    sigma = state.sigma.copy()
    if len(occupied):
        sigma[occupied] = sample_invwishart(scale, priors.kappa0 + counts[occupied], rng)
    if len(empty):
        mu[empty], sigma[empty] = _prior_gaussian(len(empty), priors, rng)
    state.mu, state.sigma = mu, sigma
    state.chol = _batch_chol(sigma)
    return state


def gibbs_update_categorical_params(state: AllocationState, data: MixedData, priors: DpmmPriors,
                                    rng: np.random.Generator) -> AllocationState:
    """``Phi_{c,j} ~ Dirichlet(a_j + counts)``; empty sticks draw from the prior."""
    k = state.n_sticks
    phi = []
    for j, (a, r) in enumerate(zip(priors.a, data.levels)):
        flat = state.s * r + (data.cat[:, j] - 1)
        counts = np.bincount(flat, minlength=k * r).reshape(k, r)
        shape = a[None, :] + counts
        phi.append(_normalize_rows(rng.gamma(shape), a, rng))
    state.phi = phi
    return state


def sweep(state: AllocationState, data: MixedData, priors: DpmmPriors, rng: np.random.Generator,
          label_switch: bool = True) -> tuple[AllocationState, bool]:
    update_stick_weights(state, priors, rng)
    update_concentration(state, priors, rng)
    accepted = False
    if label_switch:
        state, accepted = label_switch_move(state, rng)
    draw_slice_variables(state, rng)
    extend_sticks(state, priors, rng)
    gibbs_update_gaussian_params(state, data, priors, rng)
    gibbs_update_categorical_params(state, data, priors, rng)
    slice_update_allocations(state, data, rng)
    return state, accepted


def run_dpmm(data: MixedData, priors: DpmmPriors | None = None, cfg: McmcConfig | None = None,
             label_switch: bool = True, init_labels: np.ndarray | None = None) -> PartitionChain:
    """Run ``burn_in + n_iter`` sweeps and keep every ``thin``-th label vector."""
    priors = (priors or DpmmPriors()).resolve(data.j1, data.levels)
    cfg = cfg or McmcConfig()
    rng = np.random.default_rng(cfg.seed)
    n = data.n
    if n < 1:
        raise ValueError("need at least one unit")
    n_draws = cfg.n_draws
    dtype = np.int16 if n < np.iinfo(np.int16).max and _MAX_STICKS < np.iinfo(np.int16).max else np.int32
    draws = np.empty((n_draws, n), dtype=dtype)
    k_trace = np.empty(n_draws, dtype=np.int64)
    a_trace = np.empty(n_draws)
    state = initial_state(data, priors, rng, init_labels)
    kept = 0
    n_acc = 0
    for it in range(cfg.burn_in + cfg.n_iter):
        state, acc = sweep(state, data, priors, rng, label_switch)
        n_acc += acc
        post = it - cfg.burn_in
        if post >= 0 and (post + 1) % cfg.thin == 0 and kept < n_draws:
            draws[kept] = state.s
            k_trace[kept] = state.n_occupied()
            a_trace[kept] = state.alpha
            kept += 1
    return PartitionChain(draws=draws, n_clusters_trace=k_trace, alpha_trace=a_trace,
                          n_accepted_swaps=n_acc)


def write_chain(chain: PartitionChain, path) -> None:
    with open(path, "w") as fh:
        for row in chain.draws:
            fh.write(",".join(str(int(v)) for v in row))
            fh.write("\n")


# --- estimator -----------------------------------------------------------


class DirichletProcessMixture(ClusterMixin, BaseEstimator):
    """Cluster units with a DPMM and summarise the chain by its best partition.

    Parameters
    ----------
    n_iter, burn_in, thin : int
        Chain length after burn-in, discarded sweeps, retention stride.
    mu0, Sigma0, R0, kappa0, a, alpha_shape, alpha_rate, fixed_alpha
        See :class:`DpmmPriors`.
    label_switch : bool
        Enable the adjacent-label swap move.
    standardize : bool
        Z-score continuous columns before sampling.
    k_range : iterable of int, optional
        Cluster counts tried by PAM on the posterior similarity matrix.
    random_state : int
        Seed of the chain.

    Attributes
    ----------
    chain_ : PartitionChain
    psm_ : PosteriorSimilarityMatrix
    partition_ : Partition
    labels_ : ndarray of shape (n_samples,)
        Best-partition labels, 0-based.
    """

    def __init__(self, n_iter=5000, burn_in=2000, thin=1, mu0=None, Sigma0=None, R0=None,
                 kappa0=None, a=0.5, alpha_shape=2.0, alpha_rate=1.0, fixed_alpha=None,
                 label_switch=True, standardize=True, k_range=None, random_state=0):
        self.n_iter = n_iter
        self.burn_in = burn_in
        self.thin = thin
        self.mu0 = mu0
        self.Sigma0 = Sigma0
        self.R0 = R0
        self.kappa0 = kappa0
        self.a = a
        self.alpha_shape = alpha_shape
        self.alpha_rate = alpha_rate
        self.fixed_alpha = fixed_alpha
        self.label_switch = label_switch
        self.standardize = standardize
        self.k_range = k_range
        self.random_state = random_state

    def _priors(self) -> DpmmPriors:
        return DpmmPriors(mu0=self.mu0, Sigma0=self.Sigma0, R0=self.R0, kappa0=self.kappa0,
                          a=self.a, alpha_shape=self.alpha_shape, alpha_rate=self.alpha_rate,
                          fixed_alpha=self.fixed_alpha)

    def fit(self, X, y=None, categorical=None, cat_levels=None):
        X = check_array(X, dtype=float, ensure_min_features=0, ensure_min_samples=1)
        if self.standardize and X.shape[0] > 1 and X.shape[1]:
            sd = X.std(axis=0, ddof=1)
            if np.any(sd <= 0):
                raise ValueError("cannot standardize a zero-variance column")
            X = (X - X.mean(axis=0)) / sd
        data = MixedData.build(X, categorical, cat_levels)
        cfg = McmcConfig(self.n_iter, self.burn_in, self.thin, int(self.random_state or 0))
        self.chain_ = run_dpmm(data, self._priors(), cfg, label_switch=self.label_switch)
        self.psm_ = compute_psm(self.chain_.draws)
        if data.n == 1:
            from .partition import Partition
            self.partition_ = Partition(np.ones(1, dtype=int), 1, 0.0)
        else:
            self.partition_ = best_partition(self.psm_, self.k_range)
        self.labels_ = self.partition_.labels - 1
        self.n_features_in_ = X.shape[1]
        return self

