"""Linear mixed model with two crossed random intercepts.

    y = X beta + nu[algorithm] + mu[corpus] + eps
    nu ~ N(0, s2_nu), mu ~ N(0, s2_mu), eps ~ N(0, s2_eps)

Fitted by maximum likelihood.  The residual variance and the fixed effects
are profiled out in closed form; what remains is a function of the two
variance ratios s2_nu/s2_eps and s2_mu/s2_eps, maximised in log space with a
Nelder-Mead simplex started from the best point of a coarse grid.  Each
evaluation solves the mixed-model (Henderson) equations in the scaled form

    [ X'X        X'Z L     ] [beta]   [ X'y   ]
    [ L Z'X   L Z'Z L + I  ] [ u  ] = [ L Z'y ],   b = L u,  L = diag(sqrt(ratio))

which stays well conditioned as a ratio goes to zero.  Boundary solutions
(a variance component of exactly zero) are compared explicitly.

R^2 shares follow the variance-partitioning scheme: with
v = var(X beta) + s2_nu + s2_mu + s2_eps, the fixed share is var(X beta)/v and
each random intercept contributes its variance over v.
"""
from __future__ import annotations

import logging
import math
import warnings
from dataclasses import dataclass, field, replace
from itertools import product
from typing import Sequence

import numpy as np
from scipy import linalg, optimize, stats

logger = logging.getLogger(__name__)

ALGORITHM, CORPUS = "algorithm", "corpus"
LOG_RATIO_BOUNDS = (-30.0, 15.0)
GRID = (-8.0, -4.0, -2.0, 0.0, 2.0)
SIMPLEX_TOL = 1e-6


class CollinearityError(ValueError):
    def __init__(self, columns):
        self.columns = list(columns)
        super().__init__("collinear design columns: " + ", ".join(self.columns))


@dataclass(frozen=True)
class Column:
    name: str
    kind: str  # "intercept", "continuous" or "dummy"
    factor: str


@dataclass(frozen=True, eq=False)
class RegressionDataset:
    y: np.ndarray
    X: np.ndarray
    columns: tuple[Column, ...]
    algorithm: np.ndarray
    corpus: np.ndarray
    algorithm_levels: tuple[str, ...]
    corpus_levels: tuple[str, ...]
    dropped_rows: int = 0
    scaling: dict = field(default_factory=dict)

    def __post_init__(self):
        n, p = self.X.shape
        if self.y.shape != (n,):
            raise ValueError("y and X disagree on the number of rows")
        if len(self.columns) != p:
            raise ValueError("one Column per design column required")
        if self.columns[0].kind != "intercept":
            raise ValueError("first design column must be the intercept")
        if p >= n:
            raise ValueError(f"need more rows ({n}) than fixed effects ({p})")

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def names(self) -> tuple[str, ...]:
        return tuple(c.name for c in self.columns)

    @property
    def factors(self) -> tuple[str, ...]:
        seen = []
        for c in self.columns[1:]:
            if c.factor not in seen:
                seen.append(c.factor)
        return tuple(seen)

    def without_factor(self, factor: str) -> "RegressionDataset":
        if factor not in self.factors:
            raise KeyError(f"unknown factor {factor!r}; have {self.factors}")
        keep = [i for i, c in enumerate(self.columns) if c.factor != factor]
        return replace(self, X=self.X[:, keep], columns=tuple(self.columns[i] for i in keep))


def make_dataset(records: Sequence[dict], outcome: str, continuous: Sequence[str] = (),
                 categorical: Sequence[str] = (), algorithm: str = ALGORITHM,
                 corpus: str = CORPUS) -> RegressionDataset:
    """Design matrix from row dicts.

    Categorical predictors are dummy coded with the alphabetically first
    level as reference.  Rows with any missing value are dropped and counted.
    """
    needed = [outcome, *continuous, *categorical, algorithm, corpus]

    def missing(v):
        return v is None or (isinstance(v, float) and not math.isfinite(v))

    rows = [r for r in records if not any(missing(r.get(k)) for k in needed)]
    dropped = len(records) - len(rows)
    if dropped:
        logger.info("dropped %d of %d rows with missing values", dropped, len(records))
    if not rows:
        raise ValueError("no complete rows for the regression")
    cols = [np.ones(len(rows))]
    meta = [Column("intercept", "intercept", "intercept")]
    for name in continuous:
        cols.append(np.array([float(r[name]) for r in rows]))
        meta.append(Column(name, "continuous", name))
    for name in categorical:
        values = [str(r[name]) for r in rows]
        levels = sorted(set(values))
        for lev in levels[1:]:
            cols.append(np.array([1.0 if v == lev else 0.0 for v in values]))
            meta.append(Column(f"{name}_{lev}", "dummy", name))
    a_levels = tuple(sorted({str(r[algorithm]) for r in rows}))
    c_levels = tuple(sorted({str(r[corpus]) for r in rows}))
    a_pos = {lev: i for i, lev in enumerate(a_levels)}
    c_pos = {lev: i for i, lev in enumerate(c_levels)}
    return RegressionDataset(
        y=np.array([float(r[outcome]) for r in rows]),
        X=np.column_stack(cols),
        columns=tuple(meta),
        algorithm=np.array([a_pos[str(r[algorithm])] for r in rows], dtype=np.intp),
        corpus=np.array([c_pos[str(r[corpus])] for r in rows], dtype=np.intp),
        algorithm_levels=a_levels,
        corpus_levels=c_levels,
        dropped_rows=dropped,
    )


def standardize(ds: RegressionDataset) -> RegressionDataset:
    """z-score the outcome and continuous predictors (divisor n-1).

    Dummies and the intercept are untouched.  Constant continuous columns are
    dropped with a warning.  Means and SDs are kept in ``scaling``.
    """
    scaling = {}
    y_mean, y_sd = float(ds.y.mean()), float(ds.y.std(ddof=1))
    if y_sd == 0:
        raise ValueError("outcome is constant")
    scaling["y"] = (y_mean, y_sd)
    X = ds.X.copy()
    keep = []
    for i, col in enumerate(ds.columns):
        if col.kind == "continuous":
            mu, sd = float(X[:, i].mean()), float(X[:, i].std(ddof=1))
            if sd == 0:
                warnings.warn(f"dropping constant column {col.name!r}")
                continue
            X[:, i] = (X[:, i] - mu) / sd
            scaling[col.name] = (mu, sd)
        keep.append(i)
    return replace(ds, y=(ds.y - y_mean) / y_sd, X=X[:, keep],
                   columns=tuple(ds.columns[i] for i in keep), scaling=scaling)


def unstandardize(ds: RegressionDataset) -> RegressionDataset:
    """Invert :func:`standardize` using the stored scaling."""
    if not ds.scaling:
        return ds
    y_mean, y_sd = ds.scaling["y"]
    X = ds.X.copy()
    for i, col in enumerate(ds.columns):
        if col.name in ds.scaling:
            mu, sd = ds.scaling[col.name]
            X[:, i] = X[:, i] * sd + mu
    return replace(ds, y=ds.y * y_sd + y_mean, X=X, scaling={})


@dataclass(frozen=True, eq=False)
class LmmFit:
    names: tuple[str, ...]
    beta: np.ndarray
    se: np.ndarray
    sigma2_nu: float
    sigma2_mu: float
    sigma2_eps: float
    loglik: float
    converged: bool
    r2_fixed: float
    r2_algorithm: float
    r2_corpus: float
    r2_total: float
    log_ratios: tuple[float, float]
    dropped_columns: tuple[str, ...] = ()
    notes: tuple[str, ...] = ()

    @property
    def residual_share(self) -> float:
        return 1.0 - self.r2_total

    def wald_p(self) -> np.ndarray:
        """Approximate two-sided Wald p-values (normal reference)."""
        with np.errstate(divide="ignore", invalid="ignore"):
            z = self.beta / self.se
        return 2.0 * stats.norm.sf(np.abs(z))

    def coef(self, name: str) -> float:
        return float(self.beta[self.names.index(name)])


def _independent_columns(X: np.ndarray) -> list[int]:
    # greedy left-to-right so earlier columns win
    scale = np.linalg.norm(X, axis=0)
    scale[scale == 0] = 1.0
    Xs = X / scale
    keep: list[int] = []
    tol = max(X.shape) * np.finfo(float).eps * 1e3
    for j in range(X.shape[1]):
        trial = keep + [j]
        s = np.linalg.svd(Xs[:, trial], compute_uv=False)
        if s[-1] > tol * s[0]:
            keep = trial
    return keep


class _Profile:
    """Cross-products of the model and the profiled ML log-likelihood."""

    def __init__(self, ds: RegressionDataset, X: np.ndarray, active: tuple[bool, bool]):
        # canonical row order: the fit becomes exactly invariant to row permutation
        keys = np.column_stack([ds.y, X, ds.algorithm, ds.corpus])
        order = np.lexsort(keys.T[::-1])
        y, X = ds.y[order], X[order]
        blocks = []
        self.sizes = []
        for on, codes, q in ((active[0], ds.algorithm[order], len(ds.algorithm_levels)),
                             (active[1], ds.corpus[order], len(ds.corpus_levels))):
            if on:
                z = np.zeros((len(y), q))
                z[np.arange(len(y)), codes] = 1.0
                blocks.append(z)
                self.sizes.append(q)
            else:
                self.sizes.append(0)
        Z = np.hstack(blocks) if blocks else np.zeros((len(y), 0))
        self.n, self.p = X.shape
        self.q = Z.shape[1]
        self.XtX, self.XtZ, self.ZtZ = X.T @ X, X.T @ Z, Z.T @ Z
        self.Xty, self.Zty, self.yty = X.T @ y, Z.T @ y, float(y @ y)
        self.active = active

    def _lambda(self, log_ratios) -> np.ndarray:
        lam = []
        for size, lr in zip(self.sizes, log_ratios):
            if size:
                lam.append(np.full(size, math.exp(0.5 * float(np.clip(lr, *LOG_RATIO_BOUNDS)))))
        return np.concatenate(lam) if lam else np.zeros(0)

    def solve(self, log_ratios):
        lam = self._lambda(log_ratios)
        p, q = self.p, self.q
        A = np.empty((p + q, p + q))
        A[:p, :p] = self.XtX
        A[:p, p:] = self.XtZ * lam
        A[p:, :p] = A[:p, p:].T
        A[p:, p:] = lam[:, None] * self.ZtZ * lam + np.eye(q)
        rhs = np.concatenate([self.Xty, lam * self.Zty])
        try:
            cf = linalg.cho_factor(A)
        except linalg.LinAlgError:
            raise CollinearityError(["<augmented system singular>"]) from None
        sol = linalg.cho_solve(cf, rhs)
        prss = max(self.yty - float(sol @ rhs), 0.0)
        if q:
            S = lam[:, None] * self.ZtZ * lam + np.eye(q)
            logdet = 2.0 * float(np.sum(np.log(np.diag(linalg.cholesky(S)))))
        else:
            logdet = 0.0
        return sol, prss, logdet, cf

    def loglik(self, log_ratios) -> float:
        _, prss, logdet, _ = self.solve(log_ratios)
        n = self.n
        if prss <= 0:
            return math.inf
        return -0.5 * n * (math.log(2.0 * math.pi * prss / n) + 1.0) - 0.5 * logdet


def _maximize(prof: _Profile, dims: int, max_iter: int):
    """Maximise the profiled log-likelihood over ``dims`` free log ratios."""
    if dims == 0:
        return np.zeros(0), prof.loglik(()), True

    def expand(theta):
        it = iter(theta)
        return tuple(next(it) if on else 0.0 for on in prof.active)

    def negll(theta):
        return -prof.loglik(expand(theta))

    start = max(product(GRID, repeat=dims), key=lambda th: -negll(th))
    res = optimize.minimize(negll, np.array(start, dtype=float), method="Nelder-Mead",
                            options={"xatol": 1e-10, "fatol": 1e-14, "maxiter": max_iter,
                                     "initial_simplex": np.vstack([start, np.array(start) + np.eye(dims)])})
    simplex = res.final_simplex[0]
    diameter = max(np.max(np.abs(a - b)) for a in simplex for b in simplex)
    theta = np.clip(res.x, *LOG_RATIO_BOUNDS)
    return theta, -negll(theta), bool(diameter < SIMPLEX_TOL)


def _r2(X: np.ndarray, beta: np.ndarray, s2_nu: float, s2_mu: float, s2_eps: float):
    var_fixed = float(np.var(X @ beta, ddof=1))
    total = var_fixed + s2_nu + s2_mu + s2_eps
    r2_fixed, r2_a, r2_c = var_fixed / total, s2_nu / total, s2_mu / total
    return r2_fixed, r2_a, r2_c, r2_fixed + r2_a + r2_c


def fit_lmm(ds: RegressionDataset, fix_zero: Sequence[str] = (), drop_collinear: bool = False,
            max_iter: int = 4000) -> LmmFit:
    """Maximum-likelihood fit of the crossed random-intercept model.

    ``fix_zero`` pins the named components (``"algorithm"``, ``"corpus"``) to
    zero; a grouping factor with fewer than two levels is pinned
    automatically.  Collinear fixed-effect columns raise
    :class:`CollinearityError` unless ``drop_collinear`` is set, in which case
    later duplicates are dropped.
    """
    notes = []
    X, names = ds.X, list(ds.names)
    keep = _independent_columns(X)
    dropped = ()
    if len(keep) < X.shape[1]:
        bad = [names[i] for i in range(X.shape[1]) if i not in keep]
        if not drop_collinear:
            raise CollinearityError(bad)
        dropped = tuple(bad)
        notes.append("dropped collinear columns: " + ", ".join(bad))
        X, names = X[:, keep], [names[i] for i in keep]

    active = []
    for comp, levels in ((ALGORITHM, ds.algorithm_levels), (CORPUS, ds.corpus_levels)):
        on = comp not in fix_zero
        if on and len(levels) < 2:
            msg = f"{comp} has {len(levels)} level(s); its variance is fixed at 0"
            warnings.warn(msg)
            notes.append(msg)
            on = False
        elif on and len(levels) < 4:
            msg = f"only {len(levels)} {comp} levels; variance estimate is noisy"
            warnings.warn(msg)
            notes.append(msg)
        active.append(on)

    # interior optimum plus every boundary face; the simplest model wins ties
    candidates = []
    for mask in product(*[(True, False) if on else (False,) for on in active]):
        prof = _Profile(ds, X, tuple(mask))
        theta, ll, conv = _maximize(prof, sum(mask), max_iter)
        candidates.append((ll, -sum(mask), prof, theta, conv))
    best_ll = max(c[0] for c in candidates)
    ll, _, prof, theta, conv = max((c for c in candidates if c[0] >= best_ll - 1e-9),
                                   key=lambda c: c[1])
    it = iter(theta)
    log_ratios = tuple(float(next(it)) if on else -math.inf for on in prof.active)
    sol, prss, _, cf = prof.solve(tuple(0.0 if math.isinf(v) else v for v in log_ratios))
    p = prof.p
    beta = sol[:p]
    s2_eps = prss / prof.n
    inv = linalg.cho_solve(cf, np.eye(cf[0].shape[0]))
    se = np.sqrt(np.maximum(np.diag(inv)[:p] * s2_eps, 0.0))
    s2 = [s2_eps * math.exp(v) if not math.isinf(v) else 0.0 for v in log_ratios]
    r2 = _r2(X, beta, s2[0], s2[1], s2_eps)
    if not conv:
        logger.warning("mixed model did not converge; returning best point")
    return LmmFit(tuple(names), beta, se, s2[0], s2[1], s2_eps, ll, conv, *r2,
                  log_ratios=log_ratios, dropped_columns=dropped, notes=tuple(notes))


def r2_decomposition(fit: LmmFit, ds: RegressionDataset) -> dict[str, float]:
    """Recompute the four R^2 shares of ``fit`` from its fitted quantities."""
    keep = [ds.names.index(n) for n in fit.names]
    r2_fixed, r2_a, r2_c, total = _r2(ds.X[:, keep], fit.beta, fit.sigma2_nu, fit.sigma2_mu,
                                      fit.sigma2_eps)
    return {"r2_fixed": r2_fixed, "r2_algorithm": r2_a, "r2_corpus": r2_c, "r2_total": total}


def delta_r2(ds: RegressionDataset, factor: str, full: LmmFit | None = None,
             **fit_kwargs) -> float:
    """Drop in the fixed-effect R^2 when every column of ``factor`` is left out."""
    reduced_ds = ds.without_factor(factor)
    fit_kwargs.setdefault("drop_collinear", True)
    if full is None:
        full = fit_lmm(ds, **fit_kwargs)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        reduced = fit_lmm(reduced_ds, **fit_kwargs)
    return full.r2_fixed - reduced.r2_fixed


def ols(X: np.ndarray, y: np.ndarray):
    """Closed-form least squares: (beta, residuals, ML log-likelihood)."""
    beta, *_ = np.linalg.lstsq(X, y, rcond=None)
    resid = y - X @ beta
    n = len(y)
    s2 = float(resid @ resid) / n
    ll = -0.5 * n * (math.log(2 * math.pi * s2) + 1.0)
    return beta, resid, ll
