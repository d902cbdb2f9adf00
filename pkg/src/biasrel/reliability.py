"""Reliability estimators over objects x raters matrices.

Rows are the objects being measured and columns are the raters (seeds,
scoring rules) or items (target words, base pairs).  The two ICC forms
follow Shrout & Fleiss (1979):

* ICC(2,1) -- two-way random effects, single rater, absolute agreement.
  Used for test-retest reliability: random seeds are a random sample of all
  possible seeds, every score is rated by the same seeds, and in practice a
  single seed is used.
* ICC(3,1) -- two-way mixed effects, single rater, consistency.  Used for
  inter-rater consistency: the three scoring rules are the only raters of
  interest, and in practice one rule is used.

Cronbach's alpha treats columns as items.  Negative values are reported as
they are; a value is only withheld (``degenerate=True``) when its
denominator vanishes relative to the squared mean absolute entry.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .resources import WordList
from .scoring import BiasTensor, MeanBiasCube

ICC21, ICC31, ALPHA = "ICC21", "ICC31", "ALPHA"
ESTIMATORS = (ICC21, ICC31, ALPHA)
DEGENERACY_RTOL = 1e-12


@dataclass(frozen=True, eq=False)
class RatingsMatrix:
    values: np.ndarray
    row_labels: tuple = ()
    col_labels: tuple = ()
    unit_type: str = ""
    unit: str = ""
    rule: str = ""

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64)
        if v.ndim != 2 or v.shape[0] < 2 or v.shape[1] < 2:
            raise ValueError(f"ratings matrix must be at least 2 x 2, got {v.shape}")
        if not np.all(np.isfinite(v)):
            raise ValueError("ratings matrix has non-finite entries")
        object.__setattr__(self, "values", v)
        if not self.row_labels:
            object.__setattr__(self, "row_labels", tuple(range(v.shape[0])))
        if not self.col_labels:
            object.__setattr__(self, "col_labels", tuple(range(v.shape[1])))

    @property
    def shape(self) -> tuple[int, int]:
        return self.values.shape


@dataclass(frozen=True)
class AnovaTable:
    ss_rows: float
    ss_cols: float
    ss_error: float
    ss_total: float
    n: int
    r: int

    @property
    def df_rows(self) -> int:
        return self.n - 1

    @property
    def df_cols(self) -> int:
        return self.r - 1

    @property
    def df_error(self) -> int:
        return (self.n - 1) * (self.r - 1)

    @property
    def ms_rows(self) -> float:
        return self.ss_rows / self.df_rows

    @property
    def ms_cols(self) -> float:
        return self.ss_cols / self.df_cols

    @property
    def ms_error(self) -> float:
        return self.ss_error / self.df_error


@dataclass(frozen=True)
class ReliabilityScore:
    value: float
    estimator: str
    band: str
    degenerate: bool
    n: int
    r: int

    @property
    def defined(self) -> bool:
        return not self.degenerate


def _values(m) -> np.ndarray:
    if isinstance(m, RatingsMatrix):
        return m.values
    return RatingsMatrix(m).values


def two_way_anova(m) -> AnovaTable:
    """Sums of squares of a two-way ANOVA without replication."""
    x = _values(m)
    n, r = x.shape
    grand = x.mean()
    row_means = x.mean(axis=1)
    col_means = x.mean(axis=0)
    ss_rows = r * float(np.sum((row_means - grand) ** 2))
    ss_cols = n * float(np.sum((col_means - grand) ** 2))
    resid = x - row_means[:, None] - col_means[None, :] + grand
    ss_error = float(np.sum(resid ** 2))
    ss_total = float(np.sum((x - grand) ** 2))
    return AnovaTable(ss_rows, ss_cols, ss_error, ss_total, n, r)


def _tolerance(x: np.ndarray) -> float:
    scale = float(np.mean(np.abs(x)))
    return DEGENERACY_RTOL * scale * scale


def band(value: float, estimator: str) -> str:
    """Qualitative label: ICC poor/moderate/good/excellent, alpha acceptable/unacceptable."""
    if estimator not in ESTIMATORS:
        raise ValueError(f"unknown estimator {estimator!r}")
    if value is None or not math.isfinite(value):
        return "undefined"
    if estimator == ALPHA:
        return "acceptable" if value >= 0.7 else "unacceptable"
    if value < 0.5:
        return "poor"
    if value < 0.75:
        return "moderate"
    if value < 0.9:
        return "good"
    return "excellent"


def _score(num: float, den: float, tol: float, estimator: str, shape) -> ReliabilityScore:
    n, r = shape
    if abs(den) <= tol:
        return ReliabilityScore(math.nan, estimator, "undefined", True, n, r)
    value = num / den
    return ReliabilityScore(value, estimator, band(value, estimator), False, n, r)


def icc21(m) -> ReliabilityScore:
    """ICC(2,1): (MSR - MSE) / (MSR + (r-1) MSE + r/n (MSC - MSE))."""
    x = _values(m)
    a = two_way_anova(x)
    n, r = x.shape
    den = a.ms_rows + (r - 1) * a.ms_error + (r / n) * (a.ms_cols - a.ms_error)
    return _score(a.ms_rows - a.ms_error, den, _tolerance(x), ICC21, x.shape)


def icc31(m) -> ReliabilityScore:
    """ICC(3,1): (MSR - MSE) / (MSR + (r-1) MSE)."""
    x = _values(m)
    a = two_way_anova(x)
    r = x.shape[1]
    den = a.ms_rows + (r - 1) * a.ms_error
    return _score(a.ms_rows - a.ms_error, den, _tolerance(x), ICC31, x.shape)


def cronbach_alpha(m) -> ReliabilityScore:
    """Cronbach's alpha with columns as items (sample variances, divisor n-1)."""
    x = _values(m)
    r = x.shape[1]
    item_var = x.var(axis=0, ddof=1).sum()
    total_var = x.sum(axis=1).var(ddof=1)
    tol = _tolerance(x)
    if total_var <= tol:
        return ReliabilityScore(math.nan, ALPHA, "undefined", True, *x.shape)
    value = r / (r - 1) * (1.0 - item_var / total_var)
    return ReliabilityScore(value, ALPHA, band(value, ALPHA), False, *x.shape)


ESTIMATOR_FUNCS = {ICC21: icc21, ICC31: icc31, ALPHA: cronbach_alpha}


@dataclass
class MatrixSet:
    """Matrices built from a bias tensor plus the units that could not be built."""

    matrices: list[RatingsMatrix] = field(default_factory=list)
    skipped: list[tuple[str, str, str, str]] = field(default_factory=list)

    def add(self, values, rows, cols, unit_type, unit, rule):
        values = np.asarray(values)
        if values.shape[0] < 2 or values.shape[1] < 2:
            self.skipped.append((unit_type, unit, rule, f"matrix shape {values.shape} below 2 x 2"))
            return
        self.matrices.append(RatingsMatrix(values, tuple(rows), tuple(cols), unit_type, unit, rule))


def _target_columns(targets_axis: Sequence[str], targets) -> list[int]:
    if targets is None:
        return list(range(len(targets_axis)))
    words = targets.words if isinstance(targets, WordList) else targets
    pos = {t: i for i, t in enumerate(targets_axis)}
    return [pos[w] for w in words if w in pos]


def build_retest_matrices(tensor: BiasTensor, targets=None) -> MatrixSet:
    """Per target word a pairs x models matrix; per base pair a targets x models matrix.

    ``targets`` restricts both families to a word list (words outside the
    tensor are ignored).
    """
    out = MatrixSet()
    cols = _target_columns(tensor.targets, targets)
    words = [tensor.targets[c] for c in cols]
    pairs = tensor.pair_labels
    for s, rule in enumerate(tensor.rule_labels):
        for c, w in zip(cols, words):
            out.add(tensor.scores[s, :, c, :], pairs, tensor.models, "target", w, rule)
        for g, p in enumerate(pairs):
            out.add(tensor.scores[s, g, cols, :], words, tensor.models, "pair", p, rule)
    return out


def _zscore_columns(x: np.ndarray) -> np.ndarray:
    sd = x.std(axis=0, ddof=1)
    sd = np.where(sd == 0, 1.0, sd)
    return (x - x.mean(axis=0)) / sd


def build_interrater_matrices(cube: MeanBiasCube, targets=None, zscore: bool = False) -> MatrixSet:
    """Per target word a pairs x rules matrix; per base pair a targets x rules matrix."""
    out = MatrixSet()
    cols = _target_columns(cube.targets, targets)
    words = [cube.targets[c] for c in cols]
    rules = cube.rule_labels
    prep = _zscore_columns if zscore else (lambda v: v)
    for c, w in zip(cols, words):
        out.add(prep(cube.scores[:, :, c].T), cube.pair_labels, rules, "target", w, "")
    for g, p in enumerate(cube.pair_labels):
        out.add(prep(cube.scores[:, g, cols].T), words, rules, "pair", p, "")
    return out


def build_query_matrices(cube: MeanBiasCube, queries: Sequence[WordList]) -> MatrixSet:
    """Per query and rule a pairs x query-words matrix (query words are the items).

    Query words absent from the cube are recorded in ``skipped`` under
    ``"query_words"``; the matrix is still built from the words present.
    """
    out = MatrixSet()
    for s, rule in enumerate(cube.rule_labels):
        for q in queries:
            qcols = _target_columns(cube.targets, q)
            qwords = [cube.targets[c] for c in qcols]
            if len(qcols) < len(q.words):
                absent = [w for w in q.words if w not in qwords]
                out.skipped.append(("query_words", q.name, rule, "absent: " + ",".join(absent)))
            out.add(cube.scores[s][:, qcols], cube.pair_labels, qwords, "query", q.name, rule)
    return out


def build_pair_ensemble_matrices(cube: MeanBiasCube, targets=None) -> MatrixSet:
    """Per rule one targets x pairs matrix (base pairs are the items)."""
    out = MatrixSet()
    cols = _target_columns(cube.targets, targets)
    words = [cube.targets[c] for c in cols]
    for s, rule in enumerate(cube.rule_labels):
        out.add(cube.scores[s][:, cols].T, words, cube.pair_labels, "basepair_ensemble",
                "basepairs", rule)
    return out


def build_internal_matrices(cube: MeanBiasCube, queries: Sequence[WordList],
                            targets=None) -> MatrixSet:
    """Both internal-consistency families: query matrices then base-pair ensembles."""
    a = build_query_matrices(cube, queries)
    b = build_pair_ensemble_matrices(cube, targets)
    return MatrixSet(a.matrices + b.matrices, a.skipped + b.skipped)


def evaluate(matrices: MatrixSet | Sequence[RatingsMatrix], estimator: str) -> list[ReliabilityScore]:
    func = ESTIMATOR_FUNCS[estimator]
    mats = matrices.matrices if isinstance(matrices, MatrixSet) else matrices
    return [func(m) for m in mats]
