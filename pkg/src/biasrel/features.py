"""Word-level predictors for the reliability regression, plus Pearson r and
the paired t-test used to compare base pairs.

External resources (corpus counts, WordNet sense counts, Brown-corpus PoS
tags) are read from ``word<TAB>value`` tables; nothing is fetched.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np
from scipy import special

from .alignment import StabilityReport
from .embeddings import EmbeddingEnsemble, EmbeddingModel
from .resources import SINGULAR_PLURAL, read_table
from .scoring import _unit_rows

FEATURE_COLUMNS = ("log_freq", "log2_freq", "log_senses", "pos", "nn_sim", "l2_norm", "es")
NUMERIC_FEATURES = ("log_freq", "log2_freq", "log_senses", "nn_sim", "l2_norm", "es")


def _nn_sims(model: EmbeddingModel, rows: np.ndarray, block: int = 1024) -> np.ndarray:
    unit, zero = _unit_rows(model.matrix)
    out = np.empty(rows.size)
    for start in range(0, rows.size, block):
        r = rows[start:start + block]
        sims = unit[r] @ unit.T
        sims[:, zero] = -np.inf
        sims[np.arange(r.size), r] = -np.inf
        out[start:start + block] = sims.max(axis=1)
    out[zero[rows]] = np.nan
    return out


def nn_similarity(model: EmbeddingModel, word: str) -> float:
    """Cosine similarity of ``word`` to its nearest other vocabulary word.

    NaN when the word vector is zero.
    """
    if len(model) < 2:
        raise ValueError("nearest-neighbour similarity needs at least 2 words")
    return float(_nn_sims(model, np.array([model.index(word)]))[0])


@dataclass
class FeatureTable:
    words: tuple[str, ...]
    columns: dict[str, np.ndarray]
    pos: list[str | None]
    notes: dict[str, str] = field(default_factory=dict)

    def row(self, word: str) -> dict:
        i = self.words.index(word)
        out = {c: float(self.columns[c][i]) for c in NUMERIC_FEATURES}
        out["pos"] = self.pos[i]
        return out

    def complete(self) -> np.ndarray:
        """Mask of words with every feature present."""
        ok = np.ones(len(self.words), dtype=bool)
        for c in NUMERIC_FEATURES:
            ok &= np.isfinite(self.columns[c])
        ok &= np.array([p is not None for p in self.pos], dtype=bool)
        return ok


def _as_table(src, convert) -> Mapping:
    if src is None:
        return {}
    if isinstance(src, Mapping):
        return src
    return read_table(src, convert)


def build_feature_table(ensemble: EmbeddingEnsemble, words: Sequence[str] | None = None,
                        counts=None, senses=None, pos=None,
                        stability: StabilityReport | None = None) -> FeatureTable:
    """Collect the regression predictors for ``words`` (default: the whole vocabulary).

    ``counts``, ``senses`` and ``pos`` are mappings or paths to TSV tables.
    Absent or non-positive values leave the feature NaN (or ``None`` for PoS);
    nothing is imputed.
    """
    words = tuple(ensemble.vocab if words is None else [w for w in words if w in ensemble])
    counts = _as_table(counts, float)
    senses = _as_table(senses, float)
    pos = _as_table(pos, str)
    n = len(words)

    def log_of(table, w):
        v = table.get(w)
        return math.log(v) if v is not None and v > 0 else math.nan

    log_freq = np.array([log_of(counts, w) for w in words])
    log_senses = np.array([log_of(senses, w) for w in words])
    rows = np.array([ensemble.models[0].index(w) for w in words], dtype=np.intp)

    nn = np.zeros(n)
    l2 = np.zeros(n)
    for model in ensemble.models:
        nn += _nn_sims(model, rows)
        l2 += np.sqrt(np.einsum("ij,ij->i", model.matrix[rows], model.matrix[rows]))
    nn /= ensemble.k
    l2 /= ensemble.k

    es = np.full(n, math.nan)
    if stability is not None:
        lookup = {w: i for i, w in enumerate(stability.words)}
        for i, w in enumerate(words):
            if w in lookup:
                es[i] = stability.es[lookup[w]]

    columns = {
        "log_freq": log_freq,
        "log2_freq": log_freq ** 2,
        "log_senses": log_senses,
        "nn_sim": nn,
        "l2_norm": l2,
        "es": es,
    }
    notes = {
        "log_freq": "natural log of corpus count",
        "log_senses": "natural log of sense count",
        "nn_sim": f"mean over {ensemble.k} models",
        "l2_norm": f"mean over {ensemble.k} models",
        "es": "from embedding stability" if stability is not None else "absent",
    }
    return FeatureTable(words, columns, [pos.get(w) for w in words], notes)


def t_sf_two_sided(t: float, df: float) -> float:
    """Two-sided tail probability P(|T| >= |t|) of Student's t."""
    if not math.isfinite(t):
        return 0.0
    return float(special.betainc(df / 2.0, 0.5, df / (df + t * t)))


@dataclass(frozen=True)
class CorrelationResult:
    r: float
    t_stat: float
    p_two_sided: float
    n: int
    defined: bool = True


@dataclass(frozen=True)
class TTestResult:
    t_stat: float
    df: int
    p_two_sided: float
    defined: bool = True


def pearson_r(x, y) -> CorrelationResult:
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape or x.ndim != 1:
        raise ValueError("pearson_r needs two vectors of equal length")
    n = x.size
    if n < 3:
        raise ValueError("pearson_r needs n >= 3")
    dx, dy = x - x.mean(), y - y.mean()
    sxx, syy = float(dx @ dx), float(dy @ dy)
    if sxx == 0.0 or syy == 0.0:
        return CorrelationResult(math.nan, math.nan, math.nan, n, defined=False)
    r = float(dx @ dy) / math.sqrt(sxx * syy)
    r = max(-1.0, min(1.0, r))
    if abs(r) == 1.0:
        return CorrelationResult(r, math.copysign(math.inf, r), 0.0, n)
    t = r * math.sqrt((n - 2) / (1.0 - r * r))
    return CorrelationResult(r, t, t_sf_two_sided(t, n - 2), n)


def paired_t_test(x, y) -> TTestResult:
    """Paired t-test on d = x - y with n - 1 degrees of freedom."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape or x.ndim != 1:
        raise ValueError("paired_t_test needs two vectors of equal length")
    n = x.size
    if n < 2:
        raise ValueError("paired_t_test needs n >= 2")
    d = x - y
    sd = float(d.std(ddof=1))
    if sd == 0.0:
        return TTestResult(math.nan, n - 1, math.nan, defined=False)
    t = float(d.mean()) / (sd / math.sqrt(n))
    return TTestResult(t, n - 1, t_sf_two_sided(t, n - 1))


def singular_plural_test(scores_by_pair: Mapping[str, Sequence[float]],
                         aggregate: str = "median") -> TTestResult:
    """Paired t-test of singular against plural base pairs.

    Each pair's reliability scores (across algorithms, corpora, rules) are
    first collapsed with ``aggregate`` ("median" or "mean"); only matched
    pairs with both forms present take part.
    """
    agg = {"median": np.median, "mean": np.mean}[aggregate]
    xs, ys = [], []
    for sing, plur in SINGULAR_PLURAL.items():
        a, b = scores_by_pair.get(sing), scores_by_pair.get(plur)
        if a is None or b is None or len(a) == 0 or len(b) == 0:
            continue
        xs.append(float(agg(np.asarray(a, dtype=float))))
        ys.append(float(agg(np.asarray(b, dtype=float))))
    return paired_t_test(xs, ys)
