"""Gender bias scores of target words under DB/WA, RIPA and NBM.

DB/WA is the difference of cosine similarities to the male and female word,
RIPA projects the target vector on the normalised pair difference, and NBM is
the signed fraction of the target's ``k`` cosine nearest neighbours whose
DB/WA score leans male (positive) or female (negative).

The four-way score array has axes (rule, pair, target, model); averaging over
the model axis gives the three-way cube used for inter-rater and internal
consistency.
"""
from __future__ import annotations

import logging
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .embeddings import EmbeddingEnsemble, EmbeddingModel
from .resources import BasePair, WordList

logger = logging.getLogger(__name__)

RULE_KINDS = ("dbwa", "ripa", "nbm")
DEFAULT_K = 100


class MissingWord(KeyError):
    pass


class DegenerateVector(ValueError):
    pass


class DegeneratePair(ValueError):
    pass


@dataclass(frozen=True)
class ScoringRule:
    kind: str
    k_neighbors: int = DEFAULT_K

    def __post_init__(self):
        kind = self.kind.lower().replace("/", "")
        if kind not in RULE_KINDS:
            raise ValueError(f"unknown scoring rule {self.kind!r}; expected one of {RULE_KINDS}")
        object.__setattr__(self, "kind", kind)
        if kind == "nbm" and self.k_neighbors < 1:
            raise ValueError("k_neighbors must be positive")

    @property
    def label(self) -> str:
        return self.kind


def _row(model: EmbeddingModel, token: str) -> np.ndarray:
    try:
        return model.vector(token)
    except KeyError:
        raise MissingWord(token) from None


def _norm(v: np.ndarray) -> float:
    return float(np.sqrt(np.dot(v, v)))


def _cos(a: np.ndarray, b: np.ndarray, names) -> float:
    na, nb = _norm(a), _norm(b)
    if na == 0.0 or nb == 0.0:
        bad = names[0] if na == 0.0 else names[1]
        raise DegenerateVector(f"zero-norm vector for {bad!r}")
    return float(np.dot(a, b)) / (na * nb)


def score_dbwa(model: EmbeddingModel, w: str, pair: BasePair) -> float:
    """cos(w, m) - cos(w, f)."""
    wv, mv, fv = _row(model, w), _row(model, pair.male), _row(model, pair.female)
    return _cos(wv, mv, (w, pair.male)) - _cos(wv, fv, (w, pair.female))


def score_ripa(model: EmbeddingModel, w: str, pair: BasePair) -> float:
    """w . (m - f) / |m - f|."""
    wv, mv, fv = _row(model, w), _row(model, pair.male), _row(model, pair.female)
    diff = mv - fv
    n = _norm(diff)
    if n == 0.0:
        raise DegeneratePair(f"{pair.label}: identical vectors")
    return float(np.dot(wv, diff / n))


def _unit_rows(matrix: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    norms = np.sqrt(np.einsum("ij,ij->i", matrix, matrix))
    zero = norms == 0.0
    return matrix / np.where(zero, 1.0, norms)[:, None], zero


def _topk_sorted(sims: np.ndarray, k: int) -> np.ndarray:
    """Column indices of the k largest entries per row, ordered by (-sim, index).

    Ties at the k-th rank go to the lower index.  ``-inf`` marks ineligible
    columns; callers guarantee at least ``k`` finite entries per row.
    """
    n, V = sims.shape
    if k >= V:
        part = np.tile(np.arange(V), (n, 1))
    else:
        part = np.argpartition(-sims, k - 1, axis=1)[:, :k]
    vals = np.take_along_axis(sims, part, axis=1)
    thr = vals.min(axis=1)
    ties = np.count_nonzero(sims >= thr[:, None], axis=1) > k
    for i in np.flatnonzero(ties):
        row = sims[i]
        above = np.flatnonzero(row > thr[i])
        at = np.flatnonzero(row == thr[i])[: k - above.size]
        part[i] = np.concatenate([above, at])
        vals[i] = row[part[i]]
    order = np.lexsort((part, -vals), axis=1)
    return np.take_along_axis(part, order, axis=1)


class NeighborIndex:
    """Blocked brute-force cosine k-NN over one model.

    Zero-norm rows and ``exclusions`` never appear as neighbours; the query
    word itself is always excluded.
    """

    def __init__(self, model: EmbeddingModel, exclusions: Iterable[str] = (),
                 block_size: int = 1024, n_jobs: int | None = None):
        self.model = model
        self.unit, self.zero = _unit_rows(model.matrix)
        banned = np.zeros(len(model), dtype=bool)
        banned |= self.zero
        for tok in exclusions:
            if tok in model:
                banned[model.index(tok)] = True
        self.banned = banned
        self.block_size = block_size
        self.n_jobs = n_jobs or min(8, os.cpu_count() or 1)

    def _block(self, rows: np.ndarray, k: int) -> np.ndarray:
        sims = self.unit[rows] @ self.unit.T
        sims[:, self.banned] = -np.inf
        sims[np.arange(rows.size), rows] = -np.inf
        return _topk_sorted(sims, k)

    def query(self, rows: Sequence[int], k: int) -> np.ndarray:
        """Neighbour indices, shape (len(rows), k), best first."""
        rows = np.asarray(rows, dtype=np.intp)
        eligible = int(np.count_nonzero(~self.banned)) - 1
        if k > eligible:
            raise ValueError(f"only {eligible} eligible neighbours, need k={k}")
        if rows.size == 0:
            return np.empty((0, k), dtype=np.intp)
        blocks = [rows[i:i + self.block_size] for i in range(0, rows.size, self.block_size)]
        if self.n_jobs > 1 and len(blocks) > 1:
            with ThreadPoolExecutor(self.n_jobs) as pool:
                parts = list(pool.map(lambda b: self._block(b, k), blocks))
        else:
            parts = [self._block(b, k) for b in blocks]
        return np.vstack(parts)

    def dbwa_all(self, pair_rows: tuple[int, int]) -> np.ndarray:
        """DB/WA score of every vocabulary word for one (male, female) row pair."""
        m, f = pair_rows
        return self.unit @ self.unit[m] - self.unit @ self.unit[f]


def _nbm_from_neighbors(nbrs: np.ndarray, dbwa: np.ndarray, k: int) -> np.ndarray:
    s = dbwa[nbrs]
    return (np.count_nonzero(s > 0, axis=-1) - np.count_nonzero(s < 0, axis=-1)) / k


def _pick_without(nbrs: np.ndarray, drop: Sequence[int], k: int) -> np.ndarray:
    keep = ~np.isin(nbrs, drop)
    out = np.empty((nbrs.shape[0], k), dtype=nbrs.dtype)
    for i in range(nbrs.shape[0]):
        out[i] = nbrs[i][keep[i]][:k]
    return out


def score_nbm(model: EmbeddingModel, w: str, pair: BasePair, k: int = DEFAULT_K,
              exclusions: Iterable[str] = (), exclude_pair_words: bool = False) -> float:
    """(#male-leaning - #female-leaning neighbours) / k among w's k nearest neighbours.

    Neighbours with a DB/WA score of exactly zero count for neither side.
    """
    exclusions = set(exclusions)
    for tok in (w, pair.male, pair.female):
        _row(model, tok)
    if exclude_pair_words:
        exclusions |= {pair.male, pair.female}
    index = NeighborIndex(model, exclusions, n_jobs=1)
    wi = model.index(w)
    if index.zero[wi]:
        raise DegenerateVector(f"zero-norm vector for {w!r}")
    m, f = model.index(pair.male), model.index(pair.female)
    if index.zero[m] or index.zero[f]:
        raise DegenerateVector(f"zero-norm vector in pair {pair.label}")
    nbrs = index.query([wi], k)
    return float(_nbm_from_neighbors(nbrs, index.dbwa_all((m, f)), k)[0])


@dataclass(frozen=True, eq=False)
class BiasTensor:
    scores: np.ndarray
    rules: tuple[ScoringRule, ...]
    pairs: tuple[BasePair, ...]
    targets: tuple[str, ...]
    models: tuple[str, ...]
    missing: tuple[tuple[str, str, str], ...] = ()

    def __post_init__(self):
        shape = (len(self.rules), len(self.pairs), len(self.targets), len(self.models))
        if self.scores.shape != shape:
            raise ValueError(f"score shape {self.scores.shape} does not match labels {shape}")

    @property
    def rule_labels(self) -> tuple[str, ...]:
        return tuple(r.label for r in self.rules)

    @property
    def pair_labels(self) -> tuple[str, ...]:
        return tuple(p.label for p in self.pairs)


@dataclass(frozen=True, eq=False)
class MeanBiasCube:
    scores: np.ndarray
    rules: tuple[ScoringRule, ...]
    pairs: tuple[BasePair, ...]
    targets: tuple[str, ...]
    _pos: dict = field(default=None, repr=False)

    def __post_init__(self):
        pos = {
            "rule": {r.label: i for i, r in enumerate(self.rules)},
            "pair": {p.label: i for i, p in enumerate(self.pairs)},
            "target": {t: i for i, t in enumerate(self.targets)},
        }
        object.__setattr__(self, "_pos", pos)

    @property
    def rule_labels(self) -> tuple[str, ...]:
        return tuple(r.label for r in self.rules)

    @property
    def pair_labels(self) -> tuple[str, ...]:
        return tuple(p.label for p in self.pairs)

    def position(self, axis: str, label) -> int:
        if isinstance(label, (BasePair, ScoringRule)):
            label = label.label
        try:
            return self._pos[axis][label]
        except KeyError:
            raise KeyError(f"unknown {axis} label {label!r}") from None


def _ordered_mean(values: np.ndarray, axis: int) -> np.ndarray:
    # fixed ascending-index accumulation so results do not depend on numpy's pairwise summation
    values = np.moveaxis(values, axis, 0)
    acc = values[0].copy()
    for j in range(1, values.shape[0]):
        acc += values[j]
    return acc / values.shape[0]


def compute_bias_tensor(ensemble: EmbeddingEnsemble, rules: Sequence[ScoringRule],
                        pairs: Sequence[BasePair], targets, exclusions: Iterable[str] = (),
                        exclude_pair_words: bool = False, n_jobs: int | None = None
                        ) -> BiasTensor:
    """Score every (rule, pair, target, model) cell.

    Targets absent from the aligned vocabulary (or zero-norm in any model) and
    pairs with a missing or degenerate side are dropped and listed in
    ``missing``.
    """
    if not rules or not pairs:
        raise ValueError("need at least one scoring rule and one base pair")
    words = targets.words if isinstance(targets, WordList) else tuple(targets)
    if not words:
        raise ValueError("empty target list")
    rules = tuple(rules)
    exclusions = tuple(exclusions)
    missing: list[tuple[str, str, str]] = []
    units = [_unit_rows(m.matrix) for m in ensemble.models]
    zero_any = np.zeros(len(ensemble.vocab), dtype=bool)
    for _, z in units:
        zero_any |= z

    kept_targets = []
    seen = set()
    for w in words:
        if w in seen:
            continue
        seen.add(w)
        if w not in ensemble:
            missing.append(("target", w, "not in aligned vocabulary"))
        elif zero_any[ensemble.models[0].index(w)]:
            missing.append(("target", w, "zero-norm vector"))
        else:
            kept_targets.append(w)

    kept_pairs = []
    for p in pairs:
        if p.male not in ensemble or p.female not in ensemble:
            absent = [t for t in (p.male, p.female) if t not in ensemble]
            missing.append(("pair", p.label, "not in aligned vocabulary: " + ",".join(absent)))
            continue
        m, f = ensemble.models[0].index(p.male), ensemble.models[0].index(p.female)
        if zero_any[m] or zero_any[f]:
            missing.append(("pair", p.label, "zero-norm vector"))
        elif any(np.array_equal(mod.matrix[m], mod.matrix[f]) for mod in ensemble.models):
            missing.append(("pair", p.label, "identical male and female vectors"))
        else:
            kept_pairs.append(p)

    if not kept_targets:
        raise ValueError("no target word is present in the aligned vocabulary")
    if not kept_pairs:
        raise ValueError("no base pair is present in the aligned vocabulary")
    for kind, label, reason in missing:
        logger.info("dropped %s %r: %s", kind, label, reason)

    first = ensemble.models[0]
    t_idx = np.array([first.index(w) for w in kept_targets], dtype=np.intp)
    m_idx = np.array([first.index(p.male) for p in kept_pairs], dtype=np.intp)
    f_idx = np.array([first.index(p.female) for p in kept_pairs], dtype=np.intp)
    out = np.empty((len(rules), len(kept_pairs), len(kept_targets), ensemble.k))

    nbm_ks = sorted({r.k_neighbors for r in rules if r.kind == "nbm"})
    for j, model in enumerate(ensemble.models):
        unit, _ = units[j]
        dbwa = None
        if any(r.kind == "dbwa" for r in rules) or nbm_ks:
            dbwa_all = unit @ unit[m_idx].T - unit @ unit[f_idx].T  # V x g
            dbwa = dbwa_all[t_idx].T
        if nbm_ks:
            # one scan serves every k: rows are sorted best-first
            index = NeighborIndex(model, exclusions, n_jobs=n_jobs)
            full = index.query(t_idx, nbm_ks[-1] + (2 if exclude_pair_words else 0))
        for s, rule in enumerate(rules):
            if rule.kind == "dbwa":
                out[s, :, :, j] = dbwa
            elif rule.kind == "ripa":
                diff = model.matrix[m_idx] - model.matrix[f_idx]
                diff /= np.sqrt(np.einsum("ij,ij->i", diff, diff))[:, None]
                out[s, :, :, j] = diff @ model.matrix[t_idx].T
            else:
                k = rule.k_neighbors
                for g in range(len(kept_pairs)):
                    if exclude_pair_words:
                        nb = _pick_without(full, (m_idx[g], f_idx[g]), k)
                    else:
                        nb = full[:, :k]
                    out[s, g, :, j] = _nbm_from_neighbors(nb, dbwa_all[:, g], k)

    return BiasTensor(out, rules, tuple(kept_pairs), tuple(kept_targets),
                      tuple(ensemble.seed_labels), tuple(missing))


def average_over_models(tensor: BiasTensor) -> MeanBiasCube:
    return MeanBiasCube(_ordered_mean(tensor.scores, axis=3), tensor.rules, tensor.pairs,
                        tensor.targets)


def aggregate_target(cube: MeanBiasCube, rule, word: str) -> float:
    """Score of one target word averaged over base pairs."""
    s, t = cube.position("rule", rule), cube.position("target", word)
    return float(_ordered_mean(cube.scores[s, :, t], axis=0))


def aggregate_pair(cube: MeanBiasCube, rule, pair) -> float:
    """Score of one base pair averaged over target words."""
    s, g = cube.position("rule", rule), cube.position("pair", pair)
    return float(_ordered_mean(cube.scores[s, g, :], axis=0))


def aggregate_query(cube: MeanBiasCube, rule, query) -> float:
    """Concept-level score: pair-mean per word, then the mean over the query's words."""
    words = query.words if isinstance(query, WordList) else tuple(query)
    s = cube.position("rule", rule)
    cols = [cube.position("target", w) for w in words]
    per_word = _ordered_mean(cube.scores[s][:, cols], axis=0)
    return float(_ordered_mean(per_word, axis=0))
