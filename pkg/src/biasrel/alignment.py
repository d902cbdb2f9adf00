"""Orthogonal Procrustes alignment between seed models and embedding stability.

Embeddings are stored as row vectors, so alignment solves

    min_Q || W_ref - W_other Q ||_F   subject to  Q^T Q = I

with ``Q`` acting on the right.  The solution is ``Q = U V^T`` where
``W_other^T W_ref = U S V^T``.  Reflections are allowed (no determinant
correction).

The d x d SVD is computed with a one-sided (Hestenes) Jacobi iteration.  Each
sweep visits all column pairs in round-robin order, so the d/2 rotations of
one round touch disjoint columns and are applied together.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass
from itertools import combinations

import numpy as np

from .embeddings import EmbeddingEnsemble

logger = logging.getLogger(__name__)

JACOBI_TOL = 1e-12
JACOBI_MAX_SWEEPS = 100


def _round_robin(d: int) -> list[tuple[np.ndarray, np.ndarray]]:
    # circle method; a phantom column d is added when d is odd
    m = d + (d % 2)
    players = list(range(m))
    rounds = []
    for _ in range(m - 1):
        p = np.array(players[: m // 2])
        q = np.array(players[m // 2:][::-1])
        keep = (p < d) & (q < d)
        rounds.append((p[keep], q[keep]))
        players = [players[0], players[-1]] + players[1:-1]
    return rounds


def jacobi_svd(a: np.ndarray, tol: float = JACOBI_TOL, max_sweeps: int = JACOBI_MAX_SWEEPS):
    """Singular value decomposition ``a = U diag(s) V^T`` of a square matrix.

    Returns ``(U, s, V, converged, sweeps)``.  Singular values are not sorted.
    Columns of U belonging to (numerically) zero singular values are filled
    with an orthonormal completion, so U is always orthogonal.
    """
    a = np.array(a, dtype=np.float64)
    d = a.shape[0]
    if a.ndim != 2 or a.shape[1] != d:
        raise ValueError(f"jacobi_svd expects a square matrix, got {a.shape}")
    # rows of ``cols`` are the columns of a (and of V): row gathers are contiguous
    cols = np.ascontiguousarray(a.T)
    vcols = np.eye(d)
    rounds = _round_robin(d)
    converged = d < 2
    sweeps = 0
    while not converged and sweeps < max_sweeps:
        sweeps += 1
        worst = 0.0
        for p, q in rounds:
            ap, aq = cols[p], cols[q]
            alpha = np.einsum("ij,ij->i", ap, ap)
            beta = np.einsum("ij,ij->i", aq, aq)
            gamma = np.einsum("ij,ij->i", ap, aq)
            scale = np.sqrt(alpha * beta)
            with np.errstate(divide="ignore", invalid="ignore"):
                off = np.where(scale > 0, np.abs(gamma) / scale, 0.0)
            if off.size:
                worst = max(worst, float(off.max()))
            act = off > tol
            if not act.any():
                continue
            if not act.all():
                p, q = p[act], q[act]
                ap, aq = cols[p], cols[q]
                alpha, beta, gamma = alpha[act], beta[act], gamma[act]
            zeta = (beta - alpha) / (2.0 * gamma)
            t = np.where(zeta >= 0, 1.0, -1.0) / (np.abs(zeta) + np.sqrt(1.0 + zeta * zeta))
            c = (1.0 / np.sqrt(1.0 + t * t))[:, None]
            s = c * t[:, None]
            cols[p] = c * ap - s * aq
            cols[q] = s * ap + c * aq
            vp, vq = vcols[p], vcols[q]
            vcols[p] = c * vp - s * vq
            vcols[q] = s * vp + c * vq
        converged = worst <= tol
    a = cols.T
    v = vcols.T
    sv = np.sqrt(np.einsum("ij,ij->j", a, a))
    cutoff = max(d, 1) * np.finfo(float).eps * (sv.max() if sv.size else 0.0)
    good = sv > cutoff
    u = np.zeros_like(a)
    u[:, good] = a[:, good] / sv[good]
    if not good.all():
        u = _complete_basis(u, good)
        sv = np.where(good, sv, 0.0)
    return u, sv, v, converged, sweeps


def _complete_basis(u: np.ndarray, good: np.ndarray) -> np.ndarray:
    d = u.shape[0]
    basis = u[:, good]
    q, _ = np.linalg.qr(np.hstack([basis, np.eye(d)]))
    fill = q[:, basis.shape[1]:d]
    out = u.copy()
    out[:, ~good] = fill
    return out


@dataclass(frozen=True, eq=False)
class OrthogonalMap:
    Q: np.ndarray
    objective: float
    source: str = ""
    target: str = ""
    rank_deficient: bool = False
    converged: bool = True

    def orthogonality_error(self) -> float:
        return float(np.max(np.abs(self.Q.T @ self.Q - np.eye(self.Q.shape[0]))))


def procrustes(w_ref: np.ndarray, w_other: np.ndarray, source: str = "", target: str = "",
               method: str = "jacobi") -> OrthogonalMap:
    """Orthogonal Q minimising ||w_ref - w_other @ Q||_F.

    ``method="lapack"`` swaps the Jacobi SVD for ``numpy.linalg.svd``.
    """
    w_ref = np.asarray(w_ref, dtype=np.float64)
    w_other = np.asarray(w_other, dtype=np.float64)
    if w_ref.shape != w_other.shape:
        raise ValueError(f"shape mismatch {w_ref.shape} vs {w_other.shape}")
    V, d = w_ref.shape
    if V < d:
        logger.warning("procrustes with fewer rows (%d) than dimensions (%d)", V, d)
    cross = w_other.T @ w_ref
    if method == "jacobi":
        u, s, vt_t, converged, _ = jacobi_svd(cross)
        q = u @ vt_t.T
    elif method == "lapack":
        u, s, vt = np.linalg.svd(cross)
        q = u @ vt
        converged = True
    else:
        raise ValueError(f"unknown SVD method {method!r}")
    smax = s.max() if s.size else 0.0
    deficient = bool(np.sum(s > d * np.finfo(float).eps * smax) < d)
    if deficient:
        logger.info("rank-deficient cross-covariance in procrustes(%s, %s)", source, target)
    objective = float(np.linalg.norm(w_ref - w_other @ q))
    return OrthogonalMap(q, objective, source, target, deficient, converged)


@dataclass(frozen=True, eq=False)
class StabilityReport:
    words: tuple[str, ...]
    es: np.ndarray
    pairs_used: np.ndarray
    flagged: np.ndarray
    n_pairs: int

    def as_dict(self) -> dict[str, float]:
        return {w: float(e) for w, e in zip(self.words, self.es)}


def model_pairs(k: int, pair_budget: int | None = None) -> list[tuple[int, int]]:
    pairs = list(combinations(range(k), 2))
    if pair_budget is not None:
        if pair_budget < 1:
            raise ValueError("pair_budget must be positive")
        pairs = pairs[:pair_budget]
    return pairs


def embedding_stability(ensemble: EmbeddingEnsemble, pair_budget: int | None = None,
                        method: str = "jacobi") -> StabilityReport:
    """Per-word mean cosine between seed models after pairwise Procrustes alignment.

    For each model pair (i, j), i < j, model j is rotated onto model i and the
    cosine of every word's two vectors is taken.  Words with a zero vector in
    a pair skip that pair and are flagged.
    """
    mats = [m.matrix for m in ensemble.models]
    norms = [np.sqrt(np.einsum("ij,ij->i", w, w)) for w in mats]
    V = len(ensemble.vocab)
    total = np.zeros(V)
    used = np.zeros(V, dtype=np.int64)
    flagged = np.zeros(V, dtype=bool)
    pairs = model_pairs(ensemble.k, pair_budget)
    for i, j in pairs:
        omap = procrustes(mats[i], mats[j], ensemble.seed_labels[i], ensemble.seed_labels[j],
                          method=method)
        aligned = mats[j] @ omap.Q
        aligned_norm = np.sqrt(np.einsum("ij,ij->i", aligned, aligned))
        ok = (norms[i] > 0) & (norms[j] > 0)
        flagged |= ~ok
        denom = np.where(ok, norms[i] * aligned_norm, 1.0)
        cos = np.einsum("ij,ij->i", mats[i], aligned) / denom
        total += np.where(ok, cos, 0.0)
        used += ok
    with np.errstate(invalid="ignore", divide="ignore"):
        es = np.where(used > 0, total / np.maximum(used, 1), np.nan)
    return StabilityReport(tuple(ensemble.vocab), np.clip(es, -1.0, 1.0), used, flagged, len(pairs))
