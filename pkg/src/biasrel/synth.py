"""Synthetic seed ensembles standing in for trained embeddings.

A base matrix is drawn from a spherical Gaussian and a unit "gender"
direction is planted: male base-pair words get ``+gender_strength`` along
it, female ones ``-gender_strength``, and a share of filler words a random
sign.  Two concept clusters serve as queries.  Each seed model is the base
plus independent Gaussian noise, optionally rotated by a random orthogonal
matrix (which changes nothing but the coordinate system).
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .embeddings import EmbeddingEnsemble, EmbeddingModel, align_ensemble, parse_embedding_text, write_embedding_text
from .resources import BasePair, WordList, bundled_basepairs, bundled_queries

N_SYNTH_PAIRS = 4
QUERY_SIZE = 8
GENDERED_SHARE = 0.3
POS_TAGS = ("adj", "adv", "noun", "verb")


@dataclass
class SynthResources:
    pairs: list[BasePair]
    targets: WordList
    queries: list[WordList]
    counts: dict[str, float]
    senses: dict[str, float]
    pos: dict[str, str]
    recipe: dict
    files: list[Path] = field(default_factory=list)
    tables: dict[str, Path] = field(default_factory=dict)


def _random_orthogonal(rng: np.random.Generator, d: int) -> np.ndarray:
    q, r = np.linalg.qr(rng.standard_normal((d, d)))
    return q * np.sign(np.diag(r))


def _vocabulary(vocab_size: int, bundled_words: bool):
    male = [f"m{i}" for i in range(N_SYNTH_PAIRS)]
    female = [f"f{i}" for i in range(N_SYNTH_PAIRS)]
    concept = [[f"c{c}_{j}" for j in range(QUERY_SIZE)] for c in range(2)]
    words = male + female + concept[0] + concept[1]
    if bundled_words:
        for p in bundled_basepairs():
            for w, sign in ((p.male, 1), (p.female, -1)):
                if w not in words:
                    words.append(w)
                    (male if sign > 0 else female).append(w)
        for q in bundled_queries():
            words.extend(w for w in q.words if w not in words)
    n_fill = vocab_size - len(words)
    if n_fill < 1:
        raise ValueError(f"vocab_size {vocab_size} leaves no room for filler words")
    width = len(str(n_fill - 1))
    fillers = [f"w{i:0{width}d}" for i in range(n_fill)]
    return words + fillers, male, female, concept, fillers


def synth_ensemble(vocab_size: int = 300, d: int = 16, k: int = 4, noise_sigma: float = 0.05,
                   rotate: bool = False, gender_strength: float = 2.0, seed: int = 0,
                   out_dir=None, bundled_words: bool = False, n_targets: int | None = None,
                   algorithm_label: str = "synthetic", corpus_label: str = "synthetic"
                   ) -> tuple[EmbeddingEnsemble, SynthResources]:
    """Generate a k-seed ensemble; with ``out_dir`` also write it to disk and reload it.

    Written files: ``seed{j}.txt`` (word2vec text), ``pairs.tsv``,
    ``targets.txt``, ``queries/*.txt``, ``counts.tsv``, ``senses.tsv``,
    ``pos.tsv`` and ``recipe.json``.
    """
    if not (vocab_size > d >= 2) or k < 2:
        raise ValueError("need vocab_size > d >= 2 and k >= 2")
    if noise_sigma < 0:
        raise ValueError("noise_sigma must be non-negative")
    rng = np.random.default_rng(seed)
    vocab, male, female, concept, fillers = _vocabulary(vocab_size, bundled_words)
    pos_of = {w: i for i, w in enumerate(vocab)}
    V = len(vocab)

    direction = rng.standard_normal(d)
    direction /= np.linalg.norm(direction)
    base = rng.standard_normal((V, d))
    for w in male:
        base[pos_of[w]] += gender_strength * direction
    for w in female:
        base[pos_of[w]] -= gender_strength * direction
    n_gendered = int(round(GENDERED_SHARE * len(fillers)))
    signs = rng.choice([-1.0, 1.0], size=n_gendered)
    for w, s in zip(fillers[:n_gendered], signs):
        base[pos_of[w]] += s * gender_strength * direction
    for c, words in enumerate(concept):
        center = 2.0 * rng.standard_normal(d) + (1 if c == 0 else -1) * gender_strength * direction
        for w in words:
            base[pos_of[w]] = center + 0.7 * rng.standard_normal(d)

    models = []
    for j in range(k):
        mat = base + noise_sigma * rng.standard_normal((V, d))
        if rotate:
            mat = mat @ _random_orthogonal(rng, d)
        models.append(EmbeddingModel(tuple(vocab), mat, label=f"seed{j}"))

    # Zipf-like counts in vocabulary order, random sense counts and tags
    counts = {w: float(max(1, round(1e6 / (i + 1)))) for i, w in enumerate(vocab)}
    senses = {w: float(s) for w, s in zip(vocab, rng.integers(1, 12, size=V))}
    pos = {w: POS_TAGS[t] for w, t in zip(vocab, rng.integers(0, len(POS_TAGS), size=V))}

    n_targets = min(len(fillers), n_targets or max(QUERY_SIZE, len(fillers) // 2))
    pairs = [BasePair(f"m{i}", f"f{i}") for i in range(N_SYNTH_PAIRS)]
    targets = WordList("synthetic", tuple(fillers[:n_targets]))
    queries = [WordList(f"concept{c}", tuple(words)) for c, words in enumerate(concept)]
    recipe = {
        "generator": "numpy.random.default_rng",
        "vocab_size": vocab_size, "d": d, "k": k, "noise_sigma": noise_sigma,
        "rotate": rotate, "gender_strength": gender_strength, "seed": seed,
        "bundled_words": bundled_words, "n_targets": n_targets,
        "gendered_share": GENDERED_SHARE,
    }
    res = SynthResources(pairs, targets, queries, counts, senses, pos, recipe)

    if out_dir is None:
        return align_ensemble(models, algorithm_label, corpus_label), res

    out = Path(out_dir)
    (out / "queries").mkdir(parents=True, exist_ok=True)
    for j, m in enumerate(models):
        path = out / f"seed{j}.txt"
        write_embedding_text(m, path, "w2v_text")
        res.files.append(path)
    (out / "pairs.tsv").write_text("".join(f"{p.male}\t{p.female}\n" for p in pairs), encoding="utf-8")
    (out / "targets.txt").write_text("".join(w + "\n" for w in targets.words), encoding="utf-8")
    for q in queries:
        (out / "queries" / f"{q.name}.txt").write_text("".join(w + "\n" for w in q.words),
                                                        encoding="utf-8")
    for name, table in (("counts", counts), ("senses", senses), ("pos", pos)):
        path = out / f"{name}.tsv"
        body = "".join(f"{w}\t{int(v) if isinstance(v, float) else v}\n" for w, v in table.items())
        path.write_text(body, encoding="utf-8")
        res.tables[name] = path
    (out / "recipe.json").write_text(json.dumps(recipe, indent=2, sort_keys=True) + "\n",
                                     encoding="utf-8")
    loaded = [parse_embedding_text(p, "w2v_text") for p in res.files]
    return align_ensemble(loaded, algorithm_label, corpus_label), res
