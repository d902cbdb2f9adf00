"""Loading word embeddings from text files and aligning seed ensembles.

Two text layouts are understood: word2vec text (a ``"V d"`` header line
followed by one row per token) and GloVe text (rows only).  Binary formats
are not supported.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

logger = logging.getLogger(__name__)

FORMATS = ("auto", "w2v_text", "glove_text")


class EmbeddingParseError(ValueError):
    """Raised for malformed embedding files; carries the 1-based line number."""

    def __init__(self, path, lineno: int | None, msg: str):
        self.path = str(path)
        self.lineno = lineno
        where = f"{self.path}:{lineno}" if lineno is not None else self.path
        super().__init__(f"{where}: {msg}")


class AlignmentError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class EmbeddingModel:
    vocab: tuple[str, ...]
    matrix: np.ndarray
    label: str = ""
    warnings: tuple[str, ...] = ()
    zero_rows: tuple[int, ...] = ()

    def __post_init__(self):
        m = np.asarray(self.matrix, dtype=np.float64)
        if m.ndim != 2 or m.shape[0] < 1 or m.shape[1] < 1:
            raise ValueError(f"embedding matrix must be V x d with V, d >= 1, got {m.shape}")
        if m.shape[0] != len(self.vocab):
            raise ValueError(f"{len(self.vocab)} tokens but {m.shape[0]} rows")
        if not np.all(np.isfinite(m)):
            raise ValueError("embedding matrix contains non-finite values")
        if not m.flags.writeable and m.dtype == np.float64:
            frozen = m
        else:
            frozen = m.copy()
            frozen.setflags(write=False)
        object.__setattr__(self, "matrix", frozen)
        object.__setattr__(self, "vocab", tuple(self.vocab))
        index = {}
        for i, tok in enumerate(self.vocab):
            if tok in index:
                raise ValueError(f"duplicate token {tok!r}")
            index[tok] = i
        object.__setattr__(self, "_index", index)

    @property
    def dim(self) -> int:
        return self.matrix.shape[1]

    def __len__(self) -> int:
        return len(self.vocab)

    def __contains__(self, token) -> bool:
        return token in self._index

    def index(self, token: str) -> int:
        """Row index of ``token``; raises KeyError when absent."""
        return self._index[token]

    def vector(self, token: str) -> np.ndarray:
        return self.matrix[self._index[token]]

    def subset(self, tokens: Sequence[str], label: str | None = None) -> "EmbeddingModel":
        rows = [self._index[t] for t in tokens]
        return EmbeddingModel(tuple(tokens), self.matrix[rows],
                              label=self.label if label is None else label)


@dataclass(frozen=True, eq=False)
class EmbeddingEnsemble:
    """Seed models re-indexed to one shared vocabulary."""

    models: tuple[EmbeddingModel, ...]
    algorithm_label: str = ""
    corpus_label: str = ""
    seed_labels: tuple[str, ...] = ()
    dropped: tuple[int, ...] = field(default=())

    def __post_init__(self):
        if len(self.models) < 2:
            raise AlignmentError("an ensemble needs at least 2 models")
        vocab, dim = self.models[0].vocab, self.models[0].dim
        for m in self.models[1:]:
            if m.vocab != vocab or m.dim != dim:
                raise AlignmentError("ensemble members must share vocabulary order and dimension")
        object.__setattr__(self, "models", tuple(self.models))
        if not self.seed_labels:
            object.__setattr__(self, "seed_labels",
                               tuple(m.label or f"seed{i}" for i, m in enumerate(self.models)))
        if len(self.seed_labels) != len(self.models):
            raise AlignmentError("one seed label per model required")

    @property
    def vocab(self) -> tuple[str, ...]:
        return self.models[0].vocab

    @property
    def k(self) -> int:
        return len(self.models)

    @property
    def dim(self) -> int:
        return self.models[0].dim

    def __contains__(self, token) -> bool:
        return token in self.models[0]


def _looks_like_header(tokens: list[str]) -> bool:
    if len(tokens) != 2:
        return False
    try:
        int(tokens[0]), int(tokens[1])
    except ValueError:
        return False
    return True


def parse_embedding_text(path, format: str = "auto", label: str | None = None) -> EmbeddingModel:
    """Read a word2vec-text or GloVe-text file into an :class:`EmbeddingModel`.

    In ``auto`` mode a first line consisting of exactly two integers is taken
    as a ``"V d"`` header.  Duplicate tokens keep their first vector and are
    reported as warnings.
    """
    if format not in FORMATS:
        raise ValueError(f"unknown embedding format {format!r}; expected one of {FORMATS}")
    path = Path(path)
    with open(path, encoding="utf-8") as fh:
        lines = fh.read().split("\n")
    if lines and lines[-1] == "":
        lines.pop()
    if not lines or all(not ln.strip() for ln in lines):
        raise EmbeddingParseError(path, None, "empty embedding file")

    first = lines[0].rstrip("\r").split(" ")
    declared_v = declared_d = None
    start = 0
    if format == "w2v_text" or (format == "auto" and _looks_like_header(first)):
        if not _looks_like_header(first):
            raise EmbeddingParseError(path, 1, "expected header 'V d'")
        declared_v, declared_d = int(first[0]), int(first[1])
        if declared_d < 1:
            raise EmbeddingParseError(path, 1, f"declared dimension {declared_d} < 1")
        start = 1

    vocab: list[str] = []
    rows: list[list[float]] = []
    seen: set[str] = set()
    warnings: list[str] = []
    dim = declared_d
    for lineno in range(start + 1, len(lines) + 1):
        line = lines[lineno - 1].rstrip("\r")
        if not line.strip():
            continue
        parts = line.rstrip(" ").split(" ")
        token, values = parts[0], parts[1:]
        if dim is None:
            if not values:
                raise EmbeddingParseError(path, lineno, "row has no values")
            dim = len(values)
        if len(values) != dim:
            if declared_d is not None:
                msg = f"row dimension {len(values)} ≠ declared {declared_d}"
            else:
                msg = f"row dimension {len(values)} ≠ {dim} of the first row"
            raise EmbeddingParseError(path, lineno, msg)
        try:
            vec = [float(v) for v in values]
        except ValueError as exc:
            raise EmbeddingParseError(path, lineno, f"unparseable value ({exc})") from None
        if not all(math.isfinite(v) for v in vec):
            raise EmbeddingParseError(path, lineno, "non-finite value")
        if token in seen:
            msg = f"duplicate token {token!r} at line {lineno}; keeping first occurrence"
            logger.warning("%s: %s", path, msg)
            warnings.append(msg)
            continue
        seen.add(token)
        vocab.append(token)
        rows.append(vec)

    if not rows:
        raise EmbeddingParseError(path, None, "no embedding rows")
    if declared_v is not None and declared_v != len(rows) + len(warnings):
        msg = f"header declares {declared_v} rows, found {len(rows) + len(warnings)}"
        logger.warning("%s: %s", path, msg)
        warnings.append(msg)
    matrix = np.array(rows, dtype=np.float64)
    return EmbeddingModel(tuple(vocab), matrix, label=label if label is not None else path.stem,
                          warnings=tuple(warnings))


def _format_row(values: np.ndarray) -> str:
    return " ".join(repr(float(v)) for v in values)


def write_embedding_text(model: EmbeddingModel, path, format: str = "w2v_text") -> None:
    """Write ``model`` as word2vec text (with header) or GloVe text.

    Values are written with ``repr`` so a parse round-trip is lossless.
    """
    if format not in ("w2v_text", "glove_text"):
        raise ValueError(f"cannot write format {format!r}")
    with open(path, "w", encoding="utf-8") as fh:
        if format == "w2v_text":
            fh.write(f"{len(model)} {model.dim}\n")
        for tok, row in zip(model.vocab, model.matrix):
            fh.write(f"{tok} {_format_row(row)}\n")


def align_ensemble(models: Sequence[EmbeddingModel], algorithm_label: str = "",
                   corpus_label: str = "", seed_labels: Sequence[str] | None = None
                   ) -> EmbeddingEnsemble:
    """Restrict every model to the shared vocabulary, ordered as in the first model."""
    if len(models) < 2:
        raise AlignmentError("align_ensemble needs at least 2 models")
    dims = {m.dim for m in models}
    if len(dims) != 1:
        raise AlignmentError(f"models have unequal dimensions {sorted(dims)}")
    common = set(models[0].vocab)
    for m in models[1:]:
        common &= set(m.vocab)
    if not common:
        raise AlignmentError("empty aligned vocabulary")
    vocab = tuple(t for t in models[0].vocab if t in common)
    aligned, dropped = [], []
    for m in models:
        dropped.append(len(m) - len(vocab))
        aligned.append(m if m.vocab == vocab else m.subset(vocab))
    if any(dropped):
        logger.info("aligned vocabulary has %d tokens; dropped per model: %s", len(vocab), dropped)
    return EmbeddingEnsemble(tuple(aligned), algorithm_label, corpus_label,
                             tuple(seed_labels) if seed_labels else (), tuple(dropped))


def unit_normalize(model: EmbeddingModel) -> EmbeddingModel:
    """Scale every row to unit L2 norm; zero rows stay zero and are listed in ``zero_rows``."""
    m = model.matrix
    norms = np.sqrt(np.einsum("ij,ij->i", m, m))
    zero = norms == 0.0
    safe = np.where(zero, 1.0, norms)
    out = m / safe[:, None]
    return EmbeddingModel(model.vocab, out, label=model.label,
                          zero_rows=tuple(int(i) for i in np.flatnonzero(zero)))


def load_ensemble(paths: Sequence, format: str = "auto", algorithm_label: str = "",
                  corpus_label: str = "") -> EmbeddingEnsemble:
    models = [parse_embedding_text(p, format) for p in paths]
    return align_ensemble(models, algorithm_label, corpus_label)
