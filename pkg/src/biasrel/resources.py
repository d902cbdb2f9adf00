"""Word-list resources: gender base pairs, target lists and queries.

The bundled lists live in ``biasrel/data``.  All words are lower-cased at
load; embedding tokens are matched exactly as written in the model files.
"""
from __future__ import annotations

import hashlib
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Iterable

BUNDLED_LISTS = ("occ16", "occ18", "adj")
BUNDLED_QUERIES = ("career", "family", "arts", "arts_2", "math", "science")

# singular pair -> its plural counterpart among the bundled base pairs
SINGULAR_PLURAL = {
    "boy/girl": "boys/girls",
    "brother/sister": "brothers/sisters",
    "father/mother": "fathers/mothers",
    "male/female": "males/females",
    "man/woman": "men/women",
    "nephew/niece": "nephews/nieces",
    "son/daughter": "sons/daughters",
    "uncle/aunt": "uncles/aunts",
}


@dataclass(frozen=True)
class BasePair:
    male: str
    female: str

    def __post_init__(self):
        object.__setattr__(self, "male", self.male.lower())
        object.__setattr__(self, "female", self.female.lower())
        if self.male == self.female:
            raise ValueError(f"base pair needs two distinct words, got {self.male!r} twice")

    @property
    def label(self) -> str:
        return f"{self.male}/{self.female}"

    def reversed(self) -> "BasePair":
        return BasePair(self.female, self.male)


@dataclass(frozen=True)
class WordList:
    """A named, ordered, duplicate-free word list (target list or query)."""

    name: str
    words: tuple[str, ...]

    def __post_init__(self):
        seen, out = set(), []
        for w in self.words:
            w = w.lower()
            if w not in seen:
                seen.add(w)
                out.append(w)
        if not out:
            raise ValueError(f"word list {self.name!r} is empty")
        object.__setattr__(self, "words", tuple(out))

    def __len__(self):
        return len(self.words)


def _data_dir() -> Path:
    return Path(str(resources.files("biasrel") / "data"))


def _content_lines(text: str) -> Iterable[tuple[int, str]]:
    for i, line in enumerate(text.splitlines(), 1):
        line = line.strip()
        if line and not line.startswith("#"):
            yield i, line


def read_basepairs(path) -> list[BasePair]:
    """Parse a ``male<TAB>female`` file; ``#`` starts a comment line."""
    pairs = []
    text = Path(path).read_text(encoding="utf-8")
    for lineno, line in _content_lines(text):
        parts = line.split("\t")
        if len(parts) != 2:
            raise ValueError(f"{path}:{lineno}: expected 'male<TAB>female'")
        pairs.append(BasePair(parts[0].strip(), parts[1].strip()))
    if not pairs:
        raise ValueError(f"{path}: no base pairs")
    return pairs


def read_wordlist(path, name: str | None = None) -> WordList:
    path = Path(path)
    words = [line for _, line in _content_lines(path.read_text(encoding="utf-8"))]
    return WordList(name or path.stem, tuple(words))


def bundled_basepairs() -> list[BasePair]:
    return read_basepairs(bundled_path("basepairs"))


def bundled_list(name: str) -> WordList:
    return read_wordlist(bundled_path(name))


def bundled_queries() -> list[WordList]:
    return [read_wordlist(bundled_path(q)) for q in BUNDLED_QUERIES]


def bundled_path(name: str) -> Path:
    """File path of a bundled resource: ``basepairs``, a list name or a query name."""
    d = _data_dir()
    if name == "basepairs":
        return d / "basepairs.tsv"
    if name in BUNDLED_LISTS:
        return d / f"{name}.txt"
    if name in BUNDLED_QUERIES:
        return d / "queries" / f"{name}.txt"
    raise KeyError(f"no bundled resource named {name!r}")


def sha256_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def read_table(path, convert=str) -> dict[str, object]:
    """Read a ``word<TAB>value`` table (counts, sense counts, PoS tags)."""
    out = {}
    for lineno, line in _content_lines(Path(path).read_text(encoding="utf-8")):
        parts = line.split("\t")
        if len(parts) != 2:
            raise ValueError(f"{path}:{lineno}: expected 'word<TAB>value'")
        try:
            out[parts[0].strip()] = convert(parts[1].strip())
        except ValueError:
            raise ValueError(f"{path}:{lineno}: bad value {parts[1]!r}") from None
    return out
