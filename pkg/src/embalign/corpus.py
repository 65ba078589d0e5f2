"""Report sectioning and text featurization.

Radiology-style reports are split into named sections; section bodies are
featurized either as TF-IDF over token n-grams or as averages of pretrained
word vectors. Featurized collections are carried as :class:`EmbeddingSet`
(row-major, one row per document).
"""

from __future__ import annotations

import re
from collections import Counter
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .linalg import check_matrix

# Section names recognized at the start of a line ("IMPRESSION:", "Findings :").
# Anything else accumulates into the current section; leading text goes to "other".
SECTION_NAMES = ("impression", "findings", "indication", "comparison", "history")

_HEADER_RE = re.compile(r"^([A-Za-z]+)\s*:\s*(.*)$")
_TOKEN_RE = re.compile(r"[a-z0-9]+")


@dataclass
class Report:
    id: str
    raw_text: str
    sections: dict  # section name (lowercase) -> non-empty body text


def parse_report(raw: str, report_id: str = "") -> Report:
    """Split raw report text into sections.

    A section starts at a line whose first word is a known section name
    followed by a colon (case-insensitive, whitespace tolerated before the
    colon). Text before the first recognized header lands in ``other``; a
    report with no recognized headers is a single ``other`` section.
    """
    if not raw or not raw.strip():
        raise ValueError("report text is empty")
    sections: dict[str, list[str]] = {}
    current = "other"
    for line in raw.splitlines():
        m = _HEADER_RE.match(line)
        name = m.group(1).lower() if m else None
        if name in SECTION_NAMES:
            current = name
            rest = m.group(2).strip()
            sections.setdefault(current, [])
            if rest:
                sections[current].append(rest)
        else:
            sections.setdefault(current, []).append(line)
    cleaned = {}
    for name, lines in sections.items():
        body = "\n".join(lines).strip()
        if body:
            cleaned[name] = body
    if not cleaned:
        cleaned = {"other": raw.strip()}
    return Report(id=report_id, raw_text=raw, sections=cleaned)


def serialize_report(report: Report) -> str:
    """Render a report back to text; parsing the result restores sections."""
    blocks = []
    for name, body in report.sections.items():
        if name == "other":
            blocks.append(body)
        else:
            blocks.append(f"{name.upper()}: {body}")
    return "\n".join(blocks)


def tokenize(text: str) -> list[str]:
    """Lowercase, split on non-alphanumeric characters, keep digit runs."""
    return _TOKEN_RE.findall(text.lower())


def ngrams(tokens, n: int) -> list[tuple]:
    """All contiguous n-grams of exactly order n (empty if the doc is shorter)."""
    if n < 1:
        raise ValueError(f"ngram order must be >= 1, got {n}")
    return [tuple(tokens[i:i + n]) for i in range(len(tokens) - n + 1)]


@dataclass
class TfidfModel:
    ngram_order: int
    vocabulary: dict        # n-gram tuple -> dense column index 0..V-1
    idf: np.ndarray         # (V,), smoothed: ln((1+N)/(1+df)) + 1
    norm: bool              # L2-normalize document vectors

    @property
    def size(self) -> int:
        return len(self.vocabulary)


def fit_tfidf(docs, ngram_order: int = 2, min_df: int = 1, norm: bool = True) -> TfidfModel:
    """Fit vocabulary and smoothed idf over tokenized documents.

    Vocabulary holds every n-gram of exactly ``ngram_order`` whose document
    frequency is at least ``min_df``; idf(t) = ln((1+N)/(1+df(t))) + 1.
    """
    docs = list(docs)
    if not docs or all(len(d) == 0 for d in docs):
        raise ValueError("tfidf requires at least one non-empty document")
    n_docs = len(docs)
    df: Counter = Counter()
    for doc in docs:
        df.update(set(ngrams(doc, ngram_order)))
    vocab_terms = sorted(t for t, c in df.items() if c >= min_df)
    vocabulary = {t: i for i, t in enumerate(vocab_terms)}
    idf = np.array(
        [np.log((1.0 + n_docs) / (1.0 + df[t])) + 1.0 for t in vocab_terms],
        dtype=np.float64,
    )
    return TfidfModel(ngram_order=int(ngram_order), vocabulary=vocabulary,
                      idf=idf, norm=bool(norm))


def apply_tfidf(model: TfidfModel, doc) -> sp.csr_matrix:
    """Featurize one tokenized document as a 1 x V sparse row.

    Entries are tf * idf; out-of-vocabulary n-grams are ignored; the row is
    L2-normalized when the model was fitted with norm on.
    """
    counts = Counter(ngrams(list(doc), model.ngram_order))
    cols, vals = [], []
    for term, tf in counts.items():
        idx = model.vocabulary.get(term)
        if idx is not None:
            cols.append(idx)
            vals.append(tf * model.idf[idx])
    row = sp.csr_matrix(
        (np.asarray(vals, dtype=np.float64), (np.zeros(len(cols), dtype=np.int64), cols)),
        shape=(1, model.size),
    )
    if model.norm:
        nrm = float(np.sqrt(row.multiply(row).sum()))
        if nrm > 0.0:
            row = row.multiply(1.0 / nrm).tocsr()
    return row


def transform_tfidf(model: TfidfModel, docs) -> sp.csr_matrix:
    """Stack apply_tfidf rows for a document sequence into an (n, V) matrix."""
    rows = [apply_tfidf(model, doc) for doc in docs]
    if not rows:
        return sp.csr_matrix((0, model.size))
    return sp.vstack(rows).tocsr()


@dataclass
class WordVectorTable:
    dimension: int
    entries: dict  # token -> (dimension,) float64 vector


def average_word_vectors(table: WordVectorTable, doc) -> tuple[np.ndarray, int]:
    """Mean of the vectors of in-table tokens.

    Returns (vector, matched_count); the vector is zero and the count 0 when
    no token is known, which callers should surface as a warning.
    """
    if not table.entries:
        raise ValueError("word-vector table is empty")
    hits = [table.entries[tok] for tok in doc if tok in table.entries]
    if not hits:
        return np.zeros(table.dimension), 0
    return np.mean(np.asarray(hits, dtype=np.float64), axis=0), len(hits)


@dataclass
class EmbeddingSet:
    """Ordered (id, vector) rows from one modality."""

    ids: tuple                 # distinct strings, one per row
    vectors: np.ndarray        # (n, d) float64, no NaN
    modality_tag: str = ""     # "text" or "image"

    def __post_init__(self):
        self.ids = tuple(str(i) for i in self.ids)
        if self.vectors.size:
            self.vectors = check_matrix(self.vectors, "embedding vectors")
        else:
            self.vectors = np.asarray(self.vectors, dtype=np.float64).reshape(
                0, self.vectors.shape[1] if self.vectors.ndim == 2 else 0)
        if len(self.ids) != self.vectors.shape[0]:
            raise ValueError(
                f"{len(self.ids)} ids but {self.vectors.shape[0]} vector rows")
        if len(set(self.ids)) != len(self.ids):
            raise ValueError("embedding ids are not distinct")

    @property
    def n(self) -> int:
        return self.vectors.shape[0]

    @property
    def dim(self) -> int:
        return self.vectors.shape[1]

    def columns(self) -> np.ndarray:
        """Column-per-sample view (d, n) used by the alignment solvers."""
        return self.vectors.T

    def index(self) -> dict:
        return {i: r for r, i in enumerate(self.ids)}

    def take(self, rows) -> "EmbeddingSet":
        rows = list(rows)
        return EmbeddingSet(ids=tuple(self.ids[r] for r in rows),
                            vectors=self.vectors[rows].copy(),
                            modality_tag=self.modality_tag)


@dataclass
class PairSet:
    """Supervision pairs (text_id, image_id), optionally with scores."""

    pairs: tuple = field(default_factory=tuple)   # of (text_id, image_id)
    scores: tuple | None = None                   # similarity per pair, if induced

    def __post_init__(self):
        self.pairs = tuple((str(a), str(b)) for a, b in self.pairs)
        if self.scores is not None:
            self.scores = tuple(float(s) for s in self.scores)
            if len(self.scores) != len(self.pairs):
                raise ValueError("scores length does not match pairs")

    def __len__(self) -> int:
        return len(self.pairs)

    @property
    def text_ids(self) -> tuple:
        return tuple(p[0] for p in self.pairs)

    @property
    def image_ids(self) -> tuple:
        return tuple(p[1] for p in self.pairs)

    def column_indices(self, text: EmbeddingSet, image: EmbeddingSet):
        """Resolve id pairs to (text rows, image rows) in the given sets."""
        ti, ii = text.index(), image.index()
        try:
            xs = np.array([ti[a] for a, _ in self.pairs], dtype=np.int64)
            ys = np.array([ii[b] for _, b in self.pairs], dtype=np.int64)
        except KeyError as exc:
            raise ValueError(f"pair id {exc.args[0]!r} not present in embeddings") from exc
        return xs, ys
