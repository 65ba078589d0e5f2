"""Cross-domain retrieval in the joint space and ranking metrics.

Queries and candidates are compared by cosine similarity; rankings are
deterministic (ties broken by candidate index, ascending). Metrics:

    MRR     = mean over queries of 1 / rank of the first true counterpart
    nDCG@k  = DCG@k / IDCG@k with gain (2^rel - 1) / log2(position + 1)

Relevance for graded retrieval is the intersection-over-union of two items'
code label sets. Repeated-seed results aggregate to mean and a 95% normal
confidence interval.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .linalg import check_matrix, make_rng

DIRECTIONS = ("T->I", "I->T")


def cosine(u, v) -> float:
    """Cosine similarity in [-1, 1]; zero vectors compare as 0 with a warning."""
    u = np.asarray(u, dtype=np.float64).ravel()
    v = np.asarray(v, dtype=np.float64).ravel()
    nu, nv = float(np.linalg.norm(u)), float(np.linalg.norm(v))
    if nu == 0.0 or nv == 0.0:
        warnings.warn("cosine of a zero vector defined as 0")
        return 0.0
    return float(np.dot(u, v) / (nu * nv))


@dataclass
class RetrievalIndex:
    """Immutable candidate collection with precomputed norms."""

    ids: tuple
    vectors: np.ndarray        # (m, d)
    modality_tag: str = ""

    def __post_init__(self):
        self.ids = tuple(str(i) for i in self.ids)
        self.vectors = check_matrix(self.vectors, "index vectors")
        if len(self.ids) != self.vectors.shape[0]:
            raise ValueError("id count does not match vector rows")
        self.norms = np.linalg.norm(self.vectors, axis=1)
        self.zero_rows = self.norms == 0.0

    @property
    def size(self) -> int:
        return self.vectors.shape[0]


@dataclass
class RetrievalResult:
    query_id: str
    ranked: tuple              # of (candidate_id, score), scores non-increasing
    direction: str = "T->I"


def _scores_against(index: RetrievalIndex, query: np.ndarray) -> np.ndarray:
    qn = float(np.linalg.norm(query))
    if qn == 0.0:
        warnings.warn("retrieval query is a zero vector; all scores 0")
        return np.zeros(index.size)
    denom = np.where(index.zero_rows, 1.0, index.norms) * qn
    scores = (index.vectors @ query) / denom
    if np.any(index.zero_rows):
        scores = np.where(index.zero_rows, 0.0, scores)
    return scores


def rank_candidates(scores: np.ndarray) -> np.ndarray:
    """Candidate order by score descending, ties to the lower index."""
    return np.argsort(-scores, kind="stable")


def retrieve(query, index: RetrievalIndex, k: int | None = None,
             query_id: str = "", direction: str = "T->I") -> RetrievalResult:
    """Rank index candidates against one query vector by cosine similarity."""
    if index.size == 0:
        raise ValueError("retrieval index is empty")
    query = np.asarray(query, dtype=np.float64).ravel()
    scores = _scores_against(index, query)
    order = rank_candidates(scores)
    if k is not None:
        if k < 1:
            raise ValueError(f"k must be >= 1, got {k}")
        order = order[:k]
    ranked = tuple((index.ids[i], float(scores[i])) for i in order)
    return RetrievalResult(query_id=str(query_id), ranked=ranked, direction=direction)


def first_true_rank(result: RetrievalResult, true_ids) -> int | None:
    """1-based rank of the first true counterpart in a ranked list."""
    true_ids = set(true_ids)
    for pos, (cid, _) in enumerate(result.ranked, start=1):
        if cid in true_ids:
            return pos
    return None


def mrr(results, truth) -> float:
    """Mean reciprocal rank of the first true counterpart.

    truth maps query id to the set of true counterpart ids; queries whose
    counterparts never appear in their ranked list are excluded (counted and
    warned about), not scored zero.
    """
    rr, excluded = [], 0
    for res in results:
        true_ids = truth.get(res.query_id, set())
        rank = first_true_rank(res, true_ids)
        if rank is None:
            excluded += 1
            continue
        rr.append(1.0 / rank)
    if excluded:
        warnings.warn(f"{excluded} queries had no true counterpart in the index "
                      "and were excluded from MRR")
    if not rr:
        raise ValueError("no query had a true counterpart in the index")
    return float(np.mean(rr))


def iou_relevance(a, b) -> float:
    """Intersection-over-union of two non-empty code sets."""
    a, b = set(a), set(b)
    if not a or not b:
        raise ValueError("relevance requires non-empty code sets")
    return len(a & b) / len(a | b)


def dcg_at_k(rels, k: int) -> float:
    rels = np.asarray(list(rels), dtype=np.float64)[:k]
    if rels.size == 0:
        return 0.0
    positions = np.arange(1, rels.size + 1)
    return float(np.sum((np.exp2(rels) - 1.0) / np.log2(positions + 1.0)))


def ndcg_at_k(ranked_rels, k: int) -> float:
    """Normalized DCG of a ranked relevance list against its ideal ordering.

    ranked_rels holds the relevance of every candidate in retrieved order;
    the ideal ordering sorts the same relevances descending. Returns 0 when
    the ideal DCG is 0 (no relevant candidates at all).
    """
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    rels = np.asarray(list(ranked_rels), dtype=np.float64)
    if np.any((rels < 0) | (rels > 1)):
        raise ValueError("relevances must lie in [0, 1]")
    ideal = np.sort(rels)[::-1]
    idcg = dcg_at_k(ideal, k)
    if idcg == 0.0:
        return 0.0
    return dcg_at_k(rels, k) / idcg


@dataclass
class MetricReport:
    metric: str
    per_seed: tuple
    mean: float
    ci95_halfwidth: float
    k: int | None = None
    direction: str = ""


def aggregate_ci(values, metric: str = "", k: int | None = None,
                 direction: str = "") -> MetricReport:
    """Mean and 1.96 * s / sqrt(n) halfwidth over per-seed metric values."""
    values = tuple(float(v) for v in values)
    if not values:
        raise ValueError("cannot aggregate zero values")
    mean = float(np.mean(values))
    if len(values) == 1:
        warnings.warn("confidence interval over a single value has halfwidth 0")
        half = 0.0
    elif all(v == values[0] for v in values):
        half = 0.0
    else:
        half = float(1.96 * np.std(values, ddof=1) / np.sqrt(len(values)))
    return MetricReport(metric=metric, per_seed=values, mean=mean,
                        ci95_halfwidth=half, k=k, direction=direction)


def chance_mrr(n_candidates: int, n_queries: int, seeds,
               direction: str = "") -> MetricReport:
    """Monte-Carlo MRR under uniformly random rankings.

    Under a uniformly random ranking the true pair's rank is uniform on
    1..N, so each query draws its rank directly. The analytic expectation is
    H_N / N (harmonic number over candidate count).
    """
    if n_candidates < 1 or n_queries < 1:
        raise ValueError("population and query counts must be >= 1")
    per_seed = []
    for seed in seeds:
        rng = make_rng(seed)
        ranks = rng.integers(1, n_candidates + 1, size=n_queries)
        per_seed.append(float(np.mean(1.0 / ranks)))
    return aggregate_ci(per_seed, metric="mrr-chance", direction=direction)


def harmonic_number(n: int) -> float:
    return float(np.sum(1.0 / np.arange(1, n + 1)))


def chance_ndcg(labels, candidate_ids, query_ids, k: int, n_queries: int,
                seeds, direction: str = "") -> MetricReport:
    """Monte-Carlo nDCG@k under uniformly random rankings of a labeled pool."""
    candidate_ids = list(candidate_ids)
    query_ids = list(query_ids)
    if not candidate_ids or not query_ids:
        raise ValueError("population must be non-empty")
    rels_cache: dict[str, np.ndarray] = {}

    def rels_for(q):
        if q not in rels_cache:
            rels_cache[q] = np.array(
                [iou_relevance(labels[q], labels[c]) for c in candidate_ids])
        return rels_cache[q]

    per_seed = []
    for seed in seeds:
        rng = make_rng(seed)
        vals = []
        for _ in range(n_queries):
            q = query_ids[int(rng.integers(0, len(query_ids)))]
            rels = rels_for(q)
            vals.append(ndcg_at_k(rels[rng.permutation(len(candidate_ids))], k))
        per_seed.append(float(np.mean(vals)))
    return aggregate_ci(per_seed, metric="ndcg-chance", k=k, direction=direction)


def chance_baseline(metric: str, population, seeds, k: int | None = None,
                    n_queries: int = 100_000) -> MetricReport:
    """Dispatch chance estimation by metric name.

    For "mrr" the population is the candidate count; for "ndcg" it is a
    (labels, candidate_ids, query_ids) triple and k is required.
    """
    if metric == "mrr":
        return chance_mrr(int(population), n_queries, seeds)
    if metric == "ndcg":
        labels, candidate_ids, query_ids = population
        if k is None:
            raise ValueError("ndcg chance requires k")
        return chance_ndcg(labels, candidate_ids, query_ids, k, n_queries, seeds)
    raise ValueError(f"no chance baseline for metric {metric!r}")
