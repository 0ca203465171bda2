"""CMC and mean-average-precision for cross-camera retrieval.

Per query, gallery entries sharing both its identity and its camera are
excluded; distances are ranked ascending with ties broken by gallery index
(stable sort).  A rank-k hit means a correct identity appears among the k
nearest remaining entries.  AP is the mean of precision-at-rank over the
relevant positions.  Queries with no valid cross-camera match are excluded
from both means and counted.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ContractError, DimensionError


@dataclass
class RankingMetrics:
    cmc: np.ndarray                # rank-k accuracies, k = 1..max_rank
    map: float
    per_query: list = field(default_factory=list)
    excluded_queries: int = 0

    def as_records(self) -> list[tuple[str, str, float]]:
        """(metric name, k, value) rows for structured output."""
        rows = [("cmc", str(k + 1), float(v)) for k, v in enumerate(self.cmc)]
        rows.append(("map", "-", float(self.map)))
        rows.append(("excluded_queries", "-", float(self.excluded_queries)))
        return rows


def _check_ranking_inputs(dist, query_ids, gallery_ids, query_cams, gallery_cams):
    dist = np.asarray(dist, dtype=np.float64)
    if dist.ndim != 2:
        raise DimensionError(f"distance matrix must be 2-d, got shape {dist.shape}")
    q, g = dist.shape
    if q < 1 or g < 1:
        raise ContractError("need at least one query and one gallery entry")
    arrays = [np.asarray(a) for a in (query_ids, gallery_ids, query_cams, gallery_cams)]
    if arrays[0].shape != (q,) or arrays[2].shape != (q,):
        raise DimensionError("query ids/cams must match the number of rows")
    if arrays[1].shape != (g,) or arrays[3].shape != (g,):
        raise DimensionError("gallery ids/cams must match the number of columns")
    return dist, arrays


def _ranked_matches(dist, query_ids, gallery_ids, query_cams, gallery_cams):
    """Per query: boolean match vector over the kept, rank-ordered gallery."""
    dist, (qid, gid, qcam, gcam) = _check_ranking_inputs(
        dist, query_ids, gallery_ids, query_cams, gallery_cams)
    out = []
    order = np.argsort(dist, axis=1, kind="stable")      # ties -> gallery index ascending
    for i in range(dist.shape[0]):
        ranked = order[i]
        keep = ~((gid[ranked] == qid[i]) & (gcam[ranked] == qcam[i]))
        matches = (gid[ranked] == qid[i])[keep]
        out.append(matches)
    return out


def compute_cmc(dist, query_ids, gallery_ids, query_cams, gallery_cams,
                max_rank: int) -> np.ndarray:
    """Rank-k accuracies for k = 1..max_rank (non-decreasing in k)."""
    if max_rank < 1:
        raise ContractError("max_rank must be >= 1")
    hits = np.zeros(max_rank, dtype=np.float64)
    valid = 0
    for matches in _ranked_matches(dist, query_ids, gallery_ids, query_cams, gallery_cams):
        if not matches.any():
            continue
        valid += 1
        first = int(np.argmax(matches))
        if first < max_rank:
            hits[first:] += 1.0
    if valid == 0:
        raise ContractError("no query has a valid cross-camera match")
    return hits / valid


def compute_map(dist, query_ids, gallery_ids, query_cams, gallery_cams) -> float:
    """Mean over queries of average precision of the ranked gallery list."""
    aps = average_precisions(dist, query_ids, gallery_ids, query_cams, gallery_cams)
    if not aps:
        raise ContractError("no query has a valid cross-camera match")
    return float(np.mean(aps))


def average_precisions(dist, query_ids, gallery_ids, query_cams, gallery_cams) -> list[float]:
    aps = []
    for matches in _ranked_matches(dist, query_ids, gallery_ids, query_cams, gallery_cams):
        n_rel = int(matches.sum())
        if n_rel == 0:
            continue
        ranks = np.nonzero(matches)[0] + 1           # 1-based ranks of the hits
        precisions = np.arange(1, n_rel + 1) / ranks
        aps.append(float(precisions.sum() / n_rel))
    return aps


def ranking_metrics(dist, query_ids, gallery_ids, query_cams, gallery_cams,
                    max_rank: int) -> RankingMetrics:
    matches = _ranked_matches(dist, query_ids, gallery_ids, query_cams, gallery_cams)
    hits = np.zeros(max_rank, dtype=np.float64)
    aps = []
    excluded = 0
    for m in matches:
        if not m.any():
            excluded += 1
            continue
        first = int(np.argmax(m))
        if first < max_rank:
            hits[first:] += 1.0
        n_rel = int(m.sum())
        ranks = np.nonzero(m)[0] + 1
        aps.append(float((np.arange(1, n_rel + 1) / ranks).sum() / n_rel))
    if not aps:
        raise ContractError("no query has a valid cross-camera match")
    return RankingMetrics(cmc=hits / len(aps), map=float(np.mean(aps)),
                          per_query=aps, excluded_queries=excluded)


def evenly_spaced_indices(length: int, count: int) -> np.ndarray:
    """Deterministic evaluation clip: `count` evenly spaced frame indices."""
    if length < 1 or count < 1:
        raise ContractError("length and count must be >= 1")
    return np.round(np.linspace(0, length - 1, count)).astype(np.int64)


def evaluate(model, dataset, clip_len: int, max_rank: int = 20) -> RankingMetrics:
    """Embed one evenly-spaced clip per query/gallery sequence and rank."""
    from .model import pairwise_distances     # avoid import cycle

    queries = dataset.of_split("query")
    gallery = dataset.of_split("gallery")
    if not queries or not gallery:
        raise ContractError("dataset needs both query and gallery splits")

    def clips_for(seqs):
        return np.stack([s.frames[evenly_spaced_indices(len(s.frames), clip_len)]
                         for s in seqs])

    q_emb = model.embed_clips(clips_for(queries))
    g_emb = model.embed_clips(clips_for(gallery))
    all_emb = np.concatenate([q_emb, g_emb], axis=0)
    dist = pairwise_distances(all_emb)[:len(queries), len(queries):]
    return ranking_metrics(
        dist,
        np.array([s.identity for s in queries]),
        np.array([s.identity for s in gallery]),
        np.array([s.camera for s in queries]),
        np.array([s.camera for s in gallery]),
        max_rank=max_rank,
    )
