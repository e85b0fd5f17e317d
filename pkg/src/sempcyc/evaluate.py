"""Ranking and retrieval metrics: mAP@all, Precision@K and interpolated PR curves."""
from __future__ import annotations

import json
import time
import warnings
from dataclasses import dataclass, field

import numpy as np

from .hashing import ItqModel, binarize, hamming_distances, pack_bits
from .network import ModelState, generator_forward

MODES = ("unseen_only", "seen_plus_unseen")
METRICS = ("euclidean", "hamming")
RECALL_GRID = np.linspace(0.0, 1.0, 11)


def rank_gallery(query: np.ndarray, gallery: np.ndarray, metric: str = "euclidean") -> np.ndarray:
    """Gallery indices by ascending distance; ties go to the lower index.

    For ``hamming`` both arguments are packed ``uint64`` codes (see
    :func:`sempcyc.hashing.pack_bits`).
    """
    return np.argsort(distances(query, gallery, metric), kind="stable")


def distances(query: np.ndarray, gallery: np.ndarray, metric: str) -> np.ndarray:
    if metric == "euclidean":
        if gallery.dtype == np.uint64 or query.dtype == np.uint64:
            raise TypeError("euclidean ranking needs real embeddings, got packed codes")
        if query.shape[-1] != gallery.shape[-1]:
            raise ValueError(f"dimension mismatch: {query.shape[-1]} vs {gallery.shape[-1]}")
        return ((gallery - query) ** 2).sum(axis=-1)
    if metric == "hamming":
        if gallery.dtype != np.uint64 or query.dtype != np.uint64:
            raise TypeError("hamming ranking needs packed uint64 codes")
        if query.shape[-1] != gallery.shape[-1]:
            raise ValueError("code widths differ")
        return hamming_distances(query, gallery)
    raise ValueError(f"unknown metric {metric!r}")


def average_precision(relevance) -> float:
    """AP over the full ranking: mean of precision@r at every relevant rank r."""
    rel = np.asarray(relevance, dtype=bool)
    n_rel = rel.sum()
    if n_rel == 0:
        warnings.warn("query has no relevant gallery item; AP defined as 0", stacklevel=2)
        return 0.0
    hits = np.cumsum(rel)
    ranks = np.flatnonzero(rel) + 1
    return float((hits[rel] / ranks).sum() / n_rel)


def precision_at_k(relevance, k: int = 100) -> float:
    rel = np.asarray(relevance, dtype=bool)
    top = min(k, len(rel))
    if top == 0:
        return 0.0
    return float(rel[:top].sum() / top)


def interpolated_precision(relevance, grid=RECALL_GRID) -> np.ndarray | None:
    """Precision at each recall level, taking the max precision at any recall at or above it.

    Returns ``None`` when the query has no relevant item.
    """
    rel = np.asarray(relevance, dtype=bool)
    n_rel = rel.sum()
    if n_rel == 0:
        return None
    hits = np.cumsum(rel)
    precision = hits / np.arange(1, len(rel) + 1)
    # running max from the tail gives max precision over recall >= r
    tail_max = np.maximum.accumulate(precision[::-1])[::-1]
    # compare hit counts, not float recalls (linspace gives 0.6000000000000001)
    need = np.ceil(np.asarray(grid) * n_rel - 1e-9)
    idx = np.searchsorted(hits, need, side="left")
    return tail_max[np.minimum(idx, len(rel) - 1)]


def pr_curve(relevances) -> list[tuple[float, float]]:
    """11-point interpolated PR curve averaged over queries with at least one relevant item."""
    curves = [c for c in (interpolated_precision(r) for r in relevances) if c is not None]
    if not curves:
        raise ValueError("no query has a relevant gallery item")
    mean = np.mean(curves, axis=0)
    return [(float(r), float(p)) for r, p in zip(RECALL_GRID, mean)]


@dataclass
class Gallery:
    embeddings: np.ndarray
    labels: np.ndarray
    mode: str = "unseen_only"
    modality: str = "image"

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"unknown gallery mode {self.mode!r}")
        if len(self.embeddings) != len(self.labels):
            raise ValueError("gallery embeddings and labels differ in length")


@dataclass
class RetrievalResult:
    ranked: np.ndarray  # n_queries x n_gallery
    relevance: np.ndarray  # same shape, bool, in ranked order
    ap: np.ndarray
    query_labels: np.ndarray
    k: int = 100
    mode: str = "unseen_only"
    metric: str = "euclidean"
    M: int = 0
    wall_time_per_query_s: float = 0.0
    pr: list = field(default_factory=list)

    @property
    def mAP(self) -> float:
        return float(self.ap.mean())

    @property
    def precision_at_k(self) -> float:
        return float(np.mean([precision_at_k(r, self.k) for r in self.relevance]))

    def per_class_mAP(self) -> dict[str, float]:
        return {str(c): float(self.ap[self.query_labels == c].mean())
                for c in np.unique(self.query_labels)}

    def metrics(self) -> dict:
        return {
            "mode": self.mode,
            "metric": self.metric,
            "M": self.M,
            "mAP_all": self.mAP,
            f"precision_at_{self.k}": self.precision_at_k,
            "per_class_mAP": self.per_class_mAP(),
            # ranking only, embedding time excluded
            "wall_time_per_query_s": self.wall_time_per_query_s,
        }

    def write_metrics(self, path, extra: dict | None = None) -> None:
        out = self.metrics()
        if extra:
            out.update(extra)
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(out, fh, indent=2, sort_keys=True)
            fh.write("\n")

    def write_pr(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write("recall,precision\n")
            for r, p in self.pr:
                fh.write(f"{r:.1f},{p!r}\n")

    def write_topk(self, path, k: int = 10, gallery_ids=None) -> None:
        """``query_index<TAB>query_label<TAB>id1 id2 ...`` per query."""
        with open(path, "w", encoding="utf-8") as fh:
            for q, row in enumerate(self.ranked):
                ids = row[:k] if gallery_ids is None else [gallery_ids[i] for i in row[:k]]
                fh.write(f"{q}\t{self.query_labels[q]}\t{' '.join(str(i) for i in ids)}\n")


def evaluate_embeddings(query_emb, query_labels, gallery: Gallery, metric: str = "euclidean",
                        k: int = 100, itq: ItqModel | None = None) -> RetrievalResult:
    """Rank the gallery for every query and score it by label equality."""
    if len(gallery.labels) == 0:
        raise ValueError("empty gallery")
    query_labels = np.asarray(query_labels)
    gallery_labels = np.asarray(gallery.labels)
    M = query_emb.shape[1]
    if metric == "hamming":
        if itq is None:
            raise ValueError("hamming ranking needs an ITQ model")
        Q = pack_bits(binarize(itq, query_emb))
        G = pack_bits(binarize(itq, gallery.embeddings))
    elif metric == "euclidean":
        Q, G = np.asarray(query_emb), np.asarray(gallery.embeddings)
    else:
        raise ValueError(f"unknown metric {metric!r}")

    t0 = time.perf_counter()
    ranked = np.stack([rank_gallery(q, G, metric) for q in Q])
    elapsed = time.perf_counter() - t0

    relevance = gallery_labels[ranked] == query_labels[:, None]
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        ap = np.array([average_precision(r) for r in relevance])
    if (relevance.sum(axis=1) == 0).any():
        warnings.warn("some queries have no relevant gallery item; their AP is 0", stacklevel=2)
    return RetrievalResult(
        ranked=ranked, relevance=relevance, ap=ap, query_labels=query_labels, k=k,
        mode=gallery.mode, metric=metric, M=M,
        wall_time_per_query_s=elapsed / max(len(Q), 1),
        pr=pr_curve(relevance),
    )


def embed(state: ModelState, features: np.ndarray, modality: str) -> np.ndarray:
    """Map features into the semantic space with the modality's generator."""
    gen = {"sketch": state.g_sk, "image": state.g_im}[modality]
    return generator_forward(gen, np.asarray(features, dtype=state.dtype))


def evaluate_model(state: ModelState, sketch_queries, image_gallery, mode: str = "unseen_only",
                   metric: str = "euclidean", itq: ItqModel | None = None,
                   k: int = 100) -> RetrievalResult:
    """Embed ``(features, labels)`` queries with G_sk and the gallery with G_im, then rank."""
    Xq, yq = sketch_queries
    Yg, yg = image_gallery
    gallery = Gallery(embed(state, Yg, "image"), np.asarray(yg), mode=mode)
    return evaluate_embeddings(embed(state, Xq, "sketch"), yq, gallery, metric, k, itq)
