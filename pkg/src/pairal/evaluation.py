"""Recall@K in both retrieval directions plus the cross-epoch R@K-sum metric.

Recall values live in [0, 1] internally; R@K-sum is reported in percentage
points (x100) to line up with the usual table scale. The metrics CSV schema
is ``epoch,paired_fraction,direction,K,recall`` with direction naming the
retrieved modality ("text" = text retrieval from an image query).
"""

from __future__ import annotations

import io
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .corpus import Corpus, EmbeddingRecord, Modality
from .errors import KOutOfRange, MissingK, MissingOracleMatch, SchemaError
from .simkernel import cosine_matrix
from .trainer import DualEncoderParams, encode_matrix

DEFAULT_EVAL_KS = (1, 5, 10)


@dataclass(frozen=True)
class EpochMetrics:
    """Recall@K for both directions at one epoch of the annotation loop."""

    epoch: int
    r_at_k_text: dict[int, float]    # text retrieval (image query)
    r_at_k_image: dict[int, float]   # image retrieval (text query)
    paired_fraction: float

    def __post_init__(self) -> None:
        for table in (self.r_at_k_text, self.r_at_k_image):
            ks = sorted(table)
            for lo, hi in zip(ks, ks[1:]):
                if table[lo] > table[hi] + 1e-12:
                    raise SchemaError(f"recall not monotone in K: {table}")


def recall_at_k(model: DualEncoderParams, queries: Sequence[EmbeddingRecord],
                gallery: Sequence[EmbeddingRecord], oracle: Mapping[str, str],
                k: int) -> float:
    """Fraction of queries whose ground-truth match ranks within the top k.

    Ranking is by model cosine similarity, descending; equal similarities
    order lexicographically by gallery id so results are reproducible.
    """
    if not queries:
        raise SchemaError("recall_at_k: empty query set")
    if not 1 <= k <= len(gallery):
        raise KOutOfRange(f"K={k} outside [1, {len(gallery)}]")
    gallery_ids = [g.id for g in gallery]
    gallery_pos = {gid: i for i, gid in enumerate(gallery_ids)}
    for q in queries:
        match = oracle.get(q.id)
        if match is None or match not in gallery_pos:
            raise MissingOracleMatch(f"query {q.id!r} has no gallery match")

    q_mat = np.stack([q.vector for q in queries])
    g_mat = np.stack([g.vector for g in gallery])
    q_enc = encode_matrix(model, q_mat, queries[0].modality)
    g_enc = encode_matrix(model, g_mat, gallery[0].modality)
    sims = cosine_matrix(q_enc, g_enc, [q.id for q in queries], gallery_ids)

    id_arr = np.array(gallery_ids)
    hits = 0
    for qi, q in enumerate(queries):
        mi = gallery_pos[oracle[q.id]]
        row = sims[qi]
        s_match = row[mi]
        rank = 1 + int(np.count_nonzero(row > s_match))
        ties = (row == s_match) & (id_arr < id_arr[mi])
        rank += int(np.count_nonzero(ties))
        if rank <= k:
            hits += 1
    return hits / len(queries)


def r_at_k_sum(history: Sequence[EpochMetrics], k: int) -> float:
    """Sum of R@K over epochs and both directions, in percentage points."""
    if not history:
        raise SchemaError("r_at_k_sum: empty history")
    total = 0.0
    for m in history:
        if k not in m.r_at_k_text or k not in m.r_at_k_image:
            raise MissingK(f"epoch {m.epoch} lacks K={k}")
        total += m.r_at_k_text[k] + m.r_at_k_image[k]
    return total * 100.0


def evaluate_model(model: DualEncoderParams, corpus: Corpus,
                   test_image_ids: Sequence[str], epoch: int,
                   paired_fraction: float,
                   ks: Sequence[int] = DEFAULT_EVAL_KS) -> EpochMetrics:
    """Recall@K both ways on the held-out test pairs, for every feasible K."""
    images = [corpus.image_records[i] for i in test_image_ids]
    texts = [corpus.text_records[corpus.oracle[i]] for i in test_image_ids]
    img_to_txt = {i: corpus.oracle[i] for i in test_image_ids}
    txt_to_img = {t: i for i, t in img_to_txt.items()}
    usable_ks = [k for k in ks if k <= len(texts)]
    r_text = {k: recall_at_k(model, images, texts, img_to_txt, k) for k in usable_ks}
    r_image = {k: recall_at_k(model, texts, images, txt_to_img, k) for k in usable_ks}
    return EpochMetrics(epoch, r_text, r_image, paired_fraction)


def swap_directions(metrics: EpochMetrics) -> EpochMetrics:
    """Relabel directions for runs executed on the modality-swapped corpus."""
    return EpochMetrics(metrics.epoch, dict(metrics.r_at_k_image),
                        dict(metrics.r_at_k_text), metrics.paired_fraction)


def metrics_to_csv(history: Sequence[EpochMetrics]) -> str:
    """Render the metrics history in the export schema, stable byte-for-byte."""
    buf = io.StringIO()
    buf.write("epoch,paired_fraction,direction,K,recall\n")
    for m in history:
        for direction, table in (("text", m.r_at_k_text), ("image", m.r_at_k_image)):
            for k in sorted(table):
                buf.write(f"{m.epoch},{float(m.paired_fraction)!r},"
                          f"{direction},{k},{float(table[k])!r}\n")
    return buf.getvalue()


def write_metrics_csv(history: Sequence[EpochMetrics], path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(metrics_to_csv(history))
