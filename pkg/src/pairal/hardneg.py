"""Hard-negative driven selection: per-text thresholds, hard-negativeness
scores, and top-b selection from the unpaired pool.

An unpaired image x is a hard negative for a paired text t when their
similarity strictly exceeds a per-text threshold xi built from similarities
among the already-paired items. Thresholds come in four families: the
candidate set is either every other paired image (full batch) or one shared
random subset of it (mini batch), and the cutoff is the k-th largest
candidate similarity. Each pool item's score sums, over texts whose
condition it satisfies, either a constant weight of one (count) or the
similarity surplus above the threshold (surplus).
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np

from .corpus import Corpus, Modality, PairedSet, UnpairedPool
from .errors import (KExceedsCandidates, MissingThreshold, SchemaError,
                     TooFewPairs)
from .simkernel import cosine_matrix
from .trainer import DualEncoderParams, encode_matrix

# Reference scale for the default mini-batch subset size: 2560 candidates
# out of a 29000-pair training set; smaller corpora scale down
# proportionally.
ZS_REFERENCE = 2560
PAIRS_REFERENCE = 29000


class BatchMode(enum.Enum):
    FULL = "full"
    MINI = "mini"


class WeightMode(enum.Enum):
    SURPLUS = "surplus"
    COUNT = "count"


@dataclass(frozen=True)
class HardNegConfig:
    """Threshold design (batch mode, top-k rank), weight mode, and sampling seed."""

    batch_mode: BatchMode = BatchMode.FULL
    zs_size: int | None = None          # mini-batch subset size |Z_s|
    k: int = 1
    weight_mode: WeightMode = WeightMode.SURPLUS
    seed: int = 0

    def __post_init__(self) -> None:
        if self.k < 1:
            raise SchemaError("k must be >= 1")
        if self.batch_mode is BatchMode.MINI:
            if self.zs_size is None or self.zs_size < 1:
                raise SchemaError("mini-batch mode needs zs_size >= 1")
        elif self.zs_size is not None:
            raise SchemaError("zs_size only applies to mini-batch mode")


def default_zs_size(n_pairs: int) -> int:
    """Reference subset size, shrunk proportionally for smaller corpora."""
    if n_pairs >= PAIRS_REFERENCE:
        return ZS_REFERENCE
    return max(1, round(ZS_REFERENCE * n_pairs / PAIRS_REFERENCE))


@dataclass(frozen=True)
class ThresholdVector:
    """Per-text hard-negative cutoffs.

    per_text covers every paired text that received a threshold; zs_used
    records the mini-batch image draw and ts_used the texts paired with it
    (both None in full-batch mode); dropped lists texts whose candidate set
    was smaller than k and are therefore excluded from scoring.
    """

    per_text: dict[str, float]
    zs_used: tuple[str, ...] | None = None
    ts_used: tuple[str, ...] | None = None
    dropped: tuple[str, ...] = ()

    def __post_init__(self) -> None:
        if not all(np.isfinite(v) for v in self.per_text.values()):
            raise SchemaError("non-finite threshold entry")


@dataclass(frozen=True)
class ScoreReport:
    """Hard-negativeness score per pool item, plus the hard-negative ratio
    (fraction of the pool scoring strictly above zero)."""

    per_image: dict[str, float]
    hard_negative_ratio: float


@dataclass(frozen=True)
class SelectionResult:
    """Top-b pool ids in descending score order, with the scores that ranked them."""

    selected: tuple[str, ...]
    scores: ScoreReport = field(default_factory=lambda: ScoreReport({}, 0.0))


def _encoded_paired(paired: PairedSet, model: DualEncoderParams,
                    corpus: Corpus) -> tuple[np.ndarray, np.ndarray]:
    z_raw = np.stack([corpus.image_records[i].vector for i in paired.image_ids()])
    t_raw = np.stack([corpus.text_records[j].vector for j in paired.text_ids()])
    return (encode_matrix(model, z_raw, Modality.IMAGE),
            encode_matrix(model, t_raw, Modality.TEXT))


def compute_thresholds(paired: PairedSet, model: DualEncoderParams,
                       corpus: Corpus, config: HardNegConfig) -> ThresholdVector:
    """Per-text thresholds over model-encoded similarities among paired items.

    Full batch: for text j, the k-th largest similarity s(z_l, t_j) over all
    other paired images l != j. Mini batch: one shared subset of zs_size
    paired images is drawn without replacement (seeded); each text excludes
    its own image from the candidates. A text whose candidate set ends up
    smaller than k is dropped rather than scored. zs_size larger than the
    paired set is clamped to it, which makes mini batch degrade gracefully
    into full batch.
    """
    n = len(paired)
    if n < 2:
        raise TooFewPairs(f"need >= 2 pairs to form candidate sets, got {n}")
    z_enc, t_enc = _encoded_paired(paired, model, corpus)
    text_ids = paired.text_ids()
    sims = cosine_matrix(z_enc, t_enc, paired.image_ids(), text_ids)

    if config.batch_mode is BatchMode.FULL:
        if n - 1 < config.k:
            raise KExceedsCandidates(f"k={config.k} > {n - 1} full-batch candidates")
        masked = sims.copy()
        np.fill_diagonal(masked, -np.inf)
        # one -inf per column, so the k-th largest finite value sits at
        # ascending position n-k in every column
        xi = np.partition(masked, n - config.k, axis=0)[n - config.k]
        per_text = {text_ids[j]: float(xi[j]) for j in range(n)}
        return ThresholdVector(per_text, zs_used=None, dropped=())

    zs_size = min(config.zs_size, n)  # type: ignore[arg-type]  (validated in config)
    if zs_size < config.k:
        raise KExceedsCandidates(f"k={config.k} > zs_size {zs_size}")
    rng = np.random.default_rng(config.seed)
    drawn = np.sort(rng.choice(n, size=zs_size, replace=False))
    zs_used = tuple(paired.image_ids()[p] for p in drawn)
    ts_used = tuple(text_ids[p] for p in drawn)

    sub = sims[drawn, :].copy()
    in_zs = np.zeros(n, dtype=bool)
    in_zs[drawn] = True
    # each drawn image masks its own text's column
    sub[np.arange(zs_size), drawn] = -np.inf

    per_text: dict[str, float] = {}
    dropped: list[str] = []
    keep = (zs_size - in_zs.astype(int)) >= config.k
    xi = np.partition(sub, zs_size - config.k, axis=0)[zs_size - config.k]
    for j in range(n):
        if keep[j]:
            per_text[text_ids[j]] = float(xi[j])
        else:
            dropped.append(text_ids[j])
    if not per_text:
        raise KExceedsCandidates(
            f"k={config.k} leaves no text with a large enough candidate set")
    return ThresholdVector(per_text, zs_used=zs_used, ts_used=ts_used,
                           dropped=tuple(dropped))


def aggregation_weight(s_ij: float, xi_j: float, mode: WeightMode) -> float:
    """Weight of one (image, text) hard-negative hit."""
    if not (np.isfinite(s_ij) and np.isfinite(xi_j)):
        raise SchemaError("aggregation_weight: non-finite input")
    if mode is WeightMode.SURPLUS:
        return max(s_ij - xi_j, 0.0)
    return 1.0


def _scored_text_ids(thresholds: ThresholdVector) -> list[str]:
    if thresholds.ts_used is None:
        return list(thresholds.per_text)
    dropped = set(thresholds.dropped)
    scored = []
    for txt in thresholds.ts_used:
        if txt in dropped:
            continue
        if txt not in thresholds.per_text:
            raise MissingThreshold(f"scored text {txt!r} has no threshold entry")
        scored.append(txt)
    return scored


def score_pool(pool: UnpairedPool, thresholds: ThresholdVector,
               model: DualEncoderParams, corpus: Corpus,
               config: HardNegConfig) -> ScoreReport:
    """Hard-negativeness score for every pool item.

    h_i sums, over scored texts whose threshold the item strictly exceeds,
    the configured aggregation weight. In mini-batch mode only the texts
    paired with the drawn subset are scored. The report also carries the
    fraction of pool items with h_i > 0.
    """
    scored_texts = _scored_text_ids(thresholds)
    if not len(pool):
        return ScoreReport({}, 0.0)
    if not scored_texts:
        return ScoreReport({i: 0.0 for i in pool.ids}, 0.0)

    x_raw = np.stack([corpus.image_records[i].vector for i in pool.ids])
    x_enc = encode_matrix(model, x_raw, Modality.IMAGE)
    t_raw = np.stack([corpus.text_records[t].vector for t in scored_texts])
    t_enc = encode_matrix(model, t_raw, Modality.TEXT)
    sims = cosine_matrix(x_enc, t_enc, pool.ids, scored_texts)

    xi = np.array([thresholds.per_text[t] for t in scored_texts])
    hits = sims > xi[None, :]
    if config.weight_mode is WeightMode.SURPLUS:
        h = np.where(hits, np.maximum(sims - xi[None, :], 0.0), 0.0).sum(axis=1)
    else:
        h = hits.sum(axis=1).astype(np.float64)
    per_image = {pid: float(h[i]) for i, pid in enumerate(pool.ids)}
    ratio = float(np.count_nonzero(h > 0.0)) / len(pool)
    return ScoreReport(per_image, ratio)


def select(pool: UnpairedPool, b: int, scores: ScoreReport) -> SelectionResult:
    """The min(b, |pool|) highest-scoring ids, descending; ties break by id."""
    if b < 1:
        raise SchemaError("b must be >= 1")
    ranked = sorted(pool.ids, key=lambda pid: (-scores.per_image[pid], pid))
    return SelectionResult(tuple(ranked[:min(b, len(ranked))]), scores)


# -- JSON-facing views --------------------------------------------------------

def score_report_to_dict(report: ScoreReport) -> dict:
    return {
        "per_image": {k: float(v) for k, v in report.per_image.items()},
        "hard_negative_ratio": float(report.hard_negative_ratio),
    }


def selection_to_dict(result: SelectionResult) -> dict:
    return {
        "selected": list(result.selected),
        "scores": {k: float(result.scores.per_image[k]) for k in result.selected},
        "hard_negative_ratio": float(result.scores.hard_negative_ratio),
    }
