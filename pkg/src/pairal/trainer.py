"""Desk-scale retrieval model: two linear projections into a shared space,
trained with the max-of-hinges triplet ranking loss.

For a batch where row i of the similarity matrix pairs with column i, the
per-pair loss is

    [alpha + max_{j != i} s(i, j) - s(i, i)]_+        (hardest negative text)
  + [alpha + max_{j != i} s(j, i) - s(i, i)]_+        (hardest negative image)

averaged over the batch so the learning rate is batch-size independent.
Training is plain mini-batch SGD with a single 10x learning-rate drop, and
every call re-initializes from the config seed (scratch retraining).
"""

from __future__ import annotations

import base64
import json
from dataclasses import dataclass

import numpy as np

from .corpus import Corpus, EmbeddingRecord, Modality, PairedSet
from .errors import (BatchTooSmall, DimensionMismatch, NonFiniteLoss,
                     SchemaError, TooFewPairs, VersionMismatch)
from .simkernel import SimilarityMatrix, cosine_matrix, normalize_rows

DEFAULT_MARGIN = 0.2  # ranking-loss margin


@dataclass(frozen=True)
class DualEncoderParams:
    """Two linear projections mapping raw image/text vectors into a shared space."""

    w_img: np.ndarray
    w_txt: np.ndarray
    embed_dim: int

    def __post_init__(self) -> None:
        w_img = np.asarray(self.w_img, dtype=np.float64)
        w_txt = np.asarray(self.w_txt, dtype=np.float64)
        object.__setattr__(self, "w_img", w_img)
        object.__setattr__(self, "w_txt", w_txt)
        if w_img.ndim != 2 or w_txt.ndim != 2:
            raise DimensionMismatch("projection matrices must be 2-D")
        if w_img.shape[1] != self.embed_dim or w_txt.shape[1] != self.embed_dim:
            raise DimensionMismatch(
                f"projections map to {w_img.shape[1]}/{w_txt.shape[1]}, "
                f"declared embed_dim {self.embed_dim}")
        if not (np.all(np.isfinite(w_img)) and np.all(np.isfinite(w_txt))):
            raise NonFiniteLoss("non-finite entries in model parameters")

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, DualEncoderParams):
            return NotImplemented
        return (self.embed_dim == other.embed_dim
                and np.array_equal(self.w_img, other.w_img)
                and np.array_equal(self.w_txt, other.w_txt))


@dataclass(frozen=True)
class TrainConfig:
    alpha: float = DEFAULT_MARGIN
    epochs: int = 50
    batch_size: int = 600
    learning_rate: float = 2.0
    lr_decay_epoch: int = 35
    seed: int = 0

    def __post_init__(self) -> None:
        if self.alpha <= 0:
            raise SchemaError("alpha must be positive")
        if self.epochs < 0:
            raise SchemaError("epochs must be nonnegative")
        if self.batch_size < 2:
            raise SchemaError("batch_size must be >= 2 (the loss needs a negative)")
        if self.learning_rate <= 0 or self.lr_decay_epoch < 1:
            raise SchemaError("learning_rate must be positive, lr_decay_epoch >= 1")


def init_params(image_dim: int, text_dim: int, embed_dim: int, seed: int) -> DualEncoderParams:
    """Seeded uniform init in [-1/sqrt(fan_in), +1/sqrt(fan_in)] per matrix."""
    rng = np.random.default_rng(seed)
    bi = 1.0 / np.sqrt(image_dim)
    bt = 1.0 / np.sqrt(text_dim)
    w_img = rng.uniform(-bi, bi, size=(image_dim, embed_dim))
    w_txt = rng.uniform(-bt, bt, size=(text_dim, embed_dim))
    return DualEncoderParams(w_img, w_txt, embed_dim)


def encode(model: DualEncoderParams, record: EmbeddingRecord) -> np.ndarray:
    """Project one record into the shared space by its modality's matrix."""
    w = model.w_img if record.modality is Modality.IMAGE else model.w_txt
    if record.vector.shape[0] != w.shape[0]:
        raise DimensionMismatch(
            f"record {record.id!r} has dim {record.vector.shape[0]}, "
            f"projection expects {w.shape[0]}")
    return record.vector @ w


def encode_matrix(model: DualEncoderParams, mat: np.ndarray, modality: Modality) -> np.ndarray:
    w = model.w_img if modality is Modality.IMAGE else model.w_txt
    mat = np.asarray(mat, dtype=np.float64)
    if mat.shape[1] != w.shape[0]:
        raise DimensionMismatch(f"batch dim {mat.shape[1]} != projection input {w.shape[0]}")
    return mat @ w


def max_hinge_loss(sim: SimilarityMatrix, alpha: float) -> float:
    """Mean max-of-hinges loss over a batch whose diagonal holds the positives."""
    values = sim.values
    n = values.shape[0]
    if values.shape[0] != values.shape[1] or n < 2:
        raise BatchTooSmall(f"need a square batch of size >= 2, got {values.shape}")
    return float(_loss_from_sims(values, alpha)[0])


def _loss_from_sims(s: np.ndarray, alpha: float) -> tuple[float, np.ndarray]:
    """Loss and its gradient w.r.t. the similarity matrix.

    Subgradient conventions: a hinge exactly at zero is inactive; argmax ties
    resolve to the lowest batch index (np.argmax order).
    """
    n = s.shape[0]
    pos = np.diag(s)
    masked = s.copy()
    np.fill_diagonal(masked, -np.inf)
    hard_txt = np.argmax(masked, axis=1)     # per image i: hardest negative text
    hard_img = np.argmax(masked, axis=0)     # per text j: hardest negative image
    term_txt = alpha + masked[np.arange(n), hard_txt] - pos
    term_img = alpha + masked[hard_img, np.arange(n)] - pos
    loss = (np.maximum(term_txt, 0.0).sum() + np.maximum(term_img, 0.0).sum()) / n

    grad = np.zeros_like(s)
    inv_n = 1.0 / n
    active_t = term_txt > 0.0
    active_i = term_img > 0.0
    idx = np.arange(n)
    np.add.at(grad, (idx[active_t], hard_txt[active_t]), inv_n)
    np.add.at(grad, (hard_img[active_i], idx[active_i]), inv_n)
    np.subtract.at(grad, (idx[active_t], idx[active_t]), inv_n)
    np.subtract.at(grad, (idx[active_i], idx[active_i]), inv_n)
    return float(loss), grad


def batch_loss_and_grad(model: DualEncoderParams, x_batch: np.ndarray,
                        t_batch: np.ndarray, alpha: float
                        ) -> tuple[float, np.ndarray, np.ndarray]:
    """Loss plus analytic gradients w.r.t. both projection matrices.

    The gradient flows through the cosine normalization:
    d cos(u, v)/du = (v_hat - cos * u_hat) / |u|.
    """
    n = x_batch.shape[0]
    if n < 2 or t_batch.shape[0] != n:
        raise BatchTooSmall(f"batch of {n} images / {t_batch.shape[0]} texts")
    u = encode_matrix(model, x_batch, Modality.IMAGE)
    v = encode_matrix(model, t_batch, Modality.TEXT)
    nu = np.linalg.norm(u, axis=1)
    nv = np.linalg.norm(v, axis=1)
    u_hat = normalize_rows(u)
    v_hat = normalize_rows(v)
    s = u_hat @ v_hat.T

    loss, g_s = _loss_from_sims(s, alpha)
    g_u = (g_s @ v_hat - (g_s * s).sum(axis=1, keepdims=True) * u_hat) / nu[:, None]
    g_v = (g_s.T @ u_hat - (g_s * s).sum(axis=0)[:, None] * v_hat) / nv[:, None]
    g_w_img = x_batch.T @ g_u
    g_w_txt = t_batch.T @ g_v
    return loss, g_w_img, g_w_txt


def _paired_matrices(paired: PairedSet, corpus: Corpus) -> tuple[np.ndarray, np.ndarray]:
    x = np.stack([corpus.image_records[i].vector for i in paired.image_ids()])
    t = np.stack([corpus.text_records[j].vector for j in paired.text_ids()])
    return x, t


def evaluate_loss(model: DualEncoderParams, paired: PairedSet, corpus: Corpus,
                  alpha: float = DEFAULT_MARGIN) -> float:
    """Full-set max-of-hinges loss (one batch spanning the whole paired set)."""
    x, t = _paired_matrices(paired, corpus)
    if x.shape[0] < 2:
        raise TooFewPairs("loss needs at least two pairs")
    u = encode_matrix(model, x, Modality.IMAGE)
    v = encode_matrix(model, t, Modality.TEXT)
    return float(_loss_from_sims(cosine_matrix(u, v), alpha)[0])


def train(initial: DualEncoderParams, paired: PairedSet, corpus: Corpus,
          config: TrainConfig) -> DualEncoderParams:
    """Scratch-retrain on the paired set; deterministic given config.seed.

    `initial` fixes the architecture (input dims and embed_dim); weights are
    re-drawn from the seed every call so the result never depends on earlier
    epochs' parameters. The learning rate drops 10x at lr_decay_epoch. Batches
    are consecutive slices of a fresh shuffle each epoch; a trailing singleton
    is dropped because the loss needs an in-batch negative.
    """
    if initial.w_img.shape[0] != corpus.dims[0] or initial.w_txt.shape[0] != corpus.dims[1]:
        raise DimensionMismatch(
            f"model dims {initial.w_img.shape[0]}x{initial.w_txt.shape[0]} "
            f"do not match corpus dims {corpus.dims}")
    if len(paired) < config.batch_size:
        raise TooFewPairs(
            f"{len(paired)} pairs < batch_size {config.batch_size}")

    rng = np.random.default_rng(config.seed)
    bi = 1.0 / np.sqrt(corpus.dims[0])
    bt = 1.0 / np.sqrt(corpus.dims[1])
    w_img = rng.uniform(-bi, bi, size=(corpus.dims[0], initial.embed_dim))
    w_txt = rng.uniform(-bt, bt, size=(corpus.dims[1], initial.embed_dim))

    x_all, t_all = _paired_matrices(paired, corpus)
    n = x_all.shape[0]
    for epoch in range(config.epochs):
        lr = config.learning_rate * (0.1 if epoch >= config.lr_decay_epoch else 1.0)
        perm = rng.permutation(n)
        for start in range(0, n, config.batch_size):
            batch = perm[start:start + config.batch_size]
            if batch.size < 2:
                continue
            model = DualEncoderParams(w_img, w_txt, initial.embed_dim)
            loss, g_img, g_txt = batch_loss_and_grad(
                model, x_all[batch], t_all[batch], config.alpha)
            if not np.isfinite(loss):
                raise NonFiniteLoss(f"loss diverged at epoch {epoch}")
            w_img = w_img - lr * g_img
            w_txt = w_txt - lr * g_txt
    return DualEncoderParams(w_img, w_txt, initial.embed_dim)


# -- checkpoint payload -------------------------------------------------------

MODEL_FORMAT_VERSION = 1


def _encode_matrix_b64(mat: np.ndarray) -> str:
    return base64.b64encode(np.ascontiguousarray(mat, dtype="<f8").tobytes()).decode("ascii")


def _decode_matrix_b64(payload: str, shape: tuple[int, int]) -> np.ndarray:
    raw = base64.b64decode(payload.encode("ascii"))
    expected = shape[0] * shape[1] * 8
    if len(raw) != expected:
        raise VersionMismatch(f"matrix payload holds {len(raw)} bytes, expected {expected}")
    return np.frombuffer(raw, dtype="<f8").astype(np.float64).reshape(shape)


def model_to_dict(model: DualEncoderParams) -> dict:
    return {
        "version": MODEL_FORMAT_VERSION,
        "embed_dim": model.embed_dim,
        "image_dim": int(model.w_img.shape[0]),
        "text_dim": int(model.w_txt.shape[0]),
        "w_img": _encode_matrix_b64(model.w_img),
        "w_txt": _encode_matrix_b64(model.w_txt),
    }


def model_from_dict(obj: dict) -> DualEncoderParams:
    if obj.get("version") != MODEL_FORMAT_VERSION:
        raise VersionMismatch(f"unsupported model version {obj.get('version')!r}")
    embed_dim = int(obj["embed_dim"])
    w_img = _decode_matrix_b64(obj["w_img"], (int(obj["image_dim"]), embed_dim))
    w_txt = _decode_matrix_b64(obj["w_txt"], (int(obj["text_dim"]), embed_dim))
    return DualEncoderParams(w_img, w_txt, embed_dim)


def save_model(model: DualEncoderParams, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(model_to_dict(model), fh)


def load_model(path) -> DualEncoderParams:
    with open(path, "r", encoding="utf-8") as fh:
        return model_from_dict(json.load(fh))
