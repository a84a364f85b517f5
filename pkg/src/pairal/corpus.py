"""Corpus ingestion, synthesis, validation, and persistence.

A corpus couples image and text embedding records with a ground-truth
bijection between them (the annotation oracle). File formats:

* embeddings: JSON Lines, first line ``{"image_dim": D_i, "text_dim": D_t}``,
  then one ``{"id", "modality", "vector"}`` object per line;
* pairs: CSV with header ``image_id,text_id``.
"""

from __future__ import annotations

import csv
import enum
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping

import numpy as np

from .errors import DanglingPair, ParseError, SchemaError, TooFewPairs


class Modality(enum.Enum):
    IMAGE = "image"
    TEXT = "text"


@dataclass(frozen=True)
class EmbeddingRecord:
    """One image or text item: opaque id, modality, raw feature vector."""

    id: str
    modality: Modality
    vector: np.ndarray

    def __post_init__(self) -> None:
        vec = np.asarray(self.vector, dtype=np.float64)
        object.__setattr__(self, "vector", vec)
        if vec.ndim != 1:
            raise SchemaError(f"record {self.id!r}: vector must be 1-D")
        if not np.all(np.isfinite(vec)):
            raise SchemaError(f"record {self.id!r}: non-finite vector entry")

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, EmbeddingRecord):
            return NotImplemented
        return (self.id == other.id and self.modality == other.modality
                and np.array_equal(self.vector, other.vector))

    def __hash__(self) -> int:
        return hash((self.id, self.modality))


@dataclass(frozen=True)
class Corpus:
    """Immutable embedding corpus with a ground-truth image<->text bijection.

    ``oracle`` maps image id -> text id; the inverse view is precomputed.
    Records outside the oracle are tolerated (the live annotation path adds
    caption records with no ground truth), but ingest enforces a complete
    bijection over everything it reads.
    """

    image_records: Mapping[str, EmbeddingRecord]
    text_records: Mapping[str, EmbeddingRecord]
    oracle: Mapping[str, str]
    dims: tuple[int, int]
    oracle_inverse: Mapping[str, str] = field(default=None, repr=False)  # type: ignore[assignment]

    def __post_init__(self) -> None:
        image_dim, text_dim = self.dims
        for rec in self.image_records.values():
            if rec.modality is not Modality.IMAGE:
                raise SchemaError(f"{rec.id!r} filed under images but marked {rec.modality.value}")
            if rec.vector.shape[0] != image_dim:
                raise SchemaError(
                    f"record {rec.id!r}: dimension {rec.vector.shape[0]} != declared {image_dim}")
        for rec in self.text_records.values():
            if rec.modality is not Modality.TEXT:
                raise SchemaError(f"{rec.id!r} filed under texts but marked {rec.modality.value}")
            if rec.vector.shape[0] != text_dim:
                raise SchemaError(
                    f"record {rec.id!r}: dimension {rec.vector.shape[0]} != declared {text_dim}")
        inverse: dict[str, str] = {}
        for img, txt in self.oracle.items():
            if img not in self.image_records:
                raise DanglingPair(f"pair references unknown image id {img!r}")
            if txt not in self.text_records:
                raise DanglingPair(f"pair references unknown text id {txt!r}")
            if txt in inverse:
                raise SchemaError(f"text id {txt!r} paired with more than one image")
            inverse[txt] = img
        object.__setattr__(self, "oracle_inverse", inverse)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Corpus):
            return NotImplemented
        return (self.dims == other.dims
                and dict(self.oracle) == dict(other.oracle)
                and dict(self.image_records) == dict(other.image_records)
                and dict(self.text_records) == dict(other.text_records))

    @property
    def n_pairs(self) -> int:
        return len(self.oracle)

    def record(self, item_id: str) -> EmbeddingRecord:
        rec = self.image_records.get(item_id) or self.text_records.get(item_id)
        if rec is None:
            raise DanglingPair(f"unknown id {item_id!r}")
        return rec

    def swapped(self) -> "Corpus":
        """The reverse-direction view: texts play the image role and vice versa."""
        def reflag(rec: EmbeddingRecord, modality: Modality) -> EmbeddingRecord:
            return EmbeddingRecord(rec.id, modality, rec.vector)

        return Corpus(
            image_records={i: reflag(r, Modality.IMAGE) for i, r in self.text_records.items()},
            text_records={i: reflag(r, Modality.TEXT) for i, r in self.image_records.items()},
            oracle={t: i for i, t in self.oracle.items()},
            dims=(self.dims[1], self.dims[0]),
        )

    def with_text_record(self, record: EmbeddingRecord) -> "Corpus":
        """Extended corpus carrying one extra text record (no oracle entry)."""
        if record.id in self.text_records:
            raise SchemaError(f"text id {record.id!r} already exists")
        texts = dict(self.text_records)
        texts[record.id] = record
        return Corpus(self.image_records, texts, self.oracle, self.dims)


@dataclass(frozen=True)
class PairedSet:
    """Accumulated relevant (image_id, text_id) pairs; the training set."""

    pairs: tuple[tuple[str, str], ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "pairs", tuple((str(a), str(b)) for a, b in self.pairs))
        images = [a for a, _ in self.pairs]
        texts = [b for _, b in self.pairs]
        if len(set(images)) != len(images):
            raise SchemaError("duplicate image id in paired set")
        if len(set(texts)) != len(texts):
            raise SchemaError("duplicate text id in paired set")

    def __len__(self) -> int:
        return len(self.pairs)

    def image_ids(self) -> tuple[str, ...]:
        return tuple(a for a, _ in self.pairs)

    def text_ids(self) -> tuple[str, ...]:
        return tuple(b for _, b in self.pairs)

    def extend(self, new_pairs: Iterable[tuple[str, str]]) -> "PairedSet":
        return PairedSet(self.pairs + tuple(new_pairs))


@dataclass(frozen=True)
class UnpairedPool:
    """Ordered ids awaiting annotation (image ids, or text ids in reverse mode)."""

    ids: tuple[str, ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "ids", tuple(str(i) for i in self.ids))
        if len(set(self.ids)) != len(self.ids):
            raise SchemaError("duplicate id in unpaired pool")

    def __len__(self) -> int:
        return len(self.ids)

    def remove(self, taken: Iterable[str]) -> "UnpairedPool":
        gone = set(taken)
        return UnpairedPool(tuple(i for i in self.ids if i not in gone))


# -- ingestion / persistence --------------------------------------------------

def _parse_header(line: str) -> tuple[int, int]:
    try:
        obj = json.loads(line)
    except json.JSONDecodeError as exc:
        raise ParseError(f"line 1: invalid JSON header: {exc}") from exc
    if not isinstance(obj, dict) or "image_dim" not in obj or "text_dim" not in obj:
        raise SchemaError("line 1: header must declare image_dim and text_dim")
    image_dim, text_dim = obj["image_dim"], obj["text_dim"]
    if not (isinstance(image_dim, int) and isinstance(text_dim, int)
            and image_dim > 0 and text_dim > 0):
        raise SchemaError("line 1: dims must be positive integers")
    return image_dim, text_dim


def ingest_corpus(embeddings_path: str | Path, pairs_path: str | Path) -> Corpus:
    """Read and validate a corpus from its two files.

    Rejects malformed lines (ParseError, with line number), schema violations
    such as wrong vector length or duplicate ids (SchemaError), and pairs that
    reference unknown ids (DanglingPair). Every record must participate in the
    oracle bijection.
    """
    embeddings_path = Path(embeddings_path)
    pairs_path = Path(pairs_path)

    with embeddings_path.open("r", encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    if not lines:
        raise ParseError("line 1: empty embeddings file, expected header")
    image_dim, text_dim = _parse_header(lines[0])

    images: dict[str, EmbeddingRecord] = {}
    texts: dict[str, EmbeddingRecord] = {}
    for lineno, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as exc:
            raise ParseError(f"line {lineno}: invalid JSON: {exc}") from exc
        if not isinstance(obj, dict):
            raise ParseError(f"line {lineno}: expected an object")
        missing = {"id", "modality", "vector"} - obj.keys()
        if missing:
            raise SchemaError(f"line {lineno}: missing fields {sorted(missing)}")
        try:
            modality = Modality(obj["modality"])
        except ValueError as exc:
            raise SchemaError(f"line {lineno}: unknown modality {obj['modality']!r}") from exc
        vector = obj["vector"]
        if not isinstance(vector, list) or not all(
                isinstance(x, (int, float)) and math.isfinite(x) for x in vector):
            raise SchemaError(f"line {lineno}: vector must be a list of finite numbers")
        expected = image_dim if modality is Modality.IMAGE else text_dim
        if len(vector) != expected:
            raise SchemaError(
                f"line {lineno}: record {obj['id']!r} has dimension "
                f"{len(vector)}, corpus declares {expected}")
        rec = EmbeddingRecord(str(obj["id"]), modality, np.array(vector, dtype=np.float64))
        bucket = images if modality is Modality.IMAGE else texts
        if rec.id in bucket:
            raise SchemaError(f"line {lineno}: duplicate {modality.value} id {rec.id!r}")
        bucket[rec.id] = rec

    oracle: dict[str, str] = {}
    seen_texts: set[str] = set()
    with pairs_path.open("r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration as exc:
            raise ParseError("line 1: empty pairs file, expected header") from exc
        if [h.strip() for h in header] != ["image_id", "text_id"]:
            raise SchemaError("line 1: pairs header must be 'image_id,text_id'")
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != 2:
                raise ParseError(f"line {lineno}: expected two columns, got {len(row)}")
            img, txt = row[0].strip(), row[1].strip()
            if img not in images:
                raise DanglingPair(f"line {lineno}: unknown image id {img!r}")
            if txt not in texts:
                raise DanglingPair(f"line {lineno}: unknown text id {txt!r}")
            if img in oracle:
                raise SchemaError(f"line {lineno}: image id {img!r} paired twice")
            if txt in seen_texts:
                raise SchemaError(f"line {lineno}: text id {txt!r} paired twice")
            oracle[img] = txt
            seen_texts.add(txt)

    unpaired_imgs = set(images) - set(oracle)
    unpaired_txts = set(texts) - seen_texts
    if unpaired_imgs or unpaired_txts:
        sample = sorted(unpaired_imgs | unpaired_txts)[:3]
        raise SchemaError(f"records without a pair entry: {sample}")

    return Corpus(images, texts, oracle, (image_dim, text_dim))


def write_corpus(corpus: Corpus, embeddings_path: str | Path, pairs_path: str | Path) -> None:
    """Persist a corpus as its two files, records sorted by id for stable bytes."""
    embeddings_path = Path(embeddings_path)
    pairs_path = Path(pairs_path)
    with embeddings_path.open("w", encoding="utf-8") as fh:
        fh.write(json.dumps({"image_dim": corpus.dims[0], "text_dim": corpus.dims[1]}) + "\n")
        for bucket in (corpus.image_records, corpus.text_records):
            for rid in sorted(bucket):
                rec = bucket[rid]
                fh.write(json.dumps({
                    "id": rec.id,
                    "modality": rec.modality.value,
                    "vector": [float(x) for x in rec.vector],
                }) + "\n")
    with pairs_path.open("w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["image_id", "text_id"])
        for img in sorted(corpus.oracle):
            writer.writerow([img, corpus.oracle[img]])


# -- synthesis ----------------------------------------------------------------

# Modality gap: the text view of an item is a fixed random linear distortion
# of its latent, scaled by sigma so the zero-noise corpus stays degenerate
# (image == text). Real image and text features come from unrelated encoders,
# so cross-modal alignment is the substance of the training problem; without
# this term a shared-coordinate corpus is solvable by the identity map and
# annotation placement cannot matter.
MODALITY_GAP_SCALE = 2.0


def synth_corpus(n_clusters: int, per_cluster: int, dim: int,
                 noise_sigma: float, seed: int) -> Corpus:
    """Generate a clustered synthetic corpus, deterministic in the seed.

    Each cluster gets a random unit-norm center. Each item draws a latent
    vector (center plus Gaussian noise at noise_sigma) shared by its two
    modality views, which is what makes a pair identifiable among its
    same-cluster neighbors. The image view adds independent Gaussian noise at
    half sigma; the text view applies the corpus-wide modality distortion
    (I + MODALITY_GAP_SCALE * sigma * D, D a fixed random matrix) to the
    latent and then adds the same kind of noise. At sigma = 0 every image
    vector equals its paired text vector exactly.
    """
    if n_clusters < 1 or per_cluster < 1 or dim < 1:
        raise SchemaError("n_clusters, per_cluster, dim must all be >= 1")
    if noise_sigma < 0:
        raise SchemaError("noise_sigma must be nonnegative")
    rng = np.random.default_rng(seed)
    centers = rng.normal(size=(n_clusters, dim))
    centers /= np.linalg.norm(centers, axis=1, keepdims=True)
    distort = np.eye(dim) + MODALITY_GAP_SCALE * noise_sigma * \
        rng.normal(0.0, 1.0 / np.sqrt(dim), size=(dim, dim))

    n_items = n_clusters * per_cluster
    width = max(4, len(str(n_items - 1)))
    images: dict[str, EmbeddingRecord] = {}
    texts: dict[str, EmbeddingRecord] = {}
    oracle: dict[str, str] = {}
    for i in range(n_items):
        center = centers[i // per_cluster]
        latent = center + rng.normal(0.0, noise_sigma, size=dim)
        img_vec = latent + rng.normal(0.0, noise_sigma / 2.0, size=dim)
        txt_vec = distort @ latent + rng.normal(0.0, noise_sigma / 2.0, size=dim)
        img_id = f"img_{i:0{width}d}"
        txt_id = f"txt_{i:0{width}d}"
        images[img_id] = EmbeddingRecord(img_id, Modality.IMAGE, img_vec)
        texts[txt_id] = EmbeddingRecord(txt_id, Modality.TEXT, txt_vec)
        oracle[img_id] = txt_id
    return Corpus(images, texts, oracle, (dim, dim))


# -- initial split ------------------------------------------------------------

def split_initial(corpus: Corpus, init_fraction: float, seed: int,
                  exclude_image_ids: Iterable[str] = ()) -> tuple[PairedSet, UnpairedPool]:
    """Sample floor(init_fraction * n_pairs) oracle pairs; the rest form the pool.

    Eligible ids are the oracle's image ids minus the exclusion set (used by
    the orchestrator to carve out a held-out test split first). Deterministic:
    eligible ids are considered in lexicographic order and the draw is seeded.
    """
    if not 0.0 <= init_fraction <= 1.0:
        raise SchemaError(f"init_fraction {init_fraction} outside [0, 1]")
    excluded = set(exclude_image_ids)
    eligible = sorted(i for i in corpus.oracle if i not in excluded)
    n_init = math.floor(init_fraction * corpus.n_pairs)
    if n_init > len(eligible):
        raise TooFewPairs(
            f"need {n_init} initial pairs but only {len(eligible)} eligible")
    rng = np.random.default_rng(seed)
    chosen_idx = rng.choice(len(eligible), size=n_init, replace=False) if n_init else []
    chosen = sorted(eligible[i] for i in chosen_idx)
    chosen_set = set(chosen)
    paired = PairedSet(tuple((img, corpus.oracle[img]) for img in chosen))
    pool = UnpairedPool(tuple(i for i in eligible if i not in chosen_set))
    return paired, pool
