import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from pairal.corpus import (Corpus, EmbeddingRecord, Modality, PairedSet,
                           UnpairedPool, ingest_corpus, split_initial,
                           synth_corpus, write_corpus)
from pairal.errors import DanglingPair, ParseError, SchemaError


def write_minimal(tmp_path, records, pairs, header=None):
    emb = tmp_path / "emb.jsonl"
    prs = tmp_path / "pairs.csv"
    lines = [json.dumps(header or {"image_dim": 2, "text_dim": 2})]
    lines += [json.dumps(r) for r in records]
    emb.write_text("\n".join(lines) + "\n")
    prs.write_text("image_id,text_id\n" + "\n".join(f"{a},{b}" for a, b in pairs) + "\n")
    return emb, prs


def test_ingest_minimal_valid(tmp_path):
    emb, prs = write_minimal(
        tmp_path,
        [{"id": "i1", "modality": "image", "vector": [1.0, 0.0]},
         {"id": "t1", "modality": "text", "vector": [0.0, 1.0]}],
        [("i1", "t1")])
    corpus = ingest_corpus(emb, prs)
    assert corpus.n_pairs == 1
    assert corpus.oracle["i1"] == "t1"


def test_ingest_rejects_declared_dimension_violation(tmp_path):
    emb, prs = write_minimal(
        tmp_path,
        [{"id": "i1", "modality": "image", "vector": [1.0, 0.0, 0.0]},
         {"id": "t1", "modality": "text", "vector": [0.0, 1.0, 0.0, 0.0]}],
        [("i1", "t1")],
        header={"image_dim": 4, "text_dim": 4})
    with pytest.raises(SchemaError, match="dimension"):
        ingest_corpus(emb, prs)


def test_ingest_rejects_dangling_pair(tmp_path):
    emb, prs = write_minimal(
        tmp_path,
        [{"id": "i1", "modality": "image", "vector": [1.0, 0.0]},
         {"id": "t1", "modality": "text", "vector": [0.0, 1.0]}],
        [("img_99", "t1")])
    with pytest.raises(DanglingPair, match="img_99"):
        ingest_corpus(emb, prs)


def test_ingest_reports_line_numbers(tmp_path):
    emb = tmp_path / "emb.jsonl"
    emb.write_text('{"image_dim": 2, "text_dim": 2}\n{not json\n')
    prs = tmp_path / "pairs.csv"
    prs.write_text("image_id,text_id\n")
    with pytest.raises(ParseError, match="line 2"):
        ingest_corpus(emb, prs)


def test_ingest_rejects_missing_field(tmp_path):
    emb, prs = write_minimal(
        tmp_path,
        [{"id": "i1", "vector": [1.0, 0.0]}],
        [])
    with pytest.raises(SchemaError, match="modality"):
        ingest_corpus(emb, prs)


def test_ingest_rejects_unpaired_records(tmp_path):
    emb, prs = write_minimal(
        tmp_path,
        [{"id": "i1", "modality": "image", "vector": [1.0, 0.0]},
         {"id": "i2", "modality": "image", "vector": [1.0, 1.0]},
         {"id": "t1", "modality": "text", "vector": [0.0, 1.0]}],
        [("i1", "t1")])
    with pytest.raises(SchemaError, match="without a pair"):
        ingest_corpus(emb, prs)


def test_ingest_serialize_ingest_round_trip(tmp_path):
    corpus = synth_corpus(3, 4, 5, 0.2, seed=11)
    emb, prs = tmp_path / "e.jsonl", tmp_path / "p.csv"
    write_corpus(corpus, emb, prs)
    again = ingest_corpus(emb, prs)
    assert again == corpus
    # serialization is stable byte-for-byte
    emb2, prs2 = tmp_path / "e2.jsonl", tmp_path / "p2.csv"
    write_corpus(again, emb2, prs2)
    assert emb.read_bytes() == emb2.read_bytes()
    assert prs.read_bytes() == prs2.read_bytes()


def test_synth_zero_noise_pairs_identical():
    corpus = synth_corpus(2, 1, 4, 0.0, seed=7)
    assert corpus.n_pairs == 2
    for img, txt in corpus.oracle.items():
        assert np.array_equal(corpus.image_records[img].vector,
                              corpus.text_records[txt].vector)


def test_synth_deterministic():
    a = synth_corpus(2, 1, 4, 0.0, seed=7)
    b = synth_corpus(2, 1, 4, 0.0, seed=7)
    assert a == b
    c = synth_corpus(2, 1, 4, 0.0, seed=8)
    assert c != a


def test_synth_2000_pairs_raw_nearest_neighbor_near_perfect():
    corpus = synth_corpus(50, 40, 32, 0.1, seed=1)
    assert corpus.n_pairs == 2000
    imgs = sorted(corpus.image_records)
    txts = sorted(corpus.text_records)
    x = np.stack([corpus.image_records[i].vector for i in imgs])
    t = np.stack([corpus.text_records[j].vector for j in txts])
    x /= np.linalg.norm(x, axis=1, keepdims=True)
    t /= np.linalg.norm(t, axis=1, keepdims=True)
    top = np.argmax(x @ t.T, axis=1)
    r1 = sum(1 for qi, i in enumerate(imgs)
             if txts[top[qi]] == corpus.oracle[i]) / len(imgs)
    assert r1 > 0.9


def test_record_rejects_non_finite():
    with pytest.raises(SchemaError):
        EmbeddingRecord("x", Modality.IMAGE, np.array([1.0, np.nan]))


def test_paired_set_rejects_duplicates():
    with pytest.raises(SchemaError):
        PairedSet((("i1", "t1"), ("i1", "t2")))
    with pytest.raises(SchemaError):
        PairedSet((("i1", "t1"), ("i2", "t1")))


def test_split_examples():
    corpus = synth_corpus(50, 20, 8, 0.1, seed=3)  # N = 1000
    paired, pool = split_initial(corpus, 0.30, seed=5)
    assert len(paired) == 300 and len(pool) == 700

    paired_full, pool_full = split_initial(corpus, 1.0, seed=5)
    assert len(pool_full) == 0 and len(paired_full) == 1000

    paired_none, pool_none = split_initial(corpus, 0.0, seed=5)
    assert len(paired_none) == 0 and len(pool_none) == 1000


@settings(max_examples=20, deadline=None)
@given(st.floats(0.0, 1.0), st.integers(0, 2 ** 31))
def test_split_partitions_corpus(frac, seed):
    corpus = synth_corpus(5, 8, 4, 0.05, seed=9)
    paired, pool = split_initial(corpus, frac, seed)
    paired_imgs = set(paired.image_ids())
    assert paired_imgs.isdisjoint(pool.ids)
    assert paired_imgs | set(pool.ids) == set(corpus.image_records)
    assert all(corpus.oracle[i] == t for i, t in paired.pairs)


def test_split_deterministic_and_excludes():
    corpus = synth_corpus(4, 5, 4, 0.05, seed=2)
    a = split_initial(corpus, 0.4, seed=1)
    b = split_initial(corpus, 0.4, seed=1)
    assert a == b
    held_out = sorted(corpus.image_records)[:5]
    paired, pool = split_initial(corpus, 0.4, seed=1, exclude_image_ids=held_out)
    assert not (set(paired.image_ids()) | set(pool.ids)) & set(held_out)


def test_swapped_round_trip():
    corpus = synth_corpus(3, 3, 6, 0.1, seed=4)
    assert corpus.swapped().swapped() == corpus
    sw = corpus.swapped()
    assert set(sw.image_records) == set(corpus.text_records)
    assert sw.oracle == {t: i for i, t in corpus.oracle.items()}


def test_unpaired_pool_remove_preserves_order():
    pool = UnpairedPool(("c", "a", "b"))
    assert pool.remove(["a"]).ids == ("c", "b")
