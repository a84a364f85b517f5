"""Acceptance suite: one test per release criterion, each printing a
PASS/FAIL line (run with `pytest -s tests/test_acceptance.py` to see them).

Tolerances are pinned here and nowhere else:
  * full-batch thresholds: exact equality against an independent scan
  * pool scores: 1e-9 against a scalar double loop
  * relaxation monotonicity: zero violations over 20 instances
  * loss gradients: relative error < 1e-4 vs central differences at 1e-5
  * recall: exact equality against a full-sort oracle; R@K-sum 69.3 +- 1e-9
  * end-to-end: hard-negative selection >= random, paired-seed means
  * core-set: exact greedy-pick equality; BoW histogram mass conservation
  * determinism: byte-for-byte equality of all run artifacts
"""

import time

import numpy as np
import pytest

from pairal.baselines import Codebook, bow_feature, kcenter_greedy
from pairal.corpus import (EmbeddingRecord, Modality, PairedSet, UnpairedPool,
                           synth_corpus, split_initial)
from pairal.evaluation import (EpochMetrics, metrics_to_csv, r_at_k_sum,
                               recall_at_k)
from pairal.hardneg import (BatchMode, HardNegConfig, WeightMode,
                            compute_thresholds, score_pool)
from pairal.orchestrator import (ALRunConfig, Strategy, StrategyKind,
                                 initial_state, load_state, resume_scenario,
                                 run_scenario, save_state,
                                 selection_trace_lines)
from pairal.simkernel import cosine_matrix
from pairal.trainer import (DualEncoderParams, TrainConfig, batch_loss_and_grad,
                            encode_matrix, init_params)


def report(name: str, ok: bool, detail: str = ""):
    print(f"\nACCEPTANCE {name}: {'PASS' if ok else 'FAIL'}"
          + (f" ({detail})" if detail else ""))
    assert ok, f"{name}: {detail}"


def random_paired_instance(rng, max_pairs=100, max_pool=0, dim=8):
    n_pairs = int(rng.integers(6, max_pairs + 1))
    n_pool = int(rng.integers(0, max_pool + 1)) if max_pool else 0
    n_items = n_pairs + n_pool
    corpus = synth_corpus(max(2, n_items // 8), 8 + n_items // max(2, n_items // 8),
                          dim, 0.3, seed=int(rng.integers(2 ** 31)))
    frac = n_pairs / corpus.n_pairs
    paired, pool = split_initial(corpus, frac, seed=int(rng.integers(2 ** 31)))
    pool = UnpairedPool(pool.ids[:n_pool])
    model = init_params(dim, dim, dim // 2 + 1, seed=int(rng.integers(2 ** 31)))
    return corpus, paired, pool, model


def test_threshold_oracle_equivalence():
    """Full-batch top-k thresholds match an independent brute-force scan
    exactly, for 50 random corpora with |paired| <= 100 and k in {1, 2, 5}."""
    rng = np.random.default_rng(2024)
    start = time.monotonic()
    checked = 0
    for _ in range(50):
        corpus, paired, _, model = random_paired_instance(rng)
        z = np.stack([corpus.image_records[i].vector for i in paired.image_ids()])
        t = np.stack([corpus.text_records[j].vector for j in paired.text_ids()])
        sims = cosine_matrix(encode_matrix(model, z, Modality.IMAGE),
                             encode_matrix(model, t, Modality.TEXT))
        for k in (1, 2, 5):
            if len(paired) - 1 < k:
                continue
            got = compute_thresholds(paired, model, corpus, HardNegConfig(k=k))
            for j, tid in enumerate(paired.text_ids()):
                want = sorted((sims[l, j] for l in range(len(paired)) if l != j),
                              reverse=True)[k - 1]
                assert got.per_text[tid] == want, (tid, k)
                checked += 1
    elapsed = time.monotonic() - start
    report("threshold-oracle-equivalence", elapsed < 10.0,
           f"{checked} thresholds, exact, {elapsed:.2f}s")


def test_score_oracle_equivalence():
    """Pool scores match a scalar double loop within 1e-9 for all four
    condition x weight families, |pool| <= 200."""
    rng = np.random.default_rng(77)
    worst = 0.0
    for trial in range(12):
        corpus, paired, pool, model = random_paired_instance(
            rng, max_pairs=60, max_pool=200)
        if len(pool) == 0 or len(paired) < 3:
            continue
        for batch_mode, zs in ((BatchMode.FULL, None),
                               (BatchMode.MINI, max(2, len(paired) // 2))):
            for weight in (WeightMode.SURPLUS, WeightMode.COUNT):
                cfg = HardNegConfig(batch_mode=batch_mode, zs_size=zs, k=1,
                                    weight_mode=weight, seed=trial)
                tv = compute_thresholds(paired, model, corpus, cfg)
                got = score_pool(pool, tv, model, corpus, cfg)
                scored = (list(tv.per_text) if tv.ts_used is None else
                          [t for t in tv.ts_used if t not in set(tv.dropped)])
                for pid in pool.ids:
                    x = encode_matrix(model,
                                      corpus.image_records[pid].vector[None, :],
                                      Modality.IMAGE)
                    h = 0.0
                    for tid in scored:
                        tvec = encode_matrix(
                            model, corpus.text_records[tid].vector[None, :],
                            Modality.TEXT)
                        s = float(cosine_matrix(x, tvec)[0, 0])
                        if s > tv.per_text[tid]:
                            h += (s - tv.per_text[tid]
                                  if weight is WeightMode.SURPLUS else 1.0)
                    worst = max(worst, abs(got.per_image[pid] - h))
    report("score-oracle-equivalence", worst < 1e-9, f"max |delta| = {worst:.2e}")


def test_relaxation_monotonicity():
    """Hard-negative sets are nondecreasing in k, and mini-batch sets contain
    full-batch sets on the shared texts; zero violations in 20 instances."""
    rng = np.random.default_rng(5150)
    violations = 0
    for trial in range(20):
        corpus, paired, pool, model = random_paired_instance(
            rng, max_pairs=40, max_pool=80)
        if len(pool) == 0 or len(paired) < 8:
            continue

        def hard(cfg, restrict_to=None):
            tv = compute_thresholds(paired, model, corpus, cfg)
            if restrict_to is not None:
                from pairal.hardneg import ThresholdVector
                tv = ThresholdVector(
                    {t: tv.per_text[t] for t in restrict_to if t in tv.per_text},
                    zs_used=restrict_to_zs, ts_used=restrict_to,
                    dropped=())
                cfg_like = cfg
            report_ = score_pool(pool, tv, model, corpus, cfg)
            return {i for i, h in report_.per_image.items() if h > 0}, tv

        sets_by_k = []
        for k in (1, 2, 5):
            if len(paired) - 1 < k:
                break
            s, _ = hard(HardNegConfig(k=k))
            sets_by_k.append(s)
        for smaller, larger in zip(sets_by_k, sets_by_k[1:]):
            if not smaller <= larger:
                violations += 1

        mini_cfg = HardNegConfig(batch_mode=BatchMode.MINI,
                                 zs_size=max(2, len(paired) // 3), k=1, seed=trial)
        tv_mini = compute_thresholds(paired, model, corpus, mini_cfg)
        mini_set = {i for i, h in score_pool(pool, tv_mini, model, corpus,
                                             mini_cfg).per_image.items() if h > 0}
        tv_full = compute_thresholds(paired, model, corpus, HardNegConfig(k=1))
        restrict_to_zs = tv_mini.zs_used
        from pairal.hardneg import ThresholdVector
        tv_full_shared = ThresholdVector(
            {t: tv_full.per_text[t] for t in tv_mini.per_text},
            zs_used=tv_mini.zs_used, ts_used=tv_mini.ts_used,
            dropped=tv_mini.dropped)
        full_set_shared = {i for i, h in score_pool(
            pool, tv_full_shared, model, corpus,
            HardNegConfig(k=1)).per_image.items() if h > 0}
        if not full_set_shared <= mini_set:
            violations += 1
    report("relaxation-monotonicity", violations == 0,
           f"{violations} violations in 20 instances")


def test_gradient_correctness():
    """Analytic max-hinge gradients vs central differences (1e-5): relative
    error < 1e-4 on 100 random 4x4 batches away from kinks and ties."""
    rng = np.random.default_rng(314)
    alpha, eps, margin = 0.2, 1e-5, 1e-3
    checked, worst = 0, 0.0
    while checked < 100:
        x = rng.normal(size=(4, 5))
        t = rng.normal(size=(4, 6))
        model = DualEncoderParams(rng.normal(size=(5, 4)),
                                  rng.normal(size=(6, 4)), 4)
        s = cosine_matrix(encode_matrix(model, x, Modality.IMAGE),
                          encode_matrix(model, t, Modality.TEXT))
        masked = s.copy()
        np.fill_diagonal(masked, -np.inf)
        pos = np.diag(s)
        hinges = np.concatenate([alpha + masked.max(axis=1) - pos,
                                 alpha + masked.max(axis=0) - pos])
        row = np.sort(masked, axis=1)
        col = np.sort(masked, axis=0)
        gaps = np.concatenate([row[:, -1] - row[:, -2], col[-1, :] - col[-2, :]])
        if np.abs(hinges).min() <= margin or gaps.min() <= margin:
            continue
        checked += 1
        _, g_img, g_txt = batch_loss_and_grad(model, x, t, alpha)
        for which, analytic in (("img", g_img), ("txt", g_txt)):
            w = model.w_img if which == "img" else model.w_txt
            num = np.zeros_like(w)
            for idx in np.ndindex(w.shape):
                wp, wm = w.copy(), w.copy()
                wp[idx] += eps
                wm[idx] -= eps
                if which == "img":
                    lp = batch_loss_and_grad(
                        DualEncoderParams(wp, model.w_txt, 4), x, t, alpha)[0]
                    lm = batch_loss_and_grad(
                        DualEncoderParams(wm, model.w_txt, 4), x, t, alpha)[0]
                else:
                    lp = batch_loss_and_grad(
                        DualEncoderParams(model.w_img, wp, 4), x, t, alpha)[0]
                    lm = batch_loss_and_grad(
                        DualEncoderParams(model.w_img, wm, 4), x, t, alpha)[0]
                num[idx] = (lp - lm) / (2 * eps)
            rel = np.linalg.norm(analytic - num) / max(np.linalg.norm(num), 1e-12)
            worst = max(worst, rel)
    report("gradient-correctness", worst < 1e-4,
           f"100 batches, worst relative error {worst:.2e}")


def test_evaluator_correctness():
    """recall_at_k equals a full-sort oracle exactly (galleries <= 500);
    R@1 <= R@5 <= R@10 everywhere; R@1-sum reproduces 69.3."""
    rng = np.random.default_rng(99)
    exact = True
    for trial in range(6):
        n = int(rng.integers(20, 501))
        dim = 8
        corpus = synth_corpus(10, (n + 9) // 10, dim, 0.5,
                              seed=int(rng.integers(2 ** 31)))
        ids = sorted(corpus.image_records)[:n]
        imgs = [corpus.image_records[i] for i in ids]
        txts = [corpus.text_records[corpus.oracle[i]] for i in ids]
        oracle = {i: corpus.oracle[i] for i in ids}
        model = init_params(dim, dim, 4, seed=trial)

        sims = cosine_matrix(
            encode_matrix(model, np.stack([r.vector for r in imgs]), Modality.IMAGE),
            encode_matrix(model, np.stack([r.vector for r in txts]), Modality.TEXT))
        gids = [r.id for r in txts]
        r_prev = 0.0
        for k in (1, 5, 10, n):
            if k > n:
                continue
            got = recall_at_k(model, imgs, txts, oracle, k)
            hits = 0
            for qi, rec in enumerate(imgs):
                ranked = sorted(range(n), key=lambda j: (-sims[qi, j], gids[j]))
                if oracle[rec.id] in {gids[j] for j in ranked[:k]}:
                    hits += 1
            if got != hits / n:
                exact = False
            if got + 1e-12 < r_prev:
                exact = False
            r_prev = got
        if recall_at_k(model, imgs, txts, oracle, n) != 1.0:
            exact = False

    reference_row = [EpochMetrics(0, {1: 0.402}, {1: 0.291}, 0.30)]
    sum_ok = abs(r_at_k_sum(reference_row, 1) - 69.3) < 1e-9
    report("evaluator-correctness", exact and sum_ok,
           f"full-sort exact={exact}, R@1-sum(0.402, 0.291)="
           f"{r_at_k_sum(reference_row, 1):.10f}")


def test_end_to_end_directional():
    """On a 2000-pair synthetic corpus (50 clusters, sigma=0.1) with default
    settings (init 30%, budget 5%, 3 epochs), hard-negative selection is at
    least as good as random selection in paired-seed means: epoch-1 R@1
    (text + image) and full-run R@1-sum. Runtime bounded at 10 minutes."""
    start = time.monotonic()
    corpus = synth_corpus(50, 40, 32, 0.1, seed=1)
    n_seeds = 12
    gap_epoch1, gap_sum = [], []
    for seed in range(n_seeds):
        hard_cfg = ALRunConfig(seed=seed, strategy=Strategy(kind=StrategyKind.HARDNEG))
        rand_cfg = ALRunConfig(seed=seed, strategy=Strategy(kind=StrategyKind.RANDOM))
        base = initial_state(hard_cfg, corpus)
        hard = resume_scenario(base, hard_cfg, corpus)
        rand = resume_scenario(base, rand_cfg, corpus)
        h1 = hard.history[1].r_at_k_text[1] + hard.history[1].r_at_k_image[1]
        r1 = rand.history[1].r_at_k_text[1] + rand.history[1].r_at_k_image[1]
        gap_epoch1.append(h1 - r1)
        gap_sum.append(r_at_k_sum(hard.history, 1) - r_at_k_sum(rand.history, 1))
    elapsed = time.monotonic() - start
    mean_1 = float(np.mean(gap_epoch1))
    mean_sum = float(np.mean(gap_sum))
    ok = mean_1 >= 0.0 and mean_sum >= 0.0 and elapsed < 600.0
    report("end-to-end-directional", ok,
           f"epoch-1 gap {mean_1:+.4f}, R@1-sum gap {mean_sum:+.2f}, "
           f"{n_seeds} paired seeds, {elapsed:.0f}s")


def test_coreset_greedy_correctness():
    """Every greedy pick equals the brute-force farthest point (pools <= 200),
    and BoW histograms conserve the local-feature count."""
    rng = np.random.default_rng(4242)
    all_exact = True
    for trial in range(8):
        n_pool = int(rng.integers(5, 201))
        pool = {f"p{k:03d}": rng.normal(size=4) for k in range(n_pool)}
        covered = {f"c{k}": rng.normal(size=4) for k in range(int(rng.integers(1, 8)))}
        b = int(rng.integers(1, min(25, n_pool) + 1))
        got = list(kcenter_greedy(pool, covered, b).selected)

        chosen = []
        covered_pts = list(covered.values())
        remaining = dict(pool)
        for _ in range(min(b, len(pool))):
            best_id, best_d = None, -1.0
            for pid in sorted(remaining):
                d = min(np.linalg.norm(remaining[pid] - c) for c in covered_pts)
                if d > best_d:
                    best_id, best_d = pid, d
            chosen.append(best_id)
            covered_pts.append(remaining.pop(best_id))
        if got != chosen:
            all_exact = False

    mass_ok = True
    for trial in range(8):
        book = Codebook(rng.normal(size=(int(rng.integers(1, 12)), 3)))
        n_local = int(rng.integers(0, 40))
        locals_ = list(rng.normal(size=(n_local, 3)))
        if bow_feature(locals_, book).sum() != n_local:
            mass_ok = False
    report("coreset-greedy-correctness", all_exact and mass_ok,
           f"greedy exact={all_exact}, bow mass conserved={mass_ok}")


def test_determinism_and_resume():
    """Identical config+seed give byte-identical metrics CSV and selection
    trace; a checkpoint resume matches the uninterrupted run byte-for-byte."""
    corpus = synth_corpus(25, 20, 8, 0.1, seed=5)  # N = 500
    fast = TrainConfig(epochs=4, batch_size=32, learning_rate=0.5,
                       lr_decay_epoch=3, seed=0)
    cfg = ALRunConfig(seed=21, strategy=Strategy(kind=StrategyKind.HARDNEG),
                      train=fast, embed_dim=4)
    a = run_scenario(cfg, corpus)
    b = run_scenario(cfg, corpus)
    same_runs = (metrics_to_csv(a.history) == metrics_to_csv(b.history)
                 and selection_trace_lines(a) == selection_trace_lines(b))

    import tempfile
    from dataclasses import replace
    from pathlib import Path
    with tempfile.TemporaryDirectory() as tmp:
        ckpt = Path(tmp) / "ckpt.json"
        partial = run_scenario(replace(cfg, max_epochs=1), corpus)
        save_state(partial, ckpt)
        resumed = resume_scenario(load_state(ckpt), cfg, corpus)
        full_path, resumed_path = Path(tmp) / "full.json", Path(tmp) / "resumed.json"
        save_state(a, full_path)
        save_state(resumed, resumed_path)
        resume_ok = (full_path.read_bytes() == resumed_path.read_bytes()
                     and metrics_to_csv(resumed.history) == metrics_to_csv(a.history)
                     and selection_trace_lines(resumed) == selection_trace_lines(a))
    report("determinism-and-resume", same_runs and resume_ok,
           f"repeat-run identical={same_runs}, resume identical={resume_ok}")
