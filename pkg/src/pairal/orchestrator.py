"""The query -> annotate -> accumulate -> retrain loop.

One run: carve out a held-out test split, sample the initial paired set,
train, then for each epoch select a budget of pool items (by the configured
strategy), obtain their counterparts from an annotator, fold them into the
paired set, retrain from scratch, and evaluate. All counts derive from the
full corpus pair count (init 30%, budget 5% per epoch by default), and all
randomness comes from named streams off the master seed, so two runs with
the same config produce byte-identical outputs and a checkpoint resume is
indistinguishable from an uninterrupted run.

The reverse direction (a pool of texts, annotators supply images) runs the
identical code path on the modality-swapped corpus view; metric direction
labels are swapped back so exported numbers always refer to the original
corpus frame.
"""

from __future__ import annotations

import enum
import json
import math
import os
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Sequence

import numpy as np

from .baselines import (DEFAULT_BOW_CODEBOOK_SIZE, bow_feature, kcenter_greedy,
                        kmeans, random_select)
from .corpus import Corpus, PairedSet, UnpairedPool, split_initial
from .errors import (AnnotationMismatch, BudgetExhausted, IoError, SchemaError,
                     UnknownId, VersionMismatch)
from .evaluation import (DEFAULT_EVAL_KS, EpochMetrics, evaluate_model,
                         metrics_to_csv, swap_directions)
from .hardneg import (HardNegConfig, ScoreReport, SelectionResult,
                      compute_thresholds, score_pool, select)
from .seeding import SEED_SCHEME, derive_seed
from .trainer import (DualEncoderParams, TrainConfig, init_params,
                      model_from_dict, model_to_dict, train)

STATE_FORMAT_VERSION = 1


class StrategyKind(enum.Enum):
    HARDNEG = "hardneg"
    RANDOM = "random"
    CORESET = "coreset"


class CoreSetVariant(enum.Enum):
    MEAN = "mean"
    BOW = "bow"


class Direction(enum.Enum):
    IMAGE_POOL = "image_pool"
    TEXT_POOL = "text_pool"


@dataclass(frozen=True)
class Strategy:
    kind: StrategyKind = StrategyKind.HARDNEG
    hardneg: HardNegConfig = field(default_factory=HardNegConfig)
    coreset_variant: CoreSetVariant = CoreSetVariant.MEAN
    bow_codebook_size: int = DEFAULT_BOW_CODEBOOK_SIZE


@dataclass(frozen=True)
class ALRunConfig:
    init_fraction: float = 0.30
    budget_fraction: float = 0.05
    max_epochs: int = 3
    strategy: Strategy = field(default_factory=Strategy)
    direction: Direction = Direction.IMAGE_POOL
    train: TrainConfig = field(default_factory=TrainConfig)
    embed_dim: int = 16
    test_fraction: float = 0.10
    eval_ks: tuple[int, ...] = DEFAULT_EVAL_KS
    seed: int = 0

    def __post_init__(self) -> None:
        if not 0.0 <= self.init_fraction <= 1.0:
            raise SchemaError("init_fraction outside [0, 1]")
        if not 0.0 <= self.budget_fraction <= 1.0:
            raise SchemaError("budget_fraction outside [0, 1]")
        if not 0.0 <= self.test_fraction < 1.0:
            raise SchemaError("test_fraction outside [0, 1)")
        if self.max_epochs < 0:
            raise SchemaError("max_epochs must be nonnegative")
        if self.init_fraction + self.max_epochs * self.budget_fraction > 1.0 + 1e-12:
            raise SchemaError("init fraction plus total budget exceeds the corpus")
        if self.embed_dim < 1:
            raise SchemaError("embed_dim must be >= 1")


@dataclass(frozen=True)
class TraceEntry:
    epoch: int
    selected: tuple[str, ...]
    scores: tuple[float, ...]          # aligned with selected
    hard_negative_ratio: float


@dataclass(frozen=True)
class RunState:
    """Snapshot of the loop between epochs; immutable once emitted."""

    epoch: int
    paired: PairedSet
    pool: UnpairedPool
    model: DualEncoderParams
    history: tuple[EpochMetrics, ...]
    master_seed: int
    test_ids: tuple[str, ...]
    trace: tuple[TraceEntry, ...] = ()
    pending_selection: SelectionResult | None = None
    seed_scheme: str = SEED_SCHEME


@dataclass(frozen=True)
class AnnotationBatch:
    """Counterparts supplied for one epoch's queried ids, in selection order."""

    pairs: tuple[tuple[str, str], ...]


def budget_count(config: ALRunConfig, corpus: Corpus) -> int:
    return math.floor(config.budget_fraction * corpus.n_pairs)


def _view(config: ALRunConfig, corpus: Corpus) -> Corpus:
    return corpus if config.direction is Direction.IMAGE_POOL else corpus.swapped()


def _record_metrics(config: ALRunConfig, metrics: EpochMetrics) -> EpochMetrics:
    if config.direction is Direction.TEXT_POOL:
        return swap_directions(metrics)
    return metrics


def _train_epoch(config: ALRunConfig, view: Corpus, paired: PairedSet,
                 epoch: int) -> DualEncoderParams:
    template = init_params(view.dims[0], view.dims[1], config.embed_dim,
                           seed=0)
    # batch size clamps to the paired set so large-batch defaults also work
    # on small corpora; the trainer itself requires |paired| >= batch_size
    train_cfg = replace(config.train,
                        batch_size=max(2, min(config.train.batch_size, len(paired))),
                        seed=derive_seed(config.seed, "train", epoch))
    return train(template, paired, view, train_cfg)


def simulated_annotator(selection: SelectionResult, corpus: Corpus) -> AnnotationBatch:
    """Perfect annotator: returns the oracle counterpart for every queried id."""
    pairs = []
    for qid in selection.selected:
        counterpart = corpus.oracle.get(qid)
        if counterpart is None:
            raise UnknownId(f"queried id {qid!r} has no oracle counterpart")
        pairs.append((qid, counterpart))
    return AnnotationBatch(tuple(pairs))


def select_for_epoch(state: RunState, config: ALRunConfig, corpus: Corpus) -> RunState:
    """Run the configured strategy on the current pool; stores the selection."""
    if state.epoch >= config.max_epochs:
        raise BudgetExhausted(f"epoch {state.epoch} reached max_epochs {config.max_epochs}")
    if len(state.pool) == 0:
        raise BudgetExhausted("unpaired pool is empty")
    view = _view(config, corpus)
    b = budget_count(config, view)
    if b < 1:
        raise SchemaError("budget_fraction yields an empty selection budget")

    strat = config.strategy
    if strat.kind is StrategyKind.HARDNEG:
        hn = replace(strat.hardneg,
                     seed=derive_seed(config.seed, "hardneg-zs", state.epoch))
        thresholds = compute_thresholds(state.paired, state.model, view, hn)
        scores = score_pool(state.pool, thresholds, state.model, view, hn)
        selection = select(state.pool, b, scores)
    elif strat.kind is StrategyKind.RANDOM:
        selection = random_select(
            state.pool, b, derive_seed(config.seed, "random-strategy", state.epoch))
    else:
        selection = _coreset_select(state, config, view, b)
    return replace(state, pending_selection=selection)


def _coreset_select(state: RunState, config: ALRunConfig, view: Corpus,
                    b: int) -> SelectionResult:
    pool_raw = {i: view.image_records[i].vector for i in state.pool.ids}
    covered_raw = {i: view.image_records[i].vector for i in state.paired.image_ids()}
    if config.strategy.coreset_variant is CoreSetVariant.MEAN:
        # one global vector per item: the mean of a singleton local set
        return kcenter_greedy(pool_raw, covered_raw, b)
    all_vecs = [pool_raw[i] for i in sorted(pool_raw)]
    all_vecs += [covered_raw[i] for i in sorted(covered_raw)]
    k = min(config.strategy.bow_codebook_size, len(all_vecs))
    codebook = kmeans(all_vecs, k,
                      seed=derive_seed(config.seed, "coreset-kmeans", state.epoch))
    pool_bow = {i: bow_feature([v], codebook) for i, v in pool_raw.items()}
    covered_bow = {i: bow_feature([v], codebook) for i, v in covered_raw.items()}
    return kcenter_greedy(pool_bow, covered_bow, b)


def step_epoch(state: RunState, config: ALRunConfig, corpus: Corpus,
               annotations: AnnotationBatch) -> RunState:
    """Commit one epoch: fold annotations in, retrain from scratch, evaluate."""
    if state.epoch >= config.max_epochs:
        raise BudgetExhausted(f"epoch {state.epoch} reached max_epochs {config.max_epochs}")
    if state.pending_selection is None:
        raise AnnotationMismatch("no selection pending for this state")
    selected = state.pending_selection.selected
    queried = [q for q, _ in annotations.pairs]
    if set(queried) != set(selected) or len(queried) != len(selected):
        extra = sorted(set(queried) - set(selected))
        missing = sorted(set(selected) - set(queried))
        raise AnnotationMismatch(
            f"annotations do not match the selection (extra={extra}, missing={missing})")
    view = _view(config, corpus)
    for _, counterpart in annotations.pairs:
        if counterpart not in view.text_records:
            raise UnknownId(f"counterpart id {counterpart!r} not in corpus")

    new_epoch = state.epoch + 1
    paired = state.paired.extend(annotations.pairs)
    pool = state.pool.remove(selected)
    model = _train_epoch(config, view, paired, new_epoch)
    metrics = _record_metrics(config, evaluate_model(
        model, view, state.test_ids, new_epoch,
        len(paired) / view.n_pairs, config.eval_ks))
    entry = TraceEntry(
        epoch=state.epoch,
        selected=selected,
        scores=tuple(float(state.pending_selection.scores.per_image[i]) for i in selected),
        hard_negative_ratio=float(state.pending_selection.scores.hard_negative_ratio),
    )
    return replace(state, epoch=new_epoch, paired=paired, pool=pool, model=model,
                   history=state.history + (metrics,), trace=state.trace + (entry,),
                   pending_selection=None)


def initial_state(config: ALRunConfig, corpus: Corpus) -> RunState:
    """Hold out the test split, sample the initial paired set, train, evaluate."""
    view = _view(config, corpus)
    n = view.n_pairs
    n_test = math.floor(config.test_fraction * n)
    n_init = math.floor(config.init_fraction * n)
    b = budget_count(config, view)
    if config.max_epochs > 0 and b < 1:
        raise SchemaError("budget_fraction yields an empty selection budget")
    if n_test + n_init + config.max_epochs * b > n:
        raise SchemaError(
            f"test({n_test}) + init({n_init}) + budget({config.max_epochs}x{b}) "
            f"exceeds corpus size {n}")
    if n_test < 1:
        raise SchemaError("test_fraction yields an empty evaluation split")

    anchors = sorted(view.oracle)
    rng = np.random.default_rng(derive_seed(config.seed, "test-split"))
    test_ids = tuple(sorted(anchors[i] for i in
                            rng.choice(len(anchors), size=n_test, replace=False)))
    paired, pool = split_initial(view, config.init_fraction,
                                 derive_seed(config.seed, "init-split"),
                                 exclude_image_ids=test_ids)
    model = _train_epoch(config, view, paired, epoch=0)
    metrics = _record_metrics(config, evaluate_model(
        model, view, test_ids, 0, len(paired) / n, config.eval_ks))
    return RunState(epoch=0, paired=paired, pool=pool, model=model,
                    history=(metrics,), master_seed=config.seed,
                    test_ids=test_ids)


def resume_scenario(state: RunState, config: ALRunConfig, corpus: Corpus) -> RunState:
    """Drive the loop with the simulated annotator until max_epochs."""
    view = _view(config, corpus)
    while state.epoch < config.max_epochs:
        state = select_for_epoch(state, config, corpus)
        batch = simulated_annotator(state.pending_selection, view)
        state = step_epoch(state, config, corpus, batch)
    return state


def run_scenario(config: ALRunConfig, corpus: Corpus) -> RunState:
    """The whole scenario end to end, deterministic in config.seed."""
    return resume_scenario(initial_state(config, corpus), config, corpus)


# -- persistence --------------------------------------------------------------

def _metrics_to_dict(m: EpochMetrics) -> dict:
    return {
        "epoch": m.epoch,
        "r_at_k_text": {str(k): float(v) for k, v in m.r_at_k_text.items()},
        "r_at_k_image": {str(k): float(v) for k, v in m.r_at_k_image.items()},
        "paired_fraction": float(m.paired_fraction),
    }


def _metrics_from_dict(obj: dict) -> EpochMetrics:
    return EpochMetrics(
        epoch=int(obj["epoch"]),
        r_at_k_text={int(k): float(v) for k, v in obj["r_at_k_text"].items()},
        r_at_k_image={int(k): float(v) for k, v in obj["r_at_k_image"].items()},
        paired_fraction=float(obj["paired_fraction"]),
    )


def _selection_to_dict(sel: SelectionResult | None) -> dict | None:
    if sel is None:
        return None
    return {
        "selected": list(sel.selected),
        "per_image": {k: float(v) for k, v in sel.scores.per_image.items()},
        "hard_negative_ratio": float(sel.scores.hard_negative_ratio),
    }


def _selection_from_dict(obj: dict | None) -> SelectionResult | None:
    if obj is None:
        return None
    report = ScoreReport({k: float(v) for k, v in obj["per_image"].items()},
                         float(obj["hard_negative_ratio"]))
    return SelectionResult(tuple(obj["selected"]), report)


def state_to_dict(state: RunState) -> dict:
    return {
        "version": STATE_FORMAT_VERSION,
        "seed_scheme": state.seed_scheme,
        "master_seed": state.master_seed,
        "epoch": state.epoch,
        "paired": [list(p) for p in state.paired.pairs],
        "pool": list(state.pool.ids),
        "test_ids": list(state.test_ids),
        "model": model_to_dict(state.model),
        "history": [_metrics_to_dict(m) for m in state.history],
        "trace": [{
            "epoch": t.epoch,
            "selected": list(t.selected),
            "scores": [float(s) for s in t.scores],
            "hard_negative_ratio": float(t.hard_negative_ratio),
        } for t in state.trace],
        "pending_selection": _selection_to_dict(state.pending_selection),
    }


def state_from_dict(obj: dict) -> RunState:
    if not isinstance(obj, dict) or obj.get("version") != STATE_FORMAT_VERSION:
        raise VersionMismatch(
            f"unsupported state version {obj.get('version') if isinstance(obj, dict) else obj!r}")
    if obj.get("seed_scheme") != SEED_SCHEME:
        raise VersionMismatch(f"unsupported seed scheme {obj.get('seed_scheme')!r}")
    return RunState(
        epoch=int(obj["epoch"]),
        paired=PairedSet(tuple((a, b) for a, b in obj["paired"])),
        pool=UnpairedPool(tuple(obj["pool"])),
        model=model_from_dict(obj["model"]),
        history=tuple(_metrics_from_dict(m) for m in obj["history"]),
        master_seed=int(obj["master_seed"]),
        test_ids=tuple(obj["test_ids"]),
        trace=tuple(TraceEntry(int(t["epoch"]), tuple(t["selected"]),
                               tuple(float(s) for s in t["scores"]),
                               float(t["hard_negative_ratio"]))
                    for t in obj["trace"]),
        pending_selection=_selection_from_dict(obj["pending_selection"]),
    )


def save_state(state: RunState, path) -> None:
    """Atomic checkpoint write: temp file in the target directory, then rename."""
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    try:
        with tmp.open("w", encoding="utf-8") as fh:
            json.dump(state_to_dict(state), fh)
            fh.write("\n")
        os.replace(tmp, path)
    except OSError as exc:
        raise IoError(f"cannot write checkpoint {path}: {exc}") from exc


def load_state(path) -> RunState:
    path = Path(path)
    try:
        with path.open("r", encoding="utf-8") as fh:
            obj = json.load(fh)
    except OSError as exc:
        raise IoError(f"cannot read checkpoint {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise IoError(f"truncated or corrupt checkpoint {path}: {exc}") from exc
    return state_from_dict(obj)


def export_selection_trace(state: RunState, path) -> None:
    """One JSON line per completed epoch: selected ids and their scores."""
    path = Path(path)
    try:
        with path.open("w", encoding="utf-8") as fh:
            fh.write(selection_trace_lines(state))
    except OSError as exc:
        raise IoError(f"cannot write trace {path}: {exc}") from exc


def selection_trace_lines(state: RunState) -> str:
    lines = []
    for t in state.trace:
        lines.append(json.dumps({
            "epoch": t.epoch,
            "selected": list(t.selected),
            "scores": {i: s for i, s in zip(t.selected, t.scores)},
            "hard_negative_ratio": t.hard_negative_ratio,
        }))
    return "".join(line + "\n" for line in lines)


def write_run_outputs(state: RunState, out_dir) -> dict[str, Path]:
    """Standard run artifacts: metrics CSV, selection trace, checkpoint."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = {
        "metrics": out / "metrics.csv",
        "trace": out / "trace.jsonl",
        "state": out / "state.json",
    }
    with paths["metrics"].open("w", encoding="utf-8", newline="") as fh:
        fh.write(metrics_to_csv(state.history))
    export_selection_trace(state, paths["trace"])
    save_state(state, paths["state"])
    return paths
