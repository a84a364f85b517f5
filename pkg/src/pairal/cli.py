"""Command-line entry points.

Subcommands: synth (generate a corpus), ingest (validate corpus files),
run (execute the annotation loop with the simulated oracle), eval (re-score a
checkpointed model), report (print metric history and R@K sums), serve (live
annotation HTTP service). Run configuration can come from a JSON file via
--config; individual flags override file values.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .corpus import ingest_corpus, synth_corpus, write_corpus
from .errors import PairalError
from .evaluation import evaluate_model, r_at_k_sum
from .hardneg import BatchMode, HardNegConfig, WeightMode, default_zs_size
from .orchestrator import (ALRunConfig, CoreSetVariant, Direction, RunState,
                           Strategy, StrategyKind, initial_state, load_state,
                           run_scenario, write_run_outputs)
from .trainer import TrainConfig


def _config_from_sources(args: argparse.Namespace, n_pairs: int | None = None) -> ALRunConfig:
    """Merge config file values with CLI flag overrides.

    Mini-batch runs without an explicit zs_size get the corpus-scaled default
    when the corpus size is known.
    """
    file_values: dict = {}
    if args.config:
        with open(args.config, "r", encoding="utf-8") as fh:
            file_values = json.load(fh)

    def pick(flag: str, default):
        cli_value = getattr(args, flag, None)
        if cli_value is not None:
            return cli_value
        return file_values.get(flag, default)

    kind = StrategyKind(pick("strategy", "hardneg"))
    batch_mode = BatchMode(pick("batch_mode", "full"))
    zs_size = pick("zs_size", None)
    if batch_mode is BatchMode.MINI and zs_size is None and n_pairs is not None:
        zs_size = default_zs_size(n_pairs)
    strategy = Strategy(
        kind=kind,
        hardneg=HardNegConfig(
            batch_mode=batch_mode,
            zs_size=int(zs_size) if zs_size is not None else None,
            k=int(pick("top_k", 1)),
            weight_mode=WeightMode(pick("weight", "surplus")),
        ),
        coreset_variant=CoreSetVariant(pick("coreset_variant", "mean")),
    )
    train = TrainConfig(
        alpha=float(pick("alpha", TrainConfig.alpha)),
        epochs=int(pick("train_epochs", TrainConfig.epochs)),
        batch_size=int(pick("batch_size", TrainConfig.batch_size)),
        learning_rate=float(pick("learning_rate", TrainConfig.learning_rate)),
        lr_decay_epoch=int(pick("lr_decay_epoch", TrainConfig.lr_decay_epoch)),
    )
    return ALRunConfig(
        init_fraction=float(pick("init_fraction", 0.30)),
        budget_fraction=float(pick("budget_fraction", 0.05)),
        max_epochs=int(pick("max_epochs", 3)),
        strategy=strategy,
        direction=Direction(pick("direction", "image_pool")),
        train=train,
        embed_dim=int(pick("embed_dim", ALRunConfig.embed_dim)),
        test_fraction=float(pick("test_fraction", 0.10)),
        seed=int(pick("seed", 0)),
    )


def _add_config_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="JSON file with run configuration")
    p.add_argument("--seed", type=int)
    p.add_argument("--strategy", choices=[s.value for s in StrategyKind])
    p.add_argument("--batch-mode", dest="batch_mode", choices=[m.value for m in BatchMode])
    p.add_argument("--zs-size", dest="zs_size", type=int,
                   help="mini-batch subset size (default: scaled 2560)")
    p.add_argument("--top-k", dest="top_k", type=int)
    p.add_argument("--weight", choices=[w.value for w in WeightMode])
    p.add_argument("--coreset-variant", dest="coreset_variant",
                   choices=[v.value for v in CoreSetVariant])
    p.add_argument("--direction", choices=[d.value for d in Direction])
    p.add_argument("--init-fraction", dest="init_fraction", type=float)
    p.add_argument("--budget-fraction", dest="budget_fraction", type=float)
    p.add_argument("--max-epochs", dest="max_epochs", type=int)
    p.add_argument("--test-fraction", dest="test_fraction", type=float)
    p.add_argument("--embed-dim", dest="embed_dim", type=int)
    p.add_argument("--alpha", type=float)
    p.add_argument("--train-epochs", dest="train_epochs", type=int)
    p.add_argument("--batch-size", dest="batch_size", type=int)
    p.add_argument("--learning-rate", dest="learning_rate", type=float)
    p.add_argument("--lr-decay-epoch", dest="lr_decay_epoch", type=int)


def _corpus_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--embeddings", required=True, help="embeddings JSONL file")
    p.add_argument("--pairs", required=True, help="pairs CSV file")


def cmd_synth(args) -> int:
    corpus = synth_corpus(args.clusters, args.per_cluster, args.dim,
                          args.noise, args.seed)
    write_corpus(corpus, args.embeddings, args.pairs)
    print(f"wrote {corpus.n_pairs} pairs (dim {corpus.dims[0]}) to "
          f"{args.embeddings} / {args.pairs}")
    return 0


def cmd_ingest(args) -> int:
    corpus = ingest_corpus(args.embeddings, args.pairs)
    print(f"valid corpus: {len(corpus.image_records)} images, "
          f"{len(corpus.text_records)} texts, {corpus.n_pairs} pairs, "
          f"dims {corpus.dims}")
    return 0


def cmd_run(args) -> int:
    corpus = ingest_corpus(args.embeddings, args.pairs)
    config = _config_from_sources(args, n_pairs=corpus.n_pairs)
    state = run_scenario(config, corpus)
    paths = write_run_outputs(state, args.out_dir)
    print(f"run complete: epoch {state.epoch}, |paired| {len(state.paired)}, "
          f"|pool| {len(state.pool)}")
    for name, p in paths.items():
        print(f"  {name}: {p}")
    _print_history(state)
    return 0


def _print_history(state: RunState) -> None:
    print("epoch  paired%   " + "  ".join(
        f"txt R@{k}" for k in sorted(state.history[0].r_at_k_text)) + "  " + "  ".join(
        f"img R@{k}" for k in sorted(state.history[0].r_at_k_image)))
    for m in state.history:
        cells = [f"{m.epoch:>5d}", f"{100 * m.paired_fraction:7.1f}"]
        cells += [f"{100 * m.r_at_k_text[k]:7.1f}" for k in sorted(m.r_at_k_text)]
        cells += [f"{100 * m.r_at_k_image[k]:7.1f}" for k in sorted(m.r_at_k_image)]
        print("  ".join(cells))


def cmd_eval(args) -> int:
    corpus = ingest_corpus(args.embeddings, args.pairs)
    state = load_state(args.state)
    config = _config_from_sources(args, n_pairs=corpus.n_pairs)
    view = corpus if config.direction is Direction.IMAGE_POOL else corpus.swapped()
    metrics = evaluate_model(state.model, view, state.test_ids, state.epoch,
                             len(state.paired) / view.n_pairs, config.eval_ks)
    print(json.dumps({
        "epoch": metrics.epoch,
        "paired_fraction": metrics.paired_fraction,
        "r_at_k_text": metrics.r_at_k_text,
        "r_at_k_image": metrics.r_at_k_image,
    }, indent=2))
    return 0


def cmd_report(args) -> int:
    state = load_state(args.state)
    _print_history(state)
    for k in sorted(state.history[0].r_at_k_text):
        print(f"R@{k}-sum: {r_at_k_sum(state.history, k):.1f}")
    if state.trace:
        print("hard-negative ratio by epoch:",
              "  ".join(f"e{t.epoch}={t.hard_negative_ratio:.3f}" for t in state.trace))
    return 0


def cmd_serve(args) -> int:
    import uvicorn

    from .service import AnnotationSession, create_app

    corpus = ingest_corpus(args.embeddings, args.pairs)
    config = _config_from_sources(args, n_pairs=corpus.n_pairs)
    session_path = Path(args.session)
    if session_path.exists():
        session = AnnotationSession.load(session_path, corpus, config)
        print(f"resumed session at epoch {session.state.epoch}")
    else:
        state = initial_state(config, corpus)
        session = AnnotationSession(corpus=corpus, config=config, state=state)
        if state.epoch < config.max_epochs:
            session.enqueue_current_epoch()
        session.save(session_path)
        print(f"new session: epoch 0 trained, {len(session.task_order)} tasks queued")
    app = create_app(session, checkpoint_path=str(session_path),
                     static_dir=args.static_dir)
    uvicorn.run(app, host=args.host, port=args.port, log_level="warning")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="pairal")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic corpus")
    p.add_argument("--clusters", type=int, default=50)
    p.add_argument("--per-cluster", dest="per_cluster", type=int, default=40)
    p.add_argument("--dim", type=int, default=32)
    p.add_argument("--noise", type=float, default=0.1)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--embeddings", required=True)
    p.add_argument("--pairs", required=True)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("ingest", help="validate corpus files")
    _corpus_args(p)
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("run", help="run the annotation loop with the oracle")
    _corpus_args(p)
    p.add_argument("--out-dir", dest="out_dir", default="run_out")
    _add_config_flags(p)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("eval", help="evaluate a checkpointed model")
    _corpus_args(p)
    p.add_argument("--state", required=True)
    _add_config_flags(p)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("report", help="print metrics history from a checkpoint")
    p.add_argument("--state", required=True)
    p.set_defaults(func=cmd_report)

    p = sub.add_parser("serve", help="live annotation HTTP service")
    _corpus_args(p)
    p.add_argument("--session", default="session.json",
                   help="session checkpoint path (resumed if present)")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8000)
    p.add_argument("--static-dir", dest="static_dir",
                   default=str(Path(__file__).resolve().parents[2] / "frontend" / "dist"))
    _add_config_flags(p)
    p.set_defaults(func=cmd_serve)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except PairalError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
