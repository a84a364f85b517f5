#!/usr/bin/env python3
"""Hard-negative ratio by threshold condition over the annotation loop.

Reproduces, at desk scale, the diagnostic that motivates the relaxed
conditions: the fraction of pool items that are a hard negative for at least
one text under full-batch vs mini-batch candidates and growing top-k, and how
that fraction moves across epochs.
"""

import argparse
import sys

from pairal import (ALRunConfig, Strategy, StrategyKind, compute_thresholds,
                    default_zs_size, initial_state, resume_scenario, score_pool,
                    synth_corpus)
from pairal.hardneg import BatchMode, HardNegConfig, WeightMode


def parse_args():
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("--dim", type=int, default=32)
    p.add_argument("--corpus-seed", type=int, default=1)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--max-epochs", type=int, default=3)
    p.add_argument("--ks", nargs="+", type=int, default=[1, 5, 10])
    return p.parse_args()


def main() -> int:
    args = parse_args()
    corpus = synth_corpus(50, 40, args.dim, 0.1, args.corpus_seed)
    cfg = ALRunConfig(seed=args.seed, max_epochs=args.max_epochs,
                      strategy=Strategy(kind=StrategyKind.HARDNEG))

    # collect the states the loop passes through
    states = [initial_state(cfg, corpus)]
    from dataclasses import replace
    for e in range(args.max_epochs):
        states.append(resume_scenario(states[-1], replace(cfg, max_epochs=e + 1),
                                      corpus))

    zs = default_zs_size(corpus.n_pairs)
    print(f"corpus {corpus.n_pairs} pairs; mini-batch subset {zs}\n")
    print(f"{'condition':<22}" + "".join(f"  e={e:<5}" for e in range(args.max_epochs)))
    for batch_mode, label in ((BatchMode.FULL, "full-batch"),
                              (BatchMode.MINI, "mini-batch")):
        for k in args.ks:
            row = []
            for e in range(args.max_epochs):
                st = states[e]
                hn = HardNegConfig(
                    batch_mode=batch_mode,
                    zs_size=zs if batch_mode is BatchMode.MINI else None,
                    k=k, weight_mode=WeightMode.SURPLUS, seed=args.seed + e)
                tv = compute_thresholds(st.paired, st.model, corpus, hn)
                report = score_pool(st.pool, tv, st.model, corpus, hn)
                row.append(report.hard_negative_ratio)
            print(f"{label} top-{k:<6}" + "".join(f"  {100 * r:5.1f}%" for r in row))
    return 0


if __name__ == "__main__":
    sys.exit(main())
