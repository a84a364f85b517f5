#!/usr/bin/env python3
"""Scripted walkthrough of the live annotation service.

Generates a small corpus, starts the HTTP service in-process, annotates every
queued task with its ground-truth counterpart through the REST API, advances
the epoch, and prints the metric movement — the same loop a human drives
through the browser UI.
"""

import sys
import tempfile
from pathlib import Path

from fastapi.testclient import TestClient

from pairal import ALRunConfig, Strategy, StrategyKind, initial_state, synth_corpus
from pairal.service import AnnotationSession, create_app
from pairal.trainer import TrainConfig


def main() -> int:
    corpus = synth_corpus(10, 20, 8, 0.1, seed=1)
    config = ALRunConfig(
        seed=0, max_epochs=2, embed_dim=4,
        strategy=Strategy(kind=StrategyKind.HARDNEG),
        train=TrainConfig(epochs=5, batch_size=32, learning_rate=0.5,
                          lr_decay_epoch=3),
    )
    session = AnnotationSession(corpus=corpus, config=config,
                                state=initial_state(config, corpus))
    session.enqueue_current_epoch()

    with tempfile.TemporaryDirectory() as tmp:
        client = TestClient(create_app(session, checkpoint_path=str(Path(tmp) / "s.json")))
        for _ in range(config.max_epochs):
            state = client.get("/api/state").json()
            print(f"epoch {state['epoch']}: {state['tasks_total']} tasks queued")
            tasks = client.get("/api/tasks", params={"status": "pending"}).json()["tasks"]
            for task in tasks:
                detail = client.get(f"/api/tasks/{task['task_id']}").json()
                truth = corpus.oracle[task["queried_id"]]
                ranked = [c["text_id"] for c in detail["candidates"]]
                note = f"truth ranked #{ranked.index(truth) + 1}" if truth in ranked \
                    else "truth outside top suggestions"
                print(f"  {task['queried_id']} -> {truth} ({note})")
                r = client.post(f"/api/tasks/{task['task_id']}/annotation",
                                json={"text_id": truth})
                assert r.status_code == 200, r.text
            r = client.post("/api/epoch/advance")
            assert r.status_code == 200, r.text
            m = r.json()["metrics"]
            print(f"  advanced: paired {m['paired_fraction']:.2f}, "
                  f"text R@1 {m['r_at_k_text']['1']:.3f}, "
                  f"image R@1 {m['r_at_k_image']['1']:.3f}")
    print("run complete")
    return 0


if __name__ == "__main__":
    sys.exit(main())
