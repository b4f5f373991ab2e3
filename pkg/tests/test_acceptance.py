"""Acceptance suite: one test per release criterion, at pinned tolerances.

Each test prints a single PASS/FAIL line (run with `pytest -s` to see the
lines while green; failures surface through pytest either way).
"""

import functools
import json
import math
import subprocess
import sys
import time

import numpy as np
import pytest
from synthdata import (
    balanced_centers,
    blob_set,
    fd_gradients,
    labels_array,
    max_relative_error,
    random_probe,
)

from artemb.knn import build_reference, classify_knn
from artemb.metrics import accuracy_at_1, macro_metrics
from artemb.probe import LinearProbe, TrainConfig, evaluate, loss_and_grad, train_probe
from artemb.retrieval import build_index, retrieve
from artemb.similarity import top_k
from artemb.store import EmbeddingSet, LabelSpace, RowMeta, read_store, write_store
from artemb.zeroshot import PromptBank, classify_zero_shot


def criterion(name):
    def deco(fn):
        @functools.wraps(fn)
        def wrapper(*args, **kwargs):
            try:
                result = fn(*args, **kwargs)
            except BaseException:
                print(f"FAIL  {name}")
                raise
            print(f"PASS  {name}")
            return result

        return wrapper

    return deco


@criterion("k-NN predictions identical to brute-force oracle (k in {1,3,5}, <1s)")
def test_knn_oracle_equivalence():
    rng = np.random.default_rng(200)
    classes = ("c0", "c1", "c2", "c3")
    ls = LabelSpace("style", classes)
    vectors = rng.standard_normal((200, 16)).astype(np.float32)
    labels = rng.integers(0, 4, 200)
    meta = [RowMeta(f"r{i}", {"style": classes[labels[i]]}) for i in range(200)]
    ref = build_reference(EmbeddingSet(vectors, meta), "style", ls)
    queries = rng.standard_normal((50, 16))

    def oracle(q, k):
        scored = []
        for i in range(200):
            row = vectors[i].astype(np.float64)
            qq = q.astype(np.float64)
            s = float(row @ qq / (np.linalg.norm(row) * np.linalg.norm(qq)))
            scored.append((s, i))
        scored.sort(key=lambda t: (-t[0], t[1]))
        top = scored[:k]
        if k == 1:
            return int(labels[top[0][1]])
        votes = {}
        for s, i in top:
            votes[int(labels[i])] = votes.get(int(labels[i]), 0.0) + s
        return min(votes, key=lambda c: (-votes[c], c))

    start = time.monotonic()
    for k in (1, 3, 5):
        for q in queries:
            assert classify_knn(q, ref, k=k) == oracle(q, k)
    elapsed = time.monotonic() - start
    assert elapsed < 1.0, f"took {elapsed:.3f}s"


@criterion("zero-shot equals top-1 of the prompt matrix on 100 instances")
def test_zero_shot_top1_equivalence():
    rng = np.random.default_rng(201)
    for _ in range(100):
        n_classes = int(rng.integers(2, 9))
        dim = int(rng.integers(4, 24))
        ls = LabelSpace("t", tuple(f"c{i}" for i in range(n_classes)))
        bank = PromptBank(
            "t", ls, "<x> art", rng.standard_normal((n_classes, dim)).astype(np.float32)
        )
        q = rng.standard_normal(dim)
        assert classify_zero_shot(q, bank) == top_k(q, bank.embeddings, 1)[0].row_index


@criterion("gradients within 1e-5 relative error of central differences (<5s)")
def test_gradient_check():
    ls = LabelSpace("t", ("c0", "c1", "c2", "c3"))
    start = time.monotonic()
    for seed in range(100, 120):
        rng = np.random.default_rng(seed)
        probe = random_probe(rng, 4, 8, ls)
        X = rng.standard_normal((16, 8))
        y = rng.integers(0, 4, 16)
        _, dW, db = loss_and_grad(probe, X, y)
        nW, nb = fd_gradients(probe, X, y, h=1e-4)
        assert max_relative_error(dW, nW) < 1e-5
        assert max_relative_error(db, nb) < 1e-5
    elapsed = time.monotonic() - start
    assert elapsed < 5.0, f"took {elapsed:.3f}s"


@criterion("zero-init loss equals ln N within 1e-6 for N in {2, 4, 27}")
def test_zero_init_loss():
    rng = np.random.default_rng(202)
    for n in (2, 4, 27):
        ls = LabelSpace("t", tuple(f"c{i}" for i in range(n)))
        probe = LinearProbe.zeros(12, ls)
        X = rng.standard_normal((32, 12))
        y = rng.integers(0, n, 32)
        loss, _, _ = loss_and_grad(probe, X, y)
        assert abs(loss - math.log(n)) < 1e-6


@criterion("separable blobs: 100% train, >=99% val, converged before epoch 100 (<30s)")
def test_separable_blob_training():
    rng = np.random.default_rng(16)
    centers = balanced_centers(dim=64, sep=6.0)
    train, ls = blob_set(rng, centers, 125, "tr")
    val, _ = blob_set(rng, centers, 25, "va")
    start = time.monotonic()
    probe, history = train_probe(train, val, "t", ls, TrainConfig())
    elapsed = time.monotonic() - start

    _, train_acc = evaluate(probe, train.vectors, labels_array(train, "t", ls))
    _, val_acc = evaluate(probe, val.vectors, labels_array(val, "t", ls))
    assert train_acc == 1.0
    assert val_acc >= 0.99
    converged = [e.epoch for e in history.epochs if e.train_acc == 1.0 and e.val_acc >= 0.99]
    assert converged and converged[0] < 100
    assert elapsed < 30.0, f"took {elapsed:.3f}s"


@criterion("rising val loss stops after patience+1 epochs, returns epoch-1 checkpoint")
def test_early_stopping_contract():
    rng = np.random.default_rng(7)
    centers = balanced_centers(dim=8, sep=8.0)
    train, ls = blob_set(rng, centers, 50, "tr")
    val, _ = blob_set(rng, centers, 10, "va", label_shift=1)
    config = TrainConfig(learning_rate=0.05, max_epochs=50, patience=5, seed=1)
    probe, history = train_probe(train, val, "t", ls, config)

    losses = [e.val_loss for e in history.epochs]
    assert all(b > a for a, b in zip(losses, losses[1:])), "premise: strictly rising"
    assert len(history.epochs) == config.patience + 1
    assert history.best_epoch == 1
    one_epoch = TrainConfig(learning_rate=0.05, max_epochs=1, patience=1, seed=1)
    probe1, _ = train_probe(train, val, "t", ls, one_epoch)
    assert np.array_equal(probe.W, probe1.W)
    assert np.array_equal(probe.b, probe1.b)


@criterion("metric oracle: reference confusion matrix to 1e-12, acc@1 = 8/10")
def test_metric_oracle():
    cm = [[2, 1, 0], [0, 3, 0], [1, 0, 3]]
    p, r, f1, per_class = macro_metrics(np.array(cm))

    # independently coded scalar oracle
    stats = []
    for c in range(3):
        tp = cm[c][c]
        col = sum(cm[g][c] for g in range(3))
        row = sum(cm[c][p_] for p_ in range(3))
        pc = tp / col if col else 0.0
        rc = tp / row if row else 0.0
        fc = 2 * pc * rc / (pc + rc) if pc + rc else 0.0
        stats.append((pc, rc, fc))
    assert abs(p - sum(s[0] for s in stats) / 3) < 1e-12
    assert abs(r - sum(s[1] for s in stats) / 3) < 1e-12
    assert abs(f1 - sum(s[2] for s in stats) / 3) < 1e-12

    preds = [0, 0, 1, 1, 1, 1, 0, 2, 2, 2]
    golds = [0, 0, 0, 1, 1, 1, 2, 2, 2, 2]
    assert np.array_equal(
        np.array(cm),
        np.array(
            [[sum(1 for pp, gg in zip(preds, golds) if gg == g and pp == p_) for p_ in range(3)] for g in range(3)]
        ),
    )
    assert accuracy_at_1(preds, golds) == 8 / 10


@criterion("retrieval: 100 self-hits at 1.0 +- 1e-6, top-5 equals exhaustive sort")
def test_retrieval_self_hit_and_oracle():
    rng = np.random.default_rng(203)
    vectors = rng.standard_normal((100, 16)).astype(np.float32)
    meta = [RowMeta(f"img-{i}", {"style": "s", "genre": "g"}) for i in range(100)]
    es = EmbeddingSet(vectors, meta)
    index = build_index(es)

    def oracle_ids(q):
        scored = []
        for i in range(100):
            row = vectors[i].astype(np.float64)
            qq = np.asarray(q, dtype=np.float64)
            s = float(row @ qq / (np.linalg.norm(row) * np.linalg.norm(qq)))
            scored.append((s, i))
        scored.sort(key=lambda t: (-t[0], t[1]))
        return [f"img-{i}" for _, i in scored[:5]]

    for j in range(100):
        results = retrieve(index, vectors[j], k=5)
        assert results[0].id == f"img-{j}"
        assert abs(results[0].score - 1.0) <= 1e-6
        assert [r.id for r in results] == oracle_ids(vectors[j])


@criterion("split: (800,100,100) on 1000 rows, identical across two processes")
def test_split_process_determinism(tmp_path):
    rng = np.random.default_rng(204)
    vectors = rng.standard_normal((1000, 8)).astype(np.float32)
    meta = [RowMeta(f"row-{i:04d}", {"style": "only"}) for i in range(1000)]
    src = tmp_path / "corpus.emb"
    write_store(EmbeddingSet(vectors, meta), src)

    outputs = []
    for name in ("a", "b"):
        out = tmp_path / name
        proc = subprocess.run(
            [
                sys.executable,
                "-m",
                "artemb",
                "split",
                str(src),
                "--ratios",
                "0.8,0.1,0.1",
                "--seed",
                "42",
                "--out",
                str(out),
            ],
            capture_output=True,
            text=True,
        )
        assert proc.returncode == 0, proc.stderr
        outputs.append(out)

    doc = json.loads((outputs[0] / "split.json").read_text())
    assert doc["counts"] == {"train": 800, "val": 100, "test": 100}
    assert (outputs[0] / "split.json").read_bytes() == (outputs[1] / "split.json").read_bytes()
    assert (outputs[0] / "train.emb").read_bytes() == (outputs[1] / "train.emb").read_bytes()


@criterion("50 randomized stores roundtrip bit-exactly")
def test_store_roundtrip(tmp_path):
    rng = np.random.default_rng(205)
    alphabet = ["Baroque", "Cubism", "Unknown Genre", "portrait", "Jardín", "風景"]
    for case in range(50):
        count = int(rng.integers(0, 40))
        dim = int(rng.integers(1, 12))
        vectors = rng.standard_normal((count, dim)).astype(np.float32)
        for i in range(count):  # re-randomize any all-zero row (cosine needs non-zero)
            while not np.any(vectors[i]):
                vectors[i] = rng.standard_normal(dim).astype(np.float32)
        meta = [
            RowMeta(
                f"row-{case}-{i}",
                {
                    "style": alphabet[int(rng.integers(len(alphabet)))],
                    "genre": alphabet[int(rng.integers(len(alphabet)))],
                },
            )
            for i in range(count)
        ]
        header = {"case": case} if case % 3 == 0 else None
        es = EmbeddingSet(vectors, meta, header=header)
        path = tmp_path / f"case-{case}.emb"
        write_store(es, path)
        back = read_store(path)
        assert back == es
        assert np.all(back.vectors.view(np.uint32) == es.vectors.view(np.uint32))


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-v", "-s"]))
