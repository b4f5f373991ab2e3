"""Linear probe tests: losses, gradients, Adam, training loop, checkpoints."""

import math

import numpy as np
import pytest
from synthdata import (
    balanced_centers,
    blob_set,
    cross_entropy_oracle,
    fd_gradients,
    labels_array,
    max_relative_error,
    random_probe,
)

from artemb.errors import FormatError, TrainingDivergedError, ValidationError
from artemb.probe import (
    AdamState,
    LinearProbe,
    TrainConfig,
    adam_step,
    evaluate,
    forward,
    loss_and_grad,
    predict,
    predict_batch,
    read_probe,
    softmax,
    train_probe,
    write_probe,
)
from artemb.store import LabelSpace

LS4 = LabelSpace("t", ("c0", "c1", "c2", "c3"))


class TestForwardPredict:
    def test_zero_map(self):
        probe = LinearProbe.zeros(5, LS4)
        assert np.all(forward(probe, np.ones(5)) == 0.0)

    def test_identity_map(self):
        probe = LinearProbe(np.eye(4), np.zeros(4), LS4)
        e2 = np.zeros(4)
        e2[2] = 1.0
        assert np.allclose(forward(probe, e2), e2)

    def test_matches_scalar_matvec(self):
        rng = np.random.default_rng(40)
        probe = random_probe(rng, 4, 8, LS4)
        for _ in range(10):
            f = rng.standard_normal(8)
            z = forward(probe, f)
            oracle = [
                sum(float(w) * float(x) for w, x in zip(row, f)) + float(bi)
                for row, bi in zip(probe.W, probe.b)
            ]
            assert np.allclose(z, oracle, atol=1e-6)

    def test_dim_mismatch(self):
        probe = LinearProbe.zeros(5, LS4)
        with pytest.raises(ValidationError, match="vector"):
            forward(probe, np.ones(6))

    def test_predict_argmax_and_tie(self):
        probe = LinearProbe(np.eye(3), np.zeros(3), LabelSpace("t", ("a", "b", "c")))
        assert predict(probe, np.array([0.1, 0.9, 0.3])) == 1
        assert predict(probe, np.zeros(3)) == 0  # all-equal logits

    def test_predict_matches_argmax_of_forward(self):
        rng = np.random.default_rng(41)
        probe = random_probe(rng, 4, 8, LS4)
        X = rng.standard_normal((50, 8))
        preds = predict_batch(probe, X)
        for i in range(50):
            z = forward(probe, X[i])
            assert preds[i] == int(np.argmax(z)) == predict(probe, X[i])

    def test_predict_invariant_to_logit_shift(self):
        rng = np.random.default_rng(42)
        probe = random_probe(rng, 4, 8, LS4)
        shifted = LinearProbe(probe.W.copy(), probe.b + 3.75, LS4)
        X = rng.standard_normal((30, 8))
        assert np.array_equal(predict_batch(probe, X), predict_batch(shifted, X))


class TestLoss:
    @pytest.mark.parametrize("n_classes", [2, 4, 27])
    def test_zero_init_loss_is_log_n(self, n_classes):
        ls = LabelSpace("t", tuple(f"c{i}" for i in range(n_classes)))
        probe = LinearProbe.zeros(6, ls)
        rng = np.random.default_rng(43)
        X = rng.standard_normal((10, 6))
        y = rng.integers(0, n_classes, 10)
        loss, _, _ = loss_and_grad(probe, X, y)
        assert loss == pytest.approx(math.log(n_classes), abs=1e-6)

    def test_extreme_logits_no_overflow(self):
        ls = LabelSpace("t", ("a", "b"))
        probe = LinearProbe(np.array([[1000.0], [-1000.0]]), np.zeros(2), ls)
        with np.errstate(over="raise", invalid="raise"):
            loss, dW, db = loss_and_grad(probe, np.array([[1.0]]), [0])
        assert loss == pytest.approx(0.0, abs=1e-12)
        assert np.all(np.isfinite(dW)) and np.all(np.isfinite(db))
        # The losing label has to pay the full margin.
        loss_bad, _, _ = loss_and_grad(probe, np.array([[1.0]]), [1])
        assert loss_bad == pytest.approx(2000.0, rel=1e-12)

    def test_softmax_rows_sum_to_one_up_to_1e4(self):
        rng = np.random.default_rng(44)
        Z = rng.uniform(-1e4, 1e4, size=(30, 6))
        sums = softmax(Z).sum(axis=1)
        assert np.max(np.abs(sums - 1.0)) < 1e-6

    def test_matches_scalar_cross_entropy_oracle(self):
        rng = np.random.default_rng(45)
        probe = random_probe(rng, 4, 8, LS4)
        X = rng.standard_normal((16, 8))
        y = rng.integers(0, 4, 16)
        loss, _, _ = loss_and_grad(probe, X, y)
        assert loss == pytest.approx(cross_entropy_oracle(probe.W, probe.b, X, y), abs=1e-9)

    def test_empty_batch_rejected(self):
        probe = LinearProbe.zeros(3, LS4)
        with pytest.raises(ValidationError, match="non-empty"):
            loss_and_grad(probe, np.zeros((0, 3)), [])

    def test_out_of_range_label_rejected(self):
        probe = LinearProbe.zeros(3, LS4)
        with pytest.raises(ValidationError, match="range"):
            loss_and_grad(probe, np.ones((1, 3)), [4])


class TestGradients:
    def test_matches_central_finite_differences(self):
        for seed in (100, 101, 102):
            rng = np.random.default_rng(seed)
            probe = random_probe(rng, 4, 8, LS4)
            X = rng.standard_normal((16, 8))
            y = rng.integers(0, 4, 16)
            _, dW, db = loss_and_grad(probe, X, y)
            nW, nb = fd_gradients(probe, X, y, h=1e-4)
            assert max_relative_error(dW, nW) < 1e-5
            assert max_relative_error(db, nb) < 1e-5

    def test_gradient_descent_direction_reduces_loss(self):
        rng = np.random.default_rng(46)
        probe = random_probe(rng, 4, 8, LS4)
        X = rng.standard_normal((32, 8))
        y = rng.integers(0, 4, 32)
        loss0, dW, db = loss_and_grad(probe, X, y)
        stepped = LinearProbe(probe.W - 0.1 * dW, probe.b - 0.1 * db, LS4)
        loss1, _, _ = loss_and_grad(stepped, X, y)
        assert loss1 < loss0


def scalar_adam_oracle(W, b, grads, config):
    """Independent transcription of the update formulas in scalar code."""
    W = [[float(x) for x in row] for row in W]
    b = [float(x) for x in b]
    mW = [[0.0] * len(W[0]) for _ in W]
    vW = [[0.0] * len(W[0]) for _ in W]
    mb = [0.0] * len(b)
    vb = [0.0] * len(b)
    lr, b1, b2, eps, wd = (
        config.learning_rate,
        config.beta1,
        config.beta2,
        config.eps,
        config.weight_decay,
    )
    for t, (gW, gb) in enumerate(grads, start=1):
        c1 = 1.0 - b1**t
        c2 = 1.0 - b2**t
        for i in range(len(W)):
            for j in range(len(W[0])):
                g = float(gW[i][j])
                mW[i][j] = b1 * mW[i][j] + (1.0 - b1) * g
                vW[i][j] = b2 * vW[i][j] + (1.0 - b2) * g * g
                W[i][j] -= lr * (mW[i][j] / c1) / (math.sqrt(vW[i][j] / c2) + eps)
            g = float(gb[i])
            mb[i] = b1 * mb[i] + (1.0 - b1) * g
            vb[i] = b2 * vb[i] + (1.0 - b2) * g * g
            b[i] -= lr * (mb[i] / c1) / (math.sqrt(vb[i] / c2) + eps)
        for i in range(len(W)):
            for j in range(len(W[0])):
                W[i][j] -= lr * wd * W[i][j]
    return np.array(W), np.array(b)


class TestAdam:
    def test_first_step_closed_form(self):
        ls = LabelSpace("t", ("a", "b"))
        probe = LinearProbe(np.ones((2, 1)), np.ones(2), ls)
        state = AdamState.zeros_like(probe)
        config = TrainConfig(learning_rate=1e-4, weight_decay=0.0)
        adam_step(probe, np.ones((2, 1)), np.ones(2), state, config)
        # mhat = vhat = 1 at t=1, so the step is lr/(1+eps).
        expected = 1.0 - 1e-4 / (1.0 + 1e-8)
        assert np.allclose(probe.W, expected, atol=1e-15)
        assert np.allclose(probe.b, expected, atol=1e-15)
        assert state.t == 1

    def test_zero_grad_zero_decay_is_fixed_point(self):
        rng = np.random.default_rng(47)
        probe = random_probe(rng, 4, 3, LS4)
        W0, b0 = probe.W.copy(), probe.b.copy()
        state = AdamState.zeros_like(probe)
        config = TrainConfig(weight_decay=0.0)
        for _ in range(3):
            adam_step(probe, np.zeros((4, 3)), np.zeros(4), state, config)
        assert np.array_equal(probe.W, W0)
        assert np.array_equal(probe.b, b0)

    def test_ten_steps_match_scalar_transcription(self):
        rng = np.random.default_rng(48)
        ls = LabelSpace("t", ("a", "b", "c"))
        probe = LinearProbe(rng.standard_normal((3, 4)), rng.standard_normal(3), ls)
        W0, b0 = probe.W.copy(), probe.b.copy()
        config = TrainConfig(learning_rate=0.01, weight_decay=3e-3)
        grads = [
            (rng.standard_normal((3, 4)), rng.standard_normal(3)) for _ in range(10)
        ]
        state = AdamState.zeros_like(probe)
        for gW, gb in grads:
            adam_step(probe, gW, gb, state, config)
        W_oracle, b_oracle = scalar_adam_oracle(W0, b0, grads, config)
        assert np.max(np.abs(probe.W - W_oracle)) < 1e-12
        assert np.max(np.abs(probe.b - b_oracle)) < 1e-12

    def test_decay_hits_weights_not_bias(self):
        ls = LabelSpace("t", ("a", "b"))
        probe = LinearProbe(np.full((2, 2), 10.0), np.full(2, 10.0), ls)
        state = AdamState.zeros_like(probe)
        config = TrainConfig(learning_rate=0.0, weight_decay=0.5)
        adam_step(probe, np.zeros((2, 2)), np.zeros(2), state, config)
        # lr=0 makes both the Adam move and the decay (lr*wd) vanish.
        assert np.array_equal(probe.W, np.full((2, 2), 10.0))
        config = TrainConfig(learning_rate=0.1, weight_decay=0.5)
        adam_step(probe, np.zeros((2, 2)), np.zeros(2), state, config)
        assert np.allclose(probe.W, 10.0 * (1.0 - 0.1 * 0.5))
        assert np.array_equal(probe.b, np.full(2, 10.0))

    def test_vanishing_lr_leaves_params_unchanged(self):
        rng = np.random.default_rng(49)
        probe = random_probe(rng, 4, 3, LS4)
        W0, b0 = probe.W.copy(), probe.b.copy()
        state = AdamState.zeros_like(probe)
        config = TrainConfig(learning_rate=1e-300)
        adam_step(probe, rng.standard_normal((4, 3)), rng.standard_normal(4), state, config)
        assert np.max(np.abs(probe.W - W0)) < 1e-250
        assert np.max(np.abs(probe.b - b0)) < 1e-250

    def test_non_finite_gradients_rejected(self):
        probe = LinearProbe.zeros(2, LS4)
        state = AdamState.zeros_like(probe)
        bad = np.zeros((4, 2))
        bad[0, 0] = np.nan
        with pytest.raises(TrainingDivergedError, match="non-finite"):
            adam_step(probe, bad, np.zeros(4), state, TrainConfig())


class TestTrainConfig:
    def test_defaults_follow_recipe(self):
        config = TrainConfig()
        assert config.learning_rate == 1e-4
        assert config.weight_decay == 1e-4
        assert config.batch_size == 1024
        assert config.max_epochs == 100
        assert config.patience == 5
        assert config.seed == 42

    def test_patience_bounded_by_epochs(self):
        with pytest.raises(ValidationError, match="patience"):
            TrainConfig(patience=11, max_epochs=10)

    def test_negative_lr_rejected(self):
        with pytest.raises(ValidationError, match="non-negative"):
            TrainConfig(learning_rate=-1.0)


class TestTraining:
    def test_separable_blobs_reach_full_train_accuracy(self):
        rng = np.random.default_rng(16)
        centers = balanced_centers(dim=64, sep=6.0)
        train, ls = blob_set(rng, centers, 125, "tr")
        val, _ = blob_set(rng, centers, 25, "va")
        probe, history = train_probe(train, val, "t", ls, TrainConfig())
        _, train_acc = evaluate(probe, train.vectors, labels_array(train, "t", ls))
        _, val_acc = evaluate(probe, val.vectors, labels_array(val, "t", ls))
        assert train_acc == 1.0
        assert val_acc >= 0.99
        assert any(e.train_acc == 1.0 and e.epoch < 100 for e in history.epochs)

    def test_early_stopping_on_rising_val_loss(self):
        # Validation labels are shifted by one class, so fitting the train
        # labels strictly increases validation loss from epoch 1 on.
        rng = np.random.default_rng(7)
        centers = balanced_centers(dim=8, sep=8.0)
        train, ls = blob_set(rng, centers, 50, "tr")
        val, _ = blob_set(rng, centers, 10, "va", label_shift=1)
        config = TrainConfig(learning_rate=0.05, max_epochs=50, patience=5, seed=1)
        probe, history = train_probe(train, val, "t", ls, config)

        losses = [e.val_loss for e in history.epochs]
        assert all(b > a for a, b in zip(losses, losses[1:])), losses
        assert len(history.epochs) == config.patience + 1
        assert history.stopped_early
        assert history.best_epoch == 1

        # The returned probe is the epoch-1 checkpoint: bit-identical to a
        # one-epoch run with the same seed.
        one_epoch = TrainConfig(learning_rate=0.05, max_epochs=1, patience=1, seed=1)
        probe1, _ = train_probe(train, val, "t", ls, one_epoch)
        assert np.array_equal(probe.W, probe1.W)
        assert np.array_equal(probe.b, probe1.b)

    def test_deterministic_given_seed(self):
        rng = np.random.default_rng(50)
        centers = balanced_centers(dim=16, sep=6.0)
        train, ls = blob_set(rng, centers, 30, "tr")
        val, _ = blob_set(rng, centers, 10, "va")
        config = TrainConfig(max_epochs=8, patience=8, batch_size=32)
        a, _ = train_probe(train, val, "t", ls, config)
        b, _ = train_probe(train, val, "t", ls, config)
        assert np.array_equal(a.W, b.W)
        assert np.array_equal(a.b, b.b)

    def test_minibatch_order_depends_on_seed(self):
        rng = np.random.default_rng(51)
        centers = balanced_centers(dim=16, sep=6.0)
        train, ls = blob_set(rng, centers, 30, "tr")
        val, _ = blob_set(rng, centers, 10, "va")
        a, _ = train_probe(train, val, "t", ls, TrainConfig(max_epochs=3, patience=3, batch_size=16, seed=1))
        b, _ = train_probe(train, val, "t", ls, TrainConfig(max_epochs=3, patience=3, batch_size=16, seed=2))
        assert not np.array_equal(a.W, b.W)

    def test_empty_split_rejected(self):
        rng = np.random.default_rng(52)
        centers = balanced_centers(dim=8, sep=6.0)
        train, ls = blob_set(rng, centers, 5, "tr")
        with pytest.raises(ValidationError, match="non-empty"):
            train_probe(train, train.subset([]), "t", ls, TrainConfig())

    def test_divergence_aborts_with_diagnostic(self):
        rng = np.random.default_rng(53)
        centers = balanced_centers(dim=8, sep=6.0)
        train, ls = blob_set(rng, centers, 20, "tr")
        val, _ = blob_set(rng, centers, 5, "va")
        config = TrainConfig(learning_rate=1e308, max_epochs=5, patience=5, batch_size=16)
        with np.errstate(over="ignore", invalid="ignore"):
            with pytest.raises(TrainingDivergedError):
                train_probe(train, val, "t", ls, config)


class TestCheckpoint:
    def test_roundtrip(self, tmp_path):
        rng = np.random.default_rng(54)
        probe = random_probe(rng, 4, 6, LS4)
        config = TrainConfig(learning_rate=3e-3, seed=11)
        write_probe(probe, config, tmp_path / "p.prb")
        back, back_config = read_probe(tmp_path / "p.prb")
        assert np.array_equal(back.W, probe.W.astype(np.float32))
        assert np.array_equal(back.b, probe.b.astype(np.float32))
        assert back.labelspace == probe.labelspace
        assert back_config == config

    def test_bad_magic(self, tmp_path):
        (tmp_path / "x.prb").write_bytes(b"WRONG" + b"\x00" * 16)
        with pytest.raises(FormatError, match="magic"):
            read_probe(tmp_path / "x.prb")

    def test_corrupt_hash_rejected(self, tmp_path):
        rng = np.random.default_rng(55)
        probe = random_probe(rng, 4, 6, LS4)
        write_probe(probe, TrainConfig(), tmp_path / "p.prb")
        raw = (tmp_path / "p.prb").read_bytes()
        patched = raw.replace(b'"task":"t"', b'"task":"u"')
        assert patched != raw
        (tmp_path / "bad.prb").write_bytes(patched)
        with pytest.raises(FormatError, match="hash"):
            read_probe(tmp_path / "bad.prb")

    def test_truncated_rejected(self, tmp_path):
        rng = np.random.default_rng(56)
        probe = random_probe(rng, 4, 6, LS4)
        write_probe(probe, TrainConfig(), tmp_path / "p.prb")
        raw = (tmp_path / "p.prb").read_bytes()
        (tmp_path / "cut.prb").write_bytes(raw[: len(raw) // 2])
        with pytest.raises(FormatError, match="truncated"):
            read_probe(tmp_path / "cut.prb")
