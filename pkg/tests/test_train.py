import math

import numpy as np
import pytest

from serkit.dataset import read_manifest, select_split
from serkit.errors import EmptySplit, NonFiniteGradient, NonFiniteLoss
from serkit.features import load_features
from serkit.models import ResNetClassifier, load_model
from serkit.nn import Dense, Param
from serkit.train import (
    Adam,
    TrainConfig,
    batches,
    lr_schedule,
    progressive_train,
    read_epochs_csv,
    train_model,
    train_network,
)

# -- Adam ----------------------------------------------------------------------

def test_adam_zero_gradient_is_no_op(rng):
    params = [Param(rng.normal(size=(3, 2))), Param(rng.normal(size=4))]
    before = [p.value.copy() for p in params]
    Adam(params).step(0.001)
    for p, b in zip(params, before):
        np.testing.assert_array_equal(p.value, b)


def test_adam_first_step_by_hand():
    p = Param(np.array([1.0]))
    p.grad[...] = 1.0
    Adam([p]).step(0.001)
    # m_hat = 1, v_hat = 1 at t = 1
    assert p.value[0] == pytest.approx(1.0 - 0.001 / (1.0 + 1e-8), abs=1e-15)
    assert p.value[0] == pytest.approx(0.999)


def test_adam_symmetric_parameters_stay_equal(rng):
    a, b = Param(np.full(3, 0.5)), Param(np.full(3, 0.5))
    opt = Adam([a, b])
    for _ in range(5):
        g = rng.normal(size=3)
        a.grad[...] = g
        b.grad[...] = g
        opt.step(0.01)
    np.testing.assert_array_equal(a.value, b.value)
    assert opt.t == 5


def test_adam_rejects_non_finite_gradient():
    p = Param(np.zeros(2), name="fc.weight")
    p.grad[...] = [0.0, np.inf]
    with pytest.raises(NonFiniteGradient, match="fc.weight"):
        Adam([p]).step(0.001)


# -- schedule and batching -----------------------------------------------------

def test_lr_schedule_values():
    cfg = TrainConfig()
    assert lr_schedule(0, cfg) == 0.001
    assert lr_schedule(1, cfg) == pytest.approx(0.0009, rel=1e-12)
    assert lr_schedule(10, cfg) == pytest.approx(3.4868e-4, rel=1e-4)
    assert lr_schedule(10, cfg) == pytest.approx(0.001 * math.pow(0.9, 10), rel=1e-12)
    lrs = [lr_schedule(e, cfg) for e in range(50)]
    assert all(b < a for a, b in zip(lrs, lrs[1:]))
    with pytest.raises(ValueError):
        lr_schedule(-1, cfg)


@pytest.mark.parametrize("kw", [dict(lr=0.0), dict(lr_decay=1.5), dict(lr_decay=0.0), dict(batch_size=0)])
def test_config_validation(kw):
    with pytest.raises(ValueError):
        TrainConfig(**kw)


def test_config_defaults():
    cfg = TrainConfig()
    assert (cfg.batch_size, cfg.lr, cfg.lr_decay) == (64, 0.001, 0.9)
    assert (cfg.adam_beta1, cfg.adam_beta2, cfg.adam_eps) == (0.9, 0.999, 1e-8)
    assert cfg.mixup_alpha == 0.4


@pytest.mark.parametrize("n,bs", [(10, 4), (130, 64), (65, 64), (3, 64), (64, 64)])
def test_batches_cover_each_index_once(n, bs):
    out = batches(np.arange(n), bs)
    np.testing.assert_array_equal(np.sort(np.concatenate(out)), np.arange(n))
    assert all(len(b) >= 2 for b in out) or n == 1
    assert all(len(b) <= bs + 1 for b in out)


# -- loop ----------------------------------------------------------------------

def _dense_problem(rng, n=24):
    X = rng.normal(size=(n, 5))
    y = (X[:, 0] > 0).astype(int) + 2 * (X[:, 1] > 0).astype(int)
    return X, y


def test_each_example_is_a_mixup_anchor_once_per_epoch(rng):
    X, y = _dense_problem(rng)
    seen = []

    def make_batch(idx, epoch, training):
        if training:
            seen.append((epoch, idx.copy()))
        return X[idx]

    cfg = TrainConfig(epochs=3, batch_size=5, mixup_enabled=True, seed=3)
    train_network(Dense(5, 4, rng=rng), make_batch, y, 4, cfg)
    for epoch in range(3):
        got = np.concatenate([i for e, i in seen if e == epoch])
        np.testing.assert_array_equal(np.sort(got), np.arange(len(y)))


@pytest.mark.parametrize("mixup", [False, True])
def test_same_seed_same_logs(rng, mixup):
    X, y = _dense_problem(rng)
    runs = []
    for _ in range(2):
        net = Dense(5, 4, rng=np.random.default_rng(0))
        cfg = TrainConfig(epochs=4, batch_size=8, mixup_enabled=mixup, seed=11)
        logs, _ = train_network(net, lambda idx, e, t: X[idx], y, 4, cfg,
                                make_val=lambda idx: X[idx], y_val=y)
        runs.append([(e.train_loss, e.val_loss, e.val_accuracy, e.lr) for e in logs])
    assert runs[0] == runs[1]


def test_non_finite_loss_is_reported(rng):
    X, y = _dense_problem(rng)
    X[0, 0] = np.nan
    with pytest.raises(NonFiniteLoss):
        train_network(Dense(5, 4, rng=rng), lambda idx, e, t: X[idx], y, 4, TrainConfig(epochs=1))


def test_empty_training_split():
    with pytest.raises(EmptySplit):
        train_network(Dense(2, 2), lambda idx, e, t: None, np.array([], int), 2, TrainConfig(epochs=1))


def test_best_state_tracks_best_validation(rng):
    X, y = _dense_problem(rng, 40)
    logs, best = train_network(Dense(5, 4, rng=rng), lambda idx, e, t: X[idx], y, 4,
                               TrainConfig(epochs=6, batch_size=8, lr=0.05),
                               make_val=lambda idx: X[idx], y_val=y)
    accs = [e.val_accuracy for e in logs]
    net = Dense(5, 4)
    net.load_state_dict(best)
    net.eval()
    assert np.mean(np.argmax(net.forward(X), 1) == y) == pytest.approx(max(accs))


# -- run directories and progressive resizing ----------------------------------

def test_train_model_writes_run_directory(tiny_corpus, tmp_path):
    cfg = TrainConfig(epochs=2, batch_size=8)
    model, logs = train_model("cnn_lite", tiny_corpus / "manifest.csv", tiny_corpus / "logmel", cfg,
                              out_dir=tmp_path, stage_sizes=(64,))
    for name in ("config.txt", "epochs.csv", "timing.csv", "best.ckpt", "last.ckpt"):
        assert (tmp_path / name).is_file()
    assert len(logs) == 2
    rows = read_epochs_csv(tmp_path / "epochs.csv")
    assert [r.train_loss for r in rows] == [e.train_loss for e in logs]
    assert "wall" not in (tmp_path / "epochs.csv").read_text()
    text = (tmp_path / "config.txt").read_text()
    assert "kind=cnn_lite" in text and "batch_size=8" in text
    assert load_model(tmp_path / "best.ckpt").kind == "cnn_lite"


def test_train_model_rejects_missing_train_split(tiny_corpus):
    entries = [e for e in read_manifest(tiny_corpus / "manifest.csv") if e.split != "train"]
    with pytest.raises(EmptySplit):
        train_model("svm", entries, tiny_corpus / "mfcc", TrainConfig())


def test_svm_run(tiny_corpus, tmp_path):
    model, logs = train_model("svm", tiny_corpus / "manifest.csv", tiny_corpus / "mfcc", TrainConfig(),
                              out_dir=tmp_path)
    assert logs == []
    assert (tmp_path / "best.ckpt").is_file()


def test_single_stage_progressive_equals_plain_training(tiny_corpus):
    cfg = TrainConfig(epochs=2, batch_size=8)
    args = ("cnn_lite", tiny_corpus / "manifest.csv", tiny_corpus / "logmel", cfg)
    _, a = train_model(*args, stage_sizes=(64,))
    _, b = progressive_train(*args, stage_sizes=(64,))
    assert [(e.train_loss, e.val_loss) for e in a] == [(e.train_loss, e.val_loss) for e in b]


def test_progressive_requires_cnn(tiny_corpus):
    with pytest.raises(ValueError):
        progressive_train("lstm", tiny_corpus / "manifest.csv", tiny_corpus / "logmel", TrainConfig())


def test_progressive_stages_and_warm_start(tiny_corpus):
    entries = read_manifest(tiny_corpus / "manifest.csv")
    X, y = load_features(select_split(entries, "train"), tiny_corpus / "logmel")
    Xv, yv = load_features(select_split(entries, "val"), tiny_corpus / "logmel")

    two_stage = ResNetClassifier(stage_sizes=(64, 96), epochs=3, batch_size=8, seed=1)
    two_stage.fit(X, y, eval_set=(Xv, yv))
    assert [e.stage for e in two_stage.history_] == [0, 0, 0, 1, 1, 1]
    # each stage restarts its schedule
    assert two_stage.history_[3].lr == two_stage.history_[0].lr == 0.001

    # weights entering stage 2, scored at the stage-2 size, against a fresh network
    stage1 = ResNetClassifier(stage_sizes=(64,), epochs=3, batch_size=8, seed=1,
                              restore_best=False).fit(X, y, eval_set=(Xv, yv))
    stage1.set_params(stage_sizes=(64, 96))
    fresh = ResNetClassifier(stage_sizes=(64, 96), seed=1).init_network(X[0].shape[1])
    fresh.input_mean_, fresh.input_std_ = stage1.input_mean_, stage1.input_std_
    assert stage1.score(Xv, yv) >= fresh.score(Xv, yv)
