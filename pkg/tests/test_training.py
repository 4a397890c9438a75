import json

import numpy as np
import pytest

from conftest import TINY_ENCODER, tiny_config
from metaqa import training
from metaqa.errors import ConfigError, NumericError
from metaqa.heads import AGSEN_PARAMS
from metaqa.simulator import generate_benchmark, separable_benchmark
from metaqa.tensor import Tensor
from metaqa.training import AdamW, TrainConfig, build_model, lr_at, selection_accuracy, train


def test_defaults():
    cfg = TrainConfig()
    assert (cfg.lr, cfg.batch_size, cfg.weight_decay, cfg.warmup_steps, cfg.epochs) == (5e-5, 6, 0.01, 500, 1)
    assert (cfg.alpha1, cfg.alpha2, cfg.theta) == (0.5, 1.0, 0.7)
    assert (cfg.beta1, cfg.beta2, cfg.adam_eps) == (0.9, 0.999, 1e-8)


def test_config_validation_and_round_trip():
    with pytest.raises(ConfigError):
        TrainConfig(lr=0)
    with pytest.raises(ConfigError):
        TrainConfig(batch_size=0)
    with pytest.raises(ConfigError):
        TrainConfig.from_dict({"learning_rate": 1e-3})
    cfg = tiny_config(seed=3)
    back = TrainConfig.from_dict(json.loads(json.dumps(cfg.to_dict())))
    assert back == cfg and back.digest() == cfg.digest()
    assert TrainConfig(disable_agsen_loss=True).loss.alpha1 == 0.0


def test_lr_schedule():
    cfg = TrainConfig(lr=1.0, warmup_steps=4)
    lrs = [lr_at(s, 12, cfg) for s in range(13)]
    assert lrs[:5] == [0.0, 0.25, 0.5, 0.75, 1.0]
    assert lrs[12] == 0.0
    assert all(a >= b for a, b in zip(lrs[4:], lrs[5:]))
    assert lr_at(8, 12, cfg) == pytest.approx(0.5)


def test_adamw_first_step_and_decay():
    cfg = TrainConfig(lr=0.1, weight_decay=0.5)
    w = Tensor(np.array([[1.0, -2.0]]), requires_grad=True)
    b = Tensor(np.array([3.0]), requires_grad=True)
    w.grad, b.grad = np.array([[0.5, -4.0]]), np.array([2.0])
    AdamW({"w": w, "b": b}, cfg).step(0.1)
    # bias-corrected first step moves each coordinate by lr * g / (|g| + eps)
    expect_w = np.array([[1.0, -2.0]]) * (1 - 0.1 * 0.5) - 0.1 * np.sign([[0.5, -4.0]])
    np.testing.assert_allclose(w.data, expect_w, rtol=1e-7)
    np.testing.assert_allclose(b.data, [3.0 - 0.1], rtol=1e-7)  # 1-D: no decay


def test_separable_toy_learns_in_fifty_steps():
    splits = generate_benchmark(separable_benchmark(150, 50), seed=0)
    ckpt = train(splits["train"], None, tiny_config(
        encoder=TINY_ENCODER.__class__(hidden=32, layers=2, heads=2, ffn=64, max_len=64)))
    assert ckpt.metadata["steps"] == 50
    assert selection_accuracy(ckpt.to_model(), splits["train"], 0.7) >= 0.9


def test_same_seed_identical_checkpoint(tiny_bench, tiny_ckpt):
    again = train(tiny_bench["train"], tiny_bench["dev"], tiny_config())
    assert again.to_bytes() == tiny_ckpt.to_bytes()
    other = train(tiny_bench["train"], tiny_bench["dev"], tiny_config(seed=1))
    assert other.to_bytes() != tiny_ckpt.to_bytes()


def test_metadata(tiny_ckpt, tiny_bench):
    meta = tiny_ckpt.metadata
    n = len(tiny_bench["train"])
    assert meta["steps"] == -(-n // 6) and meta["train_size"] == n
    assert meta["config_hash"] == tiny_config().digest()
    assert set(meta["substreams"]) == {"init", "shuffle", "dropout", "simulator"}
    assert len(meta["loss_curve"]) == -(-meta["steps"] // 5)
    assert meta["dev_history"][-1][0] == meta["steps"]


def test_loss_decreases(tiny_ckpt):
    curve = tiny_ckpt.metadata["loss_curve"]
    assert np.mean(curve[-3:]) < np.mean(curve[:3])


def test_periodic_dev_evaluation(tiny_bench):
    ckpt = train(tiny_bench["train"], tiny_bench["dev"], tiny_config(eval_every=10))
    steps = [s for s, _ in ckpt.metadata["dev_history"]]
    assert steps == [10, 20, 30, 30]


def test_disable_agsen_loss_freezes_heads(tiny_bench):
    cfg = tiny_config(disable_agsen_loss=True)
    init = build_model(tiny_bench["train"], cfg)
    ckpt = train(tiny_bench["train"], None, cfg)
    for name in AGSEN_PARAMS:
        assert ckpt.params[name].tobytes() == init.params[name].data.tobytes()
    assert ckpt.params["anssel.weight"].tobytes() != init.params["anssel.weight"].data.tobytes()


def test_nan_loss_aborts_with_diagnostics(tiny_bench, monkeypatch):
    real = training.total_loss
    calls = {"n": 0}

    def poisoned(*args, **kw):
        out = real(*args, **kw)
        calls["n"] += 1
        if calls["n"] == 3:
            out.total.data[...] = np.nan
        return out

    monkeypatch.setattr(training, "total_loss", poisoned)
    with pytest.raises(NumericError, match=r"step 2 \(lr=.*\), batch \['train-"):
        train(tiny_bench["train"], None, tiny_config())


def test_agent_mismatch_rejected(tiny_bench):
    dev = tiny_bench["dev"]
    other = dev.__class__(dev.examples[:0], ("x",), "dev")
    with pytest.raises(ConfigError):
        train(tiny_bench["train"], other, tiny_config())
