import math

import numpy as np
import pytest

import condgen.trainer as trainer_mod
from condgen.autodiff import BatchView
from condgen.datasets import gen_helix, gen_linear_gaussian
from condgen.generator import GeneratorConfig, init_generator
from condgen.kernels import KernelConfig, median_heuristic_bandwidth
from condgen.trainer import (
    AdamWConfig,
    AdamWState,
    TrainConfig,
    TrainingDivergedError,
    adamw_step,
    batch_loss_and_grads,
    default_k_batch,
    train,
)


def small_gen_config(**kw) -> GeneratorConfig:
    defaults = dict(d=1, m=2, p=1, hidden=(8,), seed=0)
    defaults.update(kw)
    return GeneratorConfig(**defaults)


class TestAdamW:
    def test_single_step_hand_trace(self):
        cfg = AdamWConfig()
        lr, g = 0.1, 0.5
        params = [np.array([1.0])]
        new, state = adamw_step(params, [np.array([g])], AdamWState.init_like(params), cfg, lr)
        m = (1 - cfg.beta1) * g
        v = (1 - cfg.beta2) * g * g
        mhat = m / (1 - cfg.beta1)
        vhat = v / (1 - cfg.beta2)
        want = 1.0 * (1 - lr * cfg.weight_decay) - lr * mhat / (math.sqrt(vhat) + cfg.eps)
        assert new[0][0] == pytest.approx(want, abs=1e-15)
        assert state.step == 1
        assert state.m[0][0] == pytest.approx(m, abs=1e-18)
        assert state.v[0][0] == pytest.approx(v, abs=1e-18)

    def test_zero_gradient_is_pure_decay(self):
        cfg = AdamWConfig(weight_decay=0.04)
        params = [np.array([2.0, -3.0]), np.array([[0.5]])]
        grads = [np.zeros(2), np.zeros((1, 1))]
        new, _ = adamw_step(params, grads, AdamWState.init_like(params), cfg, 0.25)
        for p, q in zip(params, new):
            np.testing.assert_array_equal(q, p * (1.0 - 0.25 * 0.04))

    def test_two_steps_match_reference_loop(self):
        cfg = AdamWConfig(beta1=0.8, beta2=0.95, eps=1e-8, weight_decay=0.1)
        lr, g = 0.05, -1.25
        p = 0.7
        m = v = 0.0
        for t in (1, 2):
            m = cfg.beta1 * m + (1 - cfg.beta1) * g
            v = cfg.beta2 * v + (1 - cfg.beta2) * g * g
            mhat = m / (1 - cfg.beta1**t)
            vhat = v / (1 - cfg.beta2**t)
            p = p * (1 - lr * cfg.weight_decay) - lr * mhat / (math.sqrt(vhat) + cfg.eps)
        params, state = [np.array([0.7])], AdamWState.init_like([np.array([0.7])])
        for _ in range(2):
            params, state = adamw_step(params, [np.array([g])], state, cfg, lr)
        assert params[0][0] == pytest.approx(p, abs=1e-15)
        assert state.step == 2

    def test_length_mismatch_rejected(self):
        params = [np.zeros(2)]
        with pytest.raises(ValueError, match="matching lengths"):
            adamw_step(params, [], AdamWState.init_like(params), AdamWConfig(), 0.1)

    def test_config_validation(self):
        with pytest.raises(ValueError, match="betas"):
            AdamWConfig(beta1=1.0)
        with pytest.raises(ValueError, match="eps"):
            AdamWConfig(eps=0.0)
        with pytest.raises(ValueError, match="weight_decay"):
            AdamWConfig(weight_decay=-0.1)


class TestTrainConfig:
    def test_default_k_batch_rule(self):
        assert default_k_batch(256) == 7
        assert default_k_batch(8) == 4
        assert default_k_batch(1000) == 10

    def test_resolution(self):
        assert TrainConfig(epochs=1).resolved_k_batch() == 7
        assert TrainConfig(epochs=1, k_batch=3).resolved_k_batch() == 3

    def test_validation(self):
        with pytest.raises(ValueError, match="epochs"):
            TrainConfig(epochs=-1)
        with pytest.raises(ValueError, match="batch_size"):
            TrainConfig(epochs=1, batch_size=1)
        with pytest.raises(ValueError, match="k_batch"):
            TrainConfig(epochs=1, batch_size=8, k_batch=8)
        with pytest.raises(ValueError, match="learning_rate"):
            TrainConfig(epochs=1, learning_rate=0.0)
        with pytest.raises(ValueError, match="kernel"):
            TrainConfig(epochs=1, kernel="rbf")


class TestBatchLossAndGrads:
    def test_too_small_batch_rejected(self):
        ds = gen_linear_gaussian(4, 1.0, 0.0, 1.0, 0)
        net = init_generator(small_gen_config())
        batch = BatchView(x=ds.x, y=ds.y, eta=np.zeros((4, 2)))
        with pytest.raises(ValueError, match="k_batch"):
            batch_loss_and_grads(net, batch, KernelConfig("gaussian", 1.0), 4)

    def test_returns_grad_per_parameter(self):
        ds = gen_linear_gaussian(16, 1.0, 0.0, 1.0, 1)
        net = init_generator(small_gen_config())
        batch = BatchView(x=ds.x, y=ds.y, eta=np.zeros((16, 2)))
        loss, grads = batch_loss_and_grads(net, batch, KernelConfig("gaussian", 1.0), 3)
        assert math.isfinite(loss)
        assert len(grads) == len(net.parameters())
        for g, p in zip(grads, net.parameters()):
            assert g.shape == p.shape


class TestTrain:
    def test_step_count_includes_viable_partial_batch(self):
        ds = gen_linear_gaussian(10, 1.0, 0.0, 0.5, 2)
        cfg = TrainConfig(epochs=3, batch_size=4, k_batch=1, seed=1)
        _, report = train(ds, small_gen_config(), cfg)
        assert len(report.step_records) == 3 * math.ceil(10 / 4)
        assert [r.step for r in report.step_records] == list(range(1, 10))
        assert [r.epoch for r in report.step_records] == [1, 1, 1, 2, 2, 2, 3, 3, 3]

    def test_partial_batch_dropped_when_below_k_plus_one(self):
        ds = gen_linear_gaussian(10, 1.0, 0.0, 0.5, 2)
        cfg = TrainConfig(epochs=2, batch_size=4, k_batch=2, seed=1)
        _, report = train(ds, small_gen_config(), cfg)
        assert len(report.step_records) == 2 * 2  # trailing 2-row batch dropped

    def test_zero_epochs_returns_initial_net(self):
        ds = gen_linear_gaussian(12, 1.0, 0.0, 0.5, 3)
        gen_cfg = small_gen_config(seed=11)
        net, report = train(ds, gen_cfg, TrainConfig(epochs=0, batch_size=8, k_batch=2))
        assert report.step_records == ()
        assert report.epoch_mean_losses == ()
        for a, b in zip(net.parameters(), init_generator(gen_cfg).parameters()):
            np.testing.assert_array_equal(a, b)

    def test_bitwise_deterministic(self):
        ds = gen_helix(48, 0.2, 5)
        gen_cfg = GeneratorConfig(d=1, m=2, p=2, hidden=(8,), seed=3)
        cfg = TrainConfig(epochs=2, batch_size=16, k_batch=3, seed=7)
        net_a, rep_a = train(ds, gen_cfg, cfg)
        net_b, rep_b = train(ds, gen_cfg, cfg)
        for a, b in zip(net_a.parameters(), net_b.parameters()):
            np.testing.assert_array_equal(a, b)
        assert [r.loss for r in rep_a.step_records] == [r.loss for r in rep_b.step_records]
        assert rep_a.checkpoint_sha256 == rep_b.checkpoint_sha256

    def test_seed_changes_trajectory(self):
        ds = gen_helix(48, 0.2, 5)
        gen_cfg = GeneratorConfig(d=1, m=2, p=2, hidden=(8,), seed=3)
        _, rep_a = train(ds, gen_cfg, TrainConfig(epochs=1, batch_size=16, k_batch=3, seed=7))
        _, rep_b = train(ds, gen_cfg, TrainConfig(epochs=1, batch_size=16, k_batch=3, seed=8))
        assert [r.loss for r in rep_a.step_records] != [r.loss for r in rep_b.step_records]

    def test_median_auto_resolves_from_first_batch(self):
        ds = gen_helix(32, 0.2, 9)
        cfg = TrainConfig(epochs=1, batch_size=32, k_batch=3, seed=2, kernel="median-auto")
        gen_cfg = GeneratorConfig(d=1, m=2, p=2, hidden=(8,), seed=0)
        _, report = train(ds, gen_cfg, cfg)
        assert report.kernel.family == "gaussian"
        # single full-size batch: same multiset of pairwise distances as the dataset
        assert report.kernel.bandwidth == median_heuristic_bandwidth(ds.y)

    def test_explicit_kernel_is_kept(self):
        ds = gen_linear_gaussian(16, 1.0, 0.0, 0.5, 4)
        kern = KernelConfig("gaussian", 0.75)
        _, report = train(
            ds, small_gen_config(), TrainConfig(epochs=1, batch_size=8, k_batch=2, kernel=kern)
        )
        assert report.kernel == kern

    def test_graph_rebuilt_per_batch(self, monkeypatch):
        calls = []
        orig = trainer_mod.build_knn_graph

        def spy(points, k, **kw):
            calls.append((points.shape[0], k))
            return orig(points, k, **kw)

        monkeypatch.setattr(trainer_mod, "build_knn_graph", spy)
        ds = gen_linear_gaussian(20, 1.0, 0.0, 0.5, 6)
        _, report = train(
            ds, small_gen_config(), TrainConfig(epochs=2, batch_size=8, k_batch=2, seed=0)
        )
        assert len(calls) == len(report.step_records)
        assert calls == [(8, 2), (8, 2), (4, 2)] * 2

    def test_resample_noise_changes_later_epochs(self):
        ds = gen_linear_gaussian(24, 1.0, 0.0, 0.5, 8)
        base = dict(epochs=2, batch_size=12, k_batch=3, seed=5)
        _, frozen = train(ds, small_gen_config(), TrainConfig(**base))
        _, redrawn = train(ds, small_gen_config(), TrainConfig(**base, resample_noise=True))
        a = [r.loss for r in frozen.step_records]
        b = [r.loss for r in redrawn.step_records]
        assert a[:1] != b[:1] or a[2:] != b[2:]
        _, redrawn2 = train(ds, small_gen_config(), TrainConfig(**base, resample_noise=True))
        assert b == [r.loss for r in redrawn2.step_records]

    def test_training_reduces_loss_on_easy_task(self):
        ds = gen_linear_gaussian(128, 1.0, 0.0, 0.25, 10)
        cfg = TrainConfig(epochs=30, batch_size=64, k_batch=4, learning_rate=5e-3, seed=3)
        _, report = train(ds, small_gen_config(hidden=(16,)), cfg)
        assert report.epoch_mean_losses[-1] < 0.5 * report.epoch_mean_losses[0]

    def test_divergence_raises_with_step_number(self):
        ds = gen_linear_gaussian(32, 1.0, 0.0, 0.5, 12)
        cfg = TrainConfig(epochs=1, batch_size=16, k_batch=3, learning_rate=1e200)
        with np.errstate(all="ignore"), pytest.raises(TrainingDivergedError, match=r"step 2"):
            train(ds, small_gen_config(), cfg)

    def test_dimension_mismatch_rejected(self):
        ds = gen_helix(16, 0.1, 0)  # p=2
        with pytest.raises(ValueError, match="do not match"):
            train(ds, small_gen_config(), TrainConfig(epochs=1, batch_size=8, k_batch=2))

    def test_batch_size_exceeding_dataset_rejected(self):
        ds = gen_linear_gaussian(8, 1.0, 0.0, 0.5, 0)
        with pytest.raises(ValueError, match="exceeds"):
            train(ds, small_gen_config(), TrainConfig(epochs=1, batch_size=16, k_batch=2))

    def test_report_bookkeeping(self):
        ds = gen_linear_gaussian(16, 1.0, 0.0, 0.5, 1)
        _, report = train(
            ds, small_gen_config(), TrainConfig(epochs=2, batch_size=8, k_batch=2, seed=0)
        )
        assert all(r.wall_ms >= 0.0 for r in report.step_records)
        assert report.wall_time_s > 0.0
        assert len(report.epoch_mean_losses) == 2
        first_epoch = [r.loss for r in report.step_records if r.epoch == 1]
        assert report.epoch_mean_losses[0] == pytest.approx(np.mean(first_epoch))
        assert len(report.checkpoint_sha256) == 64
