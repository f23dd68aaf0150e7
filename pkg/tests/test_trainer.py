import dataclasses
import io

import numpy as np
import pytest
import torch

from bbdrec.trainer import (ModelCheckpoint, TrainConfig, TrainingDivergedError,
                            apply_ablation, config_from_dict, make_state,
                            train, train_step)


class TestTrainConfig:
    def test_validation(self):
        with pytest.raises(ValueError):
            TrainConfig(T=4, m=0.1, lambda1=-1.0)
        with pytest.raises(ValueError):
            TrainConfig(T=4, m=0.1, patience=0)
        with pytest.raises(ValueError):
            TrainConfig(T=4, m=0.1, selection_metric="mrr@10")

    def test_config_from_dict_reports_all_problems(self):
        with pytest.raises(ValueError) as err:
            config_from_dict({"m": 0.1, "bogus": 3, "extra": 1})
        msg = str(err.value)
        assert "missing required config key: T" in msg
        assert "unknown config key: bogus" in msg
        assert "unknown config key: extra" in msg

    def test_ablation_presets(self):
        base = TrainConfig(T=4, m=0.1)
        assert apply_ablation(base, "wo_ldiff").lambda1 == 0.0
        assert apply_ablation(base, "wo_lrec").lambda2 == 0.0
        assert apply_ablation(base, "wo_enc").encoder_mode == "mean_pool"
        assert apply_ablation(base, "w_con").conditional_denoiser is True
        wo_bb = apply_ablation(base, "wo_bb")
        assert wo_bb.lambda1 == 0.0 and wo_bb.retrieval == "encoder"
        with pytest.raises(ValueError):
            apply_ablation(base, "nope")


class TestTrainStep:
    def test_zero_weights_leave_parameters_unchanged(self, tiny_splits, tiny_config):
        cfg = dataclasses.replace(tiny_config, lambda1=0.0, lambda2=0.0)
        state = make_state(cfg, tiny_splits.n_items)
        before = {k: v.clone() for k, v in state.model.state_dict().items()}
        train_step(state, tiny_splits.train[:32], np.random.default_rng(0))
        for k, v in state.model.state_dict().items():
            assert torch.equal(v, before[k]), k

    def test_loss_trajectory_deterministic(self, tiny_splits, tiny_config):
        def run():
            state = make_state(tiny_config, tiny_splits.n_items)
            rng = np.random.default_rng(7)
            return [train_step(state, tiny_splits.train[:64], rng)["loss"]
                    for _ in range(5)]
        assert run() == run()

    def test_loss_decreases_on_cycle_dataset(self, tiny_splits, tiny_config):
        state = make_state(tiny_config, tiny_splits.n_items)
        rng = np.random.default_rng(0)
        first = train_step(state, tiny_splits.train[:64], rng)["loss"]
        last = None
        for _ in range(200):
            last = train_step(state, tiny_splits.train[:64], rng)["loss"]
        assert last < first

    def test_empty_batch_rejected(self, tiny_splits, tiny_config):
        state = make_state(tiny_config, tiny_splits.n_items)
        with pytest.raises(ValueError):
            train_step(state, [], np.random.default_rng(0))

    def test_nonfinite_loss_aborts(self, tiny_splits, tiny_config):
        state = make_state(tiny_config, tiny_splits.n_items)
        with torch.no_grad():
            state.model.denoiser.fc2.weight.fill_(float("nan"))
        with pytest.raises(TrainingDivergedError):
            train_step(state, tiny_splits.train[:8], np.random.default_rng(0))

    def test_lambda_gating_of_gradients(self, tiny_splits, tiny_config):
        from bbdrec.trainer import batch_tensors
        state = make_state(tiny_config, tiny_splits.n_items)
        histories, targets = batch_tensors(tiny_splits.train[:16])
        rng = np.random.default_rng(0)
        t_draws = torch.as_tensor(rng.integers(1, 5, size=16))
        eps = torch.as_tensor(rng.standard_normal((16, 8)), dtype=torch.float32)
        loss, _, _ = state.model.training_loss(
            state.schedule, histories, targets, t_draws, eps, 0.0, 1.0)
        loss.backward()
        for p in state.model.denoiser.parameters():
            assert p.grad is None or torch.all(p.grad == 0)


class TestTrain:
    def test_early_stopping_with_frozen_model(self, tiny_splits, tiny_config):
        # Zero loss weights freeze the model, so the metric never improves
        # and patience=1 stops after the second epoch.
        cfg = dataclasses.replace(tiny_config, lambda1=0.0, lambda2=0.0,
                                  patience=1, max_epochs=50)
        stream = io.StringIO()
        ckpt = train(cfg, tiny_splits, log_stream=stream)
        assert len(ckpt.val_history) == 2
        assert ckpt.epoch == 1
        assert stream.getvalue().count("epoch=") == 2

    def test_best_checkpoint_has_best_metric(self, tiny_splits, tiny_config):
        ckpt = train(tiny_config, tiny_splits)
        assert ckpt.val_history[ckpt.epoch - 1] == max(ckpt.val_history)

    def test_deterministic_given_seed(self, tiny_splits, tiny_config):
        a = train(tiny_config, tiny_splits)
        b = train(tiny_config, tiny_splits)
        assert a.val_history == b.val_history
        for k, v in a.model_state.items():
            assert torch.equal(v, b.model_state[k])

    def test_empty_split_rejected(self, tiny_splits, tiny_config):
        import copy
        empty = copy.copy(tiny_splits)
        empty.train = []
        with pytest.raises(ValueError):
            train(tiny_config, empty)

    def test_checkpoint_roundtrip_bit_exact(self, tiny_splits, tiny_config, tmp_path):
        from bbdrec.evaluate import evaluate
        ckpt = train(tiny_config, tiny_splits)
        path = tmp_path / "ckpt.pt"
        ckpt.save(path)
        again = ModelCheckpoint.load(path)
        for k, v in ckpt.model_state.items():
            assert torch.equal(v, again.model_state[k]), k
        assert again.config == ckpt.config
        # Identical validation metric after the round trip.
        for c in (ckpt, again):
            gen = torch.Generator().manual_seed(0)
            report = evaluate(c.build_model(), c.schedule(),
                              tiny_splits.validation, ks=(10,), generator=gen,
                              with_slices=False)
            c._metric = report.metrics["hr@10"]
        assert ckpt._metric == again._metric
