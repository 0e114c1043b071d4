#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
Tests for the losses, the training phases and the checkpoints.
"""

import copy
import json
import os
import tempfile
import unittest

import mpmath
import numpy as np
import numpy.testing as npt
import torch

from pyRearrange.errors import (CorruptCheckpoint, NonBinaryTarget,
                                NonFiniteLoss, ShapeMismatch,
                                VersionMismatch)
from pyRearrange.models import EncoderConfig, ModelConfig, build_model
from pyRearrange.symbolic import (Pianoroll, project_instrument_roll,
                                  project_pitch_roll)
from pyRearrange.training import (Batch, ChunkDataset, Trainer, TrainConfig,
                                  adversarial_zero_loss, bce_loss, frozen,
                                  load_checkpoint, load_probe,
                                  load_train_config, make_batch,
                                  make_optimizers, save_checkpoint,
                                  save_probe, train_probe, train_step_duo,
                                  train_step_unet)


def small_config(kind="unet"):
    """Return a narrow model configuration."""
    return ModelConfig(kind=kind, encoder=EncoderConfig(channels=(4, 4, 4, 2)),
                       code_decoder_channels=(8, 8), probe_channels=8)


def random_batch(seed=0, batch=2, T=16, M=5):
    """Return a batch of random inputs and sparse random targets."""
    g = torch.Generator().manual_seed(seed)
    cqt = torch.rand((batch, 1, 88, T), generator=g)
    roll = (torch.rand((batch, 88, T, M), generator=g) < 0.05).float()
    return Batch(cqt, roll)


def snapshot(model):
    """Return a copy of the parameters of each group."""
    return {name: [p.detach().clone() for p in params]
            for name, params in model.parameter_groups().items()}


def unchanged(before, after, name):
    """Return whether a group has exactly the same parameters."""
    return all(torch.equal(a, b) for a, b in zip(before[name], after[name]))


def set_lr(optimizer, lr):
    """Set the learning rate of every parameter group of an optimizer."""
    for group in optimizer.param_groups:
        group["lr"] = lr


class TestLosses(unittest.TestCase):
    """Class to test the binary cross entropy losses."""

    def test_bce_values(self):
        """Test the closed form cases of the loss."""
        loss = bce_loss(torch.zeros(4), torch.ones(4))
        self.assertIsNone(npt.assert_allclose(float(loss), 4*np.log(2),
                                              rtol=1e-6))
        targets = torch.tensor([1.0, 0.0, 1.0, 0.0])
        logits = 50*(2*targets - 1)
        self.assertLess(float(bce_loss(logits, targets)), 1e-12)

    def test_bce_oracle(self):
        """Test a random case against a high precision evaluation."""
        rng = np.random.default_rng(5)
        x = rng.normal(scale=3, size=(2, 3))
        y = (rng.random((2, 3)) < 0.5).astype(float)
        y[0, 0], y[0, 1] = 1, 0

        mpmath.mp.dps = 50
        ref = mpmath.mpf(0)
        for xi, yi in zip(x.ravel(), y.ravel()):
            s = 1/(1 + mpmath.exp(-mpmath.mpf(xi)))
            ref -= yi*mpmath.log(s) + (1 - yi)*mpmath.log(1 - s)
        loss = bce_loss(torch.tensor(x), torch.tensor(y))
        self.assertIsNone(npt.assert_allclose(float(loss), float(ref),
                                              rtol=1e-12))

    def test_bce_gradient(self):
        """Test the gradient against central finite differences."""
        rng = np.random.default_rng(6)
        x = torch.tensor(rng.normal(size=(3, 4)), requires_grad=True)
        y = torch.tensor((rng.random((3, 4)) < 0.5).astype(float))
        bce_loss(x, y).backward()

        eps = 1e-4
        fd = np.zeros((3, 4))
        with torch.no_grad():
            for i in range(3):
                for j in range(4):
                    xp = x.detach().clone()
                    xm = x.detach().clone()
                    xp[i, j] += eps
                    xm[i, j] -= eps
                    fd[i, j] = float(bce_loss(xp, y) - bce_loss(xm, y))/(2*eps)
        self.assertIsNone(npt.assert_allclose(x.grad.numpy(), fd, rtol=1e-3))
        self.assertIsNone(npt.assert_allclose(
            x.grad.numpy(), torch.sigmoid(x).detach().numpy() - y.numpy(),
            rtol=1e-8, atol=1e-12))

    def test_bce_errors(self):
        """Test shape and target validation."""
        with self.assertRaises(ShapeMismatch):
            bce_loss(torch.zeros(4), torch.zeros(5))
        with self.assertRaises(NonBinaryTarget):
            bce_loss(torch.zeros(4), torch.full((4,), 0.5))

    def test_zero_target_loss(self):
        """Test the adversarial loss against all-zero targets."""
        self.assertLess(float(adversarial_zero_loss(torch.full((6,), -50.0))),
                        1e-12)
        self.assertIsNone(npt.assert_allclose(
            float(adversarial_zero_loss(torch.zeros(4))), 4*np.log(2),
            rtol=1e-6))
        x = torch.randn(3, 7, generator=torch.Generator().manual_seed(1))
        self.assertEqual(float(adversarial_zero_loss(x)),
                         float(bce_loss(x, torch.zeros_like(x))))


class TestBatches(unittest.TestCase):
    """Class to test batches, configurations and helpers."""

    def test_derived_targets(self):
        """Test the instrument and pitch rolls of a batch."""
        rng = np.random.default_rng(0)
        data = rng.random((88, 16, 5)) < 0.05
        roll = Pianoroll(data)
        batch = make_batch([(torch.zeros(1, 88, 16), roll),
                            (torch.zeros(1, 88, 16), roll)])
        self.assertEqual(batch.T, 16)
        self.assertIsNone(npt.assert_array_equal(
            batch.instrument[1].numpy(),
            project_instrument_roll(roll).data.astype(np.float32)))
        self.assertIsNone(npt.assert_array_equal(
            batch.pitch[0].numpy(),
            project_pitch_roll(roll).data.astype(np.float32)))

    def test_frozen(self):
        """Test that freezing is undone on exit."""
        module = torch.nn.Sequential(torch.nn.Linear(2, 2),
                                     torch.nn.BatchNorm1d(2)).train()
        with frozen(module):
            self.assertFalse(module.training)
            self.assertFalse(any(p.requires_grad
                                 for p in module.parameters()))
        self.assertTrue(module.training)
        self.assertTrue(all(p.requires_grad for p in module.parameters()))

    def test_train_config(self):
        """Test training settings and their files."""
        cfg = TrainConfig()
        self.assertEqual((cfg.learning_rate, cfg.momentum, cfg.batch_size),
                         (0.005, 0.9, 16))
        with self.assertRaises(ValueError):
            TrainConfig(momentum=1.0)
        with self.assertRaises(ValueError):
            TrainConfig(adversarial_weight=-1)
        with self.assertRaises(ValueError):
            TrainConfig.from_mapping({"lr": 0.1})
        with tempfile.TemporaryDirectory() as tmp:
            path = os.path.join(tmp, "train.yaml")
            with open(path, "w", encoding="utf-8") as f:
                f.write("learning_rate: 0.001\nmodel_kind: duo\n")
            cfg = load_train_config(path)
        self.assertEqual((cfg.learning_rate, cfg.model_kind), (0.001, "duo"))


class TestDuoSteps(unittest.TestCase):
    """Class to test the training phases of DuoED."""

    def setUp(self):
        self.model = build_model("duo", small_config("duo"), seed=0).train()
        self.batch = random_batch()

    def test_adversarial_isolation(self):
        """Test that the adversarial phase only moves the encoders."""
        cfg = TrainConfig(model_kind="duo", momentum=0.0,
                          learning_rate=1e-3)
        optimizers = make_optimizers(self.model, cfg)
        set_lr(optimizers["reconstruct"], 0.0)
        before = snapshot(self.model)
        report = train_step_duo(self.model, optimizers, self.batch, cfg)
        after = snapshot(self.model)
        for name in ("D_roll", "D_t", "D_p"):
            self.assertTrue(unchanged(before, after, name))
        self.assertFalse(unchanged(before, after, "E_t"))
        self.assertFalse(unchanged(before, after, "E_p"))
        self.assertGreater(report.timbre_adv, 0)
        self.assertGreater(report.pitch_adv, 0)

    def test_zero_weight(self):
        """Test that a zero adversarial weight skips the adversarial phase."""
        other = copy.deepcopy(self.model)
        cfg_zero = TrainConfig(model_kind="duo", adversarial_weight=0.0)
        cfg_off = TrainConfig(model_kind="duo", adversarial=False)
        report = train_step_duo(self.model,
                                make_optimizers(self.model, cfg_zero),
                                self.batch, cfg_zero)
        train_step_duo(other, make_optimizers(other, cfg_off), self.batch,
                       cfg_off)
        for a, b in zip(self.model.parameters(), other.parameters()):
            self.assertTrue(torch.equal(a, b))
        self.assertEqual((report.timbre_adv, report.pitch_adv), (0.0, 0.0))

    def test_descent(self):
        """Test that a small step lowers the reconstruction losses."""
        cfg = TrainConfig(model_kind="duo", adversarial=False,
                          learning_rate=1e-5, momentum=0.0)

        def total():
            with torch.no_grad():
                x, _ = self.model.pad(self.batch.cqt)
                z_t, z_p = self.model.encode(x)
                return float(bce_loss(self.model.decode_roll(z_t, z_p),
                                      self.batch.roll)
                             + bce_loss(self.model.timbre_logits(z_t),
                                        self.batch.instrument)
                             + bce_loss(self.model.pitch_logits(z_p),
                                        self.batch.pitch))

        start = total()
        train_step_duo(self.model, make_optimizers(self.model, cfg),
                       self.batch, cfg)
        self.assertLess(total(), start)

    def test_non_finite(self):
        """Test that a diverging loss aborts the step."""
        cfg = TrainConfig(model_kind="duo")
        batch = random_batch()
        batch.cqt[0, 0, 0, 0] = float("nan")
        with self.assertRaises(NonFiniteLoss):
            train_step_duo(self.model, make_optimizers(self.model, cfg),
                           batch, cfg)


class TestUnetSteps(unittest.TestCase):
    """Class to test the training phases of UnetED."""

    def setUp(self):
        self.model = build_model("unet", small_config(), seed=0).train()
        self.batch = random_batch()

    def test_pitch_phase_isolation(self):
        """Test that the pitch phase only moves D_p."""
        cfg = TrainConfig(adversarial=False, momentum=0.0,
                          learning_rate=1e-3)
        optimizers = make_optimizers(self.model, cfg)
        set_lr(optimizers["reconstruct"], 0.0)
        before = snapshot(self.model)
        train_step_unet(self.model, optimizers, self.batch, cfg)
        after = snapshot(self.model)
        for name in ("E_cqt", "D_roll", "D_t"):
            self.assertTrue(unchanged(before, after, name))
        self.assertFalse(unchanged(before, after, "D_p"))

    def test_adversarial_isolation(self):
        """Test that the adversarial phase only moves the encoder."""
        cfg = TrainConfig(momentum=0.0, learning_rate=1e-3)
        optimizers = make_optimizers(self.model, cfg)
        set_lr(optimizers["reconstruct"], 0.0)
        set_lr(optimizers["pitch"], 0.0)
        before = snapshot(self.model)
        report = train_step_unet(self.model, optimizers, self.batch, cfg)
        after = snapshot(self.model)
        for name in ("D_roll", "D_t", "D_p"):
            self.assertTrue(unchanged(before, after, name))
        self.assertFalse(unchanged(before, after, "E_cqt"))
        self.assertGreater(report.pitch_adv, 0)
        self.assertEqual(report.timbre_adv, 0.0)

    def test_descent(self):
        """Test that the first two phases lower their own losses."""
        cfg = TrainConfig(adversarial=False, learning_rate=1e-5,
                          momentum=0.0)

        def losses():
            with torch.no_grad():
                x, _ = self.model.pad(self.batch.cqt)
                z_t, skips = self.model.encode(x)
                rec = (bce_loss(self.model.decode_roll(z_t, skips),
                                self.batch.roll)
                       + bce_loss(self.model.timbre_logits(z_t),
                                  self.batch.instrument))
                return float(rec), z_t

        def pitch_loss(z_t):
            with torch.no_grad():
                return float(bce_loss(self.model.pitch_logits(z_t),
                                      self.batch.pitch))

        rec_start, z_start = losses()
        pitch_start = pitch_loss(z_start)
        train_step_unet(self.model, make_optimizers(self.model, cfg),
                        self.batch, cfg)
        self.assertLess(losses()[0], rec_start)
        self.assertLess(pitch_loss(z_start), pitch_start)


class TestTrainer(unittest.TestCase):
    """Class to test the training loop and the checkpoints."""

    @staticmethod
    def _chunks(n=4, T=16):
        rng = np.random.default_rng(0)
        return [(torch.from_numpy(rng.random((1, 88, T), dtype=np.float32)),
                 Pianoroll(rng.random((88, T, 5)) < 0.05))
                for _ in range(n)]

    def _trainer(self, kind="unet"):
        cfg = TrainConfig(model_kind=kind, batch_size=2, epochs=2,
                          learning_rate=1e-4, seed=3)
        return Trainer(build_model(kind, small_config(kind), seed=3), cfg)

    def test_fit(self):
        """Test the metrics log and the determinism of a run."""
        dataset = ChunkDataset(self._chunks())
        calls = []

        def leakage(trainer):
            calls.append(trainer.epoch)
            return {"pitch_leakage": 0.5}

        with tempfile.TemporaryDirectory() as tmp:
            path = os.path.join(tmp, "metrics.jsonl")
            records = self._trainer().fit(dataset, metrics_path=path,
                                          on_epoch_end=leakage)
            with open(path, "r", encoding="utf-8") as f:
                lines = [json.loads(line) for line in f]
        self.assertEqual(lines, records)
        self.assertEqual(calls, [0, 1, 2])
        steps = [r for r in records if "roll" in r]
        self.assertEqual(len(steps), 4)
        self.assertEqual([r["step"] for r in steps], [1, 2, 3, 4])
        for r in steps:
            self.assertTrue(np.isfinite(r["roll"]))

        again = self._trainer().fit(dataset)
        self.assertEqual([r["roll"] for r in again],
                         [r["roll"] for r in steps])

        with self.assertRaises(ValueError):
            Trainer(build_model("duo", small_config("duo")), TrainConfig())

    def test_resume(self):
        """Test that a resumed run continues bit for bit."""
        first = make_batch(self._chunks(2))
        second = make_batch(self._chunks(2, T=24))
        for kind in ("duo", "unet"):
            trainer = self._trainer(kind)
            trainer.step(first)
            with tempfile.TemporaryDirectory() as tmp:
                path = os.path.join(tmp, "model.pt")
                save_checkpoint(path, trainer.model, trainer)
                checkpoint = load_checkpoint(path, kind)
            resumed = Trainer.from_checkpoint(checkpoint)
            self.assertEqual((resumed.step_count, resumed.epoch), (1, 0))
            self.assertTrue(resumed.model.trained)

            trainer.step(second)
            resumed.step(second)
            for a, b in zip(trainer.model.state_dict().values(),
                            resumed.model.state_dict().values()):
                self.assertTrue(torch.equal(a, b))

    def test_checkpoint_errors(self):
        """Test kind mismatches and damaged files."""
        model = build_model("unet", small_config(), seed=0)
        with tempfile.TemporaryDirectory() as tmp:
            path = os.path.join(tmp, "model.pt")
            save_checkpoint(path, model)
            checkpoint = load_checkpoint(path)
            self.assertIsNone(checkpoint.train_config)
            self.assertFalse(checkpoint.model.trained)
            with self.assertRaises(CorruptCheckpoint):
                Trainer.from_checkpoint(checkpoint)
            with self.assertRaises(VersionMismatch):
                load_checkpoint(path, "duo")

            with open(path, "rb") as f:
                data = f.read()
            truncated = os.path.join(tmp, "truncated.pt")
            with open(truncated, "wb") as f:
                f.write(data[:len(data)//2])
            with self.assertRaises(CorruptCheckpoint):
                load_checkpoint(truncated)


class TestProbeTraining(unittest.TestCase):
    """Class to test training probes on frozen codes."""

    def test_train_probe(self):
        """Test that the probe learns while the model stays fixed."""
        model = build_model("unet", small_config(), seed=0).eval()
        g = torch.Generator().manual_seed(0)
        examples = []
        for i in range(8):
            x = torch.zeros(1, 1, 88, 64)
            labels = np.zeros((5, 2))
            # loud low register means instrument 0, high register 1
            if i % 2:
                x[..., :44, :] = 2 + torch.rand(1, 1, 44, 64, generator=g)
                labels[0] = 1
            else:
                x[..., 44:, :] = 2 + torch.rand(1, 1, 44, 64, generator=g)
                labels[1] = 1
            examples.append((x, labels))

        def probe_loss(probe):
            probe.eval()
            with torch.no_grad():
                return sum(float(bce_loss(probe(model.encode_timbre(x))[0],
                                          torch.as_tensor(y).float()))
                           for x, y in examples)

        before = [p.detach().clone() for p in model.parameters()]
        buffers = [b.detach().clone() for b in model.buffers()]
        with torch.random.fork_rng(devices=[]):
            torch.manual_seed(0)
            probe = model.make_probe()
        start = probe_loss(probe)
        cfg = TrainConfig(learning_rate=0.002, batch_size=8, probe_epochs=50)
        train_probe(model, probe, examples, cfg)
        self.assertLess(probe_loss(probe), start)
        for a, b in zip(before, model.parameters()):
            self.assertTrue(torch.equal(a, b))
        for a, b in zip(buffers, model.buffers()):
            self.assertTrue(torch.equal(a, b))

        with tempfile.TemporaryDirectory() as tmp:
            path = os.path.join(tmp, "probe.pt")
            save_probe(path, probe)
            again = load_probe(path)
        z = model.encode_timbre(examples[0][0])
        with torch.no_grad():
            self.assertTrue(torch.equal(probe(z), again(z)))


if __name__ == "__main__":
    unittest.main(verbosity=1)
