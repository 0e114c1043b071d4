#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
Tests for transcription and composition style transfer.
"""

import itertools
import unittest

import numpy as np
import numpy.testing as npt
import torch

from pyRearrange.errors import (ClipTooShort, DegenerateOutput,
                                LengthMismatch, UntrainedModel)
from pyRearrange.features import AudioClip, compute_cqt
from pyRearrange.models import (EncoderConfig, ModelConfig, build_model,
                                cqt_to_tensor)
from pyRearrange.symbolic import Pianoroll, PitchRoll
from pyRearrange.transfer import (TransferRequest, pitch_preservation,
                                  reconcile_timbre, rearrange, transcribe)


def small_model(kind="unet", seed=0):
    """Return a narrow model flagged as trained."""
    cfg = ModelConfig(kind=kind, encoder=EncoderConfig(channels=(4, 4, 4, 2)),
                      code_decoder_channels=(8, 8), probe_channels=8)
    model = build_model(kind, cfg, seed=seed)
    model.trained = True
    return model.eval()


def noise_clip(seconds, seed=0):
    """Return a clip of uniform noise."""
    rng = np.random.default_rng(seed)
    return AudioClip(0.3*rng.uniform(-1, 1, int(seconds*16000)))


class TestReconcileTimbre(unittest.TestCase):
    """Class to test fitting timbre codes to a number of columns."""

    def setUp(self):
        self.z = torch.arange(12, dtype=torch.float32).reshape(1, 2, 6)

    def test_average(self):
        """Test repetition of the time average."""
        out = reconcile_timbre(self.z, 4, "average")
        self.assertEqual(tuple(out.shape), (1, 2, 4))
        self.assertIsNone(npt.assert_allclose(out[0, :, 0].numpy(),
                                              [2.5, 8.5]))
        self.assertTrue(torch.equal(out[..., 0], out[..., 3]))

    def test_tile_and_crop(self):
        """Test cyclic repetition and cropping."""
        tiled = reconcile_timbre(self.z, 8, "tile")
        self.assertEqual(tiled[0, 0].tolist(), [0, 1, 2, 3, 4, 5, 0, 1])
        cropped = reconcile_timbre(self.z, 8, "crop")
        self.assertEqual(cropped[0, 0].tolist(), [0, 1, 2, 3, 4, 5, 5, 5])
        self.assertEqual(reconcile_timbre(self.z, 3, "crop")[0, 1].tolist(),
                         [6, 7, 8])
        self.assertEqual(reconcile_timbre(self.z, 3, "tile")[0, 1].tolist(),
                         [6, 7, 8])
        with self.assertRaises(ValueError):
            reconcile_timbre(self.z, 3, "stretch")


class TestTranscribe(unittest.TestCase):
    """Class to test transcription of clips."""

    def test_untrained(self):
        """Test that an untrained model is refused."""
        model = small_model()
        model.trained = False
        with self.assertRaises(UntrainedModel):
            transcribe(model, noise_clip(2))

    def test_frames(self):
        """Test that the roll has the frames of the CQT."""
        model = small_model()
        for seconds, frames in ((10, 312), (13, 406)):
            roll = transcribe(model, noise_clip(seconds), threshold=0.5)
            self.assertEqual(roll.data.shape, (88, frames, 5))
            self.assertEqual(roll.frame_rate, 31.25)

    def test_threshold_range(self):
        """Test that thresholds outside of (0, 1) are refused."""
        model = small_model()
        for threshold in (0.0, 1.0, 1.5, -0.2):
            with self.assertRaises(ValueError):
                transcribe(model, noise_clip(2), threshold)


class TestRearrange(unittest.TestCase):
    """Class to test style transfer between clips."""

    def test_self_transfer(self):
        """Test that a clip rearranged with itself is its transcription."""
        for kind in ("duo", "unet"):
            model = small_model(kind)
            clip = noise_clip(10)
            result = rearrange(TransferRequest(clip, clip, model,
                                               threshold=0.01))
            with torch.no_grad():
                logits = model.transcribe_logits(
                    cqt_to_tensor(compute_cqt(clip)))
            self.assertTrue(np.array_equal(
                result.probabilities, torch.sigmoid(logits[0]).numpy()))
            self.assertEqual(result.roll, transcribe(model, clip, 0.01))

    def test_timeline(self):
        """Test that the output follows the timeline of the source."""
        model = small_model()
        source = noise_clip(10, seed=1)
        for seconds, mode in itertools.product((5, 10, 13),
                                               ("average", "tile", "crop")):
            result = rearrange(TransferRequest(source,
                                               noise_clip(seconds, seed=2),
                                               model, threshold=0.01,
                                               timbre_time_mode=mode))
            self.assertEqual(result.roll.data.shape, (88, 312, 5))
            self.assertEqual(result.probabilities.shape, (88, 312, 5))

        result = rearrange(TransferRequest(noise_clip(13, seed=3), source,
                                           model, threshold=0.01))
        self.assertEqual(result.roll.T, 406)

    def test_threshold(self):
        """Test that raising the threshold only removes notes."""
        model = small_model()
        source, target = noise_clip(4, seed=4), noise_clip(4, seed=5)
        low = rearrange(TransferRequest(source, target, model, 0.01))
        probabilities = low.probabilities
        for lo, hi in ((0.01, 0.3), (0.3, 0.5)):
            a = probabilities > lo
            b = probabilities > hi
            self.assertFalse(np.any(b & ~a))
        self.assertTrue(np.array_equal(low.roll.data, probabilities > 0.01))

    def test_errors(self):
        """Test short clips, bad settings and empty outputs."""
        model = small_model()
        with self.assertRaises(ClipTooShort):
            rearrange(TransferRequest(noise_clip(0.5), noise_clip(2), model))
        with self.assertRaises(ClipTooShort):
            rearrange(TransferRequest(noise_clip(2), noise_clip(0.9), model))
        with self.assertRaises(ValueError):
            TransferRequest(noise_clip(2), noise_clip(2), model, threshold=1)
        with self.assertRaises(ValueError):
            TransferRequest(noise_clip(2), noise_clip(2), model,
                            timbre_time_mode="stretch")
        with self.assertRaises(DegenerateOutput):
            rearrange(TransferRequest(noise_clip(2), noise_clip(2), model,
                                      threshold=1 - 1e-12))
        model.trained = False
        with self.assertRaises(UntrainedModel):
            rearrange(TransferRequest(noise_clip(2), noise_clip(2), model))


class TestPitchPreservation(unittest.TestCase):
    """Class to test the pitch agreement of rearrangements."""

    def test_examples(self):
        """Test hand computed precision, recall and F1."""
        reference = np.zeros((88, 4), dtype=bool)
        reference[40, :] = True
        data = np.zeros((88, 4, 5), dtype=bool)
        data[40, :2, 0] = True
        data[40, 2:, 3] = True
        self.assertEqual(pitch_preservation(PitchRoll(reference),
                                            Pianoroll(data)), (1.0, 1.0, 1.0))

        data[50, :, 1] = True
        precision, recall, f1 = pitch_preservation(PitchRoll(reference),
                                                   Pianoroll(data))
        self.assertEqual((precision, recall), (0.5, 1.0))
        self.assertIsNone(npt.assert_allclose(f1, 2/3))

        empty = np.zeros((88, 4, 5), dtype=bool)
        self.assertEqual(pitch_preservation(PitchRoll(np.zeros((88, 4))),
                                            Pianoroll(empty)),
                         (1.0, 1.0, 1.0))
        self.assertEqual(pitch_preservation(PitchRoll(reference),
                                            Pianoroll(empty)),
                         (0.0, 0.0, 0.0))
        with self.assertRaises(LengthMismatch):
            pitch_preservation(PitchRoll(reference),
                               Pianoroll(np.zeros((88, 5, 5), dtype=bool)))

    def test_brute_force(self):
        """Test random rolls against cell-by-cell counting."""
        rng = np.random.default_rng(8)
        for _ in range(5):
            reference = rng.random((88, 20)) < 0.1
            data = rng.random((88, 20, 5)) < 0.03
            tp = fp = fn = 0
            for f in range(88):
                for t in range(20):
                    predicted = any(data[f, t, m] for m in range(5))
                    tp += predicted and reference[f, t]
                    fp += predicted and not reference[f, t]
                    fn += reference[f, t] and not predicted
            precision, recall, f1 = pitch_preservation(PitchRoll(reference),
                                                       Pianoroll(data))
            self.assertIsNone(npt.assert_allclose(precision, tp/(tp + fp)))
            self.assertIsNone(npt.assert_allclose(recall, tp/(tp + fn)))
            self.assertIsNone(npt.assert_allclose(
                f1, 2*tp/(2*tp + fp + fn)))


if __name__ == "__main__":
    unittest.main(verbosity=1)
