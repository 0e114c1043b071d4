#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
Tests for audio loading and the constant-Q transform.
"""

import io
import os
import tempfile
import unittest

import numpy as np
import numpy.testing as npt
import soundfile as sf

from pyRearrange.errors import ClipTooShort, IndexOutOfRange, UndecodableAudio
from pyRearrange.features import (AudioClip, CQTKernel, bin_frequency,
                                  compute_cqt, cqt_kernel, load_audio,
                                  load_audio_file, write_audio)


def _tone(frequency, seconds=3.0, sample_rate=16000, amps=(1.0,)):
    """Return a harmonic tone normalized to a peak of 0.5."""
    t = np.arange(int(seconds*sample_rate))/sample_rate
    x = sum(a*np.sin(2*np.pi*(h + 1)*frequency*t) for h, a in enumerate(amps))
    return 0.5*x/np.max(np.abs(x))


class TestBinFrequency(unittest.TestCase):
    """Class to test the center frequencies of the bins."""

    def test_frequencies(self):
        """Test the lowest, A4 and highest bins."""
        self.assertIsNone(npt.assert_allclose(bin_frequency(0), 27.5))
        self.assertIsNone(npt.assert_allclose(bin_frequency(48), 440.0))
        self.assertIsNone(npt.assert_allclose(bin_frequency(87), 4186.009,
                                              rtol=1e-6))
        with self.assertRaises(IndexOutOfRange):
            bin_frequency(88)
        with self.assertRaises(IndexOutOfRange):
            bin_frequency(-1)


class TestCQT(unittest.TestCase):
    """Class to test the constant-Q transform."""

    def test_shape(self):
        """Test that the frame count is the number of whole hops."""
        cqt = compute_cqt(AudioClip(np.zeros(160000)))
        self.assertEqual(cqt.data.shape, (88, 312))
        self.assertIsNone(npt.assert_allclose(cqt.frame_rate, 31.25))
        for n in (512, 1000, 16001, 160511):
            self.assertEqual(compute_cqt(AudioClip(np.zeros(n))).T, n//512)
        with self.assertRaises(ClipTooShort):
            compute_cqt(AudioClip(np.zeros(511)))

    def test_silence(self):
        """Test that digital silence gives zeros."""
        cqt = compute_cqt(AudioClip(np.zeros(32000)))
        self.assertIsNone(npt.assert_array_equal(cqt.data, 0))

    def test_pure_tone(self):
        """Test that A4 peaks in bin 48 at every interior frame."""
        cqt = compute_cqt(AudioClip(_tone(440.0)))
        interior = cqt.data[:, 20:-20]
        self.assertTrue(np.all(np.argmax(interior, axis=0) == 48))
        self.assertTrue(np.all(cqt.data >= 0))

    def test_shift_covariance(self):
        """Test that a semitone transposition moves the peak by one bin."""
        amps = (1.0, 0.5, 0.25)
        peaks = {}
        for k in range(12, 77):
            cqt = compute_cqt(AudioClip(_tone(bin_frequency(k), amps=amps)))
            peaks[k] = np.argmax(cqt.data[:, 30:-30], axis=0)
        for k in range(12, 76):
            self.assertTrue(np.all(peaks[k] == k), msg=f"bin {k}")
            self.assertTrue(np.all(peaks[k + 1] - peaks[k] == 1),
                            msg=f"bin {k}")

    def test_energy_monotonicity(self):
        """Test that a louder signal never has a smaller magnitude."""
        rng = np.random.default_rng(1)
        x = 0.25*rng.uniform(-1, 1, 20000)
        quiet = compute_cqt(AudioClip(x))
        loud = compute_cqt(AudioClip(2*x))
        self.assertTrue(np.all(loud.data >= quiet.data))

    def test_kernel(self):
        """Test kernel sharing and the Nyquist limit."""
        self.assertIs(cqt_kernel(), cqt_kernel())
        kernel = CQTKernel()
        self.assertEqual(kernel.fft_length, 16384)
        self.assertEqual(kernel.num_frames(160000), 312)
        with self.assertRaises(ValueError):
            CQTKernel(sample_rate=8000)
        with self.assertRaises(ValueError):
            CQTKernel(hop=0)


class TestAudioIO(unittest.TestCase):
    """Class to test decoding and writing audio."""

    @staticmethod
    def _wav_bytes(samples, sample_rate):
        buffer = io.BytesIO()
        sf.write(buffer, samples, sample_rate, format="WAV",
                 subtype="PCM_16")
        return buffer.getvalue()

    def test_stereo_resampling(self):
        """Test a 10 s stereo 44.1 kHz sine loaded at 16 kHz."""
        t = np.arange(441000)/44100
        left = 0.5*np.sin(2*np.pi*440*t)
        data = self._wav_bytes(np.stack([left, left], axis=1), 44100)
        clip = load_audio(data)
        self.assertEqual(clip.sample_rate, 16000)
        self.assertEqual(clip.samples.shape, (160000,))

        spectrum = np.abs(np.fft.rfft(clip.samples))
        peak = np.fft.rfftfreq(clip.samples.shape[0], 1/16000)[
            np.argmax(spectrum)]
        self.assertIsNone(npt.assert_allclose(peak, 440.0, atol=1.0))

    def test_channel_average(self):
        """Test that channels are averaged into a mono clip."""
        left = np.full(1600, 0.5)
        right = np.zeros(1600)
        clip = load_audio(self._wav_bytes(np.stack([left, right], axis=1),
                                          16000))
        self.assertIsNone(npt.assert_allclose(clip.samples, 0.25, atol=1e-4))

        silent = load_audio(self._wav_bytes(np.zeros(1600), 16000))
        self.assertIsNone(npt.assert_array_equal(silent.samples, 0))

    def test_undecodable(self):
        """Test bytes that are not audio."""
        with self.assertRaises(UndecodableAudio):
            load_audio(b"definitely not audio")

    def test_write_and_read(self):
        """Test that written clips read back within quantization."""
        rng = np.random.default_rng(2)
        clip = AudioClip(0.5*rng.uniform(-1, 1, 8000))
        with tempfile.TemporaryDirectory() as tmp:
            path = os.path.join(tmp, "clip.wav")
            write_audio(path, clip)
            again = load_audio_file(path)
        self.assertEqual(again.sample_rate, 16000)
        self.assertIsNone(npt.assert_allclose(again.samples, clip.samples,
                                              atol=1/16384))

    def test_invalid_clip(self):
        """Test the validation of clips."""
        with self.assertRaises(ValueError):
            AudioClip(np.zeros(0))
        with self.assertRaises(ValueError):
            AudioClip(np.zeros((2, 10)))


if __name__ == "__main__":
    unittest.main(verbosity=1)
