#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
Audio loading and the constant-Q transform input representation.

The networks take a log-compressed magnitude constant-Q transform (CQT) as
input. The default settings use 88 bins with 12 bins per octave starting at
A0 (27.5 Hz), so that CQT bin `f` and pianoroll row `f` refer to the same
piano key. Audio is analysed at 16 kHz with a hop of 512 samples and no center
padding, so a clip of `n` samples always has `floor(n/512)` frames, e.g., 312
frames for 10 seconds.

The transform uses a precomputed spectral kernel (:class:`CQTKernel`): each
frame is transformed with an FFT as long as the longest temporal kernel and
projected onto the sparse spectral kernel.
"""

import functools
import io
import logging
import shutil
import subprocess
from dataclasses import dataclass
from math import gcd

import numpy as np
import numpy.typing as np_type
import scipy.fft
import scipy.sparse
from scipy.signal import resample_poly
import soundfile as sf

from pyRearrange.errors import ClipTooShort, IndexOutOfRange, UndecodableAudio


_log = logging.getLogger(__name__)

DEFAULT_SAMPLE_RATE = 16000
DEFAULT_HOP = 512
DEFAULT_BINS = 88
DEFAULT_BINS_PER_OCTAVE = 12
DEFAULT_FMIN = 27.5


@dataclass
class AudioClip:
    """
    Mono audio waveform.

    Attributes
    ----------
    samples: numpy.ndarray
        Samples in [-1, 1].
    sample_rate: int
        Samples per second.
    """

    samples: np_type.NDArray
    sample_rate: int = DEFAULT_SAMPLE_RATE

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=np.float32)
        if self.samples.ndim != 1:
            raise ValueError("Audio clip must be mono")
        if self.samples.shape[0] == 0:
            raise ValueError("Audio clip cannot be empty")
        if self.sample_rate <= 0:
            raise ValueError("Sample rate must be positive")

    def duration(self) -> float:
        """Return the length of the clip in seconds."""
        return self.samples.shape[0]/self.sample_rate


@dataclass
class CQTMatrix:
    """
    Log-compressed magnitude constant-Q transform.

    Attributes
    ----------
    data: numpy.ndarray
        Non-negative matrix of shape (F, T).
    frame_rate: float
        Frames per second, the sample rate divided by the hop size.
    """

    data: np_type.NDArray
    frame_rate: float = DEFAULT_SAMPLE_RATE/DEFAULT_HOP

    @property
    def F(self) -> int:
        """Number of frequency bins."""
        return self.data.shape[0]

    @property
    def T(self) -> int:
        """Number of frames."""
        return self.data.shape[1]


def bin_frequency(f: int, fmin: float = DEFAULT_FMIN,
                  bins_per_octave: int = DEFAULT_BINS_PER_OCTAVE,
                  bins: int = DEFAULT_BINS) -> float:
    """
    Return the center frequency of a CQT bin.

    Parameters
    ----------
    f : int
        Bin index in `[0, bins)`.
    fmin : float, optional
        Frequency of bin 0 in Hz. The default is 27.5 (A0).
    bins_per_octave : int, optional
        Number of bins in each octave. The default is 12.
    bins : int, optional
        Number of bins in the transform. The default is 88.

    Returns
    -------
    float
        Center frequency in Hz, `fmin*2**(f/bins_per_octave)`.

    Raises
    ------
    IndexOutOfRange
        When the index is outside of the transform.
    """
    if not 0 <= f < bins:
        raise IndexOutOfRange(f"Bin {f} outside of [0, {bins})")
    return fmin*2**(f/bins_per_octave)


class CQTKernel:
    """
    Sparse spectral kernel of the constant-Q transform.

    The temporal kernel of bin `k` is a Hamming window of length
    `N_k = Q*sample_rate/f_k` (rounded to an odd length so that it is centered)
    modulated to the bin frequency, with `Q = 1/(2**(1/bins_per_octave) - 1)`.
    The kernels are centered in an FFT frame as long as the longest one and
    stored in the frequency domain, so that by Parseval's theorem the transform
    of a frame is the product of the kernel with the FFT of that frame.

    The bins are those of
    ``librosa.cqt(y, sr=16000, hop_length=512, fmin=27.5, n_bins=88,
    bins_per_octave=12, filter_scale=1, window="hamming")``: same center
    frequencies, same `Q` and window lengths equal up to rounding. It differs
    from librosa in three ways. It computes every octave at the full sample
    rate, without librosa's recursive downsampling. Each kernel is scaled by
    `1/N_k` instead of librosa's L1 normalization. And frames are placed as
    described in :meth:`magnitude` instead of with ``center=True``, so there
    are `floor(n/hop)` frames rather than `floor(n/hop) + 1`.

    Instances are immutable and can be shared between threads.

    Attributes
    ----------
    sample_rate: int
        Samples per second of the analysed audio.
    hop: int
        Samples between frames.
    fft_length: int
        Length of the analysis frame.
    """

    def __init__(self, sample_rate: int = DEFAULT_SAMPLE_RATE,
                 bins: int = DEFAULT_BINS,
                 bins_per_octave: int = DEFAULT_BINS_PER_OCTAVE,
                 fmin: float = DEFAULT_FMIN, hop: int = DEFAULT_HOP):
        # pylint: disable=too-many-arguments
        if hop < 1:
            raise ValueError("Hop size must be positive")
        if fmin <= 0:
            raise ValueError("Minimum frequency must be positive")
        quality = 1/(2**(1/bins_per_octave) - 1)
        fmax = fmin*2**((bins - 1)/bins_per_octave)
        if fmax*(1 + 0.5/quality) >= sample_rate/2:
            raise ValueError(f"Top bin at {fmax:.1f} Hz exceeds the Nyquist "
                             f"frequency of {sample_rate} Hz audio")

        self.sample_rate = sample_rate
        self.hop = hop
        self.bins = bins
        self.fft_length = int(2**np.ceil(np.log2(quality*sample_rate/fmin)))

        kernel = np.zeros((bins, self.fft_length), dtype=complex)
        for k in range(bins):
            frequency = fmin*2**(k/bins_per_octave)
            window_length = 2*round(quality*sample_rate/frequency/2) + 1
            n = np.arange(window_length) - (window_length - 1)/2
            temporal = (np.hamming(window_length)
                        * np.exp(2j*np.pi*quality*n/window_length)
                        / window_length)
            pad_width = (self.fft_length - window_length + 1)//2
            kernel[k, pad_width:pad_width + window_length] = temporal

        kernel = scipy.fft.fft(kernel, axis=1)
        kernel[np.abs(kernel) < 0.01] = 0
        self._kernel = scipy.sparse.csr_matrix(np.conj(kernel)
                                               / self.fft_length)

    def num_frames(self, num_samples: int) -> int:
        """Return the number of frames for a signal length."""
        return num_samples//self.hop

    def magnitude(self, samples: np_type.NDArray,
                  block_frames: int = 64) -> np_type.NDArray:
        """
        Return the magnitude transform of a signal.

        Frame `t` describes the hop `[t*hop, (t + 1)*hop)` of the signal, so
        there is no extra frame for a partial hop at the end. Its analysis
        window is centered on that hop, at sample `t*hop + hop/2`, and the
        signal is padded with zeros where a window extends past either end.

        Parameters
        ----------
        samples : numpy.ndarray
            Mono signal.
        block_frames : int, optional
            Number of frames transformed at once. The default is 64.

        Returns
        -------
        numpy.ndarray
            Magnitudes of shape (bins, floor(len(samples)/hop)).
        """
        samples = np.asarray(samples, dtype=np.float64)
        T = self.num_frames(samples.shape[0])
        half = (self.fft_length - self.hop)/2
        padded = np.pad(samples, (int(np.ceil(half)), int(np.floor(half))))
        frames = np.lib.stride_tricks.sliding_window_view(
            padded, self.fft_length)[::self.hop][:T]

        out = np.empty((self.bins, T))
        for start in range(0, T, block_frames):
            block = scipy.fft.fft(frames[start:start + block_frames], axis=1)
            out[:, start:start + block.shape[0]] = np.abs(
                self._kernel @ block.T)
        return out


@functools.lru_cache(maxsize=8)
def cqt_kernel(sample_rate: int = DEFAULT_SAMPLE_RATE,
               bins: int = DEFAULT_BINS,
               bins_per_octave: int = DEFAULT_BINS_PER_OCTAVE,
               fmin: float = DEFAULT_FMIN,
               hop: int = DEFAULT_HOP) -> CQTKernel:
    """Return the shared kernel for a set of transform parameters."""
    return CQTKernel(sample_rate, bins, bins_per_octave, fmin, hop)


def compute_cqt(clip: AudioClip, bins: int = DEFAULT_BINS,
                bins_per_octave: int = DEFAULT_BINS_PER_OCTAVE,
                fmin: float = DEFAULT_FMIN,
                hop: int = DEFAULT_HOP) -> CQTMatrix:
    """
    Compute the model input representation of an audio clip.

    Parameters
    ----------
    clip : AudioClip
        Audio to analyse.
    bins : int, optional
        Number of frequency bins. The default is 88.
    bins_per_octave : int, optional
        Bins per octave. The default is 12.
    fmin : float, optional
        Frequency of the lowest bin in Hz. The default is 27.5.
    hop : int, optional
        Samples between frames. The default is 512.

    Returns
    -------
    CQTMatrix
        `ln(1 + |CQT|)` of shape (bins, floor(len/hop)).

    Raises
    ------
    ClipTooShort
        When the clip is shorter than one hop.
    """
    if clip.samples.shape[0] < hop:
        raise ClipTooShort(f"Clip of {clip.samples.shape[0]} samples is "
                           f"shorter than one hop of {hop}")
    kernel = cqt_kernel(int(clip.sample_rate), bins, bins_per_octave,
                        float(fmin), hop)
    magnitude = kernel.magnitude(clip.samples)
    return CQTMatrix(np.log1p(magnitude).astype(np.float32),
                     clip.sample_rate/hop)


def _decode_with_ffmpeg(data: bytes) -> bytes:
    """Convert compressed audio to WAV bytes with an external decoder."""
    executable = shutil.which("ffmpeg")
    if executable is None:
        raise UndecodableAudio("External decoding requested but ffmpeg was "
                               "not found")
    try:
        rtn = subprocess.run([executable, "-v", "error", "-i", "pipe:0",
                              "-f", "wav", "-acodec", "pcm_s16le", "pipe:1"],
                             input=data, capture_output=True, check=True)
    except subprocess.CalledProcessError as exc:
        message = exc.stderr.decode(errors="replace").strip()
        raise UndecodableAudio(f"ffmpeg failed: {message}") from exc
    return rtn.stdout


def load_audio(data: bytes, target_rate: int = DEFAULT_SAMPLE_RATE,
               allow_external_decoder: bool = False) -> AudioClip:
    """
    Decode audio bytes into a mono clip at the target sample rate.

    Uncompressed PCM (e.g., WAV) is decoded directly. Compressed formats that
    the audio library cannot read are only handled when
    `allow_external_decoder` is set, in which case `ffmpeg` is used.

    Parameters
    ----------
    data : bytes
        Encoded audio.
    target_rate : int, optional
        Sample rate of the returned clip. The default is 16000.
    allow_external_decoder : bool, optional
        Whether to fall back to `ffmpeg`. The default is `False`.

    Returns
    -------
    AudioClip
        Channel average of the audio, resampled to `target_rate`.

    Raises
    ------
    UndecodableAudio
        When the audio cannot be decoded or has no samples.
    """
    try:
        samples, rate = sf.read(io.BytesIO(data), dtype="float64",
                                always_2d=True)
    except (RuntimeError, TypeError, ValueError) as exc:
        if not allow_external_decoder:
            raise UndecodableAudio(f"Cannot decode audio: {exc}") from exc
        _log.info("Falling back to external decoder: %s", exc)
        try:
            samples, rate = sf.read(io.BytesIO(_decode_with_ffmpeg(data)),
                                    dtype="float64", always_2d=True)
        except (RuntimeError, TypeError, ValueError) as exc2:
            raise UndecodableAudio(f"Cannot decode audio: {exc2}") from exc2

    if samples.shape[0] == 0:
        raise UndecodableAudio("Audio has no samples")
    mono = samples.mean(axis=1)
    if rate != target_rate:
        g = gcd(int(rate), int(target_rate))
        mono = resample_poly(mono, target_rate//g, int(rate)//g)
    return AudioClip(np.clip(mono, -1.0, 1.0), target_rate)


def load_audio_file(path, target_rate: int = DEFAULT_SAMPLE_RATE,
                    allow_external_decoder: bool = False) -> AudioClip:
    """Read an audio file with :func:`load_audio`."""
    with open(path, "rb") as f:
        return load_audio(f.read(), target_rate, allow_external_decoder)


def write_audio(path, clip: AudioClip) -> None:
    """
    Write a clip as a 16-bit PCM WAV file.

    Parameters
    ----------
    path : str or path-like
        Destination file name.
    clip : AudioClip
        Audio to write.
    """
    sf.write(path, clip.samples, clip.sample_rate, subtype="PCM_16",
             format="WAV")
