#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
Encoder/decoder networks that disentangle pitch and timbre.

Two fully-convolutional models map a CQT to a pianoroll through latent codes
shaped as matrices `(kappa, tau)` whose second axis is time:

- :class:`DuoED` has a timbre encoder `E_t` and a pitch encoder `E_p`. The
  pianoroll decoder `D_roll` reads the two codes stacked along the first
  axis, while the instrument roll decoder `D_t` reads the timbre code and the
  pitch roll decoder `D_p` reads the pitch code.
- :class:`UnetED` has a single encoder `E_cqt` whose code is the timbre code.
  The pianoroll decoder also receives the activations of the encoder blocks
  through skip connections, which carry the pitch content. `D_p` is used as
  an adversary of the timbre code.

Both follow :class:`RearrangementModel`, which also provides the padding of
inputs to a multiple of the time downsampling factor. Every network outputs
logits; the sigmoid is applied by the losses and at inference.

Tensors use the layouts `(B, 1, 88, T)` for CQTs, `(B, kappa, tau)` for codes,
`(B, 88, T, M)` for pianorolls and `(B, K, T)` for instrument and pitch rolls.
"""

import logging
import math
from abc import ABC, abstractmethod
from dataclasses import asdict, dataclass, field, replace
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
import torch
from torch import nn
import torch.nn.functional as F

from pyRearrange.config import check_keys, config_hash
from pyRearrange.errors import BadInputShape, ShapeMismatch, SkipShapeMismatch
from pyRearrange.features import CQTMatrix
from pyRearrange.symbolic import (DEFAULT_CHUNK_FRAMES, DEFAULT_FRAME_RATE,
                                  InstrumentMap, NUM_PITCHES, frame_seconds)


_log = logging.getLogger(__name__)

MODEL_KINDS = ("duo", "unet")
_NUM_DOWNSAMPLING_BLOCKS = 3


@dataclass
class EncoderConfig:
    """
    Shape of the encoders and of the pianoroll decoder that mirrors them.

    Attributes
    ----------
    channels: tuple of int
        Output channels of the four residual blocks. The last entry sets the
        number of code rows, `11*channels[-1]`.
    kernel_size: int
        Odd size of the square convolution kernels.
    negative_slope: float
        Slope of the leaky ReLU for negative inputs.
    """

    channels: Tuple[int, ...] = (32, 64, 128, 32)
    kernel_size: int = 3
    negative_slope: float = 0.01

    def __post_init__(self):
        self.channels = tuple(int(c) for c in self.channels)
        if len(self.channels) != 4:
            raise ValueError("Encoder needs exactly four residual blocks")
        if any(c < 1 for c in self.channels):
            raise ValueError("Channel counts must be positive")
        if self.kernel_size < 1 or self.kernel_size % 2 == 0:
            raise ValueError("Kernel size must be a positive odd number")
        if self.negative_slope < 0:
            raise ValueError("Negative slope must be non-negative")

    @property
    def downsample_factor(self) -> int:
        """Ratio between the input frames and the code columns."""
        return 2**_NUM_DOWNSAMPLING_BLOCKS

    @property
    def code_bins(self) -> int:
        """Frequency rows of the last encoder feature map."""
        f = NUM_PITCHES
        for _ in range(_NUM_DOWNSAMPLING_BLOCKS):
            f = (f - 1)//2 + 1
        return f

    @property
    def kappa(self) -> int:
        """Number of rows of a latent code."""
        return self.code_bins*self.channels[-1]


@dataclass
class ModelConfig:
    """
    Hyperparameters of a rearrangement model.

    Attributes
    ----------
    kind: str
        `duo` or `unet`.
    instrument_map: InstrumentMap
        Instruments of the pianoroll the model predicts.
    encoder: EncoderConfig
        Encoder and pianoroll decoder shape.
    train_frames: int
        Frames of the training chunks, used to check that the codes are
        smaller than the input.
    code_decoder_channels: tuple of int
        Channels of the two hidden layers of `D_t` and `D_p`.
    probe_channels: int
        Channels of the convolution layers of probe classifiers.
    """

    kind: str = "unet"
    instrument_map: InstrumentMap = field(
        default_factory=InstrumentMap.five_instruments)
    encoder: EncoderConfig = field(default_factory=EncoderConfig)
    train_frames: int = DEFAULT_CHUNK_FRAMES
    code_decoder_channels: Tuple[int, int] = (256, 128)
    probe_channels: int = 128

    def __post_init__(self):
        if isinstance(self.instrument_map, str):
            self.instrument_map = InstrumentMap.named(self.instrument_map)
        elif isinstance(self.instrument_map, dict):
            self.instrument_map = InstrumentMap.from_dict(self.instrument_map)
        if isinstance(self.encoder, dict):
            check_keys(self.encoder, EncoderConfig)
            self.encoder = EncoderConfig(**self.encoder)
        self.code_decoder_channels = tuple(int(c) for c in
                                           self.code_decoder_channels)
        if self.kind not in MODEL_KINDS:
            raise ValueError(f"Unknown model kind '{self.kind}'")
        if len(self.code_decoder_channels) != 2:
            raise ValueError("Code decoders have two hidden layers")
        if self.train_frames < 1 or self.probe_channels < 1:
            raise ValueError("Sizes must be positive")

        # codes have to be a compression of the input at the training shape
        tau = math.ceil(self.train_frames/self.encoder.downsample_factor)
        if self.encoder.kappa*tau >= NUM_PITCHES*self.train_frames:
            raise ValueError(f"Code of {self.encoder.kappa}x{tau} is not "
                             f"smaller than the {NUM_PITCHES}x"
                             f"{self.train_frames} input")

    @property
    def num_instruments(self) -> int:
        """Number of instruments M."""
        return self.instrument_map.M

    def to_dict(self) -> dict:
        """Return a JSON serializable representation."""
        encoder = asdict(self.encoder)
        encoder["channels"] = list(encoder["channels"])
        return {"kind": self.kind,
                "instrument_map": self.instrument_map.to_dict(),
                "encoder": encoder, "train_frames": self.train_frames,
                "code_decoder_channels": list(self.code_decoder_channels),
                "probe_channels": self.probe_channels}

    @classmethod
    def from_mapping(cls, info: dict) -> "ModelConfig":
        """
        Create a configuration from a plain mapping.

        Raises
        ------
        ValueError
            When the mapping has unknown keys or invalid values.
        """
        check_keys(info, cls)
        return cls(**info)

    def hash(self) -> str:
        """Return the hash of the configuration."""
        return config_hash(self.to_dict())


def pad_time(x: torch.Tensor, multiple: int) -> Tuple[torch.Tensor, int]:
    """
    Right-pad the last axis of a tensor with zeros to a multiple of a size.

    Returns
    -------
    2-tuple
        Padded tensor and number of padded frames.
    """
    pad = (-x.shape[-1]) % multiple
    if pad:
        x = F.pad(x, (0, pad))
    return x, pad


def cqt_to_tensor(cqt: Union[CQTMatrix, np.ndarray, torch.Tensor]
                  ) -> torch.Tensor:
    """Return a CQT as a float tensor of shape (1, 1, 88, T)."""
    if isinstance(cqt, CQTMatrix):
        cqt = cqt.data
    x = torch.as_tensor(np.asarray(cqt) if not torch.is_tensor(cqt) else cqt,
                        dtype=torch.float32)
    while x.ndim < 4:
        x = x.unsqueeze(0)
    return x


class ResidualBlock(nn.Module):
    """
    Three convolutions with a residual shortcut.

    The first two convolutions keep the resolution and are followed by batch
    normalization. The third one applies the stride. The shortcut is a 1x1
    convolution with the same stride when the shape changes.
    """

    def __init__(self, in_channels: int, out_channels: int, stride: int,
                 kernel_size: int, negative_slope: float):
        # pylint: disable=too-many-arguments
        super().__init__()
        pad = kernel_size//2
        self.conv1 = nn.Conv2d(in_channels, out_channels, kernel_size,
                               padding=pad)
        self.bn1 = nn.BatchNorm2d(out_channels)
        self.conv2 = nn.Conv2d(out_channels, out_channels, kernel_size,
                               padding=pad)
        self.bn2 = nn.BatchNorm2d(out_channels)
        self.conv3 = nn.Conv2d(out_channels, out_channels, kernel_size,
                               stride=stride, padding=pad)
        if stride != 1 or in_channels != out_channels:
            self.shortcut = nn.Conv2d(in_channels, out_channels, 1,
                                      stride=stride)
        else:
            self.shortcut = nn.Identity()
        self.negative_slope = negative_slope

    def forward(self, x: torch.Tensor
                ) -> Tuple[torch.Tensor, torch.Tensor]:
        """Return the block output and the activation before the stride."""
        h = F.leaky_relu(self.bn1(self.conv1(x)), self.negative_slope)
        h = F.leaky_relu(self.bn2(self.conv2(h)), self.negative_slope)
        out = F.leaky_relu(self.conv3(h) + self.shortcut(x),
                           self.negative_slope)
        return out, h


class Encoder(nn.Module):
    """
    Four residual blocks mapping a CQT to a latent code.

    Blocks 1 to 3 halve both the frequency and the time resolution, block 4
    keeps it, so a (1, 88, T) input becomes a (C, 11, T/8) feature map that is
    flattened to a (11*C, T/8) code.
    """

    def __init__(self, config: EncoderConfig):
        super().__init__()
        blocks = []
        in_channels = 1
        for i, out_channels in enumerate(config.channels):
            stride = 2 if i < _NUM_DOWNSAMPLING_BLOCKS else 1
            blocks.append(ResidualBlock(in_channels, out_channels, stride,
                                        config.kernel_size,
                                        config.negative_slope))
            in_channels = out_channels
        self.blocks = nn.ModuleList(blocks)
        self.downsample_factor = config.downsample_factor

    def forward(self, x: torch.Tensor
                ) -> Tuple[torch.Tensor, List[torch.Tensor]]:
        """
        Encode a batch of CQTs.

        Parameters
        ----------
        x : torch.Tensor
            Input of shape (B, 1, 88, T) with T a multiple of 8.

        Returns
        -------
        2-tuple
            Code of shape (B, kappa, T/8) and the activations of the three
            downsampling blocks, from the finest to the coarsest.

        Raises
        ------
        BadInputShape
            When the input does not have the expected shape.
        """
        if x.ndim != 4 or x.shape[1] != 1 or x.shape[2] != NUM_PITCHES:
            raise BadInputShape(f"Expected input of shape (B, 1, "
                                f"{NUM_PITCHES}, T), got {tuple(x.shape)}")
        if x.shape[3] == 0 or x.shape[3] % self.downsample_factor:
            raise BadInputShape(f"Input frames {x.shape[3]} are not a "
                                f"multiple of {self.downsample_factor}")
        skips = []
        for i, block in enumerate(self.blocks):
            x, h = block(x)
            if i < _NUM_DOWNSAMPLING_BLOCKS:
                skips.append(h)
        B, C, Fc, tau = x.shape
        return x.reshape(B, C*Fc, tau), skips


class DecoderBlock(nn.Module):
    """
    Upsampling stage of the pianoroll decoder.

    An upsampling transposed convolution (or a plain convolution for the
    stride 1 stage), optionally followed by concatenation with a skip
    activation, and two convolutions. The final stage ends with a linear
    convolution producing the logits.
    """

    def __init__(self, in_channels: int, skip_channels: int,
                 out_channels: int, upsample: bool, kernel_size: int,
                 negative_slope: float, final_channels: Optional[int] = None):
        # pylint: disable=too-many-arguments
        super().__init__()
        pad = kernel_size//2
        if upsample:
            self.up = nn.ConvTranspose2d(in_channels, out_channels,
                                         kernel_size, stride=2, padding=pad,
                                         output_padding=1)
        else:
            self.up = nn.Conv2d(in_channels, out_channels, kernel_size,
                                padding=pad)
        self.conv1 = nn.Conv2d(out_channels + skip_channels, out_channels,
                               kernel_size, padding=pad)
        self.bn1 = nn.BatchNorm2d(out_channels)
        self.conv2 = nn.Conv2d(out_channels,
                               final_channels or out_channels,
                               kernel_size, padding=pad)
        self.bn2 = (nn.BatchNorm2d(out_channels) if final_channels is None
                    else None)
        self.skip_channels = skip_channels
        self.negative_slope = negative_slope

    def forward(self, x: torch.Tensor,
                skip: Optional[torch.Tensor] = None) -> torch.Tensor:
        """Upsample and refine a feature map."""
        h = F.leaky_relu(self.up(x), self.negative_slope)
        if self.skip_channels:
            expected = (h.shape[0], self.skip_channels) + tuple(h.shape[2:])
            if skip is None or tuple(skip.shape) != expected:
                found = None if skip is None else tuple(skip.shape)
                raise SkipShapeMismatch(f"Expected skip of shape {expected}, "
                                        f"got {found}")
            h = torch.cat([h, skip], dim=1)
        h = F.leaky_relu(self.bn1(self.conv1(h)), self.negative_slope)
        h = self.conv2(h)
        if self.bn2 is not None:
            h = F.leaky_relu(self.bn2(h), self.negative_slope)
        return h


class RollDecoder(nn.Module):
    """
    Pianoroll decoder mirroring the encoder.

    Attributes
    ----------
    code_rows: int
        Rows of the code the decoder reads.
    """

    def __init__(self, code_rows: int, config: EncoderConfig,
                 num_instruments: int, with_skips: bool):
        super().__init__()
        if code_rows % config.code_bins:
            raise ValueError(f"Code rows {code_rows} are not a multiple of "
                             f"{config.code_bins}")
        self.code_rows = code_rows
        self.code_bins = config.code_bins
        c = config.channels
        k, slope = config.kernel_size, config.negative_slope
        skip = (lambda ch: ch) if with_skips else (lambda ch: 0)
        self.blocks = nn.ModuleList([
            DecoderBlock(code_rows//config.code_bins, skip(c[2]), c[2], True,
                         k, slope),
            DecoderBlock(c[2], skip(c[1]), c[1], True, k, slope),
            DecoderBlock(c[1], skip(c[0]), c[0], True, k, slope),
            DecoderBlock(c[0], 0, c[0], False, k, slope,
                         final_channels=num_instruments),
        ])
        self.with_skips = with_skips

    def forward(self, code: torch.Tensor,
                skips: Optional[Sequence[torch.Tensor]] = None
                ) -> torch.Tensor:
        """
        Decode pianoroll logits of shape (B, 88, 8*tau, M).

        Raises
        ------
        ShapeMismatch
            When the code does not have the expected number of rows.
        SkipShapeMismatch
            When the skip activations do not match the decoder stages.
        """
        if code.ndim != 3 or code.shape[1] != self.code_rows:
            raise ShapeMismatch(f"Expected code with {self.code_rows} rows, "
                                f"got shape {tuple(code.shape)}")
        if self.with_skips:
            if skips is None or len(skips) != _NUM_DOWNSAMPLING_BLOCKS:
                raise SkipShapeMismatch(f"Expected "
                                        f"{_NUM_DOWNSAMPLING_BLOCKS} skip "
                                        "activations")
            # coarsest skip first
            skips = list(skips)[::-1] + [None]
        else:
            skips = [None]*len(self.blocks)
        B, _, tau = code.shape
        h = code.reshape(B, -1, self.code_bins, tau)
        for block, skip in zip(self.blocks, skips):
            h = block(h, skip)
        return h.permute(0, 2, 3, 1)


class CodeDecoder(nn.Module):
    """
    Three transposed 1-D convolutions upsampling a code 8 times in time.

    Used for both the instrument roll decoder `D_t` and the pitch roll decoder
    `D_p`. The output has shape (B, K, 8*tau).
    """

    def __init__(self, code_rows: int, out_rows: int,
                 channels: Tuple[int, int], negative_slope: float):
        super().__init__()
        self.code_rows = code_rows
        self.layers = nn.ModuleList([
            nn.ConvTranspose1d(code_rows, channels[0], 4, stride=2,
                               padding=1),
            nn.ConvTranspose1d(channels[0], channels[1], 4, stride=2,
                               padding=1),
            nn.ConvTranspose1d(channels[1], out_rows, 4, stride=2, padding=1),
        ])
        self.norms = nn.ModuleList([nn.BatchNorm1d(channels[0]),
                                    nn.BatchNorm1d(channels[1])])
        self.negative_slope = negative_slope

    def forward(self, code: torch.Tensor) -> torch.Tensor:
        """Decode roll logits from a code."""
        if code.ndim != 3 or code.shape[1] != self.code_rows:
            raise ShapeMismatch(f"Expected code with {self.code_rows} rows, "
                                f"got shape {tuple(code.shape)}")
        h = code
        for layer, norm in zip(self.layers[:-1], self.norms):
            h = F.leaky_relu(norm(layer(h)), self.negative_slope)
        return self.layers[-1](h)


class ProbeClassifier(nn.Module):
    """
    Classifier of per-second activity from a frozen latent code.

    Four convolution layers over time, an average of the code columns of each
    second, and two fully-connected layers applied to every second as 1x1
    convolutions. The output has shape (B, K, seconds). With `K = M` it
    detects instruments, with `K = 88` pitches.

    A code column covers `downsample_factor` input frames and belongs to the
    second holding its center time, so the seconds are those of
    :func:`pyRearrange.symbolic.frame_seconds` on the input frames.
    """

    def __init__(self, code_rows: int, out_rows: int, channels: int = 128,
                 frame_rate: float = DEFAULT_FRAME_RATE,
                 downsample_factor: int = 2**_NUM_DOWNSAMPLING_BLOCKS,
                 negative_slope: float = 0.01):
        # pylint: disable=too-many-arguments
        super().__init__()
        if frame_rate <= 0 or downsample_factor < 1:
            raise ValueError("Frame rate and downsampling must be positive")
        self.code_rows = code_rows
        self.frame_rate = frame_rate
        self.downsample_factor = downsample_factor
        self.convs = nn.ModuleList(
            [nn.Conv1d(code_rows if i == 0 else channels, channels, 3,
                       padding=1) for i in range(4)])
        self.fc1 = nn.Conv1d(channels, channels//2, 1)
        self.fc2 = nn.Conv1d(channels//2, out_rows, 1)
        self.negative_slope = negative_slope

    def column_seconds(self, num_columns: int,
                       num_frames: Optional[int] = None
                       ) -> Tuple[np.ndarray, int]:
        """
        Return the second of each code column and the number of seconds.

        Parameters
        ----------
        num_columns : int
            Columns of the code.
        num_frames : int, optional
            Input frames before padding. The default is all frames covered
            by the columns.

        Raises
        ------
        ShapeMismatch
            When the columns do not cover the frames.
        """
        covered = num_columns*self.downsample_factor
        if num_frames is None:
            num_frames = covered
        if not covered - self.downsample_factor < num_frames <= covered:
            raise ShapeMismatch(f"Code of {num_columns} columns does not "
                                f"cover {num_frames} frames")
        second, _ = frame_seconds(covered, self.frame_rate,
                                  self.downsample_factor)
        return second, frame_seconds(num_frames, self.frame_rate)[1]

    def forward(self, code: torch.Tensor,
                num_frames: Optional[int] = None) -> torch.Tensor:
        """
        Return per-second logits for a batch of codes.

        Parameters
        ----------
        code : torch.Tensor
            Codes of shape (B, kappa, tau).
        num_frames : int, optional
            Input frames before padding, which fix the number of seconds.
            The default is `tau` times the downsampling factor.
        """
        # pylint: disable=arguments-differ
        if code.ndim != 3 or code.shape[1] != self.code_rows:
            raise ShapeMismatch(f"Expected code with {self.code_rows} rows, "
                                f"got shape {tuple(code.shape)}")
        second, num_seconds = self.column_seconds(code.shape[-1], num_frames)
        weights = np.zeros((code.shape[-1], num_seconds))
        kept = second < num_seconds
        weights[np.flatnonzero(kept), second[kept]] = 1.0
        weights /= np.maximum(weights.sum(axis=0), 1.0)

        h = code
        for conv in self.convs:
            h = F.leaky_relu(conv(h), self.negative_slope)
        h = torch.matmul(h, torch.as_tensor(weights, dtype=h.dtype,
                                            device=h.device))
        h = F.leaky_relu(self.fc1(h), self.negative_slope)
        return self.fc2(h)


class RearrangementModel(nn.Module, ABC):
    """
    Base class of the pitch and timbre disentangling models.

    Concrete models define their parameter groups, how a CQT is encoded into
    a timbre code plus content, and how the pianoroll is decoded from them.
    The content is what a transfer keeps from the source clip: the pitch
    code for :class:`DuoED` and the skip activations for :class:`UnetED`.

    Attributes
    ----------
    config: ModelConfig
        Hyperparameters of the model.
    D_t: CodeDecoder
        Instrument roll decoder.
    D_p: CodeDecoder
        Pitch roll decoder.
    """

    kind = ""

    def __init__(self, config: ModelConfig):
        super().__init__()
        if config.kind != self.kind:
            config = replace(config, kind=self.kind)
        self.config = config
        enc = config.encoder
        self.D_t = CodeDecoder(enc.kappa, config.num_instruments,
                               config.code_decoder_channels,
                               enc.negative_slope)
        self.D_p = CodeDecoder(enc.kappa, NUM_PITCHES,
                               config.code_decoder_channels,
                               enc.negative_slope)
        self.register_buffer("trained_flag", torch.zeros((),
                                                         dtype=torch.bool))

    @property
    def trained(self) -> bool:
        """Whether the model went through training."""
        return bool(self.trained_flag)

    @trained.setter
    def trained(self, value: bool):
        self.trained_flag.fill_(bool(value))

    @property
    def downsample_factor(self) -> int:
        """Ratio between input frames and code columns."""
        return self.config.encoder.downsample_factor

    @property
    def kappa(self) -> int:
        """Rows of the timbre code."""
        return self.config.encoder.kappa

    @property
    def group_names(self) -> Tuple[str, ...]:
        """Names of the parameter groups."""
        return tuple(self._group_modules())

    @abstractmethod
    def _group_modules(self) -> Dict[str, nn.Module]:
        """Return the module of each parameter group."""

    @abstractmethod
    def encode(self, x: torch.Tensor) -> Tuple[torch.Tensor, object]:
        """
        Encode a padded CQT batch.

        Returns
        -------
        2-tuple
            Timbre code of shape (B, kappa, T/8) and the content.
        """

    @abstractmethod
    def decode_roll(self, z_t: torch.Tensor, content) -> torch.Tensor:
        """Return pianoroll logits (B, 88, T, M) from a code and content."""

    def parameter_groups(self) -> Dict[str, List[nn.Parameter]]:
        """Return the trainable tensors of each parameter group."""
        return {name: list(module.parameters())
                for name, module in self._group_modules().items()}

    def check_partition(self) -> None:
        """
        Make sure each trainable tensor is in exactly one group.

        Raises
        ------
        ValueError
            When a tensor is missing from the groups or in two of them.
        """
        seen = set()
        for name, params in self.parameter_groups().items():
            for p in params:
                if id(p) in seen:
                    raise ValueError(f"Parameter in group {name} is also in "
                                     "another group")
                seen.add(id(p))
        if seen != {id(p) for p in self.parameters()}:
            raise ValueError("Some parameters are not in any group")

    def encode_timbre(self, x: torch.Tensor) -> torch.Tensor:
        """Return the timbre code of a padded CQT batch."""
        return self.encode(x)[0]

    def timbre_logits(self, code: torch.Tensor) -> torch.Tensor:
        """Return `D_t` instrument roll logits (B, M, T) of a code."""
        return self.D_t(code)

    def pitch_logits(self, code: torch.Tensor) -> torch.Tensor:
        """Return `D_p` pitch roll logits (B, 88, T) of a code."""
        return self.D_p(code)

    def roll_logits(self, x: torch.Tensor) -> torch.Tensor:
        """Return pianoroll logits of a padded CQT batch."""
        z_t, content = self.encode(x)
        return self.decode_roll(z_t, content)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        # pylint: disable=arguments-differ
        return self.roll_logits(x)

    def pad(self, x: torch.Tensor) -> Tuple[torch.Tensor, int]:
        """Pad the time axis of an input to a multiple of 8 frames."""
        return pad_time(x, self.downsample_factor)

    def transcribe_logits(self, x: torch.Tensor) -> torch.Tensor:
        """
        Return pianoroll logits for an input of any length.

        Parameters
        ----------
        x : torch.Tensor
            CQT batch of shape (B, 1, 88, T).

        Returns
        -------
        torch.Tensor
            Logits of shape (B, 88, T, M); the padding is cropped away.
        """
        T = x.shape[-1]
        padded, _ = self.pad(x)
        return self.roll_logits(padded)[:, :, :T, :]

    def make_probe(self, out_rows: Optional[int] = None) -> ProbeClassifier:
        """
        Create a probe classifier for the codes of this model.

        Parameters
        ----------
        out_rows : int, optional
            Number of outputs. The default is the number of instruments.
        """
        if out_rows is None:
            out_rows = self.config.num_instruments
        return ProbeClassifier(self.kappa, out_rows,
                               self.config.probe_channels,
                               downsample_factor=self.downsample_factor,
                               negative_slope=self.config.encoder
                               .negative_slope)


class DuoED(RearrangementModel):
    """
    Model with separate timbre and pitch encoders.

    The pianoroll decoder reads `[Z_t; Z_p]`, i.e., the timbre code on top of
    the pitch code.
    """

    kind = "duo"

    def __init__(self, config: ModelConfig):
        super().__init__(config)
        enc = self.config.encoder
        self.E_t = Encoder(enc)
        self.E_p = Encoder(enc)
        self.D_roll = RollDecoder(2*enc.kappa, enc,
                                  self.config.num_instruments,
                                  with_skips=False)

    def _group_modules(self) -> Dict[str, nn.Module]:
        return {"E_t": self.E_t, "E_p": self.E_p, "D_roll": self.D_roll,
                "D_t": self.D_t, "D_p": self.D_p}

    def encode(self, x: torch.Tensor) -> Tuple[torch.Tensor, torch.Tensor]:
        """Return the timbre code and the pitch code."""
        z_t, _ = self.E_t(x)
        z_p, _ = self.E_p(x)
        return z_t, z_p

    def decode_roll(self, z_t: torch.Tensor,
                    content: torch.Tensor) -> torch.Tensor:
        """
        Return pianoroll logits from a timbre and a pitch code.

        Raises
        ------
        ShapeMismatch
            When the codes do not have the same shape.
        """
        if z_t.shape != content.shape:
            raise ShapeMismatch(f"Timbre code {tuple(z_t.shape)} and pitch "
                                f"code {tuple(content.shape)} differ")
        return self.D_roll(torch.cat([z_t, content], dim=1))


class UnetED(RearrangementModel):
    """
    Model with one encoder and skip connections to the pianoroll decoder.

    The code of the encoder is the timbre code; the skip activations of the
    three downsampling blocks carry the rest of the information.
    """

    kind = "unet"

    def __init__(self, config: ModelConfig):
        super().__init__(config)
        enc = self.config.encoder
        self.E_cqt = Encoder(enc)
        self.D_roll = RollDecoder(enc.kappa, enc, self.config.num_instruments,
                                  with_skips=True)

    def _group_modules(self) -> Dict[str, nn.Module]:
        return {"E_cqt": self.E_cqt, "D_roll": self.D_roll, "D_t": self.D_t,
                "D_p": self.D_p}

    def encode(self, x: torch.Tensor
               ) -> Tuple[torch.Tensor, List[torch.Tensor]]:
        """Return the timbre code and the skip activations."""
        return self.E_cqt(x)

    def decode_roll(self, z_t: torch.Tensor,
                    content: Sequence[torch.Tensor]) -> torch.Tensor:
        """
        Return pianoroll logits from the code and the skip activations.

        Raises
        ------
        SkipShapeMismatch
            When the skips do not match the decoder stages.
        """
        return self.D_roll(z_t, content)


_MODEL_CLASSES = {cls.kind: cls for cls in (DuoED, UnetED)}


def build_model(kind: Optional[str] = None,
                config: Optional[ModelConfig] = None,
                seed: Optional[int] = None) -> RearrangementModel:
    """
    Create an untrained model.

    Parameters
    ----------
    kind : str, optional
        `duo` or `unet`. The default is the kind of the configuration.
    config : ModelConfig, optional
        Hyperparameters. The default is :class:`ModelConfig` defaults.
    seed : int, optional
        Seed of the parameter initialization. The default uses the global
        torch random state.

    Returns
    -------
    RearrangementModel
        The model in training mode.

    Raises
    ------
    ValueError
        When the kind is unknown.
    """
    if config is None:
        config = ModelConfig() if kind is None else ModelConfig(kind=kind)
    if kind is None:
        kind = config.kind
    if kind not in _MODEL_CLASSES:
        raise ValueError(f"Unknown model kind '{kind}'")
    config = replace(config, kind=kind)

    if seed is None:
        model = _MODEL_CLASSES[kind](config)
    else:
        with torch.random.fork_rng(devices=[]):
            torch.manual_seed(seed)
            model = _MODEL_CLASSES[kind](config)
    model.check_partition()
    _log.debug("Built %s model with kappa=%d", kind, model.kappa)
    return model
