#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
Transcription and composition style transfer.

A trained model transcribes a clip by decoding its own timbre code and
content. Style transfer decodes the content of a source clip A (its pitch code
or its skip activations) together with the timbre code of a target clip B, so
that the pitches of A are rearranged for the instruments heard in B. The
result follows the timeline of A. When B has a different length, its timbre
code is first brought to the number of code columns of A.
"""

import logging
from dataclasses import dataclass
from typing import Tuple

import numpy as np
import numpy.typing as np_type
import torch

from pyRearrange.errors import (ClipTooShort, DegenerateOutput,
                                LengthMismatch, UntrainedModel)
from pyRearrange.features import AudioClip, compute_cqt
from pyRearrange.models import RearrangementModel, cqt_to_tensor
from pyRearrange.symbolic import Pianoroll, PitchRoll, project_pitch_roll


_log = logging.getLogger(__name__)

TIMBRE_TIME_MODES = ("average", "tile", "crop")
MIN_CLIP_SECONDS = 1.0


@dataclass
class TransferRequest:
    """
    Inputs of a style transfer.

    Attributes
    ----------
    source: AudioClip
        Clip A providing the pitch content and the timeline.
    target: AudioClip
        Clip B providing the timbre.
    model: RearrangementModel
        Trained model.
    threshold: float
        Probability above which a pianoroll cell is active.
    timbre_time_mode: str
        How the timbre code of B is fitted to the length of A: `average`,
        `tile` or `crop`.
    """

    source: AudioClip
    target: AudioClip
    model: RearrangementModel
    threshold: float = 0.5
    timbre_time_mode: str = "average"

    def __post_init__(self):
        _check_threshold(self.threshold)
        if self.timbre_time_mode not in TIMBRE_TIME_MODES:
            raise ValueError(f"Unknown timbre time mode "
                             f"'{self.timbre_time_mode}'")


@dataclass
class TransferResult:
    """
    Output of a transcription or a style transfer.

    Attributes
    ----------
    roll: Pianoroll
        Binarized pianoroll.
    probabilities: numpy.ndarray
        Sigmoid of the pianoroll logits, shape (88, T, M).
    """

    roll: Pianoroll
    probabilities: np_type.NDArray


def _check_threshold(threshold: float) -> None:
    if not 0 < threshold < 1:
        raise ValueError("Threshold must be in (0, 1)")


def _check_model(model: RearrangementModel) -> None:
    if not model.trained:
        raise UntrainedModel("Model has not been trained")


def _clip_input(clip: AudioClip, role: str) -> Tuple[torch.Tensor, float]:
    if clip.duration() < MIN_CLIP_SECONDS:
        raise ClipTooShort(f"{role} clip of {clip.duration():.3f} s is "
                           f"shorter than {MIN_CLIP_SECONDS} s")
    cqt = compute_cqt(clip)
    return cqt_to_tensor(cqt), cqt.frame_rate


def _to_result(model: RearrangementModel, logits: torch.Tensor,
               threshold: float, frame_rate: float) -> TransferResult:
    probabilities = torch.sigmoid(logits[0]).numpy()
    roll = Pianoroll(probabilities > threshold, frame_rate,
                     model.config.instrument_map)
    return TransferResult(roll, probabilities)


def reconcile_timbre(z: torch.Tensor, tau: int, mode: str) -> torch.Tensor:
    """
    Fit a timbre code to a number of columns.

    Parameters
    ----------
    z : torch.Tensor
        Code of shape (B, kappa, tau_b).
    tau : int
        Number of columns wanted.
    mode : str
        `average` repeats the time average of the code, `tile` repeats the
        code cyclically, `crop` keeps the first columns and repeats the last
        column when the code is too short.

    Returns
    -------
    torch.Tensor
        Code of shape (B, kappa, tau).
    """
    tau_b = z.shape[-1]
    if mode == "average":
        return z.mean(dim=-1, keepdim=True).expand(-1, -1, tau).contiguous()
    if mode == "tile":
        return z[..., torch.arange(tau) % tau_b]
    if mode == "crop":
        return z[..., torch.clamp(torch.arange(tau), max=tau_b - 1)]
    raise ValueError(f"Unknown timbre time mode '{mode}'")


def transcribe(model: RearrangementModel, clip: AudioClip,
               threshold: float = 0.5) -> Pianoroll:
    """
    Predict the pianoroll of a clip.

    Parameters
    ----------
    model : RearrangementModel
        Trained model.
    clip : AudioClip
        Audio to transcribe.
    threshold : float, optional
        Probability above which a cell is active. The default is 0.5.

    Returns
    -------
    Pianoroll
        Pianoroll with as many frames as the CQT of the clip.

    Raises
    ------
    UntrainedModel
        When the model has not been trained.
    ValueError
        When the threshold is not in (0, 1).
    """
    _check_threshold(threshold)
    _check_model(model)
    cqt = compute_cqt(clip)
    model.eval()
    with torch.no_grad():
        logits = model.transcribe_logits(cqt_to_tensor(cqt))
    return _to_result(model, logits, threshold, cqt.frame_rate).roll


def rearrange(req: TransferRequest) -> TransferResult:
    """
    Rearrange the pitch content of the source for the timbre of the target.

    The content of the source is decoded with the timbre code of the target.
    The timbre code is only reconciled when the two clips have a different
    number of code columns, so a clip rearranged with itself gives exactly
    its transcription.

    Parameters
    ----------
    req : TransferRequest
        Clips, model and settings.

    Returns
    -------
    TransferResult
        Pianoroll following the timeline of the source, and the
        probabilities.

    Raises
    ------
    UntrainedModel
        When the model has not been trained.
    ClipTooShort
        When a clip is shorter than one second.
    DegenerateOutput
        When no cell of the pianoroll is active.
    """
    model = req.model
    _check_model(model)
    x_a, frame_rate = _clip_input(req.source, "Source")
    x_b, _ = _clip_input(req.target, "Target")
    T = x_a.shape[-1]

    model.eval()
    with torch.no_grad():
        padded_a, _ = model.pad(x_a)
        padded_b, _ = model.pad(x_b)
        z_a, content = model.encode(padded_a)
        z_b, _ = model.encode(padded_b)
        if z_b.shape[-1] != z_a.shape[-1]:
            _log.debug("Fitting timbre code of %d columns to %d (%s)",
                       z_b.shape[-1], z_a.shape[-1], req.timbre_time_mode)
            z_b = reconcile_timbre(z_b, z_a.shape[-1], req.timbre_time_mode)
        logits = model.decode_roll(z_b, content)[:, :, :T]

    result = _to_result(model, logits, req.threshold, frame_rate)
    if not result.roll.data.any():
        raise DegenerateOutput(f"No note above threshold {req.threshold}; "
                               f"maximum probability is "
                               f"{result.probabilities.max():.3f}")
    return result


def pitch_preservation(source_pitch: PitchRoll,
                       output: Pianoroll) -> Tuple[float, float, float]:
    """
    Compare the pitches of a rearrangement with those of its source.

    Parameters
    ----------
    source_pitch : PitchRoll
        Reference pitch roll.
    output : Pianoroll
        Rearranged pianoroll.

    Returns
    -------
    3-tuple of float
        Cell-wise precision, recall and F1 of the pitch projection of the
        output. Two empty rolls agree perfectly; otherwise an undefined ratio
        is 0, and F1 is 0 when precision and recall are both 0.

    Raises
    ------
    LengthMismatch
        When the rolls have different numbers of frames.
    """
    predicted = project_pitch_roll(output).data
    reference = np.asarray(source_pitch.data, dtype=bool)
    if predicted.shape != reference.shape:
        raise LengthMismatch(f"Source pitch roll {reference.shape} and output "
                             f"pitch roll {predicted.shape} differ")
    tp = int(np.sum(predicted & reference))
    n_pred = int(predicted.sum())
    n_ref = int(reference.sum())
    if n_pred == 0 and n_ref == 0:
        return 1.0, 1.0, 1.0
    precision = tp/n_pred if n_pred else 0.0
    recall = tp/n_ref if n_ref else 0.0
    if precision + recall == 0:
        return precision, recall, 0.0
    return precision, recall, 2*precision*recall/(precision + recall)
