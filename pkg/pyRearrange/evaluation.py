#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
Instrument activity detection metrics and disentanglement diagnostics.

Instrument activity detection (IAD) asks which instruments play in each
second of a clip. Frame scores of a model are averaged over each second,
frame labels are pooled with a maximum, and every instrument is scored with
the area under the ROC curve (AUC) over all seconds of the test set. Three
score sources are supported:

- `probe`: a probe classifier trained on the frozen timbre code,
- `decoder_dt`: the instrument roll decoder `D_t` of the model,
- `summed_roll`: the maximum over pitches of the predicted pianoroll.

The disentanglement report trains fresh pitch probes on frozen codes and
compares how much pitch information they can recover.
"""

import json
import logging
import math
from dataclasses import dataclass, field
from typing import (Dict, Iterable, List, Mapping, Optional, Sequence, Tuple,
                    Union)

import numpy as np
import numpy.typing as np_type
from scipy.stats import rankdata
import torch

from pyRearrange.errors import EmptyTestset, LengthMismatch
from pyRearrange.features import CQTMatrix
from pyRearrange.models import RearrangementModel, cqt_to_tensor
from pyRearrange.symbolic import (LOWEST_PITCH, NUM_PITCHES, Pianoroll,
                                  frame_seconds, project_instrument_roll,
                                  project_pitch_roll)
from pyRearrange.training import TrainConfig, probe_code, train_probe


_log = logging.getLogger(__name__)

UNDEFINED = float("nan")
SOURCES = ("probe", "decoder_dt", "summed_roll")
_SOURCE_ALIASES = {"dt": "decoder_dt", "summed": "summed_roll"}
POOLING_MODES = ("pooled", "per_clip")


def auc(scores, labels) -> float:
    """
    Return the area under the ROC curve of scores for binary labels.

    This is the probability that a random positive is scored above a random
    negative, counting ties as one half, computed from the midranks of the
    scores.

    Parameters
    ----------
    scores : array_like
        Real scores.
    labels : array_like
        Binary labels of the same length.

    Returns
    -------
    float
        AUC in [0, 1], or :data:`UNDEFINED` (NaN) when the labels contain a
        single class.

    Raises
    ------
    LengthMismatch
        When the inputs have different lengths.
    """
    scores = np.asarray(scores, dtype=float).ravel()
    labels = np.asarray(labels).ravel().astype(bool)
    if scores.shape != labels.shape:
        raise LengthMismatch(f"{scores.shape[0]} scores for "
                             f"{labels.shape[0]} labels")
    n_pos = int(labels.sum())
    n_neg = labels.shape[0] - n_pos
    if n_pos == 0 or n_neg == 0:
        return UNDEFINED
    ranks = rankdata(scores)
    return float((ranks[labels].sum() - n_pos*(n_pos + 1)/2)
                 / (n_pos*n_neg))


def pool_to_seconds(frame_values, frame_rate: float,
                    reduce: str = "max") -> np_type.NDArray:
    """
    Aggregate frame values into one value per second.

    Second `s` gathers the frames whose center time lies in `[s, s + 1)`. The
    last second is kept only if at least half of its frames exist.

    Parameters
    ----------
    frame_values : array_like
        Matrix of shape (K, T).
    frame_rate : float
        Frames per second.
    reduce : str, optional
        `max` or `mean`. The default is `max`.

    Returns
    -------
    numpy.ndarray
        Matrix of shape (K, seconds).

    Raises
    ------
    ValueError
        When the frame rate is not positive or the reduction is unknown.
    """
    if reduce not in ("max", "mean"):
        raise ValueError(f"Unknown reduction '{reduce}'")
    values = np.asarray(frame_values)
    second, num_seconds = frame_seconds(values.shape[1], frame_rate)

    dtype = values.dtype if reduce == "max" else float
    out = np.zeros((values.shape[0], num_seconds), dtype=dtype)
    for s in range(num_seconds):
        cols = values[:, second == s]
        out[:, s] = cols.max(axis=1) if reduce == "max" else cols.mean(axis=1)
    return out


@dataclass
class IADResult:
    """
    Per-instrument AUC of an instrument activity detection run.

    Attributes
    ----------
    instrument_names: list of str
        Column names.
    per_instrument_auc: numpy.ndarray
        AUC of each instrument, NaN when undefined.
    num_seconds: int
        Number of evaluated seconds.
    source: str
        Score source.
    """

    instrument_names: List[str]
    per_instrument_auc: np_type.NDArray
    num_seconds: int
    source: str = ""

    @property
    def average_auc(self) -> float:
        """Mean AUC over the instruments where it is defined."""
        defined = self.per_instrument_auc[~np.isnan(self.per_instrument_auc)]
        return float(defined.mean()) if defined.shape[0] else UNDEFINED

    def to_json(self) -> str:
        """Return the result as one line of JSON; undefined AUCs are null."""
        def clean(v):
            return None if math.isnan(v) else float(v)
        return json.dumps({
            "source": self.source, "num_seconds": self.num_seconds,
            "per_instrument_auc": {n: clean(v) for n, v in
                                   zip(self.instrument_names,
                                       self.per_instrument_auc)},
            "average_auc": clean(self.average_auc)}, sort_keys=True)

    def format_table(self) -> str:
        """Return a text table with one column per instrument and Avg."""
        names = list(self.instrument_names) + ["Avg"]
        values = list(self.per_instrument_auc) + [self.average_auc]
        widths = [max(len(n), 5) for n in names]
        header = "  ".join(n.rjust(w) for n, w in zip(names, widths))
        row = "  ".join(("-" if math.isnan(v) else f"{v:.3f}").rjust(w)
                        for v, w in zip(values, widths))
        return header + "\n" + row

    def __str__(self):
        return self.format_table()


def evaluate_scores(scores: Sequence[np.ndarray],
                    labels: Sequence[np.ndarray],
                    instrument_names: Sequence[str],
                    pooling: str = "pooled", source: str = "") -> IADResult:
    """
    Compute the IAD result of per-second scores and labels.

    Parameters
    ----------
    scores : list of numpy.ndarray
        Per-second scores (K, seconds) of each clip.
    labels : list of numpy.ndarray
        Per-second binary labels (K, seconds) of each clip. Each pair is
        cropped to its shorter length.
    instrument_names : list of str
        Names of the K rows.
    pooling : str, optional
        `pooled` computes the AUC over the seconds of all clips together,
        `per_clip` averages the AUCs of the clips where they are defined.
        The default is `pooled`.
    source : str, optional
        Label of the score source stored in the result.

    Returns
    -------
    IADResult
        Per-instrument and average AUC.

    Raises
    ------
    EmptyTestset
        When there is no second to evaluate.
    ValueError
        When the pooling mode is unknown.
    """
    # pylint: disable=too-many-arguments
    if pooling not in POOLING_MODES:
        raise ValueError(f"Unknown pooling '{pooling}'")
    if len(scores) != len(labels):
        raise LengthMismatch(f"{len(scores)} score clips for {len(labels)} "
                             "label clips")
    K = len(instrument_names)
    cropped = []
    for s, y in zip(scores, labels):
        s, y = np.asarray(s, dtype=float), np.asarray(y)
        if s.shape[0] != K or y.shape[0] != K:
            raise LengthMismatch(f"Expected {K} rows, got {s.shape[0]} "
                                 f"scores and {y.shape[0]} labels")
        S = min(s.shape[1], y.shape[1])
        cropped.append((s[:, :S], y[:, :S].astype(bool)))
    num_seconds = sum(s.shape[1] for s, _ in cropped)
    if num_seconds == 0:
        raise EmptyTestset("No seconds to evaluate")

    if pooling == "pooled":
        all_s = np.concatenate([s for s, _ in cropped], axis=1)
        all_y = np.concatenate([y for _, y in cropped], axis=1)
        per = np.array([auc(all_s[k], all_y[k]) for k in range(K)])
    else:
        table = np.array([[auc(s[k], y[k]) for k in range(K)]
                          for s, y in cropped if s.shape[1]])
        per = np.full(K, UNDEFINED)
        for k in range(K):
            defined = table[:, k][~np.isnan(table[:, k])]
            if defined.shape[0]:
                per[k] = defined.mean()
    return IADResult(list(instrument_names), per, num_seconds, source)


def _sigmoid(logits: torch.Tensor) -> np_type.NDArray:
    return torch.sigmoid(logits[0]).numpy()


def clip_scores(model: RearrangementModel, cqt: CQTMatrix, roll: Pianoroll,
                source: str, probe: Optional[torch.nn.Module] = None
                ) -> Tuple[np_type.NDArray, np_type.NDArray]:
    """
    Return per-second instrument scores and labels of one clip.

    Returns
    -------
    2-tuple
        Scores and binary labels, both (M, seconds).
    """
    source = _SOURCE_ALIASES.get(source, source)
    x = cqt_to_tensor(cqt)
    T = x.shape[-1]
    labels = pool_to_seconds(project_instrument_roll(roll).data,
                             roll.frame_rate, "max")
    model.eval()
    with torch.no_grad():
        if source == "probe":
            if probe is None:
                raise ValueError("The probe source needs a probe classifier")
            probe.eval()
            scores = _sigmoid(probe(probe_code(model, x, "timbre"), T))
        elif source == "decoder_dt":
            padded, _ = model.pad(x)
            frames = _sigmoid(model.timbre_logits(
                model.encode_timbre(padded))[..., :T])
            scores = pool_to_seconds(frames, cqt.frame_rate, "mean")
        elif source == "summed_roll":
            frames = _sigmoid(model.transcribe_logits(x)).max(axis=0).T
            scores = pool_to_seconds(frames, cqt.frame_rate, "mean")
        else:
            raise ValueError(f"Unknown score source '{source}'")
    S = min(scores.shape[1], labels.shape[1])
    return scores[:, :S], labels[:, :S]


def evaluate_iad(model: RearrangementModel,
                 testset: Iterable[Tuple[CQTMatrix, Pianoroll]],
                 source: str = "probe",
                 probe: Optional[torch.nn.Module] = None,
                 pooling: str = "pooled") -> IADResult:
    """
    Evaluate per-second instrument activity detection on a test set.

    Parameters
    ----------
    model : RearrangementModel
        Trained model, used frozen.
    testset : iterable of 2-tuples
        (CQT, pianoroll) pairs.
    source : str, optional
        `probe`, `decoder_dt` (alias `dt`) or `summed_roll` (alias
        `summed`). The default is `probe`.
    probe : torch.nn.Module, optional
        Probe classifier, required for the probe source.
    pooling : str, optional
        AUC pooling, see :func:`evaluate_scores`.

    Returns
    -------
    IADResult
        Per-instrument and average AUC.

    Raises
    ------
    EmptyTestset
        When the test set has no clips.
    """
    source = _SOURCE_ALIASES.get(source, source)
    if source not in SOURCES:
        raise ValueError(f"Unknown score source '{source}'")
    scores, labels = [], []
    for cqt, roll in testset:
        s, y = clip_scores(model, cqt, roll, source, probe)
        scores.append(s)
        labels.append(y)
    if not scores:
        raise EmptyTestset("Test set has no clips")
    result = evaluate_scores(scores, labels,
                             model.config.instrument_map.names, pooling,
                             source)
    _log.info("IAD %s: average AUC %.4f over %d seconds", source,
              result.average_auc, result.num_seconds)
    return result


def pitch_leakage(model: RearrangementModel,
                  pairs: Iterable[Tuple[CQTMatrix, Pianoroll]]) -> float:
    """
    Return the mean `sigmoid(D_p(Z_t))` over clips.

    This is the activity the pitch decoder still reads from the timbre code.
    It goes to zero as pitch information is removed from the code.
    """
    total, count = 0.0, 0
    model.eval()
    with torch.no_grad():
        for cqt, _ in pairs:
            x = cqt_to_tensor(cqt)
            padded, _ = model.pad(x)
            p = torch.sigmoid(model.pitch_logits(
                model.encode_timbre(padded))[..., :x.shape[-1]])
            total += float(p.sum())
            count += p.numel()
    if count == 0:
        raise EmptyTestset("No clips to measure pitch leakage on")
    return total/count


def probe_examples(pairs: Iterable[Tuple[CQTMatrix, Pianoroll]],
                   target: str = "instrument"
                   ) -> List[Tuple[torch.Tensor, np_type.NDArray]]:
    """
    Build probe training examples from (CQT, pianoroll) pairs.

    Parameters
    ----------
    pairs : iterable of 2-tuples
        Clips.
    target : str, optional
        `instrument` for per-second instrument activity, `pitch` for
        per-second pitch activity. The default is `instrument`.

    Returns
    -------
    list of 2-tuples
        CQT tensors and per-second binary labels.
    """
    examples = []
    for cqt, roll in pairs:
        if target == "instrument":
            frames = project_instrument_roll(roll).data
        elif target == "pitch":
            frames = project_pitch_roll(roll).data
        else:
            raise ValueError(f"Unknown probe target '{target}'")
        examples.append((cqt_to_tensor(cqt),
                         pool_to_seconds(frames, roll.frame_rate, "max")))
    return examples


@dataclass
class DisentanglementReport:
    """
    Held-out pitch AUC of fresh probes on the codes of several models.

    Attributes
    ----------
    pitch_auc: dict
        Average pitch detection AUC of each arm.
    per_pitch_auc: dict
        Per-pitch AUC of each arm.
    """

    pitch_auc: Dict[str, float] = field(default_factory=dict)
    per_pitch_auc: Dict[str, np_type.NDArray] = field(default_factory=dict)

    def gap(self, first: str, second: str) -> float:
        """Return the pitch AUC of one arm minus that of another."""
        return self.pitch_auc[first] - self.pitch_auc[second]

    def gaps(self) -> Dict[Tuple[str, str], float]:
        """Return the gap of every ordered pair of distinct arms."""
        return {(a, b): self.gap(a, b) for a in self.pitch_auc
                for b in self.pitch_auc if a != b}

    def to_json(self) -> str:
        """Return the average AUCs as one line of JSON."""
        return json.dumps({k: (None if math.isnan(v) else v)
                           for k, v in self.pitch_auc.items()},
                          sort_keys=True)


def disentanglement_report(
        arms: Mapping[str, Union[RearrangementModel,
                                 Tuple[RearrangementModel, str]]],
        train_pairs: Sequence[Tuple[CQTMatrix, Pianoroll]],
        test_pairs: Sequence[Tuple[CQTMatrix, Pianoroll]],
        cfg: Optional[TrainConfig] = None,
        seed: int = 0) -> DisentanglementReport:
    """
    Measure how much pitch information frozen codes carry.

    For every arm a pitch probe with 88 outputs is initialized from the same
    seed, trained on the codes of the training clips and scored by pitch
    detection AUC on the held-out clips. Lower AUC means less pitch
    information in the code.

    Parameters
    ----------
    arms : dict
        Models by name, or (model, code) tuples where code is `timbre` or,
        for DuoED, `pitch`.
    train_pairs : list of 2-tuples
        (CQT, pianoroll) pairs to train the probes on.
    test_pairs : list of 2-tuples
        Held-out (CQT, pianoroll) pairs.
    cfg : TrainConfig, optional
        Probe optimizer settings. The default is :class:`TrainConfig`
        defaults.
    seed : int, optional
        Seed of the probe initialization. The default is 0.

    Returns
    -------
    DisentanglementReport
        Pitch AUC of each arm.
    """
    # pylint: disable=too-many-locals
    if cfg is None:
        cfg = TrainConfig()
    train_examples = probe_examples(train_pairs, "pitch")
    test_examples = probe_examples(test_pairs, "pitch")
    pitch_names = [str(LOWEST_PITCH + f) for f in range(NUM_PITCHES)]

    report = DisentanglementReport()
    for name, arm in arms.items():
        model, code = arm if isinstance(arm, tuple) else (arm, "timbre")
        with torch.random.fork_rng(devices=[]):
            torch.manual_seed(seed)
            probe = model.make_probe(NUM_PITCHES)
        train_probe(model, probe, train_examples, cfg, code)

        scores, labels = [], []
        with torch.no_grad():
            for x, y in test_examples:
                scores.append(_sigmoid(probe(probe_code(model, x, code),
                                                    x.shape[-1])))
                labels.append(y)
        result = evaluate_scores(scores, labels, pitch_names,
                                 source=f"pitch probe {name}")
        report.pitch_auc[name] = result.average_auc
        report.per_pitch_auc[name] = result.per_instrument_auc
        _log.info("Pitch AUC of %s: %.4f", name, result.average_auc)
    return report
