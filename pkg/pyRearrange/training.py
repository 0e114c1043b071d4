#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
Losses, training steps and checkpoints of the rearrangement models.

All losses are binary cross entropies summed over the elements of the rolls.
Training a model alternates between phases on every batch, and each phase
only updates the parameter groups it is allowed to touch:

- :class:`~pyRearrange.models.DuoED`: a reconstruction phase updates every
  group on `L_roll + L_t + L_p`. An adversarial phase then updates only the
  encoders so that `D_t` outputs nothing from the pitch code and `D_p`
  outputs nothing from the timbre code.
- :class:`~pyRearrange.models.UnetED`: a reconstruction phase updates
  `E_cqt`, `D_roll` and `D_t` on `L_roll + L_t`. A pitch phase updates only
  `D_p`, which learns to read pitches from the (constant) timbre code. An
  adversarial phase updates only `E_cqt` so that `D_p` outputs nothing.

Each phase has its own SGD optimizer holding exactly its groups, and modules
outside a phase are frozen (evaluation mode, no gradients) while it runs, so
the excluded parameters and their batch normalization statistics are left
exactly unchanged.
"""

import contextlib
import json
import logging
import pickle
import time
import zipfile
from dataclasses import asdict, dataclass, field
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
import torch
from torch import nn
import torch.nn.functional as F
from torch.utils.data import DataLoader, Dataset
from tqdm import tqdm

from pyRearrange.config import check_keys, load_config_file
from pyRearrange.errors import (CorruptCheckpoint, NonBinaryTarget,
                                NonFiniteLoss, ShapeMismatch,
                                VersionMismatch)
from pyRearrange.features import CQTMatrix
from pyRearrange.models import (MODEL_KINDS, ModelConfig, ProbeClassifier,
                                RearrangementModel, build_model,
                                cqt_to_tensor)
from pyRearrange.symbolic import Pianoroll


_log = logging.getLogger(__name__)

FORMAT_VERSION = 1

_PHASE_GROUPS = {
    "duo": {"reconstruct": ("E_t", "E_p", "D_roll", "D_t", "D_p"),
            "adversarial": ("E_t", "E_p")},
    "unet": {"reconstruct": ("E_cqt", "D_roll", "D_t"),
             "pitch": ("D_p",),
             "adversarial": ("E_cqt",)},
}


@dataclass
class TrainConfig:
    """
    Settings of a training run.

    Attributes
    ----------
    learning_rate: float
        Initial SGD step size.
    momentum: float
        SGD momentum in [0, 1).
    batch_size: int
        Chunks per batch.
    epochs: int
        Passes over the training chunks.
    adversarial_weight: float
        Weight of the adversarial losses.
    adversarial: bool
        Whether the adversarial phase runs.
    model_kind: str
        `duo` or `unet`.
    seed: int
        Seed of the initialization and of the batch order.
    lr_decay: float
        Factor applied to the learning rate after every epoch.
    log_every: int
        Steps between progress log lines.
    probe_epochs: int
        Passes over the examples when training a probe classifier.
    """

    # pylint: disable=too-many-instance-attributes
    learning_rate: float = 0.005
    momentum: float = 0.9
    batch_size: int = 16
    epochs: int = 10
    adversarial_weight: float = 1.0
    adversarial: bool = True
    model_kind: str = "unet"
    seed: int = 0
    lr_decay: float = 1.0
    log_every: int = 50
    probe_epochs: int = 20

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ValueError("Learning rate must be positive")
        if not 0 <= self.momentum < 1:
            raise ValueError("Momentum must be in [0, 1)")
        if self.batch_size < 1 or self.epochs < 0 or self.probe_epochs < 0:
            raise ValueError("Batch size and epochs must be positive")
        if self.adversarial_weight < 0:
            raise ValueError("Adversarial weight must be non-negative")
        if self.model_kind not in MODEL_KINDS:
            raise ValueError(f"Unknown model kind '{self.model_kind}'")
        if not 0 < self.lr_decay <= 1:
            raise ValueError("Learning rate decay must be in (0, 1]")
        if self.log_every < 1:
            raise ValueError("Logging interval must be positive")

    def to_dict(self) -> dict:
        """Return a JSON serializable representation."""
        return asdict(self)

    @classmethod
    def from_mapping(cls, info: dict) -> "TrainConfig":
        """
        Create a configuration from a plain mapping.

        Raises
        ------
        ValueError
            When the mapping has unknown keys or invalid values.
        """
        check_keys(info, cls)
        return cls(**info)


def load_train_config(path) -> TrainConfig:
    """Read a :class:`TrainConfig` from a YAML file."""
    return TrainConfig.from_mapping(load_config_file(path))


@dataclass
class LossReport:
    """
    Losses of one training step, divided by their number of elements.

    Adversarial entries are zero when the adversarial phase did not run.
    """

    roll: float = 0.0
    timbre: float = 0.0
    pitch: float = 0.0
    timbre_adv: float = 0.0
    pitch_adv: float = 0.0

    def to_dict(self) -> dict:
        """Return the losses by name."""
        return asdict(self)


def bce_loss(logits: torch.Tensor, targets: torch.Tensor) -> torch.Tensor:
    """
    Return the summed binary cross entropy between logits and binary targets.

    The sigmoid is applied inside the loss with the numerically stable
    log-sum-exp form, i.e., the result is
    `-sum(y*log(sigmoid(x)) + (1 - y)*log(1 - sigmoid(x)))`.

    Parameters
    ----------
    logits : torch.Tensor
        Predictions before the sigmoid.
    targets : torch.Tensor
        Tensor of zeros and ones with the shape of `logits`.

    Returns
    -------
    torch.Tensor
        Non-negative scalar.

    Raises
    ------
    ShapeMismatch
        When the shapes differ.
    NonBinaryTarget
        When a target is not 0 or 1.
    """
    if logits.shape != targets.shape:
        raise ShapeMismatch(f"Logits {tuple(logits.shape)} and targets "
                            f"{tuple(targets.shape)} differ in shape")
    targets = targets.to(logits.dtype)
    if not torch.all((targets == 0) | (targets == 1)):
        raise NonBinaryTarget("Targets must be 0 or 1")
    return F.binary_cross_entropy_with_logits(logits, targets,
                                              reduction="sum")


def adversarial_zero_loss(logits: torch.Tensor) -> torch.Tensor:
    """Return :func:`bce_loss` against all-zero targets."""
    return F.binary_cross_entropy_with_logits(logits,
                                              torch.zeros_like(logits),
                                              reduction="sum")


@contextlib.contextmanager
def frozen(*modules: nn.Module):
    """
    Temporarily put modules in evaluation mode without gradients.

    Gradients still flow through the frozen modules to their inputs.
    """
    saved = [(m, m.training, [p.requires_grad for p in m.parameters()])
             for m in modules]
    for m in modules:
        m.eval()
        for p in m.parameters():
            p.requires_grad_(False)
    try:
        yield
    finally:
        for m, training, flags in saved:
            m.train(training)
            for p, flag in zip(m.parameters(), flags):
                p.requires_grad_(flag)


@dataclass
class Batch:
    """
    Tensors of a training batch.

    Attributes
    ----------
    cqt: torch.Tensor
        Inputs (B, 1, 88, T).
    roll: torch.Tensor
        Pianoroll targets (B, 88, T, M).
    instrument: torch.Tensor
        Instrument roll targets (B, M, T).
    pitch: torch.Tensor
        Pitch roll targets (B, 88, T).
    """

    cqt: torch.Tensor
    roll: torch.Tensor
    instrument: torch.Tensor = field(init=False)
    pitch: torch.Tensor = field(init=False)

    def __post_init__(self):
        self.instrument = self.roll.amax(dim=1).transpose(1, 2)
        self.pitch = self.roll.amax(dim=3)

    @property
    def T(self) -> int:
        """Frames of the batch."""
        return self.cqt.shape[-1]


def _as_tensors(cqt, roll) -> Tuple[torch.Tensor, torch.Tensor]:
    if isinstance(cqt, CQTMatrix):
        cqt = cqt_to_tensor(cqt)[0]
    if isinstance(roll, Pianoroll):
        roll = torch.from_numpy(roll.data.astype(np.float32))
    return cqt, roll


def make_batch(items: Sequence[tuple]) -> Batch:
    """
    Collate (CQT, pianoroll) pairs into a batch.

    Parameters
    ----------
    items : list of 2-tuples
        Pairs given either as (CQTMatrix, Pianoroll) or as tensors of shapes
        (1, 88, T) and (88, T, M). All pairs must have the same T.

    Returns
    -------
    Batch
        Stacked tensors with the derived instrument and pitch rolls.
    """
    cqts, rolls = zip(*(_as_tensors(c, r) for c, r in items))
    return Batch(torch.stack(cqts), torch.stack(rolls))


class ChunkDataset(Dataset):
    """Training chunks as tensors, for use with a data loader."""

    def __init__(self, chunks: Sequence[Tuple[CQTMatrix, Pianoroll]]):
        self._items = [_as_tensors(c, r) for c, r in chunks]

    def __len__(self):
        return len(self._items)

    def __getitem__(self, i):
        return self._items[i]


def make_optimizers(model: RearrangementModel,
                    cfg: TrainConfig) -> Dict[str, torch.optim.Optimizer]:
    """
    Create the SGD optimizer of each training phase of a model.

    Returns
    -------
    dict
        Optimizer of each phase, holding the parameters of its groups only.
    """
    groups = model.parameter_groups()
    optimizers = {}
    for phase, names in _PHASE_GROUPS[model.kind].items():
        params = [p for name in names for p in groups[name]]
        optimizers[phase] = torch.optim.SGD(params, lr=cfg.learning_rate,
                                            momentum=cfg.momentum)
    return optimizers


def _check_finite(phase: str, losses: Dict[str, torch.Tensor],
                  logits: Dict[str, torch.Tensor]) -> None:
    if all(bool(torch.isfinite(v)) for v in losses.values()):
        return
    values = ", ".join(f"{k}={float(v):.6g}" for k, v in losses.items())
    ranges = ", ".join(f"|{k}|max={float(v.detach().abs().max()):.6g}"
                       for k, v in logits.items())
    raise NonFiniteLoss(f"Non-finite loss in {phase} phase: {values}; "
                        f"{ranges}")


def train_step_duo(model: RearrangementModel,
                   optimizers: Dict[str, torch.optim.Optimizer],
                   batch: Batch, cfg: TrainConfig) -> LossReport:
    """
    Run the training phases of a DuoED model on one batch.

    Parameters
    ----------
    model : DuoED
        Model in training mode.
    optimizers : dict
        Optimizers from :func:`make_optimizers`.
    batch : Batch
        Training batch.
    cfg : TrainConfig
        Training settings.

    Returns
    -------
    LossReport
        Losses of the batch before the updates.

    Raises
    ------
    NonFiniteLoss
        When a loss is infinite or NaN.
    """
    T = batch.T
    x, _ = model.pad(batch.cqt)

    model.zero_grad(set_to_none=True)
    z_t, z_p = model.encode(x)
    roll_logits = model.decode_roll(z_t, z_p)[:, :, :T]
    t_logits = model.timbre_logits(z_t)[..., :T]
    p_logits = model.pitch_logits(z_p)[..., :T]
    losses = {"roll": bce_loss(roll_logits, batch.roll),
              "timbre": bce_loss(t_logits, batch.instrument),
              "pitch": bce_loss(p_logits, batch.pitch)}
    _check_finite("reconstruct", losses, {"roll": roll_logits,
                                          "timbre": t_logits,
                                          "pitch": p_logits})
    sum(losses.values()).backward()
    optimizers["reconstruct"].step()
    report = LossReport(roll=float(losses["roll"])/batch.roll.numel(),
                        timbre=float(losses["timbre"])
                        / batch.instrument.numel(),
                        pitch=float(losses["pitch"])/batch.pitch.numel())

    if not cfg.adversarial or cfg.adversarial_weight == 0:
        return report

    model.zero_grad(set_to_none=True)
    with frozen(model.D_roll, model.D_t, model.D_p):
        z_t, z_p = model.encode(x)
        t_logits = model.timbre_logits(z_p)[..., :T]
        p_logits = model.pitch_logits(z_t)[..., :T]
        adv = {"timbre_adv": adversarial_zero_loss(t_logits),
               "pitch_adv": adversarial_zero_loss(p_logits)}
        _check_finite("adversarial", adv, {"timbre": t_logits,
                                           "pitch": p_logits})
        (cfg.adversarial_weight*(adv["timbre_adv"]
                                 + adv["pitch_adv"])).backward()
    optimizers["adversarial"].step()
    report.timbre_adv = float(adv["timbre_adv"])/t_logits.numel()
    report.pitch_adv = float(adv["pitch_adv"])/p_logits.numel()
    return report


def train_step_unet(model: RearrangementModel,
                    optimizers: Dict[str, torch.optim.Optimizer],
                    batch: Batch, cfg: TrainConfig) -> LossReport:
    """
    Run the training phases of a UnetED model on one batch.

    Parameters
    ----------
    model : UnetED
        Model in training mode.
    optimizers : dict
        Optimizers from :func:`make_optimizers`.
    batch : Batch
        Training batch.
    cfg : TrainConfig
        Training settings.

    Returns
    -------
    LossReport
        Losses of the batch before the updates of their phase.

    Raises
    ------
    NonFiniteLoss
        When a loss is infinite or NaN.
    """
    T = batch.T
    x, _ = model.pad(batch.cqt)

    model.zero_grad(set_to_none=True)
    z_t, skips = model.encode(x)
    roll_logits = model.decode_roll(z_t, skips)[:, :, :T]
    t_logits = model.timbre_logits(z_t)[..., :T]
    losses = {"roll": bce_loss(roll_logits, batch.roll),
              "timbre": bce_loss(t_logits, batch.instrument)}
    _check_finite("reconstruct", losses, {"roll": roll_logits,
                                          "timbre": t_logits})
    (losses["roll"] + losses["timbre"]).backward()
    optimizers["reconstruct"].step()

    # D_p learns from the code as it was, without reaching the encoder
    model.zero_grad(set_to_none=True)
    p_logits = model.pitch_logits(z_t.detach())[..., :T]
    l_p = bce_loss(p_logits, batch.pitch)
    _check_finite("pitch", {"pitch": l_p}, {"pitch": p_logits})
    l_p.backward()
    optimizers["pitch"].step()

    report = LossReport(roll=float(losses["roll"])/batch.roll.numel(),
                        timbre=float(losses["timbre"])
                        / batch.instrument.numel(),
                        pitch=float(l_p)/batch.pitch.numel())
    if not cfg.adversarial or cfg.adversarial_weight == 0:
        return report

    model.zero_grad(set_to_none=True)
    with frozen(model.D_roll, model.D_t, model.D_p):
        z_t, _ = model.encode(x)
        p_logits = model.pitch_logits(z_t)[..., :T]
        l_pn = adversarial_zero_loss(p_logits)
        _check_finite("adversarial", {"pitch_adv": l_pn},
                      {"pitch": p_logits})
        (cfg.adversarial_weight*l_pn).backward()
    optimizers["adversarial"].step()
    report.pitch_adv = float(l_pn)/p_logits.numel()
    return report


def epoch_seed(seed: int, epoch: int) -> int:
    """Return the seed of the batch order of an epoch."""
    return int(np.random.SeedSequence([seed, epoch]).generate_state(1)[0])


class Trainer:
    """
    Training loop of a rearrangement model.

    Attributes
    ----------
    model: RearrangementModel
        Model being trained.
    config: TrainConfig
        Training settings.
    optimizers: dict
        Optimizer of each phase.
    step_count: int
        Number of batches trained on.
    epoch: int
        Number of completed epochs.
    """

    def __init__(self, model: RearrangementModel, config: TrainConfig):
        if model.kind != config.model_kind:
            raise ValueError(f"Training config is for '{config.model_kind}' "
                             f"but model is '{model.kind}'")
        self.model = model
        self.config = config
        self.optimizers = make_optimizers(model, config)
        self.schedulers = {
            phase: torch.optim.lr_scheduler.ExponentialLR(
                opt, gamma=config.lr_decay)
            for phase, opt in self.optimizers.items()}
        self.step_count = 0
        self.epoch = 0
        self._step_fn = (train_step_duo if model.kind == "duo"
                         else train_step_unet)

    def step(self, batch: Batch) -> LossReport:
        """Train on one batch."""
        self.model.train()
        report = self._step_fn(self.model, self.optimizers, batch,
                               self.config)
        self.step_count += 1
        self.model.trained = True
        return report

    def end_epoch(self) -> None:
        """Advance the epoch counter and the learning rate schedule."""
        for scheduler in self.schedulers.values():
            scheduler.step()
        self.epoch += 1

    def fit(self, dataset: Dataset, epochs: Optional[int] = None,
            metrics_path=None,
            on_epoch_end: Optional[Callable[["Trainer"], dict]] = None,
            progress: bool = False) -> List[dict]:
        """
        Train until a number of epochs is completed.

        The order of the batches of epoch `e` is a function of the seed and
        `e` only, so a run resumed from a checkpoint sees the same batches.

        Parameters
        ----------
        dataset : Dataset
            Training chunks, e.g., a :class:`ChunkDataset`.
        epochs : int, optional
            Total number of epochs to reach. The default is the configured
            number of epochs.
        metrics_path : str or path-like, optional
            File the step metrics are appended to as JSON lines.
        on_epoch_end : callable, optional
            Called with the trainer before the first epoch of a fresh run and
            after every epoch. The returned mapping is added to the epoch
            record, e.g., the pitch leakage on held-out clips.
        progress : bool, optional
            Whether to show a progress bar. The default is `False`.

        Returns
        -------
        list of dict
            One record per step and per epoch end.
        """
        # pylint: disable=too-many-arguments
        if epochs is None:
            epochs = self.config.epochs
        records = []

        def emit(record):
            records.append(record)
            if metrics_path is not None:
                with open(metrics_path, "a", encoding="utf-8") as f:
                    f.write(json.dumps(record, sort_keys=True) + "\n")

        if on_epoch_end is not None and self.step_count == 0:
            emit({"epoch": 0, "step": 0, **on_epoch_end(self)})

        start = time.perf_counter()
        while self.epoch < epochs:
            generator = torch.Generator()
            generator.manual_seed(epoch_seed(self.config.seed, self.epoch))
            loader = DataLoader(dataset, batch_size=self.config.batch_size,
                                shuffle=True, generator=generator,
                                collate_fn=make_batch)
            for batch in tqdm(loader, disable=not progress,
                              desc=f"epoch {self.epoch + 1}"):
                report = self.step(batch)
                emit({"epoch": self.epoch, "step": self.step_count,
                      "wall_time": time.perf_counter() - start,
                      **report.to_dict()})
                if self.step_count % self.config.log_every == 0:
                    _log.info("step %d: roll %.5f, timbre %.5f, pitch %.5f, "
                              "timbre_adv %.5f, pitch_adv %.5f",
                              self.step_count, report.roll, report.timbre,
                              report.pitch, report.timbre_adv,
                              report.pitch_adv)
            self.end_epoch()
            if on_epoch_end is not None:
                emit({"epoch": self.epoch, "step": self.step_count,
                      **on_epoch_end(self)})
        return records

    @classmethod
    def from_checkpoint(cls, checkpoint: "Checkpoint") -> "Trainer":
        """
        Resume training from a loaded checkpoint.

        Raises
        ------
        CorruptCheckpoint
            When the checkpoint has no training state.
        """
        if checkpoint.train_config is None:
            raise CorruptCheckpoint("Checkpoint has no training state")
        trainer = cls(checkpoint.model, checkpoint.train_config)
        try:
            for phase, opt in trainer.optimizers.items():
                opt.load_state_dict(checkpoint.optimizer_states[phase])
            for phase, sched in trainer.schedulers.items():
                sched.load_state_dict(checkpoint.scheduler_states[phase])
        except (KeyError, ValueError, RuntimeError) as exc:
            raise CorruptCheckpoint(f"Invalid optimizer state: "
                                    f"{exc}") from exc
        trainer.step_count = checkpoint.step
        trainer.epoch = checkpoint.epoch
        if checkpoint.rng_state is not None:
            torch.set_rng_state(checkpoint.rng_state)
        return trainer


def probe_code(model: RearrangementModel, x: torch.Tensor,
                code: str) -> torch.Tensor:
    padded, _ = model.pad(x)
    if code == "timbre":
        return model.encode_timbre(padded)
    if code == "pitch":
        if model.kind != "duo":
            raise ValueError("Only DuoED models have a pitch code")
        return model.encode(padded)[1]
    raise ValueError(f"Unknown code '{code}'")


def train_probe(model: RearrangementModel, probe: nn.Module,
                examples: Sequence[Tuple[torch.Tensor, np.ndarray]],
                cfg: TrainConfig, code: str = "timbre",
                epochs: Optional[int] = None) -> nn.Module:
    """
    Train a probe classifier on the codes of a frozen model.

    The codes are computed once in evaluation mode without gradients; the
    model is never updated.

    Parameters
    ----------
    model : RearrangementModel
        Frozen model.
    probe : nn.Module
        Classifier called with a code and the unpadded number of input
        frames, returning per-second logits (B, K, seconds).
    examples : list of 2-tuples
        CQT tensors (1, 1, 88, T) and per-second binary labels (K, seconds).
    cfg : TrainConfig
        Learning rate, momentum, batch size, probe epochs and seed.
    code : str, optional
        `timbre` or, for DuoED models, `pitch`. The default is `timbre`.
    epochs : int, optional
        Passes over the examples. The default is `cfg.probe_epochs`.

    Returns
    -------
    nn.Module
        The trained probe in evaluation mode.

    Raises
    ------
    NonFiniteLoss
        When the probe loss diverges.
    """
    # pylint: disable=too-many-arguments,too-many-locals
    if epochs is None:
        epochs = cfg.probe_epochs
    model.eval()
    with torch.no_grad():
        cached = [(probe_code(model, x, code), x.shape[-1],
                   torch.as_tensor(np.asarray(labels), dtype=torch.float32))
                  for x, labels in examples]

    optimizer = torch.optim.SGD(probe.parameters(), lr=cfg.learning_rate,
                                momentum=cfg.momentum)
    rng = np.random.default_rng([cfg.seed, len(cached)])
    probe.train()
    for _ in range(epochs):
        order = rng.permutation(len(cached))
        for start in range(0, len(order), cfg.batch_size):
            optimizer.zero_grad(set_to_none=True)
            loss = 0
            for i in order[start:start + cfg.batch_size]:
                z, T, labels = cached[i]
                logits = probe(z, T)[0]
                S = min(logits.shape[-1], labels.shape[-1])
                loss = loss + bce_loss(logits[:, :S], labels[:, :S])
            _check_finite("probe", {"probe": loss}, {})
            loss.backward()
            optimizer.step()
    probe.eval()
    return probe


@dataclass
class Checkpoint:
    """
    Content of a checkpoint file.

    Attributes
    ----------
    model: RearrangementModel
        Restored model.
    train_config: TrainConfig or None
        Settings of the training run, if saved with a trainer.
    optimizer_states: dict
        State of each phase optimizer.
    scheduler_states: dict
        State of each learning rate schedule.
    step: int
        Batches trained on.
    epoch: int
        Completed epochs.
    rng_state: torch.Tensor or None
        Global torch random state at saving time.
    """

    # pylint: disable=too-many-instance-attributes
    model: RearrangementModel
    train_config: Optional[TrainConfig] = None
    optimizer_states: Dict[str, dict] = field(default_factory=dict)
    scheduler_states: Dict[str, dict] = field(default_factory=dict)
    step: int = 0
    epoch: int = 0
    rng_state: Optional[torch.Tensor] = None


def save_checkpoint(path, model: RearrangementModel,
                    trainer: Optional[Trainer] = None) -> None:
    """
    Write a model, and optionally its training state, to a file.

    Parameters
    ----------
    path : str or path-like
        Destination file name.
    model : RearrangementModel
        Model to save.
    trainer : Trainer, optional
        Trainer whose optimizer and counters are saved for resuming.
    """
    groups = {name: [list(p.shape) for p in params]
              for name, params in model.parameter_groups().items()}
    info = {"format_version": FORMAT_VERSION, "model_kind": model.kind,
            "model_config": model.config.to_dict(),
            "config_hash": model.config.hash(), "groups": groups,
            "state_dict": model.state_dict(), "trained": model.trained}
    if trainer is not None:
        info.update({
            "train_config": trainer.config.to_dict(),
            "optimizers": {k: o.state_dict()
                           for k, o in trainer.optimizers.items()},
            "schedulers": {k: s.state_dict()
                           for k, s in trainer.schedulers.items()},
            "step": trainer.step_count, "epoch": trainer.epoch,
            "rng_state": torch.get_rng_state()})
    torch.save(info, path)


def load_checkpoint(path, model_kind: Optional[str] = None) -> Checkpoint:
    """
    Read a checkpoint written by :func:`save_checkpoint`.

    Parameters
    ----------
    path : str or path-like
        File to read.
    model_kind : str, optional
        Required model kind. The default accepts any kind.

    Returns
    -------
    Checkpoint
        The restored model and training state.

    Raises
    ------
    CorruptCheckpoint
        When the file is unreadable, incomplete or inconsistent.
    VersionMismatch
        When the format version or the model kind is not the expected one.
    """
    try:
        info = torch.load(path, map_location="cpu", weights_only=True)
    except (RuntimeError, EOFError, OSError, ValueError,
            pickle.UnpicklingError, zipfile.BadZipFile) as exc:
        raise CorruptCheckpoint(f"Cannot read checkpoint {path}: "
                                f"{exc}") from exc
    if not isinstance(info, dict) or "format_version" not in info:
        raise CorruptCheckpoint(f"{path} is not a checkpoint")
    if info["format_version"] != FORMAT_VERSION:
        raise VersionMismatch(f"Checkpoint format {info['format_version']} "
                              f"is not {FORMAT_VERSION}")
    try:
        kind = info["model_kind"]
        if model_kind is not None and kind != model_kind:
            raise VersionMismatch(f"Checkpoint holds a '{kind}' model, not "
                                  f"'{model_kind}'")
        config = ModelConfig.from_mapping(info["model_config"])
        if config.hash() != info["config_hash"]:
            raise CorruptCheckpoint("Model configuration does not match its "
                                    "hash")
        model = build_model(kind, config)
        groups = {name: [list(p.shape) for p in params]
                  for name, params in model.parameter_groups().items()}
        if groups != info["groups"]:
            raise CorruptCheckpoint("Parameter groups do not match the "
                                    "model configuration")
        model.load_state_dict(info["state_dict"])
        model.trained = bool(info["trained"])
        model.eval()

        checkpoint = Checkpoint(model)
        if "train_config" in info:
            checkpoint.train_config = TrainConfig.from_mapping(
                info["train_config"])
            checkpoint.optimizer_states = info["optimizers"]
            checkpoint.scheduler_states = info["schedulers"]
            checkpoint.step = int(info["step"])
            checkpoint.epoch = int(info["epoch"])
            checkpoint.rng_state = info["rng_state"]
    except (KeyError, TypeError, ValueError, RuntimeError) as exc:
        if isinstance(exc, (VersionMismatch, CorruptCheckpoint)):
            raise
        raise CorruptCheckpoint(f"Incomplete checkpoint {path}: "
                                f"{exc}") from exc
    return checkpoint


def save_probe(path, probe: nn.Module) -> None:
    """Write a probe classifier and its shape to a file."""
    torch.save({"format_version": FORMAT_VERSION,
                "code_rows": probe.code_rows,
                "out_rows": probe.fc2.out_channels,
                "channels": probe.fc1.in_channels,
                "frame_rate": probe.frame_rate,
                "downsample_factor": probe.downsample_factor,
                "negative_slope": probe.negative_slope,
                "state_dict": probe.state_dict()}, path)


def load_probe(path) -> nn.Module:
    """
    Read a probe classifier written by :func:`save_probe`.

    Raises
    ------
    CorruptCheckpoint
        When the file is not a readable probe.
    VersionMismatch
        When the format version is not the expected one.
    """
    try:
        info = torch.load(path, map_location="cpu", weights_only=True)
        if info["format_version"] != FORMAT_VERSION:
            raise VersionMismatch(f"Probe format {info['format_version']} "
                                  f"is not {FORMAT_VERSION}")
        probe = ProbeClassifier(info["code_rows"], info["out_rows"],
                                info["channels"],
                                info["frame_rate"],
                                info["downsample_factor"],
                                info["negative_slope"])
        probe.load_state_dict(info["state_dict"])
    except (KeyError, TypeError, RuntimeError, EOFError, OSError,
            pickle.UnpicklingError, zipfile.BadZipFile) as exc:
        raise CorruptCheckpoint(f"Cannot read probe {path}: {exc}") from exc
    probe.eval()
    return probe
