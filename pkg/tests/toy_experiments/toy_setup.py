#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
Shared setup of the toy-scale experiments.

The experiments train small numbers of models on a synthetic corpus, so the
corpus is generated once per seed and reused from its directory.
"""

import logging
import os

import numpy as np
import torch

from pyRearrange.corpus import Corpus
from pyRearrange.errors import CorruptCorpus
from pyRearrange.evaluation import pitch_leakage, probe_examples
from pyRearrange.models import ModelConfig, build_model
from pyRearrange.synthgen import ToyDatasetConfig, generate_toy_dataset
from pyRearrange.training import (ChunkDataset, Trainer, TrainConfig,
                                  train_probe)


# sum reduction over whole rolls needs a smaller step than 0.005
TOY_LEARNING_RATE = 5e-4
SEEDS = (0, 1, 2)


def toy_corpus(root, seed, num_clips=200, instrument_map="five"):
    """
    Return the synthetic corpus of a seed, generating it when missing.

    Parameters
    ----------
    root : str
        Directory holding one corpus per seed.
    seed : int
        Seed of the corpus.
    num_clips : int, optional
        Number of clips. The default is 200.
    instrument_map : str, optional
        Name of the instrument map. The default is `five`.

    Returns
    -------
    Corpus
        The opened corpus.
    """
    path = os.path.join(root, f"{instrument_map}_{num_clips}_{seed}")
    cache = os.path.join(root, "cqt_cache")
    try:
        return Corpus.open(path, cache_dir=cache)
    except CorruptCorpus:
        pass
    cfg = ToyDatasetConfig(num_clips=num_clips, seed=seed,
                           instrument_map=instrument_map,
                           workers=os.cpu_count() or 1)
    generate_toy_dataset(cfg, path, progress=True)
    return Corpus.open(path, cache_dir=cache)


def train_toy_model(corpus, kind="unet", adversarial=True, seed=0,
                    max_steps=2000, batch_size=16, track_leakage=False):
    """
    Train a model on the train split of a toy corpus.

    Returns
    -------
    2-tuple
        The trainer and its records.
    """
    # pylint: disable=too-many-arguments
    chunks = corpus.chunks("train")
    steps_per_epoch = int(np.ceil(len(chunks)/batch_size))
    epochs = max(1, max_steps//steps_per_epoch)
    cfg = TrainConfig(learning_rate=TOY_LEARNING_RATE, batch_size=batch_size,
                      epochs=epochs, adversarial=adversarial,
                      model_kind=kind, seed=seed, log_every=100)
    model = build_model(kind, ModelConfig(kind=kind,
                                          instrument_map=corpus.instrument_map),
                        seed=seed)
    trainer = Trainer(model, cfg)
    held_out = list(corpus.pairs("val"))

    def leakage(t):
        return {"pitch_leakage": pitch_leakage(t.model, held_out)}

    records = trainer.fit(ChunkDataset(chunks),
                          on_epoch_end=leakage if track_leakage else None,
                          progress=True)
    return trainer, records


def trained_probe(model, corpus, seed=0, permute_labels=False):
    """Train an instrument probe on the frozen timbre code of a model."""
    examples = probe_examples(corpus.pairs("train"), "instrument")
    if permute_labels:
        rng = np.random.default_rng(seed)
        labels = [y for _, y in examples]
        examples = [(x, labels[i]) for (x, _), i in
                    zip(examples, rng.permutation(len(labels)))]
    with torch.random.fork_rng(devices=[]):
        torch.manual_seed(seed)
        probe = model.make_probe()
    cfg = TrainConfig(learning_rate=TOY_LEARNING_RATE, seed=seed,
                      model_kind=model.kind, probe_epochs=20)
    return train_probe(model, probe, examples, cfg)


def majority(passes):
    """Return whether most runs passed."""
    return sum(bool(p) for p in passes) > len(passes)/2


def configure_logging():
    """Log progress of the library at INFO level."""
    logging.basicConfig(level=logging.INFO,
                        format="%(asctime)s %(name)s %(message)s")
