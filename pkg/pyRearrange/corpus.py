#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
On-disk corpora of aligned CQT and pianoroll pairs.

A corpus is a directory with a `manifest.json` file and one subdirectory per
split (`train`, `val` and `test`). Each clip has a pianoroll container and
either an audio file (synthetic corpora) or a precomputed CQT container
(prepared corpora). The manifest lists the clips, the instrument map and the
configuration that produced the corpus together with its hash.

CQTs of audio clips are computed on demand. When a cache directory is given,
or the `PYREARRANGE_CACHE_DIR` environment variable is set, the results are
stored there keyed by the digest of the audio bytes.
"""

import hashlib
import json
import logging
import os
from dataclasses import asdict, dataclass
from typing import Dict, Iterator, List, Optional, Sequence, Tuple

import numpy as np

from pyRearrange.archive import read_archive, write_archive
from pyRearrange.errors import CorruptCorpus, DataError
from pyRearrange.features import CQTMatrix, compute_cqt, load_audio
from pyRearrange.symbolic import (DEFAULT_CHUNK_FRAMES, InstrumentMap,
                                  Pianoroll, chunk_pair, load_pianoroll)


_log = logging.getLogger(__name__)

CACHE_ENV = "PYREARRANGE_CACHE_DIR"
SPLITS = ("train", "val", "test")

_MANIFEST = "manifest.json"
_CORPUS_FORMAT = "pyRearrange.corpus/1"
_CQT_FORMAT = "pyRearrange.cqt/1"


def split_indices(num_clips: int, seed: int) -> Dict[str, List[int]]:
    """
    Assign clip indices to the train, val and test splits.

    The val and test splits each get `num_clips//10` clips chosen by a seeded
    permutation; the rest is training data.

    Parameters
    ----------
    num_clips : int
        Number of clips.
    seed : int
        Seed of the permutation.

    Returns
    -------
    dict
        Sorted clip indices of each split.
    """
    perm = np.random.default_rng(seed).permutation(num_clips)
    n_held = num_clips//10
    return {"train": sorted(int(i) for i in perm[2*n_held:]),
            "val": sorted(int(i) for i in perm[n_held:2*n_held]),
            "test": sorted(int(i) for i in perm[:n_held])}


def save_cqt(path, cqt: CQTMatrix) -> None:
    """Write a CQT to a container file."""
    write_archive(path, {"format": _CQT_FORMAT, "frame_rate": cqt.frame_rate},
                  {"data": cqt.data})


def load_cqt(path) -> CQTMatrix:
    """
    Read a CQT written by :func:`save_cqt`.

    Raises
    ------
    IOError
        When the file is not a CQT container.
    """
    header, arrays = read_archive(path)
    if header.get("format") != _CQT_FORMAT or "data" not in arrays:
        raise IOError(f"{path} is not a CQT file")
    return CQTMatrix(arrays["data"], header["frame_rate"])


@dataclass(frozen=True)
class CorpusEntry:
    """
    One clip of a corpus. Paths are relative to the corpus root.

    Attributes
    ----------
    name: str
        Basename shared by the files of the clip.
    split: str
        One of `train`, `val` or `test`.
    roll: str
        Pianoroll container.
    audio: str or None
        Audio file, for corpora stored as audio.
    cqt: str or None
        CQT container, for prepared corpora.
    """

    name: str
    split: str
    roll: str
    audio: Optional[str] = None
    cqt: Optional[str] = None

    def __post_init__(self):
        if self.split not in SPLITS:
            raise ValueError(f"Invalid split '{self.split}'")
        if (self.audio is None) == (self.cqt is None):
            raise ValueError("Entry needs exactly one of audio and cqt")


class Corpus:
    """
    Collection of aligned clips.

    Attributes
    ----------
    root: str
        Corpus directory.
    entries: list of CorpusEntry
        Clips sorted by name.
    instrument_map: InstrumentMap
        Instruments of every pianoroll.
    config: dict
        Configuration that produced the corpus.
    config_hash: str
        Hash of the configuration.
    """

    def __init__(self, root, entries: Sequence[CorpusEntry],
                 instrument_map: InstrumentMap, config: dict,
                 config_hash: str, cache_dir=None):
        # pylint: disable=too-many-arguments
        self.root = os.fspath(root)
        self.entries = sorted(entries, key=lambda e: e.name)
        self.instrument_map = instrument_map
        self.config = config
        self.config_hash = config_hash
        if cache_dir is None:
            cache_dir = os.environ.get(CACHE_ENV) or None
        self.cache_dir = cache_dir

    @classmethod
    def create(cls, root, entries: Sequence[CorpusEntry],
               instrument_map: InstrumentMap, config: dict,
               config_hash: str) -> "Corpus":
        """
        Write the manifest of a corpus whose clip files already exist.

        Returns
        -------
        Corpus
            The new corpus.
        """
        # pylint: disable=too-many-arguments
        corpus = cls(root, entries, instrument_map, config, config_hash)
        manifest = {"format": _CORPUS_FORMAT,
                    "instrument_map": instrument_map.to_dict(),
                    "config": config, "config_hash": config_hash,
                    "entries": [{k: v for k, v in asdict(e).items()
                                 if v is not None}
                                for e in corpus.entries]}
        with open(os.path.join(corpus.root, _MANIFEST), "w",
                  encoding="utf-8") as f:
            json.dump(manifest, f, sort_keys=True, indent=1)
            f.write("\n")
        return corpus

    @classmethod
    def open(cls, root, cache_dir=None) -> "Corpus":
        """
        Read the manifest of a corpus.

        Parameters
        ----------
        root : str or path-like
            Corpus directory.
        cache_dir : str or path-like, optional
            CQT cache directory. The default is taken from the
            `PYREARRANGE_CACHE_DIR` environment variable, no caching if unset.

        Raises
        ------
        CorruptCorpus
            When the manifest is missing or invalid.
        """
        path = os.path.join(root, _MANIFEST)
        try:
            with open(path, "r", encoding="utf-8") as f:
                manifest = json.load(f)
            if manifest.get("format") != _CORPUS_FORMAT:
                raise ValueError(f"unsupported format "
                                 f"{manifest.get('format')}")
            entries = [CorpusEntry(**e) for e in manifest["entries"]]
            instrument_map = InstrumentMap.from_dict(
                manifest["instrument_map"])
        except (OSError, ValueError, KeyError, TypeError) as exc:
            raise CorruptCorpus(f"Cannot read corpus manifest {path}: "
                                f"{exc}") from exc
        return cls(root, entries, instrument_map, manifest.get("config", {}),
                   manifest.get("config_hash", ""), cache_dir)

    def split(self, name: str) -> List[CorpusEntry]:
        """Return the entries of a split."""
        if name not in SPLITS:
            raise ValueError(f"Invalid split '{name}'")
        return [e for e in self.entries if e.split == name]

    def _path(self, relative: str) -> str:
        return os.path.join(self.root, relative)

    def load_roll(self, entry: CorpusEntry) -> Pianoroll:
        """
        Read the pianoroll of a clip.

        Raises
        ------
        CorruptCorpus
            When the file cannot be read or has the wrong instruments.
        """
        try:
            roll = load_pianoroll(self._path(entry.roll))
        except OSError as exc:
            raise CorruptCorpus(f"Cannot read roll of {entry.name}: "
                                f"{exc}") from exc
        if roll.instrument_map != self.instrument_map:
            raise CorruptCorpus(f"Roll of {entry.name} has a different "
                                "instrument map than the corpus")
        return roll

    def load_cqt(self, entry: CorpusEntry) -> CQTMatrix:
        """
        Return the CQT of a clip, computing it from the audio if needed.

        Raises
        ------
        CorruptCorpus
            When a file of the clip cannot be read.
        """
        try:
            if entry.cqt is not None:
                return load_cqt(self._path(entry.cqt))
            with open(self._path(entry.audio), "rb") as f:
                data = f.read()
        except OSError as exc:
            raise CorruptCorpus(f"Cannot read features of {entry.name}: "
                                f"{exc}") from exc

        cache_path = None
        if self.cache_dir is not None:
            key = hashlib.sha256(_CQT_FORMAT.encode() + data).hexdigest()
            cache_path = os.path.join(self.cache_dir, key + ".npz")
            if os.path.exists(cache_path):
                try:
                    return load_cqt(cache_path)
                except OSError:
                    _log.warning("Ignoring unreadable cache file %s",
                                 cache_path)

        try:
            cqt = compute_cqt(load_audio(data))
        except DataError as exc:
            raise CorruptCorpus(f"Cannot analyse audio of {entry.name}: "
                                f"{exc}") from exc
        if cache_path is not None:
            os.makedirs(self.cache_dir, exist_ok=True)
            save_cqt(cache_path, cqt)
        return cqt

    def load_pair(self, entry: CorpusEntry) -> Tuple[CQTMatrix, Pianoroll]:
        """Return the aligned (CQT, pianoroll) pair of a clip."""
        return self.load_cqt(entry), self.load_roll(entry)

    def pairs(self, split: str) -> Iterator[Tuple[CQTMatrix, Pianoroll]]:
        """Iterate over the pairs of a split in name order."""
        for entry in self.split(split):
            yield self.load_pair(entry)

    def chunks(self, split: str, chunk_frames: int = DEFAULT_CHUNK_FRAMES
               ) -> List[Tuple[CQTMatrix, Pianoroll]]:
        """Return the training chunks of all the clips of a split."""
        chunks = []
        for cqt, roll in self.pairs(split):
            chunks.extend(chunk_pair(cqt, roll, chunk_frames))
        return chunks

    def digest(self) -> str:
        """
        Return the SHA-256 digest of the manifest and every clip file.

        Two corpora with the same digest hold identical bytes.
        """
        h = hashlib.sha256()
        names = [_MANIFEST]
        for e in self.entries:
            names.extend(p for p in (e.roll, e.audio, e.cqt) if p is not None)
        for name in names:
            h.update(name.encode("utf-8"))
            with open(self._path(name), "rb") as f:
                h.update(f.read())
        return h.hexdigest()
