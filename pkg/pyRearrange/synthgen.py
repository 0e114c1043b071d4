#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
Synthetic paired audio and pianoroll corpora.

Training the networks on a real multitrack corpus is out of reach for a desk
scale experiment, so this module generates small corpora of random phrases
whose audio is rendered with additive synthesis. Each instrument is a
:class:`TimbreSpec`, a fixed set of partial amplitudes with an attack and
release envelope. Since the audio is computed from the pianoroll itself, the
pair is aligned by construction, and the timbres are a controlled variable of
the experiment.

The same renderer is used to listen to rearranged pianorolls.
"""

import logging
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import numpy.typing as np_type
from tqdm import tqdm

from pyRearrange.config import check_keys, config_hash
from pyRearrange.corpus import Corpus, CorpusEntry, split_indices
from pyRearrange.errors import UnknownStyle
from pyRearrange.features import (AudioClip, DEFAULT_SAMPLE_RATE,
                                  bin_frequency, write_audio)
from pyRearrange.symbolic import (DEFAULT_FRAME_RATE, HIGHEST_PITCH,
                                  InstrumentMap, LOWEST_PITCH, NoteEvent,
                                  Pianoroll, events_to_pianoroll,
                                  pianoroll_to_events, save_pianoroll)


_log = logging.getLogger(__name__)

PEAK_LEVEL = 0.9


@dataclass(frozen=True)
class TimbreSpec:
    """
    Additive synthesis description of an instrument.

    Attributes
    ----------
    name: str
        Label of the timbre.
    harmonic_amps: tuple of float
        Relative amplitude of the partials, the first entry being the
        fundamental.
    attack_s: float
        Linear rise time of a note in seconds.
    release_s: float
        Linear decay time after the end of a note in seconds.
    pitch_range: 2-tuple of int
        Lowest and highest MIDI pitch the instrument plays in generated
        phrases.
    """

    name: str
    harmonic_amps: Tuple[float, ...]
    attack_s: float = 0.01
    release_s: float = 0.05
    pitch_range: Tuple[int, int] = (LOWEST_PITCH, HIGHEST_PITCH)

    def __post_init__(self):
        object.__setattr__(self, "harmonic_amps",
                           tuple(float(a) for a in self.harmonic_amps))
        object.__setattr__(self, "pitch_range",
                           tuple(int(p) for p in self.pitch_range))
        if len(self.harmonic_amps) < 4:
            raise ValueError("Timbre needs at least four partial amplitudes")
        if self.harmonic_amps[0] <= 0:
            raise ValueError("Fundamental amplitude must be positive")
        if any(a < 0 for a in self.harmonic_amps):
            raise ValueError("Partial amplitudes must be non-negative")
        if self.attack_s < 0 or self.release_s < 0:
            raise ValueError("Envelope times must be non-negative")
        lo, hi = self.pitch_range
        if not LOWEST_PITCH <= lo <= hi <= HIGHEST_PITCH:
            raise ValueError(f"Invalid pitch range {self.pitch_range}")

    def to_dict(self) -> dict:
        """Return a JSON serializable representation."""
        return {"name": self.name, "harmonic_amps": list(self.harmonic_amps),
                "attack_s": self.attack_s, "release_s": self.release_s,
                "pitch_range": list(self.pitch_range)}

    @classmethod
    def from_dict(cls, info: dict) -> "TimbreSpec":
        """Create a timbre from the output of :meth:`to_dict`."""
        return cls(info["name"], tuple(info["harmonic_amps"]),
                   info.get("attack_s", 0.01), info.get("release_s", 0.05),
                   tuple(info.get("pitch_range",
                                  (LOWEST_PITCH, HIGHEST_PITCH))))


# partial profiles are chosen to be easy to tell apart from a single frame
_TIMBRE_BANK: Dict[str, TimbreSpec] = {
    t.name: t for t in [
        TimbreSpec("piano", (1.0, 0.6, 0.35, 0.2, 0.12, 0.07, 0.04, 0.02),
                   attack_s=0.005, release_s=0.15, pitch_range=(36, 96)),
        TimbreSpec("acoustic guitar", (1.0, 0.0, 0.5, 0.0, 0.25, 0.0, 0.12),
                   attack_s=0.002, release_s=0.1, pitch_range=(40, 84)),
        TimbreSpec("electric guitar", (0.4, 1.0, 0.8, 0.6, 0.5, 0.4, 0.3),
                   attack_s=0.002, release_s=0.08, pitch_range=(40, 88)),
        TimbreSpec("bass", (1.0, 0.3, 0.05, 0.02), attack_s=0.01,
                   release_s=0.05, pitch_range=(28, 55)),
        TimbreSpec("violin", (1.0, 0.9, 0.8, 0.7, 0.6, 0.5, 0.4, 0.3, 0.2,
                              0.1), attack_s=0.05, release_s=0.1,
                   pitch_range=(55, 100)),
        TimbreSpec("cello", (0.6, 1.0, 0.7, 0.5, 0.3, 0.2), attack_s=0.06,
                   release_s=0.12, pitch_range=(36, 76)),
        TimbreSpec("flute", (1.0, 0.1, 0.02, 0.01), attack_s=0.03,
                   release_s=0.05, pitch_range=(60, 96)),
    ]
}

_STYLES = {
    "strings": ("violin", "cello"),
    "piano": ("piano",),
    "acoustic": ("acoustic guitar", "<melody>"),
    "band": ("electric guitar", "bass", "<melody>"),
}


def default_timbres(instrument_map: InstrumentMap) -> List[TimbreSpec]:
    """
    Return a timbre for each instrument of a map.

    Instruments of the built-in maps have their own timbre. Any other
    instrument gets the piano timbre under its own name.

    Parameters
    ----------
    instrument_map : InstrumentMap
        Instruments to find timbres for.

    Returns
    -------
    list of TimbreSpec
        One timbre per instrument index.
    """
    timbres = []
    for name in instrument_map.names:
        if name in _TIMBRE_BANK:
            timbres.append(_TIMBRE_BANK[name])
        else:
            _log.debug("No timbre for '%s', using piano", name)
            piano = _TIMBRE_BANK["piano"]
            timbres.append(TimbreSpec(name, piano.harmonic_amps,
                                      piano.attack_s, piano.release_s,
                                      piano.pitch_range))
    return timbres


def style_preset(name: str, instrument_map: InstrumentMap,
                 melody: str = "flute") -> frozenset:
    """
    Return the instruments of a composition style.

    The styles are `strings` (violin and cello), `piano`, `acoustic` (acoustic
    guitar and the melody instrument) and `band` (electric guitar, bass and the
    melody instrument).

    Parameters
    ----------
    name : str
        Style name.
    instrument_map : InstrumentMap
        Map giving the instrument indices.
    melody : str, optional
        Instrument playing the melody in the acoustic and band styles. The
        default is the flute.

    Returns
    -------
    frozenset of int
        Instrument indices of the style.

    Raises
    ------
    UnknownStyle
        When the style is unknown or one of its instruments is not in the map.
    """
    if name not in _STYLES:
        raise UnknownStyle(f"Unknown composition style '{name}', expected one "
                           f"of {', '.join(sorted(_STYLES))}")
    indices = set()
    for instrument in _STYLES[name]:
        if instrument == "<melody>":
            instrument = melody
        try:
            indices.add(instrument_map.index_of(instrument))
        except KeyError as exc:
            raise UnknownStyle(f"Style '{name}' needs '{instrument}' which is "
                               f"not in the instrument map") from exc
    return frozenset(indices)


def _envelope(num_samples: int, note_samples: int, attack: int,
              release: int) -> np_type.NDArray:
    """Return the attack, sustain and release gain of one note."""
    env = np.ones(num_samples)
    if attack > 0:
        rise = min(attack, note_samples)
        env[:rise] = np.arange(rise)/attack
    if release > 0 and num_samples > note_samples:
        level = env[note_samples - 1]
        tail = num_samples - note_samples
        env[note_samples:] = level*(1 - np.arange(1, tail + 1)/(release + 1))
    return env


def render_pianoroll(roll: Pianoroll, timbres: Sequence[TimbreSpec],
                     sample_rate: int = DEFAULT_SAMPLE_RATE,
                     num_samples: Optional[int] = None) -> AudioClip:
    """
    Render a pianoroll to audio with additive synthesis.

    Every note of :func:`pyRearrange.symbolic.pianoroll_to_events` sounds the
    partials `k*f0` of its instrument below the Nyquist frequency, where `f0`
    is the center frequency of the CQT bin of the note. The mix is scaled so
    that its peak is 0.9.

    Parameters
    ----------
    roll : Pianoroll
        Roll to render.
    timbres : list of TimbreSpec
        Timbre of each instrument index of the roll.
    sample_rate : int, optional
        Sample rate of the audio. The default is 16000.
    num_samples : int, optional
        Length of the audio. The default is the duration of the roll.

    Returns
    -------
    AudioClip
        Rendered audio, silent for an empty roll.

    Raises
    ------
    ValueError
        When the number of timbres is not the number of instruments.
    """
    if len(timbres) != roll.M:
        raise ValueError(f"Need {roll.M} timbres, got {len(timbres)}")
    if num_samples is None:
        num_samples = int(round(roll.T*sample_rate/roll.frame_rate))

    out = np.zeros(num_samples)
    for e in pianoroll_to_events(roll):
        timbre = timbres[e.instrument]
        start = int(round(e.onset*sample_rate))
        end = min(int(round(e.offset*sample_rate)), num_samples)
        if end <= start:
            continue
        release = int(round(timbre.release_s*sample_rate))
        stop = min(end + release, num_samples)
        t = np.arange(stop - start)/sample_rate
        f0 = bin_frequency(e.pitch - LOWEST_PITCH)

        wave = np.zeros(stop - start)
        for k, amp in enumerate(timbre.harmonic_amps, start=1):
            if amp > 0 and k*f0 < sample_rate/2:
                wave += amp*np.sin(2*np.pi*k*f0*t)
        env = _envelope(stop - start, end - start,
                        int(round(timbre.attack_s*sample_rate)), release)
        out[start:stop] += wave*env

    peak = np.max(np.abs(out))
    if peak > 0:
        out *= PEAK_LEVEL/peak
    return AudioClip(out, sample_rate)


@dataclass
class ToyDatasetConfig:
    """
    Settings of a synthetic corpus.

    Attributes
    ----------
    num_clips: int
        Number of clips in the corpus.
    clip_seconds: float
        Length of every clip.
    sample_rate: int
        Audio sample rate.
    instrument_map: InstrumentMap
        Instruments of the corpus.
    timbres: list of TimbreSpec
        Timbre of each instrument, defaulting to :func:`default_timbres`. The
        pitch range of each timbre bounds the notes of that instrument.
    polyphony: tuple of float
        Probability of playing 1, 2, ... simultaneous notes in a phrase step.
    tempo_range: 2-tuple of float
        Range of the beats per minute of a clip.
    instrument_probability: float
        Probability that an instrument plays in a clip.
    silence_probability: float
        Probability that a clip is silent.
    rest_probability: float
        Probability that a phrase step is a rest.
    seed: int
        Master seed. Clip `i` uses the seed sequence `(seed, i)`.
    workers: int
        Number of processes rendering clips. Does not change the output.
    """

    # pylint: disable=too-many-instance-attributes
    num_clips: int = 200
    clip_seconds: float = 10.0
    sample_rate: int = DEFAULT_SAMPLE_RATE
    instrument_map: InstrumentMap = field(
        default_factory=InstrumentMap.five_instruments)
    timbres: Optional[List[TimbreSpec]] = None
    polyphony: Tuple[float, ...] = (0.6, 0.3, 0.1)
    tempo_range: Tuple[float, float] = (80.0, 160.0)
    instrument_probability: float = 0.5
    silence_probability: float = 0.05
    rest_probability: float = 0.2
    seed: int = 0
    workers: int = 1

    def __post_init__(self):
        if isinstance(self.instrument_map, str):
            self.instrument_map = InstrumentMap.named(self.instrument_map)
        elif isinstance(self.instrument_map, dict):
            self.instrument_map = InstrumentMap.from_dict(self.instrument_map)
        if self.timbres is None:
            self.timbres = default_timbres(self.instrument_map)
        self.timbres = [TimbreSpec.from_dict(t) if isinstance(t, dict) else t
                        for t in self.timbres]
        self.polyphony = tuple(float(p) for p in self.polyphony)
        self.tempo_range = tuple(float(t) for t in self.tempo_range)

        if self.num_clips < 1:
            raise ValueError("Need at least one clip")
        if self.clip_seconds <= 0:
            raise ValueError("Clip length must be positive")
        if len(self.timbres) != self.instrument_map.M:
            raise ValueError(f"Need {self.instrument_map.M} timbres, got "
                             f"{len(self.timbres)}")
        if (len(self.polyphony) == 0 or any(p < 0 for p in self.polyphony)
                or not np.isclose(sum(self.polyphony), 1)):
            raise ValueError("Polyphony must be a probability distribution")
        lo, hi = self.tempo_range
        if not 0 < lo <= hi:
            raise ValueError(f"Invalid tempo range {self.tempo_range}")
        for name in ("instrument_probability", "silence_probability",
                     "rest_probability"):
            if not 0 <= getattr(self, name) <= 1:
                raise ValueError(f"{name} must be in [0, 1]")
        if self.workers < 1:
            raise ValueError("Need at least one worker")

    def to_dict(self) -> dict:
        """Return a JSON serializable representation."""
        return {"num_clips": self.num_clips,
                "clip_seconds": self.clip_seconds,
                "sample_rate": self.sample_rate,
                "instrument_map": self.instrument_map.to_dict(),
                "timbres": [t.to_dict() for t in self.timbres],
                "polyphony": list(self.polyphony),
                "tempo_range": list(self.tempo_range),
                "instrument_probability": self.instrument_probability,
                "silence_probability": self.silence_probability,
                "rest_probability": self.rest_probability,
                "seed": self.seed, "workers": self.workers}

    @classmethod
    def from_mapping(cls, info: dict) -> "ToyDatasetConfig":
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
        """Return the hash of the configuration, ignoring `workers`."""
        info = self.to_dict()
        del info["workers"]
        return config_hash(info)


def generate_clip_events(cfg: ToyDatasetConfig,
                         index: int) -> List[NoteEvent]:
    """
    Draw the notes of one synthetic clip.

    Each playing instrument gets a phrase on a beat grid: steps of half, one
    or two beats that are either rests or chords of random pitches within the
    instrument range.

    Parameters
    ----------
    cfg : ToyDatasetConfig
        Corpus settings.
    index : int
        Clip index, which selects the random stream.

    Returns
    -------
    list of NoteEvent
        Notes of the clip sorted by onset. Empty for silent clips.
    """
    rng = np.random.default_rng([cfg.seed, index])
    if rng.random() < cfg.silence_probability:
        return []

    beat = 60/rng.uniform(*cfg.tempo_range)
    M = cfg.instrument_map.M
    active = [m for m in range(M) if rng.random() < cfg.instrument_probability]
    if not active:
        active = [int(rng.integers(M))]

    events = []
    for m in active:
        lo, hi = cfg.timbres[m].pitch_range
        t = 0.0
        while t < cfg.clip_seconds:
            step = beat*rng.choice([0.5, 1.0, 2.0])
            offset = min(t + step, cfg.clip_seconds)
            if rng.random() >= cfg.rest_probability:
                voices = 1 + int(rng.choice(len(cfg.polyphony),
                                            p=cfg.polyphony))
                voices = min(voices, hi - lo + 1)
                for pitch in rng.choice(np.arange(lo, hi + 1), size=voices,
                                        replace=False):
                    events.append(NoteEvent(int(pitch), t, offset, m))
            t += step
    events.sort(key=lambda e: (e.onset, e.instrument, e.pitch))
    return events


def _render_clip(args) -> Tuple[Pianoroll, AudioClip]:
    """Create the pair of one clip; module level so it can be pickled."""
    cfg, index = args
    events = generate_clip_events(cfg, index)
    roll = events_to_pianoroll(events, DEFAULT_FRAME_RATE, cfg.clip_seconds,
                               cfg.instrument_map)
    num_samples = int(round(cfg.clip_seconds*cfg.sample_rate))
    audio = render_pianoroll(roll, cfg.timbres, cfg.sample_rate, num_samples)
    return roll, audio


def generate_toy_dataset(cfg: ToyDatasetConfig, out_dir,
                         progress: bool = False) -> Corpus:
    """
    Generate and write a synthetic corpus.

    Clips are split 80/10/10 into train, val and test sets. For clip `i` of
    split `s` the corpus holds `s/clip_iiiii.wav` and `s/clip_iiiii.npz`, and a
    `manifest.json` lists the pairs together with the instrument map and the
    configuration. The output only depends on the configuration, so running
    twice with the same seed gives identical files.

    Parameters
    ----------
    cfg : ToyDatasetConfig
        Corpus settings.
    out_dir : str or path-like
        Root directory of the corpus. Created if needed.
    progress : bool, optional
        Whether to show a progress bar. The default is `False`.

    Returns
    -------
    Corpus
        The written corpus.
    """
    splits = split_indices(cfg.num_clips, cfg.seed)
    split_of = {i: s for s, indices in splits.items() for i in indices}
    for s in splits:
        os.makedirs(os.path.join(out_dir, s), exist_ok=True)

    _log.info("Generating %d clips with config hash %s", cfg.num_clips,
              cfg.hash())
    jobs = [(cfg, i) for i in range(cfg.num_clips)]
    entries = []
    executor = (ProcessPoolExecutor(max_workers=cfg.workers)
                if cfg.workers > 1 else None)
    try:
        results = executor.map(_render_clip, jobs) if executor \
            else map(_render_clip, jobs)
        for i, (roll, audio) in enumerate(tqdm(results, total=cfg.num_clips,
                                               disable=not progress,
                                               desc="clips")):
            name = f"clip_{i:05d}"
            split = split_of[i]
            entry = CorpusEntry(name=name, split=split,
                                roll=f"{split}/{name}.npz",
                                audio=f"{split}/{name}.wav")
            save_pianoroll(os.path.join(out_dir, entry.roll), roll)
            write_audio(os.path.join(out_dir, entry.audio), audio)
            entries.append(entry)
    finally:
        if executor is not None:
            executor.shutdown()

    info = cfg.to_dict()
    del info["workers"]
    return Corpus.create(out_dir, entries, cfg.instrument_map, info,
                         cfg.hash())
