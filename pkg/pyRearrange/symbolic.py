#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
Symbolic music representations.

This module contains the classes for the note based view of a piece of music
and the three binary rolls derived from it: the pianoroll (pitch, time and
instrument), the instrument roll (instrument and time) and the pitch roll
(pitch and time). It also provides the conversions between Standard MIDI
Files, note events and rolls, the container I/O for rolls, and the chunking of
aligned (CQT, pianoroll) pairs used to build training sets.

Rolls always cover the 88 keys of the piano, from A0 (MIDI 21) to C8 (MIDI
108). A frame is active when a note is sounding at the center time of that
frame, which makes the conversion from rolls back to notes exact at frame
resolution.
"""

import io
import logging
import math
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import numpy.typing as np_type
import pretty_midi

from pyRearrange.archive import read_archive, write_archive
from pyRearrange.errors import EmptyScore, LengthMismatch, MalformedMidi
from pyRearrange.features import CQTMatrix


_log = logging.getLogger(__name__)

NUM_PITCHES = 88
LOWEST_PITCH = 21
HIGHEST_PITCH = LOWEST_PITCH + NUM_PITCHES - 1
DEFAULT_FRAME_RATE = 16000/512
DEFAULT_CHUNK_FRAMES = 312
DISCARD = -1

_ROLL_FORMAT = "pyRearrange.pianoroll/1"


@dataclass(frozen=True)
class NoteEvent:
    """
    Single note played by one instrument.

    Attributes
    ----------
    pitch: int
        MIDI note number in [21, 108].
    onset: float
        Start time in seconds.
    offset: float
        End time in seconds, larger than `onset`.
    instrument: int
        Modeled instrument index.
    velocity: int
        MIDI velocity. Carried along but not used by any loss.
    """

    pitch: int
    onset: float
    offset: float
    instrument: int
    velocity: int = 100

    def __post_init__(self):
        if not LOWEST_PITCH <= self.pitch <= HIGHEST_PITCH:
            raise ValueError(f"Pitch {self.pitch} outside of 88 key range")
        if self.onset < 0:
            raise ValueError("Onset must be non-negative")
        if self.offset <= self.onset:
            raise ValueError("Offset must be after onset")
        if self.instrument < 0:
            raise ValueError("Instrument index must be non-negative")
        if not 1 <= self.velocity <= 127:
            raise ValueError("Velocity must be in [1, 127]")


class InstrumentMap:
    """
    Mapping from MIDI programs to the modeled instruments.

    Each of the 128 General MIDI programs maps to either an instrument index in
    `[0, M)` or to :data:`DISCARD`. Percussion (the MIDI drum channel) has a
    separate entry and is discarded by default since unpitched instruments do
    not have a meaningful pitch roll.

    Attributes
    ----------
    names: list of str
        Name of each modeled instrument, `names[m]` for index `m`.
    """

    def __init__(self, names: Sequence[str], programs: Dict[int, int],
                 drum_index: int = DISCARD):
        self.names = list(names)
        if len(self.names) == 0:
            raise ValueError("Need at least one modeled instrument")
        if len(set(self.names)) != len(self.names):
            raise ValueError("Instrument names must be unique")

        self._programs = np.full(128, DISCARD, dtype=int)
        for program, index in programs.items():
            if not 0 <= int(program) < 128:
                raise ValueError(f"Invalid MIDI program: {program}")
            if index != DISCARD and not 0 <= index < self.M:
                raise ValueError(f"Program {program} maps to invalid "
                                 f"instrument index {index}")
            self._programs[int(program)] = index
        if drum_index != DISCARD and not 0 <= drum_index < self.M:
            raise ValueError(f"Invalid drum instrument index {drum_index}")
        self._drum_index = drum_index

        # every modeled instrument needs a program for MIDI export
        for m in range(self.M):
            if not np.any(self._programs == m) and drum_index != m:
                raise ValueError(f"Instrument '{self.names[m]}' has no MIDI "
                                 "program mapped to it")

    @property
    def M(self) -> int:
        """Number of modeled instruments."""
        return len(self.names)

    def index(self, program: int, is_drum: bool = False) -> int:
        """
        Return the instrument index for a MIDI program.

        Parameters
        ----------
        program : int
            MIDI program number in [0, 127].
        is_drum : bool, optional
            True when the events come from the percussion channel. The
            default is `False`.

        Returns
        -------
        int
            Instrument index or :data:`DISCARD`.
        """
        if is_drum:
            return self._drum_index
        return int(self._programs[program])

    def program_for(self, index: int) -> int:
        """
        Return the lowest MIDI program that maps to an instrument index.

        Parameters
        ----------
        index : int
            Instrument index.

        Returns
        -------
        int
            MIDI program number.

        Raises
        ------
        ValueError
            When the index is not a modeled instrument.
        """
        candidates = np.flatnonzero(self._programs == index)
        if candidates.shape[0] == 0:
            if index == self._drum_index:
                return 0
            raise ValueError(f"No program maps to instrument {index}")
        return int(candidates[0])

    def is_drum(self, index: int) -> bool:
        """Return whether an instrument index is the percussion track."""
        return index == self._drum_index

    def index_of(self, name: str) -> int:
        """
        Return the index of a named instrument.

        Raises
        ------
        KeyError
            When no instrument has that name.
        """
        try:
            return self.names.index(name)
        except ValueError as exc:
            raise KeyError(name) from exc

    def to_dict(self) -> dict:
        """Return a JSON serializable representation."""
        programs = {str(p): int(m) for p, m in enumerate(self._programs)
                    if m != DISCARD}
        return {"names": list(self.names), "programs": programs,
                "drum_index": int(self._drum_index)}

    @classmethod
    def from_dict(cls, info: dict) -> "InstrumentMap":
        """Create a map from the output of :meth:`to_dict`."""
        programs = {int(p): int(m) for p, m in info["programs"].items()}
        return cls(info["names"], programs,
                   int(info.get("drum_index", DISCARD)))

    def __eq__(self, other):
        if not isinstance(other, InstrumentMap):
            return NotImplemented
        return self.to_dict() == other.to_dict()

    def __repr__(self):
        return f"{self.__class__.__name__}(names={self.names})"

    @classmethod
    def five_instruments(cls) -> "InstrumentMap":
        """
        Return the map for piano, acoustic guitar, violin, cello and flute.

        These are the five instruments used for instrument activity detection
        evaluation. All guitars map to the acoustic guitar.
        """
        programs = {}
        programs.update({p: 0 for p in range(0, 8)})
        programs.update({p: 1 for p in range(24, 32)})
        programs.update({40: 2, 41: 2, 42: 3, 43: 3})
        programs.update({p: 4 for p in range(72, 80)})
        return cls(["piano", "acoustic guitar", "violin", "cello", "flute"],
                   programs)

    @classmethod
    def arrangement_instruments(cls) -> "InstrumentMap":
        """
        Return the map for the instruments of the rearrangement styles.

        The instruments are piano, acoustic guitar, electric guitar, bass,
        violin, cello and flute, which cover the strings, piano, acoustic and
        band styles.
        """
        programs = {}
        programs.update({p: 0 for p in range(0, 8)})
        programs.update({24: 1, 25: 1})
        programs.update({p: 2 for p in range(26, 32)})
        programs.update({p: 3 for p in range(32, 40)})
        programs.update({40: 4, 41: 4, 42: 5, 43: 5})
        programs.update({p: 6 for p in range(72, 80)})
        return cls(["piano", "acoustic guitar", "electric guitar", "bass",
                    "violin", "cello", "flute"], programs)

    @classmethod
    def general_midi(cls) -> "InstrumentMap":
        """Return the map that models each of the 128 MIDI programs."""
        names = [pretty_midi.program_to_instrument_name(p)
                 for p in range(128)]
        return cls(names, {p: p for p in range(128)})

    @classmethod
    def named(cls, name: str) -> "InstrumentMap":
        """
        Return a built-in map by name.

        Parameters
        ----------
        name : str
            One of `five`, `arrangement` or `general_midi`.

        Raises
        ------
        ValueError
            When the name is not a built-in map.
        """
        factories = {"five": cls.five_instruments,
                     "arrangement": cls.arrangement_instruments,
                     "general_midi": cls.general_midi}
        if name not in factories:
            raise ValueError(f"Unknown instrument map '{name}'")
        return factories[name]()


class Pianoroll:
    """
    Binary pianoroll of shape (88, T, M).

    Attributes
    ----------
    data: numpy.ndarray
        Boolean tensor indexed by (pitch - 21, frame, instrument).
    frame_rate: float
        Frames per second.
    instrument_map: InstrumentMap
        Instruments corresponding to the last axis.
    """

    def __init__(self, data, frame_rate: float = DEFAULT_FRAME_RATE,
                 instrument_map: Optional[InstrumentMap] = None):
        data = np.asarray(data)
        if data.ndim != 3 or data.shape[0] != NUM_PITCHES:
            raise ValueError(f"Pianoroll must have shape (88, T, M), "
                             f"got {data.shape}")
        if data.shape[1] < 1:
            raise ValueError("Pianoroll needs at least one frame")
        if data.dtype != bool:
            if not np.all((data == 0) | (data == 1)):
                raise ValueError("Pianoroll values must be 0 or 1")
            data = data.astype(bool)
        if frame_rate <= 0:
            raise ValueError("Frame rate must be positive")
        if instrument_map is None:
            instrument_map = InstrumentMap.five_instruments()
        if instrument_map.M != data.shape[2]:
            raise ValueError(f"Pianoroll has {data.shape[2]} instruments but "
                             f"map has {instrument_map.M}")
        self.data = data
        self.frame_rate = float(frame_rate)
        self.instrument_map = instrument_map

    @property
    def T(self) -> int:
        """Number of frames."""
        return self.data.shape[1]

    @property
    def M(self) -> int:
        """Number of instruments."""
        return self.data.shape[2]

    def duration(self) -> float:
        """Return the time covered by the frames in seconds."""
        return self.T/self.frame_rate

    def __eq__(self, other):
        if not isinstance(other, Pianoroll):
            return NotImplemented
        return (self.frame_rate == other.frame_rate
                and self.instrument_map == other.instrument_map
                and np.array_equal(self.data, other.data))

    def __repr__(self):
        return (f"{self.__class__.__name__}(shape={self.data.shape}, "
                f"frame_rate={self.frame_rate})")


@dataclass
class InstrumentRoll:
    """
    Binary instrument activity of shape (M, T).

    Attributes
    ----------
    data: numpy.ndarray
        Boolean matrix indexed by (instrument, frame).
    frame_rate: float
        Frames per second.
    """

    data: np_type.NDArray
    frame_rate: float = DEFAULT_FRAME_RATE


@dataclass
class PitchRoll:
    """
    Binary pitch activity of shape (88, T).

    Attributes
    ----------
    data: numpy.ndarray
        Boolean matrix indexed by (pitch - 21, frame).
    frame_rate: float
        Frames per second.
    """

    data: np_type.NDArray
    frame_rate: float = DEFAULT_FRAME_RATE


def parse_midi(data: bytes, instrument_map: InstrumentMap) -> List[NoteEvent]:
    """
    Extract the note events from a Standard MIDI File.

    Note times are converted to seconds through the tempo map of the file.
    Notes on programs that map to :data:`DISCARD` and notes outside of the 88
    key range are dropped, as are notes of zero length.

    Parameters
    ----------
    data : bytes
        Content of a format 0 or format 1 MIDI file.
    instrument_map : InstrumentMap
        Mapping from programs to modeled instruments.

    Returns
    -------
    list of NoteEvent
        Events sorted by onset, instrument and pitch.

    Raises
    ------
    MalformedMidi
        When the file cannot be parsed.
    EmptyScore
        When no note events remain.
    """
    try:
        pm = pretty_midi.PrettyMIDI(io.BytesIO(data))
    except Exception as exc:  # pylint: disable=broad-except
        # mido and pretty_midi raise a wide variety of types for bad files
        raise MalformedMidi(f"Cannot parse MIDI data: {exc}") from exc

    events = []
    dropped = 0
    for instrument in pm.instruments:
        index = instrument_map.index(instrument.program, instrument.is_drum)
        if index == DISCARD:
            dropped += len(instrument.notes)
            continue
        for note in instrument.notes:
            if (note.pitch < LOWEST_PITCH or note.pitch > HIGHEST_PITCH
                    or note.end <= note.start):
                dropped += 1
                continue
            events.append(NoteEvent(pitch=int(note.pitch),
                                    onset=max(float(note.start), 0.0),
                                    offset=float(note.end),
                                    instrument=index,
                                    velocity=max(int(note.velocity), 1)))

    if dropped > 0:
        _log.debug("Dropped %d notes not covered by the instrument map",
                   dropped)
    if len(events) == 0:
        raise EmptyScore("No note events left after instrument mapping")
    events.sort(key=lambda e: (e.onset, e.instrument, e.pitch, e.offset))
    return events


def midi_duration(events: Sequence[NoteEvent]) -> float:
    """Return the time of the last note offset in seconds."""
    if len(events) == 0:
        return 0.0
    return max(e.offset for e in events)


def num_frames(duration_s: float, frame_rate: float) -> int:
    """
    Return the number of whole frames in a duration.

    Parameters
    ----------
    duration_s : float
        Duration in seconds.
    frame_rate : float
        Frames per second.

    Returns
    -------
    int
        Number of frames, `floor(duration_s*frame_rate)`.
    """
    # rounding guards against products like 0.1*30 = 3.0000000000000004
    return int(math.floor(round(duration_s*frame_rate, 9)))


def frame_seconds(num_frames: int, frame_rate: float,
                  frames_per_step: int = 1) -> Tuple[np_type.NDArray, int]:
    """
    Assign frames, or groups of frames, to whole seconds.

    Step `j` covers frames `[j*frames_per_step, (j + 1)*frames_per_step)` and
    belongs to the second holding its center time. The number of seconds is
    taken from the first `num_frames` frames, and the last second only counts
    if at least half of its frames exist.

    Parameters
    ----------
    num_frames : int
        Number of frames of the signal.
    frame_rate : float
        Frames per second.
    frames_per_step : int, optional
        Frames grouped in each step. The default is 1.

    Returns
    -------
    2-tuple
        Second of each of the `ceil(num_frames/frames_per_step)` steps and
        the number of seconds. Steps past the last second have a second of
        at least that number.

    Raises
    ------
    ValueError
        When the frame rate or the step is not positive.
    """
    if frame_rate <= 0:
        raise ValueError("Frame rate must be positive")
    if frames_per_step < 1:
        raise ValueError("Frames per step must be positive")
    frame_second = np.floor((np.arange(num_frames) + 0.5)/frame_rate)
    num_seconds = int(frame_second[-1]) + 1 if num_frames else 0
    if (num_seconds
            and np.sum(frame_second == num_seconds - 1) < 0.5*frame_rate):
        num_seconds -= 1

    num_steps = -(-num_frames//frames_per_step)
    centers = frames_per_step*(np.arange(num_steps) + 0.5)
    return np.floor(centers/frame_rate).astype(int), num_seconds


def events_to_pianoroll(events: Sequence[NoteEvent], frame_rate: float,
                        duration_s: float,
                        instrument_map: Optional[InstrumentMap] = None
                        ) -> Pianoroll:
    """
    Create a pianoroll from note events.

    A cell `(f, t, m)` is active when a note of pitch `f + 21` on instrument
    `m` is sounding at the center time `(t + 0.5)/frame_rate` of frame `t`,
    i.e., `onset <= center < offset`.

    Parameters
    ----------
    events : list of NoteEvent
        Notes to place on the roll. Can be empty.
    frame_rate : float
        Frames per second.
    duration_s : float
        Length of the roll in seconds. The roll has
        `floor(duration_s*frame_rate)` frames.
    instrument_map : InstrumentMap, optional
        Instruments of the roll. The default is the five instrument map.

    Returns
    -------
    Pianoroll
        Pianoroll covering the requested duration.

    Raises
    ------
    ValueError
        When frame rate or duration are not positive or an event refers to an
        instrument outside the map.
    """
    if frame_rate <= 0:
        raise ValueError("Frame rate must be positive")
    if duration_s <= 0:
        raise ValueError("Duration must be positive")
    if instrument_map is None:
        instrument_map = InstrumentMap.five_instruments()

    T = num_frames(duration_s, frame_rate)
    if T < 1:
        raise ValueError(f"Duration {duration_s} s is shorter than a frame")
    data = np.zeros((NUM_PITCHES, T, instrument_map.M), dtype=bool)
    for e in events:
        if e.instrument >= instrument_map.M:
            raise ValueError(f"Event instrument {e.instrument} not in map")
        # first and one past last frame whose center lies in [onset, offset)
        t_start = max(math.ceil(e.onset*frame_rate - 0.5), 0)
        t_end = min(math.ceil(e.offset*frame_rate - 0.5), T)
        if t_end > t_start:
            data[e.pitch - LOWEST_PITCH, t_start:t_end, e.instrument] = True

    return Pianoroll(data, frame_rate, instrument_map)


def project_instrument_roll(roll: Pianoroll) -> InstrumentRoll:
    """
    Return which instruments are active in each frame.

    Parameters
    ----------
    roll : Pianoroll
        Roll to project.

    Returns
    -------
    InstrumentRoll
        `data[m, t]` is true when any pitch of instrument `m` is active.
    """
    return InstrumentRoll(np.any(roll.data, axis=0).T, roll.frame_rate)


def project_pitch_roll(roll: Pianoroll) -> PitchRoll:
    """
    Return which pitches are active in each frame.

    Parameters
    ----------
    roll : Pianoroll
        Roll to project.

    Returns
    -------
    PitchRoll
        `data[f, t]` is true when pitch `f` is active on any instrument.
    """
    return PitchRoll(np.any(roll.data, axis=2), roll.frame_rate)


def pianoroll_to_events(roll: Pianoroll, velocity: int = 100
                        ) -> List[NoteEvent]:
    """
    Convert a pianoroll into note events.

    Consecutive active frames of the same pitch and instrument are merged into
    one note. A run of frames `[a, b)` becomes a note from `a/frame_rate` to
    `b/frame_rate` seconds.

    Parameters
    ----------
    roll : Pianoroll
        Roll to convert.
    velocity : int, optional
        Velocity assigned to every note. The default is 100.

    Returns
    -------
    list of NoteEvent
        Events sorted by onset, instrument and pitch.
    """
    # pad one inactive frame at each end so every run has a rise and a fall
    padded = np.pad(roll.data, ((0, 0), (1, 1), (0, 0))).astype(np.int8)
    change = np.diff(padded, axis=1)
    events = []
    for f, m in zip(*np.nonzero(np.any(roll.data, axis=1))):
        starts = np.flatnonzero(change[f, :, m] == 1)
        ends = np.flatnonzero(change[f, :, m] == -1)
        for a, b in zip(starts, ends):
            events.append(NoteEvent(pitch=int(f) + LOWEST_PITCH,
                                    onset=a/roll.frame_rate,
                                    offset=b/roll.frame_rate,
                                    instrument=int(m), velocity=velocity))
    events.sort(key=lambda e: (e.onset, e.instrument, e.pitch))
    return events


def pianoroll_to_midi(roll: Pianoroll,
                      instrument_map: Optional[InstrumentMap] = None,
                      tempo: float = 120.0) -> bytes:
    """
    Export a pianoroll as a Standard MIDI File.

    Parameters
    ----------
    roll : Pianoroll
        Roll to export.
    instrument_map : InstrumentMap, optional
        Map used to choose the program of each track. The default is the map
        of the roll.
    tempo : float, optional
        Tempo written to the file in beats per minute. The default is 120.

    Returns
    -------
    bytes
        Format 1 MIDI file with one track per non-empty instrument.
    """
    if instrument_map is None:
        instrument_map = roll.instrument_map

    pm = pretty_midi.PrettyMIDI(resolution=960, initial_tempo=tempo)
    tracks = {}
    for e in pianoroll_to_events(roll):
        if e.instrument not in tracks:
            is_drum = instrument_map.is_drum(e.instrument)
            tracks[e.instrument] = pretty_midi.Instrument(
                program=instrument_map.program_for(e.instrument),
                is_drum=is_drum, name=instrument_map.names[e.instrument])
        tracks[e.instrument].notes.append(
            pretty_midi.Note(velocity=e.velocity, pitch=e.pitch,
                             start=e.onset, end=e.offset))
    for m in sorted(tracks):
        pm.instruments.append(tracks[m])

    buffer = io.BytesIO()
    pm.write(buffer)
    return buffer.getvalue()


def chunk_pair(cqt, roll: Pianoroll,
               chunk_frames: int = DEFAULT_CHUNK_FRAMES
               ) -> List[Tuple[CQTMatrix, Pianoroll]]:
    """
    Split an aligned (CQT, pianoroll) pair into training chunks.

    The chunks are non-overlapping windows of exactly `chunk_frames` frames
    starting at frame 0. A trailing remainder shorter than a chunk is dropped.

    Parameters
    ----------
    cqt : CQTMatrix
        Input representation of the clip.
    roll : Pianoroll
        Target pianoroll of the clip.
    chunk_frames : int, optional
        Frames per chunk. The default is 312 (10 seconds).

    Returns
    -------
    list of 2-tuples
        Aligned (CQTMatrix, Pianoroll) chunks.

    Raises
    ------
    LengthMismatch
        When the CQT and the roll do not share frame count and frame rate.
    ValueError
        When the chunk size is not positive.
    """
    if chunk_frames < 1:
        raise ValueError("Chunk size must be positive")
    if cqt.T != roll.T:
        raise LengthMismatch(f"CQT has {cqt.T} frames but roll has "
                             f"{roll.T}")
    if not np.isclose(cqt.frame_rate, roll.frame_rate):
        raise LengthMismatch(f"CQT frame rate {cqt.frame_rate} differs from "
                             f"roll frame rate {roll.frame_rate}")

    chunks = []
    for start in range(0, roll.T - chunk_frames + 1, chunk_frames):
        stop = start + chunk_frames
        chunks.append((CQTMatrix(cqt.data[:, start:stop], cqt.frame_rate),
                       Pianoroll(roll.data[:, start:stop, :],
                                 roll.frame_rate, roll.instrument_map)))
    return chunks


def save_pianoroll(path, roll: Pianoroll) -> None:
    """
    Write a pianoroll to a container file.

    Parameters
    ----------
    path : str or path-like
        Destination file name.
    roll : Pianoroll
        Roll to store.
    """
    header = {"format": _ROLL_FORMAT, "shape": list(roll.data.shape),
              "frame_rate": roll.frame_rate,
              "instrument_map": roll.instrument_map.to_dict()}
    write_archive(path, header, {"data": roll.data})


def load_pianoroll(path) -> Pianoroll:
    """
    Read a pianoroll written by :func:`save_pianoroll`.

    Parameters
    ----------
    path : str or path-like
        File to read.

    Returns
    -------
    Pianoroll
        The stored roll.

    Raises
    ------
    IOError
        When the file is not a pianoroll container.
    """
    header, arrays = read_archive(path)
    if header.get("format") != _ROLL_FORMAT or "data" not in arrays:
        raise IOError(f"{path} is not a pianoroll file")
    data = arrays["data"]
    if list(data.shape) != header["shape"]:
        raise IOError(f"{path} has inconsistent shape information")
    return Pianoroll(data, header["frame_rate"],
                     InstrumentMap.from_dict(header["instrument_map"]))
