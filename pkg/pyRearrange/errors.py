#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
Exceptions raised by the rearrangement library.

All exceptions derive from :class:`RearrangeError`. They are split into two
families that the command line interface maps onto exit codes:
:class:`DataError` for problems with the music, audio or corpus being used and
:class:`ModelError` for problems with networks, training or checkpoints. Each
class also derives from the builtin exception a caller would naturally expect
(usually `ValueError`) so code that only knows the builtins still works.
"""


class RearrangeError(Exception):
    """Base class for all errors raised by this package."""


class DataError(RearrangeError):
    """Problem with input music, audio or corpus data."""


class ModelError(RearrangeError):
    """Problem with a model, its training or its checkpoint."""


class MalformedMidi(DataError, ValueError):
    """Standard MIDI file has a bad header or chunk structure."""


class EmptyScore(DataError, ValueError):
    """No note events remain after instrument mapping and range filtering."""


class UndecodableAudio(DataError, IOError):
    """Audio bytes cannot be decoded."""


class ClipTooShort(DataError, ValueError):
    """Audio clip is shorter than the analysis requires."""


class LengthMismatch(DataError, ValueError):
    """Paired time series do not share the same number of frames."""


class IndexOutOfRange(DataError, IndexError):
    """Frequency bin index outside of the transform range."""


class UnknownStyle(DataError, KeyError):
    """Composition style name is unknown or unavailable for a map."""

    def __str__(self):
        # KeyError quotes its argument, which garbles the message
        return str(self.args[0]) if self.args else ""


class EmptyTestset(DataError, ValueError):
    """Evaluation was requested on a set without any clips."""


class CorruptCorpus(DataError, IOError):
    """Corpus manifest or one of its files cannot be read."""


class NonBinaryTarget(DataError, ValueError):
    """Binary cross entropy target contains values other than 0 and 1."""


class BadInputShape(ModelError, ValueError):
    """Network input does not have the expected shape."""


class ShapeMismatch(ModelError, ValueError):
    """Tensors that must agree in shape do not."""


class SkipShapeMismatch(ShapeMismatch):
    """Skip connection activations do not match the decoder levels."""


class NonFiniteLoss(ModelError, RuntimeError):
    """Training produced an infinite or NaN loss."""


class CorruptCheckpoint(ModelError, IOError):
    """Checkpoint file is unreadable or incomplete."""


class VersionMismatch(ModelError, ValueError):
    """Checkpoint format or model kind does not match what was requested."""


class UntrainedModel(ModelError, ValueError):
    """Inference was requested from a model that was never trained."""


class DegenerateOutput(ModelError, ValueError):
    """Rearrangement produced an empty pianoroll."""
