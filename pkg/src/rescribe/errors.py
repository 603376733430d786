"""Exception types shared across the pipeline."""

from __future__ import annotations


class RescribeError(Exception):
    """Base class for all rescribe errors."""


class MissingFile(RescribeError):
    """A required bundle file is absent."""


class SchemaViolation(RescribeError):
    """A record violates the on-disk schema; message names the field."""


class UnsortedEvents(RescribeError):
    """events.jsonl is not sorted by timestamp."""


class OutOfBounds(RescribeError):
    """A patch region does not fit inside the target image."""


class DimensionMismatch(RescribeError):
    """Two images that must share dimensions do not."""


class IndexOutOfRange(RescribeError):
    """Frame index outside [0, frame_count)."""


class CorruptPatch(RescribeError):
    """A patch region file is missing or its raster has the wrong size."""


class BackendUnavailable(RescribeError):
    """The requested OCR backend cannot be invoked."""


class BackendFailure(RescribeError):
    """The OCR backend ran but produced unusable output."""


class DuplicateAddress(RescribeError):
    """Two artifact records claim the same address."""


class DanglingXref(RescribeError):
    """A cross-reference endpoint does not resolve to a known address."""


class InsufficientFrames(RescribeError):
    """Not enough eligible frames to satisfy a sampling request."""
