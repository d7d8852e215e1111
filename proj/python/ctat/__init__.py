"""Thermoacoustic tomography with circular integrating detectors."""

import json

from ._ctat import (
    ArrayFileError,
    ConfigError,
    Experiment,
    adjoint_mismatch,
    canonical_image,
    coverage_time,
    selftest,
)
from ._ctat import read_array as _read_array
from ._ctat import write_array as _write_array

__all__ = [
    "ArrayFileError",
    "ConfigError",
    "Experiment",
    "adjoint_mismatch",
    "canonical_image",
    "coverage_time",
    "read_array",
    "selftest",
    "write_array",
]


def read_array(path):
    """Returns (ndarray, meta dict) for a TATARR1 file."""
    data, meta = _read_array(str(path))
    return data, json.loads(meta)


def write_array(path, array, meta=None):
    _write_array(str(path), array, json.dumps(meta or {}))
