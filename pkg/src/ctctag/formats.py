"""Bit-exact binary files for emissions and acoustic features.

Both formats are little-endian with float32 row-major payloads; compute
stays 64-bit, so writing narrows and reading widens. Emission files carry a
kind byte: 0 for probabilities (rows must sum to 1 within the 32-bit storage
tolerance), 1 for raw logits.

    emission: "CTCL" | version u16 | kind u8 | reserved u8 | T u32 | V u32 | payload
    feature:  "CTCF" | version u16 | T u32 | m u32 | payload
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from .ctc import EmissionMatrix
from .errors import FormatError, ShapeError, TruncatedFile, UnsupportedVersion

EMISSION_MAGIC = b"CTCL"
FEATURE_MAGIC = b"CTCF"
FORMAT_VERSION = 1
EMISSION_KIND_PROBS = 0
EMISSION_KIND_LOGITS = 1

_EMISSION_HEADER = struct.Struct("<4sHBBII")
_FEATURE_HEADER = struct.Struct("<4sHII")

STORED_ROW_SUM_TOL = 1e-4  # 32-bit storage tolerance


def _as_2d(array: np.ndarray, what: str) -> np.ndarray:
    arr = np.asarray(array, dtype=np.float64)
    if arr.ndim != 2 or arr.shape[0] < 1 or arr.shape[1] < 1:
        raise ShapeError(f"{what} must be a non-empty 2-D array, got shape {arr.shape}")
    return arr


def write_emission_file(path: str | Path, array: np.ndarray, kind: int) -> None:
    """Write probabilities (kind 0) or logits (kind 1), narrowed to float32."""
    if kind not in (EMISSION_KIND_PROBS, EMISSION_KIND_LOGITS):
        raise ValueError(f"unknown emission kind {kind}")
    arr = _as_2d(array, "emissions")
    if arr.shape[1] < 2:
        raise ShapeError(f"emissions need V_total >= 2, got {arr.shape}")
    narrowed = arr.astype("<f4")
    if kind == EMISSION_KIND_PROBS:
        sums = narrowed.astype(np.float64).sum(axis=1)
        if np.any(np.abs(sums - 1.0) > STORED_ROW_SUM_TOL):
            raise ValueError("probability rows must sum to 1 within the storage tolerance")
    header = _EMISSION_HEADER.pack(
        EMISSION_MAGIC, FORMAT_VERSION, kind, 0, arr.shape[0], arr.shape[1]
    )
    Path(path).write_bytes(header + narrowed.tobytes())


def read_emission_file(path: str | Path) -> tuple[np.ndarray, int]:
    """Read an emission file; returns (float64 array, kind)."""
    buf = Path(path).read_bytes()
    if len(buf) < _EMISSION_HEADER.size:
        raise TruncatedFile(f"{path}: shorter than the emission header")
    magic, version, kind, reserved, t_frames, v_total = _EMISSION_HEADER.unpack_from(buf)
    if magic != EMISSION_MAGIC:
        raise FormatError(f"{path}: bad magic {magic!r}")
    if version != FORMAT_VERSION:
        raise UnsupportedVersion(f"{path}: emission file version {version}")
    if reserved != 0:
        raise FormatError(f"{path}: reserved byte is {reserved}")
    if kind not in (EMISSION_KIND_PROBS, EMISSION_KIND_LOGITS):
        raise FormatError(f"{path}: unknown emission kind {kind}")
    if t_frames < 1 or v_total < 2:
        raise FormatError(f"{path}: bad dimensions T={t_frames}, V_total={v_total}")
    expected = t_frames * v_total * 4
    payload = buf[_EMISSION_HEADER.size :]
    if len(payload) < expected:
        raise TruncatedFile(f"{path}: payload has {len(payload)} of {expected} bytes")
    if len(payload) > expected:
        raise FormatError(f"{path}: {len(payload) - expected} trailing bytes")
    arr = (
        np.frombuffer(payload, dtype="<f4")
        .reshape(t_frames, v_total)
        .astype(np.float64)
    )
    if kind == EMISSION_KIND_PROBS:
        sums = arr.sum(axis=1)
        if np.any(np.abs(sums - 1.0) > STORED_ROW_SUM_TOL):
            raise FormatError(f"{path}: probability rows do not sum to 1")
    return arr, kind


def load_emission_matrix(path: str | Path) -> EmissionMatrix:
    """Read an emission file as a validated EmissionMatrix.

    Probability rows are renormalized to undo the 32-bit narrowing; logits
    go through the softmax.
    """
    arr, kind = read_emission_file(path)
    if kind == EMISSION_KIND_PROBS:
        return EmissionMatrix.from_unnormalized(arr)
    return EmissionMatrix.from_logits(arr)


def write_feature_file(path: str | Path, array: np.ndarray) -> None:
    arr = _as_2d(array, "features")
    header = _FEATURE_HEADER.pack(FEATURE_MAGIC, FORMAT_VERSION, arr.shape[0], arr.shape[1])
    Path(path).write_bytes(header + arr.astype("<f4").tobytes())


def read_feature_file(path: str | Path) -> np.ndarray:
    buf = Path(path).read_bytes()
    if len(buf) < _FEATURE_HEADER.size:
        raise TruncatedFile(f"{path}: shorter than the feature header")
    magic, version, t_frames, feature_dim = _FEATURE_HEADER.unpack_from(buf)
    if magic != FEATURE_MAGIC:
        raise FormatError(f"{path}: bad magic {magic!r}")
    if version != FORMAT_VERSION:
        raise UnsupportedVersion(f"{path}: feature file version {version}")
    if t_frames < 1 or feature_dim < 1:
        raise FormatError(f"{path}: bad dimensions T={t_frames}, m={feature_dim}")
    expected = t_frames * feature_dim * 4
    payload = buf[_FEATURE_HEADER.size :]
    if len(payload) < expected:
        raise TruncatedFile(f"{path}: payload has {len(payload)} of {expected} bytes")
    if len(payload) > expected:
        raise FormatError(f"{path}: {len(payload) - expected} trailing bytes")
    return (
        np.frombuffer(payload, dtype="<f4")
        .reshape(t_frames, feature_dim)
        .astype(np.float64)
    )
