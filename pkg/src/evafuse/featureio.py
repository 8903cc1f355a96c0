"""Binary feature files.

Little-endian layout::

    b"EVAF" | u32 version=1 | u32 kind (0 banded, 1 temporal) | u32 T | u32 F
    | u32 D | u8 layer_id | u8 has_timeline
    | [T x f64 centers | T x f32 coverage]  (only if has_timeline)
    | T*F*D x f32 data in (t, f, d) order
"""

from __future__ import annotations

import os
import struct

import numpy as np

from .features import BandedFeatureMap, TemporalSequence, TimelineSpec

MAGIC = b"EVAF"
VERSION = 1
KIND_BANDED, KIND_TEMPORAL = 0, 1
_HEADER = struct.Struct("<4sIIIIIBB")


class FeatureFileError(ValueError):
    """Base class for malformed feature files."""


class BadMagicError(FeatureFileError):
    pass


class VersionError(FeatureFileError):
    pass


class TruncatedFileError(FeatureFileError):
    pass


class TimelineError(FeatureFileError):
    pass


def encode_features(payload) -> bytes:
    if isinstance(payload, BandedFeatureMap):
        kind, (T, F, D), layer_id = KIND_BANDED, payload.data.shape, payload.layer_id
    elif isinstance(payload, TemporalSequence):
        kind, (T, D), F, layer_id = KIND_TEMPORAL, payload.data.shape, 1, 0
    else:
        raise TypeError(f"cannot serialise {type(payload).__name__}")
    tl = payload.timeline
    parts = [_HEADER.pack(MAGIC, VERSION, kind, T, F, D, layer_id, int(tl is not None))]
    if tl is not None:
        parts.append(tl.centers.astype("<f8").tobytes())
        parts.append(tl.coverage.astype("<f4").tobytes())
    parts.append(payload.data.astype("<f4").tobytes())
    return b"".join(parts)


def decode_features(buf: bytes):
    if len(buf) < 4 or buf[:4] != MAGIC:
        raise BadMagicError(f"bad magic {bytes(buf[:4])!r}, expected {MAGIC!r}")
    if len(buf) < _HEADER.size:
        raise TruncatedFileError("file ends inside the header")
    _, version, kind, T, F, D, layer_id, has_tl = _HEADER.unpack_from(buf)
    if version != VERSION:
        raise VersionError(f"unsupported feature-file version {version}")
    if kind not in (KIND_BANDED, KIND_TEMPORAL):
        raise FeatureFileError(f"unknown payload kind {kind}")
    if kind == KIND_TEMPORAL and F != 1:
        raise FeatureFileError("temporal payload must declare F=1")

    n_tl = T * 12 if has_tl else 0
    need = _HEADER.size + n_tl + T * F * D * 4
    if len(buf) < need:
        raise TruncatedFileError(f"expected {need} bytes, found {len(buf)}")
    if len(buf) > need:
        raise FeatureFileError(f"{len(buf) - need} unexpected trailing bytes")

    off = _HEADER.size
    timeline = None
    if has_tl:
        centers = np.frombuffer(buf, "<f8", T, off).astype(np.float64)
        coverage = np.frombuffer(buf, "<f4", T, off + 8 * T).astype(np.float64)
        off += n_tl
        try:
            timeline = TimelineSpec(centers, coverage)
        except ValueError as exc:
            raise TimelineError(str(exc)) from None
    data = np.frombuffer(buf, "<f4", T * F * D, off).astype(np.float64)
    if kind == KIND_BANDED:
        return BandedFeatureMap(data.reshape(T, F, D), layer_id, timeline)
    return TemporalSequence(data.reshape(T, D), timeline)


def write_features(path, payload) -> None:
    data = encode_features(payload)
    with open(path, "wb") as fh:
        fh.write(data)


def read_features(path):
    with open(os.fspath(path), "rb") as fh:
        return decode_features(fh.read())
