"""Raster container, native file format, and the display preprocessing chain.

Two on-disk encodings are understood:

* ``RFLD 1 <w> <h> <bands>`` binary: optional ``NAMES a,b`` line, a ``DATA``
  line, then ``w*h*bands`` little-endian float64 values, band-sequential and
  row-major within each band.
* ``RTXT 1 <w> <h> <bands>`` text: whitespace separated decimal values in the
  same order. An optional ``NAMES`` line may follow the header.

GeoTIFF input is expected to be converted to RFLD by external tooling.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import DimensionMismatchError, NnmcError, NnmcIOError, RasterFormatError

__all__ = [
    "RasterField",
    "BandStats",
    "load_raster",
    "save_raster",
    "band_stats",
    "clip_percentile",
    "normalize_minmax",
    "preprocess_band",
]

_LE_F64 = np.dtype("<f8")


@dataclass(frozen=True, eq=False)
class RasterField:
    """Multi-band 2-D grid of float64 samples.

    ``samples`` has shape ``(bands, height, width)``; its C-order flattening is
    the band-sequential, row-major sample vector.
    """

    samples: np.ndarray
    band_names: tuple[str, ...] = field(default=())

    def __post_init__(self):
        arr = np.array(self.samples, dtype=np.float64, copy=True)
        if arr.ndim == 2:
            arr = arr[np.newaxis]
        if arr.ndim != 3 or min(arr.shape) < 1:
            raise RasterFormatError(f"samples must have shape (bands, height, width), got {arr.shape}")
        if not np.all(np.isfinite(arr)):
            bad = int(np.flatnonzero(~np.isfinite(arr.ravel()))[0])
            raise RasterFormatError(f"non-finite sample at index {bad}")
        arr.setflags(write=False)
        object.__setattr__(self, "samples", arr)
        names = tuple(self.band_names)
        if names and len(names) != arr.shape[0]:
            raise RasterFormatError(f"{len(names)} band names for {arr.shape[0]} bands")
        object.__setattr__(self, "band_names", names)

    @property
    def bands(self) -> int:
        return self.samples.shape[0]

    @property
    def height(self) -> int:
        return self.samples.shape[1]

    @property
    def width(self) -> int:
        return self.samples.shape[2]

    def band(self, index: int) -> np.ndarray:
        if not 0 <= index < self.bands:
            raise DimensionMismatchError(f"band {index} out of range (field has {self.bands})")
        return self.samples[index]

    def __eq__(self, other):
        if not isinstance(other, RasterField):
            return NotImplemented
        return (
            self.samples.shape == other.samples.shape
            and self.band_names == other.band_names
            and self.samples.tobytes() == other.samples.tobytes()
        )

    __hash__ = None


@dataclass(frozen=True)
class BandStats:
    min: float
    max: float
    mean: float
    std: float


def _parse_header(line: str, magic: str) -> tuple[int, int, int]:
    parts = line.split()
    if len(parts) != 5 or parts[0] != magic or parts[1] != "1":
        raise RasterFormatError(f"malformed header: {line.strip()!r}")
    try:
        width, height, bands = (int(p) for p in parts[2:])
    except ValueError:
        raise RasterFormatError(f"malformed header: {line.strip()!r}") from None
    if min(width, height, bands) < 1:
        raise RasterFormatError(f"malformed header: non-positive dimension in {line.strip()!r}")
    return width, height, bands


def _split_names(line: str) -> tuple[str, ...]:
    return tuple(name.strip() for name in line[len("NAMES "):].split(","))


def _load_rfld(raw: bytes) -> RasterField:
    pos = raw.find(b"\n")
    if pos < 0:
        raise RasterFormatError("malformed header: missing newline")
    width, height, bands = _parse_header(raw[:pos].decode("ascii", "replace"), "RFLD")
    names: tuple[str, ...] = ()
    cursor = pos + 1
    end = raw.find(b"\n", cursor)
    if end < 0:
        raise RasterFormatError("malformed header: missing DATA line")
    line = raw[cursor:end].decode("utf-8", "replace")
    if line.startswith("NAMES "):
        names = _split_names(line)
        cursor = end + 1
        end = raw.find(b"\n", cursor)
        if end < 0:
            raise RasterFormatError("malformed header: missing DATA line")
        line = raw[cursor:end].decode("ascii", "replace")
    if line != "DATA":
        raise RasterFormatError(f"malformed header: expected DATA, got {line!r}")
    data_start = end + 1
    payload = raw[data_start:]
    expected = width * height * bands
    if len(payload) % 8 != 0 or len(payload) // 8 != expected:
        raise RasterFormatError(
            f"sample count mismatch: header declares {expected}, payload holds {len(payload) / 8:g}"
        )
    values = np.frombuffer(payload, dtype=_LE_F64).astype(np.float64)
    bad = np.flatnonzero(~np.isfinite(values))
    if bad.size:
        raise RasterFormatError(f"non-finite sample at byte offset {data_start + 8 * int(bad[0])}")
    return RasterField(values.reshape(bands, height, width), names)


_TOKEN = re.compile(rb"\S+")


def _load_rtxt(raw: bytes) -> RasterField:
    pos = raw.find(b"\n")
    header = raw if pos < 0 else raw[:pos]
    width, height, bands = _parse_header(header.decode("ascii", "replace"), "RTXT")
    cursor = len(raw) if pos < 0 else pos + 1
    names: tuple[str, ...] = ()
    if raw.startswith(b"NAMES ", cursor):
        end = raw.find(b"\n", cursor)
        end = len(raw) if end < 0 else end
        names = _split_names(raw[cursor:end].decode("utf-8", "replace"))
        cursor = end + 1
    values = []
    for match in _TOKEN.finditer(raw, cursor):
        try:
            value = float(match.group())
        except ValueError:
            raise RasterFormatError(f"malformed value {match.group()!r} at byte offset {match.start()}") from None
        if not np.isfinite(value):
            raise RasterFormatError(f"non-finite sample at byte offset {match.start()}")
        values.append(value)
    expected = width * height * bands
    if len(values) != expected:
        raise RasterFormatError(f"sample count mismatch: header declares {expected}, found {len(values)}")
    return RasterField(np.array(values).reshape(bands, height, width), names)


def load_raster(path) -> RasterField:
    """Read an RFLD or RTXT file."""
    try:
        raw = Path(path).read_bytes()
    except OSError as exc:
        raise NnmcIOError(f"cannot read {path}: {exc.strerror or exc}") from exc
    if raw.startswith(b"RFLD "):
        return _load_rfld(raw)
    if raw.startswith(b"RTXT "):
        return _load_rtxt(raw)
    raise RasterFormatError("malformed header: unknown magic")


def save_raster(field: RasterField, path, text: bool = False) -> None:
    """Write ``field`` as RFLD (default) or RTXT.

    The text form uses ``repr`` floats, so it round-trips exactly as well.
    """
    b, h, w = field.samples.shape
    magic = "RTXT" if text else "RFLD"
    head = f"{magic} 1 {w} {h} {b}\n"
    if field.band_names:
        if any("," in n or "\n" in n for n in field.band_names):
            raise RasterFormatError("band names may not contain commas or newlines")
        head += "NAMES " + ",".join(field.band_names) + "\n"
    if text:
        body = "\n".join(" ".join(repr(float(v)) for v in row) for row in field.samples.reshape(-1, w))
        blob = (head + body + "\n").encode("utf-8")
    else:
        blob = (head + "DATA\n").encode("utf-8") + field.samples.astype(_LE_F64).tobytes()
    try:
        Path(path).write_bytes(blob)
    except OSError as exc:
        raise NnmcIOError(f"cannot write {path}: {exc.strerror or exc}") from exc


def band_stats(field: RasterField, band_index: int) -> BandStats:
    """Min, max, mean and population standard deviation of one band."""
    band = field.band(band_index)
    lo, hi = float(band.min()), float(band.max())
    if lo == hi:
        # summation rounding would otherwise perturb the mean of a constant band
        return BandStats(lo, hi, lo, 0.0)
    return BandStats(lo, hi, min(max(float(band.mean()), lo), hi), float(band.std()))


def clip_percentile(band, min_pct: float = 2.0, max_pct: float = 98.0) -> np.ndarray:
    """Clamp values to the [min_pct, max_pct] percentile range.

    Percentiles use linear interpolation between closest ranks, i.e.
    ``x[i] + frac * (x[i+1] - x[i])`` with ``pos = q/100 * (m-1)``.
    """
    arr = np.asarray(band, dtype=np.float64)
    if arr.size == 0:
        raise NnmcError("clip_percentile: empty band")
    if not (0 <= min_pct < max_pct <= 100):
        raise NnmcError(f"clip_percentile: need 0 <= min_pct < max_pct <= 100, got ({min_pct}, {max_pct})")
    lo, hi = np.percentile(arr, [min_pct, max_pct], method="linear")
    return np.clip(arr, lo, hi)


def normalize_minmax(band) -> np.ndarray:
    """Map ``band`` affinely onto [0, 1]; a constant band maps to zeros."""
    arr = np.asarray(band, dtype=np.float64)
    if arr.size == 0:
        raise NnmcError("normalize_minmax: empty band")
    lo, hi = arr.min(), arr.max()
    if hi == lo:
        return np.zeros_like(arr)
    return (arr - lo) / (hi - lo)


def preprocess_band(band, min_pct: float = 2.0, max_pct: float = 98.0) -> np.ndarray:
    return normalize_minmax(clip_percentile(band, min_pct, max_pct))


def stack_bands(bands: Sequence[np.ndarray], names: Sequence[str] = ()) -> RasterField:
    return RasterField(np.stack([np.asarray(b, dtype=np.float64) for b in bands]), tuple(names))
