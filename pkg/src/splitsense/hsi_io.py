"""ENVI-format hyperspectral cube parsing, reading and writing.

Supports the subset the Specim FX10e toolchain emits: interleaves bil/bsq
(bip is read-only), data types 4 (float32) and 12 (uint16), little-endian
payloads. The in-memory cube is always band-sequential float32 regardless
of the file interleave.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import (
    MissingHeaderKey,
    NonMonotonicWavelengths,
    PayloadSizeMismatch,
    UnsupportedByteOrder,
    UnsupportedDataType,
    UnsupportedInterleave,
    WavelengthCountMismatch,
)

READ_INTERLEAVES = ("bil", "bsq", "bip")
WRITE_INTERLEAVES = ("bil", "bsq")
DATA_TYPES = {4: np.dtype("<f4"), 12: np.dtype("<u2")}

PROVENANCE_RAW = "raw"
PROVENANCE_CALIBRATED = "calibrated"


@dataclass(frozen=True)
class EnviHeader:
    samples: int
    lines: int
    bands: int
    interleave: str
    data_type: int
    byte_order: int = 0
    wavelengths: tuple[float, ...] = ()
    reflectance_scale: float | None = None
    header_offset: int = 0
    units: str | None = None

    def __post_init__(self):
        object.__setattr__(self, "interleave", self.interleave.lower())
        object.__setattr__(self, "wavelengths", tuple(float(w) for w in self.wavelengths))
        if self.samples < 1 or self.lines < 1 or self.bands < 1:
            raise ValueError("samples, lines and bands must all be >= 1")
        if self.interleave not in READ_INTERLEAVES:
            raise UnsupportedInterleave(f"interleave {self.interleave!r} not supported")
        if self.data_type not in DATA_TYPES:
            raise UnsupportedDataType(f"ENVI data type {self.data_type} not supported")
        if self.byte_order != 0:
            raise UnsupportedByteOrder("only byte order 0 (little-endian) is supported")
        if len(self.wavelengths) != self.bands:
            raise WavelengthCountMismatch(
                f"{len(self.wavelengths)} wavelengths for {self.bands} bands")
        diffs = np.diff(self.wavelengths)
        if len(diffs) and not np.all(diffs > 0):
            raise NonMonotonicWavelengths("wavelengths must be strictly increasing")

    @property
    def itemsize(self) -> int:
        return DATA_TYPES[self.data_type].itemsize

    @property
    def n_values(self) -> int:
        return self.samples * self.lines * self.bands


@dataclass(frozen=True, eq=False)
class HsiCube:
    """Immutable reflectance volume in canonical (band, line, sample) order."""

    header: EnviHeader
    data: np.ndarray
    provenance: str = PROVENANCE_RAW

    def __post_init__(self):
        expected = (self.header.bands, self.header.lines, self.header.samples)
        if self.data.shape != expected:
            raise ValueError(f"data shape {self.data.shape} != header {expected}")
        if self.data.dtype != np.float32:
            raise ValueError("cube data must be float32")
        if self.provenance not in (PROVENANCE_RAW, PROVENANCE_CALIBRATED):
            raise ValueError(f"unknown provenance {self.provenance!r}")
        if self.provenance == PROVENANCE_CALIBRATED and self.data.size:
            lo, hi = float(self.data.min()), float(self.data.max())
            if lo < 0.0 or hi > 1.0:
                raise ValueError(f"calibrated cube outside [0, 1]: [{lo}, {hi}]")
        self.data.flags.writeable = False

    @property
    def wavelengths(self) -> np.ndarray:
        return np.asarray(self.header.wavelengths)

    @property
    def spatial_shape(self) -> tuple[int, int]:
        return (self.header.lines, self.header.samples)


_REQUIRED_KEYS = ("samples", "lines", "bands", "interleave", "data type",
                  "byte order", "wavelength")


def _tokenize_header(text: str) -> dict[str, str]:
    entries: dict[str, str] = {}
    pending_key = None
    pending: list[str] = []
    for raw in text.splitlines():
        line = raw.strip()
        if not line or line.upper() == "ENVI" or line.startswith(";"):
            continue
        if pending_key is not None:
            pending.append(line)
            if "}" in line:
                entries[pending_key] = " ".join(pending)
                pending_key, pending = None, []
            continue
        if "=" not in line:
            continue
        key, value = line.split("=", 1)
        key = re.sub(r"\s+", " ", key.strip().lower())
        value = value.strip()
        if value.startswith("{") and "}" not in value:
            pending_key, pending = key, [value]
        else:
            entries[key] = value
    return entries


def _parse_float_list(value: str) -> list[float]:
    inner = value.strip().lstrip("{").rstrip("}")
    tokens = [t for t in re.split(r"[,\s]+", inner) if t]
    return [float(t) for t in tokens]


def parse_envi_header(text: str) -> EnviHeader:
    """Parse ENVI header text (key = value lines, brace-delimited lists)."""
    entries = _tokenize_header(text)
    for key in _REQUIRED_KEYS:
        if key not in entries:
            raise MissingHeaderKey(key)
    try:
        samples = int(entries["samples"])
        lines = int(entries["lines"])
        bands = int(entries["bands"])
        data_type = int(entries["data type"])
        byte_order = int(entries["byte order"])
    except ValueError as exc:
        raise MissingHeaderKey(str(exc)) from exc
    wavelengths = _parse_float_list(entries["wavelength"])
    scale = None
    if "reflectance scale factor" in entries:
        scale = float(entries["reflectance scale factor"])
    offset = int(entries.get("header offset", 0))
    units = entries.get("data units")
    return EnviHeader(
        samples=samples,
        lines=lines,
        bands=bands,
        interleave=entries["interleave"].lower(),
        data_type=data_type,
        byte_order=byte_order,
        wavelengths=tuple(wavelengths),
        reflectance_scale=scale,
        header_offset=offset,
        units=units,
    )


def read_cube(header: EnviHeader, payload: bytes) -> HsiCube:
    """Decode a raw binary payload into the canonical band-sequential cube."""
    if header.header_offset:
        payload = payload[header.header_offset:]
    expected = header.n_values * header.itemsize
    if len(payload) != expected:
        raise PayloadSizeMismatch(expected, len(payload))
    arr = np.frombuffer(payload, dtype=DATA_TYPES[header.data_type])
    b, l, s = header.bands, header.lines, header.samples
    if header.interleave == "bsq":
        cube = arr.reshape(b, l, s)
    elif header.interleave == "bil":
        cube = arr.reshape(l, b, s).transpose(1, 0, 2)
    else:  # bip, read-only
        cube = arr.reshape(l, s, b).transpose(2, 0, 1)
    if header.data_type == 12:
        data = cube.astype(np.float32)
        if header.reflectance_scale:
            data /= np.float32(header.reflectance_scale)
        data = np.ascontiguousarray(data)
    else:
        data = np.ascontiguousarray(cube, dtype=np.float32)
    provenance = (PROVENANCE_CALIBRATED if header.units == "reflectance"
                  else PROVENANCE_RAW)
    return HsiCube(header=header, data=data, provenance=provenance)


def format_header(header: EnviHeader, provenance: str = PROVENANCE_RAW) -> str:
    lines = [
        "ENVI",
        f"samples = {header.samples}",
        f"lines = {header.lines}",
        f"bands = {header.bands}",
        "header offset = 0",
        f"data type = {header.data_type}",
        f"interleave = {header.interleave}",
        "byte order = 0",
    ]
    if provenance == PROVENANCE_CALIBRATED:
        lines.append("data units = reflectance")
    if header.reflectance_scale is not None:
        lines.append(f"reflectance scale factor = {header.reflectance_scale!r}")
    wl = ", ".join(repr(w) for w in header.wavelengths)
    lines.append("wavelength = {")
    lines.append(f" {wl}")
    lines.append("}")
    return "\n".join(lines) + "\n"


def write_cube(cube: HsiCube, interleave: str = "bsq") -> tuple[str, bytes]:
    """Serialize to (header text, payload). Round trips bit-exactly."""
    interleave = interleave.lower()
    if interleave not in WRITE_INTERLEAVES:
        raise UnsupportedInterleave(f"cannot write interleave {interleave!r}")
    header = EnviHeader(
        samples=cube.header.samples,
        lines=cube.header.lines,
        bands=cube.header.bands,
        interleave=interleave,
        data_type=4,
        byte_order=0,
        wavelengths=cube.header.wavelengths,
        units="reflectance" if cube.provenance == PROVENANCE_CALIBRATED else None,
    )
    data = cube.data.astype("<f4", copy=False)
    if interleave == "bsq":
        payload = data.tobytes()
    else:
        payload = np.ascontiguousarray(data.transpose(1, 0, 2)).tobytes()
    return format_header(header, cube.provenance), payload


def nearest_band(header: EnviHeader, target_nm: float) -> int:
    """Index of the band center closest to ``target_nm`` (ties go lower)."""
    wl = np.asarray(header.wavelengths)
    return int(np.argmin(np.abs(wl - target_nm)))


# --- file-pair helpers ----------------------------------------------------

_DATA_SUFFIXES = (".raw", ".img", ".dat", ".bsq", ".bil", ".bip")


def data_path_for(hdr_path: Path) -> Path:
    for suffix in _DATA_SUFFIXES:
        cand = hdr_path.with_suffix(suffix)
        if cand.exists():
            return cand
    raise FileNotFoundError(f"no data file found next to {hdr_path}")


def read_cube_file(hdr_path: str | Path) -> HsiCube:
    hdr_path = Path(hdr_path)
    header = parse_envi_header(hdr_path.read_text())
    payload = data_path_for(hdr_path).read_bytes()
    return read_cube(header, payload)


def write_cube_files(cube: HsiCube, stem: str | Path,
                     interleave: str = "bsq") -> tuple[Path, Path]:
    stem = Path(stem)
    hdr_text, payload = write_cube(cube, interleave)
    hdr_path = stem.with_suffix(".hdr")
    raw_path = stem.with_suffix(".raw")
    hdr_path.write_text(hdr_text)
    raw_path.write_bytes(payload)
    return hdr_path, raw_path
