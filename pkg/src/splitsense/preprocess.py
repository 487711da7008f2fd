"""Preprocessing chain: calibration, RGB compositing, bounding-box scaling,
background masking, crop/resize, spectral slicing and dihedral augmentation.

Coordinate convention is raster top-left everywhere: x0 is a column index,
y0 a row index. Annotation boxes arrive in RGB-composite coordinates and are
mapped onto the cube grid with width/height scale factors (identity when the
composite was extracted from the same cube).
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from . import pgm
from .errors import (
    DimensionMismatch,
    EmptyBox,
    InsufficientBands,
    WavelengthOutOfRange,
)
from .hsi_io import PROVENANCE_CALIBRATED, EnviHeader, HsiCube, nearest_band

logger = logging.getLogger(__name__)

RGB_WAVELENGTHS_NM = (650.45, 540.62, 460.27)
BAND_RANGE_NM = (530.0, 550.0)
ROI_BAND_COUNT = 16
ROI_SIZE = 210

# |white - dark| below this is treated as a dead reference element.
DEGENERATE_EPS = 1e-6


@dataclass(frozen=True)
class BoundingBox:
    """Raster-top-left box: x0 = column, y0 = row."""

    x0: int
    y0: int
    h: int
    w: int

    def __post_init__(self):
        if self.h < 1 or self.w < 1:
            raise EmptyBox(f"degenerate box {self}")


@dataclass(frozen=True)
class ScaleFactors:
    alpha1: float  # width ratio
    alpha2: float  # height ratio

    def __post_init__(self):
        if self.alpha1 <= 0 or self.alpha2 <= 0:
            raise ValueError("scale factors must be strictly positive")

    @classmethod
    def from_dims(cls, rgb_dims: tuple[int, int],
                  hsi_dims: tuple[int, int]) -> "ScaleFactors":
        h_rgb, w_rgb = rgb_dims
        h_hsi, w_hsi = hsi_dims
        return cls(alpha1=w_hsi / w_rgb, alpha2=h_hsi / h_rgb)


@dataclass(frozen=True, eq=False)
class ForegroundMask:
    bits: np.ndarray  # uint8, 1 = foreground

    def __post_init__(self):
        if self.bits.ndim != 2:
            raise ValueError("mask must be 2-D")
        object.__setattr__(self, "bits",
                           np.ascontiguousarray(self.bits != 0).astype(np.uint8))
        self.bits.flags.writeable = False

    @property
    def shape(self) -> tuple[int, int]:
        return self.bits.shape

    @classmethod
    def from_pgm(cls, path: str | Path) -> "ForegroundMask":
        return cls(pgm.read_pgm(path))

    def to_pgm(self, path: str | Path) -> None:
        pgm.write_pgm(path, self.bits * np.uint8(255))


@dataclass(frozen=True, eq=False)
class RoiTensor:
    """Band-sliced, cropped, resized reflectance tensor in [0, 1]."""

    values: np.ndarray  # (bands, H, W) float32
    wavelengths: tuple[float, ...]

    def __post_init__(self):
        if self.values.ndim != 3:
            raise ValueError("ROI values must be (bands, H, W)")
        if self.values.shape[0] != len(self.wavelengths):
            raise ValueError("band count does not match wavelengths")
        if self.values.dtype != np.float32:
            raise ValueError("ROI values must be float32")
        lo, hi = float(self.values.min()), float(self.values.max())
        if lo < 0.0 or hi > 1.0:
            raise ValueError(f"ROI values outside [0, 1]: [{lo}, {hi}]")
        self.values.flags.writeable = False

    @property
    def shape(self) -> tuple[int, int, int]:
        return self.values.shape


@dataclass(frozen=True)
class RoiAnnotation:
    id: str
    bbox: BoundingBox
    mask_path: str


def degenerate_reference_count(dark: HsiCube, white: HsiCube) -> int:
    """Number of elements where the white/dark references coincide."""
    return int(np.count_nonzero(
        np.abs(white.data.astype(np.float64) - dark.data.astype(np.float64))
        < DEGENERATE_EPS))


def calibrate(raw: HsiCube, dark: HsiCube, white: HsiCube) -> HsiCube:
    """Radiometric correction (raw - dark) / (white - dark), clamped to [0, 1].

    Elements with a degenerate reference (white == dark) become 0 and are
    counted in a warning rather than failing the whole capture.
    """
    for name, ref in (("dark", dark), ("white", white)):
        if ref.data.shape != raw.data.shape:
            raise DimensionMismatch(
                f"{name} reference shape {ref.data.shape} != raw {raw.data.shape}")
        if ref.header.wavelengths != raw.header.wavelengths:
            raise DimensionMismatch(f"{name} reference wavelength grid differs")
    denom = white.data - dark.data
    ok = np.abs(denom) >= DEGENERATE_EPS
    with np.errstate(divide="ignore", invalid="ignore"):
        out = np.where(ok, (raw.data - dark.data) / denom, np.float32(0.0))
    n_bad = int(out.size - np.count_nonzero(ok))
    if n_bad:
        logger.warning("calibrate: %d degenerate reference elements zeroed", n_bad)
    out = np.clip(out, 0.0, 1.0).astype(np.float32)
    return HsiCube(header=raw.header, data=out, provenance=PROVENANCE_CALIBRATED)


def extract_rgb(cube: HsiCube) -> np.ndarray:
    """8-bit (H, W, 3) composite from the nearest R/G/B bands."""
    wl = cube.wavelengths
    lo, hi = min(RGB_WAVELENGTHS_NM), max(RGB_WAVELENGTHS_NM)
    if wl[0] > lo or wl[-1] < hi:
        raise WavelengthOutOfRange(
            f"cube spans [{wl[0]}, {wl[-1]}] nm, needs [{lo}, {hi}] nm")
    channels = [cube.data[nearest_band(cube.header, t)] for t in RGB_WAVELENGTHS_NM]
    stacked = np.stack(channels, axis=-1)
    return np.rint(255.0 * stacked).astype(np.uint8)


def scale_bbox(box: BoundingBox, rgb_dims: tuple[int, int],
               hsi_dims: tuple[int, int]) -> BoundingBox:
    """Map an RGB-coordinate box onto the cube grid, rounding and clamping."""
    sf = ScaleFactors.from_dims(rgb_dims, hsi_dims)
    h_hsi, w_hsi = hsi_dims

    def rnd(v: float) -> int:
        return int(np.floor(v + 0.5))

    x0 = min(max(rnd(box.x0 * sf.alpha1), 0), w_hsi - 1)
    y0 = min(max(rnd(box.y0 * sf.alpha2), 0), h_hsi - 1)
    w = min(max(rnd(box.w * sf.alpha1), 1), w_hsi - x0)
    h = min(max(rnd(box.h * sf.alpha2), 1), h_hsi - y0)
    return BoundingBox(x0=x0, y0=y0, h=h, w=w)


def apply_mask(cube: HsiCube, mask: ForegroundMask) -> HsiCube:
    """Zero all bands wherever the mask is 0."""
    if mask.shape != cube.spatial_shape:
        raise DimensionMismatch(
            f"mask {mask.shape} != cube spatial {cube.spatial_shape}")
    data = cube.data * mask.bits[None, :, :].astype(np.float32)
    return HsiCube(header=cube.header, data=data, provenance=cube.provenance)


def _lerp_axis(stack: np.ndarray, out_len: int, axis: int) -> np.ndarray:
    """Corner-aligned linear resample of one spatial axis of (C, H, W)."""
    src_len = stack.shape[axis]
    if out_len == 1 or src_len == 1:
        idx = np.zeros(out_len, dtype=np.intp)
        return np.take(stack, idx, axis=axis)
    pos = np.linspace(0.0, src_len - 1.0, out_len)
    i0 = np.floor(pos).astype(np.intp)
    i0 = np.minimum(i0, src_len - 2)
    t = (pos - i0).astype(stack.dtype)
    a = np.take(stack, i0, axis=axis)
    b = np.take(stack, i0 + 1, axis=axis)
    shape = [1, 1, 1]
    shape[axis] = out_len
    t = t.reshape(shape)
    # a + t*(b-a) keeps constants bit-exact
    return a + t * (b - a)


def resize_bilinear(stack: np.ndarray, out_hw: tuple[int, int]) -> np.ndarray:
    """Corner-aligned bilinear resize of a (C, H, W) stack."""
    out = _lerp_axis(stack, out_hw[0], axis=1)
    out = _lerp_axis(out, out_hw[1], axis=2)
    return out


def crop_resize(cube: HsiCube, box: BoundingBox, out_size: int = ROI_SIZE) -> HsiCube:
    """Crop each band to ``box`` and bilinearly resample to out_size**2."""
    lines, samples = cube.spatial_shape
    if (box.x0 < 0 or box.y0 < 0 or box.x0 + box.w > samples
            or box.y0 + box.h > lines):
        raise EmptyBox(f"{box} outside {lines}x{samples} image")
    crop = cube.data[:, box.y0:box.y0 + box.h, box.x0:box.x0 + box.w]
    if (box.h, box.w) == (out_size, out_size):
        resized = crop.copy()
    else:
        resized = np.clip(resize_bilinear(crop, (out_size, out_size)), 0.0, 1.0)
    header = EnviHeader(
        samples=out_size, lines=out_size, bands=cube.header.bands,
        interleave=cube.header.interleave, data_type=4,
        wavelengths=cube.header.wavelengths,
    )
    return HsiCube(header=header, data=np.ascontiguousarray(resized, dtype=np.float32),
                   provenance=cube.provenance)


def select_band_indices(wavelengths: np.ndarray, lo: float, hi: float,
                        count: int) -> tuple[int, int]:
    """Contiguous index range [start, stop) of exactly ``count`` bands.

    Starts from the bands inside [lo, hi] and grows/shrinks symmetrically
    around the band nearest the interval midpoint; index-distance ties
    prefer the lower side.
    """
    n = len(wavelengths)
    if n < count:
        raise InsufficientBands(f"cube has {n} bands, need {count}")
    center = int(np.argmin(np.abs(wavelengths - (lo + hi) / 2.0)))
    inside = np.nonzero((wavelengths >= lo) & (wavelengths <= hi))[0]
    if len(inside):
        a, b = int(inside[0]), int(inside[-1])
    else:
        a = b = center
    while b - a + 1 < count:
        grow_left = a > 0 and (center - a <= b - center or b == n - 1)
        if grow_left:
            a -= 1
        else:
            b += 1
    while b - a + 1 > count:
        if center - a > b - center:
            a += 1
        else:
            b -= 1
    return a, b + 1


def slice_bands(cube: HsiCube, lo: float = BAND_RANGE_NM[0],
                hi: float = BAND_RANGE_NM[1],
                count: int = ROI_BAND_COUNT) -> HsiCube:
    """Restrict the cube to ``count`` contiguous bands covering [lo, hi]."""
    start, stop = select_band_indices(cube.wavelengths, lo, hi, count)
    header = EnviHeader(
        samples=cube.header.samples, lines=cube.header.lines, bands=count,
        interleave=cube.header.interleave, data_type=4,
        wavelengths=cube.header.wavelengths[start:stop],
    )
    return HsiCube(header=header,
                   data=np.ascontiguousarray(cube.data[start:stop]),
                   provenance=cube.provenance)


def roi_from_cube(cube: HsiCube) -> RoiTensor:
    return RoiTensor(values=cube.data.copy(),
                     wavelengths=cube.header.wavelengths)


def extract_roi(cube: HsiCube, box: BoundingBox, mask: ForegroundMask,
                out_size: int = ROI_SIZE, lo: float = BAND_RANGE_NM[0],
                hi: float = BAND_RANGE_NM[1],
                count: int = ROI_BAND_COUNT) -> RoiTensor:
    """Full chain from calibrated capture to VAE-ready tensor.

    The mask is re-applied after resampling (nearest threshold on the
    bilinearly resized mask) so background pixels stay exactly zero.
    """
    masked = apply_mask(cube, mask)
    sliced = slice_bands(masked, lo, hi, count)
    resized = crop_resize(sliced, box, out_size)
    mask_crop = mask.bits[box.y0:box.y0 + box.h,
                          box.x0:box.x0 + box.w].astype(np.float32)
    mask_resized = resize_bilinear(mask_crop[None], (out_size, out_size))[0]
    roi_mask = (mask_resized >= 0.5).astype(np.float32)
    values = np.ascontiguousarray(resized.data * roi_mask[None])
    return RoiTensor(values=values, wavelengths=resized.header.wavelengths)


def augment(roi: RoiTensor) -> list[RoiTensor]:
    """Dihedral-4 orbit: rotations by 0/90/180/270, then their mirror images."""
    rotations = [np.rot90(roi.values, k, axes=(1, 2)) for k in range(4)]
    variants = rotations + [np.flip(r, axis=2) for r in rotations]
    return [RoiTensor(values=np.ascontiguousarray(v),
                      wavelengths=roi.wavelengths) for v in variants]


def load_annotations(path: str | Path) -> list[RoiAnnotation]:
    """Annotation sidecar: JSON list of {id, bbox: [x0, y0, h, w], mask_path}."""
    entries = json.loads(Path(path).read_text())
    out = []
    for entry in entries:
        x0, y0, h, w = entry["bbox"]
        out.append(RoiAnnotation(
            id=str(entry["id"]),
            bbox=BoundingBox(x0=int(x0), y0=int(y0), h=int(h), w=int(w)),
            mask_path=str(entry["mask_path"]),
        ))
    return out
