"""Patch-based reflectance analysis for choosing the working band range.

Mean spectra are compared between a normal-skin patch and a split patch;
the recommended range is the fixed-width window maximizing the trapezoidal
integral of the absolute difference curve.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import GridMismatch, PatchOutOfBounds, WidthTooLarge
from .hsi_io import HsiCube

DEFAULT_PATCH_SIZE = 5


@dataclass(frozen=True)
class PatchSpec:
    x: int  # column of the patch origin
    y: int  # row of the patch origin
    size: int = DEFAULT_PATCH_SIZE


@dataclass(frozen=True, eq=False)
class Spectrum:
    wavelengths: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "wavelengths",
                           np.asarray(self.wavelengths, dtype=np.float64))
        object.__setattr__(self, "values",
                           np.asarray(self.values, dtype=np.float64))
        if self.wavelengths.shape != self.values.shape:
            raise ValueError("wavelengths and values must have equal length")


def patch_mean_spectrum(cube: HsiCube, patch: PatchSpec) -> Spectrum:
    """Per-band arithmetic mean over a size x size pixel patch."""
    lines, samples = cube.spatial_shape
    if (patch.x < 0 or patch.y < 0 or patch.size < 1
            or patch.x + patch.size > samples or patch.y + patch.size > lines):
        raise PatchOutOfBounds(f"{patch} outside {lines}x{samples} image")
    block = cube.data[:, patch.y:patch.y + patch.size,
                      patch.x:patch.x + patch.size]
    return Spectrum(wavelengths=cube.wavelengths,
                    values=block.mean(axis=(1, 2), dtype=np.float64))


def reflectance_difference(a: Spectrum, b: Spectrum) -> Spectrum:
    """Per-wavelength absolute difference |a - b|."""
    if not np.array_equal(a.wavelengths, b.wavelengths):
        raise GridMismatch("spectra are on different wavelength grids")
    return Spectrum(wavelengths=a.wavelengths, values=np.abs(a.values - b.values))


def recommend_range(diff: Spectrum, width_nm: float) -> tuple[float, float]:
    """Window of the given width with maximal integrated difference.

    Candidate windows start on grid wavelengths; ties go to the lowest
    start. The trapezoidal integral is taken over the grid points falling
    inside each window.
    """
    wl = diff.wavelengths
    if wl.size == 0:
        raise WidthTooLarge("empty difference spectrum")
    span = wl[-1] - wl[0]
    if width_nm > span:
        raise WidthTooLarge(f"width {width_nm} nm exceeds spanned range {span} nm")
    eps = 1e-9 * max(1.0, abs(wl[-1]))
    best_lo = None
    best_score = -np.inf
    for start in wl:
        if start + width_nm > wl[-1] + eps:
            break
        sel = (wl >= start - eps) & (wl <= start + width_nm + eps)
        score = np.trapz(diff.values[sel], wl[sel])
        if score > best_score:
            best_score = score
            best_lo = float(start)
    return best_lo, best_lo + width_nm
