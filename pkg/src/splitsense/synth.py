"""Deterministic synthetic hyperspectral tomato generator.

Each sample is a disk-shaped fruit with smooth radial shading modulating a
ripe-tomato-like spectral profile (dark below the red edge, bright above),
over a dim flat background, plus Gaussian noise. Anomalous samples add a
curved crack stroke whose reflectance is elevated inside a fixed wavelength
window. The normal/anomalous pair for one per-sample seed shares geometry,
profile and noise bit-exactly, differing only by the crack.

All randomness flows through counter-based splitmix64 streams keyed by
(dataset seed, sample index, purpose), so generation is order-independent
and reproducible across runs.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from . import rng
from .hsi_io import (
    PROVENANCE_CALIBRATED,
    EnviHeader,
    HsiCube,
    write_cube_files,
)
from .pgm import write_pgm
from .preprocess import BoundingBox, ForegroundMask

LABEL_NORMAL = "normal"
LABEL_ANOMALOUS = "anomalous"

_GEOMETRY = 1
_NOISE = 2
_CRACK = 3


@dataclass(frozen=True)
class SynthConfig:
    image_size: int = 256
    bands: int = 448
    band_start_nm: float = 400.0
    band_end_nm: float = 1000.0
    fruit_radius_frac: tuple[float, float] = (0.27, 0.37)  # of image size
    profile_low: float = 0.08
    profile_high: float = 0.55
    profile_edge_nm: float = 600.0
    profile_edge_width_nm: float = 28.0
    shading_strength: float = 0.35
    background_level: float = 0.03
    crack_width_frac: float = 0.06      # of fruit radius
    crack_offset_frac: float = 0.3      # max chord offset from center
    crack_curvature: float = 0.22
    delta_lo_nm: float = 520.0
    delta_hi_nm: float = 600.0
    delta_peak_nm: float = 560.0
    delta_height: float = 0.25
    noise_sigma: float = 0.01
    seed: int = 0

    def wavelengths(self) -> np.ndarray:
        return np.linspace(self.band_start_nm, self.band_end_nm, self.bands)

    def header(self, interleave: str = "bsq") -> EnviHeader:
        return EnviHeader(
            samples=self.image_size, lines=self.image_size, bands=self.bands,
            interleave=interleave, data_type=4,
            wavelengths=tuple(self.wavelengths()), units="reflectance",
        )


@dataclass(frozen=True)
class SynthSample:
    cube: HsiCube
    mask: ForegroundMask
    bbox: BoundingBox
    label: str
    crack_mask: np.ndarray | None  # uint8 (H, W), anomalous only


def spectral_profile(config: SynthConfig, wl: np.ndarray, low: float,
                     high: float, edge_nm: float, width_nm: float) -> np.ndarray:
    with np.errstate(over="ignore"):
        s = 1.0 / (1.0 + np.exp(-(wl - edge_nm) / width_nm))
    return low + (high - low) * s


def crack_delta_profile(config: SynthConfig, wl: np.ndarray) -> np.ndarray:
    """Raised-cosine reflectance bump over [delta_lo, delta_hi], peaked at
    delta_peak; zero outside."""
    lo, hi, peak = config.delta_lo_nm, config.delta_hi_nm, config.delta_peak_nm
    out = np.zeros_like(wl)
    rising = (wl >= lo) & (wl <= peak)
    falling = (wl > peak) & (wl <= hi)
    if peak > lo:
        out[rising] = np.cos(np.pi * (peak - wl[rising]) / (2 * (peak - lo))) ** 2
    if hi > peak:
        out[falling] = np.cos(np.pi * (wl[falling] - peak) / (2 * (hi - peak))) ** 2
    return config.delta_height * out


def _bezier_points(p0, p1, ctrl, n: int) -> np.ndarray:
    t = np.linspace(0.0, 1.0, n)[:, None]
    return (1 - t) ** 2 * p0 + 2 * t * (1 - t) * ctrl + t ** 2 * p1


def _rasterize_crack(size: int, cx: float, cy: float, radius: float,
                     width: float, curvature: float, u: np.ndarray) -> np.ndarray:
    """Boolean crack stroke: quadratic Bezier chord across the fruit disk."""
    angle = 2 * np.pi * u[0]
    offset = (2 * u[1] - 1)  # fraction of max offset, sign included
    direction = np.array([np.cos(angle), np.sin(angle)])
    perp = np.array([-direction[1], direction[0]])
    # chord at distance d from the center, trimmed slightly inside the rim
    d = offset * radius
    half = np.sqrt(max((0.92 * radius) ** 2 - d ** 2, 1.0))
    center = np.array([cx, cy]) + perp * d
    p0 = center - direction * half
    p1 = center + direction * half
    bend = (1.0 if u[2] < 0.5 else -1.0) * (0.5 + 0.5 * u[3])
    ctrl = (p0 + p1) / 2 + perp * bend * curvature * 2 * half
    pts = _bezier_points(p0, p1, ctrl, int(8 * half) + 8)
    yy, xx = np.mgrid[0:size, 0:size]
    crack = np.zeros((size, size), dtype=bool)
    r = max(width / 2.0, 0.5)
    # paint a disk around each sampled point; strokes are short enough that
    # the quadratic loop stays cheap
    for px, py in pts:
        x0, x1 = int(max(px - r - 1, 0)), int(min(px + r + 2, size))
        y0, y1 = int(max(py - r - 1, 0)), int(min(py + r + 2, size))
        if x0 >= x1 or y0 >= y1:
            continue
        sub = (xx[y0:y1, x0:x1] - px) ** 2 + (yy[y0:y1, x0:x1] - py) ** 2
        crack[y0:y1, x0:x1] |= sub <= r * r
    return crack


def gen_sample(config: SynthConfig, label: str, sample_seed: int) -> SynthSample:
    """One synthetic capture, deterministic per (sample_seed, label)."""
    if label not in (LABEL_NORMAL, LABEL_ANOMALOUS):
        raise ValueError(f"unknown label {label!r}")
    size = config.image_size
    wl = config.wavelengths()

    geo = rng.uniform_stream(rng.derive_key(sample_seed, _GEOMETRY), 8)
    rmin, rmax = (f * size for f in config.fruit_radius_frac)
    radius = rmin + (rmax - rmin) * geo[0]
    cx = size / 2 + (geo[1] - 0.5) * 0.1 * size
    cy = size / 2 + (geo[2] - 0.5) * 0.1 * size
    shading = config.shading_strength * (0.8 + 0.4 * geo[3])
    low = config.profile_low * (0.85 + 0.3 * geo[4])
    high = config.profile_high * (0.9 + 0.2 * geo[5])
    edge = config.profile_edge_nm + (geo[6] - 0.5) * 20.0
    width = config.profile_edge_width_nm * (0.9 + 0.2 * geo[7])

    yy, xx = np.mgrid[0:size, 0:size]
    rr = np.sqrt((xx - cx) ** 2 + (yy - cy) ** 2)
    fruit = rr <= radius
    shade = np.where(fruit, 1.0 - shading * (rr / radius) ** 2, 0.0)

    profile = spectral_profile(config, wl, low, high, edge, width)
    cube = profile[:, None, None] * shade[None, :, :]
    cube += config.background_level * (~fruit)[None, :, :]

    crack_mask = None
    if label == LABEL_ANOMALOUS:
        cu = rng.uniform_stream(rng.derive_key(sample_seed, _CRACK), 4)
        stroke = _rasterize_crack(size, cx, cy, radius,
                                  config.crack_width_frac * radius,
                                  config.crack_curvature, cu)
        stroke &= fruit
        cube += crack_delta_profile(config, wl)[:, None, None] * stroke[None, :, :]
        crack_mask = stroke.astype(np.uint8)

    n = cube.size
    noise = rng.normal_stream(rng.derive_key(sample_seed, _NOISE), n)
    cube += config.noise_sigma * noise.reshape(cube.shape)
    cube = np.clip(cube, 0.0, 1.0).astype(np.float32)

    cols = np.nonzero(fruit.any(axis=0))[0]
    rows = np.nonzero(fruit.any(axis=1))[0]
    bbox = BoundingBox(x0=int(cols[0]), y0=int(rows[0]),
                       h=int(rows[-1] - rows[0] + 1),
                       w=int(cols[-1] - cols[0] + 1))
    return SynthSample(
        cube=HsiCube(header=config.header(), data=cube,
                     provenance=PROVENANCE_CALIBRATED),
        mask=ForegroundMask(fruit.astype(np.uint8)),
        bbox=bbox,
        label=label,
        crack_mask=crack_mask,
    )


def matched_patches(sample: SynthSample, size: int = 5):
    """Shading-matched patch pair for an anomalous sample.

    Returns (crack_patch, normal_patch) PatchSpecs at the same radius from
    the fruit center, so the radial shading cancels and the patch spectra
    differ only by the crack elevation (plus noise).
    """
    from .band_analysis import PatchSpec

    if sample.crack_mask is None:
        raise ValueError("matched_patches needs an anomalous sample")
    fruit = sample.mask.bits.astype(bool)
    crack = sample.crack_mask.astype(bool)
    fy, fx = (c.mean() for c in np.nonzero(fruit))
    ys, xs = np.nonzero(crack)
    # anchor at a mid-radius crack pixel: far enough from the center that
    # rotated candidates separate from the stroke, far enough from the rim
    # that the patches stay on the fruit
    fruit_r = np.sqrt(fruit.sum() / np.pi)
    r_px = np.sqrt((ys - fy) ** 2 + (xs - fx) ** 2)
    k = np.argmin(np.abs(r_px - 0.55 * fruit_r))
    cy, cx = float(ys[k]), float(xs[k])
    half = size // 2
    crack_patch = PatchSpec(x=int(cx) - half, y=int(cy) - half, size=size)
    dy, dx = cy - fy, cx - fx
    for angle_deg in range(30, 360, 15):
        a = np.deg2rad(angle_deg)
        px = fx + dx * np.cos(a) - dy * np.sin(a)
        py = fy + dx * np.sin(a) + dy * np.cos(a)
        y0, x0 = int(py) - half, int(px) - half
        region_ok = (
            0 <= y0 and 0 <= x0
            and y0 + size <= fruit.shape[0] and x0 + size <= fruit.shape[1]
            and fruit[y0:y0 + size, x0:x0 + size].all()
            and not crack[max(y0 - 2, 0):y0 + size + 2,
                          max(x0 - 2, 0):x0 + size + 2].any()
        )
        if region_ok:
            return crack_patch, PatchSpec(x=x0, y=y0, size=size)
    raise RuntimeError("no crack-free matched patch found")


def sample_ids(n_normal: int, n_anomalous: int) -> list[tuple[str, str]]:
    """Stable (id, label) pairs: normals first, then anomalous."""
    labels = [LABEL_NORMAL] * n_normal + [LABEL_ANOMALOUS] * n_anomalous
    return [(f"{i:04d}_{label}", label) for i, label in enumerate(labels)]


def gen_dataset(config: SynthConfig, n_normal: int, n_anomalous: int,
                out_dir: str | Path) -> dict:
    """Write cubes, masks, annotations and a manifest; returns the manifest."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    annotations = []
    entries = []
    for index, (sample_id, label) in enumerate(sample_ids(n_normal, n_anomalous)):
        sample_seed = rng.derive_key(config.seed, index)
        sample = gen_sample(config, label, sample_seed)
        hdr_path, raw_path = write_cube_files(sample.cube, out_dir / sample_id)
        mask_path = out_dir / f"{sample_id}_mask.pgm"
        sample.mask.to_pgm(mask_path)
        entry = {
            "id": sample_id,
            "label": label,
            "seed": sample_seed,
            "hdr": hdr_path.name,
            "raw": raw_path.name,
            "mask": mask_path.name,
        }
        if sample.crack_mask is not None:
            crack_path = out_dir / f"{sample_id}_crack.pgm"
            write_pgm(crack_path, sample.crack_mask * np.uint8(255))
            entry["crack"] = crack_path.name
        entries.append(entry)
        box = sample.bbox
        annotations.append({
            "id": sample_id,
            "bbox": [box.x0, box.y0, box.h, box.w],
            "mask_path": mask_path.name,
        })
    manifest = {"config": asdict(config), "samples": entries}
    (out_dir / "annotations.json").write_text(
        json.dumps(annotations, indent=1, sort_keys=True) + "\n")
    (out_dir / "manifest.json").write_text(
        json.dumps(manifest, indent=1, sort_keys=True) + "\n")
    return manifest
