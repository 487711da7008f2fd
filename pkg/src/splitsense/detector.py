"""Reconstruction-loss scoring, F1-optimal thresholding and reporting.

Scoring is deterministic by default (z = mu, no sampled noise) so that a
chosen threshold stays meaningful. The threshold sweep considers every
observed loss plus the midpoints between adjacent sorted losses, classifies
with the strict rule loss > theta => anomalous, and keeps the smallest
theta among F1 ties.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .band_analysis import Spectrum
from .errors import EmptyMask, OneClassOnly, ShapeMismatch
from .preprocess import RoiTensor
from .trainer import Checkpoint
from .vae import decode, encode, reparameterize

LABEL_NORMAL = "normal"
LABEL_ANOMALOUS = "anomalous"

STATUS_NORMAL = "normal"
STATUS_ANOMALOUS = "anomalous"


@dataclass(frozen=True)
class ScoreRecord:
    id: str
    recon_loss: float
    regularity: float | None = None
    label: str | None = None
    status: str | None = None


@dataclass(frozen=True)
class EvalMetrics:
    precision: float | None
    recall: float | None
    f1: float | None
    accuracy: float
    tp: int
    fp: int
    tn: int
    fn: int


@dataclass(frozen=True)
class ThresholdReport:
    theta: float
    f1_at_theta: float
    curve: tuple[tuple[float, float, float, float], ...]  # theta, P, R, F1
    calibration_ids: tuple[str, ...]
    validation_ids: tuple[str, ...] = ()
    validation_metrics: EvalMetrics | None = None


@dataclass(frozen=True, eq=False)
class Heatmap:
    error: np.ndarray      # (H, W) mean-over-bands |x - xhat|
    highlight: np.ndarray  # bool (H, W)
    percentile: float


def _roi_values(roi) -> np.ndarray:
    return roi.values if isinstance(roi, RoiTensor) else np.asarray(roi)


def reconstruct(checkpoint: Checkpoint, batch: np.ndarray,
                eps_mode: str = "zero", seed: int = 0) -> np.ndarray:
    """Forward pass through the checkpointed model; (N, C, H, W) in/out."""
    params = checkpoint.params
    mu, logvar = encode(params, batch)
    if eps_mode == "zero":
        eps = np.zeros_like(mu)
    elif eps_mode == "seeded":
        eps = np.random.default_rng(seed).standard_normal(
            mu.shape).astype(mu.dtype)
    else:
        raise ValueError(f"unknown eps_mode {eps_mode!r}")
    return decode(params, reparameterize(mu, logvar, eps))


def score(checkpoint: Checkpoint, roi, roi_id: str = "",
          label: str | None = None, eps_mode: str = "zero",
          seed: int = 0) -> ScoreRecord:
    """Summed-L1 reconstruction loss of a single ROI."""
    x = _roi_values(roi)[None]
    cfg = checkpoint.vae_config
    if x.shape[1:] != (cfg.in_channels, cfg.spatial, cfg.spatial):
        raise ShapeMismatch(
            f"roi shape {x.shape[1:]} does not match checkpoint "
            f"({cfg.in_channels}, {cfg.spatial}, {cfg.spatial})")
    xhat = reconstruct(checkpoint, x, eps_mode, seed)
    loss = float(np.abs(x - xhat).sum(dtype=np.float64))
    return ScoreRecord(id=roi_id, recon_loss=loss, label=label)


def score_many(checkpoint: Checkpoint, items, eps_mode: str = "zero",
               seed: int = 0, batch_size: int = 8) -> list[ScoreRecord]:
    """Score (id, roi, label) triples in deterministic batches."""
    items = list(items)
    records: list[ScoreRecord] = []
    for start in range(0, len(items), batch_size):
        chunk = items[start:start + batch_size]
        x = np.stack([_roi_values(roi) for _, roi, _ in chunk])
        xhat = reconstruct(checkpoint, x, eps_mode, seed)
        losses = np.abs(x - xhat).sum(axis=(1, 2, 3), dtype=np.float64)
        for (rid, _, label), loss in zip(chunk, losses):
            records.append(ScoreRecord(id=rid, recon_loss=float(loss),
                                       label=label))
    return records


def regularity(records: list[ScoreRecord]) -> list[ScoreRecord]:
    """Min-max normalize losses over the batch; degenerate batches get 0."""
    if not records:
        raise ValueError("regularity needs at least one record")
    losses = np.array([r.recon_loss for r in records])
    lo, hi = float(losses.min()), float(losses.max())
    span = hi - lo
    out = []
    for r in records:
        value = 0.0 if span == 0.0 else (r.recon_loss - lo) / span
        out.append(replace(r, regularity=value))
    return out


def classify(record: ScoreRecord, theta: float) -> ScoreRecord:
    """Anomalous iff loss strictly exceeds theta."""
    status = STATUS_ANOMALOUS if record.recon_loss > theta else STATUS_NORMAL
    return replace(record, status=status)


def _prf(tp: int, fp: int, fn: int) -> tuple[float, float, float]:
    precision = tp / (tp + fp) if tp + fp else 0.0
    recall = tp / (tp + fn) if tp + fn else 0.0
    f1 = (2 * precision * recall / (precision + recall)
          if precision + recall else 0.0)
    return precision, recall, f1


def select_threshold(records: list[ScoreRecord]) -> ThresholdReport:
    """Sweep every observed loss and adjacent midpoint, maximize F1.

    Anomalous is the positive class; precision with an empty prediction
    set counts as 0; ties keep the smallest theta.
    """
    labels = {r.label for r in records}
    if not {LABEL_NORMAL, LABEL_ANOMALOUS} <= labels:
        raise OneClassOnly(f"need both labels, got {sorted(map(str, labels))}")
    losses = np.array([r.recon_loss for r in records])
    is_anom = np.array([r.label == LABEL_ANOMALOUS for r in records])
    uniq = np.unique(losses)
    candidates = list(uniq) + [(a + b) / 2 for a, b in zip(uniq, uniq[1:])]
    candidates.sort()
    curve = []
    best = None
    for theta in candidates:
        pred = losses > theta
        tp = int(np.count_nonzero(pred & is_anom))
        fp = int(np.count_nonzero(pred & ~is_anom))
        fn = int(np.count_nonzero(~pred & is_anom))
        precision, recall, f1 = _prf(tp, fp, fn)
        curve.append((float(theta), precision, recall, f1))
        if best is None or f1 > best[1]:
            best = (float(theta), f1)
    return ThresholdReport(theta=best[0], f1_at_theta=best[1],
                           curve=tuple(curve),
                           calibration_ids=tuple(r.id for r in records))


def evaluate(records: list[ScoreRecord], theta: float) -> EvalMetrics:
    """Standard metrics at a fixed threshold, anomalous = positive.

    With one-class input, precision/recall/F1 are undefined and reported
    as None; accuracy is still meaningful.
    """
    tp = fp = tn = fn = 0
    for r in records:
        pred_anom = r.recon_loss > theta
        if r.label == LABEL_ANOMALOUS:
            tp += pred_anom
            fn += not pred_anom
        else:
            fp += pred_anom
            tn += not pred_anom
    accuracy = (tp + tn) / len(records) if records else 0.0
    if tp + fn == 0 or fp + tn == 0:
        return EvalMetrics(None, None, None, accuracy, tp, fp, tn, fn)
    precision, recall, f1 = _prf(tp, fp, fn)
    return EvalMetrics(precision, recall, f1, accuracy, tp, fp, tn, fn)


def split_for_threshold(records: list[ScoreRecord],
                        seed: int) -> tuple[list[ScoreRecord], list[ScoreRecord]]:
    """Stratified halves of a labeled score set (calibration, validation)."""
    calib: list[ScoreRecord] = []
    valid: list[ScoreRecord] = []
    rng = np.random.default_rng(seed)
    for label in (LABEL_NORMAL, LABEL_ANOMALOUS):
        group = sorted((r for r in records if r.label == label),
                       key=lambda r: r.id)
        order = rng.permutation(len(group))
        half = len(group) // 2
        calib.extend(group[i] for i in order[:half])
        valid.extend(group[i] for i in order[half:])
    calib.sort(key=lambda r: r.id)
    valid.sort(key=lambda r: r.id)
    return calib, valid


def threshold_report(records: list[ScoreRecord], seed: int) -> ThresholdReport:
    """Select theta on a stratified calibration half, validate on the rest."""
    calib, valid = split_for_threshold(records, seed)
    report = select_threshold(calib)
    metrics = evaluate(valid, report.theta) if valid else None
    return ThresholdReport(
        theta=report.theta, f1_at_theta=report.f1_at_theta, curve=report.curve,
        calibration_ids=report.calibration_ids,
        validation_ids=tuple(r.id for r in valid),
        validation_metrics=metrics,
    )


def heatmap(x, xhat, fruit_mask: np.ndarray,
            percentile: float = 95.0) -> Heatmap:
    """Per-pixel mean-over-bands L1 error with a percentile highlight.

    The highlight keeps in-mask pixels whose error strictly exceeds the
    given percentile of in-mask errors; percentile 0 selects the whole mask.
    """
    xv = _roi_values(x)
    xh = _roi_values(xhat)
    if xv.shape != xh.shape:
        raise ShapeMismatch(f"x {xv.shape} vs xhat {xh.shape}")
    mask = np.asarray(fruit_mask, dtype=bool)
    if mask.shape != xv.shape[1:]:
        raise ShapeMismatch(f"mask {mask.shape} vs spatial {xv.shape[1:]}")
    if not mask.any():
        raise EmptyMask("fruit mask has no foreground pixels")
    error = np.abs(xv.astype(np.float32) - xh.astype(np.float32)).mean(axis=0)
    if percentile == 0:
        highlight = mask.copy()
    else:
        cut = np.percentile(error[mask], percentile)
        highlight = mask & (error > cut)
    return Heatmap(error=error, highlight=highlight, percentile=percentile)


def mean_reflectance_report(samples, wavelengths) -> dict:
    """Per-label mean foreground spectra of originals and reconstructions.

    ``samples`` yields (x, xhat, label); foreground is any-band-nonzero in
    the original. Returns {label: (ground_truth, reconstruction)} Spectrums.
    """
    wavelengths = np.asarray(wavelengths, dtype=np.float64)
    sums: dict[str, list] = {}
    for x, xhat, label in samples:
        xv = _roi_values(x)
        xh = _roi_values(xhat)
        fg = xv.any(axis=0)
        if not fg.any():
            continue
        acc = sums.setdefault(label, [0.0, 0.0, 0])
        acc[0] = acc[0] + xv[:, fg].sum(axis=1, dtype=np.float64)
        acc[1] = acc[1] + xh[:, fg].sum(axis=1, dtype=np.float64)
        acc[2] += int(fg.sum())
    out = {}
    for label, (gt_sum, rec_sum, count) in sums.items():
        out[label] = (Spectrum(wavelengths, gt_sum / count),
                      Spectrum(wavelengths, rec_sum / count))
    return out


# --- artifact serialization -------------------------------------------------

def scores_csv(records: list[ScoreRecord]) -> str:
    lines = ["id,recon_loss,regularity,label,status"]
    for r in records:
        reg = "" if r.regularity is None else repr(r.regularity)
        lines.append(f"{r.id},{r.recon_loss!r},{reg},{r.label or ''},"
                     f"{r.status or ''}")
    return "\n".join(lines) + "\n"


def parse_scores_csv(text: str) -> list[ScoreRecord]:
    lines = [ln for ln in text.splitlines() if ln.strip()]
    records = []
    for line in lines[1:]:
        rid, loss, reg, label, status = line.split(",")
        records.append(ScoreRecord(
            id=rid, recon_loss=float(loss),
            regularity=float(reg) if reg else None,
            label=label or None, status=status or None))
    return records


def report_json(report: ThresholdReport) -> str:
    payload = {
        "theta": report.theta,
        "f1_at_theta": report.f1_at_theta,
        "curve": [list(row) for row in report.curve],
        "calibration_ids": list(report.calibration_ids),
        "validation_ids": list(report.validation_ids),
        "validation_metrics": (None if report.validation_metrics is None else
                               vars(report.validation_metrics)),
    }
    return json.dumps(payload, indent=1, sort_keys=True) + "\n"


def load_report_json(path: str | Path) -> ThresholdReport:
    payload = json.loads(Path(path).read_text())
    metrics = payload.get("validation_metrics")
    return ThresholdReport(
        theta=payload["theta"],
        f1_at_theta=payload["f1_at_theta"],
        curve=tuple(tuple(row) for row in payload["curve"]),
        calibration_ids=tuple(payload["calibration_ids"]),
        validation_ids=tuple(payload["validation_ids"]),
        validation_metrics=EvalMetrics(**metrics) if metrics else None,
    )
