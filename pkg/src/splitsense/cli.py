"""Command-line front end: synth, calibrate, extract-roi, bands, train,
score, threshold and report subcommands.

Every subcommand is a thin adapter over the library modules; artifacts are
CSV/JSON/PGM/ENVI files. Exit codes: 0 success, 1 usage error, 2 data error.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import band_analysis, detector, preprocess, synth, trainer
from .errors import SplitsenseError
from .hsi_io import EnviHeader, HsiCube, read_cube_file, write_cube_files
from .pgm import write_pgm
from .preprocess import ForegroundMask, RoiTensor, roi_from_cube

logger = logging.getLogger("splitsense")

USAGE_EXIT = 1
DATA_EXIT = 2


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise SystemExit(USAGE_EXIT)


def _build_parser() -> _Parser:
    parser = _Parser(prog="splitsense",
                     description="Hyperspectral tomato split detection")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic dataset")
    p.add_argument("--normal", type=int, required=True)
    p.add_argument("--anomalous", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.add_argument("--image-size", type=int, default=256)
    p.add_argument("--bands", type=int, default=448)
    p.add_argument("--delta-peak", type=float, default=560.0)
    p.add_argument("--noise-sigma", type=float, default=0.01)

    p = sub.add_parser("calibrate", help="white/dark reference correction")
    p.add_argument("--raw", required=True)
    p.add_argument("--dark", required=True)
    p.add_argument("--white", required=True)
    p.add_argument("--out", required=True, help="output stem (.hdr/.raw)")

    p = sub.add_parser("extract-roi", help="annotations to 16-band ROI cubes")
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--data", help="dataset dir with manifest.json")
    src.add_argument("--cube", help="single capture .hdr path")
    p.add_argument("--annotations", help="sidecar JSON (single-cube mode)")
    p.add_argument("--out", required=True)
    p.add_argument("--size", type=int, default=preprocess.ROI_SIZE)
    p.add_argument("--lo", type=float, default=preprocess.BAND_RANGE_NM[0])
    p.add_argument("--hi", type=float, default=preprocess.BAND_RANGE_NM[1])
    p.add_argument("--count", type=int, default=preprocess.ROI_BAND_COUNT)
    p.add_argument("--augment", action="store_true",
                   help="write the 8-fold dihedral orbit per ROI")

    p = sub.add_parser("bands", help="reflectance analysis")
    p.add_argument("action", choices=["analyze"])
    p.add_argument("--cube", required=True)
    p.add_argument("--normal-patch", required=True, metavar="X,Y,SIZE")
    p.add_argument("--anomalous-patch", required=True, metavar="X,Y,SIZE")
    p.add_argument("--width", type=float, default=20.0)
    p.add_argument("--csv", required=True)

    p = sub.add_parser("train", help="train the VAE on normal ROIs")
    p.add_argument("--rois", required=True, help="ROI index.json")
    p.add_argument("--out", required=True, help="checkpoint directory")
    p.add_argument("--config", help="TrainConfig JSON file")
    p.add_argument("--epochs", type=int)
    p.add_argument("--batch-size", type=int)
    p.add_argument("--lr", type=float)
    p.add_argument("--beta-max", type=float)
    p.add_argument("--latent", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--ratio", type=float, default=0.8)
    p.add_argument("--split-seed", type=int, default=0)

    p = sub.add_parser("score", help="score ROIs with a checkpoint")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--rois", required=True)
    p.add_argument("--split", help="split.json restricting ids")
    p.add_argument("--subset", choices=["train", "test", "all"], default="all")
    p.add_argument("--out", required=True)

    p = sub.add_parser("threshold", help="F1-optimal threshold from scores")
    p.add_argument("--scores", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)

    p = sub.add_parser("report", help="heatmaps and reflectance comparison")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--rois", required=True)
    p.add_argument("--scores", required=True)
    p.add_argument("--threshold", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--percentile", type=float, default=95.0)
    p.add_argument("--limit", type=int, default=0,
                   help="max heatmaps to write (0 = all)")
    return parser


def _parse_patch(text: str) -> band_analysis.PatchSpec:
    x, y, size = (int(v) for v in text.split(","))
    return band_analysis.PatchSpec(x=x, y=y, size=size)


def _load_roi_index(path: Path) -> list[dict]:
    return json.loads(path.read_text())


def _read_roi(index_dir: Path, entry: dict) -> RoiTensor:
    return roi_from_cube(read_cube_file(index_dir / entry["hdr"]))


def _cmd_synth(args) -> int:
    cfg = synth.SynthConfig(image_size=args.image_size, bands=args.bands,
                            delta_peak_nm=args.delta_peak,
                            noise_sigma=args.noise_sigma, seed=args.seed)
    manifest = synth.gen_dataset(cfg, args.normal, args.anomalous, args.out)
    print(json.dumps({"out": str(args.out),
                      "samples": len(manifest["samples"])}))
    return 0


def _cmd_calibrate(args) -> int:
    raw = read_cube_file(args.raw)
    dark = read_cube_file(args.dark)
    white = read_cube_file(args.white)
    cube = preprocess.calibrate(raw, dark, white)
    hdr, _ = write_cube_files(cube, args.out)
    print(json.dumps({"out": str(hdr)}))
    return 0


def _extract_one(cube_path: Path, ann: preprocess.RoiAnnotation, base: Path,
                 args, label: str | None, out_dir: Path,
                 index: list[dict]) -> None:
    cube = read_cube_file(cube_path)
    mask = ForegroundMask.from_pgm(base / ann.mask_path)
    box = preprocess.scale_bbox(ann.bbox, mask.shape, cube.spatial_shape)
    roi = preprocess.extract_roi(cube, box, mask, args.size, args.lo,
                                 args.hi, args.count)
    variants = preprocess.augment(roi) if args.augment else [roi]
    for k, variant in enumerate(variants):
        name = ann.id if len(variants) == 1 else f"{ann.id}_aug{k}"
        stem = out_dir / f"{name}_roi"
        header = EnviHeader(
            samples=variant.shape[2], lines=variant.shape[1],
            bands=variant.shape[0], interleave="bsq", data_type=4,
            wavelengths=variant.wavelengths, units="reflectance")
        cube_out = HsiCube(header=header, data=variant.values,
                           provenance="calibrated")
        hdr_path, _ = write_cube_files(cube_out, stem)
        entry = {"id": name, "hdr": hdr_path.name}
        if label is not None:
            entry["label"] = label
        index.append(entry)


def _cmd_extract_roi(args) -> int:
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    index: list[dict] = []
    if args.data:
        base = Path(args.data)
        manifest = json.loads((base / "manifest.json").read_text())
        annotations = {a["id"]: a for a in
                       json.loads((base / "annotations.json").read_text())}
        for entry in manifest["samples"]:
            ann_raw = annotations[entry["id"]]
            x0, y0, h, w = ann_raw["bbox"]
            ann = preprocess.RoiAnnotation(
                id=entry["id"],
                bbox=preprocess.BoundingBox(x0=x0, y0=y0, h=h, w=w),
                mask_path=ann_raw["mask_path"])
            _extract_one(base / entry["hdr"], ann, base, args,
                         entry.get("label"), out_dir, index)
    else:
        if not args.annotations:
            print("extract-roi: --annotations is required with --cube",
                  file=sys.stderr)
            return USAGE_EXIT
        base = Path(args.annotations).parent
        for ann in preprocess.load_annotations(args.annotations):
            _extract_one(Path(args.cube), ann, base, args, None, out_dir,
                         index)
    (out_dir / "index.json").write_text(
        json.dumps(index, indent=1, sort_keys=True) + "\n")
    print(json.dumps({"out": str(out_dir), "rois": len(index)}))
    return 0


def _cmd_bands(args) -> int:
    cube = read_cube_file(args.cube)
    normal = band_analysis.patch_mean_spectrum(cube, _parse_patch(args.normal_patch))
    anomalous = band_analysis.patch_mean_spectrum(
        cube, _parse_patch(args.anomalous_patch))
    diff = band_analysis.reflectance_difference(anomalous, normal)
    lo, hi = band_analysis.recommend_range(diff, args.width)
    lines = ["wavelength,mean_normal,mean_anomalous,abs_diff"]
    for wl, mn, ma, d in zip(diff.wavelengths, normal.values,
                             anomalous.values, diff.values):
        lines.append(f"{wl!r},{mn!r},{ma!r},{d!r}")
    Path(args.csv).write_text("\n".join(lines) + "\n")
    print(json.dumps({"lo": lo, "hi": hi, "width": args.width}))
    return 0


def _cmd_train(args) -> int:
    index_path = Path(args.rois)
    index = _load_roi_index(index_path)
    cfg = (trainer.TrainConfig.from_json(Path(args.config).read_text())
           if args.config else trainer.TrainConfig())
    overrides = {}
    for field_name, value in (("epochs", args.epochs),
                              ("batch_size", args.batch_size),
                              ("learning_rate", args.lr),
                              ("beta_max", args.beta_max),
                              ("latent_dim", args.latent),
                              ("seed", args.seed)):
        if value is not None:
            overrides[field_name] = value
    if overrides:
        cfg = trainer.TrainConfig(**{**vars(cfg), **overrides})

    labeled = [(e["id"], e.get("label", trainer.LABEL_NORMAL)) for e in index]
    split = trainer.split_dataset(labeled, args.ratio, args.split_seed)
    by_id = {e["id"]: e for e in index}
    rois = [_read_roi(index_path.parent, by_id[i]) for i in split.train_ids]
    ckpt = trainer.train(cfg, rois)
    out_dir = Path(args.out)
    trainer.save_checkpoint(ckpt, out_dir)
    (out_dir / "split.json").write_text(json.dumps(
        {"train": list(split.train_ids), "test": list(split.test_ids),
         "ratio": split.ratio, "seed": split.seed},
        indent=1, sort_keys=True) + "\n")
    (out_dir / "loss.csv").write_text(trainer.history_csv(ckpt.history))
    print(json.dumps({"out": str(out_dir), "epochs": ckpt.epoch,
                      "train_rois": len(rois)}))
    return 0


def _cmd_score(args) -> int:
    ckpt = trainer.load_checkpoint(args.checkpoint)
    index_path = Path(args.rois)
    index = _load_roi_index(index_path)
    if args.split:
        split = json.loads(Path(args.split).read_text())
        if args.subset == "all":
            keep = set(split["train"]) | set(split["test"])
        else:
            keep = set(split[args.subset])
        index = [e for e in index if e["id"] in keep]
    items = [(e["id"], _read_roi(index_path.parent, e), e.get("label"))
             for e in index]
    records = detector.score_many(ckpt, items)
    records = detector.regularity(records)
    Path(args.out).write_text(detector.scores_csv(records))
    print(json.dumps({"out": str(args.out), "scored": len(records)}))
    return 0


def _cmd_threshold(args) -> int:
    records = detector.parse_scores_csv(Path(args.scores).read_text())
    report = detector.threshold_report(records, args.seed)
    Path(args.out).write_text(detector.report_json(report))
    print(json.dumps({"out": str(args.out), "theta": report.theta,
                      "f1": report.f1_at_theta}))
    return 0


def _cmd_report(args) -> int:
    ckpt = trainer.load_checkpoint(args.checkpoint)
    index_path = Path(args.rois)
    index = _load_roi_index(index_path)
    records = detector.parse_scores_csv(Path(args.scores).read_text())
    threshold = detector.load_report_json(args.threshold)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    by_id = {e["id"]: e for e in index}
    scored_ids = [r.id for r in records if r.id in by_id]
    if args.limit:
        scored_ids = scored_ids[:args.limit]
    spectra_inputs = []
    for rid in scored_ids:
        roi = _read_roi(index_path.parent, by_id[rid])
        xhat = detector.reconstruct(ckpt, roi.values[None])[0]
        fg = roi.values.any(axis=0)
        hm = detector.heatmap(roi.values, xhat, fg, args.percentile)
        peak = float(hm.error.max())
        scale = 255.0 / peak if peak > 0 else 0.0
        write_pgm(out_dir / f"{rid}_error.pgm",
                  np.clip(hm.error * scale, 0, 255).astype(np.uint8))
        write_pgm(out_dir / f"{rid}_highlight.pgm",
                  hm.highlight.astype(np.uint8) * np.uint8(255))
        label = by_id[rid].get("label", "unlabeled")
        spectra_inputs.append((roi.values, xhat, label))
    wavelengths = ckpt.wavelengths or []
    lines = ["label,wavelength,ground_truth,reconstruction"]
    if wavelengths:
        per_label = detector.mean_reflectance_report(spectra_inputs, wavelengths)
        for label in sorted(per_label):
            gt, rec = per_label[label]
            for wl, g, r in zip(gt.wavelengths, gt.values, rec.values):
                lines.append(f"{label},{wl!r},{g!r},{r!r}")
    (out_dir / "reflectance.csv").write_text("\n".join(lines) + "\n")
    classified = [detector.classify(r, threshold.theta) for r in records]
    metrics = detector.evaluate(
        [r for r in classified if r.label], threshold.theta)
    (out_dir / "summary.json").write_text(json.dumps(
        {"theta": threshold.theta, "metrics": vars(metrics),
         "heatmaps": len(scored_ids)}, indent=1, sort_keys=True) + "\n")
    print(json.dumps({"out": str(out_dir), "heatmaps": len(scored_ids)}))
    return 0


_COMMANDS = {
    "synth": _cmd_synth,
    "calibrate": _cmd_calibrate,
    "extract-roi": _cmd_extract_roi,
    "bands": _cmd_bands,
    "train": _cmd_train,
    "score": _cmd_score,
    "threshold": _cmd_threshold,
    "report": _cmd_report,
}


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return exc.code if exc.code is not None else 0
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s")
    try:
        return _COMMANDS[args.command](args)
    except (SplitsenseError, OSError, json.JSONDecodeError, KeyError,
            ValueError) as exc:
        print(f"splitsense {args.command}: error: {exc}", file=sys.stderr)
        return DATA_EXIT


if __name__ == "__main__":
    sys.exit(main())
