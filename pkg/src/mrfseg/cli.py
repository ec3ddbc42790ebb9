"""Command-line interface.

Subcommands: segment (image -> label map), evaluate (label map + masks
-> metrics JSON), batch (manifest -> aggregate report), features
(image -> descriptor CSV).  Flags override config-file values; nothing
in the pipeline is randomized, so outputs are byte-identical across
runs.  Exit codes: 0 success, 1 I/O failure, 2 bad usage, 3 dimension
mismatch.
"""

import argparse
import csv
import json
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import evaluation, pipeline
from .errors import DimensionMismatchError, FormatError, InvalidParamsError
from .image_io import LabelMap, load_image, load_label_map, load_mask, save_label_map
from .presegment import SlicParams

_CONFIG_KEYS = {
    "superpixels": int,
    "compactness": float,
    "slic_iters": int,
    "min_region_frac": float,
    "gamma": float,
    "c": float,
    "mrf_alpha": float,
    "mrf_tol": float,
    "mrf_max_sweeps": int,
    "max_iters": int,
    "t1": float,
    "t2": float,
}


def _json_dumps(obj):
    return json.dumps(obj, sort_keys=True, indent=2) + "\n"


def _add_pipeline_flags(sub):
    sub.add_argument("--superpixels", type=int, default=None, help="requested superpixel count")
    sub.add_argument("--compactness", type=float, default=None, help="SLIC spatial weight m")
    sub.add_argument("--slic-iters", type=int, default=None, help="SLIC assignment sweeps")
    sub.add_argument("--min-region-frac", type=float, default=None,
                     help="fragment merge threshold as a fraction of H*W/k")
    sub.add_argument("--gamma", type=float, default=None, help="RBF kernel width")
    sub.add_argument("--c", type=float, default=None, help="SVM box constraint")
    sub.add_argument("--mrf-alpha", type=float, default=None, help="smoothing damping factor")
    sub.add_argument("--mrf-tol", type=float, default=None, help="smoothing stop residual")
    sub.add_argument("--mrf-max-sweeps", type=int, default=None)
    sub.add_argument("--max-iters", type=int, default=None, help="outer iteration cap")
    sub.add_argument("--t1", type=float, default=None, help="texture magnitude threshold 1")
    sub.add_argument("--t2", type=float, default=None, help="texture magnitude threshold 2")
    sub.add_argument("--config", default=None, help="key=value config file")


def _read_config_file(path, parser):
    values = {}
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        parser.error(f"cannot read config file: {exc}")
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            parser.error(f"{path}:{lineno}: expected key=value")
        key, _, raw = line.partition("=")
        key = key.strip()
        if key not in _CONFIG_KEYS:
            parser.error(f"{path}:{lineno}: unknown key {key!r}")
        try:
            values[key] = _CONFIG_KEYS[key](raw.strip())
        except ValueError:
            parser.error(f"{path}:{lineno}: bad value for {key!r}")
    return values


def _build_config(args, parser):
    merged = dict()
    if args.config:
        merged.update(_read_config_file(args.config, parser))
    for key in _CONFIG_KEYS:
        flag_val = getattr(args, key)
        if flag_val is not None:
            merged[key] = flag_val
    try:
        slic_params = SlicParams(
            k=merged.get("superpixels", 400),
            m=merged.get("compactness", 10.0),
            max_iters=merged.get("slic_iters", 10),
            min_region_frac=merged.get("min_region_frac", 0.25),
        )
        return pipeline.PipelineConfig(
            slic=slic_params,
            svm_c=merged.get("c", 1.0),
            svm_gamma=merged.get("gamma", 0.001),
            mrf_alpha=merged.get("mrf_alpha", 0.5),
            mrf_tol=merged.get("mrf_tol", 1e-6),
            mrf_max_sweeps=merged.get("mrf_max_sweeps", 100),
            max_outer_iters=merged.get("max_iters", 50),
            texture_t1=merged.get("t1", 5.0),
            texture_t2=merged.get("t2", 20.0),
        )
    except (InvalidParamsError, ValueError) as exc:
        parser.error(str(exc))


def _write_overlay(lm: LabelMap, img, path):
    from PIL import Image

    fill = np.zeros_like(img.data)
    for lbl in range(lm.num_labels):
        member = lm.data == lbl
        fill[member] = img.data[member].mean(axis=0)
    boundary = np.zeros(lm.data.shape, dtype=bool)
    boundary[:, 1:] |= lm.data[:, 1:] != lm.data[:, :-1]
    boundary[1:, :] |= lm.data[1:, :] != lm.data[:-1, :]
    fill[boundary] = 1.0
    Image.fromarray((fill * 255.0).round().astype(np.uint8)).save(path, format="PNG")


def cmd_segment(args, parser):
    config = _build_config(args, parser)
    try:
        img = load_image(args.image)
    except (OSError, FormatError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    t0 = time.perf_counter()
    try:
        label_map, diagnostics = pipeline.run(
            img, config, features_csv=args.features_csv, mrf_trace=args.mrf_trace
        )
    except InvalidParamsError as exc:
        parser.error(str(exc))
    elapsed = time.perf_counter() - t0
    print(
        f"{args.image}: {diagnostics['final_k']} segments from "
        f"{diagnostics['superpixels']} superpixels in {elapsed:.1f}s "
        f"({diagnostics['termination']})",
        file=sys.stderr,
    )
    try:
        save_label_map(label_map, args.out)
        if args.overlay:
            _write_overlay(label_map, img, args.overlay)
        if args.diagnostics:
            Path(args.diagnostics).write_text(_json_dumps(diagnostics), encoding="utf-8")
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


def cmd_evaluate(args, parser):
    try:
        lm = load_label_map(args.labelmap)
        masks = [load_mask(p) for p in args.masks]
    except (OSError, FormatError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    try:
        report = evaluation.evaluate(lm, masks)
    except DimensionMismatchError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    sys.stdout.write(_json_dumps(evaluation.report_to_dict(report)))
    return 0


def _batch_row(image_path, mask_paths, config, outdir):
    img = load_image(image_path)
    label_map, diagnostics = pipeline.run(img, config)
    masks = [load_mask(p) for p in mask_paths]
    report = evaluation.evaluate(label_map, masks)
    if outdir is not None:
        save_label_map(label_map, Path(outdir) / (Path(image_path).stem + "_labels.png"))
    return {
        "image": str(image_path),
        "final_k": diagnostics["final_k"],
        "termination": diagnostics["termination"],
        "f_single": report.mean_f_single,
        "f_multi": report.mean_f_multi,
        "f_frag": report.mean_f_frag,
        "annotators": evaluation.report_to_dict(report)["annotators"],
    }


def _batch_worker(packed):
    row_index, image_path, mask_paths, config, outdir = packed
    try:
        return row_index, _batch_row(image_path, mask_paths, config, outdir), None
    except Exception as exc:  # keep batch alive past one bad row
        return row_index, None, f"{type(exc).__name__}: {exc}"


def cmd_batch(args, parser):
    config = _build_config(args, parser)
    manifest = Path(args.manifest)
    try:
        with open(manifest, newline="", encoding="utf-8") as f:
            rows = [row for row in csv.reader(f) if row and any(cell.strip() for cell in row)]
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    if not rows:
        print("error: manifest is empty", file=sys.stderr)
        return 1
    if args.outdir:
        Path(args.outdir).mkdir(parents=True, exist_ok=True)

    jobs = []
    for i, row in enumerate(rows):
        cells = [c.strip() for c in row if c.strip()]
        image_path = manifest.parent / cells[0]
        mask_paths = [manifest.parent / c for c in cells[1:4]]
        jobs.append((i, image_path, mask_paths, config, args.outdir))

    if args.jobs > 1:
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            outcomes = list(pool.map(_batch_worker, jobs))
    else:
        outcomes = [_batch_worker(job) for job in jobs]
    outcomes.sort(key=lambda t: t[0])

    per_image = [res for _, res, err in outcomes if err is None]
    failures = [
        {"image": str(jobs[i][1]), "error": err} for i, _, err in outcomes if err is not None
    ]
    report = {
        "n": len(per_image),
        "aggregate": {
            "f_single": evaluation.aggregate([r["f_single"] for r in per_image]),
            "f_multi": evaluation.aggregate([r["f_multi"] for r in per_image]),
            "f_frag": evaluation.aggregate([r["f_frag"] for r in per_image]),
        },
        "per_image": per_image,
        "failures": failures,
    }
    text = _json_dumps(report)
    if args.out:
        try:
            Path(args.out).write_text(text, encoding="utf-8")
        except OSError as exc:
            print(f"error: {exc}", file=sys.stderr)
            return 1
    else:
        sys.stdout.write(text)
    if not per_image:
        print("error: all manifest rows failed", file=sys.stderr)
        return 1
    return 0


def cmd_features(args, parser):
    from . import descriptor, mrf, presegment
    from .image_io import rgb_to_lab

    config = _build_config(args, parser)
    try:
        img = load_image(args.image)
    except (OSError, FormatError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    lab = rgb_to_lab(img)
    partition = presegment.slic(lab, config.slic)
    partition = presegment.superpixel_stats(partition, img, lab)
    codes = descriptor.texture_codes(lab, config.texture_t1, config.texture_t2)
    features = descriptor.describe_all(partition, img, codes)
    lines = [",".join(repr(v) for v in row) for row in features]
    text = "\n".join(lines) + "\n"
    try:
        if args.out:
            Path(args.out).write_text(text, encoding="utf-8")
        else:
            sys.stdout.write(text)
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


def _positive(kind, name):
    def check(value):
        value = kind(value)
        if value <= 0:
            raise argparse.ArgumentTypeError(f"{name} must be positive")
        return value

    return check


def build_parser():
    parser = argparse.ArgumentParser(
        prog="mrfseg",
        description="Unsupervised superpixel + SVM + MRF image segmentation.",
    )
    subs = parser.add_subparsers(dest="command", required=True)

    seg = subs.add_parser("segment", help="segment one image")
    seg.add_argument("image", help="input image (8-bit PNG or PPM P6)")
    seg.add_argument("--out", required=True, help="output label map (.png or .pgm)")
    seg.add_argument("--overlay", default=None, help="optional overlay PNG")
    seg.add_argument("--diagnostics", default=None, help="optional diagnostics JSON")
    seg.add_argument("--features-csv", default=None, help="debug: dump descriptor rows")
    seg.add_argument("--mrf-trace", default=None, help="debug: per-sweep residual/energy CSV")
    _add_pipeline_flags(seg)
    seg.set_defaults(func=cmd_segment)

    ev = subs.add_parser("evaluate", help="score a label map against masks")
    ev.add_argument("labelmap", help="label map produced by segment")
    ev.add_argument("masks", nargs="+", help="1..3 annotator masks")
    ev.set_defaults(func=cmd_evaluate)

    bat = subs.add_parser("batch", help="segment and evaluate a manifest")
    bat.add_argument("manifest", help="CSV rows: image,mask1[,mask2[,mask3]]")
    bat.add_argument("--out", default=None, help="report JSON path (default stdout)")
    bat.add_argument("--outdir", default=None, help="directory for per-image label maps")
    bat.add_argument("--jobs", type=_positive(int, "--jobs"), default=1)
    _add_pipeline_flags(bat)
    bat.set_defaults(func=cmd_batch)

    feat = subs.add_parser("features", help="dump the 57-dim descriptor matrix as CSV")
    feat.add_argument("image")
    feat.add_argument("--out", default=None, help="CSV path (default stdout)")
    _add_pipeline_flags(feat)
    feat.set_defaults(func=cmd_features)
    return parser


def _validate_common(args, parser):
    checks = [
        ("superpixels", lambda v: v >= 1, "--superpixels must be >= 1"),
        ("compactness", lambda v: v > 0, "--compactness must be > 0"),
        ("slic_iters", lambda v: v >= 1, "--slic-iters must be >= 1"),
        ("min_region_frac", lambda v: 0 < v < 1, "--min-region-frac must be in (0, 1)"),
        ("gamma", lambda v: v > 0, "--gamma must be > 0"),
        ("c", lambda v: v > 0, "--c must be > 0"),
        ("mrf_alpha", lambda v: 0 < v <= 1, "--mrf-alpha must be in (0, 1]"),
        ("mrf_tol", lambda v: v > 0, "--mrf-tol must be > 0"),
        ("mrf_max_sweeps", lambda v: v >= 1, "--mrf-max-sweeps must be >= 1"),
        ("max_iters", lambda v: v >= 1, "--max-iters must be >= 1"),
        ("t1", lambda v: v >= 0, "--t1 must be >= 0"),
        ("t2", lambda v: v >= 0, "--t2 must be >= 0"),
    ]
    for name, ok, message in checks:
        value = getattr(args, name, None)
        if value is not None and not ok(value):
            parser.error(message)


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    _validate_common(args, parser)
    return args.func(args, parser)


if __name__ == "__main__":
    sys.exit(main())
