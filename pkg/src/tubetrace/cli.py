"""Command-line interface.

Subcommands: ``extract`` (centerline between clicked points, optional
radius lift), ``synth`` (render a named synthetic fixture with ground
truth), ``eval`` (path-vs-mask overlap), ``distmap`` and ``controlset``
(debug exports).
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
import time
from pathlib import Path

import numpy as np
from PIL import Image, ImageDraw

from .errors import TubetraceError
from .fastmarch import dump_distance_map, fm_run_static
from .grid import ScalarImage, SymTensor2, load_image, save_image
from .metrics import control_set_csv
from .pipeline import (
    ExtractionConfig,
    compute_features,
    evaluate_theta,
    extract_centerline_afc,
    extract_radius_lifted_rc,
)
from .synth import generate_synthetic_crossing, preset_spec
from .tracing import GeodesicPath, export_path_json

__all__ = ["main"]


def _parse_points(text: str):
    vals = [float(v) for v in text.split(",")]
    if len(vals) < 4 or len(vals) % 2 != 0:
        raise argparse.ArgumentTypeError(
            "points must be x1,y1,x2,y2[,x3,y3...] with at least two points"
        )
    return [(vals[i], vals[i + 1]) for i in range(0, len(vals), 2)]


def _parse_points_min1(text: str):
    vals = [float(v) for v in text.split(",")]
    if len(vals) < 2 or len(vals) % 2 != 0:
        raise argparse.ArgumentTypeError("points must be x1,y1[,x2,y2...]")
    return [(vals[i], vals[i + 1]) for i in range(0, len(vals), 2)]


def _load_config(path):
    if path is None:
        return ExtractionConfig()
    return ExtractionConfig.from_file(path)


def _overlay_png(image: ScalarImage, result, out_path):
    """Grayscale image with the extracted path and markers burned in."""
    base = (np.clip(image.values, 0, 1) * 255).astype(np.uint8)
    rgb = Image.merge("RGB", [Image.fromarray(base)] * 3)
    draw = ImageDraw.Draw(rgb)
    pts = [(float(x), float(y)) for x, y in result.path.points]
    draw.line(pts, fill=(220, 40, 40), width=1)
    if result.radius_path is not None and result.radius_path.radii is not None:
        arr = result.radius_path.as_array()
        for x, y, r in arr[:: max(len(arr) // 200, 1)]:
            draw.ellipse([x - r, y - r, x + r, y + r], outline=(240, 220, 60))
    markers = result.points
    colors = {0: (60, 90, 230), len(markers) - 1: (240, 220, 60)}
    for i, (x, y) in enumerate(markers):
        color = colors.get(i, (80, 210, 210))
        draw.ellipse([x - 2, y - 2, x + 2, y + 2], fill=color)
    rgb.save(out_path)


def _cmd_extract(args) -> int:
    config = _load_config(args.config)
    if args.mode:
        config = config.replace(mode=args.mode)
    if args.invert:
        config = config.replace(invert=True)
    image = load_image(args.image, invert=config.invert)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    t0 = time.perf_counter()
    features = compute_features(image, config)
    result = extract_centerline_afc(image, args.points, config, features)
    if args.radius_lift:
        rc = extract_radius_lifted_rc(
            image, result.path, args.points[0], args.points[-1], config, features
        )
        result.radius_path = rc.path
        result.region_mask = rc.region_mask
        result.timings.update({f"rc.{k}": v for k, v in rc.timings.items()})
    total = time.perf_counter() - t0

    export_path_json(result.path, out / "path.json")
    if result.radius_path is not None:
        export_path_json(result.radius_path, out / "path_radius.json")
    _overlay_png(image, result, out / "overlay.png")
    with open(out / "timings.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["stage", "seconds"])
        for k, v in {**features.timings, **result.timings, "total": total}.items():
            writer.writerow([k, f"{v:.6f}"])
    with open(out / "diagnostics.json", "w") as fh:
        json.dump(result.diagnostics, fh, indent=2, default=str)
    print(f"extracted {len(result.path)} samples in {total:.2f}s -> {out}")
    return 0


def _cmd_synth(args) -> int:
    spec = preset_spec(args.preset, seed=args.seed)
    scene = generate_synthetic_crossing(
        spec["tubes"], spec["shape"], noise_sigma=spec["noise"], seed=args.seed
    )
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    save_image(scene.image, out / "image.png")
    for i, mask in enumerate(scene.masks):
        Image.fromarray((mask * 255).astype(np.uint8)).save(out / f"mask_{i}.png")
    meta = {
        "preset": args.preset,
        "seed": args.seed,
        "s": spec["s"],
        "q": spec["q"],
        "waypoint": spec["waypoint"],
        "noise": spec["noise"],
        "centerlines": [c.tolist() for c in scene.centerlines],
    }
    with open(out / "scene.json", "w") as fh:
        json.dump(meta, fh)
    print(f"wrote fixture '{args.preset}' (seed {args.seed}) -> {out}")
    return 0


def _cmd_eval(args) -> int:
    with open(args.path) as fh:
        pts = np.asarray(json.load(fh), dtype=np.float64)
    mask = np.asarray(Image.open(args.mask)) > 127
    theta = evaluate_theta(GeodesicPath(points=pts[:, :2]), mask)
    print(f"{theta:.4f}")
    return 0


def _cmd_distmap(args) -> int:
    config = _load_config(args.config)
    image = load_image(args.image, invert=config.invert)
    features = compute_features(image, config)
    msc = features.mscale()
    idx = features.features.zeta_index
    jj, ii = np.meshgrid(
        np.arange(idx.shape[0]), np.arange(idx.shape[1]), indexing="ij"
    )
    from .grid import TensorField

    metric = TensorField(msc.spatial[idx, jj, ii, :])
    front = fm_run_static(metric, sources=[args.points[0]])
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    dump_distance_map(front, out / "distance.png", out / "distance.f32")
    print(f"distance map from {args.points[0]} -> {out}")
    return 0


def _cmd_controlset(args) -> int:
    config = _load_config(args.config)
    image = load_image(args.image, invert=config.invert)
    features = compute_features(image, config)
    msc = features.mscale()
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    rows = []
    for x, y in args.points:
        xi, yi = int(x), int(y)
        ri = int(features.features.zeta_index[yi, xi])
        a11, a12, a22 = msc.spatial[ri, yi, xi]
        rows.append((f"aniso_{xi}_{yi}", SymTensor2(a11, a12, a22), (xi, yi)))
    control_set_csv(rows, out / "control_sets.csv")
    print(f"{len(rows)} control-set ellipses -> {out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="tubetrace",
        description="Geodesic tubular-structure extraction toolkit",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("extract", help="extract a centerline between points")
    p.add_argument("--image", required=True)
    p.add_argument("--points", required=True, type=_parse_points,
                   help="x1,y1,x2,y2[,x3,y3...] in cell coordinates")
    p.add_argument("--config", default=None, help="flat key=value config file")
    p.add_argument("--mode", choices=["single", "partial"], default=None)
    p.add_argument("--radius-lift", action="store_true")
    p.add_argument("--invert", action="store_true",
                   help="invert contrast (bright-on-dark targets)")
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_extract)

    p = sub.add_parser("synth", help="render a synthetic fixture")
    p.add_argument("--preset", required=True,
                   choices=["parallel", "cross", "loop", "weak-cross"])
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_synth)

    p = sub.add_parser("eval", help="path-vs-mask overlap measure")
    p.add_argument("--path", required=True, help="path JSON ([x,y] samples)")
    p.add_argument("--mask", required=True, help="binary mask image")
    p.set_defaults(func=_cmd_eval)

    p = sub.add_parser("distmap", help="dump a static distance map")
    p.add_argument("--image", required=True)
    p.add_argument("--points", required=True, type=_parse_points_min1)
    p.add_argument("--config", default=None)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_distmap)

    p = sub.add_parser("controlset", help="export control-set ellipses")
    p.add_argument("--image", required=True)
    p.add_argument("--points", required=True, type=_parse_points_min1)
    p.add_argument("--config", default=None)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_controlset)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except TubetraceError as exc:
        print(f"error [{exc.code}]: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
