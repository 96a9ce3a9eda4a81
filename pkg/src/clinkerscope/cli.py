"""Command line pipeline: convert, split, mow, analyze, eval, mesh.

Every subcommand reads an optional JSON config (--config), honors --seed and
--out-dir, writes its artifacts atomically (temp file, then rename), and is
deterministic given the same inputs, config, and seed.

Exit codes: 0 success, 2 usage error, 3 bad data, 4 iteration cap exceeded.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path
from typing import Callable

import numpy as np

from .annotations import (
    AnnotatedImage,
    export_coco,
    import_coco,
    import_labelme,
    plan_split,
)
from .config import RunConfig, load_config
from .errors import DataError, IterationCapError
from .evaluation import PHASES, pixel_prf, sweep_thresholds
from .meshing import (
    boundary_nodes,
    conforming_delaunay,
    export_mesh_json,
    export_node_ele,
    label_triangles,
    phase_area_fractions,
)
from .particles import (
    export_particles_csv,
    export_psd_csv,
    point_count,
    psd_curve,
    summarize_particles,
)
from .plots import mesh_plot, psd_plot
from .raster import PhaseLabel, load_image, load_label_map, save_label_map
from .windows import (
    build_dataset,
    export_dataset_csv,
    predict_image,
    sample_windows,
    split_samples,
    train_mow_model,
)


def _atomic(path: Path, write: Callable[[Path], None]) -> Path:
    """Write through a sibling temp file so a crash never leaves half a file."""
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(f".{path.name}.tmp{os.getpid()}")
    try:
        write(tmp)
        os.replace(tmp, path)
    finally:
        tmp.unlink(missing_ok=True)
    return path


def _write_json(path: Path, payload: dict) -> Path:
    text = json.dumps(payload, indent=2) + "\n"
    return _atomic(path, lambda p: p.write_text(text))


def _read_json(path: str | Path) -> dict:
    try:
        raw = Path(path).read_text()
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc}") from exc
    try:
        doc = json.loads(raw)
    except json.JSONDecodeError as exc:
        raise DataError(f"{path} is not valid JSON: {exc}") from exc
    if not isinstance(doc, dict):
        raise DataError(f"{path} must hold a JSON object")
    return doc


def _say(args, message: str) -> None:
    if not args.quiet:
        print(message)


def _scores_dict(scores) -> dict:
    return {
        PhaseLabel(ph).name.lower(): {
            "tp": s.tp,
            "fp": s.fp,
            "fn": s.fn,
            "precision": s.precision,
            "recall": s.recall,
            "f1": s.f1,
        }
        for ph, s in scores.items()
    }


# -- convert -------------------------------------------------------------------


def cmd_convert(args, cfg: RunConfig) -> int:
    out_dir = Path(args.out_dir)
    if args.mode == "labelme-to-coco":
        images = []
        for k, src in enumerate(args.inputs):
            doc = _read_json(src)
            images.append(import_labelme(doc, image_id=k))
        coco = export_coco(images, use_rle=args.rle)
        out = Path(args.out) if args.out else out_dir / "annotations.json"
        _write_json(out, coco)
        _say(args, f"wrote {out}")
        return 0
    if len(args.inputs) != 1:
        raise DataError(f"{args.mode} takes exactly one input file")
    images = import_coco(_read_json(args.inputs[0]))
    if args.mode == "coco-to-masks":
        for im in images:
            out = out_dir / f"labels_{im.image_id:04d}.png"
            _atomic(out, lambda p, im=im: save_label_map(im.label_map(), p))
            _say(args, f"wrote {out}")
        return 0
    if args.mode in ("coco-to-rle", "coco-to-polygons"):
        coco = export_coco(images, use_rle=args.mode == "coco-to-rle")
        out = Path(args.out) if args.out else out_dir / "annotations.json"
        _write_json(out, coco)
        _say(args, f"wrote {out}")
        return 0
    raise DataError(f"unknown conversion {args.mode!r}")


# -- split ---------------------------------------------------------------------


def cmd_split(args, cfg: RunConfig) -> int:
    images = import_coco(_read_json(args.input))
    plan = plan_split(
        images,
        train_fraction=cfg.split.train_fraction,
        folds=cfg.split.folds,
        seed=args.seed,
    )
    counts = {im.image_id: len(im.instances) for im in images}
    payload = plan.to_dict()
    payload["train_particles"] = sum(counts[i] for i in plan.train_ids)
    payload["test_particles"] = sum(counts[i] for i in plan.test_ids)
    out = Path(args.out) if args.out else Path(args.out_dir) / "split.json"
    _write_json(out, payload)
    _say(args, f"wrote {out}")
    return 0


# -- mow -----------------------------------------------------------------------


def cmd_mow(args, cfg: RunConfig) -> int:
    out_dir = Path(args.out_dir)
    img = load_image(args.image)
    labels = load_label_map(args.labels)
    windows = sample_windows(img, labels, _window_plan(cfg), seed=args.seed)
    ds = build_dataset(img, labels, windows, p=cfg.mow.patch)
    split_samples(ds, cfg.mow.ratios, seed=args.seed, per_window=cfg.mow.per_window_split)
    model, report = train_mow_model(
        ds, list(cfg.mow.grid), seed=args.seed, class_weighting=cfg.mow.class_weighting
    )
    predicted = predict_image(model, img, p=cfg.mow.patch)
    full = pixel_prf(predicted, labels)
    report["windows"] = [[w.x, w.y, w.n] for w in windows]
    report["samples"] = ds.n_samples
    report["feature_width"] = ds.feature_width
    report["full_image"] = _scores_dict(full)
    report["full_image_macro_f1"] = float(
        np.mean([s.f1 for s in full.values()])
    )
    model_out = out_dir / "model.json"
    _atomic(model_out, model.save)
    pred_out = out_dir / "predicted_labels.png"
    _atomic(pred_out, lambda p: save_label_map(predicted, p))
    report_out = out_dir / "mow_report.json"
    _write_json(report_out, report)
    if args.dump_dataset:
        csv_out = out_dir / "dataset.csv"
        _atomic(csv_out, lambda p: export_dataset_csv(ds, p))
        _say(args, f"wrote {csv_out}")
    for p in (model_out, pred_out, report_out):
        _say(args, f"wrote {p}")
    return 0


def _window_plan(cfg: RunConfig):
    w = cfg.mow.windows
    return list(w) if isinstance(w, tuple) else w


# -- analyze -------------------------------------------------------------------


def cmd_analyze(args, cfg: RunConfig) -> int:
    out_dir = Path(args.out_dir)
    images = import_coco(_read_json(args.input))
    all_stats = []
    points = {}
    for im in images:
        stats = summarize_particles(im.instances, log_scale=cfg.analyze.log_sizes)
        all_stats.extend(stats)
        if im.instances:
            csv_out = out_dir / f"particles_{im.image_id:04d}.csv"
            _atomic(csv_out, lambda p, s=stats: export_particles_csv(s, p))
            _say(args, f"wrote {csv_out}")
        pc = point_count(
            im.label_map(), cfg.analyze.points, mode=cfg.analyze.point_mode, seed=args.seed
        )
        points[str(im.image_id)] = {
            "total": pc.total,
            "fractions": {ph.name.lower(): f for ph, f in pc.fractions.items()},
        }
    if all_stats:
        curve = psd_curve([s.normalized_diagonal for s in all_stats])
        psd_csv = out_dir / "psd.csv"
        _atomic(psd_csv, lambda p: export_psd_csv(curve, p))
        psd_svg = out_dir / "psd.svg"
        _atomic(psd_svg, lambda p: psd_plot(curve, p))
        _say(args, f"wrote {psd_csv}")
        _say(args, f"wrote {psd_svg}")
    points_out = out_dir / "point_counts.json"
    _write_json(points_out, points)
    _say(args, f"wrote {points_out}")
    return 0


# -- eval ----------------------------------------------------------------------


def cmd_eval(args, cfg: RunConfig) -> int:
    out = Path(args.out) if args.out else Path(args.out_dir) / "eval_report.json"
    if args.target == "pixels":
        pred = load_label_map(args.pred)
        gt = load_label_map(args.gt)
        scores = pixel_prf(pred, gt)
        payload = {
            "mode": "pixels",
            "per_phase": _scores_dict(scores),
            "macro_f1": float(np.mean([s.f1 for s in scores.values()])),
        }
        _write_json(out, payload)
        _say(args, f"wrote {out}")
        return 0
    preds = {im.image_id: im.instances for im in import_coco(_read_json(args.pred))}
    gts = {im.image_id: im.instances for im in import_coco(_read_json(args.gt))}
    sweep = sweep_thresholds(
        preds,
        gts,
        iou_threshold=cfg.eval.iou_threshold,
        step=cfg.eval.sweep_step,
        average=cfg.eval.average,
    )
    payload = {
        "mode": "instances",
        "iou_threshold": cfg.eval.iou_threshold,
        "average": cfg.eval.average,
        "best_threshold": sweep.threshold,
        "best_objective": sweep.objective,
        "per_phase": _scores_dict(sweep.per_phase),
        "macro_f1": float(np.mean([sweep.per_phase[ph].f1 for ph in PHASES])),
        "curve": [[c, v] for c, v in sweep.curve],
    }
    _write_json(out, payload)
    _say(args, f"wrote {out}")
    return 0


# -- mesh ----------------------------------------------------------------------


def cmd_mesh(args, cfg: RunConfig) -> int:
    out_dir = Path(args.out_dir)
    images = import_coco(_read_json(args.input))
    summary = {}
    for im in images:
        nodes, segments = boundary_nodes(
            im.instances, width=im.width, height=im.height, spacing=cfg.mesh.spacing
        )
        mesh = conforming_delaunay(nodes, segments, min_angle=cfg.mesh.min_angle)
        mesh = label_triangles(mesh, im.label_map(), rule=cfg.mesh.rule)
        base = out_dir / f"mesh_{im.image_id:04d}"
        tmp_base = out_dir / f".tmp{os.getpid()}_mesh_{im.image_id:04d}"
        out_dir.mkdir(parents=True, exist_ok=True)
        node_tmp, ele_tmp = export_node_ele(mesh, tmp_base)
        os.replace(node_tmp, base.with_suffix(".node"))
        os.replace(ele_tmp, base.with_suffix(".ele"))
        json_out = out_dir / f"mesh_{im.image_id:04d}.json"
        _atomic(json_out, lambda p, m=mesh: export_mesh_json(m, p))
        if args.svg:
            svg_out = out_dir / f"mesh_{im.image_id:04d}.svg"
            _atomic(svg_out, lambda p, m=mesh: mesh_plot(m, p))
            _say(args, f"wrote {svg_out}")
        fractions = phase_area_fractions(mesh)
        summary[str(im.image_id)] = {
            "nodes": int(mesh.nodes.shape[0]),
            "triangles": mesh.n_triangles,
            "min_angle": float(mesh.min_angles().min()) if mesh.n_triangles else 0.0,
            "area_fractions": {ph.name.lower(): f for ph, f in fractions.items()},
        }
        for p in (base.with_suffix(".node"), base.with_suffix(".ele"), json_out):
            _say(args, f"wrote {p}")
    summary_out = out_dir / "mesh_summary.json"
    _write_json(summary_out, summary)
    _say(args, f"wrote {summary_out}")
    return 0


# -- parser --------------------------------------------------------------------


def _add_common(sub: argparse.ArgumentParser) -> None:
    sub.add_argument("--config", help="JSON configuration file")
    sub.add_argument("--seed", type=int, help="override the config seed")
    sub.add_argument("--out-dir", default=".", help="directory for artifacts")
    sub.add_argument("--quiet", action="store_true", help="suppress progress lines")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="clinkerscope",
        description="Phase classification, particle analytics, and meshing "
        "for clinker micrographs.",
    )
    subs = parser.add_subparsers(dest="command", required=True)

    p = subs.add_parser("convert", help="translate annotation formats")
    p.add_argument(
        "mode",
        choices=["labelme-to-coco", "coco-to-masks", "coco-to-rle", "coco-to-polygons"],
    )
    p.add_argument("inputs", nargs="+", help="input annotation files")
    p.add_argument("--out", help="output file (single-file modes)")
    p.add_argument("--rle", action="store_true", help="emit RLE segmentations")
    _add_common(p)
    p.set_defaults(func=cmd_convert)

    p = subs.add_parser("split", help="plan a train/test image split with folds")
    p.add_argument("input", help="COCO annotation file")
    p.add_argument("--out", help="output JSON path")
    _add_common(p)
    p.set_defaults(func=cmd_split)

    p = subs.add_parser("mow", help="train a per-image pixel model and label the image")
    p.add_argument("--image", required=True, help="micrograph PNG")
    p.add_argument("--labels", required=True, help="label map PNG")
    p.add_argument("--dump-dataset", action="store_true", help="also write dataset.csv")
    _add_common(p)
    p.set_defaults(func=cmd_mow)

    p = subs.add_parser("analyze", help="particle statistics, PSD, and point counts")
    p.add_argument("input", help="COCO annotation file")
    _add_common(p)
    p.set_defaults(func=cmd_analyze)

    p = subs.add_parser("eval", help="score predictions against ground truth")
    p.add_argument("target", choices=["instances", "pixels"])
    p.add_argument("--pred", required=True, help="predictions (COCO JSON or label PNG)")
    p.add_argument("--gt", required=True, help="ground truth (COCO JSON or label PNG)")
    p.add_argument("--out", help="report path")
    _add_common(p)
    p.set_defaults(func=cmd_eval)

    p = subs.add_parser("mesh", help="triangulate particle boundaries")
    p.add_argument("input", help="COCO annotation file")
    p.add_argument("--svg", action="store_true", help="also render each mesh")
    _add_common(p)
    p.set_defaults(func=cmd_mesh)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = load_config(args.config)
        if args.seed is None:
            args.seed = cfg.seed
        return args.func(args, cfg)
    except IterationCapError as exc:
        print(f"error: iteration-cap: {exc}", file=sys.stderr)
        return 4
    except DataError as exc:
        print(f"error: data: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
