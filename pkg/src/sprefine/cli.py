"""Command-line entry point.

Every subcommand reads and validates all of its inputs and computes its
results before the first output file is written, so a failed run leaves no
partial artifacts. Exit status: 0 success, 1 bad input or format, 2 internal
invariant violation.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
from pathlib import Path

import numpy as np

from . import io
from .core import InvariantError, SuperpixelMap, validate_partition
from .fixtures import colorize, generate_fixture
from .metrics import DEFAULT_IOU_THRESHOLDS, evaluate
from .pipeline import (PipelineConfig, StageError, _select_edges, check_unary, image_features, refine,
                       score, summary, superpixel_groups)
from .report import overlay_boundaries, render_report
from .slic import slic_segment
from .sppool import ReceptiveFieldGrid, pool_superpixels, sp_cam

CONFIG_ENV = "SPREFINE_CONFIG"

log = logging.getLogger("sprefine")


class UsageError(Exception):
    pass


def _existing(path):
    if path is not None and not Path(path).is_file():
        raise UsageError(f"no such file: {path}")
    return path


def load_config(path=None, **overrides) -> PipelineConfig:
    """Config from ``path``, else ``$SPREFINE_CONFIG``, else defaults; then overrides."""
    path = path or os.environ.get(CONFIG_ENV)
    doc = {}
    if path:
        _existing(path)
        doc = io.load_json(path)
        if not isinstance(doc, dict):
            raise UsageError(f"{path}: config must be a JSON object")
    doc.update({k: v for k, v in overrides.items() if v is not None})
    try:
        return PipelineConfig.from_dict(doc)
    except (TypeError, ValueError) as exc:
        raise UsageError(f"config: {exc}") from exc


def _read_superpixels(path) -> SuperpixelMap:
    ids = io.read_tensor(_existing(path))
    if ids.ndim != 2 or ids.dtype != np.uint32:
        raise UsageError(f"{path}: superpixel map must be a rank-2 uint32 tensor")
    sp = SuperpixelMap.from_ids(ids.astype(np.int64))
    ok, problems = validate_partition(sp)
    if not ok:
        raise UsageError(f"{path}: invalid superpixel map: {problems[0]}")
    return sp


def _read_unary(path):
    u = io.read_tensor(_existing(path))
    if u.ndim != 3 or u.dtype != np.float32:
        raise UsageError(f"{path}: unary must be a rank-3 float32 tensor")
    return u


def _read_features(path):
    if path is None:
        return None
    f = io.read_tensor(_existing(path))
    if f.dtype != np.float32 or f.ndim not in (2, 3):
        raise UsageError(f"{path}: features must be a rank-2 or rank-3 float32 tensor")
    return f if f.ndim == 3 else f[None]


def _write_all(outputs):
    """Write ``[(path, writer, payload), ...]`` after all computation succeeded."""
    for path, writer, payload in outputs:
        Path(path).parent.mkdir(parents=True, exist_ok=True)
        writer(path, payload)
        log.info("wrote %s", path)


# -- subcommands ---------------------------------------------------------------

def cmd_slic(args):
    image = io.read_image(_existing(args.image))
    rows, cols = image.shape[:2]
    cfg = load_config(args.config, target_count=args.count, compactness=args.compactness,
                      slic_iterations=args.iterations)
    mask = None
    if args.mask:
        mask = io.read_label_map(_existing(args.mask))
        if mask.shape != (rows, cols):
            raise UsageError(f"mask {mask.shape} does not match image {(rows, cols)}")
    try:
        sp = slic_segment(image, cfg.slic_params(rows, cols), mask=mask)
    except ValueError as exc:
        raise StageError("slic", str(exc)) from exc
    outputs = [(args.out, io.write_tensor, sp.ids.astype(np.uint32))]
    if args.boundaries:
        outputs.append((args.boundaries, io.write_image, overlay_boundaries(image, sp.ids)))
    _write_all(outputs)
    print(f"{sp.count} superpixels")


def cmd_pool(args):
    sp = _read_superpixels(args.superpixels)
    strides = args.stride or [1.0]
    if len(strides) == 1:
        strides = strides * len(args.features)
    if len(strides) != len(args.features):
        raise UsageError("give one --stride per --features, or a single shared one")
    tables = []
    try:
        for path, s in zip(args.features, strides):
            tables.append(pool_superpixels(_read_features(path), sp, ReceptiveFieldGrid(s)))
        pooled = tables[0]
        feats = sp_cam([t.features for t in tables]) if len(tables) > 1 else pooled.features
    except ValueError as exc:
        raise StageError("pool", str(exc)) from exc
    table = np.column_stack([pooled.positions, pooled.sizes, feats])
    _write_all([(args.out, io.write_tensor, table.astype(np.float32))])
    print(f"{sp.count} superpixels x {feats.shape[1]} features")


def cmd_graph(args):
    cfg = load_config(args.config, top_k=args.top_k, stride=args.stride)
    if args.dense:
        cfg.dense = True
    sp = _read_superpixels(args.superpixels)
    feats = _read_features(args.features)
    try:
        if feats is None:
            if not args.image:
                raise UsageError("graph needs --features or --image")
            feats = image_features(io.read_image(_existing(args.image)))
        spf = pool_superpixels(feats, sp, ReceptiveFieldGrid(cfg.stride))
        if args.unary:
            u = check_unary(_read_unary(args.unary))
            probs = pool_superpixels(u, sp).features
        else:
            probs = np.ones((sp.count, 1))
        groups = None
        if args.instance_map:
            groups = superpixel_groups(sp, io.read_label_map(_existing(args.instance_map)))
        edges = _select_edges(spf, probs, groups, cfg)
    except ValueError as exc:
        raise StageError("graph", str(exc)) from exc
    _write_all([(args.out, io.dump_json, io.edges_to_dict(edges))])
    print(f"{len(edges)} edges")


def cmd_refine(args):
    cfg = load_config(args.config, iters=args.iters, tol=args.tol)
    if args.dense:
        cfg.dense = True
    unary = _read_unary(args.unary)
    sp = _read_superpixels(args.superpixels) if args.superpixels else None
    feats = _read_features(args.features)
    feats2 = _read_features(args.features2)
    edges = None
    if args.edges:
        try:
            edges = io.edges_from_dict(io.load_json(_existing(args.edges)))
        except ValueError as exc:
            raise StageError("refine", f"edge list: {exc}") from exc
    if args.image:
        image = io.read_image(_existing(args.image))
    elif sp is not None and feats is not None:
        # the image is only needed for SLIC and default features
        image = np.zeros(sp.shape + (3,), dtype=np.uint8)
    else:
        raise UsageError("refine needs --image unless both --superpixels and --features are given")
    result = refine(image, unary, cfg, features=feats, features2=feats2,
                    superpixels=sp, edges=edges)
    outputs = [(args.out, io.write_label_map, result.label_map.labels)]
    if args.trace:
        outputs.append((args.trace, io.dump_json, summary(result)))
    _write_all(outputs)
    print(f"refined {result.superpixels.count} superpixels in {result.inference.iterations} sweeps")


def cmd_eval(args):
    L = args.num_labels
    pred = io.read_label_map(_existing(args.pred))
    gt = io.read_label_map(_existing(args.gt))
    pred_inst = gt_inst = None
    if args.pred_instances or args.gt_instances:
        if not (args.pred_instances and args.gt_instances):
            raise UsageError("give both --pred-instances and --gt-instances")
        pred_inst = io.instances_from_dict(io.load_json(_existing(args.pred_instances)))
        gt_inst = io.instances_from_dict(io.load_json(_existing(args.gt_instances)))
    try:
        report = evaluate(pred, gt, L, pred_inst, gt_inst, args.thresholds or DEFAULT_IOU_THRESHOLDS)
    except ValueError as exc:
        raise StageError("eval", str(exc)) from exc
    doc = report.to_dict()
    if args.out:
        _write_all([(args.out, io.dump_json, doc)])
    print(f"mIoU {doc['mean_iou']:.4f}  pixel accuracy {doc['pixel_accuracy']:.4f}")
    for t, v in doc["ap_r"].items():
        print(f"AP^r@{t} {v:.4f}")


def _read_palette(path):
    if path is None:
        return None
    pal = np.asarray(io.load_json(_existing(path)))
    if pal.ndim != 2 or pal.shape[1] != 3 or pal.min() < 0 or pal.max() > 255:
        raise UsageError(f"{path}: palette must be a list of [r, g, b] with 0..255 entries")
    return pal.astype(np.uint8)


def cmd_colorize(args):
    labels = io.read_label_map(_existing(args.labels))
    palette = _read_palette(args.palette)
    try:
        rgb = colorize(labels, palette)
    except ValueError as exc:
        raise StageError("colorize", str(exc)) from exc
    _write_all([(args.out, io.write_image, rgb)])


def cmd_demo(args):
    if args.num_labels < 2:
        raise UsageError("--num-labels must be at least 2")
    fx = generate_fixture(args.seed, args.size, args.num_labels, args.noise)
    out = Path(args.outdir)
    _write_all([
        (out / "image.png", io.write_image, fx.image),
        (out / "gt.png", io.write_label_map, fx.gt),
        (out / "unary.spt", io.write_tensor, fx.unary),
    ])


def cmd_pipeline(args):
    cfg = load_config(args.config)
    image = io.read_image(_existing(args.image))
    unary = _read_unary(args.unary)
    feats = _read_features(args.features)
    feats2 = _read_features(args.features2)
    gt = io.read_label_map(_existing(args.gt)) if args.gt else None
    inst = io.read_label_map(_existing(args.instance_map)) if args.instance_map else None
    palette = _read_palette(args.palette)

    result = refine(image, unary, cfg, features=feats, features2=feats2, instance_map=inst)
    doc = {"config": cfg.to_dict(), "inference": summary(result)}
    if gt is not None:
        doc.update(score(result, gt, cfg))
    out = Path(args.outdir)
    outputs = [
        (out / "labels.png", io.write_label_map, result.label_map.labels),
        (out / "superpixels.spt", io.write_tensor, result.superpixels.ids.astype(np.uint32)),
        (out / "edges.json", io.dump_json, io.edges_to_dict(result.edges)),
        (out / "metrics.json", io.dump_json, doc),
    ]
    if args.colorize:
        try:
            outputs.append((out / "labels_color.png", io.write_image,
                            colorize(result.label_map, palette)))
        except ValueError as exc:
            raise StageError("colorize", str(exc)) from exc
    if args.figure:
        outputs.append((out / "report.png",
                        lambda p, _: render_report(p, image, result.superpixels.ids,
                                                   result.baseline.labels, result.label_map.labels,
                                                   result.inference.free_energy, gt, palette,
                                                   doc if gt is not None else None),
                        None))
    _write_all(outputs)
    line = f"{result.superpixels.count} superpixels, {len(result.edges)} edges"
    if gt is not None:
        line += (f", mIoU {doc['baseline']['mean_iou']:.4f} -> {doc['refined']['mean_iou']:.4f}")
    print(line)


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="sprefine", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("slic", help="SLIC superpixels of an RGB image")
    s.add_argument("--image", required=True)
    s.add_argument("--count", type=int, help="target number of superpixels")
    s.add_argument("--compactness", type=float)
    s.add_argument("--iterations", type=int)
    s.add_argument("--mask", help="label-map PNG; superpixels are clipped to its regions")
    s.add_argument("--config")
    s.add_argument("--boundaries", help="write the image with superpixel boundaries")
    s.add_argument("--out", required=True, help="uint32 superpixel tensor")
    s.set_defaults(func=cmd_slic)

    s = sub.add_parser("pool", help="pool feature maps over superpixels")
    s.add_argument("--superpixels", required=True)
    s.add_argument("--features", required=True, nargs="+",
                   help="one map per scale; several are max-aggregated (SP-CAM)")
    s.add_argument("--stride", type=float, nargs="+")
    s.add_argument("--out", required=True, help="table: row, col, size, features...")
    s.set_defaults(func=cmd_pool)

    s = sub.add_parser("graph", help="select sparse CRF edges")
    s.add_argument("--superpixels", required=True)
    s.add_argument("--features")
    s.add_argument("--image")
    s.add_argument("--stride", type=float)
    s.add_argument("--unary", help="probabilities used as pseudo-labels for the classifier")
    s.add_argument("--instance-map")
    g = s.add_mutually_exclusive_group()
    g.add_argument("--top-k", type=int)
    g.add_argument("--dense", action="store_true")
    s.add_argument("--config")
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_graph)

    s = sub.add_parser("refine", help="CRF refinement of a unary tensor")
    s.add_argument("--unary", required=True)
    s.add_argument("--image")
    s.add_argument("--superpixels")
    s.add_argument("--features")
    s.add_argument("--features2")
    g = s.add_mutually_exclusive_group()
    g.add_argument("--edges")
    g.add_argument("--dense", action="store_true")
    s.add_argument("--config")
    s.add_argument("--iters", type=int)
    s.add_argument("--tol", type=float)
    s.add_argument("--out", required=True, help="label map PNG")
    s.add_argument("--trace", help="JSON with the free-energy trace")
    s.set_defaults(func=cmd_refine)

    s = sub.add_parser("eval", help="mIoU, pixel accuracy and AP^r")
    s.add_argument("--pred", required=True)
    s.add_argument("--gt", required=True)
    s.add_argument("--num-labels", type=int, required=True)
    s.add_argument("--pred-instances")
    s.add_argument("--gt-instances")
    s.add_argument("--thresholds", type=float, nargs="+")
    s.add_argument("--out")
    s.set_defaults(func=cmd_eval)

    s = sub.add_parser("colorize", help="render a label map with a palette")
    s.add_argument("--labels", required=True)
    s.add_argument("--palette", help="JSON list of [r, g, b]")
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_colorize)

    s = sub.add_parser("demo", help="write a synthetic fixture")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--size", type=int, default=64)
    s.add_argument("--num-labels", type=int, default=7)
    s.add_argument("--noise", type=float, default=0.55)
    s.add_argument("--outdir", required=True)
    s.set_defaults(func=cmd_demo)

    s = sub.add_parser("pipeline", help="slic -> pool -> graph -> refine -> eval")
    s.add_argument("--image", required=True)
    s.add_argument("--unary", required=True)
    s.add_argument("--features")
    s.add_argument("--features2")
    s.add_argument("--gt")
    s.add_argument("--instance-map")
    s.add_argument("--config")
    s.add_argument("--palette")
    s.add_argument("--colorize", action="store_true")
    s.add_argument("--figure", action="store_true", help="write report.png")
    s.add_argument("--outdir", required=True)
    s.set_defaults(func=cmd_pipeline)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        args.func(args)
    except InvariantError as exc:
        print(f"error: internal invariant violated: {exc}", file=sys.stderr)
        return 2
    except (UsageError, StageError, io.FormatError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
