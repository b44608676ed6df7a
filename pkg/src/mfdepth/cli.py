"""Command-line entry point: ``mfdepth [global flags] <subcommand> [flags]``.

Exit codes: 0 success, 1 internal failure, 2 bad input or configuration.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from . import io
from .core import BinaryMask, DepthMap, ImagePlane, RigidPose
from .costvolume import build_cost_volume, consistency_mask, depth_hints, make_depth_bins
from .distill import BETA, consistency_loss, total_loss
from .dynmask import CO_THRESHOLD, CON_THRESHOLD, GROUND_REGION, generate_masks
from .errors import DimensionError, DomainError, FormatError
from .geometry import bilinear_sample, warp_grid
from .metrics import MAX_DEPTH, aggregate, evaluate, write_csv
from .photometric import DEFAULT_ALPHA, photometric_error, smoothness
from . import synth

log = logging.getLogger("mfdepth")

EXIT_OK, EXIT_INTERNAL, EXIT_INPUT = 0, 1, 2
DEFAULT_BINS = 96
INPUT_ERRORS = (FormatError, DomainError, DimensionError, FileNotFoundError)


class InputError(Exception):
    pass


def _intrinsics(args, required=True):
    if args.intrinsics is None:
        if required:
            raise InputError("--intrinsics is required for this subcommand")
        return None
    return io.read_intrinsics(args.intrinsics)


def _mean_over(values: np.ndarray, mask: np.ndarray) -> float:
    n = int(mask.sum())
    return float(values[mask].sum() / n) if n else 0.0


def _recall_precision(pred: np.ndarray, truth: np.ndarray) -> dict:
    tp = int((pred & truth).sum())
    return {
        "true_positive": tp,
        "recall": tp / int(truth.sum()) if truth.any() else None,
        "precision": tp / int(pred.sum()) if pred.any() else None,
    }


def _reconstruct(target: ImagePlane, source: ImagePlane, depth: DepthMap, pose: RigidPose, K, alpha):
    grid = warp_grid(depth, pose, K, target.shape)
    recon, ok = bilinear_sample(source, grid)
    valid = ok.data & depth.valid
    pe = photometric_error(target, recon, alpha)
    return recon, BinaryMask(valid), pe


def cmd_warp(args) -> dict:
    K = _intrinsics(args)
    target = io.read_image(args.target)
    source = io.read_image(args.source)
    depth = io.read_depth(args.depth)
    pose = io.read_pose(args.pose)
    recon, valid, pe = _reconstruct(target, source, depth, pose, K, args.alpha)
    out = io.ensure_dir(args.out)
    io.write_image(os.path.join(out, "recon" + (".ppm" if recon.channels == 3 else ".pgm")), recon)
    io.write_mask(os.path.join(out, "valid.pgm"), valid)
    io.write_pfm(os.path.join(out, "pe.pfm"), pe.data[..., 0])
    summary = {
        "mean_pe": _mean_over(pe.data[..., 0], valid.data),
        "valid_pixels": valid.count,
        "alpha": args.alpha,
    }
    if args.eval_mask:
        region = io.read_mask(args.eval_mask)
        if region.shape != valid.shape:
            raise DimensionError("evaluation mask shape differs from the target")
        sel = region.data & valid.data
        summary["mean_pe_masked"] = _mean_over(pe.data[..., 0], sel)
        summary["masked_pixels"] = int(sel.sum())
    io.write_json(os.path.join(out, "summary.json"), summary)
    return summary


def cmd_costvol(args) -> dict:
    K = _intrinsics(args)
    bins = make_depth_bins(args.d_min, args.d_max, args.bins)
    target = io.read_image(args.target)
    source = io.read_image(args.source)
    pose = io.read_pose(args.pose)
    volume = build_cost_volume(target, source, pose, K, bins, args.reduction)
    hints = depth_hints(volume)
    out = io.ensure_dir(args.out)
    cost_dir = io.ensure_dir(os.path.join(out, "cost"))
    exported = volume.finite_cost()
    width = len(str(bins.count - 1))
    for i in range(bins.count):
        io.write_pfm(os.path.join(cost_dir, f"bin_{i:0{width}d}.pfm"), exported[i])
    io.write_depth(os.path.join(out, "depth_hints.pfm"), hints)
    summary = {
        "bins": {"d_min": bins.d_min, "d_max": bins.d_max, "count": bins.count, "spacing": bins.spacing},
        "degenerate": volume.is_degenerate(),
        "invalid_cells": int((~volume.valid).sum()),
        "hint_pixels": int(hints.valid.sum()),
    }
    if args.ref_depth:
        ref = io.read_depth(args.ref_depth)
        m = consistency_mask(hints, ref, args.ratio)
        io.write_mask(os.path.join(out, "consistency.pgm"), m)
        summary["consistency_flagged"] = m.count
    if args.gt_depth:
        gt = io.read_depth(args.gt_depth)
        sel = hints.valid & gt.valid
        if not sel.any():
            raise DomainError("no pixels with both a hint and ground truth")
        g, h = gt.data[sel], hints.data[sel]
        abs_rel = float(np.mean(np.abs(h - g) / g))
        bound = float(np.mean(0.5 * bins.spacing / g))
        summary["hint_vs_truth"] = {
            "abs_rel": abs_rel,
            "half_bin_bound": bound,
            "within_bound": abs_rel < bound,
            "within_one_bin": float(np.mean(np.abs(h - g) <= bins.spacing)),
            "pixels": int(sel.sum()),
        }
    io.write_json(os.path.join(out, "summary.json"), summary)
    return summary


def _write_masks(out, masks) -> None:
    for name in ("m_co", "m_con", "m_ground", "m_i"):
        io.write_mask(os.path.join(out, f"{name}.pgm"), getattr(masks, name))


def cmd_mask(args) -> dict:
    K = _intrinsics(args)
    d_over = io.read_depth(args.d_over)
    d_ref = io.read_depth(args.d_ref)
    masks = generate_masks(d_over, d_ref, K, args.ground_region, args.co, args.con, seed=args.seed)
    out = io.ensure_dir(args.out)
    _write_masks(out, masks)
    prov = masks.provenance()
    if args.gt_dynamic:
        truth = io.read_mask(args.gt_dynamic)
        if truth.shape != masks.m_i.shape:
            raise DimensionError("ground-truth mask shape differs from the depth maps")
        prov["against_truth"] = _recall_precision(masks.m_i.data, truth.data)
    io.write_json(os.path.join(out, "provenance.json"), prov)
    return prov


def _eval_frame(pred_path, gt_path, max_depth, median):
    return evaluate(io.read_depth(pred_path), io.read_depth(gt_path), max_depth, median)


def cmd_eval(args) -> dict:
    pred_names = {f for f in os.listdir(args.pred_dir) if f.endswith(".pfm")}
    gt_names = {f for f in os.listdir(args.gt_dir) if f.endswith(".pfm")}
    for name in sorted(pred_names ^ gt_names):
        log.warning("skipping unmatched frame %s", name)
    names = sorted(pred_names & gt_names)
    if not names:
        raise InputError("no frames with matching names")
    jobs = [(os.path.join(args.pred_dir, n), os.path.join(args.gt_dir, n), args.max_depth, args.median_scale)
            for n in names]
    with ThreadPoolExecutor(max_workers=max(1, args.workers)) as pool:
        reports = list(pool.map(lambda j: _eval_frame(*j), jobs))
    total = aggregate(reports)
    out = io.ensure_dir(args.out)
    frames = [os.path.splitext(n)[0] for n in names]
    write_csv(os.path.join(out, "eval.csv"), list(zip(frames, reports)), total)
    return {"frames": len(names), "abs_rel": total.abs_rel, "delta1": total.delta1}


def _loss_terms(l_ph, l_ph_s, m, m_i, l_c, l_sm, l_sm_s, beta, valid, dynamic) -> dict:
    b = total_loss(l_ph, l_ph_s, m, m_i, l_c, l_sm, l_sm_s, beta, valid)
    gate_ph = ~m.data & ~m_i.data & valid.data
    gate_ph_s = ~m_i.data & valid.data
    n_ph, n_ph_s = int(gate_ph.sum()), int(gate_ph_s.sum())
    dyn_ph = float(l_ph.data[..., 0][gate_ph & dynamic].sum() / n_ph) if n_ph else 0.0
    dyn_ph_s = float(l_ph_s.data[..., 0][gate_ph_s & dynamic].sum() / n_ph_s) if n_ph_s else 0.0
    return {"breakdown": b.to_dict(), "dynamic_ph": dyn_ph, "dynamic_ph_s": dyn_ph_s}


def _filled(depth: DepthMap) -> DepthMap:
    if depth.valid.all():
        return depth
    fill = float(np.median(depth.data[depth.valid]))
    return DepthMap(np.where(depth.valid, depth.data, fill))


def cmd_demo_dynamic(args) -> dict:
    if args.scene:
        scene = synth.SceneSpec.from_dict(io.read_json(args.scene))
    else:
        scene = synth.demo_scene(args.variant)
    K = _intrinsics(args, required=False) or synth.demo_intrinsics(args.height, args.width)
    pose = io.read_pose(args.pose) if args.pose else synth.demo_pose()
    h, w = args.height, args.width

    ref = synth.render(scene, RigidPose.identity(), K, 0.0, h, w)
    prev = synth.render(scene, pose, K, -1.0, h, w)
    d_over, ill_posed = synth.overfit_depth_map(scene, pose, K, h, w, frame=ref)
    d_ref = ref.depth
    masks = generate_masks(d_over, d_ref, K, args.ground_region, args.co, args.con, seed=args.seed)

    # the multi-frame branch sees the over-fit depth, the single-frame teacher the true one
    _, valid_t, l_ph = _reconstruct(ref.image, prev.image, d_over, pose, K, args.alpha)
    _, valid_s, l_ph_s = _reconstruct(ref.image, prev.image, d_ref, pose, K, args.alpha)
    valid = valid_t & valid_s
    m = consistency_mask(d_over, d_ref, args.ratio)
    l_c = consistency_loss(d_over, d_ref, m)
    l_sm = smoothness(_filled(d_over), ref.image)
    l_sm_s = smoothness(_filled(d_ref), ref.image)
    dynamic = ref.dynamic_mask(scene)
    no_gate = BinaryMask.full(m.shape, False)
    gated = _loss_terms(l_ph, l_ph_s, m, masks.m_i, l_c, l_sm, l_sm_s, args.beta, valid, dynamic)
    ungated = _loss_terms(l_ph, l_ph_s, m, no_gate, l_c, l_sm, l_sm_s, args.beta, valid, dynamic)

    out = io.ensure_dir(args.out)
    io.write_json(os.path.join(out, "scene.json"), scene.to_dict())
    io.write_image(os.path.join(out, "frame_ref.ppm"), ref.image)
    io.write_image(os.path.join(out, "frame_prev.ppm"), prev.image)
    io.write_depth(os.path.join(out, "depth_ref.pfm"), d_ref)
    io.write_depth(os.path.join(out, "depth_over.pfm"), d_over)
    io.write_depth(os.path.join(out, "depth_over_aligned.pfm"), masks.d_over_aligned)
    io.write_pfm(os.path.join(out, "object_id.pfm"), ref.object_id.astype(np.float64))
    io.write_mask(os.path.join(out, "dynamic_truth.pgm"), BinaryMask(dynamic))
    io.write_mask(os.path.join(out, "consistency.pgm"), m)
    io.write_pfm(os.path.join(out, "l_ph.pfm"), l_ph.data[..., 0])
    io.write_pfm(os.path.join(out, "l_ph_s.pfm"), l_ph_s.data[..., 0])
    _write_masks(out, masks)

    report = {
        "provenance": masks.provenance(),
        "mask_counts": {
            "m_co": masks.m_co.count,
            "m_con": masks.m_con.count,
            "m_ground": masks.m_ground.count,
            "m_i": masks.m_i.count,
            "dynamic_truth": int(dynamic.sum()),
            "ill_posed": int(ill_posed.sum()),
        },
        "against_truth": _recall_precision(masks.m_i.data, dynamic),
        "loss_gated": gated,
        "loss_ungated": ungated,
    }
    io.write_json(os.path.join(out, "loss.json"), report)
    return report


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="mfdepth", description=__doc__.splitlines()[0])
    p.add_argument("--intrinsics", help="camera intrinsics JSON {fx, fy, cx, cy}")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--out", default="out", help="output directory")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    w = sub.add_parser("warp", help="reconstruct the target from a source view")
    w.add_argument("--target", required=True)
    w.add_argument("--source", required=True)
    w.add_argument("--depth", required=True, help="target depth PFM")
    w.add_argument("--pose", required=True, help="target-to-source pose JSON")
    w.add_argument("--alpha", type=float, default=DEFAULT_ALPHA)
    w.add_argument("--eval-mask", help="PGM restricting an extra mean_pe_masked statistic")
    w.set_defaults(func=cmd_warp)

    c = sub.add_parser("costvol", help="plane-sweep cost volume and depth hints")
    c.add_argument("--target", required=True, help="target image or feature PFM")
    c.add_argument("--source", required=True)
    c.add_argument("--pose", required=True)
    c.add_argument("--d-min", type=float, required=True)
    c.add_argument("--d-max", type=float, required=True)
    c.add_argument("--bins", type=int, default=DEFAULT_BINS)
    c.add_argument("--reduction", choices=("sum", "mean"), default="sum")
    c.add_argument("--ref-depth", help="single-frame depth for the consistency mask")
    c.add_argument("--gt-depth", help="true depth for the hint accuracy summary")
    c.add_argument("--ratio", type=float, default=1.0)
    c.set_defaults(func=cmd_costvol)

    m = sub.add_parser("mask", help="depth-inconsistency masks")
    m.add_argument("--d-over", required=True)
    m.add_argument("--d-ref", required=True)
    m.add_argument("--co", type=float, default=CO_THRESHOLD)
    m.add_argument("--con", type=float, default=CON_THRESHOLD)
    m.add_argument("--ground-region", type=float, default=GROUND_REGION)
    m.add_argument("--gt-dynamic", help="PGM of truly dynamic pixels for recall/precision")
    m.set_defaults(func=cmd_mask)

    e = sub.add_parser("eval", help="depth metrics over matching PFM files")
    e.add_argument("--pred-dir", required=True)
    e.add_argument("--gt-dir", required=True)
    e.add_argument("--max-depth", type=float, default=MAX_DEPTH)
    e.add_argument("--median-scale", action="store_true")
    e.set_defaults(func=cmd_eval)

    d = sub.add_parser("demo-dynamic", help="synthetic dynamic-scene walkthrough")
    d.add_argument("--scene", help="SceneSpec JSON (overrides --variant)")
    d.add_argument("--variant", choices=("default", "static", "co", "contra"), default="default")
    d.add_argument("--pose", help="reference-to-previous pose JSON")
    d.add_argument("--height", type=int, default=128)
    d.add_argument("--width", type=int, default=256)
    d.add_argument("--alpha", type=float, default=DEFAULT_ALPHA)
    d.add_argument("--beta", type=float, default=BETA)
    d.add_argument("--co", type=float, default=CO_THRESHOLD)
    d.add_argument("--con", type=float, default=CON_THRESHOLD)
    d.add_argument("--ratio", type=float, default=1.0)
    d.add_argument("--ground-region", type=float, default=GROUND_REGION)
    d.set_defaults(func=cmd_demo_dynamic)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s: %(message)s")
    try:
        result = args.func(args)
    except (InputError, *INPUT_ERRORS) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except Exception as exc:  # noqa: BLE001
        log.exception("internal failure")
        print(f"internal error: {exc}", file=sys.stderr)
        return EXIT_INTERNAL
    log.info("%s done: %s", args.command, result)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
