"""Command-line entry point: generate, match, decode, evaluate, plan and config.

Exit codes: 0 success, 2 usage/config/input error, 3 domain failure.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence

import numpy as np
import tomli

from . import __version__, io
from .codec import (
    CodecConfig, Detection, KeypointSet, decode_keypoints, decode_obbs, detections_from_json,
    detections_to_json, encode_keypoints, encode_obb_targets, load_head_tensors,
)
from .config import RunConfig, load_config, write_example_config
from .errors import (
    ConfigError, DatasetIOError, IncompleteState, NoIntersection, NothingToGrasp, PlaneFitError,
    ShapeError, SimStereoError, UndefinedMetric, Ungraspable,
)
from .geometry import Obb, Plane, StereoRig
from .metrics import compute_keypoint_map, compute_map_3d, disparity_errors, pooled_epe
from .pipeline import StereoConfig, match, textured_mask
from .planner import FoldConfig, GraspConfig, fit_table_plane, lift_keypoint, plan_fold_step, plan_grasp
from .plotting import write_pr_report
from .stereo import DisparityMap

log = logging.getLogger("simstereo")

EXIT_OK, EXIT_ERROR, EXIT_USAGE, EXIT_DOMAIN = 0, 1, 2, 3
PRED_MANIFEST = "manifest.json"


class UsageError(SimStereoError):
    pass


_DOMAIN_ERRORS = (NothingToGrasp, Ungraspable, IncompleteState, PlaneFitError, NoIntersection)
_USAGE_ERRORS = (UsageError, ConfigError, ShapeError, DatasetIOError, OSError, KeyError, ValueError)


# --------------------------------------------------------------------------- helpers


def _parse_set(items: Optional[Sequence[str]]) -> Dict[str, Any]:
    out: Dict[str, Any] = {}
    for item in items or []:
        if "=" not in item:
            raise ConfigError(f"--set expects KEY=VALUE, got {item!r}")
        key, raw = item.split("=", 1)
        key = key.strip()
        try:
            out[key] = tomli.loads(f"v = {raw}")["v"]
        except tomli.TOMLDecodeError:
            out[key] = raw  # bare strings
    return out


def _config(args, flags: Dict[str, Any]) -> RunConfig:
    """Config file, then ``--set`` pairs, then dedicated flags (flags win)."""
    cfg = load_config(args.config, _parse_set(args.set))
    return cfg.override(flags)


def _sha256_text(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def _gt_manifest(root: Path) -> dict:
    path = root / "manifest.json"
    if not path.is_file():
        raise UsageError(f"{root}: no dataset manifest")
    m = io.load_json(path)
    if "scenes" not in m:
        raise UsageError(f"{path}: not a dataset manifest")
    return m


def _write_pred_manifest(pred: Path, gt: Path, producer: str) -> None:
    gt_manifest = _gt_manifest(gt)
    path = pred / PRED_MANIFEST
    entry = {
        "source_manifest_sha256": _sha256_text(gt / "manifest.json"),
        "scenes": [s["name"] for s in gt_manifest["scenes"]],
        "producers": [producer],
    }
    if path.is_file():
        old = io.load_json(path)
        if old.get("source_manifest_sha256") == entry["source_manifest_sha256"]:
            entry["producers"] = sorted(set(old.get("producers", [])) | {producer})
    io.dump_json(path, entry)


def _check_manifests(pred: Path, gt: Path) -> List[str]:
    """Scene names shared by ``pred`` and ``gt``; raises on mismatch."""
    gt_manifest = _gt_manifest(gt)
    names = [s["name"] for s in gt_manifest["scenes"]]
    pm_path = pred / PRED_MANIFEST
    if not pm_path.is_file():
        raise UsageError(f"{pred}: no manifest")
    if pred.resolve() == gt.resolve():
        return names
    pm = io.load_json(pm_path)
    if "source_manifest_sha256" not in pm:
        # another dataset directory: accept only an identical manifest
        if _sha256_text(pm_path) != _sha256_text(gt / "manifest.json"):
            raise UsageError("prediction and ground-truth manifests differ")
        return names
    if pm["source_manifest_sha256"] != _sha256_text(gt / "manifest.json"):
        raise UsageError("predictions were produced from a different dataset")
    if list(pm.get("scenes", [])) != names:
        raise UsageError("prediction and ground-truth scene lists differ")
    return names


def _read_rig(path: Path) -> StereoRig:
    try:
        d = io.load_json(path)
    except (OSError, json.JSONDecodeError) as exc:
        raise UsageError(f"cannot read rig metadata {path}: {exc}") from exc
    d = d.get("camera", d) if isinstance(d, dict) else d
    try:
        return StereoRig.from_dict(d)
    except (KeyError, TypeError, ValueError) as exc:
        raise UsageError(f"{path}: incomplete rig metadata ({exc})") from exc


def _write_json_atomic(path: Path, obj) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(path.name + ".partial")
    io.dump_json(tmp, obj)
    os.replace(tmp, path)


def _pool_map(fn, jobs: list, workers: int) -> list:
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(fn, jobs))
    return [fn(j) for j in jobs]


# --------------------------------------------------------------------------- generate


def cmd_generate(args) -> int:
    from .synth.dataset import write_dataset

    cfg = _config(args, {"seed": args.seed, "workers": args.workers, "scenes": args.scenes,
                         "scene_type": args.scene_type})
    out = Path(args.out)
    start = time.perf_counter()
    write_dataset(out, cfg.run.scenes, cfg.dataset_config(), cfg.run.seed, cfg.run.workers)
    dt = time.perf_counter() - start
    rate = cfg.run.scenes / dt if dt > 0 else float("inf")
    print(out / "manifest.json")
    print(f"{cfg.run.scenes} scenes in {dt:.2f} s ({rate:.2f} scenes/s)")
    return EXIT_OK


# --------------------------------------------------------------------------- match


def _write_match(out: Path, left: np.ndarray, right: np.ndarray, stereo: StereoConfig) -> None:
    res = match(left, right, stereo)
    io.write_disparity_pfm(out / "disparity_low.pfm", res.low_full)
    io.write_disparity_png(out / "disparity_low.png", res.low_full)
    io.write_disparity_pfm(out / "disparity.pfm", res.full)
    io.write_disparity_png(out / "disparity.png", res.full)


def _check_pair(left: np.ndarray, right: np.ndarray, rig: StereoRig) -> None:
    if left.shape != right.shape:
        raise ShapeError(f"left {left.shape[:2]} and right {right.shape[:2]} differ")
    cam = rig.intrinsics
    if left.shape[:2] != (cam.height, cam.width):
        raise ShapeError(f"image size {left.shape[1]}x{left.shape[0]} does not match the rig "
                         f"({cam.width}x{cam.height})")
    if cam.width % 4 or cam.height % 4:
        raise ShapeError("image size must be divisible by 4")


def _match_scene(job) -> str:
    gt_dir, out_dir, stereo = job
    gt_dir, out_dir = Path(gt_dir), Path(out_dir)
    left = io.read_image(gt_dir / "left.png")
    right = io.read_image(gt_dir / "right.png")
    _check_pair(left, right, _read_rig(gt_dir / "labels.json"))
    out_dir.mkdir(parents=True, exist_ok=True)
    _write_match(out_dir, left, right, stereo)
    return out_dir.name


def cmd_match(args) -> int:
    cfg = _config(args, {"workers": args.workers, "num_slices": args.num_slices,
                         "temperature": args.temperature})
    out = Path(args.out)
    if args.dataset:
        gt = Path(args.dataset)
        names = [s["name"] for s in _gt_manifest(gt)["scenes"]]
        with io.PartialMarker(out):
            jobs = [(str(gt / n), str(out / n), cfg.stereo) for n in names]
            _pool_map(_match_scene, jobs, cfg.run.workers)
            _write_pred_manifest(out, gt, "match")
        print(out / PRED_MANIFEST)
        return EXIT_OK
    if args.scene:
        scene = Path(args.scene)
        left_p, right_p, rig_p = scene / "left.png", scene / "right.png", scene / "labels.json"
    else:
        if not (args.left and args.right):
            raise UsageError("give --dataset, --scene, or both --left and --right")
        left_p, right_p = Path(args.left), Path(args.right)
        if not args.rig:
            raise UsageError("--rig is required with --left/--right")
        rig_p = Path(args.rig)
    rig = _read_rig(rig_p)
    left, right = io.read_image(left_p), io.read_image(right_p)
    _check_pair(left, right, rig)
    with io.PartialMarker(out):
        _write_match(out, left, right, cfg.stereo)
    print(out / "disparity.pfm")
    return EXIT_OK


# --------------------------------------------------------------------------- decode


def _oracle_tensors(scene_dir: Path, codec: CodecConfig):
    """Head targets encoded from the ground-truth labels, used in place of network outputs."""
    lab = io.load_json(scene_dir / "labels.json")
    rig = StereoRig.from_dict(lab["camera"])
    cam = rig.intrinsics
    boxes = [Obb.from_dict(b) for b in lab["boxes"]]
    covs = [np.array(c, float).reshape(3, 3) for c in lab["covariances"]]
    tensors = encode_obb_targets(boxes, cam, covs, codec)
    kps = KeypointSet.from_list([{"class": c, "u": p[0], "v": p[1]} for c, pts in lab["keypoints"].items()
                                 for p in pts])
    tensors.kp_heatmaps = encode_keypoints(kps, cam.width, cam.height, tensors.kp_classes, codec.kp_sigma)
    return tensors, cam


def _decode(tensors, cam, codec: CodecConfig) -> dict:
    dets = decode_obbs(tensors, cam, codec.detect_threshold, codec)
    kps = decode_keypoints(tensors.kp_heatmaps, tensors.kp_classes, codec.kp_threshold, codec.kp_radius)
    return {"detections": detections_to_json(dets), "keypoints": kps.to_list()}


def _decode_scene(job) -> str:
    gt_dir, out_dir, codec = job
    tensors, cam = _oracle_tensors(Path(gt_dir), codec)
    res = _decode(tensors, cam, codec)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    io.dump_json(out / "detections.json", res["detections"])
    io.dump_json(out / "keypoints.json", res["keypoints"])
    return out.name


def cmd_decode(args) -> int:
    cfg = _config(args, {"workers": args.workers, "detect_threshold": args.threshold})
    out = Path(args.out)
    if args.dataset:
        gt = Path(args.dataset)
        names = [s["name"] for s in _gt_manifest(gt)["scenes"]]
        with io.PartialMarker(out):
            jobs = [(str(gt / n), str(out / n), cfg.codec) for n in names]
            _pool_map(_decode_scene, jobs, cfg.run.workers)
            _write_pred_manifest(out, gt, "decode")
        print(out / PRED_MANIFEST)
        return EXIT_OK
    if not args.tensors:
        raise UsageError("give --dataset or --tensors")
    if not args.rig:
        raise UsageError("--rig is required with --tensors")
    rig = _read_rig(Path(args.rig))
    tensors = load_head_tensors(args.tensors)
    res = _decode(tensors, rig.intrinsics, cfg.codec)
    _write_json_atomic(out, res)
    print(out)
    return EXIT_OK


# --------------------------------------------------------------------------- evaluate


def _pred_detections(scene_dir: Path) -> List[Detection]:
    p = scene_dir / "detections.json"
    if p.is_file():
        return detections_from_json(io.load_json(p))
    lab = scene_dir / "labels.json"
    if lab.is_file():  # a ground-truth directory evaluated as predictions
        return [Detection(Obb.from_dict(b), 1.0) for b in io.load_json(lab)["boxes"]]
    raise UsageError(f"{scene_dir}: no detections.json")


def _pred_keypoints(scene_dir: Path) -> KeypointSet:
    p = scene_dir / "keypoints.json"
    if p.is_file():
        return KeypointSet.from_list(io.load_json(p))
    lab = scene_dir / "labels.json"
    if lab.is_file():
        kp = io.load_json(lab)["keypoints"]
        return KeypointSet.from_list([{"class": c, "u": q[0], "v": q[1], "score": 1.0}
                                      for c, pts in kp.items() for q in pts])
    raise UsageError(f"{scene_dir}: no keypoints.json")


def _disparity_mask(gt_dir: Path, gt: DisparityMap, max_disparity: float) -> np.ndarray:
    left = io.read_image(gt_dir / "left.png")
    nonocc = io.read_png16(gt_dir / "nonocc.png") > 0
    return gt.valid & nonocc & textured_mask(left) & (gt.data <= max_disparity)


def _eval_disparity_scene(job):
    pred_dir, gt_dir, max_disp = job
    gt = io.read_disparity_pfm(Path(gt_dir) / "disparity.pfm")
    pred_path = Path(pred_dir) / "disparity.pfm"
    if not pred_path.is_file():
        raise UsageError(f"{pred_dir}: no disparity.pfm")
    pred = io.read_disparity_pfm(pred_path)
    return disparity_errors(pred, gt, _disparity_mask(Path(gt_dir), gt, max_disp))


def cmd_evaluate(args) -> int:
    cfg = _config(args, {"workers": args.workers, "iou_thresh": args.iou_thresh,
                         "kp_match_radius": args.kp_radius, "interpolation": args.interpolation})
    pred, gt, out = Path(args.pred), Path(args.gt), Path(args.out)
    names = _check_manifests(pred, gt)
    results: Dict[str, Any] = {"task": args.task, "num_scenes": len(names)}
    curves = {}
    if args.task == "obb":
        scenes = []
        for n in names:
            boxes = [Obb.from_dict(b) for b in io.load_json(gt / n / "labels.json")["boxes"]]
            scenes.append((_pred_detections(pred / n), boxes))
        results["iou_thresh"] = cfg.eval.iou_thresh
        results["interpolation"] = cfg.eval.interpolation
        results["num_gt"] = sum(len(g) for _, g in scenes)
        results["num_pred"] = sum(len(p) for p, _ in scenes)
        try:
            ap, curve = compute_map_3d(scenes, cfg.eval.iou_thresh, cfg.eval.interpolation)
            results["map"] = ap
            results["curve"] = curve.to_dict()
            curves["obb"] = curve
        except UndefinedMetric as exc:
            results["map"] = None
            results["undefined"] = str(exc)
    elif args.task == "keypoint":
        preds, gts = [], []
        for n in names:
            preds.append(_pred_keypoints(pred / n))
            gts.append(io.load_json(gt / n / "labels.json")["keypoints"])
        results["radius"] = cfg.eval.kp_match_radius
        results["interpolation"] = cfg.eval.interpolation
        try:
            per_class, mean, kcurves = compute_keypoint_map(preds, gts, cfg.eval.kp_match_radius,
                                                            cfg.eval.interpolation)
            results["map"] = mean
            results["per_class"] = per_class
            results["curves"] = {k: c.to_dict() for k, c in kcurves.items()}
            curves.update(kcurves)
        except UndefinedMetric as exc:
            results["map"] = None
            results["undefined"] = str(exc)
    else:
        max_disp = cfg.stereo.max_full_disparity
        jobs = [(str(pred / n), str(gt / n), max_disp) for n in names]
        errors = _pool_map(_eval_disparity_scene, jobs, cfg.run.workers)
        per_scene = {}
        for n, e in zip(names, errors):
            per_scene[n] = ({"epe": float(e.mean()), "outliers": float(np.mean(e > 3.0)), "count": int(e.size)}
                            if e.size else None)
        results["max_disparity"] = max_disp
        results["per_scene"] = per_scene
        try:
            results.update(pooled_epe(errors).to_dict())
        except UndefinedMetric as exc:
            results["epe"] = None
            results["undefined"] = str(exc)
    with io.PartialMarker(out):
        io.dump_json(out / "results.json", results)
        if args.task != "disparity":
            write_pr_report(out, f"pr_{args.task}", curves, title=f"{args.task} PR")
    print(json.dumps({k: results[k] for k in ("map", "epe", "outliers") if k in results}, sort_keys=True))
    return EXIT_OK


# --------------------------------------------------------------------------- plan


def _load_detections(path: Path) -> List[Detection]:
    data = io.load_json(path)
    if isinstance(data, dict):
        data = data.get("detections", [])
    return detections_from_json(data)


def _load_keypoints(path: Path) -> Dict[str, List[List[float]]]:
    data = io.load_json(path)
    if isinstance(data, dict) and "keypoints" in data:
        data = data["keypoints"]
    if isinstance(data, list):
        out: Dict[str, List[List[float]]] = {}
        for it in data:
            out.setdefault(it["class"], []).append([float(it["u"]), float(it["v"])])
        return out
    return {k: [list(map(float, p[:2])) for p in v] for k, v in data.items()}


def _parse_vec(text: str) -> tuple:
    try:
        v = tuple(float(x) for x in text.split(","))
    except ValueError as exc:
        raise UsageError(f"expected three comma-separated numbers, got {text!r}") from exc
    if len(v) != 3 or not np.linalg.norm(v) > 0:
        raise UsageError(f"expected a non-zero 3-vector, got {text!r}")
    return v


def _table_plane(args, rig: StereoRig) -> Optional[Plane]:
    if args.plane:
        return Plane.from_dict(io.load_json(args.plane))
    if args.disparity and args.seg:
        disp = io.read_disparity_pfm(args.disparity)
        seg = np.asarray(io.read_png16(args.seg)).astype(np.int64)
        return fit_table_plane(disp, seg, rig)
    return None


def cmd_plan(args) -> int:
    cfg = _config(args, {"plan_threshold": args.threshold})
    out = Path(args.out)
    if args.task == "grasp":
        if not args.detections:
            raise UsageError("--detections is required for grasp planning")
        dets = _load_detections(Path(args.detections))
        live = [(i, d) for i, d in enumerate(dets) if d.confidence >= cfg.eval.plan_threshold]
        if not live:
            raise NothingToGrasp(f"no detection at or above confidence {cfg.eval.plan_threshold}")
        # foremost object: smallest camera-frame depth; ties go to higher confidence, then input order
        idx, target = min(live, key=lambda p: (float(p[1].box.t[2]), -p[1].confidence, p[0]))
        up = _parse_vec(args.up)
        if args.plane:
            n = Plane.from_dict(io.load_json(args.plane)).n
            up = tuple(n)
        plan = plan_grasp(target.box, GraspConfig(up=up))
        _write_json_atomic(out, {"task": "grasp", "target_index": idx, "target": target.to_dict(),
                                 "grasp": plan.to_dict()})
    else:
        if not (args.keypoints and args.rig):
            raise UsageError("--keypoints and --rig are required for fold planning")
        rig = _read_rig(Path(args.rig))
        plane = _table_plane(args, rig)
        if plane is None:
            raise UsageError("fold planning needs --plane or both --disparity and --seg")
        kp2d = _load_keypoints(Path(args.keypoints))
        kp3d = {c: [lift_keypoint(p, plane, rig.intrinsics) for p in pts] for c, pts in kp2d.items()}
        step = plan_fold_step(kp3d, plane, FoldConfig(camera_right=_parse_vec(args.right)))
        _write_json_atomic(out, {"task": "fold", "plane": plane.to_dict(), **step.to_dict()})
    print(out)
    return EXIT_OK


# --------------------------------------------------------------------------- config


def cmd_config(args) -> int:
    cfg = _config(args, {})
    if args.out:
        write_example_config(args.out)
        print(args.out)
    else:
        print(json.dumps(cfg.to_dict(), indent=2, sort_keys=True))
    return EXIT_OK


# --------------------------------------------------------------------------- parser


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _common(p: argparse.ArgumentParser, top: bool = False) -> None:
    # accepted before or after the subcommand; subcommand defaults must not mask the top-level ones
    kw = {} if top else {"default": argparse.SUPPRESS}
    p.add_argument("--config", metavar="FILE", help="flat TOML config file (see `simstereo config`)", **kw)
    p.add_argument("--set", action="append", metavar="KEY=VALUE",
                   help="override one config key; repeatable; applied after --config", **kw)
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr", **kw)


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="simstereo", description="Synthetic stereo scenes, matching, evaluation and planning.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    _common(p, top=True)
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    g = sub.add_parser("generate", help="render a seeded synthetic dataset")
    _common(g)
    g.add_argument("--out", required=True, help="output dataset directory")
    g.add_argument("--scenes", type=int, help="number of scenes (default 10)")
    g.add_argument("--seed", type=int, help="master seed (default 0)")
    g.add_argument("--workers", type=int, help="worker processes; output does not depend on it")
    g.add_argument("--scene-type", choices=("objects", "shirts"), help="tabletop objects or a shirt")
    g.set_defaults(func=cmd_generate)

    m = sub.add_parser("match", help="stereo matching on one pair or a whole dataset")
    _common(m)
    m.add_argument("--out", required=True, help="output directory")
    m.add_argument("--dataset", help="dataset directory; matches every scene")
    m.add_argument("--scene", help="one scene directory (left.png, right.png, labels.json)")
    m.add_argument("--left", help="left image")
    m.add_argument("--right", help="right image")
    m.add_argument("--rig", help="JSON with fx, fy, cx, cy, width, height, baseline")
    m.add_argument("--workers", type=int, help="worker processes for --dataset")
    m.add_argument("--num-slices", type=int, help="cost volume slices")
    m.add_argument("--temperature", type=float, help="softmax temperature")
    m.set_defaults(func=cmd_match)

    d = sub.add_parser("decode", help="decode head tensors into boxes and keypoints")
    _common(d)
    d.add_argument("--out", required=True, help="output JSON file, or directory with --dataset")
    d.add_argument("--dataset", help="dataset directory; decodes targets encoded from its labels")
    d.add_argument("--tensors", help="directory written by save_head_tensors")
    d.add_argument("--rig", help="rig JSON for --tensors")
    d.add_argument("--threshold", type=float, help="peak threshold for detections")
    d.add_argument("--workers", type=int, help="worker processes for --dataset")
    d.set_defaults(func=cmd_decode)

    e = sub.add_parser("evaluate", help="score predictions against a dataset")
    _common(e)
    e.add_argument("--pred", required=True, help="prediction directory")
    e.add_argument("--gt", required=True, help="ground-truth dataset directory")
    e.add_argument("--task", required=True, choices=("obb", "keypoint", "disparity"))
    e.add_argument("--out", required=True, help="output directory for results.json and plots")
    e.add_argument("--iou-thresh", type=float, help="box IoU needed for a match (default 0.25)")
    e.add_argument("--kp-radius", type=float, help="keypoint match radius in pixels (default 20)")
    e.add_argument("--interpolation", choices=("11point", "continuous"), help="AP integration")
    e.add_argument("--workers", type=int, help="worker processes for the disparity task")
    e.set_defaults(func=cmd_evaluate)

    pl = sub.add_parser("plan", help="grasp or fold plan from detections or keypoints")
    _common(pl)
    pl.add_argument("--task", required=True, choices=("grasp", "fold"))
    pl.add_argument("--out", required=True, help="output plan JSON")
    pl.add_argument("--detections", help="detections JSON (grasp)")
    pl.add_argument("--threshold", type=float, help="minimum detection confidence (default 0.3)")
    pl.add_argument("--up", default="0,-1,0", help="gravity-up direction in the camera frame")
    pl.add_argument("--plane", help="table plane JSON {n, d}; its normal replaces --up for grasping")
    pl.add_argument("--keypoints", help="keypoints JSON (fold)")
    pl.add_argument("--rig", help="rig JSON or labels.json (fold)")
    pl.add_argument("--disparity", help="disparity PFM for fitting the table plane (fold)")
    pl.add_argument("--seg", help="segmentation PNG for fitting the table plane (fold)")
    pl.add_argument("--right", default="1,0,0", help="camera-frame direction used to order left/right")
    pl.set_defaults(func=cmd_plan)

    c = sub.add_parser("config", help="print the effective config or write a template")
    _common(c)
    c.add_argument("--out", help="write every key with its default to this TOML file")
    c.set_defaults(func=cmd_config)
    return p


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except _DOMAIN_ERRORS as exc:
        print(f"simstereo {args.command}: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_DOMAIN
    except _USAGE_ERRORS as exc:
        print(f"simstereo {args.command}: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
