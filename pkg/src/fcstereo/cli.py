"""Command line entry points: ``match``, ``eval`` and ``ablate``."""

from __future__ import annotations

import argparse
import csv
import dataclasses
import sys
from pathlib import Path

import numpy as np

from .core import (DataError, DisparityMap, GuideImage, OcclusionMap, ParameterError, PipelineParams, config_key,
                   load_config, parse_value)
from .cost import baseline_cost, read_cvol, truncate_cost
from .crf import BPModel, run_bp, write_energy_trace
from .evaluation import compute_metrics, occlusion_from_gt, read_mask, read_pfm, write_pfm, write_report
from .geodesic import gd_filter
from .ovod import ovod
from .pipeline import match
from .synthetic import two_plane_scene

EXIT_OK, EXIT_USAGE, EXIT_DATA = 0, 1, 2
SCHEDULES = {"seq": "sequential", "sequential": "sequential", "nonseq": "nonsequential",
             "nonsequential": "nonsequential"}
# config keys that have a dedicated flag
_DEDICATED = {"schedule", "iterations", "truncate_cost"}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def read_image(path) -> GuideImage:
    from PIL import Image

    with Image.open(path) as im:
        return GuideImage(np.asarray(im.convert("RGB"), dtype=np.float64))


def write_png16(disp: DisparityMap, path, scale: float = 256.0) -> None:
    """16-bit preview, ``round(d * scale)``, invalid pixels 0."""
    from PIL import Image

    v = np.where(disp.valid, disp.values, 0.0)
    q = np.clip(np.rint(v * scale), 0, 65535).astype(np.uint16)
    Image.fromarray(q).save(path, format="PNG")


def _add_config_flags(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("config overrides")
    for f in dataclasses.fields(PipelineParams):
        key = config_key(f.name)
        if key in _DEDICATED:
            continue
        g.add_argument("--" + key.replace("_", "-"), dest="cfg_" + f.name, default=None, metavar="V")


def resolve_params(args) -> PipelineParams:
    params = load_config(args.config) if args.config else PipelineParams()
    updates = {}
    fmap = {f.name: f for f in dataclasses.fields(PipelineParams)}
    for name, f in fmap.items():
        raw = getattr(args, "cfg_" + name, None)
        if raw is not None:
            updates[name] = parse_value(f, raw)
    if args.schedule is not None:
        updates["schedule"] = SCHEDULES[args.schedule]
    if args.iters is not None:
        updates["iterations"] = args.iters
    if args.truncate_cost:
        updates["truncate_cost"] = True
    return dataclasses.replace(params, **updates)


def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="fcstereo", description="Stereo matching with fully connected CRF belief propagation.")
    sub = ap.add_subparsers(dest="command", required=True, parser_class=_Parser)

    m = sub.add_parser("match", help="compute a disparity map")
    m.add_argument("--left", help="left image (any Pillow format)")
    m.add_argument("--right", help="right image")
    m.add_argument("--cost", help="external full-resolution CVOL cost volume")
    m.add_argument("--config", help="key = value config file")
    m.add_argument("--out", required=True, help="output directory")
    m.add_argument("--schedule", choices=sorted(SCHEDULES))
    m.add_argument("--iters", type=int)
    m.add_argument("--truncate-cost", action="store_true")
    m.add_argument("--no-postproc", action="store_true")
    m.add_argument("--seed", type=int, default=0, help="synthetic scene seed when no images are given")
    m.add_argument("--size", type=int, default=128, help="synthetic scene side length")
    m.add_argument("--gap", type=int, default=12, help="synthetic foreground/background disparity gap")
    _add_config_flags(m)

    e = sub.add_parser("eval", help="score a disparity map against ground truth")
    e.add_argument("--result", required=True)
    e.add_argument("--gt", required=True)
    e.add_argument("--mask", help="non-occlusion mask image (255 = visible)")
    e.add_argument("--out", required=True, help="report CSV")
    e.add_argument("--name", default=None, help="image name in the report")
    e.add_argument("--quantile", choices=("percentile", "trimmed"), default="percentile")

    a = sub.add_parser("ablate", help="WTA/OVOD and schedule comparison on one instance")
    a.add_argument("--left")
    a.add_argument("--right")
    a.add_argument("--gt", help="ground-truth PFM (required with --left/--right)")
    a.add_argument("--config")
    a.add_argument("--out", required=True, help="comparison CSV")
    a.add_argument("--seed", type=int, default=0)
    a.add_argument("--size", type=int, default=64)
    a.add_argument("--d-bg", type=int, default=2)
    a.add_argument("--gap", type=int, default=6)
    a.add_argument("--schedule", choices=sorted(SCHEDULES))
    a.add_argument("--iters", type=int)
    a.add_argument("--truncate-cost", action="store_true")
    _add_config_flags(a)
    return ap


def cmd_match(args) -> int:
    params = resolve_params(args)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    scene = None
    if args.left:
        left = read_image(args.left)
        right = read_image(args.right) if args.right else None
        if right is None and not args.cost:
            raise UsageError("match needs --right or --cost together with --left")
    elif args.right or args.cost:
        raise UsageError("--right/--cost require --left")
    else:
        scene = two_plane_scene(args.size, args.size, d_bg=4, gap=args.gap, seed=args.seed)
        left, right = scene.left, scene.right
        if params.labels is None:
            params = dataclasses.replace(params, labels=scene.labels)
    cost = read_cvol(args.cost, expect_shape=left.shape) if args.cost else None
    res = match(left, right, cost, params, postproc=not args.no_postproc)
    write_pfm(res.disparity, out / "disparity.pfm")
    write_png16(res.disparity, out / "disparity.png")
    (out / "occlusion.pgm").write_bytes(res.occlusion.to_pgm_bytes())
    write_energy_trace(res.energy_trace, out / "energy.csv")
    if scene is not None:
        write_pfm(scene.gt, out / "gt.pfm")
        (out / "gt_occlusion.pgm").write_bytes(OcclusionMap(scene.occluded).to_pgm_bytes())
    return EXIT_OK


def cmd_eval(args) -> int:
    result = read_pfm(args.result)
    gt = read_pfm(args.gt)
    occ = OcclusionMap(~read_mask(args.mask)) if args.mask else occlusion_from_gt(gt)
    report = compute_metrics(result, gt, occ, args.quantile)
    write_report(report.rows(args.name or Path(args.result).stem), args.out)
    return EXIT_OK


ABLATE_FIELDS = ("source", "solver", "avrg_all", "avrg_nonocc", "rms_all", "bad1_all", "bad1_nonocc",
                 "occ_recall", "energy")


def ablation_rows(left: GuideImage, right: GuideImage, gt: DisparityMap, occ: OcclusionMap,
                  params: PipelineParams, band: np.ndarray | None = None) -> list[dict]:
    """{WTA, OVOD} x {raw, filtered, BP} at full resolution, plus the schedule comparison."""
    labels = params.labels if params.labels is not None else int(np.nanmax(gt.values[gt.valid])) + 4
    cost = baseline_cost(left, right, labels, params.census_width, params.census_height,
                         params.census_alpha, params.ad_tau, params.border_fill)
    if params.truncate_cost:
        cost = truncate_cost(cost)
    model = BPModel.build(left, params)
    filtered, _ = gd_filter(cost.values, model.edges, normalize=True)
    seq = run_bp(cost, left, params, "sequential", params.iterations, model=model)
    nonseq = run_bp(cost, left, params, "nonsequential", 2 * params.iterations, model=model)
    ref_band = band if band is not None else occ.occluded
    rows = []
    for source, vol in (("raw", cost.values), ("filtered", filtered), ("bp", seq.marginals)):
        sol = ovod(cost.with_values(vol), params.shear)
        for solver, disp in (("wta", sol.s_left), ("ovod", sol.fused)):
            rep = compute_metrics(disp, gt, occ)
            recall = ""
            if solver == "ovod" and ref_band.any():
                recall = float((sol.occlusion.occluded & ref_band).sum() / ref_band.sum())
            rows.append({"source": source, "solver": solver, "avrg_all": rep.all.avrg,
                         "avrg_nonocc": rep.nonocc.avrg if rep.nonocc else "", "rms_all": rep.all.rms,
                         "bad1_all": rep.all.bad1, "bad1_nonocc": rep.nonocc.bad1 if rep.nonocc else "",
                         "occ_recall": recall, "energy": ""})
    for name, res in ((f"sequential-{params.iterations}", seq), (f"nonsequential-{2 * params.iterations}", nonseq)):
        rows.append({"source": "bp", "solver": name, "energy": res.energy_trace[-1]})
    return rows


def cmd_ablate(args) -> int:
    params = resolve_params(args)
    band = None
    if args.left or args.right:
        if not (args.left and args.right and args.gt):
            raise UsageError("ablate with files needs --left, --right and --gt")
        left, right, gt = read_image(args.left), read_image(args.right), read_pfm(args.gt)
        occ = occlusion_from_gt(gt)
    else:
        sc = two_plane_scene(args.size, args.size, d_bg=args.d_bg, gap=args.gap, seed=args.seed)
        left, right, gt, occ, band = sc.left, sc.right, sc.gt, OcclusionMap(sc.occluded), sc.band
        if params.labels is None:
            params = dataclasses.replace(params, labels=sc.labels)
    rows = ablation_rows(left, right, gt, occ, params, band)
    with open(args.out, "w", newline="") as fh:
        wr = csv.DictWriter(fh, fieldnames=ABLATE_FIELDS, restval="", lineterminator="\n")
        wr.writeheader()
        for row in rows:
            wr.writerow({k: (repr(v) if isinstance(v, float) else v) for k, v in row.items()})
    return EXIT_OK


def main(argv=None) -> int:
    ap = build_parser()
    args = ap.parse_args(argv)
    handler = {"match": cmd_match, "eval": cmd_eval, "ablate": cmd_ablate}[args.command]
    try:
        return handler(args)
    except (UsageError, ParameterError) as e:
        print(f"fcstereo {args.command}: {e}", file=sys.stderr)
        return EXIT_USAGE
    except (DataError, ArithmeticError, OSError) as e:
        print(f"fcstereo {args.command}: {e}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
