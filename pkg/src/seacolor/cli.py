"""Command-line entry point: ``seacolor <subcommand> ...``.

Every subcommand prints one JSON document (or one per line in batch mode)
on stdout and writes images under ``--out``. Exit codes: 0 success,
1 processing error, 2 usage error. Set ``DEWATER_LOG`` (DEBUG, INFO, ...)
for log output on stderr.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import hypercube, imagecore, metrics, objectives, photometry, watercolumn
from .errors import SeacolorError
from .imagecore import RasterImage, WaterMask

REF_BANDS = (33, 45, 56)
REF_ALPHA = 0.9
REF_SEED = 100
REF_BATCH = 6
REF_LR = 2e-4
REF_BETAS = (0.5, 0.999)
REF_WEIGHTS = objectives.LossWeights()


class UsageError(SeacolorError):
    pass


def _triplet(text: str):
    try:
        vals = tuple(int(v) for v in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected three comma-separated band numbers, got {text!r}")
    if len(vals) != 3:
        raise argparse.ArgumentTypeError(f"expected three band numbers, got {text!r}")
    return vals


def _veiling(text: str):
    if text == "auto":
        return "auto"
    try:
        vals = tuple(float(v) for v in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"--veiling must be 'auto' or r,g,b; got {text!r}")
    if len(vals) != 3 or any(not 0.0 <= v <= 1.0 for v in vals):
        raise argparse.ArgumentTypeError("--veiling needs three values in [0, 1]")
    return vals


def _alpha(text: str):
    try:
        vals = [float(v) for v in text.split(",")]
    except ValueError:
        raise argparse.ArgumentTypeError(f"--alpha must be a number or r,g,b; got {text!r}")
    if len(vals) not in (1, 3) or any(v <= 0 for v in vals):
        raise argparse.ArgumentTypeError("--alpha needs one or three positive values")
    return vals[0] if len(vals) == 1 else tuple(vals)


def _emit(obj) -> None:
    sys.stdout.write(json.dumps(obj, sort_keys=True) + "\n")


def _out_dir(path) -> Path:
    p = Path(path)
    p.mkdir(parents=True, exist_ok=True)
    return p


def _mask_for(path, img: RasterImage) -> WaterMask:
    if path is None:
        return WaterMask.full(img.height, img.width)
    return imagecore.read_mask(path)


# --- subcommands ---------------------------------------------------------------------

def cmd_build_dataset(args):
    records = hypercube.build_dataset(args.cubes, args.out, args.bands, args.tile,
                                      args.nir_band, args.threshold, args.jobs)
    _emit({"records": len(records), "manifest": str(Path(args.out) / "manifest.jsonl")})


def cmd_verify(args):
    problems = hypercube.verify_dataset(args.manifest, args.expect_bands)
    _emit({"ok": not problems, "problems": problems})
    return 0 if not problems else 1


def cmd_decompose(args):
    cube = hypercube.load_cube(args.cube)
    mask = imagecore.read_mask(args.mask) if args.mask else None
    if args.mask is None and args.auto_mask:
        mask = hypercube.infer_water_mask(cube, args.nir_band, args.threshold)
    dec = photometry.decompose(cube, args.bands, mask, args.lo, args.hi)
    out = _out_dir(args.out)
    imagecore.write_image(dec.diffuse, out / "diffuse.png")
    imagecore.write_image(dec.specular, out / "specular.png")
    k = dec.k_expect.data
    k_scale = float(k.max()) if k.max() > 0 else 1.0
    imagecore.write_image(RasterImage(np.clip(k / k_scale, 0.0, 1.0)), out / "k_expect.png")
    gate = mask if mask is not None else WaterMask.full(cube.height, cube.width)
    residual = photometry.reconstruction_residual(cube, dec.diffuse_raw, dec.k_expect, gate,
                                                  dec.bands, dec.illuminant)
    report = {
        "illuminant": dec.illuminant.values.tolist(),
        "residual": residual,
        "k_expect_scale": k_scale,
        "degenerate_channels": list(dec.degenerate_channels),
        "rejected_bands": list(dec.illuminant.rejected_bands()),
    }
    (out / "report.json").write_text(json.dumps(report, indent=1, sort_keys=True))
    _emit(report)


def _resolve_veiling(spec, img, mask):
    if spec == "auto":
        return watercolumn.veiling_grey_world(img, mask)
    return np.asarray(spec, dtype=np.float64)


def cmd_synthesize(args):
    J = imagecore.read_image(args.input)
    r = imagecore.read_image(args.range)
    if r.channels != 1:
        r = RasterImage(r.data.mean(axis=2))
    r = RasterImage(r.data * args.range_scale)
    mask = _mask_for(args.mask, J)
    T = watercolumn.transmission_from_range(r, args.alpha)
    V = _resolve_veiling(args.veiling, J, mask)
    N = watercolumn.synthesize_underwater(J, T, V, mask)
    out = _out_dir(args.out)
    imagecore.write_image(N, out / "N.png")
    imagecore.write_image(T, out / "T.png")
    _emit({"veiling": V.tolist(), "alpha": args.alpha, "N": str(out / "N.png"), "T": str(out / "T.png")})


def cmd_dewater(args):
    N = imagecore.read_image(args.input)
    mask = _mask_for(args.mask, N)
    if args.trans:
        T = imagecore.read_image(args.trans)
    elif args.range:
        r = imagecore.read_image(args.range)
        if r.channels != 1:
            r = RasterImage(r.data.mean(axis=2))
        T = watercolumn.transmission_from_range(RasterImage(r.data * args.range_scale), args.alpha)
    else:
        raise UsageError("dewater needs --trans or --range")
    T = watercolumn.TransmissionMap.from_raster(T)
    V = _resolve_veiling(args.veiling, N, mask)
    J = watercolumn.dewater(N, T, V, mask)
    out = _out_dir(args.out)
    imagecore.write_image(J, out / "J.png")
    _emit({"veiling": V.tolist(), "J": str(out / "J.png")})


def _metric_pair(job):
    ref, test, which = job
    ref_img = imagecore.read_image(ref) if ref else None
    rep = metrics.evaluate(ref_img, imagecore.read_image(test), which)
    out = rep.to_json_dict()
    out["test"] = str(test)
    return out


LOSS_TARGETS = ("diffuse", "specular", "T", "J", "N", "x")
LOSS_PREDS = ("diffuse", "specular", "T", "J")


def _loss_pair(job):
    targets_dir, preds_dir, mask_path, veiling, weights = job
    tdir, pdir = Path(targets_dir), Path(preds_dir)
    targets = {k: imagecore.read_image(tdir / f"{k}.png") for k in LOSS_TARGETS}
    targets["cube_rgb"] = targets.pop("x")
    preds = {k: imagecore.read_image(pdir / f"{k}.png") for k in LOSS_PREDS}
    mask = imagecore.read_mask(mask_path) if mask_path else imagecore.read_mask(tdir / "mask.png")
    V = _resolve_veiling(veiling, targets["N"], mask)
    rep = objectives.evaluate_losses(None, targets, preds, mask, V, weights)
    out = rep.as_dict()
    out["targets"], out["preds"] = str(tdir), str(pdir)
    return out


def _run_jobs(fn, jobs, n_workers):
    if n_workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=n_workers) as pool:
            return list(pool.map(fn, jobs))
    return [fn(j) for j in jobs]


def cmd_evaluate(args):
    weights = objectives.LossWeights(*args.weights)
    if args.losses:
        if args.pairs:
            jobs = [(p["targets"], p["preds"], p.get("mask"), args.veiling, weights)
                    for p in _read_jsonl(args.pairs)]
        elif args.targets and args.preds:
            jobs = [(args.targets, args.preds, args.mask, args.veiling, weights)]
        else:
            raise UsageError("evaluate --losses needs --targets/--preds or --pairs")
        for res in _run_jobs(_loss_pair, jobs, args.jobs):
            _emit(res)
        return
    which = tuple(m.strip() for m in args.metrics.split(",") if m.strip())
    if args.pairs:
        jobs = [(p.get("ref"), p["test"], which) for p in _read_jsonl(args.pairs)]
    elif args.test:
        jobs = [(args.ref, args.test, which)]
    else:
        raise UsageError("evaluate needs --test (and --ref) or --pairs")
    for res in _run_jobs(_metric_pair, jobs, args.jobs):
        _emit(res)


def _read_jsonl(path):
    return [json.loads(line) for line in Path(path).read_text().splitlines() if line.strip()]


def cmd_train_toy(args):
    from .microgan.train import TrainConfig, train_toy

    cfg = TrainConfig(lr=args.lr, beta1=args.betas[0], beta2=args.betas[1], batch=args.batch,
                      seed=args.seed, weights=objectives.LossWeights(*args.weights),
                      image_size=args.size, saturating=args.saturating)
    res = train_toy(cfg, steps=args.steps, n_samples=args.samples, out_dir=args.out,
                    sample_every=args.sample_every)
    first, last = res.history[0], res.history[-1]
    _emit({
        "steps": len(res.history),
        "total_first": first.total,
        "total_last": last.total,
        "j_error_start": res.j_error_start,
        "j_error_end": res.j_error_end,
        "out": str(args.out),
    })


# --- parser ------------------------------------------------------------------------------

def _floats(n):
    def parse(text):
        try:
            vals = tuple(float(v) for v in text.split(","))
        except ValueError:
            raise argparse.ArgumentTypeError(f"expected {n} comma-separated numbers, got {text!r}")
        if len(vals) != n:
            raise argparse.ArgumentTypeError(f"expected {n} numbers, got {len(vals)}")
        return vals
    return parse


class _HelpFormatter(argparse.ArgumentDefaultsHelpFormatter):
    """Show defaults only where they say something: not for None, flags or self-described help."""

    def _get_help_string(self, action):
        text = action.help or ""
        if action.default in (None, False, argparse.SUPPRESS) or "default" in text:
            return text
        return super()._get_help_string(action)


def build_parser() -> argparse.ArgumentParser:
    fmt = _HelpFormatter
    p = argparse.ArgumentParser(prog="seacolor", description=__doc__.splitlines()[0], formatter_class=fmt)
    sub = p.add_subparsers(dest="command", required=True)

    def add_bands(sp):
        sp.add_argument("--bands", type=_triplet, default=REF_BANDS,
                        help="1-based R,G,B band numbers [reference default 33,45,56]")

    def add_nir(sp):
        sp.add_argument("--nir-band", type=int, default=None,
                        help="1-based NIR band for mask inference (default: band nearest 860 nm)")
        sp.add_argument("--threshold", type=float, default=hypercube.DEFAULT_NIR_THRESHOLD,
                        help="NIR reflectance below which a pixel counts as water")

    sp = sub.add_parser("build-dataset", help="tile HCUB cubes into RGB/mask/band PNGs", formatter_class=fmt)
    sp.add_argument("--cubes", required=True, help="directory of .hcub files")
    sp.add_argument("--out", required=True, help="output directory")
    add_bands(sp)
    sp.add_argument("--tile", type=int, default=256, help="tile edge in pixels [reference image size 256]")
    add_nir(sp)
    sp.add_argument("--jobs", type=int, default=1, help="parallel worker processes")
    sp.set_defaults(func=cmd_build_dataset)

    sp = sub.add_parser("verify", help="check a dataset manifest", formatter_class=fmt)
    sp.add_argument("--manifest", required=True)
    sp.add_argument("--expect-bands", type=int, default=None, help="required band count per record")
    sp.set_defaults(func=cmd_verify)

    sp = sub.add_parser("decompose", help="diffuse/specular split of a cube", formatter_class=fmt)
    sp.add_argument("--cube", required=True, help=".hcub file")
    sp.add_argument("--mask", default=None, help="water mask PNG (255 = water)")
    sp.add_argument("--auto-mask", action="store_true", help="infer the mask by NIR thresholding")
    add_nir(sp)
    add_bands(sp)
    sp.add_argument("--lo", type=float, default=0.01, help="lower stretch percentile (fraction)")
    sp.add_argument("--hi", type=float, default=0.99, help="upper stretch percentile (fraction)")
    sp.add_argument("--out", required=True, help="output directory")
    sp.set_defaults(func=cmd_decompose)

    for name, func in (("synthesize", cmd_synthesize), ("dewater", cmd_dewater)):
        sp = sub.add_parser(name, formatter_class=fmt,
                            help=("apply" if name == "synthesize" else "invert") + " the water-column model")
        sp.add_argument("--input", required=True,
                        help="in-air image J" if name == "synthesize" else "underwater image N")
        sp.add_argument("--mask", default=None, help="water mask PNG (default: all water)")
        sp.add_argument("--veiling", type=_veiling, default="auto",
                        help="veiling light r,g,b or 'auto' (grey world over water pixels)")
        sp.add_argument("--alpha", type=_alpha, default=REF_ALPHA,
                        help="attenuation coefficient, scalar or r,g,b [reference default 0.9]")
        sp.add_argument("--range-scale", type=float, default=1.0,
                        help="range units per unit PNG intensity")
        if name == "synthesize":
            sp.add_argument("--range", required=True, help="range map PNG")
        else:
            sp.add_argument("--trans", default=None, help="transmission map PNG")
            sp.add_argument("--range", default=None, help="range map PNG, used when --trans is absent")
        sp.add_argument("--out", required=True, help="output directory")
        sp.set_defaults(func=func)

    sp = sub.add_parser("evaluate", help="quality metrics or loss report", formatter_class=fmt)
    sp.add_argument("--ref", default=None, help="reference image")
    sp.add_argument("--test", default=None, help="image under test")
    sp.add_argument("--metrics", default="psnr,ssim,uiqm", help="comma list from psnr, ssim, uiqm")
    sp.add_argument("--pairs", default=None,
                    help="JSONL batch: {ref, test} per line, or {targets, preds[, mask]} with --losses")
    sp.add_argument("--losses", action="store_true", help="emit a loss report instead of metrics")
    sp.add_argument("--targets", default=None, help="directory with diffuse/specular/T/J/N/x/mask PNGs")
    sp.add_argument("--preds", default=None, help="directory with diffuse/specular/T/J PNGs")
    sp.add_argument("--mask", default=None, help="mask PNG overriding targets/mask.png")
    sp.add_argument("--veiling", type=_veiling, default="auto", help="veiling light for re-synthesis")
    sp.add_argument("--weights", type=_floats(5), default=tuple(vars(REF_WEIGHTS).values()),
                    help="gamma,sigma,iota,tau,nu [reference default 30,90,100,50,10]")
    sp.add_argument("--jobs", type=int, default=1, help="parallel worker processes for batches")
    sp.set_defaults(func=cmd_evaluate)

    sp = sub.add_parser("train-toy", help="train the four-generator GAN on synthetic scenes", formatter_class=fmt)
    sp.add_argument("--size", type=int, default=32, choices=(16, 32, 64), help="image edge in pixels")
    sp.add_argument("--steps", type=int, default=200, help="optimisation steps")
    sp.add_argument("--seed", type=int, default=REF_SEED, help="random seed [reference default 100]")
    sp.add_argument("--batch", type=int, default=REF_BATCH, help="batch size [reference default 6]")
    sp.add_argument("--samples", type=int, default=16, help="size of the fixed synthetic set")
    sp.add_argument("--lr", type=float, default=REF_LR, help="Adam learning rate [reference default 2e-4]")
    sp.add_argument("--betas", type=_floats(2), default=REF_BETAS, help="Adam betas [reference default 0.5,0.999]")
    sp.add_argument("--weights", type=_floats(5), default=tuple(vars(REF_WEIGHTS).values()),
                    help="gamma,sigma,iota,tau,nu [reference default 30,90,100,50,10]")
    sp.add_argument("--saturating", action="store_true", help="use log(1 - D) for the generator term")
    sp.add_argument("--sample-every", type=int, default=50, help="steps between sample grids")
    sp.add_argument("--out", required=True, help="directory for losses.csv, samples and checkpoint")
    sp.set_defaults(func=cmd_train_toy)
    return p


def main(argv=None) -> int:
    level = os.environ.get("DEWATER_LOG", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING), stream=sys.stderr,
                        format="%(levelname)s %(name)s: %(message)s")
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        rc = args.func(args)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        sys.stderr.write(f"seacolor: error: {exc}\n")
        return 2
    except (SeacolorError, OSError, ValueError) as exc:
        sys.stderr.write(f"seacolor {args.command}: {type(exc).__name__}: {str(exc).splitlines()[0] if str(exc) else ''}\n")
        return 1
    return rc or 0


if __name__ == "__main__":
    sys.exit(main())
