"""Command-line front end.

Subcommands: postprocess, plan, run, eval, synth, serve. Exit codes:
0 success, 2 validation/format error, 3 protocol/transport error,
4 predictor timeout.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from . import formats
from .errors import (
    PredictorTimeoutError,
    ProtocolError,
    ValidationError,
)
from .evaluate import MetricReport, iou_f1
from .fixtures import PRESETS, preset_spec, synth_slide
from .pipeline import PipelineAborted, PipelineConfig, run_pipeline
from .postprocess import PostprocessConfig, postprocess_mask
from .prompting import PromptConfig, plan_prompts
from .raster import BinaryMask
from .wire import TcpServer, make_backend, serve_stdio


def _post_config(args) -> PostprocessConfig:
    return PostprocessConfig(
        alpha_m=args.alpha_m,
        beta=args.beta,
        alpha_c=args.alpha_c,
        connectivity=args.connectivity,
    )


def _prompt_config(args) -> PromptConfig:
    return PromptConfig(
        patch_side=args.side,
        alpha_b=args.alpha_b,
        grid_gap=args.gap,
        strict_centroid=getattr(args, "strict_centroid", False),
    )


def _add_post_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--alpha-m", type=float, default=0.1, dest="alpha_m")
    p.add_argument("--beta", type=float, default=0.8)
    p.add_argument("--alpha-c", type=float, default=0.4, dest="alpha_c")
    p.add_argument("--connectivity", type=int, default=8, choices=(4, 8))


def _add_prompt_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--side", type=int, default=512)
    p.add_argument("--alpha-b", type=float, default=3.0, dest="alpha_b")
    p.add_argument("--gap", type=int, default=64)
    p.add_argument("--strict-centroid", action="store_true", dest="strict_centroid")


def _cmd_postprocess(args) -> int:
    mask = formats.load_mask(args.mask)
    prob = formats.load_probmap(args.prob)
    refined, report = postprocess_mask(mask, prob, _post_config(args))
    formats.save_plane(refined, args.out, class_id=2)
    if args.report:
        Path(args.report).write_text(report.to_text())
    counts = report.counts()
    print(
        f"postprocess: {refined.count()} px kept; "
        + ", ".join(f"{k}={v}" for k, v in counts.items())
    )
    return 0


def _cmd_plan(args) -> int:
    mask = formats.load_mask(args.mask)
    plane = BinaryMask(mask.data == args.class_id)
    plan = plan_prompts(plane, _prompt_config(args), args.connectivity)
    Path(args.out).write_text(plan.to_text())
    print(
        f"plan: {len(plan.prompts)} components, {plan.point_count()} points, "
        f"escalated={plan.slide_escalated}"
    )
    return 0


def _cmd_run(args) -> int:
    mask = formats.load_mask(args.mask)
    prob = formats.load_probmap(args.prob)
    gt = formats.load_mask(args.gt) if args.gt else None
    cfg = PipelineConfig(
        post=_post_config(args),
        prompt=_prompt_config(args),
        concurrency=args.concurrency,
        joint_points=args.joint_points,
        best_effort=args.best_effort,
    )
    backend = make_backend(
        args.backend, gt=gt, connectivity=args.connectivity, timeout=args.timeout
    )
    try:
        result = run_pipeline(
            mask,
            prob,
            cfg,
            backend,
            image_path=args.image,
            inline_patches=args.inline_patches,
        )
    except PipelineAborted as e:
        if args.manifest:
            e.manifest.save(args.manifest)
        raise e.cause
    finally:
        backend.close()
    formats.save_plane(result.final, args.out, class_id=2)
    if args.manifest:
        result.manifest.save(args.manifest)
    if args.report:
        Path(args.report).write_text(result.report.to_text())
    print(
        f"run: {len(result.manifest.prompts)} prompts, "
        f"escalated={result.manifest.escalated}, "
        f"final px={result.final.count()} -> {args.out}"
    )
    return 0


def _cmd_eval(args) -> int:
    pred = formats.load_mask(args.pred)
    gt = formats.load_mask(args.gt)
    entry = iou_f1(
        BinaryMask(pred.data == args.class_id),
        BinaryMask(gt.data == args.class_id),
        slide=Path(args.pred).stem,
    )
    report = MetricReport((entry,))
    text = report.to_text()
    if args.out:
        Path(args.out).write_text(text)
    sys.stdout.write(text)
    return 0


def _cmd_synth(args) -> int:
    spec = preset_spec(args.preset, args.seed, width=args.width, height=args.height)
    gt, initial, prob = synth_slide(spec)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    formats.save_mask(gt, out / "gt.pgm")
    formats.save_mask(initial, out / "initial.pgm")
    formats.save_probmap(prob, out / "prob.pfm")
    print(f"synth: preset={args.preset} seed={args.seed} -> {out}/")
    return 0


def _cmd_serve(args) -> int:
    gt = formats.load_mask(args.gt) if args.gt else None
    noise = {
        "dilate": args.dilate,
        "erode": args.erode,
        "fp_blobs": args.fp_blobs,
        "seed": args.seed,
    }
    backend = make_backend(args.backend, gt=gt, connectivity=args.connectivity, noise=noise)
    if args.transport == "stdio":
        serve_stdio(backend)
        return 0
    server = TcpServer(backend, host=args.host, port=args.port)
    print(f"serving on {server.host}:{server.port}", file=sys.stderr, flush=True)
    try:
        server.serve_forever()
    finally:
        server.close()
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="slideprompt",
        description="Refine invasive-melanoma masks with a point-promptable predictor.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("postprocess", help="in-situ detection + confidence filtering")
    p.add_argument("--mask", required=True)
    p.add_argument("--prob", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--report")
    _add_post_flags(p)
    p.set_defaults(func=_cmd_postprocess)

    p = sub.add_parser("plan", help="generate prompt points for a refined mask")
    p.add_argument("--mask", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--class", type=int, default=2, dest="class_id")
    p.add_argument("--connectivity", type=int, default=8, choices=(4, 8))
    _add_prompt_flags(p)
    p.set_defaults(func=_cmd_plan)

    p = sub.add_parser("run", help="full refine->prompt->predict->merge pipeline")
    p.add_argument("--mask", required=True)
    p.add_argument("--prob", required=True)
    p.add_argument("--image", help="slide raster passed to file-based backends")
    p.add_argument("--backend", default="mock")
    p.add_argument("--gt", help="ground truth (required by mock backends)")
    p.add_argument("--out", required=True)
    p.add_argument("--manifest")
    p.add_argument("--report")
    p.add_argument("--concurrency", type=int, default=4)
    p.add_argument("--timeout", type=float, default=60.0)
    p.add_argument("--inline-patches", action="store_true", dest="inline_patches")
    p.add_argument("--joint-points", action="store_true", dest="joint_points")
    p.add_argument("--best-effort", action="store_true", dest="best_effort")
    _add_post_flags(p)
    _add_prompt_flags(p)
    p.set_defaults(func=_cmd_run)

    p = sub.add_parser("eval", help="IoU/F1 of a prediction against ground truth")
    p.add_argument("--pred", required=True)
    p.add_argument("--gt", required=True)
    p.add_argument("--class", type=int, default=2, dest="class_id")
    p.add_argument("--out")
    p.set_defaults(func=_cmd_eval)

    p = sub.add_parser("synth", help="generate synthetic slide fixtures")
    p.add_argument("--preset", required=True, choices=PRESETS)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--out-dir", required=True, dest="out_dir")
    p.add_argument("--width", type=int, default=1024)
    p.add_argument("--height", type=int, default=1024)
    p.set_defaults(func=_cmd_synth)

    p = sub.add_parser("serve", help="host a backend over stdio or tcp")
    p.add_argument("--backend", default="mock", choices=("mock", "noisy-mock"))
    p.add_argument("--gt", required=True)
    p.add_argument("--connectivity", type=int, default=8, choices=(4, 8))
    p.add_argument("--transport", default="stdio", choices=("stdio", "tcp"))
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=0)
    p.add_argument("--dilate", type=int, default=0)
    p.add_argument("--erode", type=int, default=0)
    p.add_argument("--fp-blobs", type=int, default=0, dest="fp_blobs")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=_cmd_serve)

    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ValidationError as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    except ProtocolError as e:
        print(f"protocol error: {e}", file=sys.stderr)
        return 3
    except PredictorTimeoutError as e:
        print(f"timeout: {e}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())
