"""Command-line surface.

Subcommands: enhance, decompose, metrics, make-pairs, train-toy, serve.
Exit codes: 0 success, 2 usage errors (argparse), 1 runtime failures.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import __version__
from . import diffusion as df
from . import figures, quality, relight, retinex
from .config import ConfigError, load_config
from .imgcore import ImageIOError, load_image, save_image
from .pipeline import EnhanceOptions, EnhanceRequest, MaskSpec, PipelineError, enhance
from .promptparse import VocabularyError, VocabularyTable
from .weightsio import WeightsError


def _seed_point(text: str) -> tuple[int, int]:
    parts = text.split(",")
    if len(parts) != 2:
        raise argparse.ArgumentTypeError(f"seed point must be X,Y, got {text!r}")
    try:
        return int(parts[0]), int(parts[1])
    except ValueError:
        raise argparse.ArgumentTypeError(
            f"seed point must be integer X,Y, got {text!r}"
        ) from None


def _levels(text: str) -> list[int]:
    try:
        values = [int(part) for part in text.split(",")]
    except ValueError:
        raise argparse.ArgumentTypeError(f"levels must be integers, got {text!r}")
    if not values or not all(1 <= v <= 10 for v in values):
        raise argparse.ArgumentTypeError("levels must lie in 1..10")
    return values


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="lumactl",
        description="Prompt-driven low-light image adjustment toolkit.",
    )
    p.add_argument("--version", action="version", version=f"lumactl {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    en = sub.add_parser("enhance", help="apply a lighting instruction to an image")
    en.add_argument("--input", required=True, help="source image (PNG or PPM)")
    en.add_argument("--prompt", required=True, help="plain-language instruction")
    en.add_argument("--output", help="where to write the adjusted image")
    en.add_argument("--report", help="where to write the JSON report")
    en.add_argument("--figures", metavar="DIR", help="render figure PNGs into DIR")
    en.add_argument(
        "--mode", choices=("deterministic", "diffusion"), default="deterministic"
    )
    en.add_argument("--seed", type=int, default=0)
    en.add_argument("--eta", type=float, default=0.0)
    en.add_argument(
        "--sigma",
        type=float,
        default=None,
        help="adjustment smoothing; defaults to the configured tbc.sigma",
    )
    en.add_argument("--feather", type=float, default=2.0)
    en.add_argument("--seed-point", type=_seed_point, metavar="X,Y")
    en.add_argument("--mask", help="mask image path, or the word 'full'")
    en.add_argument("--color-tol", type=float, default=0.12)
    en.add_argument("--ratio-override", type=float, default=None)
    en.add_argument("--no-tbc", action="store_true", help="flat adjustment map")
    en.add_argument("--no-acc", action="store_true", help="raw condition stack")
    en.add_argument("--denoiser", help="checkpoint base path (no extension)")
    en.add_argument("--max-side", type=int, default=64)
    en.add_argument("--config", help="settings file path")
    en.set_defaults(func=_cmd_enhance)

    de = sub.add_parser("decompose", help="split an image into lighting and material")
    de.add_argument("--input", required=True)
    de.add_argument("--illum", required=True, help="output path for the lighting plane")
    de.add_argument("--reflect", required=True, help="output path for the material image")
    de.add_argument("--smoothing", type=float, default=None, metavar="LAMBDA")
    de.add_argument("--config")
    de.set_defaults(func=_cmd_decompose)

    me = sub.add_parser("metrics", help="compare two images")
    me.add_argument("--a", required=True)
    me.add_argument("--b", required=True)
    me.set_defaults(func=_cmd_metrics)

    mp = sub.add_parser("make-pairs", help="build ten-level supervision pairs")
    mp.add_argument("--low", required=True, help="dark source image")
    mp.add_argument("--high", required=True, help="well-lit reference image")
    mp.add_argument("--outdir", required=True)
    mp.add_argument("--levels", type=_levels, default=list(range(1, 11)))
    mp.add_argument("--config")
    mp.set_defaults(func=_cmd_make_pairs)

    tt = sub.add_parser("train-toy", help="train the small conditioned denoiser")
    tt.add_argument("--outdir", required=True)
    tt.add_argument("--steps", type=int, default=2000)
    tt.add_argument("--lr", type=float, default=0.05)
    tt.add_argument("--seed", type=int, default=0)
    tt.add_argument("--images", type=int, default=32)
    tt.add_argument("--size", type=int, default=8)
    tt.add_argument("--hidden", type=int, default=8)
    tt.add_argument(
        "--cond-channels",
        type=int,
        default=1,
        help="condition stack width the checkpoint should accept",
    )
    tt.add_argument("--config")
    tt.set_defaults(func=_cmd_train_toy)

    sv = sub.add_parser("serve", help="run the HTTP service")
    sv.add_argument("--port", type=int, default=8023)
    sv.add_argument("--host", default="127.0.0.1")
    sv.add_argument("--data-dir", required=True)
    sv.add_argument("--max-bytes", type=int, default=4 * 1024 * 1024)
    sv.add_argument("--queue-mode", choices=("queue", "reject"), default="queue")
    sv.add_argument("--cors-origin", default="*")
    sv.add_argument("--config")
    sv.set_defaults(func=_cmd_serve)
    return p


def _cmd_enhance(args) -> int:
    cfg = load_config(args.config)
    vocab = VocabularyTable.from_json(cfg.vocab_path) if cfg.vocab_path else None
    if args.mask and args.seed_point:
        print("error: --mask and --seed-point are mutually exclusive", file=sys.stderr)
        return 2
    if args.mask == "full":
        mask = MaskSpec("full")
    elif args.mask:
        mask = MaskSpec("file", path=args.mask)
    else:
        mask = MaskSpec(
            "heuristic", seed_point=args.seed_point, color_tol=args.color_tol
        )
    denoiser = df.ToyConditionedDenoiser.load(args.denoiser) if args.denoiser else None
    options = EnhanceOptions(
        mode=args.mode,
        smooth_sigma=args.sigma if args.sigma is not None else cfg.tbc_sigma,
        feather_sigma=args.feather,
        eta=args.eta,
        seed=args.seed,
        ratio_override=args.ratio_override,
        no_tbc=args.no_tbc,
        no_acc=args.no_acc,
        schedule_t=cfg.schedule_t,
        beta_start=cfg.beta_start,
        beta_end=cfg.beta_end,
        max_diffusion_side=args.max_side,
        retinex_lambda=cfg.retinex_lambda,
        vocabulary=vocab,
        denoiser=denoiser,
    )
    image = load_image(args.input)
    out, report = enhance(
        EnhanceRequest(image=image, prompt=args.prompt, mask=mask, options=options)
    )
    doc = report.to_dict()
    doc["prompt"] = args.prompt
    if args.output:
        save_image(out, args.output)
        doc["output"] = str(args.output)
    if args.report:
        Path(args.report).write_text(json.dumps(doc, indent=2) + "\n")
    if args.figures:
        for path in figures.enhance_figures(image, out, report.adjustment, args.figures):
            doc.setdefault("figures", []).append(str(path))
    print(json.dumps(doc))
    return 0


def _cmd_decompose(args) -> int:
    cfg = load_config(args.config)
    lam = args.smoothing if args.smoothing is not None else cfg.retinex_lambda
    pair = retinex.decompose(
        load_image(args.input), retinex.DecomposeParams(lam=lam)
    )
    save_image(pair.illumination, args.illum)
    save_image(pair.reflection, args.reflect)
    print(json.dumps({"illum": str(args.illum), "reflect": str(args.reflect)}))
    return 0


def _cmd_metrics(args) -> int:
    a = load_image(args.a)
    b = load_image(args.b)
    value = quality.psnr(a, b)
    identical = value == float("inf")
    doc = {
        "psnr": None if identical else value,
        "identical": identical,
        "ssim": quality.ssim(a, b),
        "color_angle": quality.angular_color_loss(a, b),
    }
    print(json.dumps(doc))
    return 0


def _cmd_make_pairs(args) -> int:
    cfg = load_config(args.config)
    low = load_image(args.low)
    high = load_image(args.high)
    outdir = Path(args.outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    params = retinex.DecomposeParams(lam=cfg.retinex_lambda)
    save_image(low, outdir / "input.png")
    rows = ["level,target"]
    for level in args.levels:
        _, target = relight.make_training_pair(low, high, level, params)
        name = f"target_{level:02d}.png"
        save_image(target, outdir / name)
        rows.append(f"{level},{name}")
    (outdir / "pairs.csv").write_text("\n".join(rows) + "\n")
    print(json.dumps({"outdir": str(outdir), "levels": args.levels}))
    return 0


def _cmd_train_toy(args) -> int:
    cfg = load_config(args.config)
    schedule = df.make_schedule(cfg.schedule_t, cfg.beta_start, cfg.beta_end)
    data = df.synthetic_images(args.images, args.size, args.seed)
    initial = df.ToyConditionedDenoiser.initialize(
        hidden=args.hidden,
        cond_channels=args.cond_channels,
        T=schedule.T,
        seed=args.seed,
    )
    before = df.eval_loss(initial, data, schedule, seed=args.seed + 1)
    den, trace = df.train_toy_denoiser(
        data,
        schedule,
        steps=args.steps,
        learning_rate=args.lr,
        seed=args.seed,
        hidden=args.hidden,
        cond_channels=args.cond_channels,
    )
    after = df.eval_loss(den, data, schedule, seed=args.seed + 1)
    outdir = Path(args.outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    df.save_loss_trace(outdir / "trace.csv", trace)
    figures.loss_curve(trace, outdir / "loss.png")
    den.save(outdir / "denoiser")
    print(
        json.dumps(
            {
                "initial_loss": before,
                "final_loss": after,
                "steps": args.steps,
                "checkpoint": str(outdir / "denoiser"),
                "trace": str(outdir / "trace.csv"),
                "figure": str(outdir / "loss.png"),
            }
        )
    )
    return 0


def _cmd_serve(args) -> int:
    import uvicorn

    from .service import create_app

    cfg = load_config(args.config)
    app = create_app(
        data_dir=args.data_dir,
        max_bytes=args.max_bytes,
        queue_mode=args.queue_mode,
        cors_origin=args.cors_origin,
        settings=cfg,
    )
    uvicorn.run(app, host=args.host, port=args.port, log_level="info")
    return 0


def run_cli(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # argparse handles usage errors and --help
        return int(exc.code or 0)
    try:
        return args.func(args)
    except (
        PipelineError,
        ImageIOError,
        ConfigError,
        VocabularyError,
        WeightsError,
        retinex.ConvergenceError,
        df.DivergenceError,
        ValueError,
        OSError,
    ) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


def main() -> None:
    sys.exit(run_cli(sys.argv[1:]))
