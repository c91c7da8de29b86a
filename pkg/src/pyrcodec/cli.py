"""Command line interface.

    pyrcodec encode --input img.ppm --output img.pups --lambda 0.001
    pyrcodec decode --input img.pups --output out.ppm
    pyrcodec analyze freq --kernel bilinear --output resp.csv
    pyrcodec analyze macs --k 4 8
    pyrcodec bdrate --anchor a.csv --test b.csv
    pyrcodec experiment --preset legacy4 --preset exp3b --images a.ppm b.ppm --output grid.csv

Exit status: 0 success, 1 usage, 2 I/O, 3 numeric failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .bdrate import BDRateError, RDCurve, bd_rate
from .bitstream import BitstreamError, read_bitstream, write_bitstream
from .decoder import decode_forward, init_model
from .experiment import (
    ANCHOR,
    PRESETS,
    preset,
    run_experiment,
    spec_dict,
    summarize,
    write_rows,
    write_summary,
)
from .image import PPMError, psnr, read_image, write_image
from .kernels import (
    Kernel2D,
    SymmetricKernel1D,
    bicubic_init,
    bilinear_init,
    cutoff_frequency,
    dirac,
    frequency_response,
    macs_nonseparable,
    macs_separable,
)
from .training import TrainConfig, TrainingError, train, write_trace_csv
from .upsampler import LegacyUpsamplerParams, UpsamplerParams, count_macs

EXIT_OK, EXIT_USAGE, EXIT_IO, EXIT_NUMERIC = 0, 1, 2, 3

logger = logging.getLogger("pyrcodec")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _dump_json(obj, path=None) -> None:
    text = json.dumps(obj, indent=2, sort_keys=True) + "\n"
    if path:
        Path(path).write_text(text)
    else:
        sys.stdout.write(text)


def _float_list(text: str) -> list[float]:
    return [float(v) for v in text.replace(",", " ").split()]


def read_config(path) -> dict[str, str]:
    """``key=value`` lines; ``#`` starts a comment. Keys are flag names."""
    values = {}
    for lineno, line in enumerate(Path(path).read_text().splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError(f"{path}:{lineno}: expected key=value")
        key, value = (s.strip() for s in line.split("=", 1))
        values[key.lstrip("-").replace("-", "_")] = value
    return values


# ---------------------------------------------------------------------------
# encode / decode


def cmd_encode(args) -> int:
    if not args.input or not args.output:
        raise UsageError("encode needs --input and --output")
    target = read_image(args.input)
    h, w = target.shape[:2]
    model = init_model(h, w, args.levels, n_l=args.nl, k_l=args.kl, n_h=args.nh, k_h=args.kh,
                       hidden=tuple(args.hidden), legacy=args.legacy, seed=args.seed)
    config = TrainConfig(lam=args.lam, iterations=args.iters, seed=args.seed,
                         checkpoint_every=args.checkpoint_every)
    result = train(model, target, config)
    written = write_bitstream(result.model, args.output)
    recon = decode_forward(read_bitstream(args.output))
    if args.trace:
        write_trace_csv(result.trace, args.trace)
    formula = macs_nonseparable if args.legacy else macs_separable
    report = {
        "input": str(args.input),
        "output": str(args.output),
        "width": w,
        "height": h,
        "lambda": args.lam,
        "iterations": args.iters,
        "seed": args.seed,
        "legacy": args.legacy,
        "levels": args.levels,
        "n_l": 1 if args.legacy else args.nl,
        "k_l": args.kl,
        "n_h": 0 if args.legacy else args.nh,
        "k_h": 0 if args.legacy or not args.nh else args.kh,
        "hidden": list(args.hidden),
        "kernel_parameters": result.model.upsampler.n_parameters,
        "bytes": written["bytes"],
        "param_bytes": written["param_bytes"],
        "latent_bytes": written["latent_bytes"],
        "bpp": written["bpp"],
        "psnr_db": psnr(recon, target),
        "j_initial": result.trace[0].j,
        "j_final": result.final.j,
        "d_final": result.final.d,
        "latent_rate_bpp": result.final.r_bpp,
        "macs_formula": formula(args.kl),
        "macs_empirical": count_macs(h, w, result.model.upsampler),
        "parameter_rate_in_objective": False,
    }
    _dump_json(report, args.report)
    return EXIT_OK


def cmd_decode(args) -> int:
    if not args.input or not args.output:
        raise UsageError("decode needs --input and --output")
    model = read_bitstream(args.input)
    recon = decode_forward(model)
    write_image(recon, args.output)
    report = {"input": str(args.input), "output": str(args.output),
              "width": model.width, "height": model.height}
    if args.reference:
        report["psnr_db"] = psnr(recon, read_image(args.reference))
    _dump_json(report, args.report)
    return EXIT_OK


# ---------------------------------------------------------------------------
# analyze


def parse_kernel(spec: str) -> SymmetricKernel1D:
    """``bilinear``, ``bicubic``, ``dirac<K>`` or ``taps:a,b,c,...`` (full symmetric taps)."""
    spec = spec.strip().lower()
    if spec == "bilinear":
        return bilinear_init(4)
    if spec == "bicubic":
        return bicubic_init(8)
    if spec.startswith("dirac"):
        return dirac(int(spec[5:] or 5))
    if spec.startswith("taps:"):
        taps = np.array(_float_list(spec[5:]))
        if taps.size == 0 or not np.allclose(taps, taps[::-1], rtol=0, atol=0):
            raise UsageError(f"taps must be non-empty and symmetric: {spec}")
        return SymmetricKernel1D(taps.size, taps[: (taps.size + 1) // 2])
    raise UsageError(f"unknown kernel spec {spec!r}")


def _kernel_from_bitstream(path, which: str):
    model = read_bitstream(path)
    up = model.upsampler
    if model.legacy:
        if which not in ("l0", "legacy"):
            raise UsageError("a legacy bitstream only has the kernel 'legacy'")
        return up.kernel
    kind, index = which[0], int(which[1:])
    kernels = up.l_kernels if kind == "l" else up.h_kernels if kind == "h" else None
    if kernels is None or not 0 <= index < len(kernels):
        raise UsageError(f"no kernel {which!r} in {path}")
    return kernels[index]


def cmd_analyze_freq(args) -> int:
    if bool(args.kernel) == bool(args.bitstream):
        raise UsageError("analyze freq needs exactly one of --kernel or --bitstream")
    kernel = parse_kernel(args.kernel) if args.kernel else _kernel_from_bitstream(args.bitstream, args.which)
    response = frequency_response(kernel, args.grid)
    if args.output:
        response.to_csv(args.output)
    report = {"grid": args.grid}
    if isinstance(kernel, SymmetricKernel1D):
        report["taps"] = kernel.taps.tolist()
        report["cutoff_3db"] = cutoff_frequency(kernel, -3.0)
        report["cutoff_6db"] = cutoff_frequency(kernel, -6.0)
    else:
        report["taps"] = kernel.taps.tolist()
        db = response.to_db()
        report["asymmetry_db"] = float(np.max(np.abs(db - db.T)))
    _dump_json(report, args.report)
    return EXIT_OK


def cmd_analyze_macs(args) -> int:
    out = open(args.output, "w", newline="") if args.output else sys.stdout
    try:
        writer = csv.writer(out, lineterminator="\n")
        header = ["K", "nonseparable", "separable"]
        if args.size:
            header += ["empirical_legacy", "empirical_separable"]
        writer.writerow(header)
        for k in args.k:
            row = [k, macs_nonseparable(k), macs_separable(k)]
            if args.size:
                side = args.size
                legacy = LegacyUpsamplerParams(7, Kernel2D(k, np.zeros((k, k))))
                sep = UpsamplerParams(7, [SymmetricKernel1D(k, np.zeros((k + 1) // 2))])
                row += [f"{count_macs(side, side, legacy):.4f}", f"{count_macs(side, side, sep):.4f}"]
            writer.writerow(row)
    finally:
        if out is not sys.stdout:
            out.close()
    return EXIT_OK


# ---------------------------------------------------------------------------
# bdrate / experiment


def cmd_bdrate(args) -> int:
    value = bd_rate(RDCurve.from_csv(args.anchor), RDCurve.from_csv(args.test))
    _dump_json({"anchor": str(args.anchor), "test": str(args.test), "bd_rate_percent": value},
               args.report)
    return EXIT_OK


def cmd_experiment(args) -> int:
    if not args.images:
        raise UsageError("experiment needs --images")
    names = args.preset or [ANCHOR, "exp3b"]
    if ANCHOR not in names:
        names = [ANCHOR, *names]
    overrides = {"iterations": args.iters, "seed": args.seed, "levels": args.levels}
    if args.lambdas:
        overrides["lambdas"] = tuple(_float_list(args.lambdas))
    specs = [preset(n, **overrides) for n in dict.fromkeys(names)]
    images = {Path(p).stem: read_image(p) for p in args.images}
    rows = run_experiment(specs, images, n_jobs=args.jobs)
    write_rows(rows, args.output)
    summary = summarize(rows)
    summary_path = args.summary or str(Path(args.output).with_suffix("")) + "_bdrate.csv"
    write_summary(summary, summary_path)
    _dump_json({"configs": [spec_dict(s) for s in specs], "rows": str(args.output),
                "summary": summary}, args.report)
    return EXIT_OK if all(r.status == "ok" for r in rows) else EXIT_NUMERIC


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="pyrcodec", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser, required=True)

    enc = sub.add_parser("encode", help="train a decoder for one image and write its bitstream")
    enc.add_argument("--config", help="key=value file supplying flag defaults")
    enc.add_argument("--input")
    enc.add_argument("--output")
    enc.add_argument("--report", help="JSON report path (default: stdout)")
    enc.add_argument("--trace", help="write the RD trace CSV here")
    enc.add_argument("--lambda", dest="lam", type=float, default=1e-3)
    enc.add_argument("--levels", type=int, default=7)
    enc.add_argument("--kl", type=int, default=4)
    enc.add_argument("--kh", type=int, default=5)
    enc.add_argument("--nl", type=int, default=1)
    enc.add_argument("--nh", type=int, default=1)
    enc.add_argument("--hidden", type=int, nargs="*", default=[8])
    enc.add_argument("--iters", type=int, default=2000)
    enc.add_argument("--checkpoint-every", type=int, default=100)
    enc.add_argument("--seed", type=int, default=0)
    enc.add_argument("--legacy", action="store_true",
                     help="non-separable K x K upsampler without pre-filter")
    enc.set_defaults(func=cmd_encode)

    dec = sub.add_parser("decode", help="decode a bitstream to PPM")
    dec.add_argument("--input")
    dec.add_argument("--output")
    dec.add_argument("--reference", help="PPM to compute PSNR against")
    dec.add_argument("--report")
    dec.set_defaults(func=cmd_decode)

    ana = sub.add_parser("analyze", help="frequency response and complexity tables")
    ana_sub = ana.add_subparsers(dest="analysis", parser_class=_Parser, required=True)
    freq = ana_sub.add_parser("freq")
    freq.add_argument("--kernel", help="bilinear | bicubic | dirac<K> | taps:a,b,...")
    freq.add_argument("--bitstream")
    freq.add_argument("--which", default="l0", help="kernel in the bitstream: l<i>, h<i>")
    freq.add_argument("--grid", type=int, default=64)
    freq.add_argument("--output", help="CSV with f1,f2,mag_db")
    freq.add_argument("--report")
    freq.set_defaults(func=cmd_analyze_freq)
    macs = ana_sub.add_parser("macs")
    macs.add_argument("--k", type=int, nargs="+", default=[4, 8])
    macs.add_argument("--size", type=int, help="also count MACs on a size x size image")
    macs.add_argument("--output")
    macs.set_defaults(func=cmd_analyze_macs)

    bd = sub.add_parser("bdrate", help="BD-rate of --test against --anchor")
    bd.add_argument("--anchor", required=True, help="CSV with rate_bpp,psnr_db")
    bd.add_argument("--test", required=True)
    bd.add_argument("--report")
    bd.set_defaults(func=cmd_bdrate)

    exp = sub.add_parser("experiment", help="run an experiment grid")
    exp.add_argument("--config")
    exp.add_argument("--preset", action="append", choices=sorted(PRESETS))
    exp.add_argument("--images", nargs="+")
    exp.add_argument("--lambdas", help="comma separated (default: 1e-4,4e-4,1e-3,4e-3,2e-2)")
    exp.add_argument("--iters", type=int, default=2000)
    exp.add_argument("--levels", type=int, default=7)
    exp.add_argument("--seed", type=int, default=0)
    exp.add_argument("--jobs", type=int, default=1)
    exp.add_argument("--output", default="experiment.csv")
    exp.add_argument("--summary")
    exp.add_argument("--report")
    exp.set_defaults(func=cmd_experiment)
    return parser


def _apply_config(parser, argv):
    args = parser.parse_args(argv)
    path = getattr(args, "config", None)
    if not path:
        return args
    values = read_config(path)
    sub = parser._subparsers._group_actions[0].choices[args.command]
    known = {a.dest: a for a in sub._actions}
    defaults = {}
    for key, text in values.items():
        key = {"lambda": "lam"}.get(key, key)
        if key not in known:
            raise UsageError(f"unknown config key {key!r}")
        action = known[key]
        if isinstance(action, argparse._StoreTrueAction):
            defaults[key] = text.lower() in ("1", "true", "yes", "on")
        elif action.nargs in ("*", "+"):
            defaults[key] = [(action.type or str)(v) for v in text.replace(",", " ").split()]
        else:
            defaults[key] = (action.type or str)(text)
    sub.set_defaults(**defaults)
    return parser.parse_args(argv)


def main(argv=None) -> int:
    parser = build_parser()
    try:
        try:
            args = _apply_config(parser, argv)
        except SystemExit as exc:  # argparse reports usage errors and --help this way
            return exc.code if isinstance(exc.code, int) else EXIT_USAGE
        logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                            format="%(levelname)s %(name)s: %(message)s")
        return args.func(args)
    except UsageError as exc:
        print(f"pyrcodec: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (OSError, PPMError, BitstreamError) as exc:
        print(f"pyrcodec: I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (TrainingError, BDRateError, FloatingPointError, ValueError) as exc:
        print(f"pyrcodec: error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
