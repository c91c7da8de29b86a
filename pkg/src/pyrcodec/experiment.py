"""Experiment grid: configurations x images x lambdas, with BD-rate summaries."""

from __future__ import annotations

import csv
import logging
import os
from dataclasses import asdict, dataclass, replace

import numpy as np
from joblib import Parallel, delayed

from .bdrate import BDRateError, RDCurve, bd_rate
from .bitstream import decode_bitstream, encode_bitstream
from .decoder import decode_forward, init_model
from .image import psnr
from .training import PAPER_LAMBDAS, TrainConfig, train

logger = logging.getLogger(__name__)

INSUFFICIENT = "insufficient points"


@dataclass(frozen=True)
class ExperimentSpec:
    name: str
    n_h: int = 0
    k_h: int = 5
    n_l: int = 1
    k_l: int = 4
    legacy: bool = False
    lambdas: tuple[float, ...] = PAPER_LAMBDAS
    iterations: int = 2000
    seed: int = 0
    levels: int = 7
    hidden: tuple[int, ...] = (8,)

    def __post_init__(self):
        if self.legacy and (self.n_h or self.n_l != 1):
            raise ValueError("the legacy structure has one L kernel and no H branch")

    @property
    def geometry(self) -> tuple:
        return (self.legacy, self.n_h, self.k_h if self.n_h else 0, self.n_l, self.k_l)


ANCHOR = "legacy4"

PRESETS = {
    "legacy4": ExperimentSpec("legacy4", legacy=True, k_l=4),
    "legacy8": ExperimentSpec("legacy8", legacy=True, k_l=8),
    "exp1a": ExperimentSpec("exp1a", n_h=0, n_l=1, k_l=4),
    "exp1b": ExperimentSpec("exp1b", n_h=0, n_l=1, k_l=8),
    "exp2a": ExperimentSpec("exp2a", n_h=1, k_h=5, n_l=1, k_l=4),
    "exp2b": ExperimentSpec("exp2b", n_h=1, k_h=5, n_l=1, k_l=8),
    "exp3a": ExperimentSpec("exp3a", n_h=6, k_h=5, n_l=6, k_l=8),
    "exp3b": ExperimentSpec("exp3b", n_h=6, k_h=7, n_l=6, k_l=8),
}


def preset(name: str, **overrides) -> ExperimentSpec:
    try:
        spec = PRESETS[name]
    except KeyError:
        raise ValueError(f"unknown preset {name!r}; choose from {sorted(PRESETS)}") from None
    return replace(spec, **overrides)


@dataclass(frozen=True)
class JobResult:
    config: str
    image: str
    lam: float
    bpp: float = float("nan")
    psnr_db: float = float("nan")
    j: float = float("nan")
    kernel_params: int = 0
    status: str = "ok"


def run_job(spec: ExperimentSpec, image_name: str, image: np.ndarray, lam: float) -> JobResult:
    try:
        h, w = image.shape[:2]
        model = init_model(h, w, spec.levels, n_l=spec.n_l, k_l=spec.k_l, n_h=spec.n_h,
                           k_h=spec.k_h, hidden=spec.hidden, legacy=spec.legacy, seed=spec.seed)
        result = train(model, image, TrainConfig(lam=lam, iterations=spec.iterations,
                                                 seed=spec.seed))
        data = encode_bitstream(result.model)
        recon = decode_forward(decode_bitstream(data))
        return JobResult(spec.name, image_name, lam, len(data) * 8 / (h * w), psnr(recon, image),
                         result.final.j, result.model.upsampler.n_parameters)
    except Exception as exc:  # reported in the table, the grid keeps going
        logger.exception("job %s/%s/%g failed", spec.name, image_name, lam)
        return JobResult(spec.name, image_name, lam, status=f"failed: {exc}")


def run_experiment(specs, images: dict[str, np.ndarray], n_jobs: int = 1) -> list[JobResult]:
    """Run every (config, image, lambda) job; rows come back sorted."""
    names = [s.name for s in specs]
    if len(set(names)) != len(names):
        raise ValueError("configuration names must be unique")
    jobs = [(spec, name, img, lam) for spec in specs for name, img in sorted(images.items())
            for lam in spec.lambdas]
    rows = Parallel(n_jobs=n_jobs)(delayed(run_job)(*job) for job in jobs)
    return sorted(rows, key=lambda r: (r.config, r.image, r.lam))


def summarize(rows: list[JobResult], anchor: str = ANCHOR) -> list[dict]:
    """Mean per-image BD-rate of each configuration against ``anchor``."""
    ok = [r for r in rows if r.status == "ok"]
    partial = len(ok) != len(rows)
    curves: dict[tuple[str, str], list] = {}
    for r in ok:
        curves.setdefault((r.config, r.image), []).append((r.bpp, r.psnr_db))
    configs = sorted({r.config for r in rows})
    images = sorted({r.image for r in rows})
    summary = []
    for config in configs:
        if config == anchor:
            continue
        values = []
        for image in images:
            try:
                values.append(bd_rate(RDCurve.from_points(curves.get((anchor, image), [])),
                                      RDCurve.from_points(curves.get((config, image), []))))
            except (BDRateError, ValueError):
                values = None
                break
        summary.append({
            "config": config,
            "anchor": anchor,
            "bd_rate_percent": INSUFFICIENT if values is None else float(np.mean(values)),
            "per_image": None if values is None else dict(zip(images, values)),
            "partial": partial,
        })
    return summary


ROW_FIELDS = ["config", "image", "lambda", "bpp", "psnr_db", "j", "kernel_params", "status"]


def write_rows(rows: list[JobResult], path: str | os.PathLike) -> None:
    with open(path, "w", newline="") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(ROW_FIELDS)
        for r in rows:
            writer.writerow([r.config, r.image, f"{r.lam:g}", f"{r.bpp:.6f}", f"{r.psnr_db:.6f}",
                             f"{r.j:.9g}", r.kernel_params, r.status])


def write_summary(summary: list[dict], path: str | os.PathLike) -> None:
    with open(path, "w", newline="") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(["config", "anchor", "bd_rate_percent", "partial"])
        for s in summary:
            value = s["bd_rate_percent"]
            writer.writerow([s["config"], s["anchor"],
                             value if isinstance(value, str) else f"{value:.4f}",
                             int(s["partial"])])


def spec_dict(spec: ExperimentSpec) -> dict:
    d = asdict(spec)
    d["lambdas"] = list(spec.lambdas)
    d["hidden"] = list(spec.hidden)
    return d
