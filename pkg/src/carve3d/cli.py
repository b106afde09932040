"""Command-line frontend: batch augmentation and baselines, fixtures, conversion, inspection."""
from __future__ import annotations

import argparse
import hashlib
import json
import logging
import os
import sys
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from . import __version__
from .anchors import AnchorParams, NoAnchorError
from .baselines import WARP_SIGMA, axis_scale, piecewise_warp, sample_scale_factors, sample_warp
from .beamsearch import BeamParams
from .carve import AugmentConfig, AugmentError, augment_batch, write_step_logs
from .energy import EnergyKind, compute_energy, mean_energy
from .symmetry import DEFAULT_TS, detect_symmetry
from .voxel import (SHAPES, FormatError, ShapeSpec, SpecError, as_occupancy, export_obj,
                    load_any, make_shape, save_any, sdf_from_occupancy, write_grid)

EXIT_OK = 0
EXIT_ARGS = 2
EXIT_IO = 3
EXIT_AUGMENT = 4

log = logging.getLogger("carve3d")


class UsageError(Exception):
    """Arguments parsed but make no sense together."""


def _sha256(path: Path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def _write_manifest(out: Path, manifest: dict) -> None:
    with open(out / "manifest.json", "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _config_from_args(args) -> AugmentConfig:
    try:
        return AugmentConfig(
            s_max=args.smax,
            beam=BeamParams(n=args.beam, tie_tol=args.tie_tol),
            anchors=AnchorParams(epsilon=args.epsilon, k=args.clusters, batch=args.batch,
                                 iters=args.iters, s=args.sims, m=args.draw),
            T_s=args.ts,
            energy_kind=EnergyKind(args.energy),
            retries=args.retries,
            insertion_policy=args.insert,
        )
    except ValueError as exc:
        raise UsageError(str(exc)) from exc


def _run_augment(input_path: Path, out: Path, count: int, seed: int, config: AugmentConfig,
                 jobs: int, steps_log: bool) -> int:
    grid = load_any(input_path)
    if count < 1:
        raise UsageError("--count must be >= 1")
    out.mkdir(parents=True, exist_ok=True)
    results = augment_batch(grid, config, count=count, base_seed=seed, jobs=jobs, with_logs=True)
    stem = input_path.stem
    outputs = []
    if steps_log:
        (out / "steps.jsonl").write_text("")
    for k, (g, logs) in enumerate(results):
        name = f"{stem}_aug{k}.vgrid"
        write_grid(g, out / name)
        outputs.append({
            "file": name,
            "seed": seed + k,
            "dims": list(g.dims),
            "steps": len(logs),
            "accepted": sum(1 for e in logs if e.accepted),
            "mirrored": sum(1 for e in logs if e.mirrored),
            "sha256": _sha256(out / name),
        })
        if steps_log:
            write_step_logs(logs, out / "steps.jsonl", run=k, mode="a")
    _write_manifest(out, {
        "command": "augment",
        "version": __version__,
        "input": str(input_path.resolve()),
        "input_sha256": _sha256(input_path),
        "out": str(out.resolve()),
        "count": count,
        "seed": seed,
        "config": config.to_dict(),
        "steps_log": steps_log,
        "outputs": outputs,
    })
    log.info("wrote %d augmented grids to %s", count, out)
    return EXIT_OK


def cmd_augment(args) -> int:
    if args.from_manifest:
        m = json.loads(Path(args.from_manifest).read_text())
        if m.get("command") != "augment":
            raise UsageError("manifest was not written by the augment command")
        out = Path(args.out) if args.out else Path(m["out"])
        return _run_augment(Path(m["input"]), out, m["count"], m["seed"],
                            AugmentConfig.from_dict(m["config"]), args.jobs,
                            m.get("steps_log", False))
    if not args.input or not args.out:
        raise UsageError("--input and --out are required unless --from-manifest is given")
    if args.jobs < 1:
        raise UsageError("--jobs must be >= 1")
    return _run_augment(Path(args.input), Path(args.out), args.count, args.seed,
                        _config_from_args(args), args.jobs, args.steps_log)


def _run_baseline(input_path: Path, out: Path, method: str, count: int, seed: int,
                  sigma: float) -> int:
    if count < 1:
        raise UsageError("--count must be >= 1")
    if sigma <= 0:
        raise UsageError("--sigma must be positive")
    grid = load_any(input_path)
    out.mkdir(parents=True, exist_ok=True)
    outputs = []
    for k in range(count):
        rng = np.random.default_rng(seed + k)
        if method == "scale":
            factors = sample_scale_factors(rng)
            g = axis_scale(grid, factors)
            record = {"factors": list(factors)}
        else:
            spec = sample_warp(rng, sigma)
            g = piecewise_warp(grid, spec)
            record = {"warp": spec.to_dict()}
        name = f"{input_path.stem}_{method}{k}.vgrid"
        write_grid(g, out / name)
        outputs.append({"file": name, "seed": seed + k, "dims": list(g.dims),
                        "sha256": _sha256(out / name), **record})
    _write_manifest(out, {
        "command": "baseline",
        "version": __version__,
        "method": method,
        "input": str(input_path.resolve()),
        "input_sha256": _sha256(input_path),
        "out": str(out.resolve()),
        "count": count,
        "seed": seed,
        "sigma": sigma,
        "outputs": outputs,
    })
    return EXIT_OK


def cmd_baseline(args) -> int:
    if args.from_manifest:
        m = json.loads(Path(args.from_manifest).read_text())
        if m.get("command") != "baseline":
            raise UsageError("manifest was not written by the baseline command")
        out = Path(args.out) if args.out else Path(m["out"])
        return _run_baseline(Path(m["input"]), out, m["method"], m["count"], m["seed"],
                             m["sigma"])
    if not args.input or not args.out or not args.method:
        raise UsageError("--method, --input and --out are required unless --from-manifest is given")
    return _run_baseline(Path(args.input), Path(args.out), args.method, args.count, args.seed,
                         args.sigma)


def grid_info(grid) -> dict:
    report = detect_symmetry(grid, DEFAULT_TS)
    return {
        "dims": list(grid.dims),
        "kind": "occupancy" if grid.is_occupancy else "scalar",
        "trunc": grid.trunc,
        "occupied": int(as_occupancy(grid).data.sum()),
        "e_avg": mean_energy(compute_energy(grid)),
        "symmetry": {a.name: r for a, r in report.rates.items()},
    }


def cmd_info(args) -> int:
    print(json.dumps(grid_info(load_any(args.path)), indent=2))
    return EXIT_OK


def cmd_convert(args) -> int:
    save_any(load_any(args.src), args.dst)
    return EXIT_OK


def cmd_export_obj(args) -> int:
    nv, nf = export_obj(load_any(args.src), args.dst)
    log.info("wrote %d vertices, %d faces to %s", nv, nf, args.dst)
    return EXIT_OK


def cmd_gen(args) -> int:
    spec = ShapeSpec(args.shape, args.side,
                     extents=tuple(args.extents) if args.extents else None,
                     radius=args.radius, height=args.height, thickness=args.thickness,
                     origin=tuple(args.origin) if args.origin else None)
    grid = make_shape(spec)
    if args.sdf:
        grid = sdf_from_occupancy(grid, args.tau)
    save_any(grid, args.out)
    return EXIT_OK


def _add_config_flags(p: argparse.ArgumentParser) -> None:
    d = AugmentConfig()
    p.add_argument("--smax", type=float, default=d.s_max, help="max scaling factor per axis")
    p.add_argument("--beam", type=int, default=d.beam.n, help="beam width n")
    p.add_argument("--tie-tol", type=float, default=None,
                   help="cost tolerance for ties (default 0 occupancy, 1e-6 scalar)")
    p.add_argument("--epsilon", type=float, default=d.anchors.epsilon,
                   help="energy below which an occupied cell is an anchor candidate")
    p.add_argument("--clusters", type=int, default=d.anchors.k, help="k-means cluster count")
    p.add_argument("--batch", type=int, default=d.anchors.batch, help="k-means mini-batch size")
    p.add_argument("--iters", type=int, default=d.anchors.iters, help="k-means iterations")
    p.add_argument("--sims", type=int, default=d.anchors.s, help="simulated searches per cluster")
    p.add_argument("--draw", type=int, default=d.anchors.m,
                   help="clusters drawn per augmentation pass")
    p.add_argument("--ts", type=float, default=d.T_s, help="symmetry mismatch threshold")
    p.add_argument("--energy", choices=[k.value for k in EnergyKind], default=d.energy_kind.value)
    p.add_argument("--retries", type=int, default=d.retries, help="anchors tried per step")
    p.add_argument("--insert", choices=["replicate", "average"], default=None,
                   help="inserted cell values (default replicate occupancy, average scalar)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="carve3d", description=__doc__)
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("augment", help="seam-carving augmentation of one grid")
    p.add_argument("--input", help="input grid (.vgrid or .txt)")
    p.add_argument("--out", help="output directory")
    p.add_argument("--count", type=int, default=8)
    p.add_argument("--seed", type=int, default=0, help="output k uses seed + k")
    p.add_argument("--jobs", type=int, default=1, help="worker processes across outputs")
    p.add_argument("--steps-log", action="store_true", help="also write steps.jsonl")
    p.add_argument("--from-manifest", help="replay the run recorded in a manifest.json")
    _add_config_flags(p)
    p.set_defaults(func=cmd_augment)

    p = sub.add_parser("baseline", help="axis-scale or warp baseline augmentation")
    p.add_argument("--method", choices=["scale", "warp"])
    p.add_argument("--input")
    p.add_argument("--out")
    p.add_argument("--count", type=int, default=8)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--sigma", type=float, default=WARP_SIGMA, help="log-normal std for warp")
    p.add_argument("--from-manifest")
    p.set_defaults(func=cmd_baseline)

    p = sub.add_parser("info", help="print grid statistics as JSON")
    p.add_argument("path")
    p.set_defaults(func=cmd_info)

    p = sub.add_parser("convert", help="transcode between .vgrid and .txt")
    p.add_argument("src")
    p.add_argument("dst")
    p.set_defaults(func=cmd_convert)

    p = sub.add_parser("export-obj", help="write a voxel mesh as OBJ")
    p.add_argument("src")
    p.add_argument("dst")
    p.set_defaults(func=cmd_export_obj)

    p = sub.add_parser("gen", help="write a synthetic shape fixture")
    p.add_argument("--shape", choices=SHAPES, required=True)
    p.add_argument("--side", type=int, required=True)
    p.add_argument("--radius", type=int, default=0)
    p.add_argument("--height", type=int, default=0)
    p.add_argument("--thickness", type=int, default=2)
    p.add_argument("--extents", type=int, nargs=3)
    p.add_argument("--origin", type=int, nargs=3)
    p.add_argument("--sdf", action="store_true", help="store a truncated signed distance grid")
    p.add_argument("--tau", type=float, default=3.0, help="truncation distance for --sdf")
    p.add_argument("out")
    p.set_defaults(func=cmd_gen)
    return parser


def _setup_logging() -> None:
    level = os.environ.get("CARVE3D_LOG", "error").upper()
    logging.basicConfig(level=getattr(logging, level, logging.ERROR),
                        format="%(levelname)s %(name)s: %(message)s")


def main(argv: Optional[Sequence[str]] = None) -> int:
    _setup_logging()
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.func(args)
    except (UsageError, SpecError) as exc:
        print(f"carve3d: error: {exc}", file=sys.stderr)
        return EXIT_ARGS
    except (FormatError, OSError, json.JSONDecodeError, KeyError) as exc:
        print(f"carve3d: {exc}", file=sys.stderr)
        return EXIT_IO
    except (AugmentError, NoAnchorError) as exc:
        print(f"carve3d: augmentation failed: {exc}", file=sys.stderr)
        return EXIT_AUGMENT


if __name__ == "__main__":
    sys.exit(main())
