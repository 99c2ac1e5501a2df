"""Command-line harness: ``python -m asndepth <subcommand> ...``.

Exit codes: 0 success, 2 bad arguments, 3 I/O or parse failure, 4 numerical
failure. Every output file is written atomically. CSV outputs start with
``# key=value`` lines recording the subcommand and its result-affecting flags.
``--threads``, ``--log-level`` and ``--out`` are named on a ``# omitted=`` line
without their values, so outputs compare byte for byte across thread counts.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path
from typing import Callable, Sequence

from pydantic import ValidationError

from . import __version__, experiments, io
from .asn import resolve_guidance
from .backproject import backproject
from .config import AsnConfig, SamplerConfig, SceneConfig
from .errors import ContractError, DomainError, NumericalError, ParseError
from .metrics import depth_metrics, normal_metrics, pointcloud_metrics
from .synthetic import make_scene

logger = logging.getLogger("asndepth.cli")

EXIT_OK, EXIT_USAGE, EXIT_IO, EXIT_NUMERIC = 0, 2, 3, 4
# flags that never change a result; listed by name on the "# omitted=" line instead of with values
_OMITTED_FLAGS = ("--log-level", "--out", "--threads")
_RUNTIME_FLAGS = {"threads", "log_level", "func", "out", "command"}


class _Parser(argparse.ArgumentParser):
    """Raises instead of exiting so :func:`run` owns the exit code."""

    def error(self, message: str):
        self.print_usage(sys.stderr)
        raise _UsageError(f"{self.prog}: error: {message}")


class _UsageError(Exception):
    pass


def _list_of(kind: Callable[[str], object]) -> Callable[[str], list]:
    def parse(text: str) -> list:
        try:
            return [kind(part) for part in text.split(",") if part.strip()]
        except ValueError as exc:
            raise argparse.ArgumentTypeError(f"bad list {text!r}: {exc}") from exc

    return parse


_ints = _list_of(int)
_floats = _list_of(float)
_strs = _list_of(str)


def _provenance(args: argparse.Namespace) -> dict[str, str]:
    flags = " ".join(
        f"--{key.replace('_', '-')}={_flag_value(val)}"
        for key, val in sorted(vars(args).items())
        if key not in _RUNTIME_FLAGS
    )
    return {"asndepth": __version__, "command": args.command, "flags": flags, "omitted": ",".join(_OMITTED_FLAGS)}


def _flag_value(val) -> str:
    if isinstance(val, (list, tuple)):
        return ",".join(str(v) for v in val)
    return str(val)


def _write_rows(args: argparse.Namespace, rows) -> None:
    io.write_csv(rows, args.out, header=experiments.ROW_HEADER, comments=_provenance(args))
    print(f"wrote {len(rows)} rows to {args.out}")


# ---------- subcommands ----------


def cmd_normals(args: argparse.Namespace) -> int:
    depth = io.read_depth(args.depth)
    intr = io.read_intrinsics(args.intrinsics)
    pm = backproject(depth, intr)
    if args.method == "asn":
        if args.guidance in ("constant", "oracle"):
            guidance, path = args.guidance, None
        else:
            guidance, path = "external", args.guidance
        cfg = AsnConfig(
            sampler=SamplerConfig(patch_size=args.patch, k=args.k, seed=args.seed),
            use_area=not args.no_area,
            use_context=not args.no_context,
            guidance=guidance,
            guidance_path=path,
            guidance_scale=args.guidance_scale,
        )
        segments = None
        if guidance == "oracle":
            seg_path = args.segments or Path(args.depth).with_name(io.SCENE_FILES["segments"])
            segments = io.read_segments(seg_path)
        f = resolve_guidance(cfg, pm.shape, segments)
        normals = experiments.estimate_normals(pm, "asn", cfg, f, threads=args.threads)
    else:
        normals = experiments.estimate_normals(pm, args.method, patch=args.patch, threads=args.threads)
    io.write_normals(normals, args.out)
    logger.info("wrote %d valid normals to %s", int(normals.valid.sum()), args.out)
    return EXIT_OK


def cmd_eval(args: argparse.Namespace) -> int:
    if args.kind == "normal":
        metrics = normal_metrics(io.read_normals(args.pred), io.read_normals(args.gt))
    else:
        pred, gt = io.read_depth(args.pred), io.read_depth(args.gt)
        if args.kind == "depth":
            metrics = depth_metrics(pred, gt)
        else:
            if args.intrinsics is None:
                raise ContractError("--kind cloud needs --intrinsics")
            intr = io.read_intrinsics(args.intrinsics)
            metrics = pointcloud_metrics(backproject(pred, intr), backproject(gt, intr))
    io.write_csv(metrics.items(), args.out, header=("metric", "value"), comments=_provenance(args))
    for name, value in metrics.items():
        print(f"{name}: {io.format_value(value)}")
    return EXIT_OK


def cmd_scene(args: argparse.Namespace) -> int:
    cfg = SceneConfig(
        kind=args.kind,
        res=args.res,
        sigma=args.sigma,
        correlation=args.correlation,
        seed=args.seed,
        background=not args.no_background,
    )
    paths = io.write_scene(make_scene(cfg), args.outdir)
    for path in paths.values():
        print(f"wrote {path}")
    return EXIT_OK


def cmd_sweep_k(args: argparse.Namespace) -> int:
    rows = experiments.sweep_k(args.klist, args.kind, args.sigma, args.seeds, args.res, args.patch, args.threads)
    _write_rows(args, rows)
    return EXIT_OK


def cmd_sweep_patch(args: argparse.Namespace) -> int:
    rows = experiments.sweep_patch(
        args.sizes, args.kind, args.sigma, args.seeds, args.res, args.k, args.correlation, args.threads
    )
    _write_rows(args, rows)
    return EXIT_OK


def cmd_noise_exp(args: argparse.Namespace) -> int:
    rows = experiments.noise_experiment(args.sigmas, args.modes, args.seeds, args.res, args.k, args.patch, args.threads)
    _write_rows(args, rows)
    return EXIT_OK


def cmd_gradcheck(args: argparse.Namespace) -> int:
    seeds = range(args.seed, args.seed + args.n_seeds)
    rows = experiments.run_gradcheck(args.res, seeds, args.h, args.tolerance, args.k)
    _write_rows(args, rows)
    return EXIT_OK


def cmd_bench(args: argparse.Namespace) -> int:
    rows = experiments.bench(args.res, args.methods, args.klist, args.k_res, args.lsq_patch, args.repeats, args.threads)
    _write_rows(args, rows)
    return EXIT_OK


def cmd_ablation(args: argparse.Namespace) -> int:
    rows = experiments.ablation(args.sigma, args.seeds, args.modes, args.res, args.k, args.patch, args.band, args.threads)
    _write_rows(args, rows)
    return EXIT_OK


def cmd_compare(args: argparse.Namespace) -> int:
    rows = experiments.compare_estimators(args.kinds, args.sigma, args.seed, args.res, args.k, args.patch, threads=args.threads)
    rows += experiments.boundary_comparison(
        [k for k in args.kinds if k in ("step", "wedge")], 0.0, args.seed, args.res, args.k, args.patch, args.band, args.threads
    )
    _write_rows(args, rows)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--threads", type=int, default=1, help="worker threads; results do not depend on it")
    common.add_argument("--log-level", default="WARNING", choices=["DEBUG", "INFO", "WARNING", "ERROR"])

    ap = _Parser(prog="asndepth", description="Adaptive surface normals from depth maps.")
    ap.add_argument("--version", action="version", version=f"asndepth {__version__}")
    sub = ap.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def add(name: str, func, help_text: str) -> argparse.ArgumentParser:
        p = sub.add_parser(name, help=help_text, parents=[common])
        p.set_defaults(func=func)
        return p

    p = add("normals", cmd_normals, "estimate a normal map from a depth raster")
    p.add_argument("--depth", required=True)
    p.add_argument("--intrinsics", required=True)
    p.add_argument("--method", choices=experiments.METHODS, default="asn")
    p.add_argument("--patch", type=int, default=5)
    p.add_argument("--k", type=int, default=40)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--guidance", default="constant", help="constant, oracle, or a feature raster path")
    p.add_argument("--guidance-scale", type=float, default=1.0)
    p.add_argument("--segments", default=None, help="segment raster for oracle guidance (default: next to --depth)")
    p.add_argument("--no-area", action="store_true")
    p.add_argument("--no-context", action="store_true")
    p.add_argument("--out", required=True)

    p = add("eval", cmd_eval, "compare a prediction with ground truth")
    p.add_argument("--pred", required=True)
    p.add_argument("--gt", required=True)
    p.add_argument("--intrinsics", default=None)
    p.add_argument("--kind", choices=["depth", "normal", "cloud"], required=True)
    p.add_argument("--out", required=True)

    p = add("scene", cmd_scene, "render a synthetic scene bundle")
    p.add_argument("--kind", choices=["plane", "hemisphere", "step", "wedge"], default="hemisphere")
    p.add_argument("--res", type=int, default=128)
    p.add_argument("--sigma", type=float, default=0.0)
    p.add_argument("--correlation", type=float, default=0.0, help="noise blur in px; 0 for i.i.d. noise")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--no-background", action="store_true")
    p.add_argument("--outdir", required=True)

    p = add("sweep-k", cmd_sweep_k, "mean angle error against the number of triplets")
    p.add_argument("--kind", choices=["plane", "hemisphere", "step", "wedge"], default="hemisphere")
    p.add_argument("--sigma", type=float, default=0.01)
    p.add_argument("--klist", type=_ints, default=list(experiments.K_LIST))
    p.add_argument("--seeds", type=_ints, default=list(experiments.SEEDS))
    p.add_argument("--res", type=int, default=64)
    p.add_argument("--patch", type=int, default=5)
    p.add_argument("--out", required=True)

    p = add("sweep-patch", cmd_sweep_patch, "mean angle error against the local patch size")
    p.add_argument("--sizes", type=_ints, default=list(experiments.PATCH_SIZES))
    p.add_argument("--kind", choices=["plane", "hemisphere", "step", "wedge"], default="hemisphere")
    p.add_argument("--sigma", type=float, default=0.01)
    p.add_argument("--seeds", type=_ints, default=list(experiments.SEEDS))
    p.add_argument("--res", type=int, default=128)
    p.add_argument("--k", type=int, default=40)
    p.add_argument("--correlation", type=float, default=experiments.PATCH_CORRELATION, help="noise blur in px")
    p.add_argument("--out", required=True)

    p = add("noise-exp", cmd_noise_exp, "area weighting against uniform averaging under noise")
    p.add_argument("--sigmas", type=_floats, default=list(experiments.NOISE_SIGMAS))
    p.add_argument("--modes", type=_strs, default=["area", "uniform"])
    p.add_argument("--seeds", type=_ints, default=list(experiments.SEEDS))
    p.add_argument("--res", type=int, default=64)
    p.add_argument("--k", type=int, default=40)
    p.add_argument("--patch", type=int, default=5)
    p.add_argument("--out", required=True)

    p = add("gradcheck", cmd_gradcheck, "analytic loss gradient against central differences")
    p.add_argument("--res", type=int, default=16)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--n-seeds", type=int, default=5)
    p.add_argument("--h", type=float, default=1e-5)
    p.add_argument("--tolerance", type=float, default=1e-4)
    p.add_argument("--k", type=int, default=40)
    p.add_argument("--out", required=True)

    p = add("bench", cmd_bench, "wall time of the normal estimators")
    p.add_argument("--res", type=_ints, default=[64, 128, 256, 512])
    p.add_argument("--methods", type=_strs, default=list(experiments.METHODS))
    p.add_argument("--klist", type=_ints, default=list(experiments.K_LIST))
    p.add_argument("--k-res", type=int, default=192)
    p.add_argument("--lsq-patch", type=int, default=9)
    p.add_argument("--repeats", type=int, default=5)
    p.add_argument("--out", required=True)

    p = add("ablation", cmd_ablation, "area / geometric-context ablation on the noisy step")
    p.add_argument("--sigma", type=float, default=0.005)
    p.add_argument("--seeds", type=_ints, default=list(experiments.SEEDS))
    p.add_argument("--modes", type=_strs, default=list(experiments.ABLATION_MODES))
    p.add_argument("--res", type=int, default=64)
    p.add_argument("--k", type=int, default=40)
    p.add_argument("--patch", type=int, default=5)
    p.add_argument("--band", type=int, default=2)
    p.add_argument("--out", required=True)

    p = add("compare", cmd_compare, "every estimator on every scene, plus virtual normals")
    p.add_argument("--kinds", type=_strs, default=["plane", "hemisphere", "step", "wedge"])
    p.add_argument("--sigma", type=float, default=0.005)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--res", type=int, default=64)
    p.add_argument("--k", type=int, default=40)
    p.add_argument("--patch", type=int, default=5)
    p.add_argument("--band", type=int, default=2)
    p.add_argument("--out", required=True)
    return ap


def run(argv: Sequence[str] | None = None) -> int:
    """Parse ``argv``, run the subcommand and map failures to an exit code."""
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except _UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_USAGE
    except SystemExit as exc:  # --help / --version
        return int(exc.code or 0)

    logging.basicConfig(
        level=getattr(logging, args.log_level),
        stream=sys.stderr,
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
        force=True,
    )
    if args.threads < 1:
        print(f"{parser.prog}: error: --threads must be >= 1", file=sys.stderr)
        return EXIT_USAGE

    try:
        return args.func(args)
    except (ValidationError, ContractError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (ParseError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (DomainError, NumericalError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


def main() -> None:
    sys.exit(run())
