"""Command-line entry point.

Exit codes:
    0  success
    1  other solver failure (e.g. queue overflow)
    2  no inliers found
    3  invalid input: unreadable or malformed files, bad arguments

Errors are reported on stderr as one JSON object per line with an
``error`` id and a ``message``.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path
from typing import Sequence

import numpy as np

from . import curves, io, synthetic
from .cost import FeaturePair, PairKind
from .errors import EmptyInlierSet, GraffError
from .solver import SolverConfig, register_free, register_pairs
from .solver.translation import PSI_MODES

EXIT_OK, EXIT_FAILURE, EXIT_NO_INLIERS, EXIT_INPUT = 0, 1, 2, 3


class InputError(Exception):
    error_id = "invalid_input"


class _Parser(argparse.ArgumentParser):
    def error(self, message: str):  # argparse would exit with 2, which is reserved
        raise InputError(f"{self.prog}: {message}")


def _report(error_id: str, message: str) -> None:
    print(json.dumps({"error": error_id, "message": message}), file=sys.stderr)


def _vector3(text: str) -> np.ndarray:
    try:
        v = np.array([float(x) for x in text.split(",")])
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected three comma-separated numbers, got {text!r}") from None
    if v.shape != (3,):
        raise argparse.ArgumentTypeError(f"expected three comma-separated numbers, got {text!r}")
    return v


def _ratios(text: str) -> tuple[float, ...]:
    try:
        return tuple(float(x) for x in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated ratios, got {text!r}") from None


def _positive_int(text: str) -> int:
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError("must be >= 1")
    return v


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="graffreg", description="Line and plane registration on the affine Grassmannian.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    reg = sub.add_parser("register", help="register a source feature file onto a target feature file")
    reg.add_argument("--target", required=True, type=Path)
    reg.add_argument("--source", required=True, type=Path)
    reg.add_argument("--kind", required=True, choices=[k.value for k in PairKind])
    mode = reg.add_mutually_exclusive_group()
    mode.add_argument("--corr", type=Path, help="correspondence file; default pairs items by position")
    mode.add_argument("--free", action="store_true", help="search without correspondences")
    reg.add_argument("--eps-r", type=float, default=SolverConfig.epsilon_r)
    reg.add_argument("--eps-t", type=float, default=SolverConfig.epsilon_t)
    reg.add_argument("--t-halfside", type=float, default=None)
    reg.add_argument("--t-center", type=_vector3, default=np.zeros(3))
    reg.add_argument("--psi-mode", choices=PSI_MODES, default=SolverConfig.psi_mode)
    reg.add_argument("--max-queue", type=_positive_int, default=SolverConfig.max_queue)
    reg.add_argument("--seed", type=int, default=0)
    reg.add_argument("--threads", type=_positive_int, default=1, help="the solver itself is single-threaded")
    reg.add_argument("--timing", action="store_true", help="include wall-clock times in stats")
    reg.add_argument("--out", type=Path, default=None, help="result file; default stdout")

    bench = sub.add_parser("bench", help="synthetic benchmark over outlier ratios")
    bench.add_argument("--kind", choices=[k.value for k in PairKind], default="l2l")
    bench.add_argument("--protocol", choices=("generic", "pnl"), default="generic")
    bench.add_argument("--ratios", type=_ratios, default=(0.0, 0.4, 0.8))
    bench.add_argument("--repeats", type=_positive_int, default=5)
    bench.add_argument("--n-pairs", type=_positive_int, default=30)
    bench.add_argument("--angular-noise", type=float, default=0.002)
    bench.add_argument("--noise", type=float, default=0.005)
    bench.add_argument("--pixel-noise", type=float, default=1.0)
    bench.add_argument("--eps-r", type=float, default=None, help="default derived from the noise level")
    bench.add_argument("--seed", type=int, default=0)
    bench.add_argument("--threads", type=_positive_int, default=1)
    bench.add_argument("--timing", action="store_true", help="fill the wall_ms column")
    bench.add_argument("--out", type=Path, default=None, help="CSV file; default stdout")
    bench.add_argument("--summary", type=Path, default=None, help="write median errors per ratio as JSON")

    curve = sub.add_parser("curve", help="curve lengths between two 2D lines a x + b y + c = 0")
    curve.add_argument("--v1", type=_vector3, required=True, help="a,b,c (use --v1=-1,2,3 for a leading minus)")
    curve.add_argument("--v2", type=_vector3, required=True)
    curve.add_argument("--n", type=int, default=1000)
    curve.add_argument("--out", type=Path, default=None)
    return parser


def _emit(text: str, out: Path | None) -> None:
    if out is None:
        sys.stdout.write(text)
    else:
        out.write_text(text, encoding="utf-8")


def _pairs_for(kind: PairKind, tgt: io.FeatureSet, src: io.FeatureSet, corr: Path | None):
    if corr is None:
        if len(tgt.features) != len(src.features):
            raise InputError("without --corr or --free the files must hold the same number of items")
        id_pairs = list(zip(tgt.ids, src.ids))
    else:
        id_pairs = io.read_correspondences(corr)
    ti, si = tgt.index(), src.index()
    pairs = []
    for n, (a, b) in enumerate(id_pairs):
        if a not in ti or b not in si:
            raise InputError(f"correspondence ({a!r}, {b!r}) refers to an unknown id")
        pairs.append(FeaturePair(kind, tgt.features[ti[a]], src.features[si[b]], n))
    return pairs, id_pairs


def _stats(result, timing: bool) -> dict:
    st = result.stats
    out = {
        "rotation_cubes": st["rotation"]["cubes_expanded"],
        "translation_cubes": st["translation"]["cubes_expanded"],
        "bound_evaluations": st["bound_evaluations"],
        "translation_halfside": st["translation_halfside"],
        "translation_on_boundary": st["translation"]["on_boundary"],
        "refine_iterations": max(0, len(st["refine_history"]) - 1),
        "inlier_count": len(result.inliers),
    }
    if timing:
        out["wall_time"] = st["wall_time"]
    return out


def cmd_register(args) -> int:
    kind = PairKind(args.kind)
    tgt = io.read_features(args.target)
    src = io.read_features(args.source)
    config = SolverConfig(
        epsilon_r=args.eps_r,
        epsilon_t=args.eps_t,
        initial_translation_halfside=args.t_halfside,
        translation_center=tuple(float(x) for x in args.t_center),
        max_queue=args.max_queue,
        rng_seed=args.seed,
        psi_mode=args.psi_mode,
    )
    for fs, dim, name in ((tgt, kind.dims[0], "target"), (src, kind.dims[1], "source")):
        if any(f.dim_sub != dim for f in fs.features):
            raise InputError(f"{name} file holds items that do not match --kind {kind.value}")
    if args.free:
        result = register_free(tgt.features, src.features, kind, config)
        inlier_ids = [[tgt.ids[i], src.ids[j]] for i, j in (result.matches[k] for k in result.inliers)]
    else:
        pairs, id_pairs = _pairs_for(kind, tgt, src, args.corr)
        result = register_pairs(pairs, config)
        inlier_ids = [list(id_pairs[i]) for i in result.inliers]
    cost = result.final_cost
    res = io.ResultFile(
        result.transform.rotation,
        result.transform.translation,
        inlier_ids,
        {"f_sum": cost.f_sum, "g_sum": cost.g_sum, "total": cost.total},
        _stats(result, args.timing),
    )
    _emit(io.write_result(None, res), args.out)
    return EXIT_OK


def cmd_bench(args) -> int:
    kind = PairKind(args.kind)
    if args.protocol == "pnl" and kind is not PairKind.LINE_PLANE:
        raise InputError("the pnl protocol produces line-to-plane pairs; use --kind l2p")
    scene = synthetic.SceneConfig(
        n_pairs=args.n_pairs,
        feature_kind=kind,
        noise_sigma=args.noise,
        angular_noise=args.angular_noise,
        pixel_noise=args.pixel_noise,
        rng_seed=args.seed,
    )
    if any(not 0.0 <= r < 1.0 for r in args.ratios):
        raise InputError("ratios must lie in [0, 1)")
    eps = args.eps_r if args.eps_r is not None else synthetic.default_epsilon(scene, args.protocol)
    spec = synthetic.BenchmarkSpec(
        scene=scene,
        ratios=args.ratios,
        repeats=args.repeats,
        protocol=args.protocol,
        timing=args.timing,
        threads=args.threads,
        solver=SolverConfig(epsilon_r=eps, rng_seed=args.seed),
    )
    rows = synthetic.run_benchmark(spec)
    _emit(synthetic.rows_to_csv(rows), args.out)
    if args.summary is not None:
        args.summary.write_text(io.dumps(synthetic.summarize(rows)) + "\n", encoding="utf-8")
    return EXIT_OK


def cmd_curve(args) -> int:
    report = curves.closed_geodesic_report(args.v1, args.v2, args.n)
    doc = report.as_dict()
    doc["shortest_minus_geodesic"] = report.shortest_minus_geodesic
    _emit(io.dumps(doc) + "\n", args.out)
    return EXIT_OK


COMMANDS = {"register": cmd_register, "bench": cmd_bench, "curve": cmd_curve}


def main(argv: Sequence[str] | None = None) -> int:
    try:
        args = build_parser().parse_args(argv)
        return COMMANDS[args.command](args)
    except EmptyInlierSet as exc:
        _report(exc.error_id, str(exc))
        return EXIT_NO_INLIERS
    except InputError as exc:
        _report(exc.error_id, str(exc))
        return EXIT_INPUT
    except FileNotFoundError as exc:
        _report("file_not_found", f"{exc.filename}: {exc.strerror}")
        return EXIT_INPUT
    except OSError as exc:
        _report("io_error", str(exc))
        return EXIT_INPUT
    except GraffError as exc:
        # Validation failures are ValueErrors; anything else is a solver failure.
        _report(exc.error_id, str(exc))
        return EXIT_INPUT if isinstance(exc, ValueError) else EXIT_FAILURE
    except ValueError as exc:
        _report("invalid_value", str(exc))
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
