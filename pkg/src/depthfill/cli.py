"""Command-line front end: scene generation, completion, ablation, eval.

Exit codes form a stable contract: 0 on success, 2 for any input or
configuration problem, 3 when the solver diverges. All outputs are
byte-identical across reruns with the same flags (wall-clock time never
reaches a report).
"""

import argparse
import sys
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import ablate
from .io import (
    FormatError,
    read_depth,
    read_mask,
    read_sparse_csv,
    write_depth,
    write_mask,
    write_report,
    write_sparse_csv,
)
from .grid import SparseDepth
from .losses import GcConfig, LossConfig, SmsConfig
from .metrics import evaluate
from .scenegen import (
    LAYOUTS,
    PROTOCOLS,
    TEXTURES,
    SamplingSpec,
    SceneSpec,
    generate_scene,
    sample_sparse,
)
from .solver import INIT_MODES, SolverConfig, solve


@dataclass
class RunConfig:
    """Fully resolved settings for one solver invocation."""

    loss: LossConfig
    solver: SolverConfig


def _parse_size(text):
    try:
        h, w = text.lower().split("x")
        return int(h), int(w)
    except ValueError:
        raise argparse.ArgumentTypeError(
            f"size must look like 64x64, got {text!r}") from None


def _parse_range(text):
    try:
        lo, hi = text.split(":")
        return float(lo), float(hi)
    except ValueError:
        raise argparse.ArgumentTypeError(
            f"range must look like 1.0:9.0, got {text!r}") from None


def _parse_terms(text):
    return tuple(part.strip() for part in text.split(",") if part.strip())


def _parse_bool(text):
    low = str(text).strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise argparse.ArgumentTypeError(f"expected a boolean, got {text!r}")


# config-file key -> (argparse dest, converter); flat "section.key = value"
_SCENE_KEYS = {
    "scene.layout": ("layout", str),
    "scene.regions": ("regions", int),
    "scene.size": ("size", _parse_size),
    "scene.texture": ("texture", str),
    "scene.depth_range": ("depth_range", _parse_range),
    "scene.seed": ("seed", int),
    "sampling.count": ("samples", int),
    "sampling.protocol": ("protocol", str),
    "sampling.beams": ("beams", int),
    "sampling.noise_std": ("noise_std", float),
}
_SOLVE_KEYS = {
    "loss.terms": ("terms", _parse_terms),
    "loss.alpha": ("alpha", float),
    "gc.window": ("gc_window", int),
    "gc.basis": ("gc_basis", str),
    "gc.select_fraction": ("gc_select_fraction", float),
    "gc.edge_exclusion": ("gc_edge_exclusion", _parse_bool),
    "sms.variant": ("sms_variant", str),
    "sms.select_fraction": ("sms_select_fraction", float),
    "solver.max_iterations": ("cap", int),
    "solver.learning_rate": ("lr", float),
    "solver.momentum_decay": ("momentum_decay", float),
    "solver.variance_decay": ("variance_decay", float),
    "solver.epsilon": ("epsilon", float),
    "solver.convergence_tol": ("tol", float),
    "solver.convergence_window": ("convergence_window", int),
    "solver.init": ("init", str),
    "solver.init_constant": ("init_constant", float),
    "solver.clamp_min": ("clamp_min", float),
    "solver.clamp_max": ("clamp_max", float),
    "solver.seed": ("solver_seed", int),
}
_ABLATE_KEYS = {
    "ablate.tables": ("tables", _parse_terms),
    "ablate.seeds": ("seeds", int),
    "ablate.cap": ("cap", int),
}
_CONFIG_KEYS = {
    "gen-scene": _SCENE_KEYS,
    "complete": _SOLVE_KEYS,
    "ablate": _ABLATE_KEYS,
}


class CliError(Exception):
    """Input or configuration problem; maps to exit code 2."""


def parse_config_file(path, allowed):
    """Read flat 'section.key = value' lines; unknown keys are rejected."""
    defaults = {}
    try:
        lines = Path(path).read_text(encoding="utf-8").splitlines()
    except OSError as exc:
        raise CliError(f"cannot read config {path}: {exc}") from None
    for lineno, raw in enumerate(lines, start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise CliError(
                f"{path}:{lineno}: expected 'section.key = value', got {raw!r}")
        key, _, value = line.partition("=")
        key, value = key.strip(), value.strip()
        if key not in allowed:
            raise CliError(f"{path}:{lineno}: unknown config key {key!r}")
        dest, convert = allowed[key]
        try:
            defaults[dest] = convert(value)
        except (ValueError, argparse.ArgumentTypeError) as exc:
            raise CliError(f"{path}:{lineno}: bad value for {key}: {exc}") \
                from None
    return defaults


def _extract_config_path(argv):
    for i, arg in enumerate(argv):
        if arg == "--config":
            if i + 1 >= len(argv):
                raise CliError("--config needs a path")
            return argv[i + 1]
        if arg.startswith("--config="):
            return arg.split("=", 1)[1]
    return None


def _add_solver_flags(sub):
    sub.add_argument("--terms", type=_parse_terms, default=("dc", "gc", "sms"),
                     help="comma-separated loss terms (default dc,gc,sms)")
    sub.add_argument("--alpha", type=float, default=0.1)
    sub.add_argument("--gc-window", type=int, default=8, dest="gc_window")
    sub.add_argument("--gc-basis", choices=("mask", "image"), default="mask",
                     dest="gc_basis")
    sub.add_argument("--gc-select-fraction", type=float, default=0.02,
                     dest="gc_select_fraction")
    sub.add_argument("--gc-edge-exclusion", type=_parse_bool, default=True,
                     dest="gc_edge_exclusion")
    sub.add_argument("--sms-variant", default="selective_mask",
                     dest="sms_variant")
    sub.add_argument("--sms-select-fraction", type=float, default=0.40,
                     dest="sms_select_fraction")
    sub.add_argument("--cap", type=int, default=2000,
                     help="iteration cap (default 2000)")
    sub.add_argument("--lr", type=float, default=1e-3)
    sub.add_argument("--momentum-decay", type=float, default=0.9)
    sub.add_argument("--variance-decay", type=float, default=0.999)
    sub.add_argument("--epsilon", type=float, default=1e-8)
    sub.add_argument("--tol", type=float, default=1e-6)
    sub.add_argument("--convergence-window", type=int, default=50)
    sub.add_argument("--init", choices=INIT_MODES, default="nearest_sample")
    sub.add_argument("--init-constant", type=float, default=None)
    sub.add_argument("--clamp-min", type=float, default=1e-3)
    sub.add_argument("--clamp-max", type=float, default=10.0)
    sub.add_argument("--solver-seed", type=int, default=0)
    sub.add_argument("--config", default=None,
                     help="flat 'section.key = value' settings file")


def _run_config(args) -> RunConfig:
    try:
        loss = LossConfig(
            terms=args.terms,
            gc=GcConfig(window_size=args.gc_window,
                        select_fraction=args.gc_select_fraction,
                        basis=args.gc_basis,
                        edge_exclusion=args.gc_edge_exclusion),
            sms=SmsConfig(select_fraction=args.sms_select_fraction,
                          variant=args.sms_variant),
            alpha=args.alpha,
        )
        solver = SolverConfig(
            max_iterations=args.cap,
            learning_rate=args.lr,
            momentum_decay=args.momentum_decay,
            variance_decay=args.variance_decay,
            epsilon=args.epsilon,
            convergence_tol=args.tol,
            convergence_window=args.convergence_window,
            init=args.init,
            init_constant=args.init_constant,
            clamp_min=args.clamp_min,
            clamp_max=args.clamp_max,
            seed=args.solver_seed,
        )
    except ValueError as exc:
        raise CliError(str(exc)) from None
    return RunConfig(loss=loss, solver=solver)


def build_parser():
    """Return the argument parser plus a name -> subparser map."""
    parser = argparse.ArgumentParser(
        prog="depthfill",
        description="Sparse-to-dense depth completion by direct optimization")
    subs = parser.add_subparsers(dest="command", required=True)

    gen = subs.add_parser("gen-scene", help="write a synthetic scene to disk")
    gen.add_argument("--layout", choices=LAYOUTS, default="vertical_strips")
    gen.add_argument("--regions", type=int, default=2)
    gen.add_argument("--size", type=_parse_size, default=(64, 64))
    gen.add_argument("--texture", choices=TEXTURES, default="per_region_shade")
    gen.add_argument("--depth-range", type=_parse_range, default=(1.0, 9.0),
                     dest="depth_range")
    gen.add_argument("--samples", type=int, default=200)
    gen.add_argument("--protocol", choices=PROTOCOLS, default="uniform_random")
    gen.add_argument("--beams", type=int, default=4)
    gen.add_argument("--noise-std", type=float, default=0.0, dest="noise_std")
    gen.add_argument("--seed", type=int, default=0)
    gen.add_argument("--out", required=True)
    gen.add_argument("--config", default=None)

    comp = subs.add_parser("complete", help="densify sparse depth samples")
    comp.add_argument("--sparse", required=True,
                      help="sparse depth: csv or a depth map with holes")
    comp.add_argument("--mask", default=None, help="segmentation label map")
    comp.add_argument("--image", default=None, help="luminance float map")
    comp.add_argument("--gt", default=None,
                      help="dense ground truth; enables a metrics report")
    comp.add_argument("--out", required=True)
    _add_solver_flags(comp)

    abl = subs.add_parser("ablate", help="run the ablation study suites")
    abl.add_argument("--tables", type=_parse_terms,
                     default=ablate.TABLE_NAMES,
                     help="comma-separated subset of "
                          + ",".join(ablate.TABLE_NAMES))
    abl.add_argument("--seeds", type=int, default=20,
                     help="number of sampling seeds per scene")
    abl.add_argument("--cap", type=int, default=None,
                     help="override the per-study iteration cap")
    abl.add_argument("--out", required=True)
    abl.add_argument("--config", default=None)

    ev = subs.add_parser("eval", help="compare a prediction to ground truth")
    ev.add_argument("--pred", required=True)
    ev.add_argument("--gt", required=True)
    ev.add_argument("--cap", type=float, default=10.0,
                    help="depth cap in meters (default 10, indoor preset)")
    ev.add_argument("--out", default=None, help="optional report path")
    return parser, {"gen-scene": gen, "complete": comp,
                    "ablate": abl, "eval": ev}


def _outdir(path):
    out = Path(path)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise CliError(f"cannot create output directory {path}: {exc}") \
            from None
    return out


def _wrote(path):
    print(f"wrote {path}")


def cmd_gen_scene(args) -> int:
    h, w = args.size
    try:
        spec = SceneSpec(h, w, args.regions, layout=args.layout,
                         depth_range=args.depth_range,
                         texture_mode=args.texture, seed=args.seed)
        scene = generate_scene(spec)
        sampling = SamplingSpec(protocol=args.protocol, n=args.samples,
                                beam_count=args.beams)
        sparse = sample_sparse(scene.gt, sampling, noise_std=args.noise_std,
                               seed=args.seed)
    except ValueError as exc:
        raise CliError(str(exc)) from None
    out = _outdir(args.out)
    gt_path = out / "ground_truth.fm"
    write_depth(scene.gt, gt_path)
    _wrote(gt_path)
    mask_path = out / "mask.pgm"
    write_mask(scene.mask, mask_path)
    _wrote(mask_path)
    image_path = out / "luminance.fm"
    write_depth(scene.image, image_path)
    _wrote(image_path)
    sparse_path = out / "sparse.csv"
    write_sparse_csv(sparse, sparse_path)
    _wrote(sparse_path)
    return 0


def _read_sparse_input(path):
    if str(path).endswith(".csv"):
        return read_sparse_csv(path)
    loaded = read_depth(path)
    if not isinstance(loaded, SparseDepth):
        raise CliError(
            f"{path} is a dense map with no holes; nothing to complete")
    return loaded


def _read_dense(path, what):
    loaded = read_depth(path)
    if isinstance(loaded, SparseDepth):
        raise CliError(f"{what} {path} has missing pixels; a dense map "
                       f"is required")
    return loaded


def cmd_complete(args) -> int:
    run = _run_config(args)
    sparse = _read_sparse_input(args.sparse)
    mask = read_mask(args.mask) if args.mask else None
    image = _read_dense(args.image, "image") if args.image else None
    gt = _read_dense(args.gt, "ground truth") if args.gt else None
    try:
        depth, trace = solve(sparse, mask=mask, image=image,
                             loss_cfg=run.loss, solver_cfg=run.solver)
    except ValueError as exc:
        raise CliError(str(exc)) from None

    out = _outdir(args.out)
    depth_path = out / "completed.fm"
    write_depth(depth, depth_path)
    _wrote(depth_path)
    report = {
        "command": "complete",
        "terms": list(run.loss.terms),
        "gc": {"window": run.loss.gc.window_size,
               "basis": run.loss.gc.basis,
               "select_fraction": run.loss.gc.select_fraction},
        "sms": {"variant": run.loss.sms.variant,
                "select_fraction": run.loss.sms.select_fraction},
        "solver": trace.summary(),
    }
    if gt is not None:
        try:
            metrics_report = evaluate(depth, gt, cap_meters=args.clamp_max)
        except ValueError as exc:
            raise CliError(str(exc)) from None
        metrics_path = out / "metrics_report.json"
        write_report(metrics_report.to_dict(), metrics_path)
        _wrote(metrics_path)
        report["metrics"] = metrics_report.to_dict()
    trace_path = out / "trace_report.json"
    write_report(report, trace_path)
    _wrote(trace_path)
    if trace.termination == "diverged":
        print("solver diverged; best finite field written", file=sys.stderr)
        return 3
    return 0


def cmd_ablate(args) -> int:
    unknown = set(args.tables) - set(ablate.TABLE_NAMES)
    if unknown:
        raise CliError(f"unknown ablation tables: {sorted(unknown)}")
    if args.seeds < 1:
        raise CliError("--seeds must be at least 1")
    seeds = ablate.DEFAULT_SEEDS[:args.seeds]
    if len(seeds) < args.seeds:
        start = ablate.DEFAULT_SEEDS[0]
        seeds = tuple(range(start, start + args.seeds))
    out = _outdir(args.out)
    code = 0
    for table in ablate.TABLE_NAMES:
        if table not in args.tables:
            continue
        result = ablate.STUDIES[table](seeds=seeds, cap=args.cap)
        path = out / f"{table}_report.json"
        write_report(result.to_payload(), path)
        _wrote(path)
        for row in result.rows:
            print(f"{table} {row['name']}: median rmse "
                  f"{row['median_rmse']:.6f}")
        for ordering in result.orderings:
            verdict = "PASS" if ordering["passed"] else "FAIL"
            print(f"{table} ordering {ordering['name']}: {verdict}")
    return code


def cmd_eval(args) -> int:
    pred = _read_dense(args.pred, "prediction")
    gt = _read_dense(args.gt, "ground truth")
    try:
        report = evaluate(pred, gt, cap_meters=args.cap)
    except ValueError as exc:
        raise CliError(str(exc)) from None
    payload = report.to_dict()
    for key in ("rmse", "rel", "delta1", "delta2", "delta3"):
        print(f"{key} {payload[key]:.6f}")
    print(f"evaluated_pixels {payload['evaluated_pixels']}")
    if args.out:
        write_report(payload, args.out)
        _wrote(args.out)
    return 0


_COMMANDS = {
    "gen-scene": cmd_gen_scene,
    "complete": cmd_complete,
    "ablate": cmd_ablate,
    "eval": cmd_eval,
}


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser, sub_map = build_parser()
    try:
        # config file fills in defaults only, so explicit flags still win
        if argv and argv[0] in _CONFIG_KEYS:
            config_path = _extract_config_path(argv[1:])
            if config_path is not None:
                defaults = parse_config_file(config_path,
                                             _CONFIG_KEYS[argv[0]])
                sub_map[argv[0]].set_defaults(**defaults)
        args = parser.parse_args(argv)
        return _COMMANDS[args.command](args)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except FormatError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


def entry():
    sys.exit(main())


if __name__ == "__main__":
    entry()
