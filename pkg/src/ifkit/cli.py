"""Command-line front end: ``ifk <command> [options]``.

Every command takes ``--seed``, ``--out``, ``--threads`` and ``--config``. The
optional config file holds ``key = value`` lines that set defaults for the
chosen command; flags given on the command line win. Every run writes ``manifest.txt`` to ``--out``.

Exit codes: 0 success, 1 a check failed, 2 usage or input error, 3 numerical
or resource failure.
"""

from __future__ import annotations

import argparse
import csv
import os
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from . import __version__, _backend
from .errors import IfkError, InvalidInput

EXIT_OK, EXIT_CHECK, EXIT_USAGE, EXIT_NUMERIC = 0, 1, 2, 3
DEFAULT_SEED = 42


class UsageError(InvalidInput):
    pass


def _float_list(text: str) -> list[float]:
    try:
        return [float(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}")


def _int_list(text: str) -> list[int]:
    try:
        return [int(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}")


def _add_common(p):
    p.add_argument("--seed", type=int, default=None, help=f"RNG seed (default: $IFK_SEED or {DEFAULT_SEED})")
    p.add_argument("--out", default="ifk_out", help="output directory")
    p.add_argument("--threads", type=int, default=1, help="workers for per-shape / per-crop work")
    p.add_argument("--config", default=None, help="file of `key = value` defaults")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ifk", description=__doc__.split("\n")[0])
    parser.add_argument("--version", action="version", version=f"ifk {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-labels", help="sample an implicit field into an IFS1 file")
    p.add_argument("input", help="OBJ mesh, XYZ or PCF1 cloud")
    p.add_argument("--kind", choices=("sdf", "udf", "occ"), default="udf")
    p.add_argument("--queries", type=int, default=10000)
    p.add_argument("--k", type=int, default=3, help="neighbours averaged for point-cloud UDF")
    p.add_argument("--bbox-pad", type=float, default=0.1, help="absolute padding of the query box")
    p.set_defaults(func=cmd_gen_labels)

    p = sub.add_parser("crop", help="cut a scene into cubes")
    p.add_argument("scene")
    p.add_argument("--d", type=float, default=3.0)
    p.add_argument("--stride", type=float, default=None)
    p.add_argument("--min-points", type=int, default=1)
    p.set_defaults(func=cmd_crop)

    p = sub.add_parser("bench", help="time loss evaluations against problem size")
    p.add_argument("--mode", default="chamfer", help="comma-separated cost modes, or 'all'")
    p.add_argument("--sizes", type=_int_list, default="1000,2000,4000,8000")
    p.add_argument("--trials", type=int, default=3)
    p.add_argument("--queries", type=int, default=2048, help="query count for the implicit mode")
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("linear-ae", help="check the linear autoencoder propositions")
    p.add_argument("--n", type=int, default=12)
    p.add_argument("--m", type=int, default=3)
    p.add_argument("--N", type=int, default=60)
    p.add_argument("--noise-scales", type=_float_list, default="0,0.1,0.25,0.5")
    p.add_argument("--seeds", type=int, default=20, help="number of seeds, counted up from --seed")
    p.add_argument("--prop2-triples", type=int, default=10)
    p.set_defaults(func=cmd_linear_ae)

    p = sub.add_parser("train", help="train a toy autoencoder")
    p.add_argument("--paradigm", choices=("iae", "eae"), default="iae")
    p.add_argument("--field", choices=("sdf", "udf", "occ"), default="sdf")
    p.add_argument("--shapes", type=int, default=10, help="first SHAPES entries of the shape library")
    p.add_argument("--steps", type=int, default=2000)
    p.add_argument("--batch-size", type=int, default=10)
    p.add_argument("--lr", type=float, default=1e-4)
    p.add_argument("--lr-final", type=float, default=None)
    p.add_argument("--n-points", type=int, default=256)
    p.add_argument("--n-queries", type=int, default=256, help="query points per cloud (iae)")
    p.add_argument("--n-out", type=int, default=256, help="decoded points per cloud (eae)")
    p.add_argument("--noise-sigma", type=float, default=0.01)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("embed-stats", help="compare latent cluster radii of two models")
    p.add_argument("--iae", required=True, help="implicit model checkpoint")
    p.add_argument("--eae", required=True, help="explicit model checkpoint")
    p.add_argument("--shapes", type=int, default=10)
    p.add_argument("--samples", type=int, default=20)
    p.add_argument("--n-points", type=int, default=256)
    p.add_argument("--noise-sigma", type=float, default=0.01)
    p.add_argument("--threshold", type=float, default=0.9)
    p.set_defaults(func=cmd_embed_stats)

    for p in sub.choices.values():
        _add_common(p)
    return parser


def read_config(path) -> dict[str, str]:
    out = {}
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError(f"{path}:{lineno}: expected `key = value`")
        key, value = (s.strip() for s in line.split("=", 1))
        out[key.replace("-", "_")] = value
    return out


def parse_args(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.config is None:
        return args
    sub = parser._subparsers._group_actions[0].choices[args.command]
    known = {a.dest for a in sub._actions} - {"help", "config", "func"}
    cfg = read_config(args.config)
    unknown = sorted(set(cfg) - known)
    if unknown:
        raise UsageError(f"unknown config key(s) for {args.command}: {', '.join(unknown)}")
    # string defaults go through each option's type conversion on reparse
    sub.set_defaults(**cfg)
    return parser.parse_args(argv)


def resolve_seed(seed):
    if seed is None:
        env = os.environ.get("IFK_SEED")
        seed = int(env) if env not in (None, "") else DEFAULT_SEED
    if not 0 <= seed < 2 ** 64:
        raise UsageError("seed must fit in an unsigned 64-bit integer")
    return seed


def write_manifest(out: Path, args) -> None:
    lines = [f"# ifk {__version__} backend={_backend.NAME}",
             f"# started {time.strftime('%Y-%m-%dT%H:%M:%S')}",
             f"command = {args.command}"]
    for key in sorted(vars(args)):
        if key in ("func", "command"):
            continue
        val = getattr(args, key)
        if isinstance(val, list):
            val = ",".join(repr(v) for v in val)
        lines.append(f"{key} = {val}")
    (out / "manifest.txt").write_text("\n".join(lines) + "\n")


def _positive(name, value):
    if value < 1:
        raise UsageError(f"--{name} must be at least 1")


def _map(args, fn, items):
    if args.threads <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(args.threads) as pool:
        return list(pool.map(fn, items))


# ------------------------------------------------------------------ commands
# Each command validates everything first, then returns a callable that
# writes outputs into the (already created) output directory.

def cmd_gen_labels(args):
    from .geometry import (as_cloud, build_knn_index, build_mesh_index, occupancy_mesh,
                           sdf_mesh, udf_knn, unsigned_distance_mesh)
    from .io import SampleFile, read_cloud, read_obj, read_xyz, write_ifs
    from .sampling import Aabb, make_rng, sample_bbox_uniform

    if args.queries < 0:
        raise UsageError("--queries must be nonnegative")
    _positive("k", args.k)
    if args.bbox_pad < 0:
        raise UsageError("--bbox-pad must be nonnegative")
    path = Path(args.input)
    if not path.is_file():
        raise UsageError(f"no such file: {path}")
    is_mesh = path.suffix.lower() == ".obj"
    if not is_mesh and args.kind != "udf":
        raise InvalidInput(f"{args.kind} needs a watertight mesh but {path.name} is a point cloud; "
                           "use --kind udf (k-nearest-point unsigned distance) instead")
    if is_mesh:
        mesh = read_obj(path)
        if args.kind != "udf":
            if not mesh.is_closed_manifold():
                raise InvalidInput(f"{path.name} is not watertight; {args.kind} needs a closed mesh, "
                                   "use --kind udf instead")
            mesh = type(mesh)(mesh.vertices, mesh.faces, watertight=True)
        pts = mesh.vertices
    else:
        pts = read_xyz(path) if path.suffix.lower() == ".xyz" else read_cloud(path)
        pts = as_cloud(pts)
        if len(pts) < args.k:
            raise InvalidInput(f"cloud has {len(pts)} points, fewer than k={args.k}")
    box = Aabb.around(pts, args.bbox_pad) if args.bbox_pad > 0 else Aabb.around(pts)
    queries = sample_bbox_uniform(box, args.queries, make_rng(args.seed))

    def run(out: Path):
        if len(queries) == 0:
            values = np.zeros(0)
        elif is_mesh:
            index = build_mesh_index(mesh)
            if args.kind == "udf":
                values = unsigned_distance_mesh(index, queries)
            elif args.kind == "sdf":
                values = sdf_mesh(index, queries, seed=args.seed)
            else:
                values = occupancy_mesh(index, queries, seed=args.seed).astype(np.float64)
        else:
            values = udf_knn(build_knn_index(pts), queries, args.k)
        write_ifs(out / "labels.ifs", SampleFile(args.kind, queries, np.asarray(values, dtype=np.float64)))
        print(f"wrote {len(queries)} {args.kind} samples to {out / 'labels.ifs'}")
        return EXIT_OK

    return run


def cmd_crop(args):
    from .io import read_cloud, read_xyz, write_pcf
    from .sampling import sliding_window_crop

    if args.d <= 0 or (args.stride is not None and args.stride <= 0):
        raise UsageError("--d and --stride must be positive")
    _positive("min-points", args.min_points)
    path = Path(args.scene)
    if not path.is_file():
        raise UsageError(f"no such file: {path}")
    scene = read_xyz(path) if path.suffix.lower() == ".xyz" else read_cloud(path)
    crops = [c for c in sliding_window_crop(scene, args.d, args.stride) if len(c[1]) >= args.min_points]

    def run(out: Path):
        names = [f"crop_{i:05d}.pcf" for i in range(len(crops))]
        _map(args, lambda item: write_pcf(out / item[0], item[1][1]), list(zip(names, crops)))
        with open(out / "crops.csv", "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["file", "min_x", "min_y", "min_z", "max_x", "max_y", "max_z", "points"])
            for name, (box, pts) in zip(names, crops):
                w.writerow([name, *map(repr, box.min.tolist()), *map(repr, box.max.tolist()), len(pts)])
        print(f"wrote {len(crops)} crops to {out}")
        return EXIT_OK

    return run


def cmd_bench(args):
    from .metrics import COST_MODES, cost_profile, fit_exponent, write_cost_csv

    modes = list(COST_MODES) if args.mode == "all" else [m.strip() for m in args.mode.split(",")]
    bad = [m for m in modes if m not in COST_MODES]
    if bad:
        raise UsageError(f"unknown mode(s) {bad}; choose from {', '.join(COST_MODES)} or all")
    sizes = args.sizes
    if not sizes or any(s < 1 for s in sizes) or sizes != sorted(set(sizes)):
        raise UsageError("--sizes must be distinct, positive and ascending")
    _positive("trials", args.trials)
    _positive("queries", args.queries)

    def run(out: Path):
        rows = []
        for mode in modes:
            r = cost_profile(mode, sizes, args.trials, seed=args.seed, n_queries=args.queries)
            rows += r
            if len(sizes) > 1:
                print(f"{mode}: time ~ size^{fit_exponent(r):.2f}")
        write_cost_csv(out / "bench.csv", rows)
        return EXIT_OK

    return run


def cmd_linear_ae(args):
    from . import linear_ae as la

    if args.m < 1 or args.m >= args.n:
        raise UsageError("need 1 <= --m < --n")
    if args.N < args.n:
        raise UsageError("--N must be at least --n so the data spans its subspace")
    _positive("seeds", args.seeds)
    scales = args.noise_scales
    if not scales or any(s < 0 for s in scales) or scales != sorted(set(scales)):
        raise UsageError("--noise-scales must be distinct, nonnegative and ascending")
    if args.prop2_triples < 0:
        raise UsageError("--prop2-triples must be nonnegative")
    seeds = [args.seed + s for s in range(args.seeds)]

    def run(out: Path):
        rows = la.sensitivity_sweep(args.n, args.m, args.N, scales, seeds)
        la.write_sweep_csv(out / "sweep.csv", rows)
        prop1_ok = all(r[2] <= la.PROP1_TOL for r in rows)
        means = la.sweep_means(rows)
        std = [means[s][1] for s in scales]
        trend_ok = all(b > a for a, b in zip(std, std[1:]))

        rng = np.random.default_rng([args.seed, 2])
        worst, prop2_rows = 0.0, []
        for t in range(args.prop2_triples):
            prob = la.make_problem(args.n, args.m, args.N, 0.0, rng)
            k, i = int(rng.integers(args.N)), int(rng.integers(args.n))
            lam, Q = la.clean_encoder(prob)
            A = la.prop2_derivative(Q, lam, prob.X[:, k], i)
            F = la.finite_diff_deviation(prob, k, i, h=1e-5, Q_ref=Q, dps=40)
            err = float(np.abs(A - F).max() / max(np.abs(A).max(), 1e-300))
            worst = max(worst, err)
            prop2_rows.append((t, k, i, err))
        prop2_ok = worst <= 1e-5
        with open(out / "prop2.csv", "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["triple", "k", "i", "rel_error"])
            for t, k, i, err in prop2_rows:
                w.writerow([t, k, i, repr(err)])

        lines = [
            f"prop1 {'PASS' if prop1_ok else 'FAIL'} max deviation {max(r[2] for r in rows):.3e} (tol {la.PROP1_TOL:g})",
            f"prop2 {'PASS' if prop2_ok else 'FAIL'} max relative error {worst:.3e} over {len(prop2_rows)} triples (tol 1e-5)",
            f"trend {'PASS' if trend_ok else 'FAIL'} standard-encoder deviation increasing in noise scale",
        ]
        lines += [f"  scale {s:g}: reformulated {means[s][0]:.3e}, standard {means[s][1]:.3e}" for s in scales]
        (out / "summary.txt").write_text("\n".join(lines) + "\n")
        print("\n".join(lines))
        return EXIT_OK if prop1_ok and prop2_ok and trend_ok else EXIT_CHECK

    return run


def _library(count):
    from .sampling import shape_library

    lib = shape_library()
    if not 1 <= count <= len(lib):
        raise UsageError(f"--shapes must be between 1 and {len(lib)}")
    return lib[:count]


def cmd_train(args):
    from .toy_ae import TrainConfig, save_checkpoint, train_eae, train_iae

    shapes = _library(args.shapes)
    _positive("steps", args.steps)
    _positive("batch-size", args.batch_size)
    _positive("n-points", args.n_points)
    _positive("n-queries", args.n_queries)
    _positive("n-out", args.n_out)
    if args.lr <= 0 or (args.lr_final is not None and args.lr_final <= 0):
        raise UsageError("learning rates must be positive")
    if args.noise_sigma < 0:
        raise UsageError("--noise-sigma must be nonnegative")
    cfg = TrainConfig(field=args.field, steps=args.steps, batch_size=args.batch_size,
                      n_points=args.n_points, n_queries=args.n_queries, n_out=args.n_out,
                      noise_sigma=args.noise_sigma, lr=args.lr,
                      lr_final=args.lr_final, seed=args.seed)

    def run(out: Path):
        trainer = train_iae if args.paradigm == "iae" else train_eae
        result = trainer(shapes, cfg)
        save_checkpoint(out / "model.tae", result.model)
        with open(out / "losses.csv", "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["step", "loss"])
            for step, loss in enumerate(result.losses):
                w.writerow([step, repr(float(loss))])
        print(f"{args.paradigm}: loss {result.losses[0]:.4g} -> {result.losses[-1]:.4g}")
        return EXIT_OK

    return run


def cmd_embed_stats(args):
    from .toy_ae import load_checkpoint
    from .toy_ae.experiment import cluster_radius_from_latents, embed_resamplings, write_report_csv

    shapes = _library(args.shapes)
    _positive("samples", args.samples)
    _positive("n-points", args.n_points)
    if args.noise_sigma < 0:
        raise UsageError("--noise-sigma must be nonnegative")
    models = {}
    for name, want in (("iae", "iae"), ("eae", "eae")):
        path = Path(getattr(args, name))
        if not path.is_file():
            raise UsageError(f"no such checkpoint: {path}")
        models[name] = load_checkpoint(path)
        if models[name].paradigm != want:
            raise UsageError(f"--{name} checkpoint holds a {models[name].paradigm} model")
    def arch(model):
        return [layer.W.shape for mlp in model.encoder.mlps() for layer in mlp.layers]

    if arch(models["iae"]) != arch(models["eae"]):
        raise UsageError("the two models must share the encoder architecture")

    def run(out: Path):
        lat = {}
        for name, model in models.items():
            per = _map(args, lambda s: embed_resamplings(model, [shapes[s]], args.samples, args.n_points,
                                                         args.noise_sigma, args.seed, s)[0],
                       range(len(shapes)))
            lat[name] = np.stack(per)
        report = cluster_radius_from_latents(lat["iae"], lat["eae"])
        write_report_csv(out / "report.csv", report)
        ok = report.ratio < args.threshold
        flag = " (degenerate latents)" if report.degenerate else ""
        print(f"ratio {report.ratio:.4f} radius_iae {report.radius_iae:.4f} "
              f"radius_eae {report.radius_eae:.4f}{flag}: {'PASS' if ok else 'FAIL'} (< {args.threshold:g})")
        return EXIT_OK if ok else EXIT_CHECK

    return run


def main(argv=None) -> int:
    try:
        args = parse_args(argv)
        args.seed = resolve_seed(args.seed)
        _positive("threads", args.threads)
        run = args.func(args)
    except SystemExit as exc:  # argparse usage errors
        return int(exc.code or 0)
    except InvalidInput as exc:
        print(f"ifk: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except IfkError as exc:
        print(f"ifk: error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_manifest(out, args)
    try:
        return run(out)
    except InvalidInput as exc:
        print(f"ifk: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except IfkError as exc:
        print(f"ifk: error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
