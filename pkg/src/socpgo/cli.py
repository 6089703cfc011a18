"""Command-line front end.

Subcommands::

    socpgo generate --shape circle --n 25 --edges complete --tau 0.5 --nu-deg 30 --seed 7 --out DIR
    socpgo solve FILE.g2o [--init tree] [--agents 4] [--csv runs.csv] [--trace it.txt]
    socpgo bench --suite synthetic --seeds 10 --out DIR
    socpgo convert IN.g2o OUT.{g2o,npz}

Exit status: 0 success (solve: converged), 1 input or usage error, 2 solve
reached ``--max-iters`` without converging.
"""

from __future__ import annotations

import argparse
import csv
import logging
import os
import sys
from pathlib import Path

import numpy as np

from . import datasets
from .exceptions import G2oParseError, InvalidArgumentError, UnsupportedForDatasetError
from .graph import evaluate_objective
from .initialization import chordal_init
from .pipeline import run_pipeline, write_csv, write_trace
from .recovery import recover_full_poses
from .soc import SocConfig, scaled_config

log = logging.getLogger("socpgo")

EXIT_OK, EXIT_INPUT, EXIT_NOT_CONVERGED = 0, 1, 2
INIT_CHOICES = {"gps": "gps", "tree": "spanning_tree", "chordal": "chordal"}

# Public benchmark files searched for in the data directory, first match wins.
BENCHMARKS = {
    "garage": ("parking-garage.g2o", "garage.g2o"),
    "cubicle": ("cubicle.g2o",),
    "torus": ("torus3D.g2o", "torus.g2o"),
    "rim": ("rim.g2o",),
}
SYNTHETIC = ("circle-25", "grid-27", "sphere-50")


class UsageError(Exception):
    pass


# ---------------------------------------------------------------------------
# generate


def cmd_generate(args):
    noise = datasets.NoiseModel(args.tau, np.deg2rad(args.nu_deg), args.seed + 1)
    spec = datasets.GeneratorSpec(args.shape, args.n, scale=args.scale, edge_rule=args.edges,
                                  k=args.k, bidirectional=args.bidirectional, seed=args.seed)
    clean, truth = datasets.generate_ground_truth(spec)
    noisy = datasets.corrupt_with_noise(truth, clean, noise)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    stem = args.name or f"{args.shape}-{args.n}-s{args.seed}"
    datasets.save_g2o(out / f"{stem}.g2o", noisy, truth)
    datasets.save_g2o(out / f"{stem}_gt.g2o", clean, truth)
    fields = datasets.manifest_fields(spec, noise, noisy)
    fields.update(measurements=f"{stem}.g2o", ground_truth=f"{stem}_gt.g2o")
    datasets.write_manifest(out / f"{stem}.manifest", **fields)
    print(f"wrote {out / stem}.g2o ({noisy.node_count} vertices, {noisy.edge_count} edges)")
    return EXIT_OK


# ---------------------------------------------------------------------------
# solve


def _soc_config(args, g):
    eps = args.eps
    kw = dict(eps=eps, max_iters=args.max_iters, adapt_rho=not args.no_adapt)
    if args.rho0 is None:
        return scaled_config(g, **kw)
    return SocConfig(rho0=args.rho0, rho_min=args.rho_min, **kw)


def _sidecar_truth(path):
    """Ground truth for a generated file: vertices of the manifest's
    ground-truth file, or ``None`` for files without a manifest."""
    man = Path(path).with_suffix(".manifest")
    if not man.exists():
        return None
    fields = datasets.read_manifest(man)
    gt = man.parent / fields.get("ground_truth", "")
    if not gt.is_file():
        return None
    return datasets.load_g2o(gt)[1]


def _append_csv(path, reports):
    new = not os.path.exists(path) or os.path.getsize(path) == 0
    with open(path, "a", newline="") as fh:
        write_csv(reports, fh, header=new)


def solve_file(path, args, dataset=None, seed=None):
    g, vertices = datasets.load_g2o(path, use_information=args.information)
    truth = None
    if args.init == "gps":
        truth = datasets.load_g2o(args.truth)[1] if args.truth else _sidecar_truth(path)
        if truth is None:
            raise UnsupportedForDatasetError(
                f"{path}: GPS initialization needs ground truth (--truth or a manifest)")
        if len(truth) != g.node_count:
            raise InvalidArgumentError("ground truth does not match the graph")
    return run_pipeline(g, dataset=dataset or Path(path).stem, init=INIT_CHOICES[args.init],
                        truth=truth, cfg=_soc_config(args, g), schedule=args.schedule,
                        agents=args.agents, gn_steps=args.gn_steps,
                        seed=args.seed if seed is None else seed)


def cmd_solve(args):
    rep = solve_file(args.input, args)
    print(rep.summary())
    if args.csv:
        _append_csv(args.csv, [rep])
    else:
        sys.stdout.write(write_csv([rep]))
    if args.trace:
        with open(args.trace, "w") as fh:
            write_trace(rep.soc, fh)
    if args.output:
        g, _ = datasets.load_g2o(args.input)
        datasets.save_g2o(args.output, g, rep.estimate)
    return EXIT_OK if rep.converged else EXIT_NOT_CONVERGED


# ---------------------------------------------------------------------------
# bench


def _chordal_baseline(g, gn_steps):
    est = chordal_init(g)
    return recover_full_poses(g, est.rotations, steps=gn_steps)[1]


def _aggregate(rows):
    """``{dataset: summary dict}`` over repeated runs."""
    out = {}
    for name in dict.fromkeys(r["report"].dataset for r in rows):
        sel = [r for r in rows if r["report"].dataset == name]
        F = np.array([r["report"].F_post_gn for r in sel])
        out[name] = {
            "dataset": name,
            "runs": len(sel),
            "F_post_gn_mean": F.mean(),
            "F_post_gn_min": F.min(),
            "F_chordal_mean": np.mean([r["F_chordal"] for r in sel]),
            "iters_mean": np.mean([r["report"].iters for r in sel]),
            "converged": sum(r["report"].converged for r in sel),
            "t_solve_mean_s": np.mean([r["report"].t_solve_s for r in sel]),
            "t_total_mean_s": np.mean([r["report"].t_total_s for r in sel]),
        }
    return out


def _suite_jobs(args):
    """``(name, loader)`` pairs plus the names that were skipped."""
    jobs, skipped = [], []
    if args.suite == "synthetic":
        for name in SYNTHETIC:
            for seed in range(args.seeds):
                jobs.append((name, seed, lambda n=name, s=seed: _synthetic(n, s)))
    elif args.suite == "benchmarks":
        root = args.data or datasets.fixture_dir()
        for name, files in BENCHMARKS.items():
            path = None
            if root:
                path = next((Path(root) / f for f in files if (Path(root) / f).is_file()), None)
            if path is None:
                skipped.append(name)
                continue
            jobs.append((name, 0, lambda p=path: (datasets.load_g2o(p)[0], None)))
    return jobs, skipped


def _synthetic(name, seed):
    g, truth, _, _ = datasets.make_fixture(name, seed)
    return g, truth


def cmd_bench(args):
    jobs, skipped = _suite_jobs(args)
    for name in skipped:
        print(f"skipped {name}: fixture not found", file=sys.stderr)
    if not jobs:
        print("error: no fixtures to run", file=sys.stderr)
        return EXIT_INPUT
    out = Path(args.out)
    (out / "traces").mkdir(parents=True, exist_ok=True)
    init = args.init or ("gps" if args.suite == "synthetic" else "tree")
    rows = []
    for name, seed, load in jobs:
        g, truth = load()
        cfg = scaled_config(g, max_iters=args.max_iters)
        rep = run_pipeline(g, dataset=name, init=INIT_CHOICES[init], truth=truth, cfg=cfg,
                           schedule=args.schedule, agents=args.agents,
                           gn_steps=args.gn_steps, seed=seed)
        rows.append({"report": rep, "F_chordal": _chordal_baseline(g, args.gn_steps)})
        with open(out / "traces" / f"{name}_s{seed}.txt", "w") as fh:
            write_trace(rep.soc, fh)
        print(f"{name} seed {seed}: F_post_gn {rep.F_post_gn:.6g} iters {rep.iters}")
    with open(out / "runs.csv", "w", newline="") as fh:
        write_csv([r["report"] for r in rows], fh)
    agg = _aggregate(rows)
    cols = list(next(iter(agg.values())))
    with open(out / "summary.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\r\n")
        w.writerow(cols)
        for rec in agg.values():
            w.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v
                        for v in rec.values()])
    print(f"wrote {out / 'summary.csv'}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# convert


def cmd_convert(args):
    g, est = datasets.load_g2o(args.input)
    dst = Path(args.output)
    if dst.suffix == ".npz":
        np.savez(dst, edge_i=g.edge_i, edge_j=g.edge_j, rot=g.rot, trans=g.trans,
                 information=g.information, rotations=est.rotations,
                 translations=est.translations)
    elif dst.suffix == ".g2o":
        datasets.save_g2o(dst, g, est)
    else:
        raise UsageError("output must end in .g2o or .npz")
    print(f"{args.input} -> {dst}: {g.node_count} vertices, {g.edge_count} edges, "
          f"F at file poses {evaluate_objective(g, est):.6g}")
    return EXIT_OK


# ---------------------------------------------------------------------------


def _positive_int(text):
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError("must be a positive integer")
    return v


def _solver_flags(p, bench=False):
    p.add_argument("--init", choices=sorted(INIT_CHOICES), default=None if bench else "tree")
    p.add_argument("--max-iters", type=int, default=20000)
    p.add_argument("--agents", type=_positive_int, default=1)
    p.add_argument("--schedule", choices=("jacobi", "gs"), default="jacobi")
    p.add_argument("--gn-steps", type=int, default=10)


def build_parser():
    ap = argparse.ArgumentParser(prog="socpgo", description=__doc__.split("\n\n")[0])
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", help="write a synthetic g2o fixture and manifest")
    p.add_argument("--shape", choices=("circle", "grid", "sphere"), required=True)
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--edges", choices=("complete", "lattice", "knn"), default="complete")
    p.add_argument("--k", type=int, default=0, help="neighbours for --edges knn")
    p.add_argument("--bidirectional", action="store_true")
    p.add_argument("--scale", type=float, default=10.0)
    p.add_argument("--tau", type=float, default=0.5, help="translation noise sigma")
    p.add_argument("--nu-deg", type=float, default=30.0, help="rotation noise sigma (degrees)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--name", default=None, help="file stem")
    p.add_argument("--out", default=".")
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("solve", help="run the full pipeline on a g2o file")
    p.add_argument("input")
    _solver_flags(p)
    p.add_argument("--rho0", type=float, default=None,
                   help="initial penalty (default: 1.25 x largest weighted degree)")
    p.add_argument("--rho-min", type=float, default=0.0)
    p.add_argument("--no-adapt", action="store_true", help="keep the penalty fixed")
    p.add_argument("--eps", type=float, default=None)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--truth", default=None, help="ground-truth g2o for --init gps")
    p.add_argument("--information", action="store_true",
                   help="weight terms by the edges' information blocks")
    p.add_argument("--csv", default=None, help="append the report row to this file")
    p.add_argument("--trace", default=None, help="per-iteration trace file")
    p.add_argument("--output", default=None, help="write the solved poses as g2o")
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("bench", help="run a benchmark suite")
    p.add_argument("--suite", choices=("synthetic", "benchmarks"), required=True)
    p.add_argument("--seeds", type=int, default=10)
    p.add_argument("--data", default=None, help="benchmark directory (default $SOCPGO_DATA)")
    p.add_argument("--out", default="bench-out")
    _solver_flags(p, bench=True)
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("convert", help="re-serialize a g2o file (to .g2o or .npz)")
    p.add_argument("input")
    p.add_argument("output")
    p.set_defaults(func=cmd_convert)
    return ap


def main(argv=None):
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:  # argparse usage errors exit with 2
        return EXIT_INPUT if exc.code else EXIT_OK
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except G2oParseError as exc:
        print(f"error: {getattr(args, 'input', '')}: {exc}", file=sys.stderr)
    except (InvalidArgumentError, UnsupportedForDatasetError, UsageError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
    return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
