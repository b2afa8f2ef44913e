"""Command-line front end.

Exit codes: 0 success, 1 the clustering could not meet its targets, 2 usage
or input errors. ``VISCLUST_SEED`` sets the default seed.
"""

import argparse
import math
import os
import sys
import time
from pathlib import Path

import numpy as np

from visclust import data as datamod
from visclust._rng import check_seed, stream
from visclust.algorithm import SATISFIED, VisClustConfig, cluster
from visclust.baselines import kmeans
from visclust.errors import DataParseError, InfeasibleError, InvalidInputError, NoStructureError, VisClustError
from visclust.metrics import adjusted_rand_index, format_report, metrics_report
from visclust.projections import sample_stiefel

EXIT_OK, EXIT_UNSATISFIED, EXIT_USAGE = 0, 1, 2
SEED_ENV = "VISCLUST_SEED"
DIVISION_TOL = 1e-6

# fixed qualitative palette; labels beyond its length cycle through hues
PALETTE = (
    "#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd",
    "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf",
)  # fmt: skip


class UsageError(Exception):
    pass


def _positive_int(text):
    try:
        v = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected an integer, got {text!r}") from None
    if v < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {v}")
    return v


def _positive_float(text):
    try:
        v = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected a number, got {text!r}") from None
    if not v > 0 or not math.isfinite(v):
        raise argparse.ArgumentTypeError(f"expected a positive number, got {text}")
    return v


def _seed(text):
    try:
        return check_seed(int(text))
    except ValueError:
        raise argparse.ArgumentTypeError(f"seed must be an integer in [0, 2**64), got {text!r}") from None


def _int_list(text):
    try:
        vals = [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None
    if not vals or min(vals) < 1:
        raise argparse.ArgumentTypeError(f"expected positive integers, got {text!r}")
    return vals


def default_seed():
    raw = os.environ.get(SEED_ENV)
    if raw is None or raw.strip() == "":
        return 0
    try:
        return _seed(raw.strip())
    except argparse.ArgumentTypeError as exc:
        raise UsageError(f"{SEED_ENV}: {exc}") from None


def parse_division(text, n_c):
    """Comma-separated shares; must have ``n_c`` entries summing to 1 within 1e-6."""
    try:
        eta = [float(v) for v in text.split(",")]
    except ValueError:
        raise UsageError(f"division must be comma-separated numbers, got {text!r}") from None
    if n_c is None:
        raise UsageError("--division needs --clusters")
    if len(eta) != n_c:
        raise UsageError(f"division length mismatch: {len(eta)} entries for {n_c} clusters")
    if any(v < 0 or not math.isfinite(v) for v in eta):
        raise UsageError("division entries must be nonnegative")
    total = sum(eta)
    if abs(total - 1.0) > DIVISION_TOL:
        raise UsageError(f"division must sum to 1, got {total!r}")
    return tuple(v / total for v in eta)


def _emit(report, out=None):
    (out or sys.stdout).write(format_report(report))


def _load(path, truth_column=None):
    return datamod.load_delimited(path, label_column=truth_column)


def _plot_coords(points, projection, seed, embedding=None):
    if projection == "embedding":
        if embedding is None:
            raise UsageError("--projection embedding needs --embedding")
        pts = embedding
    else:
        pts = points
    if pts.shape[1] == 1:
        return np.column_stack([pts[:, 0], np.zeros(pts.shape[0])])
    if projection == "seeded-random" and pts.shape[1] > 2:
        q = sample_stiefel(2, pts.shape[1], stream(seed, "plot")).q
        return datamod.scale_minmax(pts) @ q.T
    return pts[:, :2]


def render_svg(coords, labels, size=480, margin=24, radius=2.5):
    """Scatter plot as SVG text, one fill color per label, axes scaled to the data."""
    coords = np.asarray(coords, dtype=float)
    labels = np.asarray(labels)
    lo, hi = coords.min(axis=0), coords.max(axis=0)
    span = np.where(hi > lo, hi - lo, 1.0)
    inner = size - 2 * margin
    px = margin + (coords[:, 0] - lo[0]) / span[0] * inner
    py = size - margin - (coords[:, 1] - lo[1]) / span[1] * inner
    uniq = np.unique(labels)
    color = {lab: _color(i) for i, lab in enumerate(uniq)}
    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{size}" height="{size}" viewBox="0 0 {size} {size}">',
        f'<rect x="{margin}" y="{margin}" width="{inner}" height="{inner}" fill="none" stroke="#000000"/>',
        f'<text x="{margin}" y="{size - 6}" font-size="10">x: {lo[0]:.4g} .. {hi[0]:.4g}</text>',
        f'<text x="{size - margin}" y="{margin - 8}" font-size="10" text-anchor="end">y: {lo[1]:.4g} .. {hi[1]:.4g}</text>',
    ]
    for lab in uniq:
        out.append(f'<g fill="{color[lab]}" stroke="none" data-label="{int(lab)}">')
        for i in np.flatnonzero(labels == lab):
            out.append(f'<circle cx="{px[i]:.2f}" cy="{py[i]:.2f}" r="{radius}"/>')
        out.append("</g>")
    out.append("</svg>")
    return "\n".join(out) + "\n"


def _color(i):
    if i < len(PALETTE):
        return PALETTE[i]
    # golden-angle hues keep extra labels distinct
    hue = (i * 137.508) % 360
    return f"hsl({hue:.1f},65%,45%)"


def _write_plot(path, points, labels, projection, seed, embedding=None):
    coords = _plot_coords(points, projection, seed, embedding)
    Path(path).write_text(render_svg(coords, labels))


def cmd_cluster(args):
    seed = args.seed
    ds = _load(args.input, args.truth_column)
    points = ds.points
    embedding = None
    if args.embedding:
        embedding = _load(args.embedding).points
        if embedding.shape[0] != ds.m:
            raise UsageError(f"embedding has {embedding.shape[0]} rows, data has {ds.m}")
    division = parse_division(args.division, args.clusters) if args.division else None
    if args.algo == "kmeans" and args.clusters is None:
        raise UsageError("--algo kmeans needs --clusters")
    cfg = VisClustConfig(
        n_clusters=args.clusters,
        threshold=args.threshold,
        scale=args.scale,
        subsample=args.subsample,
        division=division,
        embedding=embedding is not None,
        seed=seed,
    )
    start = time.perf_counter()
    try:
        if args.algo == "kmeans":
            res = kmeans(points, args.clusters, rng=stream(seed, "kmeans"))
            labels = res.labels
            report = {
                "status": SATISFIED,
                "iterations_used": res.iterations,
                "k_used": 0,
                "final_s": float("nan"),
                "n_clusters": args.clusters,
                "division": [float(v) for v in np.bincount(labels)[1:] / labels.size],
            }
            ok = True
        else:
            part = cluster(embedding if embedding is not None else points, cfg)
            labels = part.labels
            report = part.report()
            ok = part.satisfied
    except (InfeasibleError, NoStructureError) as exc:
        report = {"status": "infeasible" if isinstance(exc, InfeasibleError) else "no-structure", "error": str(exc)}
        report.update(_run_fields(start, seed, cfg, args.algo))
        _emit(report)
        return EXIT_UNSATISFIED
    report.update(_run_fields(start, seed, cfg, args.algo))
    if ds.labels is not None:
        report.update({f"metrics.{k}": v for k, v in metrics_report(labels, ds.labels).items()})
    out = args.output or f"{args.input}.labels"
    datamod.save_labels(out, labels, header="label")
    report["labels_path"] = str(out)
    if args.plot:
        _write_plot(args.plot, points, labels, "embedding" if embedding is not None else "first2", seed, embedding)
        report["plot_path"] = str(args.plot)
    _emit(report)
    return EXIT_OK if ok else EXIT_UNSATISFIED


def _run_fields(start, seed, cfg, algo):
    fields = {"wall_time_seconds": max(time.perf_counter() - start, 0.0), "seed": seed, "algo": algo}
    fields.update({f"config.{k}": v for k, v in cfg.echo().items()})
    return fields


def cmd_eval(args):
    pred = datamod.load_labels(args.pred)
    truth = datamod.load_labels(args.truth)
    if pred.size != truth.size:
        raise UsageError(f"label files differ in length: {pred.size} vs {truth.size}")
    if pred.size == 0:
        raise UsageError("label files are empty")
    _emit(metrics_report(pred, truth))
    return EXIT_OK


def cmd_synth(args):
    rng = stream(args.seed, "data")
    fam = args.family
    if fam == "blobs":
        ds = datamod.gen_blobs(args.points, args.dims or 5, args.clusters or 4, args.std, rng=rng)
    elif fam == "gaussian":
        ds = datamod.gen_single_gaussian(args.points, args.dims or 2, args.std, rng=rng)
    else:
        gen = datamod.gen_circles if fam == "circles" else datamod.gen_moons
        ds = gen(args.points, args.noise, rng=rng)
        if args.dims and args.dims > 2:
            ds = datamod.Dataset(datamod.pad_dimensions(ds.points, args.dims, rng=rng).points, ds.labels)
        elif args.dims and args.dims < 2:
            raise UsageError(f"{fam} data is at least 2-dimensional")
    datamod.save_points(args.output, ds)
    _emit({"family": fam, "points": ds.m, "dims": ds.d, "classes": int(np.unique(ds.labels).size), "path": args.output})
    return EXIT_OK


def cmd_bench(args):
    records = []
    for m in args.m:
        for d in args.d:
            for n_c in args.k:
                for rep in range(args.repeats):
                    seed = args.seed + rep
                    ds = datamod.gen_blobs(m, d, n_c, args.std, rng=stream(seed, "data"))
                    for algo in args.algos:
                        start = time.perf_counter()
                        if algo == "kmeans":
                            labels = kmeans(ds.points, n_c, rng=stream(seed, "kmeans")).labels
                            status = SATISFIED
                        else:
                            part = cluster(ds.points, n_clusters=n_c, seed=seed)
                            labels, status = part.labels, part.status
                        elapsed = time.perf_counter() - start
                        rec = {
                            "m": m, "d": d, "n_c": n_c, "repeat": rep, "algo": algo, "seed": seed,
                            "wall_time_seconds": elapsed, "ari": adjusted_rand_index(labels, ds.labels),
                            "status": status,
                        }  # fmt: skip
                        records.append(rec)
                        print(" ".join(f"{k}={v!r}" if isinstance(v, float) else f"{k}={v}" for k, v in rec.items()))
                        sys.stdout.flush()
    if args.aggregate:
        for key in sorted({(r["m"], r["d"], r["n_c"], r["algo"]) for r in records}):
            rows = [r for r in records if (r["m"], r["d"], r["n_c"], r["algo"]) == key]
            t = np.array([r["wall_time_seconds"] for r in rows])
            a = np.array([r["ari"] for r in rows])
            t_mean, t_std, a_mean, a_std = (float(v) for v in (t.mean(), t.std(), a.mean(), a.std()))
            print(
                f"summary m={key[0]} d={key[1]} n_c={key[2]} algo={key[3]} n={len(rows)} "
                f"time_mean={t_mean!r} time_std={t_std!r} ari_mean={a_mean!r} ari_std={a_std!r}"
            )
    return EXIT_OK


def cmd_plot(args):
    ds = _load(args.input)
    labels = datamod.load_labels(args.labels)
    if labels.size == 0:
        raise UsageError("label file is empty")
    if labels.size != ds.m:
        raise UsageError(f"{labels.size} labels for {ds.m} points")
    embedding = _load(args.embedding).points if args.embedding else None
    if embedding is not None and embedding.shape[0] != ds.m:
        raise UsageError(f"embedding has {embedding.shape[0]} rows, data has {ds.m}")
    _write_plot(args.output, ds.points, labels, args.projection, args.seed, embedding)
    _emit({"path": args.output, "points": ds.m, "labels": int(np.unique(labels).size)})
    return EXIT_OK


def build_parser(seed_default=0):
    p = argparse.ArgumentParser(prog="visclust", description="Visual clustering via random projections.")
    sub = p.add_subparsers(dest="command", required=True)

    def seed_flag(sp):
        sp.add_argument("--seed", type=_seed, default=seed_default, help=f"random seed (default ${SEED_ENV} or 0)")

    c = sub.add_parser("cluster", help="cluster a delimited data file")
    c.add_argument("input")
    c.add_argument("--clusters", type=_positive_int, help="number of clusters; omit to choose automatically")
    c.add_argument("--threshold", type=_positive_float, default=0.1)
    c.add_argument("--scale", type=_positive_float, default=1.25)
    c.add_argument("--subsample", type=_positive_int)
    c.add_argument("--division", help="comma-separated cluster shares summing to 1")
    c.add_argument("--embedding", help="precomputed 2-D or 3-D embedding to use instead of projections")
    c.add_argument("--algo", choices=("visclust", "kmeans"), default="visclust")
    c.add_argument("--plot", help="write an SVG scatter plot here")
    c.add_argument("--output", help="label file (default: <input>.labels)")
    c.add_argument("--truth-column", help="column holding ground-truth labels")
    seed_flag(c)
    c.set_defaults(func=cmd_cluster)

    e = sub.add_parser("eval", help="compare a label file to the truth")
    e.add_argument("pred")
    e.add_argument("truth")
    e.set_defaults(func=cmd_eval)

    s = sub.add_parser("synth", help="generate a synthetic dataset")
    s.add_argument("family", choices=("blobs", "circles", "moons", "gaussian"))
    s.add_argument("--points", type=_positive_int, default=1000)
    s.add_argument("--dims", type=_positive_int)
    s.add_argument("--clusters", type=_positive_int)
    s.add_argument("--std", type=_positive_float, default=0.05)
    s.add_argument("--noise", type=float, default=0.0)
    s.add_argument("--output", required=True)
    seed_flag(s)
    s.set_defaults(func=cmd_synth)

    b = sub.add_parser("bench", help="time and score runs over a grid of blob datasets")
    b.add_argument("--m", type=_int_list, default=[1000])
    b.add_argument("--d", type=_int_list, default=[5])
    b.add_argument("--k", type=_int_list, default=[4], help="cluster counts")
    b.add_argument("--repeats", type=_positive_int, default=5)
    b.add_argument("--algos", type=lambda t: t.split(","), default=["visclust"])
    b.add_argument("--std", type=_positive_float, default=0.05)
    b.add_argument("--aggregate", action="store_true", help="append mean/std summary lines")
    seed_flag(b)
    b.set_defaults(func=cmd_bench)

    pl = sub.add_parser("plot", help="SVG scatter plot of labelled points")
    pl.add_argument("input")
    pl.add_argument("labels")
    pl.add_argument("--projection", choices=("first2", "seeded-random", "embedding"), default="first2")
    pl.add_argument("--embedding")
    pl.add_argument("--output", required=True)
    seed_flag(pl)
    pl.set_defaults(func=cmd_plot)
    return p


def main(argv=None):
    try:
        parser = build_parser(default_seed())
    except UsageError as exc:
        print(f"visclust: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code else EXIT_OK
    if getattr(args, "algos", None) is not None:
        bad = [a for a in args.algos if a not in ("visclust", "kmeans")]
        if bad:
            print(f"visclust: error: unknown algorithm {bad[0]!r}", file=sys.stderr)
            return EXIT_USAGE
    try:
        return args.func(args)
    except (UsageError, DataParseError, InvalidInputError, OSError, VisClustError, ValueError) as exc:
        print(f"visclust: error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
