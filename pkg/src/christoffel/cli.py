"""Command-line interface.

Every flag can also be set through an environment variable
``CHRISTOFFEL_<COMMAND>_<FLAG>`` (e.g. ``CHRISTOFFEL_FIT_DEGREE=4``) or a
flat JSON config file passed as ``--config`` whose keys are flag names.
Exit codes: 0 success, 1 I/O, parse or usage error, 2 singular fit.
"""
from __future__ import annotations

import csv
import json
import logging
import os
import sys
from pathlib import Path

import click
import numpy as np

from . import evaluate, ingest
from .affine import AffineMap, standardizing_map
from .basis import enumerate_basis
from .model import ChristoffelModel, CholeskyFailure, affine_pushforward_check, fit_points, levelset_grid
from .online import DEFAULT_CADENCE, DEFAULT_RIDGE0, OnlineInverse


EXIT_OK, EXIT_IO, EXIT_NUMERIC = 0, 1, 2


def _floats(text: str, count: int | None = None, name: str = "value") -> list[float]:
    try:
        vals = [float(v) for v in text.split(",")]
    except ValueError:
        raise click.BadParameter(f"{name} must be comma-separated numbers, got {text!r}") from None
    if count is not None and len(vals) != count:
        raise click.BadParameter(f"{name} needs {count} comma-separated numbers, got {len(vals)}")
    return vals


def _columns(text: str | None):
    if not text:
        return None
    return [int(c) if c.strip().isdigit() else c.strip() for c in text.split(",")]


def _apply_config(ctx: click.Context, path: str) -> None:
    try:
        with open(path) as fh:
            doc = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise click.UsageError(f"cannot read config file {path}: {exc}") from None
    if not isinstance(doc, dict):
        raise click.UsageError(f"config file {path} must hold a flat JSON object")
    group = ctx.command
    defaults: dict = {}
    used = set()
    for name, cmd in group.commands.items():
        # keys are flag names without dashes ("ridge0", "label_column", "input")
        flags = {}
        for p in cmd.params:
            for opt in p.opts:
                if opt.startswith("--"):
                    flags[opt[2:].replace("-", "_")] = p.name
        defaults[name] = {flags[k]: v for k, v in doc.items() if k in flags}
        used |= {k for k in doc if k in flags}
    unknown = sorted(set(doc) - used)
    if unknown:
        raise click.UsageError(f"unknown keys in config file {path}: {', '.join(unknown)}")
    ctx.default_map = defaults


@click.group(context_settings={"help_option_names": ["-h", "--help"]})
@click.option("--config", type=click.Path(dir_okay=False), default=None, help="Flat JSON file of flag values.")
@click.option("-v", "--verbose", is_flag=True, help="Log progress to stderr.")
@click.pass_context
def cli(ctx, config, verbose):
    """Fit and use inverse moment-matrix SOS polynomials on point clouds."""
    logging.basicConfig(level=logging.INFO if verbose else logging.WARNING, format="%(message)s")
    if config:
        _apply_config(ctx, config)


def _load_points(path, features, label_column, header):
    return ingest.load_csv(path, feature_columns=_columns(features), label_column=label_column or None,
                           header=header)


@cli.command("fit")
@click.option("--input", "input_path", required=True, type=click.Path(dir_okay=False))
@click.option("--degree", type=int, required=True, help="Half degree d of Q (Q has degree 2d).")
@click.option("--ridge", type=float, default=0.0, show_default=True, help="Tikhonov term added to M (off by default).")
@click.option("--precondition/--no-precondition", default=True, show_default=True)
@click.option("--features", default=None, help="Comma-separated feature columns (default: all but the label).")
@click.option("--label-column", default="", help="Column excluded from the features.")
@click.option("--header/--no-header", default=True, show_default=True)
@click.option("--output", required=True, type=click.Path(dir_okay=False))
def cmd_fit(input_path, degree, ridge, precondition, features, label_column, header, output):
    """Fit Q on the points of a CSV file and write the model file."""
    ds = _load_points(input_path, features, label_column, header)
    model = fit_points(ds.points, degree, ridge=ridge, precondition=precondition)
    model.save(output)
    click.echo(f"n={model.n} p={model.p} s(d)={model.size} min_pivot={model.min_pivot:.6g}")


@cli.command("score")
@click.option("--model", "model_path", required=True, type=click.Path(dir_okay=False))
@click.option("--input", "input_path", required=True, type=click.Path(dir_okay=False))
@click.option("--features", default=None, help="Comma-separated feature columns (default: all but 'label').")
@click.option("--output", required=True, type=click.Path(dir_okay=False))
def cmd_score(model_path, input_path, features, output):
    """Append a score column to every row of a CSV file (header required)."""
    model = ChristoffelModel.load(model_path)
    with open(input_path, newline="") as fh:
        rows = list(csv.reader(fh))
    header = rows[0] if rows else [f"x{j + 1}" for j in range(model.p)]
    body = rows[1:]
    names = [h.strip() for h in header]
    if features:
        cols = _columns(features)
        idx = [c if isinstance(c, int) else names.index(c) if c in names else -1 for c in cols]
        if -1 in idx:
            raise click.UsageError(f"feature columns {features!r} not all in header {names}")
    else:
        idx = [i for i, h in enumerate(names) if h != "label"]
    if len(idx) != model.p:
        raise click.UsageError(f"model has p={model.p} but {len(idx)} feature columns were selected")
    X = np.empty((len(body), model.p))
    for r, row in enumerate(body):
        try:
            X[r] = [float(row[i]) for i in idx]
        except (ValueError, IndexError):
            raise ingest.DataError(f"{input_path}: row {r + 2}: cannot parse features {row!r}") from None
    scores = model.score_batch(X)
    with open(output, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header + ["score"])
        for row, s in zip(body, scores):
            w.writerow(row + [repr(float(s))])


def write_levelset(grid, path) -> None:
    with open(path, "w", newline="") as fh:
        fh.write(f"# threshold={grid.threshold} nx={grid.xs.size} ny={grid.ys.size}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["x", "y", "q"])
        for j, y in enumerate(grid.ys):
            for i, x in enumerate(grid.xs):
                w.writerow([repr(float(x)), repr(float(y)), repr(float(grid.values[j, i]))])


@cli.command("levelset")
@click.option("--model", "model_path", required=True, type=click.Path(dir_okay=False))
@click.option("--bbox", required=True, help="x0,y0,x1,y1")
@click.option("--res", default="100,100", show_default=True, help="nx,ny")
@click.option("--output", required=True, type=click.Path(dir_okay=False))
def cmd_levelset(model_path, bbox, res, output):
    """Evaluate Q on a 2-D grid (cell centers) for external contouring."""
    box = _floats(bbox, 4, "--bbox")
    nx, ny = _floats(res, 2, "--res")
    if nx != int(nx) or ny != int(ny):
        raise click.BadParameter("--res needs integers")
    model = ChristoffelModel.load(model_path)
    if model.p != 2:
        raise click.UsageError(f"level-set export is 2-D only; model has p={model.p}")
    try:
        grid = levelset_grid(model, box, (int(nx), int(ny)))
    except ValueError as exc:
        raise click.BadParameter(str(exc)) from None
    write_levelset(grid, output)
    click.echo(f"threshold={grid.threshold}")


class StreamSession:
    """Line protocol: ``add x1,...`` | ``score x1,...`` | ``snapshot PATH``; bare rows are adds."""

    def __init__(self, degree: int, dim: int | None, ridge0: float, cadence: int):
        self.degree, self.ridge0, self.cadence = degree, ridge0, cadence
        self.state = None
        if dim is not None:
            self._init(dim)

    def _init(self, p: int) -> None:
        self.state = OnlineInverse(enumerate_basis(p, self.degree), ridge0=self.ridge0, cadence=self.cadence)

    def handle(self, line: str) -> str | None:
        line = line.strip()
        if not line or line.startswith("#"):
            return None
        verb, _, rest = line.partition(" ")
        if verb not in ("add", "score", "snapshot"):
            verb, rest = "add", line
        try:
            if verb == "snapshot":
                if self.state is None or self.state.n == 0:
                    raise ValueError("no points absorbed yet")
                if not rest.strip():
                    raise ValueError("snapshot needs a path")
                self.state.snapshot().to_model().save(rest.strip())
                return None
            try:
                x = [float(v) for v in rest.split(",")]
            except ValueError:
                raise ValueError(f"malformed point {rest.strip()!r}") from None
            if self.state is None:
                if verb == "score":
                    raise ValueError("no points absorbed yet")
                self._init(len(x))
            if verb == "add":
                self.state.insert(x)
                return None
            return repr(self.state.score_online(x))
        except (ValueError, OSError, np.linalg.LinAlgError) as exc:
            return f"error: {exc}"


@cli.command("stream")
@click.option("--degree", type=int, required=True)
@click.option("--dim", type=int, default=None, help="Point dimension (default: taken from the first row).")
@click.option("--ridge0", type=float, default=DEFAULT_RIDGE0, show_default=True)
@click.option("--cadence", type=int, default=DEFAULT_CADENCE, show_default=True,
              help="Inserts between full refactorizations.")
def cmd_stream(degree, dim, ridge0, cadence):
    """Online scoring over standard input / standard output."""
    if degree < 0 or ridge0 <= 0 or cadence < 1 or (dim is not None and dim < 1):
        raise click.BadParameter("need degree >= 0, ridge0 > 0, cadence >= 1, dim >= 1")
    session = StreamSession(degree, dim, ridge0, cadence)
    for line in sys.stdin:
        reply = session.handle(line)
        if reply is not None:
            click.echo(reply)
            sys.stdout.flush()


@cli.command("synth")
@click.option("--kind", type=click.Choice(sorted(ingest.SPEC_KINDS)), required=True)
@click.option("--seed", type=int, required=True)
@click.option("--n", type=int, default=None, help="Number of points (ring: points on the ring).")
@click.option("--output", required=True, type=click.Path(dir_okay=False))
def cmd_synth(kind, seed, n, output):
    """Write a synthetic labeled cloud as CSV."""
    spec: dict = {"kind": kind}
    if n is not None:
        spec["n" if kind == "gaussians" else "n_ring"] = n
    ds = ingest.synth_cloud(spec, seed)
    ingest.write_csv(ds, output)
    click.echo(f"n={ds.n} outliers={int(ds.labels.sum())}")


@cli.command("kdd")
@click.option("--raw", "raw_path", required=True, type=click.Path(dir_okay=False),
              help="kddcup.data (optionally .gz).")
@click.option("--outdir", required=True, type=click.Path(file_okay=False))
@click.option("--check/--no-check", default=True, show_default=True,
              help="Fail unless sizes and attack proportions match the reference table.")
def cmd_kdd(raw_path, outdir, check):
    """Preprocess the KDD Cup 99 log into five labeled 3-D datasets."""
    click.echo(f"sha256={ingest.sha256_file(raw_path)}")
    datasets = ingest.kdd_prepare(raw_path)
    os.makedirs(outdir, exist_ok=True)
    for name, ds in datasets.items():
        ingest.write_csv(ds, Path(outdir) / f"{name}.csv")
        click.echo(f"{name}: n={ds.n} attacks={ds.attack_fraction:.4f}")
    problems = ingest.kdd_table_check(datasets)
    if problems and check:
        raise ingest.DataError("dataset table mismatch: " + "; ".join(problems))
    click.echo("table check: " + ("ok" if not problems else "MISMATCH"))


def _load_kdd_dir(datadir, name):
    path = Path(datadir) / f"{name}.csv"
    return ingest.load_csv(path, label_column="label", name=name)


def _bbox(points, margin=0.25):
    lo, hi = points.min(axis=0), points.max(axis=0)
    pad = margin * (hi - lo)
    return (lo[0] - pad[0], lo[1] - pad[1], hi[0] + pad[0], hi[1] + pad[1])


def _write_scored(path, points, scores, labels=None):
    header = [f"x{j + 1}" for j in range(points.shape[1])] + (["label"] if labels is not None else []) + ["score"]
    rows = []
    for i, (x, s) in enumerate(zip(points, scores)):
        rows.append([float(v) for v in x] + ([int(labels[i])] if labels is not None else []) + [float(s)])
    evaluate.write_rows(path, header, rows)


@cli.command("experiment")
@click.option("--which", type=click.Choice(["fig2left", "fig2right", "fig1left", "fig1right", "affine"]), required=True)
@click.option("--outdir", required=True, type=click.Path(file_okay=False))
@click.option("--datadir", default=None, type=click.Path(file_okay=False),
              help="Directory written by `kdd` (fig2*; default: --outdir).")
@click.option("--degrees", default="1,2,3,4,5,6,7,8", show_default=True, help="Degrees for fig2right.")
@click.option("--seed", type=int, default=None, help="Required for the synthetic experiments.")
@click.option("--res", default="200,200", show_default=True, help="Grid resolution nx,ny for level sets.")
def cmd_experiment(which, outdir, datadir, degrees, seed, res):
    """Run one of the experiments end to end and write plot-ready CSVs."""
    os.makedirs(outdir, exist_ok=True)
    out = Path(outdir)
    nx, ny = (int(v) for v in _floats(res, 2, "--res"))
    if which.startswith("fig2"):
        datadir = datadir or outdir
        if which == "fig2left":
            for name in ingest.KDD_TABLE:
                ds = _load_kdd_dir(datadir, name)
                model = fit_points(ds.points, 3)
                curve = evaluate.detection_curve(evaluate.ScoredDataset(model.score_batch(ds.points), ds.labels))
                curve.to_csv(out / f"detection_{name}.csv")
                click.echo(f"{name}: n={ds.n} written detection_{name}.csv")
        else:
            ds = _load_kdd_dir(datadir, "others")
            curves: dict = {}
            rows = evaluate.sweep_degree(ds, [int(v) for v in _floats(degrees, name="--degrees")], curves=curves)
            for d, curve in curves.items():
                curve.to_csv(out / f"pr_others_d{d}.csv")
            evaluate.write_sweep(out / "aupr_others.csv", rows)
            for r in rows:
                click.echo(f"d={r.d} aupr={r.aupr if r.aupr is not None else 'nan'}" + (f" ({r.error})" if r.error else ""))
        return

    if seed is None:
        raise click.UsageError(f"--seed is required for --which {which}")
    if which == "fig1left":
        ds = ingest.synth_cloud("gaussians", seed)
        model = fit_points(ds.points, 4)
        ingest.write_csv(ds, out / "points.csv")
        write_levelset(levelset_grid(model, _bbox(ds.points), (nx, ny)), out / "levelset.csv")
        inside = float(np.mean(model.score_batch(ds.points) <= model.size))
        click.echo(f"fraction of points with Q <= {model.size}: {inside:.3f}")
    elif which == "fig1right":
        ds = ingest.synth_cloud("ring", seed)
        model = fit_points(ds.points, 8)
        scores = model.score_batch(ds.points)
        _write_scored(out / "scores.csv", ds.points, scores, ds.labels)
        a = evaluate.aupr(evaluate.ScoredDataset(scores, ds.labels))
        click.echo(f"mean score ring={scores[~ds.labels].mean():.4g} background={scores[ds.labels].mean():.4g} aupr={a:.4f}")
    else:
        ds = ingest.synth_cloud("gaussians", seed)
        X = ds.points
        t = np.pi / 3
        rot = AffineMap(np.array([[np.cos(t), -np.sin(t)], [np.sin(t), np.cos(t)]]), np.zeros(2))
        Xr = rot(X)
        scale = standardizing_map(Xr)
        configs = {"original": X, "rotated": Xr, "standardized": scale(Xr)}
        for name, pts in configs.items():
            model = fit_points(pts, 4, precondition=False)
            ingest.write_csv(ingest.LabeledDataset(pts, ds.labels), out / f"{name}_points.csv")
            write_levelset(levelset_grid(model, _bbox(pts), (nx, ny)), out / f"{name}_levelset.csv")
        base = fit_points(X, 4, precondition=False)
        full = AffineMap(scale.A @ rot.A, scale.A @ rot.b + scale.b)
        dev = affine_pushforward_check(base, X, full.A, full.b, X)
        click.echo(f"max relative score deviation original vs transformed: {dev:.3g}")


def main(argv=None) -> int:
    try:
        cli.main(args=argv, prog_name="christoffel", auto_envvar_prefix="CHRISTOFFEL", standalone_mode=False)
    except click.exceptions.Exit as exc:
        return exc.exit_code
    except click.Abort:
        click.echo("aborted", err=True)
        return EXIT_IO
    except click.ClickException as exc:
        exc.show()
        return EXIT_IO
    except CholeskyFailure as exc:
        click.echo(f"error: {exc}", err=True)
        return EXIT_NUMERIC
    except (OSError, ValueError) as exc:
        click.echo(f"error: {exc}", err=True)
        return EXIT_IO
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
