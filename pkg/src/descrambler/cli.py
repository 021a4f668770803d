"""Command-line front end.

Exit codes: 0 success, 2 usage or configuration error, 3 numerical failure.
Errors are reported on stderr as one ``error: code=<n> type=<T> message=<m>``
line.
"""

from __future__ import annotations

import argparse
import contextlib
import csv
import json
import os
import sys
from pathlib import Path

import numpy as np

from . import analysis, cayley, deer, descramble, netlab, replica, spectral
from .core import (
    DescramblerError,
    DivergenceError,
    as_matrix,
    load_dataset,
    load_matrix,
    load_network,
    save_dataset,
    save_matrix,
    save_network,
)
from .svg import heatmap_svg

EXIT_OK, EXIT_USAGE, EXIT_NUMERIC = 0, 2, 3


class UsageError(DescramblerError):
    pass


def _write_json(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


def _write_csv(path: Path, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in row])


def _pair(text: str) -> tuple[float, float]:
    parts = text.split(",")
    if len(parts) != 2:
        raise argparse.ArgumentTypeError(f"expected 'lo,hi', got {text!r}")
    return float(parts[0]), float(parts[1])


def _topology(text: str) -> list[tuple[int, str]]:
    out = []
    for item in text.split(","):
        dim, _, act = item.partition(":")
        out.append((int(dim), act or "tanh"))
    return out


# ---------------------------------------------------------------------------
# commands


def cmd_gen_deer(args) -> int:
    cfg = deer.DeerGridConfig(
        time_points=args.time_points,
        t_max=args.t_max,
        dist_points=args.dist_points,
        r_min=args.r_min,
        r_max=args.r_max,
        noise_sigma_range=args.noise,
        modulation_depth_range=args.depth,
        background_rate_range=args.background,
        n_gaussians_max=args.n_gaussians,
        seed=args.seed,
    )
    ds = deer.generate_dataset(cfg, args.n)
    save_dataset(ds, args.out)
    print(f"wrote {ds.n_traces} traces to {args.out}")
    return EXIT_OK


def cmd_train(args) -> int:
    data = load_dataset(args.data)
    cfg = netlab.TrainConfig(
        epochs=args.epochs,
        batch_size=args.batch_size,
        learning_rate=args.lr,
        seed=args.seed,
        validation_fraction=args.validation_fraction,
        patience=args.patience,
    )
    topology = _topology(args.topology)
    net, report = netlab.train(topology, data, cfg)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    save_network(net, out)
    _write_json(Path(str(out) + ".report.json"), report.to_dict())
    final = report.validation_loss[-1] if report.validation_loss else report.initial_validation_loss
    print(f"trained {net.depth}-layer net, validation loss {final:.6g}")
    return EXIT_OK


def cmd_descramble(args) -> int:
    net = load_network(args.net)
    spec = descramble.WiretapSpec(args.layer, args.position, args.alpha)
    spec.check(net)
    if args.functional == cayley.TIKHONOV:
        data = load_dataset(args.data) if args.data else None
        if data is None:
            raise UsageError("--data is required for the tikhonov functional")
        dim = net.layers[args.layer - 1].weights.shape[0]
        d = spectral.build_second_derivative(dim, 1.0, args.d_kind)
        prob = descramble.assemble_problem(net, data.inputs, spec, d)
    else:
        w = net.layers[args.layer - 1].weights
        prob = cayley.mds_problem(w) if args.functional == cayley.MDS else cayley.mdns_problem(w)
    cfg = descramble.OptimizerConfig(
        max_iters=args.max_iters, grad_tol=args.tol, init=args.init, seed=args.seed
    )
    res = descramble.optimize(prob, cfg)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    save_matrix(res.p, out / "P.dmat")
    save_matrix(res.q[:, None] if res.q.size else np.zeros((1, 1)), out / "q.dmat")
    view = descramble.apply_descrambler(net, spec, res.p)
    save_matrix(view.weights, out / "descrambled.dmat")
    if view.next_weights is not None:
        save_matrix(view.next_weights, out / "descrambled_next.dmat")
    report = res.report() | {"layer": args.layer, "position": args.position, "alpha": args.alpha}
    _write_json(out / "report.json", report)
    print(f"iterations={res.iterations} converged={res.converged} eta={res.value:.6g}")
    return EXIT_OK


def cmd_analyze(args) -> int:
    w = load_matrix(args.input)
    out = Path(args.out) if getattr(args, "out", None) else None
    if out is not None and args.what not in ("det-sign",):
        out.mkdir(parents=True, exist_ok=True)
    if args.what == "det-sign":
        s = analysis.det_sign(w)
        print({1: "+1", -1: "-1", 0: "0"}[s])
        if w.shape[0] == w.shape[1]:
            err = float(np.linalg.norm(w.T @ w - np.eye(w.shape[0])))
            print(f"orthogonality_residual={err:.3e}", file=sys.stderr)
        return EXIT_OK
    if out is None:
        raise UsageError("--out is required")
    if args.what == "fourier-conjugate":
        c = analysis.fourier_conjugate(w)
        mag = np.abs(c)
        save_matrix(c.real, out / "real.dmat")
        save_matrix(c.imag, out / "imag.dmat")
        save_matrix(mag, out / "magnitude.dmat")
        _write_csv(out / "row_profile.csv", ["bin", "value"], enumerate(analysis.frequency_profile(mag, 0)))
        _write_csv(out / "col_profile.csv", ["bin", "value"], enumerate(analysis.frequency_profile(mag, 1)))
        off = mag.copy()
        k = min(off.shape)
        off[np.arange(k), np.arange(k)] = 0.0
        report = {"offdiagonal_max": float(off.max()), "offdiagonal_norm": float(np.linalg.norm(off))}
        report |= analysis.band_medians(mag)
        _write_json(out / "report.json", report)
        print(f"offdiagonal_max={report['offdiagonal_max']:.3e}")
    elif args.what == "spectrum2d":
        save_matrix(spectral.spectrum2d(w), out / "spectrum2d.dmat")
    elif args.what == "svd":
        u, s, v = analysis.svd_inspect(w)
        save_matrix(u, out / "U.dmat")
        save_matrix(v, out / "V.dmat")
        _write_csv(out / "S.csv", ["index", "value"], enumerate(s))
    elif args.what == "autocorr":
        _write_csv(out / "autocorr.csv", ["lag", "value"], enumerate(analysis.row_autocorrelation(w)))
    elif args.what == "block-average":
        avg = analysis.block_average(w, args.block_cols, args.sv_keep)
        save_matrix(avg, out / "block_average.dmat")
    return EXIT_OK


def cmd_heatmap(args) -> int:
    w = load_matrix(args.input)
    Path(args.out).write_text(heatmap_svg(w, cell=args.cell, symmetric=args.symmetric))
    return EXIT_OK


def cmd_replica(args) -> int:
    if args.what == "design":
        f = replica.design_fir(args.kind, args.order, args.passband, args.stopband)
        out = Path(args.out)
        out.parent.mkdir(parents=True, exist_ok=True)
        replica.save_filter(f, out)
        print(json.dumps(f.spec(), sort_keys=True))
        return EXIT_OK
    lp = replica.load_filter(args.lowpass)
    nt = replica.load_filter(args.notch)
    data = load_dataset(args.data)
    if args.what == "fit":
        F = replica.apply_fir_columns(nt, replica.apply_fir_columns(lp, data.inputs))
        grid = None
        if args.lambda_grid:
            grid = [float(v) for v in args.lambda_grid.split(",")]
        tr = replica.fit_transform(F, data.targets, grid)
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        save_matrix(tr.t, out / "T.dmat")
        _write_csv(
            out / "lcurve.csv",
            ["lambda", "residual_norm", "solution_norm"],
            [tuple(p) for p in tr.lcurve],
        )
        report = {
            "lambda": tr.lam,
            "lambda_grid": [p.lam for p in tr.lcurve],
            "lambda_grid_source": "user" if grid else "default: 40 log-spaced, 1e-8..1e2 x tr(FF^T)/n_t",
            "max_normal_residual": max(tr.normal_residuals),
        }
        _write_json(out / "report.json", report)
        print(f"lambda={tr.lam:.6g}")
        return EXIT_OK
    # run
    T = load_matrix(args.transform)
    cols = range(data.n_traces) if args.index is None else [args.index]
    outputs = [replica.replica_pipeline(data.inputs[:, i], lp, nt, T) for i in cols]
    out = Path(args.out)
    rows = [[r] + [o.p[j] for o in outputs] for j, r in enumerate(data.dist_grid)]
    _write_csv(out, ["r_nm"] + [f"trace{i}" for i in cols], rows)
    if any(o.degenerate for o in outputs):
        print("warning: degenerate output (all-zero after clipping)", file=sys.stderr)
    return EXIT_OK


def cmd_pipeline(args) -> int:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    cfg = deer.DeerGridConfig(
        time_points=args.time_points, dist_points=args.time_points, seed=args.seed
    )
    ds = deer.generate_dataset(cfg, args.n)
    save_dataset(ds, out / "data")
    net, report = netlab.train(
        [(args.width, "tanh"), (args.time_points, "logsig")],
        ds,
        netlab.TrainConfig(epochs=args.epochs, seed=args.seed, patience=args.patience),
    )
    save_network(net, out / "net.net")
    _write_json(out / "net.net.report.json", report.to_dict())
    spec = descramble.WiretapSpec(1, descramble.PRE)
    d = spectral.build_second_derivative(args.width, 1.0)
    res = descramble.optimize(
        descramble.assemble_problem(net, ds.inputs, spec, d),
        descramble.OptimizerConfig(max_iters=args.max_iters, seed=args.seed),
    )
    save_matrix(res.p, out / "P.dmat")
    _write_json(out / "descramble.json", res.report())
    pw = res.p @ net.weights[0]
    save_matrix(pw, out / "descrambled_W1.dmat")
    mag = np.abs(analysis.fourier_conjugate(pw))
    save_matrix(mag, out / "conjugate_magnitude.dmat")
    (out / "raw_W1.svg").write_text(heatmap_svg(net.weights[0], symmetric=True))
    (out / "descrambled_W1.svg").write_text(heatmap_svg(pw, symmetric=True))
    (out / "conjugate_magnitude.svg").write_text(heatmap_svg(np.fft.fftshift(mag)))
    bands = analysis.band_medians(mag)
    _write_json(out / "bands.json", bands)
    files = sorted(str(p.relative_to(out)) for p in out.rglob("*") if p.is_file())
    _write_json(out / "manifest.json", {"files": files, "seed": args.seed})
    print(json.dumps(bands, sort_keys=True))
    return EXIT_OK


# ---------------------------------------------------------------------------
# parser


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="descrambler", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen-deer", help="generate a synthetic DEER dataset")
    g.add_argument("--n", type=int, required=True)
    g.add_argument("--time-points", type=int, default=64)
    g.add_argument("--t-max", type=float, default=2.0)
    g.add_argument("--dist-points", type=int, default=64)
    g.add_argument("--r-min", type=float, default=2.5)
    g.add_argument("--r-max", type=float, default=6.0)
    g.add_argument("--noise", type=_pair, default=(0.0, 0.1), help="sigma range lo,hi")
    g.add_argument("--depth", type=_pair, default=(0.2, 0.6), help="modulation depth range lo,hi")
    g.add_argument("--background", type=_pair, default=(0.0, 0.2), help="decay rate range lo,hi (1/us)")
    g.add_argument("--n-gaussians", type=int, default=3)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--out", required=True)
    g.set_defaults(func=cmd_gen_deer)

    t = sub.add_parser("train", help="train a bias-free network on a dataset")
    t.add_argument("--data", required=True)
    t.add_argument("--out", required=True, help="network manifest path (.net)")
    t.add_argument("--topology", default="64:tanh,64:logsig", help="dim:activation,...")
    t.add_argument("--epochs", type=int, default=2000)
    t.add_argument("--batch-size", type=int, default=64)
    t.add_argument("--lr", type=float, default=1e-3)
    t.add_argument("--validation-fraction", type=float, default=0.1)
    t.add_argument("--patience", type=int, default=100)
    t.add_argument("--seed", type=int, default=0)
    t.set_defaults(func=cmd_train)

    d = sub.add_parser("descramble", help="find a descrambling rotation for one layer")
    d.add_argument("--net", required=True)
    d.add_argument("--data")
    d.add_argument("--layer", type=int, default=1)
    d.add_argument("--position", choices=[descramble.PRE, descramble.POST], default=descramble.PRE)
    d.add_argument("--functional", choices=list(cayley.FUNCTIONALS), default=cayley.TIKHONOV)
    d.add_argument("--alpha", type=float, default=0.0)
    d.add_argument("--d-kind", choices=list(spectral.DIFF_KINDS), default=spectral.FOURIER)
    d.add_argument("--max-iters", type=int, default=5000)
    d.add_argument("--tol", type=float, default=1e-8)
    d.add_argument("--init", choices=["zero", "random"], default="zero")
    d.add_argument("--seed", type=int, default=0)
    d.add_argument("--out", required=True)
    d.set_defaults(func=cmd_descramble)

    a = sub.add_parser("analyze", help="inspect a matrix")
    asub = a.add_subparsers(dest="what", required=True)
    for name in ("fourier-conjugate", "spectrum2d", "svd", "autocorr", "block-average", "det-sign"):
        s = asub.add_parser(name)
        s.add_argument("--in", dest="input", required=True)
        if name != "det-sign":
            s.add_argument("--out", required=True, help="output directory")
        if name == "block-average":
            s.add_argument("--block-cols", type=int, required=True)
            s.add_argument("--sv-keep", type=int, required=True)
    a.set_defaults(func=cmd_analyze)

    h = sub.add_parser("heatmap", help="render a matrix as an SVG heatmap")
    h.add_argument("--in", dest="input", required=True)
    h.add_argument("--out", required=True)
    h.add_argument("--cell", type=int, default=8)
    h.add_argument("--symmetric", action="store_true", help="colour scale symmetric about zero")
    h.set_defaults(func=cmd_heatmap)

    r = sub.add_parser("replica", help="DSP replica: design filters, fit and run the transform")
    rsub = r.add_subparsers(dest="what", required=True)
    rd = rsub.add_parser("design")
    rd.add_argument("--kind", choices=list(replica.FIR_KINDS), required=True)
    rd.add_argument("--order", type=int, required=True)
    rd.add_argument("--pass", dest="passband", type=float, required=True)
    rd.add_argument("--stop", dest="stopband", type=float, required=True)
    rd.add_argument("--out", required=True)
    for name in ("fit", "run"):
        s = rsub.add_parser(name)
        s.add_argument("--data", required=True)
        s.add_argument("--lowpass", required=True)
        s.add_argument("--notch", required=True)
        s.add_argument("--out", required=True)
        if name == "fit":
            s.add_argument("--lambda-grid", help="comma-separated positive values")
        else:
            s.add_argument("--transform", required=True)
            s.add_argument("--index", type=int)
    r.set_defaults(func=cmd_replica)

    pl = sub.add_parser("pipeline", help="gen -> train -> descramble -> analyze")
    pl.add_argument("--out", required=True)
    pl.add_argument("--n", type=int, default=2000)
    pl.add_argument("--time-points", type=int, default=64)
    pl.add_argument("--width", type=int, default=64)
    pl.add_argument("--epochs", type=int, default=2000)
    pl.add_argument("--patience", type=int, default=100)
    pl.add_argument("--max-iters", type=int, default=5000)
    pl.add_argument("--seed", type=int, default=0)
    pl.set_defaults(func=cmd_pipeline)
    return p


def _threads():
    n = os.environ.get("DESCRAMBLE_THREADS")
    if not n:
        return contextlib.nullcontext()
    from threadpoolctl import threadpool_limits

    return threadpool_limits(limits=int(n))


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        with _threads():
            return args.func(args)
    except DivergenceError as exc:
        print(f"error: code={EXIT_NUMERIC} type={type(exc).__name__} message={exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except np.linalg.LinAlgError as exc:
        print(f"error: code={EXIT_NUMERIC} type=LinAlgError message={exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (DescramblerError, ValueError, FileNotFoundError) as exc:
        print(f"error: code={EXIT_USAGE} type={type(exc).__name__} message={exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
