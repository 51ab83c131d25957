"""Command-line front end.

Every subcommand reads a JSON model, calls one library function and writes
JSON (scalar reports) or CSV (vectors and grids).  Exit status: 0 success,
1 usage error, 2 domain error, 3 numerical-tolerance failure.
"""

from __future__ import annotations

import argparse
import math
import sys

import numpy as np

from . import closedform, estimate, extinction, io, kolmogorov, moments, simulate
from .errors import GBDPError, NumericalToleranceError
from .model import ModelSpec, Variant

EXIT_OK, EXIT_USAGE, EXIT_DOMAIN, EXIT_NUMERIC = 0, 1, 2, 3


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def parse_times(text: str) -> np.ndarray:
    """``"1"``, ``"0.5,1,2"`` or ``"start:stop:num"`` (inclusive linspace)."""
    try:
        if ":" in text:
            a, b, n = text.split(":")
            t = np.linspace(float(a), float(b), int(n))
        else:
            t = np.array([float(x) for x in text.split(",") if x.strip()])
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"bad time grid {text!r}") from exc
    if t.size == 0 or np.any(np.diff(t) <= 0) or np.any(t < 0):
        raise argparse.ArgumentTypeError("time grid must be nonnegative and increasing")
    return t


def _common(p, model=True):
    if model:
        p.add_argument("--model", required=True, help="JSON model file")
    p.add_argument("-o", "--output", default="-", help="output path, '-' for stdout")
    p.add_argument("--format", choices=["json", "csv"], default=None)


def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="gbdp", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("simulate", help="simulate paths")
    _common(p)
    p.add_argument("--n0", type=int, default=1)
    p.add_argument("--horizon", "--t", dest="horizon", type=float, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--stream", type=int, default=0)
    p.add_argument("--query-times", type=parse_times, default=None,
                   help="emit N,B,D,X at these times instead of the event list")
    p.add_argument("--replications", type=int, default=None,
                   help="run a Monte Carlo summary over this many paths")
    p.add_argument("--threads", type=int, default=None)
    p.add_argument("--max-jumps", type=int, default=simulate.DEFAULT_MAX_JUMPS)

    p = sub.add_parser("pmf", help="transient state probabilities")
    _common(p)
    p.add_argument("--t", type=parse_times, required=True)
    p.add_argument("--n0", type=int, default=1)
    p.add_argument("--method", choices=["ode", "closed-form", "uniformization"], default="ode")
    p.add_argument("--tol", type=float, default=1e-12, help="closed-form truncation")
    p.add_argument("--deficit-tol", type=float, default=1e-9)
    p.add_argument("--window", type=int, default=None, help="fixed truncation window")

    p = sub.add_parser("joint", help="joint laws with cumulative births/deaths")
    _common(p)
    p.add_argument("--t", type=parse_times, required=True)
    p.add_argument("--kind", choices=["births", "deaths", "full", "arrivals", "departures"], required=True)

    p = sub.add_parser("moments", help="closed-form moments")
    _common(p)
    p.add_argument("--t", type=parse_times, required=True)

    p = sub.add_parser("extinction", help="roots of psi and extinction probability")
    _common(p)

    p = sub.add_parser("laplace", help="hitting-time Laplace transform")
    _common(p)
    p.add_argument("--k", type=int, default=1)
    p.add_argument("--theta", type=float, required=True)
    p.add_argument("--weight", choices=["one", "identity"], default="one")

    p = sub.add_parser("estimate", help="estimate Lambda from state_before,sojourn records")
    _common(p, model=False)
    p.add_argument("--input", required=True)
    p.add_argument("--alpha", type=float, default=0.05)

    p = sub.add_parser("parking", help="parking-lot means")
    _common(p)
    p.add_argument("--t", type=parse_times, required=True)

    p = sub.add_parser("figure", help="(t, value) series for plotting")
    _common(p)
    p.add_argument("--kind", required=True,
                   choices=["cum_births", "cum_deaths", "corrBN", "corrDN", "corrNX", "immigration_mean"])
    p.add_argument("--t", type=parse_times, default=parse_times("0:5:51"))
    return ap


def _emit(args, obj=None, csv_text=None):
    fmt = args.format
    if csv_text is not None and fmt != "json":
        io.atomic_write(args.output, csv_text)
    else:
        io.atomic_write(args.output, io.dump_json(obj))


def _cmd_simulate(args, spec):
    if args.replications is not None:
        q = args.query_times if args.query_times is not None else [args.horizon]
        s = simulate.monte_carlo(spec, args.n0, args.horizon, args.replications, q,
                                 base_seed=args.seed, threads=args.threads, max_jumps=args.max_jumps)
        rows = []
        out = {"replications": s.replications, "capped": s.capped, "estimates": []}
        for (name, t), e in sorted(s.estimates.items(), key=lambda kv: (kv[0][1], kv[0][0])):
            out["estimates"].append({"t": t, "name": name, "mean": e.mean, "variance": e.variance, "se": e.se})
            rows.append([t, name, e.mean, e.variance, e.se])
        _emit(args, out, io.series_csv(["t", "name", "mean", "variance", "se"], rows)
              if args.format == "csv" else None)
        return
    traj = simulate.simulate_trajectory(spec, args.n0, args.horizon, args.seed,
                                        stream=args.stream, max_jumps=args.max_jumps)
    if args.query_times is not None:
        text = io.functionals_csv(simulate.functionals(traj, None, args.query_times))
    else:
        text = io.trajectory_csv(traj)
    io.atomic_write(args.output, text)


def _cmd_pmf(args, spec):
    if args.method == "closed-form":
        pmfs = []
        for t in args.t:
            law = closedform.state_law(spec, t, args.tol)
            pmfs.append(kolmogorov.TruncatedPmf(float(t), law.weights, law.tail_bound, law.offset))
    else:
        opts = kolmogorov.SolveOptions(
            deficit_tolerance=args.deficit_tol,
            fixed_window=args.window,
            backend="uniformization" if args.method == "uniformization" else "rk45",
        )
        pmfs = kolmogorov.solve_state_probabilities(spec, args.n0, args.t, opts)
    if args.format == "json":
        _emit(args, [{"t": p.t, "offset": p.offset, "probs": p.probs.tolist(), "deficit": p.deficit} for p in pmfs])
    else:
        io.atomic_write(args.output, io.pmf_csv(pmfs))


def _cmd_joint(args, spec):
    kind = args.kind
    if kind == "births":
        grids = kolmogorov.solve_joint_birth(spec, args.t)
    elif kind == "deaths":
        grids = kolmogorov.solve_joint_death(spec, args.t)
    elif kind == "full":
        grids = kolmogorov.solve_joint_full(spec, args.t)
    else:
        grids = kolmogorov.solve_parking_joint(spec, kind, args.t)
    io.atomic_write(args.output, io.joint_csv(grids))


def moment_rows(spec: ModelSpec, times) -> list[dict]:
    """Library-level view of what ``gbdp moments`` prints."""
    rows = []
    for t in times:
        t = float(t)
        if spec.variant is Variant.LINEAR:
            vals = moments.linear_report(spec, t).values
        elif spec.variant is Variant.CONSTANT:
            rep, _ = moments.constant_moments(spec, t)
            vals = dict(rep.values)
            vals.update(moments.path_integral_moments_constant(spec, t).values)
        elif spec.variant is Variant.IMMIGRATION_ALL:
            vals = {"mean_N": moments.immigration_mean(spec, t)}
        elif spec.variant is Variant.IMMIGRATION_ZERO:
            curve = kolmogorov.p0_curve(spec, max(t, 1e-12))
            vals = {"mean_N": moments.immigration_mean(spec, t, curve)}
        elif spec.variant is Variant.PARKING:
            m = moments.parking_means(spec, t)
            vals = {"mean_N": m.E_N, "mean_A": m.E_A, "mean_D": m.E_D, "occupancy": m.O}
        else:
            from .errors import UnsupportedVariantError

            raise UnsupportedVariantError("no closed-form moments for a rate table")
        rows.append({"t": t, **vals})
    return rows


def _cmd_moments(args, spec):
    rows = moment_rows(spec, args.t)
    keys = list(rows[0])
    csv_text = io.series_csv(keys, [[r[k] for k in keys] for r in rows])
    _emit(args, rows if len(rows) > 1 else rows[0], csv_text if args.format == "csv" else None)


def _cmd_extinction(args, spec):
    _emit(args, extinction.analyze(spec).to_dict())


def _cmd_laplace(args, spec):
    g = None if args.weight == "one" else (lambda n: float(n))
    val = extinction.hitting_time_laplace(spec, args.k, args.theta, g)
    _emit(args, {"k": args.k, "theta": args.theta, "weight": args.weight, "value": val})


def _cmd_estimate(args):
    recs = io.read_records(args.input)
    _emit(args, estimate.estimate_report(recs, args.alpha))


def _cmd_parking(args, spec):
    rows = []
    for t in args.t:
        m = moments.parking_means(spec, float(t))
        rows.append({"t": float(t), "E_N": m.E_N, "E_A": m.E_A, "E_D": m.E_D, "O": m.O})
    out = {"rows": rows, "long_run_E_N": moments.parking_long_run(spec), "capacity": spec.capacity}
    csv_text = io.series_csv(["t", "E_N", "E_A", "E_D", "O"], [list(r.values()) for r in rows])
    _emit(args, out, csv_text if args.format == "csv" else None)


def figure_rows(spec: ModelSpec, kind: str, times) -> list[list]:
    """``[t, value, defined]`` rows; undefined values (t = 0 correlations) are NaN with ``defined = 0``."""
    rows = []
    curve = None
    for t in times:
        t = float(t)
        if kind == "cum_births":
            v = moments.birth_moments(spec, t)["mean_B"]
        elif kind == "cum_deaths":
            v = moments.death_moments(spec, t)["mean_D"]
        elif kind == "corrBN":
            v = moments.birth_moments(spec, t)["corr_BN"]
        elif kind == "corrDN":
            v = moments.death_moments(spec, t)["corr_DN"]
        elif kind == "corrNX":
            v = moments.path_integral_moments(spec, t)["corr_NX"]
        else:
            if spec.variant is Variant.IMMIGRATION_ZERO and curve is None:
                curve = kolmogorov.p0_curve(spec, max(float(times[-1]), 1e-12))
            v = moments.immigration_mean(spec, t, curve)
        rows.append([t, v, 0 if math.isnan(v) else 1])
    return rows


def _cmd_figure(args, spec):
    rows = figure_rows(spec, args.kind, args.t)
    io.atomic_write(args.output, io.series_csv(["t", "value", "defined"], rows))


def run(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if isinstance(exc.code, int) else EXIT_USAGE
    try:
        if args.command == "estimate":
            _cmd_estimate(args)
            return EXIT_OK
        spec = ModelSpec.load(args.model)
        handler = {
            "simulate": _cmd_simulate,
            "pmf": _cmd_pmf,
            "joint": _cmd_joint,
            "moments": _cmd_moments,
            "extinction": _cmd_extinction,
            "laplace": _cmd_laplace,
            "parking": _cmd_parking,
            "figure": _cmd_figure,
        }[args.command]
        handler(args, spec)
    except NumericalToleranceError as exc:
        print(f"gbdp: numerical tolerance not met: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (GBDPError, ValueError, OSError, KeyError) as exc:
        print(f"gbdp: {exc}", file=sys.stderr)
        return EXIT_DOMAIN
    return EXIT_OK


def main():
    sys.exit(run())


if __name__ == "__main__":
    main()
