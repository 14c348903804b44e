"""Command-line front end.

Five subcommands wire the library into reproducible experiments:

    simulate   run a pair ensemble, write one JSONL summary per replica
    oracle     exact kernel computations (return | meetings | persite
               | identities) as CSV
    stats      reduce JSONL ensembles to CSV reports (grid | growth
               | lil | drift)
    fit        least-squares power-law exponent from a CSV column
    verify     alias for `oracle identities`

Every command is a pure function of its config: rerunning with identical
flags produces byte-identical output, whatever the worker count.  Config
may come from a flat key=value file via --config, with explicit flags
taking precedence.

Exit codes: 0 success, 1 check failure, 2 config error, 3 budget
exceeded, 4 input schema mismatch, 5 degenerate data.
"""

from __future__ import annotations

import argparse
import contextlib
import json
import os
import sys
import time

import numpy as np

from .graphs import BudgetError, GraphError, build_graph, DEFAULT_BUDGET
from .oracle import (OracleError, identity_check_suite,
                     meeting_expectation_series, per_site_collision_series,
                     return_probability_series)
from .sampler import (RecordPolicy, SimulationError, read_summaries,
                      run_ensemble, write_summaries)
from .stats import (StatsError, drift_estimate, dyadic_collision_stats,
                    estimate_exponent, lil_envelope_check,
                    meeting_growth_curve)

EXIT_OK = 0
EXIT_CHECK = 1
EXIT_CONFIG = 2
EXIT_BUDGET = 3
EXIT_SCHEMA = 4
EXIT_DEGENERATE = 5

BUDGET_ENV = "COMBWALKS_BUDGET"


class ConfigError(ValueError):
    pass


# ---------------------------------------------------------------------------
# config plumbing
# ---------------------------------------------------------------------------

def _parse_config_file(path):
    out = {}
    try:
        with open(path) as fh:
            for ln, line in enumerate(fh, 1):
                line = line.strip()
                if not line or line.startswith("#"):
                    continue
                if "=" not in line:
                    raise ConfigError(f"{path}:{ln}: expected key=value")
                key, _, val = line.partition("=")
                out[key.strip().replace("-", "_")] = val.strip()
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}") from None
    return out


def _int_list(text):
    return tuple(int(x) for x in str(text).split(",") if str(x).strip())


def _float_list(text):
    return tuple(float(x) for x in str(text).split(",") if str(x).strip())


def _span(text):
    """'a:b' inclusive integer span."""
    lo, _, hi = str(text).partition(":")
    if not hi:
        raise ConfigError(f"expected lo:hi span, got {text!r}")
    return int(lo), int(hi)


_COERCE = {
    "steps": int, "replicas": int, "seed": int, "workers": int,
    "nmax": int, "spine_stride": int, "budget": int,
    "truncation_radius": int, "boot": int,
    "alpha": float,
    "checkpoints": _int_list, "lil_alphas": _float_list,
    "r_range": _span, "k_range": _span, "range": _span,
    "inputs": lambda s: [x for x in str(s).split(",") if x],
}


def _merge(args):
    """Overlay config-file values under explicitly given flags."""
    if getattr(args, "config", None):
        file_vals = _parse_config_file(args.config)
        for key, raw in file_vals.items():
            if getattr(args, key, None) is None:
                coerce = _COERCE.get(key, str)
                try:
                    setattr(args, key, coerce(raw))
                except (ValueError, TypeError) as exc:
                    raise ConfigError(f"config key {key}: {exc}") from None
    return args


def _budget(args):
    if getattr(args, "budget", None) is not None:
        return args.budget
    env = os.environ.get(BUDGET_ENV)
    if env:
        try:
            return int(env)
        except ValueError:
            raise ConfigError(f"{BUDGET_ENV} must be an integer") from None
    return DEFAULT_BUDGET


def _parse_start(graph, text):
    if text is None:
        return graph.root
    try:
        vertex = tuple(int(x) for x in str(text).split(","))
    except ValueError:
        raise ConfigError(f"bad start vertex {text!r}") from None
    if not graph.contains(vertex):
        raise ConfigError(f"start {vertex} is not a vertex of {graph.family}")
    return vertex


def _open_out(args):
    if getattr(args, "out", None):
        return open(args.out, "w", newline="\n")
    return contextlib.nullcontext(sys.stdout)


def _write_csv(fh, header, rows):
    fh.write(",".join(header) + "\n")
    for row in rows:
        fh.write(",".join(_cell(c) for c in row) + "\n")


def _cell(c):
    if isinstance(c, float):
        return repr(c)
    return str(c)


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------

def cmd_simulate(args):
    args = _merge(args)
    if args.graph is None:
        raise ConfigError("simulate needs --graph")
    if args.out is None:
        raise ConfigError("simulate needs --out (no implicit writes)")
    if args.steps is None:
        raise ConfigError("simulate needs --steps")
    if args.replicas is None or args.replicas < 1:
        raise ConfigError("simulate needs --replicas >= 1")
    if args.seed is None:
        raise ConfigError("simulate needs --seed (runs must be replayable)")
    seed = args.seed
    graph = build_graph(args.graph)
    start = _parse_start(graph, args.start)
    checkpoints = args.checkpoints or ()
    if list(checkpoints) != sorted(set(checkpoints)):
        raise ConfigError("checkpoints must be strictly increasing")
    record = RecordPolicy(
        checkpoints=tuple(checkpoints),
        lil_alphas=tuple(args.lil_alphas or ()),
        spine_stride=args.spine_stride or 0,
    )
    workers = args.workers if args.workers is not None else (os.cpu_count() or 1)
    t0 = time.time()
    sums = run_ensemble(graph, start, args.steps, args.replicas, seed=seed,
                        workers=workers, record=record,
                        method=args.method or "direct",
                        truncation_radius=args.truncation_radius)
    write_summaries(args.out, sums)
    total = sum(s.meetings for s in sums)
    print(f"replicas={args.replicas} total_meetings={total} "
          f"wall={time.time() - t0:.1f}s")
    return EXIT_OK


def cmd_oracle(args):
    args = _merge(args)
    which = args.which
    budget = _budget(args)
    if which == "identities":
        rows = identity_check_suite()
        worst = max(r[1] for r in rows)
        with _open_out(args) as fh:
            _write_csv(fh, ("check", "residual", "passed"),
                       [(name, res, int(ok)) for name, res, ok in rows])
        n_fail = sum(1 for _, _, ok in rows if not ok)
        print(f"checks={len(rows)} failures={n_fail} max_residual={worst:.3e}",
              file=sys.stderr)
        return EXIT_OK if n_fail == 0 else EXIT_CHECK

    if args.graph is None or args.nmax is None:
        raise ConfigError(f"oracle {which} needs --graph and --nmax")
    graph = build_graph(args.graph)
    if which == "return":
        series = return_probability_series(graph, args.nmax,
                                           every=args.every or "even",
                                           budget=budget)
        with _open_out(args) as fh:
            _write_csv(fh, ("n", "value"), series.rows())
        return EXIT_OK
    if which == "meetings":
        partial, increment = meeting_expectation_series(graph, args.nmax,
                                                        budget=budget)
        inc = dict(increment.rows())
        with _open_out(args) as fh:
            _write_csv(fh, ("n", "partial", "increment"),
                       [(n, v, inc[n]) for n, v in partial.rows()])
        return EXIT_OK
    if which == "persite":
        series = per_site_collision_series(graph, args.nmax, budget=budget)
        with _open_out(args) as fh:
            _write_csv(fh, ("n", "value"),
                       [(int(n), float(v)) for n, v in
                        zip(series.n, series.values)])
        return EXIT_OK
    raise ConfigError(f"unknown oracle report {which!r}")


def _load_inputs(paths):
    if not paths:
        raise ConfigError("stats needs --inputs")
    loaded = []
    for p in paths:
        try:
            loaded.append((os.path.splitext(os.path.basename(p))[0],
                           read_summaries(p)))
        except OSError as exc:
            raise ConfigError(f"cannot read {p}: {exc}") from None
        except (json.JSONDecodeError, KeyError, TypeError) as exc:
            raise SchemaError(f"{p}: malformed summary: {exc}") from None
    return loaded


class SchemaError(ValueError):
    pass


def cmd_stats(args):
    args = _merge(args)
    report = args.report or "grid"
    loaded = _load_inputs(args.inputs)
    merged = [s for _, sums in loaded for s in sums]

    if report == "grid":
        if args.r_range is None or args.k_range is None:
            raise ConfigError("grid report needs --r-range and --k-range")
        rows = []
        r_lo, r_hi = args.r_range
        k_lo, k_hi = args.k_range
        if merged:
            grid = dyadic_collision_stats(merged, range(r_lo, r_hi + 1),
                                          range(k_lo, k_hi + 1))
            for (r, k) in sorted(grid):
                c = grid[(r, k)]
                rows.append((r, k, c.z_mean, c.a_prob, c.w_mean,
                             c.w_given_a, c.count, c.cond_count))
        else:
            for r in range(r_lo, r_hi + 1):
                for k in range(k_lo, k_hi + 1):
                    rows.append((r, k, 0.0, 0.0, 0.0, 0.0, 0, 0))
        with _open_out(args) as fh:
            _write_csv(fh, ("r", "k", "Z_mean", "A_prob", "W_mean",
                            "W_given_A", "count", "cond_count"), rows)
        return EXIT_OK

    if report == "growth":
        rows = []
        for label, sums in loaded:
            if not sums:
                continue
            curve = meeting_growth_curve(sums, args.checkpoints or None)
            for t, m, s in zip(curve.times, curve.mean_meetings,
                               curve.survival_frac):
                rows.append((label, t, m, s))
        with _open_out(args) as fh:
            _write_csv(fh, ("graph", "t", "mean_meetings", "survival_frac"),
                       rows)
        return EXIT_OK

    if report == "lil":
        alpha = args.alpha if args.alpha is not None else 0.75
        if not (2.0 / 3.0 < alpha < 1.0):
            raise ConfigError("alpha must be in (2/3, 1)")
        counts, last = lil_envelope_check(merged, alpha)
        with _open_out(args) as fh:
            _write_csv(fh, ("replica", "violations", "last_violation"),
                       [(s.replica, int(c), int(t))
                        for s, c, t in zip(merged, counts, last)])
        return EXIT_OK

    if report == "drift":
        est = drift_estimate(merged)
        with _open_out(args) as fh:
            _write_csv(fh, ("per_move", "per_half_step", "moves"),
                       [(est.per_move, est.per_half_step, est.moves)])
        return EXIT_OK

    raise ConfigError(f"unknown stats report {report!r}")


def cmd_fit(args):
    args = _merge(args)
    if not args.input or args.column is None or args.range is None:
        raise ConfigError("fit needs --input, --column and --range")
    try:
        with open(args.input) as fh:
            header = fh.readline().strip().split(",")
            if args.column not in header:
                raise SchemaError(
                    f"column {args.column!r} not in {header}")
            xi = header.index("n") if "n" in header else 0
            vi = header.index(args.column)
            pts = []
            for line in fh:
                parts = line.strip().split(",")
                if len(parts) != len(header):
                    raise SchemaError("ragged CSV row")
                pts.append((int(float(parts[xi])), float(parts[vi])))
    except OSError as exc:
        raise ConfigError(f"cannot read {args.input}: {exc}") from None
    fit = estimate_exponent(pts, args.range)
    with _open_out(args) as fh:
        _write_csv(fh, ("slope", "intercept", "stderr", "n_lo", "n_hi",
                        "points"),
                   [(fit.slope, fit.intercept, fit.stderr, fit.n_lo,
                     fit.n_hi, fit.points)])
    return EXIT_OK


# ---------------------------------------------------------------------------
# argument wiring
# ---------------------------------------------------------------------------

def _add_common(p):
    p.add_argument("--config", help="key=value config file; flags override")
    p.add_argument("--out", help="output path (default: stdout)")


def build_parser():
    ap = argparse.ArgumentParser(
        prog="combwalks",
        description="simulate and analyse colliding random walks on combs")
    sub = ap.add_subparsers(dest="command", required=True)

    ps = sub.add_parser("simulate", help="run a pair ensemble to JSONL")
    _add_common(ps)
    ps.add_argument("--graph")
    ps.add_argument("--start")
    ps.add_argument("--steps", type=int)
    ps.add_argument("--replicas", type=int)
    ps.add_argument("--seed", type=int)
    ps.add_argument("--workers", type=int)
    ps.add_argument("--method", choices=("direct", "selfloop"))
    ps.add_argument("--checkpoints", type=_int_list)
    ps.add_argument("--lil-alphas", dest="lil_alphas", type=_float_list)
    ps.add_argument("--spine-stride", dest="spine_stride", type=int)
    ps.add_argument("--truncation-radius", dest="truncation_radius", type=int)
    ps.set_defaults(func=cmd_simulate)

    po = sub.add_parser("oracle", help="exact kernel computations to CSV")
    po.add_argument("which",
                    choices=("return", "meetings", "persite", "identities"))
    _add_common(po)
    po.add_argument("--graph")
    po.add_argument("--nmax", type=int)
    po.add_argument("--every", choices=("even", "all"))
    po.add_argument("--budget", type=int)
    po.set_defaults(func=cmd_oracle)

    pv = sub.add_parser("verify", help="alias for `oracle identities`")
    _add_common(pv)
    pv.add_argument("--budget", type=int)
    pv.set_defaults(func=cmd_oracle, which="identities")

    pt = sub.add_parser("stats", help="reduce JSONL ensembles to CSV")
    _add_common(pt)
    pt.add_argument("--inputs", nargs="+")
    pt.add_argument("--report", choices=("grid", "growth", "lil", "drift"))
    pt.add_argument("--r-range", dest="r_range", type=_span)
    pt.add_argument("--k-range", dest="k_range", type=_span)
    pt.add_argument("--alpha", type=float)
    pt.add_argument("--checkpoints", type=_int_list)
    pt.set_defaults(func=cmd_stats)

    pf = sub.add_parser("fit", help="power-law exponent from a CSV column")
    _add_common(pf)
    pf.add_argument("--input")
    pf.add_argument("--column")
    pf.add_argument("--range", type=_span)
    pf.set_defaults(func=cmd_fit)

    return ap


def main(argv=None):
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:
        # argparse exits 2 on bad flags, 0 on --help; keep its codes
        return int(exc.code or 0)
    try:
        return args.func(args)
    except (ConfigError, GraphError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except BudgetError as exc:
        print(f"budget exceeded: {exc}", file=sys.stderr)
        return EXIT_BUDGET
    except SchemaError as exc:
        print(f"schema mismatch: {exc}", file=sys.stderr)
        return EXIT_SCHEMA
    except (StatsError, OracleError) as exc:
        print(f"degenerate data: {exc}", file=sys.stderr)
        return EXIT_DEGENERATE
    except SimulationError as exc:
        print(f"simulation aborted: {exc}", file=sys.stderr)
        return EXIT_CHECK


if __name__ == "__main__":
    sys.exit(main())
