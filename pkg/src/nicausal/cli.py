"""``nicausal`` command line: bivariate | learn | simulate | evaluate.

Results go to stdout or ``--out``; logs go to stderr. Exit codes: 0 success,
2 usage error, 3 data error, 4 infeasible model.
"""

from __future__ import annotations

import argparse
import json
import logging
import math
import sys
from pathlib import Path
from typing import Optional, Sequence

from .bivariate import TestConfig, bivariate_discover
from .data import DataError, Dataset, GraphError, Pdag, format_edgelist, parse_edgelist, read_csv, write_csv
from .metrics import holdout_loglik, score
from .nncl import NNCLReport, Pipeline, consensus
from .piecewise import FitInfeasibleError, PiecewiseFit, QuantileGrid
from .simulate import FAMILIES, SemSpec, assign_nonlinear, builtin_graph, ground_truth, simulate
from .stats import RngStream

log = logging.getLogger("nicausal")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_INFEASIBLE = 0, 2, 3, 4


class UsageError(Exception):
    pass


def _level(s: str) -> float:
    v = float(s)
    if not 0.0 < v < 1.0:
        raise argparse.ArgumentTypeError(f"{s} is not in (0, 1)")
    return v


def _positive(s: str) -> int:
    v = int(s)
    if v < 1:
        raise argparse.ArgumentTypeError(f"{s} is not a positive integer")
    return v


def _fraction(s: str) -> float:
    v = float(s)
    if not 0.0 <= v <= 1.0:
        raise argparse.ArgumentTypeError(f"{s} is not in [0, 1]")
    return v


def _add_test_options(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("direction test")
    g.add_argument("--method", choices=("normal", "bootstrap"), default="normal")
    g.add_argument("-B", type=_positive, default=500, help="bootstrap replicates")
    g.add_argument("-K", type=_positive, default=100_000, help="normal-approximation draws")
    g.add_argument("--grid-m", type=_positive, default=9, help="number of candidate cuts")
    g.add_argument("--grid-lo", type=_level, default=0.30, help="lowest cut quantile")
    g.add_argument("--grid-hi", type=_level, default=0.70, help="highest cut quantile")
    g.add_argument("--min-segment", type=_positive, default=None,
                   help="points required on each side of a cut (default max(10, 5%% of n))")
    g.add_argument("--seed", type=int, default=0)


def _test_config(args) -> TestConfig:
    if args.grid_lo > args.grid_hi or (args.grid_lo == args.grid_hi and args.grid_m > 1):
        raise UsageError("--grid-lo must be below --grid-hi")
    if args.method == "bootstrap" and args.B < 100:
        raise UsageError("bootstrap needs -B >= 100")
    grid = QuantileGrid.uniform(args.grid_m, args.grid_lo, args.grid_hi)
    return TestConfig(args.method, args.B, args.K, grid, args.min_segment, args.seed)


def _emit(text: str, out: Optional[str]) -> None:
    if out:
        Path(out).write_text(text)
    else:
        sys.stdout.write(text)


def _dumps(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True, allow_nan=False) + "\n"


def _num(v: Optional[float]):
    if v is None:
        return None
    return v if math.isfinite(v) else str(v)


def _fit_json(fit: Optional[PiecewiseFit]) -> Optional[dict]:
    if fit is None:
        return None
    return {
        "tau": fit.tau,
        "low": {"intercept": fit.a_l, "slope": fit.b_l, "n": fit.n_l, "r": fit.r_l},
        "high": {"intercept": fit.a_h, "slope": fit.b_h, "n": fit.n_h, "r": fit.r_h},
        "rbar2": fit.rbar2,
        "degenerate": fit.degenerate,
    }


# ---------------------------------------------------------------- bivariate

def cmd_bivariate(args) -> int:
    data = read_csv(args.data)
    if data.p != 2:
        raise DataError(f"bivariate needs exactly two columns, got {data.p}")
    cfg = _test_config(args)
    v = bivariate_discover(data.values[:, 0], data.values[:, 1], args.alpha, cfg,
                           RngStream(args.seed), test_alpha=args.test_alpha)
    names = data.names
    t = v.test
    out = {
        "kind": v.kind,
        "from": names[v.source] if v.kind == "directed" else None,
        "to": names[v.target] if v.kind == "directed" else None,
        "x": names[0],
        "y": names[1],
        "screen_p": v.screen_p,
        "degenerate": v.degenerate,
        "method": cfg.method,
        "eta": _num(t.eta_hat) if t else None,
        "p_value": t.p_value if t else None,
        "preferred": (f"{names[0]}->{names[1]}" if t.x_to_y else f"{names[1]}->{names[0]}") if t else None,
        "replicates": t.replicates if t else None,
        "flags": list(t.flags) if t else [],
        "fits": {
            f"{names[0]}->{names[1]}": _fit_json(t.fit_xy if t else None),
            f"{names[1]}->{names[0]}": _fit_json(t.fit_yx if t else None),
        },
    }
    _emit(_dumps(out), args.out)
    return EXIT_OK


# ---------------------------------------------------------------- learn

def _load_initial(path: str, data: Dataset) -> Pdag:
    g = parse_edgelist(Path(path).read_text(), names=None)
    if g.names is None or set(g.names) != set(data.names):
        g = parse_edgelist(Path(path).read_text(), names=data.names)
    elif g.names != data.names:
        g = _reorder(g, data.names)
    if not g.is_acyclic():
        raise GraphError("initial graph has a directed cycle")
    return g


def _reorder(g: Pdag, names: Sequence[str]) -> Pdag:
    if set(g.names) != set(names):
        raise GraphError("graph nodes do not match the data columns")
    pos = {s: k for k, s in enumerate(names)}
    m = [pos[s] for s in g.names]
    return Pdag(
        g.p,
        frozenset((m[i], m[j]) for i, j in g.directed),
        frozenset((m[i], m[j]) for i, j in g.undirected),
        frozenset((m[i], m[j]) for i, j in g.nonlinear),
        names=tuple(names),
    )


def _edges_json(g: Pdag) -> list[dict]:
    out = []
    for i, j, mark in g.edges():
        out.append({
            "from": g.name(i), "to": g.name(j), "mark": mark,
            "nonlinear": (i, j) in g.nonlinear,
        })
    return out


def cmd_learn(args) -> int:
    data = read_csv(args.data)
    cfg = _test_config(args)
    initial = _load_initial(args.initial_graph, data) if args.initial_graph else None
    if args.consensus is not None and args.consensus < 2:
        raise UsageError("--consensus needs at least 2 replicates")
    pipe = Pipeline(
        learner=args.learner, initial=initial, outside=args.outside_search,
        alpha=args.alpha, ci_alpha=args.ci_alpha, max_cond=args.max_cond,
        test=cfg, workers=args.threads,
    )
    report = NNCLReport()
    g0 = pipe.initial_graph(data)
    g = pipe.run(data, RngStream(args.seed, 0), report, g0).with_names(data.names)
    cons = None
    if args.consensus:
        res = consensus(data, pipe, args.consensus, args.threshold, args.seed, point=g,
                        workers=args.threads)
        log.info("consensus kept %d of %d edges (%d replicates, %d dropped)",
                 res.graph.n_edges, g.n_edges, res.replicates, res.dropped)
        cons = {
            "replicates": res.replicates,
            "dropped": res.dropped,
            "threshold": args.threshold,
            "weights": [[float(w) for w in row] for row in res.weights],
            "point_edges": _edges_json(g),
        }
        g = res.graph.with_names(data.names)

    body = {
        "nodes": list(data.names),
        "config": {
            "learner": "initial-graph" if initial is not None else args.learner,
            "outside_search": args.outside_search,
            "alpha": args.alpha,
            "ci_alpha": args.ci_alpha,
            "max_cond": args.max_cond,
            "method": cfg.method,
            "B": cfg.B,
            "K": cfg.K,
            "grid": list(cfg.grid.probabilities),
            "min_segment": cfg.min_segment,
            "seed": args.seed,
        },
        "initial_edges": _edges_json(g0.with_names(data.names)),
        "edges": _edges_json(g),
        **report.to_json(g),
        "consensus": cons,
    }
    _emit(format_edgelist(g), args.out)
    if args.report:
        Path(args.report).write_text(_dumps(body))
    log.info("learned %d edges (%d directed, %d nonlinear)", g.n_edges,
             len(g.directed), len(g.nonlinear))
    return EXIT_OK


# ---------------------------------------------------------------- simulate

def cmd_simulate(args) -> int:
    if args.sem:
        spec = SemSpec.from_json(json.loads(Path(args.sem).read_text()))
    else:
        try:
            dag = builtin_graph(args.graph)
        except KeyError:
            dag = parse_edgelist(Path(args.graph).read_text())
        if dag.undirected or not dag.is_acyclic():
            raise GraphError("simulation graph must be a DAG")
        spec = assign_nonlinear(dag, args.fraction, RngStream(args.seed, 0), args.families)
        if args.noise_sd != 1.0:
            spec = SemSpec(spec.dag, spec.functions, (args.noise_sd,) * spec.dag.p)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    pre = args.prefix
    names = [spec.dag.name(i) for i in range(spec.dag.p)]
    for r in range(args.replicates):
        tag = f"{pre}{r}" if args.replicates > 1 else pre
        data = simulate(spec, args.n, RngStream(args.seed, 1 + r), names)
        truth = ground_truth(spec, data).with_names(names)
        write_csv(data, out / f"{tag}.csv")
        (out / f"{tag}.truth.txt").write_text(format_edgelist(truth))
    (out / f"{pre}.sem.json").write_text(spec.dumps() + "\n")
    (out / f"{pre}.dag.txt").write_text(format_edgelist(spec.dag.with_names(names)))
    log.info("wrote %d dataset(s) to %s", args.replicates, out)
    return EXIT_OK


# ---------------------------------------------------------------- evaluate

def _read_graph(path: str) -> Pdag:
    # without a '# nodes:' header isolated nodes are lost and _reorder rejects the graph
    return parse_edgelist(Path(path).read_text())


def cmd_evaluate(args) -> int:
    est = _read_graph(args.estimate)
    truth = _read_graph(args.truth)
    est = _reorder(est, truth.names)
    out = score(est, truth).to_json()
    if bool(args.train) != bool(args.test):
        raise UsageError("--train and --test go together")
    if args.train:
        train, test = read_csv(args.train), read_csv(args.test)
        g = _reorder(est, train.names)
        try:
            out["holdout_loglik"] = holdout_loglik(g, train, test)
        except GraphError as exc:
            raise FitInfeasibleError(str(exc)) from exc
    _emit(_dumps(out), args.out)
    return EXIT_OK


# ---------------------------------------------------------------- parser

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="nicausal", description=__doc__.splitlines()[0])
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("-v", "--verbose", action="count", default=0,
                        help="more logging on stderr")
    sub = p.add_subparsers(dest="command", required=True)

    b = sub.add_parser("bivariate", parents=[common], help="direction verdict for a two-column CSV")
    b.add_argument("data")
    b.add_argument("--alpha", type=_level, default=0.01, help="screen and test level")
    b.add_argument("--test-alpha", type=_level, default=None,
                   help="direction-test level (defaults to --alpha)")
    b.add_argument("--out")
    _add_test_options(b)
    b.set_defaults(func=cmd_bivariate)

    ln = sub.add_parser("learn", parents=[common], help="learn a restricted CPDAG from a CSV")
    ln.add_argument("data")
    ln.add_argument("--learner", choices=("pc", "none"), default="pc")
    ln.add_argument("--initial-graph", help="edge-list file used instead of the learner")
    ln.add_argument("--outside-search", action=argparse.BooleanOptionalAction, default=True)
    ln.add_argument("--alpha", type=_level, default=0.01, help="direction-test level")
    ln.add_argument("--ci-alpha", type=_level, default=0.01, help="CI-test level (PC and segmented)")
    ln.add_argument("--max-cond", type=int, default=3)
    ln.add_argument("--consensus", type=int, default=None, metavar="R",
                    help="bootstrap replicates for the consensus graph")
    ln.add_argument("--threshold", type=_level, default=0.6)
    ln.add_argument("--threads", type=_positive, default=1)
    ln.add_argument("--out", help="edge-list output (default stdout)")
    ln.add_argument("--report", help="JSON report path")
    _add_test_options(ln)
    ln.set_defaults(func=cmd_learn)

    s = sub.add_parser("simulate", parents=[common], help="simulate data from a DAG with nonlinear edges")
    s.add_argument("--graph", default="asia", help="built-in graph name or DAG edge-list file")
    s.add_argument("--sem", help="SEM JSON written by an earlier run (overrides --graph)")
    s.add_argument("--fraction", type=_fraction, default=0.0)
    s.add_argument("--families", nargs="+", choices=FAMILIES[1:], default=["typeI"])
    s.add_argument("--noise-sd", type=float, default=1.0)
    s.add_argument("-n", type=_positive, default=1000)
    s.add_argument("--replicates", type=_positive, default=1)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out-dir", required=True)
    s.add_argument("--prefix", default="sim")
    s.set_defaults(func=cmd_simulate)

    e = sub.add_parser("evaluate", parents=[common], help="compare an estimate with the truth")
    e.add_argument("estimate")
    e.add_argument("truth")
    e.add_argument("--train")
    e.add_argument("--test")
    e.add_argument("--out")
    e.set_defaults(func=cmd_evaluate)
    return p


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(
        stream=sys.stderr,
        level=logging.WARNING - 10 * min(args.verbose, 2),
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        if getattr(args, "max_cond", 0) < 0:
            raise UsageError("--max-cond must be non-negative")
        return args.func(args)
    except UsageError as exc:
        print(f"nicausal: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except FitInfeasibleError as exc:
        print(f"nicausal: infeasible model: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except (DataError, GraphError, OSError, json.JSONDecodeError, KeyError) as exc:
        print(f"nicausal: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except ValueError as exc:
        print(f"nicausal: error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
