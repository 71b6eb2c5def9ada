"""Command-line entry point: ``obsfmm <command> ...``.

Exit status is 0 on success, 2 for bad arguments or input files and 3 when a
numerical routine fails (e.g. a covariance that is not positive definite).
"""

import argparse
import contextlib
import csv
import dataclasses
import logging
import sys

from . import covmodel, costmodel, harness, storage, svdfmm
from .boxtree import DEFAULT_LEAF_CAP, build_tree, choose_levels
from .errors import ArgumentError, NumericalError

log = logging.getLogger("obsfmm")

EXIT_OK = 0
EXIT_ARGS = 2
EXIT_NUMERICAL = 3


@contextlib.contextmanager
def _text_out(path):
    if path in (None, "-"):
        yield sys.stdout
    else:
        with open(path, "w", newline="") as fh:
            yield fh


def _text_in(path):
    if path == "-":
        return contextlib.nullcontext(sys.stdin)
    return open(path, newline="")


def _range(text):
    vals = [float(v) for v in text.split(",")]
    if len(vals) != 2:
        raise argparse.ArgumentTypeError(f"expected 'lo,hi', got {text!r}")
    return tuple(vals)


def cmd_grid(args):
    grid = harness.GridSpec(args.lat_range, args.lon_range, args.lat_count, args.lon_count)
    with _text_out(args.output) as fh:
        storage.write_observations(fh, harness.generate_grid(grid))


def _read_obs(path):
    with _text_in(path) as fh:
        return storage.read_observations(fh)


def cmd_build_cov(args):
    obs = _read_obs(args.obs)
    corr = covmodel.CorrelationFunction(args.kind, args.lengthscale)
    C = covmodel.build_correlation(corr, obs)
    model = covmodel.build_covariance(C, args.stddev, corr)
    storage.save_covariance(args.output, model)
    log.info("wrote %dx%d %s covariance to %s", obs.m, obs.m, corr.kind.value, args.output)


def cmd_recondition(args):
    model = storage.load_covariance(args.input)
    if model.inverted:
        raise ArgumentError("cannot recondition an inverse matrix")
    out = covmodel.recondition(model, args.method, args.kappa)
    storage.save_covariance(args.output, out)
    rec = out.recondition
    log.info("%s kappa=%g parameter=%.6g applied=%s", rec.method.value, rec.kappa,
             rec.parameter, rec.applied)


def cmd_invert(args):
    model = storage.load_covariance(args.input)
    if model.inverted:
        raise ArgumentError("matrix is already an inverse")
    A = covmodel.inverse_weighting(model)
    out = covmodel.CovarianceModel(matrix=A, correlation=model.correlation,
                                   recondition=model.recondition, inverted=True)
    storage.save_covariance(args.output, out)


def cmd_plan(args):
    model = storage.load_covariance(args.matrix)
    if not model.inverted:
        log.warning("%s is not flagged as an inverse; planning it as given", args.matrix)
    obs = _read_obs(args.obs)
    if obs.m != model.m:
        raise ArgumentError(f"{obs.m} observations but a {model.m}x{model.m} matrix")
    levels = args.levels or choose_levels(obs.m, args.leaf_cap)
    tree = build_tree(obs, levels, bounds=args.bounds)
    plan = svdfmm.plan_build(model.matrix, tree, args.rank)
    storage.save_plan(args.output, plan)
    if plan.degenerate:
        log.warning("boxes with zero far-field rank: %s", sorted(plan.degenerate))


def cmd_apply(args):
    plan = storage.load_plan(args.plan)
    with _text_in(args.vector) as fh:
        d = storage.read_vector(fh)
    fn = {"full": svdfmm.apply, "near": svdfmm.near_field_apply,
          "far": svdfmm.far_field_apply}[args.part]
    q = fn(plan, d)
    with _text_out(args.output) as fh:
        storage.write_vector(fh, q)


def cmd_cost_model(args):
    params = costmodel.MachineParams(args.ts, args.tw, args.workers, args.rank, args.m)
    schemes = args.scheme or list(costmodel.Scheme)
    with _text_out(args.output) as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(costmodel.CSV_HEADER)
        w.writerows(costmodel.cost_table(params, schemes))


def cmd_experiment(args):
    with open(args.config) as fh:
        sc = harness.parse_scenario_config(fh.read())
    if args.seed is not None:
        sc = dataclasses.replace(sc, seed=args.seed)
    rows = harness.run_scenario(sc)
    with _text_out(args.output) as fh:
        harness.write_results(fh, rows, timings=args.timings)
    failed = [r for r in rows if r.status.startswith("failed")]
    if failed:
        log.warning("%d result rows failed; first: %s", len(failed), failed[0].status)


def cmd_tree(args):
    obs = _read_obs(args.obs)
    levels = args.levels or choose_levels(obs.m, args.leaf_cap)
    tree = build_tree(obs, levels, bounds=args.bounds)
    with _text_out(args.output) as fh:
        fh.write(tree.summary_table())


def _bounds(text):
    vals = [float(v) for v in text.split(",")]
    if len(vals) != 4:
        raise argparse.ArgumentTypeError("bounds are 'lon_min,lon_max,lat_min,lat_max'")
    return tuple(vals)


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=None, help="random seed (where randomness is used)")
    common.add_argument("-v", "--verbose", action="store_true")

    ap = argparse.ArgumentParser(prog="obsfmm", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("grid", parents=[common], help="emit a regular observation grid as CSV")
    p.add_argument("--lat-range", type=_range, default=(54.0, 60.0))
    p.add_argument("--lon-range", type=_range, default=(-6.0, 6.0))
    p.add_argument("--lat-count", type=int, default=48)
    p.add_argument("--lon-count", type=int, default=72)
    p.add_argument("-o", "--output", default="-")
    p.set_defaults(func=cmd_grid)

    p = sub.add_parser("build-cov", parents=[common], help="build R = DCD from a correlation function")
    p.add_argument("--obs", required=True, help="observation CSV")
    p.add_argument("--kind", required=True, choices=[k.value for k in covmodel.CorrelationKind])
    p.add_argument("--lengthscale", type=float, required=True, help="km")
    p.add_argument("--stddev", type=float, default=1.0)
    p.add_argument("-o", "--output", required=True)
    p.set_defaults(func=cmd_build_cov)

    p = sub.add_parser("recondition", parents=[common], help="ridge-regression or minimum-eigenvalue reconditioning")
    p.add_argument("input")
    p.add_argument("--method", required=True, choices=["rr", "me"])
    p.add_argument("--kappa", type=float, required=True)
    p.add_argument("-o", "--output", required=True)
    p.set_defaults(func=cmd_recondition)

    p = sub.add_parser("invert", parents=[common], help="invert a covariance container")
    p.add_argument("input")
    p.add_argument("-o", "--output", required=True)
    p.set_defaults(func=cmd_invert)

    for name, func, helptext in (("plan", cmd_plan, "build an SVD-FMM plan"),
                                 ("tree", cmd_tree, "print the box-tree summary table")):
        p = sub.add_parser(name, parents=[common], help=helptext)
        if name == "plan":
            p.add_argument("--matrix", required=True, help="inverse covariance container")
            p.add_argument("--rank", "-p", type=int, required=True)
        p.add_argument("--obs", required=True, help="observation CSV")
        p.add_argument("--levels", type=int, default=None)
        p.add_argument("--leaf-cap", type=int, default=DEFAULT_LEAF_CAP)
        p.add_argument("--bounds", type=_bounds, default=None)
        p.add_argument("-o", "--output", required=(name == "plan"), default=None if name == "plan" else "-")
        p.set_defaults(func=func)

    p = sub.add_parser("apply", parents=[common], help="apply a plan to a departure vector")
    p.add_argument("plan")
    p.add_argument("vector", help="one value per line, '-' for stdin")
    p.add_argument("--part", choices=["full", "near", "far"], default="full")
    p.add_argument("-o", "--output", default="-")
    p.set_defaults(func=cmd_apply)

    p = sub.add_parser("cost-model", parents=[common], help="communication cost table as CSV")
    p.add_argument("--ts", type=float, required=True, help="startup time per message (s)")
    p.add_argument("--tw", type=float, required=True, help="transfer time per word (s)")
    p.add_argument("--workers", "-B", type=int, default=64)
    p.add_argument("--rank", "-p", type=int, default=10)
    p.add_argument("-m", type=int, default=3456)
    p.add_argument("--scheme", action="append", choices=[s.value for s in costmodel.Scheme])
    p.add_argument("-o", "--output", default="-")
    p.set_defaults(func=cmd_cost_model)

    p = sub.add_parser("experiment", parents=[common], help="run a scenario config, write CSV")
    p.add_argument("config")
    p.add_argument("-o", "--output", default="-")
    p.add_argument("--timings", action="store_true", help="add a wall_time column")
    p.set_defaults(func=cmd_experiment)
    return ap


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(name)s: %(levelname)s: %(message)s")
    try:
        args.func(args)
    except NumericalError as exc:
        print(f"obsfmm: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except (ArgumentError, OSError) as exc:
        print(f"obsfmm: {exc}", file=sys.stderr)
        return EXIT_ARGS
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
