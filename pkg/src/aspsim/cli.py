"""Command-line front end.

    aspsim [--config FILE] [--seed U64] [--out PATH] [--format csv|json] [--threads K] [-v] COMMAND

Exit codes: 0 success, 1 validation failure, 2 configuration error, 3 numeric error.
"""

import argparse
import contextlib
import csv
import logging
import math
import sys
from typing import Optional

import numpy as np

from aspsim import __version__
from aspsim.config import RunConfig
from aspsim.copula import EmpiricalSample, asp_terminal_copula, copula_eval, empirical_copula, write_copula_csv
from aspsim.genlaw import (
    ConditionalNormLaw,
    GeneratingLaw,
    generator_from_dict,
    marginal_survival,
    survival_generator,
    williamson_inverse,
)
from aspsim.procs import (
    TimeGrid,
    asp_transition_density,
    conditional_moments,
    grb_transition_density,
    norm_transition_density,
    sample_split,
    simulate,
    write_paths_csv,
    write_paths_json,
)
from aspsim.util import AspError, ConfigError, DomainError, NumericError, UnsupportedOperationError, fmt_real
from aspsim.validate import SUITES, ValidationEngine, asp_density_mass_2d

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_VALIDATION = 1
EXIT_CONFIG = 2
EXIT_NUMERIC = 3


@contextlib.contextmanager
def _sink(path: Optional[str]):
    if path is None:
        yield sys.stdout
    else:
        with open(path, "w", newline="") as f:
            yield f


def _number(block: dict, key: str, config: RunConfig, default=None) -> float:
    value = block.get(key, default)
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise config.error("'{}' must be a number".format(key), key)
    return float(value)


def _points(block: dict, key: str, config: RunConfig) -> np.ndarray:
    """A list of numbers or {"start", "stop", "num"}."""
    value = block.get(key)
    if isinstance(value, dict):
        try:
            return np.linspace(float(value["start"]), float(value["stop"]), int(value.get("num", 11)))
        except (KeyError, TypeError, ValueError) as e:
            raise config.error("'{}' needs start, stop and num".format(key), key) from e
    try:
        arr = np.asarray(value, dtype=float)
    except (TypeError, ValueError) as e:
        raise config.error("'{}' must be numeric".format(key), key) from e
    if value is None or arr.size == 0:
        raise config.error("'{}' is required".format(key), key)
    return arr


def cmd_sample(config: RunConfig, args: argparse.Namespace) -> int:
    spec = config.require_process()
    paths = simulate(
        sample_split,
        spec,
        config.grid,
        n_paths=config.paths,
        seed=config.seed,
        threads=config.threads,
        progress=config.progress,
    )
    out = config.output
    if out.format == "json":
        written = write_paths_json(paths, out.path or "paths.json")
    else:
        default = "paths.csv" if out.layout == "long" else "paths"
        written = write_paths_csv(paths, out.path or default, layout=out.layout)
    print(
        "paths={} steps={} terminal_norm_mean={} files={}".format(
            paths.n_paths, config.grid.steps, fmt_real(float(paths.norm[:, -1].mean())), len(written)
        )
    )
    return EXIT_OK


def cmd_density(config: RunConfig, args: argparse.Namespace) -> int:
    spec = config.require_process()
    block = config.block("density")
    kind = block.get("kind", "asp")
    s = _number(block, "s", config, 0.0)
    t = _number(block, "t", config)
    queries = block.get("queries")
    if not isinstance(queries, list) or not queries:
        raise config.error("'queries' must be a non-empty list", "queries")

    if kind == "asp":
        x = np.asarray(block.get("x", [0.0] * spec.dim), dtype=float)
        header = ["y_{}".format(i + 1) for i in range(spec.dim)]
        evaluate = lambda y: asp_transition_density(spec, s, x, t, y)
    elif kind in ("norm", "grb"):
        x = _number(block, "x", config, 0.0)
        header = ["y"]
        if kind == "norm":
            evaluate = lambda y: norm_transition_density(spec, s, x, t, float(np.ravel(y)[0]))
        else:
            m = _number(block, "m", config, 1.0)
            T_end = _number(block, "T_end", config, 1.0)
            evaluate = lambda y: grb_transition_density(spec.law, m, T_end, s, x, t, float(np.ravel(y)[0]))
    else:
        raise config.error("density kind must be 'asp', 'norm' or 'grb'", "kind")

    failed = 0
    rows = []
    for q in queries:
        y = np.atleast_1d(np.asarray(q, dtype=float))
        try:
            value = evaluate(y)
            log_value = math.log(value) if value > 0.0 else -math.inf
        except (DomainError, UnsupportedOperationError) as e:
            logger.debug("query %s failed: %s", y, e)
            failed += 1
            value = log_value = math.nan
        rows.append([fmt_real(v) for v in y] + [fmt_real(log_value), fmt_real(value)])
    if failed:
        logger.warning("%d of %d density queries were unreachable and reported as NaN", failed, len(rows))
    with _sink(config.output.path) as f:
        w = csv.writer(f)
        w.writerow(header + ["log_density", "density"])
        w.writerows(rows)
    if failed == len(rows):
        return EXIT_NUMERIC

    if args.check_mass or block.get("check_mass", False):
        if kind == "asp":
            if spec.dim == 2 and spec.law.atoms() is not None and len(spec.law.atoms()[0]) == 1:
                mass = asp_density_mass_2d(spec, s, x, t)
            else:
                mass = ConditionalNormLaw(spec.law, spec.total_activity, s, t, float(np.sum(x))).total_mass()
        elif kind == "norm":
            mass = ConditionalNormLaw(spec.law, spec.total_activity, s, t, x).total_mass()
        else:
            mass = ConditionalNormLaw(spec.law, m * T_end, s / T_end, t / T_end, x).total_mass()
        print("mass={}".format(fmt_real(mass)))
    return EXIT_OK


def cmd_moments(config: RunConfig, args: argparse.Namespace) -> int:
    spec = config.require_process()
    block = config.block("moments")
    s = _number(block, "s", config, 0.0)
    x = np.asarray(block.get("x", [0.0] * spec.dim), dtype=float)
    times = np.atleast_1d(_points(block, "t", config))
    with _sink(config.output.path) as f:
        w = csv.writer(f)
        w.writerow(["t", "i", "mean", "var"] + ["cov_{}".format(j + 1) for j in range(spec.dim)])
        for t in times:
            mom = conditional_moments(spec, s, x, float(t))
            for i in range(spec.dim):
                w.writerow(
                    [fmt_real(t), i + 1, fmt_real(mom.mean[i]), fmt_real(mom.var[i])]
                    + [fmt_real(v) for v in mom.cov[i]]
                )
    return EXIT_OK


def cmd_copula(config: RunConfig, args: argparse.Namespace) -> int:
    block = config.block("copula")
    grid = np.atleast_2d(_points(block, "u", config))
    if "generator" in block:
        gen = generator_from_dict(block["generator"])
        values = np.array([copula_eval(gen, u) for u in grid])
    else:
        spec = config.require_process()
        values = np.array([asp_terminal_copula(spec, u) for u in grid])
        if block.get("empirical", False):
            paths = simulate(
                sample_split, spec, TimeGrid.uniform(1), n_paths=config.paths, seed=config.seed, threads=config.threads
            )
            est = empirical_copula(EmpiricalSample(paths.values[:, -1, :]), grid)
            print("max_abs_diff_empirical={}".format(fmt_real(float(np.max(np.abs(est - values))))))
    write_copula_csv(config.output.path or "copula.csv", grid, values)
    return EXIT_OK


def cmd_validate(config: RunConfig, args: argparse.Namespace) -> int:
    block = config.block("validate")
    suites = args.suite or block.get("suites") or list(SUITES)
    for name in suites:
        if name not in SUITES:
            raise config.error("unknown suite {!r}; known suites: {}".format(name, ", ".join(SUITES)), "suites")
    try:
        engine = ValidationEngine(
            seed=config.seed,
            scale=float(block.get("scale", 1.0)),
            threads=config.threads,
            tolerances=block.get("tolerances"),
            progress=config.progress,
        )
    except DomainError as e:
        raise config.error(str(e), "tolerances") from e
    results = engine.run(suites, ignore_error=True, show_details=args.verbose > 0)
    target = block.get("report") or config.output.path or "validation_report.json"
    ValidationEngine.write_report(results, target)
    for r in results:
        print("{:<22s} {}".format(r.suite, "pass" if r.passed else "FAIL"))
    return EXIT_OK if all(r.passed for r in results) else EXIT_VALIDATION


def cmd_transform(config: RunConfig, args: argparse.Namespace) -> int:
    block = config.block("transform")
    direction = block.get("direction", "nu-to-h")
    xs = _points(block, "x", config)
    n = block.get("n", config.process.dim if config.process else None)
    if not isinstance(n, int) or n < 2:
        raise config.error("'n' must be an integer >= 2", "n")
    if direction == "nu-to-h":
        law = GeneratingLaw.from_dict(block["law"]) if "law" in block else config.require_process().law
        values = marginal_survival(law, n, xs)
        if args.roundtrip:
            back = williamson_inverse(survival_generator(law, n), n)
            atoms = law.atoms()
            keep = xs if atoms is None else xs[~np.isin(xs, atoms[0])]
            err = max((abs(back.cdf(float(v)) - law.cdf(float(v))) for v in keep), default=0.0)
    elif direction == "h-to-nu":
        if "generator" not in block:
            raise config.error("'generator' is required for h-to-nu", "transform")
        gen = generator_from_dict(block["generator"])
        law = williamson_inverse(gen, n)
        values = law.cdf(xs)
        if args.roundtrip:
            err = max(abs(marginal_survival(law, n, float(v)) - gen(float(v))) for v in xs)
    else:
        raise config.error("direction must be 'nu-to-h' or 'h-to-nu'", "direction")
    with _sink(config.output.path) as f:
        w = csv.writer(f)
        w.writerow(["x", "value"])
        for v, h in zip(np.ravel(xs), np.ravel(values)):
            w.writerow([fmt_real(v), fmt_real(h)])
    if args.roundtrip:
        print("roundtrip sup_error={}".format(fmt_real(err)))
        return EXIT_OK if err <= 1e-6 else EXIT_VALIDATION
    return EXIT_OK


COMMANDS = {
    "sample": cmd_sample,
    "density": cmd_density,
    "moments": cmd_moments,
    "copula": cmd_copula,
    "validate": cmd_validate,
    "transform": cmd_transform,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="aspsim", description="Archimedean survival process toolkit")
    parser.add_argument("--version", action="version", version=__version__)
    parser.add_argument("--config", help="JSON run configuration")
    parser.add_argument("--seed", type=int, help="master seed (unsigned 64-bit)")
    parser.add_argument("--out", help="output path")
    parser.add_argument("--format", choices=("csv", "json"), help="output format")
    parser.add_argument("--threads", type=int, help="worker threads")
    parser.add_argument("-v", "--verbose", action="count", default=0, help="-v for INFO, -vv for DEBUG")
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("sample", help="sample paths")
    density = sub.add_parser("density", help="evaluate transition densities")
    density.add_argument("--check-mass", action="store_true", help="report the quadrature mass")
    sub.add_parser("moments", help="conditional moments")
    sub.add_parser("copula", help="evaluate copulas on a u-grid")
    validate = sub.add_parser("validate", help="run validation suites")
    validate.add_argument("--suite", action="append", help="suite name (repeatable)")
    transform = sub.add_parser("transform", help="Williamson transform in either direction")
    transform.add_argument("--roundtrip", action="store_true", help="report the round-trip sup-error")
    return parser


def main(argv: Optional[list] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return EXIT_OK if e.code == 0 else EXIT_CONFIG
    level = logging.WARNING if args.verbose == 0 else logging.INFO if args.verbose == 1 else logging.DEBUG
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")

    try:
        config = RunConfig.from_json(args.config) if args.config else RunConfig()
        config = config.with_overrides(seed=args.seed, out=args.out, fmt=args.format, threads=args.threads)
        return COMMANDS[args.command](config, args)
    except ConfigError as e:
        print(e.anchored(), file=sys.stderr)
        return EXIT_CONFIG
    except NumericError as e:
        print("numeric error: {}".format(e), file=sys.stderr)
        logger.debug("diagnostics: %s", e.diagnostics)
        return EXIT_NUMERIC
    except AspError as e:
        print("error: {}".format(e), file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
