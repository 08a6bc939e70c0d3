"""Command-line front end: validate, analyze, simulate, compare, trajectory, gen.

Chains come either from a JSON spec file or from a named generator
(classical, tstage:T, fig3a:N,T, fig3b:T). All outputs are deterministic
under a fixed seed; JSON is emitted with sorted keys so repeated runs are
byte-identical. Exit codes: 0 success, 1 domain failure, 2 I/O or parse
failure.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import os
import sys
from dataclasses import dataclass

import numpy as np

from . import bounds as bounds_mod
from .chain_model import decompose, load_chain_spec
from .errors import ChainValidationError, FluidhitError
from .examples import get_example
from .fluid import crossing_time, fluid_trajectory
from .simulator import OccupancyState, estimate_hitting_time, simulate_trajectory

_NAMED_PREFIXES = ("classical", "tstage", "fig3a", "fig3b")


@dataclass
class RunConfig:
    command: str
    chain_source: str
    N: int = 100
    runs: int = 1000
    seed: int = 0
    tol: float | None = None
    output_format: str | None = None
    output_path: str | None = None
    n_list: list | None = None
    samples: int = 1
    grid: tuple | None = None
    skip: bool = True
    k_override: int | None = None
    nu_override: float | None = None
    estimate_gamma: bool = False

    def __post_init__(self):
        if self.N < 1:
            raise ValueError("--N must be at least 1")
        if self.runs < 1:
            raise ValueError("--runs must be at least 1")


def _positive_int(text):
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError(f"{text} is not a positive integer")
    return value


def _parse_n_list(text):
    try:
        values = [int(part) for part in text.split(",") if part]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"bad N list {text!r}") from exc
    if not values or any(v < 1 for v in values):
        raise argparse.ArgumentTypeError(f"bad N list {text!r}")
    return values


def _parse_grid(text):
    tmax_str, _, steps_str = text.partition(":")
    try:
        tmax = float(tmax_str)
        steps = int(steps_str) if steps_str else 200
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"bad grid {text!r}, expected tmax:steps") from exc
    if tmax <= 0 or steps < 1:
        raise argparse.ArgumentTypeError(f"bad grid {text!r}")
    return tmax, steps


def build_parser():
    parser = argparse.ArgumentParser(
        prog="fluidhit",
        description="Hitting-time bounds and simulation for populations of "
        "absorbing Markov chains under random scheduling.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for command in ("validate", "analyze", "simulate", "compare", "trajectory", "gen"):
        p = sub.add_parser(command)
        p.add_argument("--chain", required=True, dest="chain_source",
                       help="path to a chain JSON file or a named example "
                            "(classical, tstage:T, fig3a:N,T, fig3b:T)")
        p.add_argument("--N", type=_positive_int, default=100)
        p.add_argument("--runs", type=_positive_int, default=1000)
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--tol", type=float, default=None,
                       help="eigenvalue clustering tolerance override")
        p.add_argument("--format", dest="output_format", choices=("csv", "json"),
                       default=None)
        p.add_argument("--out", dest="output_path", default=None)
        p.add_argument("--N-list", dest="n_list", type=_parse_n_list, default=None)
        p.add_argument("--samples", type=_positive_int, default=1)
        p.add_argument("--grid", type=_parse_grid, default=None,
                       help="trajectory grid as tmax:steps")
        p.add_argument("--no-skip", dest="skip", action="store_false",
                       help="disable the exact geometric skip of absorbed selections")
        p.add_argument("--k-override", dest="k_override", type=int, default=None)
        p.add_argument("--nu-override", dest="nu_override", type=float, default=None)
        p.add_argument("--estimate-gamma", dest="estimate_gamma", action="store_true")
    return parser


def _is_named(source):
    head = source.partition(":")[0]
    return head in _NAMED_PREFIXES and not os.path.exists(source)


def _resolve_chain(cfg: RunConfig):
    """Returns (chain, alpha, example-or-None)."""
    if _is_named(cfg.chain_source):
        example = get_example(cfg.chain_source)
        return example.chain, example.default_alpha, example
    chain, alpha = load_chain_spec(cfg.chain_source)
    return chain, alpha, None


def _check_tied_population(example, N):
    tied = example.params.get("population") if example else None
    if tied is not None and N != tied:
        raise FluidhitError(
            f"{example.name} is generated for N = {tied}; pass --N {tied} "
            f"or regenerate with fig3a:{N},{example.params['T']}"
        )


def _initial_occupancy(example, alpha, N):
    if example is not None:
        return example.initial_occupancy(N)
    return OccupancyState.from_alpha(alpha, N)


def _emit(text, path):
    if path:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _json_dumps(obj):
    return json.dumps(obj, sort_keys=True, indent=2) + "\n"


def cmd_validate(cfg: RunConfig) -> int:
    try:
        chain, _, _ = _resolve_chain(cfg)
    except ChainValidationError as exc:
        print(f"FAIL: {exc}", file=sys.stderr)
        return 1
    print(f"OK: {chain.size} states, absorbing state 0")
    return 0


def _report_for(cfg, chain, alpha, example, N):
    exact = example.exact_mean(N) if example else None
    lower = []
    if example is not None:
        lb = example.lower_bound(N)
        if lb is not None:
            lower.append((example.params["kind"], lb))
    return bounds_mod.assemble_report(
        chain,
        alpha,
        N,
        name=example.name if example else cfg.chain_source,
        exact=exact,
        lower_bounds=lower,
        estimate_gamma=cfg.estimate_gamma,
        cluster_tol=cfg.tol,
        nu_override=cfg.nu_override,
        k_override=cfg.k_override,
    )


def cmd_analyze(cfg: RunConfig) -> int:
    chain, alpha, example = _resolve_chain(cfg)
    _check_tied_population(example, cfg.N)
    report = _report_for(cfg, chain, alpha, example, cfg.N)
    if cfg.output_format == "csv":
        buf = io.StringIO()
        writer = csv.writer(buf)
        writer.writerow(report.CSV_FIELDS)
        writer.writerow(report.to_csv_row())
        _emit(buf.getvalue(), cfg.output_path)
    else:
        _emit(_json_dumps(report.to_json_dict()), cfg.output_path)
    return 0


def cmd_simulate(cfg: RunConfig) -> int:
    chain, alpha, example = _resolve_chain(cfg)
    _check_tied_population(example, cfg.N)
    initial = _initial_occupancy(example, alpha, cfg.N)
    result = estimate_hitting_time(
        chain, initial, cfg.runs, cfg.seed, skip=cfg.skip
    )
    payload = result.to_json_dict()
    exact = example.exact_mean(cfg.N) if example else None
    if exact is not None:
        payload["exact_mean"] = exact
        payload["relative_error"] = result.mean / exact - 1.0
    _emit(_json_dumps(payload), cfg.output_path)
    return 0


COMPARE_HEADER = (
    "name", "N", "runs", "seed", "sim_mean", "sim_stderr", "sim_ci95",
    "exact", "theorem1", "theorem2_asymptotic", "theorem3", "theorem4",
    "lower_bound", "within_bands",
)


def cmd_compare(cfg: RunConfig) -> int:
    n_values = cfg.n_list or [cfg.N]
    rows = []
    violations = []
    for N in n_values:
        source = cfg.chain_source
        chain, alpha, example = _resolve_chain(cfg)
        if example is not None and example.params.get("kind") == "fig3a":
            # The fig3a chain is tied to its population; regenerate per N.
            source = f"fig3a:{N},{example.params['T']}"
            example = get_example(source)
            chain, alpha = example.chain, example.default_alpha
        _check_tied_population(example, N)
        report = _report_for(cfg, chain, alpha, example, N)
        initial = _initial_occupancy(example, alpha, N)
        result = estimate_hitting_time(chain, initial, cfg.runs, cfg.seed, skip=cfg.skip)
        band = 3.0 * (result.stderr or 0.0)
        ok = True
        for _, upper in report.upper_bounds():
            if upper < result.mean - band:
                ok = False
        for lname, lower in report.lower_bounds:
            if lower > result.mean + band:
                ok = False
        if not ok:
            violations.append(N)
        lower_val = max((v for _, v in report.lower_bounds), default=None)
        rows.append([
            report.instance, N, cfg.runs, cfg.seed,
            result.mean, result.stderr, result.ci95,
            report.exact, report.theorem1, report.theorem2_asymptotic,
            report.theorem3, report.theorem4, lower_val, ok,
        ])
    if cfg.output_format == "json":
        payload = [dict(zip(COMPARE_HEADER, row)) for row in rows]
        _emit(_json_dumps(payload), cfg.output_path)
    else:
        buf = io.StringIO()
        writer = csv.writer(buf)
        writer.writerow(COMPARE_HEADER)
        for row in rows:
            writer.writerow(["" if v is None else v for v in row])
        _emit(buf.getvalue(), cfg.output_path)
    if violations:
        print(
            f"bound bands violated at N in {violations}", file=sys.stderr
        )
        return 1
    return 0


def cmd_trajectory(cfg: RunConfig) -> int:
    chain, alpha, example = _resolve_chain(cfg)
    _check_tied_population(example, cfg.N)
    sub = decompose(chain)
    if cfg.grid is not None:
        tmax, steps = cfg.grid
    else:
        tmax = crossing_time(alpha, sub, 1.0 / cfg.N).time + 2.0
        steps = 200
    grid = np.linspace(0.0, tmax, steps + 1)
    fluid = fluid_trajectory(alpha, sub, grid)
    level = 1.0 - 1.0 / cfg.N

    fluid_buf = io.StringIO()
    writer = csv.writer(fluid_buf)
    writer.writerow(("t", "fluid_m0", "level"))
    for t, m0 in zip(fluid.time_grid, fluid.m0_values):
        writer.writerow((t, m0, level))

    sim_buf = io.StringIO()
    writer = csv.writer(sim_buf)
    writer.writerow(("run", "t", "fraction_absorbed"))
    initial = _initial_occupancy(example, alpha, cfg.N)
    for run in range(cfg.samples):
        rng = np.random.default_rng(np.random.SeedSequence((cfg.seed, run)))
        sample = simulate_trajectory(chain, initial, grid, rng, skip=cfg.skip)
        for t, frac in zip(sample.rescaled_times, sample.m0_fractions):
            writer.writerow((run, t, frac))

    if cfg.output_path:
        base = cfg.output_path
        if base.endswith(".csv"):
            base = base[: -len(".csv")]
        _emit(fluid_buf.getvalue(), base + ".fluid.csv")
        _emit(sim_buf.getvalue(), base + ".samples.csv")
    else:
        sys.stdout.write("# fluid\n")
        sys.stdout.write(fluid_buf.getvalue())
        sys.stdout.write("# samples\n")
        sys.stdout.write(sim_buf.getvalue())
    return 0


def cmd_gen(cfg: RunConfig) -> int:
    if not _is_named(cfg.chain_source):
        raise FluidhitError("gen needs a named example (classical, tstage:T, ...)")
    example = get_example(cfg.chain_source)
    chain = example.chain
    n = chain.size
    spec = {"states": n}
    if n <= 64:
        spec["P"] = [[float(v) for v in row] for row in chain.dense()]
    else:
        entries = []
        P = chain.P
        for i in range(n):
            cols, probs = chain.row(i)
            if len(cols):
                entries.append({
                    "row": i,
                    "cols": [int(c) for c in cols],
                    "probs": [float(p) for p in probs],
                })
        spec["P_sparse"] = entries
    spec["alpha"] = [float(a) for a in example.default_alpha.alpha]
    spec["alpha0"] = example.default_alpha.mass0
    _emit(_json_dumps(spec), cfg.output_path)
    return 0


_COMMANDS = {
    "validate": cmd_validate,
    "analyze": cmd_analyze,
    "simulate": cmd_simulate,
    "compare": cmd_compare,
    "trajectory": cmd_trajectory,
    "gen": cmd_gen,
}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = RunConfig(**vars(args))
        return _COMMANDS[cfg.command](cfg)
    except ChainValidationError as exc:
        print(f"FAIL: {exc}", file=sys.stderr)
        return 1
    except FluidhitError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (OSError, json.JSONDecodeError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
