"""Command-line interface: discover, gen, snr-curve, ztest-calibrate."""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import numpy as np

from . import export
from .config import ConfigError, RunConfig, apply_preset, from_mapping, load_config, prepare_dataset
from .data import DataError, write_csv
from .discovery import DiscoveryError, discover_graph, inflection_q, sweep, threshold_q
from .kernels import KernelError
from .regression import RegressionError
from .simulators import ChemConfig, FputConfig, SimulationError, gen_algebraic, gen_chemistry, gen_fput
from .spectral import SpectralError
from .ztest import ZTestError, calibrate

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3

log = logging.getLogger("hyperdisc")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _csv_list(s: str) -> list[str]:
    return [p.strip() for p in s.split(",") if p.strip()]


def _global_flags(suppress: bool) -> argparse.ArgumentParser:
    # on subcommands the defaults are suppressed so they do not mask values
    # given before the subcommand name
    kw = {"default": argparse.SUPPRESS} if suppress else {}
    g = _Parser(add_help=False)
    g.add_argument("--config", help="flat YAML run configuration", **kw)
    g.add_argument("--seed", type=int, **kw)
    g.add_argument("--threads", type=int, **kw)
    g.add_argument("--out", help="output directory", **kw)
    g.add_argument("-v", "--verbose", action="store_true", **kw)
    return g


def build_parser() -> argparse.ArgumentParser:
    common = _global_flags(suppress=True)
    p = _Parser(prog="hyperdisc", description=__doc__, parents=[_global_flags(suppress=False)])
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    search = _Parser(add_help=False)
    search.add_argument("dataset", nargs="?", help="CSV file with a header row")
    search.add_argument("--preset", choices=["algebraic", "chemistry", "fput"])
    search.add_argument("--algorithm", choices=["threshold", "inflection"])
    search.add_argument("--strategy", dest="pruning_strategy", choices=["min_activation", "min_ratio_increase"])
    search.add_argument("--tau", type=float)
    search.add_argument("--ladder", type=_csv_list, help="e.g. linear,quadratic,nonlinear")
    search.add_argument("--betas", type=lambda s: [float(v) for v in _csv_list(s)])
    search.add_argument("--base", choices=["gaussian", "matern52"])
    search.add_argument("--lengthscale", type=float)
    search.add_argument("--gamma-recompute", dest="gamma_recompute", choices=["nonlinear_only", "always"])
    search.add_argument("--epsilon", dest="kpca_epsilon", type=float)
    search.add_argument("--no-normalize", dest="normalize", action="store_const", const=False)
    search.add_argument("--no-ztest", dest="ztest", action="store_const", const=False)
    search.add_argument("--ztest-samples", dest="ztest_samples", type=int)
    search.add_argument("--force-q", dest="force_q", action="append", metavar="NODE=Q")
    search.add_argument("--forbid", dest="forbidden", action="append", metavar="A->B")
    search.add_argument("--cluster", dest="clusters", action="append", type=_csv_list, metavar="A,B,...")
    search.add_argument("--role", dest="roles", action="append", metavar="NAME=ROLE")
    search.add_argument("--role-rule", dest="role_rules", action="append", metavar="TARGET_ROLE<-ANCESTOR_ROLE")
    search.add_argument("--source", dest="sources", action="append", metavar="NAME")
    search.add_argument("--derive", dest="derived", action="append", metavar="SOURCE:TRANSFORM")

    sub.add_parser("discover", parents=[common, search], help="recover the hypergraph of a dataset")
    snr = sub.add_parser("snr-curve", parents=[common, search], help="pruning trace for one node")
    snr.add_argument("--node", required=True)
    snr.add_argument("--plot", action="store_true", help="print a text sparkline of the curve")

    gen = sub.add_parser("gen", parents=[common], help="generate a benchmark dataset")
    gsub = gen.add_subparsers(dest="generator", required=True, parser_class=_Parser)
    ga = gsub.add_parser("algebraic", parents=[common])
    ga.add_argument("--example", choices=["a", "b", "c", "d"], default="a")
    ga.add_argument("--n", type=int, default=1000)
    gf = gsub.add_parser("fput", parents=[common])
    gf.add_argument("--alpha", choices=["zero", "square"], default="zero")
    gf.add_argument("--masses", type=int, default=10)
    gf.add_argument("--snapshots", type=int, default=1000)
    gf.add_argument("--trajectories", type=int, default=100)
    gc = gsub.add_parser("chem", parents=[common])
    gc.add_argument("--trajectories", type=int, default=50)
    gc.add_argument("--times", type=int, default=50)
    gc.add_argument("--t-final", type=float, default=5.0)
    for g in (ga, gf, gc):
        g.add_argument("-o", "--output", help="CSV path (default: <out>/<generator>.csv)")

    zc = sub.add_parser("ztest-calibrate", parents=[common], help="Z-test calibration under pure noise")
    zc.add_argument("--n", type=int, default=200)
    zc.add_argument("--dims", type=int, default=2)
    zc.add_argument("--trials", type=int, default=1000)
    zc.add_argument("--draws", type=int, default=1000)
    zc.add_argument("--kind", choices=["linear", "quadratic", "nonlinear"], default="nonlinear")
    return p


def _pairs(items, key) -> dict:
    out = {}
    for it in items or ():
        if "=" not in it:
            raise UsageError(f"--{key} expects NAME=VALUE, got {it!r}")
        k, v = it.split("=", 1)
        out[k.strip()] = v.strip()
    return out


_SEARCH_KEYS = ("preset", "algorithm", "pruning_strategy", "tau", "ladder", "betas", "base", "lengthscale",
                "gamma_recompute", "kpca_epsilon", "normalize", "ztest", "ztest_samples", "forbidden",
                "clusters", "role_rules", "sources", "derived")


def run_config(args) -> tuple[RunConfig, set[str]]:
    """Config file, then flags; returns the config and the keys set explicitly."""
    cfg = load_config(args.config) if args.config else RunConfig()
    explicit: set[str] = set()
    if args.config:
        import yaml

        explicit |= set((yaml.safe_load(Path(args.config).read_text()) or {}).keys())
    flags = {}
    for k in ("seed", "threads", "out"):
        if getattr(args, k, None) is not None:
            flags[k] = getattr(args, k)
    for k in _SEARCH_KEYS:
        v = getattr(args, k, None)
        if v is not None:
            flags[k] = v
    if getattr(args, "dataset", None):
        flags["dataset"] = args.dataset
    if getattr(args, "force_q", None):
        try:
            flags["force_q"] = {k: int(v) for k, v in _pairs(args.force_q, "force-q").items()}
        except ValueError as exc:
            raise UsageError(f"--force-q needs an integer: {exc}") from exc
    if getattr(args, "roles", None):
        flags["roles"] = _pairs(args.roles, "role")
    explicit |= set(flags)
    return from_mapping(flags, cfg), explicit


def _load(cfg: RunConfig, explicit: set[str]):
    from .data import load_csv

    if not cfg.dataset:
        raise UsageError("no dataset given (positional argument or 'dataset' config key)")
    raw = load_csv(cfg.dataset)
    cfg = apply_preset(cfg, raw.names, explicit)
    return cfg, prepare_dataset(cfg, raw)


def cmd_discover(args) -> int:
    cfg, explicit = run_config(args)
    cfg, ds = _load(cfg, explicit)
    result = discover_graph(ds, cfg.to_discovery())
    paths = export.write_all(result, cfg.out, cfg.echo())
    for e in result.edges:
        print(f"{e.target} <- {{{', '.join(e.ancestors)}}}  [{e.kernel}, n2s={e.n2s:.3f}]")
    if not result.edges:
        print("no edges recovered")
    log.info("wrote %d files to %s", len(paths), cfg.out)
    return EXIT_OK


def cmd_snr_curve(args) -> int:
    cfg, explicit = run_config(args)
    cfg, ds = _load(cfg, explicit)
    dcfg = cfg.to_discovery()
    if args.node not in ds.names:
        raise DataError(f"unknown node {args.node!r}")
    trace = sweep(args.node, ds, dcfg)
    if trace.kernel is None:
        # no class clears tau; show the curve for the most expressive class anyway
        print(f"no kernel class reaches signal-to-noise {dcfg.tau}; using {dcfg.ladder[-1]}")
        trace = sweep(args.node, ds, dcfg, kind=dcfg.ladder[-1])
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    path = out / f"{export.safe_filename(args.node)}_trace.csv"
    export.write_trace_csv(trace, path)
    if trace.q:
        q_star = dcfg.force_q.get(args.node) or (
            threshold_q(trace, dcfg.tau) if dcfg.algorithm == "threshold" else inflection_q(trace)
        )
        print(f"{args.node}: kernel={trace.kernel} q*={q_star} removal order: {', '.join(trace.removal_order)}")
        if args.plot:
            print("n2s  (q = {} .. 0): {}".format(trace.q[0], export.sparkline(trace.n2s)))
            jumps = [abs(j) for j in trace.jumps()]
            print("jump (q = {} .. 0): {}".format(trace.q[0], export.sparkline(jumps)))
    print(f"trace written to {path}")
    return EXIT_OK


def cmd_gen(args) -> int:
    seed = args.seed if args.seed is not None else 0
    if args.generator == "algebraic":
        ds = gen_algebraic(args.example, args.n, seed)
        default = f"algebraic_{args.example}.csv"
    elif args.generator == "fput":
        ds = gen_fput(FputConfig(n_masses=args.masses, alpha_kind=args.alpha, n_snapshots=args.snapshots,
                                 n_trajectories=args.trajectories, seed=seed))
        default = f"fput_{args.alpha}.csv"
    else:
        ds = gen_chemistry(ChemConfig(n_trajectories=args.trajectories, n_times=args.times,
                                      t_final=args.t_final, seed=seed))
        default = "chem.csv"
    path = Path(args.output) if args.output else Path(args.out or "out") / default
    path.parent.mkdir(parents=True, exist_ok=True)
    write_csv(ds, path)
    print(f"wrote {ds.n_samples} x {ds.n_columns} to {path}")
    return EXIT_OK


def cmd_ztest_calibrate(args) -> int:
    seed = args.seed if args.seed is not None else 0
    cal = calibrate(args.n, args.dims, args.trials, args.draws, seed, args.kind)
    q = cal.stats.quantiles
    print(f"gamma = {cal.gamma:.4g}; null mean {cal.stats.mean:.4f}, sd {np.sqrt(cal.stats.variance):.4f}")
    print("quantiles: " + ", ".join(f"b{a:g}={v:.4f}" for a, v in q.items()))
    print(f"P[n2s < b0.05] = {cal.fraction_below(0.05):.3f}   (nominal 0.05)")
    print(f"P[n2s < b0.5]  = {cal.fraction_below(0.5):.3f}   (nominal 0.5)")
    print(f"P[b0.05 <= n2s <= b0.95] = {cal.fraction_inside():.3f}   (nominal 0.9)")
    return EXIT_OK


COMMANDS = {"discover": cmd_discover, "snr-curve": cmd_snr_curve, "gen": cmd_gen,
            "ztest-calibrate": cmd_ztest_calibrate}


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        return COMMANDS[args.command](args)
    except (UsageError, ConfigError) as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (SpectralError, RegressionError, SimulationError, ZTestError, ArithmeticError,
            np.linalg.LinAlgError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (DataError, DiscoveryError, KernelError, OSError, ValueError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
