"""Command line interface.

Exit codes: 0 on success (and, for experiments, all targets passing),
1 on usage errors, 2 when a guard refuses a run or an experiment fails.
The default seed can be set with the ``BISAMPLE_SEED`` environment variable.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import os
import sys
from collections import Counter
from pathlib import Path

import numpy as np

from . import interval_analytics as ia
from .distributions import ModelParams
from .esf import ENUMERATION_CAP, conditioned_poisson_esf_check, esf_law, sample_crp
from .montecarlo import SCHEMA_VERSION, ExperimentConfig, fisher_experiment, gap_experiment, load_config, run_experiment
from .simulator import EMBEDDING_CAP, SimulationGuardError, conditioned_embedding_check
from .stats import chi_square_gof

SEED_ENV = "BISAMPLE_SEED"


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _float_list(text):
    try:
        return tuple(float(v) for v in text.split(",") if v.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}")


def _int_list(text):
    try:
        return tuple(int(v) for v in text.split(",") if v.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}")


def _round(obj, digits):
    if isinstance(obj, float):
        return float(f"{obj:.{digits}g}") if math.isfinite(obj) else None
    if isinstance(obj, dict):
        return {k: _round(v, digits) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_round(v, digits) for v in obj]
    if isinstance(obj, np.ndarray):
        return _round(obj.tolist(), digits)
    if isinstance(obj, np.generic):
        return _round(obj.item(), digits)
    return obj


def _flatten(obj, prefix=""):
    if isinstance(obj, dict):
        for k, v in obj.items():
            yield from _flatten(v, f"{prefix}.{k}" if prefix else str(k))
    elif isinstance(obj, list) and any(isinstance(v, (dict, list)) for v in obj):
        for i, v in enumerate(obj, start=1):
            yield from _flatten(v, f"{prefix}[{i}]")
    elif isinstance(obj, list):
        yield prefix, ",".join("" if v is None else str(v) for v in obj)
    else:
        yield prefix, obj


def _render(payload: dict, fmt: str) -> str:
    if fmt == "json":
        return json.dumps(payload, indent=2) + "\n"
    rows = list(_flatten(payload))
    if fmt == "csv":
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["key", "value"])
        writer.writerows(rows)
        return buf.getvalue()
    width = max((len(k) for k, _ in rows), default=0)
    return "".join(f"{k:<{width}}  {v}\n" for k, v in rows)


def _render_report(report, args) -> str:
    payload = _round(report.to_dict(include_timing=args.include_timing), args.precision)
    if args.format == "csv":
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["name", "exact", "empirical", "stderr", "z", "passed", "diagnostic"])
        for r in payload["targets"]:
            writer.writerow([r["name"], r["exact"], r["empirical"], r["stderr"], r["z"], r["passed"], r["diagnostic"]])
        return buf.getvalue()
    if args.format == "table":
        lines = [f"{'target':<18} {'exact':>12} {'empirical':>12} {'stderr':>10} {'z':>8}  pass"]
        for r in payload["targets"]:
            mark = "yes" if r["passed"] else ("(diag)" if r["diagnostic"] else "NO")
            lines.append(
                f"{r['name']:<18} {r['exact']!s:>12} {r['empirical']!s:>12} {r['stderr']!s:>10} {r['z']!s:>8}  {mark}"
            )
        for k, v in _flatten(payload["extras"]):
            lines.append(f"{k}: {v}")
        lines.append(f"all_passed: {payload['all_passed']}")
        return "\n".join(lines) + "\n"
    return json.dumps(payload, indent=2) + "\n"


def _emit(text: str, output):
    if output:
        Path(output).write_text(text)
    else:
        sys.stdout.write(text)


def _default_seed() -> int:
    raw = os.environ.get(SEED_ENV)
    if raw is None:
        return 0
    try:
        return int(raw)
    except ValueError:
        raise UsageError(f"{SEED_ENV}={raw!r} is not an integer")


def _config_defaults(args) -> dict:
    if not getattr(args, "config", None):
        return {}
    cfg = load_config(args.config)
    values = {
        "theta": cfg.theta,
        "cuts": cfg.cuts,
        "gamma": cfg.gamma,
        "p": cfg.p,
        "sizes": cfg.sizes,
        "replicates": cfg.replicates,
        "seed": cfg.master_seed,
        "targets": cfg.targets,
        "sigma": cfg.sigma,
        "workers": cfg.workers,
        "max_expected_events": cfg.max_expected_events,
    }
    return values


def _merge_config(args):
    """Flags given on the command line win over the config file."""
    cfg = _config_defaults(args)
    grid_flags = ("cuts", "gamma", "p", "sizes")
    if any(getattr(args, k, None) is not None for k in grid_flags):
        for k in grid_flags:
            cfg.pop(k, None)
    for key, value in cfg.items():
        if hasattr(args, key) and getattr(args, key) is None:
            setattr(args, key, value)


def _grid_design(args) -> str:
    given = [args.cuts is not None, args.gamma is not None or args.p is not None, args.sizes is not None]
    if sum(given) != 1:
        raise UsageError("specify exactly one grid: --cuts, --gamma with --p, or --sizes")
    if given[1] and (args.gamma is None or args.p is None):
        raise UsageError("--gamma and --p must be given together")
    return ("cuts", "log_equal", "fisher")[given.index(True)]


def _theta(args) -> ModelParams:
    if args.theta is None:
        raise UsageError("--theta is required")
    return ModelParams(args.theta)


def cmd_exact(args) -> int:
    params = _theta(args)
    design = _grid_design(args)
    payload = {"schema_version": SCHEMA_VERSION, "kind": "exact", "theta": params.theta, "design": design}
    if design == "cuts":
        grid = ia.TimeGrid(args.cuts)
    elif design == "log_equal":
        grid = ia.log_equal_grid(args.gamma, args.p)
    else:
        sizes = ia.SampleSizes(args.sizes)
        grid = ia.fisher_grid(params, sizes)
    means, cov = ia.grid_moments(params, grid)
    payload["cuts"] = list(grid.cuts)
    payload["mean_S"] = means.tolist()
    payload["cov_S"] = cov.tolist()
    if grid.p >= 2:
        payload["EV"] = ia.expected_sample_variance(params, grid)
    if design == "log_equal":
        payload["correlation"] = ia.log_equal_correlation(args.gamma)
        payload["theta_S_variance"] = ia.theta_s_variance(params, args.gamma, args.p)
        payload["theta_S_variance_limit"] = ia.theta_s_variance_limit(params, args.gamma)
    if design == "fisher":
        payload["sizes"] = list(sizes.sizes)
        if sizes.p >= 2:
            fm = ia.fisher_moments(params, sizes)
            payload["fisher"] = {"mean_S": fm.means.tolist(), "cov_S": fm.cov.tolist(), "EV": fm.ev}
            payload["fisher"]["asymptote"] = ia.fisher_asymptotics(
                params, np.asarray(sizes.sizes, dtype=float) / sum(sizes.sizes)
            )
    _emit(_render(_round(payload, args.precision), args.format), args.output)
    return 0


def cmd_simulate(args) -> int:
    _merge_config(args)
    params = _theta(args)
    design = _grid_design(args)
    if args.replicates is None:
        args.replicates = 10_000
    if args.seed is None:
        args.seed = _default_seed()
    sigma = 3.0 if args.sigma is None else args.sigma
    workers = args.workers or 1
    if design == "fisher":
        report = fisher_experiment(params, ia.SampleSizes(args.sizes), args.replicates, args.seed, sigma, workers)
    else:
        kwargs = dict(
            theta=params.theta,
            replicates=args.replicates,
            master_seed=args.seed,
            sigma=sigma,
            workers=workers,
        )
        if args.targets:
            kwargs["targets"] = args.targets
        if args.max_expected_events is not None:
            kwargs["max_expected_events"] = args.max_expected_events
        if design == "cuts":
            kwargs["cuts"] = args.cuts
        else:
            kwargs.update(gamma=args.gamma, p=args.p)
        report = run_experiment(ExperimentConfig(**kwargs))
    _emit(_render_report(report, args), args.output)
    return 0 if report.all_passed else 2


def cmd_gaps(args) -> int:
    if args.t is None or not args.t > 0:
        raise UsageError("--t must be a positive number")
    params = ModelParams(1.0 if args.theta is None else args.theta)
    mom = ia.gap_time_moments(args.t)
    s_grid = np.linspace(0.0, args.s_max, args.points + 1)[1:]
    payload = {
        "schema_version": SCHEMA_VERSION,
        "kind": "gaps",
        "t": args.t,
        "exact": {
            "mean": mom.mean,
            "second_moment": mom.second_moment,
            "variance_mixture": mom.variance,
            "variance_stated_li3_over_t": mom.stated_variance,
        },
        "density": {"s": s_grid.tolist(), "f": ia.gap_time_density(args.t, s_grid).tolist()},
    }
    code = 0
    if args.mc:
        seed = _default_seed() if args.seed is None else args.seed
        report = gap_experiment(params, args.t, args.mc, seed)
        payload["monte_carlo"] = report.to_dict(include_timing=args.include_timing)
        code = 0 if report.all_passed else 2
    _emit(_render(_round(payload, args.precision), args.format), args.output)
    return code


def _cc_key(c) -> str:
    return ",".join(map(str, c))


def cmd_esf(args) -> int:
    if args.n is None or args.n < 1:
        raise UsageError("--n must be a positive integer")
    if args.n > ENUMERATION_CAP:
        raise UsageError(f"--n {args.n} exceeds the enumeration cap {ENUMERATION_CAP}; use a smaller n")
    params = _theta(args)
    seed = _default_seed() if args.seed is None else args.seed
    rng = np.random.Generator(np.random.PCG64(seed))
    law = esf_law(params, args.n)
    payload = {"schema_version": SCHEMA_VERSION, "kind": "esf", "theta": params.theta, "n": args.n}
    code = 0
    if args.pmf or not (args.crp or args.conditioned):
        payload["pmf"] = {_cc_key(c): p for c, p in law.items()}
    if args.crp:
        observed = Counter(sample_crp(params, args.n, rng).counts_of_counts() for _ in range(args.crp))
        stat, dof, pvalue = chi_square_gof(observed, law)
        payload["crp_chi_square"] = {"runs": args.crp, "statistic": stat, "dof": dof, "pvalue": pvalue}
        if pvalue < args.alpha:
            code = 2
    if args.conditioned:
        checks = []
        for x in args.x:
            rep = conditioned_poisson_esf_check(params, x, args.n, args.conditioned, rng, variant=args.variant)
            d = rep.to_dict()
            d["pass"] = rep.tv_distance < args.tv_threshold
            code = code if d["pass"] else 2
            checks.append(d)
        payload["conditioned"] = checks
    _emit(_render(_round(payload, args.precision), args.format), args.output)
    return code


def cmd_embed(args) -> int:
    params = _theta(args)
    if not args.l:
        raise UsageError("--l is required")
    if any(b < a for a, b in zip(args.l, args.l[1:])) or args.l[0] < 0:
        raise UsageError("--l must be nondecreasing and nonnegative")
    if args.l[-1] > EMBEDDING_CAP:
        raise UsageError(f"l_p = {args.l[-1]} exceeds the enumeration cap {EMBEDDING_CAP}; use smaller targets")
    if args.cuts is not None:
        grid = ia.TimeGrid(args.cuts)
    else:
        if args.l[0] < 1 or any(b == a for a, b in zip(args.l, args.l[1:])):
            raise UsageError("the Fisher grid needs strictly increasing positive targets; pass --cuts instead")
        sizes = ia.SampleSizes(tuple(np.diff((0,) + tuple(args.l)).tolist()))
        grid = ia.fisher_grid(params, sizes)
    seed = _default_seed() if args.seed is None else args.seed
    rng = np.random.Generator(np.random.PCG64(seed))
    rep = conditioned_embedding_check(params, grid, args.l, args.replicates, rng)
    payload = {"schema_version": SCHEMA_VERSION, "kind": "embed", "theta": params.theta, **rep.to_dict()}
    payload["pass"] = rep.tv_vs_crp_simulation < args.tv_threshold
    _emit(_render(_round(payload, args.precision), args.format), args.output)
    return 0 if payload["pass"] else 2


def _common(p):
    p.add_argument("--format", choices=("json", "csv", "table"), default="json")
    p.add_argument("--precision", type=int, default=6, help="significant digits for floats")
    p.add_argument("--output", "-o", help="write to this file instead of stdout")


def _grid_flags(p):
    p.add_argument("--cuts", type=_float_list, help="explicit cut points 0,t1,...,tp")
    p.add_argument("--gamma", type=float, help="log-equal design e^{t_i} = i gamma + 1")
    p.add_argument("--p", type=int, help="number of intervals for the log-equal design")
    p.add_argument("--sizes", type=_int_list, help="sample sizes n_1,...,n_p for the Fisher grid")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="bisample", description="Exact moments and Monte Carlo checks for sequential sampling of a Yule process with immigration.", epilog="Exit codes: 0 success, 1 usage error, 2 guard refusal or failed check.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("exact", help="exact means, covariances and sample variance")
    p.add_argument("--theta", type=float)
    _grid_flags(p)
    _common(p)
    p.set_defaults(func=cmd_exact)

    p = sub.add_parser("simulate", help="Monte Carlo comparison with the exact values")
    p.add_argument("--theta", type=float)
    _grid_flags(p)
    p.add_argument("--replicates", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--targets", type=lambda s: tuple(v.strip() for v in s.split(",") if v.strip()))
    p.add_argument("--sigma", type=float)
    p.add_argument("--workers", type=int)
    p.add_argument("--max-expected-events", dest="max_expected_events", type=float)
    p.add_argument("--config", help="INI file with an [experiment] section")
    p.add_argument("--include-timing", action="store_true", help="add wall time (breaks byte-identical reruns)")
    _common(p)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("gaps", help="gap-time law of a randomly chosen family")
    p.add_argument("--theta", type=float)
    p.add_argument("--t", type=float)
    p.add_argument("--exact", action="store_true", help="exact values only (the default without --mc)")
    p.add_argument("--mc", type=int, default=0, help="number of nonempty Monte Carlo samples")
    p.add_argument("--seed", type=int)
    p.add_argument("--points", type=int, default=10, help="density table size")
    p.add_argument("--s-max", dest="s_max", type=float, default=3.0)
    p.add_argument("--include-timing", action="store_true")
    _common(p)
    p.set_defaults(func=cmd_gaps)

    p = sub.add_parser("esf", help="Ewens sampling formula and its sampling checks")
    p.add_argument("--theta", type=float, default=1.0)
    p.add_argument("--n", type=int)
    p.add_argument("--pmf", action="store_true")
    p.add_argument("--crp", type=int, default=0, help="CRP runs for a chi-square check")
    p.add_argument("--conditioned", type=int, default=0, help="accepted samples per x for the Poisson check")
    p.add_argument("--x", type=_float_list, default=(0.5,))
    p.add_argument("--variant", choices=("finite", "infinite"), default="finite")
    p.add_argument("--alpha", type=float, default=0.001)
    p.add_argument("--tv-threshold", dest="tv_threshold", type=float, default=0.02)
    p.add_argument("--seed", type=int)
    _common(p)
    p.set_defaults(func=cmd_esf)

    p = sub.add_parser("embed", help="conditioned BI trajectories against the CRP")
    p.add_argument("--theta", type=float, default=1.0)
    p.add_argument("--l", type=_int_list, help="population targets l_1,...,l_p")
    p.add_argument("--cuts", type=_float_list, help="cut points (default: the Fisher grid for --l)")
    p.add_argument("--replicates", type=int, default=10_000)
    p.add_argument("--seed", type=int)
    p.add_argument("--tv-threshold", dest="tv_threshold", type=float, default=0.03)
    _common(p)
    p.set_defaults(func=cmd_embed)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (UsageError, ValueError) as exc:
        print(f"bisample {args.command}: error: {exc}", file=sys.stderr)
        return 1
    except SimulationGuardError as exc:
        print(f"bisample {args.command}: guard: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
