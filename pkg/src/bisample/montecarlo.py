"""Replicate orchestration and exact-vs-empirical comparison reports."""

from __future__ import annotations

import configparser
import csv
import io
import json
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from . import interval_analytics as ia
from .distributions import LogSeriesLaw, ModelParams, expected_population_size, log_series_pmf
from .simulator import DEFAULT_EVENT_CAP, _check_horizon, _event_loop, _grid_kernel, replicate_rng
from .stats import chi_square_gof, cov_and_se, mean_and_se

__all__ = [
    "SCHEMA_VERSION",
    "REPORT_SCHEMA",
    "TARGETS",
    "ExperimentConfig",
    "TargetResult",
    "ComparisonReport",
    "load_config",
    "simulate_grid",
    "run_experiment",
    "fisher_experiment",
    "gap_experiment",
]

SCHEMA_VERSION = "1.0"

TARGETS = ("mean_S", "var_S", "cov_S", "EV", "mean_K", "mean_T", "cov_KT", "mean_Z", "theta_S")
DEFAULT_TARGETS = ("mean_S", "var_S", "cov_S", "EV", "mean_Z")

REPORT_SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "type": "object",
    "required": ["schema_version", "kind", "all_passed", "metadata", "targets"],
    "properties": {
        "schema_version": {"const": SCHEMA_VERSION},
        "kind": {"type": "string"},
        "all_passed": {"type": "boolean"},
        "metadata": {
            "type": "object",
            "required": ["seed", "replicates", "theta", "sigma"],
            "properties": {
                "seed": {"type": "integer"},
                "replicates": {"type": "integer", "minimum": 1},
                "theta": {"type": "number", "exclusiveMinimum": 0},
                "sigma": {"type": "number", "exclusiveMinimum": 0},
                "cuts": {"type": "array", "items": {"type": "number"}},
                "events": {"type": "integer", "minimum": 0},
                "wall_time_s": {"type": "number", "minimum": 0},
            },
        },
        "targets": {
            "type": "array",
            "items": {
                "type": "object",
                "required": ["name", "exact", "empirical", "stderr", "z", "passed", "diagnostic"],
                "properties": {
                    "name": {"type": "string"},
                    "exact": {"type": "number"},
                    "empirical": {"type": "number"},
                    "stderr": {"type": ["number", "null"]},
                    "z": {"type": ["number", "null"]},
                    "passed": {"type": "boolean"},
                    "diagnostic": {"type": "boolean"},
                },
            },
        },
        "extras": {"type": "object"},
    },
}


@dataclass
class ExperimentConfig:
    """One simulation experiment.

    Exactly one grid design must be given: explicit ``cuts``, the
    log-equal design ``(gamma, p)``, or Fisher ``sizes``.
    """

    theta: float
    cuts: Optional[Sequence[float]] = None
    gamma: Optional[float] = None
    p: Optional[int] = None
    sizes: Optional[Sequence[int]] = None
    replicates: int = 10_000
    master_seed: int = 0
    targets: Sequence[str] = DEFAULT_TARGETS
    sigma: float = 3.0
    max_expected_events: float = DEFAULT_EVENT_CAP
    workers: int = 1

    def __post_init__(self):
        self.params  # validates theta
        designs = [self.cuts is not None, self.gamma is not None or self.p is not None, self.sizes is not None]
        if sum(designs) != 1:
            raise ValueError("give exactly one of: cuts, (gamma, p), sizes")
        if designs[1] and (self.gamma is None or self.p is None):
            raise ValueError("the log-equal design needs both gamma and p")
        if self.replicates < 1:
            raise ValueError("replicates must be >= 1")
        if self.sigma <= 0:
            raise ValueError("sigma must be positive")
        self.targets = tuple(self.targets)
        unknown = set(self.targets) - set(TARGETS)
        if unknown:
            raise ValueError(f"unknown targets {sorted(unknown)}; choose from {TARGETS}")
        if "theta_S" in self.targets and self.gamma is None:
            raise ValueError("target theta_S is defined for the log-equal design only")

    @property
    def params(self) -> ModelParams:
        return ModelParams(float(self.theta))

    @property
    def design(self) -> str:
        if self.cuts is not None:
            return "cuts"
        return "log_equal" if self.gamma is not None else "fisher"

    def grid(self) -> ia.TimeGrid:
        if self.cuts is not None:
            return ia.TimeGrid(tuple(self.cuts))
        if self.gamma is not None:
            return ia.log_equal_grid(self.gamma, self.p)
        return ia.fisher_grid(self.params, ia.SampleSizes(tuple(self.sizes)))


def load_config(path) -> ExperimentConfig:
    """Read an ``[experiment]`` section of an INI file; see the README for the keys."""
    parser = configparser.ConfigParser()
    with open(path) as fh:
        parser.read_file(fh)
    if "experiment" not in parser:
        raise ValueError(f"{path}: missing [experiment] section")
    sec = parser["experiment"]
    known = {
        "theta", "cuts", "gamma", "p", "sizes", "replicates", "seed",
        "targets", "sigma", "max_expected_events", "workers",
    }
    extra = set(sec) - known
    if extra:
        raise ValueError(f"{path}: unknown keys {sorted(extra)}")

    def floats(key):
        return tuple(float(v) for v in sec[key].split(",")) if key in sec else None

    kwargs = dict(theta=sec.getfloat("theta"), cuts=floats("cuts"))
    if "gamma" in sec:
        kwargs["gamma"] = sec.getfloat("gamma")
    if "p" in sec:
        kwargs["p"] = sec.getint("p")
    if "sizes" in sec:
        kwargs["sizes"] = tuple(int(v) for v in sec["sizes"].split(","))
    if "replicates" in sec:
        kwargs["replicates"] = sec.getint("replicates")
    if "seed" in sec:
        kwargs["master_seed"] = sec.getint("seed")
    if "targets" in sec:
        kwargs["targets"] = tuple(v.strip() for v in sec["targets"].split(",") if v.strip())
    if "sigma" in sec:
        kwargs["sigma"] = sec.getfloat("sigma")
    if "max_expected_events" in sec:
        kwargs["max_expected_events"] = sec.getfloat("max_expected_events")
    if "workers" in sec:
        kwargs["workers"] = sec.getint("workers")
    if kwargs["theta"] is None:
        raise ValueError(f"{path}: theta is required")
    return ExperimentConfig(**kwargs)


@dataclass
class TargetResult:
    name: str
    exact: float
    empirical: float
    stderr: float
    z: float
    passed: bool
    # diagnostic rows are reported but do not count towards all_passed
    diagnostic: bool = False


def _compare(name, exact, empirical, stderr, sigma, diagnostic=False) -> TargetResult:
    if not math.isfinite(stderr):
        z = math.nan
    elif stderr > 0:
        z = (empirical - exact) / stderr
    else:
        z = 0.0 if empirical == exact else math.inf
    return TargetResult(name, float(exact), float(empirical), float(stderr), float(z), bool(abs(z) <= sigma), diagnostic)


def _clean(x):
    if isinstance(x, float) and not math.isfinite(x):
        return None
    return x


@dataclass
class ComparisonReport:
    kind: str
    rows: list
    metadata: dict
    extras: dict = field(default_factory=dict)

    @property
    def all_passed(self) -> bool:
        return all(r.passed for r in self.rows if not r.diagnostic)

    def row(self, name: str) -> TargetResult:
        for r in self.rows:
            if r.name == name:
                return r
        raise KeyError(name)

    def to_dict(self, include_timing: bool = False) -> dict:
        meta = dict(self.metadata)
        if not include_timing:
            meta.pop("wall_time_s", None)
        return {
            "schema_version": SCHEMA_VERSION,
            "kind": self.kind,
            "all_passed": self.all_passed,
            "metadata": meta,
            "targets": [{k: _clean(v) for k, v in r.__dict__.items()} for r in self.rows],
            "extras": self.extras,
        }

    def to_json(self, include_timing: bool = False) -> str:
        return json.dumps(self.to_dict(include_timing), indent=2, sort_keys=False) + "\n"

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["name", "exact", "empirical", "stderr", "z", "passed", "diagnostic"])
        for r in self.rows:
            writer.writerow([r.name, repr(r.exact), repr(r.empirical), repr(r.stderr), repr(r.z), r.passed, r.diagnostic])
        return buf.getvalue()


def _run_chunks(fn, n: int, workers: int) -> list:
    """Apply ``fn`` to every replicate index in order, optionally across threads."""
    if workers <= 1 or n < 2:
        return [fn(i) for i in range(n)]
    chunks = np.array_split(np.arange(n), workers)
    with ThreadPoolExecutor(max_workers=workers) as pool:
        parts = pool.map(lambda idx: [fn(int(i)) for i in idx], chunks)
    return [r for part in parts for r in part]


def simulate_grid(
    params: ModelParams,
    grid: ia.TimeGrid,
    replicates: int,
    master_seed: int,
    workers: int = 1,
    max_expected_events: float = DEFAULT_EVENT_CAP,
) -> dict:
    """Per-replicate S, K and Z arrays; replicate ``i`` uses stream ``(master_seed, i)``."""
    _check_horizon(params, grid.horizon, max_expected_events)
    cuts = np.asarray(grid.cuts, dtype=float)
    theta = float(params.theta)
    results = _run_chunks(lambda i: _grid_kernel(replicate_rng(master_seed, i), theta, cuts), replicates, workers)
    return {
        "S": np.stack([r[0] for r in results]),
        "K": np.stack([r[1] for r in results]),
        "Z": np.stack([r[2] for r in results]),
        "events": int(sum(r[3] for r in results)),
    }


def _grid_rows(params, grid, sim, targets, sigma, exact_moments=None, gamma=None) -> list:
    S, K, Z = sim["S"], sim["K"], sim["Z"]
    p = grid.p
    ivs = grid.intervals
    if exact_moments is None:
        means, cov = ia.grid_moments(params, grid)
    else:
        means, cov = exact_moments[0], exact_moments[1]
    rows = []
    if "mean_S" in targets:
        for i in range(p):
            rows.append(_compare(f"mean_S[{i + 1}]", means[i], *mean_and_se(S[:, i]), sigma))
    if "var_S" in targets:
        for i in range(p):
            rows.append(_compare(f"var_S[{i + 1}]", means[i], *cov_and_se(S[:, i], S[:, i]), sigma))
    if "cov_S" in targets:
        for i in range(p):
            for j in range(i + 1, p):
                rows.append(_compare(f"cov_S[{i + 1},{j + 1}]", cov[i, j], *cov_and_se(S[:, i], S[:, j]), sigma))
    if "EV" in targets and p >= 2:
        exact = ia.expected_sample_variance(params, grid) if exact_moments is None else exact_moments[2]
        rows.append(_compare("EV", exact, *mean_and_se(ia.sample_variance_statistic(S)), sigma))
    if "mean_K" in targets or "mean_T" in targets or "cov_KT" in targets:
        for i in range(p):
            for j in range(i + 1, p):
                kt = ia.kt_decomposition_means(params, ivs[i], ivs[j])
                k_ij = K[:, i, j]
                t_ij = S[:, i] - k_ij
                t_ji = S[:, j] - k_ij
                tag = f"[{i + 1},{j + 1}]"
                if "mean_K" in targets:
                    rows.append(_compare(f"mean_K{tag}", kt.K, *mean_and_se(k_ij), sigma))
                if "mean_T" in targets:
                    rows.append(_compare(f"mean_T[{i + 1}\\{j + 1}]", kt.T12, *mean_and_se(t_ij), sigma))
                    rows.append(_compare(f"mean_T[{j + 1}\\{i + 1}]", kt.T21, *mean_and_se(t_ji), sigma))
                if "cov_KT" in targets:
                    rows.append(_compare(f"cov_K_T{tag}", 0.0, *cov_and_se(k_ij, t_ij), sigma))
                    rows.append(_compare(f"cov_T_T{tag}", 0.0, *cov_and_se(t_ij, t_ji), sigma))
    if "mean_Z" in targets:
        for i, t in enumerate(grid.cuts[1:], start=1):
            rows.append(_compare(f"mean_Z[{i}]", expected_population_size(params, t), *mean_and_se(Z[:, i]), sigma))
    if "theta_S" in targets and gamma is not None:
        est = S.mean(axis=1) / math.log1p(gamma)
        rows.append(_compare("mean_theta_S", params.theta, *mean_and_se(est), sigma))
        rows.append(_compare("var_theta_S", ia.theta_s_variance(params, gamma, p), *cov_and_se(est, est), sigma))
    return rows


def _metadata(params, seed, replicates, sigma, t0, **more) -> dict:
    meta = {
        "seed": int(seed),
        "replicates": int(replicates),
        "theta": float(params.theta),
        "sigma": float(sigma),
    }
    meta.update(more)
    meta["wall_time_s"] = time.perf_counter() - t0
    return meta


def run_experiment(config: ExperimentConfig) -> ComparisonReport:
    t0 = time.perf_counter()
    params = config.params
    grid = config.grid()
    sim = simulate_grid(params, grid, config.replicates, config.master_seed, config.workers, config.max_expected_events)
    rows = _grid_rows(params, grid, sim, config.targets, config.sigma, gamma=config.gamma)
    extras = {"design": config.design}
    if config.gamma is not None:
        extras["correlation"] = ia.log_equal_correlation(config.gamma)
    meta = _metadata(
        params, config.master_seed, config.replicates, config.sigma, t0,
        cuts=list(grid.cuts), events=sim["events"],
    )
    return ComparisonReport("grid", rows, meta, extras)


def fisher_experiment(
    params: ModelParams,
    sizes: ia.SampleSizes,
    replicates: int,
    seed: int,
    sigma: float = 3.0,
    workers: int = 1,
) -> ComparisonReport:
    """Simulate on the Fisher grid and compare with the sample-size forms."""
    t0 = time.perf_counter()
    grid = ia.fisher_grid(params, sizes)
    moments = ia.fisher_moments(params, sizes)
    sim = simulate_grid(params, grid, replicates, seed, workers)
    rows = _grid_rows(
        params, grid, sim, ("mean_S", "cov_S", "EV", "mean_Z"), sigma,
        exact_moments=(moments.means, moments.cov, moments.ev),
    )
    extras = {"sizes": list(sizes.sizes), "ev_exact": moments.ev}
    if len(set(sizes.sizes)) == 1:
        limit = params.theta * math.log(2)
        extras["asymptote"] = limit
        extras["distance_to_asymptote"] = limit - moments.ev
    meta = _metadata(params, seed, replicates, sigma, t0, cuts=list(grid.cuts), events=sim["events"])
    return ComparisonReport("fisher", rows, meta, extras)


def _gap_draw(theta, t, seed, index):
    rng = replicate_rng(seed, index)
    _, labels, n_fam, _ = _event_loop(rng, theta, t, np.iinfo(np.int64).max)
    if n_fam == 0:
        return None
    chosen = rng.integers(n_fam)
    size = int(np.count_nonzero(labels == chosen))
    return size, float(rng.standard_exponential(size).min())


def gap_experiment(
    params: ModelParams,
    t: float,
    replicates: int,
    seed: int,
    sigma: float = 3.0,
) -> ComparisonReport:
    """Gap-time law at ``t`` from ``replicates`` nonempty simulated populations.

    Both variance expressions are tested; the report names the one the
    data supports in ``extras["variance_formula_supported"]``.
    """
    t0 = time.perf_counter()
    _check_horizon(params, t, DEFAULT_EVENT_CAP)
    theta = float(params.theta)
    sizes, waits = [], []
    index = 0
    while len(sizes) < replicates:
        draw = _gap_draw(theta, float(t), seed, index)
        index += 1
        if draw is not None:
            sizes.append(draw[0])
            waits.append(draw[1])
    sizes = np.array(sizes)
    waits = np.array(waits)
    law = LogSeriesLaw.from_time(t)
    exact = ia.gap_time_moments(t)
    mean_n = law.q / ((1 - law.q) * law.t)
    rows = [
        _compare("mean_N", mean_n, *mean_and_se(sizes), sigma),
        _compare("mean_W", exact.mean, *mean_and_se(waits), sigma),
        _compare("var_W[mixture]", exact.variance, *cov_and_se(waits, waits), sigma),
        _compare("var_W[stated]", exact.stated_variance, *cov_and_se(waits, waits), sigma, diagnostic=True),
    ]
    support = np.arange(1, int(sizes.max()) + 1)
    expected = dict(zip(support.tolist(), np.atleast_1d(log_series_pmf(law, support)).tolist()))
    observed = dict(zip(*np.unique(sizes, return_counts=True)))
    observed = {int(k): int(v) for k, v in observed.items()}
    stat, dof, pvalue = chi_square_gof(observed, expected)
    mix_ok = rows[2].passed
    stated_ok = abs(rows[3].z) <= sigma
    supported = {(True, False): "mixture", (False, True): "stated", (True, True): "both"}.get((mix_ok, stated_ok), "neither")
    extras = {
        "t": float(t),
        "q": law.q,
        "attempts": index,
        "empty_populations": index - replicates,
        "N_chi_square": {"statistic": stat, "dof": dof, "pvalue": pvalue},
        "variance_formula_supported": supported,
    }
    meta = _metadata(params, seed, replicates, sigma, t0)
    return ComparisonReport("gaps", rows, meta, extras)


def write_report(report: ComparisonReport, path, fmt: str = "json", include_timing: bool = False) -> None:
    text = report.to_json(include_timing) if fmt == "json" else report.to_csv()
    Path(path).write_text(text)
