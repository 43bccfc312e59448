"""Small statistical helpers shared by the verification routines."""

from __future__ import annotations

from collections import Counter
from typing import Hashable, Iterable, Mapping

import numpy as np
from scipy import stats as sps


def normalize_counts(counts: Mapping) -> dict:
    total = sum(counts.values())
    if total == 0:
        raise ValueError("no samples")
    return {k: v / total for k, v in counts.items()}


def empirical_law(samples: Iterable[Hashable]) -> dict:
    return normalize_counts(Counter(samples))


def total_variation(p: Mapping, q: Mapping) -> float:
    keys = set(p) | set(q)
    return 0.5 * sum(abs(p.get(k, 0.0) - q.get(k, 0.0)) for k in keys)


def chi_square_gof(observed: Mapping, expected_probs: Mapping, min_expected: float = 5.0):
    """Goodness of fit of observed counts against a law on a finite or countable support.

    Cells whose expected count falls below ``min_expected`` are pooled,
    together with any mass not listed in ``expected_probs``.
    Returns ``(statistic, dof, pvalue)``.
    """
    n = sum(observed.values())
    keys = sorted(expected_probs, key=lambda k: -expected_probs[k])
    obs_cells, exp_cells = [], []
    pooled_obs, pooled_exp = 0.0, 0.0
    for k in keys:
        e = n * expected_probs[k]
        if e >= min_expected:
            obs_cells.append(observed.get(k, 0))
            exp_cells.append(e)
        else:
            pooled_obs += observed.get(k, 0)
            pooled_exp += e
    listed = set(keys)
    pooled_obs += sum(v for k, v in observed.items() if k not in listed)
    pooled_exp += n * max(0.0, 1.0 - sum(expected_probs.values()))
    if pooled_exp > 0 or pooled_obs > 0:
        obs_cells.append(pooled_obs)
        exp_cells.append(pooled_exp)
    obs_arr = np.asarray(obs_cells, dtype=float)
    exp_arr = np.asarray(exp_cells, dtype=float)
    exp_arr *= obs_arr.sum() / exp_arr.sum()
    stat, pvalue = sps.chisquare(obs_arr, exp_arr)
    return float(stat), len(obs_cells) - 1, float(pvalue)


def two_sample_chi_square(first: Mapping, second: Mapping):
    """Homogeneity test for two count tables over a shared support."""
    keys = sorted(set(first) | set(second), key=repr)
    table = np.array([[first.get(k, 0) for k in keys], [second.get(k, 0) for k in keys]], dtype=float)
    table = table[:, table.sum(axis=0) > 0]
    stat, pvalue, dof, _ = sps.chi2_contingency(table, correction=False)
    return float(stat), int(dof), float(pvalue)


def mean_and_se(x) -> tuple:
    x = np.asarray(x, dtype=float)
    n = x.shape[0]
    m = float(np.mean(x))
    se = float(np.std(x, ddof=1) / np.sqrt(n)) if n > 1 else float("nan")
    return m, se


def cov_and_se(x, y) -> tuple:
    """Unbiased sample covariance and a delta-method standard error."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    n = x.shape[0]
    if n < 2:
        return float("nan"), float("nan")
    prod = (x - x.mean()) * (y - y.mean())
    cov = float(prod.sum() / (n - 1))
    se = float(np.std(prod, ddof=1) / np.sqrt(n))
    return cov, se
