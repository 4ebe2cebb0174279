"""Pearson chi-square validation of the analytic synchronizer-wait density.

The sampled waits are binned into equal-probability intervals of the
hypothesized mixture CDF, so every bin has expected count n/bins; the
statistic is compared against the fixed critical value 49.6 (30 bins,
significance 0.01).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np
from scipy.stats import chi2 as chi2_dist

from . import analytic, simulate
from .analytic import ExpMixture, NetworkParams

CRITICAL_30_BINS_ALPHA_01 = 49.6


@dataclass
class GofReport:
    chi2: float
    bins: list
    critical: float
    accepted: bool
    delta_t_rel: float | None
    params: dict = field(default_factory=dict)
    n_samples: int = 0
    seed: int | None = None

    def to_json(self) -> str:
        return json.dumps(
            {
                "chi2": self.chi2,
                "bins": self.bins,
                "critical": self.critical,
                "accepted": self.accepted,
                "delta_t_rel": self.delta_t_rel,
                "params": self.params,
                "n_samples": self.n_samples,
                "seed": self.seed,
            },
            indent=2,
        )


def _critical_value(bins: int, alpha: float, exact: bool) -> float:
    if not exact and bins == 30 and alpha == 0.01:
        return CRITICAL_30_BINS_ALPHA_01
    return float(chi2_dist.ppf(1.0 - alpha, bins - 1))


def chi_square_test(
    samples,
    hypothesis: ExpMixture,
    bins: int = 30,
    alpha: float = 0.01,
    exact_critical: bool = False,
) -> GofReport:
    """Equal-probability-bin Pearson test of samples against the hypothesis.

    Bin edges sit at the k/bins quantiles of the hypothesized CDF, so the
    expected count is exactly n/bins in every bin.
    """
    samples = np.asarray(samples, dtype=float)
    n = samples.size
    if n < 10 * bins:
        raise ValueError(f"need at least {10 * bins} samples, got {n}")
    edges = analytic._invert_cdf(hypothesis, np.arange(1, bins) / bins)
    counts = np.bincount(np.searchsorted(edges, samples), minlength=bins)
    expected = n / bins
    stat = float(((counts - expected) ** 2 / expected).sum())
    critical = _critical_value(bins, alpha, exact_critical)
    return GofReport(
        chi2=stat,
        bins=counts.tolist(),
        critical=critical,
        accepted=stat <= critical,
        delta_t_rel=None,
        n_samples=n,
    )


def hypothesis1_verdict(
    params: NetworkParams,
    n_jobs: int,
    seed: int,
    warmup_fraction: float = 0.0,
    bins: int = 30,
    alpha: float = 0.01,
) -> GofReport:
    """Simulate the network and test the empirical waits against the
    independence-approximation mixture; also reports (T - T_emp) / T."""
    density = analytic.waiting_time_density(params)
    result = simulate.run_simulation(params, n_jobs, seed, warmup_fraction)
    report = chi_square_test(result.t_sync, density, bins=bins, alpha=alpha)
    t_mean = density.mean()
    report.delta_t_rel = (t_mean - result.t_mean_emp) / t_mean
    report.params = params.as_dict()
    report.seed = seed
    return report


def _scan_point(point, lam, n_jobs, seeds, bins, alpha):
    n_a, n_b, psi_a, psi_b = point
    params = NetworkParams.from_utilization(lam, n_a, psi_a, n_b, psi_b)
    stats, verdicts, deltas = [], [], []
    for seed in seeds:
        report = hypothesis1_verdict(params, n_jobs, seed, bins=bins, alpha=alpha)
        stats.append(report.chi2)
        verdicts.append(report.accepted)
        deltas.append(report.delta_t_rel)
    return {
        "n_a": n_a,
        "n_b": n_b,
        "psi_a": psi_a,
        "psi_b": psi_b,
        "chi2": float(np.median(stats)),
        "accepted": sum(verdicts) > len(verdicts) / 2,
        "delta_t_rel": float(np.median(deltas)),
    }


def validity_region_scan(
    points,
    lam: float,
    n_jobs: int,
    seeds,
    bins: int = 30,
    alpha: float = 0.01,
    workers: int = 1,
) -> list:
    """Accept/reject table over (n_a, n_b, psi_a, psi_b) grid points.

    Each point is decided by majority over the given seeds; the reported
    chi2 and delta_t_rel are the per-seed medians.  Rows come back sorted
    by grid coordinates regardless of worker completion order.
    """
    points = sorted(points)
    if workers > 1:
        from concurrent.futures import ThreadPoolExecutor

        with ThreadPoolExecutor(max_workers=workers) as pool:
            return list(
                pool.map(
                    lambda p: _scan_point(p, lam, n_jobs, seeds, bins, alpha), points
                )
            )
    return [_scan_point(p, lam, n_jobs, seeds, bins, alpha) for p in points]
