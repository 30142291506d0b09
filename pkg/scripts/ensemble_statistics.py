"""Rank statistics of an ensemble run, with bootstrap confidence intervals.

Reads clusters.csv from an ``adpulse ensemble`` output directory and reports
the Spearman correlation between the dark-state metric and the AdPulse minus
PulsePol polarization, plus the mean difference.

    python3 scripts/ensemble_statistics.py results/ensemble --resamples 5000
"""

import argparse
import csv
from pathlib import Path

import numpy as np
from scipy.stats import bootstrap, spearmanr


def load(path: Path):
    ad, pp, metric = [], [], []
    with open(path / "clusters.csv") as fh:
        for row in csv.DictReader(fh):
            if row["error"] or not row["dark_state_metric"]:
                continue
            ad.append(float(row["adpulse"]))
            pp.append(float(row["pulsepol"]))
            metric.append(float(row["dark_state_metric"]))
    return np.array(ad), np.array(pp), np.array(metric)


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("run_dir", type=Path)
    p.add_argument("--resamples", type=int, default=2000)
    p.add_argument("--seed", type=int, default=0)
    args = p.parse_args()

    ad, pp, metric = load(args.run_dir)
    deficit = ad - pp
    rho = spearmanr(metric, deficit).statistic
    rng = np.random.default_rng(args.seed)
    ci_rho = bootstrap(
        (metric, deficit), lambda m, d: spearmanr(m, d).statistic, paired=True, vectorized=False,
        n_resamples=args.resamples, random_state=rng,
    ).confidence_interval
    ci_mean = bootstrap((deficit,), np.mean, n_resamples=args.resamples, random_state=rng).confidence_interval
    print(f"clusters            {len(ad)}")
    print(f"mean AdPulse        {ad.mean():.4f}")
    print(f"mean PulsePol       {pp.mean():.4f}")
    print(f"mean difference     {deficit.mean():+.4f}  95% CI [{ci_mean.low:+.4f}, {ci_mean.high:+.4f}]")
    print(f"Spearman(metric, difference) {rho:+.3f}  95% CI [{ci_rho.low:+.3f}, {ci_rho.high:+.3f}]")
    low = metric < np.quantile(metric, 0.2)
    print(f"lowest-metric quintile: mean difference {deficit[low].mean():+.4f}, rest {deficit[~low].mean():+.4f}")


if __name__ == "__main__":
    main()
