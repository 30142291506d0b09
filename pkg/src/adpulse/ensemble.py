"""Random 13C clusters and equal-budget hyperpolarization comparisons.

Clusters are sampled from per-index Philox streams, so cluster ``i`` depends only
on ``(seed, i)`` and never on how many clusters are drawn or in which order
they are simulated.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import asdict, dataclass, field
from itertools import combinations
from typing import Sequence

import numpy as np
from scipy.stats import spearmanr

from .hamiltonian import GAMMA_C13, HostNitrogenSpec, NuclearSpinSpec, PhysicsError, SpinSystem, b0_for_larmor_resonance
from .parallel import parallel_map
from .protocols import (
    DEFAULT_REINIT_OVERHEAD,
    AdPulseBlock,
    PulsePolBlock,
    SweepSchedule,
    run_hyperpolarization,
)
from .pulses import INSTANTANEOUS, Compiler, PulseShape

TWO_PI = 2 * math.pi
BUDGET_TOLERANCE = 0.01


@dataclass(frozen=True)
class ClusterSpec:
    """Hyperfine couplings ``(a_x, a_z)`` in rad/s, one pair per 13C."""

    couplings: tuple[tuple[float, float], ...]
    label: str = ""
    seed_lineage: tuple[int, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "couplings", tuple((float(x), float(z)) for x, z in self.couplings))
        if any(x < 0 for x, _ in self.couplings):
            raise ValueError("a_x must be non-negative")

    @property
    def size(self) -> int:
        return len(self.couplings)

    def nuclei(self) -> tuple[NuclearSpinSpec, ...]:
        return tuple(NuclearSpinSpec(x, z) for x, z in self.couplings)


def _stream(seed: int, index: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(seed, spawn_key=(index,))))


def sample_clusters(
    n_clusters: int,
    cluster_size: int,
    band_hz: tuple[float, float] = (10e3, 60e3),
    signed_az: bool = True,
    seed: int = 0,
) -> list[ClusterSpec]:
    """Uniform coupling magnitudes in ``band_hz``; a_x > 0, a_z sign random iff ``signed_az``."""
    lo, hi = band_hz
    if not 0 < lo <= hi:
        raise ValueError("band must satisfy 0 < low <= high")
    if n_clusters < 0 or cluster_size < 1:
        raise ValueError("need a non-negative cluster count and a positive cluster size")
    out = []
    for i in range(n_clusters):
        rng = _stream(seed, i)
        mags = rng.uniform(lo, hi, size=(cluster_size, 2))
        signs = rng.choice([-1.0, 1.0], size=cluster_size) if signed_az else np.ones(cluster_size)
        pairs = tuple((TWO_PI * mags[j, 0], TWO_PI * signs[j] * mags[j, 1]) for j in range(cluster_size))
        out.append(ClusterSpec(pairs, f"cluster-{i}", (seed, i)))
    return out


def dark_state_metric(cluster: ClusterSpec) -> float:
    """min over pairs of |a_z^i - a_z^j| / max(a_x^i, a_x^j)."""
    if cluster.size < 2:
        raise ValueError("dark-state metric needs at least two nuclei")
    best = math.inf
    for (xi, zi), (xj, zj) in combinations(cluster.couplings, 2):
        denom = max(xi, xj)
        val = abs(zi - zj) / denom if denom > 0 else math.inf
        best = min(best, val)
    return best


# settings -------------------------------------------------------------------------


@dataclass(frozen=True)
class AdPulseSettings:
    span: float = 250e-9
    delta_tau: float = 5e-9
    n_p: int = 2
    k: int = 3


@dataclass(frozen=True)
class PulsePolSettings:
    n_p: int = 4
    k: int = 3


@dataclass(frozen=True)
class EnsembleSettings:
    """Shared run parameters. ``tau_r`` fixes the field through the bare 13C resonance."""

    tau_r: float = 1497e-9
    budget: float = 15e-3
    reinit_overhead: float = DEFAULT_REINIT_OVERHEAD
    adpulse: AdPulseSettings = AdPulseSettings()
    pulsepol: PulsePolSettings = PulsePolSettings()
    shape: PulseShape = INSTANTANEOUS
    include_nitrogen: bool = False
    keep_traces: bool = False

    @property
    def b0(self) -> float:
        return b0_for_larmor_resonance(self.tau_r, self.adpulse.k, GAMMA_C13)

    def adpulse_block(self) -> AdPulseBlock:
        a = self.adpulse
        return AdPulseBlock(SweepSchedule.symmetric(self.tau_r, a.span, a.delta_tau, a.n_p, a.k), self.shape)

    def pulsepol_block(self) -> PulsePolBlock:
        tau = self.tau_r * self.pulsepol.k / self.adpulse.k
        return PulsePolBlock(tau, self.pulsepol.n_p, self.shape)

    def cycle_counts(self) -> tuple[int, int]:
        """Reinitialization counts (R_AdPulse, R_PulsePol) sharing one operating time."""
        cyc_ad = self.adpulse_block().duration + self.reinit_overhead
        cyc_pp = self.pulsepol_block().duration + self.reinit_overhead
        r_ad = max(1, int(round(self.budget / cyc_ad)))
        t_ad = r_ad * cyc_ad
        r_pp = max(1, int(round(t_ad / cyc_pp)))
        t_pp = r_pp * cyc_pp
        if abs(t_ad - t_pp) / t_ad >= BUDGET_TOLERANCE:
            raise PhysicsError(
                f"cannot match operating times within 1%: AdPulse {t_ad:.4e} s vs PulsePol {t_pp:.4e} s"
            )
        return r_ad, r_pp

    def operating_times(self) -> tuple[float, float]:
        r_ad, r_pp = self.cycle_counts()
        return (
            r_ad * (self.adpulse_block().duration + self.reinit_overhead),
            r_pp * (self.pulsepol_block().duration + self.reinit_overhead),
        )


def cluster_system(cluster: ClusterSpec, settings: EnsembleSettings) -> SpinSystem:
    nitrogen = HostNitrogenSpec(initial_state="0") if settings.include_nitrogen else None
    return SpinSystem(settings.b0, cluster.nuclei(), nitrogen).validate()


# runs -----------------------------------------------------------------------------


@dataclass
class ClusterOutcome:
    index: int
    adpulse: float
    pulsepol: float
    per_nucleus_adpulse: list[float]
    per_nucleus_pulsepol: list[float]
    metric: float | None
    error: str | None = None
    traces: dict | None = None


def run_cluster(cluster: ClusterSpec, settings: EnsembleSettings, index: int = 0) -> ClusterOutcome:
    """Both protocols on one cluster; cluster polarization is the mean of 2<I_z> over its nuclei."""
    metric = dark_state_metric(cluster) if cluster.size >= 2 else None
    try:
        sys = cluster_system(cluster, settings)
        r_ad, r_pp = settings.cycle_counts()
        comp = Compiler(sys)
        tr_ad = run_hyperpolarization(sys, settings.adpulse_block(), r_ad, settings.reinit_overhead, compiler=comp)
        tr_pp = run_hyperpolarization(sys, settings.pulsepol_block(), r_pp, settings.reinit_overhead, compiler=comp)
    except (PhysicsError, ValueError) as exc:
        nan = float("nan")
        return ClusterOutcome(index, nan, nan, [], [], metric, str(exc))
    traces = None
    if settings.keep_traces:
        traces = {
            "adpulse": {"times": tr_ad.times.tolist(), "mean": tr_ad.mean_polarization.tolist()},
            "pulsepol": {"times": tr_pp.times.tolist(), "mean": tr_pp.mean_polarization.tolist()},
        }
    return ClusterOutcome(
        index,
        float(tr_ad.final_polarization.mean()),
        float(tr_pp.final_polarization.mean()),
        [float(v) for v in tr_ad.final_polarization],
        [float(v) for v in tr_pp.final_polarization],
        metric,
        None,
        traces,
    )


def _cluster_job(args):
    cluster, settings, index = args
    return run_cluster(cluster, settings, index)


@dataclass
class EnsembleResult:
    outcomes: list[ClusterOutcome]
    settings: EnsembleSettings
    bins: np.ndarray = field(default_factory=lambda: np.linspace(-1.0, 1.0, 41))

    @property
    def ok(self) -> list[ClusterOutcome]:
        return [o for o in self.outcomes if o.error is None]

    @property
    def n_failed(self) -> int:
        return len(self.outcomes) - len(self.ok)

    @property
    def adpulse(self) -> np.ndarray:
        return np.array([o.adpulse for o in self.ok])

    @property
    def pulsepol(self) -> np.ndarray:
        return np.array([o.pulsepol for o in self.ok])

    @property
    def metrics(self) -> np.ndarray:
        return np.array([o.metric if o.metric is not None else np.nan for o in self.ok])

    def histogram(self, protocol: str) -> np.ndarray:
        vals = self.adpulse if protocol == "adpulse" else self.pulsepol
        counts, _ = np.histogram(np.clip(vals, -1.0, 1.0), bins=self.bins)
        return counts

    def summary(self) -> dict:
        ad, pp = self.adpulse, self.pulsepol
        deficit = ad - pp
        m = self.metrics
        rho = float("nan")
        finite = np.isfinite(m)
        if finite.sum() >= 3 and np.ptp(deficit[finite]) > 0:
            rho = float(spearmanr(m[finite], deficit[finite]).statistic)
        r_ad, r_pp = self.settings.cycle_counts()
        t_ad, t_pp = self.settings.operating_times()
        return {
            "n_clusters": len(self.outcomes),
            "n_failed": self.n_failed,
            "adpulse_mean": float(ad.mean()) if len(ad) else float("nan"),
            "adpulse_std": float(ad.std()) if len(ad) else float("nan"),
            "pulsepol_mean": float(pp.mean()) if len(pp) else float("nan"),
            "pulsepol_std": float(pp.std()) if len(pp) else float("nan"),
            "spearman_metric_vs_deficit": rho,
            "reinit_adpulse": r_ad,
            "reinit_pulsepol": r_pp,
            "operating_time_adpulse_s": t_ad,
            "operating_time_pulsepol_s": t_pp,
            "b0_t": self.settings.b0,
            "histogram_bins": self.bins.tolist(),
            "histogram_adpulse": self.histogram("adpulse").tolist(),
            "histogram_pulsepol": self.histogram("pulsepol").tolist(),
        }

    def spearman(self) -> float:
        return self.summary()["spearman_metric_vs_deficit"]

    def to_json(self, path) -> None:
        doc = {"summary": self.summary(), "settings": asdict(self.settings)}
        with open(path, "w") as fh:
            json.dump(doc, fh, indent=2, sort_keys=True, allow_nan=True)
            fh.write("\n")

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["cluster", "adpulse", "pulsepol", "dark_state_metric", "error"])
            for o in self.outcomes:
                w.writerow([o.index, repr(o.adpulse), repr(o.pulsepol), "" if o.metric is None else repr(o.metric), o.error or ""])

    def write_traces(self, directory) -> list[str]:
        from pathlib import Path

        paths = []
        for o in self.outcomes:
            if not o.traces:
                continue
            p = Path(directory) / f"trace_cluster_{o.index}.csv"
            with open(p, "w", newline="") as fh:
                w = csv.writer(fh, lineterminator="\n")
                w.writerow(["protocol", "time_s", "mean_polarization"])
                for name in ("adpulse", "pulsepol"):
                    for t, v in zip(o.traces[name]["times"], o.traces[name]["mean"]):
                        w.writerow([name, repr(t), repr(v)])
            paths.append(str(p))
        return paths


def run_ensemble(
    clusters: Sequence[ClusterSpec],
    settings: EnsembleSettings = EnsembleSettings(),
    workers: int = 1,
) -> EnsembleResult:
    """Run both protocols on every cluster at equal operating time.

    Per-cluster failures are recorded on the outcome and the ensemble continues.
    """
    settings.cycle_counts()  # budget parity is checked once, before any work
    jobs = [(c, settings, i) for i, c in enumerate(clusters)]
    outcomes = parallel_map(_cluster_job, jobs, workers)
    return EnsembleResult(outcomes, settings)
