import json
import math

import numpy as np
import pytest

from adpulse.ensemble import (
    AdPulseSettings,
    ClusterSpec,
    EnsembleSettings,
    PulsePolSettings,
    dark_state_metric,
    run_cluster,
    run_ensemble,
    sample_clusters,
)
from adpulse.hamiltonian import PhysicsError

TWO_PI = 2 * math.pi


def test_degenerate_band():
    (c,) = sample_clusters(1, 1, (30e3, 30e3), seed=5)
    a_x, a_z = c.couplings[0]
    assert a_x == pytest.approx(TWO_PI * 30e3)
    assert abs(a_z) == pytest.approx(TWO_PI * 30e3)


def test_sampling_is_deterministic_and_prefix_stable():
    a = sample_clusters(10, 3, seed=11)
    b = sample_clusters(20, 3, seed=11)
    assert a == b[:10]
    assert a != sample_clusters(10, 3, seed=12)


def test_sampling_statistics():
    cl = sample_clusters(10_000, 1, seed=0)
    az = np.array([abs(c.couplings[0][1]) for c in cl]) / TWO_PI
    ax = np.array([c.couplings[0][0] for c in cl]) / TWO_PI
    assert az.mean() == pytest.approx(35e3, abs=1e3)
    assert np.all(ax > 0)
    signs = np.sign([c.couplings[0][1] for c in cl])
    assert 0.45 < np.mean(signs > 0) < 0.55
    unsigned = sample_clusters(200, 1, signed_az=False, seed=0)
    assert all(c.couplings[0][1] > 0 for c in unsigned)


def test_sampling_validation():
    with pytest.raises(ValueError):
        sample_clusters(2, 2, (60e3, 10e3))
    with pytest.raises(ValueError):
        sample_clusters(2, 0)


def test_dark_state_metric():
    w = TWO_PI * 1e3
    assert dark_state_metric(ClusterSpec(((30 * w, 20 * w), (40 * w, 20 * w)))) == 0.0
    assert dark_state_metric(ClusterSpec(((30 * w, 20 * w), (20 * w, 50 * w)))) == pytest.approx(1.0)
    with pytest.raises(ValueError):
        dark_state_metric(ClusterSpec(((30 * w, 20 * w),)))


def test_budget_parity():
    s = EnsembleSettings()
    r_ad, r_pp = s.cycle_counts()
    t_ad, t_pp = s.operating_times()
    assert abs(t_ad - t_pp) / t_ad < 0.01
    assert abs(t_ad - s.budget) / s.budget < 0.1
    # a 1.2 ms AdPulse cycle against ~0.5 ms PulsePol packets cannot be matched
    with pytest.raises(PhysicsError):
        EnsembleSettings(budget=1e-3, pulsepol=PulsePolSettings(n_p=40)).cycle_counts()


def test_single_strong_spin_both_protocols_polarize():
    # strongest coupling for which A_x / omega_L stays below ~0.2 at the ensemble field
    w = TWO_PI * 1e3
    cluster = ClusterSpec(((40 * w, 15 * w),))
    out = run_cluster(cluster, EnsembleSettings())
    assert out.error is None
    assert out.adpulse > 0.9 and out.pulsepol > 0.9
    assert out.adpulse >= out.pulsepol - 0.05


def test_dark_pair_saturates_pulsepol():
    w = TWO_PI * 1e3
    cluster = ClusterSpec(((45 * w, 30 * w), (50 * w, 31 * w)))
    assert dark_state_metric(cluster) < 0.1
    out = run_cluster(cluster, EnsembleSettings())
    assert out.pulsepol < out.adpulse


def test_ensemble_result_outputs(tmp_path):
    clusters = sample_clusters(4, 2, seed=3)
    settings = EnsembleSettings(adpulse=AdPulseSettings(), pulsepol=PulsePolSettings(), keep_traces=True)
    res = run_ensemble(clusters, settings, workers=2)
    assert res.n_failed == 0
    assert np.all(np.abs(res.adpulse) <= 1)
    s = res.summary()
    assert sum(s["histogram_adpulse"]) == 4
    res.to_json(tmp_path / "e.json")
    assert json.loads((tmp_path / "e.json").read_text())["summary"]["n_clusters"] == 4
    res.to_csv(tmp_path / "e.csv")
    assert (tmp_path / "e.csv").read_text().splitlines()[0] == "cluster,adpulse,pulsepol,dark_state_metric,error"
    assert len(res.write_traces(tmp_path)) == 4
    again = run_ensemble(clusters, settings, workers=1)
    assert np.array_equal(again.adpulse, res.adpulse) and np.array_equal(again.pulsepol, res.pulsepol)


def test_failing_cluster_is_recorded():
    w = TWO_PI * 1e3
    huge = ClusterSpec(tuple((30 * w, (10 + i) * w) for i in range(9)))
    res = run_ensemble([huge], EnsembleSettings())
    assert res.n_failed == 1
    assert "exceeds" in res.outcomes[0].error
