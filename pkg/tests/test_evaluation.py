import json
import math
import os

import numpy as np
import pytest

from shail.baselines import ExpertReplayPolicy, IdmPolicy, make_builtin
from shail.evaluation import (EvalReport, aggregate_table, evaluate,
                              format_report, jsd)
from shail.idm import A_CLIP


def test_jsd_identical_is_zero():
    rng = np.random.default_rng(0)
    x = rng.normal(size=5000)
    assert jsd(x, x) == 0.0


def test_jsd_disjoint_is_log2():
    a = np.full(1000, -4.0)
    b = np.full(1000, 4.0)
    assert jsd(a, b) == pytest.approx(math.log(2.0), abs=1e-6)


def test_jsd_symmetric_and_bounded():
    rng = np.random.default_rng(1)
    a = rng.normal(-1, 1, 4000)
    b = rng.normal(1, 2, 4000)
    assert jsd(a, b) == pytest.approx(jsd(b, a), abs=1e-12)
    assert 0.0 <= jsd(a, b) <= math.log(2.0)


def gaussian_pdf(x, mu, sd):
    return np.exp(-0.5 * ((x - mu) / sd) ** 2) / (sd * math.sqrt(2 * math.pi))


def test_jsd_two_gaussians_matches_quadrature():
    """Histogram estimator on large samples vs trapezoidal quadrature of the
    continuous Jensen-Shannon integrand."""
    mu1, sd1, mu2, sd2 = -1.0, 0.8, 1.0, 1.2
    x = np.linspace(-A_CLIP, A_CLIP, 40001)
    p = gaussian_pdf(x, mu1, sd1)
    q = gaussian_pdf(x, mu2, sd2)
    m = 0.5 * (p + q)
    integrand = 0.5 * p * np.log(p / m) + 0.5 * q * np.log(q / m)
    oracle = float(np.trapezoid(integrand, x))
    rng = np.random.default_rng(0)
    est = jsd(rng.normal(mu1, sd1, 400000), rng.normal(mu2, sd2, 400000))
    assert abs(est - oracle) < 0.01


def test_expert_replay_evaluation_is_perfect(synth_dataset):
    report = evaluate(ExpertReplayPolicy(), synth_dataset, n_episodes=4, seed=0)
    assert report.success_rate == 1.0
    assert report.rmse_10s == 0.0
    assert report.mean_abs_dv == 0.0
    assert report.accel_jsd == 0.0
    assert report.avg_travel_distance > 10.0
    assert report.n_episodes == 4
    assert len(report.episodes) == 4


def test_evaluate_deterministic(synth_dataset):
    r1 = evaluate(IdmPolicy(), synth_dataset, n_episodes=3, seed=5)
    r2 = evaluate(IdmPolicy(), synth_dataset, n_episodes=3, seed=5)
    assert json.dumps(r1.to_dict(), sort_keys=True) == \
        json.dumps(r2.to_dict(), sort_keys=True)
    r3 = evaluate(IdmPolicy(), synth_dataset, n_episodes=3, seed=6)
    assert [e["ego_track_id"] for e in r3.episodes] != \
        [e["ego_track_id"] for e in r1.episodes] or \
        r3.to_dict() != r1.to_dict()


def test_evaluate_writes_replay_logs(tmp_path, synth_dataset):
    d = str(tmp_path / "replays")
    report = evaluate(ExpertReplayPolicy(), synth_dataset, n_episodes=2,
                      seed=1, replay_dir=d)
    for i, ep in enumerate(report.episodes):
        path = os.path.join(d, f"episode_{i:03d}.jsonl")
        lines = [json.loads(l) for l in open(path)]
        assert len(lines) == ep["n_steps"]
        assert {"time", "ego", "accel", "done", "non_ego"} <= set(lines[0])


def test_evaluate_rejects_zero_episodes(synth_dataset):
    with pytest.raises(ValueError):
        evaluate(IdmPolicy(), synth_dataset, n_episodes=0, seed=0)


def test_format_report_and_aggregate():
    rep = EvalReport(success_rate=1.0, avg_travel_distance=50.0, rmse_10s=None,
                     mean_abs_dv=0.25, accel_jsd=0.1, n_episodes=2)
    text = format_report(rep, label="idm")
    lines = text.splitlines()
    assert lines[0].split() == ["Model", "Success", "Travel", "RMSE_10s",
                                "|dV_avg|", "Accel", "JSD"]
    assert "---" in lines[1] and "idm" in lines[1]
    rep2 = EvalReport(success_rate=0.5, avg_travel_distance=40.0, rmse_10s=1.0,
                      mean_abs_dv=0.5, accel_jsd=0.2, n_episodes=2)
    table = aggregate_table([("idm", [rep, rep2])])
    assert "+/-" in table
    assert "0.750" in table  # mean success over the two runs
