"""Rollout evaluation: success rate, travel distance, position RMSE at 10 s,
average-speed gap to the expert, and the acceleration Jensen-Shannon
divergence."""

import json
import math
import os
from dataclasses import dataclass, field

import numpy as np

from .baselines import EndOfTrack, ExpertReplayPolicy
from .idm import A_CLIP, DT
from .simulator import COLLISION, RUNNING, eligible_tracks, reset, step

RMSE_FRAME = 100  # 10 s at 10 Hz


@dataclass
class EvalReport:
    success_rate: float
    avg_travel_distance: float
    rmse_10s: float          # None when no episode survives 10 s under both
    mean_abs_dv: float
    accel_jsd: float
    n_episodes: int
    episodes: list = field(default_factory=list)

    def to_dict(self):
        return {
            "success_rate": self.success_rate,
            "avg_travel_distance": self.avg_travel_distance,
            "rmse_10s": self.rmse_10s,
            "mean_abs_dv": self.mean_abs_dv,
            "accel_jsd": self.accel_jsd,
            "n_episodes": self.n_episodes,
            "episodes": self.episodes,
        }


def jsd(samples_a, samples_b, n_bins=100, lo=-A_CLIP, hi=A_CLIP):
    """Jensen-Shannon divergence (nats) between histogram densities fitted on
    a shared equal-width binning of [lo, hi]."""
    edges = np.linspace(lo, hi, n_bins + 1)
    pa, _ = np.histogram(np.clip(samples_a, lo, hi), bins=edges)
    pb, _ = np.histogram(np.clip(samples_b, lo, hi), bins=edges)
    p = pa + 1e-9
    q = pb + 1e-9
    p = p / p.sum()
    q = q / q.sum()
    m = 0.5 * (p + q)
    kl = lambda u, v: float(np.sum(u * np.log(u / v)))
    return 0.5 * kl(p, m) + 0.5 * kl(q, m)


def _rollout(policy, dataset, ego_track_id, rng, max_steps, log_path=None):
    """Run one eval-mode episode; returns trajectory records."""
    state = reset(dataset, ego_track_id=ego_track_id, eval_mode=True)
    policy.begin_episode(state)
    xs, ys, speeds, accels = [], [], [state.ego.v], []
    records = []
    status = RUNNING
    while state.done == RUNNING and state.time_step < max_steps:
        try:
            a = policy.act(state, rng)
        except EndOfTrack:
            status = "end_of_track"
            break
        state, info = step(state, a)
        pose = state.ego_pose()
        xs.append(pose.x)
        ys.append(pose.y)
        speeds.append(state.ego.v)
        accels.append(info.commanded_accel)
        if log_path is not None:
            records.append({
                "time": round(state.time_step * DT, 3),
                "ego": {"s": state.ego.s, "v": state.ego.v,
                        "x": pose.x, "y": pose.y,
                        "heading": pose.heading,
                        "length": state.ego.length, "width": state.ego.width},
                "accel": a,
                "done": state.done,
                "overridden": sorted(state.overridden),
                "non_ego": [{"id": r[0], "x": r[1], "y": r[2], "psi": r[5],
                             "length": r[6], "width": r[7]}
                            for r in state.non_ego_states()],
            })
        status = state.done
    if log_path is not None:
        with open(log_path, "w") as f:
            for r in records:
                f.write(json.dumps(r, sort_keys=True) + "\n")
    return {
        "status": status,
        "collided": state.done == COLLISION,
        "travel": state.ego.s,
        "xs": xs, "ys": ys,
        "speeds": speeds,
        "accels": accels,
    }


def evaluate(policy, dataset, n_episodes, seed, max_steps=1000,
             replay_dir=None):
    """Evaluate a policy with the not-at-fault override active; the expert
    replay of the same ego track is the per-episode reference."""
    if n_episodes < 1:
        raise ValueError("n_episodes must be >= 1")
    cands = eligible_tracks(dataset)
    expert = ExpertReplayPolicy()
    episodes = []
    sq_errs = []
    dvs = []
    pooled_policy, pooled_expert = [], []
    if replay_dir:
        os.makedirs(replay_dir, exist_ok=True)
    for i in range(n_episodes):
        rng = np.random.default_rng([seed, i])
        tid = cands[int(rng.integers(len(cands)))]
        log_path = (os.path.join(replay_dir, f"episode_{i:03d}.jsonl")
                    if replay_dir else None)
        ref = _rollout(expert, dataset, tid, rng, max_steps)
        roll = _rollout(policy, dataset, tid, rng, max_steps, log_path=log_path)
        rec = {
            "episode": i,
            "ego_track_id": tid,
            "success": not roll["collided"],
            "travel_distance": roll["travel"],
            "status": roll["status"],
            "n_steps": len(roll["accels"]),
        }
        if len(roll["xs"]) >= RMSE_FRAME and len(ref["xs"]) >= RMSE_FRAME:
            dx = roll["xs"][RMSE_FRAME - 1] - ref["xs"][RMSE_FRAME - 1]
            dy = roll["ys"][RMSE_FRAME - 1] - ref["ys"][RMSE_FRAME - 1]
            sq_errs.append(dx * dx + dy * dy)
            rec["pos_err_10s"] = math.hypot(dx, dy)
        dvs.append(abs(float(np.mean(roll["speeds"])) -
                       float(np.mean(ref["speeds"]))))
        pooled_policy.extend(roll["accels"])
        pooled_expert.extend(ref["accels"])
        episodes.append(rec)
    return EvalReport(
        success_rate=float(np.mean([e["success"] for e in episodes])),
        avg_travel_distance=float(np.mean([e["travel_distance"] for e in episodes])),
        rmse_10s=(math.sqrt(float(np.mean(sq_errs))) if sq_errs else None),
        mean_abs_dv=float(np.mean(dvs)),
        accel_jsd=jsd(pooled_policy, pooled_expert),
        n_episodes=n_episodes,
        episodes=episodes,
    )


METRIC_COLUMNS = [("success_rate", "Success"), ("avg_travel_distance", "Travel"),
                  ("rmse_10s", "RMSE_10s"), ("mean_abs_dv", "|dV_avg|"),
                  ("accel_jsd", "Accel JSD")]


def format_report(report, label="policy"):
    cells = [label]
    for key, _ in METRIC_COLUMNS:
        v = getattr(report, key)
        cells.append("---" if v is None else f"{v:.3f}")
    header = ["Model"] + [h for _, h in METRIC_COLUMNS]
    widths = [max(len(h), len(c)) for h, c in zip(header, cells)]
    lines = ["  ".join(h.rjust(w) for h, w in zip(header, widths)),
             "  ".join(c.rjust(w) for c, w in zip(cells, widths))]
    return "\n".join(lines)


def aggregate_table(labelled_reports):
    """mean +/- 2 SD rows over repeated runs per label."""
    lines = []
    header = ["Model"] + [h for _, h in METRIC_COLUMNS]
    rows = []
    for label, reports in labelled_reports:
        cells = [label]
        for key, _ in METRIC_COLUMNS:
            vals = [getattr(r, key) for r in reports if getattr(r, key) is not None]
            if not vals:
                cells.append("---")
            elif len(vals) == 1:
                cells.append(f"{vals[0]:.3f}")
            else:
                cells.append(f"{np.mean(vals):.3f} +/- {2 * np.std(vals):.3f}")
        rows.append(cells)
    widths = [max(len(header[j]), *(len(r[j]) for r in rows))
              for j in range(len(header))]
    lines.append("  ".join(h.rjust(w) for h, w in zip(header, widths)))
    for r in rows:
        lines.append("  ".join(c.rjust(w) for c, w in zip(r, widths)))
    return "\n".join(lines)
