"""Ego-centric feature encoding: speed, yaw rate, and 5 x 72-degree sectors."""

import math
from dataclasses import dataclass, field

import numpy as np

from .geometry import wrap_angle

N_SECTORS = 5
SECTOR_WIDTH = 2.0 * math.pi / N_SECTORS
OBS_DIM = 2 + 5 * N_SECTORS

# vector layout: [speed, yaw_rate] + per sector (present, rel_x, rel_y, rel_vx, rel_vy)
FEATURE_NAMES = ["ego_speed", "ego_yaw_rate"] + [
    f"sector{k}_{f}" for k in range(N_SECTORS)
    for f in ("present", "rel_x", "rel_y", "rel_vx", "rel_vy")
]


@dataclass(frozen=True)
class ObsConfig:
    r_max: float = 50.0  # sensing range, also the absent-vehicle rel_x sentinel


def sector_of(bearing):
    """Sector index for an ego-frame bearing; sector 0 is centered dead ahead."""
    return int(math.floor((wrap_angle(bearing) + 0.5 * SECTOR_WIDTH) / SECTOR_WIDTH)) % N_SECTORS


def encode_features(ego_x, ego_y, ego_heading, ego_speed, yaw_rate, neighbors,
                    config=ObsConfig()):
    """Build the OBS_DIM feature vector.

    neighbors: iterable of (track_id, x, y, vx, vy). Per sector the
    center-to-center closest neighbor within r_max is reported in the ego
    frame; ties go to the lower track id.
    """
    obs = np.zeros(OBS_DIM)
    obs[0] = ego_speed
    obs[1] = yaw_rate
    c, s = math.cos(ego_heading), math.sin(ego_heading)
    evx, evy = ego_speed * c, ego_speed * s
    best = [None] * N_SECTORS  # (dist, track_id, dx, dy, dvx, dvy)
    for tid, x, y, vx, vy in neighbors:
        dx, dy = x - ego_x, y - ego_y
        dist = math.hypot(dx, dy)
        if dist > config.r_max:
            continue
        k = sector_of(math.atan2(dy, dx) - ego_heading)
        cand = (dist, tid, dx, dy, vx - evx, vy - evy)
        if best[k] is None or cand[:2] < best[k][:2]:
            best[k] = cand
    for k in range(N_SECTORS):
        base = 2 + 5 * k
        if best[k] is None:
            obs[base + 1] = config.r_max
        else:
            _, _, dx, dy, dvx, dvy = best[k]
            obs[base] = 1.0
            obs[base + 1] = c * dx + s * dy
            obs[base + 2] = -s * dx + c * dy
            obs[base + 3] = c * dvx + s * dvy
            obs[base + 4] = -s * dvx + c * dvy
    return obs


def encode(state, config=ObsConfig()):
    """Encode a running simulator state (duck-typed snapshot interface)."""
    pose = state.ego_pose()
    return encode_features(pose.x, pose.y, pose.heading, state.ego.v,
                           state.yaw_rate, state.neighbors(), config)


@dataclass
class NormStats:
    mean: np.ndarray
    std: np.ndarray

    @classmethod
    def fit(cls, rows):
        rows = np.asarray(rows, dtype=float)
        return cls(mean=rows.mean(axis=0), std=rows.std(axis=0))


def normalize(x, stats):
    return (np.asarray(x, dtype=float) - stats.mean) / np.maximum(stats.std, 1e-6)


def denormalize(z, stats):
    return np.asarray(z, dtype=float) * np.maximum(stats.std, 1e-6) + stats.mean
