"""World stepping: ego double-integrator along its path, non-ego replay with
an optional not-at-fault IDM override during evaluation."""

import math
from dataclasses import dataclass, field

import numpy as np

from .geometry import (DegeneratePath, OrientedBox, Pose, boxes_intersect,
                       heading_at, pose_at, project_to_path, wrap_angle)
from .idm import A_CLIP, DT, IdmParams, idm_accel, integrate_step
from .scenario import extract_path

H_OVERRIDE = 2.0  # s, constant-velocity horizon for the impending-collision check
FOLLOW_LATERAL = 2.0
FOLLOW_HEADING = math.radians(30.0)

RUNNING = "running"
LEFT_SCENE = "left_scene"
COLLISION = "collision"


class NoEligibleTrack(RuntimeError):
    pass


class SteppedAfterDone(RuntimeError):
    pass


@dataclass
class EgoState:
    track_id: int
    path: object
    s: float
    v: float
    length: float
    width: float


@dataclass
class _OverriddenVehicle:
    path: object
    s: float
    v: float
    length: float
    width: float
    idm: IdmParams


@dataclass
class StepInfo:
    commanded_accel: float
    realized_accel: float
    displacement: float


class SimState:
    """One environment instance; confined to a single rollout worker."""

    def __init__(self, dataset, ego, spawn_frame, eval_mode):
        self.dataset = dataset
        self.ego = ego
        self.spawn_frame = spawn_frame
        self.time_step = 0
        self.last_heading = None
        self.done = RUNNING
        self.eval_mode = eval_mode
        self.overridden = {}  # track_id -> _OverriddenVehicle
        self._path_cache = {}

    def track_path(self, tid):
        if tid not in self._path_cache:
            track = self.dataset.tracks[tid]
            self._path_cache[tid] = (extract_path(track), track.arc_positions())
        return self._path_cache[tid]

    @property
    def global_frame(self):
        return self.spawn_frame + self.time_step

    def ego_pose(self):
        return pose_at(self.ego.path, self.ego.s)

    @property
    def yaw_rate(self):
        if self.last_heading is None:
            return 0.0
        h = heading_at(self.ego.path, self.ego.s)
        return wrap_angle(h - self.last_heading) / DT

    def non_ego_states(self):
        """(tid, x, y, vx, vy, psi, length, width) for every present vehicle."""
        out = []
        for rec in self.dataset.vehicles_at(self.global_frame, exclude=self.ego.track_id):
            if rec[0] in self.overridden:
                continue
            out.append(rec)
        for tid, ov in self.overridden.items():
            if ov.s >= ov.path.total_length:
                continue
            p = pose_at(ov.path, ov.s)
            h = heading_at(ov.path, ov.s)
            out.append((tid, p.x, p.y, ov.v * math.cos(h), ov.v * math.sin(h),
                        h, ov.length, ov.width))
        return out

    def neighbors(self):
        return [(r[0], r[1], r[2], r[3], r[4]) for r in self.non_ego_states()]

    def ego_box(self):
        return OrientedBox(self.ego_pose(), self.ego.length, self.ego.width)


def eligible_tracks(dataset):
    out = []
    for tid in sorted(dataset.tracks):
        t = dataset.tracks[tid]
        if t.n_frames < 3:
            continue
        try:
            p = extract_path(t)
        except DegeneratePath:
            continue
        if p.total_length >= 1.0:
            out.append(tid)
    return out


def reset(dataset, ego_track_id=None, rng_seed=0, eval_mode=False):
    if ego_track_id is None:
        cands = eligible_tracks(dataset)
        if not cands:
            raise NoEligibleTrack("dataset has no movable tracks")
        rng = np.random.default_rng(rng_seed)
        ego_track_id = cands[int(rng.integers(len(cands)))]
    track = dataset.tracks[ego_track_id]
    path = extract_path(track)
    v0 = float(np.hypot(track.vxy[0, 0], track.vxy[0, 1]))
    ego = EgoState(track_id=ego_track_id, path=path, s=0.0, v=v0,
                   length=track.length, width=track.width)
    return SimState(dataset, ego, spawn_frame=track.start_frame, eval_mode=eval_mode)


def _vehicle_box(rec):
    _, x, y, _, _, psi, length, width = rec
    return OrientedBox(Pose(x, y, psi), length, width)


def check_collision(state):
    ego_box = state.ego_box()
    for rec in state.non_ego_states():
        if boxes_intersect(ego_box, _vehicle_box(rec)):
            return True
    return False


def step(state, accel):
    """Advance one 0.1 s frame under the commanded ego acceleration."""
    if state.done != RUNNING:
        raise SteppedAfterDone(state.done)
    if not math.isfinite(accel):
        raise ValueError("accel must be finite")
    a = min(max(float(accel), -A_CLIP), A_CLIP)

    old_heading = heading_at(state.ego.path, state.ego.s)
    v_old = state.ego.v
    if state.eval_mode:
        not_at_fault_override(state)

    v_new, ds = integrate_step(state.ego.v, a)
    state.ego.s += ds
    state.ego.v = v_new
    state.last_heading = old_heading
    state.time_step += 1
    _advance_overridden(state)

    info = StepInfo(commanded_accel=a, realized_accel=(v_new - v_old) / DT,
                    displacement=ds)
    if check_collision(state):
        state.done = COLLISION
    elif state.ego.s >= state.ego.path.total_length:
        state.done = LEFT_SCENE
    return state, info


def select_follow_vehicle(state):
    """Closest on-path, heading-aligned vehicle ahead of the ego, or None."""
    best = None
    best_gap = math.inf
    for rec in state.non_ego_states():
        tid, x, y, vx, vy, psi = rec[:6]
        s_proj, lat = project_to_path(state.ego.path, (x, y))
        if lat > FOLLOW_LATERAL or s_proj <= state.ego.s:
            continue
        if abs(wrap_angle(psi - heading_at(state.ego.path, s_proj))) >= FOLLOW_HEADING:
            continue
        gap = s_proj - state.ego.s
        if gap < best_gap:
            best_gap = gap
            best = tid
    return best


def not_at_fault_override(state, horizon=H_OVERRIDE):
    """Switch replayed vehicles on a constant-velocity collision course with
    the ego to IDM control along their own path. The switch is permanent."""
    n_steps = int(round(horizon / DT))
    ego_pose0 = state.ego_pose()
    ego_s = state.ego.s + state.ego.v * DT * np.arange(n_steps + 1)
    for rec in state.dataset.vehicles_at(state.global_frame, exclude=state.ego.track_id):
        tid, x, y, vx, vy, psi, length, width = rec
        if tid in state.overridden:
            continue
        # not-at-fault only: the vehicle must be trailing the ego on its own
        # path (a would-be rear-ender); leaders the ego runs into stay replayed
        track = state.dataset.tracks[tid]
        try:
            path, arc = state.track_path(tid)
        except DegeneratePath:
            continue
        i = track.frame_index(state.global_frame)
        s_here = float(arc[i])
        s_e, lat_e = project_to_path(path, (ego_pose0.x, ego_pose0.y))
        if not (lat_e <= FOLLOW_LATERAL and s_e > s_here):
            continue
        hit = False
        for k in range(n_steps + 1):
            ep = pose_at(state.ego.path, float(ego_s[k]))
            ebox = OrientedBox(ep, state.ego.length, state.ego.width)
            obox = OrientedBox(Pose(x + vx * DT * k, y + vy * DT * k, psi),
                               length, width)
            if boxes_intersect(ebox, obox):
                hit = True
                break
        if hit:
            state.overridden[tid] = _OverriddenVehicle(
                path=path, s=s_here, v=float(math.hypot(vx, vy)),
                length=length, width=width, idm=IdmParams())
    return state


def _advance_overridden(state):
    ego_pose = state.ego_pose()
    for ov in state.overridden.values():
        if ov.s >= ov.path.total_length:
            continue
        s_e, lat = project_to_path(ov.path, (ego_pose.x, ego_pose.y))
        if lat <= FOLLOW_LATERAL and s_e > ov.s:
            gap = s_e - ov.s - 0.5 * (ov.length + state.ego.length)
            a = idm_accel(gap, ov.v, state.ego.v, ov.idm)
        else:
            a = idm_accel(None, ov.v, 0.0, ov.idm)
        ov.v, ds = integrate_step(ov.v, a)
        ov.s += ds
