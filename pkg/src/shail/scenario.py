"""Track datasets: CSV ingest, expert transition extraction, and the
synthetic roundabout generator used in place of license-gated recordings."""

import csv
import io
import logging
import math
from dataclasses import dataclass, field

import numpy as np

from . import observation
from .geometry import (DegeneratePath, build_path, heading_at, pose_at,
                       project_to_path, wrap_angle)
from .idm import A_CLIP, DT, IdmParams, idm_accel, integrate_step

FRAME_MS = 100
VEHICLE_TYPES = {"car", "truck", "bus", "vehicle"}
CSV_COLUMNS = ["track_id", "frame_id", "timestamp_ms", "agent_type",
               "x", "y", "vx", "vy", "psi_rad", "length", "width"]


class ParseError(ValueError):
    def __init__(self, line, column, msg=""):
        self.line = line
        self.column = column
        super().__init__(f"line {line}, column {column}: {msg}")


class GapError(ValueError):
    """Track timestamps are not uniform at 100 ms."""


class ConfigError(ValueError):
    pass


@dataclass
class VehicleTrack:
    track_id: int
    timestamps_ms: np.ndarray  # (n,) int, strictly increasing, 100 ms spacing
    xy: np.ndarray             # (n, 2)
    vxy: np.ndarray            # (n, 2)
    psi: np.ndarray            # (n,)
    length: float
    width: float

    @property
    def n_frames(self):
        return len(self.timestamps_ms)

    @property
    def start_frame(self):
        return int(self.timestamps_ms[0]) // FRAME_MS

    def speeds(self):
        return np.hypot(self.vxy[:, 0], self.vxy[:, 1])

    def frame_index(self, global_frame):
        """Index into this track for a global frame number, or None."""
        i = global_frame - self.start_frame
        return i if 0 <= i < self.n_frames else None

    def arc_positions(self):
        """Cumulative along-track displacement of each frame (dedup-safe)."""
        d = np.hypot(*np.diff(self.xy, axis=0).T)
        return np.concatenate([[0.0], np.cumsum(d)])


@dataclass
class TrackDataset:
    tracks: dict
    scene_bounds: tuple  # (xmin, ymin, xmax, ymax)

    @classmethod
    def from_tracks(cls, tracks):
        if tracks:
            allxy = np.concatenate([t.xy for t in tracks.values()])
            bounds = (float(allxy[:, 0].min()), float(allxy[:, 1].min()),
                      float(allxy[:, 0].max()), float(allxy[:, 1].max()))
        else:
            bounds = (0.0, 0.0, 0.0, 0.0)
        return cls(tracks=tracks, scene_bounds=bounds)

    def last_frame(self):
        return max((t.start_frame + t.n_frames - 1 for t in self.tracks.values()),
                   default=0)

    def vehicles_at(self, global_frame, exclude=None):
        """(tid, x, y, vx, vy, psi, length, width) of every present vehicle."""
        out = []
        for tid, t in self.tracks.items():
            if tid == exclude:
                continue
            i = t.frame_index(global_frame)
            if i is None:
                continue
            out.append((tid, t.xy[i, 0], t.xy[i, 1], t.vxy[i, 0], t.vxy[i, 1],
                        t.psi[i], t.length, t.width))
        return out


@dataclass
class ExpertTransition:
    observation: np.ndarray
    action: float


def _check_uniform(ts, track_id):
    if len(ts) > 1 and not np.all(np.diff(ts) == FRAME_MS):
        raise GapError(f"track {track_id}: timestamps not uniform at {FRAME_MS} ms")


def parse_tracks(csv_text):
    reader = csv.reader(io.StringIO(csv_text))
    try:
        header = next(reader)
    except StopIteration:
        raise ParseError(1, 1, "empty file")
    if [h.strip() for h in header] != CSV_COLUMNS:
        raise ParseError(1, 1, f"expected header {','.join(CSV_COLUMNS)}")
    rows = {}
    for lineno, row in enumerate(reader, start=2):
        if not row:
            continue
        if len(row) != len(CSV_COLUMNS):
            raise ParseError(lineno, len(row) + 1, "wrong field count")
        if row[3].strip().lower() not in VEHICLE_TYPES:
            continue
        try:
            tid = int(row[0])
        except ValueError:
            raise ParseError(lineno, 1, "bad track_id")
        try:
            ts = int(row[2])
            vals = [float(v) for v in row[4:]]
        except ValueError as e:
            raise ParseError(lineno, 3, str(e))
        rows.setdefault(tid, []).append((ts, *vals))
    tracks = {}
    for tid, rr in rows.items():
        rr.sort(key=lambda r: r[0])
        arr = np.array(rr, dtype=float)
        ts = arr[:, 0].astype(np.int64)
        _check_uniform(ts, tid)
        tracks[tid] = VehicleTrack(
            track_id=tid, timestamps_ms=ts, xy=arr[:, 1:3].copy(),
            vxy=arr[:, 3:5].copy(), psi=arr[:, 5].copy(),
            length=float(arr[0, 6]), width=float(arr[0, 7]))
    return TrackDataset.from_tracks(tracks)


def serialize_tracks(dataset):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_COLUMNS)
    for tid in sorted(dataset.tracks):
        t = dataset.tracks[tid]
        for i in range(t.n_frames):
            w.writerow([tid, int(t.timestamps_ms[i]) // FRAME_MS,
                        int(t.timestamps_ms[i]), "car",
                        repr(float(t.xy[i, 0])), repr(float(t.xy[i, 1])),
                        repr(float(t.vxy[i, 0])), repr(float(t.vxy[i, 1])),
                        repr(float(t.psi[i])),
                        repr(float(t.length)), repr(float(t.width))])
    return buf.getvalue()


def extract_path(track):
    """Path along the track's recorded positions (stationary frames merged)."""
    return build_path(track.xy)


def expert_actions(track, a_clip=A_CLIP):
    """Forward finite-difference accelerations of the recorded speed."""
    sp = track.speeds()
    raw = np.diff(sp) / DT
    n_clip = int(np.sum(np.abs(raw) > a_clip))
    if n_clip:
        logging.getLogger(__name__).warning(
            "track %d: clipped %d acceleration sample(s) to ±%g",
            track.track_id, n_clip, a_clip)
    return np.clip(raw, -a_clip, a_clip)


def expert_transitions(dataset, encoder_config=observation.ObsConfig(),
                       a_clip=A_CLIP):
    """(observation, acceleration) pairs with each track as the ego in turn."""
    out = []
    for tid in sorted(dataset.tracks):
        track = dataset.tracks[tid]
        if track.n_frames < 3:
            continue
        try:
            path = extract_path(track)
        except DegeneratePath:
            continue
        arc = track.arc_positions()
        actions = expert_actions(track, a_clip)
        speeds = track.speeds()
        prev_heading = None
        for i in range(track.n_frames - 1):
            h = heading_at(path, arc[i])
            yaw_rate = 0.0 if prev_heading is None else wrap_angle(h - prev_heading) / DT
            prev_heading = h
            pose = pose_at(path, arc[i])
            neighbors = [(n[0], n[1], n[2], n[3], n[4]) for n in
                         dataset.vehicles_at(track.start_frame + i, exclude=tid)]
            obs = observation.encode_features(pose.x, pose.y, h, speeds[i],
                                              yaw_rate, neighbors, encoder_config)
            out.append(ExpertTransition(observation=obs, action=float(actions[i])))
    return out


# ---------------------------------------------------------------------------
# synthetic roundabout


@dataclass
class SynthParams:
    ring_radius: float = 20.0
    n_arms: int = 4
    arrival_rate: float = 0.25       # vehicles/s over all arms
    idm_parameter_ranges: dict = field(default_factory=lambda: {
        "v0": (6.0, 10.0), "s0": (2.0, 4.0), "T": (0.5, 1.2),
        "a_max": (2.0, 3.0), "b": (2.0, 3.0)})
    gap_acceptance_s: float = 4.0
    noise_std: float = 0.3           # m/s^2 accel noise on the scripted drivers
    duration: float = 60.0
    seed: int = 0

    def validate(self):
        if self.ring_radius <= 0 or self.n_arms < 2 or self.duration <= 0:
            raise ConfigError("ring_radius, n_arms, duration must be positive")
        if self.arrival_rate < 0 or self.gap_acceptance_s <= 0 or self.noise_std < 0:
            raise ConfigError("bad rate/gap/noise parameters")
        for k, (lo, hi) in self.idm_parameter_ranges.items():
            if not (0 < lo <= hi):
                raise ConfigError(f"idm range {k}: need 0 < min <= max")


ARM_LENGTH = 30.0       # straight approach length before the entry fillet
FILLET_RADIUS = 6.0     # arm-to-ring transition arc radius
LANE_OFFSET = 2.0       # half-separation of an arm's in/out lanes
ARC_STEP = math.radians(2.0)
STOP_SETBACK = 2.0      # hold point distance before the entry fillet
DECISION_ZONE = 12.0    # gap acceptance is only decided this close to the hold point
FOLLOW_LATERAL = 2.0
FOLLOW_HEADING = math.radians(60.0)  # wide so fillet mergers count as leaders


def _arm_path(params, arm_in, arm_out):
    """Smooth route: straight approach lane, entry fillet, CCW ring arc, exit
    fillet, straight departure lane.  An arm's in/out lanes run parallel at
    +/-LANE_OFFSET from the radial, and heading is continuous throughout so
    chord lengths between recorded frames track the true arc lengths closely.

    Returns (path, merge_s, ring_end_s, th_merge): arc length where the path
    reaches the ring, arc length where it leaves it, and the angular position
    of the merge point."""
    R = params.ring_radius
    rho = FILLET_RADIUS
    e = LANE_OFFSET
    th_in = 2.0 * math.pi * arm_in / params.n_arms
    th_out = 2.0 * math.pi * arm_out / params.n_arms
    delta = math.asin((e + rho) / (R + rho))  # ring angle consumed by a fillet
    beta = math.sqrt((R + rho) ** 2 - (e + rho) ** 2)  # fillet start, radial coord
    turn = 0.5 * math.pi - delta              # heading change through a fillet

    def u(a):
        return np.array([math.cos(a), math.sin(a)])

    n_in = u(th_in + 0.5 * math.pi)   # lane offset directions
    n_out = u(th_out + 0.5 * math.pi)
    pts = []
    for d in np.linspace(beta + ARM_LENGTH, beta, 16):
        pts.append(d * u(th_in) + e * n_in)
    # entry fillet: center on the circle of radius R+rho, swept clockwise
    ce = (R + rho) * u(th_in + delta)
    t1 = beta * u(th_in) + e * n_in
    a1 = math.atan2((t1 - ce)[1], (t1 - ce)[0])
    n_f = max(int(turn / ARC_STEP), 4)
    for t in np.linspace(0.0, turn, n_f + 1)[1:]:
        pts.append(ce + rho * u(a1 - t))
    # ring arc from th_in+delta to th_out-delta, CCW
    start = th_in + delta
    span = (th_out - delta - start) % (2.0 * math.pi)
    n_arc = max(int(span / ARC_STEP), 4)
    for a in np.linspace(start, start + span, n_arc + 1)[1:]:
        pts.append(R * u(a))
    # exit fillet
    cx = (R + rho) * u(th_out - delta)
    a2 = math.atan2((R * u(th_out - delta) - cx)[1],
                    (R * u(th_out - delta) - cx)[0])
    for t in np.linspace(0.0, turn, n_f + 1)[1:]:
        pts.append(cx + rho * u(a2 - t))
    for d in np.linspace(beta, beta + ARM_LENGTH, 16)[1:]:
        pts.append(d * u(th_out) - e * n_out)
    path = build_path(pts)
    fillet_len = rho * turn
    merge_s = ARM_LENGTH + fillet_len
    ring_end_s = path.total_length - ARM_LENGTH - fillet_len
    return path, merge_s, ring_end_s, th_in + delta


class _SynthVehicle:
    def __init__(self, vid, path, merge_s, ring_end_s, th_merge, arm_in, idm,
                 length, width, v_init):
        self.vid = vid
        self.path = path
        self.merge_s = merge_s
        self.ring_end_s = ring_end_s
        self.th_merge = th_merge
        self.arm_in = arm_in
        self.idm = idm
        self.length = length
        self.width = width
        self.s = 0.0
        self.v = v_init
        self.accepted = False
        self.frames = []  # (frame, x, y, vx, vy, psi)


def _ring_angle(vehicle):
    """Angular position if the vehicle is currently on the ring, else None."""
    if not (vehicle.merge_s <= vehicle.s <= vehicle.ring_end_s):
        return None
    p = pose_at(vehicle.path, vehicle.s)
    return math.atan2(p.y, p.x)


def synth_roundabout(params):
    """Generate a deterministic-in-seed roundabout dataset.

    Scripted drivers: per-vehicle IDM sampled from the configured ranges, a
    gap-acceptance rule at ring entry, and zero-mean acceleration noise.
    """
    params.validate()
    rng = np.random.default_rng(params.seed)
    n_frames = int(round(params.duration / DT))
    R = params.ring_radius

    # seeded arrival schedule per arm
    spawns = []  # (frame, arm)
    per_arm_rate = params.arrival_rate / params.n_arms
    for arm in range(params.n_arms):
        t = 0.0
        while True:
            if per_arm_rate <= 0:
                break
            t += rng.exponential(1.0 / per_arm_rate)
            if t >= params.duration:
                break
            spawns.append((int(t / DT), arm))
    spawns.sort()

    active = []
    finished = []
    pending = list(spawns)
    next_id = 1

    for frame in range(n_frames):
        # spawn if the arm entrance is clear
        still_pending = []
        for sf, arm in pending:
            if sf > frame:
                still_pending.append((sf, arm))
                continue
            blocked = any(v.arm_in == arm and v.s < 10.0 for v in active)
            if blocked:
                still_pending.append((frame + 1, arm))
                continue
            arm_out = (arm + int(rng.integers(1, params.n_arms))) % params.n_arms
            idm = IdmParams(**{k: float(rng.uniform(lo, hi))
                               for k, (lo, hi) in params.idm_parameter_ranges.items()})
            route = _arm_path(params, arm, arm_out)
            veh = _SynthVehicle(next_id, *route, arm, idm,
                                length=float(rng.uniform(4.2, 4.8)),
                                width=float(rng.uniform(1.7, 1.9)),
                                v_init=float(min(idm.v0, rng.uniform(4.0, 7.0))))
            next_id += 1
            active.append(veh)
        pending = still_pending

        # record frames, then advance
        snapshot = []
        for v in active:
            p = pose_at(v.path, v.s)
            h = heading_at(v.path, v.s)
            v.frames.append((frame, p.x, p.y, v.v * math.cos(h), v.v * math.sin(h), h))
            snapshot.append((v, p, h))

        accels = []
        for v, p, h in snapshot:
            # follow the closest vehicle ahead on my path
            a = idm_accel(None, v.v, 0.0, v.idm)
            best_gap = math.inf
            for w, pw, hw in snapshot:
                if w is v:
                    continue
                s_proj, lat = project_to_path(v.path, (pw.x, pw.y))
                if lat > FOLLOW_LATERAL or s_proj <= v.s:
                    continue
                if abs(wrap_angle(hw - heading_at(v.path, s_proj))) >= FOLLOW_HEADING:
                    continue
                gap = s_proj - v.s - 0.5 * (v.length + w.length)
                if gap < best_gap:
                    best_gap = gap
                    a = min(a, idm_accel(gap, v.v, w.v, v.idm))
            # gap acceptance at ring entry: hold at the stop line until clear
            if not v.accepted:
                stop_line = ARM_LENGTH - STOP_SETBACK
                if v.s >= stop_line - DECISION_ZONE and _gap_clear(v, snapshot, params):
                    v.accepted = True
                else:
                    stop_gap = stop_line - v.s - 0.5 * v.length
                    a = min(a, idm_accel(stop_gap, v.v, 0.0, v.idm))
            a += float(rng.normal(0.0, params.noise_std))
            accels.append(min(max(a, -5.0), 4.0))

        survivors = []
        for (v, _, _), a in zip(snapshot, accels):
            v.v, ds = integrate_step(v.v, a)
            v.s += ds
            if v.s < v.path.total_length:
                survivors.append(v)
            else:
                finished.append(v)
        active = survivors

    tracks = {}
    for v in finished + active:
        if len(v.frames) < 2:
            continue
        arr = np.array(v.frames, dtype=float)
        tracks[v.vid] = VehicleTrack(
            track_id=v.vid,
            timestamps_ms=(arr[:, 0] * FRAME_MS).astype(np.int64),
            xy=arr[:, 1:3].copy(), vxy=arr[:, 3:5].copy(), psi=arr[:, 5].copy(),
            length=v.length, width=v.width)
    return TrackDataset.from_tracks(tracks)


def _time_to_merge(v):
    """Optimistic time for a merging vehicle to reach the ring, accelerating
    at half its comfortable rate toward its desired speed."""
    d = max(v.merge_s - v.s, 0.0)
    a = max(0.5 * v.idm.a_max, 0.5)
    v1 = max(v.idm.v0, v.v)
    t_acc = (v1 - v.v) / a
    d_acc = v.v * t_acc + 0.5 * a * t_acc * t_acc
    if d_acc >= d:
        return (-v.v + math.sqrt(v.v * v.v + 2.0 * a * d)) / a
    return t_acc + (d - d_acc) / v1


def _gap_clear(v, snapshot, params):
    """Nobody due at my merge point until I am through plus a gap_acceptance_s
    headway.  Considers vehicles already on the ring and accepted vehicles
    still on their entry leg."""
    th_merge = v.th_merge
    R = params.ring_radius
    t_need = _time_to_merge(v) + params.gap_acceptance_s
    for w, pw, hw in snapshot:
        if w is v or w.s >= w.ring_end_s:
            continue
        # assume the conflicting vehicle speeds up to its desired speed
        v_est = max(w.v, 0.9 * w.idm.v0)
        if w.s >= w.merge_s:          # already on the ring
            ang = math.atan2(pw.y, pw.x)
            arc = ((th_merge - ang) % (2.0 * math.pi)) * R
            if arc > w.ring_end_s - w.s + 1.0:
                continue              # exits before reaching my merge point
            if arc / v_est < t_need or arc < 8.0:
                return False
        elif w.accepted:              # committed to the ring, not there yet
            arc = ((th_merge - w.th_merge) % (2.0 * math.pi)) * R
            if arc > w.ring_end_s - w.merge_s + 1.0:
                continue
            if _time_to_merge(w) + arc / v_est < t_need:
                return False
    return True
