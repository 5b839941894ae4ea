"""Fixed low-level options: (target speed, target time) controllers, the
constant-velocity safety predictor, and option termination."""

import math
from dataclasses import dataclass

import numpy as np

from . import kernels
from .geometry import heading_at, pose_at
from .idm import A_CLIP, DT, integrate_step

SAFETY_MARGIN = 0.2  # box inflation (m) in the safety rollout

DEFAULT_V = (0.0, 2.0, 4.0, 6.0, 8.0)
DEFAULT_T = (0.5, 1.0, 2.0)


class ConfigError(ValueError):
    pass


class StepAfterFinish(RuntimeError):
    pass


@dataclass(frozen=True)
class OptionSpec:
    v_target: float
    t_target: float
    is_hard_brake: bool = False


@dataclass
class OptionRuntime:
    spec: OptionSpec
    a_cmd: float
    steps_total: int
    steps_done: int = 0


def enumerate_options(V=DEFAULT_V, T=DEFAULT_T):
    """All (v, t) pairs in v-major, t-minor order; (min v, min t) is the
    designated HardBrake, which requires min(V) == 0."""
    V = sorted(V)
    T = sorted(T)
    if not V or not T:
        raise ConfigError("V and T must be nonempty")
    if V[0] > 0.0:
        raise ConfigError("no stopping option: min(V) must be 0")
    specs = []
    for v in V:
        for t in T:
            specs.append(OptionSpec(v_target=v, t_target=t,
                                    is_hard_brake=(v == V[0] and t == T[0])))
    return specs


def hard_brake_index(specs):
    return next(i for i, sp in enumerate(specs) if sp.is_hard_brake)


def initiate(spec, ego):
    a = (spec.v_target - ego.v) / spec.t_target
    a = min(max(a, -A_CLIP), A_CLIP)
    return OptionRuntime(spec=spec, a_cmd=a,
                         steps_total=int(round(spec.t_target / DT)))


def option_step(rt):
    if rt.steps_done >= rt.steps_total:
        raise StepAfterFinish()
    rt.steps_done += 1
    return rt.a_cmd, rt.steps_done == rt.steps_total


def _ego_rollout(state, a_cmd, n_steps):
    """Ego pose arrays over n_steps frames under a constant command."""
    ex = np.empty(n_steps)
    ey = np.empty(n_steps)
    ec = np.empty(n_steps)
    es = np.empty(n_steps)
    v = state.ego.v
    s = state.ego.s
    for t in range(n_steps):
        v, ds = integrate_step(v, a_cmd)
        s += ds
        p = pose_at(state.ego.path, s)
        ex[t] = p.x
        ey[t] = p.y
        ec[t] = math.cos(p.heading)
        es[t] = math.sin(p.heading)
    return ex, ey, ec, es


def _obstacle_rollout(state, n_steps, margin):
    recs = state.non_ego_states()
    k = len(recs)
    ox = np.empty((n_steps, k))
    oy = np.empty((n_steps, k))
    oc = np.empty((n_steps, k))
    osn = np.empty((n_steps, k))
    ol = np.empty(k)
    ow = np.empty(k)
    for j, (tid, x, y, vx, vy, psi, length, width) in enumerate(recs):
        tt = DT * np.arange(1, n_steps + 1)
        ox[:, j] = x + vx * tt
        oy[:, j] = y + vy * tt
        oc[:, j] = math.cos(psi)
        osn[:, j] = math.sin(psi)
        ol[j] = length + margin
        ow[j] = width + margin
    present = np.ones((n_steps, k), dtype=np.bool_)
    return ox, oy, oc, osn, ol, ow, present


def _rollout_collides(state, a_cmd, n_steps, margin=SAFETY_MARGIN):
    if n_steps <= 0:
        return False
    ox, oy, oc, osn, ol, ow, present = _obstacle_rollout(state, n_steps, margin)
    if ol.size == 0:
        return False
    ex, ey, ec, es = _ego_rollout(state, a_cmd, n_steps)
    hit = kernels.collision_scan(ex, ey, ec, es,
                                 state.ego.length + margin, state.ego.width + margin,
                                 ox, oy, oc, osn, ol, ow, present)
    return hit >= 0


def predict_safety(state, specs):
    """Binary per-option safety under constant-velocity motion of the other
    vehicles; the HardBrake entry is forced to 1."""
    p = np.ones(len(specs))
    max_steps = max(int(round(sp.t_target / DT)) for sp in specs)
    obstacles = _obstacle_rollout(state, max_steps, SAFETY_MARGIN)
    ox, oy, oc, osn, ol, ow, present = obstacles
    for i, sp in enumerate(specs):
        rt = initiate(sp, state.ego)
        if ol.size == 0:
            continue
        ex, ey, ec, es = _ego_rollout(state, rt.a_cmd, rt.steps_total)
        hit = kernels.collision_scan(
            ex, ey, ec, es,
            state.ego.length + SAFETY_MARGIN, state.ego.width + SAFETY_MARGIN,
            ox[:rt.steps_total], oy[:rt.steps_total],
            oc[:rt.steps_total], osn[:rt.steps_total], ol, ow,
            present[:rt.steps_total])
        if hit >= 0:
            p[i] = 0.0
    p[hard_brake_index(specs)] = 1.0
    return p


def should_interrupt(state, rt):
    """Terminate the active option early when its remaining portion is
    predicted unsafe. The HardBrake option is never interrupted."""
    if rt.spec.is_hard_brake:
        return False
    remaining = rt.steps_total - rt.steps_done
    return _rollout_collides(state, rt.a_cmd, remaining)
