"""Intelligent Driver Model acceleration law and double-integrator stepping."""

import math
from dataclasses import dataclass

DT = 0.1  # frame period, 10 Hz recordings
A_CLIP = 5.0  # |commanded acceleration| bound, m/s^2
B_EMERGENCY = 8.0  # hard deceleration floor for degenerate gaps


@dataclass(frozen=True)
class IdmParams:
    v0: float = 8.94  # desired speed (20 mph)
    s0: float = 3.0   # minimum net spacing
    T: float = 0.5    # time headway
    a_max: float = 3.0
    b: float = 2.5    # comfortable deceleration
    delta: float = 4.0


def idm_accel(gap, v, v_lead, p=IdmParams()):
    """IDM acceleration. gap is the net (bumper-to-bumper) distance; pass
    gap=None (or inf) for the free-road case."""
    free = p.a_max * (1.0 - (v / p.v0) ** p.delta)
    if gap is None or math.isinf(gap):
        a = free
    elif gap <= 0.0:
        a = -B_EMERGENCY
    else:
        dv = v - v_lead
        s_star = p.s0 + v * p.T + v * dv / (2.0 * math.sqrt(p.a_max * p.b))
        s_star = max(s_star, 0.0)
        a = free - p.a_max * (s_star / gap) ** 2
    return min(max(a, -B_EMERGENCY), p.a_max)


def integrate_step(v, a, dt=DT):
    """One double-integrator frame with the no-reverse clamp.

    Returns (v_new, displacement). If braking stops the vehicle within the
    frame, the displacement is the exact distance to stop.
    """
    v_new = v + a * dt
    if v_new >= 0.0:
        return v_new, v * dt + 0.5 * a * dt * dt
    # stopped mid-frame at t* = -v/a
    if a >= 0.0 or v <= 0.0:
        return 0.0, 0.0
    return 0.0, -0.5 * v * v / a
