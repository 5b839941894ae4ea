import math

import numpy as np
import pytest

from shail import scenario

CSV_HEADER = ",".join(scenario.CSV_COLUMNS)


def straight_track_rows(tid, frame0, x0, y0, vx, vy, n, length=4.5, width=1.8):
    """Constant-velocity car rows sampled at 10 Hz."""
    psi = math.atan2(vy, vx)
    rows = []
    for i in range(n):
        f = frame0 + i
        rows.append(f"{tid},{f},{f * 100},car,"
                    f"{x0 + vx * 0.1 * i!r},{y0 + vy * 0.1 * i!r},"
                    f"{vx!r},{vy!r},{psi!r},{length!r},{width!r}")
    return rows


def make_dataset(rows):
    return scenario.parse_tracks("\n".join([CSV_HEADER] + rows) + "\n")


@pytest.fixture(scope="session")
def synth_dataset():
    return scenario.synth_roundabout(scenario.SynthParams(duration=60.0, seed=3))


@pytest.fixture(scope="session")
def rng():
    return np.random.default_rng(1234)
