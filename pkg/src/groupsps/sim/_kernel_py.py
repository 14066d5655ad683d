"""Pure-Python rollout kernel; reference for the compiled ``_kernel``.

Both backends implement the same arithmetic in the same order, so their
outputs agree to rounding (bitwise on the platforms tested).
"""

from math import cos, pi, sin

import numpy as np

# parameter vector layout shared with _kernel.pyx
P_LIMB, P_GAIN, P_HET, P_DRAG, P_LIFT, P_NORM, P_YAW, P_SINK = range(8)
NUM_PARAMS = 8
# state vector: x, y, heading, 4 joints, 2 depths
STATE_SIZE = 9
# output columns: state (9) + traction_l, traction_r, displacement, lateral
OUT_COLS = 13

_HALF_PI = 0.5 * pi


def _clamp(a):
    if a > _HALF_PI:
        return _HALF_PI
    if a < -_HALF_PI:
        return -_HALF_PI
    return a


def simulate(actions, noise, state, params):
    """Advance the crawler through ``len(actions)`` quasi-static steps.

    Parameters
    ----------
    actions : (T, 4) array
        Joint targets ordered (left base, right base, left fin, right fin).
    noise : (T, 2) array
        Standard normal draws for the left/right traction noise.
    state : (9,) array
        Starting state, see ``STATE_SIZE``.
    params : (8,) array
        Model constants, see the ``P_*`` indices.

    Returns
    -------
    (T, 13) array with the state after every step followed by the
    tractions, body-axis displacement and lateral displacement.
    """
    T = actions.shape[0]
    out = np.empty((T, OUT_COLS))
    L = params[P_LIMB]
    gain = params[P_GAIN]
    het = params[P_HET]
    drag = params[P_DRAG]
    lift = params[P_LIFT]
    norm = params[P_NORM]
    yaw = params[P_YAW]
    sink = params[P_SINK]
    x, y, heading = state[0], state[1], state[2]
    joints = [state[3], state[4], state[5], state[6]]
    depth = [state[7], state[8]]
    trac = [0.0, 0.0]
    for t in range(T):
        for i in range(2):
            base = _clamp(actions[t, i])
            fin = _clamp(actions[t, i + 2])
            target = L * max(0.0, sin(base)) * cos(fin)
            if target <= depth[i]:
                depth[i] = target
            else:
                depth[i] = depth[i] + sink * (target - depth[i])
            back = max(0.0, L * sin(joints[i + 2]) - L * sin(fin))
            trac[i] = gain * depth[i] * back * max(0.0, 1.0 + het * noise[t, i])
            joints[i] = base
            joints[i + 2] = fin
        contact = max(0.0, 1.0 - lift * (depth[0] + depth[1]) / (2.0 * L))
        ds = max(0.0, trac[0] + trac[1] - drag * contact) / norm
        lateral = ds * sin(heading)
        x = x + ds * cos(heading)
        y = y + lateral
        heading = heading + yaw * (trac[1] - trac[0]) / norm
        row = out[t]
        row[0] = x
        row[1] = y
        row[2] = heading
        row[3] = joints[0]
        row[4] = joints[1]
        row[5] = joints[2]
        row[6] = joints[3]
        row[7] = depth[0]
        row[8] = depth[1]
        row[9] = trac[0]
        row[10] = trac[1]
        row[11] = ds
        row[12] = lateral
    return out
