# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled rollout kernel, a line-for-line port of ``_kernel_py``."""

import numpy as np
from libc.math cimport sin, cos, M_PI


cdef inline double _clamp(double a) nogil:
    if a > 0.5 * M_PI:
        return 0.5 * M_PI
    if a < -0.5 * M_PI:
        return -0.5 * M_PI
    return a


cdef inline double _pos(double a) nogil:
    return a if a > 0.0 else 0.0


def simulate(const double[:, ::1] actions, const double[:, ::1] noise,
             const double[::1] state, const double[::1] params):
    cdef Py_ssize_t T = actions.shape[0], t, i
    out_arr = np.empty((T, 13))
    cdef double[:, ::1] out = out_arr
    cdef double L = params[0], gain = params[1], het = params[2], drag = params[3]
    cdef double lift = params[4], norm = params[5], yaw = params[6], sink = params[7]
    cdef double x = state[0], y = state[1], heading = state[2]
    cdef double joints[4]
    cdef double depth[2]
    cdef double trac[2]
    cdef double base, fin, target, back, contact, ds, lateral
    for i in range(4):
        joints[i] = state[3 + i]
    depth[0] = state[7]
    depth[1] = state[8]
    trac[0] = 0.0
    trac[1] = 0.0
    with nogil:
        for t in range(T):
            for i in range(2):
                base = _clamp(actions[t, i])
                fin = _clamp(actions[t, i + 2])
                target = L * _pos(sin(base)) * cos(fin)
                if target <= depth[i]:
                    depth[i] = target
                else:
                    depth[i] = depth[i] + sink * (target - depth[i])
                back = _pos(L * sin(joints[i + 2]) - L * sin(fin))
                trac[i] = gain * depth[i] * back * _pos(1.0 + het * noise[t, i])
                joints[i] = base
                joints[i + 2] = fin
            contact = _pos(1.0 - lift * (depth[0] + depth[1]) / (2.0 * L))
            ds = _pos(trac[0] + trac[1] - drag * contact) / norm
            lateral = ds * sin(heading)
            x = x + ds * cos(heading)
            y = y + lateral
            heading = heading + yaw * (trac[1] - trac[0]) / norm
            out[t, 0] = x
            out[t, 1] = y
            out[t, 2] = heading
            out[t, 3] = joints[0]
            out[t, 4] = joints[1]
            out[t, 5] = joints[2]
            out[t, 6] = joints[3]
            out[t, 7] = depth[0]
            out[t, 8] = depth[1]
            out[t, 9] = trac[0]
            out[t, 10] = trac[1]
            out[t, 11] = ds
            out[t, 12] = lateral
    return out_arr
