"""Compiled fleet-wide scoring of every grid plan for every agent.

Inputs are the affine pieces of the noise-free rollout: per-agent state terms
plus per-plan offsets (see ``policy.rollout_offsets``), so no rollout is
materialised inside the loops.

Scoring runs in three passes: exponent arguments are written to a buffer,
the buffer goes through numpy's vectorised ``exp``, and the weighted sums are
reduced. The overlap branch of the collision risk needs no special case:
a non-positive gap gives a zero ratio and ``exp(0) = 1``.
"""
import numpy as np
from numba import njit

# layout of the packed parameter vector
V_STAR, K1, K2V, K20, K3C, K3V, K3D, W1, W2, W3, LENGTH = range(11)


@njit(cache=True, fastmath=True)
def exponent_pass(ego_speed0, ego_front0, lead_gap0, lead_front, lead_speed,
                  rear_gap0, rear_front, rear_speed, speed_off, front_off, coef, rear, buf):
    n, h1 = ego_front0.shape
    n_grid = speed_off.shape[1]
    v_star = coef[V_STAR]
    inv_sigma1 = 1.0 / (coef[K1] * v_star)
    k3c, k3v, k3d = coef[K3C], coef[K3V], coef[K3D]
    length = coef[LENGTH]
    for i in range(n):
        for h in range(h1):
            base_s = ego_speed0[i]
            base_f = ego_front0[i, h]
            lead_room = lead_gap0[i] + lead_front[i, h] - length
            sl = lead_speed[i, h]
            rear_room = rear_gap0[i] - rear_front[i, h] - length
            sr = rear_speed[i, h]
            for g in range(n_grid):
                s = base_s + speed_off[h, g]
                front = base_f + front_off[h, g]
                dev = (s - v_star) * inv_sigma1
                buf[0, i, h, g] = -dev * dev
                scale = k3c + k3v * abs(s) + k3d * max(s - sl, 0.0)
                r = max(lead_room - front, 0.0) / scale
                buf[1, i, h, g] = -r * r - r
                if rear:
                    scale_r = k3c + k3v * abs(sr) + k3d * max(sr - s, 0.0)
                    r = max(rear_room + front, 0.0) / scale_r
                    buf[2, i, h, g] = -r * r - r
    return buf


@njit(cache=True)
def reduce_pass(buf, ego_speed0, backward_off, mask, coef, g_form, rear, out):
    n = buf.shape[1]
    h1 = buf.shape[2]
    n_grid = buf.shape[3]
    w1, w2, w3 = coef[W1], coef[W2], coef[W3]
    k2v, k20 = coef[K2V], coef[K20]
    for i in range(n):
        c2 = w2 * np.exp(-k2v * (ego_speed0[i] + k20))
        for g in range(n_grid):
            out[i, g] = 0.0
        if g_form:
            for g in range(n_grid):
                worst = buf[1, i, 0, g]
                for h in range(1, h1):
                    worst = max(worst, buf[1, i, h, g])
                out[i, g] = w1 * buf[0, i, 0, g] + c2 * backward_off[0, g] + w3 * worst
        else:
            for h in range(h1):
                for g in range(n_grid):
                    out[i, g] += (w1 * buf[0, i, h, g] + c2 * backward_off[h, g]
                                  + w3 * buf[1, i, h, g])
                    if rear:
                        out[i, g] += w3 * buf[2, i, h, g]
        for g in range(n_grid):
            if not mask[g]:
                out[i, g] = -np.inf
    return out


def utility_kernel(ego_speed0, ego_front0, lead_gap0, lead_front, lead_speed,
                   rear_gap0, rear_front, rear_speed, speed_off_t, front_off_t,
                   backward_off_t, mask, coef, g_form, rear, out, buf=None):
    """Utilities ``(N, G)``; offsets are passed transposed as ``(H + 1, G)``."""
    n, h1 = ego_front0.shape
    shape = (3 if rear else 2, n, h1, speed_off_t.shape[1])
    if buf is None or buf.shape != shape:
        buf = np.empty(shape)
    exponent_pass(ego_speed0, ego_front0, lead_gap0, lead_front, lead_speed, rear_gap0,
                  rear_front, rear_speed, speed_off_t, front_off_t, coef, rear, buf)
    np.exp(buf, out=buf)
    return reduce_pass(buf, ego_speed0, backward_off_t, mask, coef, g_form, rear, out)
