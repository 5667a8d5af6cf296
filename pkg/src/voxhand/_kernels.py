"""Jitted inner loop of the scanning-volume search.

Exact search, accelerated by two admissible prunes: templates are visited
in order of |total count - window total| (a lower bound on the L1
distance, so the expansion stops once the bound exceeds the incumbent),
and per-template accumulation abandons as soon as the partial sum passes
the incumbent. Tie-breaking is (distance, exemplar id, offset), matching
the scanner's contract exactly.
"""

from __future__ import annotations

import numpy as np
from numba import njit

_BIG = np.int64(1) << 60


@njit(cache=True, nogil=True)
def fk_kernel(thetas, parents, offsets, bend_idx, side_idx, elong_idx):
    """Batched forward kinematics: (B, n_params) -> (B, n_joints, 3).

    Layout contract: theta[0] scale, theta[1:4] tilt/yaw/roll, theta[4:7]
    translation, then per-joint DOFs addressed by the index arrays (-1
    where a joint lacks that DOF).
    """
    n_batch = thetas.shape[0]
    n_joints = parents.shape[0]
    pos = np.zeros((n_batch, n_joints, 3))
    frames = np.zeros((n_batch, n_joints, 3, 3))
    rot = np.empty((3, 3))
    art = np.empty((3, 3))
    for b in range(n_batch):
        scale = thetas[b, 0]
        ct, st = np.cos(thetas[b, 1]), np.sin(thetas[b, 1])
        cy, sy = np.cos(thetas[b, 2]), np.sin(thetas[b, 2])
        cr, sr = np.cos(thetas[b, 3]), np.sin(thetas[b, 3])
        # R = Rz(roll) @ Ry(yaw) @ Rx(tilt)
        rot[0, 0] = cr * cy
        rot[0, 1] = cr * sy * st - sr * ct
        rot[0, 2] = cr * sy * ct + sr * st
        rot[1, 0] = sr * cy
        rot[1, 1] = sr * sy * st + cr * ct
        rot[1, 2] = sr * sy * ct - cr * st
        rot[2, 0] = -sy
        rot[2, 1] = cy * st
        rot[2, 2] = cy * ct
        for j in range(n_joints):
            bend = thetas[b, bend_idx[j]] if bend_idx[j] >= 0 else 0.0
            side = thetas[b, side_idx[j]] if side_idx[j] >= 0 else 0.0
            cb, sb = np.cos(bend), np.sin(bend)
            cs, ss = np.cos(side), np.sin(side)
            # A = Rz(side) @ Rx(bend)
            art[0, 0] = cs
            art[0, 1] = -ss * cb
            art[0, 2] = ss * sb
            art[1, 0] = ss
            art[1, 1] = cs * cb
            art[1, 2] = -cs * sb
            art[2, 0] = 0.0
            art[2, 1] = sb
            art[2, 2] = cb
            if j == 0:
                pos[b, 0, 0] = thetas[b, 4]
                pos[b, 0, 1] = thetas[b, 5]
                pos[b, 0, 2] = thetas[b, 6]
                for r in range(3):
                    for c in range(3):
                        acc = 0.0
                        for k in range(3):
                            acc += rot[r, k] * art[k, c]
                        frames[b, 0, r, c] = acc
            else:
                p = parents[j]
                elong = thetas[b, elong_idx[p]] if elong_idx[p] >= 0 else 1.0
                mag = elong * scale
                ox = offsets[j, 0] * mag
                oy = offsets[j, 1] * mag
                oz = offsets[j, 2] * mag
                for r in range(3):
                    pos[b, j, r] = (pos[b, p, r] + frames[b, p, r, 0] * ox
                                    + frames[b, p, r, 1] * oy + frames[b, p, r, 2] * oz)
                for r in range(3):
                    for c in range(3):
                        acc = 0.0
                        for k in range(3):
                            acc += frames[b, p, r, k] * art[k, c]
                        frames[b, j, r, c] = acc
    return pos


@njit(cache=True, nogil=True)
def scan_kernel(first_z, n, candidates, stack_sorted, sums_sorted, order):
    m = first_z.shape[0]
    n_templates = stack_sorted.shape[0]
    best_d = _BIG
    best_id = np.int64(-1)
    best_x = np.int64(-1)
    best_y = np.int64(-1)
    best_z = np.int64(-1)
    win = np.empty((n, n), dtype=np.int64)

    for ci in range(candidates.shape[0]):
        jx = candidates[ci, 0]
        jy = candidates[ci, 1]
        jz = candidates[ci, 2]
        s_win = np.int64(0)
        for dx in range(n):
            for dy in range(n):
                f = first_z[jx + dx, jy + dy]
                if f < 0:
                    cnt = np.int64(0)
                elif f <= jz:
                    cnt = np.int64(n)
                else:
                    cnt = jz + n - f
                    if cnt < 0:
                        cnt = np.int64(0)
                win[dx, dy] = cnt
                s_win += cnt

        # expand templates outward from s_win in the sorted-sum order
        pos = np.searchsorted(sums_sorted, s_win)
        lo = pos - 1
        hi = pos
        while lo >= 0 or hi < n_templates:
            d_lo = s_win - sums_sorted[lo] if lo >= 0 else _BIG
            d_hi = sums_sorted[hi] - s_win if hi < n_templates else _BIG
            if d_lo <= d_hi:
                k = lo
                bound = d_lo
                lo -= 1
            else:
                k = hi
                bound = d_hi
                hi += 1
            if bound > best_d:
                break
            d = np.int64(0)
            abandoned = False
            for dx in range(n):
                for dy in range(n):
                    diff = stack_sorted[k, dx, dy] - win[dx, dy]
                    d += diff if diff >= 0 else -diff
                if d > best_d:
                    abandoned = True
                    break
            if abandoned:
                continue
            oid = order[k]
            if d < best_d or (d == best_d and (
                    oid < best_id or (oid == best_id and (
                        jx < best_x or (jx == best_x and (
                            jy < best_y or (jy == best_y and jz < best_z))))))):
                best_d = d
                best_id = oid
                best_x = jx
                best_y = jy
                best_z = jz
    return best_d, best_id, best_x, best_y, best_z
