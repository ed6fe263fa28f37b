"""Compiled per-layer event loops.

Presynaptic events are grouped by identical z-value: ``zg[g]`` is the g-th
distinct time and ``wg[g, j]`` the summed weight of that group onto neuron j.
The interval belonging to group g is ``[zg[g], zg[g + 1])``; the last one ends
at ``z_out``.
"""
import math

import numpy as np
from numba import njit

NO_SPIKE = -1.0


@njit(cache=True, nogil=True)
def solve_root(a, b, v_th, lo, hi, clamp):
    if a < 0.0 or b < 0.0:
        return NO_SPIKE
    disc = a * a - 4.0 * v_th * b
    if disc < 0.0:
        if disc < -clamp:
            return NO_SPIKE
        disc = 0.0
    denom = a + math.sqrt(disc)
    if denom <= 0.0:
        return NO_SPIKE
    z = 2.0 * b / denom
    if lo <= z < hi:
        return z
    return NO_SPIKE


@njit(cache=True, nogil=True)
def layer_scan(zg, wg, scale, v_th, z_out, clamp, cap, final, probe_trunc, active,
               g_pos, acc_a, acc_b, z_prev, count, paused,
               spk_z, spk_g, spk_a, spk_b, trunc):
    """Advance every active neuron until it has ``cap`` spikes or runs out of input.

    State arrays (``g_pos`` .. ``paused``) are updated in place so a later call
    with a larger cap resumes exactly where this one stopped. With ``final``
    set, a neuron at the cap keeps integrating without firing; ``probe_trunc``
    then flags it if a further crossing would have occurred.
    """
    n_groups = zg.shape[0]
    n_post = wg.shape[1]
    for j in range(n_post):
        if not active[j]:
            continue
        g = g_pos[j]
        a = acc_a[j]
        b = acc_b[j]
        zp = z_prev[j]
        n = count[j]
        probing = probe_trunc and not trunc[j]
        paused[j] = False
        stop = False
        while True:
            if g >= 0:
                hi = zg[g + 1] if g + 1 < n_groups else z_out
                if hi > z_out:
                    hi = z_out
                lo = zg[g] if zg[g] > zp else zp
                while n < cap:
                    z = solve_root(a, b, v_th, lo, hi, clamp)
                    if z < 0.0:
                        break
                    spk_z[j, n] = z
                    spk_g[j, n] = g
                    spk_a[j, n] = a
                    spk_b[j, n] = b
                    n += 1
                    zp = z
                    # every input so far precedes z, so each max() term selects z
                    b = z * a
                    lo = z
                if n >= cap:
                    if not final:
                        stop = True
                        break
                    if probing:
                        if solve_root(a, b, v_th, lo, hi, clamp) >= 0.0:
                            trunc[j] = True
                            probing = False
            g += 1
            if g >= n_groups:
                break
            zh = zg[g]
            w = wg[g, j]
            a += scale * w * zh
            b += scale * w * zh * (zh if zh > zp else zp)
        if stop:
            paused[j] = True
        else:
            g = n_groups - 1
        g_pos[j] = g
        acc_a[j] = a
        acc_b[j] = b
        z_prev[j] = zp
        count[j] = n


@njit(cache=True, nogil=True)
def _last_group_before(zg, g, z):
    # ties route to the event branch of max(z_prev, z_hat)
    if zg[g] < z:
        return g
    return g - 1


@njit(cache=True, nogil=True)
def layer_backward(zg, wg, scale, v_th, z_out, clip_tol,
                   spk_z, spk_g, spk_a, spk_b, count, gz_ext, g_vend,
                   gw, gzhat_coef, b_sign=1.0, reset_gain=1.0):
    """Reverse sweep through one layer.

    Fills ``gw[g, j]`` (gradient w.r.t. the grouped weight) and
    ``gzhat_coef[g, j]`` (gradient w.r.t. the group's z-value per unit weight).
    Returns the number of spikes whose partials were clipped at tangency.
    ``b_sign`` and ``reset_gain`` exist only for fault injection in the checkers.
    """
    n_groups = zg.shape[0]
    n_post = wg.shape[1]
    clips = 0
    prefix = np.empty(n_groups)
    d_lin = np.empty(n_groups)
    d_sq = np.empty(n_groups + 1)
    gz = np.empty(spk_z.shape[1])
    zo2 = z_out * z_out
    for j in range(n_post):
        run = 0.0
        for h in range(n_groups):
            run += scale * wg[h, j] * zg[h]
            prefix[h] = run
            d_lin[h] = 0.0
            d_sq[h] = 0.0
        d_sq[n_groups] = 0.0
        n = count[j]
        for k in range(n):
            gz[k] = gz_ext[j, k]

        gv = g_vend[j]
        if n_groups > 0 and gv != 0.0:
            d_lin[n_groups - 1] += gv / z_out
            cb = -gv / zo2
            if n > 0:
                zq = spk_z[j, n - 1]
                p = _last_group_before(zg, spk_g[j, n - 1], zq)
                if p >= 0:
                    gz[n - 1] += reset_gain * cb * prefix[p]
                    d_lin[p] += cb * zq
                d_sq[p + 1] += cb
            else:
                d_sq[0] += cb
            d_sq[n_groups] -= cb

        for k in range(n - 1, -1, -1):
            a = spk_a[j, k]
            b = spk_b[j, k]
            disc = a * a - 4.0 * v_th * b
            if disc < clip_tol:
                clips += 1
                continue
            root = math.sqrt(disc)
            ga = gz[k] * (1.0 - a / root) / (2.0 * v_th)
            gb = b_sign * gz[k] / root
            gk = spk_g[j, k]
            d_lin[gk] += ga
            if k > 0:
                zq = spk_z[j, k - 1]
                p = _last_group_before(zg, spk_g[j, k - 1], zq)
                if p >= 0:
                    # reset path: b = z_prev * prefix[p] + squared terms after p
                    gz[k - 1] += reset_gain * gb * prefix[p]
                    d_lin[p] += gb * zq
                d_sq[p + 1] += gb
            else:
                d_sq[0] += gb
            d_sq[gk + 1] -= gb

        c_lin = 0.0
        for h in range(n_groups - 1, -1, -1):
            c_lin += d_lin[h]
            d_lin[h] = c_lin
        c_sq = 0.0
        for h in range(n_groups):
            c_sq += d_sq[h]
            zh = zg[h]
            gw[h, j] = scale * (d_lin[h] * zh + c_sq * zh * zh)
            gzhat_coef[h, j] = scale * (d_lin[h] + 2.0 * c_sq * zh)
    return clips
