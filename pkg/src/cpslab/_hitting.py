"""Hitting-time kernels on linearly interpolated grid paths (whole ensembles)."""

from __future__ import annotations

import numba
import numpy as np


@numba.njit(cache=True, nogil=True)
def _interp_row(row, dt, n, t):
    pos = t / dt
    i = int(np.floor(pos))
    if i >= n:
        return row[n]
    if i < 0:
        return row[0]
    frac = pos - i
    if frac == 0.0:
        return row[i]
    return row[i] + frac * (row[i + 1] - row[i])


@numba.njit(cache=True, nogil=True)
def _cross(xa, xb, lo, hi):
    # smallest fraction in [0, 1] at which the segment xa -> xb meets lo or hi
    best = 2.0
    target = 0.0
    if xb != xa:
        f = (lo - xa) / (xb - xa)
        if 0.0 <= f <= 1.0 and f < best:
            best = f
            target = lo
        f = (hi - xa) / (xb - xa)
        if 0.0 <= f <= 1.0 and f < best:
            best = f
            target = hi
    return best, target


@numba.njit(cache=True, nogil=True)
def first_hit(values, dt, horizon, start, lo, hi, cap):
    """First time >= start[p] at which row p equals lo or hi, capped at cap[p].

    Returns (times, values at those times, hit flags). A hit value is the
    target itself; an unhit path reports the interpolated value at its cap.
    """
    n_paths, m = values.shape
    n = m - 1
    t_out = np.empty(n_paths)
    x_out = np.empty(n_paths)
    hit = np.zeros(n_paths, dtype=np.bool_)
    for p in range(n_paths):
        row = values[p]
        ta = start[p]
        c = min(cap[p], horizon)
        xa = _interp_row(row, dt, n, ta)
        if xa == lo or xa == hi:
            t_out[p] = ta
            x_out[p] = xa
            hit[p] = True
            continue
        t_out[p] = c
        x_out[p] = _interp_row(row, dt, n, c)
        if ta >= c:
            continue
        i = int(np.floor(ta / dt)) + 1
        while i <= n:
            tb = horizon if i == n else i * dt
            last = tb >= c
            if last:
                tb = c
                xb = x_out[p]
            else:
                xb = row[i]
            f, target = _cross(xa, xb, lo, hi)
            if f <= 1.0:
                t_out[p] = ta + f * (tb - ta)
                x_out[p] = target
                hit[p] = True
                break
            if last:
                break
            ta = tb
            xa = xb
            i += 1
    return t_out, x_out, hit


@numba.njit(cache=True, nogil=True)
def interp_at(values, dt, times):
    n_paths, m = values.shape
    out = np.empty(n_paths)
    for p in range(n_paths):
        out[p] = _interp_row(values[p], dt, m - 1, times[p])
    return out


@numba.njit(cache=True, nogil=True)
def window_extrema(values, dt, t0, t1, include_grid_end):
    """Max and min of each row's interpolated path over [t0[p], t1[p]].

    Grid points with index > ``include_grid_end`` are ignored; the endpoints
    themselves always count.
    """
    n_paths, m = values.shape
    n = m - 1
    mx = np.empty(n_paths)
    mn = np.empty(n_paths)
    for p in range(n_paths):
        row = values[p]
        a = _interp_row(row, dt, n, t0[p])
        b = _interp_row(row, dt, n, t1[p])
        hi = max(a, b)
        lo = min(a, b)
        i0 = int(np.floor(t0[p] / dt)) + 1
        i1 = min(int(np.ceil(t1[p] / dt)) - 1, include_grid_end)
        for i in range(max(i0, 0), i1 + 1):
            v = row[i]
            if v > hi:
                hi = v
            if v < lo:
                lo = v
        mx[p] = hi
        mn[p] = lo
    return mx, mn
