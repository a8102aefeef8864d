"""Compiled inner loop of the coordinate-descent p-solver.

Nodes of one colour block share no simplex, so they are minimized in
parallel; each writes only its own output slot, which keeps results
independent of the thread count.
"""
from __future__ import annotations

import math

import numba
import numpy as np
from numba import njit, prange

# always available and needs no external runtime
numba.config.THREADING_LAYER = "workqueue"

GRAD_FLOOR = 1e-12


@njit(cache=True)
def _node_terms(u, node, simp_row, pos_row, coef, vertices, n):
    d = simp_row.shape[0]
    a = np.zeros((d, n))
    b = np.zeros((d, n))
    count = 0
    lo = np.inf
    hi = -np.inf
    for j in range(d):
        s = simp_row[j]
        if s < 0:
            break
        p = pos_row[j]
        for k in range(n + 1):
            v = vertices[s, k]
            if k == p:
                continue
            val = u[v]
            if val < lo:
                lo = val
            if val > hi:
                hi = val
            for i in range(n):
                a[j, i] += coef[s, i, k] * val
        for i in range(n):
            b[j, i] = coef[s, i, p]
        count += 1
    return a, b, count, lo, hi


@njit(cache=True)
def _local_log_energy(t, a, b, kps, count, n):
    # log of sum_j |a_j + b_j t|^kp_j / kp_j, volume factor dropped
    top = -np.inf
    terms = np.empty(count)
    for j in range(count):
        sq = 0.0
        for i in range(n):
            g = a[j, i] + b[j, i] * t
            sq += g * g
        nrm = math.sqrt(sq)
        if nrm > GRAD_FLOOR:
            terms[j] = kps[j] * math.log(nrm) - math.log(kps[j])
        else:
            terms[j] = -np.inf
        if terms[j] > top:
            top = terms[j]
    if top == -np.inf:
        return top
    acc = 0.0
    for j in range(count):
        acc += math.exp(terms[j] - top)
    return top + math.log(acc)


@njit(cache=True)
def _derivs(t, a, b, kps, count, n):
    # first and second derivative of the local energy, scaled by a common positive factor
    logw = np.empty(count)
    dots = np.empty(count)
    curv = np.empty(count)
    top = -np.inf
    for j in range(count):
        sq = 0.0
        dot = 0.0
        bb = 0.0
        for i in range(n):
            g = a[j, i] + b[j, i] * t
            sq += g * g
            dot += g * b[j, i]
            bb += b[j, i] * b[j, i]
        nrm = math.sqrt(sq)
        if nrm > GRAD_FLOOR:
            logw[j] = (kps[j] - 2.0) * math.log(nrm)
            curv[j] = bb + (kps[j] - 2.0) * dot * dot / sq
        else:
            logw[j] = 0.0 if kps[j] == 2.0 else -np.inf
            curv[j] = bb
        dots[j] = dot
        if logw[j] > top:
            top = logw[j]
    if top == -np.inf:
        top = 0.0
    f1 = 0.0
    f2 = 0.0
    for j in range(count):
        w = math.exp(logw[j] - top)
        f1 += w * dots[j]
        f2 += w * curv[j]
    return f1, f2


@njit(cache=True, parallel=True)
def minimize_nodes(u, nodes, simplices, positions, coef, vertices, kp, omega, max_newton):
    """New values for ``nodes``, each minimizing the energy in its own value."""
    n = coef.shape[1]
    m = nodes.shape[0]
    out = np.empty(m)
    d = simplices.shape[1]
    for r in prange(m):
        kps = np.empty(d)
        node = nodes[r]
        t0 = u[node]
        a, b, count, lo, hi = _node_terms(u, node, simplices[r], positions[r], coef, vertices, n)
        stretch = np.inf
        for j in range(count):
            kps[j] = kp[simplices[r, j]]
            if kps[j] - 1.0 < stretch:
                stretch = kps[j] - 1.0
        if stretch < 1.0:
            stretch = 1.0
        if not hi > lo:
            out[r] = lo
            continue
        # a lone term |t - c|^kp makes plain Newton gain only a factor
        # 1 - 1/(kp - 1) per step, so steps start stretched by the smallest
        # kp - 1; an overshoot (sign change of f1) shrinks the stretch again
        t = min(max(t0, lo), hi)
        width = hi - lo
        since = 0
        prev = 0.0
        for _ in range(max_newton):
            f1, f2 = _derivs(t, a, b, kps, count, n)
            if f1 == 0.0:
                break
            if f1 * prev < 0.0:
                stretch = max(1.0, 0.25 * stretch)
            # progress means the bracket halved or |f1| halved; Newton
            # approaching from one side only shrinks the bracket slowly
            if hi - lo <= 0.5 * width or abs(f1) <= 0.5 * abs(prev):
                width = hi - lo
                since = 0
            else:
                since += 1
            prev = f1
            if f1 > 0.0:
                hi = t
            else:
                lo = t
            newton = f1 / f2
            step = t - stretch * newton
            scale = max(1.0, abs(t))
            if (math.isfinite(newton) and abs(newton) <= 1e-15 * scale) or hi - lo <= 1e-13 * scale:
                if math.isfinite(step) and lo <= step <= hi:
                    t = step
                break
            if math.isfinite(step) and lo <= step <= hi and since < 3:
                t = step
            else:
                t = 0.5 * (lo + hi)
        e0 = _local_log_energy(t0, a, b, kps, count, n)
        if _local_log_energy(t, a, b, kps, count, n) > e0:
            t = t0
        if omega != 1.0:
            t_over = t0 + omega * (t - t0)
            if _local_log_energy(t_over, a, b, kps, count, n) <= e0:
                t = t_over
        out[r] = t
    return out
