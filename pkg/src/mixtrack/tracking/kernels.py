"""Compiled per-agent particle filter updates over a flat particle array.

Agent a's particles occupy rows ``offsets[a]:offsets[a+1]``; every kernel
takes an agent range ``lo..hi`` so callers can split work across threads.
"""

import math

import numpy as np
from numba import njit


@njit(cache=True, nogil=True)
def reweight_range(ppos, weights, offsets, obs, observed, sigma, lo, hi, lost):
    """Multiply weights by the Gaussian position likelihood and renormalize.

    With ``sigma == 0`` the likelihood is the indicator of the particles
    closest to the observation. If every likelihood underflows the weights
    become uniform and ``lost[a]`` is set.
    """
    for a in range(lo, hi):
        lost[a] = False
        s, e = offsets[a], offsets[a + 1]
        if e <= s or not observed[a]:
            continue
        ox, oy = obs[a, 0], obs[a, 1]
        total = 0.0
        if sigma > 0.0:
            inv = 1.0 / (2.0 * sigma * sigma)
            for i in range(s, e):
                dx = ppos[i, 0] - ox
                dy = ppos[i, 1] - oy
                weights[i] *= math.exp(-(dx * dx + dy * dy) * inv)
                total += weights[i]
        else:
            best = np.inf
            for i in range(s, e):
                dx = ppos[i, 0] - ox
                dy = ppos[i, 1] - oy
                d2 = dx * dx + dy * dy
                if d2 < best:
                    best = d2
            for i in range(s, e):
                dx = ppos[i, 0] - ox
                dy = ppos[i, 1] - oy
                if dx * dx + dy * dy > best:
                    weights[i] = 0.0
                total += weights[i]
        if total > 0.0 and math.isfinite(total):
            for i in range(s, e):
                weights[i] /= total
        else:
            lost[a] = True
            u = 1.0 / (e - s)
            for i in range(s, e):
                weights[i] = u


@njit(cache=True, nogil=True)
def estimate_range(ppos, pvel, weights, offsets, lo, hi, est_pos, est_vel):
    """Weighted mean position and velocity per agent."""
    for a in range(lo, hi):
        px = py = vx = vy = 0.0
        for i in range(offsets[a], offsets[a + 1]):
            w = weights[i]
            px += w * ppos[i, 0]
            py += w * ppos[i, 1]
            vx += w * pvel[i, 0]
            vy += w * pvel[i, 1]
        est_pos[a, 0] = px
        est_pos[a, 1] = py
        est_vel[a, 0] = vx
        est_vel[a, 1] = vy


@njit(cache=True, nogil=True)
def systematic_range(weights, offsets, new_offsets, u0, lo, hi, index):
    """Systematic resampling: agent a draws ``new_offsets[a+1] - new_offsets[a]``
    offspring at the points (u0[a] + j) / m of its weight CDF; ``index``
    receives the parent row of each offspring."""
    for a in range(lo, hi):
        s, e = offsets[a], offsets[a + 1]
        m = new_offsets[a + 1] - new_offsets[a]
        i = s
        c = weights[s]
        for j in range(m):
            u = (u0[a] + j) / m
            while u > c and i < e - 1:
                i += 1
                c += weights[i]
            index[new_offsets[a] + j] = i
