"""Independent reference implementations used by several test modules."""

import numpy as np


def grid_oracle(lines, max_speed, v_pref, res=0.01, slack=0.0):
    """Velocity closest to v_pref among grid points inside the speed disc and
    half-planes, each loosened by ``slack`` (None if no grid point qualifies)."""
    g = np.arange(-max_speed - res, max_speed + 1.5 * res, res)
    vx, vy = np.meshgrid(g, g)
    v = np.column_stack([vx.ravel(), vy.ravel()])
    ok = np.hypot(v[:, 0], v[:, 1]) <= max_speed + slack
    for px, py, dx, dy in lines:
        ok &= dx * (v[:, 1] - py) - dy * (v[:, 0] - px) >= -slack
    if not ok.any():
        return None
    v = v[ok]
    return v[np.argmin(np.hypot(*(v - v_pref).T))]


def min_separation(p_rel, v_rel, horizon):
    """Smallest |p_rel + v_rel t| for t in [0, horizon]."""
    p_rel = np.asarray(p_rel, dtype=float)
    v_rel = np.asarray(v_rel, dtype=float)
    vv = float(v_rel @ v_rel)
    t = 0.0 if vv == 0.0 else min(max(-float(p_rel @ v_rel) / vv, 0.0), horizon)
    return float(np.linalg.norm(p_rel + v_rel * t))


def exact_velocity_oracle(lines, max_speed, v_pref, tol=1e-9):
    """Exact optimum of the same problem by enumerating every KKT candidate:
    v_pref, its projections onto each line and the disc, pairwise line
    intersections and line/circle intersections (None if infeasible)."""
    lines = np.asarray(lines, dtype=float).reshape(-1, 4)
    pref = np.asarray(v_pref, dtype=float)
    cands = [pref]
    n = np.linalg.norm(pref)
    if n > 0:
        cands.append(pref * max_speed / n)
    for px, py, dx, dy in lines:
        p, d = np.array([px, py]), np.array([dx, dy])
        cands.append(p + d * ((pref - p) @ d))
        # |p + t d| = max_speed with |d| = 1
        b, c = p @ d, p @ p - max_speed ** 2
        disc = b * b - c
        if disc >= 0:
            cands += [p + d * (-b - np.sqrt(disc)), p + d * (-b + np.sqrt(disc))]
    for i in range(len(lines)):
        for j in range(i + 1, len(lines)):
            a = np.array([[lines[i, 2], -lines[j, 2]], [lines[i, 3], -lines[j, 3]]])
            if abs(np.linalg.det(a)) < 1e-12:
                continue
            t = np.linalg.solve(a, lines[j, :2] - lines[i, :2])
            cands.append(lines[i, :2] + t[0] * lines[i, 2:])
    best = None
    for v in cands:
        if np.linalg.norm(v) > max_speed + tol:
            continue
        if any(dx * (v[1] - py) - dy * (v[0] - px) < -tol for px, py, dx, dy in lines):
            continue
        if best is None or np.linalg.norm(v - pref) < np.linalg.norm(best - pref):
            best = v
    return best
