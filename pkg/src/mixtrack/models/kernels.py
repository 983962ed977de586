"""Compiled inner loops for the motion models.

Everything here works on plain float arrays so the same code path serves
single steps, batched replays of a whole optimizer population and
per-particle propagation. Neighbour candidates are always visited in
ascending index order, so results do not depend on how candidates were
found.
"""

import math

import numpy as np
from numba import njit

from .params import C

LIN = 0
BOIDS = 1
SOCIAL_FORCES = 2
RVO = 3

RVO_EPS = 1e-5
ORCA_MARGIN = 1e-3  # meters added to combined radii against discretization slack
GRID_MIN_AGENTS = 64  # below this a linear neighbour scan beats building the grid

_VCAP = C["v_cap"]
_TAU = C["relaxation_time"]
_REP_A = C["repulsion_strength"]
_REP_B = C["repulsion_range"]
_K_CONTACT = C["contact_stiffness"]
_F_CAP = C["force_cap"]
_SF_CUT = C["social_cutoff"]
_W_SEP = C["separation_weight"]
_W_ALI = C["alignment_weight"]
_W_COH = C["cohesion_weight"]
_W_GOAL = C["goal_weight"]
_B_NB = C["boids_neighborhood"]
_B_LOOK = C["boids_lookahead"]
_STEER = C["steer_time"]
_MAX_NB = C["max_neighbors"]

# parameter columns: boids/sf (radius, comfort); rvo (comfort, neighbor_dist, radius, tau_agent, tau_obst)


@njit(cache=True, error_model="numpy")
def radius_col(kind):
    if kind == RVO:
        return 2
    if kind == LIN:
        return -1
    return 0


@njit(cache=True, error_model="numpy")
def speed_col(kind):
    if kind == RVO:
        return 0
    if kind == LIN:
        return -1
    return 1


@njit(cache=True, error_model="numpy", inline="always")
def pref_velocity(px, py, gx, gy, speed, dt):
    dx = gx - px
    dy = gy - py
    d = math.sqrt(dx * dx + dy * dy)
    if d < 1e-12:
        return 0.0, 0.0
    s = min(speed, d / dt)
    return dx / d * s, dy / d * s


@njit(cache=True, error_model="numpy", inline="always")
def cap_speed(vx, vy, vmax):
    s = math.sqrt(vx * vx + vy * vy)
    if s > vmax and s > 0.0:
        f = vmax / s
        return vx * f, vy * f
    return vx, vy


@njit(cache=True, error_model="numpy", inline="always")
def closest_on_segment(px, py, ax, ay, bx, by):
    ex = bx - ax
    ey = by - ay
    l2 = ex * ex + ey * ey
    if l2 < 1e-18:
        return ax, ay
    t = ((px - ax) * ex + (py - ay) * ey) / l2
    if t < 0.0:
        t = 0.0
    elif t > 1.0:
        t = 1.0
    return ax + t * ex, ay + t * ey


# ---------------------------------------------------------------- neighbour grid


@njit(cache=True, error_model="numpy")
def _cell_key(cx, cy):
    return (cx + 1048576) * 2097152 + (cy + 1048576)


@njit(cache=True, error_model="numpy")
def build_grid(pos, cell):
    n = pos.shape[0]
    keys = np.empty(n, np.int64)
    for i in range(n):
        cx = int(math.floor(pos[i, 0] / cell))
        cy = int(math.floor(pos[i, 1] / cell))
        keys[i] = _cell_key(cx, cy)
    order = np.argsort(keys, kind="mergesort")
    return order, keys[order]


@njit(cache=True, error_model="numpy")
def _sort_small(a, n):
    for i in range(1, n):
        v = a[i]
        j = i - 1
        while j >= 0 and a[j] > v:
            a[j + 1] = a[j]
            j -= 1
        a[j + 1] = v


@njit(cache=True, error_model="numpy")
def query_grid(px, py, radius, pos, order, skeys, cell, exclude, out):
    """Indices within ``radius`` of (px, py), ascending; returns the count."""
    cx = int(math.floor(px / cell))
    cy = int(math.floor(py / cell))
    r2 = radius * radius
    cnt = 0
    for ox in range(-1, 2):
        for oy in range(-1, 2):
            key = _cell_key(cx + ox, cy + oy)
            lo = np.searchsorted(skeys, key)
            hi = np.searchsorted(skeys, key, side="right")
            for s in range(lo, hi):
                j = order[s]
                if j == exclude:
                    continue
                dx = pos[j, 0] - px
                dy = pos[j, 1] - py
                if dx * dx + dy * dy <= r2:
                    out[cnt] = j
                    cnt += 1
    _sort_small(out, cnt)
    return cnt


@njit(cache=True, error_model="numpy")
def query_brute(px, py, radius, pos, exclude, out):
    """Same result as ``query_grid`` by a linear scan; cheaper for small crowds."""
    r2 = radius * radius
    cnt = 0
    for j in range(pos.shape[0]):
        if j == exclude:
            continue
        dx = pos[j, 0] - px
        dy = pos[j, 1] - py
        if dx * dx + dy * dy <= r2:
            out[cnt] = j
            cnt += 1
    return cnt


@njit(cache=True, error_model="numpy")
def query_radius(kind, prm, max_rad, consts):
    if kind == BOIDS:
        return consts[_B_NB]
    if kind == SOCIAL_FORCES:
        return prm[0] + max_rad + consts[_SF_CUT]
    if kind == RVO:
        return prm[1]
    return 0.0


# ---------------------------------------------------------------- boids


@njit(cache=True, error_model="numpy", inline="always")
def boids_terms(px, py, vx, vy, gx, gy, prm, pos, vel, rad, nbr, cnt, obstacles, dt, consts):
    """Steering terms (separation, alignment, cohesion, goal) as velocity offsets."""
    r = prm[0]
    comfort = prm[1]
    look = consts[_B_LOOK]
    nb = consts[_B_NB]
    pvx, pvy = pref_velocity(px, py, gx, gy, comfort, dt)
    gox = pvx - vx
    goy = pvy - vy
    sx = 0.0
    sy = 0.0
    avx = 0.0
    avy = 0.0
    cpx = 0.0
    cpy = 0.0
    m = 0
    for k in range(cnt):
        j = nbr[k]
        dx = px - pos[j, 0]
        dy = py - pos[j, 1]
        d = math.sqrt(dx * dx + dy * dy)
        if d > nb:
            continue
        m += 1
        avx += vel[j, 0]
        avy += vel[j, 1]
        cpx += pos[j, 0]
        cpy += pos[j, 1]
        sxj, syj = _separation(dx, dy, d, vx - vel[j, 0], vy - vel[j, 1], r + rad[j], look)
        sx += sxj
        sy += syj
    for w in range(obstacles.shape[0]):
        qx, qy = closest_on_segment(px, py, obstacles[w, 0], obstacles[w, 1], obstacles[w, 2], obstacles[w, 3])
        dx = px - qx
        dy = py - qy
        d = math.sqrt(dx * dx + dy * dy)
        if d > nb:
            continue
        sxj, syj = _separation(dx, dy, d, vx, vy, r, look)
        sx += sxj
        sy += syj
    alx = 0.0
    aly = 0.0
    cox = 0.0
    coy = 0.0
    if m > 0:
        alx = avx / m - vx
        aly = avy / m - vy
        cox = (cpx / m - px) / look
        coy = (cpy / m - py) / look
    return sx * comfort, sy * comfort, alx, aly, cox, coy, gox, goy


@njit(cache=True, error_model="numpy", inline="always")
def _separation(dx, dy, d, dvx, dvy, reach, look):
    # closest approach of the relative motion within the lookahead
    dv2 = dvx * dvx + dvy * dvy
    t = 0.0
    if dv2 > 1e-12:
        t = -(dx * dvx + dy * dvy) / dv2
        if t < 0.0:
            t = 0.0
        elif t > look:
            t = look
    cx = dx + dvx * t
    cy = dy + dvy * t
    dmin = math.sqrt(cx * cx + cy * cy)
    if dmin >= reach or reach <= 0.0:
        return 0.0, 0.0
    if dmin > 1e-9:
        ux = cx / dmin
        uy = cy / dmin
    elif d > 1e-9:
        ux = dx / d
        uy = dy / d
    else:
        ux = 1.0
        uy = 0.0
    s = (reach - dmin) / reach
    return ux * s, uy * s


@njit(cache=True, error_model="numpy", inline="always")
def boids_agent(px, py, vx, vy, gx, gy, prm, pos, vel, rad, nbr, cnt, obstacles, dt, consts):
    sx, sy, alx, aly, cox, coy, gox, goy = boids_terms(
        px, py, vx, vy, gx, gy, prm, pos, vel, rad, nbr, cnt, obstacles, dt, consts)
    steer = consts[_STEER]
    ax = (consts[_W_SEP] * sx + consts[_W_ALI] * alx + consts[_W_COH] * cox + consts[_W_GOAL] * gox) / steer
    ay = (consts[_W_SEP] * sy + consts[_W_ALI] * aly + consts[_W_COH] * coy + consts[_W_GOAL] * goy) / steer
    nvx, nvy = cap_speed(vx + ax * dt, vy + ay * dt, min(prm[1], consts[_VCAP]))
    return px + nvx * dt, py + nvy * dt, nvx, nvy


# ---------------------------------------------------------------- social forces


@njit(cache=True, error_model="numpy", inline="always")
def _repulsion(dx, dy, d, reach, consts):
    if d > 1e-12:
        nx = dx / d
        ny = dy / d
    else:
        nx = 1.0
        ny = 0.0
    fs = consts[_REP_A] * math.exp(min((reach - d) / consts[_REP_B], 50.0))
    fs = min(fs, consts[_F_CAP])
    fp = 0.0
    if d < reach:
        fp = min(consts[_K_CONTACT] * (reach - d), consts[_F_CAP])
    return nx * fs, ny * fs, nx * fp, ny * fp


@njit(cache=True, error_model="numpy", inline="always")
def social_forces(px, py, vx, vy, gx, gy, prm, pos, vel, rad, nbr, cnt, obstacles, dt, consts):
    """(motivation, social, physical) force components, per unit mass."""
    r = prm[0]
    pvx, pvy = pref_velocity(px, py, gx, gy, prm[1], dt)
    tau = consts[_TAU]
    fmx = (pvx - vx) / tau
    fmy = (pvy - vy) / tau
    fsx = 0.0
    fsy = 0.0
    fpx = 0.0
    fpy = 0.0
    cut = consts[_SF_CUT]
    for k in range(cnt):
        j = nbr[k]
        dx = px - pos[j, 0]
        dy = py - pos[j, 1]
        d = math.sqrt(dx * dx + dy * dy)
        reach = r + rad[j]
        if d > reach + cut:
            continue
        a, b, c, e = _repulsion(dx, dy, d, reach, consts)
        fsx += a
        fsy += b
        fpx += c
        fpy += e
    for w in range(obstacles.shape[0]):
        qx, qy = closest_on_segment(px, py, obstacles[w, 0], obstacles[w, 1], obstacles[w, 2], obstacles[w, 3])
        dx = px - qx
        dy = py - qy
        d = math.sqrt(dx * dx + dy * dy)
        if d > r + cut:
            continue
        a, b, c, e = _repulsion(dx, dy, d, r, consts)
        fsx += a
        fsy += b
        fpx += c
        fpy += e
    return fmx, fmy, fsx, fsy, fpx, fpy


@njit(cache=True, error_model="numpy", inline="always")
def social_forces_agent(px, py, vx, vy, gx, gy, prm, pos, vel, rad, nbr, cnt, obstacles, dt, consts):
    fmx, fmy, fsx, fsy, fpx, fpy = social_forces(
        px, py, vx, vy, gx, gy, prm, pos, vel, rad, nbr, cnt, obstacles, dt, consts)
    nvx, nvy = cap_speed(vx + (fmx + fsx + fpx) * dt, vy + (fmy + fsy + fpy) * dt,
                         min(prm[1], consts[_VCAP]))
    return px + nvx * dt, py + nvy * dt, nvx, nvy


# ---------------------------------------------------------------- ORCA


@njit(cache=True, error_model="numpy")
def _det(ax, ay, bx, by):
    return ax * by - ay * bx


@njit(cache=True, error_model="numpy")
def orca_lines(px, py, vx, vy, prm, pos, vel, rad, nbr, cnt, obstacles, dt, consts, lines):
    """Fill ``lines`` (rows: point x, y, direction x, y) with obstacle then agent
    half-planes. The permitted side lies to the left of each direction.
    Returns (line count, obstacle line count)."""
    comfort = prm[0]
    ndist = prm[1]
    r = prm[2]
    inv_th = 1.0 / prm[3]
    tau_o = prm[4]
    nl = 0
    orange = tau_o * comfort + r
    for w in range(obstacles.shape[0]):
        qx, qy = closest_on_segment(px, py, obstacles[w, 0], obstacles[w, 1], obstacles[w, 2], obstacles[w, 3])
        rx = qx - px
        ry = qy - py
        d = math.sqrt(rx * rx + ry * ry)
        if d > orange:
            continue
        if d > 1e-12:
            nx = rx / d
            ny = ry / d
        else:
            ex = obstacles[w, 2] - obstacles[w, 0]
            ey = obstacles[w, 3] - obstacles[w, 1]
            el = math.sqrt(ex * ex + ey * ey)
            if el < 1e-12:
                nx, ny = 1.0, 0.0
            else:
                nx, ny = -ey / el, ex / el
        if d > r:
            c = (d - r) / tau_o
        else:
            c = (d - r) / dt
        lines[nl, 0] = c * nx
        lines[nl, 1] = c * ny
        lines[nl, 2] = -ny
        lines[nl, 3] = nx
        nl += 1
    n_obst = nl

    # closest neighbours within range, sorted by distance
    maxn = int(consts[_MAX_NB])
    sel = np.empty(maxn, np.int64)
    seld = np.empty(maxn)
    ns = 0
    lim2 = ndist * ndist
    for k in range(cnt):
        j = nbr[k]
        dx = pos[j, 0] - px
        dy = pos[j, 1] - py
        d2 = dx * dx + dy * dy
        if d2 >= lim2:
            continue
        if ns < maxn:
            ns += 1
        elif d2 >= seld[ns - 1]:
            continue
        i = ns - 1
        while i > 0 and seld[i - 1] > d2:
            sel[i] = sel[i - 1]
            seld[i] = seld[i - 1]
            i -= 1
        sel[i] = j
        seld[i] = d2

    for s in range(ns):
        j = sel[s]
        rpx = pos[j, 0] - px
        rpy = pos[j, 1] - py
        rvx = vx - vel[j, 0]
        rvy = vy - vel[j, 1]
        dist_sq = rpx * rpx + rpy * rpy
        cr = r + rad[j] + ORCA_MARGIN
        cr_sq = cr * cr
        if dist_sq > cr_sq:
            wx = rvx - inv_th * rpx
            wy = rvy - inv_th * rpy
            w_len_sq = wx * wx + wy * wy
            dot1 = wx * rpx + wy * rpy
            if dot1 < 0.0 and dot1 * dot1 > cr_sq * w_len_sq:
                w_len = math.sqrt(w_len_sq)
                uwx = wx / w_len
                uwy = wy / w_len
                dirx = uwy
                diry = -uwx
                ux = (cr * inv_th - w_len) * uwx
                uy = (cr * inv_th - w_len) * uwy
            else:
                leg = math.sqrt(dist_sq - cr_sq)
                if _det(rpx, rpy, wx, wy) > 0.0:
                    dirx = (rpx * leg - rpy * cr) / dist_sq
                    diry = (rpx * cr + rpy * leg) / dist_sq
                else:
                    dirx = -(rpx * leg + rpy * cr) / dist_sq
                    diry = -(-rpx * cr + rpy * leg) / dist_sq
                dot2 = rvx * dirx + rvy * diry
                ux = dot2 * dirx - rvx
                uy = dot2 * diry - rvy
        else:
            inv_dt = 1.0 / dt
            wx = rvx - inv_dt * rpx
            wy = rvy - inv_dt * rpy
            w_len = math.sqrt(wx * wx + wy * wy)
            if w_len < 1e-12:
                uwx, uwy = -1.0, 0.0
            else:
                uwx = wx / w_len
                uwy = wy / w_len
            dirx = uwy
            diry = -uwx
            ux = (cr * inv_dt - w_len) * uwx
            uy = (cr * inv_dt - w_len) * uwy
        lines[nl, 0] = vx + 0.5 * ux
        lines[nl, 1] = vy + 0.5 * uy
        lines[nl, 2] = dirx
        lines[nl, 3] = diry
        nl += 1
    return nl, n_obst


@njit(cache=True, error_model="numpy")
def _lp1(lines, line_no, radius, optx, opty, direction_opt, res):
    px = lines[line_no, 0]
    py = lines[line_no, 1]
    dx = lines[line_no, 2]
    dy = lines[line_no, 3]
    dot = px * dx + py * dy
    disc = dot * dot + radius * radius - (px * px + py * py)
    if disc < 0.0:
        return False
    sq = math.sqrt(disc)
    t_left = -dot - sq
    t_right = -dot + sq
    for i in range(line_no):
        qx = lines[i, 0]
        qy = lines[i, 1]
        ex = lines[i, 2]
        ey = lines[i, 3]
        denom = _det(dx, dy, ex, ey)
        numer = _det(ex, ey, px - qx, py - qy)
        if abs(denom) <= RVO_EPS:
            if numer < 0.0:
                return False
            continue
        t = numer / denom
        if denom >= 0.0:
            t_right = min(t_right, t)
        else:
            t_left = max(t_left, t)
        if t_left > t_right:
            return False
    if direction_opt:
        if optx * dx + opty * dy > 0.0:
            t = t_right
        else:
            t = t_left
    else:
        t = dx * (optx - px) + dy * (opty - py)
        if t < t_left:
            t = t_left
        elif t > t_right:
            t = t_right
    res[0] = px + t * dx
    res[1] = py + t * dy
    return True


@njit(cache=True, error_model="numpy")
def lp2(lines, n, radius, optx, opty, direction_opt, res):
    """Incremental 2D LP; returns n on success or the index of the failing line."""
    if direction_opt:
        res[0] = optx * radius
        res[1] = opty * radius
    elif optx * optx + opty * opty > radius * radius:
        s = math.sqrt(optx * optx + opty * opty)
        res[0] = optx / s * radius
        res[1] = opty / s * radius
    else:
        res[0] = optx
        res[1] = opty
    for i in range(n):
        if _det(lines[i, 2], lines[i, 3], lines[i, 0] - res[0], lines[i, 1] - res[1]) > 0.0:
            tx = res[0]
            ty = res[1]
            if not _lp1(lines, i, radius, optx, opty, direction_opt, res):
                res[0] = tx
                res[1] = ty
                return i
    return n


@njit(cache=True, error_model="numpy")
def lp3(lines, n, n_obst, begin, radius, res):
    """Least-penetration fallback: minimise the largest violation of agent lines."""
    distance = 0.0
    proj = np.empty((max(n, 1), 4))
    for i in range(begin, n):
        if _det(lines[i, 2], lines[i, 3], lines[i, 0] - res[0], lines[i, 1] - res[1]) > distance:
            m = 0
            for j in range(n_obst):
                proj[m, :] = lines[j, :]
                m += 1
            for j in range(n_obst, i):
                det_ij = _det(lines[i, 2], lines[i, 3], lines[j, 2], lines[j, 3])
                if abs(det_ij) <= RVO_EPS:
                    if lines[i, 2] * lines[j, 2] + lines[i, 3] * lines[j, 3] > 0.0:
                        continue
                    ptx = 0.5 * (lines[i, 0] + lines[j, 0])
                    pty = 0.5 * (lines[i, 1] + lines[j, 1])
                else:
                    f = _det(lines[j, 2], lines[j, 3], lines[i, 0] - lines[j, 0], lines[i, 1] - lines[j, 1]) / det_ij
                    ptx = lines[i, 0] + f * lines[i, 2]
                    pty = lines[i, 1] + f * lines[i, 3]
                ddx = lines[j, 2] - lines[i, 2]
                ddy = lines[j, 3] - lines[i, 3]
                dl = math.sqrt(ddx * ddx + ddy * ddy)
                proj[m, 0] = ptx
                proj[m, 1] = pty
                proj[m, 2] = ddx / dl
                proj[m, 3] = ddy / dl
                m += 1
            tx = res[0]
            ty = res[1]
            if lp2(proj, m, radius, -lines[i, 3], lines[i, 2], True, res) < m:
                res[0] = tx
                res[1] = ty
            distance = _det(lines[i, 2], lines[i, 3], lines[i, 0] - res[0], lines[i, 1] - res[1])


@njit(cache=True, error_model="numpy")
def solve_orca(lines, n, n_obst, radius, optx, opty, res):
    """Closest permitted velocity to (optx, opty); returns True when feasible."""
    fail = lp2(lines, n, radius, optx, opty, False, res)
    if fail < n:
        lp3(lines, n, n_obst, fail, radius, res)
        return False
    return True


@njit(cache=True, error_model="numpy", inline="always")
def rvo_agent(px, py, vx, vy, gx, gy, prm, pos, vel, rad, nbr, cnt, obstacles, dt, consts, lines, res):
    """ORCA step; ``lines`` (n_obstacles + max_neighbors, 4) and ``res`` (2,) are scratch."""
    comfort = min(prm[0], consts[_VCAP])
    nl, n_obst = orca_lines(px, py, vx, vy, prm, pos, vel, rad, nbr, cnt, obstacles, dt, consts, lines)
    pvx, pvy = pref_velocity(px, py, gx, gy, comfort, dt)
    solve_orca(lines, nl, n_obst, comfort, pvx, pvy, res)
    return px + res[0] * dt, py + res[1] * dt, res[0], res[1]


# ---------------------------------------------------------------- dispatch


@njit(cache=True, error_model="numpy", nogil=True)
def advance(kinds, prm, rad, pos, vel, goals, obstacles, dt, consts,
            ppos, pvel, offsets, noise, margin, lo, hi, out_pos, out_vel):
    """Step the hypotheses of agents ``lo..hi-1``.

    ``kinds[a]`` selects agent a's model. ``prm[k, a]`` and ``rad[k, a]`` hold
    every agent's parameter row and radius under model k, so an agent stepping
    under model k perceives its neighbours with that model's radii.
    Hypotheses of agent a occupy rows ``offsets[a]:offsets[a+1]`` of ``ppos``;
    neighbours are the other agents' current ``pos``/``vel``. ``noise`` is added
    to stepped positions and velocities are re-derived by finite difference
    whenever it is non-zero.
    """
    n = pos.shape[0]
    max_rad = 0.0
    for k in range(rad.shape[0]):
        for a in range(n):
            if rad[k, a] > max_rad:
                max_rad = rad[k, a]
    cell = 1e-3
    need = False
    for a in range(lo, hi):
        if kinds[a] != LIN:
            need = True
            q = query_radius(kinds[a], prm[kinds[a], a], max_rad, consts) + margin
            if q > cell:
                cell = q
    nbr = np.empty(max(n, 1), np.int64)
    use_grid = need and n > GRID_MIN_AGENTS
    if use_grid:
        order, skeys = build_grid(pos, cell)
    else:
        order = np.empty(0, np.int64)
        skeys = np.empty(0, np.int64)
    vcap = consts[_VCAP]
    lines = np.empty((obstacles.shape[0] + int(consts[_MAX_NB]), 4))
    res = np.empty(2)
    for a in range(lo, hi):
        kind = kinds[a]
        cnt = 0
        if kind != LIN:
            q = query_radius(kind, prm[kind, a], max_rad, consts) + margin
            if use_grid:
                cnt = query_grid(pos[a, 0], pos[a, 1], q, pos, order, skeys, cell, a, nbr)
            else:
                cnt = query_brute(pos[a, 0], pos[a, 1], q, pos, a, nbr)
        row = prm[kind, a]
        rk = rad[kind]
        gx = goals[a, 0]
        gy = goals[a, 1]
        # dispatch inline: a call through agent_update costs more than a LIN step
        for i in range(offsets[a], offsets[a + 1]):
            px = ppos[i, 0]
            py = ppos[i, 1]
            vx = pvel[i, 0]
            vy = pvel[i, 1]
            if kind == BOIDS:
                npx, npy, nvx, nvy = boids_agent(px, py, vx, vy, gx, gy, row, pos, vel, rk, nbr, cnt,
                                                 obstacles, dt, consts)
            elif kind == SOCIAL_FORCES:
                npx, npy, nvx, nvy = social_forces_agent(px, py, vx, vy, gx, gy, row, pos, vel, rk, nbr, cnt,
                                                         obstacles, dt, consts)
            elif kind == RVO:
                npx, npy, nvx, nvy = rvo_agent(px, py, vx, vy, gx, gy, row, pos, vel, rk, nbr, cnt,
                                               obstacles, dt, consts, lines, res)
            else:
                nvx, nvy = cap_speed(vx, vy, vcap)
                npx = px + nvx * dt
                npy = py + nvy * dt
            ex = noise[i, 0]
            ey = noise[i, 1]
            if ex != 0.0 or ey != 0.0:
                npx += ex
                npy += ey
                nvx, nvy = cap_speed((npx - ppos[i, 0]) / dt, (npy - ppos[i, 1]) / dt, vcap)
            out_pos[i, 0] = npx
            out_pos[i, 1] = npy
            out_vel[i, 0] = nvx
            out_vel[i, 1] = nvy


@njit(cache=True, error_model="numpy")
def _joint_arrays(kind, params, radii):
    n = params.shape[0]
    kinds = np.full(n, kind, np.int64)
    prm = np.zeros((4, n, 5))
    rad = np.zeros((4, n))
    for a in range(n):
        for c in range(params.shape[1]):
            prm[kind, a, c] = params[a, c]
        rad[kind, a] = radii[a]
    return kinds, prm, rad


@njit(cache=True, error_model="numpy", nogil=True)
def step_joint(kind, params, radii, pos, vel, goals, obstacles, dt, consts, out_pos, out_vel):
    """Synchronous step of all agents under one model."""
    n = pos.shape[0]
    kinds, prm, rad = _joint_arrays(kind, params, radii)
    advance(kinds, prm, rad, pos, vel, goals, obstacles, dt, consts,
            pos, vel, np.arange(n + 1), np.zeros((n, 2)), 0.0, 0, n, out_pos, out_vel)


@njit(cache=True, error_model="numpy", nogil=True)
def replay_batch(kind, s_pos, s_vel0, present, goals, params, obstacles, dt, consts, errors):
    """Replay every parameter set in ``params`` (B, n, p) from the oldest window
    state and accumulate per-agent position errors into ``errors`` (B, n)."""
    T = s_pos.shape[0]
    n = s_pos.shape[1]
    B = params.shape[0]
    rc = radius_col(kind)
    for b in range(B):
        pos = s_pos[0].copy()
        vel = s_vel0.copy()
        out_pos = np.empty_like(pos)
        out_vel = np.empty_like(vel)
        radii = np.zeros(n)
        if rc >= 0:
            for a in range(n):
                radii[a] = params[b, a, rc]
        for a in range(n):
            errors[b, a] = 0.0
        kinds, prm, rad = _joint_arrays(kind, params[b], radii)
        offsets = np.arange(n + 1)
        noise = np.zeros((n, 2))
        for t in range(1, T):
            advance(kinds, prm, rad, pos, vel, goals, obstacles, dt, consts,
                    pos, vel, offsets, noise, 0.0, 0, n, out_pos, out_vel)
            pos, out_pos = out_pos, pos
            vel, out_vel = out_vel, vel
            for a in range(n):
                if present[t, a]:
                    dx = s_pos[t, a, 0] - pos[a, 0]
                    dy = s_pos[t, a, 1] - pos[a, 1]
                    errors[b, a] += math.sqrt(dx * dx + dy * dy)
