"""Pure-Python simulation kernel.

Reference implementation of one simulator tick over packed arrays. The
compiled kernel in ``_kernel.pyx`` mirrors this file statement by statement;
both must produce bit-identical states, so keep the floating point
expression order of the two in sync.
"""

from math import cos, isfinite, pi, remainder, sin, sqrt

# params vector layout (shared with _kernel.pyx)
P_DT = 0
P_VMAX = 1
P_WMAX = 2
P_BALL_DECEL = 3
P_LAG_ALPHA = 4
P_HALF_LEN = 5
P_HALF_WID = 6
P_GOAL_HALF = 7
P_ROBOT_HL = 8
P_ROBOT_HW = 9
P_BALL_R = 10
P_RESTITUTION = 11
P_APRON = 12
P_FALL_PROB = 13
P_FALL_RECOVERY = 14
P_ITERS = 15
N_PARAMS = 16

# returned flag bits
F_GOAL_HOME = 1
F_GOAL_AWAY = 2
F_OUT = 4
F_FALL = 8
F_BAD_CMD = 16
F_CONTACT = 32

# per-robot status bits
S_FELL = 1
S_BAD_CMD = 2

TWO_PI = 2.0 * pi


def _wrap(a):
    a = remainder(a, TWO_PI)
    if a == -pi:
        a = pi
    return a


def _robot_robot(pose, i, j, hl, hw):
    xa = pose[i][0]
    ya = pose[i][1]
    xb = pose[j][0]
    yb = pose[j][1]
    dx = xb - xa
    dy = yb - ya
    reach = 2.0 * (hl + hw)
    if dx * dx + dy * dy >= reach * reach:
        return
    ca = cos(pose[i][2])
    sa = sin(pose[i][2])
    cb = cos(pose[j][2])
    sb = sin(pose[j][2])
    best = 1e300
    bux = 0.0
    buy = 0.0
    bsign = 1.0
    for k in range(4):
        if k == 0:
            ux = ca
            uy = sa
        elif k == 1:
            ux = -sa
            uy = ca
        elif k == 2:
            ux = cb
            uy = sb
        else:
            ux = -sb
            uy = cb
        ra = hl * abs(ux * ca + uy * sa) + hw * abs(uy * ca - ux * sa)
        rb = hl * abs(ux * cb + uy * sb) + hw * abs(uy * cb - ux * sb)
        d = dx * ux + dy * uy
        ov = ra + rb - abs(d)
        if ov <= 0.0:
            return
        if ov < best:
            best = ov
            bux = ux
            buy = uy
            bsign = 1.0 if d >= 0.0 else -1.0
    h = 0.5 * best
    pose[i][0] = xa - bsign * bux * h
    pose[i][1] = ya - bsign * buy * h
    pose[j][0] = xb + bsign * bux * h
    pose[j][1] = yb + bsign * buy * h


def _robot_ball(pose, vel, i, ball, hl, hw, r, e, move_ball):
    """Separate robot ``i`` and the ball. ``ball`` is [x, y, vx, vy]."""
    x = pose[i][0]
    y = pose[i][1]
    c = cos(pose[i][2])
    s = sin(pose[i][2])
    rx = ball[0] - x
    ry = ball[1] - y
    lx = c * rx + s * ry
    ly = c * ry - s * rx
    if abs(lx) <= hl and abs(ly) <= hw:
        px = hl - abs(lx)
        py = hw - abs(ly)
        if px <= py:
            nlx = 1.0 if lx >= 0.0 else -1.0
            nly = 0.0
            pen = px + r
            qx = nlx * hl
            qy = ly
        else:
            nlx = 0.0
            nly = 1.0 if ly >= 0.0 else -1.0
            pen = py + r
            qx = lx
            qy = nly * hw
    else:
        qx = lx
        if qx > hl:
            qx = hl
        elif qx < -hl:
            qx = -hl
        qy = ly
        if qy > hw:
            qy = hw
        elif qy < -hw:
            qy = -hw
        ddx = lx - qx
        ddy = ly - qy
        d2 = ddx * ddx + ddy * ddy
        if d2 >= r * r:
            return 0
        d = sqrt(d2)
        nlx = ddx / d
        nly = ddy / d
        pen = r - d
    nx = c * nlx - s * nly
    ny = s * nlx + c * nly
    if move_ball:
        ball[0] = ball[0] + nx * pen
        ball[1] = ball[1] + ny * pen
    else:
        pose[i][0] = x - nx * pen
        pose[i][1] = y - ny * pen
    vx = vel[i][0]
    vy = vel[i][1]
    w = vel[i][2]
    gx = c * qx - s * qy
    gy = s * qx + c * qy
    pvx = c * vx - s * vy - w * gy
    pvy = s * vx + c * vy + w * gx
    vn = (ball[2] - pvx) * nx + (ball[3] - pvy) * ny
    if vn < 0.0:
        k = (1.0 + e) * vn
        ball[2] = ball[2] - k * nx
        ball[3] = ball[3] - k * ny
    return 1


def step_kernel(pose, vel, upright, fall_timer, cmd, noise, fall_u,
                ball_pos, ball_vel, ball_hist, params, status):
    """Advance the packed world by one tick in place; return event flag bits."""
    dt = params[P_DT]
    vmax = params[P_VMAX]
    wmax = params[P_WMAX]
    decel = params[P_BALL_DECEL]
    alpha = params[P_LAG_ALPHA]
    half_len = params[P_HALF_LEN]
    half_wid = params[P_HALF_WID]
    goal_half = params[P_GOAL_HALF]
    hl = params[P_ROBOT_HL]
    hw = params[P_ROBOT_HW]
    br = params[P_BALL_R]
    e = params[P_RESTITUTION]
    apron = params[P_APRON]
    fall_prob = params[P_FALL_PROB]
    recovery = params[P_FALL_RECOVERY]
    iters = int(params[P_ITERS])
    xlim = half_len + apron
    ylim = half_wid + apron

    # plain lists are much faster than ndarray element access in CPython
    P = pose.tolist()
    V = vel.tolist()
    C = cmd.tolist()
    N = noise.tolist()
    n = len(P)
    flags = 0

    for i in range(n):
        status[i] = 0
        if upright[i] == 0:
            V[i][0] = 0.0
            V[i][1] = 0.0
            V[i][2] = 0.0
            fall_timer[i] = fall_timer[i] - dt
            if fall_timer[i] <= 1e-9:
                fall_timer[i] = 0.0
                upright[i] = 1
            continue
        cvx = C[i][0]
        cvy = C[i][1]
        cw = C[i][2]
        if not (isfinite(cvx) and isfinite(cvy) and isfinite(cw)):
            cvx = 0.0
            cvy = 0.0
            cw = 0.0
            status[i] = status[i] | S_BAD_CMD
            flags |= F_BAD_CMD
        sp = sqrt(cvx * cvx + cvy * cvy)
        if sp > vmax:
            k = vmax / sp
            cvx = cvx * k
            cvy = cvy * k
        if cw > wmax:
            cw = wmax
        elif cw < -wmax:
            cw = -wmax
        if alpha >= 1.0:
            vx = cvx
            vy = cvy
            w = cw
        else:
            vx = V[i][0] + alpha * (cvx - V[i][0])
            vy = V[i][1] + alpha * (cvy - V[i][1])
            w = V[i][2] + alpha * (cw - V[i][2])
        vx = vx + N[i][0]
        vy = vy + N[i][1]
        w = w + N[i][2]
        sp = sqrt(vx * vx + vy * vy)
        if sp > vmax:
            k = vmax / sp
            vx = vx * k
            vy = vy * k
            sp = vmax
        if w > wmax:
            w = wmax
        elif w < -wmax:
            w = -wmax
        if fall_prob > 0.0:
            if fall_u[i] < fall_prob * (sp / vmax):
                V[i][0] = 0.0
                V[i][1] = 0.0
                V[i][2] = 0.0
                upright[i] = 0
                fall_timer[i] = recovery
                status[i] = status[i] | S_FELL
                flags |= F_FALL
                continue
        V[i][0] = vx
        V[i][1] = vy
        V[i][2] = w
        th = P[i][2]
        c = cos(th)
        s = sin(th)
        x = P[i][0] + (c * vx - s * vy) * dt
        y = P[i][1] + (s * vx + c * vy) * dt
        if x > xlim:
            x = xlim
        elif x < -xlim:
            x = -xlim
        if y > ylim:
            y = ylim
        elif y < -ylim:
            y = -ylim
        P[i][0] = x
        P[i][1] = y
        P[i][2] = _wrap(th + w * dt)

    # ball: constant deceleration, closed-form travel within the tick
    ox = float(ball_pos[0])
    oy = float(ball_pos[1])
    ball_hist[0, 0] = ball_hist[1, 0]
    ball_hist[0, 1] = ball_hist[1, 1]
    ball_hist[1, 0] = ball_hist[2, 0]
    ball_hist[1, 1] = ball_hist[2, 1]
    ball_hist[2, 0] = ox
    ball_hist[2, 1] = oy
    bx = ox
    by = oy
    bvx = float(ball_vel[0])
    bvy = float(ball_vel[1])
    s = sqrt(bvx * bvx + bvy * bvy)
    if s > 0.0:
        dv = decel * dt
        if s <= dv:
            ns = 0.0
            d = s * s / (2.0 * decel)
        else:
            ns = s - dv
            d = 0.5 * (s + ns) * dt
        ux = bvx / s
        uy = bvy / s
        bx = ox + ux * d
        by = oy + uy * d
        bvx = ux * ns
        bvy = uy * ns

    ball = [bx, by, bvx, bvy]
    contact = 0
    for _ in range(iters):
        for i in range(n):
            for j in range(i + 1, n):
                _robot_robot(P, i, j, hl, hw)
        for i in range(n):
            contact |= _robot_ball(P, V, i, ball, hl, hw, br, e, True)
    for i in range(n):
        contact |= _robot_ball(P, V, i, ball, hl, hw, br, e, False)
    if contact:
        flags |= F_CONTACT
    bx, by, bvx, bvy = ball
    if bx > xlim:
        bx = xlim
        bvx = 0.0
    elif bx < -xlim:
        bx = -xlim
        bvx = 0.0
    if by > ylim:
        by = ylim
        bvy = 0.0
    elif by < -ylim:
        by = -ylim
        bvy = 0.0

    goal = 0
    if ox < half_len and bx >= half_len:
        t = (half_len - ox) / (bx - ox)
        yc = oy + t * (by - oy)
        if abs(yc) <= goal_half:
            goal = F_GOAL_HOME
    elif ox > -half_len and bx <= -half_len:
        t = (-half_len - ox) / (bx - ox)
        yc = oy + t * (by - oy)
        if abs(yc) <= goal_half:
            goal = F_GOAL_AWAY
    if goal:
        flags |= goal
    elif abs(ox) <= half_len and abs(oy) <= half_wid and (abs(bx) > half_len or abs(by) > half_wid):
        flags |= F_OUT

    ball_pos[0] = bx
    ball_pos[1] = by
    ball_vel[0] = bvx
    ball_vel[1] = bvy
    pose[:, :] = P
    vel[:, :] = V
    return flags
