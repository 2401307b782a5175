# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled simulation kernel.

Statement-by-statement mirror of ``_pykernel.py``. Built without fast-math
and with FP contraction disabled so results match the Python fallback bit
for bit.
"""

from libc.math cimport cos, sin, sqrt, fabs, remainder, isfinite, M_PI

cdef enum:
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

cdef enum:
    F_GOAL_HOME = 1
    F_GOAL_AWAY = 2
    F_OUT = 4
    F_FALL = 8
    F_BAD_CMD = 16
    F_CONTACT = 32

cdef enum:
    S_FELL = 1
    S_BAD_CMD = 2

cdef double TWO_PI = 2.0 * M_PI


cdef inline double _wrap(double a) nogil:
    a = remainder(a, TWO_PI)
    if a == -M_PI:
        a = M_PI
    return a


cdef inline void _robot_robot(double[:, ::1] P, Py_ssize_t i, Py_ssize_t j, double hl, double hw) nogil:
    cdef double xa = P[i, 0]
    cdef double ya = P[i, 1]
    cdef double xb = P[j, 0]
    cdef double yb = P[j, 1]
    cdef double dx = xb - xa
    cdef double dy = yb - ya
    cdef double reach = 2.0 * (hl + hw)
    if dx * dx + dy * dy >= reach * reach:
        return
    cdef double ca = cos(P[i, 2])
    cdef double sa = sin(P[i, 2])
    cdef double cb = cos(P[j, 2])
    cdef double sb = sin(P[j, 2])
    cdef double best = 1e300
    cdef double bux = 0.0
    cdef double buy = 0.0
    cdef double bsign = 1.0
    cdef double ux, uy, ra, rb, d, ov, h
    cdef int k
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
        ra = hl * fabs(ux * ca + uy * sa) + hw * fabs(uy * ca - ux * sa)
        rb = hl * fabs(ux * cb + uy * sb) + hw * fabs(uy * cb - ux * sb)
        d = dx * ux + dy * uy
        ov = ra + rb - fabs(d)
        if ov <= 0.0:
            return
        if ov < best:
            best = ov
            bux = ux
            buy = uy
            bsign = 1.0 if d >= 0.0 else -1.0
    h = 0.5 * best
    P[i, 0] = xa - bsign * bux * h
    P[i, 1] = ya - bsign * buy * h
    P[j, 0] = xb + bsign * bux * h
    P[j, 1] = yb + bsign * buy * h


cdef inline int _robot_ball(double[:, ::1] P, double[:, ::1] V, Py_ssize_t i, double* ball,
                            double hl, double hw, double r, double e, bint move_ball) nogil:
    cdef double x = P[i, 0]
    cdef double y = P[i, 1]
    cdef double c = cos(P[i, 2])
    cdef double s = sin(P[i, 2])
    cdef double rx = ball[0] - x
    cdef double ry = ball[1] - y
    cdef double lx = c * rx + s * ry
    cdef double ly = c * ry - s * rx
    cdef double px, py, nlx, nly, pen, qx, qy, ddx, ddy, d2, d
    cdef double nx, ny, vx, vy, w, gx, gy, pvx, pvy, vn, k
    if fabs(lx) <= hl and fabs(ly) <= hw:
        px = hl - fabs(lx)
        py = hw - fabs(ly)
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
        P[i, 0] = x - nx * pen
        P[i, 1] = y - ny * pen
    vx = V[i, 0]
    vy = V[i, 1]
    w = V[i, 2]
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


def step_kernel(double[:, ::1] pose, double[:, ::1] vel, unsigned char[::1] upright,
                double[::1] fall_timer, double[:, ::1] cmd, double[:, ::1] noise,
                double[::1] fall_u, double[::1] ball_pos, double[::1] ball_vel,
                double[:, ::1] ball_hist, double[::1] params, unsigned char[::1] status):
    """Advance the packed world by one tick in place; return event flag bits."""
    cdef double dt = params[P_DT]
    cdef double vmax = params[P_VMAX]
    cdef double wmax = params[P_WMAX]
    cdef double decel = params[P_BALL_DECEL]
    cdef double alpha = params[P_LAG_ALPHA]
    cdef double half_len = params[P_HALF_LEN]
    cdef double half_wid = params[P_HALF_WID]
    cdef double goal_half = params[P_GOAL_HALF]
    cdef double hl = params[P_ROBOT_HL]
    cdef double hw = params[P_ROBOT_HW]
    cdef double br = params[P_BALL_R]
    cdef double e = params[P_RESTITUTION]
    cdef double apron = params[P_APRON]
    cdef double fall_prob = params[P_FALL_PROB]
    cdef double recovery = params[P_FALL_RECOVERY]
    cdef int iters = <int>params[P_ITERS]
    cdef double xlim = half_len + apron
    cdef double ylim = half_wid + apron
    cdef Py_ssize_t n = pose.shape[0]
    cdef Py_ssize_t i, j
    cdef int it
    cdef int flags = 0
    cdef int contact = 0
    cdef int goal = 0
    cdef double cvx, cvy, cw, sp, k, vx, vy, w, th, c, s, x, y
    cdef double ox, oy, bx, by, bvx, bvy, bs, dv, ns, d, ux, uy, t, yc
    cdef double ball[4]

    with nogil:
        for i in range(n):
            status[i] = 0
            if upright[i] == 0:
                vel[i, 0] = 0.0
                vel[i, 1] = 0.0
                vel[i, 2] = 0.0
                fall_timer[i] = fall_timer[i] - dt
                if fall_timer[i] <= 1e-9:
                    fall_timer[i] = 0.0
                    upright[i] = 1
                continue
            cvx = cmd[i, 0]
            cvy = cmd[i, 1]
            cw = cmd[i, 2]
            if not (isfinite(cvx) and isfinite(cvy) and isfinite(cw)):
                cvx = 0.0
                cvy = 0.0
                cw = 0.0
                status[i] = status[i] | S_BAD_CMD
                flags = flags | F_BAD_CMD
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
                vx = vel[i, 0] + alpha * (cvx - vel[i, 0])
                vy = vel[i, 1] + alpha * (cvy - vel[i, 1])
                w = vel[i, 2] + alpha * (cw - vel[i, 2])
            vx = vx + noise[i, 0]
            vy = vy + noise[i, 1]
            w = w + noise[i, 2]
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
                    vel[i, 0] = 0.0
                    vel[i, 1] = 0.0
                    vel[i, 2] = 0.0
                    upright[i] = 0
                    fall_timer[i] = recovery
                    status[i] = status[i] | S_FELL
                    flags = flags | F_FALL
                    continue
            vel[i, 0] = vx
            vel[i, 1] = vy
            vel[i, 2] = w
            th = pose[i, 2]
            c = cos(th)
            s = sin(th)
            x = pose[i, 0] + (c * vx - s * vy) * dt
            y = pose[i, 1] + (s * vx + c * vy) * dt
            if x > xlim:
                x = xlim
            elif x < -xlim:
                x = -xlim
            if y > ylim:
                y = ylim
            elif y < -ylim:
                y = -ylim
            pose[i, 0] = x
            pose[i, 1] = y
            pose[i, 2] = _wrap(th + w * dt)

        ox = ball_pos[0]
        oy = ball_pos[1]
        ball_hist[0, 0] = ball_hist[1, 0]
        ball_hist[0, 1] = ball_hist[1, 1]
        ball_hist[1, 0] = ball_hist[2, 0]
        ball_hist[1, 1] = ball_hist[2, 1]
        ball_hist[2, 0] = ox
        ball_hist[2, 1] = oy
        bx = ox
        by = oy
        bvx = ball_vel[0]
        bvy = ball_vel[1]
        bs = sqrt(bvx * bvx + bvy * bvy)
        if bs > 0.0:
            dv = decel * dt
            if bs <= dv:
                ns = 0.0
                d = bs * bs / (2.0 * decel)
            else:
                ns = bs - dv
                d = 0.5 * (bs + ns) * dt
            ux = bvx / bs
            uy = bvy / bs
            bx = ox + ux * d
            by = oy + uy * d
            bvx = ux * ns
            bvy = uy * ns

        ball[0] = bx
        ball[1] = by
        ball[2] = bvx
        ball[3] = bvy
        for it in range(iters):
            for i in range(n):
                for j in range(i + 1, n):
                    _robot_robot(pose, i, j, hl, hw)
            for i in range(n):
                contact = contact | _robot_ball(pose, vel, i, ball, hl, hw, br, e, 1)
        for i in range(n):
            contact = contact | _robot_ball(pose, vel, i, ball, hl, hw, br, e, 0)
        if contact:
            flags = flags | F_CONTACT
        bx = ball[0]
        by = ball[1]
        bvx = ball[2]
        bvy = ball[3]
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

        if ox < half_len and bx >= half_len:
            t = (half_len - ox) / (bx - ox)
            yc = oy + t * (by - oy)
            if fabs(yc) <= goal_half:
                goal = F_GOAL_HOME
        elif ox > -half_len and bx <= -half_len:
            t = (-half_len - ox) / (bx - ox)
            yc = oy + t * (by - oy)
            if fabs(yc) <= goal_half:
                goal = F_GOAL_AWAY
        if goal:
            flags = flags | goal
        elif fabs(ox) <= half_len and fabs(oy) <= half_wid and (fabs(bx) > half_len or fabs(by) > half_wid):
            flags = flags | F_OUT

        ball_pos[0] = bx
        ball_pos[1] = by
        ball_vel[0] = bvx
        ball_vel[1] = bvy
    return flags
