"""Pure-Python event loop; mirrors ``_kmc.pyx`` operation for operation.

Both implementations consume the uniform buffer identically and perform the
same floating-point operations in the same order, so they produce
bit-identical trajectories.
"""

import math

REACHED = 0
NEED_RANDOM = 1
FROZEN = 2

UNIFORMS_PER_EVENT = 3


def advance(
    eta,
    deg,
    nbr,
    tree,
    rate_tab,
    field_w,
    field_val,
    qv,
    jmax,
    chan_w,
    chan_tab,
    chan_val,
    chan_int,
    U,
    pos,
    clock,
    t_stop,
    log_xy,
    log_t,
    n_logged,
):
    """Run the rejection-free CTMC until ``t_stop`` or the uniforms run out.

    Returns ``(status, pos, clock, n_events, n_logged)``. All array arguments
    are updated in place.
    """
    P = len(tree) // 2
    n_fields = len(field_val)
    n_chan = len(chan_val)
    log_cap = len(log_t)
    M = len(U)

    # work on Python lists; numpy scalar access dominates otherwise
    e = eta.tolist()
    dg = deg.tolist()
    nb = nbr.tolist()
    tr = tree.tolist()
    rt = rate_tab.tolist()
    fw = field_w.tolist()
    fv = field_val.tolist()
    q = qv.tolist()
    jm = jmax.tolist()
    cw = chan_w.tolist()
    ct = chan_tab.tolist()
    cv = chan_val.tolist()
    ci = chan_int.tolist()
    u = U.tolist()

    n_events = 0
    status = REACHED
    while True:
        R = tr[1]
        if R <= 0.0:
            dt = t_stop - clock
            for c in range(n_chan):
                ci[c] += cv[c] * dt
            clock = t_stop
            status = FROZEN
            break
        if pos + UNIFORMS_PER_EVENT > M:
            status = NEED_RANDOM
            break
        dt = -math.log(1.0 - u[pos]) / R
        if clock + dt >= t_stop:
            dt = t_stop - clock
            for c in range(n_chan):
                ci[c] += cv[c] * dt
            clock = t_stop
            pos += 1
            status = REACHED
            break
        for c in range(n_chan):
            ci[c] += cv[c] * dt
        clock += dt

        target = u[pos + 1] * R
        i = 1
        while i < P:
            left = tr[2 * i]
            if target < left or tr[2 * i + 1] <= 0.0:
                i = 2 * i
            else:
                target -= left
                i = 2 * i + 1
        x = i - P
        y = nb[x][int(u[pos + 2] * dg[x])]
        pos += UNIFORMS_PER_EVENT

        ex = e[x]
        ey = e[y]
        for c in range(n_chan):
            row = ct[c]
            w = cw[c]
            cv[c] += w[x] * (row[ex - 1] - row[ex]) + w[y] * (row[ey + 1] - row[ey])
        e[x] = ex - 1
        e[y] = ey + 1
        for f in range(n_fields):
            w = fw[f]
            d = w[y] - w[x]
            fv[f] += d
            q[f] += d * d
            if abs(d) > jm[f]:
                jm[f] = abs(d)

        for site in (x, y):
            i = P + site
            tr[i] = dg[site] * rt[e[site]]
            i //= 2
            while i >= 1:
                tr[i] = tr[2 * i] + tr[2 * i + 1]
                i //= 2

        if n_logged < log_cap:
            log_xy[n_logged, 0] = x
            log_xy[n_logged, 1] = y
            log_t[n_logged] = clock
            n_logged += 1
        n_events += 1

    eta[:] = e
    tree[:] = tr
    field_val[:] = fv
    qv[:] = q
    jmax[:] = jm
    chan_val[:] = cv
    chan_int[:] = ci
    return status, pos, clock, n_events, n_logged
