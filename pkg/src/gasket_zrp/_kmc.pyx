# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled event loop for the zero-range CTMC.

Keep in lockstep with ``_kmc_py.py``: same uniform consumption, same
floating-point operation order.
"""

from libc.math cimport log, fabs

cdef enum:
    REACHED = 0
    NEED_RANDOM = 1
    FROZEN = 2
    UNIFORMS_PER_EVENT = 3


def advance(
    long long[::1] eta,
    long long[::1] deg,
    long long[:, ::1] nbr,
    double[::1] tree,
    double[::1] rate_tab,
    double[:, ::1] field_w,
    double[::1] field_val,
    double[::1] qv,
    double[::1] jmax,
    double[:, ::1] chan_w,
    double[:, ::1] chan_tab,
    double[::1] chan_val,
    double[::1] chan_int,
    double[::1] U,
    Py_ssize_t pos,
    double clock,
    double t_stop,
    long long[:, ::1] log_xy,
    double[::1] log_t,
    Py_ssize_t n_logged,
):
    cdef Py_ssize_t P = tree.shape[0] // 2
    cdef Py_ssize_t n_fields = field_val.shape[0]
    cdef Py_ssize_t n_chan = chan_val.shape[0]
    cdef Py_ssize_t log_cap = log_t.shape[0]
    cdef Py_ssize_t M = U.shape[0]
    cdef Py_ssize_t i, x, y, c, f, site, k
    cdef long long ex, ey
    cdef double R, dt, target, left, d, ad
    cdef long long n_events = 0
    cdef int status = REACHED

    with nogil:
        while True:
            R = tree[1]
            if R <= 0.0:
                dt = t_stop - clock
                for c in range(n_chan):
                    chan_int[c] += chan_val[c] * dt
                clock = t_stop
                status = FROZEN
                break
            if pos + UNIFORMS_PER_EVENT > M:
                status = NEED_RANDOM
                break
            dt = -log(1.0 - U[pos]) / R
            if clock + dt >= t_stop:
                dt = t_stop - clock
                for c in range(n_chan):
                    chan_int[c] += chan_val[c] * dt
                clock = t_stop
                pos += 1
                status = REACHED
                break
            for c in range(n_chan):
                chan_int[c] += chan_val[c] * dt
            clock += dt

            target = U[pos + 1] * R
            i = 1
            while i < P:
                left = tree[2 * i]
                if target < left or tree[2 * i + 1] <= 0.0:
                    i = 2 * i
                else:
                    target -= left
                    i = 2 * i + 1
            x = i - P
            y = nbr[x, <Py_ssize_t>(U[pos + 2] * deg[x])]
            pos += UNIFORMS_PER_EVENT

            ex = eta[x]
            ey = eta[y]
            for c in range(n_chan):
                chan_val[c] += chan_w[c, x] * (chan_tab[c, ex - 1] - chan_tab[c, ex]) + chan_w[c, y] * (chan_tab[c, ey + 1] - chan_tab[c, ey])
            eta[x] = ex - 1
            eta[y] = ey + 1
            for f in range(n_fields):
                d = field_w[f, y] - field_w[f, x]
                field_val[f] += d
                qv[f] += d * d
                ad = fabs(d)
                if ad > jmax[f]:
                    jmax[f] = ad

            for k in range(2):
                site = x if k == 0 else y
                i = P + site
                tree[i] = deg[site] * rate_tab[eta[site]]
                i //= 2
                while i >= 1:
                    tree[i] = tree[2 * i] + tree[2 * i + 1]
                    i //= 2

            if n_logged < log_cap:
                log_xy[n_logged, 0] = x
                log_xy[n_logged, 1] = y
                log_t[n_logged] = clock
                n_logged += 1
            n_events += 1

    return status, pos, clock, n_events, n_logged
