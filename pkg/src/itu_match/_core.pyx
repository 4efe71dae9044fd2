# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled evaluation backend.

Same contract as ``itu_match._kernels_py``: a stack machine over the six
distance opcodes plus the two hot solver sweeps, with identical
active-branch tie-breaking and safeguarded-solve semantics.  Scalar
loops replace the NumPy group vectorization, which is what makes
market-sized tables and inner Newton iterations cheap.
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport exp, fabs, fmax, fmin, isfinite, log, log1p

cnp.import_array()

NAME = "compiled"
IS_COMPILED = True

cdef int OP_TU = 0
cdef int OP_NTU = 1
cdef int OP_LTU = 2
cdef int OP_ETU = 3
cdef int OP_MIN = 4
cdef int OP_MAX = 5


cdef inline double _eval_one(const cnp.int32_t* codes, const double* args, int L,
                             double u, double v,
                             double* sv, double* sdu, double* sdv,
                             double* out_du, double* out_dv) noexcept nogil:
    cdef int sp = 0, i, j, k, best, op
    cdef const double* a
    cdef double p, q, d, s
    for i in range(L):
        op = codes[i]
        a = args + 4 * i
        if op == OP_TU:
            sv[sp] = 0.5 * (u + v - a[0])
            sdu[sp] = 0.5
            sdv[sp] = 0.5
            sp += 1
        elif op == OP_NTU:
            p = u - a[0]
            q = v - a[1]
            if p >= q:
                sv[sp] = p
                sdu[sp] = 1.0
                sdv[sp] = 0.0
            else:
                sv[sp] = q
                sdu[sp] = 0.0
                sdv[sp] = 1.0
            sp += 1
        elif op == OP_LTU:
            sv[sp] = a[0] * u + a[1] * v - a[2]
            sdu[sp] = a[0]
            sdv[sp] = a[1]
            sp += 1
        elif op == OP_ETU:
            p = (u - a[0]) / a[2]
            q = (v - a[1]) / a[2]
            if p >= q:
                d = q - p
                sv[sp] = a[2] * (p + log1p(exp(d)) - a[3])
                s = 1.0 / (1.0 + exp(d))
                sdu[sp] = s
                sdv[sp] = 1.0 - s
            else:
                d = p - q
                sv[sp] = a[2] * (q + log1p(exp(d)) - a[3])
                s = 1.0 / (1.0 + exp(d))
                sdu[sp] = 1.0 - s
                sdv[sp] = s
            sp += 1
        elif op == OP_MIN:
            k = <int> a[0]
            best = sp - k
            for j in range(sp - k + 1, sp):
                if sv[j] < sv[best]:
                    best = j
            sv[sp - k] = sv[best]
            sdu[sp - k] = sdu[best]
            sdv[sp - k] = sdv[best]
            sp = sp - k + 1
        else:
            k = <int> a[0]
            best = sp - k
            for j in range(sp - k + 1, sp):
                if sv[j] > sv[best]:
                    best = j
            sv[sp - k] = sv[best]
            sdu[sp - k] = sdu[best]
            sdv[sp - k] = sdv[best]
            sp = sp - k + 1
    out_du[0] = sdu[0]
    out_dv[0] = sdv[0]
    return sv[0]


def eval_points(prog, u, v, bint grad=False):
    """Evaluate one program over point arrays ``u``, ``v``."""
    cdef const cnp.int32_t[::1] codes = np.ascontiguousarray(prog.codes, dtype=np.int32)
    cdef const double[:, ::1] args = np.ascontiguousarray(prog.args, dtype=np.float64)
    u_arr = np.ascontiguousarray(u, dtype=np.float64).ravel()
    v_arr = np.ascontiguousarray(v, dtype=np.float64).ravel()
    cdef const double[::1] uu = u_arr
    cdef const double[::1] vv = v_arr
    cdef Py_ssize_t npts = uu.shape[0], i
    cdef int L = codes.shape[0]
    out = np.empty(npts)
    dua = np.empty(npts)
    dva = np.empty(npts)
    cdef double[::1] o = out, du = dua, dv = dva
    scratch = np.empty((3, max(prog.stack_need, 1)))
    cdef double[:, ::1] st = scratch
    with nogil:
        for i in range(npts):
            o[i] = _eval_one(&codes[0], &args[0, 0], L, uu[i], vv[i],
                             &st[0, 0], &st[1, 0], &st[2, 0], &du[i], &dv[i])
    if grad:
        return out, dua, dva
    return out


def eval_table(table, u, v, bint grad=False):
    """Evaluate row ``i`` of the table at ``(u[i], v[i])`` for all rows."""
    cdef const cnp.int32_t[:, ::1] codes = table.codes
    cdef const double[:, :, ::1] args = table.args
    cdef const cnp.int32_t[::1] lens = table.lens
    u_arr = np.ascontiguousarray(u, dtype=np.float64).ravel()
    v_arr = np.ascontiguousarray(v, dtype=np.float64).ravel()
    cdef const double[::1] uu = u_arr
    cdef const double[::1] vv = v_arr
    cdef Py_ssize_t P = codes.shape[0], i
    out = np.empty(P)
    dua = np.empty(P)
    dva = np.empty(P)
    cdef double[::1] o = out, du = dua, dv = dva
    scratch = np.empty((3, max(table.stack_need, 1)))
    cdef double[:, ::1] st = scratch
    with nogil:
        for i in range(P):
            o[i] = _eval_one(&codes[i, 0], &args[i, 0, 0], lens[i], uu[i], vv[i],
                             &st[0, 0], &st[1, 0], &st[2, 0], &du[i], &dv[i])
    if grad:
        return out, dua, dva
    return out


cdef inline double _logaddexp(double a, double b) noexcept nogil:
    cdef double hi = fmax(a, b)
    cdef double lo = fmin(a, b)
    if hi - lo > 700.0 or lo != lo:
        return hi
    return hi + log1p(exp(lo - hi))


cdef struct SideF:
    double f
    double fp


cdef inline SideF _balance_f(const cnp.int32_t* codes, const double* args,
                             const cnp.int32_t* lens, int stride_codes, int stride_args,
                             int n_other, int cell0, int cell_step,
                             bint row_side, double sigma, double l_own,
                             const double* w_other, double target,
                             double* sv, double* sdu, double* sdv) noexcept nogil:
    """One side's rebalancing residual exp(l) + sum_j M - target and slope."""
    cdef SideF r
    cdef int j, cell
    cdef double d, m, du, dv, own = -sigma * l_own
    r.f = exp(l_own) - target
    r.fp = exp(l_own)
    for j in range(n_other):
        cell = cell0 + j * cell_step
        if row_side:
            d = _eval_one(codes + cell * stride_codes, args + cell * stride_args,
                          lens[cell], own, w_other[j], sv, sdu, sdv, &du, &dv)
        else:
            d = _eval_one(codes + cell * stride_codes, args + cell * stride_args,
                          lens[cell], w_other[j], own, sv, sdu, sdv, &du, &dv)
            du = dv
        m = exp(-d / sigma)
        r.f += m
        r.fp += m * du
    return r


def ipfp_sweep(table, int n_rows, int n_cols, bint row_side, double sigma,
               targets, w_other, log_guess, ftol):
    """Per-type rebalancing solves in log space (bracketed Newton)."""
    cdef const cnp.int32_t[:, ::1] codes = table.codes
    cdef const double[:, :, ::1] args = table.args
    cdef const cnp.int32_t[::1] lens = table.lens
    cdef const double[::1] tg = np.ascontiguousarray(targets, dtype=np.float64)
    cdef const double[::1] wo = np.ascontiguousarray(w_other, dtype=np.float64)
    cdef const double[::1] lg = np.ascontiguousarray(log_guess, dtype=np.float64)
    cdef const double[::1] ft = np.ascontiguousarray(ftol, dtype=np.float64)
    cdef int n_active = n_rows if row_side else n_cols
    cdef int n_other = n_cols if row_side else n_rows
    out = np.empty(n_active)
    cdef double[::1] o = out
    scratch = np.empty((3, max(table.stack_need, 1)))
    cdef double[:, ::1] st = scratch
    cdef int stride_codes = codes.shape[1]
    cdef int stride_args = args.shape[1] * 4
    cdef int i, it, cell0, cell_step
    cdef double lo, hi, x, step, newton
    cdef SideF r
    with nogil:
        for i in range(n_active):
            if row_side:
                cell0 = i * n_cols
                cell_step = 1
            else:
                cell0 = i
                cell_step = n_cols
            hi = log(tg[i])
            lo = fmin(lg[i], hi)
            r = _balance_f(&codes[0, 0], &args[0, 0, 0], &lens[0], stride_codes,
                           stride_args, n_other, cell0, cell_step, row_side, sigma,
                           lo, &wo[0], tg[i], &st[0, 0], &st[1, 0], &st[2, 0])
            step = 1.0
            for it in range(200):
                if r.f <= 0.0:
                    break
                if lo < hi:
                    hi = lo
                lo -= step
                step *= 2.0
                r = _balance_f(&codes[0, 0], &args[0, 0, 0], &lens[0], stride_codes,
                               stride_args, n_other, cell0, cell_step, row_side, sigma,
                               lo, &wo[0], tg[i], &st[0, 0], &st[1, 0], &st[2, 0])
            x = 0.5 * (lo + hi)
            for it in range(300):
                r = _balance_f(&codes[0, 0], &args[0, 0, 0], &lens[0], stride_codes,
                               stride_args, n_other, cell0, cell_step, row_side, sigma,
                               x, &wo[0], tg[i], &st[0, 0], &st[1, 0], &st[2, 0])
                if fabs(r.f) <= ft[i]:
                    break
                if r.f < 0.0:
                    lo = x
                else:
                    hi = x
                newton = x - r.f / r.fp
                if isfinite(newton) and newton > lo and newton < hi:
                    x = newton
                else:
                    x = 0.5 * (lo + hi)
                if hi - lo < 1e-16:
                    break
            o[i] = x
    return out


cdef inline double _z_cell(const cnp.int32_t* codes, const double* args, int L,
                           double w, double n_x, double m_y, double r_u, double r_v,
                           double* sv, double* sdu, double* sdv) noexcept nogil:
    cdef double du, dv
    cdef double u_w = -_eval_one(codes, args, L, 0.0, -w, sv, sdu, sdv, &du, &dv)
    cdef double v_w = u_w - w
    cdef double supply = n_x * exp(u_w - _logaddexp(r_u, u_w))
    cdef double demand = m_y * exp(v_w - _logaddexp(r_v, v_w))
    return demand - supply


def jacobi_sweep(table, W, n, m, clamp_lo, clamp_hi, double ztol):
    """One simultaneous sweep of per-cell wedge root solves."""
    cdef const cnp.int32_t[:, ::1] codes = table.codes
    cdef const double[:, :, ::1] args = table.args
    cdef const cnp.int32_t[::1] lens = table.lens
    W_arr = np.ascontiguousarray(W, dtype=np.float64).ravel()
    cdef const double[::1] Wf = W_arr
    cdef const double[::1] nn = np.ascontiguousarray(n, dtype=np.float64)
    cdef const double[::1] mm = np.ascontiguousarray(m, dtype=np.float64)
    cdef const double[::1] cl = np.ascontiguousarray(clamp_lo, dtype=np.float64).ravel()
    cdef const double[::1] ch = np.ascontiguousarray(clamp_hi, dtype=np.float64).ravel()
    cdef int X = nn.shape[0], Y = mm.shape[0]
    cdef int P = X * Y
    cdef int stride_codes = codes.shape[1]
    cdef int stride_args = args.shape[1] * 4

    U_arr = np.empty(P)
    cdef double[::1] U = U_arr
    r_u_arr = np.empty(P)
    r_v_arr = np.empty(P)
    cdef double[::1] r_u = r_u_arr, r_v = r_v_arr
    out = np.empty(P)
    cdef double[::1] o = out
    scratch = np.empty((3, max(table.stack_need, 1)))
    cdef double[:, ::1] st = scratch

    cdef int x, y, yy, xx, p, q, it
    cdef double du, dv, acc, vq, lo, hi, z_lo, z_hi, step, z, xm
    with nogil:
        for p in range(P):
            U[p] = -_eval_one(&codes[p, 0], &args[p, 0, 0], lens[p], 0.0, -Wf[p],
                              &st[0, 0], &st[1, 0], &st[2, 0], &du, &dv)
        # softmax denominators excluding own cell, in log space
        for x in range(X):
            for y in range(Y):
                p = x * Y + y
                acc = 0.0  # log(1) accumulated via pairwise logaddexp
                for yy in range(Y):
                    if yy != y:
                        acc = _logaddexp(acc, U[x * Y + yy])
                r_u[p] = acc
        for y in range(Y):
            for x in range(X):
                p = x * Y + y
                acc = 0.0
                for xx in range(X):
                    if xx != x:
                        q = xx * Y + y
                        vq = U[q] - Wf[q]
                        acc = _logaddexp(acc, vq)
                r_v[p] = acc

        for p in range(P):
            x = p // Y
            y = p - x * Y
            hi = fmin(Wf[p], ch[p])
            z_hi = _z_cell(&codes[p, 0], &args[p, 0, 0], lens[p], hi, nn[x], mm[y],
                           r_u[p], r_v[p], &st[0, 0], &st[1, 0], &st[2, 0])
            step = 1.0
            for it in range(140):
                if z_hi <= 0.0 or hi >= ch[p]:
                    break
                hi = fmin(hi + step, ch[p])
                step *= 2.0
                z_hi = _z_cell(&codes[p, 0], &args[p, 0, 0], lens[p], hi, nn[x], mm[y],
                               r_u[p], r_v[p], &st[0, 0], &st[1, 0], &st[2, 0])
            lo = hi
            z_lo = z_hi
            step = 1.0
            for it in range(200):
                if z_lo >= 0.0 or lo <= cl[p]:
                    break
                lo = fmax(lo - step, cl[p])
                step *= 2.0
                z_lo = _z_cell(&codes[p, 0], &args[p, 0, 0], lens[p], lo, nn[x], mm[y],
                               r_u[p], r_v[p], &st[0, 0], &st[1, 0], &st[2, 0])
            if z_lo < 0.0:
                o[p] = cl[p]  # root below the admissible range
                continue
            if z_hi > 0.0:
                o[p] = ch[p] if isfinite(ch[p]) else hi
                continue
            xm = 0.5 * (lo + hi)
            for it in range(200):
                z = _z_cell(&codes[p, 0], &args[p, 0, 0], lens[p], xm, nn[x], mm[y],
                            r_u[p], r_v[p], &st[0, 0], &st[1, 0], &st[2, 0])
                if fabs(z) <= ztol:
                    break
                if z > 0.0:
                    lo = xm
                else:
                    hi = xm
                xm = 0.5 * (lo + hi)
                if hi - lo <= 1e-15 * fmax(1.0, fabs(xm)):
                    break
            o[p] = xm
    return out
