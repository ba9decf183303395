# cython: boundscheck=False, wraparound=False, cdivision=True
# cython: initializedcheck=False, language_level=3
"""Compiled backend for barrier program evaluation.

Same contract as ``_pyref``: constraint values, Jacobian, barrier potential
and the assembled Newton data (potential, gradient, Hessian). All matrix
blocks are tiny (dimension <= MAXR), so factorizations are open-coded; the
only large dense operation, the rank-m Hessian update J^T diag(w) J, is
delegated to BLAS through numpy.
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport INFINITY, log, sqrt
from libc.string cimport memset

cnp.import_array()

DEF MAXR = 16
DEF AFF = 0
DEF RECIP = 1
DEF NSQRT = 2
DEF NLOG = 3
DEF INV1M = 4
DEF GENERAL = 0
DEF HERMITIAN = 1

cdef double LN2 = 0.6931471805599453094172321214581766


# ---------------------------------------------------------------------------
# small Hermitian matrix helpers (row-major; dimension r <= MAXR)
# ---------------------------------------------------------------------------

cdef inline void _read_general(const double* x, int off, int r, int c,
                               double complex* z) noexcept nogil:
    cdef int idx, total = r * c
    for idx in range(total):
        z[idx] = x[off + 2 * idx] + 1j * x[off + 2 * idx + 1]


cdef inline void _read_hermitian(const double* x, int off, int r,
                                 double complex* w) noexcept nogil:
    cdef int a, b, pos
    for a in range(r):
        w[a * r + a] = x[off + a]
    pos = off + r
    for a in range(r):
        for b in range(a + 1, r):
            w[a * r + b] = x[pos] + 1j * x[pos + 1]
            w[b * r + a] = x[pos] - 1j * x[pos + 1]
            pos += 2


cdef int _chol_lower(int r, double complex* a) noexcept nogil:
    """In-place lower Cholesky of a Hermitian matrix. Returns 0, or 1 if a
    pivot is non-positive (not positive definite)."""
    cdef int i, j, k
    cdef double piv
    cdef double complex s
    for j in range(r):
        piv = a[j * r + j].real
        for k in range(j):
            piv -= (a[j * r + k].real * a[j * r + k].real
                    + a[j * r + k].imag * a[j * r + k].imag)
        if piv <= 0.0 or piv != piv:
            return 1
        piv = sqrt(piv)
        a[j * r + j] = piv
        for i in range(j + 1, r):
            s = a[i * r + j]
            for k in range(j):
                s -= a[i * r + k] * a[j * r + k].conjugate()
            a[i * r + j] = s / piv
    return 0


cdef int _chol_inv_logdet(int r, const double complex* a_in,
                          double complex* inv_out, double* logdet) noexcept nogil:
    """(ln det, inverse) of a Hermitian PD matrix; returns 1 if not PD."""
    cdef double complex buf[MAXR * MAXR]
    cdef double complex minv[MAXR * MAXR]
    cdef int i, j, k
    cdef double complex s
    for i in range(r * r):
        buf[i] = a_in[i]
    if _chol_lower(r, buf):
        return 1
    cdef double ld = 0.0
    for i in range(r):
        ld += log(buf[i * r + i].real)
    logdet[0] = 2.0 * ld
    # forward-substitute L^-1 into minv (lower triangular)
    for j in range(r):
        for i in range(r):
            minv[i * r + j] = 0.0
        minv[j * r + j] = 1.0 / buf[j * r + j]
        for i in range(j + 1, r):
            s = 0.0
            for k in range(j, i):
                s -= buf[i * r + k] * minv[k * r + j]
            minv[i * r + j] = s / buf[i * r + i]
    # inv = (L^-1)^H (L^-1)
    for i in range(r):
        for j in range(r):
            s = 0.0
            for k in range(i if i > j else j, r):
                s += minv[k * r + i].conjugate() * minv[k * r + j]
            inv_out[i * r + j] = s
    return 0


cdef inline void _scatter_hermitian(double* out, int off, int r,
                                    const double complex* c_mat,
                                    double coef) noexcept nogil:
    """out += gradient of coef * Re tr(C W) over Hermitian parameters."""
    cdef int a, b, pos
    for a in range(r):
        out[off + a] += coef * c_mat[a * r + a].real
    pos = off + r
    for a in range(r):
        for b in range(a + 1, r):
            out[pos] += 2.0 * coef * c_mat[a * r + b].real
            out[pos + 1] += 2.0 * coef * c_mat[a * r + b].imag
            pos += 2


cdef void _herm_basis_hessian(double* hess, int n, int off, int r,
                              const double complex* winv,
                              double weight) noexcept nogil:
    """hess += weight * tr(W^-1 E_p W^-1 E_q) over the Hermitian basis."""
    cdef double complex tp[MAXR * MAXR]
    cdef int p_idx, a, b, i, j, q_pos
    cdef int pa, pb, kind  # basis element descriptor
    cdef double complex t1, t2
    cdef double tr_x, tr_y
    # enumerate basis elements p: kind 0 = diag(pa); kind 1 = x(pa,pb); 2 = y
    cdef int p_off
    for p_idx in range(r * r):
        # decode p_idx -> (kind, pa, pb, p_off)
        if p_idx < r:
            kind = 0
            pa = p_idx
            pb = p_idx
            p_off = off + p_idx
        else:
            # strict upper pairs in row-major order, two params each
            i = p_idx - r
            kind = 1 + (i & 1)
            i >>= 1
            pa = 0
            j = r - 1
            while i >= j and j > 0:
                i -= j
                pa += 1
                j -= 1
            pb = pa + 1 + i
            p_off = off + r + 2 * _pair_index(r, pa, pb) + (kind - 1)
        # T_p = W^-1 E_p W^-1 from columns/rows of W^-1
        for i in range(r):
            for j in range(r):
                t1 = winv[i * r + pa] * winv[pb * r + j]
                if kind == 0:
                    tp[i * r + j] = t1
                elif kind == 1:
                    t2 = winv[i * r + pb] * winv[pa * r + j]
                    tp[i * r + j] = t1 + t2
                else:
                    t2 = winv[i * r + pb] * winv[pa * r + j]
                    tp[i * r + j] = 1j * t1 - 1j * t2
        # contract with basis elements q
        q_pos = off
        for a in range(r):
            hess[p_off * n + q_pos] += weight * tp[a * r + a].real
            q_pos += 1
        for a in range(r):
            for b in range(a + 1, r):
                tr_x = (tp[b * r + a] + tp[a * r + b]).real
                tr_y = (1j * tp[b * r + a] - 1j * tp[a * r + b]).real
                hess[p_off * n + q_pos] += weight * tr_x
                hess[p_off * n + q_pos + 1] += weight * tr_y
                q_pos += 2


cdef inline int _pair_index(int r, int a, int b) noexcept nogil:
    """Index of the strict-upper pair (a, b), row-major."""
    return (a * (2 * r - a - 1)) // 2 + (b - a - 1)


# ---------------------------------------------------------------------------
# term evaluation core
# ---------------------------------------------------------------------------

cdef int _eval_values(object pa, const double* x, double* vals) except -1:
    """Fill constraint values; returns 0 if all domains valid, else 1."""
    cdef const double[::1] cons_const = pa.cons_const
    cdef const int[::1] st_cons = pa.st_cons
    cdef const int[::1] st_var = pa.st_var
    cdef const int[::1] st_kind = pa.st_kind
    cdef const double[::1] st_coef = pa.st_coef
    cdef const int[::1] blk_off = pa.blk_off
    cdef const int[::1] blk_rows = pa.blk_rows
    cdef const int[::1] blk_cols = pa.blk_cols
    cdef const int[::1] cq_cons = pa.cq_cons
    cdef const int[::1] cq_blk = pa.cq_blk
    cdef const double[::1] cq_coef = pa.cq_coef
    cdef const double complex[:, :, ::1] cq_a = pa.cq_a
    cdef const int[::1] cl_cons = pa.cl_cons
    cdef const int[::1] cl_blk = pa.cl_blk
    cdef const double[::1] cl_coef = pa.cl_coef
    cdef const double complex[:, :, ::1] cl_l = pa.cl_l
    cdef const int[::1] hl_cons = pa.hl_cons
    cdef const int[::1] hl_blk = pa.hl_blk
    cdef const double[::1] hl_coef = pa.hl_coef
    cdef const double complex[:, :, ::1] hl_c = pa.hl_c
    cdef const int[::1] nld_cons = pa.nld_cons
    cdef const int[::1] nld_blk = pa.nld_blk
    cdef const double[::1] nld_coef = pa.nld_coef
    cdef const int[::1] cone_blk = pa.cone_blk
    cdef const double[::1] cone_shift = pa.cone_shift

    cdef int m = pa.m
    cdef int bad = 0
    cdef int t, j, b, r, c, i, k
    cdef double v, coef, ld
    cdef double complex z[MAXR * MAXR]
    cdef double complex w[MAXR * MAXR]
    cdef double complex inv[MAXR * MAXR]
    cdef double complex acc

    for j in range(m):
        vals[j] = cons_const[j]

    for t in range(st_cons.shape[0]):
        v = x[st_var[t]]
        coef = st_coef[t]
        k = st_kind[t]
        if k == AFF:
            vals[st_cons[t]] += coef * v
        elif k == RECIP:
            if v > 0.0:
                vals[st_cons[t]] += coef / v
            else:
                vals[st_cons[t]] = INFINITY
                bad = 1
        elif k == NSQRT:
            if v > 0.0:
                vals[st_cons[t]] += -coef * sqrt(v)
            else:
                vals[st_cons[t]] = INFINITY
                bad = 1
        elif k == NLOG:
            if v > 0.0:
                vals[st_cons[t]] += -coef * log(v)
            else:
                vals[st_cons[t]] = INFINITY
                bad = 1
        else:  # INV1M
            if v < 1.0:
                vals[st_cons[t]] += coef / (1.0 - v)
            else:
                vals[st_cons[t]] = INFINITY
                bad = 1

    for t in range(cq_cons.shape[0]):
        b = cq_blk[t]
        r = blk_rows[b]
        c = blk_cols[b]
        _read_general(x, blk_off[b], r, c, z)
        v = 0.0
        for i in range(r):
            for k in range(c):
                acc = 0.0
                for j in range(r):
                    acc += cq_a[t, i, j] * z[j * c + k]
                v += (z[i * c + k].conjugate() * acc).real
        vals[cq_cons[t]] += cq_coef[t] * v

    for t in range(cl_cons.shape[0]):
        b = cl_blk[t]
        r = blk_rows[b]
        c = blk_cols[b]
        _read_general(x, blk_off[b], r, c, z)
        v = 0.0
        for i in range(r):
            for k in range(c):
                v += (z[i * c + k].conjugate() * cl_l[t, i, k]).real
        vals[cl_cons[t]] += cl_coef[t] * 2.0 * v

    for t in range(hl_cons.shape[0]):
        b = hl_blk[t]
        r = blk_rows[b]
        _read_hermitian(x, blk_off[b], r, w)
        v = 0.0
        for i in range(r):
            for k in range(r):
                v += (hl_c[t, k, i] * w[i * r + k]).real
        vals[hl_cons[t]] += hl_coef[t] * v

    for t in range(nld_cons.shape[0]):
        b = nld_blk[t]
        r = blk_rows[b]
        _read_hermitian(x, blk_off[b], r, w)
        if _chol_inv_logdet(r, w, inv, &ld):
            vals[nld_cons[t]] = INFINITY
            bad = 1
        else:
            vals[nld_cons[t]] += nld_coef[t] * (-ld / LN2)

    for t in range(cone_blk.shape[0]):
        b = cone_blk[t]
        r = blk_rows[b]
        _read_hermitian(x, blk_off[b], r, w)
        for i in range(r):
            w[i * r + i] -= cone_shift[t]
        for i in range(r * r):
            z[i] = w[i]
        if _chol_lower(r, z):
            bad = 1

    return bad


def constraint_values(pa, cnp.ndarray[double, ndim=1] x):
    cdef cnp.ndarray[double, ndim=1] vals = np.empty(pa.m, dtype=np.float64)
    cdef int bad = _eval_values(pa, <const double*> x.data, <double*> vals.data)
    return vals, bad == 0


cdef void _fill_jacobian(object pa, const double* x, double* jac, int n) except *:
    cdef const int[::1] st_cons = pa.st_cons
    cdef const int[::1] st_var = pa.st_var
    cdef const int[::1] st_kind = pa.st_kind
    cdef const double[::1] st_coef = pa.st_coef
    cdef const int[::1] blk_off = pa.blk_off
    cdef const int[::1] blk_rows = pa.blk_rows
    cdef const int[::1] blk_cols = pa.blk_cols
    cdef const int[::1] cq_cons = pa.cq_cons
    cdef const int[::1] cq_blk = pa.cq_blk
    cdef const double[::1] cq_coef = pa.cq_coef
    cdef const double complex[:, :, ::1] cq_a = pa.cq_a
    cdef const int[::1] cl_cons = pa.cl_cons
    cdef const int[::1] cl_blk = pa.cl_blk
    cdef const double[::1] cl_coef = pa.cl_coef
    cdef const double complex[:, :, ::1] cl_l = pa.cl_l
    cdef const int[::1] hl_cons = pa.hl_cons
    cdef const int[::1] hl_blk = pa.hl_blk
    cdef const double[::1] hl_coef = pa.hl_coef
    cdef const double complex[:, :, ::1] hl_c = pa.hl_c
    cdef const int[::1] nld_cons = pa.nld_cons
    cdef const int[::1] nld_blk = pa.nld_blk
    cdef const double[::1] nld_coef = pa.nld_coef

    cdef int t, j, b, r, c, i, k, off, row
    cdef double v, coef, ld, g
    cdef double complex z[MAXR * MAXR]
    cdef double complex w[MAXR * MAXR]
    cdef double complex inv[MAXR * MAXR]
    cdef double complex acc

    for t in range(st_cons.shape[0]):
        v = x[st_var[t]]
        coef = st_coef[t]
        k = st_kind[t]
        if k == AFF:
            g = coef
        elif k == RECIP:
            g = -coef / (v * v)
        elif k == NSQRT:
            g = -coef / (2.0 * sqrt(v))
        elif k == NLOG:
            g = -coef / v
        else:
            g = coef / ((1.0 - v) * (1.0 - v))
        jac[st_cons[t] * n + st_var[t]] += g

    for t in range(cq_cons.shape[0]):
        b = cq_blk[t]
        r = blk_rows[b]
        c = blk_cols[b]
        off = blk_off[b]
        row = cq_cons[t] * n
        _read_general(x, off, r, c, z)
        coef = 2.0 * cq_coef[t]
        for i in range(r):
            for k in range(c):
                acc = 0.0
                for j in range(r):
                    acc += cq_a[t, i, j] * z[j * c + k]
                jac[row + off + 2 * (i * c + k)] += coef * acc.real
                jac[row + off + 2 * (i * c + k) + 1] += coef * acc.imag

    for t in range(cl_cons.shape[0]):
        b = cl_blk[t]
        r = blk_rows[b]
        c = blk_cols[b]
        off = blk_off[b]
        row = cl_cons[t] * n
        coef = 2.0 * cl_coef[t]
        for i in range(r):
            for k in range(c):
                jac[row + off + 2 * (i * c + k)] += coef * cl_l[t, i, k].real
                jac[row + off + 2 * (i * c + k) + 1] += coef * cl_l[t, i, k].imag

    for t in range(hl_cons.shape[0]):
        b = hl_blk[t]
        r = blk_rows[b]
        off = blk_off[b]
        row = hl_cons[t] * n
        for i in range(r * r):
            w[i] = hl_c[t, i // r, i % r]
        _scatter_hermitian(jac + row, off, r, w, hl_coef[t])

    for t in range(nld_cons.shape[0]):
        b = nld_blk[t]
        r = blk_rows[b]
        off = blk_off[b]
        row = nld_cons[t] * n
        _read_hermitian(x, off, r, w)
        if _chol_inv_logdet(r, w, inv, &ld):
            raise FloatingPointError("nlogdet block not PD in jacobian")
        for i in range(r * r):
            inv[i] = -inv[i]
        _scatter_hermitian(jac + row, off, r, inv, nld_coef[t] / LN2)


def jacobian(pa, cnp.ndarray[double, ndim=1] x):
    cdef int n = pa.n
    cdef cnp.ndarray[double, ndim=2] jac = np.zeros((pa.m, n), dtype=np.float64)
    _fill_jacobian(pa, <const double*> x.data, <double*> jac.data, n)
    return jac


def potential(pa, cnp.ndarray[double, ndim=1] x, double t):
    cdef cnp.ndarray[double, ndim=1] vals = np.empty(pa.m, dtype=np.float64)
    cdef int bad = _eval_values(pa, <const double*> x.data, <double*> vals.data)
    cdef int j
    cdef double phi
    cdef double* v = <double*> vals.data
    if bad:
        return INFINITY, False
    phi = t * x[pa.obj_idx]
    for j in range(pa.m):
        if v[j] >= 0.0:
            return INFINITY, False
        phi -= log(-v[j])

    cdef const int[::1] cone_blk = pa.cone_blk
    cdef const double[::1] cone_shift = pa.cone_shift
    cdef const int[::1] blk_off = pa.blk_off
    cdef const int[::1] blk_rows = pa.blk_rows
    cdef double complex w[MAXR * MAXR]
    cdef double complex inv[MAXR * MAXR]
    cdef double ld
    cdef int tt, b, r, i
    cdef const double* xd = <const double*> x.data
    for tt in range(cone_blk.shape[0]):
        b = cone_blk[tt]
        r = blk_rows[b]
        _read_hermitian(xd, blk_off[b], r, w)
        for i in range(r):
            w[i * r + i] -= cone_shift[tt]
        if _chol_inv_logdet(r, w, inv, &ld):
            return INFINITY, False
        phi -= ld
    return phi, True


def barrier_eval(pa, cnp.ndarray[double, ndim=1] x, double t):
    """(phi, grad, hess, ok, min_slack) of the barrier-augmented objective."""
    cdef int n = pa.n
    cdef int m = pa.m
    cdef cnp.ndarray[double, ndim=1] vals = np.empty(m, dtype=np.float64)
    cdef int bad = _eval_values(pa, <const double*> x.data, <double*> vals.data)
    cdef double* v = <double*> vals.data
    cdef int j
    cdef double min_slack = INFINITY
    for j in range(m):
        if -v[j] < min_slack:
            min_slack = -v[j]
    if bad or min_slack <= 0.0:
        return INFINITY, None, None, False, min_slack

    cdef cnp.ndarray[double, ndim=2] jac = np.zeros((m, n), dtype=np.float64)
    _fill_jacobian(pa, <const double*> x.data, <double*> jac.data, n)

    # phi and the slack weights
    cdef double phi = t * x[pa.obj_idx]
    cdef cnp.ndarray[double, ndim=1] w1 = np.empty(m, dtype=np.float64)
    cdef cnp.ndarray[double, ndim=1] w2 = np.empty(m, dtype=np.float64)
    cdef double* w1d = <double*> w1.data
    cdef double* w2d = <double*> w2.data
    cdef double s
    for j in range(m):
        s = -v[j]
        phi -= log(s)
        w2d[j] = 1.0 / s
        w1d[j] = w2d[j] * w2d[j]

    # gradient: t*e_obj + J^T w2 (+ cone gradients below)
    cdef cnp.ndarray[double, ndim=1] grad = jac.T @ w2
    grad[pa.obj_idx] += t

    # Hessian: rank-m part via BLAS, structural parts in C below
    cdef cnp.ndarray[double, ndim=2] hess = \
        (jac * w1[:, None]).T @ jac
    cdef double* hd = <double*> hess.data
    cdef double* gd = <double*> grad.data
    cdef const double* xd = <const double*> x.data

    # scalar structural curvature
    cdef const int[::1] st_cons = pa.st_cons
    cdef const int[::1] st_var = pa.st_var
    cdef const int[::1] st_kind = pa.st_kind
    cdef const double[::1] st_coef = pa.st_coef
    cdef int tt, k
    cdef double vv, coef, h
    for tt in range(st_cons.shape[0]):
        k = st_kind[tt]
        if k == AFF:
            continue
        vv = xd[st_var[tt]]
        coef = st_coef[tt]
        if k == RECIP:
            h = 2.0 * coef / (vv * vv * vv)
        elif k == NSQRT:
            h = coef / (4.0 * vv * sqrt(vv))
        elif k == NLOG:
            h = coef / (vv * vv)
        else:
            h = 2.0 * coef / ((1.0 - vv) * (1.0 - vv) * (1.0 - vv))
        hd[st_var[tt] * n + st_var[tt]] += w2d[st_cons[tt]] * h

    # quadratic-term structural curvature, accumulated per block
    cdef const int[::1] blk_off = pa.blk_off
    cdef const int[::1] blk_rows = pa.blk_rows
    cdef const int[::1] blk_cols = pa.blk_cols
    cdef const int[::1] cq_cons = pa.cq_cons
    cdef const int[::1] cq_blk = pa.cq_blk
    cdef const double[::1] cq_coef = pa.cq_coef
    cdef const double complex[:, :, ::1] cq_a = pa.cq_a
    cdef int n_blocks = pa.n_blocks
    cdef cnp.ndarray[cnp.complex128_t, ndim=3] acc_arr = np.zeros(
        (n_blocks, MAXR, MAXR), dtype=np.complex128)
    cdef double complex[:, :, ::1] acc = acc_arr
    cdef cnp.ndarray[cnp.uint8_t, ndim=1] used = np.zeros(n_blocks, dtype=np.uint8)
    cdef int b, r, c, i, a2, b2, col, ix, iy
    cdef double wgt
    for tt in range(cq_cons.shape[0]):
        b = cq_blk[tt]
        r = blk_rows[b]
        wgt = w2d[cq_cons[tt]] * cq_coef[tt]
        used[b] = 1
        for i in range(r):
            for k in range(r):
                acc[b, i, k] += wgt * cq_a[tt, i, k]
    for b in range(n_blocks):
        if used[b] == 0:
            continue
        r = blk_rows[b]
        c = blk_cols[b]
        for col in range(c):
            for a2 in range(r):
                ix = blk_off[b] + 2 * (a2 * c + col)
                for b2 in range(r):
                    iy = blk_off[b] + 2 * (b2 * c + col)
                    hd[ix * n + iy] += 2.0 * acc[b, a2, b2].real
                    hd[ix * n + iy + 1] += -2.0 * acc[b, a2, b2].imag
                    hd[(ix + 1) * n + iy] += 2.0 * acc[b, a2, b2].imag
                    hd[(ix + 1) * n + iy + 1] += 2.0 * acc[b, a2, b2].real

    # log-det structural curvature inside constraints
    cdef const int[::1] nld_cons = pa.nld_cons
    cdef const int[::1] nld_blk = pa.nld_blk
    cdef const double[::1] nld_coef = pa.nld_coef
    cdef double complex wmat[MAXR * MAXR]
    cdef double complex winv[MAXR * MAXR]
    cdef double ld
    for tt in range(nld_cons.shape[0]):
        b = nld_blk[tt]
        r = blk_rows[b]
        _read_hermitian(xd, blk_off[b], r, wmat)
        if _chol_inv_logdet(r, wmat, winv, &ld):
            return INFINITY, None, None, False, min_slack
        _herm_basis_hessian(hd, n, blk_off[b], r, winv,
                            w2d[nld_cons[tt]] * nld_coef[tt] / LN2)

    # cone barriers: potential, gradient and Hessian
    cdef const int[::1] cone_blk = pa.cone_blk
    cdef const double[::1] cone_shift = pa.cone_shift
    for tt in range(cone_blk.shape[0]):
        b = cone_blk[tt]
        r = blk_rows[b]
        _read_hermitian(xd, blk_off[b], r, wmat)
        for i in range(r):
            wmat[i * r + i] -= cone_shift[tt]
        if _chol_inv_logdet(r, wmat, winv, &ld):
            return INFINITY, None, None, False, min_slack
        phi -= ld
        for i in range(r * r):
            wmat[i] = -winv[i]
        _scatter_hermitian(gd, blk_off[b], r, wmat, 1.0)
        _herm_basis_hessian(hd, n, blk_off[b], r, winv, 1.0)

    return phi, grad, hess, True, min_slack
