"""Pure-numpy reference backend for barrier program evaluation.

Implements the same four entry points as the compiled extension. Loops over
terms in Python with small dense numpy ops; clarity over speed. Used as the
fallback when the extension is unavailable and as the cross-check oracle for
it in the test suite.
"""

from __future__ import annotations

import numpy as np

from .types import (AFF, GENERAL, HERMITIAN, INV1M, LN2, NLOG, NSQRT, RECIP,
                    ProgramArrays)

_INF = float("inf")


def _block(pa: ProgramArrays, x: np.ndarray, b: int) -> np.ndarray:
    off = pa.blk_off[b]
    r, c = int(pa.blk_rows[b]), int(pa.blk_cols[b])
    if pa.blk_kind[b] == GENERAL:
        seg = x[off:off + 2 * r * c]
        return (seg[0::2] + 1j * seg[1::2]).reshape(r, c)
    seg = x[off:off + r * r]
    mat = np.zeros((r, r), dtype=np.complex128)
    mat[np.diag_indices(r)] = seg[:r]
    pos = r
    for a in range(r):
        for bb in range(a + 1, r):
            mat[a, bb] = seg[pos] + 1j * seg[pos + 1]
            mat[bb, a] = seg[pos] - 1j * seg[pos + 1]
            pos += 2
    return mat


def _scatter_general(vec_out: np.ndarray, pa, b: int, g: np.ndarray):
    """Add the complex-matrix gradient g (dX = Re g, dY = Im g) in place."""
    off = pa.blk_off[b]
    r, c = int(pa.blk_rows[b]), int(pa.blk_cols[b])
    flat = g.reshape(-1)
    vec_out[off:off + 2 * r * c:2] += flat.real
    vec_out[off + 1:off + 2 * r * c:2] += flat.imag


def _scatter_hermitian(vec_out: np.ndarray, pa, b: int, c_mat: np.ndarray,
                       coef: float):
    """Add the gradient of coef * Re tr(C W) over the Hermitian parameters."""
    off = pa.blk_off[b]
    r = int(pa.blk_rows[b])
    vec_out[off:off + r] += coef * np.real(np.diagonal(c_mat))
    pos = off + r
    for a in range(r):
        for bb in range(a + 1, r):
            vec_out[pos] += 2.0 * coef * c_mat[a, bb].real
            vec_out[pos + 1] += 2.0 * coef * c_mat[a, bb].imag
            pos += 2


def _chol_logdet(mat: np.ndarray):
    """(ln det, inverse) of a Hermitian matrix, or (None, None) if not PD."""
    try:
        chol = np.linalg.cholesky(mat)
    except np.linalg.LinAlgError:
        return None, None
    ld = 2.0 * float(np.sum(np.log(np.real(np.diagonal(chol)))))
    inv = np.linalg.inv(chol)
    return ld, inv.conj().T @ inv


def _scalar_value(kind: int, v: float, coef: float):
    if kind == AFF:
        return coef * v
    if kind == RECIP:
        return coef / v if v > 0.0 else _INF
    if kind == NSQRT:
        return -coef * np.sqrt(v) if v > 0.0 else _INF
    if kind == NLOG:
        return -coef * np.log(v) if v > 0.0 else _INF
    if kind == INV1M:
        return coef / (1.0 - v) if v < 1.0 else _INF
    raise ValueError(f"unknown scalar term kind {kind}")


def _scalar_grad_hess(kind: int, v: float, coef: float):
    if kind == AFF:
        return coef, 0.0
    if kind == RECIP:
        return -coef / v**2, 2.0 * coef / v**3
    if kind == NSQRT:
        s = np.sqrt(v)
        return -coef / (2.0 * s), coef / (4.0 * v * s)
    if kind == NLOG:
        return -coef / v, coef / v**2
    if kind == INV1M:
        u = 1.0 - v
        return coef / u**2, 2.0 * coef / u**3
    raise ValueError(f"unknown scalar term kind {kind}")


def constraint_values(pa: ProgramArrays, x: np.ndarray):
    """Constraint vector c(x); ok=False if any term/cone domain is violated."""
    vals = pa.cons_const.copy()
    ok = True

    for t in range(len(pa.st_cons)):
        v = _scalar_value(int(pa.st_kind[t]), x[pa.st_var[t]], pa.st_coef[t])
        if not np.isfinite(v):
            ok = False
        vals[pa.st_cons[t]] += v

    for t in range(len(pa.cq_cons)):
        b = int(pa.cq_blk[t])
        r = int(pa.blk_rows[b])
        z = _block(pa, x, b)
        a = pa.cq_a[t, :r, :r]
        vals[pa.cq_cons[t]] += pa.cq_coef[t] * float(
            np.real(np.sum(z.conj() * (a @ z))))

    for t in range(len(pa.cl_cons)):
        b = int(pa.cl_blk[t])
        r, c = int(pa.blk_rows[b]), int(pa.blk_cols[b])
        z = _block(pa, x, b)
        l = pa.cl_l[t, :r, :c]
        vals[pa.cl_cons[t]] += pa.cl_coef[t] * 2.0 * float(
            np.real(np.sum(z.conj() * l)))

    for t in range(len(pa.hl_cons)):
        b = int(pa.hl_blk[t])
        r = int(pa.blk_rows[b])
        w = _block(pa, x, b)
        c = pa.hl_c[t, :r, :r]
        vals[pa.hl_cons[t]] += pa.hl_coef[t] * float(np.real(np.sum(c.T * w)))

    for t in range(len(pa.nld_cons)):
        w = _block(pa, x, int(pa.nld_blk[t]))
        ld, _ = _chol_logdet(w)
        if ld is None:
            ok = False
            vals[pa.nld_cons[t]] = _INF
        else:
            vals[pa.nld_cons[t]] += pa.nld_coef[t] * (-ld / LN2)

    for t in range(len(pa.cone_blk)):
        w = _block(pa, x, int(pa.cone_blk[t]))
        shifted = w - pa.cone_shift[t] * np.eye(w.shape[0])
        ld, _ = _chol_logdet(shifted)
        if ld is None:
            ok = False

    return vals, ok


def jacobian(pa: ProgramArrays, x: np.ndarray) -> np.ndarray:
    """Dense Jacobian of the constraint vector (domain-valid x required)."""
    jac = np.zeros((pa.m, pa.n))

    for t in range(len(pa.st_cons)):
        g, _ = _scalar_grad_hess(int(pa.st_kind[t]), x[pa.st_var[t]],
                                 pa.st_coef[t])
        jac[pa.st_cons[t], pa.st_var[t]] += g

    for t in range(len(pa.cq_cons)):
        b = int(pa.cq_blk[t])
        r = int(pa.blk_rows[b])
        z = _block(pa, x, b)
        g = 2.0 * pa.cq_coef[t] * (pa.cq_a[t, :r, :r] @ z)
        _scatter_general(jac[pa.cq_cons[t]], pa, b, g)

    for t in range(len(pa.cl_cons)):
        b = int(pa.cl_blk[t])
        r, c = int(pa.blk_rows[b]), int(pa.blk_cols[b])
        g = 2.0 * pa.cl_coef[t] * pa.cl_l[t, :r, :c]
        _scatter_general(jac[pa.cl_cons[t]], pa, b, g)

    for t in range(len(pa.hl_cons)):
        b = int(pa.hl_blk[t])
        r = int(pa.blk_rows[b])
        _scatter_hermitian(jac[pa.hl_cons[t]], pa, b, pa.hl_c[t, :r, :r],
                           pa.hl_coef[t])

    for t in range(len(pa.nld_cons)):
        b = int(pa.nld_blk[t])
        w = _block(pa, x, b)
        _, winv = _chol_logdet(w)
        if winv is None:
            raise FloatingPointError("nlogdet block not PD in jacobian")
        _scatter_hermitian(jac[pa.nld_cons[t]], pa, b, -winv,
                           pa.nld_coef[t] / LN2)

    return jac


def potential(pa: ProgramArrays, x: np.ndarray, t: float):
    """Barrier potential t*f(x) + sum -ln(-c_j) + cone barriers."""
    vals, ok = constraint_values(pa, x)
    if not ok or np.any(vals >= 0.0):
        return _INF, False
    phi = t * x[pa.obj_idx] - float(np.sum(np.log(-vals)))
    for tt in range(len(pa.cone_blk)):
        w = _block(pa, x, int(pa.cone_blk[tt]))
        shifted = w - pa.cone_shift[tt] * np.eye(w.shape[0])
        ld, _ = _chol_logdet(shifted)
        if ld is None:
            return _INF, False
        phi -= ld
    return float(phi), True


def _herm_basis_hessian(pa, b: int, winv: np.ndarray, weight: float,
                        hess: np.ndarray):
    """Add weight * d^2(-ln det W)/dp dq = weight * tr(W^-1 E_p W^-1 E_q)."""
    off = pa.blk_off[b]
    r = winv.shape[0]
    # Parameter-indexed list of (E_p in factored form): T_p = W^-1 E_p W^-1.
    # For diag a:      T = col_a row_a
    # For x at (a,b):  T = col_a row_b + col_b row_a
    # For y at (a,b):  T = i col_a row_b - i col_b row_a
    idx = []
    mats = []
    for a in range(r):
        idx.append(off + a)
        mats.append(np.outer(winv[:, a], winv[a, :]))
    pos = off + r
    for a in range(r):
        for bb in range(a + 1, r):
            t1 = np.outer(winv[:, a], winv[bb, :])
            t2 = np.outer(winv[:, bb], winv[a, :])
            idx.append(pos)
            mats.append(t1 + t2)
            idx.append(pos + 1)
            mats.append(1j * t1 - 1j * t2)
            pos += 2
    # hess[p, q] += weight * Re tr(T_p E_q) with E_q the same basis.
    for p_i, t_p in zip(idx, mats):
        q_pos = off
        for a in range(r):
            hess[p_i, q_pos] += weight * t_p[a, a].real
            q_pos += 1
        for a in range(r):
            for bb in range(a + 1, r):
                tr_x = (t_p[bb, a] + t_p[a, bb]).real
                tr_y = (1j * t_p[bb, a] - 1j * t_p[a, bb]).real
                hess[p_i, q_pos] += weight * tr_x
                hess[p_i, q_pos + 1] += weight * tr_y
                q_pos += 2


def _general_quad_hessian(pa, b: int, a_acc: np.ndarray, hess: np.ndarray):
    """Add the real Hessian of tr(Z^H A_acc Z) for a general block."""
    off = pa.blk_off[b]
    r, c = int(pa.blk_rows[b]), int(pa.blk_cols[b])
    re2 = 2.0 * a_acc.real
    im2 = 2.0 * a_acc.imag
    for col in range(c):
        base = off + 2 * col
        ix = base + 2 * c * np.arange(r)
        hess[np.ix_(ix, ix)] += re2
        hess[np.ix_(ix, ix + 1)] += -im2
        hess[np.ix_(ix + 1, ix)] += im2
        hess[np.ix_(ix + 1, ix + 1)] += re2


def barrier_eval(pa: ProgramArrays, x: np.ndarray, t: float):
    """Potential, gradient and Hessian of the barrier-augmented objective."""
    vals, ok = constraint_values(pa, x)
    min_slack = float(np.min(-vals)) if pa.m else _INF
    if not ok or np.any(vals >= 0.0):
        return _INF, None, None, False, min_slack

    slack = -vals
    w1 = 1.0 / slack**2
    w2 = 1.0 / slack

    jac = jacobian(pa, x)
    phi = t * x[pa.obj_idx] - float(np.sum(np.log(slack)))
    grad = t * np.eye(1, pa.n, pa.obj_idx)[0] + jac.T @ w2
    hess = (jac * w1[:, None]).T @ jac

    # Structural (second-derivative) curvature of each constraint, weight w2.
    for tt in range(len(pa.st_cons)):
        j = pa.st_cons[tt]
        _, h = _scalar_grad_hess(int(pa.st_kind[tt]), x[pa.st_var[tt]],
                                 pa.st_coef[tt])
        if h != 0.0:
            v = pa.st_var[tt]
            hess[v, v] += w2[j] * h

    n_blocks = pa.n_blocks
    acc = [None] * n_blocks
    for tt in range(len(pa.cq_cons)):
        j, b = int(pa.cq_cons[tt]), int(pa.cq_blk[tt])
        r = int(pa.blk_rows[b])
        contrib = (w2[j] * pa.cq_coef[tt]) * pa.cq_a[tt, :r, :r]
        acc[b] = contrib if acc[b] is None else acc[b] + contrib
    for b in range(n_blocks):
        if acc[b] is not None:
            _general_quad_hessian(pa, b, acc[b], hess)

    for tt in range(len(pa.nld_cons)):
        j, b = int(pa.nld_cons[tt]), int(pa.nld_blk[tt])
        w = _block(pa, x, b)
        _, winv = _chol_logdet(w)
        _herm_basis_hessian(pa, b, winv, w2[j] * pa.nld_coef[tt] / LN2, hess)

    # Cone barriers: -ln det(W - shift I).
    for tt in range(len(pa.cone_blk)):
        b = int(pa.cone_blk[tt])
        w = _block(pa, x, b)
        shifted = w - pa.cone_shift[tt] * np.eye(w.shape[0])
        ld, sinv = _chol_logdet(shifted)
        if ld is None:
            return _INF, None, None, False, min_slack
        phi -= ld
        _scatter_hermitian(grad, pa, b, -sinv, 1.0)
        _herm_basis_hessian(pa, b, sinv, 1.0, hess)

    return float(phi), grad, hess, True, min_slack
