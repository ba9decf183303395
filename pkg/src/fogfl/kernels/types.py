"""Flat-array description of a convex barrier program.

A program is a list of scalar inequality constraints ``c_j(x) <= 0`` over a
real variable vector that embeds complex matrix blocks, plus positive-definite
cone barriers on Hermitian blocks. Each constraint is a sum of typed terms:

  scalar terms (on one real variable v):
    AFF    coef * v
    RECIP  coef / v                 (v > 0)
    NSQRT  -coef * sqrt(v)          (v > 0)
    NLOG   -coef * ln(v)            (v > 0)
    INV1M  coef / (1 - v)           (v < 1)

  matrix terms (on one block Z or Hermitian block W):
    CQUAD    coef * tr(Z^H A Z)          A Hermitian PSD
    CLIN     coef * 2 Re tr(Z^H L)
    HLIN     coef * Re tr(C W)           C Hermitian
    NLOGDET  coef * (-log2 det W)        W PD

General complex blocks of shape (r, c) occupy 2*r*c consecutive reals
(row-major, interleaved Re/Im). Hermitian blocks of dimension r occupy r*r
reals: the r diagonal entries, then (Re, Im) pairs of the strict upper
triangle in row-major order.

Both evaluation backends (the compiled extension and the numpy fallback)
consume exactly this structure; see :mod:`fogfl.kernels`.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

AFF, RECIP, NSQRT, NLOG, INV1M = 0, 1, 2, 3, 4
GENERAL, HERMITIAN = 0, 1

LN2 = float(np.log(2.0))


@dataclass
class ProgramArrays:
    """Packed term tables; all arrays are C-contiguous."""

    n: int
    obj_idx: int
    m: int
    cons_const: np.ndarray
    st_cons: np.ndarray
    st_var: np.ndarray
    st_kind: np.ndarray
    st_coef: np.ndarray
    blk_off: np.ndarray
    blk_rows: np.ndarray
    blk_cols: np.ndarray
    blk_kind: np.ndarray
    cq_cons: np.ndarray
    cq_blk: np.ndarray
    cq_coef: np.ndarray
    cq_a: np.ndarray
    cl_cons: np.ndarray
    cl_blk: np.ndarray
    cl_coef: np.ndarray
    cl_l: np.ndarray
    hl_cons: np.ndarray
    hl_blk: np.ndarray
    hl_coef: np.ndarray
    hl_c: np.ndarray
    nld_cons: np.ndarray
    nld_blk: np.ndarray
    nld_coef: np.ndarray
    cone_blk: np.ndarray
    cone_shift: np.ndarray

    @property
    def n_blocks(self) -> int:
        return len(self.blk_off)


def herm_pack(mat: np.ndarray) -> np.ndarray:
    """Hermitian matrix -> real parameter vector (diag, then upper Re/Im)."""
    r = mat.shape[0]
    out = np.empty(r * r)
    out[:r] = np.real(np.diagonal(mat))
    pos = r
    for a in range(r):
        for b in range(a + 1, r):
            out[pos] = mat[a, b].real
            out[pos + 1] = mat[a, b].imag
            pos += 2
    return out


def herm_unpack(params: np.ndarray, r: int) -> np.ndarray:
    mat = np.zeros((r, r), dtype=np.complex128)
    mat[np.diag_indices(r)] = params[:r]
    pos = r
    for a in range(r):
        for b in range(a + 1, r):
            mat[a, b] = params[pos] + 1j * params[pos + 1]
            mat[b, a] = params[pos] - 1j * params[pos + 1]
            pos += 2
    return mat


def cplx_pack(mat: np.ndarray) -> np.ndarray:
    """General complex matrix -> interleaved (Re, Im) row-major vector."""
    flat = np.asarray(mat, dtype=np.complex128).reshape(-1)
    out = np.empty(2 * flat.size)
    out[0::2] = flat.real
    out[1::2] = flat.imag
    return out


def cplx_unpack(params: np.ndarray, r: int, c: int) -> np.ndarray:
    return (params[0::2] + 1j * params[1::2]).reshape(r, c)


class ProgramBuilder:
    """Incremental construction of :class:`ProgramArrays`.

    Terms are specified in physical units; if a per-variable ``units`` vector
    is given, ``build()`` rewrites the scalar-term coefficients for the
    nondimensionalized variables x' = x / units. Units are powers of two so
    the substitution is exact in floating point.
    """

    def __init__(self, n_vars: int, obj_idx: int, units=None):
        self.n_vars = n_vars
        self.obj_idx = obj_idx
        self.units = None if units is None else np.asarray(units, dtype=np.float64)
        self._const: list[float] = []
        self._st: list[tuple] = []
        self._blocks: list[tuple] = []
        self._cq: list[tuple] = []
        self._cl: list[tuple] = []
        self._hl: list[tuple] = []
        self._nld: list[tuple] = []
        self._cones: list[tuple] = []

    # --- structure -------------------------------------------------------
    def add_block(self, offset: int, rows: int, cols: int, kind: int) -> int:
        self._blocks.append((offset, rows, cols, kind))
        return len(self._blocks) - 1

    def new_constraint(self, const: float = 0.0) -> int:
        self._const.append(float(const))
        return len(self._const) - 1

    def add_const(self, j: int, value: float):
        self._const[j] += float(value)

    # --- scalar terms ------------------------------------------------------
    def aff(self, j: int, var: int, coef: float):
        if coef != 0.0:
            self._st.append((j, var, AFF, float(coef)))

    def recip(self, j: int, var: int, coef: float):
        self._st.append((j, var, RECIP, float(coef)))

    def nsqrt(self, j: int, var: int, coef: float):
        self._st.append((j, var, NSQRT, float(coef)))

    def nlog(self, j: int, var: int, coef: float):
        self._st.append((j, var, NLOG, float(coef)))

    def inv1m(self, j: int, var: int, coef: float):
        self._st.append((j, var, INV1M, float(coef)))

    # --- matrix terms ------------------------------------------------------
    def cquad(self, j: int, blk: int, a: np.ndarray, coef: float):
        self._cq.append((j, blk, float(coef), np.asarray(a, dtype=np.complex128)))

    def clin(self, j: int, blk: int, l: np.ndarray, coef: float):
        self._cl.append((j, blk, float(coef), np.asarray(l, dtype=np.complex128)))

    def hlin(self, j: int, blk: int, c: np.ndarray, coef: float):
        self._hl.append((j, blk, float(coef), np.asarray(c, dtype=np.complex128)))

    def nlogdet(self, j: int, blk: int, coef: float):
        self._nld.append((j, blk, float(coef)))

    def cone(self, blk: int, shift: float):
        self._cones.append((blk, float(shift)))

    # --- finalize ----------------------------------------------------------
    def _apply_units(self):
        if self.units is None:
            return
        rewritten = []
        for j, var, kind, coef in self._st:
            u = float(self.units[var])
            if u == 1.0:
                rewritten.append((j, var, kind, coef))
                continue
            if kind == AFF:
                coef *= u
            elif kind == RECIP:
                coef /= u
            elif kind == NSQRT:
                coef *= np.sqrt(u)
            elif kind == NLOG:
                # -c*ln(u*x') = -c*ln(x') - c*ln(u)
                self._const[j] += -coef * np.log(u)
            else:
                raise ValueError("INV1M variables must have unit scale")
            rewritten.append((j, var, kind, coef))
        self._st = rewritten

    def build(self) -> ProgramArrays:
        self._apply_units()
        rows = [b[1] for b in self._blocks] or [1]
        cols = [b[2] for b in self._blocks] or [1]
        rmax, cmax = max(rows), max(max(cols), max(rows))

        def pack_terms(terms, width_r, width_c):
            cons = np.array([t[0] for t in terms], dtype=np.int32)
            blk = np.array([t[1] for t in terms], dtype=np.int32)
            coef = np.array([t[2] for t in terms], dtype=np.float64)
            mats = np.zeros((len(terms), width_r, width_c), dtype=np.complex128)
            for idx, t in enumerate(terms):
                m = t[3]
                mats[idx, :m.shape[0], :m.shape[1]] = m
            return cons, blk, coef, mats

        cq_cons, cq_blk, cq_coef, cq_a = pack_terms(self._cq, rmax, rmax)
        cl_cons, cl_blk, cl_coef, cl_l = pack_terms(self._cl, rmax, cmax)
        hl_cons, hl_blk, hl_coef, hl_c = pack_terms(self._hl, rmax, rmax)

        return ProgramArrays(
            n=self.n_vars,
            obj_idx=self.obj_idx,
            m=len(self._const),
            cons_const=np.asarray(self._const, dtype=np.float64),
            st_cons=np.array([t[0] for t in self._st], dtype=np.int32),
            st_var=np.array([t[1] for t in self._st], dtype=np.int32),
            st_kind=np.array([t[2] for t in self._st], dtype=np.int32),
            st_coef=np.array([t[3] for t in self._st], dtype=np.float64),
            blk_off=np.array([b[0] for b in self._blocks], dtype=np.int32),
            blk_rows=np.array([b[1] for b in self._blocks], dtype=np.int32),
            blk_cols=np.array([b[2] for b in self._blocks], dtype=np.int32),
            blk_kind=np.array([b[3] for b in self._blocks], dtype=np.int32),
            cq_cons=cq_cons, cq_blk=cq_blk, cq_coef=cq_coef, cq_a=cq_a,
            cl_cons=cl_cons, cl_blk=cl_blk, cl_coef=cl_coef, cl_l=cl_l,
            hl_cons=hl_cons, hl_blk=hl_blk, hl_coef=hl_coef, hl_c=hl_c,
            nld_cons=np.array([t[0] for t in self._nld], dtype=np.int32),
            nld_blk=np.array([t[1] for t in self._nld], dtype=np.int32),
            nld_coef=np.array([t[2] for t in self._nld], dtype=np.float64),
            cone_blk=np.array([c[0] for c in self._cones], dtype=np.int32),
            cone_shift=np.array([c[1] for c in self._cones], dtype=np.float64),
        )
