"""Dense complex Hermitian linear algebra for very small matrices.

Everything in the network model lives on matrices of single-digit dimension
(channel blocks, receive covariances, quantizer covariances), so plain
LAPACK-backed numpy/scipy routines are used throughout. The helpers here add
the validation and error reporting the rest of the package relies on.
"""

from __future__ import annotations

import numpy as np
import scipy.linalg

# Tolerances for validating Hermitian / PSD inputs. Eigenvalue noise from
# double-precision solvers on these tiny matrices stays well inside 1e-10.
HERMITIAN_TOL = 1e-12
PSD_CLAMP = 1e-10

LN2 = np.log(2.0)


def as_complex_matrix(m) -> np.ndarray:
    """Return m as a 2-D complex128 array, rejecting non-finite entries."""
    a = np.asarray(m, dtype=np.complex128)
    if a.ndim != 2:
        raise ValueError(f"expected a matrix, got ndim={a.ndim}")
    if not np.all(np.isfinite(a)):
        raise ValueError("matrix has non-finite entries")
    return a


def is_hermitian(m, tol: float = HERMITIAN_TOL) -> bool:
    a = np.asarray(m)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        return False
    scale = max(1.0, float(np.abs(a).max(initial=0.0)))
    return bool(np.abs(a - a.conj().T).max(initial=0.0) <= tol * scale)


def check_hermitian(m, tol: float = HERMITIAN_TOL) -> np.ndarray:
    a = as_complex_matrix(m)
    if not is_hermitian(a, tol):
        raise ValueError("matrix is not Hermitian")
    # Symmetrize away the last bits of roundoff so downstream factorizations
    # see an exactly Hermitian matrix.
    return 0.5 * (a + a.conj().T)


def logdet2(m) -> float:
    """log2 det(m) of a Hermitian positive-definite matrix.

    Computed from the Cholesky factor (sum of 2*log2 of the diagonal), which
    is numerically stable for the well-conditioned matrices produced by the
    model (noise floors keep them away from singularity).
    """
    a = check_hermitian(m)
    try:
        chol = np.linalg.cholesky(a)
    except np.linalg.LinAlgError as exc:
        raise ValueError("not positive definite") from exc
    return float(2.0 * np.sum(np.log2(np.real(np.diagonal(chol)))))


def hermitian_sqrt(m, clamp: float = PSD_CLAMP) -> np.ndarray:
    """Unique PSD principal square root of a Hermitian PSD matrix.

    Eigenvalues in [-clamp, 0] are treated as roundoff and clamped to zero;
    anything below -clamp is a genuine negative eigenvalue and is an error.
    """
    a = check_hermitian(m)
    vals, vecs = np.linalg.eigh(a)
    if vals.min(initial=0.0) < -clamp:
        raise ValueError("not PSD")
    vals = np.clip(vals, 0.0, None)
    root = (vecs * np.sqrt(vals)) @ vecs.conj().T
    return 0.5 * (root + root.conj().T)


def solve_hpd(m, b) -> np.ndarray:
    """Solve m @ x = b for Hermitian positive-definite m."""
    a = check_hermitian(m)
    rhs = np.asarray(b, dtype=np.complex128)
    if rhs.shape[0] != a.shape[0]:
        raise ValueError(f"shape mismatch: {a.shape} vs {rhs.shape}")
    try:
        factor = scipy.linalg.cho_factor(a, lower=True)
    except scipy.linalg.LinAlgError as exc:
        raise ValueError("not positive definite") from exc
    return scipy.linalg.cho_solve(factor, rhs)


def inv_hpd(m) -> np.ndarray:
    """Inverse of a Hermitian positive-definite matrix (symmetrized)."""
    a = check_hermitian(m)
    out = solve_hpd(a, np.eye(a.shape[0], dtype=np.complex128))
    return 0.5 * (out + out.conj().T)


def min_eigval(m) -> float:
    a = check_hermitian(m)
    return float(np.linalg.eigvalsh(a)[0])
