"""Dense complex matrix arithmetic: adjoint, trace, SVD, phase-normalized QR.

Matrices are plain ``numpy.ndarray`` objects of shape ``(n, n)`` (or stacks
``(..., n, n)`` where noted).  Validation helpers replace wrapper classes:
use :func:`as_complex_matrix` to coerce/check inputs and
:func:`unitarity_defect` / :func:`require_unitary` to enforce the unitarity
tolerance ``UNITARITY_TOL_FACTOR * n``.
"""

from __future__ import annotations

import numpy as np

__all__ = [
    "UNITARITY_TOL_FACTOR",
    "as_complex_matrix",
    "adjoint",
    "trace",
    "svd",
    "qr_phase_normalized",
    "unitarity_defect",
    "is_unitary",
    "require_unitary",
]

# Default entrywise unitarity tolerance is 1e-10 * n; exact unitarity is a
# measure-zero property in floating point.
UNITARITY_TOL_FACTOR = 1e-10

# Dense-only envelope; acceptance runs stay at n <= 128.
MAX_SIDE = 512


def as_complex_matrix(a, name: str = "matrix") -> np.ndarray:
    """Coerce to a square complex128 array with finite entries."""
    out = np.asarray(a, dtype=np.complex128)
    if out.ndim != 2 or out.shape[0] != out.shape[1]:
        raise ValueError(f"{name} must be square, got shape {out.shape}")
    if out.shape[0] < 1:
        raise ValueError(f"{name} must have side length >= 1")
    if out.shape[0] > MAX_SIDE:
        raise ValueError(f"{name} side {out.shape[0]} exceeds supported envelope {MAX_SIDE}")
    if not np.all(np.isfinite(out.view(np.float64))):
        raise ValueError(f"{name} has non-finite entries")
    return out


def adjoint(a) -> np.ndarray:
    """Conjugate transpose, for single matrices or stacks."""
    a = np.asarray(a)
    return np.conj(np.swapaxes(a, -1, -2))


def trace(a) -> complex:
    """Sum of the diagonal, as a Python complex."""
    a = np.asarray(a)
    return complex(np.trace(a))


def unitarity_defect(u) -> float:
    """max |U U* - Id| entrywise; 0 for an exactly unitary matrix."""
    u = np.asarray(u, dtype=np.complex128)
    n = u.shape[-1]
    gram = u @ adjoint(u)
    return float(np.max(np.abs(gram - np.eye(n))))


def is_unitary(u, tol: float | None = None) -> bool:
    u = np.asarray(u)
    if tol is None:
        tol = UNITARITY_TOL_FACTOR * u.shape[-1]
    return unitarity_defect(u) <= tol


def require_unitary(u, tol: float | None = None, name: str = "matrix") -> np.ndarray:
    u = as_complex_matrix(u, name=name)
    if tol is None:
        tol = UNITARITY_TOL_FACTOR * u.shape[-1]
    defect = unitarity_defect(u)
    if defect > tol:
        raise ValueError(f"{name} is not unitary: max |UU* - Id| = {defect:.3e} > {tol:.3e}")
    return u


def svd(a):
    """Singular value decomposition ``a = w @ diag(s) @ v.conj().T``.

    Returns
    -------
    w : ndarray
        Unitary factor of left singular vectors.
    s : ndarray
        Singular values, non-negative and sorted descending.
    v : ndarray
        Unitary factor of right singular vectors (not its adjoint).
    """
    a = as_complex_matrix(a)
    try:
        w, s, vh = np.linalg.svd(a)
    except np.linalg.LinAlgError as exc:
        scale = float(np.max(np.abs(a)))
        raise np.linalg.LinAlgError(
            f"SVD did not converge for {a.shape[0]}x{a.shape[0]} matrix "
            f"(max |entry| = {scale:.3e}, frobenius = {np.linalg.norm(a):.3e})"
        ) from exc
    return w, s, adjoint(vh)


def qr_phase_normalized(a):
    """QR factorization with R's diagonal forced to be real and positive.

    Accepts a single matrix or a stack ``(..., n, n)``.  LAPACK leaves the
    diagonal of R real but with ambiguous sign; pulling each diagonal phase
    into the corresponding column of Q fixes the unique factorization with
    strictly positive diagonal.  This convention is what makes
    Ginibre-then-QR an exact Haar sampler, so it is load-bearing, not
    cosmetic.
    """
    a = np.asarray(a, dtype=np.complex128)
    q, r = np.linalg.qr(a)
    d = np.diagonal(r, axis1=-2, axis2=-1)
    if np.any(d == 0):
        raise np.linalg.LinAlgError("input is exactly singular; QR phase normalization undefined")
    phase = d / np.abs(d)
    q = q * phase[..., None, :]
    r = r * np.conj(phase)[..., :, None]
    # rounding can leave a residual imaginary dust on the diagonal; the
    # contract is a real positive diagonal
    idx = np.arange(a.shape[-1])
    r[..., idx, idx] = np.abs(d)
    return q, r
