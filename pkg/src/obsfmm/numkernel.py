"""Dense linear-algebra primitives used by the rest of the package.

Matrices are plain 2-D ``numpy.ndarray`` objects of ``float64``. The
decompositions are thin wrappers over LAPACK (through numpy/scipy) that add
the input checks, orderings and sign conventions the callers rely on.
"""

from dataclasses import dataclass

import numpy as np
from scipy.linalg import lapack

from .errors import ArgumentError, ContractError, DefinitenessError, NumericalError

# Relative tolerance for accepting a matrix as symmetric.
SYMMETRY_RTOL = 1e-12


@dataclass(frozen=True)
class TruncatedSvd:
    """Leading ``rank`` singular triplets of a matrix.

    ``left`` is rows x rank, ``right`` is cols x rank; the k-th columns pair
    with ``values[k]``. Values are non-increasing.
    """

    left: np.ndarray
    values: np.ndarray
    right: np.ndarray

    @property
    def rank(self):
        return self.values.shape[0]

    def reconstruct(self):
        return (self.left * self.values) @ self.right.T


@dataclass(frozen=True)
class EigenDecomposition:
    """Eigenvalues sorted non-increasing, eigenvectors as aligned columns."""

    values: np.ndarray
    vectors: np.ndarray

    def reconstruct(self):
        return (self.vectors * self.values) @ self.vectors.T


def as_matrix(M):
    M = np.asarray(M, dtype=float)
    if M.ndim != 2 or M.shape[0] < 1 or M.shape[1] < 1:
        raise ArgumentError(f"expected a non-empty 2-D matrix, got shape {M.shape}")
    return M


def check_symmetric(M):
    M = as_matrix(M)
    if M.shape[0] != M.shape[1]:
        raise ContractError(f"matrix is not square: {M.shape}")
    if not np.all(np.isfinite(M)):
        raise ContractError("matrix has non-finite entries")
    scale = np.max(np.abs(M)) if M.size else 0.0
    if np.max(np.abs(M - M.T)) > SYMMETRY_RTOL * max(scale, 1.0):
        raise ContractError("matrix is not symmetric")
    return M


def symmetrize_lower(M):
    """Copy the lower triangle onto the upper one, so ``M == M.T`` exactly."""
    L = np.tril(M)
    return L + np.tril(L, -1).T


def sym_eig(M):
    M = check_symmetric(M)
    try:
        w, V = np.linalg.eigh(M)
    except np.linalg.LinAlgError as exc:
        raise NumericalError(f"eigendecomposition did not converge: {exc}") from exc
    return EigenDecomposition(values=w[::-1].copy(), vectors=V[:, ::-1].copy())


def sym_eigvals(M):
    """Eigenvalues only, sorted non-increasing."""
    M = check_symmetric(M)
    try:
        w = np.linalg.eigvalsh(M)
    except np.linalg.LinAlgError as exc:
        raise NumericalError(f"eigenvalue iteration did not converge: {exc}") from exc
    return w[::-1].copy()


def _fix_signs(U, Vt):
    # largest-magnitude entry of every right singular vector made positive
    idx = np.argmax(np.abs(Vt), axis=1)
    signs = np.sign(Vt[np.arange(Vt.shape[0]), idx])
    signs[signs == 0] = 1.0
    return U * signs, Vt * signs[:, None]


def truncated_svd(M, p):
    """Leading ``p`` singular triplets of ``M``.

    Computed from a full thin SVD, which is adequate for the sub-matrix sizes
    that arise here. Each right singular vector is sign-normalised so that its
    largest-magnitude entry is positive.
    """
    M = as_matrix(M)
    p = int(p)
    if p < 1 or p > min(M.shape):
        raise ArgumentError(f"rank {p} outside [1, {min(M.shape)}] for shape {M.shape}")
    try:
        U, s, Vt = np.linalg.svd(M, full_matrices=False)
    except np.linalg.LinAlgError as exc:
        raise NumericalError(f"SVD did not converge: {exc}") from exc
    U, Vt = _fix_signs(U[:, :p], Vt[:p])
    return TruncatedSvd(left=U, values=s[:p].copy(), right=Vt.T.copy())


def singular_values(M):
    M = as_matrix(M)
    return np.linalg.svd(M, compute_uv=False)


def cholesky_lower(M):
    """Lower Cholesky factor; raises DefinitenessError with the failing pivot."""
    M = check_symmetric(M)
    c, info = lapack.dpotrf(M, lower=1, clean=1)
    if info > 0:
        raise DefinitenessError(
            f"matrix is not positive definite (leading minor {info})", pivot=int(info)
        )
    if info < 0:
        raise NumericalError(f"dpotrf argument error {info}")
    return c


def spd_invert(M):
    L = cholesky_lower(M)
    inv, info = lapack.dpotri(L, lower=1)
    if info != 0:
        raise DefinitenessError(f"inverse from Cholesky factor failed (info={info})", pivot=int(info))
    return symmetrize_lower(inv)


def chol_sample(M, rng, n):
    """Draw ``n`` vectors ``L z`` with ``z ~ N(0, I)`` and ``M = L L^T``.

    Returns an array of shape ``(n, m)``; row ``k`` is the k-th draw. The
    standard-normal block is drawn in one call so the output depends only on
    the generator state.
    """
    L = cholesky_lower(M)
    z = rng.standard_normal((int(n), L.shape[0]))
    return z @ L.T


def condition_number(M):
    w = sym_eigvals(M)
    if w[-1] <= 0:
        raise DefinitenessError(f"smallest eigenvalue {w[-1]:.3e} is not positive")
    return float(w[0] / w[-1])
