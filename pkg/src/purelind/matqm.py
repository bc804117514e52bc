"""Dense complex linear algebra kernel.

Conventions
-----------
A purified state of an ``n``-level system lives in the ``n**2`` dimensional
product space of system and ancilla. Its amplitudes ``psi[i*n + a]`` are the
entries ``W[i, a]`` of the W-factor, i.e. the row-major flattening. With this
convention ``(A kron B) psi`` corresponds to ``A @ W @ B.T``, and the reduced
density matrix is ``W @ W^dagger``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg

DEFAULT_RANK_TOL = 1e-10


def dagger(a: np.ndarray) -> np.ndarray:
    """Conjugate transpose (works on stacks of matrices)."""
    return np.conj(np.swapaxes(a, -1, -2))


def hermitian_part(a: np.ndarray) -> np.ndarray:
    return 0.5 * (a + dagger(a))


def antihermitian_part(a: np.ndarray) -> np.ndarray:
    return 0.5 * (a - dagger(a))


def kron(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Kronecker product ``a (x) b``."""
    return np.kron(np.asarray(a, dtype=complex), np.asarray(b, dtype=complex))


def _square_dim(w: np.ndarray) -> int:
    w = np.asarray(w)
    if w.ndim != 2 or w.shape[0] != w.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {w.shape}")
    return w.shape[0]


def reshape_to_state(w: np.ndarray) -> np.ndarray:
    """Map a square W-factor to its purified state vector (row-major)."""
    n = _square_dim(w)
    return np.asarray(w, dtype=complex).reshape(n * n).copy()


def reshape_to_operator(psi: np.ndarray) -> np.ndarray:
    """Inverse of :func:`reshape_to_state`."""
    psi = np.asarray(psi, dtype=complex)
    if psi.ndim != 1:
        raise ValueError(f"expected a vector, got shape {psi.shape}")
    n = int(round(np.sqrt(psi.size)))
    if n * n != psi.size:
        raise ValueError(f"length {psi.size} is not a perfect square")
    return psi.reshape(n, n).copy()


def partial_trace_ancilla(psi: np.ndarray) -> np.ndarray:
    """Reduced system density matrix ``tr_A |psi><psi|``.

    Parameters
    ----------
    psi : ndarray, shape (n*n,) or (..., n, n)
        Purified state vector, or a (stack of) W-factor(s).
    """
    psi = np.asarray(psi, dtype=complex)
    w = reshape_to_operator(psi) if psi.ndim == 1 else psi
    rho = w @ dagger(w)
    return hermitian_part(rho)


@dataclass(frozen=True)
class SpectralDecomposition:
    """Eigen-decomposition ``M = U diag(eigenvalues) U^dagger`` of a Hermitian matrix.

    Eigenvalues are real and ascending; eigenvectors are the columns of ``eigenvectors``.
    """

    eigenvalues: np.ndarray
    eigenvectors: np.ndarray

    def reconstruct(self) -> np.ndarray:
        u = self.eigenvectors
        return (u * self.eigenvalues) @ dagger(u)

    def apply(self, f) -> np.ndarray:
        """Return ``f(M)`` through the spectral calculus."""
        u = self.eigenvectors
        return (u * f(self.eigenvalues)) @ dagger(u)


def hermitian_eigh(m: np.ndarray, herm_tol: float | None = None) -> SpectralDecomposition:
    """Spectral decomposition of a Hermitian matrix.

    The input is symmetrised before diagonalisation. If ``herm_tol`` is given,
    inputs whose anti-Hermitian part exceeds it (max-abs) are rejected.
    """
    m = np.asarray(m, dtype=complex)
    _square_dim(m)
    if herm_tol is not None:
        skew = np.max(np.abs(m - dagger(m)), initial=0.0)
        if skew > herm_tol:
            raise ValueError(f"matrix is not Hermitian (skew {skew:.3e} > {herm_tol:.1e})")
    # LAPACK zheevd returns ascending eigenvalues
    vals, vecs = np.linalg.eigh(hermitian_part(m))
    return SpectralDecomposition(vals, vecs)


def pseudo_inverse(w: np.ndarray, rank_tol: float = DEFAULT_RANK_TOL) -> np.ndarray:
    """Moore-Penrose pseudo-inverse.

    Singular values below ``rank_tol * sigma_max`` are treated as zero, so
    ``w @ pinv`` is the orthogonal projector on the numerical range of ``w``.
    The zero matrix maps to the zero matrix.
    """
    w = np.asarray(w, dtype=complex)
    u, s, vh = np.linalg.svd(w)
    if s.size == 0 or s[0] == 0.0:
        return np.zeros(w.shape[::-1], dtype=complex)
    keep = s > rank_tol * s[0]
    return (dagger(vh[keep]) / s[keep]) @ dagger(u[:, keep])


def numerical_rank(w: np.ndarray, rank_tol: float = DEFAULT_RANK_TOL) -> int:
    """Number of singular values above ``rank_tol * sigma_max``."""
    s = np.linalg.svd(np.asarray(w, dtype=complex), compute_uv=False)
    if s.size == 0 or s[0] == 0.0:
        return 0
    return int(np.count_nonzero(s > rank_tol * s[0]))


def range_projector(w: np.ndarray, rank_tol: float = DEFAULT_RANK_TOL) -> np.ndarray:
    """Orthogonal projector on ``Ran w`` (equals ``w @ pseudo_inverse(w)``)."""
    w = np.asarray(w, dtype=complex)
    u, s, _ = np.linalg.svd(w)
    if s.size == 0 or s[0] == 0.0:
        return np.zeros((w.shape[0], w.shape[0]), dtype=complex)
    uk = u[:, : np.count_nonzero(s > rank_tol * s[0])]
    return uk @ dagger(uk)


def matrix_exp(a: np.ndarray) -> np.ndarray:
    """Matrix exponential (Pade scaling and squaring)."""
    a = np.asarray(a, dtype=complex)
    _square_dim(a)
    return scipy.linalg.expm(a)


def sqrtm_psd(rho: np.ndarray, neg_tol: float = 1e-10) -> np.ndarray:
    """Hermitian square root of a positive semi-definite matrix.

    Eigenvalues in ``[-neg_tol, 0)`` are clipped to zero; more negative ones raise.
    """
    dec = hermitian_eigh(rho)
    if dec.eigenvalues.size and dec.eigenvalues[0] < -neg_tol:
        raise ValueError(f"matrix has negative eigenvalue {dec.eigenvalues[0]:.3e}")
    return dec.apply(lambda p: np.sqrt(np.clip(p, 0.0, None)))


def max_abs(a: np.ndarray) -> float:
    """Entrywise max-abs norm, used as the ``inf`` norm throughout."""
    return float(np.max(np.abs(a), initial=0.0))
