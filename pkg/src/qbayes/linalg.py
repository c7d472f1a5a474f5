"""Dense complex-matrix kernel.

Hermitian spectral decomposition, support-restricted functional calculus,
Moore-Penrose pseudoinverse, Kronecker products, and partial traces. All
functions take and return plain complex numpy arrays and never modify their
inputs.

Index convention for Kronecker products and partial traces: the LEFT factor
is the multiplicity factor, kron(A, B)[(i, k), (j, l)] = A[i, j] * B[k, l].
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import (
    DimensionMismatch,
    NegativeEigenvalue,
    NoConvergence,
    NotHermitian,
)

# Absolute fallback used whenever a relative threshold has a ~zero reference.
ABS_FLOOR = 1e-12


@dataclass(frozen=True)
class Tolerances:
    """Numerical thresholds used throughout the library.

    eps_rank : relative cutoff below which an eigenvalue counts as zero
    eps_eq   : relative Frobenius threshold for matrix equality
    eps_recon: spectral reconstruction bound for eigendecompositions
    """

    eps_rank: float = 1e-9
    eps_eq: float = 1e-8
    eps_recon: float = 1e-10

    def __post_init__(self):
        for name in ("eps_rank", "eps_eq", "eps_recon"):
            value = getattr(self, name)
            if not 0.0 < value < 1.0:
                raise ValueError(f"{name} must lie strictly in (0, 1), got {value}")


DEFAULT_TOL = Tolerances()


def dagger(A: np.ndarray) -> np.ndarray:
    return A.conj().T


def frobenius(A: np.ndarray) -> float:
    return float(np.linalg.norm(A))


def mats_close(A: np.ndarray, B: np.ndarray, eps: float) -> bool:
    """Relative Frobenius equality with an absolute fallback near zero."""
    diff = frobenius(A - B)
    scale = max(frobenius(A), frobenius(B))
    return diff <= eps * scale or diff <= ABS_FLOOR


def rel_residual(A: np.ndarray, B: np.ndarray) -> float:
    """Frobenius distance of A and B relative to max(norms, 1)."""
    return frobenius(A - B) / max(frobenius(A), frobenius(B), 1.0)


def is_hermitian(M: np.ndarray, eps: float) -> bool:
    return mats_close(M, dagger(M), eps)


@dataclass(frozen=True)
class HermitianEigen:
    """Spectral data V diag(w) V* of a Hermitian matrix, w ascending."""

    eigenvalues: np.ndarray
    eigenvectors: np.ndarray

    def reconstruct(self) -> np.ndarray:
        return (self.eigenvectors * self.eigenvalues) @ dagger(self.eigenvectors)


def hermitian_eigen(M: np.ndarray, tol: Tolerances = DEFAULT_TOL) -> HermitianEigen:
    """Eigendecomposition of a Hermitian matrix with validated reconstruction."""
    M = np.asarray(M, dtype=complex)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise DimensionMismatch(f"expected a square matrix, got shape {M.shape}")
    if not np.all(np.isfinite(M)):
        raise ValueError("matrix contains NaN or Inf entries")
    if not is_hermitian(M, tol.eps_eq):
        raise NotHermitian(
            f"matrix deviates from Hermitian by {frobenius(M - dagger(M)):.3e}"
        )
    H = (M + dagger(M)) / 2
    try:
        w, V = np.linalg.eigh(H)
    except np.linalg.LinAlgError as exc:  # pragma: no cover - LAPACK rarely fails
        raise NoConvergence(str(exc)) from exc
    eig = HermitianEigen(eigenvalues=w, eigenvectors=V)
    scale = max(frobenius(M), ABS_FLOOR)
    if frobenius(eig.reconstruct() - H) > tol.eps_recon * scale:
        raise NoConvergence("spectral reconstruction exceeded eps_recon")
    n = M.shape[0]
    if frobenius(dagger(V) @ V - np.eye(n)) > tol.eps_recon * n:
        raise NoConvergence("eigenvector matrix is not unitary within eps_recon")
    return eig


def herm_fun(
    M: np.ndarray,
    f: Callable[[np.ndarray], np.ndarray],
    tol: Tolerances = DEFAULT_TOL,
) -> np.ndarray:
    """Apply f to the spectrum of a PSD matrix, restricted to its support.

    Eigenvalues at or below eps_rank * max(eigenvalue) are mapped to zero,
    so f is never evaluated off the support. Realizes sqrt(M), M^{it},
    and general complex powers M^z on the support.
    """
    eig = hermitian_eigen(M, tol)
    w, V = eig.eigenvalues, eig.eigenvectors
    wmax = max(float(w.max(initial=0.0)), 0.0)
    cutoff = tol.eps_rank * wmax
    if float(w.min(initial=0.0)) < -max(cutoff, ABS_FLOOR):
        raise NegativeEigenvalue(
            f"eigenvalue {w.min():.3e} below -eps_rank * lambda_max = {-cutoff:.3e}"
        )
    keep = w > cutoff
    fw = np.zeros(len(w), dtype=complex)
    if np.any(keep):
        fw[keep] = f(w[keep])
    return (V * fw) @ dagger(V)


def pseudoinverse(M: np.ndarray, tol: Tolerances = DEFAULT_TOL) -> np.ndarray:
    """Moore-Penrose inverse of a Hermitian PSD matrix via support calculus."""
    return herm_fun(M, lambda w: 1.0 / w, tol)


def matrix_sqrt(M: np.ndarray, tol: Tolerances = DEFAULT_TOL) -> np.ndarray:
    return herm_fun(M, np.sqrt, tol)


def matrix_power_it(M: np.ndarray, t: float, tol: Tolerances = DEFAULT_TOL) -> np.ndarray:
    """M^{it} = exp(it log M) on the support; zero off the support."""
    return herm_fun(M, lambda w: np.exp(1j * t * np.log(w)), tol)


def kron(A: np.ndarray, B: np.ndarray) -> np.ndarray:
    """Kronecker product, left factor = multiplicity factor."""
    return np.kron(np.asarray(A), np.asarray(B))


def _split_indices(M: np.ndarray, k: int, n: int) -> np.ndarray:
    M = np.asarray(M)
    if M.shape != (k * n, k * n):
        raise DimensionMismatch(
            f"matrix of shape {M.shape} does not factor as ({k}*{n}, {k}*{n})"
        )
    return M.reshape(k, n, k, n)


def partial_trace_left(M: np.ndarray, k: int, n: int) -> np.ndarray:
    """Trace out the left (multiplicity, size-k) factor of a kn x kn matrix."""
    return np.einsum("iaib->ab", _split_indices(M, k, n))


def partial_trace_right(M: np.ndarray, k: int, n: int) -> np.ndarray:
    """Trace out the right (size-n) factor of a kn x kn matrix."""
    return np.einsum("iaja->ij", _split_indices(M, k, n))


def support_eigendata(
    M: np.ndarray, cutoff: float, tol: Tolerances = DEFAULT_TOL
) -> tuple[np.ndarray, np.ndarray]:
    """Eigenpairs of a Hermitian PSD matrix above an absolute cutoff.

    Returns (eigenvalues descending, eigenvector columns). The cutoff is
    absolute; callers derive it from a global eps_rank * lambda_max scale.
    """
    eig = hermitian_eigen(M, tol)
    keep = eig.eigenvalues > cutoff
    w = eig.eigenvalues[keep][::-1]
    V = eig.eigenvectors[:, keep][:, ::-1]
    return w, V
