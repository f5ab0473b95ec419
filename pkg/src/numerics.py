"""
Dense linear algebra and statistics shared by the whole workbench
Covariance, symmetric eigendecomposition, norms and stable activations
"""
from dataclasses import dataclass
from typing import Optional

import numpy as np

from src.errors import ContractViolationError, DegenerateInputError, DimensionMismatchError, NumericError

# Matrices are float64 numpy arrays of shape (rows, cols)
Matrix = np.ndarray

SYMMETRY_TOLERANCE = 1e-10
JACOBI_TOLERANCE = 1e-12
JACOBI_MAX_SWEEPS = 100


@dataclass(frozen=True)
class EigenDecomposition:
    """Eigenpairs of a symmetric matrix, ordered by |eigenvalue| descending"""
    eigenvalues: np.ndarray   # (d,)
    eigenvectors: np.ndarray  # (d, d), column i pairs with eigenvalues[i]

    @property
    def dimension(self) -> int:
        return int(self.eigenvalues.shape[0])

    def vector(self, rank: int) -> np.ndarray:
        """Eigenvector q_rank (0-based rank)"""
        return self.eigenvectors[:, rank]

    def reconstruct(self) -> Matrix:
        """Sum of lambda_i q_i q_i^T"""
        q = self.eigenvectors
        return (q * self.eigenvalues) @ q.T


def as_matrix(data, name: str = "matrix") -> Matrix:
    """Convert to a finite 2-D float64 array"""
    m = np.asarray(data, dtype=np.float64)
    if m.ndim != 2:
        raise DimensionMismatchError(f"{name} must be 2-D, got shape {m.shape}")
    if not np.all(np.isfinite(m)):
        raise NumericError(f"{name} contains non-finite entries")
    return m


def covariance(data) -> Matrix:
    """Mean-centred population covariance (divisor n) of n samples x d dims"""
    x = as_matrix(data, "data")
    n = x.shape[0]
    if n < 2:
        raise DegenerateInputError(f"covariance needs at least 2 samples, got {n}")
    centred = x - x.mean(axis=0)
    cov = centred.T @ centred / n
    # Exact symmetry regardless of summation order
    return (cov + cov.T) / 2.0


def _check_symmetric(m: Matrix):
    if m.shape[0] != m.shape[1]:
        raise DimensionMismatchError(f"expected a square matrix, got {m.shape}")
    scale = max(1.0, float(np.max(np.abs(m)))) if m.size else 1.0
    asym = float(np.max(np.abs(m - m.T))) if m.size else 0.0
    if asym > SYMMETRY_TOLERANCE * scale:
        raise ContractViolationError(f"matrix is not symmetric (max |A - A^T| = {asym:.3e})")


def _fix_signs(vectors: np.ndarray) -> np.ndarray:
    # Largest-magnitude entry of each eigenvector is made positive; argmax picks the lowest index on ties
    idx = np.argmax(np.abs(vectors), axis=0)
    signs = np.sign(vectors[idx, np.arange(vectors.shape[1])])
    signs[signs == 0] = 1.0
    return vectors * signs


def _off_diagonal_norm(a: np.ndarray) -> float:
    # Summed directly; ||A||^2 - ||diag A||^2 cancels to a rounding floor far above the tolerance
    return float(np.sqrt(2.0 * np.sum(np.triu(a, 1) ** 2)))


def symmetric_eig(m, tol: float = JACOBI_TOLERANCE, max_sweeps: int = JACOBI_MAX_SWEEPS) -> EigenDecomposition:
    """
    Cyclic Jacobi eigendecomposition of a symmetric matrix.

    Returns all d eigenpairs ordered by eigenvalue magnitude (descending),
    eigenvector signs fixed so the output is deterministic.
    """
    a = as_matrix(m).copy()
    _check_symmetric(a)
    d = a.shape[0]
    v = np.eye(d)
    if d == 0:
        return EigenDecomposition(np.zeros(0), v)

    scale = max(1.0, float(np.linalg.norm(a)))
    converged = False
    for sweep in range(max_sweeps):
        off = _off_diagonal_norm(a)
        if off <= tol * scale:
            converged = True
            break
        for p in range(d - 1):
            for q in range(p + 1, d):
                apq = a[p, q]
                if abs(apq) < 1e-300:
                    continue
                tau = (a[q, q] - a[p, p]) / (2.0 * apq)
                t = (1.0 if tau >= 0 else -1.0) / (abs(tau) + np.sqrt(1.0 + tau * tau))
                c = 1.0 / np.sqrt(1.0 + t * t)
                s = t * c

                col_p = a[:, p].copy()
                col_q = a[:, q].copy()
                a[:, p] = c * col_p - s * col_q
                a[:, q] = s * col_p + c * col_q
                row_p = a[p, :].copy()
                row_q = a[q, :].copy()
                a[p, :] = c * row_p - s * row_q
                a[q, :] = s * row_p + c * row_q
                a[p, q] = 0.0
                a[q, p] = 0.0

                vec_p = v[:, p].copy()
                vec_q = v[:, q].copy()
                v[:, p] = c * vec_p - s * vec_q
                v[:, q] = s * vec_p + c * vec_q

    if not converged:
        off = _off_diagonal_norm(a)
        if off > tol * scale:
            raise NumericError(f"Jacobi iteration did not converge in {max_sweeps} sweeps (off = {off:.3e})")

    eigenvalues = np.diag(a).copy()
    order = np.argsort(-np.abs(eigenvalues), kind="stable")
    eigenvalues = eigenvalues[order]
    eigenvectors = _fix_signs(v[:, order])
    return EigenDecomposition(eigenvalues=eigenvalues, eigenvectors=eigenvectors)


def residual_norms(m, decomposition: EigenDecomposition) -> np.ndarray:
    """||A q_i - lambda_i q_i|| for every eigenpair"""
    a = as_matrix(m)
    q = decomposition.eigenvectors
    return np.linalg.norm(a @ q - q * decomposition.eigenvalues, axis=0)


# Norms

def l2_norm(x) -> float:
    return float(np.sqrt(np.sum(np.square(np.asarray(x, dtype=np.float64)))))


def linf_norm(x) -> float:
    arr = np.asarray(x, dtype=np.float64)
    return float(np.max(np.abs(arr))) if arr.size else 0.0


# Stable activations

def sigmoid(x):
    x = np.asarray(x, dtype=np.float64)
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def softmax(z, axis: int = -1, mask: Optional[np.ndarray] = None) -> np.ndarray:
    """Softmax along an axis; entries where mask is False get probability 0"""
    z = np.asarray(z, dtype=np.float64)
    if mask is not None:
        z = np.where(mask, z, -np.inf)
    z_max = np.max(z, axis=axis, keepdims=True)
    z_max = np.where(np.isfinite(z_max), z_max, 0.0)
    ez = np.exp(z - z_max)
    if mask is not None:
        ez = np.where(mask, ez, 0.0)
    return ez / np.sum(ez, axis=axis, keepdims=True)


def entropy(p, axis: int = -1) -> np.ndarray:
    """Natural-log entropy with 0 log 0 = 0"""
    p = np.asarray(p, dtype=np.float64)
    safe = np.where(p > 0, p, 1.0)
    return -np.sum(np.where(p > 0, p * np.log(safe), 0.0), axis=axis)
