"""Symmetric eigendecompositions, the kernel-PCA reduction, feature-space
constraint discovery and the least-squares residual used to pick the nugget."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data import Dataset
from .kernels import KernelSpec, feature_map

DEFAULT_EPSILON = 1e-10
RANK_RCOND = 1e-10


class SpectralError(ValueError):
    pass


@dataclass(frozen=True)
class EigenSystem:
    eigenvalues: np.ndarray  # descending
    eigenvectors: np.ndarray  # orthonormal columns


@dataclass(frozen=True)
class ReducedData:
    """A target expressed in the retained eigenbasis of a Gram matrix.

    Everything outside the retained eigenvectors is treated as lying in the
    null space of the kernel (eigenvalue 0); its squared norm is
    ``tail_energy`` and its dimension ``tail_dim``.
    """

    eigenvalues: np.ndarray
    projections: np.ndarray
    tail_energy: float
    tail_dim: int
    eigenvectors: np.ndarray | None = None

    @property
    def rank(self) -> int:
        return len(self.eigenvalues)

    def omegas(self, gamma: float) -> np.ndarray:
        """Full spectrum of gamma (K + gamma I)^{-1}, zero eigenvalues included."""
        w = gamma / (gamma + self.eigenvalues)
        return np.concatenate([w, np.ones(self.tail_dim)])


def eig_sym(k: np.ndarray) -> EigenSystem:
    k = np.asarray(k, dtype=float)
    if k.ndim != 2 or k.shape[0] != k.shape[1]:
        raise SpectralError(f"expected a square matrix, got shape {k.shape}")
    scale = max(1.0, float(np.max(np.abs(k)))) if k.size else 1.0
    if k.size and np.max(np.abs(k - k.T)) > 1e-10 * scale:
        raise SpectralError("matrix is not symmetric")
    vals, vecs = np.linalg.eigh(k)
    return EigenSystem(vals[::-1].copy(), vecs[:, ::-1].copy())


def _cutoff(lam1: float, n: int, epsilon: float) -> float:
    # below n * eps * lam1 an eigenvalue is indistinguishable from zero
    return max(epsilon, n * np.finfo(float).eps) * lam1


def kpca_reduce(k: np.ndarray | EigenSystem, y: np.ndarray, epsilon: float = DEFAULT_EPSILON) -> ReducedData:
    """Keep the eigenpairs with lambda_i / lambda_1 >= epsilon and project y on them."""
    es = k if isinstance(k, EigenSystem) else eig_sym(k)
    y = np.asarray(y, dtype=float)
    lam = es.eigenvalues
    if lam.size == 0 or lam[0] <= 0:
        raise SpectralError("Gram matrix has no positive eigenvalue")
    keep = lam >= _cutoff(lam[0], len(y), epsilon)
    vecs = es.eigenvectors[:, keep]
    proj = vecs.T @ y
    tail = max(float(y @ y - proj @ proj), 0.0)
    return ReducedData(lam[keep].copy(), proj, tail, len(y) - int(keep.sum()), vecs)


def reduce_features(phi: np.ndarray, y: np.ndarray, epsilon: float = DEFAULT_EPSILON) -> ReducedData:
    """Same as ``kpca_reduce(phi.T @ phi, y)`` via a thin SVD of the feature matrix.

    The nonzero eigenvalues of the N x N Gram coincide with those of the
    d_S x d_S covariance phi phi^T, so this costs O(N d_S^2).
    """
    y = np.asarray(y, dtype=float)
    u, s, _ = np.linalg.svd(phi.T, full_matrices=False)
    lam = s * s
    if lam.size == 0 or lam[0] <= 0:
        raise SpectralError("feature matrix is zero")
    keep = lam >= _cutoff(lam[0], len(y), epsilon)
    vecs = u[:, keep]
    proj = vecs.T @ y
    tail = max(float(y @ y - proj @ proj), 0.0)
    return ReducedData(lam[keep].copy(), proj, tail, len(y) - int(keep.sum()), vecs)


@dataclass(frozen=True)
class ConstraintSet:
    """Approximate zero-eigenspace of C_N / N.

    ``vectors`` is an orthonormal basis in scaled-feature coordinates;
    ``coefficients`` holds the same constraints as monomial coefficients
    (each row normalized), ``residuals`` the per-constraint mean squared
    violation |v^T psi(X)|^2 / N.
    """

    vectors: np.ndarray
    coefficients: np.ndarray
    residuals: np.ndarray
    eigenvalues: np.ndarray

    @property
    def dimension(self) -> int:
        return self.vectors.shape[0]


def affine_constraints(ds: Dataset | np.ndarray, spec: KernelSpec, epsilon: float = DEFAULT_EPSILON) -> ConstraintSet:
    phi, _ = feature_map(spec, ds)
    d_s, n = phi.shape
    if n <= d_s:
        raise SpectralError(f"underdetermined (N={n} <= d_S={d_s}); use kernelized path")
    c = (phi @ phi.T) / n
    vals, vecs = np.linalg.eigh(c)
    small = vals < epsilon
    basis = vecs[:, small].T
    # v^T psi = sum_f v_f w_f m_f, so monomial coefficients are v_f w_f
    coef = basis * _monomial_weights(spec, d_s)[None, :]
    norms = np.linalg.norm(coef, axis=1, keepdims=True)
    coef = coef / np.where(norms > 0, norms, 1.0)
    residuals = np.array([float(np.mean((v @ phi) ** 2)) for v in basis])
    return ConstraintSet(basis, coef, residuals, vals[small])


def _monomial_weights(spec: KernelSpec, d_s: int) -> np.ndarray:
    b1, b2, _ = spec.effective_betas
    d = len(spec.active)
    w = [1.0] + [np.sqrt(b1)] * d + [np.sqrt(b2)] * (d_s - 1 - d)
    return np.array(w)


def ols_residual(features: np.ndarray, y: np.ndarray) -> float:
    """inf_w |w^T features - y|^2, rank-robust."""
    y = np.asarray(y, dtype=float)
    a = np.atleast_2d(np.asarray(features, dtype=float)).T
    if a.size == 0:
        return float(y @ y)
    u, s, _ = np.linalg.svd(a, full_matrices=False)
    if s.size == 0 or s[0] == 0:
        return float(y @ y)
    u = u[:, s > RANK_RCOND * s[0]]
    proj = u.T @ y
    return max(float(y @ y - proj @ proj), 0.0)
