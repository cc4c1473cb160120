#!/usr/bin/env python3
"""
Spectral Reduction for the Gaussian proper agnostic learner
Builds M(P) = E[grad P grad P^T] exactly from Hermite coefficients and extracts
the eigenspace V of eigenvalues at least eta.
"""

import logging
import math
from dataclasses import dataclass
from typing import Any, Dict, Optional, Tuple

import numpy as np
from scipy.linalg import orth

from hermite_engine import PolyCoeffs, gradient_coeff_matrix
from learner_errors import GuaranteeError, InputError

logger = logging.getLogger(__name__)

SYMMETRY_TOL = 1e-12
PSD_TOL = 1e-10
ORTHONORMAL_TOL = 1e-10
RANK_TOL = 1e-10


@dataclass(frozen=True, eq=False)
class InfluenceMatrix:
    """Symmetric PSD d x d matrix M(P) = A(P) A(P)^T, with the factor A(P) when known"""
    matrix: np.ndarray
    factor: Optional[np.ndarray] = None

    def __post_init__(self):
        M = np.array(self.matrix, dtype=float)
        if M.ndim != 2 or M.shape[0] != M.shape[1]:
            raise InputError(f"Influence matrix must be square, got shape: {M.shape}")
        scale = max(1.0, float(np.max(np.abs(M)))) if M.size else 1.0
        if M.size and np.max(np.abs(M - M.T)) > SYMMETRY_TOL * scale:
            raise InputError("Influence matrix is not symmetric")
        M = (M + M.T) / 2.0
        M.flags.writeable = False
        object.__setattr__(self, 'matrix', M)
        if self.factor is not None:
            F = np.array(self.factor, dtype=float)
            if F.ndim != 2 or F.shape[0] != M.shape[0]:
                raise InputError(f"Factor must have {M.shape[0]} rows, got shape: {F.shape}")
            F.flags.writeable = False
            object.__setattr__(self, 'factor', F)

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]

    def trace(self) -> float:
        return float(np.trace(self.matrix))

    def eigenvalues(self) -> np.ndarray:
        """Eigenvalues in ascending order, clipped at 0 after the PSD check"""
        values = np.linalg.eigvalsh(self.matrix)
        if values.size and values[0] < -PSD_TOL:
            raise GuaranteeError(f"Influence matrix has eigenvalue {values[0]:.3e} < -{PSD_TOL:g}; input is not PSD")
        return np.clip(values, 0.0, None)


@dataclass(frozen=True, eq=False)
class Subspace:
    """Orthonormal basis (d x r) of a subspace of R^d plus the retained eigenvalues"""
    basis: np.ndarray
    eigenvalues: Optional[np.ndarray] = None

    def __post_init__(self):
        B = np.array(self.basis, dtype=float)
        if B.ndim != 2:
            raise InputError(f"Subspace basis must be a d x r matrix, got shape: {B.shape}")
        if B.shape[1] and np.max(np.abs(B.T @ B - np.eye(B.shape[1]))) > ORTHONORMAL_TOL:
            raise InputError("Subspace basis columns are not orthonormal")
        if self.eigenvalues is None:
            values = np.full(B.shape[1], np.nan)
        else:
            values = np.array(self.eigenvalues, dtype=float).reshape(-1)
            if values.size != B.shape[1]:
                raise InputError(f"Got {values.size} eigenvalues for a rank-{B.shape[1]} basis")
        B.flags.writeable = False
        values.flags.writeable = False
        object.__setattr__(self, 'basis', B)
        object.__setattr__(self, 'eigenvalues', values)

    @classmethod
    def empty(cls, dim: int) -> 'Subspace':
        return cls(np.zeros((dim, 0)), np.zeros(0))

    @classmethod
    def from_vectors(cls, vectors: np.ndarray) -> 'Subspace':
        """Span of the columns of a d x s matrix (rank-revealing orthonormalization)"""
        vectors = np.asarray(vectors, dtype=float)
        if vectors.ndim == 1:
            vectors = vectors[:, None]
        if not vectors.size or np.allclose(vectors, 0.0):
            return cls.empty(vectors.shape[0])
        return cls(orth(vectors))

    @property
    def dim(self) -> int:
        return self.basis.shape[0]

    @property
    def rank(self) -> int:
        return self.basis.shape[1]

    def projector(self) -> np.ndarray:
        return self.basis @ self.basis.T

    def complement_projector(self) -> np.ndarray:
        return np.eye(self.dim) - self.projector()

    def project(self, X: np.ndarray) -> np.ndarray:
        """Orthogonal projection of a vector or of each row of a matrix onto the subspace"""
        return np.asarray(X, dtype=float) @ self.projector()

    def contains(self, v: np.ndarray, tol: float = 1e-10) -> bool:
        v = np.asarray(v, dtype=float)
        return bool(np.linalg.norm(v - self.project(v)) <= tol)

    def to_dict(self) -> Dict[str, Any]:
        """r, d, basis column-major as text floats, eigenvalues"""
        return {
            'r': self.rank,
            'dim': self.dim,
            'basis': [repr(float(v)) for v in self.basis.reshape(-1, order='F')],
            'eigenvalues': [repr(float(v)) for v in self.eigenvalues],
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> 'Subspace':
        r, d = int(data['r']), int(data['dim'])
        basis = np.array([float(v) for v in data['basis']]).reshape((d, r), order='F')
        return cls(basis, np.array([float(v) for v in data['eigenvalues']]))


def influence_matrix(p: PolyCoeffs) -> InfluenceMatrix:
    """M(P) = A(P) A(P)^T, exact, no sampling"""
    A = gradient_coeff_matrix(p).entries
    return InfluenceMatrix(A @ A.T, factor=A)


def trace_sqrt(M: InfluenceMatrix) -> float:
    """tr(M^{1/2}): singular values of the factor when present, else square roots of the eigenvalues"""
    if M.factor is not None:
        return float(np.sum(np.linalg.svd(M.factor, compute_uv=False))) if M.factor.size else 0.0
    return float(np.sum(np.sqrt(M.eigenvalues())))


def rank_trace_bound(M: InfluenceMatrix) -> Tuple[float, float]:
    """(tr(M^{1/2}), sqrt(rank_eps(M) * tr(M))); the first never exceeds the second"""
    values = M.eigenvalues()
    rank = int(np.sum(values > RANK_TOL))
    return float(np.sum(np.sqrt(values))), math.sqrt(rank * float(np.sum(values)))


def top_subspace(M: InfluenceMatrix, eta: float) -> Subspace:
    """
    Span of the eigenvectors of M with eigenvalue >= eta, sorted by descending eigenvalue

    Args:
        M: Influence matrix
        eta: Eigenvalue threshold (> 0); ties at exactly eta are kept

    Returns:
        Subspace, possibly of rank 0
    """
    if not eta > 0:
        raise InputError(f"Eigenvalue threshold eta must be positive, got: {eta}")
    values, vectors = np.linalg.eigh(M.matrix)
    if values.size and values[0] < -PSD_TOL:
        raise GuaranteeError(f"Influence matrix has eigenvalue {values[0]:.3e} < -{PSD_TOL:g}; input is not PSD")
    values = np.clip(values, 0.0, None)
    order = np.argsort(-values, kind='stable')
    keep = [i for i in order if values[i] >= eta]
    if not keep:
        logger.info(f"📊 No eigenvalue reaches eta={eta:.4g}; subspace is empty")
        return Subspace.empty(M.dim)

    basis = vectors[:, keep]
    # Fix eigenvector signs: largest-magnitude entry positive
    pivots = np.argmax(np.abs(basis), axis=0)
    signs = np.sign(basis[pivots, np.arange(basis.shape[1])])
    signs[signs == 0] = 1.0
    basis = basis * signs
    logger.info(f"📊 Retained {len(keep)} eigenvalue(s) >= eta={eta:.4g}: {np.round(values[keep], 6).tolist()}")
    return Subspace(basis, values[keep])


def dimension_bound(M: InfluenceMatrix, eta: float) -> float:
    """tr(M^{1/2}) / sqrt(eta), an upper bound on dim(V)"""
    return trace_sqrt(M) / math.sqrt(eta)


def check_dimension_bound(subspace: Subspace, M: InfluenceMatrix, eta: float) -> float:
    """Raise GuaranteeError unless dim(V) <= tr(M^{1/2}) / sqrt(eta); returns the bound"""
    bound = dimension_bound(M, eta)
    if subspace.rank > bound * (1.0 + 1e-12):
        raise GuaranteeError(f"Dimension bound violated: dim(V)={subspace.rank} > {bound:.6g}", stage='spectral')
    return bound
