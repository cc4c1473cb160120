#!/usr/bin/env python3
"""
Hermite Engine for the Gaussian proper agnostic learner
Multi-index enumeration, normalized Hermite evaluation and the exact linear maps
between polynomial coefficients, gradient coefficients and gradient energy.

CONVENTIONS:
    H_j is the probabilists' Hermite polynomial normalized by 1/sqrt(j!), so that
    {H_alpha(x) = prod_i H_{alpha_i}(x_i)} is orthonormal under N(0, I_d).

    Multi-indices with |alpha| <= k are enumerated graded: every index of degree n
    precedes every index of degree n+1. Within one degree the order is reverse
    lexicographic on the entry tuple, so e_1 = (1,0,...,0) is the first degree-1
    index. The coefficient vector of a PolyCoeffs follows this order; it is part of
    the on-disk format.

FILE FORMAT (PolyCoeffs):
    d k m
    c_0
    c_1
    ...
    c_{m-1}
"""

import logging
import math
from dataclasses import dataclass
from functools import lru_cache
from pathlib import Path
from typing import Callable, Dict, Iterator, List, Optional, Sequence, Tuple, Union

import numpy as np
from scipy.special import comb, roots_hermitenorm

from learner_errors import InputError

logger = logging.getLogger(__name__)

ArrayLike = Union[np.ndarray, Sequence[float]]


@dataclass(frozen=True)
class MultiIndex:
    """Exponent vector alpha of a multivariate Hermite basis element"""
    entries: Tuple[int, ...]

    def __post_init__(self):
        entries = tuple(int(e) for e in self.entries)
        if any(e < 0 for e in entries):
            raise InputError(f"Multi-index entries must be non-negative, got: {entries}")
        object.__setattr__(self, 'entries', entries)

    @property
    def degree(self) -> int:
        return sum(self.entries)

    @property
    def dim(self) -> int:
        return len(self.entries)

    def shifted(self, axis: int, delta: int) -> 'MultiIndex':
        entries = list(self.entries)
        entries[axis] += delta
        return MultiIndex(tuple(entries))


def num_multi_indices(d: int, k: int) -> int:
    """C(d+k, k), the number of multi-indices with |alpha| <= k"""
    return int(comb(d + k, k, exact=True))


def _compositions(n: int, d: int) -> Iterator[Tuple[int, ...]]:
    if d == 1:
        yield (n,)
        return
    for first in range(n, -1, -1):
        for rest in _compositions(n - first, d - 1):
            yield (first,) + rest


def _validate_dims(d: int, k: int) -> None:
    if not isinstance(d, (int, np.integer)) or d < 1:
        raise InputError(f"Dimension d must be a positive integer, got: {d}")
    if not isinstance(k, (int, np.integer)) or k < 0:
        raise InputError(f"Degree k must be a non-negative integer, got: {k}")


@lru_cache(maxsize=128)
def _multi_index_tuples(d: int, k: int) -> Tuple[Tuple[int, ...], ...]:
    return tuple(alpha for n in range(k + 1) for alpha in _compositions(n, d))


def enumerate_multi_indices(d: int, k: int) -> List[MultiIndex]:
    """
    Enumerate {alpha in N^d : |alpha| <= k} in graded reverse-lexicographic order

    Args:
        d: Ambient dimension (>= 1)
        k: Maximum total degree (>= 0)

    Returns:
        List of exactly C(d+k, k) MultiIndex values
    """
    _validate_dims(d, k)
    return [MultiIndex(alpha) for alpha in _multi_index_tuples(int(d), int(k))]


@lru_cache(maxsize=128)
def multi_index_array(d: int, k: int) -> np.ndarray:
    """Read-only (m, d) integer array of the enumeration"""
    _validate_dims(d, k)
    arr = np.array(_multi_index_tuples(int(d), int(k)), dtype=np.int64).reshape(-1, int(d))
    arr.flags.writeable = False
    return arr


@lru_cache(maxsize=128)
def multi_index_position(d: int, k: int) -> Dict[Tuple[int, ...], int]:
    """Map from entry tuple to position in the enumeration"""
    return {alpha: pos for pos, alpha in enumerate(_multi_index_tuples(int(d), int(k)))}


def _index_array(indices: Union[np.ndarray, Sequence[MultiIndex]]) -> np.ndarray:
    if isinstance(indices, np.ndarray):
        return indices
    if len(indices) == 0:
        raise InputError("Index list is empty")
    return np.array([alpha.entries for alpha in indices], dtype=np.int64)


# ============================================================================
# UNIVARIATE HERMITE EVALUATION
# ============================================================================

def hermite_table(t: ArrayLike, max_degree: int) -> np.ndarray:
    """
    Evaluate H_0..H_max_degree at every entry of t

    Uses H_{j+1}(t) = (t H_j(t) - sqrt(j) H_{j-1}(t)) / sqrt(j+1).

    Returns:
        Array of shape t.shape + (max_degree + 1,)
    """
    if max_degree < 0:
        raise InputError(f"Hermite degree must be non-negative, got: {max_degree}")
    t = np.asarray(t, dtype=float)
    table = np.empty(t.shape + (max_degree + 1,))
    table[..., 0] = 1.0
    if max_degree >= 1:
        table[..., 1] = t
    for j in range(1, max_degree):
        table[..., j + 1] = (t * table[..., j] - math.sqrt(j) * table[..., j - 1]) / math.sqrt(j + 1)
    return table


def hermite_function_table(t: ArrayLike, max_degree: int) -> np.ndarray:
    """
    Evaluate H_j(t) * sqrt(phi(t)) for j = 0..max_degree

    Same recurrence as hermite_table, seeded with sqrt of the standard normal
    density; stays bounded for degrees in the thousands where H_j itself overflows.
    """
    if max_degree < 0:
        raise InputError(f"Hermite degree must be non-negative, got: {max_degree}")
    t = np.asarray(t, dtype=float)
    table = np.empty(t.shape + (max_degree + 1,))
    table[..., 0] = (2.0 * np.pi) ** -0.25 * np.exp(-t * t / 4.0)
    if max_degree >= 1:
        table[..., 1] = t * table[..., 0]
    for j in range(1, max_degree):
        table[..., j + 1] = (t * table[..., j] - math.sqrt(j) * table[..., j - 1]) / math.sqrt(j + 1)
    return table


def hermite_eval(j: int, t: Union[float, ArrayLike]) -> Union[float, np.ndarray]:
    """Normalized probabilists' Hermite polynomial H_j at t (scalar or array)"""
    if not isinstance(j, (int, np.integer)) or j < 0:
        raise InputError(f"Hermite degree must be a non-negative integer, got: {j}")
    values = hermite_table(t, int(j))[..., int(j)]
    if np.ndim(values) == 0:
        return float(values)
    return values


def feature_map(x: ArrayLike, indices: Union[np.ndarray, Sequence[MultiIndex]]) -> np.ndarray:
    """
    Hermite feature map Phi(x) with entry alpha equal to prod_i H_{alpha_i}(x_i)

    Args:
        x: Point of length d, or an (n, d) matrix of points
        indices: MultiIndex list (or its (m, d) integer array)

    Returns:
        (m,) vector for a single point, (n, m) matrix otherwise
    """
    idx = _index_array(indices)
    X = np.asarray(x, dtype=float)
    single = X.ndim == 1
    X = np.atleast_2d(X)
    if X.ndim != 2 or X.shape[1] != idx.shape[1]:
        raise InputError(f"Point dimension {X.shape[-1]} does not match multi-index dimension {idx.shape[1]}")

    table = hermite_table(X, int(idx.max()) if idx.size else 0)
    features = np.ones((X.shape[0], idx.shape[0]))
    for axis in range(idx.shape[1]):
        features *= table[:, axis, idx[:, axis]]
    return features[0] if single else features


# ============================================================================
# POLYNOMIALS IN THE HERMITE BASIS
# ============================================================================

@dataclass(frozen=True, eq=False)
class PolyCoeffs:
    """Degree-<=k polynomial on R^d stored by its Hermite coefficients"""
    dim: int
    degree: int
    coeffs: np.ndarray

    def __post_init__(self):
        _validate_dims(self.dim, self.degree)
        coeffs = np.array(self.coeffs, dtype=float).reshape(-1)
        expected = num_multi_indices(self.dim, self.degree)
        if coeffs.size != expected:
            raise InputError(f"Expected {expected} coefficients for d={self.dim}, k={self.degree}, got: {coeffs.size}")
        coeffs.flags.writeable = False
        object.__setattr__(self, 'dim', int(self.dim))
        object.__setattr__(self, 'degree', int(self.degree))
        object.__setattr__(self, 'coeffs', coeffs)

    @classmethod
    def zeros(cls, dim: int, degree: int) -> 'PolyCoeffs':
        return cls(dim, degree, np.zeros(num_multi_indices(dim, degree)))

    @classmethod
    def from_terms(cls, dim: int, degree: int, terms: Dict[Tuple[int, ...], float]) -> 'PolyCoeffs':
        """Build from {alpha entries: coefficient}; absent indices are zero"""
        _validate_dims(dim, degree)
        position = multi_index_position(dim, degree)
        coeffs = np.zeros(len(position))
        for alpha, value in terms.items():
            alpha = tuple(int(a) for a in alpha)
            if alpha not in position:
                raise InputError(f"Multi-index {alpha} is not in the degree-{degree} enumeration for d={dim}")
            coeffs[position[alpha]] = value
        return cls(dim, degree, coeffs)

    @classmethod
    def random(cls, dim: int, degree: int, rng: np.random.Generator, scale: float = 1.0) -> 'PolyCoeffs':
        return cls(dim, degree, scale * rng.standard_normal(num_multi_indices(dim, degree)))

    @property
    def size(self) -> int:
        return self.coeffs.size

    @property
    def indices(self) -> List[MultiIndex]:
        return enumerate_multi_indices(self.dim, self.degree)

    def coefficient(self, alpha: Tuple[int, ...]) -> float:
        position = multi_index_position(self.dim, self.degree)
        return float(self.coeffs[position[tuple(alpha)]])

    def l2_norm_squared(self) -> float:
        """E[P(x)^2] under N(0, I_d), by Parseval"""
        return float(np.dot(self.coeffs, self.coeffs))

    def with_coeffs(self, coeffs: ArrayLike) -> 'PolyCoeffs':
        return PolyCoeffs(self.dim, self.degree, coeffs)

    def to_text(self) -> str:
        lines = [f"{self.dim} {self.degree} {self.size}"]
        lines.extend(repr(float(c)) for c in self.coeffs)
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> 'PolyCoeffs':
        lines = [line.strip() for line in text.splitlines() if line.strip()]
        if not lines:
            raise InputError("Polynomial file is empty")
        header = lines[0].split()
        if len(header) != 3:
            raise InputError(f"Polynomial header must be 'd k m', got: {lines[0]!r}")
        try:
            d, k, m = (int(v) for v in header)
        except ValueError as e:
            raise InputError(f"Polynomial header must contain integers: {e}")
        if len(lines) - 1 != m:
            raise InputError(f"Header announces {m} coefficients, found {len(lines) - 1}")
        try:
            coeffs = np.array([float(v) for v in lines[1:]])
        except ValueError as e:
            raise InputError(f"Malformed coefficient: {e}")
        return cls(d, k, coeffs)


def write_poly_coeffs(path: Union[str, Path], p: PolyCoeffs) -> None:
    Path(path).write_text(p.to_text())
    logger.debug(f"Wrote polynomial d={p.dim} k={p.degree} to {path}")


def read_poly_coeffs(path: Union[str, Path]) -> PolyCoeffs:
    return PolyCoeffs.from_text(Path(path).read_text())


def poly_eval(p: PolyCoeffs, x: ArrayLike) -> Union[float, np.ndarray]:
    """<coeffs, Phi(x)> for one point or each row of a matrix"""
    values = feature_map(x, multi_index_array(p.dim, p.degree)) @ p.coeffs
    if np.ndim(values) == 0:
        return float(values)
    return values


# ============================================================================
# GRADIENT COEFFICIENT MAP
# ============================================================================

class GradientOperator:
    """
    Linear map c -> A(c) with A(c)[i, beta] = sqrt(beta_i + 1) * c_{beta + e_i},
    and its exact adjoint

    Columns are indexed by the degree-(k-1) enumeration; for k = 0 a single
    all-zero column is kept.
    """

    def __init__(self, d: int, k: int):
        self.dim = d
        self.degree = k
        self.grad_degree = max(k - 1, 0)
        self.n_rows = d
        self.n_cols = num_multi_indices(d, self.grad_degree)
        self.n_coeffs = num_multi_indices(d, k)

        rows, cols, sources, scales = [], [], [], []
        if k >= 1:
            position = multi_index_position(d, k)
            for col, beta in enumerate(_multi_index_tuples(d, self.grad_degree)):
                for axis in range(d):
                    alpha = beta[:axis] + (beta[axis] + 1,) + beta[axis + 1:]
                    rows.append(axis)
                    cols.append(col)
                    sources.append(position[alpha])
                    scales.append(math.sqrt(beta[axis] + 1))
        self.rows = np.array(rows, dtype=np.int64)
        self.cols = np.array(cols, dtype=np.int64)
        self.sources = np.array(sources, dtype=np.int64)
        self.scales = np.array(scales, dtype=float)
        # ||A(c)||_F^2 = sum |alpha| c_alpha^2 <= k ||c||^2
        self.operator_norm_bound = math.sqrt(k)

    def apply(self, coeffs: np.ndarray) -> np.ndarray:
        A = np.zeros((self.n_rows, self.n_cols))
        if self.sources.size:
            A[self.rows, self.cols] = self.scales * coeffs[self.sources]
        return A

    def adjoint(self, G: np.ndarray) -> np.ndarray:
        if not self.sources.size:
            return np.zeros(self.n_coeffs)
        return np.bincount(self.sources, weights=self.scales * G[self.rows, self.cols], minlength=self.n_coeffs)


@lru_cache(maxsize=64)
def gradient_operator(d: int, k: int) -> GradientOperator:
    _validate_dims(d, k)
    return GradientOperator(int(d), int(k))


@dataclass(frozen=True, eq=False)
class GradientMatrix:
    """d x C(d+k-1, k-1) Hermite coefficient matrix of grad P"""
    dim: int
    degree: int
    entries: np.ndarray

    def __post_init__(self):
        entries = np.array(self.entries, dtype=float)
        entries.flags.writeable = False
        object.__setattr__(self, 'entries', entries)

    @property
    def shape(self) -> Tuple[int, int]:
        return self.entries.shape

    def frobenius_norm_squared(self) -> float:
        return float(np.sum(self.entries ** 2))


def gradient_coeff_matrix(p: PolyCoeffs) -> GradientMatrix:
    """A(P): column beta holds the Hermite coefficients a_beta(P) of grad P"""
    op = gradient_operator(p.dim, p.degree)
    return GradientMatrix(p.dim, p.degree, op.apply(p.coeffs))


def gradient_energy(p: PolyCoeffs) -> float:
    """E||grad P(x)||^2 = sum_alpha |alpha| c_alpha^2"""
    degrees = multi_index_array(p.dim, p.degree).sum(axis=1)
    return float(np.dot(degrees, p.coeffs ** 2))


def poly_gradient_eval(p: PolyCoeffs, x: ArrayLike) -> np.ndarray:
    """grad P at one point (d,) or at each row of an (n, d) matrix"""
    op = gradient_operator(p.dim, p.degree)
    A = op.apply(p.coeffs)
    features = feature_map(x, multi_index_array(p.dim, op.grad_degree))
    return features @ A.T


# ============================================================================
# GAUSS-HERMITE QUADRATURE ORACLE
# ============================================================================

class GaussHermiteQuadrature:
    """
    Tensor-product Gauss-Hermite rule for expectations under N(0, I_dim)

    Nodes and weights come from the probabilists' rule and are rescaled so the
    weights sum to one. A rule with n points per axis integrates polynomials of
    degree <= 2n - 1 in each coordinate exactly.
    """

    def __init__(self, n_points: int, dim: int = 1):
        if n_points < 1 or dim < 1:
            raise InputError(f"Quadrature needs n_points >= 1 and dim >= 1, got: {n_points}, {dim}")
        t, w = roots_hermitenorm(n_points)
        w = w / math.sqrt(2.0 * math.pi)
        self.n_points = n_points
        self.dim = dim
        grids = np.meshgrid(*([t] * dim), indexing='ij')
        self.nodes = np.stack([g.reshape(-1) for g in grids], axis=1)
        weight_grids = np.meshgrid(*([w] * dim), indexing='ij')
        self.weights = np.prod(np.stack([g.reshape(-1) for g in weight_grids], axis=1), axis=1)

    @classmethod
    def for_degree(cls, degree: int, dim: int) -> 'GaussHermiteQuadrature':
        """Rule with degree + 4 nodes per axis"""
        return cls(degree + 4, dim)

    def expectation(self, fn: Callable[[np.ndarray], np.ndarray]) -> Union[float, np.ndarray]:
        """E[fn(x)]; fn maps (N, dim) nodes to (N,) or (N, ...) values"""
        values = np.asarray(fn(self.nodes), dtype=float)
        result = np.tensordot(self.weights, values, axes=(0, 0))
        if np.ndim(result) == 0:
            return float(result)
        return result

    def gram_matrix(self, indices: Union[np.ndarray, Sequence[MultiIndex]]) -> np.ndarray:
        features = feature_map(self.nodes, indices)
        return features.T @ (self.weights[:, None] * features)
