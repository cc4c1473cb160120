#!/usr/bin/env python3
"""
Approximation Oracle
Structural checks behind the learner: classifiers averaged over the directions
outside a subspace, Ornstein-Uhlenbeck smoothing with truncation of Hermite
expansions, and Gaussian Poincare inequalities restricted to a set of directions.

Nothing here is used to pick a hypothesis; the pipeline reports the residuals
and the verify suites assert the inequalities.
"""

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, Tuple, Union

import numpy as np
from numpy.polynomial.legendre import leggauss
from scipy.linalg import null_space, orth
from scipy.special import ndtr, ndtri
from scipy.stats import qmc

from cover_search import BooleanHypothesis, Halfspace, Hypothesis
from hermite_engine import (GaussHermiteQuadrature, PolyCoeffs, feature_map, hermite_function_table,
                            multi_index_array)
from learner_errors import InputError
from spectral_reduction import Subspace, influence_matrix
from synthetic_data_manager import domain_generator

logger = logging.getLogger(__name__)

ZERO_SCALE_TOL = 1e-12
MC_CHUNK = 65536
QMC_CHUNK = 65536
ORTHONORMAL_TOL = 1e-10
# Integration window for univariate Gaussian expectations; mass beyond it is below 1e-32
TAIL_CUTOFF = 12.0

GSA_FACTS = {
    'halfspace': lambda K: 1.0 / math.sqrt(2.0 * math.pi),
    'boolean': lambda K: K / math.sqrt(2.0 * math.pi),
    'intersection': lambda K: math.sqrt(2.0 * math.log(K)) + 1.0 if K > 1 else 1.0 / math.sqrt(2.0 * math.pi),
}


# ============================================================================
# AVERAGED CLASSIFIERS
# ============================================================================

def _split_normal(normal: np.ndarray, V: Subspace) -> Tuple[np.ndarray, np.ndarray]:
    w_in = V.project(normal) if V.rank else np.zeros_like(normal)
    return w_in, normal - w_in


def averaged_halfspace_eval(f: Halfspace, V: Subspace, x: np.ndarray) -> Union[float, np.ndarray]:
    """
    f_V(x) = E_z[f(x_perp + z xi)] in closed form

    With w_V the part of the normal inside V and s = ||w - w_V||, the average is
    2 Phi((<w_V, x> + t) / s) - 1, and f itself when s = 0.
    """
    X = np.asarray(x, dtype=float)
    single = X.ndim == 1
    X = np.atleast_2d(X)
    if X.shape[1] != f.dim or V.dim != f.dim:
        raise InputError(f"Dimension mismatch: point {X.shape[1]}, halfspace {f.dim}, subspace {V.dim}")
    if f.is_constant:
        values = np.full(X.shape[0], float(f.constant_sign))
    else:
        w_in, w_out = _split_normal(f.normal, V)
        s = float(np.linalg.norm(w_out))
        if s <= ZERO_SCALE_TOL:
            values = f.predict(X).astype(float)
        else:
            values = 2.0 * ndtr((X @ w_in + f.threshold) / s) - 1.0
    return float(values[0]) if single else values


def averaged_boolean_eval(f: BooleanHypothesis, V: Subspace, x: np.ndarray, n_mc: int = 10000,
                          seed: int = 0, threads: int = 1) -> Union[float, np.ndarray]:
    """
    Monte-Carlo f_V(x) = E_z[f(x_{W-perp} + z)] with z Gaussian in
    W = span of the normals' components outside V

    The same n_mc draws are shared by every point; draws come from per-chunk
    Philox streams, so the estimate does not depend on the thread count.
    """
    if n_mc < 1:
        raise InputError(f"n_mc must be at least 1, got: {n_mc}")
    X = np.asarray(x, dtype=float)
    single = X.ndim == 1
    X = np.atleast_2d(X)

    normals = np.stack([h.normal for h in f.halfspaces], axis=1)
    outside = normals - (V.projector() @ normals if V.rank else 0.0)
    if np.max(np.linalg.norm(outside, axis=0)) <= ZERO_SCALE_TOL:
        values = f.predict(X).astype(float)
        return float(values[0]) if single else values

    W = orth(outside)
    X_perp = X - (X @ W) @ W.T
    base = X_perp @ normals + np.array([h.threshold for h in f.halfspaces])
    spread = W.T @ normals
    weights = 1 << np.arange(f.K, dtype=np.int64)
    starts = list(range(0, n_mc, MC_CHUNK))

    def chunk(index_start: Tuple[int, int]) -> np.ndarray:
        index, start = index_start
        rows = min(MC_CHUNK, n_mc - start)
        G = domain_generator(seed, 'verify', index).standard_normal((rows, W.shape[1]))
        shifts = G @ spread
        totals = np.empty(X.shape[0])
        for i in range(X.shape[0]):
            cells = ((base[i] + shifts) >= 0.0).astype(np.int64) @ weights
            totals[i] = float(np.sum(f.truth_table[cells]))
        return totals

    with ThreadPoolExecutor(max_workers=max(1, threads)) as executor:
        totals = list(executor.map(chunk, enumerate(starts)))
    values = np.sum(totals, axis=0) / n_mc
    return float(values[0]) if single else values


def averaged_eval(f: Hypothesis, V: Subspace, X: np.ndarray, n_mc: int = 10000, seed: int = 0,
                  threads: int = 1) -> np.ndarray:
    if isinstance(f, Halfspace):
        return np.atleast_1d(averaged_halfspace_eval(f, V, X))
    return np.atleast_1d(averaged_boolean_eval(f, V, X, n_mc=n_mc, seed=seed, threads=threads))


def correlation_residual(f: Hypothesis, V: Subspace, data, n_mc: int = 2000, seed: int = 0,
                         threads: int = 1) -> float:
    """Empirical E[(f(x) - f_V(x)) y]"""
    if data.size == 0:
        raise InputError("Correlation residual needs a non-empty dataset")
    difference = f.predict(data.points) - averaged_eval(f, V, data.points, n_mc=n_mc, seed=seed, threads=threads)
    return float(np.mean(difference * data.labels))


def shifted_halfspace(f: Halfspace, V: Subspace, z: float) -> Halfspace:
    """x -> f(x_perp + z xi), a halfspace with normal in V (or a constant)"""
    if f.is_constant:
        return f
    w_in, w_out = _split_normal(f.normal, V)
    shifted_threshold = f.threshold + z * float(np.linalg.norm(w_out))
    norm_in = float(np.linalg.norm(w_in))
    if norm_in <= ZERO_SCALE_TOL:
        return Halfspace.constant(f.dim, 1 if shifted_threshold >= 0 else -1)
    return Halfspace.from_direction(w_in, shifted_threshold / norm_in)


# ============================================================================
# ORNSTEIN-UHLENBECK SMOOTHING
# ============================================================================

@dataclass(frozen=True)
class OUParams:
    rho: float
    trunc_degree: int
    gsa: float = 1.0
    tau: float = 0.1
    c_ou: float = 0.25

    def __post_init__(self):
        if not 0.0 <= self.rho <= 1.0:
            raise InputError(f"rho must lie in [0, 1], got: {self.rho}")
        if self.trunc_degree < 0:
            raise InputError(f"Truncation degree must be non-negative, got: {self.trunc_degree}")


def gsa_upper_bound(kind: str, K: int = 1) -> float:
    """Gaussian surface area bound for the concept class, clipped below at 1"""
    if kind not in GSA_FACTS:
        raise InputError(f"Unknown concept kind: {kind}. Available: {list(GSA_FACTS)}")
    if K < 1:
        raise InputError(f"K must be at least 1, got: {K}")
    return max(1.0, GSA_FACTS[kind](K))


def select_ou_params(gsa: float, tau: float, c_ou: float = 0.25) -> OUParams:
    """
    rho = 1 - c_ou tau^2 / gsa^2 and m = ceil(log(2/tau) / log(1/rho))

    Args:
        gsa: Surface area bound (>= 1)
        tau: Target L1 accuracy, 0 < tau <= 1/2
        c_ou: Smoothing constant
    """
    if gsa < 1.0:
        raise InputError(f"gsa must be at least 1, got: {gsa}")
    if not 0.0 < tau <= 0.5:
        raise InputError(f"tau must lie in (0, 1/2], got: {tau}")
    if not 0.0 < c_ou <= 1.0:
        raise InputError(f"c_ou must lie in (0, 1], got: {c_ou}")
    rho = 1.0 - c_ou * tau * tau / (gsa * gsa)
    m = int(math.ceil(math.log(2.0 / tau) / -math.log(rho)))
    return OUParams(rho=rho, trunc_degree=m, gsa=gsa, tau=tau, c_ou=c_ou)


def ou_smooth_truncate(f_coeffs: Union[PolyCoeffs, np.ndarray], params: OUParams, exact: bool = False) -> PolyCoeffs:
    """
    Scale coefficient alpha by rho^|alpha| and drop degrees above m

    A 1-D array is read as the univariate expansion c_0, c_1, ... and the result
    is a d = 1 PolyCoeffs. Unless exact is set (the input is the whole
    polynomial), the input must carry every coefficient up to degree m.
    """
    if not isinstance(f_coeffs, PolyCoeffs):
        values = np.asarray(f_coeffs, dtype=float).reshape(-1)
        if values.size == 0:
            raise InputError("Univariate coefficient list is empty")
        f_coeffs = PolyCoeffs(1, values.size - 1, values)

    m = params.trunc_degree
    if f_coeffs.degree < m and not exact:
        raise InputError(f"Coefficients known up to degree {f_coeffs.degree}, smoothing needs degree {m}")
    out_degree = min(m, f_coeffs.degree)
    degrees = multi_index_array(f_coeffs.dim, out_degree).sum(axis=1)
    kept = f_coeffs.coeffs[:degrees.size]
    return PolyCoeffs(f_coeffs.dim, out_degree, kept * params.rho ** degrees)


def sign_hermite_coefficients(b: float, degree: int) -> np.ndarray:
    """
    Hermite coefficients of sign(x + b)

    c_0 = 2 Phi(b) - 1 and c_j = 2 phi(b) H_{j-1}(-b) / sqrt(j), evaluated
    through the Hermite functions so that degrees in the thousands stay finite.
    """
    if degree < 0:
        raise InputError(f"Degree must be non-negative, got: {degree}")
    coeffs = np.empty(degree + 1)
    coeffs[0] = 2.0 * ndtr(b) - 1.0
    if degree >= 1:
        root_density = hermite_function_table(np.array(-b), 0)[..., 0]
        functions = hermite_function_table(np.array(-b), degree - 1)
        j = np.arange(1, degree + 1)
        coeffs[1:] = 2.0 * root_density * functions / np.sqrt(j)
    return coeffs


def _panel_rule(lo: float, hi: float, n_panels: int, n_nodes: int = 16) -> Tuple[np.ndarray, np.ndarray]:
    t, w = leggauss(n_nodes)
    edges = np.linspace(lo, hi, n_panels + 1)
    half = (edges[1:] - edges[:-1]) / 2.0
    mid = (edges[1:] + edges[:-1]) / 2.0
    nodes = (mid[:, None] + half[:, None] * t[None, :]).reshape(-1)
    weights = (half[:, None] * w[None, :]).reshape(-1)
    return nodes, weights


def _split_rule(jump: float, degree: int) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Gauss-Legendre panels on [-cutoff, jump] and [jump, cutoff]; mask marks the right side"""
    n_panels = max(64, 32 * int(math.ceil(math.sqrt(degree + 1))))
    jump = float(np.clip(jump, -TAIL_CUTOFF, TAIL_CUTOFF))
    left_n, left_w = _panel_rule(-TAIL_CUTOFF, jump, n_panels)
    right_n, right_w = _panel_rule(jump, TAIL_CUTOFF, n_panels)
    nodes = np.concatenate([left_n, right_n])
    weights = np.concatenate([left_w, right_w])
    right = np.concatenate([np.zeros(left_n.size, dtype=bool), np.ones(right_n.size, dtype=bool)])
    return nodes, weights, right


def _series_times_density(coeffs: np.ndarray, t: np.ndarray) -> np.ndarray:
    """sum_j c_j H_j(t) phi(t), accumulated along the Hermite-function recurrence"""
    root = (2.0 * np.pi) ** -0.25 * np.exp(-t * t / 4.0)
    prev, cur = np.zeros_like(t), root.copy()
    total = coeffs[0] * cur
    for j in range(1, coeffs.size):
        prev, cur = cur, (t * cur - math.sqrt(j - 1) * prev) / math.sqrt(j)
        total += coeffs[j] * cur
    return total * root


def sign_hermite_coefficients_quadrature(b: float, degree: int) -> np.ndarray:
    """c_j = 2 * integral of H_j phi over [-b, inf), by panels starting at the jump"""
    nodes, weights, right = _split_rule(-b, degree)
    nodes, weights = nodes[right], weights[right]
    coeffs = np.empty(degree + 1)
    root = (2.0 * np.pi) ** -0.25 * np.exp(-nodes * nodes / 4.0)
    prev, cur = np.zeros_like(nodes), root.copy()
    coeffs[0] = 2.0 * float(np.sum(weights * cur * root)) - 1.0
    for j in range(1, degree + 1):
        prev, cur = cur, (nodes * cur - math.sqrt(j - 1) * prev) / math.sqrt(j)
        coeffs[j] = 2.0 * float(np.sum(weights * cur * root))
    return coeffs


def univariate_l1_error(coeffs: Union[PolyCoeffs, np.ndarray], b: float) -> float:
    """E|sign(x + b) - S(x)| for a univariate Hermite expansion S"""
    values = coeffs.coeffs if isinstance(coeffs, PolyCoeffs) else np.asarray(coeffs, dtype=float)
    nodes, weights, right = _split_rule(-b, values.size)
    density = np.exp(-nodes * nodes / 2.0) / math.sqrt(2.0 * math.pi)
    target = np.where(right, 1.0, -1.0) * density
    return float(np.sum(weights * np.abs(target - _series_times_density(values, nodes))))


def univariate_gradient_energy(coeffs: Union[PolyCoeffs, np.ndarray]) -> float:
    """E[S'(x)^2] = sum_j j c_j^2"""
    values = coeffs.coeffs if isinstance(coeffs, PolyCoeffs) else np.asarray(coeffs, dtype=float)
    return float(np.dot(np.arange(values.size), values ** 2))


def estimate_hermite_coefficients(fn: Callable[[np.ndarray], np.ndarray], d: int, degree: int,
                                  n_points: int = 1 << 20, seed: int = 0) -> PolyCoeffs:
    """
    Scrambled-Sobol estimate of E[fn(x) H_alpha(x)] for |alpha| <= degree

    Restricted to d <= 3 and degree <= 12.
    """
    if not 1 <= d <= 3 or not 0 <= degree <= 12:
        raise InputError(f"Coefficient estimation supports d <= 3 and degree <= 12, got d={d}, degree={degree}")
    indices = multi_index_array(d, degree)
    sobol = qmc.Sobol(d=d, scramble=True, seed=seed)
    u = sobol.random_base2(m=max(1, int(math.ceil(math.log2(n_points)))))
    X = ndtri(np.clip(u, 1e-15, 1.0 - 1e-15))
    total = np.zeros(indices.shape[0])
    for start in range(0, X.shape[0], QMC_CHUNK):
        block = X[start:start + QMC_CHUNK]
        total += np.asarray(fn(block), dtype=float) @ feature_map(block, indices)
    logger.debug(f"QMC coefficient estimate: d={d}, degree={degree}, {X.shape[0]} points")
    return PolyCoeffs(d, degree, total / X.shape[0])


# ============================================================================
# POINCARE CHECKS
# ============================================================================

def _direction_matrix(directions: Union[Subspace, np.ndarray], dim: int) -> np.ndarray:
    D = directions.basis if isinstance(directions, Subspace) else np.asarray(directions, dtype=float)
    if D.ndim == 1:
        D = D[:, None]
    if D.shape[0] != dim:
        raise InputError(f"Directions live in R^{D.shape[0]}, polynomial in R^{dim}")
    if D.shape[1] and np.max(np.abs(D.T @ D - np.eye(D.shape[1]))) > ORTHONORMAL_TOL:
        raise InputError("Poincare directions must be orthonormal")
    return D


def rotated_coefficients(p: PolyCoeffs, Q: np.ndarray) -> PolyCoeffs:
    """Coefficients of u -> P(Q u) for orthogonal Q, by exact Gauss-Hermite quadrature"""
    rule = GaussHermiteQuadrature.for_degree(p.degree, p.dim)
    indices = multi_index_array(p.dim, p.degree)
    values = feature_map(rule.nodes @ Q.T, indices) @ p.coeffs
    basis = feature_map(rule.nodes, indices)
    return PolyCoeffs(p.dim, p.degree, basis.T @ (rule.weights * values))


def poincare_check(p: PolyCoeffs, directions: Union[Subspace, np.ndarray]) -> Tuple[float, float]:
    """
    (lhs, rhs) of E[(P - E[P | x_perp])^2] <= sum_i xi_i^T M(P) xi_i

    After rotating so the directions become the first s axes, the conditional
    mean keeps exactly the coefficients with no weight on those axes.
    """
    D = _direction_matrix(directions, p.dim)
    s = D.shape[1]
    if s == 0:
        return 0.0, 0.0
    Q = np.concatenate([D, null_space(D.T)], axis=1) if s < p.dim else D
    rotated = rotated_coefficients(p, Q)
    moving = multi_index_array(p.dim, p.degree)[:, :s].sum(axis=1) > 0
    lhs = float(np.sum(rotated.coeffs[moving] ** 2))
    rhs = float(np.trace(D.T @ influence_matrix(p).matrix @ D))
    return lhs, rhs


def conditional_poincare_check(p: PolyCoeffs, direction: np.ndarray) -> Tuple[float, float]:
    """Single-direction case: Var of P along xi given the rest vs E[(d_xi P)^2]"""
    direction = np.asarray(direction, dtype=float).reshape(-1)
    return poincare_check(p, direction[:, None])
