#!/usr/bin/env python3
"""
Regression Solver for the Gaussian proper agnostic learner
Minimizes the truncated empirical objective

    F(c) = mean_i loss_i(c) + mu * ||c||^2 + nu * ||A(c)||_*

over the ball ||c|| <= R = sqrt(log 2 / mu), where loss_i is the logistic loss
of y_i <c, Phi(x_i)> when ||Phi(x_i)|| <= Lambda and log 2 otherwise, and A(c)
is the gradient coefficient matrix.

Every returned solution carries a certified upper bound on F(c) - min F. Two
lower bounds on min F are available at any point: the Fenchel bound built from
a spectral-norm-one matrix Z, and for the subgradient method the strong
convexity averaging bound. The solver keeps the best lower bound seen and stops
once the incumbent is within opt_tolerance of it.
"""

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from functools import cached_property
from typing import List, Optional, Tuple, Union

import numpy as np
from scipy.special import expit

from hermite_engine import (ArrayLike, GradientMatrix, PolyCoeffs, feature_map, gradient_operator,
                            multi_index_array, num_multi_indices)
from learner_errors import CertificationError, InputError
from synthetic_data_manager import LabeledDataset

logger = logging.getLogger(__name__)

LOG2 = math.log(2.0)
CHUNK_ROWS = 4096
SVD_RELATIVE_TOL = 1e-12
POWER_ITERATIONS = 30


# ============================================================================
# LOSS HELPERS
# ============================================================================

def logistic_loss(v: ArrayLike) -> np.ndarray:
    """log(1 + exp(-v)), overflow-safe"""
    return np.logaddexp(0.0, -np.asarray(v, dtype=float))


def logistic_psi(u: ArrayLike) -> np.ndarray:
    """psi(u) = 1 / (1 + e^u), the negative derivative of the logistic loss"""
    return expit(-np.asarray(u, dtype=float))


def logistic_phi(u: ArrayLike) -> np.ndarray:
    """phi(u) = 1/2 - psi(u); odd, so y psi(y u) = y/2 - phi(u) for y = +/-1"""
    return 0.5 - logistic_psi(u)


def nuclear_norm(A: Union[GradientMatrix, np.ndarray]) -> float:
    """Sum of singular values"""
    A = A.entries if isinstance(A, GradientMatrix) else np.asarray(A, dtype=float)
    if not np.all(np.isfinite(A)):
        raise InputError("Nuclear norm of a matrix with non-finite entries")
    if A.size == 0:
        return 0.0
    return float(np.sum(np.linalg.svd(A, compute_uv=False)))


def nuclear_norm_subgradient(A: Union[GradientMatrix, np.ndarray]) -> np.ndarray:
    """U V^T from a thin SVD, dropping singular values below 1e-12 * sigma_max"""
    A = A.entries if isinstance(A, GradientMatrix) else np.asarray(A, dtype=float)
    if not np.all(np.isfinite(A)):
        raise InputError("Nuclear norm subgradient of a matrix with non-finite entries")
    if A.size == 0:
        return np.zeros_like(A)
    U, s, Vt = np.linalg.svd(A, full_matrices=False)
    if s[0] == 0.0:
        return np.zeros_like(A)
    keep = s > SVD_RELATIVE_TOL * s[0]
    return U[:, keep] @ Vt[keep]


def smoothed_nuclear_norm(A: Union[GradientMatrix, np.ndarray], delta: float) -> Tuple[float, np.ndarray]:
    """
    Huber-smoothed nuclear norm and its gradient

    Each singular value s contributes s^2 / (2 delta) when s <= delta and
    s - delta/2 otherwise, so the value undershoots ||A||_* by at most
    delta/2 per singular value.

    Returns:
        (value, gradient U diag(min(s/delta, 1)) V^T)
    """
    if delta <= 0:
        raise InputError(f"Smoothing width must be positive, got: {delta}")
    A = A.entries if isinstance(A, GradientMatrix) else np.asarray(A, dtype=float)
    U, s, Vt = np.linalg.svd(A, full_matrices=False)
    value = float(np.sum(np.where(s <= delta, s * s / (2.0 * delta), s - delta / 2.0)))
    return value, (U * np.minimum(s / delta, 1.0)) @ Vt


# ============================================================================
# PROBLEM
# ============================================================================

@dataclass
class RegressionProblem:
    """Empirical truncated objective on one dataset"""
    dataset: LabeledDataset
    degree: int
    mu: float = 1.0 / 128.0
    nu: float = 0.0
    opt_tolerance: float = 1e-4
    eps_target: float = 0.1
    seed: int = 0
    trunc_radius_override: Optional[float] = None
    max_iterations: int = 20000
    method: str = 'accelerated'
    threads: int = 1
    log_every: int = 500

    METHODS = ('accelerated', 'subgradient')

    def __post_init__(self):
        if self.dataset.size == 0:
            raise InputError("Regression dataset is empty")
        if not self.mu > 0:
            raise InputError(f"mu must be positive, got: {self.mu}")
        if not self.nu >= 0:
            raise InputError(f"nu must be non-negative, got: {self.nu}")
        if not self.opt_tolerance > 0:
            raise InputError(f"opt_tolerance must be positive, got: {self.opt_tolerance}")
        if not self.eps_target > 0:
            raise InputError(f"eps_target must be positive, got: {self.eps_target}")
        if self.trunc_radius_override is not None and not self.trunc_radius_override > 0:
            raise InputError(f"Truncation radius must be positive, got: {self.trunc_radius_override}")
        if self.method not in self.METHODS:
            raise InputError(f"Unknown solver method: {self.method}. Available: {list(self.METHODS)}")
        if self.max_iterations < 1:
            raise InputError(f"max_iterations must be at least 1, got: {self.max_iterations}")

    @property
    def dim(self) -> int:
        return self.dataset.dim

    @property
    def n_coeffs(self) -> int:
        return num_multi_indices(self.dim, self.degree)

    @property
    def ball_radius(self) -> float:
        return math.sqrt(LOG2 / self.mu)

    @property
    def trunc_radius(self) -> float:
        if self.trunc_radius_override is not None:
            return float(self.trunc_radius_override)
        return 8.0 * self.ball_radius * self.n_coeffs / self.eps_target

    @cached_property
    def features(self) -> np.ndarray:
        return feature_map(self.dataset.points, multi_index_array(self.dim, self.degree))

    @cached_property
    def inside(self) -> np.ndarray:
        """Rows whose feature vector lies within the truncation radius"""
        return np.linalg.norm(self.features, axis=1) <= self.trunc_radius


def truncated_pointwise_loss(c: PolyCoeffs, x: ArrayLike, y: int, trunc_radius: float) -> float:
    if not trunc_radius > 0:
        raise InputError(f"Truncation radius must be positive, got: {trunc_radius}")
    phi = feature_map(np.asarray(x, dtype=float), multi_index_array(c.dim, c.degree))
    if np.linalg.norm(phi) > trunc_radius:
        return LOG2
    return float(logistic_loss(y * float(phi @ c.coeffs)))


# ============================================================================
# SOLVER
# ============================================================================

@dataclass
class SolveResult:
    coeffs: PolyCoeffs
    objective_value: float
    iterations: int
    trace: List[float] = field(default_factory=list)
    certified_gap: float = float('inf')
    certified: bool = False
    method: str = 'accelerated'
    lower_bound: float = float('-inf')

    def summary(self) -> dict:
        return {
            'method': self.method,
            'objective_value': self.objective_value,
            'iterations': self.iterations,
            'certified_gap': self.certified_gap,
            'certified': self.certified,
            'lower_bound': self.lower_bound,
            'coeff_norm': float(np.linalg.norm(self.coeffs.coeffs)),
            'trace_head': self.trace[:3],
            'trace_tail': self.trace[-3:],
        }


class RegressionSolver:
    """
    Certified minimizer of the truncated objective over B_R
    """

    def __init__(self, problem: RegressionProblem):
        self.problem = problem
        self.op = gradient_operator(problem.dim, problem.degree)
        self.features = problem.features
        self.inside = problem.inside
        self.labels = problem.dataset.labels.astype(float)
        self.n = problem.dataset.size
        self.n_outside = int(np.sum(~self.inside))
        self.rank_cap = max(1, min(self.op.n_rows, self.op.n_cols))
        self._chunks = [(s, min(s + CHUNK_ROWS, self.n)) for s in range(0, self.n, CHUNK_ROWS)]
        self._executor = ThreadPoolExecutor(max_workers=max(1, problem.threads))

    def close(self):
        self._executor.shutdown(wait=True)

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()

    # ------------------------------------------------------------------ pieces

    def smooth_part(self, c: np.ndarray) -> Tuple[float, np.ndarray]:
        """Mean truncated loss plus mu ||c||^2, with gradient"""

        def chunk(bounds: Tuple[int, int]) -> Tuple[float, np.ndarray]:
            start, stop = bounds
            Phi = self.features[start:stop]
            mask = self.inside[start:stop]
            y = self.labels[start:stop]
            margins = y * (Phi @ c)
            loss = float(np.sum(logistic_loss(margins[mask])))
            weights = np.where(mask, -y * logistic_psi(margins), 0.0)
            return loss, Phi.T @ weights

        parts = list(self._executor.map(chunk, self._chunks))
        loss_sum = sum(p[0] for p in parts) + self.n_outside * LOG2
        grad = parts[0][1].copy()
        for p in parts[1:]:
            grad += p[1]
        mu = self.problem.mu
        return loss_sum / self.n + mu * float(c @ c), grad / self.n + 2.0 * mu * c

    def nuclear_part(self, c: np.ndarray) -> Tuple[float, np.ndarray, np.ndarray, np.ndarray]:
        """(||A(c)||_*, A(c), U, s, Vt) pieces needed by both methods"""
        A = self.op.apply(c)
        U, s, Vt = np.linalg.svd(A, full_matrices=False)
        return float(np.sum(s)), A, U, s, Vt

    def objective(self, c: np.ndarray) -> float:
        f, _ = self.smooth_part(c)
        if self.problem.nu == 0:
            return f
        return f + self.problem.nu * self.nuclear_part(c)[0]

    def project(self, c: np.ndarray) -> np.ndarray:
        norm = np.linalg.norm(c)
        R = self.problem.ball_radius
        return c if norm <= R else c * (R / norm)

    def dual_certificate(self, grad_f: np.ndarray, nuc: float, A: np.ndarray, Z: Optional[np.ndarray]) -> float:
        """nu (||A||_* - <Z, A>) + ||grad f + nu A*(Z)||^2 / (4 mu)"""
        nu, mu = self.problem.nu, self.problem.mu
        if nu == 0 or Z is None:
            return float(grad_f @ grad_f) / (4.0 * mu)
        residual = grad_f + nu * self.op.adjoint(Z)
        return nu * max(nuc - float(np.sum(Z * A)), 0.0) + float(residual @ residual) / (4.0 * mu)

    def best_certificate(self, grad_f: np.ndarray, nuc: float, A: np.ndarray, U: np.ndarray, s: np.ndarray,
                         Vt: np.ndarray, delta: Optional[float] = None) -> float:
        if self.problem.nu == 0:
            return self.dual_certificate(grad_f, nuc, A, None)
        candidates = []
        if s.size and s[0] > 0:
            keep = s > SVD_RELATIVE_TOL * s[0]
            candidates.append(U[:, keep] @ Vt[keep])
        else:
            candidates.append(np.zeros_like(A))
        if delta is not None:
            candidates.append((U * np.minimum(s / delta, 1.0)) @ Vt)
        return min(self.dual_certificate(grad_f, nuc, A, Z) for Z in candidates)

    def feature_lipschitz(self) -> float:
        """Power-iteration estimate of lambda_max(Phi_in^T Phi_in) / (4 n)"""
        Phi = self.features[self.inside]
        if Phi.shape[0] == 0:
            return 0.0
        rng = np.random.default_rng(self.problem.seed)
        v = rng.standard_normal(Phi.shape[1])
        v /= np.linalg.norm(v)
        value = 0.0
        for _ in range(POWER_ITERATIONS):
            w = Phi.T @ (Phi @ v)
            value = float(np.linalg.norm(w))
            if value == 0.0:
                break
            v = w / value
        return value / (4.0 * self.n)

    def gradient_bound(self) -> float:
        """Bound G on subgradient norms over B_R"""
        norms = np.linalg.norm(self.features, axis=1)
        loss_bound = float(np.sum(norms[self.inside])) / self.n
        nuclear_bound = self.problem.nu * self.op.operator_norm_bound * math.sqrt(self.rank_cap)
        return loss_bound + 2.0 * self.problem.mu * self.problem.ball_radius + nuclear_bound

    # ----------------------------------------------------------------- methods

    def solve(self) -> SolveResult:
        prob = self.problem
        logger.info(f"🚀 Solving regression: n={self.n}, d={prob.dim}, k={prob.degree}, m={prob.n_coeffs}, "
                    f"mu={prob.mu:.4g}, nu={prob.nu:.4g}, tol={prob.opt_tolerance:.3g}, method={prob.method}")
        if self.n_outside:
            logger.info(f"📊 {self.n_outside} of {self.n} points truncated at Lambda={prob.trunc_radius:.4g}")
        if prob.method == 'subgradient':
            result = self._solve_subgradient()
        else:
            result = self._solve_accelerated()
        status = "certified" if result.certified else "NOT certified"
        logger.info(f"✅ Solver finished after {result.iterations} iterations: F={result.objective_value:.8f}, "
                    f"gap<={result.certified_gap:.3e} ({status})")
        return result

    def _result(self, best_c, best_value, lower, iterations, trace) -> SolveResult:
        gap = max(best_value - lower, 0.0)
        return SolveResult(
            coeffs=PolyCoeffs(self.problem.dim, self.problem.degree, best_c),
            objective_value=best_value,
            iterations=iterations,
            trace=trace,
            certified_gap=gap,
            certified=gap <= self.problem.opt_tolerance,
            method=self.problem.method,
            lower_bound=lower,
        )

    def _solve_accelerated(self) -> SolveResult:
        prob = self.problem
        nu, mu, tol = prob.nu, prob.mu, prob.opt_tolerance
        delta = tol / (nu * self.rank_cap) if nu > 0 else None

        def composite(c: np.ndarray):
            f, g = self.smooth_part(c)
            nuc, A, U, s, Vt = self.nuclear_part(c)
            smooth_value, smooth_grad = f, g
            if nu > 0:
                huber = float(np.sum(np.where(s <= delta, s * s / (2.0 * delta), s - delta / 2.0)))
                smooth_value = f + nu * huber
                smooth_grad = g + nu * self.op.adjoint((U * np.minimum(s / delta, 1.0)) @ Vt)
            return smooth_value, smooth_grad, f + nu * nuc, (g, nuc, A, U, s, Vt)

        L = self.feature_lipschitz() + 2.0 * mu
        if nu > 0:
            L += nu * prob.degree / delta

        x = np.zeros(prob.n_coeffs)
        fx, _, Fx, pieces = composite(x)
        best_c, best_value = x, Fx
        lower = Fx - self.best_certificate(*pieces, delta=delta)
        trace = [best_value]
        y = x
        iterations = 0

        while best_value - lower > tol and iterations < prob.max_iterations:
            iterations += 1
            fy, gy, _, _ = composite(y)
            while True:
                x_new = self.project(y - gy / L)
                f_new, _, F_new, pieces = composite(x_new)
                step = x_new - y
                if f_new <= fy + float(gy @ step) + 0.5 * L * float(step @ step) + 1e-12 * abs(fy):
                    break
                L *= 2.0

            q = math.sqrt(L / (2.0 * mu))
            beta = (q - 1.0) / (q + 1.0)
            if f_new > fx:
                y = x_new
            else:
                y = x_new + beta * (x_new - x)
            x, fx = x_new, f_new

            lower = max(lower, F_new - self.best_certificate(*pieces, delta=delta))
            if F_new < best_value:
                best_c, best_value = x_new, F_new
            trace.append(best_value)
            if iterations % prob.log_every == 0:
                logger.debug(f"iter {iterations}: F={best_value:.10f} gap<={best_value - lower:.3e} L={L:.4g}")

        return self._result(best_c, best_value, lower, iterations, trace)

    def _solve_subgradient(self) -> SolveResult:
        prob = self.problem
        nu, mu, tol = prob.nu, prob.mu, prob.opt_tolerance
        G = self.gradient_bound()
        needed = max(1, int(math.ceil(G * G / (mu * tol))) - 1)
        budget = min(needed, prob.max_iterations)
        logger.info(f"📊 Subgradient bound G={G:.4g}: averaging certificate needs {needed} iterations, budget {budget}")

        c = np.zeros(prob.n_coeffs)
        avg = np.zeros_like(c)
        weight_sum = 0.0
        best_c, best_value = c, float('inf')
        lower = float('-inf')
        trace: List[float] = []
        iterations = 0

        while iterations < budget:
            iterations += 1
            f, g = self.smooth_part(c)
            nuc, A, U, s, Vt = self.nuclear_part(c)
            F = f + nu * nuc
            lower = max(lower, F - self.best_certificate(g, nuc, A, U, s, Vt))
            if F < best_value:
                best_c, best_value = c, F

            # weights proportional to t
            weight_sum += iterations
            avg = avg + (iterations / weight_sum) * (c - avg)

            direction = g
            if nu > 0 and s.size and s[0] > 0:
                keep = s > SVD_RELATIVE_TOL * s[0]
                direction = g + nu * self.op.adjoint(U[:, keep] @ Vt[keep])
            c = self.project(c - direction / (mu * (iterations + 1)))

            if iterations % 10 == 0 or iterations == budget:
                f_avg, g_avg = self.smooth_part(avg)
                nuc_avg, A_avg, U_a, s_a, Vt_a = self.nuclear_part(avg)
                F_avg = f_avg + nu * nuc_avg
                lower = max(lower, F_avg - self.best_certificate(g_avg, nuc_avg, A_avg, U_a, s_a, Vt_a),
                            F_avg - G * G / (mu * (iterations + 1)))
                if F_avg < best_value:
                    best_c, best_value = avg.copy(), F_avg
            trace.append(best_value)
            if iterations % prob.log_every == 0:
                logger.debug(f"iter {iterations}: F={best_value:.10f} gap<={best_value - lower:.3e}")
            if best_value - lower <= tol:
                break

        return self._result(best_c, best_value, lower, iterations, trace)


def empirical_objective(c: PolyCoeffs, prob: RegressionProblem) -> float:
    """Truncated empirical loss + mu ||c||^2 + nu ||A(c)||_*"""
    if c.dim != prob.dim or c.degree != prob.degree:
        raise InputError(f"Polynomial (d={c.dim}, k={c.degree}) does not match problem (d={prob.dim}, k={prob.degree})")
    with RegressionSolver(prob) as solver:
        return solver.objective(np.asarray(c.coeffs, dtype=float))


def solve(prob: RegressionProblem) -> SolveResult:
    """
    Minimize the truncated objective over B_R to within opt_tolerance

    Raises:
        CertificationError: carrying the best incumbent when the tolerance is not
            certified within max_iterations
    """
    with RegressionSolver(prob) as solver:
        result = solver.solve()
    if not result.certified:
        raise CertificationError(
            f"Certified gap {result.certified_gap:.3e} exceeds tolerance {prob.opt_tolerance:.3e} "
            f"after {result.iterations} iterations",
            result=result, stage='solve')
    return result
