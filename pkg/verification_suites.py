#!/usr/bin/env python3
"""
Verification Suites
Property checks for every module, grouped into named suites that the CLI
`verify` command runs and reports as JSON.

Suites: hermite, nuclear, spectral, poincare, ou, cover, cellerm, averaging.
Every suite is seeded; `quick` shrinks instance counts for smoke runs.
"""

import itertools
import logging
import math
import time
from dataclasses import asdict, dataclass, field
from typing import Any, Callable, Dict, List, Optional, Sequence

import numpy as np
from numpy.polynomial import hermite_e
from scipy.special import ndtri
from scipy.stats import qmc

from approximation_oracle import (averaged_boolean_eval, averaged_halfspace_eval, gsa_upper_bound, ou_smooth_truncate,
                                  poincare_check, select_ou_params, sign_hermite_coefficients,
                                  sign_hermite_coefficients_quadrature, univariate_gradient_energy,
                                  univariate_l1_error)
from cover_search import (COVER_SIZE_CONSTANT, DISAGREEMENT_CONSTANT, BooleanHypothesis, Halfspace, build_cover,
                          cell_boolean_erm, cell_indices, threshold_grid)
from hermite_engine import (GaussHermiteQuadrature, PolyCoeffs, enumerate_multi_indices, gradient_coeff_matrix,
                            gradient_energy, hermite_eval, multi_index_array, multi_index_position,
                            num_multi_indices, poly_eval, poly_gradient_eval)
from learner_errors import InputError
from regression_solver import logistic_psi, logistic_phi, nuclear_norm, smoothed_nuclear_norm
from spectral_reduction import (InfluenceMatrix, Subspace, dimension_bound, influence_matrix, rank_trace_bound,
                                top_subspace, trace_sqrt)
from synthetic_data_manager import LabeledDataset

logger = logging.getLogger(__name__)

# E[S'^2] <= OU_GRADIENT_CONSTANT * gsa^2 / tau for the smoothed univariate sign
OU_GRADIENT_CONSTANT = 10.0


@dataclass
class CheckResult:
    suite: str
    name: str
    passed: bool
    value: Optional[float] = None
    bound: Optional[float] = None
    detail: Optional[str] = None


@dataclass
class SuiteRecorder:
    suite: str
    checks: List[CheckResult] = field(default_factory=list)

    def record(self, name: str, passed: bool, value: Optional[float] = None, bound: Optional[float] = None,
               detail: Optional[str] = None) -> bool:
        self.checks.append(CheckResult(self.suite, name, bool(passed),
                                       None if value is None else float(value),
                                       None if bound is None else float(bound), detail))
        if not passed:
            logger.warning(f"⚠️ [{self.suite}] {name} failed: value={value} bound={bound} {detail or ''}")
        return bool(passed)

    def close(self, name: str, actual: float, expected: float, tol: float) -> bool:
        error = abs(float(actual) - float(expected))
        return self.record(name, error <= tol, value=error, bound=tol)

    def record_all(self, name: str, results: Sequence[bool], worst: Optional[float] = None,
                   bound: Optional[float] = None) -> bool:
        failed = len(results) - int(np.sum(results))
        return self.record(name, failed == 0, value=worst, bound=bound, detail=f"{len(results) - failed}/{len(results)}")


def _random_unit(rng: np.random.Generator, d: int) -> np.ndarray:
    v = rng.standard_normal(d)
    return v / np.linalg.norm(v)


def _random_orthonormal(rng: np.random.Generator, d: int, r: int) -> np.ndarray:
    Q, _ = np.linalg.qr(rng.standard_normal((d, r)))
    return Q


# ============================================================================
# SUITES
# ============================================================================

def verify_hermite(rec: SuiteRecorder, rng: np.random.Generator, quick: bool) -> None:
    rec.record("count C(4,2)", len(enumerate_multi_indices(2, 2)) == 6, value=len(enumerate_multi_indices(2, 2)))
    rec.record("determinism", enumerate_multi_indices(3, 4) == enumerate_multi_indices(3, 4))
    rec.close("H_4(0)", hermite_eval(4, 0.0), math.sqrt(3.0) / (2.0 * math.sqrt(2.0)), 1e-14)

    grid = np.linspace(-4.0, 4.0, 41)
    worst = 0.0
    for j in range(0, 13):
        reference = hermite_e.hermeval(grid, [0.0] * j + [1.0]) / math.sqrt(math.factorial(j))
        worst = max(worst, float(np.max(np.abs(hermite_eval(j, grid) - reference) / np.maximum(1.0, np.abs(reference)))))
    rec.record("recurrence vs hermite_e", worst <= 1e-10, value=worst, bound=1e-10)

    max_k = 4 if quick else 6
    parseval, energy = [], []
    for d in (1, 2, 3):
        for k in range(0, max_k + 1):
            p = PolyCoeffs.random(d, k, rng)
            rule = GaussHermiteQuadrature.for_degree(k, d)
            quad = rule.expectation(lambda X: poly_eval(p, X) ** 2)
            parseval.append(abs(quad - p.l2_norm_squared()))
            grad_quad = rule.expectation(lambda X: np.sum(poly_gradient_eval(p, X) ** 2, axis=1))
            energy.append(abs(grad_quad - gradient_energy(p)))
            energy.append(abs(gradient_energy(p) - gradient_coeff_matrix(p).frobenius_norm_squared()))
    rec.record("parseval", max(parseval) <= 1e-8, value=max(parseval), bound=1e-8)
    rec.record("gradient energy", max(energy) <= 1e-8, value=max(energy), bound=1e-8)

    gram_error = 0.0
    for d in (1, 2, 3):
        indices = multi_index_array(d, 4)
        gram = GaussHermiteQuadrature.for_degree(4, d).gram_matrix(indices)
        gram_error = max(gram_error, float(np.max(np.abs(gram - np.eye(len(indices))))))
    rec.record("orthonormality", gram_error <= 1e-8, value=gram_error, bound=1e-8)

    derivative_error = 0.0
    for d in ((1, 2) if quick else (1, 2, 3)):
        k = 6
        position = multi_index_position(d, k)
        rule = GaussHermiteQuadrature.for_degree(k, d)
        for alpha in enumerate_multi_indices(d, k):
            for i in range(d):
                if alpha.entries[i] == 0:
                    continue
                unit = np.zeros(num_multi_indices(d, k))
                unit[position[alpha.entries]] = 1.0
                p = PolyCoeffs(d, k, unit)
                lower = PolyCoeffs.from_terms(d, k, {alpha.shifted(i, -1).entries: 1.0})
                value = rule.expectation(lambda X: poly_gradient_eval(p, X)[:, i] * poly_eval(lower, X))
                derivative_error = max(derivative_error, abs(value - math.sqrt(alpha.entries[i])))
    rec.record("derivative factor", derivative_error <= 1e-8, value=derivative_error, bound=1e-8)


def verify_nuclear(rec: SuiteRecorder, rng: np.random.Generator, quick: bool) -> None:
    rec.close("identity", nuclear_norm(np.eye(2)), 2.0, 1e-12)
    rec.close("diag(3,4)", nuclear_norm(np.diag([3.0, 4.0])), 7.0, 1e-12)

    A = rng.standard_normal((4, 7))
    eig = np.clip(np.linalg.eigvalsh(A @ A.T), 0.0, None)
    rec.close("nuclear vs eigen", nuclear_norm(A), float(np.sum(np.sqrt(eig))), 1e-10)

    worst = 0.0
    for _ in range(20 if quick else 100):
        d, k = int(rng.integers(1, 4)), int(rng.integers(1, 5))
        p = PolyCoeffs.random(d, k, rng)
        a, b = trace_sqrt(influence_matrix(p)), nuclear_norm(gradient_coeff_matrix(p))
        worst = max(worst, abs(a - b) / max(1.0, b))
    rec.record("trace_sqrt = nuclear", worst <= 1e-10, value=worst, bound=1e-10)

    u = np.linspace(-30.0, 30.0, 1000)
    flip = max(float(np.max(np.abs(y * logistic_psi(y * u) - (y / 2.0 - logistic_phi(u))))) for y in (1.0, -1.0))
    rec.record("label-flip identity", flip <= 1e-12, value=flip, bound=1e-12)

    delta = 0.05
    B = rng.standard_normal((3, 5)) * np.array([1.0, 0.01, 0.001, 2.0, 0.02])
    smooth, _ = smoothed_nuclear_norm(B, delta)
    gap = nuclear_norm(B) - smooth
    rec.record("huber undershoot", -1e-12 <= gap <= 3 * delta / 2 + 1e-12, value=gap, bound=3 * delta / 2)


def verify_spectral(rec: SuiteRecorder, rng: np.random.Generator, quick: bool) -> None:
    exact, traces, rank_trace = [], [], []
    for d in ((2, 3) if quick else (2, 3, 4)):
        for k in range(1, (4 if quick else 5) + 1):
            p = PolyCoeffs.random(d, k, rng)
            M = influence_matrix(p)
            rule = GaussHermiteQuadrature.for_degree(k, d)
            quad = rule.expectation(lambda X: np.einsum('ni,nj->nij', poly_gradient_eval(p, X), poly_gradient_eval(p, X)))
            exact.append(float(np.max(np.abs(quad - M.matrix))))
            traces.append(abs(M.trace() - gradient_energy(p)))
            ts, bound = rank_trace_bound(M)
            # eigenvalues at or below the rank tolerance add at most sqrt(tol) each
            rank_trace.append(ts <= bound * (1 + 1e-12) + d * math.sqrt(1e-10))
    rec.record("M(P) vs quadrature", max(exact) <= 1e-8, value=max(exact), bound=1e-8)
    rec.record("trace = gradient energy", max(traces) <= 1e-10, value=max(traces), bound=1e-10)
    rec.record_all("rank-trace bound", rank_trace)

    V = top_subspace(InfluenceMatrix(np.diag([1.0, 0.001])), 0.01)
    rec.record("top subspace e1", V.rank == 1 and np.allclose(V.basis[:, 0], [1.0, 0.0]), value=V.rank)
    rec.record("zero matrix", top_subspace(InfluenceMatrix(np.zeros((3, 3))), 0.1).rank == 0)
    M = InfluenceMatrix(np.diag([0.5, 0.5, 0.0001]))
    V = top_subspace(M, 0.1)
    rec.record("dimension bound example", V.rank == 2 and V.rank <= dimension_bound(M, 0.1),
               value=V.rank, bound=dimension_bound(M, 0.1))


def verify_poincare(rec: SuiteRecorder, rng: np.random.Generator, quick: bool) -> None:
    results, worst = [], -np.inf
    for _ in range(50 if quick else 500):
        d = int(rng.integers(2, 5))
        k = int(rng.integers(1, 5))
        r = int(rng.integers(1, min(3, d) + 1))
        p = PolyCoeffs.random(d, k, rng)
        lhs, rhs = poincare_check(p, _random_orthonormal(rng, d, r))
        results.append(lhs <= rhs + 1e-10)
        worst = max(worst, lhs - rhs)
    rec.record_all("lhs <= rhs", results, worst=worst, bound=1e-10)

    p = PolyCoeffs.from_terms(3, 1, {(1, 0, 0): 0.6, (0, 1, 0): -0.8})
    xi = _random_unit(rng, 3)
    lhs, rhs = poincare_check(p, xi[:, None])
    rec.close("linear equality", lhs, rhs, 1e-10)


def verify_ou(rec: SuiteRecorder, rng: np.random.Generator, quick: bool) -> None:
    closed = sign_hermite_coefficients(0.7, 40)
    quadrature = sign_hermite_coefficients_quadrature(0.7, 40)
    rec.close("closed form vs quadrature", float(np.max(np.abs(closed - quadrature))), 0.0, 1e-10)

    params = select_ou_params(1.0, 0.1, c_ou=1.0)
    rec.record("select_ou_params example", abs(params.rho - 0.99) < 1e-15 and params.trunc_degree == 299,
               value=params.trunc_degree, bound=299)

    gsa = gsa_upper_bound('halfspace')
    for b in (0.0, 0.5, 1.0):
        for tau in ((0.2,) if quick else (0.1, 0.2)):
            params = select_ou_params(gsa, tau)
            S = ou_smooth_truncate(sign_hermite_coefficients(b, params.trunc_degree), params)
            tag = f"b={b}, tau={tau}"
            rec.record(f"L1 {tag}", univariate_l1_error(S, b) <= tau, value=univariate_l1_error(S, b), bound=tau)
            rec.record(f"L2 {tag}", S.l2_norm_squared() <= 1.0 + 1e-8, value=S.l2_norm_squared(), bound=1.0)
            bound = OU_GRADIENT_CONSTANT * gsa ** 2 / tau
            rec.record(f"gradient {tag}", univariate_gradient_energy(S) <= bound,
                       value=univariate_gradient_energy(S), bound=bound)


def verify_cover(rec: SuiteRecorder, rng: np.random.Generator, quick: bool) -> None:
    d = 4
    rec.record("rank 0", len(build_cover(Subspace.empty(d), 0.25)) == 2)

    V1 = Subspace(np.eye(d)[:, :1])
    cover1 = build_cover(V1, 0.25)
    grid = threshold_grid(0.25)
    rec.record("rank 1 size", len(cover1) == 2 * len(grid) + 2, value=len(cover1), bound=2 * len(grid) + 2)

    eps = 0.1
    V2 = Subspace(_random_orthonormal(rng, d, 2))
    cover2 = build_cover(V2, eps, seed=int(rng.integers(1 << 30)))
    inside = float(np.max(np.linalg.norm(cover2.normals - V2.project(cover2.normals), axis=1)))
    rec.record("normals in V", inside <= 1e-10, value=inside, bound=1e-10)
    size_bound = (COVER_SIZE_CONSTANT / eps) ** 2 * len(threshold_grid(eps)) + 2
    rec.record("size bound", len(cover2) <= size_bound, value=len(cover2), bound=size_bound)

    # disagreement in V coordinates; a subset of candidates upper-bounds the cover minimum
    coords = cover2.normals[2:] @ V2.basis
    thresholds = cover2.thresholds[2:]
    directions = np.unique(np.round(coords, 12), axis=0)
    t_max = float(threshold_grid(eps)[-1])
    samples = rng.standard_normal((20000 if quick else 100000, 2))
    worst = 0.0
    for _ in range(50 if quick else 1000):
        v = _random_unit(rng, 2)
        t = float(rng.uniform(-t_max, t_max))
        target = samples @ v + t >= 0.0
        near_dirs = directions[np.argsort(np.linalg.norm(directions - v, axis=1))[:3]]
        near_ts = np.unique(thresholds)[np.argsort(np.abs(np.unique(thresholds) - t))[:2]]
        best = min(float(np.mean(target)), float(np.mean(~target)))
        for u in near_dirs:
            for s in near_ts:
                best = min(best, float(np.mean((samples @ u + s >= 0.0) != target)))
        worst = max(worst, best)
    bound = DISAGREEMENT_CONSTANT * eps
    rec.record(f"disagreement <= {DISAGREEMENT_CONSTANT:g} eps (|t| <= {t_max:.3f})", worst <= bound,
               value=worst, bound=bound)


def _exhaustive_table_error(cells: np.ndarray, labels: np.ndarray, K: int) -> float:
    best = np.inf
    for bits in itertools.product((-1, 1), repeat=2 ** K):
        table = np.array(bits, dtype=np.int8)
        best = min(best, float(np.mean(table[cells] != labels)))
    return best


def verify_cellerm(rec: SuiteRecorder, rng: np.random.Generator, quick: bool) -> None:
    for K in (1, 2, 3):
        results = []
        for _ in range(10 if quick else 50):
            n = int(rng.integers(20, 301))
            hs = [Halfspace(_random_unit(rng, 3), float(rng.normal(0.0, 0.5))) for _ in range(K)]
            X = rng.standard_normal((n, 3))
            y = np.where(rng.random(n) < 0.5, 1, -1)
            sample = LabeledDataset(X, y)
            table, error = cell_boolean_erm(hs, sample)
            cells = cell_indices(np.stack([h.predict(X) for h in hs], axis=1))
            exhaustive = _exhaustive_table_error(cells, sample.labels, K)
            results.append(error == exhaustive and float(np.mean(table[cells] != sample.labels)) == exhaustive)
        rec.record_all(f"K={K} equals exhaustive search", results)

    e1, e2 = np.eye(2)
    X = rng.standard_normal((200, 2))
    xor = BooleanHypothesis((Halfspace(e1, 0.0), Halfspace(e2, 0.0)), np.array([-1, 1, 1, -1]))
    table, error = cell_boolean_erm(xor.halfspaces, LabeledDataset(X, xor.predict(X)))
    rec.record("XOR recovered", error == 0.0 and np.array_equal(table, xor.truth_table), value=error)


def verify_averaging(rec: SuiteRecorder, rng: np.random.Generator, quick: bool) -> None:
    n_log2 = 14 if quick else 20
    results, worst = [], 0.0
    for trial in range(20 if quick else 200):
        d = int(rng.integers(2, 6))
        r = int(rng.integers(0, d))
        V = Subspace(_random_orthonormal(rng, d, r)) if r else Subspace.empty(d)
        f = Halfspace(_random_unit(rng, d), float(rng.normal()))
        x = rng.standard_normal(d)
        closed = averaged_halfspace_eval(f, V, x)

        w_out = f.normal - (V.project(f.normal) if r else 0.0)
        s = float(np.linalg.norm(w_out))
        if s <= 1e-12:
            results.append(closed == float(f.predict(x)[0]))
            continue
        xi = w_out / s
        z = ndtri(np.clip(qmc.Sobol(d=1, scramble=True, seed=trial).random_base2(n_log2)[:, 0], 1e-15, 1 - 1e-15))
        base = x - (x @ xi) * xi
        values = np.where(base @ f.normal + f.threshold + z * s >= 0.0, 1.0, -1.0)
        std_err = float(np.std(values)) / math.sqrt(values.size)
        diff = abs(float(np.mean(values)) - closed)
        # 1/n is the resolution of a mean of n signs
        results.append(diff <= 3.0 * std_err + 1.0 / values.size)
        worst = max(worst, diff)
    rec.record_all("closed form vs Monte Carlo", results, worst=worst)

    V = Subspace.empty(4)
    e1, e2 = np.eye(4)[0], np.eye(4)[1]
    xor = BooleanHypothesis((Halfspace(e1, 0.0), Halfspace(e2, 0.0)), np.array([-1, 1, 1, -1]))
    estimate = averaged_boolean_eval(xor, V, rng.standard_normal(4), n_mc=40000, seed=7)
    rec.record("XOR averages to 0", abs(estimate) <= 3.0 / math.sqrt(40000), value=estimate, bound=3.0 / math.sqrt(40000))

    f = Halfspace(_random_unit(rng, 4), 0.3)
    V = Subspace(np.eye(4)[:, :2])
    x = rng.standard_normal(4)
    single = BooleanHypothesis((f,), np.array([-1, 1]))
    estimate = averaged_boolean_eval(single, V, x, n_mc=40000, seed=11)
    closed = averaged_halfspace_eval(f, V, x)
    rec.record("K=1 matches closed form", abs(estimate - closed) <= 3.0 / math.sqrt(40000) * 2,
               value=abs(estimate - closed), bound=6.0 / math.sqrt(40000))


SUITES: Dict[str, Callable[[SuiteRecorder, np.random.Generator, bool], None]] = {
    'hermite': verify_hermite,
    'nuclear': verify_nuclear,
    'spectral': verify_spectral,
    'poincare': verify_poincare,
    'ou': verify_ou,
    'cover': verify_cover,
    'cellerm': verify_cellerm,
    'averaging': verify_averaging,
}
# Stream key per suite, independent of which suites a run selects
SUITE_KEYS = {name: position for position, name in enumerate(SUITES)}


def run_suites(names: Optional[Sequence[str]] = None, seed: int = 0, quick: bool = False) -> Dict[str, Any]:
    """
    Run the named suites (all when names is empty)

    Returns:
        {'passed', 'n_checks', 'n_failed', 'suites': {name: seconds}, 'checks': [...]}
    """
    names = list(names) if names else list(SUITES)
    unknown = [n for n in names if n not in SUITES]
    if unknown:
        raise InputError(f"Unknown suite(s): {unknown}. Available: {list(SUITES)}")

    checks: List[CheckResult] = []
    timings: Dict[str, float] = {}
    for name in names:
        logger.info(f"🚀 Running suite '{name}'")
        rec = SuiteRecorder(name)
        start = time.perf_counter()
        SUITES[name](rec, np.random.default_rng([seed, SUITE_KEYS[name]]), quick)
        timings[name] = time.perf_counter() - start
        failed = sum(not c.passed for c in rec.checks)
        status = "✅" if failed == 0 else "❌"
        logger.info(f"{status} Suite '{name}': {len(rec.checks) - failed}/{len(rec.checks)} checks passed "
                    f"in {timings[name]:.2f}s")
        checks.extend(rec.checks)

    n_failed = sum(not c.passed for c in checks)
    return {
        'passed': n_failed == 0,
        'n_checks': len(checks),
        'n_failed': n_failed,
        'suites': timings,
        'checks': [asdict(c) for c in checks],
    }
