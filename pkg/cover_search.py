#!/usr/bin/env python3
"""
Cover Search for the Gaussian proper agnostic learner
Finite covers of halfspaces with normals in a subspace V, and empirical risk
minimization over single halfspaces, Boolean maps of K halfspaces and
intersections of K halfspaces.

CONVENTIONS:
    sign(0) = +1.
    A constant classifier is a Halfspace with zero normal and threshold +1 or -1,
    so its margin <w, x> + t is the constant itself.
    For K halfspaces the cell of x is b = sum_j [f_j(x) = +1] * 2^j; a truth
    table is a length-2^K vector of +/-1 indexed by b. The conjunction maps only
    the all-(+1) cell to +1.
"""

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from itertools import combinations_with_replacement, islice
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np
from scipy.special import comb, ndtri
from scipy.stats import qmc

from learner_errors import InputError, ResourceBudgetError
from spectral_reduction import Subspace

logger = logging.getLogger(__name__)

UNIT_NORM_TOL = 1e-12
# Greedy net points are pairwise more than eps/2 apart: at most (1 + 4/eps)^r <= (5/eps)^r
COVER_SIZE_CONSTANT = 5.0
# Target bound on Pr[h != h~] / eps_cover, checked statistically in tests
DISAGREEMENT_CONSTANT = 4.0
CANDIDATE_FACTOR = 10.0
HYPOTHESIS_CHUNK = 256
PREFIX_BATCH = 64


# ============================================================================
# HYPOTHESES
# ============================================================================

@dataclass(frozen=True, eq=False)
class Halfspace:
    """sign(<w, x> + t) with ||w|| = 1, or a constant classifier"""
    normal: np.ndarray
    threshold: float = 0.0
    constant_sign: Optional[int] = None

    def __post_init__(self):
        w = np.array(self.normal, dtype=float).reshape(-1)
        if self.constant_sign is not None:
            if self.constant_sign not in (1, -1):
                raise InputError(f"Constant sign must be +1 or -1, got: {self.constant_sign}")
            if np.any(w != 0.0):
                raise InputError("Constant classifier must have a zero normal")
            object.__setattr__(self, 'threshold', float(self.constant_sign))
        elif abs(np.linalg.norm(w) - 1.0) > UNIT_NORM_TOL:
            raise InputError(f"Halfspace normal must be a unit vector, got norm {np.linalg.norm(w):.15f}")
        else:
            object.__setattr__(self, 'threshold', float(self.threshold))
        w.flags.writeable = False
        object.__setattr__(self, 'normal', w)

    @classmethod
    def from_direction(cls, direction: np.ndarray, threshold: float = 0.0) -> 'Halfspace':
        direction = np.asarray(direction, dtype=float)
        norm = np.linalg.norm(direction)
        if norm == 0.0:
            raise InputError("Cannot build a halfspace from a zero direction")
        return cls(direction / norm, threshold)

    @classmethod
    def constant(cls, dim: int, sign: int) -> 'Halfspace':
        return cls(np.zeros(dim), float(sign), constant_sign=sign)

    @property
    def dim(self) -> int:
        return self.normal.size

    @property
    def is_constant(self) -> bool:
        return self.constant_sign is not None

    def margins(self, X: np.ndarray) -> np.ndarray:
        return np.atleast_2d(X) @ self.normal + self.threshold

    def predict(self, X: np.ndarray) -> np.ndarray:
        return np.where(self.margins(X) >= 0.0, 1, -1).astype(np.int8)

    def to_line(self) -> str:
        """'w_1 ... w_d t' with text floats"""
        return " ".join(repr(float(v)) for v in (*self.normal, self.threshold))

    @classmethod
    def from_line(cls, line: str) -> 'Halfspace':
        values = np.array([float(v) for v in line.split()])
        if values.size < 2:
            raise InputError(f"Halfspace line needs at least 2 values, got: {line!r}")
        w, t = values[:-1], values[-1]
        if np.all(w == 0.0):
            return cls.constant(w.size, 1 if t >= 0 else -1)
        return cls(w, t)

    def to_dict(self) -> dict:
        return {'kind': 'halfspace', 'line': self.to_line()}


def cell_indices(predictions: np.ndarray) -> np.ndarray:
    """Cell index sum_j [pred_j = +1] 2^j for an (n, K) matrix of +/-1 predictions"""
    predictions = np.atleast_2d(predictions)
    weights = 1 << np.arange(predictions.shape[1], dtype=np.int64)
    return (predictions > 0).astype(np.int64) @ weights


def conjunction_table(K: int) -> np.ndarray:
    table = -np.ones(2 ** K, dtype=np.int8)
    table[-1] = 1
    return table


@dataclass(frozen=True, eq=False)
class BooleanHypothesis:
    """x -> B(f_1(x), ..., f_K(x)) with B stored as a 2^K sign vector"""
    halfspaces: Tuple[Halfspace, ...]
    truth_table: np.ndarray

    def __post_init__(self):
        halfspaces = tuple(self.halfspaces)
        if len(halfspaces) < 1:
            raise InputError("A Boolean hypothesis needs K >= 1 halfspaces")
        table = np.array(self.truth_table, dtype=np.int8).reshape(-1)
        if table.size != 2 ** len(halfspaces):
            raise InputError(f"Truth table must have {2 ** len(halfspaces)} entries, got: {table.size}")
        if not np.all(np.isin(table, (-1, 1))):
            raise InputError("Truth table entries must be +1 or -1")
        table.flags.writeable = False
        object.__setattr__(self, 'halfspaces', halfspaces)
        object.__setattr__(self, 'truth_table', table)

    @property
    def K(self) -> int:
        return len(self.halfspaces)

    @property
    def dim(self) -> int:
        return self.halfspaces[0].dim

    def cells(self, X: np.ndarray) -> np.ndarray:
        return cell_indices(np.stack([h.predict(X) for h in self.halfspaces], axis=1))

    def predict(self, X: np.ndarray) -> np.ndarray:
        return self.truth_table[self.cells(X)]

    def table_bitstring(self) -> str:
        return "".join('1' if v > 0 else '0' for v in self.truth_table)

    @staticmethod
    def table_from_bitstring(bits: str) -> np.ndarray:
        return np.array([1 if b == '1' else -1 for b in bits.strip()], dtype=np.int8)

    def to_dict(self) -> dict:
        return {
            'kind': 'boolean',
            'K': self.K,
            'halfspaces': [h.to_line() for h in self.halfspaces],
            'truth_table': self.table_bitstring(),
        }


Hypothesis = Union[Halfspace, BooleanHypothesis]


def hypothesis_from_dict(data: dict) -> Hypothesis:
    if data['kind'] == 'halfspace':
        return Halfspace.from_line(data['line'])
    return BooleanHypothesis(
        tuple(Halfspace.from_line(line) for line in data['halfspaces']),
        BooleanHypothesis.table_from_bitstring(data['truth_table']),
    )


def empirical_error(h: Hypothesis, data) -> float:
    """Fraction of points of a LabeledDataset misclassified by h"""
    return float(np.mean(h.predict(data.points) != data.labels))


# ============================================================================
# COVER CONSTRUCTION
# ============================================================================

@dataclass(frozen=True, eq=False)
class Cover:
    """Finite list of halfspaces with normals in a subspace, constants first"""
    hypotheses: Tuple[Halfspace, ...]
    net_accuracy: float
    subspace: Subspace

    def __post_init__(self):
        hypotheses = tuple(self.hypotheses)
        if not hypotheses:
            raise InputError("Cover must contain at least one hypothesis")
        object.__setattr__(self, 'hypotheses', hypotheses)
        normals = np.stack([h.normal for h in hypotheses])
        thresholds = np.array([h.threshold for h in hypotheses])
        normals.flags.writeable = False
        thresholds.flags.writeable = False
        object.__setattr__(self, '_normals', normals)
        object.__setattr__(self, '_thresholds', thresholds)

    @classmethod
    def from_hypotheses(cls, hypotheses: Sequence[Halfspace], subspace: Subspace,
                        net_accuracy: float = float('nan')) -> 'Cover':
        return cls(tuple(hypotheses), net_accuracy, subspace)

    def __len__(self) -> int:
        return len(self.hypotheses)

    @property
    def normals(self) -> np.ndarray:
        return self._normals

    @property
    def thresholds(self) -> np.ndarray:
        return self._thresholds

    def positive_matrix(self, X: np.ndarray, threads: int = 1) -> np.ndarray:
        """(n, |cover|) boolean matrix of [h(x) = +1]"""
        X = np.atleast_2d(X)
        starts = list(range(0, len(self), HYPOTHESIS_CHUNK))

        def chunk(start: int) -> np.ndarray:
            stop = start + HYPOTHESIS_CHUNK
            return X @ self._normals[start:stop].T + self._thresholds[start:stop] >= 0.0

        with ThreadPoolExecutor(max_workers=max(1, threads)) as executor:
            blocks = list(executor.map(chunk, starts))
        return np.concatenate(blocks, axis=1)


def threshold_grid(eps_cover: float) -> np.ndarray:
    """Uniform grid on [-T, T], step <= eps/2, Pr[z > T] = eps/4"""
    t_max = float(ndtri(1.0 - eps_cover / 4.0))
    n_steps = int(math.ceil(2.0 * t_max / (eps_cover / 2.0)))
    return np.linspace(-t_max, t_max, n_steps + 1)


def sphere_net(r: int, eps_cover: float, seed: int = 0, max_candidates: int = 2_000_000) -> np.ndarray:
    """
    Deterministic (eps/2)-net of the unit sphere in R^r

    Greedy farthest-point selection over scrambled-Sobol candidate directions.

    Returns:
        (q, r) matrix of unit vectors
    """
    if r == 1:
        return np.array([[1.0], [-1.0]])
    n_candidates = CANDIDATE_FACTOR * (3.0 / eps_cover) ** r
    if n_candidates > max_candidates:
        raise ResourceBudgetError(
            f"Sphere net in r={r} at eps={eps_cover:g} needs {n_candidates:.3g} candidates (cap {max_candidates})",
            stage='cover')

    sobol = qmc.Sobol(d=r, scramble=True, seed=seed)
    u = sobol.random_base2(m=int(math.ceil(math.log2(n_candidates))))
    candidates = ndtri(np.clip(u, 1e-12, 1.0 - 1e-12))
    candidates /= np.linalg.norm(candidates, axis=1, keepdims=True)

    selected = [0]
    min_dist = np.linalg.norm(candidates - candidates[0], axis=1)
    while min_dist.max() > eps_cover / 2.0:
        nxt = int(np.argmax(min_dist))
        selected.append(nxt)
        min_dist = np.minimum(min_dist, np.linalg.norm(candidates - candidates[nxt], axis=1))
    logger.debug(f"Sphere net r={r} eps={eps_cover:g}: {len(selected)} directions from {len(candidates)} candidates")
    return candidates[selected]


def build_cover(V: Subspace, eps_cover: float, max_cover: int = 200_000, seed: int = 0,
                max_candidates: int = 2_000_000) -> Cover:
    """
    Build an eps-cover of halfspaces with normals in V

    Args:
        V: Search subspace
        eps_cover: Net accuracy, 0 < eps_cover < 1/2
        max_cover: Largest allowed number of hypotheses
        seed: Seed of the quasi-random candidate directions
        max_candidates: Largest allowed number of candidate directions for the net

    Returns:
        Cover listing the two constants, then every (direction, threshold) pair
    """
    if not 0.0 < eps_cover < 0.5:
        raise InputError(f"Cover accuracy must lie in (0, 1/2), got: {eps_cover}")

    d = V.dim
    hypotheses: List[Halfspace] = [Halfspace.constant(d, 1), Halfspace.constant(d, -1)]
    if V.rank == 0:
        return Cover(tuple(hypotheses), eps_cover, V)

    grid = threshold_grid(eps_cover)
    net = sphere_net(V.rank, eps_cover, seed=seed, max_candidates=max_candidates)
    size = 2 + len(net) * len(grid)
    if size > max_cover:
        raise ResourceBudgetError(
            f"Cover would hold {size} hypotheses (r={V.rank}, eps={eps_cover:g}), cap is {max_cover}",
            stage='cover')

    directions = net @ V.basis.T
    directions /= np.linalg.norm(directions, axis=1, keepdims=True)
    for direction in directions:
        for t in grid:
            hypotheses.append(Halfspace(direction, t))

    logger.info(f"📊 Built cover: r={V.rank}, {len(net)} directions x {len(grid)} thresholds + 2 constants = {size}")
    return Cover(tuple(hypotheses), eps_cover, V)


# ============================================================================
# EMPIRICAL RISK MINIMIZATION
# ============================================================================

def _require_nonempty(data) -> None:
    if data.size == 0:
        raise InputError("Validation set is empty")


def erm_halfspace(cover: Cover, validation, threads: int = 1) -> Tuple[Halfspace, float]:
    """Exact minimizer of empirical 0-1 error over the cover; first in order wins ties"""
    _require_nonempty(validation)
    X, positive = validation.points, validation.labels > 0
    starts = list(range(0, len(cover), HYPOTHESIS_CHUNK))

    def chunk_mistakes(start: int) -> np.ndarray:
        stop = start + HYPOTHESIS_CHUNK
        predicted = X @ cover.normals[start:stop].T + cover.thresholds[start:stop] >= 0.0
        return np.sum(predicted != positive[:, None], axis=0)

    with ThreadPoolExecutor(max_workers=max(1, threads)) as executor:
        mistakes = np.concatenate(list(executor.map(chunk_mistakes, starts)))

    best = int(np.argmin(mistakes))
    h = cover.hypotheses[best]
    error = float(mistakes[best]) / validation.size
    logger.info(f"✅ Halfspace ERM over {len(cover)} hypotheses: index {best}, error {error:.4f}")
    return h, error


def cell_boolean_erm(hs: Sequence[Halfspace], sample) -> Tuple[np.ndarray, float]:
    """
    Empirically optimal Boolean map for a fixed tuple of halfspaces

    Each cell takes its majority label (ties and empty cells -> +1).

    Returns:
        (truth table of length 2^K, empirical error)
    """
    if len(hs) < 1:
        raise InputError("cell_boolean_erm needs K >= 1 halfspaces")
    _require_nonempty(sample)
    cells = cell_indices(np.stack([h.predict(sample.points) for h in hs], axis=1))
    n_cells = 2 ** len(hs)
    n_pos = np.bincount(cells[sample.labels > 0], minlength=n_cells)
    n_neg = np.bincount(cells[sample.labels < 0], minlength=n_cells)
    table = np.where(n_pos >= n_neg, 1, -1).astype(np.int8)
    return table, float(np.minimum(n_pos, n_neg).sum()) / sample.size


def _search_tuples(cover: Cover, K: int, validation, conjunction: bool, max_tuples: int,
                   threads: int) -> Tuple[BooleanHypothesis, float]:
    if K < 1:
        raise InputError(f"K must be at least 1, got: {K}")
    _require_nonempty(validation)

    h = len(cover)
    n = validation.size
    positive_bool = cover.positive_matrix(validation.points, threads=threads)
    positive = positive_bool.astype(float)
    y_pos = (validation.labels > 0).astype(float)
    y_neg = 1.0 - y_pos
    total_pos = float(y_pos.sum())
    n_pre = 2 ** (K - 1)
    total_tuples = int(comb(h + K - 1, K, exact=True))
    label = 'intersection' if conjunction else 'boolean'
    logger.info(f"🚀 {label} search: K={K}, |H|={h}, {total_tuples} unordered tuples, budget {max_tuples}")

    def scan(task: Tuple[Tuple[int, ...], int, int, int]) -> Tuple[int, int, Tuple[int, ...]]:
        prefix, j_start, j_stop, rank_base = task
        code = np.zeros(n, dtype=np.int64)
        for bit, i in enumerate(prefix):
            code += positive_bool[:, i].astype(np.int64) << bit
        onehot = np.zeros((n_pre, n))
        onehot[code, np.arange(n)] = 1.0
        w_pos, w_neg = onehot * y_pos, onehot * y_neg
        block = positive[:, j_start:j_stop]
        pos1, neg1 = w_pos @ block, w_neg @ block
        if conjunction:
            mistakes = total_pos - pos1[-1] + neg1[-1]
        else:
            pos0 = w_pos.sum(axis=1)[:, None] - pos1
            neg0 = w_neg.sum(axis=1)[:, None] - neg1
            mistakes = np.minimum(pos0, neg0).sum(axis=0) + np.minimum(pos1, neg1).sum(axis=0)
        mistakes = np.rint(mistakes).astype(np.int64)
        j = int(np.argmin(mistakes))
        return int(mistakes[j]), rank_base + j, prefix + (j_start + j,)

    best: Optional[Tuple[int, int, Tuple[int, ...]]] = None
    enumerated = 0
    exhausted = False
    prefixes = combinations_with_replacement(range(h), K - 1)
    with ThreadPoolExecutor(max_workers=max(1, threads)) as executor:
        while not exhausted:
            tasks = []
            for prefix in islice(prefixes, PREFIX_BATCH):
                j_start = prefix[-1] if prefix else 0
                count = h - j_start
                if enumerated + count > max_tuples:
                    count = max_tuples - enumerated
                    exhausted = True
                if count > 0:
                    tasks.append((prefix, j_start, j_start + count, enumerated))
                    enumerated += count
                if exhausted:
                    break
            if not tasks:
                break
            for result in executor.map(scan, tasks):
                if best is None or result[:2] < best[:2]:
                    best = result

    hypothesis, error = _finish_tuple(cover, best[2], validation, conjunction) if best else (None, None)
    if enumerated < total_tuples:
        raise ResourceBudgetError(
            f"{label} search stopped after {enumerated} of {total_tuples} tuples (budget {max_tuples})",
            best_so_far=(hypothesis, error), stage='search')
    logger.info(f"✅ {label} search done: tuple {best[2]}, error {error:.4f}")
    return hypothesis, error


def _finish_tuple(cover: Cover, indices: Tuple[int, ...], validation,
                  conjunction: bool) -> Tuple[BooleanHypothesis, float]:
    hs = [cover.hypotheses[i] for i in indices]
    table = conjunction_table(len(hs)) if conjunction else cell_boolean_erm(hs, validation)[0]
    hypothesis = BooleanHypothesis(tuple(hs), table)
    return hypothesis, empirical_error(hypothesis, validation)


def search_boolean(cover: Cover, K: int, validation, max_tuples: int = 5_000_000,
                   threads: int = 1) -> Tuple[BooleanHypothesis, float]:
    """Minimize empirical error over K-tuples of the cover and all Boolean maps"""
    return _search_tuples(cover, K, validation, conjunction=False, max_tuples=max_tuples, threads=threads)


def search_intersection(cover: Cover, K: int, validation, max_tuples: int = 5_000_000,
                        threads: int = 1) -> Tuple[BooleanHypothesis, float]:
    """Same enumeration with the truth table fixed to the conjunction"""
    return _search_tuples(cover, K, validation, conjunction=True, max_tuples=max_tuples, threads=threads)
