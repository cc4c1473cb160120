#!/usr/bin/env python3
"""
Synthetic Data Manager
Gaussian-marginal labeled datasets with planted concepts and controlled label
noise, so that the best in-class error is known, plus dataset file IO.

SEEDING:
    Every stream is a numpy Philox generator keyed by
    SeedSequence(seed, spawn_key=(domain, chunk)). Domains separate the
    training, validation and test draws of one seed; chunks make generation
    independent of the thread count.

FILE FORMATS:
    text    line 1 "d n", then n lines "x_1 ... x_d y" with y in {+1, -1}
    binary  b"GPHS", u32 d, u64 n, n*d little-endian float64 (row-major),
            n label bytes (0x01 = +1, 0xFF = -1)
"""

import logging
import re
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, Optional, Tuple, Union

import numpy as np
import pandas as pd
from scipy.special import ndtri

from cover_search import BooleanHypothesis, Halfspace, Hypothesis, conjunction_table
from learner_errors import DatasetParseError, InputError

logger = logging.getLogger(__name__)

SEED_DOMAINS: Dict[str, int] = {
    'train': 0,
    'validation': 1,
    'test': 2,
    'concept': 3,
    'verify': 4,
}
CHUNK_ROWS = 8192
BINARY_MAGIC = b"GPHS"


def domain_generator(seed: int, domain: str, chunk: int = 0) -> np.random.Generator:
    """Philox stream for one (seed, domain, chunk) triple"""
    if domain not in SEED_DOMAINS:
        raise InputError(f"Unknown seed domain: {domain}. Available: {list(SEED_DOMAINS)}")
    sequence = np.random.SeedSequence(int(seed), spawn_key=(SEED_DOMAINS[domain], int(chunk)))
    return np.random.Generator(np.random.Philox(sequence))


# ============================================================================
# DATASETS
# ============================================================================

@dataclass(frozen=True, eq=False)
class LabeledDataset:
    """n points in R^d with +/-1 labels"""
    points: np.ndarray
    labels: np.ndarray

    def __post_init__(self):
        X = np.array(self.points, dtype=float)
        y = np.array(self.labels).reshape(-1)
        if X.ndim != 2:
            raise InputError(f"Points must form an n x d matrix, got shape: {X.shape}")
        if X.shape[0] != y.size:
            raise InputError(f"Got {X.shape[0]} points but {y.size} labels")
        if not np.all(np.isfinite(X)):
            raise InputError("Points must have finite coordinates")
        if not np.all(np.isin(y, (-1, 1))):
            raise InputError("Labels must be +1 or -1")
        y = y.astype(np.int8)
        X.flags.writeable = False
        y.flags.writeable = False
        object.__setattr__(self, 'points', X)
        object.__setattr__(self, 'labels', y)

    @property
    def dim(self) -> int:
        return self.points.shape[1]

    @property
    def size(self) -> int:
        return self.points.shape[0]

    def __len__(self) -> int:
        return self.size

    def positive_rate(self) -> float:
        return float(np.mean(self.labels > 0)) if self.size else float('nan')

    def to_frame(self) -> pd.DataFrame:
        frame = pd.DataFrame(self.points, columns=[f"x{i + 1}" for i in range(self.dim)])
        frame['y'] = self.labels
        return frame

    def summary(self) -> Dict[str, float]:
        return {
            'n': self.size,
            'd': self.dim,
            'positive_rate': self.positive_rate(),
            'mean_norm': float(np.linalg.norm(self.points, axis=1).mean()) if self.size else float('nan'),
        }


# ============================================================================
# PLANTED MODELS
# ============================================================================

@dataclass(frozen=True)
class NoiseModel:
    """Label corruption applied after the planted concept"""
    kind: str = 'none'
    rate: float = 0.0

    KINDS = ('none', 'rcn', 'slab', 'random_labels')

    def __post_init__(self):
        if self.kind not in self.KINDS:
            raise InputError(f"Unknown noise model: {self.kind}. Available: {list(self.KINDS)}")
        if self.kind == 'rcn' and not 0.0 <= self.rate < 0.5:
            raise InputError(f"RCN rate must lie in [0, 1/2), got: {self.rate}")
        if self.kind == 'slab' and not 0.0 <= self.rate < 1.0:
            raise InputError(f"Slab mass must lie in [0, 1), got: {self.rate}")

    @classmethod
    def parse(cls, text: str) -> 'NoiseModel':
        """'none', 'random_labels', 'rcn:0.1' or 'slab:0.05'"""
        kind, _, rate = text.partition(':')
        try:
            return cls(kind.strip(), float(rate) if rate else 0.0)
        except ValueError as e:
            if isinstance(e, InputError):
                raise
            raise InputError(f"Bad noise specification {text!r}: {e}")

    @property
    def opt_upper_bound(self) -> float:
        """Error of the planted concept under this noise, an upper bound on OPT"""
        if self.kind == 'random_labels':
            return 0.5
        if self.kind in ('rcn', 'slab'):
            return self.rate
        return 0.0

    def describe(self) -> str:
        return self.kind if self.kind in ('none', 'random_labels') else f"{self.kind}:{self.rate:g}"


@dataclass(frozen=True)
class PlantedModel:
    concept: Hypothesis
    noise: NoiseModel = field(default_factory=NoiseModel)
    seed: int = 0

    @property
    def opt_upper_bound(self) -> float:
        return self.noise.opt_upper_bound

    def slab_direction(self) -> np.ndarray:
        halfspaces = self.concept.halfspaces if isinstance(self.concept, BooleanHypothesis) else (self.concept,)
        for h in halfspaces:
            if not h.is_constant:
                return h.normal
        direction = np.zeros(halfspaces[0].dim)
        direction[0] = 1.0
        return direction


def planted_halfspace(d: int, seed: int = 0, threshold: float = 0.0) -> Halfspace:
    """Halfspace with a uniformly random unit normal drawn from the concept stream"""
    rng = domain_generator(seed, 'concept')
    return Halfspace.from_direction(rng.standard_normal(d), threshold)


def planted_xor(d: int, threshold: float = 0.0) -> BooleanHypothesis:
    """+1 exactly when one of sign(x_1 + t), sign(x_2 + t) is +1"""
    if d < 2:
        raise InputError(f"XOR concept needs d >= 2, got: {d}")
    e1, e2 = np.eye(d)[0], np.eye(d)[1]
    table = np.array([-1, 1, 1, -1], dtype=np.int8)
    return BooleanHypothesis((Halfspace(e1, threshold), Halfspace(e2, threshold)), table)


def planted_intersection(d: int, K: int = 2, threshold: float = 0.5) -> BooleanHypothesis:
    """Conjunction of sign(x_j + t) over the first K coordinates"""
    if not 1 <= K <= d:
        raise InputError(f"Intersection concept needs 1 <= K <= d, got K={K}, d={d}")
    halfspaces = tuple(Halfspace(np.eye(d)[j], threshold) for j in range(K))
    return BooleanHypothesis(halfspaces, conjunction_table(K))


def constant_concept(d: int, sign: int = 1) -> Halfspace:
    return Halfspace.constant(d, sign)


def sample_dataset(model: PlantedModel, n: int, d: int, domain: str = 'train',
                   threads: int = 1) -> LabeledDataset:
    """
    Draw n labeled points with x ~ N(0, I_d)

    Args:
        model: Planted concept, noise and seed
        n: Number of points (>= 1)
        d: Dimension, must match the concept
        domain: Seed domain ('train', 'validation', 'test', ...)
        threads: Worker threads; output does not depend on it

    Returns:
        LabeledDataset
    """
    if n < 1:
        raise InputError(f"Sample size must be at least 1, got: {n}")
    if model.concept.dim != d:
        raise InputError(f"Concept dimension {model.concept.dim} does not match d={d}")

    noise = model.noise
    slab_width = float(ndtri(0.5 + noise.rate / 2.0)) if noise.kind == 'slab' else 0.0
    slab_direction = model.slab_direction()
    starts = list(range(0, n, CHUNK_ROWS))

    def chunk(index_start: Tuple[int, int]) -> Tuple[np.ndarray, np.ndarray]:
        index, start = index_start
        rows = min(CHUNK_ROWS, n - start)
        rng = domain_generator(model.seed, domain, index)
        X = rng.standard_normal((rows, d))
        u = rng.random(rows)
        y = model.concept.predict(X).astype(np.int8)
        if noise.kind == 'rcn':
            y[u < noise.rate] *= -1
        elif noise.kind == 'slab':
            y[np.abs(X @ slab_direction) <= slab_width] *= -1
        elif noise.kind == 'random_labels':
            y = np.where(u < 0.5, 1, -1).astype(np.int8)
        return X, y

    with ThreadPoolExecutor(max_workers=max(1, threads)) as executor:
        blocks = list(executor.map(chunk, enumerate(starts)))

    data = LabeledDataset(np.concatenate([b[0] for b in blocks]), np.concatenate([b[1] for b in blocks]))
    logger.debug(f"Sampled {domain} set: n={n}, d={d}, noise={noise.describe()}, positive rate {data.positive_rate():.3f}")
    return data


# ============================================================================
# FILE IO
# ============================================================================

def write_dataset(path: Union[str, Path], data: LabeledDataset, fmt: str = 'text') -> None:
    path = Path(path)
    if fmt == 'binary':
        payload = (BINARY_MAGIC
                   + np.array([data.dim], dtype='<u4').tobytes()
                   + np.array([data.size], dtype='<u8').tobytes()
                   + np.ascontiguousarray(data.points, dtype='<f8').tobytes()
                   + data.labels.astype(np.int8).tobytes())
        path.write_bytes(payload)
    elif fmt == 'text':
        lines = [f"{data.dim} {data.size}"]
        for x, y in zip(data.points, data.labels):
            lines.append(" ".join(repr(float(v)) for v in x) + (" +1" if y > 0 else " -1"))
        path.write_text("\n".join(lines) + "\n")
    else:
        raise InputError(f"Unknown dataset format: {fmt}. Use 'text' or 'binary'")
    logger.info(f"✅ Wrote {data.size} points (d={data.dim}) to {path} [{fmt}]")


def read_dataset(path: Union[str, Path]) -> LabeledDataset:
    """Read a text or binary dataset; the binary magic selects the format"""
    path = Path(path)
    if not path.exists():
        raise InputError(f"Dataset file not found: {path}")
    with open(path, 'rb') as handle:
        head = handle.read(len(BINARY_MAGIC))
    if head == BINARY_MAGIC:
        return _read_binary(path)
    return _read_text(path)


def _read_binary(path: Path) -> LabeledDataset:
    raw = path.read_bytes()
    offset = len(BINARY_MAGIC)
    if len(raw) < offset + 12:
        raise DatasetParseError("Binary header is truncated")
    d = int(np.frombuffer(raw, dtype='<u4', count=1, offset=offset)[0])
    n = int(np.frombuffer(raw, dtype='<u8', count=1, offset=offset + 4)[0])
    body = offset + 12
    expected = body + 8 * n * d + n
    if d < 1 or len(raw) != expected:
        raise DatasetParseError(f"Binary file size {len(raw)} does not match header d={d}, n={n}")
    X = np.frombuffer(raw, dtype='<f8', count=n * d, offset=body).reshape(n, d).astype(float)
    y = np.frombuffer(raw, dtype=np.int8, count=n, offset=body + 8 * n * d)
    bad = np.flatnonzero(~np.isin(y, (-1, 1)))
    if bad.size:
        raise DatasetParseError(f"Label byte {int(y[bad[0]]) & 0xFF:#04x} at record {bad[0]} is not 0x01/0xFF")
    if n == 0:
        raise DatasetParseError("Dataset holds no points")
    return LabeledDataset(X, y)


def _parse_header(line: str) -> Tuple[int, int]:
    parts = line.split()
    if len(parts) != 2:
        raise DatasetParseError(f"Header must be 'd n', got: {line.strip()!r}", line_number=1)
    try:
        d, n = int(parts[0]), int(parts[1])
    except ValueError:
        raise DatasetParseError(f"Header values must be integers, got: {line.strip()!r}", line_number=1)
    if d < 1 or n < 0:
        raise DatasetParseError(f"Header needs d >= 1 and n >= 0, got d={d}, n={n}", line_number=1)
    return d, n


def _locate_bad_line(lines, d: int) -> Optional[Tuple[int, str]]:
    for number, line in enumerate(lines[1:], start=2):
        fields = line.split()
        if not fields:
            return number, "blank line"
        if len(fields) != d + 1:
            return number, f"expected {d + 1} fields, found {len(fields)}"
        try:
            values = [float(v) for v in fields[:-1]]
        except ValueError as e:
            return number, f"malformed coordinate ({e})"
        if not np.all(np.isfinite(values)):
            return number, "non-finite coordinate"
        if fields[-1] not in ('1', '+1', '-1'):
            return number, f"label must be +1 or -1, found {fields[-1]!r}"
    return None


def _read_text(path: Path) -> LabeledDataset:
    text = path.read_text()
    lines = text.splitlines()
    while lines and not lines[-1].strip():
        lines.pop()
    if not lines:
        raise DatasetParseError("Dataset file is empty", line_number=1)
    d, n = _parse_header(lines[0])
    if len(lines) == 1:
        raise DatasetParseError("No data rows after header", line_number=2)

    try:
        frame = pd.read_csv(path, sep=r'\s+', header=None, skiprows=1, engine='c',
                            float_precision='round_trip', skip_blank_lines=False)
    except (pd.errors.ParserError, ValueError) as e:
        located = _locate_bad_line(lines, d)
        if located:
            raise DatasetParseError(located[1], line_number=located[0])
        match = re.search(r"line (\d+)", str(e))
        raise DatasetParseError(f"Unparseable row: {e}", line_number=int(match.group(1)) + 1 if match else None)

    located = _locate_bad_line(lines, d) if frame.shape[1] != d + 1 or frame.isna().any().any() else None
    if located:
        raise DatasetParseError(located[1], line_number=located[0])
    try:
        X = frame.iloc[:, :d].to_numpy(dtype=float)
        y = frame.iloc[:, d].to_numpy(dtype=float)
    except (TypeError, ValueError):
        located = _locate_bad_line(lines, d)
        raise DatasetParseError(located[1] if located else "malformed row",
                                line_number=located[0] if located else None)

    bad = np.flatnonzero(~np.isin(y, (-1.0, 1.0)) | ~np.all(np.isfinite(X), axis=1))
    if bad.size:
        located = _locate_bad_line(lines, d)
        raise DatasetParseError(located[1] if located else f"invalid row {bad[0] + 2}",
                                line_number=located[0] if located else int(bad[0]) + 2)
    if len(y) != n:
        raise DatasetParseError(f"Header announces {n} rows, found {len(y)}",
                                line_number=min(len(y), n) + 2)
    return LabeledDataset(X, y.astype(np.int8))
