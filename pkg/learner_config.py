#!/usr/bin/env python3
"""
Learner Configuration
Every knob of the pipeline in one dataclass, the formulas that turn epsilon,
delta and K into the working parameters, and the run report schema.

Calibration constants (C0, c_nu, c_cover, sample sizes) are desk-scale values,
not asymptotic ones; the report marks them as such.
"""

import json
import logging
import math
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path
from typing import Any, Dict, Optional, Tuple, Union

from learner_errors import InputError

logger = logging.getLogger(__name__)

TASKS = ('halfspace', 'boolean', 'intersection')
CONCEPTS = ('auto', 'halfspace', 'xor', 'intersection', 'constant+', 'constant-')


@dataclass
class LearnerConfig:
    """Configuration of one learning run"""

    # Calibration defaults, overridable per run
    DEFAULT_CONSTANTS = {
        "mu": 1.0 / 128.0,          # ridge weight of the regression objective
        "c0": 1.0,                  # degree / eigenvalue threshold constant
        "cnu": 0.125,               # nuclear-norm weight constant
        "c_cover": 0.125,           # Boolean cover accuracy = c_cover * eps / K
        "opt_tolerance": 0.01,      # solver accuracy = factor * eps^3
        "validation_multiplier": 8.0,
        "n_train": 20000,
        "max_valid": 20000,
        "max_degree": 8,
    }

    task: str = 'halfspace'
    K: int = 1
    dim: int = 4
    epsilon: float = 0.2
    delta: float = 0.1
    degree_k: Optional[int] = None
    eta: Optional[float] = None
    mu: Optional[float] = None
    nu: Optional[float] = None
    eps_cover: Optional[float] = None
    opt_tolerance: Optional[float] = None
    eps_trunc: Optional[float] = None
    trunc_radius: Optional[float] = None
    n_train: int = DEFAULT_CONSTANTS["n_train"]
    n_valid: Optional[int] = None
    n_test: int = 100000
    seed: int = 0
    concept: str = 'auto'
    concept_threshold: Optional[float] = None
    noise: str = 'rcn:0.1'
    dataset: Optional[str] = None
    max_degree: int = DEFAULT_CONSTANTS["max_degree"]
    max_cover: int = 200000
    max_candidates: int = 2000000
    max_tuples: int = 5000000
    max_iterations: int = 20000
    max_valid: int = DEFAULT_CONSTANTS["max_valid"]
    max_K: int = 3
    c0: float = DEFAULT_CONSTANTS["c0"]
    cnu: float = DEFAULT_CONSTANTS["cnu"]
    c_cover: float = DEFAULT_CONSTANTS["c_cover"]
    validation_multiplier: float = DEFAULT_CONSTANTS["validation_multiplier"]
    solver_method: str = 'accelerated'
    require_certificate: bool = False
    n_mc: int = 2000
    residual_points: int = 5000
    threads: int = 1

    def __post_init__(self):
        if self.task not in TASKS:
            raise InputError(f"Unknown task: {self.task}. Available: {list(TASKS)}")
        if self.concept not in CONCEPTS:
            raise InputError(f"Unknown concept: {self.concept}. Available: {list(CONCEPTS)}")
        if not 0.0 < self.epsilon < 0.5:
            raise InputError(f"epsilon must lie in (0, 1/2), got: {self.epsilon}")
        if not 0.0 < self.delta < 0.5:
            raise InputError(f"delta must lie in (0, 1/2), got: {self.delta}")
        if self.dim < 1:
            raise InputError(f"Dimension must be positive, got: {self.dim}")
        if self.K < 1:
            raise InputError(f"K must be at least 1, got: {self.K}")
        if self.task == 'halfspace' and self.K != 1:
            raise InputError(f"The halfspace task uses K = 1, got: {self.K}")
        if self.task != 'halfspace' and self.K > self.max_K:
            raise InputError(f"K={self.K} exceeds the configured maximum {self.max_K}")
        if self.degree_k is not None and self.degree_k < 0:
            raise InputError(f"Degree must be non-negative, got: {self.degree_k}")
        for name in ('eta', 'mu', 'eps_cover', 'opt_tolerance', 'eps_trunc', 'trunc_radius'):
            value = getattr(self, name)
            if value is not None and not value > 0:
                raise InputError(f"{name} must be positive, got: {value}")
        if self.nu is not None and self.nu < 0:
            raise InputError(f"nu must be non-negative, got: {self.nu}")
        if self.n_train < 1 or self.n_test < 1 or (self.n_valid is not None and self.n_valid < 1):
            raise InputError("Sample sizes must be positive")
        if self.threads < 1:
            raise InputError(f"threads must be at least 1, got: {self.threads}")
        if min(self.max_cover, self.max_candidates, self.max_tuples, self.max_iterations) < 1:
            raise InputError("Budgets max_cover, max_candidates, max_tuples and max_iterations must be positive")

    # ------------------------------------------------------------------ IO

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> 'LearnerConfig':
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(data) - known)
        if unknown:
            raise InputError(f"Unknown configuration keys: {unknown}")
        return cls(**data)

    @classmethod
    def from_json(cls, path: Union[str, Path]) -> 'LearnerConfig':
        try:
            data = json.loads(Path(path).read_text())
        except FileNotFoundError:
            raise InputError(f"Configuration file not found: {path}")
        except json.JSONDecodeError as e:
            raise InputError(f"Configuration file {path} is not valid JSON: {e}")
        if not isinstance(data, dict):
            raise InputError(f"Configuration file {path} must hold a JSON object")
        return cls.from_dict(data)

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)

    def with_overrides(self, **overrides) -> 'LearnerConfig':
        return replace(self, **{k: v for k, v in overrides.items() if v is not None})

    # ------------------------------------------------------------ formulas

    @property
    def log_k_factor(self) -> float:
        """log K for intersections; 0 when K = 1 so the halfspace defaults apply"""
        return math.log(self.K) if self.K > 1 else 0.0

    def formula_degree(self) -> int:
        eps, K = self.epsilon, self.K
        if self.task == 'boolean':
            raw = self.c0 * K * K * math.log(1.0 / eps) / eps ** 2
        elif self.task == 'intersection' and K > 1:
            raw = self.c0 * self.log_k_factor * math.log(1.0 / eps) / eps ** 2
        else:
            raw = self.c0 / eps ** 2
        return max(1, int(math.ceil(raw)))

    def default_eta(self) -> float:
        return self.epsilon ** 2 / (self.c0 * self.K)

    def default_nu(self) -> float:
        base = self.cnu * self.epsilon ** 1.5
        if self.task == 'boolean':
            return base / self.K ** 1.5
        if self.task == 'intersection' and self.K > 1:
            return base / math.sqrt(self.K * self.log_k_factor)
        return base

    def default_eps_cover(self) -> float:
        if self.task == 'halfspace' or (self.task == 'intersection' and self.K == 1):
            return self.epsilon
        return self.c_cover * self.epsilon / self.K

    def resolve(self) -> 'ResolvedParameters':
        """Fill every unset parameter from the formulas"""
        formula_k = self.formula_degree()
        if self.degree_k is not None:
            degree, capped = self.degree_k, False
        else:
            degree, capped = min(formula_k, self.max_degree), formula_k > self.max_degree
        if capped:
            logger.warning(f"⚠️ Degree formula gives k={formula_k}; capped at max_degree={self.max_degree}")

        eps_cover = self.eps_cover if self.eps_cover is not None else self.default_eps_cover()
        if not 0.0 < eps_cover < 0.5:
            raise InputError(f"Cover accuracy must lie in (0, 1/2), got: {eps_cover}")

        return ResolvedParameters(
            task=self.task,
            K=self.K,
            degree=degree,
            formula_degree=formula_k,
            degree_capped=capped,
            eta=self.eta if self.eta is not None else self.default_eta(),
            mu=self.mu if self.mu is not None else self.DEFAULT_CONSTANTS["mu"],
            nu=self.nu if self.nu is not None else self.default_nu(),
            eps_cover=eps_cover,
            opt_tolerance=(self.opt_tolerance if self.opt_tolerance is not None
                           else self.DEFAULT_CONSTANTS["opt_tolerance"] * self.epsilon ** 3),
            eps_trunc=self.eps_trunc if self.eps_trunc is not None else self.epsilon,
            trunc_radius=self.trunc_radius,
            n_train=self.n_train,
            n_valid_override=self.n_valid,
            n_test=self.n_test,
            delta=self.delta,
            validation_multiplier=self.validation_multiplier,
            max_valid=self.max_valid,
            epsilon=self.epsilon,
        )


@dataclass(frozen=True)
class ResolvedParameters:
    """Working parameters of one run, derived from a LearnerConfig"""
    task: str
    K: int
    degree: int
    formula_degree: int
    degree_capped: bool
    eta: float
    mu: float
    nu: float
    eps_cover: float
    opt_tolerance: float
    eps_trunc: float
    trunc_radius: Optional[float]
    n_train: int
    n_valid_override: Optional[int]
    n_test: int
    delta: float
    validation_multiplier: float
    max_valid: int
    epsilon: float

    def validation_size(self, cover_size: int) -> Tuple[int, bool]:
        """
        N2 from the realised cover size

        Returns:
            (size, capped) where capped marks a formula value above max_valid
        """
        if self.n_valid_override is not None:
            return self.n_valid_override, False
        log_h = math.log(max(cover_size, 1))
        log_delta = math.log(1.0 / self.delta)
        if self.task == 'halfspace':
            raw = self.validation_multiplier * (log_h + log_delta) / self.epsilon ** 2
        else:
            raw = self.validation_multiplier * (self.K * log_h + 2 ** self.K + log_delta) / self.epsilon ** 2
        size = int(math.ceil(raw))
        if size > self.max_valid:
            logger.warning(f"⚠️ Validation formula gives N2={size}; capped at {self.max_valid}")
            return self.max_valid, True
        return size, False

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)


@dataclass
class RunReport:
    """Machine-readable outcome of one pipeline run"""
    task: str
    config: Dict[str, Any]
    parameters: Dict[str, Any] = field(default_factory=dict)
    solver: Dict[str, Any] = field(default_factory=dict)
    subspace: Dict[str, Any] = field(default_factory=dict)
    cover: Dict[str, Any] = field(default_factory=dict)
    hypothesis: Dict[str, Any] = field(default_factory=dict)
    errors: Dict[str, Any] = field(default_factory=dict)
    checks: Dict[str, Any] = field(default_factory=dict)
    timings: Dict[str, float] = field(default_factory=dict)
    guarantee: Dict[str, Any] = field(default_factory=dict)
    status: str = 'ok'
    failed_stage: Optional[str] = None

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)

    def to_json(self, indent: int = 2) -> str:
        return json.dumps(self.to_dict(), indent=indent, sort_keys=False, default=json_default)

    def write(self, path: Union[str, Path]) -> None:
        Path(path).write_text(self.to_json() + "\n")
        logger.info(f"✅ Report written to {path}")

    def deterministic_view(self) -> Dict[str, Any]:
        """The report without wall-clock fields"""
        view = self.to_dict()
        view.pop('timings', None)
        return view


def json_default(value: Any) -> Any:
    # numpy scalars and arrays
    if hasattr(value, 'tolist'):
        return value.tolist()
    raise TypeError(f"Object of type {type(value).__name__} is not JSON serializable")
