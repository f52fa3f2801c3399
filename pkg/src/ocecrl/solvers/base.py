from __future__ import annotations

from dataclasses import dataclass
from typing import Any

import numpy as np

from ..errors import ValidationError


@dataclass(frozen=True)
class SolverBudget:
    max_env_steps: int = 10**9
    max_updates: int = 10_000
    tolerance: float = 1e-10

    def __post_init__(self):
        # zero updates is allowed: the solver then returns its initial policy
        if self.max_env_steps < 0 or self.max_updates < 0 or self.tolerance <= 0:
            raise ValidationError(f"invalid solver budget {self}")


@dataclass(frozen=True, eq=False)
class SolverReport:
    policy: Any
    attained_value: float
    steps_used: int
    converged: bool
    value_function: np.ndarray | None = None
