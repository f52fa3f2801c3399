"""Run configuration: environment, constraints, solver and outer-loop settings."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

from .errors import ValidationError
from .risk import check_beta

ENV_NAMES = ("two_state", "gridnav", "pointmass", "random_mdp", "mdp_file")
SOLVER_NAMES = ("exact", "pg")


@dataclass(frozen=True)
class ConstraintSpec:
    """One risk constraint ``sup_t E_nu[r'_i] >= threshold`` in per-step units.

    With ``orientation="cost"`` the threshold is a cost level ``c`` on the
    original cost variable; the environment already stores ``r_i = -cost``,
    so the reward-orientation threshold is ``-c``.
    """

    index: int
    beta: float = 0.3
    threshold: float = 0.0
    orientation: str = "reward"

    def __post_init__(self):
        if self.index < 1:
            raise ValidationError(f"constraints.index: must be >= 1 (0 is the objective), got {self.index}")
        check_beta(self.beta, "constraints.beta")
        if self.orientation not in ("reward", "cost"):
            raise ValidationError(f"constraints.orientation: unknown value {self.orientation!r}")

    @property
    def reward_threshold(self) -> float:
        return -self.threshold if self.orientation == "cost" else self.threshold


@dataclass(frozen=True)
class SolverConfig:
    name: str = "exact"
    max_env_steps: int = 10**9
    max_updates: int = 10_000
    tolerance: float = 1e-10
    params: dict = field(default_factory=dict)
    warm_start: bool = True

    def __post_init__(self):
        if self.name not in SOLVER_NAMES:
            raise ValidationError(f"solver.name: unknown solver {self.name!r}")


@dataclass(frozen=True)
class RunConfig:
    """Everything one outer-loop run needs.

    Defaults follow the large-scale training protocol: CVaR level 0.3 on constraints,
    step sizes 5e-5, eight trajectories per gradient estimate, multipliers
    starting at zero, no step-size decay.  ``t_init=None`` starts each
    constraint slot mid-box and a risk-neutral objective slot at its upper
    edge (where the transform is the identity).
    """

    env: dict = field(default_factory=lambda: {"name": "two_state", "params": {}})
    objective_beta: float = 1.0
    constraints: tuple[ConstraintSpec, ...] = ()
    solver: SolverConfig = field(default_factory=SolverConfig)
    iterations: int = 100
    batch_size: int = 8
    eta_t: float = 5e-5
    eta_lambda: float = 5e-5
    lambda_init: float = 0.0
    lambda_max: float = 100.0
    t_init: tuple[float, ...] | None = None
    t_boxes: tuple[tuple[float, float], ...] | None = None
    eps_trunc: float = 1e-6
    horizon: int | None = None
    history_size: int = 100_000
    seed: int = 0
    out_dir: str | None = None

    def __post_init__(self):
        constraints = tuple(c if isinstance(c, ConstraintSpec) else ConstraintSpec(**c) for c in self.constraints)
        object.__setattr__(self, "constraints", constraints)
        if not isinstance(self.solver, SolverConfig):
            object.__setattr__(self, "solver", SolverConfig(**self.solver))
        if self.t_init is not None:
            object.__setattr__(self, "t_init", tuple(float(x) for x in self.t_init))
        if self.t_boxes is not None:
            object.__setattr__(self, "t_boxes", tuple((float(lo), float(hi)) for lo, hi in self.t_boxes))
        if not isinstance(self.env, dict) or self.env.get("name") not in ENV_NAMES:
            raise ValidationError(f"env.name: expected one of {ENV_NAMES}, got {self.env.get('name')!r}")
        check_beta(self.objective_beta, "objective_beta")
        idx = [c.index for c in constraints]
        if sorted(idx) != list(range(1, len(idx) + 1)):
            raise ValidationError(f"constraints.index: expected indices 1..{len(idx)}, got {idx}")
        if self.iterations < 1:
            raise ValidationError("iterations: must be >= 1")
        if self.batch_size < 1:
            raise ValidationError("batch_size: must be >= 1")
        if self.eta_t <= 0 or self.eta_lambda <= 0:
            raise ValidationError("eta_t / eta_lambda: step sizes must be positive")
        if self.lambda_max <= 0 or not 0 <= self.lambda_init <= self.lambda_max:
            raise ValidationError("lambda_init: must lie in [0, lambda_max] with lambda_max > 0")
        if not 0 < self.eps_trunc < 1:
            raise ValidationError("eps_trunc: must lie in (0, 1)")
        m1 = len(constraints) + 1
        if self.t_init is not None and len(self.t_init) != m1:
            raise ValidationError(f"t_init: expected {m1} entries, got {len(self.t_init)}")
        if self.t_boxes is not None:
            if len(self.t_boxes) != m1:
                raise ValidationError(f"t_boxes: expected {m1} intervals, got {len(self.t_boxes)}")
            if any(lo > hi for lo, hi in self.t_boxes):
                raise ValidationError("t_boxes: each interval needs lo <= hi")

    @property
    def m(self) -> int:
        return len(self.constraints)

    @property
    def betas(self) -> tuple[float, ...]:
        return (self.objective_beta, *(c.beta for c in self.constraints))

    @property
    def thresholds(self) -> tuple[float, ...]:
        return tuple(c.reward_threshold for c in self.constraints)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["constraints"] = [asdict(c) for c in self.constraints]
        d["t_init"] = None if self.t_init is None else list(self.t_init)
        d["t_boxes"] = None if self.t_boxes is None else [list(b) for b in self.t_boxes]
        return {"schema": "config.v1", **d}

    @classmethod
    def from_dict(cls, d: dict) -> "RunConfig":
        from .schemas import validate

        validate(d, "config.v1")
        d = {k: v for k, v in d.items() if k != "schema"}
        return cls(**d)

    @classmethod
    def load(cls, path) -> "RunConfig":
        try:
            data = json.loads(Path(path).read_text())
        except json.JSONDecodeError as exc:
            raise ValidationError(f"config is not valid JSON: {exc}") from exc
        return cls.from_dict(data)

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n")
