"""Projected stochastic gradient descent-ascent around a black-box policy solver.

The outer loop alternates: solve the shaped-reward problem at the current
``(t, lambda)``, roll out the returned policy, estimate subgradients, then
step ``lambda`` down and ``t`` up and project back onto their boxes.
"""

from __future__ import annotations

import json
import math
import tempfile
from collections import deque
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .config import RunConfig
from .envs.policies import TabularPolicy, policy_from_dict
from .envs.registry import build_env
from .envs.rollout import collect
from .envs.tabular import exact_occupancy, truncation_horizon
from .errors import NumericalError, ValidationError
from .gradients import GradEstimate, batch_gradients
from .schemas import validate
from .seeding import as_seed_sequence, child_rng, child_seed
from .solvers import SolverBudget, make_solver
from .solvers.shaping import ShapedRewardSpec


@dataclass(frozen=True)
class ProjectionBoxes:
    """Interval boxes for ``t`` (one per reward index) and ``lambda`` (``[0, lambda_max]``)."""

    t_boxes: tuple[tuple[float, float], ...]
    lambda_max: float
    m: int = -1

    def __post_init__(self):
        boxes = tuple((float(lo), float(hi)) for lo, hi in self.t_boxes)
        if any(lo > hi for lo, hi in boxes):
            raise ValidationError("each t-box needs lo <= hi")
        if self.lambda_max <= 0:
            raise ValidationError("lambda_max must be positive")
        object.__setattr__(self, "t_boxes", boxes)
        object.__setattr__(self, "m", len(boxes) - 1)

    @classmethod
    def from_reward_bounds(cls, bounds, lambda_max: float = 100.0) -> "ProjectionBoxes":
        """The tightest boxes allowed: each ``T_i`` is exactly ``[min r_i, max r_i]``."""
        return cls(tuple(bounds), lambda_max)

    @property
    def lower(self) -> np.ndarray:
        return np.array([b[0] for b in self.t_boxes])

    @property
    def upper(self) -> np.ndarray:
        return np.array([b[1] for b in self.t_boxes])

    def project_t(self, t) -> np.ndarray:
        return np.clip(np.asarray(t, dtype=float), self.lower, self.upper)

    def project_lambda(self, lam) -> np.ndarray:
        return np.clip(np.asarray(lam, dtype=float), 0.0, self.lambda_max)

    def contains(self, t, lam) -> bool:
        t, lam = np.asarray(t), np.asarray(lam)
        return bool(np.all(t >= self.lower) and np.all(t <= self.upper)
                    and np.all(lam >= 0) and np.all(lam <= self.lambda_max))

    def check_covers(self, bounds) -> None:
        """Bounded-t requirement: each box must contain its reward range."""
        for i, ((lo, hi), (rlo, rhi)) in enumerate(zip(self.t_boxes, bounds)):
            if lo > rlo or hi < rhi:
                raise ValidationError(f"t_boxes[{i}] = [{lo}, {hi}] does not contain the reward range [{rlo}, {rhi}]")

    @property
    def diam_lambda(self) -> float:
        return self.lambda_max * math.sqrt(max(self.m, 1))


@dataclass(frozen=True, eq=False)
class HistoryEntry:
    j: int
    t: np.ndarray
    lam: np.ndarray
    objective: float
    constraints: np.ndarray
    g_t: np.ndarray
    g_lambda: np.ndarray
    proxy: float


@dataclass(frozen=True, eq=False)
class SgdaState:
    j: int
    t: np.ndarray
    lam: np.ndarray
    eta_t: float
    eta_lambda: float
    history: deque = field(default_factory=lambda: deque(maxlen=100_000))

    def to_dict(self, boxes: ProjectionBoxes) -> dict:
        return {
            "iteration": self.j,
            "t": self.t.tolist(),
            "lambda": self.lam.tolist(),
            "eta_t": self.eta_t,
            "eta_lambda": self.eta_lambda,
            "boxes": {"t_boxes": [list(b) for b in boxes.t_boxes], "lambda_max": boxes.lambda_max},
        }


def initial_state(boxes: ProjectionBoxes, betas, eta_t: float, eta_lambda: float, t_init=None,
                  lambda_init: float = 0.0, history_size: int = 100_000) -> SgdaState:
    """Start mid-box, except a risk-neutral slot starts at its upper edge."""
    if t_init is None:
        t0 = np.array([hi if b == 1.0 else 0.5 * (lo + hi) for (lo, hi), b in zip(boxes.t_boxes, betas)])
    else:
        t0 = np.asarray(t_init, dtype=float)
    lam0 = np.full(boxes.m, float(lambda_init))
    return SgdaState(0, boxes.project_t(t0), boxes.project_lambda(lam0), float(eta_t), float(eta_lambda),
                     deque(maxlen=history_size))


def estimate_gradients(batch, state: SgdaState, betas, thresholds, gamma: float) -> GradEstimate:
    """Batch subgradients at the state's ``(t, lambda)``; accepts trajectories or a rollout batch."""
    return batch_gradients(batch, state.t, state.lam, betas, thresholds, gamma)


def gradient_mapping(t, g_t, boxes: ProjectionBoxes, eta_t: float) -> float:
    """``||t - Proj(t + eta g)|| / eta``: zero exactly at fixed points of the projected step."""
    t = np.asarray(t, dtype=float)
    return float(np.linalg.norm(t - boxes.project_t(t + eta_t * np.asarray(g_t))) / eta_t)


def sgda_step(state: SgdaState, grads: GradEstimate, boxes: ProjectionBoxes) -> SgdaState:
    """``lambda <- Proj(lambda - eta g_lambda)``, ``t <- Proj(t + eta g_t)``, simultaneously."""
    if grads.g_t.shape != state.t.shape or grads.g_lambda.shape != state.lam.shape:
        raise ValidationError("gradient dimensions do not match the state")
    lam = boxes.project_lambda(state.lam - state.eta_lambda * grads.g_lambda)
    t = boxes.project_t(state.t + state.eta_t * grads.g_t)
    state.history.append(HistoryEntry(
        j=state.j,
        t=state.t.copy(),
        lam=state.lam.copy(),
        objective=grads.objective,
        constraints=np.asarray(grads.constraints, dtype=float).copy(),
        g_t=grads.g_t.copy(),
        g_lambda=grads.g_lambda.copy(),
        proxy=gradient_mapping(state.t, grads.g_t, boxes, state.eta_t),
    ))
    return replace(state, j=state.j + 1, t=t, lam=lam)


def stationarity_proxy(window) -> float:
    """Windowed mean of the t gradient-mapping norm.

    This stands in for the gradient norm of the Moreau envelope used by the
    stationarity definition; it is a computable approximation, not that
    quantity itself.
    """
    window = list(window)
    if not window:
        raise ValidationError("stationarity proxy needs a nonempty window")
    return float(np.mean([e.proxy for e in window]))


def theory_step_sizes(ell: float, sigma: float, delta: float, C: float, diam_lambda: float,
                      epsilon: float) -> tuple[float, float]:
    """Step sizes of the convergence theorem with every hidden constant set to 1.

        eta_lambda = min(1/(2 ell), eps^2 / (16 ell (sigma^2 + delta^2)))
        eta_t = min(eps^2 / (ell (C^2 + s)),
                    eps^4 / (ell^3 D^2 C sqrt(C^2 + s)),
                    eps^6 / (ell^3 D^2 s C sqrt(C^2 + s)))

    with ``s = sigma^2 + delta^2`` and ``D = diam(Lambda)``.  Terms whose
    denominator vanishes (noise-free, unbiased oracle) drop out of the min.
    Returns ``(eta_t, eta_lambda)``.
    """
    for name, v in (("ell", ell), ("C", C), ("diam_lambda", diam_lambda), ("epsilon", epsilon)):
        if not v > 0:
            raise ValidationError(f"{name} must be positive, got {v!r}")
    for name, v in (("sigma", sigma), ("delta", delta)):
        if v < 0:
            raise ValidationError(f"{name} must be nonnegative, got {v!r}")
    s = sigma**2 + delta**2
    eta_lambda = 1.0 / (2.0 * ell)
    if s > 0:
        eta_lambda = min(eta_lambda, epsilon**2 / (16.0 * ell * s))
    root = C * math.sqrt(C**2 + s)
    terms = [
        epsilon**2 / (ell * (C**2 + s)),
        epsilon**4 / (ell**3 * diam_lambda**2 * root),
    ]
    if s > 0:
        terms.append(epsilon**6 / (ell**3 * diam_lambda**2 * s * root))
    return min(terms), eta_lambda


def theory_iteration_bound(ell: float, sigma: float, delta: float, C: float, diam_lambda: float,
                           epsilon: float, delta_phi: float, delta_0: float) -> float:
    """Iteration count of the convergence theorem, unit constants.

        (ell^3 (C^2 + s) D^2 dPhi / eps^6 + ell^3 D^2 d0 / eps^4) * max(1, s / eps^2)
    """
    s = sigma**2 + delta**2
    base = ell**3 * (C**2 + s) * diam_lambda**2 * delta_phi / epsilon**6 + ell**3 * diam_lambda**2 * delta_0 / epsilon**4
    return base * max(1.0, s / epsilon**2)


@dataclass(eq=False)
class RunResult:
    config: RunConfig
    state: SgdaState
    boxes: ProjectionBoxes
    final_policy: object
    sampled_policy: object
    sampled_index: int
    mixture_policy: TabularPolicy | None
    history: list[HistoryEntry]
    env: object = None
    mdp: object = None

    def checkpoint(self) -> dict:
        # the output location is not part of the run, so checkpoints do not record it
        return {"schema": "ckpt.v1", **self.state.to_dict(self.boxes), "policy": self.final_policy.to_dict(),
                "config": replace(self.config, out_dir=None).to_dict()}


def boxes_for(config: RunConfig, env) -> ProjectionBoxes:
    bounds = env.reward_bounds()
    if len(bounds) != config.m + 1:
        raise ValidationError(f"environment has {len(bounds)} rewards but the config declares {config.m} constraints")
    if config.t_boxes is None:
        return ProjectionBoxes.from_reward_bounds(bounds, config.lambda_max)
    boxes = ProjectionBoxes(config.t_boxes, config.lambda_max)
    boxes.check_covers(bounds)
    return boxes


def _dump(state: SgdaState, grads: GradEstimate | None, out_dir, reason: str) -> Path:
    base = Path(out_dir) if out_dir else Path(tempfile.mkdtemp(prefix="ocecrl-"))
    base.mkdir(parents=True, exist_ok=True)
    path = base / "diagnostic_dump.json"
    payload = {
        "reason": reason,
        "iteration": state.j,
        "t": state.t.tolist(),
        "lambda": state.lam.tolist(),
        "g_t": None if grads is None else [repr(float(x)) for x in grads.g_t],
        "g_lambda": None if grads is None else [repr(float(x)) for x in grads.g_lambda],
    }
    path.write_text(json.dumps(payload, indent=2) + "\n")
    return path


def run(config: RunConfig, env=None, solver=None, callback=None) -> RunResult:
    """Run the outer loop for ``config.iterations`` iterations.

    Returns the final iterate, the uniformly sampled iterate of the
    algorithm's return rule (the index is drawn before the loop starts), and
    for tabular problems the stationary policy whose occupancy is the average
    of all iterates' occupancies, which is what the sampled iterate achieves
    in expectation.
    """
    if env is None:
        env, mdp = build_env(config.env)
    else:
        mdp = getattr(env, "mdp", None)
    solver = solver or make_solver(config.solver.name, **config.solver.params)
    budget = SolverBudget(config.solver.max_env_steps, config.solver.max_updates, config.solver.tolerance)
    boxes = boxes_for(config, env)
    betas, thresholds = config.betas, config.thresholds
    state = initial_state(boxes, betas, config.eta_t, config.eta_lambda, config.t_init, config.lambda_init,
                          config.history_size)
    H = config.horizon or truncation_horizon(env.gamma, config.eps_trunc)
    seq = as_seed_sequence(config.seed)
    J = config.iterations
    sampled_index = int(child_rng(seq, 2).integers(J))

    target = mdp if (mdp is not None and config.solver.name == "exact") else env
    policy = sampled = None
    occupancy_sum = None
    for j in range(J):
        spec = ShapedRewardSpec(state.t, state.lam, betas, thresholds)
        init = policy if (config.solver.warm_start and policy is not None and config.solver.name == "pg") else None
        report = solver.solve(target, spec, budget, child_seed(seq, 0, j), init)
        policy = report.policy
        batch = collect(env, policy, config.batch_size, H, child_rng(seq, 1, j))
        try:
            grads = batch_gradients(batch, state.t, state.lam, betas, thresholds, env.gamma)
        except ValidationError as exc:
            path = _dump(state, None, config.out_dir, str(exc))
            raise NumericalError(f"non-finite gradient estimate at iteration {j}; diagnostics in {path}") from exc
        if not np.isfinite(grads.objective) or not np.all(np.isfinite(grads.constraints)):
            path = _dump(state, grads, config.out_dir, "non-finite objective or constraint estimate")
            raise NumericalError(f"non-finite estimate at iteration {j}; diagnostics in {path}")
        if j == sampled_index:
            sampled = policy
        if mdp is not None:
            nu = exact_occupancy(mdp, policy.as_tabular()).nu
            occupancy_sum = nu if occupancy_sum is None else occupancy_sum + nu
        state = sgda_step(state, grads, boxes)
        if callback is not None:
            callback(state, report, grads)

    mixture = None
    if occupancy_sum is not None:
        mixture = policy_from_occupancy(occupancy_sum / J)
    return RunResult(config, state, boxes, policy, sampled, sampled_index, mixture, list(state.history), env, mdp)


def policy_from_occupancy(nu: np.ndarray) -> TabularPolicy:
    """Stationary policy inducing ``nu``; unvisited states act uniformly."""
    mass = nu.sum(axis=1, keepdims=True)
    probs = np.where(mass > 0, nu / np.where(mass > 0, mass, 1.0), 1.0 / nu.shape[1])
    return TabularPolicy(probs / probs.sum(axis=1, keepdims=True))


def load_checkpoint(path) -> tuple[dict, object]:
    """Parse and validate a ``ckpt.v1`` file; returns ``(checkpoint, policy)``."""
    try:
        data = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ValidationError(f"cannot read checkpoint {path}: {exc}") from exc
    validate(data, "ckpt.v1")
    return data, policy_from_dict(data["policy"])
