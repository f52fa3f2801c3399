"""Finite MDPs with exact discounted occupancy measures."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ..errors import NumericalError, ValidationError
from ..risk import check_beta, transformed_reward
from .policies import TabularPolicy

ROW_TOL = 1e-12


@dataclass(frozen=True, eq=False)
class TabularMdp:
    """Finite discounted MDP with ``m + 1`` reward tables.

    ``rewards[0]`` is the objective and ``rewards[1:]`` are the constraint
    rewards, all in reward orientation.
    """

    transition: np.ndarray  # [s, a, s']
    rewards: np.ndarray  # [i, s, a]
    gamma: float
    initial_dist: np.ndarray  # [s]

    def __post_init__(self):
        P = np.array(self.transition, dtype=float)
        R = np.array(self.rewards, dtype=float)
        mu = np.array(self.initial_dist, dtype=float)
        if R.ndim == 2:
            R = R[None]
        if P.ndim != 3 or P.shape[0] != P.shape[2]:
            raise ValidationError(f"transition must be [S, A, S], got shape {P.shape}")
        S, A, _ = P.shape
        if R.ndim != 3 or R.shape[1:] != (S, A):
            raise ValidationError(f"rewards must be [m+1, {S}, {A}], got shape {R.shape}")
        if np.any(P < 0) or np.any(np.abs(P.sum(axis=2) - 1.0) > ROW_TOL):
            raise ValidationError("each transition row must be a distribution summing to 1")
        if mu.shape != (S,) or np.any(mu < 0) or abs(mu.sum() - 1.0) > ROW_TOL:
            raise ValidationError("initial_dist must be a distribution over states")
        if not np.all(np.isfinite(R)):
            raise ValidationError("reward tables must be finite")
        if not 0.0 < float(self.gamma) < 1.0:
            raise ValidationError(f"gamma must lie in (0, 1), got {self.gamma!r}")
        for arr in (P, R, mu):
            arr.setflags(write=False)
        object.__setattr__(self, "transition", P)
        object.__setattr__(self, "rewards", R)
        object.__setattr__(self, "initial_dist", mu)
        object.__setattr__(self, "gamma", float(self.gamma))

    @property
    def n_states(self) -> int:
        return self.transition.shape[0]

    @property
    def n_actions(self) -> int:
        return self.transition.shape[1]

    @property
    def n_rewards(self) -> int:
        return self.rewards.shape[0]

    def reward_range(self, index: int) -> tuple[float, float]:
        r = self.rewards[index]
        return float(r.min()), float(r.max())

    def to_dict(self) -> dict:
        return {
            "schema": "mdp.v1",
            "n_states": self.n_states,
            "n_actions": self.n_actions,
            "n_rewards": self.n_rewards,
            "gamma": self.gamma,
            "transition": self.transition.ravel().tolist(),
            "rewards": self.rewards.ravel().tolist(),
            "initial_dist": self.initial_dist.tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "TabularMdp":
        if d.get("schema") != "mdp.v1":
            raise ValidationError(f"expected schema 'mdp.v1', got {d.get('schema')!r}")
        try:
            S, A, m1 = int(d["n_states"]), int(d["n_actions"]), int(d["n_rewards"])
            P = np.asarray(d["transition"], dtype=float).reshape(S, A, S)
            R = np.asarray(d["rewards"], dtype=float).reshape(m1, S, A)
            return cls(P, R, float(d["gamma"]), np.asarray(d["initial_dist"], dtype=float))
        except (KeyError, TypeError, ValueError) as exc:
            if isinstance(exc, ValidationError):
                raise
            raise ValidationError(f"malformed mdp.v1 document: {exc}") from exc

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict()))

    @classmethod
    def load(cls, path) -> "TabularMdp":
        return cls.from_dict(json.loads(Path(path).read_text()))


@dataclass(frozen=True, eq=False)
class OccupancyMeasure:
    """Discounted state-action occupancy ``nu[s, a]`` (a probability table)."""

    nu: np.ndarray

    @property
    def state_marginal(self) -> np.ndarray:
        return self.nu.sum(axis=1)

    def flow_residual(self, mdp: TabularMdp) -> float:
        """Max violation of ``d = (1 - g) mu + g P^T nu`` over states."""
        inflow = np.einsum("sa,sat->t", self.nu, mdp.transition)
        target = (1.0 - mdp.gamma) * mdp.initial_dist + mdp.gamma * inflow
        return float(np.abs(self.state_marginal - target).max())

    def weights(self) -> np.ndarray:
        """Flattened mass, renormalized to absorb solver round-off."""
        w = self.nu.ravel()
        return w / w.sum()


def _tabular_probs(mdp: TabularMdp, policy) -> np.ndarray:
    if not hasattr(policy, "as_tabular"):
        raise ValidationError("exact occupancy needs a tabular (or one-hot softmax) policy")
    probs = policy.as_tabular().probs
    if probs.shape != (mdp.n_states, mdp.n_actions):
        raise ValidationError(f"policy shape {probs.shape} does not match MDP ({mdp.n_states}, {mdp.n_actions})")
    return probs


def exact_occupancy(mdp: TabularMdp, policy) -> OccupancyMeasure:
    """Solve the discounted flow equations for the policy's occupancy."""
    probs = _tabular_probs(mdp, policy)
    P_pi = np.einsum("sa,sat->st", probs, mdp.transition)
    A = np.eye(mdp.n_states) - mdp.gamma * P_pi.T
    try:
        d = np.linalg.solve(A, (1.0 - mdp.gamma) * mdp.initial_dist)
    except np.linalg.LinAlgError as exc:
        raise NumericalError(f"singular flow system: {exc}") from exc
    if not np.all(np.isfinite(d)):
        raise NumericalError("flow system produced non-finite occupancy")
    nu = np.clip(d, 0.0, None)[:, None] * probs
    nu.setflags(write=False)
    return OccupancyMeasure(nu)


def reward_table(mdp: TabularMdp, reward_index: int, t: float | None = None, beta: float | None = None) -> np.ndarray:
    if not 0 <= reward_index < mdp.n_rewards:
        raise ValidationError(f"reward index {reward_index} out of range [0, {mdp.n_rewards})")
    r = mdp.rewards[reward_index]
    if t is None:
        if beta is not None:
            raise ValidationError("beta given without t")
        return r
    if beta is None:
        raise ValidationError("t given without beta")
    return transformed_reward(r, t, check_beta(beta))


def discounted_value(mdp: TabularMdp, policy, reward_index: int, t: float | None = None, beta: float | None = None) -> float:
    """Exact ``E[sum_k gamma^k r_hat]`` via ``E_nu[r_hat] / (1 - gamma)``.

    ``r_hat`` is the raw reward, or its CVaR transform when ``t`` and
    ``beta`` are both given.
    """
    table = reward_table(mdp, reward_index, t, beta)
    nu = exact_occupancy(mdp, policy).nu
    return float((nu * table).sum() / (1.0 - mdp.gamma))


def truncation_horizon(gamma: float, eps: float = 1e-6) -> int:
    """Smallest ``H`` with ``gamma**H <= eps``.

    Cutting a discounted sum at ``H`` loses at most
    ``eps * max|r| / (1 - gamma)``.
    """
    if not 0.0 < gamma < 1.0:
        raise ValidationError(f"gamma must lie in (0, 1), got {gamma!r}")
    if not 0.0 < eps < 1.0:
        raise ValidationError(f"eps must lie in (0, 1), got {eps!r}")
    H = math.ceil(math.log(eps) / math.log(gamma))
    # guard against log round-off landing one step short
    while gamma**H > eps:
        H += 1
    return H


def random_mdp(
    rng: np.random.Generator,
    n_states: int,
    n_actions: int,
    n_rewards: int = 2,
    gamma: float = 0.9,
    floor: float = 0.0,
    reward_scale: float = 1.0,
) -> TabularMdp:
    """Random MDP with Dirichlet transitions mixed toward uniform by ``floor``."""
    P = rng.dirichlet(np.ones(n_states), size=(n_states, n_actions))
    P = (1.0 - floor) * P + floor / n_states
    P /= P.sum(axis=2, keepdims=True)
    R = reward_scale * rng.uniform(-1.0, 1.0, size=(n_rewards, n_states, n_actions))
    mu = (1.0 - floor) * rng.dirichlet(np.ones(n_states)) + floor / n_states
    return TabularMdp(P, R, gamma, mu / mu.sum())


def random_policy(rng: np.random.Generator, n_states: int, n_actions: int, floor: float = 0.0) -> TabularPolicy:
    p = rng.dirichlet(np.ones(n_actions), size=n_states)
    p = (1.0 - floor) * p + floor / n_actions
    return TabularPolicy(p / p.sum(axis=1, keepdims=True))


def canonical_two_state(gamma: float = 0.9) -> TabularMdp:
    """Two-state, two-action instance with one risk constraint.

    Action 1 steers toward the lucrative state 1, whose constraint reward
    is poor; action 0 steers toward the safe state 0.  Used as the small
    Slater-satisfying test bed for duality and end-to-end checks.
    """
    P = np.array(
        [
            [[0.9, 0.1], [0.2, 0.8]],
            [[0.7, 0.3], [0.1, 0.9]],
        ]
    )
    r0 = np.array([[0.1, 0.3], [0.8, 1.0]])
    r1 = np.array([[0.0, -0.2], [-0.6, -1.0]])
    return TabularMdp(P, np.stack([r0, r1]), gamma, np.array([1.0, 0.0]))
