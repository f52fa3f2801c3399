"""Batched rollouts and trajectory containers."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ..errors import ValidationError
from .tabular import TabularMdp


class TabularEnv:
    """Batched simulator for a :class:`TabularMdp`.

    A handle owns the current states of its batch; use one handle per
    concurrent worker.
    """

    discrete = True

    def __init__(self, mdp: TabularMdp, step_limit: int | None = None):
        self.mdp = mdp
        self.step_limit = step_limit
        self._cum_P = np.cumsum(mdp.transition, axis=2)
        self._cum_mu = np.cumsum(mdp.initial_dist)
        self._s = np.zeros(0, dtype=int)

    @property
    def gamma(self) -> float:
        return self.mdp.gamma

    @property
    def n_rewards(self) -> int:
        return self.mdp.n_rewards

    def reward_bounds(self) -> list[tuple[float, float]]:
        return [self.mdp.reward_range(i) for i in range(self.mdp.n_rewards)]

    def reset(self, n: int, rng: np.random.Generator) -> np.ndarray:
        u = rng.random(n)
        self._s = np.minimum((self._cum_mu[None, :] <= u[:, None]).sum(axis=1), self.mdp.n_states - 1)
        return self._s.copy()

    def observation(self) -> np.ndarray:
        return self._s.copy()

    def step(self, actions, rng: np.random.Generator):
        a = np.asarray(actions, dtype=int)
        s = self._s
        rewards = self.mdp.rewards[:, s, a].T
        u = rng.random(s.shape[0])
        cum = self._cum_P[s, a]
        self._s = np.minimum((cum <= u[:, None]).sum(axis=1), self.mdp.n_states - 1)
        return self._s.copy(), rewards, np.zeros(s.shape[0], dtype=bool)


@dataclass(frozen=True, eq=False)
class Trajectory:
    """One rollout: per-step state, action and reward vector ``r_0..r_m``."""

    states: np.ndarray
    actions: np.ndarray
    rewards: np.ndarray  # [T, m+1]

    def __post_init__(self):
        if self.rewards.ndim != 2:
            raise ValidationError("trajectory rewards must be [steps, m+1]")
        if not (len(self.states) == len(self.actions) == len(self.rewards)):
            raise ValidationError("trajectory arrays must share the step dimension")

    @property
    def truncated_at(self) -> int:
        return len(self.rewards)

    @property
    def steps(self) -> list[tuple]:
        return list(zip(self.states.tolist(), self.actions.tolist(), self.rewards.tolist()))


@dataclass(frozen=True, eq=False)
class RolloutBatch:
    """Equal-length rollouts stored as arrays of shape ``[n, T, ...]``."""

    states: np.ndarray
    actions: np.ndarray
    rewards: np.ndarray  # [n, T, m+1]

    @property
    def n(self) -> int:
        return self.rewards.shape[0]

    @property
    def horizon(self) -> int:
        return self.rewards.shape[1]

    def trajectories(self) -> list[Trajectory]:
        return [Trajectory(self.states[k], self.actions[k], self.rewards[k]) for k in range(self.n)]


def collect(env, policy, n: int, horizon: int, rng, deterministic: bool = False) -> RolloutBatch:
    """Run ``n`` rollouts side by side for ``horizon`` steps (or the env's limit).

    ``rng`` may be a generator or an integer seed.  With
    ``deterministic=True`` the policy's mean action is used.
    """
    if horizon < 1:
        raise ValidationError(f"horizon must be >= 1, got {horizon}")
    if n < 1:
        raise ValidationError(f"batch size must be >= 1, got {n}")
    rng = np.random.default_rng(rng) if not isinstance(rng, np.random.Generator) else rng
    T = horizon if env.step_limit is None else min(horizon, env.step_limit)
    obs = env.reset(n, rng)
    states, actions, rewards = [], [], []
    for _ in range(T):
        a = policy.mean_action(obs) if deterministic else policy.sample(obs, rng)
        nxt, r, done = env.step(a, rng)
        states.append(obs)
        actions.append(a)
        rewards.append(r)
        obs = nxt
        if done.all():
            break
    return RolloutBatch(np.stack(states, axis=1), np.stack(actions, axis=1), np.stack(rewards, axis=1))


def rollout(env, policy, horizon: int, seed, deterministic: bool = False) -> Trajectory:
    """A single reproducible trajectory."""
    return collect(env, policy, 1, horizon, seed, deterministic).trajectories()[0]


def rollout_batch(env, policy, n: int, horizon: int, seed, deterministic: bool = False) -> list[Trajectory]:
    return collect(env, policy, n, horizon, seed, deterministic).trajectories()


def write_trajectory_csv(traj: Trajectory, path) -> None:
    """Write ``step, state, action, r_0..r_m`` rows."""
    m1 = traj.rewards.shape[1]
    st = np.asarray(traj.states).reshape(traj.truncated_at, -1)
    ac = np.asarray(traj.actions).reshape(traj.truncated_at, -1)
    s_cols = ["state"] if st.shape[1] == 1 else [f"state_{j}" for j in range(st.shape[1])]
    a_cols = ["action"] if ac.shape[1] == 1 else [f"action_{j}" for j in range(ac.shape[1])]
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["step", *s_cols, *a_cols, *[f"r_{i}" for i in range(m1)]])
        for k in range(traj.truncated_at):
            w.writerow([k, *map(repr_num, st[k]), *map(repr_num, ac[k]), *map(repr_num, traj.rewards[k])])


def repr_num(x) -> str:
    x = x.item() if hasattr(x, "item") else x
    return str(x) if isinstance(x, (int, np.integer)) else repr(float(x))
