"""A noisy 1-D point mass with a velocity constraint."""

from __future__ import annotations

import numpy as np

from ..errors import ValidationError


class PointMass:
    """Batched point mass driven by a scalar action in ``[-1, 1]``.

    Each step adds zero-mean Gaussian noise to the action, clips it to the
    action range and integrates

        v <- clip(a * accel + v * (1 - drag), -v_max, v_max),   x <- x + v.

    The observation is the velocity.  Rewards are ``[v, -|v|]``: forward
    progress and the velocity cost mapped to reward orientation.  Every
    episode starts from rest at the origin.
    """

    discrete = False

    def __init__(
        self,
        vel_threshold: float,
        action_noise_std: float = 0.05,
        accel: float = 0.6,
        drag: float = 0.5,
        v_max: float = 1.0,
        step_limit: int = 200,
        gamma: float = 0.99,
    ):
        if vel_threshold <= 0:
            raise ValidationError(f"vel_threshold must be positive, got {vel_threshold!r}")
        if action_noise_std < 0:
            raise ValidationError("action_noise_std must be nonnegative")
        if not 0.0 < drag <= 1.0 or accel <= 0 or v_max <= 0:
            raise ValidationError("need accel > 0, v_max > 0 and drag in (0, 1]")
        self.vel_threshold = float(vel_threshold)
        self.action_noise_std = float(action_noise_std)
        self.accel = float(accel)
        self.drag = float(drag)
        self.v_max = float(v_max)
        self.step_limit = int(step_limit)
        self.gamma = float(gamma)
        self.n_rewards = 2
        self.x = np.zeros(0)
        self.v = np.zeros(0)
        self.last_noise = np.zeros(0)

    def params(self) -> dict:
        return dict(
            vel_threshold=self.vel_threshold,
            action_noise_std=self.action_noise_std,
            accel=self.accel,
            drag=self.drag,
            v_max=self.v_max,
            step_limit=self.step_limit,
            gamma=self.gamma,
        )

    def reward_bounds(self) -> list[tuple[float, float]]:
        return [(-self.v_max, self.v_max), (-self.v_max, 0.0)]

    def reset(self, n: int, rng: np.random.Generator) -> np.ndarray:
        self.x = np.zeros(n)
        self.v = np.zeros(n)
        return self.v[:, None].copy()

    def observation(self) -> np.ndarray:
        return self.v[:, None].copy()

    def step(self, actions, rng: np.random.Generator):
        a = np.asarray(actions, dtype=float).reshape(self.v.shape[0])
        self.last_noise = self.action_noise_std * rng.standard_normal(a.shape[0])
        executed = np.clip(a + self.last_noise, -1.0, 1.0)
        self.v = np.clip(executed * self.accel + self.v * (1.0 - self.drag), -self.v_max, self.v_max)
        self.x = self.x + self.v
        rewards = np.stack([self.v, -np.abs(self.v)], axis=1)
        return self.v[:, None].copy(), rewards, np.zeros(a.shape[0], dtype=bool)


def make_pointmass(vel_threshold: float, action_noise_std: float = 0.05, **kwargs) -> PointMass:
    return PointMass(vel_threshold, action_noise_std, **kwargs)


class ConstantAction:
    """Open-loop policy that always requests the same action."""

    discrete = False

    def __init__(self, value: float):
        self.value = float(value)

    def sample(self, obs, rng):
        return np.full((len(obs), 1), self.value)

    def mean_action(self, obs):
        return self.sample(obs, None)


def velocity_threshold_protocol(
    fraction: float = 0.5,
    n_episodes: int = 10,
    seed: int = 0,
    policy=None,
    **env_kwargs,
) -> float:
    """Threshold set to ``fraction`` of the peak speed of an unconstrained agent.

    The default agent is full throttle, which maximizes progress here.
    """
    from .rollout import collect

    env = PointMass(vel_threshold=1.0, **env_kwargs)
    policy = ConstantAction(1.0) if policy is None else policy
    batch = collect(env, policy, n_episodes, env.step_limit, seed)
    return float(fraction * np.abs(batch.rewards[..., 1]).max())
