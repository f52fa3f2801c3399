"""Clipped-surrogate policy gradient on the shaped reward."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..envs.policies import GaussianLinearPolicy, SoftmaxLinearPolicy
from ..envs.rollout import TabularEnv, collect
from ..envs.tabular import TabularMdp, truncation_horizon
from ..errors import ValidationError
from ..seeding import as_seed_sequence, child_rng
from .base import SolverBudget, SolverReport
from .shaping import ShapedRewardSpec, shaped_rewards


@dataclass
class Adam:
    lr: float
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-6

    def __post_init__(self):
        self.m: list[np.ndarray] | None = None
        self.v: list[np.ndarray] | None = None
        self.k = 0

    def ascend(self, params: list[np.ndarray], grads: list[np.ndarray]) -> None:
        if self.m is None:
            self.m = [np.zeros_like(p) for p in params]
            self.v = [np.zeros_like(p) for p in params]
        self.k += 1
        for p, g, m, v in zip(params, grads, self.m, self.v):
            m *= self.beta1
            m += (1 - self.beta1) * g
            v *= self.beta2
            v += (1 - self.beta2) * g * g
            mhat = m / (1 - self.beta1**self.k)
            vhat = v / (1 - self.beta2**self.k)
            p += self.lr * mhat / (np.sqrt(vhat) + self.eps)


def discounted_returns(rewards: np.ndarray, gamma: float) -> np.ndarray:
    """``sum_tau gamma^tau r_tau`` along axis 1 of an ``[n, T]`` array."""
    disc = gamma ** np.arange(rewards.shape[1])
    return rewards @ disc


def gae(rewards, values, last_values, gamma: float, lam: float) -> tuple[np.ndarray, np.ndarray]:
    """Generalized advantage estimates for ``[n, T]`` rewards, bootstrapping past the last step."""
    n, T = rewards.shape
    adv = np.zeros((n, T))
    running = np.zeros(n)
    nxt = last_values
    for k in range(T - 1, -1, -1):
        delta = rewards[:, k] + gamma * nxt - values[:, k]
        running = delta + gamma * lam * running
        adv[:, k] = running
        nxt = values[:, k]
    return adv, adv + values


class PGSolver:
    """Clipped-surrogate policy gradient with a least-squares value baseline.

    Each update collects ``n_envs`` rollouts of ``horizon`` steps from the
    initial distribution, scores the current policy by the batch mean of
    the discounted shaped return, and takes ``epochs`` passes of minibatch
    Adam ascent on the clipped surrogate.  The best-scoring iterate is
    returned.  Update ``k`` draws its randomness from ``(seed, k)``, so a
    larger budget replays the smaller budget's iterates and then continues.
    """

    name = "pg"

    def __init__(
        self,
        budget: SolverBudget | None = None,
        lr: float = 0.05,
        clip: float = 0.2,
        gae_lambda: float = 0.95,
        epochs: int = 10,
        minibatches: int = 4,
        n_envs: int = 16,
        horizon: int | None = None,
        init: str = "zeros",
        init_log_std: float = -0.5,
        log_std_bounds=(-5.0, 1.0),
        value_ridge: float = 1e-3,
    ):
        if init not in ("zeros", "random"):
            raise ValidationError(f"unknown init {init!r}")
        if not 0 < clip < 1 or not 0 <= gae_lambda <= 1 or lr <= 0:
            raise ValidationError("need 0 < clip < 1, 0 <= gae_lambda <= 1 and lr > 0")
        if epochs < 1 or minibatches < 1 or n_envs < 1:
            raise ValidationError("epochs, minibatches and n_envs must be positive")
        self.budget = budget or SolverBudget(max_env_steps=10**7, max_updates=50, tolerance=1e-6)
        self.lr = lr
        self.clip = clip
        self.gae_lambda = gae_lambda
        self.epochs = epochs
        self.minibatches = minibatches
        self.n_envs = n_envs
        self.horizon = horizon
        self.init = init
        self.init_log_std = init_log_std
        self.log_std_bounds = log_std_bounds
        self.value_ridge = value_ridge

    def _env(self, mdp_or_env):
        return TabularEnv(mdp_or_env) if isinstance(mdp_or_env, TabularMdp) else mdp_or_env

    def _horizon(self, env) -> int:
        if self.horizon is not None:
            return self.horizon
        h = truncation_horizon(env.gamma, 1e-2)
        return h if env.step_limit is None else min(h, env.step_limit)

    def initial_policy(self, env, rng: np.random.Generator):
        if env.discrete:
            S, A = env.mdp.n_states, env.mdp.n_actions
            w = rng.standard_normal((S, A)) if self.init == "random" else np.zeros((S, A))
            return SoftmaxLinearPolicy(w, "onehot")
        obs_dim = 1
        w = rng.standard_normal((obs_dim + 1, 1)) if self.init == "random" else np.zeros((obs_dim + 1, 1))
        return GaussianLinearPolicy(w, [self.init_log_std], self.log_std_bounds)

    def _value_features(self, env, obs: np.ndarray) -> np.ndarray:
        if env.discrete:
            out = np.zeros((obs.shape[0], env.mdp.n_states))
            out[np.arange(obs.shape[0]), obs.astype(int)] = 1.0
            return out
        x = obs.reshape(obs.shape[0], -1)
        return np.hstack([np.ones((x.shape[0], 1)), x, x**2, np.abs(x)])

    def _fit_values(self, feats: np.ndarray, targets: np.ndarray) -> np.ndarray:
        A = feats.T @ feats + self.value_ridge * np.eye(feats.shape[1])
        return np.linalg.solve(A, feats.T @ targets)

    def _grads(self, policy, obs, acts, adv, logp_old):
        logp = policy.log_prob(obs, acts)
        ratio = np.exp(logp - logp_old)
        active = ((adv >= 0) & (ratio < 1 + self.clip)) | ((adv < 0) & (ratio > 1 - self.clip))
        coef = np.where(active, ratio * adv, 0.0) / len(adv)
        if isinstance(policy, SoftmaxLinearPolicy):
            probs = policy.action_probs(obs)
            onehot = np.zeros_like(probs)
            onehot[np.arange(len(acts)), acts.astype(int)] = 1.0
            return [policy.phi(obs).T @ (coef[:, None] * (onehot - probs))]
        mu = policy.mean(obs)
        var = np.exp(2 * policy.log_std)
        diff = acts.reshape(mu.shape) - mu
        g_w = policy.phi(obs).T @ (coef[:, None] * diff / var)
        g_s = (coef[:, None] * (diff**2 / var - 1.0)).sum(axis=0)
        return [g_w, g_s]

    def _params(self, policy) -> list[np.ndarray]:
        if isinstance(policy, SoftmaxLinearPolicy):
            return [policy.weights]
        return [policy.mean_weights, policy.log_std]

    def solve(self, mdp_or_env, spec: ShapedRewardSpec, budget: SolverBudget | None = None, seed=0,
              init_policy=None) -> SolverReport:
        env = self._env(mdp_or_env)
        budget = budget or self.budget
        if env.n_rewards != spec.m + 1:
            raise ValidationError(f"environment has {env.n_rewards} rewards, spec expects {spec.m + 1}")
        seed_seq = as_seed_sequence(seed)
        init_rng = child_rng(seed_seq, 0)
        policy = init_policy.copy() if init_policy is not None else self.initial_policy(env, init_rng)
        gamma = env.gamma
        T = self._horizon(env)
        n = self.n_envs
        optim = Adam(self.lr)

        best_value, best_policy = -np.inf, policy.copy()
        steps = 0
        last_scores: list[float] = []
        for k in range(budget.max_updates + 1):
            if steps + n * T > budget.max_env_steps:
                break
            rng = child_rng(seed_seq, 1, k)
            batch = collect(env, policy, n, T, rng)
            steps += batch.n * batch.horizon
            shaped = shaped_rewards(spec, batch.rewards)
            score = float(discounted_returns(shaped, gamma).mean())
            last_scores.append(score)
            if score > best_value:
                best_value, best_policy = score, policy.copy()
            if k == budget.max_updates:
                break
            self._update(env, policy, optim, batch, shaped, gamma, rng)

        converged = len(last_scores) >= 2 and abs(last_scores[-1] - last_scores[-2]) <= budget.tolerance
        return SolverReport(
            policy=best_policy,
            attained_value=best_value if np.isfinite(best_value) else float("nan"),
            steps_used=steps,
            converged=converged,
        )

    def _update(self, env, policy, optim: Adam, batch, shaped, gamma, rng) -> None:
        n, T = shaped.shape
        obs = batch.states.reshape(n * T, -1) if not env.discrete else batch.states.reshape(n * T)
        acts = batch.actions.reshape(n * T, -1) if not env.discrete else batch.actions.reshape(n * T)
        feats = self._value_features(env, obs)

        # bootstrap values past the truncation from the state after the last step
        last_obs = env.observation()
        # two rounds of fitted evaluation give a reasonable baseline for the advantages
        w = np.zeros(feats.shape[1])
        for _ in range(2):
            values = (feats @ w).reshape(n, T)
            last_values = self._value_features(env, last_obs) @ w
            _, targets = gae(shaped, values, last_values, gamma, 1.0)
            w = self._fit_values(feats, targets.reshape(-1))
        values = (feats @ w).reshape(n, T)
        last_values = self._value_features(env, last_obs) @ w
        adv, _ = gae(shaped, values, last_values, gamma, self.gae_lambda)
        adv = adv.reshape(-1)
        adv = (adv - adv.mean()) / (adv.std() + 1e-8)

        logp_old = policy.log_prob(obs, acts)
        params = self._params(policy)
        N = n * T
        size = max(1, N // self.minibatches)
        for _ in range(self.epochs):
            order = rng.permutation(N)
            for start in range(0, N, size):
                idx = order[start:start + size]
                grads = self._grads(policy, obs[idx], acts[idx], adv[idx], logp_old[idx])
                optim.ascend(params, grads)
                if isinstance(policy, GaussianLinearPolicy):
                    policy.clip_log_std()
