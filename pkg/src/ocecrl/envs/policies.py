"""Stochastic policies: tabular, softmax-linear and Gaussian-linear.

All policies act on batches.  Discrete policies sample by inverse CDF from
one uniform draw per row, so two policies driven by the same generator see
common random numbers.
"""

from __future__ import annotations

import numpy as np

from ..errors import ValidationError

PROB_TOL = 1e-12


def _inverse_cdf(probs: np.ndarray, u: np.ndarray) -> np.ndarray:
    cum = np.cumsum(probs, axis=-1)
    a = (cum <= u[:, None]).sum(axis=-1)
    return np.minimum(a, probs.shape[-1] - 1)


class TabularPolicy:
    discrete = True

    def __init__(self, probs):
        probs = np.array(probs, dtype=float)
        if probs.ndim != 2:
            raise ValidationError("tabular policy needs a [state][action] table")
        if np.any(probs < 0) or np.any(np.abs(probs.sum(axis=1) - 1.0) > PROB_TOL):
            raise ValidationError("tabular policy rows must be distributions summing to 1")
        probs.setflags(write=False)
        self.probs = probs

    @property
    def n_states(self) -> int:
        return self.probs.shape[0]

    @property
    def n_actions(self) -> int:
        return self.probs.shape[1]

    @classmethod
    def deterministic(cls, actions, n_actions: int) -> "TabularPolicy":
        actions = np.asarray(actions, dtype=int)
        probs = np.zeros((actions.size, n_actions))
        probs[np.arange(actions.size), actions] = 1.0
        return cls(probs)

    @classmethod
    def uniform(cls, n_states: int, n_actions: int) -> "TabularPolicy":
        return cls(np.full((n_states, n_actions), 1.0 / n_actions))

    def action_probs(self, obs) -> np.ndarray:
        return self.probs[np.asarray(obs, dtype=int)]

    def sample(self, obs, rng: np.random.Generator) -> np.ndarray:
        obs = np.asarray(obs, dtype=int)
        return _inverse_cdf(self.probs[obs], rng.random(obs.shape[0]))

    def mean_action(self, obs) -> np.ndarray:
        return np.argmax(self.action_probs(obs), axis=-1)

    def as_tabular(self) -> "TabularPolicy":
        return self

    def to_dict(self) -> dict:
        return {
            "schema": "policy.v1",
            "representation": "tabular",
            "shape": list(self.probs.shape),
            "weights": self.probs.ravel().tolist(),
        }


class SoftmaxLinearPolicy:
    """Softmax over linear action scores, ``pi(a|s) ∝ exp(phi(s) @ W[:, a])``.

    ``features="onehot"`` treats observations as state indices (a tabular
    softmax); ``features="affine"`` uses ``[1, obs...]``.
    """

    discrete = True

    def __init__(self, weights, features: str = "onehot"):
        if features not in ("onehot", "affine"):
            raise ValidationError(f"unknown feature map {features!r}")
        self.weights = np.array(weights, dtype=float)
        if self.weights.ndim != 2:
            raise ValidationError("softmax weights must be [feature][action]")
        self.features = features

    @classmethod
    def zeros(cls, n_features: int, n_actions: int, features: str = "onehot") -> "SoftmaxLinearPolicy":
        return cls(np.zeros((n_features, n_actions)), features)

    @property
    def n_actions(self) -> int:
        return self.weights.shape[1]

    def phi(self, obs) -> np.ndarray:
        if self.features == "onehot":
            idx = np.asarray(obs, dtype=int)
            out = np.zeros((idx.shape[0], self.weights.shape[0]))
            out[np.arange(idx.shape[0]), idx] = 1.0
            return out
        obs = np.asarray(obs, dtype=float).reshape(len(obs), -1)
        return np.hstack([np.ones((obs.shape[0], 1)), obs])

    def logits(self, obs) -> np.ndarray:
        if self.features == "onehot":
            return self.weights[np.asarray(obs, dtype=int)]
        return self.phi(obs) @ self.weights

    def action_probs(self, obs) -> np.ndarray:
        z = self.logits(obs)
        z = z - z.max(axis=-1, keepdims=True)
        e = np.exp(z)
        return e / e.sum(axis=-1, keepdims=True)

    def log_prob(self, obs, actions) -> np.ndarray:
        z = self.logits(obs)
        m = z.max(axis=-1, keepdims=True)
        lse = (m + np.log(np.exp(z - m).sum(axis=-1, keepdims=True)))[:, 0]
        return z[np.arange(z.shape[0]), np.asarray(actions, dtype=int)] - lse

    def sample(self, obs, rng: np.random.Generator) -> np.ndarray:
        probs = self.action_probs(obs)
        return _inverse_cdf(probs, rng.random(probs.shape[0]))

    def mean_action(self, obs) -> np.ndarray:
        return np.argmax(self.logits(obs), axis=-1)

    def as_tabular(self) -> TabularPolicy:
        if self.features != "onehot":
            raise ValidationError("only one-hot softmax policies have a tabular form")
        probs = self.action_probs(np.arange(self.weights.shape[0]))
        return TabularPolicy(probs / probs.sum(axis=1, keepdims=True))

    def copy(self) -> "SoftmaxLinearPolicy":
        return SoftmaxLinearPolicy(self.weights.copy(), self.features)

    def to_dict(self) -> dict:
        return {
            "schema": "policy.v1",
            "representation": "softmax_linear",
            "features": self.features,
            "shape": list(self.weights.shape),
            "weights": self.weights.ravel().tolist(),
        }


class GaussianLinearPolicy:
    """Diagonal Gaussian with mean ``[1, obs...] @ W`` and a free log-std."""

    discrete = False

    def __init__(self, mean_weights, log_std, log_std_bounds=(-5.0, 1.0)):
        self.mean_weights = np.array(mean_weights, dtype=float)
        if self.mean_weights.ndim != 2:
            raise ValidationError("mean weights must be [feature][action_dim]")
        lo, hi = (float(b) for b in log_std_bounds)
        if not lo < hi:
            raise ValidationError("log-std bounds must satisfy lo < hi")
        self.log_std_bounds = (lo, hi)
        self.log_std = np.clip(np.array(log_std, dtype=float).reshape(-1), lo, hi)
        if self.log_std.shape[0] != self.mean_weights.shape[1]:
            raise ValidationError("log_std must have one entry per action dimension")

    @property
    def action_dim(self) -> int:
        return self.mean_weights.shape[1]

    def phi(self, obs) -> np.ndarray:
        obs = np.asarray(obs, dtype=float)
        obs = obs.reshape(obs.shape[0], -1)
        return np.hstack([np.ones((obs.shape[0], 1)), obs])

    def mean(self, obs) -> np.ndarray:
        return self.phi(obs) @ self.mean_weights

    def sample(self, obs, rng: np.random.Generator) -> np.ndarray:
        mu = self.mean(obs)
        return mu + np.exp(self.log_std) * rng.standard_normal(mu.shape)

    def mean_action(self, obs) -> np.ndarray:
        return self.mean(obs)

    def log_prob(self, obs, actions) -> np.ndarray:
        mu = self.mean(obs)
        std = np.exp(self.log_std)
        zs = (np.asarray(actions, dtype=float).reshape(mu.shape) - mu) / std
        return (-0.5 * zs**2 - self.log_std - 0.5 * np.log(2 * np.pi)).sum(axis=-1)

    def clip_log_std(self) -> None:
        np.clip(self.log_std, *self.log_std_bounds, out=self.log_std)

    def copy(self) -> "GaussianLinearPolicy":
        return GaussianLinearPolicy(self.mean_weights.copy(), self.log_std.copy(), self.log_std_bounds)

    def to_dict(self) -> dict:
        return {
            "schema": "policy.v1",
            "representation": "gaussian_linear",
            "shape": list(self.mean_weights.shape),
            "weights": self.mean_weights.ravel().tolist(),
            "log_std": self.log_std.tolist(),
            "log_std_bounds": list(self.log_std_bounds),
        }


def policy_from_dict(d: dict):
    """Rebuild a policy from its ``policy.v1`` mapping."""
    if d.get("schema") != "policy.v1":
        raise ValidationError(f"expected schema 'policy.v1', got {d.get('schema')!r}")
    rep = d.get("representation")
    try:
        w = np.asarray(d["weights"], dtype=float).reshape(d["shape"])
        if rep == "tabular":
            return TabularPolicy(w)
        if rep == "softmax_linear":
            return SoftmaxLinearPolicy(w, d.get("features", "onehot"))
        if rep == "gaussian_linear":
            return GaussianLinearPolicy(w, d["log_std"], d.get("log_std_bounds", (-5.0, 1.0)))
    except (KeyError, TypeError, ValueError) as exc:
        raise ValidationError(f"malformed policy: {exc}") from exc
    raise ValidationError(f"unknown policy representation {rep!r}")
