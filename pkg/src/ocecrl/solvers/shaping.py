"""Per-step Lagrangian reward seen by the inner policy solver."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import ValidationError
from ..risk import check_beta, transformed_reward


@dataclass(frozen=True)
class ShapedRewardSpec:
    """Parameters ``(t, lambda)`` plus risk levels and per-step thresholds.

    ``t`` and ``betas`` have one entry per reward index (objective first);
    ``lam`` and ``thresholds`` have one entry per constraint.  A per-step
    threshold ``c`` corresponds to a discounted-total threshold
    ``c / (1 - gamma)``.
    """

    t: tuple[float, ...]
    lam: tuple[float, ...]
    betas: tuple[float, ...]
    thresholds: tuple[float, ...]

    def __post_init__(self):
        for name in ("t", "lam", "betas", "thresholds"):
            object.__setattr__(self, name, tuple(float(x) for x in np.ravel(getattr(self, name))))
        m = len(self.lam)
        if len(self.t) != m + 1 or len(self.betas) != m + 1 or len(self.thresholds) != m:
            raise ValidationError(
                f"dimension mismatch: t={len(self.t)}, betas={len(self.betas)}, "
                f"lambda={m}, thresholds={len(self.thresholds)}"
            )
        if any(x < 0 for x in self.lam):
            raise ValidationError("multipliers must be nonnegative")
        for i, b in enumerate(self.betas):
            check_beta(b, f"betas[{i}]")

    @property
    def m(self) -> int:
        return len(self.lam)


def shaped_rewards(spec: ShapedRewardSpec, rewards) -> np.ndarray:
    """Vectorized shaped reward over the trailing ``m + 1`` axis."""
    r = np.asarray(rewards, dtype=float)
    if r.shape[-1] != spec.m + 1:
        raise ValidationError(f"reward vectors need {spec.m + 1} entries, got {r.shape[-1]}")
    out = transformed_reward(r[..., 0], spec.t[0], spec.betas[0])
    for i in range(1, spec.m + 1):
        out = out + spec.lam[i - 1] * (transformed_reward(r[..., i], spec.t[i], spec.betas[i]) - spec.thresholds[i - 1])
    return np.asarray(out, dtype=float)


def shaped_reward(spec: ShapedRewardSpec, reward_vector) -> float:
    r = np.asarray(reward_vector, dtype=float)
    if r.ndim != 1:
        raise ValidationError("shaped_reward takes one reward vector; use shaped_rewards for batches")
    return float(shaped_rewards(spec, r))


def shaped_table(spec: ShapedRewardSpec, mdp) -> np.ndarray:
    """The shaped reward as an ``[S, A]`` table for a tabular MDP."""
    if mdp.n_rewards != spec.m + 1:
        raise ValidationError(f"MDP has {mdp.n_rewards} reward tables, spec expects {spec.m + 1}")
    return shaped_rewards(spec, np.moveaxis(mdp.rewards, 0, -1))
