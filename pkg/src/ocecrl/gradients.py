"""Batch subgradients of the partial Lagrangian in ``(t, lambda)``."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ValidationError
from .risk import transformed_reward, transformed_reward_subgrad_t


@dataclass(frozen=True, eq=False)
class GradEstimate:
    """Subgradient estimates plus the batch means they were built from.

    ``objective`` and ``constraints`` are the batch means of the discounted
    transformed rewards ``sum gamma^tau r'_i``; ``g_lambda`` is
    ``constraints`` minus the discounted thresholds.
    """

    g_t: np.ndarray
    g_lambda: np.ndarray
    n_trajectories: int
    objective: float = float("nan")
    constraints: np.ndarray = field(default_factory=lambda: np.zeros(0))

    def __post_init__(self):
        if not (np.all(np.isfinite(self.g_t)) and np.all(np.isfinite(self.g_lambda))):
            raise ValidationError("gradient estimate has non-finite entries")

    def vector(self) -> np.ndarray:
        return np.concatenate([self.g_t, self.g_lambda])


def reward_array(batch) -> np.ndarray:
    """``[n, T, m+1]`` rewards from a RolloutBatch, an array, or equal-length trajectories."""
    if hasattr(batch, "rewards") and not isinstance(batch, (list, tuple)):
        return np.asarray(batch.rewards, dtype=float)
    if isinstance(batch, np.ndarray):
        return batch.astype(float, copy=False)
    trajs = list(batch)
    if not trajs:
        raise ValidationError("gradient estimation needs a nonempty batch")
    T = max(tr.rewards.shape[0] for tr in trajs)
    m1 = trajs[0].rewards.shape[1]
    out = np.zeros((len(trajs), T, m1))
    mask = np.zeros((len(trajs), T), dtype=bool)
    for k, tr in enumerate(trajs):
        if tr.rewards.shape[1] != m1:
            raise ValidationError("trajectories disagree on the number of rewards")
        out[k, : tr.rewards.shape[0]] = tr.rewards
        mask[k, : tr.rewards.shape[0]] = True
    if not mask.all():
        # ragged batches: pad with NaN so padded steps drop out below
        out[~mask] = np.nan
    return out


def batch_gradients(rewards, t, lam, betas, thresholds, gamma: float) -> GradEstimate:
    """Batch-mean subgradients of the Lagrangian.

        g_lambda[i] = mean sum_tau gamma^tau (r'_i - c_i)
        g_t[0]      = mean sum_tau gamma^tau (1 - 1/beta_0 * 1{t_0 >= r_0})
        g_t[i]      = lambda_i * mean sum_tau gamma^tau (1 - 1/beta_i * 1{t_i >= r_i})
    """
    r = reward_array(rewards)
    if r.ndim != 3 or r.shape[0] == 0:
        raise ValidationError("gradient estimation needs a nonempty [n, T, m+1] batch")
    n, T, m1 = r.shape
    t = np.asarray(t, dtype=float)
    lam = np.asarray(lam, dtype=float)
    betas = np.asarray(betas, dtype=float)
    thresholds = np.asarray(thresholds, dtype=float)
    if t.shape != (m1,) or betas.shape != (m1,) or lam.shape != (m1 - 1,) or thresholds.shape != (m1 - 1,):
        raise ValidationError(
            f"dimension mismatch: rewards carry {m1} entries, t={t.shape}, betas={betas.shape}, "
            f"lambda={lam.shape}, thresholds={thresholds.shape}"
        )
    disc = gamma ** np.arange(T)
    valid = ~np.isnan(r[..., 0])
    g_t = np.zeros(m1)
    totals = np.zeros(m1)
    g_lambda = np.zeros(m1 - 1)
    for i in range(m1):
        ri = np.where(valid, r[..., i], 0.0)
        transformed = transformed_reward(ri, t[i], betas[i])
        sub = transformed_reward_subgrad_t(ri, t[i], betas[i])
        totals[i] = (np.where(valid, transformed, 0.0) @ disc).mean()
        g_t[i] = (np.where(valid, sub, 0.0) @ disc).mean()
        if i > 0:
            g_lambda[i - 1] = (np.where(valid, transformed - thresholds[i - 1], 0.0) @ disc).mean()
    g_t[1:] = lam * g_t[1:]
    return GradEstimate(g_t=g_t, g_lambda=g_lambda, n_trajectories=n, objective=float(totals[0]),
                        constraints=totals[1:].copy())
