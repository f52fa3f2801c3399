"""Empirical oracle bias: how far an inexact solver's gradient samples drift."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..envs.rollout import TabularEnv, collect
from ..envs.tabular import TabularMdp, truncation_horizon
from ..gradients import batch_gradients
from ..seeding import as_seed_sequence, child_rng, child_seed
from .shaping import ShapedRewardSpec


@dataclass(frozen=True)
class BiasPoint:
    t: tuple[float, ...]
    lam: tuple[float, ...]
    bias: float
    reference_norm: float


def oracle_bias_table(
    mdp: TabularMdp,
    inexact,
    exact,
    grid,
    n_samples: int,
    seed,
    betas,
    thresholds,
    horizon: int | None = None,
) -> list[BiasPoint]:
    """Per-grid-point ``||g(theta_dagger) - g(theta_star)||``.

    Both policies are rolled out with the same generator, so identical
    policies give identical batches and zero measured bias.
    """
    seq = as_seed_sequence(seed)
    env = TabularEnv(mdp)
    H = horizon or truncation_horizon(mdp.gamma, 1e-6)
    rows = []
    for k, (t, lam) in enumerate(grid):
        spec = ShapedRewardSpec(t, lam, betas, thresholds)
        solver_seed = child_seed(seq, 0, k)
        pi_star = exact.solve(mdp, spec, seed=solver_seed).policy
        pi_dag = inexact.solve(mdp, spec, seed=solver_seed).policy
        g_star = batch_gradients(collect(env, pi_star, n_samples, H, child_rng(seq, 1, k)),
                                 spec.t, spec.lam, betas, thresholds, mdp.gamma)
        g_dag = batch_gradients(collect(env, pi_dag, n_samples, H, child_rng(seq, 1, k)),
                                spec.t, spec.lam, betas, thresholds, mdp.gamma)
        rows.append(BiasPoint(spec.t, spec.lam, float(np.linalg.norm(g_dag.vector() - g_star.vector())),
                              float(np.linalg.norm(g_star.vector()))))
    return rows


def measure_oracle_bias(mdp: TabularMdp, inexact, exact, grid, n_samples: int, seed, betas, thresholds,
                        horizon: int | None = None) -> float:
    """Largest measured bias over the ``(t, lambda)`` grid."""
    rows = oracle_bias_table(mdp, inexact, exact, grid, n_samples, seed, betas, thresholds, horizon)
    return max(r.bias for r in rows)
