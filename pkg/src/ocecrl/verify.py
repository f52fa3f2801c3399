"""Named property suites runnable from the command line.

Each suite returns a list of :class:`Check` records; a suite passes when
every check does.  The oracles here are deliberately independent of the
code under test (sorting instead of quantile search, Monte Carlo instead
of linear solves, grids instead of closed forms).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .config import ConstraintSpec
from .diagnostics import brute_force_primal, duality_gap_probe, support_t_grid
from .envs.rollout import TabularEnv, collect
from .envs.tabular import (
    canonical_two_state,
    discounted_value,
    exact_occupancy,
    random_mdp,
    random_policy,
    truncation_horizon,
)
from .errors import ValidationError
from .gradients import batch_gradients
from .risk import OceSpec, oce_optimize_t, oce_value, transformed_reward, transformed_reward_subgrad_t
from .solvers import ExactSolver, ShapedRewardSpec


@dataclass(frozen=True)
class Check:
    name: str
    passed: bool
    detail: str = ""

    def __post_init__(self):
        object.__setattr__(self, "passed", bool(self.passed))

    def as_dict(self) -> dict:
        return {"name": self.name, "passed": self.passed, "detail": self.detail}


# the constrained instance shared by the duality, joint-versus-nested and end-to-end checks
CANONICAL_CONSTRAINTS = (ConstraintSpec(index=1, beta=0.3, threshold=-0.7),)
CANONICAL_PROBE_T = ((1.0, -0.6), (1.0, -0.5), (0.8, -0.6))


def sorted_cvar(z: np.ndarray, w: np.ndarray, beta: float) -> float:
    """Mean of the lowest ``beta`` mass, splitting the boundary atom."""
    order = np.argsort(z, kind="stable")
    z, w = z[order], w[order]
    need, acc = beta, 0.0
    for zk, wk in zip(z, w):
        take = min(wk, need)
        acc += take * zk
        need -= take
        if need <= 0:
            break
    return acc / beta


def random_distribution(rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray, float]:
    n = int(rng.integers(1, 30))
    z = rng.normal(size=n) * rng.uniform(0.1, 10)
    if rng.random() < 0.3:
        z = np.round(z)  # force ties
    w = rng.dirichlet(np.ones(n))
    w = w / w.sum()
    beta = float(rng.uniform(0.01, 1.0))
    return z, w, beta


def suite_oce(n_cases: int = 1000, seed: int = 0) -> list[Check]:
    rng = np.random.default_rng(seed)
    worst_oracle = worst_shift = worst_mean = worst_dom = 0.0
    for _ in range(n_cases):
        z, w, beta = random_distribution(rng)
        spec = OceSpec.cvar(beta)
        res = oce_optimize_t(spec, z, w)
        worst_oracle = max(worst_oracle, abs(res.value - sorted_cvar(z, w, beta)))
        loss = oce_optimize_t(OceSpec.cvar(beta, "loss"), -z, w)
        worst_oracle = max(worst_oracle, abs(res.value + loss.value))
        c = float(rng.normal() * 5)
        worst_shift = max(worst_shift, abs(oce_optimize_t(spec, z + c, w).value - res.value - c))
        worst_mean = max(worst_mean, abs(oce_optimize_t(OceSpec.cvar(1.0), z, w).value - float(np.dot(w, z))))
        for t in np.linspace(z.min() - 1, z.max() + 1, 100):
            worst_dom = max(worst_dom, oce_value(spec, z, t, w) - res.value)
    checks = [
        Check("cvar_matches_sorting_oracle", worst_oracle <= 1e-9, f"max error {worst_oracle:.3g}"),
        Check("translation_equivariance", worst_shift <= 1e-9, f"max error {worst_shift:.3g}"),
        Check("beta_one_is_mean", worst_mean <= 1e-12, f"max error {worst_mean:.3g}"),
        Check("sup_domination", worst_dom <= 1e-9, f"max excess {worst_dom:.3g}"),
    ]
    r = rng.normal(size=1000)
    t = rng.normal(size=1000)
    checks.append(Check("beta_one_transform_is_min", bool(np.all(transformed_reward(r, t, 1.0) == np.minimum(t, r)))))
    h = 1e-5
    far = np.abs(t - r) > 1e-3
    fd = (transformed_reward(r, t + h, 0.3) - transformed_reward(r, t - h, 0.3)) / (2 * h)
    err = float(np.max(np.abs(fd - transformed_reward_subgrad_t(r, t, 0.3))[far]))
    checks.append(Check("subgradient_finite_difference", err <= 1e-4, f"max error {err:.3g}"))
    return checks


def suite_table1(n_mdps: int = 50, n_rollouts: int = 10_000, seed: int = 1) -> list[Check]:
    """Occupancy-based value against Monte-Carlo returns of the transformed reward."""
    rng = np.random.default_rng(seed)
    hits = 0
    for k in range(n_mdps):
        mdp = random_mdp(rng, int(rng.integers(2, 7)), int(rng.integers(1, 4)), 1, gamma=float(rng.uniform(0.5, 0.95)))
        pol = random_policy(rng, mdp.n_states, mdp.n_actions)
        beta = float(rng.uniform(0.05, 1.0))
        lo, hi = mdp.reward_range(0)
        t = float(rng.uniform(lo, hi))
        exact = discounted_value(mdp, pol, 0, t, beta)
        H = truncation_horizon(mdp.gamma, 1e-6)
        batch = collect(TabularEnv(mdp), pol, n_rollouts, H, rng)
        sums = transformed_reward(batch.rewards[..., 0], t, beta) @ (mdp.gamma ** np.arange(H))
        se = sums.std(ddof=1) / np.sqrt(n_rollouts)
        hits += abs(sums.mean() - exact) <= 3 * se + 1e-12
    frac = hits / n_mdps
    return [Check("occupancy_matches_monte_carlo", frac >= 0.95, f"{hits}/{n_mdps} within 3 standard errors")]


def suite_limit(n_instances: int = 20, seed: int = 2) -> list[Check]:
    """As beta shrinks, the per-step CVaR approaches the worst reachable reward."""
    rng = np.random.default_rng(seed)
    worst = -np.inf
    for _ in range(n_instances):
        mdp, pol = _floored_instance(rng)
        nu = exact_occupancy(mdp, pol).nu
        r = mdp.rewards[0]
        reachable_min = float(r[nu > 0].min())
        span = float(r.max() - r.min())
        for beta in (1e-2, 1e-3, 1e-4):
            t_star = oce_optimize_t(OceSpec.cvar(beta), r.ravel(), nu.ravel()).optimizer_t
            value = (1 - mdp.gamma) * discounted_value(mdp, pol, 0, t_star, beta)
            worst = max(worst, abs(value - reachable_min) - (beta * span + 1e-8))
    return [Check("small_beta_limit", worst <= 0.0, f"max excess over bound {worst:.3g}")]


def _floored_instance(rng):
    """Random instance whose least-rewarding pair carries at least 1% occupancy.

    The bound ``beta * range`` only holds once the minimum carries at least
    ``beta`` mass, so the policy and transitions are floored away from zero.
    """
    while True:
        mdp = random_mdp(rng, int(rng.integers(2, 6)), int(rng.integers(1, 4)), 1, gamma=0.9, floor=0.5)
        pol = random_policy(rng, mdp.n_states, mdp.n_actions, floor=0.5)
        nu = exact_occupancy(mdp, pol).nu
        if nu[mdp.rewards[0] == mdp.rewards[0].min()].sum() >= 1e-2:
            return mdp, pol


def suite_lemma1(resolution: int = 40) -> list[Check]:
    """Joint (t, policy) grid optimum against the exact-t constrained optimum."""
    mdp = canonical_two_state()
    exact_t = brute_force_primal(mdp, CANONICAL_CONSTRAINTS, 1.0, resolution)
    joint = brute_force_primal(mdp, CANONICAL_CONSTRAINTS, 1.0, resolution, t_grid=support_t_grid(mdp, 11))
    gap = abs(joint.objective - exact_t.objective)
    tol = 1e-9 * max(1.0, abs(exact_t.objective))
    return [Check("joint_t_policy_equals_nested", joint.feasible and exact_t.feasible and gap <= tol,
                  f"joint {joint.objective:.6g} vs nested {exact_t.objective:.6g}")]


def suite_duality(resolution: int = 40, n_lambda: int = 2001, lambda_max: float = 5.0) -> list[Check]:
    mdp = canonical_two_state()
    checks = []
    for t in CANONICAL_PROBE_T:
        probe = duality_gap_probe(mdp, CANONICAL_CONSTRAINTS, t, np.linspace(0, lambda_max, n_lambda), resolution)
        ok = probe.slater and probe.relative_gap is not None and -0.02 <= probe.relative_gap <= 0.02
        detail = probe.flag if not probe.slater else f"gap {probe.gap:.4g} ({100 * probe.relative_gap:.2f}%)"
        checks.append(Check(f"duality_gap_t={list(t)}", ok, detail))
    return checks


def analytic_gradients(mdp, policy, t, lam, betas, thresholds) -> np.ndarray:
    """Exact ``(g_t, g_lambda)`` of the Lagrangian from the occupancy measure."""
    nu = exact_occupancy(mdp, policy).nu
    scale = 1.0 / (1.0 - mdp.gamma)
    g_t = np.array([scale * (nu * transformed_reward_subgrad_t(mdp.rewards[i], t[i], betas[i])).sum()
                    for i in range(mdp.n_rewards)])
    g_t[1:] *= np.asarray(lam)
    g_l = np.array([scale * (nu * (transformed_reward(mdp.rewards[i], t[i], betas[i]) - thresholds[i - 1])).sum()
                    for i in range(1, mdp.n_rewards)])
    return np.concatenate([g_t, g_l])


def unbiasedness(mdp, t, lam, betas, thresholds, n_batches: int, batch_size: int, seed: int):
    """Mean of per-batch estimates, their standard errors and the analytic gradient."""
    spec = ShapedRewardSpec(t, lam, betas, thresholds)
    policy = ExactSolver().solve(mdp, spec).policy
    H = truncation_horizon(mdp.gamma, 1e-6)
    rewards = collect(TabularEnv(mdp), policy, n_batches * batch_size, H, seed).rewards
    rewards = rewards.reshape(n_batches, batch_size, H, -1)
    est = np.array([batch_gradients(rewards[k], t, lam, betas, thresholds, mdp.gamma).vector()
                    for k in range(n_batches)])
    mean = est.mean(axis=0)
    se = est.std(axis=0, ddof=1) / np.sqrt(n_batches)
    # the truncated estimator misses at most gamma^H of the tail
    tail = 1e-6 * (np.abs(mdp.rewards).max() + max(abs(x) for x in thresholds) + 1 / min(betas)) \
        * max(1.0, max(lam)) / (1 - mdp.gamma)
    return mean, se, analytic_gradients(mdp, policy, t, lam, betas, thresholds), tail


def suite_unbiased(n_batches: int = 10_000, batch_size: int = 8, seed: int = 3) -> list[Check]:
    mdp = canonical_two_state()
    t, lam, betas, thresholds = (0.5, -0.5), (0.3,), (0.5, 0.3), (-0.7,)
    mean, se, exact, tail = unbiasedness(mdp, t, lam, betas, thresholds, n_batches, batch_size, seed)
    ok = np.abs(mean - exact) <= 3 * se + tail
    names = [f"g_t[{i}]" for i in range(len(t))] + [f"g_lambda[{i}]" for i in range(1, len(t))]
    return [Check(f"unbiased_{n}", bool(o), f"estimate {m:.5g} vs exact {e:.5g} (se {s:.2g})")
            for n, o, m, e, s in zip(names, ok, mean, exact, se)]


SUITES = {
    "oce": suite_oce,
    "table1": suite_table1,
    "limit": suite_limit,
    "lemma1": suite_lemma1,
    "duality": suite_duality,
    "unbiased": suite_unbiased,
}


def run_suite(name: str) -> list[Check]:
    if name == "all":
        return [c for key in SUITES for c in (Check(f"{key}:{x.name}", x.passed, x.detail) for x in SUITES[key]())]
    if name not in SUITES:
        raise ValidationError(f"unknown suite {name!r}; choose from {sorted([*SUITES, 'all'])}")
    return SUITES[name]()
