"""Independent oracles, trained-policy evaluation and report files."""

from __future__ import annotations

import csv
import itertools
import json
import math
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from .config import ConstraintSpec
from .envs.policies import GaussianLinearPolicy
from .envs.rollout import collect, repr_num
from .envs.tabular import TabularMdp, truncation_horizon
from .errors import GridTooLargeError, ValidationError
from .risk import OceSpec, lower_quantile, oce_optimize_t, transformed_reward
from .schemas import validate

GRID_LIMIT = 10**7
HIST_BINS = 50


# --------------------------------------------------------------------------
# policy grids and batched occupancy


def simplex_grid(n_actions: int, resolution: int) -> np.ndarray:
    """All action distributions with probabilities in multiples of ``1/resolution``."""
    pts = [c for c in itertools.product(range(resolution + 1), repeat=n_actions - 1) if sum(c) <= resolution]
    pts = np.array([[*c, resolution - sum(c)] for c in pts], dtype=float)
    return pts / resolution


def policy_grid_size(n_states: int, n_actions: int, resolution: int) -> int:
    return math.comb(resolution + n_actions - 1, n_actions - 1) ** n_states


def _check_grid(n_points: int) -> None:
    if n_points > GRID_LIMIT:
        raise GridTooLargeError(n_points, GRID_LIMIT)


def iter_policy_grid(n_states: int, n_actions: int, resolution: int, chunk: int = 20_000):
    """Yield ``[k, S, A]`` stacks of grid policies."""
    _check_grid(policy_grid_size(n_states, n_actions, resolution))
    rows = simplex_grid(n_actions, resolution)
    index_iter = itertools.product(range(len(rows)), repeat=n_states)
    while True:
        block = list(itertools.islice(index_iter, chunk))
        if not block:
            return
        yield rows[np.array(block)]


def batched_occupancy(mdp: TabularMdp, probs: np.ndarray) -> np.ndarray:
    """Occupancy measures ``[k, S, A]`` for a stack of tabular policies."""
    S = mdp.n_states
    P_pi = np.einsum("ksa,sat->kst", probs, mdp.transition)
    A = np.eye(S)[None] - mdp.gamma * np.transpose(P_pi, (0, 2, 1))
    b = np.broadcast_to((1.0 - mdp.gamma) * mdp.initial_dist, (probs.shape[0], S))
    d = np.linalg.solve(A, b[..., None])[..., 0]
    return d[:, :, None] * probs


def cvar_many(values: np.ndarray, weights: np.ndarray, beta: float) -> tuple[np.ndarray, np.ndarray]:
    """Reward-orientation CVaR and its optimal ``t`` for many weightings of one support.

    ``values`` is ``[n]`` and ``weights`` is ``[k, n]``.
    """
    order = np.argsort(values, kind="stable")
    z = values[order]
    w = weights[:, order]
    cum = np.cumsum(w, axis=1)
    idx = np.argmax(cum >= beta - 1e-12, axis=1)
    t = z[idx]
    val = t - (w * np.maximum(t[:, None] - z[None, :], 0.0)).sum(axis=1) / beta
    return val, t


# --------------------------------------------------------------------------
# brute-force constrained primal


@dataclass(frozen=True, eq=False)
class OracleSolution:
    """Best feasible grid point.

    ``objective`` and ``constraint_values`` are discounted totals, i.e. the
    per-step risk divided by ``1 - gamma``; they are compared against the
    per-step thresholds scaled the same way.
    """

    best_policy_params: np.ndarray | None
    objective: float
    constraint_values: np.ndarray
    feasible: bool
    grid_resolution: float
    best_t: np.ndarray | None = None


def _risk_tables(mdp: TabularMdp, nu: np.ndarray, betas, t=None) -> np.ndarray:
    """Per-step risk of every reward index for each occupancy in the stack: ``[k, m+1]``."""
    flat = nu.reshape(nu.shape[0], -1)
    out = np.empty((nu.shape[0], len(betas)))
    for i, b in enumerate(betas):
        r = mdp.rewards[i].ravel()
        if t is None:
            out[:, i] = cvar_many(r, flat, b)[0]
        else:
            out[:, i] = flat @ transformed_reward(r, t[i], b)
    return out


def brute_force_primal(
    mdp: TabularMdp,
    constraints,
    objective_beta: float = 1.0,
    policy_resolution: int = 20,
    t_grid=None,
    slack: float = 0.0,
) -> OracleSolution:
    """Exhaustive constrained maximization over a policy grid.

    With ``t_grid=None`` each policy's risks use the exact supremum over
    ``t`` (the optimizing quantile).  Otherwise ``t_grid`` is a list of
    candidate ``t`` vectors searched jointly with the policy, which is the
    joint formulation over ``(policy, t)``.
    """
    constraints = [c if isinstance(c, ConstraintSpec) else ConstraintSpec(**c) for c in constraints]
    betas = [objective_beta] + [c.beta for c in constraints]
    thr = np.array([c.reward_threshold for c in constraints])
    n_pol = policy_grid_size(mdp.n_states, mdp.n_actions, policy_resolution)
    t_list = [None] if t_grid is None else [np.asarray(t, dtype=float) for t in t_grid]
    _check_grid(n_pol * len(t_list))
    scale = 1.0 / (1.0 - mdp.gamma)

    best = (-np.inf, None, None, None)
    best_any = (-np.inf, None)
    for probs in iter_policy_grid(mdp.n_states, mdp.n_actions, policy_resolution):
        nu = batched_occupancy(mdp, probs)
        for t in t_list:
            risk = _risk_tables(mdp, nu, betas, t)
            ok = np.all(risk[:, 1:] >= thr - slack, axis=1) if constraints else np.ones(len(risk), bool)
            viol = (np.maximum(thr - risk[:, 1:], 0.0).sum(axis=1)) if constraints else np.zeros(len(risk))
            k_any = int(np.argmin(viol))
            if -viol[k_any] > best_any[0]:
                best_any = (-viol[k_any], risk[k_any])
            if ok.any():
                cand = np.where(ok, risk[:, 0], -np.inf)
                k = int(np.argmax(cand))
                if cand[k] > best[0]:
                    best = (cand[k], probs[k].copy(), risk[k], t)
    if best[1] is None:
        return OracleSolution(None, float("nan"), best_any[1][1:] * scale, False, 1.0 / policy_resolution)
    return OracleSolution(best[1], float(best[0] * scale), best[2][1:] * scale, True, 1.0 / policy_resolution,
                          None if best[3] is None else np.asarray(best[3]))


def support_t_grid(mdp: TabularMdp, n_points: int = 0) -> list[np.ndarray]:
    """Per-index candidate ``t`` values: the reward support plus an optional uniform grid."""
    per_index = []
    for i in range(mdp.n_rewards):
        r = mdp.rewards[i]
        vals = set(np.unique(r).tolist())
        if n_points > 1:
            vals |= set(np.linspace(r.min(), r.max(), n_points).tolist())
        per_index.append(sorted(vals))
    return [np.array(t) for t in itertools.product(*per_index)]


def fixed_t_optimum(mdp: TabularMdp, constraints, betas, t, policy_resolution: int = 20) -> OracleSolution:
    """Constrained optimum with ``t`` held fixed (the risk-neutral problem in transformed rewards)."""
    return brute_force_primal(mdp, constraints, betas[0], policy_resolution, t_grid=[t])


# --------------------------------------------------------------------------
# duality probe


@dataclass(frozen=True)
class DualityProbe:
    gap: float | None
    relative_gap: float | None
    primal: float | None
    dual: float | None
    best_lambda: tuple[float, ...] | None
    slater: bool
    flag: str = ""


def duality_gap_probe(
    mdp: TabularMdp,
    constraints,
    t,
    lambda_grid,
    policy_resolution: int = 20,
    objective_beta: float = 1.0,
    slater_margin: float = 1e-9,
) -> DualityProbe:
    """``min_lambda max_pi L(pi, t, lambda) - max_{pi feasible} objective`` at fixed ``t``.

    Both sides are grid searches.  The Slater check looks for a grid
    policy satisfying every constraint strictly; without one the result is
    flagged and no gap is reported.
    """
    constraints = [c if isinstance(c, ConstraintSpec) else ConstraintSpec(**c) for c in constraints]
    betas = [objective_beta] + [c.beta for c in constraints]
    thr = np.array([c.reward_threshold for c in constraints])
    t = np.asarray(t, dtype=float)
    lam_grid = np.array([np.atleast_1d(np.asarray(l, dtype=float)) for l in lambda_grid]).reshape(-1, len(constraints)) \
        if constraints else np.zeros((1, 0))
    _check_grid(policy_grid_size(mdp.n_states, mdp.n_actions, policy_resolution) * max(len(lam_grid), 1))
    scale = 1.0 / (1.0 - mdp.gamma)

    primal = -np.inf
    dual_per_lambda = np.full(len(lam_grid), -np.inf)
    slater = not constraints
    for probs in iter_policy_grid(mdp.n_states, mdp.n_actions, policy_resolution):
        nu = batched_occupancy(mdp, probs)
        val = _risk_tables(mdp, nu, betas, t)
        obj, cons = val[:, 0], val[:, 1:]
        if constraints:
            feas = np.all(cons >= thr, axis=1)
            slater = slater or bool(np.any(np.all(cons > thr + slater_margin, axis=1)))
        else:
            feas = np.ones(len(obj), bool)
        if feas.any():
            primal = max(primal, float(obj[feas].max()))
        lag = obj[:, None] + (cons - thr) @ lam_grid.T  # [k, n_lambda]
        dual_per_lambda = np.maximum(dual_per_lambda, lag.max(axis=0))
    if not slater:
        return DualityProbe(None, None, None, None, None, False, "constraint qualification unverified")
    k = int(np.argmin(dual_per_lambda))
    dual = float(dual_per_lambda[k])
    gap = (dual - primal) * scale
    rel = gap / max(abs(primal * scale), 1e-12)
    return DualityProbe(gap, rel, primal * scale, dual * scale, tuple(lam_grid[k].tolist()), True)


# --------------------------------------------------------------------------
# evaluation of trained policies


@dataclass(frozen=True, eq=False)
class EvalReport:
    """Post-training statistics of one constraint variable.

    In cost orientation the constraint variable is ``-r_i``;
    ``beta_upper_quantile`` is its (1 - beta)-quantile on the pooled
    per-step samples and ``empirical_cvar`` the mean of its worst
    beta-fraction.  In reward orientation both are reported on ``r_i``
    itself (lower beta-quantile and worst-beta mean).  ``converged_t`` is
    mapped to the same units.  An episode counts as a violation when any
    step's constraint reward falls below the per-step threshold.
    """

    n_episodes: int
    constraint_samples: np.ndarray  # [episodes, steps] in orientation units
    beta_upper_quantile: float
    empirical_cvar: float
    converged_t: float | None
    mean_return: float
    violation_rate: float
    episode_returns: np.ndarray = field(default_factory=lambda: np.zeros(0))
    orientation: str = "cost"
    beta: float = 0.3

    def as_dict(self) -> dict:
        return {
            "n_episodes": self.n_episodes,
            "beta_upper_quantile": self.beta_upper_quantile,
            "empirical_cvar": self.empirical_cvar,
            "converged_t": self.converged_t,
            "mean_return": self.mean_return,
            "violation_rate": self.violation_rate,
            "orientation": self.orientation,
            "beta": self.beta,
        }


def evaluate_policy(
    env,
    policy,
    n_episodes: int = 100,
    betas=(1.0, 0.3),
    thresholds=(0.0,),
    converged_t=None,
    seed=0,
    constraint_index: int = 1,
    orientation: str = "cost",
    deterministic: bool | None = None,
    horizon: int | None = None,
) -> EvalReport:
    """Run evaluation episodes without learning.

    Gaussian policies act with their mean by default; discrete policies
    sample.  ``converged_t`` is the reward-orientation ``t`` for the
    constraint slot (or a full ``t`` vector).
    """
    if n_episodes < 1:
        raise ValidationError("n_episodes must be >= 1")
    if orientation not in ("cost", "reward"):
        raise ValidationError(f"unknown orientation {orientation!r}")
    if deterministic is None:
        deterministic = isinstance(policy, GaussianLinearPolicy)
    if horizon is None:
        horizon = env.step_limit if getattr(env, "step_limit", None) else truncation_horizon(env.gamma, 1e-6)
    batch = collect(env, policy, n_episodes, horizon, seed, deterministic=deterministic)
    beta = float(betas[constraint_index])
    r = batch.rewards[..., constraint_index]
    z = r.ravel()
    q = lower_quantile(z, np.full(z.size, 1.0 / z.size), beta)
    cvar = oce_optimize_t(OceSpec.cvar(beta), z).value
    threshold = float(thresholds[constraint_index - 1])
    violation = float(np.mean(np.any(r < threshold, axis=1)))
    returns = batch.rewards[..., 0].sum(axis=1)
    if converged_t is not None:
        ct = np.atleast_1d(np.asarray(converged_t, dtype=float))
        converged_t = float(ct[constraint_index] if ct.size > 1 else ct[0])
    sign = -1.0 if orientation == "cost" else 1.0
    # adding 0.0 maps a negated zero to +0.0
    return EvalReport(
        n_episodes=n_episodes,
        constraint_samples=sign * r + 0.0,
        beta_upper_quantile=sign * q + 0.0,
        empirical_cvar=sign * cvar + 0.0,
        converged_t=None if converged_t is None else sign * converged_t + 0.0,
        mean_return=float(returns.mean()),
        violation_rate=violation,
        episode_returns=returns,
        orientation=orientation,
        beta=beta,
    )


# --------------------------------------------------------------------------
# report files


def history_rows(history, window: int = 20) -> list[list[str]]:
    rows = []
    proxies = [e.proxy for e in history]
    for k, e in enumerate(history):
        lo = max(0, k - window + 1)
        rows.append([
            str(e.j),
            *map(repr_num, e.t),
            *map(repr_num, e.lam),
            repr_num(e.objective),
            *map(repr_num, e.constraints),
            repr_num(e.proxy),
            repr_num(float(np.mean(proxies[lo:k + 1]))),
        ])
    return rows


def write_history_csv(history, path, window: int = 20) -> Path:
    history = list(history)
    if not history:
        raise ValidationError("history is empty")
    m1 = len(history[0].t)
    header = ["iteration", *[f"t_{i}" for i in range(m1)], *[f"lambda_{i}" for i in range(1, m1)], "objective",
              *[f"constraint_{i}" for i in range(1, m1)], "gradient_mapping", "stationarity_proxy"]
    path = Path(path)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(history_rows(history, window))
    return path


def read_history_csv(path) -> list:
    """Parse a history file back into entries (gradients are not stored and come back empty)."""
    from .sgda import HistoryEntry

    with Path(path).open(newline="") as fh:
        rows = list(csv.DictReader(fh))
    if not rows:
        raise ValueError(f"{path} has no data rows")
    m1 = sum(1 for k in rows[0] if k.startswith("t_"))
    out = []
    for row in rows:
        out.append(HistoryEntry(
            j=int(row["iteration"]),
            t=np.array([float(row[f"t_{i}"]) for i in range(m1)]),
            lam=np.array([float(row[f"lambda_{i}"]) for i in range(1, m1)]),
            objective=float(row["objective"]),
            constraints=np.array([float(row[f"constraint_{i}"]) for i in range(1, m1)]),
            g_t=np.zeros(0),
            g_lambda=np.zeros(0),
            proxy=float(row["gradient_mapping"]),
        ))
    return out


def histogram(samples: np.ndarray, bins: int = HIST_BINS) -> tuple[np.ndarray, np.ndarray]:
    z = np.asarray(samples, dtype=float).ravel()
    lo, hi = float(z.min()), float(z.max())
    if lo == hi:
        lo, hi = lo - 0.5, hi + 0.5
    return np.histogram(z, bins=bins, range=(lo, hi))


def emit_report(history, report: EvalReport, out_dir, run_info: dict | None = None, created: str | None = None,
                window: int = 20) -> dict[str, Path]:
    """Write ``history.csv``, ``returns.csv``, ``constraint_hist.csv`` and ``summary.json``.

    The only time-dependent value is ``metadata.created`` in the summary.
    """
    history = list(history)
    if not history:
        raise ValidationError("history is empty")
    if report.n_episodes < 1:
        raise ValidationError("evaluation must cover at least one episode")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = {"history": write_history_csv(history, out / "history.csv", window)}

    counts, edges = histogram(report.constraint_samples)
    paths["histogram"] = out / "constraint_hist.csv"
    with paths["histogram"].open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["bin_lo", "bin_hi", "count"])
        for k in range(len(counts)):
            w.writerow([repr_num(edges[k]), repr_num(edges[k + 1]), int(counts[k])])

    paths["returns"] = out / "returns.csv"
    with paths["returns"].open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["episode", "return"])
        for k, ret in enumerate(report.episode_returns):
            w.writerow([k, repr_num(ret)])

    summary = {
        "schema": "summary.v1",
        "metadata": {"created": created or datetime.now(timezone.utc).isoformat()},
        "run": run_info or {},
        "eval": report.as_dict(),
        "histogram": {"bins": len(counts), "range": [float(edges[0]), float(edges[-1])]},
    }
    validate(summary, "summary.v1")
    paths["summary"] = out / "summary.json"
    paths["summary"].write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")
    return paths
