import csv
import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ocecrl.config import ConstraintSpec
from ocecrl.diagnostics import (
    brute_force_primal,
    duality_gap_probe,
    emit_report,
    evaluate_policy,
    fixed_t_optimum,
    iter_policy_grid,
    policy_grid_size,
    read_history_csv,
    write_history_csv,
)
from ocecrl.envs import GaussianLinearPolicy, PointMass, TabularEnv, TabularMdp, TabularPolicy, canonical_two_state
from ocecrl.errors import GridTooLargeError, ValidationError
from ocecrl.schemas import validate
from ocecrl.sgda import HistoryEntry
from ocecrl.solvers import ExactSolver, ShapedRewardSpec
from oracles import sorting_cvar

MDP = canonical_two_state()
LOOSE = [ConstraintSpec(1, 0.3, -50.0)]
BINDING = [ConstraintSpec(1, 0.3, -0.7)]


def test_policy_grid_counts():
    assert policy_grid_size(2, 2, 10) == 121
    grid = np.concatenate(list(iter_policy_grid(2, 3, 4)))
    assert len(grid) == policy_grid_size(2, 3, 4) == 15**2
    assert np.allclose(grid.sum(axis=2), 1.0)


def test_grid_guard():
    with pytest.raises(GridTooLargeError, match="grid"):
        brute_force_primal(canonical_two_state(), LOOSE, policy_resolution=10**4)


def test_unconstrained_oracle_matches_exact_solver():
    sol = brute_force_primal(MDP, LOOSE, policy_resolution=10)
    top = MDP.rewards[0].max()
    exact = ExactSolver().solve(MDP, ShapedRewardSpec((top, 0.0), (0.0,), (1.0, 1.0), (0.0,))).attained_value
    assert sol.feasible
    assert sol.objective == pytest.approx(exact, abs=1e-9)


def test_infeasible_thresholds():
    sol = brute_force_primal(MDP, [ConstraintSpec(1, 0.3, 0.5)], policy_resolution=10)
    assert not sol.feasible and sol.best_policy_params is None


def test_binding_constraint_lowers_objective():
    free = brute_force_primal(MDP, LOOSE, policy_resolution=20)
    bound = brute_force_primal(MDP, BINDING, policy_resolution=20)
    assert bound.feasible and bound.objective < free.objective - 1e-6
    # feasibility in discounted units
    assert np.all(bound.constraint_values >= -0.7 / (1 - MDP.gamma) - 1e-12)


def test_oracle_monotone_in_threshold():
    prev = np.inf
    for thr in (-1.0, -0.85, -0.7, -0.6, -0.45):
        sol = brute_force_primal(MDP, [ConstraintSpec(1, 0.3, thr)], policy_resolution=20)
        val = sol.objective if sol.feasible else -np.inf
        assert val <= prev + 1e-12
        prev = val


def test_fixed_t_optimum_is_below_sup_over_t():
    sup = brute_force_primal(MDP, BINDING, policy_resolution=20)
    fixed = fixed_t_optimum(MDP, BINDING, (1.0, 0.3), (1.0, -0.6), policy_resolution=20)
    assert fixed.feasible
    assert fixed.objective <= sup.objective + 1e-9


def test_duality_probe_unconstrained_gap_zero():
    probe = duality_gap_probe(MDP, [], (1.0, -0.5), [0.0], policy_resolution=10)
    assert probe.slater and probe.gap == pytest.approx(0.0, abs=1e-12)


def test_duality_probe_flags_infeasible():
    probe = duality_gap_probe(MDP, [ConstraintSpec(1, 0.3, 0.5)], (1.0, -0.5), np.linspace(0, 5, 11), 10)
    assert not probe.slater and probe.gap is None
    assert probe.flag == "constraint qualification unverified"


# --- evaluation ----------------------------------------------------------------------

def constant_env(r1=-0.4):
    mdp = TabularMdp(np.ones((1, 1, 1)), np.array([[[1.0]], [[r1]]]), 0.9, np.ones(1))
    return TabularEnv(mdp, step_limit=20)


def test_constant_episodes_give_constant_quantile():
    rep = evaluate_policy(constant_env(), TabularPolicy([[1.0]]), 10, (1.0, 0.3), (-0.5,), seed=0)
    assert rep.beta_upper_quantile == pytest.approx(0.4)
    assert rep.empirical_cvar == pytest.approx(0.4)
    assert np.all(rep.episode_returns == rep.episode_returns[0])
    assert rep.violation_rate == 0.0
    rep2 = evaluate_policy(constant_env(), TabularPolicy([[1.0]]), 10, (1.0, 0.3), (-0.3,), seed=0)
    assert rep2.violation_rate == 1.0


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10**6), st.floats(0.05, 1.0))
def test_cost_cvar_dominates_var(seed, beta):
    rng = np.random.default_rng(seed)
    mdp = TabularMdp(*_random_parts(rng))
    pol = TabularPolicy(rng.dirichlet(np.ones(2), size=3))
    rep = evaluate_policy(TabularEnv(mdp, step_limit=15), pol, 8, (1.0, beta), (-0.5,), seed=seed)
    z = rep.constraint_samples.ravel()
    assert rep.empirical_cvar >= rep.beta_upper_quantile - 1e-12
    assert z.min() <= rep.beta_upper_quantile <= z.max()
    assert 0.0 <= rep.violation_rate <= 1.0
    # empirical CVaR of the cost is the negated worst-beta mean of the reward
    assert rep.empirical_cvar == pytest.approx(-sorting_cvar(-z, np.full(z.size, 1 / z.size), beta), abs=1e-9)


def _random_parts(rng):
    P = rng.dirichlet(np.ones(3), size=(3, 2))
    R = np.stack([rng.uniform(-1, 1, (3, 2)), -rng.uniform(0, 1, (3, 2))])
    return P, R, 0.9, np.ones(3) / 3


def test_gaussian_mean_evaluation_has_lower_variance():
    env = PointMass(0.5, step_limit=100)
    pol = GaussianLinearPolicy([[0.3], [0.2]], [-0.5])
    wins = 0
    for seed in range(10):
        mean_rep = evaluate_policy(env, pol, 20, (1.0, 0.3), (-0.5,), seed=seed)
        samp_rep = evaluate_policy(env, pol, 20, (1.0, 0.3), (-0.5,), seed=seed, deterministic=False)
        wins += mean_rep.episode_returns.var() < samp_rep.episode_returns.var()
    assert wins == 10


def test_evaluate_rejects_zero_episodes():
    with pytest.raises(ValidationError):
        evaluate_policy(constant_env(), TabularPolicy([[1.0]]), 0)


# --- reports ---------------------------------------------------------------------------

def toy_history(n=3):
    return [HistoryEntry(j, np.array([1.0, -0.5 + 0.1 * j]), np.array([0.2 * j]), 5.0 + j, np.array([-6.0]),
                         np.zeros(2), np.zeros(1), 0.5 / (j + 1)) for j in range(n)]


def test_history_csv_rows(tmp_path):
    path = write_history_csv(toy_history(), tmp_path / "h.csv")
    rows = list(csv.reader(path.open()))
    assert rows[0] == ["iteration", "t_0", "t_1", "lambda_1", "objective", "constraint_1", "gradient_mapping",
                       "stationarity_proxy"]
    assert len(rows) == 4
    assert float(rows[3][-1]) == pytest.approx(np.mean([0.5, 0.25, 0.5 / 3]))
    back = read_history_csv(path)
    assert [e.j for e in back] == [0, 1, 2] and back[2].t[1] == toy_history()[2].t[1]


def test_emit_report_schema_and_determinism(tmp_path):
    rep = evaluate_policy(constant_env(), TabularPolicy([[1.0]]), 5, (1.0, 0.3), (-0.5,), converged_t=(1.0, -0.4))
    a = emit_report(toy_history(), rep, tmp_path / "a", created="2000-01-01T00:00:00+00:00")
    b = emit_report(toy_history(), rep, tmp_path / "b", created="2000-01-01T00:00:00+00:00")
    for key in a:
        assert a[key].read_bytes() == b[key].read_bytes()
    summary = json.loads(a["summary"].read_text())
    validate(summary, "summary.v1")
    assert summary["eval"]["converged_t"] == pytest.approx(0.4)
    with pytest.raises(ValidationError):
        emit_report([], rep, tmp_path / "c")
    summary["eval"]["violation_rate"] = 2.0
    with pytest.raises(ValidationError):
        validate(summary, "summary.v1")
