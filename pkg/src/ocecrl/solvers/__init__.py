from ..errors import ValidationError
from .base import SolverBudget, SolverReport
from .bias import BiasPoint, measure_oracle_bias, oracle_bias_table
from .exact import ExactSolver
from .pg import PGSolver
from .shaping import ShapedRewardSpec, shaped_reward, shaped_rewards, shaped_table


def make_solver(name: str, **kwargs):
    if name == "exact":
        return ExactSolver(**kwargs)
    if name == "pg":
        return PGSolver(**kwargs)
    raise ValidationError(f"unknown solver {name!r}")


def solve_policy(mdp_or_env, spec: ShapedRewardSpec, budget: SolverBudget | None = None, seed=0,
                 solver: str = "exact", init_policy=None) -> SolverReport:
    return make_solver(solver).solve(mdp_or_env, spec, budget, seed, init_policy)


__all__ = [
    "BiasPoint",
    "ExactSolver",
    "PGSolver",
    "ShapedRewardSpec",
    "SolverBudget",
    "SolverReport",
    "make_solver",
    "measure_oracle_bias",
    "oracle_bias_table",
    "shaped_reward",
    "shaped_rewards",
    "shaped_table",
    "solve_policy",
]
