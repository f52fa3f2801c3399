from .gridnav import cell_index, grid_distances, make_gridnav
from .pointmass import PointMass, make_pointmass, velocity_threshold_protocol
from .policies import GaussianLinearPolicy, SoftmaxLinearPolicy, TabularPolicy, policy_from_dict
from .registry import build_env
from .rollout import RolloutBatch, TabularEnv, Trajectory, collect, rollout, rollout_batch, write_trajectory_csv
from .tabular import (
    OccupancyMeasure,
    TabularMdp,
    canonical_two_state,
    discounted_value,
    exact_occupancy,
    random_mdp,
    random_policy,
    truncation_horizon,
)

__all__ = [
    "GaussianLinearPolicy",
    "OccupancyMeasure",
    "PointMass",
    "RolloutBatch",
    "SoftmaxLinearPolicy",
    "TabularEnv",
    "TabularMdp",
    "TabularPolicy",
    "Trajectory",
    "build_env",
    "canonical_two_state",
    "cell_index",
    "collect",
    "discounted_value",
    "exact_occupancy",
    "grid_distances",
    "make_gridnav",
    "make_pointmass",
    "policy_from_dict",
    "random_mdp",
    "random_policy",
    "rollout",
    "rollout_batch",
    "truncation_horizon",
    "velocity_threshold_protocol",
    "write_trajectory_csv",
]
