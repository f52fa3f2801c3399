"""JSON schemas for configs, checkpoints, MDPs, policies and run summaries."""

from __future__ import annotations

import jsonschema

from .errors import ValidationError

_num = {"type": "number"}
_num_list = {"type": "array", "items": _num}
_interval = {"type": "array", "items": _num, "minItems": 2, "maxItems": 2}

CONFIG_V1 = {
    "type": "object",
    "required": ["schema", "env"],
    "additionalProperties": False,
    "properties": {
        "schema": {"const": "config.v1"},
        "env": {
            "type": "object",
            "required": ["name"],
            "additionalProperties": False,
            "properties": {
                "name": {"enum": ["two_state", "gridnav", "pointmass", "random_mdp", "mdp_file"]},
                "params": {"type": "object"},
            },
        },
        "objective_beta": {"type": "number", "exclusiveMinimum": 0, "maximum": 1},
        "constraints": {
            "type": "array",
            "items": {
                "type": "object",
                "required": ["index"],
                "additionalProperties": False,
                "properties": {
                    "index": {"type": "integer", "minimum": 1},
                    "beta": {"type": "number", "exclusiveMinimum": 0, "maximum": 1},
                    "threshold": _num,
                    "orientation": {"enum": ["reward", "cost"]},
                },
            },
        },
        "solver": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "name": {"enum": ["exact", "pg"]},
                "max_env_steps": {"type": "integer", "minimum": 0},
                "max_updates": {"type": "integer", "minimum": 0},
                "tolerance": {"type": "number", "exclusiveMinimum": 0},
                "params": {"type": "object"},
                "warm_start": {"type": "boolean"},
            },
        },
        "iterations": {"type": "integer", "minimum": 1},
        "batch_size": {"type": "integer", "minimum": 1},
        "eta_t": {"type": "number", "exclusiveMinimum": 0},
        "eta_lambda": {"type": "number", "exclusiveMinimum": 0},
        "lambda_init": {"type": "number", "minimum": 0},
        "lambda_max": {"type": "number", "exclusiveMinimum": 0},
        "t_init": {"anyOf": [{"type": "null"}, _num_list]},
        "t_boxes": {"anyOf": [{"type": "null"}, {"type": "array", "items": _interval}]},
        "eps_trunc": {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 1},
        "horizon": {"anyOf": [{"type": "null"}, {"type": "integer", "minimum": 1}]},
        "history_size": {"type": "integer", "minimum": 1},
        "seed": {"type": "integer", "minimum": 0},
        "out_dir": {"type": ["string", "null"]},
    },
}

POLICY_V1 = {
    "type": "object",
    "required": ["schema", "representation", "shape", "weights"],
    "properties": {
        "schema": {"const": "policy.v1"},
        "representation": {"enum": ["tabular", "softmax_linear", "gaussian_linear"]},
        "features": {"enum": ["onehot", "affine"]},
        "shape": {"type": "array", "items": {"type": "integer", "minimum": 1}, "minItems": 2, "maxItems": 2},
        "weights": _num_list,
        "log_std": _num_list,
        "log_std_bounds": _interval,
    },
}

MDP_V1 = {
    "type": "object",
    "required": ["schema", "n_states", "n_actions", "n_rewards", "transition", "rewards", "gamma", "initial_dist"],
    "additionalProperties": False,
    "properties": {
        "schema": {"const": "mdp.v1"},
        "n_states": {"type": "integer", "minimum": 1},
        "n_actions": {"type": "integer", "minimum": 1},
        "n_rewards": {"type": "integer", "minimum": 1},
        "transition": _num_list,
        "rewards": _num_list,
        "gamma": {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 1},
        "initial_dist": _num_list,
    },
}

CKPT_V1 = {
    "type": "object",
    "required": ["schema", "iteration", "t", "lambda", "eta_t", "eta_lambda", "boxes", "policy"],
    "properties": {
        "schema": {"const": "ckpt.v1"},
        "iteration": {"type": "integer", "minimum": 0},
        "t": _num_list,
        "lambda": _num_list,
        "eta_t": _num,
        "eta_lambda": _num,
        "boxes": {
            "type": "object",
            "required": ["t_boxes", "lambda_max"],
            "properties": {
                "t_boxes": {"type": "array", "items": _interval},
                "lambda_max": _num,
            },
        },
        "policy": POLICY_V1,
        "config": {"type": "object"},
    },
}

SUMMARY_V1 = {
    "type": "object",
    "required": ["schema", "metadata", "eval"],
    "properties": {
        "schema": {"const": "summary.v1"},
        "metadata": {
            "type": "object",
            "required": ["created"],
            "properties": {"created": {"type": "string"}},
        },
        "run": {"type": "object"},
        "eval": {
            "type": "object",
            "required": [
                "n_episodes",
                "beta_upper_quantile",
                "empirical_cvar",
                "converged_t",
                "mean_return",
                "violation_rate",
            ],
            "properties": {
                "n_episodes": {"type": "integer", "minimum": 1},
                "beta_upper_quantile": _num,
                "empirical_cvar": _num,
                "converged_t": {"type": ["number", "null"]},
                "mean_return": _num,
                "violation_rate": {"type": "number", "minimum": 0, "maximum": 1},
            },
        },
        "histogram": {"type": "object"},
    },
}

SCHEMAS = {
    "config.v1": CONFIG_V1,
    "ckpt.v1": CKPT_V1,
    "mdp.v1": MDP_V1,
    "policy.v1": POLICY_V1,
    "summary.v1": SUMMARY_V1,
}


def validate(data, name: str) -> None:
    """Raise :class:`ValidationError` naming the offending field."""
    try:
        schema = SCHEMAS[name]
    except KeyError:
        raise ValidationError(f"unknown schema {name!r}") from None
    try:
        jsonschema.validate(data, schema)
    except jsonschema.ValidationError as exc:
        where = ".".join(str(p) for p in exc.absolute_path) or "<root>"
        raise ValidationError(f"{name}: field '{where}': {exc.message}") from None
