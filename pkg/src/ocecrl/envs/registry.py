"""Build environments from the ``env`` block of a run config."""

from __future__ import annotations

import numpy as np

from ..errors import ValidationError
from .gridnav import make_gridnav, standard_instance
from .pointmass import PointMass, velocity_threshold_protocol
from .rollout import TabularEnv
from .tabular import TabularMdp, canonical_two_state, random_mdp


def build_env(env_spec: dict):
    """Return ``(env_handle, mdp_or_None)`` for an ``{"name", "params"}`` mapping."""
    name = env_spec.get("name")
    params = dict(env_spec.get("params") or {})
    try:
        if name == "two_state":
            mdp = canonical_two_state(**params)
        elif name == "gridnav":
            kwargs = standard_instance()
            kwargs.update(params)
            mdp = make_gridnav(**kwargs)
        elif name == "random_mdp":
            seed = params.pop("seed", 0)
            mdp = random_mdp(np.random.default_rng(seed), **params)
        elif name == "mdp_file":
            mdp = TabularMdp.load(params["path"])
        elif name == "pointmass":
            if "vel_threshold" not in params:
                fraction = params.pop("threshold_fraction", 0.5)
                env_kwargs = {k: v for k, v in params.items() if k != "threshold_fraction"}
                params["vel_threshold"] = velocity_threshold_protocol(fraction, **env_kwargs)
            params.pop("threshold_fraction", None)
            return PointMass(**params), None
        else:
            raise ValidationError(f"env.name: unknown environment {name!r}")
    except TypeError as exc:
        raise ValidationError(f"env.params: {exc}") from None
    except KeyError as exc:
        raise ValidationError(f"env.params: missing {exc}") from None
    return TabularEnv(mdp), mdp
