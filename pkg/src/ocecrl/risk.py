"""Optimized certainty equivalents (OCEs) and the CVaR reward transform.

Everything here works in reward orientation: larger outcomes are better and
risk values come from the supremal convolution

    rho(Z) = sup_t { t + E[g(Z - t)] }

with a concave, nondecreasing utility ``g`` satisfying ``g(0) = 0``.  A spec
with ``orientation="loss"`` is evaluated through ``Z -> -Z`` at the boundary,
which turns the supremum into the infimal-convolution form used for losses.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import DomainError, ValidationError

WEIGHT_TOL = 1e-12
# candidate-by-sample matrix size above which the exact search is chunked
_CHUNK = 2_000_000


def check_beta(beta: float, name: str = "beta") -> float:
    beta = float(beta)
    if not (0.0 < beta <= 1.0) or math.isnan(beta):
        raise ValidationError(f"{name} must lie in (0, 1], got {beta!r}")
    return beta


@dataclass(frozen=True)
class OceSpec:
    """A risk functional: utility family plus orientation.

    ``kind`` is one of ``"cvar"``, ``"mean"`` or ``"piecewise_linear"``.
    For the piecewise-linear family, ``breakpoints`` is a sequence of
    ``(point, slope)`` pairs sorted by point; ``slope`` holds on
    ``[point, next point)`` and ``initial_slope`` holds left of the first
    point.  The utility is anchored so that ``g(0) = 0``.
    """

    kind: str
    beta: float | None = None
    breakpoints: tuple[tuple[float, float], ...] = ()
    initial_slope: float = 1.0
    orientation: str = "reward"

    def __post_init__(self):
        if self.orientation not in ("reward", "loss"):
            raise ValidationError(f"orientation must be 'reward' or 'loss', got {self.orientation!r}")
        if self.kind == "cvar":
            if self.beta is None:
                raise ValidationError("cvar utility needs beta")
            object.__setattr__(self, "beta", check_beta(self.beta))
        elif self.kind == "mean":
            pass
        elif self.kind == "piecewise_linear":
            bps = tuple((float(p), float(s)) for p, s in self.breakpoints)
            object.__setattr__(self, "breakpoints", bps)
            points = [p for p, _ in bps]
            if any(not math.isfinite(v) for pair in bps for v in pair):
                raise ValidationError("breakpoints must be finite")
            if any(b <= a for a, b in zip(points, points[1:])):
                raise ValidationError("breakpoint points must be strictly increasing")
            slopes = [float(self.initial_slope)] + [s for _, s in bps]
            if any(s < 0 for s in slopes):
                raise ValidationError("utility must be nondecreasing (all slopes >= 0)")
            if any(b > a for a, b in zip(slopes, slopes[1:])):
                raise ValidationError("utility must be concave (slopes nonincreasing)")
        else:
            raise ValidationError(f"unknown utility kind {self.kind!r}")

    @classmethod
    def cvar(cls, beta: float, orientation: str = "reward") -> "OceSpec":
        return cls("cvar", beta=beta, orientation=orientation)

    @classmethod
    def mean(cls, orientation: str = "reward") -> "OceSpec":
        return cls("mean", orientation=orientation)

    @classmethod
    def piecewise_linear(
        cls,
        breakpoints: Sequence[tuple[float, float]],
        initial_slope: float,
        orientation: str = "reward",
    ) -> "OceSpec":
        return cls(
            "piecewise_linear",
            breakpoints=tuple(breakpoints),
            initial_slope=initial_slope,
            orientation=orientation,
        )

    def as_piecewise_linear(self) -> "OceSpec":
        """The same utility expressed in the general piecewise-linear family."""
        if self.kind == "cvar":
            return OceSpec.piecewise_linear([(0.0, 0.0)], 1.0 / self.beta, self.orientation)
        if self.kind == "mean":
            return OceSpec.piecewise_linear([], 1.0, self.orientation)
        return self

    def utility(self, u):
        """Reward-orientation utility g evaluated elementwise."""
        u = np.asarray(u, dtype=float)
        if self.kind == "cvar":
            return np.minimum(u, 0.0) / self.beta
        if self.kind == "mean":
            return u.copy()
        return _pl_eval(self.breakpoints, self.initial_slope, u) - _pl_eval(
            self.breakpoints, self.initial_slope, np.zeros(1)
        )[0]


def _pl_eval(breakpoints, initial_slope, u):
    # antiderivative of the slope profile, pinned to 0 at the first point
    if not breakpoints:
        return initial_slope * u
    points = np.array([p for p, _ in breakpoints])
    slopes = np.array([s for _, s in breakpoints])
    seg_len = np.diff(points)
    knot_vals = np.concatenate([[0.0], np.cumsum(slopes[:-1] * seg_len)])
    idx = np.searchsorted(points, u, side="right") - 1
    left = idx < 0
    j = np.clip(idx, 0, len(points) - 1)
    out = knot_vals[j] + slopes[j] * (u - points[j])
    return np.where(left, initial_slope * (u - points[0]), out)


@dataclass(frozen=True)
class RiskValue:
    value: float
    optimizer_t: float
    attained: bool = True


def as_weighted(samples, weights=None) -> tuple[np.ndarray, np.ndarray]:
    """Validate and return ``(values, weights)`` as flat float arrays."""
    z = np.asarray(samples, dtype=float).ravel()
    if z.size == 0:
        raise DomainError("samples must be nonempty")
    if not np.all(np.isfinite(z)):
        raise ValidationError("samples must be finite")
    if weights is None:
        return z, np.full(z.size, 1.0 / z.size)
    w = np.asarray(weights, dtype=float).ravel()
    if w.shape != z.shape:
        raise ValidationError(f"weights shape {w.shape} does not match samples shape {z.shape}")
    if np.any(w < 0) or not np.all(np.isfinite(w)):
        raise ValidationError("weights must be finite and nonnegative")
    if abs(w.sum() - 1.0) > WEIGHT_TOL:
        raise ValidationError(f"weights must sum to 1 within {WEIGHT_TOL}, got {w.sum()!r}")
    return z, w


def _reward_value(spec: OceSpec, z, w, t: float) -> float:
    if spec.kind == "cvar":
        return float(t - np.dot(w, np.maximum(t - z, 0.0)) / spec.beta)
    return float(t + np.dot(w, spec.utility(z - t)))


def oce_value(spec: OceSpec, samples, t: float, weights=None) -> float:
    """Evaluate the convolution integrand ``t + E[g(Z - t)]`` at a fixed ``t``.

    For a loss-oriented spec the utility is the reflected ``u -> -g(-u)``,
    so the same expression is the infimal-convolution integrand.
    """
    z, w = as_weighted(samples, weights)
    if spec.orientation == "loss":
        return -_reward_value(spec, -z, w, -float(t))
    return _reward_value(spec, z, w, float(t))


def oce_optimize_t(spec: OceSpec, samples, weights=None) -> RiskValue:
    """Optimize the convolution over ``t`` exactly.

    CVaR uses the closed form (lower beta-quantile); the general
    piecewise-linear family searches every kink of the concave objective.
    """
    z, w = as_weighted(samples, weights)
    if spec.orientation == "loss":
        r = _optimize_reward(spec, -z, w)
        return RiskValue(-r.value, -r.optimizer_t, r.attained)
    return _optimize_reward(spec, z, w)


def lower_quantile(z, w, level: float) -> float:
    """Smallest sample value whose cumulative weight reaches ``level``."""
    order = np.argsort(z, kind="stable")
    cum = np.cumsum(w[order])
    k = int(np.searchsorted(cum, level - WEIGHT_TOL, side="left"))
    return float(z[order][min(k, z.size - 1)])


def _optimize_reward(spec: OceSpec, z, w) -> RiskValue:
    if spec.kind == "cvar":
        t = lower_quantile(z, w, spec.beta)
        return RiskValue(_reward_value(spec, z, w, t), t, True)
    if spec.kind == "mean":
        m = float(np.dot(w, z))
        return RiskValue(m, min(max(m, float(z.min())), float(z.max())), True)

    slopes = [spec.initial_slope] + [s for _, s in spec.breakpoints]
    # h'(t) = 1 - E[g'(Z - t)]: t -> +inf sees the left slope, t -> -inf the right one
    if slopes[0] < 1.0:
        return RiskValue(math.inf, math.inf, False)
    if slopes[-1] > 1.0:
        return RiskValue(math.inf, -math.inf, False)

    points = np.array([p for p, _ in spec.breakpoints], dtype=float)
    cands = (z[:, None] - points[None, :]).ravel() if points.size else np.empty(0)
    cands = np.unique(np.concatenate([cands, [z.min(), z.max()]]))
    vals = np.empty(cands.size)
    step = max(1, _CHUNK // z.size)
    for lo in range(0, cands.size, step):
        c = cands[lo : lo + step]
        vals[lo : lo + step] = c + spec.utility(z[None, :] - c[:, None]) @ w
    best = vals.max()
    ties = np.flatnonzero(vals >= best - 1e-12 * max(1.0, abs(best)))
    in_range = [i for i in ties if z.min() <= cands[i] <= z.max()]
    i = in_range[0] if in_range else ties[0]
    return RiskValue(float(vals[i]), float(cands[i]), True)


def transformed_reward(r, t, beta: float):
    """CVaR-transformed reward ``t - (t - r)_+ / beta``.

    With ``beta == 1`` this is exactly ``min(t, r)``.
    """
    beta = check_beta(beta)
    r = np.asarray(r, dtype=float)
    t = np.asarray(t, dtype=float)
    if beta == 1.0:
        out = np.minimum(t, r)
    else:
        out = t - np.maximum(t - r, 0.0) / beta
    return float(out) if out.ndim == 0 else out


def transformed_reward_subgrad_t(r, t, beta: float):
    """A subgradient of the transformed reward in ``t``.

    Uses the right-continuous indicator, so a tie ``t == r`` counts as
    ``t >= r``.
    """
    beta = check_beta(beta)
    ind = (np.asarray(t, dtype=float) >= np.asarray(r, dtype=float)).astype(float)
    out = 1.0 - ind / beta
    return float(out) if out.ndim == 0 else out


def lipschitz_constant(gamma: float, betas: Sequence[float], lam: Sequence[float] = ()) -> float:
    """Lipschitz constant of the Lagrangian in ``t``.

    ``betas`` lists the objective level first and one level per constraint;
    ``lam`` holds the constraint multipliers.
    """
    gamma = float(gamma)
    if not 0.0 < gamma < 1.0:
        raise ValidationError(f"gamma must lie in (0, 1), got {gamma!r}")
    betas = [check_beta(b, f"betas[{i}]") for i, b in enumerate(betas)]
    lam = [float(x) for x in lam]
    if len(betas) != len(lam) + 1:
        raise ValidationError(f"need len(betas) == len(lambda) + 1, got {len(betas)} and {len(lam)}")
    if any(x < 0 for x in lam):
        raise ValidationError("multipliers must be nonnegative")
    total = (1.0 + 1.0 / betas[0]) ** 2
    total += sum(l * l * (1.0 + 1.0 / b) ** 2 for l, b in zip(lam, betas[1:]))
    return math.sqrt(total) / (1.0 - gamma)
