"""Constrained grid navigation as a tabular MDP."""

from __future__ import annotations

from collections import deque

import numpy as np

from ..errors import ValidationError
from .tabular import TabularMdp

# north, east, south, west as (dx, dy)
MOVES = ((0, -1), (1, 0), (0, 1), (-1, 0))


def cell_index(width: int, cell) -> int:
    x, y = cell
    return y * width + x


def make_gridnav(
    width: int,
    height: int,
    unsafe_cells=(),
    goal=None,
    slip_prob: float = 0.0,
    start=(0, 0),
    gamma: float = 0.99,
    goal_reward: float = 1.0,
    step_cost: float = 0.01,
) -> TabularMdp:
    """Grid world with a goal and unsafe cells.

    With probability ``slip_prob`` a move fails and the agent stays put.
    The goal is absorbing and pays ``goal_reward`` per step; other cells
    cost ``step_cost``.  Reward index 1 is ``-1`` on unsafe cells and ``0``
    elsewhere (a unit cost mapped to reward orientation).  Unsafe cells do
    not alter the dynamics.
    """
    if width < 1 or height < 1:
        raise ValidationError("grid dimensions must be positive")
    if not 0.0 <= slip_prob <= 1.0:
        raise ValidationError(f"slip_prob must lie in [0, 1], got {slip_prob!r}")
    goal = (width - 1, height - 1) if goal is None else tuple(goal)
    start = tuple(start)
    unsafe = {tuple(c) for c in unsafe_cells}

    def inside(c):
        return 0 <= c[0] < width and 0 <= c[1] < height

    for c in [goal, start, *unsafe]:
        if not inside(c):
            raise ValidationError(f"cell {c} lies outside the {width}x{height} grid")
    if goal in unsafe:
        raise ValidationError(f"goal {goal} overlaps an unsafe cell")

    S, A = width * height, len(MOVES)
    P = np.zeros((S, A, S))
    r0 = np.full((S, A), -float(step_cost))
    r1 = np.zeros((S, A))
    g = cell_index(width, goal)
    for y in range(height):
        for x in range(width):
            s = cell_index(width, (x, y))
            if (x, y) in unsafe:
                r1[s] = -1.0
            if s == g:
                P[s, :, s] = 1.0
                r0[s] = goal_reward
                continue
            for a, (dx, dy) in enumerate(MOVES):
                nxt = (x + dx, y + dy)
                ns = cell_index(width, nxt) if inside(nxt) else s
                P[s, a, ns] += 1.0 - slip_prob
                P[s, a, s] += slip_prob
    mu = np.zeros(S)
    mu[cell_index(width, start)] = 1.0
    return TabularMdp(P, np.stack([r0, r1]), gamma, mu)


def grid_distances(width: int, height: int, goal, blocked=()) -> np.ndarray:
    """Breadth-first step counts to ``goal`` avoiding ``blocked`` cells (inf if unreachable)."""
    blocked = {tuple(c) for c in blocked}
    dist = np.full(width * height, np.inf)
    dist[cell_index(width, goal)] = 0
    queue = deque([tuple(goal)])
    while queue:
        x, y = queue.popleft()
        d = dist[cell_index(width, (x, y))]
        for dx, dy in MOVES:
            c = (x + dx, y + dy)
            if 0 <= c[0] < width and 0 <= c[1] < height and c not in blocked:
                i = cell_index(width, c)
                if dist[i] == np.inf:
                    dist[i] = d + 1
                    queue.append(c)
    return dist


def standard_instance(slip_prob: float = 0.1, gamma: float = 0.95) -> dict:
    """Keyword arguments for the 5x5 instance with a binding unsafe wall.

    The straight route from start to goal crosses the wall; the safe detour
    is two steps longer.
    """
    return dict(
        width=5,
        height=5,
        unsafe_cells=[(2, 1), (2, 2)],
        goal=(4, 2),
        start=(0, 2),
        slip_prob=slip_prob,
        gamma=gamma,
    )
