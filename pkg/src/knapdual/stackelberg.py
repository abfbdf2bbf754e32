"""Repeated leader-commitment games with per-round action costs.

The leader commits to a mixed strategy over a finite action set, a follower
of a (round-dependent) type best-responds with ties broken in the leader's
favor, and the leader additionally pays a per-round cost linear in the
committed mixture.  Although the leader's utility is discontinuous in the
mixture, the cumulative objective is always maximized on a finite candidate
set: the vertices of the polytopes on which each follower type's best
response is constant.  Enumerating that set reduces the problem to a regret
minimizer over a simplex of finitely many candidate strategies, which plugs
straight into the episode driver.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

from .core import Request

TIE_TOL = 1e-9
CLAMP_TOL = 1e-9
DEDUP_TOL = 1e-8


@dataclass(frozen=True)
class StackelbergInstance:
    """Leader payoff matrix, follower type payoffs, and a costless leader row.

    ``leader_payoff`` and every follower matrix are ``n_leader x n_follower``
    with entries in [0, 1].  ``void_row`` indexes a leader action with zero
    payoff in every column; cost matrices supplied per round must also charge
    it nothing, which `round_request` checks.
    """

    leader_payoff: np.ndarray
    follower_payoffs: tuple
    void_row: int = 0

    def __post_init__(self):
        lp = np.array(self.leader_payoff, dtype=float)
        lp.setflags(write=False)
        object.__setattr__(self, "leader_payoff", lp)
        fps = []
        for mat in self.follower_payoffs:
            arr = np.array(mat, dtype=float)
            arr.setflags(write=False)
            fps.append(arr)
        object.__setattr__(self, "follower_payoffs", tuple(fps))
        if lp.ndim != 2:
            raise ValueError("leader payoff must be a matrix")
        for arr in (lp, *self.follower_payoffs):
            if arr.shape != lp.shape:
                raise ValueError("payoff matrices disagree on dimensions")
            if arr.min() < 0.0 or arr.max() > 1.0:
                raise ValueError("payoff entries must lie in [0, 1]")
        if not 0 <= self.void_row < lp.shape[0]:
            raise ValueError("void_row out of range")
        if np.any(np.abs(lp[self.void_row]) > TIE_TOL):
            raise ValueError("void leader action must earn zero payoff")

    @property
    def n_leader(self) -> int:
        return self.leader_payoff.shape[0]

    @property
    def n_follower(self) -> int:
        return self.leader_payoff.shape[1]

    @property
    def n_types(self) -> int:
        return len(self.follower_payoffs)


def follower_best_response(x, follower_payoff, leader_payoff) -> int:
    """Follower argmax column under mixture ``x``, ties favoring the leader.

    Among follower-optimal columns (within a 1e-9 indifference band) the one
    with the highest leader value wins; remaining ties go to the lowest
    index.
    """
    x = np.asarray(x, dtype=float)
    follower_vals = x @ follower_payoff
    best = follower_vals.max()
    tied = np.flatnonzero(follower_vals >= best - TIE_TOL)
    leader_vals = x @ leader_payoff
    return int(tied[np.argmax(leader_vals[tied])])


def enumerate_restricted_vertices(follower_payoffs, n_leader: int) -> list[np.ndarray]:
    """Candidate leader mixtures containing an optimizer of any play sequence.

    Candidates are solutions of ``n_leader - 1`` equalities drawn from the
    follower indifference hyperplanes ``x @ U_k (e_a - e_b) = 0`` and the
    faces ``x[j] = 0``, combined with the simplex normalization.  Singular
    selections are skipped; near-feasible solutions are clamped onto the
    simplex and deduplicated.  The pure strategies are always included.
    """
    if n_leader < 1:
        raise ValueError("need at least one leader action")
    rows = []
    for payoff in follower_payoffs:
        payoff = np.asarray(payoff, dtype=float)
        n_follower = payoff.shape[1]
        for a, b in itertools.combinations(range(n_follower), 2):
            rows.append(payoff[:, a] - payoff[:, b])
    for j in range(n_leader):
        face = np.zeros(n_leader)
        face[j] = 1.0
        rows.append(face)

    seen = set()
    vertices: list[np.ndarray] = []

    def admit(x: np.ndarray) -> None:
        if x.min() < -CLAMP_TOL or abs(x.sum() - 1.0) > 1e-7:
            return
        x = np.clip(x, 0.0, None)
        x = x / x.sum()
        key = tuple(np.round(x / DEDUP_TOL) * DEDUP_TOL)
        if key not in seen:
            seen.add(key)
            vertices.append(x)

    for j in range(n_leader):
        pure = np.zeros(n_leader)
        pure[j] = 1.0
        admit(pure)

    for chosen in itertools.combinations(range(len(rows)), n_leader - 1):
        mat = np.vstack([np.ones((1, n_leader))] + [rows[i] for i in chosen])
        vec = np.zeros(n_leader)
        vec[0] = 1.0
        try:
            x = np.linalg.solve(mat, vec)
        except np.linalg.LinAlgError:
            continue
        if not np.all(np.isfinite(x)) or np.max(np.abs(mat @ x - vec)) > 1e-7:
            continue
        admit(x)
    return vertices


def leader_round(x, instance: StackelbergInstance, type_index: int, cost_matrix,
                 lam) -> tuple[float, np.ndarray, float]:
    """Realized leader reward, cost vector, and multiplier-adjusted payoff.

    The follower of the given type best-responds to ``x``; the leader earns
    the bilinear payoff against that column and pays ``x @ cost_matrix``.
    """
    x = np.asarray(x, dtype=float)
    cost_matrix = np.asarray(cost_matrix, dtype=float)
    lam = np.asarray(lam, dtype=float)
    y = follower_best_response(x, instance.follower_payoffs[type_index], instance.leader_payoff)
    reward = float(x @ instance.leader_payoff[:, y])
    cost = x @ cost_matrix
    return reward, cost, reward - float(lam @ cost)


class VertexActionSpace:
    """Finite action space of candidate mixtures, usable by the episode driver.

    Wraps the enumerated candidate set; the pure void strategy is guaranteed
    to be present and its index exposed for the budget guard.
    """

    def __init__(self, instance: StackelbergInstance):
        self.instance = instance
        self.vertices = enumerate_restricted_vertices(
            instance.follower_payoffs, instance.n_leader)
        pure_void = np.zeros(instance.n_leader)
        pure_void[instance.void_row] = 1.0
        self.void_index = next(
            i for i, v in enumerate(self.vertices)
            if np.max(np.abs(v - pure_void)) <= DEDUP_TOL)

    @property
    def n_actions(self) -> int:
        return len(self.vertices)

    def round_request(self, type_index: int, cost_matrix) -> Request:
        """Per-round reward/cost table over the candidate strategies."""
        cost_matrix = np.atleast_2d(np.asarray(cost_matrix, dtype=float))
        if cost_matrix.shape[0] != self.instance.n_leader:
            raise ValueError("cost matrix rows must match leader actions")
        if np.any(np.abs(cost_matrix[self.instance.void_row]) > TIE_TOL):
            raise ValueError("void leader action must consume nothing")
        rewards = np.empty(self.n_actions)
        costs = np.empty((self.n_actions, cost_matrix.shape[1]))
        for i, x in enumerate(self.vertices):
            y = follower_best_response(
                x, self.instance.follower_payoffs[type_index], self.instance.leader_payoff)
            rewards[i] = x @ self.instance.leader_payoff[:, y]
            costs[i] = x @ cost_matrix
        return Request(rewards, np.clip(costs, 0.0, 1.0), self.void_index)
