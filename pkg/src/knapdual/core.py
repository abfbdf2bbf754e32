"""Domain types and exact operations for budget-constrained online learning.

Everything here is finite-support and pure: requests, mixtures over actions,
dual multiplier vectors, per-resource budget accounting, the per-round
packing LP together with its Lagrangian, input averaging, and total-variation
bookkeeping for non-stationary inputs.  Values are immutable after
construction, so they can be shared freely across episodes and threads.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .lp import packing_lp

MIXTURE_TOL = 1e-9
DUAL_TOL = 1e-9
RANGE_TOL = 1e-9


def _frozen(arr, dtype=float) -> np.ndarray:
    out = np.array(arr, dtype=dtype)
    out.setflags(write=False)
    return out


@dataclass(frozen=True)
class ActionSet:
    """Finite action index set with a designated do-nothing action.

    The do-nothing ("void") action earns no reward and consumes no resource;
    it is what guarantees that the budget constraints always admit a feasible
    play.
    """

    actions: tuple
    void_index: int = 0

    def __post_init__(self):
        if len(self.actions) < 1:
            raise ValueError("action set must be nonempty")
        if not 0 <= self.void_index < len(self.actions):
            raise ValueError("void_index out of range")

    @property
    def n(self) -> int:
        return len(self.actions)


@dataclass(frozen=True)
class Request:
    """One round's reward vector and cost matrix over a finite action set.

    ``rewards`` has shape ``(n,)`` with entries in [0, 1]; ``costs`` has shape
    ``(n, m)`` with entries in [0, 1].  The row at ``void_index`` must be all
    zeros (reward included), which is checked at construction time.
    """

    rewards: np.ndarray
    costs: np.ndarray
    void_index: int = 0

    def __post_init__(self):
        object.__setattr__(self, "rewards", _frozen(self.rewards))
        object.__setattr__(self, "costs", _frozen(np.atleast_2d(self.costs)))
        if self.rewards.ndim != 1 or self.costs.ndim != 2:
            raise ValueError("rewards must be a vector and costs a matrix")
        n = self.rewards.shape[0]
        if self.costs.shape[0] != n:
            raise ValueError("rewards and costs disagree on the number of actions")
        if not 0 <= self.void_index < n:
            raise ValueError("void_index out of range")
        for name, arr in (("reward", self.rewards), ("cost", self.costs)):
            if arr.size and (arr.min() < -RANGE_TOL or arr.max() > 1.0 + RANGE_TOL):
                raise ValueError(f"{name} entries must lie in [0, 1]")
        if abs(self.rewards[self.void_index]) > RANGE_TOL or np.any(np.abs(self.costs[self.void_index]) > RANGE_TOL):
            raise ValueError("void action must have zero reward and zero cost")

    @property
    def n(self) -> int:
        return self.rewards.shape[0]

    @property
    def m(self) -> int:
        return self.costs.shape[1]


@dataclass(frozen=True)
class Mixture:
    """Probability weights over a finite action set."""

    weights: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "weights", _frozen(self.weights))
        if self.weights.ndim != 1 or self.weights.size < 1:
            raise ValueError("weights must be a nonempty vector")
        if self.weights.min() < 0.0:
            raise ValueError("mixture weights must be nonnegative")
        if abs(self.weights.sum() - 1.0) > MIXTURE_TOL:
            raise ValueError("mixture weights must sum to one")

    @classmethod
    def dirac(cls, index: int, n: int) -> "Mixture":
        w = np.zeros(n)
        w[index] = 1.0
        return cls(w)

    @property
    def n(self) -> int:
        return self.weights.shape[0]


@dataclass(frozen=True)
class DualVector:
    """Nonnegative multiplier vector with 1-norm capped at ``1/rho``."""

    lam: np.ndarray
    rho: float

    def __post_init__(self):
        object.__setattr__(self, "lam", _frozen(self.lam))
        if not 0.0 < self.rho <= 1.0:
            raise ValueError("rho must lie in (0, 1]")
        if self.lam.ndim != 1:
            raise ValueError("lam must be a vector")
        if self.lam.size and self.lam.min() < 0.0:
            raise ValueError("dual coordinates must be nonnegative")
        if self.lam.sum() > 1.0 / self.rho + DUAL_TOL:
            raise ValueError("dual 1-norm exceeds 1/rho")

    @property
    def m(self) -> int:
        return self.lam.shape[0]


class BudgetState:
    """Per-resource budget accounting with a compensated running spend.

    The spend per resource is accumulated with Neumaier compensation so that
    the remaining budget used by the play/skip guard does not drift over long
    horizons.  ``playable`` is True while every remaining budget can still
    absorb a maximal unit cost.
    """

    def __init__(self, budget: float, horizon: int, n_resources: int):
        if budget < 1 or horizon < 1:
            raise ValueError("budget and horizon must be at least one")
        if budget > horizon:
            raise ValueError("budget exceeds horizon")
        self.B = float(budget)
        self.horizon = int(horizon)
        self.rho = self.B / self.horizon
        self.m = int(n_resources)
        self._spent = np.zeros(self.m)
        self._comp = np.zeros(self.m)

    def charge(self, costs) -> None:
        costs = np.asarray(costs, dtype=float)
        if costs.shape != (self.m,):
            raise ValueError("cost vector has the wrong number of resources")
        total = self._spent + costs
        small = np.where(np.abs(self._spent) >= np.abs(costs),
                         (self._spent - total) + costs,
                         (costs - total) + self._spent)
        self._comp += small
        self._spent = total

    @property
    def spent(self) -> np.ndarray:
        return self._spent + self._comp

    @property
    def remaining(self) -> np.ndarray:
        return self.B - self.spent

    @property
    def playable(self) -> bool:
        return bool(np.all(self.remaining >= 1.0))

    @property
    def depleted(self) -> bool:
        return not self.playable


@dataclass(frozen=True)
class BaselineReport:
    """LP-derived upper bounds for the fixed-policy and dynamic baselines.

    ``opt_lp_value`` is the per-round packing LP optimum on the time-averaged
    inputs; the two horizon-scaled numbers are upper bounds on the
    best-fixed-mixture and best-dynamic-policy values, not exact baselines,
    and are reported as such.
    """

    opt_lp_value: float
    opt_lp_mixture: Mixture
    opt_dp_upper: float
    opt_fd_upper: float


def evaluate_lagrangian(xi: Mixture, lam: DualVector, req: Request) -> float:
    """Expected reward plus multiplier-weighted expected budget slack.

    Computes ``E[f] + <lam, rho * 1 - E[c]>`` by exact weighted sums.
    """
    if xi.n != req.n:
        raise ValueError("mixture and request disagree on the number of actions")
    if lam.m != req.m:
        raise ValueError("dual vector and request disagree on the number of resources")
    exp_reward = float(xi.weights @ req.rewards)
    exp_cost = xi.weights @ req.costs
    return exp_reward + float(lam.lam @ (lam.rho - exp_cost))


def solve_opt_lp(req: Request, rho: float) -> tuple[float, Mixture]:
    """Best mixture value subject to expected per-resource cost at most rho.

    Solved exactly: vertex enumeration for small instances, dense simplex
    otherwise.  Always feasible thanks to the void action.
    """
    if not 0.0 < rho <= 1.0:
        raise ValueError("rho must lie in (0, 1]")
    value, w = packing_lp(req.rewards, req.costs, rho, req.void_index)
    return float(value), Mixture(w)


def best_response_value(lam: DualVector, req: Request, rho: float) -> tuple[float, int]:
    """Best single action against a fixed multiplier vector.

    Returns ``max_x f(x) + <lam, rho * 1 - c(x)>`` and the argmax index, ties
    broken toward the lowest index.
    """
    if lam.m != req.m:
        raise ValueError("dual vector and request disagree on the number of resources")
    scores = req.rewards + (rho - req.costs) @ lam.lam
    arg = int(np.argmax(scores))
    return float(scores[arg]), arg


def dual_grid_min(req: Request, rho: float, step: float = 1e-3) -> float:
    """Grid minimum over the capped dual set of the best-response value.

    For one resource the grid is exhaustive at the requested step.  For two
    or three resources an exhaustive product grid at step 1e-3 is out of
    reach, so the minimum is located by shrinking grid refinement, which
    converges for this objective because a max of affine functions is convex
    in the multiplier.  Only best-response evaluations are used, keeping this
    route independent of the LP solver.
    """
    m = req.m
    cap = 1.0 / rho
    coeff = rho - req.costs  # score(x, lam) = rewards[x] + coeff[x] @ lam

    def grid_best(axes) -> tuple[float, np.ndarray]:
        pts = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, m)
        pts = pts[pts.sum(axis=1) <= cap + 1e-12]
        scores = req.rewards[None, :] + pts @ coeff.T
        vals = scores.max(axis=1)
        best = int(np.argmin(vals))
        return float(vals[best]), pts[best]

    if m == 1:
        axis = np.linspace(0.0, cap, round(cap / step) + 1)
        return grid_best([axis])[0]

    width = cap
    center = np.full(m, cap / (2 * m))
    best_val = np.inf
    while True:
        spacing = width / 16
        axes = [np.clip(center[i] + spacing * np.arange(-8, 9), 0.0, cap) for i in range(m)]
        val, point = grid_best(axes)
        best_val = min(best_val, val)
        if spacing <= step:
            return best_val
        center = point
        width /= 4


def average_inputs(seq, tau: int) -> Request:
    """Entrywise average of the first ``tau`` requests of a sequence.

    Coordinates that are identical across the window are passed through
    bit-identically (floating-point averaging of tau equal values is not
    otherwise exact for tau > 2).
    """
    if not 1 <= tau <= len(seq):
        raise ValueError("tau out of range")
    window = seq[:tau]
    first = window[0]
    if any(r.void_index != first.void_index or r.n != first.n or r.m != first.m for r in window):
        raise ValueError("requests in the sequence disagree on dimensions")
    if tau == 1:
        return first

    def avg(stack):
        mean = stack.mean(axis=0)
        same = np.all(stack == stack[0], axis=0)
        return np.where(same, stack[0], mean)

    rewards = avg(np.stack([r.rewards for r in window]))
    costs = avg(np.stack([r.costs for r in window]))
    return Request(rewards, costs, first.void_index)


def baselines(seq, rho: float, horizon: int) -> BaselineReport:
    """LP upper bounds for a full input sequence.

    The packing LP is solved on the horizon-averaged inputs; both the
    dynamic-policy and fixed-mixture baselines are then bounded above by the
    horizon times the LP value.
    """
    if len(seq) == 0:
        raise ValueError("empty input sequence")
    if len(seq) != horizon:
        raise ValueError("sequence length must equal the horizon")
    averaged = average_inputs(seq, horizon)
    value, mix = solve_opt_lp(averaged, rho)
    return BaselineReport(
        opt_lp_value=value,
        opt_lp_mixture=mix,
        opt_dp_upper=horizon * value,
        opt_fd_upper=horizon * value,
    )


def total_variation(p, q) -> float:
    """Total variation distance between two finite probability vectors."""
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    if p.shape != q.shape:
        raise ValueError("distributions have mismatched support")
    return 0.5 * float(np.abs(p - q).sum())


def mean_deviation(per_round, reference) -> float:
    """Summed total variation of per-round distributions from a reference.

    Each element of ``per_round`` and ``reference`` is a probability vector
    over one shared, finite template set; mismatched supports are rejected.
    """
    reference = np.asarray(reference, dtype=float)
    return float(sum(total_variation(p, reference) for p in per_round))


@dataclass(frozen=True)
class GapDemo:
    primal: float
    dual: float
    gap: float
    grid_step: float


def semi_infinite_gap_demo(grid_step: float) -> GapDemo:
    """Numerical duality-gap exhibit for a constrained selection problem.

    On the grid ``{0, s, ..., 1}`` take the objective that is 1 at the origin
    and 0 elsewhere, and minimize its mean over mixtures whose mean coordinate
    is at most 0.  Because the coordinates are nonnegative, the constraint
    confines all mass to the zero-coordinate points, so the primal minimum is
    computed exactly as the objective minimum over that support (here: 1).
    The dual value ``max_lam min_x f(x) + lam * x`` is evaluated over a
    multiplier grid spanning [0, 1] with the same step; the inner minimum is
    attained at the smallest positive grid point, so the dual stays at
    grid-step scale and the gap approaches 1 as the grid is refined.
    """
    if not 0.0 < grid_step <= 0.1:
        raise ValueError("grid_step must lie in (0, 0.1]")
    n = round(1.0 / grid_step)
    xs = np.linspace(0.0, 1.0, n + 1)
    f = np.zeros_like(xs)
    f[0] = 1.0

    feasible_support = xs <= 0.0
    primal = float(f[feasible_support].min())

    lams = np.linspace(0.0, 1.0, n + 1)
    inner = f[None, :] + lams[:, None] * xs[None, :]
    dual = float(inner.min(axis=1).max())
    return GapDemo(primal=primal, dual=dual, gap=primal - dual, grid_step=grid_step)
