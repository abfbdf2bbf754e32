"""Primal-dual episode driver and its report metrics.

One episode runs the full horizon: each round the primal minimizer proposes a
mixture and the dual minimizer a multiplier vector, an action is sampled from
the mixture unless some remaining budget has dropped below the maximal unit
cost (in which case the do-nothing action is forced), budgets are charged
with the realized cost, and both minimizers observe their linear utilities.
Depletion never terminates the loop; the stopping round is only recorded.

Feedback modes differ in what the updates may use: with full feedback the
primal sees the whole per-action utility vector and the dual sees the cost
expectation under the played mixture; with bandit feedback the primal sees
only the realized payoff of its sampled arm and the dual uses the realized
cost vector, which is an unbiased stand-in for the unobservable expectation.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .core import BudgetState, DualVector, Mixture, Request, baselines, solve_opt_lp
from .rng import make_rng


@dataclass(frozen=True)
class RoundRecord:
    t: int
    weights: np.ndarray
    action: int
    lam: np.ndarray
    reward: float
    costs: np.ndarray
    remaining: np.ndarray
    void_forced: bool


@dataclass
class Trace:
    """Complete episode record: per-round plays plus summary fields."""

    rounds: list
    stop_time: int
    total_reward: float
    seed: int
    config: dict = field(default_factory=dict)
    precommitment: str | None = None

    @property
    def horizon(self) -> int:
        return len(self.rounds)

    def cost_totals(self) -> np.ndarray:
        if not self.rounds:
            return np.zeros(0)
        return np.sum([r.costs for r in self.rounds], axis=0)


def _sample_index(weights: np.ndarray, rng) -> int:
    u = float(rng.random())
    idx = int(np.searchsorted(np.cumsum(weights), u, side="right"))
    return min(idx, len(weights) - 1)


def run_episode(env, primal, dual, budget: BudgetState, *, order: str = "simultaneous",
                feedback: str = "full", seed: int = 0, config: dict | None = None) -> Trace:
    """Run one full episode of the primal-dual loop against an environment.

    ``env`` supplies exactly ``budget.horizon`` requests via
    ``next_request(t, rng)``.  ``order`` selects whether the dual decision is
    drawn before the primal one; since ``next_element`` never mutates state
    the recorded multiplier is in either case exactly the one whose utilities
    the primal later observes.  Bandit feedback requires a primal with the
    sample-and-observe protocol (one pending arm per round).
    """
    if order not in ("simultaneous", "dual_first"):
        raise ValueError("order must be 'simultaneous' or 'dual_first'")
    if feedback not in ("full", "bandit"):
        raise ValueError("feedback must be 'full' or 'bandit'")
    if env.horizon != budget.horizon:
        raise ValueError("environment and budget disagree on the horizon")
    if env.m != budget.m:
        raise ValueError("environment and budget disagree on the resources")

    rho = budget.rho
    void = env.void_index
    rng_env = make_rng(seed, stream=0)
    rng_sample = make_rng(seed, stream=1)

    rounds: list[RoundRecord] = []
    stop_time = budget.horizon
    stopped = False
    total_reward = 0.0

    for t in range(1, budget.horizon + 1):
        if order == "dual_first":
            lam_t: DualVector = dual.next_element()
            primal_out = primal.next_element()
        else:
            primal_out = primal.next_element()
            lam_t = dual.next_element()

        if feedback == "bandit":
            mixture, pending = primal_out
        else:
            mixture, pending = primal_out, None
        weights = mixture.weights

        playable = budget.playable
        if playable:
            action = pending if pending is not None else _sample_index(weights, rng_sample)
        else:
            action = void

        req: Request = env.next_request(t, rng_env)
        if req.n != len(weights):
            raise ValueError("request and primal iterate disagree on the action count")
        reward = float(req.rewards[action])
        costs = np.asarray(req.costs[action], dtype=float)
        budget.charge(costs)
        total_reward += reward

        utilities = req.rewards - req.costs @ lam_t.lam
        if feedback == "full":
            primal.observe_full(utilities)
            chat = weights @ req.costs
        else:
            primal.observe_bandit(float(utilities[action]))
            chat = costs
        dual.observe_full(chat - rho)

        remaining = budget.remaining
        rounds.append(RoundRecord(
            t=t, weights=weights, action=action, lam=lam_t.lam,
            reward=reward, costs=costs, remaining=remaining,
            void_forced=not playable,
        ))
        if not stopped and np.min(remaining) < 1.0:
            stop_time = t
            stopped = True

    return Trace(rounds=rounds, stop_time=stop_time, total_reward=total_reward,
                 seed=seed, config=dict(config or {}),
                 precommitment=env.precommitment() if hasattr(env, "precommitment") else None)


@dataclass(frozen=True)
class AdversarialReport:
    """Competitive-ratio accounting for a scripted-input episode.

    ``lhs`` is the fixed-policy upper bound minus ``alpha`` times the realized
    reward, with ``alpha = 1/rho``; ``depletion_slack`` is the overshoot of
    the depleted resource's spend-plus-one over the total budget, or None
    when no resource was depleted.
    """

    opt_fd_upper: float
    alpha: float
    lhs: float
    stop_time: int
    depletion_slack: float | None
    depleted_resource: int | None


def adversarial_report(trace: Trace, script, rho: float) -> AdversarialReport:
    base = baselines(script, rho, len(script))
    alpha = 1.0 / rho
    lhs = base.opt_fd_upper - alpha * trace.total_reward

    slack = None
    resource = None
    if trace.stop_time < trace.horizon:
        remaining = trace.rounds[trace.stop_time - 1].remaining
        resource = int(np.argmin(remaining))
        spent = float(sum(r.costs[resource] for r in trace.rounds[: trace.stop_time]))
        slack = spent + 1.0 - rho * trace.horizon
    return AdversarialReport(
        opt_fd_upper=base.opt_fd_upper, alpha=alpha, lhs=lhs,
        stop_time=trace.stop_time, depletion_slack=slack, depleted_resource=resource,
    )


@dataclass(frozen=True)
class StochasticReport:
    """Regret against the LP upper bound on the best dynamic policy."""

    opt_dp_upper: float
    regret_vs_upper: float


def stochastic_report(trace: Trace, distribution, rho: float) -> StochasticReport:
    value, _ = solve_opt_lp(distribution.expectation(), rho)
    upper = value * trace.horizon
    return StochasticReport(opt_dp_upper=upper, regret_vs_upper=upper - trace.total_reward)


def average_mixture(trace: Trace, upto: int | None = None) -> Mixture:
    """Arithmetic mean of the played mixtures up to a round (default: stop time)."""
    upto = trace.stop_time if upto is None else upto
    if not 1 <= upto <= trace.horizon:
        raise ValueError("round index out of range")
    stacked = np.stack([r.weights for r in trace.rounds[:upto]])
    mean = stacked.mean(axis=0)
    return Mixture(mean / mean.sum())
