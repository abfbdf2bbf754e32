"""Input generators for the three request regimes.

All three environments pre-commit their randomness sources before round one:
the i.i.d. environment fixes its template distribution, the scripted
environment fixes the whole request sequence, and the drifting environment
fixes one distribution per round plus a declared total-variation budget.  A
hash of the pre-committed data is exposed so episode traces can record that
the inputs were oblivious to the algorithm's draws.
"""
from __future__ import annotations

import hashlib
from dataclasses import dataclass

import numpy as np

from .core import Request, mean_deviation, total_variation

PROB_TOL = 1e-9


def _draw_index(probs: np.ndarray, rng) -> int:
    u = float(rng.random())
    idx = int(np.searchsorted(np.cumsum(probs), u, side="right"))
    return min(idx, len(probs) - 1)


def _hash_arrays(parts) -> str:
    digest = hashlib.sha256()
    for arr in parts:
        arr = np.ascontiguousarray(arr, dtype=float)
        digest.update(str(arr.shape).encode())
        digest.update(arr.tobytes())
    return digest.hexdigest()


@dataclass(frozen=True)
class Distribution:
    """Probability vector over a shared list of request templates."""

    templates: tuple
    probs: np.ndarray

    def __post_init__(self):
        probs = np.array(self.probs, dtype=float)
        probs.setflags(write=False)
        object.__setattr__(self, "probs", probs)
        object.__setattr__(self, "templates", tuple(self.templates))
        if len(self.templates) != len(self.probs) or len(self.templates) == 0:
            raise ValueError("templates and probabilities must align and be nonempty")
        if self.probs.min() < 0.0:
            raise ValueError("probabilities must be nonnegative")
        if abs(self.probs.sum() - 1.0) > PROB_TOL:
            raise ValueError("probabilities must sum to one")
        first = self.templates[0]
        if any(t.n != first.n or t.m != first.m or t.void_index != first.void_index
               for t in self.templates):
            raise ValueError("templates disagree on dimensions")

    @property
    def n_actions(self) -> int:
        return self.templates[0].n

    @property
    def m(self) -> int:
        return self.templates[0].m

    @property
    def void_index(self) -> int:
        return self.templates[0].void_index

    def expectation(self) -> Request:
        """Template-probability-weighted mean request."""
        rewards = sum(p * t.rewards for p, t in zip(self.probs, self.templates))
        costs = sum(p * t.costs for p, t in zip(self.probs, self.templates))
        return Request(rewards, costs, self.void_index)

    def same_support(self, other: "Distribution") -> bool:
        if len(self.templates) != len(other.templates):
            return False
        return all(np.array_equal(a.rewards, b.rewards) and np.array_equal(a.costs, b.costs)
                   for a, b in zip(self.templates, other.templates))

    def _hash_parts(self):
        for t in self.templates:
            yield t.rewards
            yield t.costs
        yield self.probs


def distribution_deviation(per_round, reference: Distribution) -> float:
    """Summed TV distance of per-round distributions from a reference."""
    for d in per_round:
        if not reference.same_support(d):
            raise ValueError("per-round distribution has mismatched template support")
    return mean_deviation([d.probs for d in per_round], reference.probs)


@dataclass(frozen=True)
class NonstationaryScript:
    """Pre-committed per-round distributions with a declared drift budget.

    Construction recomputes the summed total variation from the reference and
    rejects scripts that exceed the declared budget.
    """

    reference: Distribution
    per_round: tuple
    ns_budget: float

    def __post_init__(self):
        object.__setattr__(self, "per_round", tuple(self.per_round))
        if len(self.per_round) == 0:
            raise ValueError("script must cover at least one round")
        actual = distribution_deviation(self.per_round, self.reference)
        if actual > self.ns_budget + PROB_TOL:
            raise ValueError(
                f"script drift {actual:.6g} exceeds declared budget {self.ns_budget:.6g}")

    @property
    def horizon(self) -> int:
        return len(self.per_round)


def make_corruption(reference: Distribution, horizon: int, rounds_to_corrupt,
                    corrupt_dist: Distribution) -> NonstationaryScript:
    """Replace the reference distribution on selected rounds.

    The drift budget is computed exactly as the per-round TV distance times
    the number of corrupted rounds.
    """
    if not reference.same_support(corrupt_dist):
        raise ValueError("corrupting distribution has mismatched template support")
    rounds = set(int(r) for r in rounds_to_corrupt)
    if rounds and (min(rounds) < 1 or max(rounds) > horizon):
        raise ValueError("corrupted rounds must lie in 1..horizon")
    per_round = [corrupt_dist if t in rounds else reference for t in range(1, horizon + 1)]
    tv = total_variation(corrupt_dist.probs, reference.probs)
    return NonstationaryScript(reference, per_round, ns_budget=tv * len(rounds))


class StochasticRequests:
    """I.i.d. draws from a fixed template distribution."""

    def __init__(self, dist: Distribution, horizon: int):
        self.dist = dist
        self.horizon = int(horizon)

    @property
    def n_actions(self) -> int:
        return self.dist.n_actions

    @property
    def m(self) -> int:
        return self.dist.m

    @property
    def void_index(self) -> int:
        return self.dist.void_index

    def next_request(self, t: int, rng) -> Request:
        if not 1 <= t <= self.horizon:
            raise ValueError("round index out of range")
        return self.dist.templates[_draw_index(self.dist.probs, rng)]

    def precommitment(self) -> str:
        return _hash_arrays(self.dist._hash_parts())


class ScriptedRequests:
    """Oblivious adversary: the full request sequence is fixed up front."""

    def __init__(self, script):
        self.script = tuple(script)
        if not self.script:
            raise ValueError("script must be nonempty")
        self.horizon = len(self.script)

    @property
    def n_actions(self) -> int:
        return self.script[0].n

    @property
    def m(self) -> int:
        return self.script[0].m

    @property
    def void_index(self) -> int:
        return self.script[0].void_index

    def next_request(self, t: int, rng) -> Request:
        if not 1 <= t <= self.horizon:
            raise ValueError("round index out of range")
        return self.script[t - 1]

    def precommitment(self) -> str:
        parts = []
        for r in self.script:
            parts.append(r.rewards)
            parts.append(r.costs)
        return _hash_arrays(parts)


class NonstationaryRequests:
    """Independent draws from pre-committed, possibly drifting distributions.

    With every per-round distribution equal to the reference this reproduces
    the i.i.d. environment draw for draw under the same generator.
    """

    def __init__(self, script: NonstationaryScript):
        self.script = script
        self.horizon = script.horizon

    @property
    def n_actions(self) -> int:
        return self.script.reference.n_actions

    @property
    def m(self) -> int:
        return self.script.reference.m

    @property
    def void_index(self) -> int:
        return self.script.reference.void_index

    def next_request(self, t: int, rng) -> Request:
        if not 1 <= t <= self.horizon:
            raise ValueError("round index out of range")
        dist = self.script.per_round[t - 1]
        return dist.templates[_draw_index(dist.probs, rng)]

    def precommitment(self) -> str:
        parts = list(self.script.reference._hash_parts())
        for d in self.script.per_round:
            parts.append(d.probs)
        return _hash_arrays(parts)
