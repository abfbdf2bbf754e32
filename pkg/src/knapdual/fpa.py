"""Budget pacing in repeated first-price auctions.

Two bidders are provided.  For a finite valuation grid the policy space
factorizes, so one entropic learner per valuation suffices.  For arbitrary
valuations the bidder runs a hierarchy of exponential-weights learners over
progressively finer discretized policy classes, arranged in a tree: each node
carries a policy on a coarse valuation grid, its child edges refine that
policy on the next grid, and one extra "jump" edge per node bids slightly
above everything in the node's subtree, which keeps every learner's effective
payoff gap small.  All bids pass through a threshold that caps them at
``v / (1 + lam)``, so realized multiplier-adjusted payoffs stay in [0, 1];
this is also why the bidder must see the round's multiplier before bidding.

A single money resource is assumed throughout (scalar multiplier).
"""
from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass

import numpy as np

from .core import BudgetState, DualVector
from .meta import RoundRecord, Trace
from .regret import ProtocolError, SimplexOMD
from .rng import make_rng

GRID_TOL = 1e-9


class CapacityError(RuntimeError):
    """Raised when the enumerated policy tree exceeds the configured cap."""

    def __init__(self, message: str, level: int):
        super().__init__(message)
        self.level = level


@dataclass(frozen=True)
class AuctionRound:
    """One auction: the bidder's valuation and the highest competing bid."""

    valuation: float
    highest_bid: float

    def __post_init__(self):
        if not 0.0 <= self.valuation <= 1.0 or not 0.0 <= self.highest_bid <= 1.0:
            raise ValueError("valuation and highest bid must lie in [0, 1]")


def bid_payoff_vector(valuation: float, lam: float, highest_bid: float, bids) -> np.ndarray:
    """Multiplier-adjusted payoff of every candidate bid once the price is known.

    A bid wins when it matches or beats the highest competing bid; the payoff
    of a winning bid is ``v - (1 + lam) * b`` and a losing bid pays nothing.
    """
    bids = np.asarray(bids, dtype=float)
    wins = bids >= highest_bid
    return np.where(wins, valuation - (1.0 + lam) * bids, 0.0)


@dataclass(frozen=True)
class DiscretePolicy:
    """Bid schedule on a uniform valuation grid, stored as bid-grid indices.

    ``bid_indices[i]`` is the bid (in units of ``bid_step``) at valuation
    ``i * val_step``.  The schedule must grow or shrink by at most two bid
    units per valuation unit (checked on adjacent grid points, which by the
    triangle inequality covers all pairs).
    """

    bid_indices: tuple
    val_step: float
    bid_step: float

    def __post_init__(self):
        object.__setattr__(self, "bid_indices", tuple(int(b) for b in self.bid_indices))
        n_points = round(1.0 / self.val_step) + 1
        if len(self.bid_indices) != n_points:
            raise ValueError("policy length must match the valuation grid")
        max_jump = math.floor(2.0 * self.val_step / self.bid_step + GRID_TOL)
        top = round(1.0 / self.bid_step)
        for i, b in enumerate(self.bid_indices):
            if not 0 <= b <= top:
                raise ValueError("bid index outside the bid grid")
            if i and abs(b - self.bid_indices[i - 1]) > max_jump:
                raise ValueError("policy violates the two-to-one growth constraint")

    def bid_at_floor(self, v: float) -> float:
        i = min(int((v + GRID_TOL) / self.val_step), len(self.bid_indices) - 1)
        return self.bid_indices[i] * self.bid_step


def threshold_bid(policy: DiscretePolicy, v: float, lam: float) -> float:
    """Capped bid: the schedule's floored bid plus a discretization bump,
    never exceeding ``v / (1 + lam)``.

    The cap forces the winning payoff ``v - (1 + lam) * b`` to be
    nonnegative, whatever the schedule says.
    """
    raw = policy.bid_at_floor(v) + 2.0 * policy.val_step
    return float(np.clip(min(raw, v / (1.0 + lam)), 0.0, 1.0))


def _threshold_bids_from_indices(bid_idx, bid_step: float, eps: float,
                                 v: float, lam: float) -> np.ndarray:
    raw = np.asarray(bid_idx, dtype=float) * bid_step + 2.0 * eps
    return np.clip(np.minimum(raw, v / (1.0 + lam)), 0.0, 1.0)


# ---------------------------------------------------------------------------
# Finite-grid bidder: one simplex learner per valuation.
# ---------------------------------------------------------------------------

class FactoredBidder:
    """Full-feedback bidder for a finite valuation grid.

    Maintains one entropic simplex learner per valuation whose menu holds a
    no-bid option plus every grid bid not exceeding the valuation (bidding
    above value is dominated and would break the [0, 1] reward contract).
    Only the learner of the round's valuation is touched by an update.
    """

    def __init__(self, valuations, bids, rho: float, *, seed: int = 0):
        self.valuations = np.asarray(sorted(valuations), dtype=float)
        self.bids = np.asarray(sorted(bids), dtype=float)
        if self.valuations.min() < 0 or self.valuations.max() > 1:
            raise ValueError("valuations must lie in [0, 1]")
        if self.bids.min() < 0 or self.bids.max() > 1:
            raise ValueError("bids must lie in [0, 1]")
        self.rho = float(rho)
        self.rng = make_rng(seed, stream=7)
        payoff_range = (-1.0 / rho, 1.0)
        self.menus = []
        self.learners = []
        for v in self.valuations:
            menu = self.bids[self.bids <= v + GRID_TOL]
            self.menus.append(menu)
            self.learners.append(SimplexOMD(len(menu) + 1, payoff_range))

    def _locate(self, v: float) -> int:
        idx = int(np.argmin(np.abs(self.valuations - v)))
        if abs(self.valuations[idx] - v) > GRID_TOL:
            raise ValueError("valuation is not on the declared grid")
        return idx

    def next_bid(self, v: float, lam: float) -> float | None:
        """Sample the round's bid; ``None`` means staying out of the auction."""
        i = self._locate(v)
        w = self.learners[i].next_element().weights
        u = float(self.rng.random())
        pick = min(int(np.searchsorted(np.cumsum(w), u, side="right")), len(w) - 1)
        return None if pick == 0 else float(self.menus[i][pick - 1])

    def observe(self, v: float, lam: float, highest_bid: float) -> None:
        i = self._locate(v)
        payoffs = bid_payoff_vector(v, lam, highest_bid, self.menus[i])
        self.learners[i].observe_full(np.concatenate([[0.0], payoffs]))

    def mixture_cost(self, v: float, lam: float, highest_bid: float) -> float:
        """Expected payment of the current mixture once the price is known."""
        i = self._locate(v)
        w = self.learners[i].next_element().weights
        menu = self.menus[i]
        pay = np.where(menu >= highest_bid, menu, 0.0)
        return float(w[1:] @ pay)


def enumerate_grid_policies(valuations, bids, cap: int = 20000):
    """All maps from a finite valuation set into {stay out} + affordable bids.

    Used for the finite-grid LP baseline; the count is the product of the
    per-valuation menu sizes and is refused above ``cap``.
    """
    menus = [[None] + [b for b in bids if b <= v + GRID_TOL] for v in valuations]
    total = 1
    for menu in menus:
        total *= len(menu)
        if total > cap:
            raise CapacityError(f"policy space size exceeds cap {cap}", level=0)
    policies = [[]]
    for menu in menus:
        policies = [p + [b] for p in policies for b in menu]
    return policies


# ---------------------------------------------------------------------------
# Hierarchical chaining bidder for arbitrary valuations.
# ---------------------------------------------------------------------------

class _Node:
    __slots__ = ("level", "policy", "edge_child", "edge_span", "edge_is_jump",
                 "r", "q", "p", "cum_play", "span")

    def __init__(self, level: int, policy):
        self.level = level
        self.policy = policy
        self.edge_child = []      # node index, or None for a direct leaf edge
        self.edge_span = []       # (lo, hi) leaf range reached through the edge
        self.edge_is_jump = []
        self.r = None             # cumulative edge rewards
        self.q = None             # current edge distribution
        self.p = None             # current distribution over the span's leaves
        self.cum_play = 0.0       # sum over rounds of q . edge_values
        self.span = (0, 0)


class PacingTree:
    """Enumerated policy hierarchy with per-node exponential-weights state.

    ``levels`` discretization levels with brackets ``2**-m``; bids live on a
    uniform grid of step ``bid_step``.  Leaves are indexed in depth-first
    order so every node owns a contiguous leaf range; duplicate leaf policies
    reached through different paths stay distinct.  Jump-edge policies are
    checked at build time (on trees below the dominance-check threshold) to
    bid at least as much as, and at most ``4 * 2**-m`` above, every leaf
    policy in their node's subtree.
    """

    def __init__(self, horizon: int, rho: float, *, levels: int | None = None,
                 bid_step: float | None = None, node_cap: int = 200_000,
                 eta_rule: str = "per_level_rate", dominance_check: bool | None = None):
        if horizon < 4:
            raise ValueError("horizon too short for a hierarchical bidder")
        levels = int(math.floor(math.log2(math.sqrt(horizon)))) if levels is None else int(levels)
        if levels < 2:
            raise ValueError("at least two discretization levels are required")
        bid_step = 1.0 / horizon if bid_step is None else float(bid_step)
        if abs(round(1.0 / bid_step) * bid_step - 1.0) > GRID_TOL:
            raise ValueError("bid_step must divide 1 evenly")
        if eta_rule not in ("per_level_rate", "literal_rate"):
            raise ValueError("eta_rule must be 'per_level_rate' or 'literal_rate'")
        if not 0.0 < rho <= 1.0:
            raise ValueError("rho must lie in (0, 1]")

        self.horizon = int(horizon)
        self.rho = float(rho)
        self.levels = levels
        self.bid_step = bid_step
        self.n_bids = round(1.0 / bid_step) + 1
        self.node_cap = int(node_cap)
        self.eta_rule = eta_rule
        self.eps = [2.0 ** -(m) for m in range(0, levels + 1)]  # eps[0] = 1 for the root
        self.fine_points = 2 ** levels + 1

        self.nodes: list[_Node] = []
        self._leaf_rows: list = []
        self._leaf_preclamp: list = []
        self._entities = 0
        root_jump = self._jump_policy(0, None)
        root = self._build(0, None, root_jump)
        assert root == 0
        self.leaf_policies = np.array(self._leaf_rows, dtype=np.int32)
        self.leaf_preclamp = np.array(self._leaf_preclamp, dtype=np.int64)
        self.n_leaves = self.leaf_policies.shape[0]
        del self._leaf_rows, self._leaf_preclamp
        for node in self.nodes:
            node.r = np.zeros(len(node.edge_child))
        self.round = 0

        if dominance_check is None:
            dominance_check = self._entities <= 100_000
        if dominance_check:
            self.verify_jump_dominance()

    # ---- construction -----------------------------------------------------

    def _count(self, level: int) -> None:
        self._entities += 1
        if self._entities > self.node_cap:
            raise CapacityError(
                f"policy tree exceeds the {self.node_cap}-entity cap while "
                f"expanding level {level}", level=level)

    def _max_jump(self, level: int) -> int:
        return math.floor(2.0 * self.eps[level] / self.bid_step + GRID_TOL)

    def _level_one_policies(self):
        jump = self._max_jump(1)
        top = self.n_bids - 1
        out = []

        def extend(prefix):
            if len(prefix) == 3:
                out.append(tuple(prefix))
                return
            last = prefix[-1] if prefix else None
            lo = 0 if last is None else max(0, last - jump)
            hi = top if last is None else min(top, last + jump)
            for b in range(lo, hi + 1):
                extend(prefix + [b])

        extend([])
        return out

    def _extensions(self, policy, level: int):
        """Children of a level-``level`` policy on the next finer grid."""
        jump = self._max_jump(level + 1)
        top = self.n_bids - 1
        windows = []
        for i in range(len(policy) - 1):
            left, right = policy[i], policy[i + 1]
            lo = max(0, left - jump, right - jump)
            hi = min(top, left + jump, right + jump)
            windows.append(range(lo, hi + 1))
        children = [[policy[0]]]
        for i, window in enumerate(windows):
            children = [c + [mid, policy[i + 1]] for c in children for mid in window]
        return [tuple(c) for c in children]

    def _jump_policy(self, level: int, policy):
        """Fine-grid policy bidding just above the subtree of a node.

        At fine-grid valuation ``v`` the bid is the node policy's value at the
        level's floored valuation plus the floored doubled offset.  The root
        carries no policy; its jump uses an all-zero base.  Returns the
        clamped row together with the pre-clamp row kept for the dominance
        check.
        """
        stride = 2 ** (self.levels - level)
        eps_m = self.eps[level]
        pre = np.empty(self.fine_points, dtype=np.int64)
        for i in range(self.fine_points):
            coarse, offset_units = divmod(i, stride)
            base = 0 if policy is None else policy[coarse]
            offset = offset_units * self.eps[self.levels]
            bump = math.floor(2.0 * offset / self.bid_step + GRID_TOL)
            pre[i] = base + bump
        return np.minimum(pre, self.n_bids - 1).astype(np.int32), pre

    def _add_leaf(self, row, pre, level: int) -> int:
        self._count(level)
        self._leaf_rows.append(np.asarray(row, dtype=np.int32))
        self._leaf_preclamp.append(np.asarray(pre, dtype=np.int64))
        return len(self._leaf_rows) - 1

    def _build(self, level: int, policy, jump) -> int:
        self._count(level)
        node = _Node(level, policy)
        node_id = len(self.nodes)
        self.nodes.append(node)
        lo = len(self._leaf_rows)

        children = self._level_one_policies() if level == 0 else self._extensions(policy, level)
        for child_policy in children:
            if level + 1 == self.levels:
                leaf = self._add_leaf(np.asarray(child_policy, dtype=np.int32),
                                      np.asarray(child_policy, dtype=np.int64), level + 1)
                node.edge_child.append(None)
                node.edge_span.append((leaf, leaf + 1))
                node.edge_is_jump.append(False)
            else:
                child_jump = self._jump_policy(level + 1, child_policy)
                child_id = self._build(level + 1, child_policy, child_jump)
                node.edge_child.append(child_id)
                node.edge_span.append(self.nodes[child_id].span)
                node.edge_is_jump.append(False)

        leaf = self._add_leaf(jump[0], jump[1], level)
        node.edge_child.append(None)
        node.edge_span.append((leaf, leaf + 1))
        node.edge_is_jump.append(True)

        node.span = (lo, len(self._leaf_rows))
        return node_id

    # ---- diagnostics -------------------------------------------------------

    def internal_nodes(self):
        return range(len(self.nodes))

    def edge_count(self, node_id: int) -> int:
        return len(self.nodes[node_id].edge_child)

    def delta(self, level: int) -> float:
        """Payoff-gap scale of a level: ``4 (1 + 1/rho) * 2**-level``."""
        return 4.0 * (1.0 + 1.0 / self.rho) * self.eps[level]

    def eta(self, t: int, node_id: int) -> float:
        node = self.nodes[node_id]
        n_edges = len(node.edge_child)
        if n_edges <= 1:
            return 0.25
        log_a = math.log(n_edges)
        denom = t * self.delta(node.level)
        if self.eta_rule == "literal_rate":
            denom *= self.eps[node.level + 1]
        return min(0.25, math.sqrt(log_a / denom))

    def verify_jump_dominance(self) -> None:
        """Build-time check that each non-root jump edge brackets its subtree.

        For every node below the root and every leaf in its subtree, the
        pre-clamp jump bid must match or exceed the leaf's bid at every fine
        valuation, by at most ``4 * 2**-level``.
        """
        leaf_pre = self.leaf_preclamp
        for node in self.nodes:
            if node.level == 0:
                continue
            lo, hi = node.span
            jump_row = leaf_pre[hi - 1]
            subtree = leaf_pre[lo:hi - 1]
            if subtree.size == 0:
                continue
            diff = jump_row[None, :] - subtree
            max_units = round(4.0 * self.eps[node.level] / self.bid_step + GRID_TOL)
            if diff.min() < 0 or diff.max() > max_units:
                raise AssertionError("jump edge fails to bracket its subtree")

    def leaf_policy(self, leaf_id: int) -> DiscretePolicy:
        return DiscretePolicy(tuple(int(b) for b in self.leaf_policies[leaf_id]),
                              self.eps[self.levels], self.bid_step)

    # ---- per-round updates --------------------------------------------------

    def _fine_floor_index(self, v: float) -> int:
        return min(int((v + GRID_TOL) / self.eps[self.levels]), self.fine_points - 1)

    def leaf_threshold_bids(self, v: float, lam: float) -> np.ndarray:
        """Thresholded bid of every leaf policy at ``(v, lam)``."""
        idx = self.leaf_policies[:, self._fine_floor_index(v)]
        return _threshold_bids_from_indices(idx, self.bid_step, self.eps[self.levels], v, lam)

    def leaf_rewards(self, v: float, lam: float, highest_bid: float) -> np.ndarray:
        bids = self.leaf_threshold_bids(v, lam)
        won = v - (1.0 + lam) * bids
        if won.min() < -1e-9:
            raise AssertionError("thresholded bid exceeded the payoff cap")
        # the cap v/(1+lam) can overshoot by one ulp when multiplied back
        return np.where(bids >= highest_bid, np.maximum(won, 0.0), 0.0)

    def refresh(self, t: int) -> np.ndarray:
        """Recompute every node's edge and leaf distributions for round ``t``.

        Bottom-up exponential weights on the cumulative edge rewards; returns
        the root's leaf distribution.  Pure given the stored rewards, so a
        replay from a recorded round log reproduces it exactly.
        """
        for node_id in range(len(self.nodes) - 1, -1, -1):
            node = self.nodes[node_id]
            z = self.eta(t, node_id) * node.r
            z -= z.max()
            q = np.exp(z)
            node.q = q / q.sum()
            lo, hi = node.span
            p = np.empty(hi - lo)
            for e, (child, (elo, ehi)) in enumerate(zip(node.edge_child, node.edge_span)):
                if child is None:
                    p[elo - lo:ehi - lo] = node.q[e]
                else:
                    p[elo - lo:ehi - lo] = node.q[e] * self.nodes[child].p
            node.p = p
        return self.nodes[0].p

    def edge_values(self, node_id: int, leaf_rewards: np.ndarray) -> np.ndarray:
        """Expected instantaneous reward behind each edge of a node."""
        node = self.nodes[node_id]
        vals = np.empty(len(node.edge_child))
        for e, (child, (elo, ehi)) in enumerate(zip(node.edge_child, node.edge_span)):
            if child is None:
                vals[e] = leaf_rewards[elo]
            else:
                vals[e] = float(self.nodes[child].p @ leaf_rewards[elo:ehi])
        return vals

    def accumulate(self, leaf_rewards: np.ndarray) -> None:
        """Fold one round's rewards into every node's cumulative edge totals."""
        for node_id, node in enumerate(self.nodes):
            vals = self.edge_values(node_id, leaf_rewards)
            node.r = node.r + vals
            node.cum_play += float(node.q @ vals)

    def node_regret(self, node_id: int) -> float:
        node = self.nodes[node_id]
        return float(node.r.max() - node.cum_play)


class ChainingBidder:
    """Primal bidder driving a `PacingTree`; needs the multiplier before bidding."""

    def __init__(self, tree: PacingTree, *, seed: int = 0):
        self.tree = tree
        self.rng = make_rng(seed, stream=11)
        self._pending = None

    def next_bid(self, v: float, lam: float) -> float:
        if self._pending is not None:
            raise ProtocolError("next_bid called twice without observe")
        t = self.tree.round + 1
        p_root = self.tree.refresh(t)
        u = float(self.rng.random())
        leaf = min(int(np.searchsorted(np.cumsum(p_root), u, side="right")),
                   self.tree.n_leaves - 1)
        bids = self.tree.leaf_threshold_bids(v, lam)
        self._pending = (leaf, v, lam)
        self._round_bids = bids
        return float(bids[leaf])

    @property
    def pending_leaf(self) -> int:
        if self._pending is None:
            raise ProtocolError("no pending bid")
        return self._pending[0]

    def observe(self, v: float, lam: float, highest_bid: float) -> None:
        if self._pending is None:
            raise ProtocolError("observe called before next_bid")
        rewards = self.tree.leaf_rewards(v, lam, highest_bid)
        self.tree.accumulate(rewards)
        self.tree.round += 1
        self._pending = None

    def mixture_cost(self, v: float, lam: float, highest_bid: float) -> float:
        bids = self._round_bids
        pay = np.where(bids >= highest_bid, bids, 0.0)
        return float(self.tree.nodes[0].p @ pay)


# ---------------------------------------------------------------------------
# Auction streams and the pacing episode driver.
# ---------------------------------------------------------------------------

class UniformAuctionStream:
    """Independent uniform valuations and competing bids."""

    def __init__(self, horizon: int):
        self.horizon = int(horizon)

    def next_round(self, t: int, rng) -> AuctionRound:
        if not 1 <= t <= self.horizon:
            raise ValueError("round index out of range")
        v = float(rng.random())
        m = float(rng.random())
        return AuctionRound(v, m)

    def precommitment(self) -> str:
        return hashlib.sha256(f"uniform:{self.horizon}".encode()).hexdigest()


class FiniteAuctionStream:
    """Independent draws from finite valuation and competing-bid laws."""

    def __init__(self, valuations, val_probs, comp_bids, comp_probs, horizon: int):
        self.valuations = np.asarray(valuations, dtype=float)
        self.val_probs = np.asarray(val_probs, dtype=float)
        self.comp_bids = np.asarray(comp_bids, dtype=float)
        self.comp_probs = np.asarray(comp_probs, dtype=float)
        for probs in (self.val_probs, self.comp_probs):
            if abs(probs.sum() - 1.0) > 1e-9 or probs.min() < 0:
                raise ValueError("probabilities must be a distribution")
        self.horizon = int(horizon)

    def next_round(self, t: int, rng) -> AuctionRound:
        if not 1 <= t <= self.horizon:
            raise ValueError("round index out of range")
        u = float(rng.random())
        v = self.valuations[min(int(np.searchsorted(np.cumsum(self.val_probs), u, side="right")),
                                len(self.valuations) - 1)]
        u = float(rng.random())
        m = self.comp_bids[min(int(np.searchsorted(np.cumsum(self.comp_probs), u, side="right")),
                               len(self.comp_bids) - 1)]
        return AuctionRound(float(v), float(m))

    def precommitment(self) -> str:
        digest = hashlib.sha256()
        for arr in (self.valuations, self.val_probs, self.comp_bids, self.comp_probs):
            digest.update(np.ascontiguousarray(arr, dtype=float).tobytes())
        digest.update(str(self.horizon).encode())
        return digest.hexdigest()


class ScriptedAuctionStream:
    """Pre-committed auction sequence."""

    def __init__(self, rounds):
        self.rounds = tuple(rounds)
        if not self.rounds:
            raise ValueError("auction script must be nonempty")
        self.horizon = len(self.rounds)

    def next_round(self, t: int, rng) -> AuctionRound:
        if not 1 <= t <= self.horizon:
            raise ValueError("round index out of range")
        return self.rounds[t - 1]

    def precommitment(self) -> str:
        arr = np.array([[r.valuation, r.highest_bid] for r in self.rounds])
        return hashlib.sha256(arr.tobytes()).hexdigest()


@dataclass(frozen=True)
class PacingRound:
    """Auxiliary per-round log needed to audit a pacing episode."""

    t: int
    valuation: float
    highest_bid: float
    lam: float
    bid: float | None
    leaf: int


def run_pacing_episode(stream, bidder, dual, budget: BudgetState, *, seed: int = 0,
                       config: dict | None = None) -> tuple[Trace, list[PacingRound]]:
    """Run one budget-pacing episode against an auction stream.

    The multiplier is drawn first and shown to the bidder (threshold bids
    depend on it).  The bidder's state advances on every round, including
    rounds where a depleted budget forces staying out, because the feedback
    (valuation, price, multiplier) is observable without participating; only
    the realized payment is gated by the budget guard.  The trace's action
    column holds the sampled leaf (hierarchical bidder) or the bid-grid index
    (finite bidder), with -1 for rounds sat out.
    """
    if budget.m != 1:
        raise ValueError("pacing episodes use a single money resource")
    rho = budget.rho
    rng_env = make_rng(seed, stream=0)

    rounds: list[RoundRecord] = []
    auxiliary: list[PacingRound] = []
    total_reward = 0.0
    stop_time = budget.horizon
    stopped = False
    empty = np.empty(0)

    for t in range(1, budget.horizon + 1):
        lam_t: DualVector = dual.next_element()
        lam = float(lam_t.lam[0])
        auction = stream.next_round(t, rng_env)
        v, m_t = auction.valuation, auction.highest_bid

        playable = budget.playable
        proposed = bidder.next_bid(v, lam)
        leaf = bidder.pending_leaf if hasattr(bidder, "pending_leaf") else -1
        bid = proposed if playable else None

        won = bid is not None and bid >= m_t
        reward = (v - bid) if won else 0.0
        cost = bid if won else 0.0
        if reward < -GRID_TOL:
            raise AssertionError("winning bid above valuation despite threshold")
        reward = max(reward, 0.0)
        budget.charge(np.array([cost]))
        total_reward += reward

        chat = bidder.mixture_cost(v, lam, m_t)
        bidder.observe(v, lam, m_t)
        dual.observe_full(np.array([chat - rho]))

        remaining = budget.remaining
        if bid is None:
            action = -1
        elif hasattr(bidder, "tree"):
            action = leaf
        else:
            action = int(np.argmin(np.abs(bidder.bids - bid)))
        rounds.append(RoundRecord(
            t=t, weights=empty, action=action, lam=lam_t.lam,
            reward=reward, costs=np.array([cost]), remaining=remaining,
            void_forced=not playable,
        ))
        auxiliary.append(PacingRound(t=t, valuation=v, highest_bid=m_t, lam=lam,
                                     bid=bid, leaf=leaf))
        if not stopped and remaining.min() < 1.0:
            stop_time = t
            stopped = True

    trace = Trace(rounds=rounds, stop_time=stop_time, total_reward=total_reward,
                  seed=seed, config=dict(config or {}),
                  precommitment=stream.precommitment() if hasattr(stream, "precommitment") else None)
    return trace, auxiliary


# ---------------------------------------------------------------------------
# Post-hoc audit of a pacing run: jump-edge quality and per-node regret.
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class NodeRegret:
    node: int
    level: int
    n_edges: int
    regret: float
    bound: float


@dataclass(frozen=True)
class GoodEdgeReport:
    """Violations of the jump-edge near-optimality margin, plus node regrets.

    For every audited round and every node below the root, the jump edge's
    expected reward must be within ``4 (1 + 1/rho) * 2**-level`` of every
    sibling edge.  ``node_regrets`` carries each node's realized local regret
    next to its theoretical envelope
    ``4 sqrt(T Delta log E) + 32 (4 + log T) log E``.
    """

    violations: list
    rounds_checked: int
    node_regrets: list

    @property
    def violation_count(self) -> int:
        return len(self.violations)


def good_edge_report(rounds, horizon: int, rho: float, *, levels: int,
                     bid_step: float, node_cap: int = 200_000,
                     eta_rule: str = "per_level_rate", tol: float = 1e-9) -> GoodEdgeReport:
    """Replay a pacing round log and audit every jump edge at every round.

    The tree's distributions are deterministic given the logged
    (valuation, multiplier, price) triples, so the replay reconstructs the
    exact per-round state without any sampling.
    """
    tree = PacingTree(horizon, rho, levels=levels, bid_step=bid_step,
                      node_cap=node_cap, eta_rule=eta_rule, dominance_check=False)
    violations = []
    for record in rounds:
        t = record.t
        tree.refresh(t)
        rewards = tree.leaf_rewards(record.valuation, record.lam, record.highest_bid)
        for node_id in range(len(tree.nodes)):
            node = tree.nodes[node_id]
            if node.level == 0:
                continue
            vals = tree.edge_values(node_id, rewards)
            margin = tree.delta(node.level)
            jump_val = vals[-1]
            worst = vals.max()
            if jump_val < worst - margin - tol:
                violations.append((t, node_id, float(worst - jump_val), margin))
        tree.accumulate(rewards)
        tree.round += 1

    t_total = len(rounds)
    node_regrets = []
    for node_id in range(len(tree.nodes)):
        node = tree.nodes[node_id]
        n_edges = len(node.edge_child)
        log_e = math.log(max(n_edges, 2))
        bound = (4.0 * math.sqrt(t_total * tree.delta(node.level) * log_e)
                 + 32.0 * (4.0 + math.log(t_total)) * log_e)
        node_regrets.append(NodeRegret(node=node_id, level=node.level, n_edges=n_edges,
                                       regret=tree.node_regret(node_id), bound=bound))
    return GoodEdgeReport(violations=violations, rounds_checked=t_total,
                          node_regrets=node_regrets)
