"""Pacing bidders: payoff algebra, tree structure, chaining updates, audits."""
import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from knapdual.core import BudgetState
from knapdual.fpa import (AuctionRound, CapacityError, ChainingBidder,
                          DiscretePolicy, FactoredBidder, FiniteAuctionStream,
                          PacingTree, ScriptedAuctionStream,
                          UniformAuctionStream, bid_payoff_vector,
                          good_edge_report, run_pacing_episode, threshold_bid)
from knapdual.regret import DualOMD, ProtocolError


def brute_force_policies(n_points: int, n_bids: int, max_jump: int):
    """All bid-index schedules with adjacent steps at most ``max_jump``."""
    out = []
    for combo in itertools.product(range(n_bids), repeat=n_points):
        if all(abs(a - b) <= max_jump for a, b in zip(combo, combo[1:])):
            out.append(combo)
    return out


class TestPayoffAlgebra:
    def test_losing_bid_pays_nothing(self):
        pay = bid_payoff_vector(0.9, 0.5, highest_bid=0.6, bids=[0.3])
        assert pay[0] == 0.0

    def test_winning_bid_direct_substitution(self):
        pay = bid_payoff_vector(0.6, 1.0, highest_bid=0.3, bids=[0.3])
        assert pay[0] == pytest.approx(0.6 - 2.0 * 0.3)

    def test_zero_multiplier(self):
        pay = bid_payoff_vector(0.8, 0.0, highest_bid=0.4, bids=[0.5])
        assert pay[0] == pytest.approx(0.3)


class TestThresholdBid:
    def test_cap_binds(self):
        policy = DiscretePolicy((5,) * 11, val_step=0.1, bid_step=0.1)
        assert threshold_bid(policy, 0.6, 1.0) == pytest.approx(0.3)

    def test_bump_binds(self):
        policy = DiscretePolicy((0,) * 21, val_step=0.05, bid_step=0.05)
        assert threshold_bid(policy, 0.5, 0.0) == pytest.approx(0.1)

    @given(st.floats(min_value=0.0, max_value=1.0),
           st.floats(min_value=0.0, max_value=2.0))
    @settings(max_examples=60, deadline=None)
    def test_winning_payoff_never_negative(self, v, lam):
        policy = DiscretePolicy((2, 3, 4, 5, 6), val_step=0.25, bid_step=0.125)
        bid = threshold_bid(policy, v, lam)
        assert v - (1.0 + lam) * bid >= -1e-12

    def test_policy_growth_constraint_enforced(self):
        with pytest.raises(ValueError):
            DiscretePolicy((0, 8, 0, 0, 0), val_step=0.25, bid_step=0.125)


class TestTreeStructure:
    def test_default_levels_for_tiny_horizon(self):
        tree = PacingTree(64, 0.5, bid_step=0.5)
        assert tree.levels == 3  # floor(log2(sqrt(64)))
        assert tree.eps[1:] == [0.5, 0.25, 0.125]

    def test_single_level_rejected(self):
        with pytest.raises(ValueError):
            PacingTree(64, 0.5, levels=1, bid_step=0.25)

    def test_node_cap_names_level(self):
        with pytest.raises(CapacityError) as err:
            PacingTree(64, 0.5, levels=2, bid_step=0.125, node_cap=100)
        assert err.value.level >= 0

    def test_children_agree_with_parent_and_are_lipschitz(self):
        tree = PacingTree(64, 0.5, levels=2, bid_step=0.25)
        # independent oracle: enumerate all fine-grid schedules directly
        fine = brute_force_policies(n_points=5, n_bids=5,
                                    max_jump=int(2 * 0.25 / 0.25))
        for node_id in range(1, len(tree.nodes)):
            node = tree.nodes[node_id]
            if node.level != 1:
                continue
            parent_policy = node.policy
            expected = sorted(p for p in fine
                              if p[0] == parent_policy[0]
                              and p[2] == parent_policy[1]
                              and p[4] == parent_policy[2])
            got = []
            for child, is_jump, (lo, hi) in zip(node.edge_child, node.edge_is_jump,
                                                node.edge_span):
                if is_jump:
                    continue
                got.append(tuple(int(b) for b in tree.leaf_policies[lo]))
            assert sorted(got) == expected

    def test_level_one_contains_every_coarse_schedule(self):
        tree = PacingTree(64, 0.5, levels=2, bid_step=0.25)
        coarse = brute_force_policies(n_points=3, n_bids=5,
                                      max_jump=int(2 * 0.5 / 0.25))
        root = tree.nodes[0]
        chain_children = [tree.nodes[c].policy for c, j in
                          zip(root.edge_child, root.edge_is_jump) if not j]
        assert sorted(chain_children) == sorted(coarse)

    def test_jump_dominance_checked_at_build(self):
        PacingTree(64, 0.5, levels=2, bid_step=0.125, dominance_check=True)

    def test_delta_formula(self):
        tree = PacingTree(64, 0.5, levels=2, bid_step=0.25)
        assert tree.delta(2) == pytest.approx(4 * (1 + 2) * 0.25)  # 3.0
        one = PacingTree(64, 1.0, levels=3, bid_step=0.5)
        assert one.delta(3) == pytest.approx(1.0)

    def test_eta_rules(self):
        tree = PacingTree(64, 0.5, levels=2, bid_step=0.25)
        lit = PacingTree(64, 0.5, levels=2, bid_step=0.25, eta_rule="literal_rate")
        node_id = 1
        n_edges = tree.edge_count(node_id)
        t = 3
        expected = min(0.25, math.sqrt(math.log(n_edges) / (t * tree.delta(1))))
        assert tree.eta(t, node_id) == pytest.approx(expected)
        expected_lit = min(0.25, math.sqrt(
            math.log(n_edges) / (t * lit.delta(1) * lit.eps[2])))
        assert lit.eta(t, node_id) == pytest.approx(expected_lit)
        assert tree.eta(1, node_id) <= 0.25
        assert lit.eta(10_000_000, node_id) <= 0.25


class TestChainingUpdates:
    def test_first_round_distributions_are_uniform(self):
        tree = PacingTree(64, 0.5, levels=2, bid_step=0.25)
        p_root = tree.refresh(1)
        for node in tree.nodes:
            k = len(node.edge_child)
            assert node.q == pytest.approx([1.0 / k] * k, abs=1e-12)
        assert p_root.sum() == pytest.approx(1.0, abs=1e-9)
        # root leaf distribution is the product of uniform edge choices
        lo, hi = tree.nodes[1].span
        expected = (1.0 / len(tree.nodes[0].edge_child)) / len(tree.nodes[1].edge_child)
        assert p_root[lo] == pytest.approx(expected, abs=1e-12)

    def test_p_recursion_consistency(self):
        tree = PacingTree(64, 0.5, levels=2, bid_step=0.25)
        rng = np.random.default_rng(3)
        for t in range(1, 6):
            tree.refresh(t)
            rewards = tree.leaf_rewards(float(rng.random()), float(rng.random()),
                                        float(rng.random()))
            tree.accumulate(rewards)
            tree.round += 1
            # independent recomputation: push every node's q through the tree
            for node_id, node in enumerate(tree.nodes):
                lo, hi = node.span
                rebuilt = np.zeros(hi - lo)
                for e, (child, (elo, ehi)) in enumerate(zip(node.edge_child,
                                                            node.edge_span)):
                    if child is None:
                        rebuilt[elo - lo] += node.q[e]
                    else:
                        rebuilt[elo - lo:ehi - lo] += node.q[e] * tree.nodes[child].p
                assert node.p == pytest.approx(rebuilt, abs=1e-9)
                assert node.p.sum() == pytest.approx(1.0, abs=1e-9)

    def test_single_rewarded_leaf_gains_mass(self):
        tree = PacingTree(64, 0.5, levels=2, bid_step=0.5)
        p_before = tree.refresh(1).copy()
        rewards = np.zeros(tree.n_leaves)
        target = tree.nodes[1].span[0]  # a chain leaf below the first child
        rewards[target] = 1.0
        tree.accumulate(rewards)
        tree.round += 1
        p_after = tree.refresh(2)
        assert p_after[target] > p_before[target]
        # closed form: the round-1 distributions were uniform, so the unit
        # reward at the target leaf credits its two path edges with 1/E_mid
        # (at the root) and 1 (at the mid node); exponential weights follow.
        root, mid = tree.nodes[0], tree.nodes[1]
        e_root, e_mid = len(root.edge_child), len(mid.edge_child)
        eta_root, eta_mid = tree.eta(2, 0), tree.eta(2, 1)
        q_root0 = math.exp(eta_root / e_mid) / (math.exp(eta_root / e_mid)
                                                + (e_root - 1))
        q_mid0 = math.exp(eta_mid) / (math.exp(eta_mid) + (e_mid - 1))
        assert p_after[target] == pytest.approx(q_root0 * q_mid0, abs=1e-9)

    def test_unsold_round_leaves_rewards_unchanged(self):
        tree = PacingTree(64, 0.5, levels=2, bid_step=0.25)
        tree.refresh(1)
        rewards = tree.leaf_rewards(0.4, 0.3, highest_bid=1.1 - 0.1)
        # highest bid above every threshold bid: nobody wins
        assert rewards.max() <= 0.0 + 1e-12
        before = [node.r.copy() for node in tree.nodes]
        tree.accumulate(tree.leaf_rewards(0.0, 0.0, 1.0) * 0.0)
        for node, prev in zip(tree.nodes, before):
            assert node.r == pytest.approx(prev, abs=0.0)

    def test_everyone_wins_increment_is_p_weighted_mean(self):
        tree = PacingTree(64, 0.5, levels=2, bid_step=0.25)
        tree.refresh(1)
        v, lam = 0.9, 0.2
        rewards = tree.leaf_rewards(v, lam, highest_bid=0.0)
        bids = tree.leaf_threshold_bids(v, lam)
        assert np.all(bids >= 0.0)
        assert rewards == pytest.approx(v - (1 + lam) * bids, abs=1e-12)
        before = [node.r.copy() for node in tree.nodes]
        tree.accumulate(rewards)
        for node_id, (node, prev) in enumerate(zip(tree.nodes, before)):
            for e, (child, (elo, ehi)) in enumerate(zip(node.edge_child,
                                                        node.edge_span)):
                if child is None:
                    expected = rewards[elo]
                else:
                    expected = float(tree.nodes[child].p @ rewards[elo:ehi])
                assert node.r[e] - prev[e] == pytest.approx(expected, abs=1e-12)
                assert -1e-12 <= node.r[e] - prev[e] <= 1.0 + 1e-12

    def test_bidder_protocol(self):
        tree = PacingTree(64, 0.5, levels=2, bid_step=0.5)
        bidder = ChainingBidder(tree, seed=0)
        bidder.next_bid(0.5, 0.1)
        with pytest.raises(ProtocolError):
            bidder.next_bid(0.5, 0.1)
        bidder.observe(0.5, 0.1, 0.4)
        with pytest.raises(ProtocolError):
            bidder.observe(0.5, 0.1, 0.4)


class TestDiscretizationLoss:
    def test_thresholded_class_tracks_lipschitz_grid_policies(self):
        # exhaustive comparison on a small instance
        horizon = 32
        eps = 0.25
        bid_step = 0.125
        rho = 0.5
        rng = np.random.default_rng(99)
        vs = rng.random(horizon)
        ms = rng.random(horizon)
        lams = rng.random(horizon) * (1.0 / rho)

        n_points = round(1 / eps) + 1
        n_bids = round(1 / bid_step) + 1
        smooth = brute_force_policies(n_points, n_bids, max_jump=round(eps / bid_step))
        twice = brute_force_policies(n_points, n_bids, max_jump=round(2 * eps / bid_step))

        def lipschitz_total(policy):
            total = 0.0
            for v, m, lam in zip(vs, ms, lams):
                idx = min(int((v + 1e-9) / eps), n_points - 1)
                b = policy[idx] * bid_step
                if b >= m:
                    total += (v - b) - lam * b
            return total

        def thresholded_total(policy):
            pol = DiscretePolicy(policy, eps, bid_step)
            total = 0.0
            for v, m, lam in zip(vs, ms, lams):
                b = threshold_bid(pol, v, lam)
                if b >= m:
                    total += (v - b) - lam * b
            return total

        best_smooth = max(lipschitz_total(p) for p in smooth)
        best_thresholded = max(thresholded_total(p) for p in twice)
        assert best_thresholded >= best_smooth - 7 * eps * horizon / rho

    def test_thresholded_payoffs_live_in_unit_interval(self):
        rng = np.random.default_rng(5)
        tree = PacingTree(64, 0.5, levels=2, bid_step=0.25)
        for _ in range(40):
            v, m, lam = rng.random(), rng.random(), rng.random() * 2
            r = tree.leaf_rewards(v, lam, m)
            assert r.min() >= -1e-12 and r.max() <= 1.0 + 1e-12


class TestFactoredBidder:
    def test_off_grid_valuation_rejected(self):
        bidder = FactoredBidder([0.25, 0.5, 1.0], [0.0, 0.25, 0.5], rho=0.5)
        with pytest.raises(ValueError):
            bidder.next_bid(0.3, 0.0)

    def test_only_the_round_valuation_learner_updates(self):
        bidder = FactoredBidder([0.5, 1.0], [0.0, 0.25, 0.5], rho=0.5, seed=0)
        before = [l.round for l in bidder.learners]
        bidder.next_bid(0.5, 0.0)
        bidder.observe(0.5, 0.0, 0.3)
        after = [l.round for l in bidder.learners]
        assert after[0] == before[0] + 1
        assert after[1] == before[1]

    def test_menu_respects_valuation(self):
        bidder = FactoredBidder([0.25, 1.0], [0.0, 0.25, 0.5, 1.0], rho=0.5)
        assert list(bidder.menus[0]) == [0.0, 0.25]
        assert list(bidder.menus[1]) == [0.0, 0.25, 0.5, 1.0]

    def test_mixture_cost_matches_manual_expectation(self):
        bidder = FactoredBidder([1.0], [0.0, 0.5, 1.0], rho=0.5, seed=0)
        w = bidder.learners[0].next_element().weights
        manual = w[2] * 0.5 + w[3] * 1.0  # bids >= 0.4 pay their own bid
        assert bidder.mixture_cost(1.0, 0.0, 0.4) == pytest.approx(manual)


class TestPacingEpisode:
    def test_budget_feasibility_and_positivity(self):
        for seed in range(6):
            tree = PacingTree(64, 0.5, levels=2, bid_step=0.25)
            bidder = ChainingBidder(tree, seed=seed)
            dual = DualOMD(1, 0.5)
            budget = BudgetState(32, 64, 1)
            trace, aux = run_pacing_episode(UniformAuctionStream(64), bidder, dual,
                                            budget, seed=seed)
            assert trace.cost_totals()[0] <= 32.0
            for record in trace.rounds:
                assert 0.0 <= record.reward <= 1.0

    def test_scripted_stream_and_forced_sit_out(self):
        rounds = [AuctionRound(1.0, 0.0)] * 20
        tree = PacingTree(20, 0.2, levels=2, bid_step=0.25, dominance_check=False)
        bidder = ChainingBidder(tree, seed=1)
        dual = DualOMD(1, 0.2)
        budget = BudgetState(4, 20, 1)
        trace, aux = run_pacing_episode(ScriptedAuctionStream(rounds), bidder, dual,
                                        budget, seed=1)
        assert trace.cost_totals()[0] <= 4.0
        assert any(r.void_forced for r in trace.rounds)
        forced = [r for r in trace.rounds if r.void_forced]
        assert all(r.costs[0] == 0.0 and r.action == -1 for r in forced)

    def test_deterministic_replay(self):
        def run(seed):
            tree = PacingTree(48, 0.5, levels=2, bid_step=0.25)
            bidder = ChainingBidder(tree, seed=seed)
            dual = DualOMD(1, 0.5)
            budget = BudgetState(24, 48, 1)
            return run_pacing_episode(UniformAuctionStream(48), bidder, dual,
                                      budget, seed=seed)

        (ta, aa), (tb, ab) = run(7), run(7)
        assert ta.total_reward == tb.total_reward
        assert [r.action for r in ta.rounds] == [r.action for r in tb.rounds]
        assert [r.bid for r in aa] == [r.bid for r in ab]

    def test_factored_bidder_episode(self):
        stream = FiniteAuctionStream([0.25, 0.5, 0.75, 1.0], [0.25] * 4,
                                     [0.125, 0.375, 0.625, 0.875], [0.25] * 4,
                                     horizon=200)
        bidder = FactoredBidder([0.25, 0.5, 0.75, 1.0],
                                [0.0, 0.125, 0.25, 0.375, 0.5, 0.625, 0.75],
                                rho=0.5, seed=2)
        dual = DualOMD(1, 0.5)
        budget = BudgetState(100, 200, 1)
        trace, _ = run_pacing_episode(stream, bidder, dual, budget, seed=2)
        assert trace.cost_totals()[0] <= 100.0
        assert all(0.0 <= r.reward <= 1.0 for r in trace.rounds)


class TestGoodEdgeAudit:
    def test_desk_scale_run_has_no_violations(self):
        tree = PacingTree(64, 0.5, levels=2, bid_step=0.125)
        bidder = ChainingBidder(tree, seed=3)
        dual = DualOMD(1, 0.5)
        budget = BudgetState(32, 64, 1)
        _, aux = run_pacing_episode(UniformAuctionStream(64), bidder, dual,
                                    budget, seed=3)
        report = good_edge_report(aux, 64, 0.5, levels=2, bid_step=0.125)
        assert report.violation_count == 0
        assert report.rounds_checked == 64
        for nr in report.node_regrets:
            assert nr.regret <= nr.bound + 1e-9
