"""Primal-dual online learning under per-iteration knapsack budgets."""

from .core import (ActionSet, BaselineReport, BudgetState, DualVector, GapDemo,
                   Mixture, Request, average_inputs, baselines,
                   best_response_value, dual_grid_min, evaluate_lagrangian,
                   mean_deviation, semi_infinite_gap_demo, solve_opt_lp,
                   total_variation)
from .env import (Distribution, NonstationaryRequests, NonstationaryScript,
                  ScriptedRequests, StochasticRequests, make_corruption)
from .fpa import (AuctionRound, CapacityError, ChainingBidder, DiscretePolicy,
                  FactoredBidder, PacingTree, bid_payoff_vector,
                  good_edge_report, run_pacing_episode, threshold_bid)
from .meta import (AdversarialReport, RoundRecord, StochasticReport, Trace,
                   adversarial_report, run_episode, stochastic_report)
from .regret import DualOMD, Exp3P, ProtocolError, SimplexOMD, hindsight_best
from .stackelberg import (StackelbergInstance, VertexActionSpace,
                          enumerate_restricted_vertices, follower_best_response,
                          leader_round)

__version__ = "0.1.0"
