"""Experiment harness: configuration, per-seed orchestration, trace files.

Configs are flat ``key = value`` text with dotted section prefixes (``env.``,
``alg.``).  Unknown keys are hard errors; omitted optional keys get defaults
that are echoed back into every output so a run is fully described by its
artifacts.  Each seed produces one trace CSV (plus a small auxiliary round
log for hierarchical-bidder runs); the aggregate report is recomputed from
the written CSVs, never from in-memory state, so the two can not drift apart.
"""
from __future__ import annotations

import hashlib
import json
import math
import os
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .core import BudgetState, Request, baselines, solve_opt_lp
from .env import (Distribution, NonstationaryRequests, ScriptedRequests,
                  StochasticRequests, make_corruption)
from .fpa import (AuctionRound, CapacityError, ChainingBidder, FactoredBidder,
                  FiniteAuctionStream, PacingTree, ScriptedAuctionStream,
                  UniformAuctionStream, bid_payoff_vector,
                  enumerate_grid_policies, run_pacing_episode)
from .meta import Trace, run_episode
from .regret import DualOMD, Exp3P, SimplexOMD
from .rng import make_rng
from .stackelberg import StackelbergInstance, VertexActionSpace

OUTPUT_DIR_ENV_VAR = "KNAPDUAL_OUTPUT_DIR"

APPLICATIONS = ("bwk", "stackelberg", "fpa_finite", "fpa_continuous")
ENVIRONMENTS = ("stochastic", "adversarial", "nonstationary")


class ConfigError(ValueError):
    """Configuration problem; always names the offending key."""


def _fmt(x: float) -> str:
    return f"{x:.9g}"


# ---------------------------------------------------------------------------
# Configuration
# ---------------------------------------------------------------------------

_SCHEMA = {
    # key: (type tag, default or REQUIRED)
    "application": ("choice", APPLICATIONS, None),
    "environment": ("choice", ENVIRONMENTS, None),
    "T": ("int", None, None),
    "B": ("float", None, None),
    "feedback": ("choice", ("full", "bandit"), "full"),
    "order": ("choice", ("simultaneous", "dual_first"), "simultaneous"),
    "delta": ("float", None, 0.05),
    "seeds": ("int_list", None, None),
    "output_dir": ("str", None, "runs"),
    "figures": ("bool", None, True),
    "env.instance": ("str", None, ""),
    "env.corrupt_instance": ("str", None, ""),
    "env.corrupt_rounds": ("int_list", None, ()),
    "env.auction_script": ("str", None, ""),
    "env.valuations": ("float_list", None, (0.25, 0.5, 0.75, 1.0)),
    "env.valuation_probs": ("float_list", None, ()),
    "env.comp_bids": ("float_list", None, (0.125, 0.375, 0.625, 0.875)),
    "env.comp_probs": ("float_list", None, ()),
    "alg.levels": ("int", None, 0),
    "alg.bid_step": ("float", None, 0.0),
    "alg.node_cap": ("int", None, 200_000),
    "alg.eta_rule": ("choice", ("per_level_rate", "literal_rate"), "per_level_rate"),
    "alg.policy_cap": ("int", None, 20_000),
}

_REQUIRED = ("application", "environment", "T", "B", "seeds")


def _parse_value(key: str, raw: str):
    spec = _SCHEMA[key]
    kind = spec[0]
    try:
        if kind == "int":
            return int(raw)
        if kind == "float":
            return float(raw)
        if kind == "bool":
            if raw.lower() in ("true", "yes", "1"):
                return True
            if raw.lower() in ("false", "no", "0"):
                return False
            raise ValueError(raw)
        if kind == "str":
            return raw
        if kind == "int_list":
            return tuple(int(v) for v in raw.split(",") if v.strip() != "")
        if kind == "float_list":
            return tuple(float(v) for v in raw.split(",") if v.strip() != "")
        if kind == "choice":
            if raw not in spec[1]:
                raise ValueError(raw)
            return raw
    except ValueError:
        raise ConfigError(f"config key '{key}': cannot parse value '{raw}'") from None
    raise ConfigError(f"config key '{key}': unknown schema kind")


@dataclass
class ExperimentConfig:
    values: dict = field(default_factory=dict)

    def __getitem__(self, key: str):
        return self.values[key]

    @property
    def rho(self) -> float:
        return self.values["B"] / self.values["T"]

    def echo(self) -> dict:
        out = dict(self.values)
        out["rho"] = self.rho
        out["seeds"] = list(self.values["seeds"])
        for key in ("env.corrupt_rounds", "env.valuations", "env.valuation_probs",
                    "env.comp_bids", "env.comp_probs"):
            out[key] = list(out[key])
        return out

    def config_hash(self) -> str:
        blob = json.dumps(self.echo(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]


def parse_config(path) -> ExperimentConfig:
    """Parse and validate a flat key=value config file."""
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc}") from exc

    values: dict = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        if "=" not in stripped:
            raise ConfigError(f"line {lineno}: expected 'key = value'")
        key, raw = (part.strip() for part in stripped.split("=", 1))
        if key not in _SCHEMA:
            raise ConfigError(f"unknown config key '{key}'")
        if key in values:
            raise ConfigError(f"duplicate config key '{key}'")
        values[key] = _parse_value(key, raw)

    for key in _REQUIRED:
        if key not in values:
            raise ConfigError(f"missing required config key '{key}'")
    for key, spec in _SCHEMA.items():
        if key not in values:
            values[key] = spec[2]

    cfg = ExperimentConfig(values)
    _validate(cfg)
    return cfg


def _validate(cfg: ExperimentConfig) -> None:
    v = cfg.values
    if v["B"] > v["T"]:
        raise ConfigError("config key 'B': budget exceeds horizon")
    if v["B"] < 1:
        raise ConfigError("config key 'B': budget must be at least one")
    if v["T"] < 1:
        raise ConfigError("config key 'T': horizon must be positive")
    if not v["seeds"]:
        raise ConfigError("config key 'seeds': at least one seed is required")
    if not 0.0 < v["delta"] < 1.0:
        raise ConfigError("config key 'delta': must lie in (0, 1)")
    app = v["application"]
    if app == "fpa_continuous":
        v["order"] = "dual_first"  # threshold bids need the multiplier first
    if app.startswith("fpa") and v["feedback"] == "bandit":
        raise ConfigError("config key 'feedback': pacing applications require full feedback")
    if app.startswith("fpa") and v["environment"] == "nonstationary":
        raise ConfigError("config key 'environment': pacing applications support "
                          "stochastic or adversarial inputs only")
    if app in ("bwk", "stackelberg") and not v["env.instance"]:
        raise ConfigError(f"config key 'env.instance': required for application '{app}'")
    if v["environment"] == "nonstationary":
        if v["env.corrupt_rounds"] and not v["env.corrupt_instance"]:
            raise ConfigError("config key 'env.corrupt_instance': required when "
                              "corrupt rounds are given")
    if v["alg.bid_step"]:
        if not 0 < v["alg.bid_step"] <= 1 or abs(round(1 / v["alg.bid_step"]) * v["alg.bid_step"] - 1) > 1e-9:
            raise ConfigError("config key 'alg.bid_step': must divide 1 evenly")


# ---------------------------------------------------------------------------
# Built-in instances
# ---------------------------------------------------------------------------

def _request(rewards, costs) -> Request:
    return Request(np.asarray(rewards, dtype=float), np.asarray(costs, dtype=float), 0)


def _builtin_templates(name: str):
    """Named single-resource request templates over (do-nothing + arms)."""
    if name == "saturating_arm":
        return [_request([0.0, 1.0], [[0.0], [1.0]])]
    if name == "cheap_arm":
        return [_request([0.0, 0.8], [[0.0], [0.5]])]
    if name == "three_arm":
        return [_request([0.0, 0.8, 0.3, 0.55],
                         [[0.0], [0.5], [0.7], [0.95]])]
    if name == "zero_reward":
        return [_request([0.0, 0.0], [[0.0], [1.0]])]
    if name == "two_template_mix":
        return [_request([0.0, 0.9], [[0.0], [0.9]]),
                _request([0.0, 1.0], [[0.0], [1.0]])]
    raise ConfigError(f"config key 'env.instance': unknown builtin '{name}'")


def _two_phase_script(horizon: int):
    first = _request([0.0, 0.9, 0.1], [[0.0], [0.5], [0.5]])
    second = _request([0.0, 0.1, 0.9], [[0.0], [0.5], [0.5]])
    half = horizon // 2
    return [first] * half + [second] * (horizon - half)


_BUILTIN_STACKELBERG = StackelbergInstance(
    leader_payoff=np.array([[0.0, 0.0],
                            [0.9, 0.2],
                            [0.3, 0.8]]),
    follower_payoffs=(np.array([[0.5, 0.5],
                                [0.8, 0.1],
                                [0.2, 0.9]]),
                      np.array([[0.4, 0.6],
                                [0.3, 0.7],
                                [0.9, 0.2]])),
    void_row=0,
)
_BUILTIN_STACKELBERG_COST = np.array([[0.0], [0.6], [0.4]])


def _load_json(path: str) -> dict:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            return json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"config key 'env.instance': cannot load '{path}': {exc}") from exc


def load_request_templates(spec: str):
    """Resolve ``builtin:<name>`` or a JSON file into request templates."""
    if spec.startswith("builtin:"):
        return _builtin_templates(spec.split(":", 1)[1])
    data = _load_json(spec)
    if data.get("kind") != "request_templates":
        raise ConfigError("config key 'env.instance': JSON must have kind "
                          "'request_templates'")
    return [_request(t["rewards"], t["costs"]) for t in data["templates"]]


def load_stackelberg(spec: str):
    if spec == "builtin:patrol":
        return _BUILTIN_STACKELBERG, _BUILTIN_STACKELBERG_COST
    data = _load_json(spec)
    if data.get("kind") != "stackelberg":
        raise ConfigError("config key 'env.instance': JSON must have kind 'stackelberg'")
    inst = StackelbergInstance(
        leader_payoff=np.asarray(data["leader_payoff"], dtype=float),
        follower_payoffs=tuple(np.asarray(u, dtype=float) for u in data["follower_payoffs"]),
        void_row=int(data.get("void_row", 0)),
    )
    return inst, np.asarray(data["cost_matrix"], dtype=float)


def load_auction_script(path: str):
    rounds = []
    try:
        with open(path, "r", encoding="utf-8") as fh:
            for line in fh:
                line = line.strip()
                if not line or line.startswith("#") or line.startswith("t,"):
                    continue
                parts = line.split(",")
                rounds.append(AuctionRound(float(parts[-2]), float(parts[-1])))
    except (OSError, ValueError, IndexError) as exc:
        raise ConfigError(f"config key 'env.auction_script': cannot load '{path}': {exc}") from exc
    return rounds


# ---------------------------------------------------------------------------
# Environment assembly
# ---------------------------------------------------------------------------

def _uniform(n: int) -> np.ndarray:
    return np.full(n, 1.0 / n)


def _distribution_from(templates, probs=None) -> Distribution:
    probs = _uniform(len(templates)) if probs is None else np.asarray(probs, dtype=float)
    return Distribution(tuple(templates), probs)


def _request_environment(cfg: ExperimentConfig):
    """Build the per-round request source for bwk/stackelberg runs.

    Returns ``(env, reference_distribution_or_None, script_or_None)``.
    """
    v = cfg.values
    horizon = v["T"]
    app = v["application"]

    if app == "bwk":
        if v["env.instance"] == "builtin:two_phase":
            if v["environment"] != "adversarial":
                raise ConfigError("config key 'env.instance': builtin:two_phase is "
                                  "an adversarial script")
            templates = []
        else:
            templates = load_request_templates(v["env.instance"])
    else:
        inst, cost = load_stackelberg(v["env.instance"])
        space = VertexActionSpace(inst)
        templates = [space.round_request(k, cost) for k in range(inst.n_types)]

    if v["environment"] == "adversarial":
        if app == "bwk" and v["env.instance"] == "builtin:two_phase":
            script = _two_phase_script(horizon)
        else:
            reps = math.ceil(horizon / len(templates))
            script = (templates * reps)[:horizon]
        return ScriptedRequests(script), None, script

    reference = _distribution_from(templates)
    if v["environment"] == "stochastic":
        return StochasticRequests(reference, horizon), reference, None

    corrupt_spec = v["env.corrupt_instance"]
    if app == "bwk" and corrupt_spec:
        corrupt_templates = load_request_templates(corrupt_spec)
    elif corrupt_spec:
        raise ConfigError("config key 'env.corrupt_instance': only supported for bwk")
    else:
        corrupt_templates = []
    union = list(templates) + [t for t in corrupt_templates
                               if not any(np.array_equal(t.rewards, u.rewards)
                                          and np.array_equal(t.costs, u.costs)
                                          for u in templates)]
    base_probs = np.zeros(len(union))
    base_probs[: len(templates)] = _uniform(len(templates))
    reference = _distribution_from(union, base_probs)
    if corrupt_templates:
        corrupt_probs = np.zeros(len(union))
        for t in corrupt_templates:
            for i, u in enumerate(union):
                if np.array_equal(t.rewards, u.rewards) and np.array_equal(t.costs, u.costs):
                    corrupt_probs[i] += 1.0 / len(corrupt_templates)
        corrupt = _distribution_from(union, corrupt_probs)
    else:
        corrupt = reference
    script = make_corruption(reference, horizon, v["env.corrupt_rounds"], corrupt)
    return NonstationaryRequests(script), reference, None


def _auction_stream(cfg: ExperimentConfig):
    v = cfg.values
    horizon = v["T"]
    if v["environment"] == "adversarial":
        if not v["env.auction_script"]:
            raise ConfigError("config key 'env.auction_script': required for "
                              "adversarial pacing runs")
        rounds = load_auction_script(v["env.auction_script"])
        if len(rounds) < horizon:
            raise ConfigError("config key 'env.auction_script': script shorter than T")
        return ScriptedAuctionStream(rounds[:horizon])
    if v["application"] == "fpa_finite":
        vals = np.asarray(v["env.valuations"], dtype=float)
        val_probs = np.asarray(v["env.valuation_probs"] or _uniform(len(vals)), dtype=float)
        comp = np.asarray(v["env.comp_bids"], dtype=float)
        comp_probs = np.asarray(v["env.comp_probs"] or _uniform(len(comp)), dtype=float)
        return FiniteAuctionStream(vals, val_probs, comp, comp_probs, horizon)
    return UniformAuctionStream(horizon)


# ---------------------------------------------------------------------------
# Per-seed episode execution
# ---------------------------------------------------------------------------

def _finite_fpa_upper(cfg: ExperimentConfig, stream) -> float | None:
    """Stationary LP upper bound over the finite policy space, when tractable."""
    if not isinstance(stream, FiniteAuctionStream):
        return None
    try:
        policies = enumerate_grid_policies(stream.valuations, _bid_menu(cfg),
                                           cap=cfg.values["alg.policy_cap"])
    except CapacityError:
        return None
    win_prob = {}
    for b in _bid_menu(cfg):
        win_prob[b] = float(stream.comp_probs[stream.comp_bids <= b + 1e-12].sum())
    rewards = []
    costs = []
    for pol in policies:
        r = 0.0
        c = 0.0
        for pv, v, b in zip(stream.val_probs, stream.valuations, pol):
            if b is None:
                continue
            r += pv * (v - b) * win_prob[b]
            c += pv * b * win_prob[b]
        rewards.append(r)
        costs.append([c])
    req = Request(np.asarray(rewards), np.asarray(costs), 0)
    value, _ = solve_opt_lp(req, cfg.rho)
    return value * cfg.values["T"]


def _bid_menu(cfg: ExperimentConfig):
    step = cfg.values["alg.bid_step"] or 0.125
    return [round(i * step, 12) for i in range(round(1 / step) + 1)]


@dataclass
class SeedResult:
    seed: int
    trace: Trace
    pacing_rounds: list | None
    regret_vs_upper: float | None
    lhs: float | None
    opt_upper: float | None


def run_seed(cfg: ExperimentConfig, seed: int) -> SeedResult:
    """Run a single seeded episode for the configured application."""
    v = cfg.values
    horizon, budget_amount = v["T"], v["B"]
    rho = cfg.rho
    app = v["application"]
    echo = cfg.echo()
    echo["seed"] = seed

    if app in ("bwk", "stackelberg"):
        env, reference, script = _request_environment(cfg)
        n = env.n_actions
        m = env.m
        if v["feedback"] == "bandit":
            primal = Exp3P(n, horizon, v["delta"], (-1.0 / rho, 1.0),
                           rng=make_rng(seed, stream=2))
        else:
            primal = SimplexOMD(n, (-1.0 / rho, 1.0))
        dual = DualOMD(m, rho)
        budget = BudgetState(budget_amount, horizon, m)
        trace = run_episode(env, primal, dual, budget, order=v["order"],
                            feedback=v["feedback"], seed=seed, config=echo)
        regret = lhs = upper = None
        if v["environment"] == "adversarial":
            base = baselines(script, rho, horizon)
            upper = base.opt_fd_upper
            lhs = upper - trace.total_reward / rho
        else:
            value, _ = solve_opt_lp(reference.expectation(), rho)
            upper = value * horizon
            regret = upper - trace.total_reward
        return SeedResult(seed, trace, None, regret, lhs, upper)

    stream = _auction_stream(cfg)
    budget = BudgetState(budget_amount, horizon, 1)
    dual = DualOMD(1, rho)
    if app == "fpa_finite":
        bidder = FactoredBidder(stream.valuations if isinstance(stream, FiniteAuctionStream)
                                else v["env.valuations"],
                                _bid_menu(cfg), rho, seed=seed)
    else:
        levels = v["alg.levels"] or None
        bid_step = v["alg.bid_step"] or None
        tree = PacingTree(horizon, rho, levels=levels, bid_step=bid_step,
                          node_cap=v["alg.node_cap"], eta_rule=v["alg.eta_rule"])
        bidder = ChainingBidder(tree, seed=seed)
    trace, aux = run_pacing_episode(stream, bidder, dual, budget, seed=seed, config=echo)
    regret = upper = None
    if app == "fpa_finite" and v["environment"] == "stochastic":
        upper = _finite_fpa_upper(cfg, stream)
        if upper is not None:
            regret = upper - trace.total_reward
    return SeedResult(seed, trace, aux, regret, None, upper)


# ---------------------------------------------------------------------------
# Trace serialization
# ---------------------------------------------------------------------------

def write_trace_csv(trace: Trace, path) -> None:
    """Serialize one episode to the documented CSV layout.

    Leading ``#`` comments carry the config echo, seed, and input
    pre-commitment hash; the data rows use nine significant digits; the two
    trailing comments record the stopping round and the reward total.
    """
    path = Path(path)
    m = len(trace.rounds[0].costs) if trace.rounds else 0
    cols = ["t", "action", "reward"]
    cols += [f"cost_{i + 1}" for i in range(m)]
    cols += [f"lambda_{i + 1}" for i in range(m)]
    cols += [f"remaining_{i + 1}" for i in range(m)]
    cols += ["void_forced"]
    lines = []
    if trace.precommitment:
        lines.append(f"# precommitment={trace.precommitment}")
    if trace.config:
        lines.append("# config=" + json.dumps(trace.config, sort_keys=True))
    lines.append(",".join(cols))
    for r in trace.rounds:
        row = [str(r.t), str(r.action), _fmt(r.reward)]
        row += [_fmt(c) for c in r.costs]
        row += [_fmt(l) for l in r.lam]
        row += [_fmt(b) for b in r.remaining]
        row += ["true" if r.void_forced else "false"]
        lines.append(",".join(row))
    lines.append(f"# tau={trace.stop_time}")
    lines.append(f"# total_reward={_fmt(trace.total_reward)}")
    try:
        path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    except OSError as exc:
        raise OSError(f"cannot write trace to {path}: {exc}") from exc


@dataclass
class ParsedTrace:
    seed: int
    meta: dict
    t: np.ndarray
    action: np.ndarray
    reward: np.ndarray
    costs: np.ndarray
    lam: np.ndarray
    remaining: np.ndarray
    void_forced: np.ndarray
    tau: int
    total_reward: float


def read_trace_csv(path) -> ParsedTrace:
    path = Path(path)
    meta: dict = {}
    tau = -1
    total = math.nan
    header = None
    rows = []
    for line in path.read_text(encoding="utf-8").splitlines():
        if line.startswith("#"):
            body = line[1:].strip()
            if "=" in body:
                key, val = body.split("=", 1)
                meta[key.strip()] = val.strip()
            continue
        if header is None:
            header = line.split(",")
            continue
        rows.append(line.split(","))
    if header is None:
        raise ValueError(f"{path} holds no trace header")
    tau = int(meta.get("tau", -1))
    total = float(meta.get("total_reward", "nan"))
    m = sum(1 for c in header if c.startswith("cost_"))
    data = np.array([[r[0], r[1]] for r in rows], dtype=float)
    rewards = np.array([r[2] for r in rows], dtype=float)
    costs = np.array([r[3:3 + m] for r in rows], dtype=float)
    lam = np.array([r[3 + m:3 + 2 * m] for r in rows], dtype=float)
    remaining = np.array([r[3 + 2 * m:3 + 3 * m] for r in rows], dtype=float)
    void = np.array([r[-1] == "true" for r in rows])
    config = json.loads(meta["config"]) if "config" in meta else {}
    return ParsedTrace(
        seed=int(config.get("seed", -1)), meta=meta,
        t=data[:, 0].astype(int), action=data[:, 1].astype(int),
        reward=rewards, costs=costs, lam=lam, remaining=remaining,
        void_forced=void, tau=tau, total_reward=total,
    )


def write_pacing_rounds(rounds, path) -> None:
    lines = ["t,valuation,highest_bid,lambda,bid,leaf"]
    for r in rounds:
        bid = "" if r.bid is None else _fmt(r.bid)
        lines.append(f"{r.t},{_fmt(r.valuation)},{_fmt(r.highest_bid)},"
                     f"{_fmt(r.lam)},{bid},{r.leaf}")
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def read_pacing_rounds(path):
    from .fpa import PacingRound
    rounds = []
    for line in Path(path).read_text(encoding="utf-8").splitlines()[1:]:
        t, v, m, lam, bid, leaf = line.split(",")
        rounds.append(PacingRound(t=int(t), valuation=float(v), highest_bid=float(m),
                                  lam=float(lam), bid=float(bid) if bid else None,
                                  leaf=int(leaf)))
    return rounds


# ---------------------------------------------------------------------------
# Experiment driver
# ---------------------------------------------------------------------------

def _stat(values) -> dict:
    arr = np.asarray([v for v in values if v is not None], dtype=float)
    if arr.size == 0:
        return {"mean": None, "stdev": None}
    stdev = float(arr.std(ddof=1)) if arr.size > 1 else 0.0
    return {"mean": float(arr.mean()), "stdev": stdev}


def aggregate_from_traces(cfg: ExperimentConfig, trace_paths, uppers) -> dict:
    """Aggregate statistics recomputed from the serialized traces.

    ``uppers`` maps each seed to its LP upper bound (or None); the per-seed
    regret and competitive-ratio numbers are rebuilt from the parsed files so
    that an external recomputation matches this report exactly.
    """
    parsed = [read_trace_csv(p) for p in trace_paths]
    rewards = [p.total_reward for p in parsed]
    taus = [p.tau for p in parsed]
    adversarial = cfg.values["environment"] == "adversarial"
    regrets = []
    lhss = []
    for p in parsed:
        upper = uppers.get(p.seed)
        if upper is None:
            regrets.append(None)
            lhss.append(None)
        elif adversarial:
            regrets.append(None)
            lhss.append(upper - p.total_reward / cfg.rho)
        else:
            regrets.append(upper - p.total_reward)
            lhss.append(None)
    return {
        "config_hash": cfg.config_hash(),
        "n_seeds": len(parsed),
        "total_reward": _stat(rewards),
        "tau": _stat(taus),
        "regret_vs_upper": _stat(regrets),
        "competitive_lhs": _stat(lhss),
        "per_seed": [
            {"seed": p.seed, "total_reward": p.total_reward, "tau": p.tau,
             "regret_vs_upper": r, "competitive_lhs": l}
            for p, r, l in zip(parsed, regrets, lhss)
        ],
    }


def run_experiment(cfg: ExperimentConfig, *, base_dir=None) -> dict:
    """Run every configured seed, write traces, reports, and figures.

    Returns a manifest of written files.  Partial outputs are removed if any
    seed fails.
    """
    out_root = os.environ.get(OUTPUT_DIR_ENV_VAR) or (base_dir or cfg.values["output_dir"])
    out_dir = Path(out_root) / f"{cfg.values['application']}_{cfg.config_hash()}"
    out_dir.mkdir(parents=True, exist_ok=True)
    written: list[Path] = []
    try:
        uppers = {}
        trace_paths = []
        pacing_paths = {}
        for seed in cfg.values["seeds"]:
            result = run_seed(cfg, seed)
            trace_path = out_dir / f"trace_seed{seed:04d}.csv"
            write_trace_csv(result.trace, trace_path)
            written.append(trace_path)
            trace_paths.append(trace_path)
            uppers[seed] = result.opt_upper
            if result.pacing_rounds is not None:
                aux_path = out_dir / f"trace_seed{seed:04d}.rounds.csv"
                write_pacing_rounds(result.pacing_rounds, aux_path)
                written.append(aux_path)
                pacing_paths[seed] = aux_path

        aggregate = aggregate_from_traces(cfg, trace_paths, uppers)
        agg_path = out_dir / "aggregate.json"
        agg_path.write_text(json.dumps(aggregate, indent=2, sort_keys=True) + "\n",
                            encoding="utf-8")
        written.append(agg_path)

        figure_paths = []
        if cfg.values["figures"]:
            from .plots import render_run_figures
            figure_paths = render_run_figures([read_trace_csv(p) for p in trace_paths],
                                              out_dir)
            written.extend(figure_paths)
        return {
            "out_dir": out_dir,
            "traces": trace_paths,
            "pacing_rounds": pacing_paths,
            "aggregate": agg_path,
            "figures": figure_paths,
        }
    except BaseException:
        for p in written:
            try:
                p.unlink()
            except OSError:
                pass
        raise


def baseline_report(cfg: ExperimentConfig) -> dict:
    """LP upper bounds implied by a config, without running any episode."""
    v = cfg.values
    app = v["application"]
    if app in ("bwk", "stackelberg"):
        env, reference, script = _request_environment(cfg)
        if script is not None:
            base = baselines(script, cfg.rho, v["T"])
        else:
            base = baselines([reference.expectation()] * v["T"], cfg.rho, v["T"])
        return {
            "opt_lp_value": base.opt_lp_value,
            "opt_lp_mixture": [float(w) for w in base.opt_lp_mixture.weights],
            "opt_dp_upper": base.opt_dp_upper,
            "opt_fd_upper": base.opt_fd_upper,
        }
    if app == "fpa_finite":
        stream = _auction_stream(cfg)
        upper = _finite_fpa_upper(cfg, stream)
        if upper is None:
            return {"opt_lp_value": None, "note": "policy space above cap"}
        return {"opt_lp_value": upper / v["T"], "opt_dp_upper": upper,
                "opt_fd_upper": upper}
    return {"opt_lp_value": None,
            "note": "no tractable LP baseline for continuous pacing runs"}
