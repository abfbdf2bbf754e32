"""Online regret minimizers: entropic mirror ascent on the simplex, the same
scheme lifted to the capped dual set, and a high-probability bandit learner.

Every minimizer follows the same two-call protocol: ``next_element`` emits the
current iterate without mutating state, ``observe_full`` / ``observe_bandit``
consumes the round's feedback and advances the round counter by exactly one.
Payoff ranges are declared at construction and enforced as hard errors; the
adversarial guarantees depend on bounded payoffs, so silent clipping would
hide bugs.
"""
from __future__ import annotations

import math

import numpy as np

from .core import DualVector, Mixture
from .rng import make_rng


class ProtocolError(RuntimeError):
    """Raised when next/observe calls are made out of order."""


def _check_range(values, lo: float, hi: float) -> None:
    arr = np.asarray(values, dtype=float)
    if arr.size and (arr.min() < lo - 1e-9 or arr.max() > hi + 1e-9):
        raise ValueError(f"payoff outside declared range [{lo}, {hi}]")


class SimplexOMD:
    """Mirror ascent with the negative-entropy regularizer on the simplex.

    Equivalent to exponential weights: ``w <- w * exp(eta_t * u)`` followed by
    normalization.  The default step size is the anytime schedule
    ``sqrt(log n / t) / width`` where ``width`` is the declared payoff range;
    passing ``eta`` fixes a constant step instead.
    """

    def __init__(self, n: int, payoff_range: tuple[float, float], *, eta: float | None = None):
        if n < 1:
            raise ValueError("need at least one coordinate")
        lo, hi = payoff_range
        if not hi > lo:
            raise ValueError("payoff range must have positive width")
        self.n = int(n)
        self.lo = float(lo)
        self.hi = float(hi)
        self.width = float(hi - lo)
        self.fixed_eta = None if eta is None else float(eta)
        self.round = 0
        self._logw = np.zeros(self.n)

    def _eta(self) -> float:
        if self.fixed_eta is not None:
            return self.fixed_eta
        t = self.round + 1
        return math.sqrt(math.log(self.n) / t) / self.width if self.n > 1 else 0.0

    def next_element(self) -> Mixture:
        shifted = self._logw - self._logw.max()
        w = np.exp(shifted)
        return Mixture(w / w.sum())

    def observe_full(self, utilities) -> None:
        u = np.asarray(utilities, dtype=float)
        if u.shape != (self.n,):
            raise ValueError("utility vector has the wrong length")
        _check_range(u, self.lo, self.hi)
        self._logw += self._eta() * (u - u.max())
        self.round += 1


class DualOMD:
    """Entropic mirror ascent over ``{lam >= 0 : ||lam||_1 <= 1/rho}``.

    The dual set is handled by lifting to an (m+1)-simplex scaled by 1/rho: a
    slack coordinate absorbs the unused 1-norm, negative-entropy updates run
    on the lifted simplex, and the emitted point drops the slack.  Feedback is
    the utility gradient with respect to the multiplier, i.e. the vector
    ``chat - rho * 1`` whose inner product with ``lam`` is the round's dual
    utility.  The step schedule is ``rho * sqrt(log(m+1) / t)``.
    """

    def __init__(self, m: int, rho: float, *, eta: float | None = None):
        if m < 1:
            raise ValueError("need at least one resource")
        if not 0.0 < rho <= 1.0:
            raise ValueError("rho must lie in (0, 1]")
        self.m = int(m)
        self.rho = float(rho)
        self.fixed_eta = None if eta is None else float(eta)
        self.round = 0
        self._logw = np.zeros(self.m + 1)

    def _eta(self) -> float:
        if self.fixed_eta is not None:
            return self.fixed_eta
        t = self.round + 1
        return self.rho * math.sqrt(math.log(self.m + 1) / t)

    def _simplex_point(self) -> np.ndarray:
        shifted = self._logw - self._logw.max()
        w = np.exp(shifted)
        return w / w.sum()

    def next_element(self) -> DualVector:
        w = self._simplex_point()
        return DualVector(w[: self.m] / self.rho, self.rho)

    def observe_full(self, gradient) -> None:
        g = np.asarray(gradient, dtype=float)
        if g.shape != (self.m,):
            raise ValueError("gradient has the wrong number of resources")
        _check_range(g, -self.rho, 1.0 - self.rho)
        lifted = np.append(g / self.rho, 0.0)
        self._logw += self._eta() * (lifted - lifted.max())
        self.round += 1


class Exp3P:
    """High-probability bandit learner over ``K`` arms.

    Exponential weights on optimistic importance-weighted gain estimates,
    with uniform exploration mixed in, tuned for a known horizon ``T`` and
    confidence ``delta``:

        eta   = 0.95 * sqrt(ln K / (T K))
        gamma = min(1, 1.05 * sqrt(K ln K / T))
        beta  = sqrt(ln(K / delta) / (T K))
        gain estimate: (g * 1{i = pulled} + beta) / p_i

    which carries the usual O(sqrt(K T log(K / delta))) high-probability
    regret guarantee.  Realized payoffs arrive in the declared range and are
    affinely rescaled to [0, 1] before the update.  ``next_element`` samples
    an arm and retains it; the paired ``observe_bandit`` must follow before
    the next draw.
    """

    def __init__(self, n_arms: int, horizon: int, delta: float,
                 payoff_range: tuple[float, float], *, rng=None, seed: int | None = None):
        if n_arms < 1:
            raise ValueError("need at least one arm")
        if horizon < 1:
            raise ValueError("horizon must be positive")
        if not 0.0 < delta < 1.0:
            raise ValueError("delta must lie in (0, 1)")
        lo, hi = payoff_range
        if not hi > lo:
            raise ValueError("payoff range must have positive width")
        self.n = int(n_arms)
        self.T = int(horizon)
        self.delta = float(delta)
        self.lo = float(lo)
        self.hi = float(hi)
        self.rng = rng if rng is not None else make_rng(0 if seed is None else seed)
        self.round = 0
        self._pending: int | None = None

        k, t = self.n, self.T
        ln_k = math.log(k) if k > 1 else 1.0
        self.eta = 0.95 * math.sqrt(ln_k / (t * k))
        self.gamma = min(1.0, 1.05 * math.sqrt(k * ln_k / t))
        self.beta = math.sqrt(math.log(k / delta) / (t * k))
        self._logw = np.zeros(k)

    def sampling_distribution(self) -> np.ndarray:
        shifted = self._logw - self._logw.max()
        w = np.exp(shifted)
        return (1.0 - self.gamma) * (w / w.sum()) + self.gamma / self.n

    def next_element(self) -> tuple[Mixture, int]:
        if self._pending is not None:
            raise ProtocolError("next_element called twice without observe_bandit")
        p = self.sampling_distribution()
        u = float(self.rng.random())
        arm = int(np.searchsorted(np.cumsum(p), u, side="right"))
        arm = min(arm, self.n - 1)
        self._pending = arm
        return Mixture(p), arm

    def observe_bandit(self, realized_payoff: float) -> None:
        if self._pending is None:
            raise ProtocolError("observe_bandit called with no pending sample")
        _check_range([realized_payoff], self.lo, self.hi)
        arm = self._pending
        p = self.sampling_distribution()
        g = (float(realized_payoff) - self.lo) / (self.hi - self.lo)
        g = min(1.0, max(0.0, g))
        gain = self.beta / p
        gain[arm] += g / p[arm]
        self._logw += self.eta * gain
        self._pending = None
        self.round += 1


def hindsight_best(utilities) -> tuple[int, float]:
    """Best fixed column of a rounds-by-actions utility matrix.

    Returns the argmax of the column sums (lowest index on ties) and the
    attained total; used to report realized regret on finite action sets.
    """
    arr = np.asarray(utilities, dtype=float)
    if arr.ndim != 2 or arr.size == 0:
        raise ValueError("utilities must be a nonempty matrix")
    sums = arr.sum(axis=0)
    arg = int(np.argmax(sums))
    return arg, float(sums[arg])
