"""Exact finite-n quantities for the logistic chain, computed in log space.

Everything here reduces to the cumulative products of death/birth rate
ratios between states,

    ratio(j, k) = prod_{i=j+1}^{k} q_down(i) / q_up(i),

extended to k < j by reciprocals.  These products span exp(+-n*barrier)
(e.g. e^72 already at n=1000, r=1.5), so the table stores log-prefixes and
every sum is a log-sum-exp over prefix differences.  From the table we get
hitting probabilities, escape probabilities, conditioned (h-transform)
rates, expected one-step crossing times, excursion lengths, sojourn times,
and exact mean extinction times.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

from .chain import ModelParams, ParameterError, RateKind, RateSpec
from .numerics import kahan_cumsum, log1mexp, logcumsumexp, logsumexp

__all__ = [
    "EquilibriumUndefinedError",
    "WindowError",
    "ConditioningError",
    "RatioTable",
    "PotentialEstimate",
    "ExactSummary",
    "Conditioning",
    "build_ratio_table",
    "log_ratio",
    "rate_potential",
    "ratio_band_estimate",
    "hitting_probabilities",
    "conditioned_rates",
    "conditioned_spec",
    "up_step_time_conditioned",
    "down_step_time",
    "log_down_step_time",
    "down_step_time_conditioned",
    "log_escape_prob",
    "mean_excursion_length",
    "log_mean_sojourn",
    "mean_extinction_time",
    "log_mean_extinction_time",
    "summarize",
]


class EquilibriumUndefinedError(ValueError):
    """Operation requires r > 1 (the chain has no interior equilibrium)."""


class WindowError(ValueError):
    """The metastable window is too small (equilibrium state in {0, 1})."""


class ConditioningError(ValueError):
    """Conditioning on a null event."""


class Conditioning(enum.Enum):
    UP = "hits-equilibrium-first"
    DOWN = "hits-zero-first"


@dataclass(frozen=True)
class RatioTable:
    """Log-space table of cumulative death/birth rate-ratio products.

    log_prefix[k] = log ratio(0, k) for k = 0..n-1 (entry 0 is 0); the
    general log ratio(j, k) is the prefix difference.  When r > 1 and the
    equilibrium state K >= 1, log_h_up[j] / log_h_down[j] (j = 0..K) hold
    the log-probabilities of hitting K before 0 (resp. 0 before K) from j.
    """

    params: ModelParams
    log_prefix: np.ndarray
    log_h_up: np.ndarray | None
    log_h_down: np.ndarray | None

    @property
    def eq_state(self) -> int | None:
        return self.params.eq_state


def _q_up(params: ModelParams, j) -> np.ndarray:
    j = np.asarray(j, dtype=np.float64)
    return params.r * j * (1.0 - j / params.n)


def build_ratio_table(params: ModelParams) -> RatioTable:
    """Build the log-prefix table (and hitting-probability tables if r > 1).

    Rejects r = 0: the down/up ratio is infinite at every positive state.
    """
    n, r = params.n, params.r
    if r == 0.0:
        raise ParameterError("r = 0 makes the rate-ratio products infinite")
    i = np.arange(1, n, dtype=np.float64)
    # log(q_down(i)/q_up(i)) = -(log r + log(1 - i/n))
    steps = -(math.log(r) + np.log1p(-i / n))
    log_prefix = np.empty(n, dtype=np.float64)
    log_prefix[0] = 0.0
    if n > 1:
        log_prefix[1:] = kahan_cumsum(steps)

    log_h_up = log_h_down = None
    K = params.eq_state
    if K is not None and K >= 1:
        lcs = logcumsumexp(log_prefix[:K])
        denom = lcs[K - 1]
        log_h_up = np.empty(K + 1)
        log_h_up[0] = -np.inf
        log_h_up[1:] = lcs - denom
        rcs = logcumsumexp(log_prefix[:K][::-1])[::-1]
        log_h_down = np.empty(K + 1)
        log_h_down[:K] = rcs - denom
        log_h_down[K] = -np.inf
    return RatioTable(params=params, log_prefix=log_prefix, log_h_up=log_h_up, log_h_down=log_h_down)


def log_ratio(table: RatioTable, j: int, k: int) -> float:
    """log ratio(j, k); k < j uses the reciprocal extension ratio(k,j)^-1."""
    n = table.params.n
    if not (0 <= j <= n - 1 and 0 <= k <= n - 1):
        raise ParameterError(f"ratio indices must lie in [0, {n - 1}]")
    return float(table.log_prefix[k] - table.log_prefix[j])


def _potential(r: float, x: float) -> float:
    # x*(log r - 1) - (1-x)*log(1-x); the x -> 1 limit of the second term is 0
    if x >= 1.0:
        return x * (math.log(r) - 1.0)
    return x * (math.log(r) - 1.0) - (1.0 - x) * math.log1p(-x)


def rate_potential(params: ModelParams, x: float) -> float:
    """Large-deviation potential x(log r - 1) - (1-x)log(1-x) on [0, 1)."""
    if not (0.0 <= x < 1.0):
        raise ParameterError(f"potential requires 0 <= x < 1, got {x}")
    if params.r == 0.0:
        raise ParameterError("potential undefined at r = 0")
    return _potential(params.r, x)


@dataclass(frozen=True)
class PotentialEstimate:
    """Potential-based estimate of log ratio(na, nb) over a band [a, b].

    log_upper bounds log ratio(na, nb) from above; log_central is the
    square-root-corrected estimate whose log-error is bounded by
    log_error_bound = 1 / (12 n (1-b)^2 (b-a)) (trapezoid-rule remainder).
    """

    a: float
    b: float
    log_upper: float
    log_central: float
    log_error_bound: float


def ratio_band_estimate(params: ModelParams, a: float, b: float) -> PotentialEstimate:
    """Estimate log ratio(na, nb) without touching the table (O(1) work).

    Inputs are rounded to the 1/n grid; requires 0 <= a < b < 1 after
    rounding.
    """
    n, r = params.n, params.r
    if r == 0.0:
        raise ParameterError("ratio estimates undefined at r = 0")
    na, nb = round(a * n), round(b * n)
    a, b = na / n, nb / n
    if not (0.0 <= a < b < 1.0):
        raise ParameterError(f"need 0 <= a < b < 1 on the 1/n grid, got a={a}, b={b}")
    v = lambda x: _potential(r, x)
    log_upper = -n * (v(b + 1.0 / n) - v(a + 1.0 / n))
    log_central = 0.5 * (math.log1p(-a) - math.log1p(-b)) - n * (v(b) - v(a))
    log_error_bound = 1.0 / (12.0 * n * (1.0 - b) ** 2 * (b - a))
    return PotentialEstimate(a, b, log_upper, log_central, log_error_bound)


def _require_window(table: RatioTable, min_eq: int = 2) -> int:
    K = table.params.eq_state
    if K is None:
        raise EquilibriumUndefinedError("operation requires r > 1")
    if K < min_eq:
        raise WindowError(
            f"metastable window too small: equilibrium state {K} < {min_eq} "
            f"(n={table.params.n}, r={table.params.r})"
        )
    return K


def hitting_probabilities(table: RatioTable) -> tuple[np.ndarray, np.ndarray]:
    """(h_up, h_down) over states 0..K: P(hit K before 0), P(hit 0 before K)."""
    _require_window(table, min_eq=1)
    return np.exp(table.log_h_up), np.exp(table.log_h_down)


def _log_h(table: RatioTable, target: Conditioning) -> np.ndarray:
    return table.log_h_up if target is Conditioning.UP else table.log_h_down


def conditioned_rates(table: RatioTable, target: Conditioning, j: int) -> tuple[float, float]:
    """h-transform rates at interior state 0 < j < K.

    up = q_up(j) * h(j+1)/h(j), down = q_down(j) * h(j-1)/h(j), with h the
    hitting probability of the conditioning target.  Ratios are formed from
    log-space h so deep-underflow probabilities still condition correctly.
    """
    K = _require_window(table)
    if not (0 < j < K):
        raise ParameterError(f"conditioned rates need 0 < j < {K}, got {j}")
    lh = _log_h(table, target)
    if lh[j] == -np.inf:
        raise ConditioningError(f"conditioning event has probability 0 at state {j}")
    p = table.params
    up = float(_q_up(p, j) * math.exp(lh[j + 1] - lh[j]))
    down = float(j * math.exp(lh[j - 1] - lh[j]))
    return up, down


def conditioned_spec(table: RatioTable, target: Conditioning) -> RateSpec:
    """Tabulated RateSpec for the conditioned chain on {0, ..., K}.

    DOWN conditioning absorbs at 0 (the up rate vanishes at K-1); UP
    conditioning absorbs at K (the down rate vanishes at 1).
    """
    K = _require_window(table)
    p = table.params
    lh = _log_h(table, target)
    j = np.arange(0, K + 1, dtype=np.int64)
    up = np.zeros(K + 1)
    down = np.zeros(K + 1)
    interior = np.arange(1, K)
    with np.errstate(invalid="ignore"):
        up[1:K] = _q_up(p, interior) * np.exp(lh[2 : K + 1] - lh[1:K])
        down[1:K] = interior * np.exp(lh[0 : K - 1] - lh[1:K])
    kind = RateKind.CONDITIONED_UP if target is Conditioning.UP else RateKind.CONDITIONED_DOWN
    return RateSpec(kind=kind, n=p.n, r=p.r, state_space_max=K, up_table=up, down_table=down)


def up_step_time_conditioned(table: RatioTable, j: int) -> float:
    """Expected time for the UP-conditioned chain to first reach j+1 from j.

    Closed form: (q_down(j)/q_up^cond(j)) * sum_{i=1}^{j} ratio(i, j-1)
    * (h_up(i)/h_up(j))^2 / q_up(i), evaluated by log-sum-exp.
    """
    K = _require_window(table)
    if not (1 <= j < K):
        raise ParameterError(f"up-crossing needs 1 <= j < {K}, got {j}")
    p = table.params
    lp, lhu = table.log_prefix, table.log_h_up
    i = np.arange(1, j + 1)
    terms = (lp[j - 1] - lp[i]) + 2.0 * (lhu[i] - lhu[j]) - np.log(_q_up(p, i))
    log_qup_cond = math.log(_q_up(p, j)) + (lhu[j + 1] - lhu[j])
    return float(math.exp(math.log(j) - log_qup_cond + logsumexp(terms)))


def log_down_step_time(table: RatioTable, j: int) -> float:
    """log of the expected time to first reach j-1 from j (unconditioned).

    At j = n this is exactly -log n (one down-jump at rate n); elsewhere
    1/q_down(j) + (q_up(j)/q_down(j)) * sum_{i=j+1}^{n} ratio(i-1, j)/q_down(i),
    which can exceed the float range, hence the log form.
    """
    p = table.params
    n = p.n
    if not (1 <= j <= n):
        raise ParameterError(f"down-crossing needs 1 <= j <= {n}, got {j}")
    if j == n:
        return -math.log(n)
    lp = table.log_prefix
    i = np.arange(j + 1, n + 1)
    terms = (lp[j] - lp[i - 1]) - np.log(i.astype(np.float64))
    tail = math.log(_q_up(p, j)) - math.log(j) + logsumexp(terms)
    return float(np.logaddexp(-math.log(j), tail))


def down_step_time(table: RatioTable, j: int) -> float:
    """Linear-scale expected j -> j-1 crossing time (inf if it overflows)."""
    if j == table.params.n:
        return 1.0 / table.params.n
    with np.errstate(over="ignore"):
        return float(np.exp(log_down_step_time(table, j)))


def down_step_time_conditioned(table: RatioTable, j: int) -> float:
    """Expected time for the DOWN-conditioned chain to first reach j-1 from j.

    Same structure as the unconditioned crossing but with h-transformed
    rates; the conditioned ratio products telescope into plain products
    times h_down boundary factors, so everything stays a prefix difference.
    """
    K = _require_window(table)
    if not (1 <= j < K):
        raise ParameterError(f"conditioned down-crossing needs 1 <= j < {K}, got {j}")
    p = table.params
    lp, lhd = table.log_prefix, table.log_h_down

    def log_q_down_cond(i):
        return np.log(i) + (lhd[i - 1] - lhd[i])

    log_qd_j = float(log_q_down_cond(np.asarray(j, dtype=np.float64)))
    if j == K - 1:
        return math.exp(-log_qd_j)
    # log of the conditioned prefix: plain prefix + telescoped h_down factors
    k = np.arange(0, K - 1)
    lp0 = lp[k] + (lhd[0] + lhd[1]) - lhd[k] - lhd[k + 1]
    i = np.arange(j + 1, K)
    terms = (lp0[j] - lp0[i - 1]) - log_q_down_cond(i)
    log_qu_j = math.log(_q_up(p, j)) + (lhd[j + 1] - lhd[j])
    tail = log_qu_j - log_qd_j + logsumexp(terms)
    return float(math.exp(np.logaddexp(-log_qd_j, tail)))


def log_escape_prob(table: RatioTable) -> float:
    """log P(hit 0 before returning to K | start at K): first-jump split.

    Equals log of q_down(K)/q(K) * h_down(K-1); strictly negative.
    """
    K = _require_window(table, min_eq=1)
    p = table.params
    qu, qd = float(_q_up(p, K)), float(K)
    return math.log(qd) - math.log(qu + qd) + float(table.log_h_down[K - 1])


def mean_excursion_length(table: RatioTable) -> float:
    """Expected length of an excursion from K back to K, given return.

    First-jump decomposition: (1 + q_down(K) * S_up_cond(K-1)
    + q_up(K) * S_down(K+1)) / q(K).
    """
    K = _require_window(table)
    p = table.params
    qu, qd = float(_q_up(p, K)), float(K)
    s_up = up_step_time_conditioned(table, K - 1)
    s_dn = down_step_time(table, K + 1)
    return (1.0 + qd * s_up + qu * s_dn) / (qu + qd)


def log_mean_sojourn(table: RatioTable) -> float:
    """log of the expected metastable sojourn: L * (1/p - 1) in log space."""
    lp = log_escape_prob(table)
    return math.log(mean_excursion_length(table)) + (-lp + log1mexp(lp))


def log_mean_extinction_time(table: RatioTable, j: int) -> float:
    """log E[extinction time | start j]: telescoped sum of down-crossings."""
    if j == 0:
        return -np.inf
    if not (1 <= j <= table.params.n):
        raise ParameterError(f"state must lie in [0, {table.params.n}], got {j}")
    logs = np.array([log_down_step_time(table, i) for i in range(1, j + 1)])
    return logsumexp(logs)


def mean_extinction_time(table: RatioTable, j: int) -> float:
    """E[extinction time | start j]; 0 at j = 0, inf if beyond float range."""
    if j == 0:
        return 0.0
    with np.errstate(over="ignore"):
        return float(np.exp(log_mean_extinction_time(table, j)))


@dataclass(frozen=True)
class ExactSummary:
    """Bundle of exact results (log scale where magnitudes demand it)."""

    h_up: np.ndarray | None
    h_down: np.ndarray | None
    log_escape_prob: float | None
    log_mean_excursion: float | None
    log_mean_sojourn: float | None
    extinction_states: np.ndarray
    log_mean_extinction: np.ndarray


def summarize(table: RatioTable, extinction_states=()) -> ExactSummary:
    """Collect headline exact quantities; supercritical fields None if r <= 1.

    Mean extinction times are computed only for the requested states (each
    costs an O(n) log-sum per lower state).
    """
    K = table.params.eq_state
    h_up = h_down = None
    lpe = lme = lms = None
    if K is not None and K >= 1:
        h_up, h_down = hitting_probabilities(table)
        lpe = log_escape_prob(table)
        if K >= 2 and K < table.params.n:
            lme = math.log(mean_excursion_length(table))
            lms = log_mean_sojourn(table)
    states = np.asarray(sorted(set(int(s) for s in extinction_states)), dtype=np.int64)
    lmet = np.array([log_mean_extinction_time(table, int(s)) for s in states])
    return ExactSummary(
        h_up=h_up,
        h_down=h_down,
        log_escape_prob=lpe,
        log_mean_excursion=lme,
        log_mean_sojourn=lms,
        extinction_states=states,
        log_mean_extinction=lmet,
    )
