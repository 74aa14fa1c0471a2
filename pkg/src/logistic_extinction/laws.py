"""Closed-form rescaled limit laws and the case dispatcher.

Each law is a CDF together with the (scale, shift) pair that rescales the
raw extinction time onto the law's axis: P((tau - shift)/scale <= w) is
approximated by cdf(w).  `predict_law` selects the applicable case for a
finite (params, x0) instance using documented, overridable finite-n
proxies for the asymptotic conditions.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from typing import Callable

import numpy as np

from .chain import ModelParams, ParameterError, Regime, classify_phase
from . import exact as _exact

__all__ = [
    "Support",
    "LimitLaw",
    "DispatchPolicy",
    "branching_extinction_cdf",
    "feller_hit_cdf",
    "gumbel_cdf",
    "subcritical_shift",
    "rapid_extinction_cdf",
    "log_metastable_lifetime",
    "predict_law",
]


class Support(Enum):
    NONNEGATIVE = "nonnegative"
    REAL = "real"


@dataclass(frozen=True)
class LimitLaw:
    """A rescaled limit: P((tau - shift)/scale <= w) ~ cdf(w).

    `log_scale` is authoritative; `scale` overflows to inf when the scale
    is the metastable lifetime at large n*barrier.  `case_tag` names the
    dispatched case (e.g. "Thm2-critical-a", "Thm3", "Thm5-2").
    """

    log_scale: float
    shift: float
    cdf: Callable[[np.ndarray | float], np.ndarray | float]
    case_tag: str
    support: Support

    @property
    def scale(self) -> float:
        with np.errstate(over="ignore"):
            return float(np.exp(self.log_scale))


@dataclass(frozen=True)
class DispatchPolicy:
    """Finite-n proxies for the asymptotic case conditions (all overridable).

    phase_cutoff: |criticality| at which an instance leaves the critical window.
    gamma_x0_large: |1-r|*x0 at which "bounded" flips to "diverging".
    delta_small: below this, r-1 is treated as vanishing (near-critical forms).
    x0_constant_max: initial values below this count as "constant in n".
    y_small / y_large: x0/sqrt(n) brackets for the critical diffusion case.
    mixture_min_weight: drop the metastable mixture component below this mass.
    diffusion_*: sampling controls for the numeric critical-case CDF.
    """

    phase_cutoff: float = 3.0
    gamma_x0_large: float = 5.0
    delta_small: float = 0.1
    x0_constant_max: int = 10
    y_small: float = 0.2
    y_large: float = 10.0
    y_start_proxy: float = 100.0
    mixture_min_weight: float = 0.05
    thm2_1c_margin: float = 0.1
    diffusion_replicates: int = 10_000
    diffusion_dt: float = 1e-4
    diffusion_t_cap: float = 1e3
    diffusion_seed: int = 906


DEFAULT_POLICY = DispatchPolicy()


def branching_extinction_cdf(r: float, z0: int, t) -> np.ndarray | float:
    """P(extinction by time t) for the branching chain (up r*Z, down Z).

    With g = 1 - r, the single-line probability is
    rho_t = 1 / (1 + g/(exp(g*t) - 1)), and lines die independently, so the
    result is rho_t**z0.  The g = 0 limit is t/(1+t).  Stable for tiny |g*t|
    via expm1; for r > 1 the law is defective with total mass r**-z0.
    """
    if z0 < 1:
        raise ParameterError(f"z0 must be >= 1, got {z0}")
    t = np.asarray(t, dtype=np.float64)
    if np.any(t < 0):
        raise ParameterError("time must be >= 0")
    g = 1.0 - float(r)
    with np.errstate(divide="ignore", over="ignore", invalid="ignore"):
        if abs(g) < 1e-12:
            rho = t / (1.0 + t)
        else:
            rho = 1.0 / (1.0 + g / np.expm1(g * t))
        out = np.where(t > 0.0, np.exp(z0 * np.log(np.maximum(rho, 1e-320))), 0.0)
    return out if out.ndim else float(out)


def feller_hit_cdf(a: float, w) -> np.ndarray | float:
    """CDF of the zero-hitting time of dY = -a*Y dt + sqrt(2Y) dB, Y0 = 1.

    exp(-1/w) when a = 0, exp(-a/(exp(a*w) - 1)) when a > 0; continuous in
    a at 0 (expm1 keeps tiny a*w accurate).
    """
    if a < 0:
        raise ParameterError(f"a must be >= 0, got {a}")
    w = np.asarray(w, dtype=np.float64)
    wp = np.maximum(w, 1e-320)
    with np.errstate(divide="ignore", over="ignore"):
        if a == 0.0:
            expo = -1.0 / wp
        else:
            expo = -a / np.expm1(a * wp)
        out = np.where(w > 0.0, np.exp(expo), 0.0)
    return out if out.ndim else float(out)


def gumbel_cdf(w) -> np.ndarray | float:
    """Standard Gumbel CDF exp(-exp(-w))."""
    w = np.asarray(w, dtype=np.float64)
    out = np.exp(-np.exp(-w))
    return out if out.ndim else float(out)


def subcritical_shift(params: ModelParams, x0: int) -> float:
    """Centering for the subcritical Gumbel law, with the finite-n r.

    g(x0) = log(gamma^2 n) - log(r + gamma*n/x0); it interpolates between
    log(gamma*x0) for x0 << gamma*n and a saturated constant for larger x0.
    """
    if params.gamma <= 0.0:
        raise ParameterError("subcritical shift requires r < 1")
    if x0 < 1:
        raise ParameterError(f"x0 must be >= 1, got {x0}")
    g, n, r = params.gamma, params.n, params.r
    return math.log(g * g * n) - math.log(r + g * n / x0)


def rapid_extinction_cdf(
    params: ModelParams,
    x0: int,
    t,
    policy: DispatchPolicy = DEFAULT_POLICY,
    branch: str | None = None,
) -> np.ndarray | float:
    """Conditional CDF of the extinction time given the chain dies before
    reaching the metastable state (supercritical, delta > 0).

    Small delta (< policy.delta_small): the conditioned chain behaves like
    the near-critical branching chain, so tau/x0 follows the a = delta*x0
    member of the feller_hit_cdf family.  Order-one delta: the conditioned
    chain is the branching chain with parameter 1/r run at speed r, i.e.
    branching_extinction_cdf(1/r, x0, r*t).  `branch` forces "a"/"b".
    """
    if params.delta <= 0.0:
        raise ParameterError("rapid extinction law requires r > 1")
    if branch is None:
        branch = "a" if params.delta < policy.delta_small else "b"
    t = np.asarray(t, dtype=np.float64)
    if branch == "a":
        out = feller_hit_cdf(params.delta * x0, t / x0)
    elif branch == "b":
        # the chain conditioned to die is the r -> 1/r dual run at speed r,
        # whose extinction law is already proper
        out = branching_extinction_cdf(1.0 / params.r, x0, params.r * t)
    else:
        raise ParameterError(f"branch must be 'a' or 'b', got {branch!r}")
    return out if np.ndim(out) else float(out)


def log_metastable_lifetime(params: ModelParams) -> float:
    """log of the asymptotic mean extinction time from the equilibrium state:

    E ~ sqrt(2*pi/n) * (r/delta^2) * exp(n * barrier).
    """
    if params.r <= 1.0:
        raise ParameterError("metastable lifetime requires r > 1")
    n, r, d = params.n, params.r, params.delta
    return 0.5 * math.log(2.0 * math.pi / n) + math.log(r) - 2.0 * math.log(d) + n * params.barrier


def _h_weights(params: ModelParams, x0: int, policy, table) -> tuple[float, float]:
    # exact hitting split when a table is available, Lemma-style limits otherwise
    if table is not None and params.eq_state is not None and params.eq_state >= 1:
        if x0 <= params.eq_state:
            lhd = float(table.log_h_down[x0])
            h_down = math.exp(lhd)
            return h_down, -math.expm1(lhd)
        return 0.0, 1.0
    if params.delta < policy.delta_small:
        h_down = math.exp(-params.delta * x0)
    else:
        h_down = math.exp(-x0 * math.log1p(params.delta))
    return h_down, 1.0 - h_down


def _supercritical_law(params, x0, policy, table) -> LimitLaw:
    h_down, h_up = _h_weights(params, x0, policy, table)
    a = params.delta * x0
    rapid_branch = "a" if params.delta < policy.delta_small else "b"

    if h_up < policy.mixture_min_weight:
        # vanishing metastable mass: pure rapid-extinction law
        if x0 < policy.x0_constant_max:
            cdf = lambda t: branching_extinction_cdf(1.0, x0, t)
            return LimitLaw(0.0, 0.0, cdf, "Thm2-super-a", Support.NONNEGATIVE)
        cdf = lambda w: feller_hit_cdf(0.0, w)
        return LimitLaw(math.log(x0), 0.0, cdf, "Thm2-super-b", Support.NONNEGATIVE)

    if table is not None and params.eq_state is not None and params.eq_state >= 2:
        log_e = _exact.log_mean_sojourn(table)
    else:
        log_e = log_metastable_lifetime(params)
    # time scale = metastable lifetime; the rapid component saturates at any
    # fixed w > 0 whenever the lifetime dwarfs x0, and is exact at desk scale
    scale_cap = math.exp(min(log_e, 600.0))

    def cdf(w):
        w = np.asarray(w, dtype=np.float64)
        rapid = rapid_extinction_cdf(params, x0, np.maximum(w, 0.0) * scale_cap, policy, rapid_branch)
        sojourn = -np.expm1(-np.maximum(w, 0.0))
        out = h_down * np.asarray(rapid) + h_up * sojourn
        return out if w.ndim else float(out)

    tag = "Thm5-2" if a >= policy.gamma_x0_large else f"Thm5-1{rapid_branch}"
    return LimitLaw(log_e, 0.0, cdf, tag, Support.NONNEGATIVE)


def _critical_law(params, x0, policy) -> LimitLaw:
    n = params.n
    y = x0 / math.sqrt(n)
    if x0 < policy.x0_constant_max:
        cdf = lambda t: branching_extinction_cdf(params.r, x0, t)
        return LimitLaw(0.0, 0.0, cdf, "Thm2-critical-a", Support.NONNEGATIVE)
    if y < policy.y_small:
        cdf = lambda w: feller_hit_cdf(0.0, w)
        return LimitLaw(math.log(x0), 0.0, cdf, "Thm2-critical-b", Support.NONNEGATIVE)
    # diffusion case: numeric CDF sampled lazily from the limiting SDE
    from . import diffusion as _diff

    c = params.criticality
    y0 = math.inf if y > policy.y_large else y
    cache: list = []

    def cdf(w):
        if not cache:
            spec = _diff.critical_spec(
                c, y0, dt=policy.diffusion_dt, t_cap=policy.diffusion_t_cap
            )
            if math.isinf(y0):
                spec = _diff.infinite_entrance_start(spec, policy.y_start_proxy)
            cache.append(
                _diff.hitting_cdf_numeric(spec, policy.diffusion_replicates, policy.diffusion_seed)
            )
        return cache[0](w)

    return LimitLaw(0.5 * math.log(n), 0.0, cdf, "Thm4", Support.NONNEGATIVE)


def _subcritical_law(params, x0, policy) -> LimitLaw:
    g = params.gamma
    a = g * x0
    if a < policy.gamma_x0_large:
        if x0 < policy.x0_constant_max:
            sub = "a" if g < policy.delta_small else "b"
            cdf = lambda t: branching_extinction_cdf(params.r, x0, t)
            return LimitLaw(0.0, 0.0, cdf, f"Thm2-sub-1{sub}", Support.NONNEGATIVE)
        cdf = lambda w: feller_hit_cdf(a, w)
        return LimitLaw(math.log(x0), 0.0, cdf, "Thm2-sub-2a", Support.NONNEGATIVE)
    shift = subcritical_shift(params, x0) / g
    tag = "Thm3"
    if x0 * math.log(a) < policy.thm2_1c_margin * g * params.n:
        tag = "Thm3+1c"
    return LimitLaw(-math.log(g), shift, gumbel_cdf, tag, Support.REAL)


def predict_law(
    params: ModelParams,
    x0: int,
    policy: DispatchPolicy = DEFAULT_POLICY,
    table: "_exact.RatioTable | None" = None,
) -> LimitLaw:
    """Select the applicable rescaled limit for a finite (params, x0) instance.

    Supercritical instances get the unconditional mixture: with weight
    h_down the rapid-extinction law and with weight h_up the unit
    exponential on the metastable-lifetime scale (exact weights and scale
    when a ratio table is supplied, asymptotic ones otherwise).
    """
    if not (1 <= x0 <= max(params.n, 1)):
        raise ParameterError(f"x0 must lie in [1, {params.n}], got {x0}")
    phase = classify_phase(params, cutoff=policy.phase_cutoff)
    if phase.regime is Regime.SUPERCRITICAL:
        return _supercritical_law(params, x0, policy, table)
    if phase.regime is Regime.CRITICAL:
        return _critical_law(params, x0, policy)
    return _subcritical_law(params, x0, policy)
