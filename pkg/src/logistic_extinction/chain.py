"""Logistic birth-death chain: parameters, transition rates, phase classification.

The model is a continuous-time Markov chain on {0, ..., n} that steps up at
rate r*X*(1 - X/n) and down at rate X; 0 is absorbing.  Its linearization
(the binary branching process) steps up at rate r*Z and down at rate Z.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

__all__ = [
    "ParameterError",
    "ModelParams",
    "Regime",
    "Phase",
    "RateKind",
    "RateSpec",
    "make_params",
    "logistic_spec",
    "branching_spec",
    "pure_death_spec",
    "rates",
    "classify_phase",
]

#: |1 - r| below this is treated as exactly critical (gamma = 0); downstream
#: formulas with a 0/0 limit at r = 1 switch to their limiting forms.
CRITICAL_EXACT_TOL = 1e-12

#: Branching-process simulations run on an unbounded state space in principle;
#: this cap bounds runaway supercritical growth (a run reaching it is censored).
BRANCHING_STATE_CAP = 2**40


class ParameterError(ValueError):
    """Invalid model parameters or state."""


@dataclass(frozen=True)
class ModelParams:
    """One (n, r) instance of the logistic chain with derived quantities.

    Attributes
    ----------
    n : carrying capacity (state space is {0, ..., n}).
    r : reproductive rate.
    delta : r - 1.
    gamma : 1 - r.
    criticality : sqrt(n) * (r - 1); the scaled distance to the phase boundary.
    x_eq : 1 - 1/r, the stable equilibrium density of x' = r*x*(1-x) - x
        (None unless r > 1).
    eq_state : floor(n * x_eq), the metastable state (None unless r > 1).
    barrier : log r + 1/r - 1, the potential barrier height controlling the
        exponential lifetime of the metastable phase (None unless r > 1).
    critical_exact : True when |1 - r| < 1e-12.
    """

    n: int
    r: float
    delta: float
    gamma: float
    criticality: float
    x_eq: float | None
    eq_state: int | None
    barrier: float | None
    critical_exact: bool


def make_params(n: int, r: float) -> ModelParams:
    """Build an immutable parameter bundle; rejects n < 1 and bad r."""
    if not isinstance(n, (int, np.integer)) or isinstance(n, bool):
        raise ParameterError(f"n must be an integer, got {n!r}")
    if n < 1:
        raise ParameterError(f"n must be >= 1, got {n}")
    r = float(r)
    if not math.isfinite(r) or r < 0.0:
        raise ParameterError(f"r must be finite and >= 0, got {r}")
    n = int(n)
    delta = r - 1.0
    gamma = 1.0 - r
    crit = math.sqrt(n) * delta
    if r > 1.0:
        x_eq = 1.0 - 1.0 / r
        eq_state = int(math.floor(n * x_eq))
        barrier = math.log(r) + 1.0 / r - 1.0
    else:
        x_eq = eq_state = barrier = None
    return ModelParams(
        n=n,
        r=r,
        delta=delta,
        gamma=gamma,
        criticality=crit,
        x_eq=x_eq,
        eq_state=eq_state,
        barrier=barrier,
        critical_exact=abs(gamma) < CRITICAL_EXACT_TOL,
    )


class Regime(str, enum.Enum):
    SUBCRITICAL = "subcritical"
    CRITICAL = "critical"
    SUPERCRITICAL = "supercritical"


@dataclass(frozen=True)
class Phase:
    regime: Regime
    criticality: float


def classify_phase(params: ModelParams, cutoff: float = 3.0) -> Phase:
    """Classify by criticality against a cutoff (default 3.0).

    The phases are asymptotic statements about sequences; for a single
    instance we call it supercritical when sqrt(n)*(r-1) >= cutoff,
    subcritical when <= -cutoff, and critical in between.
    """
    if not (cutoff > 0.0):
        raise ParameterError(f"cutoff must be > 0, got {cutoff}")
    c = params.criticality
    if c >= cutoff:
        regime = Regime.SUPERCRITICAL
    elif c <= -cutoff:
        regime = Regime.SUBCRITICAL
    else:
        regime = Regime.CRITICAL
    return Phase(regime=regime, criticality=c)


class RateKind(enum.Enum):
    LOGISTIC = "logistic"
    BRANCHING = "branching"
    CONDITIONED_UP = "conditioned-up"
    CONDITIONED_DOWN = "conditioned-down"
    PURE_DEATH = "pure-death"


@dataclass(frozen=True)
class RateSpec:
    """A birth-death rate specification consumable by the simulator.

    For LOGISTIC / BRANCHING / PURE_DEATH the rates are analytic in the
    state; conditioned kinds carry explicit per-state rate tables built by
    the exact solver (their rates involve ratios of hitting probabilities).
    `state_space_max` is n for the logistic chain, the metastable state for
    conditioned chains, and a large cap for the branching process.
    """

    kind: RateKind
    n: int
    r: float
    state_space_max: int
    up_table: np.ndarray | None = None
    down_table: np.ndarray | None = None


def logistic_spec(params: ModelParams) -> RateSpec:
    return RateSpec(RateKind.LOGISTIC, params.n, params.r, params.n)


def branching_spec(r: float, state_cap: int = BRANCHING_STATE_CAP) -> RateSpec:
    r = float(r)
    if not math.isfinite(r) or r < 0.0:
        raise ParameterError(f"r must be finite and >= 0, got {r}")
    return RateSpec(RateKind.BRANCHING, 0, r, int(state_cap))


def pure_death_spec(n: int) -> RateSpec:
    return RateSpec(RateKind.PURE_DEATH, int(n), 0.0, int(n))


def rates(spec: RateSpec, j: int) -> tuple[float, float]:
    """(up, down) rates at state j; state 0 is absorbing in every kind."""
    j = int(j)
    if j < 0 or j > spec.state_space_max:
        raise ParameterError(
            f"state {j} outside [0, {spec.state_space_max}] for kind {spec.kind.value}"
        )
    if j == 0:
        return (0.0, 0.0)
    if spec.kind is RateKind.LOGISTIC:
        return (spec.r * j * (1.0 - j / spec.n), float(j))
    if spec.kind is RateKind.BRANCHING:
        return (spec.r * j, float(j))
    if spec.kind is RateKind.PURE_DEATH:
        return (0.0, float(j))
    # conditioned kinds: tabulated
    return (float(spec.up_table[j]), float(spec.down_table[j]))
