"""Exact continuous-time simulation of the chains, with reproducible batches.

Randomness contract: replicate i of a batch keyed by `master_seed` draws
from the counter-based Philox stream with key
(master_seed << 64) + (lane << 48) + i.  Lanes separate logically distinct
batches sharing one master seed (e.g. the chain and its reference
diffusion).  Batch results are therefore a pure function of
(master_seed, lane, replicates) no matter how the work is chunked across
threads.
"""

from __future__ import annotations

import enum
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from . import _kernels as _k
from .chain import ModelParams, ParameterError, RateKind, RateSpec, logistic_spec
from .exact import Conditioning, ConditioningError, RatioTable, build_ratio_table, conditioned_spec

__all__ = [
    "DEFAULT_T_CAP",
    "Terminal",
    "SamplePath",
    "SampleMeta",
    "ExtinctionSamples",
    "stream",
    "simulate_path",
    "sample_extinction",
    "sample_conditioned",
    "simulate_coupled",
]

#: Default censoring horizon.  Supercritical metastable runs live for
#: exp(n * barrier) time units; capping keeps batches finite while the
#: censored count is reported, never silently dropped.
DEFAULT_T_CAP = 1e6

_KIND_CODE = {
    RateKind.LOGISTIC: _k.KIND_LOGISTIC,
    RateKind.BRANCHING: _k.KIND_BRANCHING,
    RateKind.PURE_DEATH: _k.KIND_PURE_DEATH,
}


class Terminal(enum.Enum):
    ABSORBED_ZERO = "absorbed-zero"
    ABSORBED_TARGET = "absorbed-target"
    CENSORED = "censored"


_TERM_FROM_CODE = {
    _k.TERM_ZERO: Terminal.ABSORBED_ZERO,
    _k.TERM_TARGET: Terminal.ABSORBED_TARGET,
    _k.TERM_CENSORED: Terminal.CENSORED,
}


def stream(master_seed: int, index: int = 0, lane: int = 0) -> np.random.Generator:
    """Counter-based Philox stream for one replicate of one batch."""
    if not (0 <= index < 1 << 48):
        raise ParameterError(f"replicate index out of range: {index}")
    if not (0 <= lane < 1 << 16):
        raise ParameterError(f"lane out of range: {lane}")
    key = (int(master_seed) << 64) + (lane << 48) + index
    return np.random.Generator(np.random.Philox(key=key))


@dataclass(frozen=True)
class SamplePath:
    """One trajectory: event times and the state after each event.

    `states` has one more entry than `times` (the initial state first).
    """

    times: np.ndarray
    states: np.ndarray
    terminal: Terminal
    t_cap: float

    @property
    def final_time(self) -> float:
        return float(self.times[-1]) if self.times.size else 0.0

    @property
    def final_state(self) -> int:
        return int(self.states[-1])


@dataclass(frozen=True)
class SampleMeta:
    kind: str
    n: int
    r: float
    x0: int
    conditioning: str
    seed: int
    replicates: int
    censored_count: int
    t_cap: float


@dataclass(frozen=True)
class ExtinctionSamples:
    """Batch of stopping times (censored runs excluded but counted).

    `end_states` records where each retained run stopped, aligned with
    `values`; useful when a stop set distinguishes outcomes.
    """

    values: np.ndarray
    end_states: np.ndarray
    meta: SampleMeta

    @property
    def censored_count(self) -> int:
        return self.meta.censored_count


def _validate_x0(spec: RateSpec, x0: int) -> int:
    x0 = int(x0)
    if x0 < 0 or x0 > spec.state_space_max:
        raise ParameterError(f"x0={x0} outside [0, {spec.state_space_max}]")
    return x0


def _stop_repr(spec: RateSpec, stop_states) -> tuple[int, np.ndarray | None]:
    stops = sorted({int(s) for s in stop_states} - {0})
    if spec.kind is RateKind.BRANCHING:
        if len(stops) > 1:
            raise ParameterError("branching runs support at most one upper stop state")
        upper = stops[0] if stops else spec.state_space_max
        return upper, None
    if not stops:
        return -1, None
    mask = np.zeros(spec.state_space_max + 1, dtype=np.uint8)
    for s in stops:
        if s > spec.state_space_max:
            raise ParameterError(f"stop state {s} outside the state space")
        mask[s] = 1
    return -1, mask


def _tables(spec: RateSpec) -> tuple[np.ndarray, np.ndarray]:
    if spec.up_table is not None:
        return spec.up_table, spec.down_table
    j = np.arange(spec.state_space_max + 1, dtype=np.float64)
    if spec.kind is RateKind.LOGISTIC:
        up = spec.r * j * (1.0 - j / spec.n)
    elif spec.kind is RateKind.PURE_DEATH:
        up = np.zeros_like(j)
    else:  # pragma: no cover - branching never routes through tables
        raise ParameterError("no rate table for the branching chain")
    return up, j.copy()


def simulate_path(
    spec: RateSpec,
    x0: int,
    rng_seed: int,
    t_cap: float = DEFAULT_T_CAP,
    stop_states=(),
) -> SamplePath:
    """One exact event-driven trajectory, recorded event by event.

    Stops at absorption, at any state of `stop_states`, or at t_cap
    (censored).  Identical (spec, x0, seed) inputs give bitwise-identical
    paths.
    """
    x0 = _validate_x0(spec, x0)
    if not (t_cap > 0):
        raise ParameterError(f"t_cap must be > 0, got {t_cap}")
    gen = stream(rng_seed)
    upper, mask = _stop_repr(spec, stop_states)
    if spec.kind in _KIND_CODE and mask is None:
        times, states, t_end, j_end, code = _k.path_analytic(
            gen, _KIND_CODE[spec.kind], float(spec.n), spec.r, x0, t_cap, upper
        )
    else:
        up, down = _tables(spec)
        if mask is None:
            mask = np.zeros(spec.state_space_max + 1, dtype=np.uint8)
        times, states, t_end, j_end, code = _k.path_table(gen, up, down, x0, t_cap, mask)
    full_states = np.concatenate(([x0], states)).astype(np.int64)
    term = _TERM_FROM_CODE[code]
    if spec.kind is RateKind.BRANCHING and term is Terminal.ABSORBED_TARGET:
        term = Terminal.CENSORED  # ran into the state cap
    return SamplePath(times=times, states=full_states, terminal=term, t_cap=t_cap)


def _batch(
    spec: RateSpec,
    x0: int,
    replicates: int,
    master_seed: int,
    t_cap: float,
    stop_states,
    threads: int | None,
    lane: int,
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """(times, end_states, codes) for all replicates, by replicate index."""
    upper, mask = _stop_repr(spec, stop_states)
    use_analytic = spec.kind in _KIND_CODE and mask is None
    if not use_analytic:
        up, down = _tables(spec)
        if mask is None:
            mask = np.zeros(spec.state_space_max + 1, dtype=np.uint8)
    taus = np.empty(replicates)
    ends = np.empty(replicates, dtype=np.int64)
    codes = np.empty(replicates, dtype=np.int64)

    def worker(lo: int, hi: int) -> None:
        for i in range(lo, hi):
            gen = stream(master_seed, i, lane)
            if use_analytic:
                t, j, code, _ = _k.tau_analytic(
                    gen, _KIND_CODE[spec.kind], float(spec.n), spec.r, x0, t_cap, upper
                )
            else:
                t, j, code, _ = _k.tau_table(gen, up, down, x0, t_cap, mask)
            taus[i] = t
            ends[i] = j
            codes[i] = code

    nthreads = threads if threads else (os.cpu_count() or 1)
    nthreads = max(1, min(nthreads, replicates))
    if nthreads == 1:
        worker(0, replicates)
    else:
        bounds = np.linspace(0, replicates, nthreads + 1).astype(int)
        with ThreadPoolExecutor(max_workers=nthreads) as pool:
            futs = [pool.submit(worker, bounds[t], bounds[t + 1]) for t in range(nthreads)]
            for f in futs:
                f.result()
    if spec.kind is RateKind.BRANCHING:
        codes[codes == _k.TERM_TARGET] = _k.TERM_CENSORED  # state cap reached
    return taus, ends, codes


def sample_extinction(
    spec: RateSpec,
    x0: int,
    replicates: int,
    master_seed: int,
    t_cap: float = DEFAULT_T_CAP,
    stop_states=(),
    threads: int | None = None,
    lane: int = 0,
) -> ExtinctionSamples:
    """Batch of stopping times with per-replicate streams.

    The returned multiset is a pure function of (master_seed, lane,
    replicates); thread count and chunking never change it.
    """
    x0 = _validate_x0(spec, x0)
    if replicates < 1:
        raise ParameterError(f"replicates must be >= 1, got {replicates}")
    taus, ends, codes = _batch(spec, x0, replicates, master_seed, t_cap, stop_states, threads, lane)
    keep = codes != _k.TERM_CENSORED
    meta = SampleMeta(
        kind=spec.kind.value,
        n=spec.n,
        r=spec.r,
        x0=x0,
        conditioning="none",
        seed=int(master_seed),
        replicates=replicates,
        censored_count=int(np.sum(~keep)),
        t_cap=t_cap,
    )
    return ExtinctionSamples(values=taus[keep], end_states=ends[keep], meta=meta)


def sample_conditioned(
    params: ModelParams,
    x0: int,
    target: Conditioning,
    replicates: int,
    master_seed: int,
    threads: int | None = None,
    table: RatioTable | None = None,
    t_cap: float = DEFAULT_T_CAP,
    lane: int = 0,
) -> ExtinctionSamples:
    """Hitting times under the conditioned (h-transform) dynamics.

    DOWN targets extinction: every retained run ends at 0 and its time is
    the extinction time conditional on dying before the metastable state.
    UP targets the metastable state; times are the conditional approach
    times.  Conditioning on a null event (x0 outside the open window)
    raises.
    """
    if table is None:
        table = build_ratio_table(params)
    K = params.eq_state
    if K is None or K < 2:
        raise ConditioningError("conditioned sampling needs an interior window (r > 1, K >= 2)")
    if not (0 < x0 < K):
        raise ConditioningError(f"conditioned start must satisfy 0 < x0 < {K}, got {x0}")
    spec = conditioned_spec(table, target)
    samples = sample_extinction(
        spec, x0, replicates, master_seed, t_cap=t_cap, threads=threads, lane=lane
    )
    want = 0 if target is Conditioning.DOWN else K
    if samples.values.size and not np.all(samples.end_states == want):
        raise AssertionError("conditioned run stopped off-target; rate tables inconsistent")
    meta = SampleMeta(
        kind=samples.meta.kind,
        n=params.n,
        r=params.r,
        x0=int(x0),
        conditioning=target.value,
        seed=int(master_seed),
        replicates=replicates,
        censored_count=samples.meta.censored_count,
        t_cap=t_cap,
    )
    return ExtinctionSamples(values=samples.values, end_states=samples.end_states, meta=meta)


def simulate_coupled(
    params: ModelParams,
    initial_states,
    rng_seed: int,
    t_cap: float = DEFAULT_T_CAP,
) -> list[SamplePath]:
    """Jointly coupled trajectories from ordered initial states.

    The coupling preserves the initial ordering at every event and merged
    trajectories never separate; both properties are exact, not
    statistical.
    """
    init = [int(s) for s in initial_states]
    if any(b < a for a, b in zip(init, init[1:])):
        raise ParameterError("initial states must be sorted ascending")
    if len(init) > 64:
        raise ParameterError("at most 64 coupled trajectories")
    if any(s < 0 or s > params.n for s in init):
        raise ParameterError(f"initial states must lie in [0, {params.n}]")
    gen = stream(rng_seed)
    ev_t, ev_mask, ev_state, finals, code = _k.coupled_events(
        gen, float(params.n), params.r, np.asarray(init, dtype=np.int64), t_cap
    )
    paths = []
    for i in range(len(init)):
        bit = np.uint64(1) << np.uint64(i)
        mine = (ev_mask & bit) != 0
        times = ev_t[mine]
        states = np.concatenate(([init[i]], ev_state[mine]))
        if code == _k.TERM_CENSORED:
            term = Terminal.CENSORED if finals[i] != 0 else Terminal.ABSORBED_ZERO
        else:
            term = Terminal.ABSORBED_ZERO
        paths.append(SamplePath(times=times, states=states, terminal=term, t_cap=t_cap))
    return paths
