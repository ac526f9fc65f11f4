"""Episode simulation and exact oracles.

Runs delivery policies against i.i.d. sampled user streams until every
contract is met, computes the per-sequence offline optimum (the shortest
stream prefix admitting a feasible complete assignment), and hosts two
closed-form oracles for tiny instances: the exact expected consumption of
the optimal online policy, and an integral upper bound on the Random
baseline's expected consumption.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import integrate

from .instance import Instance
from .maxflow import build_expected_network
from .planner import FlowPlan
from .policies import DeliveryPolicy, delivery_values

_STREAM_CHUNK = 4096
DEFAULT_CAP_FACTOR = 1000
DP_STATE_LIMIT = 1_000_000


class CapExceededError(RuntimeError):
    """An episode hit its arrival cap before all contracts were met."""

    def __init__(self, cap: int, context: str = ""):
        suffix = f" ({context})" if context else ""
        super().__init__(f"arrival cap {cap} exhausted before completion{suffix}")
        self.cap = cap


class StateSpaceError(ValueError):
    """The exact-recursion oracle was asked for an infeasibly large instance."""


class UserStream:
    """Lazily materialized i.i.d. user-type sequence with a hard cap.

    Draws are taken in fixed-size chunks from the stream's own generator,
    so the realized sequence depends only on the seed, never on how many
    arrivals each consumer reads. Multiple consumers (policies and the
    offline optimum) may read the same stream by index.
    """

    def __init__(self, probs, rng: np.random.Generator, cap: int,
                 seed_label: str = ""):
        if cap < 1:
            raise ValueError(f"cap must be >= 1, got {cap}")
        cum = np.cumsum(np.asarray(probs, dtype=float))
        cum[-1] = 1.0
        self._cum = cum
        self._rng = rng
        self.cap = int(cap)
        self.num_types = len(cum)
        self.seed_label = seed_label
        self.types: list[int] = []

    def ensure(self, length: int):
        """Materialize at least ``min(length, cap)`` draws."""
        target = min(length, self.cap)
        while len(self.types) < target:
            k = min(_STREAM_CHUNK, self.cap - len(self.types))
            draws = np.searchsorted(self._cum, self._rng.random(k), side="right")
            self.types.extend(draws.tolist())

    def counts_between(self, lo: int, hi: int) -> np.ndarray:
        """Per-type arrival counts over positions [lo, hi)."""
        self.ensure(hi)
        return np.bincount(self.types[lo:hi], minlength=self.num_types)

    def prefix(self, length: int) -> list[int]:
        self.ensure(length)
        return self.types[:length]


def sample_sequence(probs, rng: np.random.Generator, cap: int,
                    seed_label: str = "") -> UserStream:
    """I.i.d. user-type stream; identical seed, identical stream."""
    return UserStream(probs, rng, cap, seed_label)


@dataclass
class EpisodeRecord:
    """Outcome of one simulated delivery run."""

    consumption: int
    type_counts: tuple[int, ...]
    pair_counts: tuple[int, ...] | None  # aligned with instance.edges
    passthrough: int
    seed: str


def default_cap(instance: Instance, plan: FlowPlan | None,
                cap_factor: int = DEFAULT_CAP_FACTOR) -> int:
    """Arrival cap guarding non-termination bugs; generous for honest runs."""
    if plan is not None:
        return cap_factor * max(1, plan.z_hat)
    return cap_factor * max(1, math.ceil(instance.total_demand / instance.p_min))


def run_episode(instance: Instance, policy: DeliveryPolicy, stream: UserStream,
                record_pairs: bool = True) -> EpisodeRecord:
    """Feed sampled users to the policy until every contract is met."""
    n = instance.n
    type_counts = [0] * n
    pair_counts = [0] * len(instance.edges) if record_pairs else None
    edge_lookup = [dict(zip(campaigns, eids)) for campaigns, eids in
                   zip(instance.campaigns_of_type, instance.edge_ids_of_type)]
    passthrough = 0
    cap = stream.cap
    types = stream.types
    t = 0

    if policy.multi:
        decide_multi = policy.decide_multi
        while policy.remaining > 0:
            if t >= cap:
                raise CapExceededError(cap, stream.seed_label)
            if t >= len(types):
                stream.ensure(t + _STREAM_CHUNK)
            j = types[t]
            t += 1
            type_counts[j] += 1
            delivered = decide_multi(j)
            if not delivered:
                passthrough += 1
            elif record_pairs:
                lookup = edge_lookup[j]
                for i in delivered:
                    pair_counts[lookup[i]] += 1
    else:
        decide = policy.decide
        while policy.remaining > 0:
            if t >= cap:
                raise CapExceededError(cap, stream.seed_label)
            if t >= len(types):
                stream.ensure(t + _STREAM_CHUNK)
            j = types[t]
            t += 1
            type_counts[j] += 1
            i = decide(j)
            if i is None:
                passthrough += 1
            elif record_pairs:
                pair_counts[edge_lookup[j][i]] += 1

    return EpisodeRecord(
        consumption=t,
        type_counts=tuple(type_counts),
        pair_counts=tuple(pair_counts) if record_pairs else None,
        passthrough=passthrough,
        seed=stream.seed_label,
    )


def offline_optimum(instance: Instance, stream: UserStream) -> int:
    """Shortest prefix of the stream that admits a full assignment.

    Grows per-type supplies with the arrival counts and re-maximizes the
    flow warm: doubling finds a feasible prefix length, then binary search
    between snapshots pins the first length whose max flow covers the
    demand. Equivalent to raising supplies one arrival at a time (the flow
    value is monotone in the prefix), just far cheaper.
    """
    total = instance.total_demand
    network = build_expected_network(instance, [0] * instance.n)

    lo, prev = 0, 0
    snap = network.snapshot()
    probe = total
    while True:
        stream.ensure(probe)
        probe_eff = min(probe, stream.cap)
        network.add_supply_counts(stream.counts_between(prev, probe_eff))
        if network.max_flow() >= total:
            hi = probe_eff
            break
        if probe_eff >= stream.cap:
            raise CapExceededError(stream.cap, stream.seed_label)
        lo = probe_eff
        prev = probe_eff
        snap = network.snapshot()
        probe *= 2

    while hi - lo > 1:
        mid = (lo + hi) // 2
        network.restore(snap)
        network.add_supply_counts(stream.counts_between(lo, mid))
        if network.max_flow() >= total:
            hi = mid
        else:
            lo = mid
            snap = network.snapshot()
    return hi


def dp_optimal_expected(instance: Instance, state_limit: int = DP_STATE_LIMIT) -> float:
    """Exact expected consumption of the optimal online policy.

    Evaluates, bottom-up over residual-demand vectors, the recursion
    "serve the arriving type with the campaign whose child state is
    cheapest". Arrivals of types with no serviceable campaign still cost a
    step but leave the state unchanged; that self-loop is folded in closed
    form, dividing by the arrival mass of the useful types.
    """
    demands = instance.demands
    dims = [w + 1 for w in demands]
    total_states = math.prod(dims)
    if total_states > state_limit:
        raise StateSpaceError(
            f"{total_states} residual-demand states exceed the limit {state_limit}"
        )
    m = instance.m
    strides = [0] * m
    acc = 1
    for i in range(m - 1, -1, -1):
        strides[i] = acc
        acc *= dims[i]

    probs = instance.probs
    campaigns_of_type = instance.campaigns_of_type
    expected = [0.0] * total_states
    state = [0] * m

    for idx in range(1, total_states):
        # Odometer step through the C-order state enumeration.
        for axis in range(m - 1, -1, -1):
            if state[axis] + 1 < dims[axis]:
                state[axis] += 1
                break
            state[axis] = 0
        useful_mass = 0.0
        cost = 0.0
        for j, campaigns in enumerate(campaigns_of_type):
            best = None
            for i in campaigns:
                if state[i] > 0:
                    child = expected[idx - strides[i]]
                    if best is None or child < best:
                        best = child
            if best is not None:
                useful_mass += probs[j]
                cost += probs[j] * best
        expected[idx] = (1.0 + cost) / useful_mass
    return expected[total_states - 1]


def random_upper_bound(instance: Instance) -> float:
    """Upper bound on the Random baseline's expected consumption.

    Freezes each outstanding exposure's per-arrival service chance at its
    initial value, which reduces the run to a non-uniform coupon collection
    whose expected length is an explicit integral; evaluated in log space
    so large demands do not underflow.
    """
    rates = np.array(delivery_values(instance))
    demands = np.array(instance.demands, dtype=float)

    def survival(t: float) -> float:
        if t <= 0.0:
            return 1.0
        with np.errstate(divide="ignore"):
            log_terms = demands * np.log1p(-np.exp(-t * rates))
        total = log_terms.sum()
        if total == -np.inf:
            return 1.0
        return -math.expm1(total)

    # Truncate where the integrand is negligible (union bound on the tail).
    upper = max(
        (math.log(w) + 28.0) / r for w, r in zip(demands, rates)
    )
    while survival(upper) > 1e-12:
        upper *= 2.0
    value, _ = integrate.quad(survival, 0.0, upper, epsabs=1e-10, epsrel=1e-6, limit=200)
    return value


@dataclass
class WaldTypeRow:
    type_idx: int
    mean_count: float
    expected_count: float
    deviation: float
    z_score: float


@dataclass
class WaldReport:
    rows: list[WaldTypeRow]

    @property
    def max_abs_z(self) -> float:
        return max(abs(r.z_score) for r in self.rows)


def wald_check(records: list[EpisodeRecord], probs) -> WaldReport:
    """Stopping-identity diagnostic: each type's mean arrival count should
    match its probability times the mean consumption, for any stopping
    policy. Reports the per-type deviation and its studentized z-score.
    """
    if len(records) < 100:
        raise ValueError(f"need at least 100 episodes, got {len(records)}")
    counts = np.array([r.type_counts for r in records], dtype=float)
    consumption = np.array([r.consumption for r in records], dtype=float)
    probs = np.asarray(probs, dtype=float)
    num = len(records)

    rows = []
    for j, p in enumerate(probs):
        diffs = counts[:, j] - p * consumption
        mean = diffs.mean()
        std = diffs.std(ddof=1)
        if std == 0.0:
            z = 0.0 if mean == 0.0 else math.inf
        else:
            z = mean / (std / math.sqrt(num))
        rows.append(WaldTypeRow(
            type_idx=j,
            mean_count=counts[:, j].mean(),
            expected_count=p * consumption.mean(),
            deviation=mean,
            z_score=z,
        ))
    return WaldReport(rows=rows)
