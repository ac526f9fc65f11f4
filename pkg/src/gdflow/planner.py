"""Offline planning: minimal delivery budgets, capacity plans, flow bounds.

The planner answers two questions about an instance. First, the smallest
integer traffic budget whose expected network (per-type supplies rounded
up to integers) routes the full demand; the max-flow at that budget yields
the per-edge capacity plan that drives the online delivery rules. Second,
the real-valued threshold ``z_flow``: the least expected traffic under
which full delivery is feasible at all, which lower-bounds the expected
consumption of any delivery scheme and serves as the reporting baseline.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from fractions import Fraction

from .instance import Instance
from .maxflow import build_expected_network

DEFAULT_Z_FLOW_REL_TOL = 1e-6
SUBSET_ENUM_MAX_CAMPAIGNS = 20
_MIN_SCALE_BITS = 20


class TooManyCampaignsError(ValueError):
    """Subset enumeration requested beyond its exponential-size guard."""


@dataclass
class CapacityPlan:
    """Planned deliveries per targeting edge, non-negative integers."""

    entries: dict[tuple[int, int], int]

    def campaign_total(self, campaign: int) -> int:
        return sum(c for (i, _), c in self.entries.items() if i == campaign)

    def by_type(self, instance: Instance) -> list[list[int]]:
        """Capacities aligned with ``instance.campaigns_of_type`` ordering."""
        return [
            [self.entries.get((i, j), 0) for i in campaigns]
            for j, campaigns in enumerate(instance.campaigns_of_type)
        ]


@dataclass
class FlowPlan:
    """Planner output consumed by the online policies.

    z_hat: minimal integer budget that routes the full demand
    z_flow: real-valued feasibility threshold (lower bound on consumption)
    capacities: per-edge planned deliveries
    variant: "standard", "representative" or "multiple:<k>"
    """

    z_hat: int
    z_flow: float
    capacities: CapacityPlan
    variant: str = "standard"
    k: int = 1


def _ceil_supplies(instance: Instance, budget: int, k: int = 1) -> list[int]:
    # Exact rounding via rationals: float products can straddle integer
    # boundaries and silently change a supply by one.
    scaled = budget * k
    return [int(math.ceil(scaled * fp)) for fp in instance.frac_probs]


def _budget_feasible(instance: Instance, budget: int, k: int = 1,
                     paper_inner: bool = False) -> bool:
    supply = _ceil_supplies(instance, budget, k)
    inner = budget if paper_inner else None
    network = build_expected_network(instance, supply, inner_capacity=inner)
    return network.max_flow() >= instance.total_demand


def find_z_hat(instance: Instance) -> tuple[int, CapacityPlan]:
    """Minimal integer budget with a saturating expected-network flow.

    Doubling finds a feasible bracket, then binary search pins the minimum.
    The search floor is max(1, M - n): below it the total rounded-up supply
    cannot reach the demand, yet rounding can make budgets well under M
    feasible, so the floor must sit under the doubling bracket.
    """
    total = instance.total_demand
    probe = max(1, total)
    while not _budget_feasible(instance, probe):
        probe *= 2
    lo = max(1, total - instance.n)
    hi = probe
    while lo < hi:
        mid = (lo + hi) // 2
        if _budget_feasible(instance, mid):
            hi = mid
        else:
            lo = mid + 1
    network = build_expected_network(instance, _ceil_supplies(instance, lo))
    network.max_flow()
    return lo, network.extract_edge_flows()


def _scale_bits(instance: Instance, tolerance: float) -> int:
    # Supplies are floored after scaling; keep the total flooring loss small
    # enough that the feasibility threshold moves by at most tolerance / 2.
    needed = 2.0 * instance.n / (tolerance * instance.p_min)
    return max(_MIN_SCALE_BITS, int(math.ceil(math.log2(needed))) + 1)


def _real_budget_feasible(instance: Instance, traffic: float, scale: int) -> bool:
    frac_t = Fraction(traffic)
    supply = [int(frac_t * fp * scale) for fp in instance.frac_probs]  # floor
    demands_scaled = [w * scale for w in instance.demands]
    network = build_expected_network(
        Instance(
            demands=tuple(demands_scaled),
            probs=instance.probs,
            edges=instance.edges,
        ),
        supply,
    )
    return network.max_flow() >= instance.total_demand * scale


def compute_z_flow(instance: Instance, tolerance: float | None = None) -> float:
    """Least real traffic budget at which full delivery is flow-feasible.

    Binary search over the budget; each feasibility probe scales the
    fractional supplies by a fixed power of two and floors them so the
    integer solver answers exactly. The flooring is conservative, so the
    returned value is >= the true threshold and within ``tolerance`` of it.
    """
    total = instance.total_demand
    if tolerance is None:
        tolerance = DEFAULT_Z_FLOW_REL_TOL * total
    if tolerance <= 0:
        raise ValueError("tolerance must be positive")
    scale = 1 << _scale_bits(instance, tolerance)

    # Total sink capacity equals the budget, so no budget below the demand
    # can route it; the demand itself may already be feasible.
    lo = float(total)
    if _real_budget_feasible(instance, lo, scale):
        return lo
    hi = lo * 2.0
    while not _real_budget_feasible(instance, hi, scale):
        lo = hi
        hi *= 2.0
    while hi - lo > tolerance / 2.0:
        mid = 0.5 * (lo + hi)
        if _real_budget_feasible(instance, mid, scale):
            hi = mid
        else:
            lo = mid
    return hi


def z_flow_exact_small(instance: Instance) -> Fraction:
    """Exact feasibility threshold by enumerating campaign subsets.

    The threshold equals the maximum over non-empty campaign subsets of
    (total demand of the subset) / (arrival mass of its targeted types);
    exponential in the campaign count, hence the size guard. Serves as the
    oracle for ``compute_z_flow``.
    """
    m = instance.m
    if m > SUBSET_ENUM_MAX_CAMPAIGNS:
        raise TooManyCampaignsError(
            f"subset enumeration supports at most {SUBSET_ENUM_MAX_CAMPAIGNS} campaigns, got {m}"
        )
    type_masks = [0] * m
    for i, j in instance.edges:
        type_masks[i] |= 1 << j
    frac_probs = instance.frac_probs

    union = [0] * (1 << m)
    wsum = [0] * (1 << m)
    mass_cache: dict[int, Fraction] = {}
    best = Fraction(0)
    for s in range(1, 1 << m):
        low = s & (-s)
        i = low.bit_length() - 1
        rest = s ^ low
        union[s] = union[rest] | type_masks[i]
        wsum[s] = wsum[rest] + instance.demands[i]
        u = union[s]
        mass = mass_cache.get(u)
        if mass is None:
            mass = Fraction(0)
            bits = u
            while bits:
                b = bits & (-bits)
                mass += frac_probs[b.bit_length() - 1]
                bits ^= b
            mass_cache[u] = mass
        value = Fraction(wsum[s], 1) / mass
        if value > best:
            best = value
    return best


def standard_plan(instance: Instance, z_flow_tolerance: float | None = None,
                  with_z_flow: bool = True) -> FlowPlan:
    """Full planning pass: minimal budget, capacity plan and flow bound."""
    z_hat, capacities = find_z_hat(instance)
    z_flow = compute_z_flow(instance, z_flow_tolerance) if with_z_flow else float("nan")
    return FlowPlan(z_hat=z_hat, z_flow=z_flow, capacities=capacities, variant="standard")


def representative_plan(instance: Instance, z_flow_tolerance: float | None = None,
                        with_z_flow: bool = True) -> FlowPlan:
    """Proportional capacity plan: each campaign splits its demand across
    targeted types by arrival mass, rounded by largest remainder so the
    per-campaign total is exact. The budget is still computed for reporting
    and episode caps.
    """
    entries: dict[tuple[int, int], int] = {}
    frac_probs = instance.frac_probs
    for i, types in enumerate(instance.types_of_campaign):
        demand = instance.demands[i]
        mass = sum((frac_probs[j] for j in types), Fraction(0))
        targets = [(j, Fraction(demand) * frac_probs[j] / mass) for j in types]
        floors = {j: int(t) for j, t in targets}
        leftover = demand - sum(floors.values())
        # Ties on the remainder go to the lower type index.
        order = sorted(targets, key=lambda jt: (-(jt[1] - floors[jt[0]]), jt[0]))
        for j, _ in order[:leftover]:
            floors[j] += 1
        for j in types:
            entries[(i, j)] = floors[j]
    z_hat, _ = find_z_hat(instance)
    z_flow = compute_z_flow(instance, z_flow_tolerance) if with_z_flow else float("nan")
    return FlowPlan(z_hat=z_hat, z_flow=z_flow,
                    capacities=CapacityPlan(entries=entries), variant="representative")


def multiple_delivery_plan(instance: Instance, k: int,
                           z_flow_tolerance: float | None = None,
                           with_z_flow: bool = True) -> FlowPlan:
    """Plan for k delivery slots per arrival.

    The probed network supplies each type with ceil(budget * k * p_j) and
    caps every targeting edge at the probed budget itself, which encodes
    that one campaign fills at most one slot per page view.
    """
    if k < 1:
        raise ValueError(f"slot count k must be >= 1, got {k}")
    total = instance.total_demand
    probe = max(1, total)
    while not _budget_feasible(instance, probe, k=k, paper_inner=True):
        probe *= 2
    # Below either floor the network cannot route the demand: the rounded
    # supply total falls short, or some campaign's outgoing capacity does.
    per_campaign = max(
        -(-instance.demands[i] // len(types))
        for i, types in enumerate(instance.types_of_campaign)
    )
    lo = max(1, -(-(total - instance.n) // k), per_campaign)
    hi = probe
    while lo < hi:
        mid = (lo + hi) // 2
        if _budget_feasible(instance, mid, k=k, paper_inner=True):
            hi = mid
        else:
            lo = mid + 1
    network = build_expected_network(
        instance, _ceil_supplies(instance, lo, k), inner_capacity=lo
    )
    network.max_flow()
    capacities = network.extract_edge_flows()
    z_flow = compute_z_flow(instance, z_flow_tolerance) if with_z_flow else float("nan")
    return FlowPlan(z_hat=lo, z_flow=z_flow, capacities=capacities,
                    variant=f"multiple:{k}", k=k)


# -- serialization ---------------------------------------------------------

def save_plan(plan: FlowPlan) -> bytes:
    obj = {
        "z_hat": plan.z_hat,
        "z_flow": plan.z_flow,
        "variant": plan.variant,
        "capacities": [[i, j, c] for (i, j), c in sorted(plan.capacities.entries.items())],
    }
    return json.dumps(obj, sort_keys=True, separators=(",", ":")).encode("utf-8")


def load_plan(data: bytes | str) -> FlowPlan:
    if isinstance(data, bytes):
        data = data.decode("utf-8")
    obj = json.loads(data)
    variant = obj["variant"]
    k = int(variant.split(":", 1)[1]) if variant.startswith("multiple:") else 1
    entries = {(int(i), int(j)): int(c) for i, j, c in obj["capacities"]}
    return FlowPlan(
        z_hat=int(obj["z_hat"]),
        z_flow=float(obj["z_flow"]),
        capacities=CapacityPlan(entries=entries),
        variant=variant,
        k=k,
    )


def write_plan_file(plan: FlowPlan, path):
    with open(path, "wb") as fh:
        fh.write(save_plan(plan))
        fh.write(b"\n")


def read_plan_file(path) -> FlowPlan:
    with open(path, "rb") as fh:
        return load_plan(fh.read())
