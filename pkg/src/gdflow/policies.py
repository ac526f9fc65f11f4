"""Online delivery policies.

Policies consume one arriving user type at a time and either name the
campaign to serve or pass the user through for other purposes. Every
policy tracks residual demands itself; a policy instance owns one
episode's mutable state, so episodes construct a fresh policy each run.

Flow-based policies follow a capacity plan through a pluggable delivery
rule (greedy / smooth / representative); the baselines are Random,
Degree-Greedy, Probability-Greedy and a water-filling High-Water-Mark
reconstruction. All argmax/argmin ties break toward the lower campaign
index so identical seeds reproduce identical episodes.
"""

from __future__ import annotations

import numpy as np

from .instance import Instance
from .planner import FlowPlan

BASE_POLICY_NAMES = ("fb-greedy", "fb-smooth", "fb-representative",
                     "random", "dg", "pg", "hwm")


class DeliveryPolicy:
    """Base behaviour: residual-demand bookkeeping around a selection rule."""

    multi = False

    def __init__(self, instance: Instance, plan: FlowPlan | None,
                 rng: np.random.Generator | None = None):
        self.instance = instance
        self.plan = plan
        self.rng = rng
        self.residual = list(instance.demands)
        self.remaining = instance.total_demand

    def decide(self, user_type: int) -> int | None:
        """Serve one arrival; returns the campaign delivered or None."""
        i = self._select(user_type)
        if i is not None:
            self.residual[i] -= 1
            self.remaining -= 1
        return i

    def _select(self, user_type: int) -> int | None:
        raise NotImplementedError


# -- flow-based delivery rules ----------------------------------------------

class GreedyRule:
    """Serve the eligible campaign with the largest residual edge capacity.

    The residual may go negative: once planned capacity on an edge is
    spent, demand left on the campaign keeps it eligible and the rule
    over-delivers on its least-spent edge.
    """

    def __init__(self, instance: Instance, plan: FlowPlan):
        self.campaigns_of_type = instance.campaigns_of_type
        self.capacity = plan.capacities.by_type(instance)

    def select(self, user_type: int, residual: list[int]) -> int | None:
        caps = self.capacity[user_type]
        best = None
        best_cap = 0
        for k, i in enumerate(self.campaigns_of_type[user_type]):
            if residual[i] > 0:
                c = caps[k]
                if best is None or c > best_cap:
                    best = k
                    best_cap = c
        if best is None:
            return None
        caps[best] -= 1
        return self.campaigns_of_type[user_type][best]


class SmoothRule:
    """Spread deliveries by serving the least-used fraction of plan capacity.

    Among eligible campaigns whose edge still has unspent planned capacity,
    pick the one minimizing remaining/planned; edges planned at zero never
    enter the ratio. When every eligible edge is spent (or planned at zero)
    but demand remains, fall back to the greedy choice on the remaining
    counters so the user is never wasted.
    """

    def __init__(self, instance: Instance, plan: FlowPlan):
        self.campaigns_of_type = instance.campaigns_of_type
        self.planned = plan.capacities.by_type(instance)
        self.remaining_cap = [list(row) for row in self.planned]

    def select(self, user_type: int, residual: list[int]) -> int | None:
        campaigns = self.campaigns_of_type[user_type]
        planned = self.planned[user_type]
        remaining = self.remaining_cap[user_type]
        best = None
        best_ratio = 0.0
        for k, i in enumerate(campaigns):
            if residual[i] > 0 and remaining[k] > 0 and planned[k] > 0:
                ratio = remaining[k] / planned[k]
                if best is None or ratio < best_ratio:
                    best = k
                    best_ratio = ratio
        if best is None:
            # Fallback: greedy on the remaining counters.
            best_cap = 0
            for k, i in enumerate(campaigns):
                if residual[i] > 0:
                    c = remaining[k]
                    if best is None or c > best_cap:
                        best = k
                        best_cap = c
            if best is None:
                return None
        remaining[best] -= 1
        return campaigns[best]


class RepresentativeRule:
    """Greedy on residual capacity, but never past the planned amount.

    Returns None once every eligible edge for the type is exhausted; with a
    proportional plan this pins the terminal per-edge deliveries exactly to
    the plan.
    """

    def __init__(self, instance: Instance, plan: FlowPlan):
        self.campaigns_of_type = instance.campaigns_of_type
        self.capacity = plan.capacities.by_type(instance)

    def select(self, user_type: int, residual: list[int]) -> int | None:
        caps = self.capacity[user_type]
        best = None
        best_cap = 0
        for k, i in enumerate(self.campaigns_of_type[user_type]):
            if residual[i] > 0:
                c = caps[k]
                if c > 0 and (best is None or c > best_cap):
                    best = k
                    best_cap = c
        if best is None:
            return None
        caps[best] -= 1
        return self.campaigns_of_type[user_type][best]


_RULES = {
    "greedy": GreedyRule,
    "smooth": SmoothRule,
    "representative": RepresentativeRule,
}


class FlowBasedPolicy(DeliveryPolicy):
    """Online half of the flow-based policy: delegate to a delivery rule."""

    def __init__(self, instance: Instance, plan: FlowPlan, rule: str,
                 rng: np.random.Generator | None = None):
        super().__init__(instance, plan, rng)
        if plan is None:
            raise ValueError("flow-based policies require a capacity plan")
        self.rule_name = rule
        self.rule = _RULES[rule](instance, plan)
        self._rule_select = self.rule.select

    def _select(self, user_type: int) -> int | None:
        return self._rule_select(user_type, self.residual)


class MultiDeliveryPolicy(DeliveryPolicy):
    """Serve up to k distinct campaigns per arrival, largest capacity first."""

    multi = True

    def __init__(self, instance: Instance, plan: FlowPlan,
                 rng: np.random.Generator | None = None):
        super().__init__(instance, plan, rng)
        if plan is None or not plan.variant.startswith("multiple:"):
            raise ValueError("multi-delivery requires a multiple:<k> plan")
        self.k = plan.k
        self.campaigns_of_type = instance.campaigns_of_type
        self.capacity = plan.capacities.by_type(instance)

    def decide_multi(self, user_type: int) -> list[int]:
        campaigns = self.campaigns_of_type[user_type]
        caps = self.capacity[user_type]
        residual = self.residual
        eligible = [(-caps[k], i, k) for k, i in enumerate(campaigns) if residual[i] > 0]
        eligible.sort()
        chosen = []
        for _, i, k in eligible[: self.k]:
            caps[k] -= 1
            residual[i] -= 1
            self.remaining -= 1
            chosen.append(i)
        return chosen

    def decide(self, user_type: int) -> int | None:
        raise TypeError("multi-delivery policies decide via decide_multi")


# -- baselines ---------------------------------------------------------------

class RandomPolicy(DeliveryPolicy):
    """Pick uniformly among all outstanding unit exposures for the type.

    Equivalent to weighting each eligible campaign by its residual demand.
    """

    def __init__(self, instance: Instance, plan: FlowPlan | None,
                 rng: np.random.Generator):
        super().__init__(instance, plan, rng)
        self.campaigns_of_type = instance.campaigns_of_type
        self._random = rng.random

    def _select(self, user_type: int) -> int | None:
        residual = self.residual
        campaigns = self.campaigns_of_type[user_type]
        total = 0
        for i in campaigns:
            total += residual[i]
        if total == 0:
            return None
        ticket = self._random() * total
        acc = 0
        for i in campaigns:
            acc += residual[i]
            if ticket < acc:
                return i
        return campaigns[-1]  # float edge; unreachable in practice


class DegreeGreedyPolicy(DeliveryPolicy):
    """Serve the eligible campaign with the fewest targeted types."""

    def __init__(self, instance: Instance, plan: FlowPlan | None = None,
                 rng: np.random.Generator | None = None):
        super().__init__(instance, plan, rng)
        self.campaigns_of_type = instance.campaigns_of_type
        self.degree = [len(ts) for ts in instance.types_of_campaign]

    def _select(self, user_type: int) -> int | None:
        residual = self.residual
        degree = self.degree
        best = None
        best_deg = 0
        for i in self.campaigns_of_type[user_type]:
            if residual[i] > 0 and (best is None or degree[i] < best_deg):
                best = i
                best_deg = degree[i]
        return best


def delivery_values(instance: Instance) -> list[float]:
    """Static per-campaign delivery value: the per-arrival chance a uniform
    draw over the initial outstanding exposures lands on this campaign."""
    type_weight = [0] * instance.n
    for j, campaigns in enumerate(instance.campaigns_of_type):
        type_weight[j] = sum(instance.demands[i] for i in campaigns)
    values = []
    for i, types in enumerate(instance.types_of_campaign):
        values.append(sum(instance.probs[j] / type_weight[j] for j in types))
    return values


class ProbabilityGreedyPolicy(DeliveryPolicy):
    """Serve the eligible campaign with the smallest static delivery value."""

    def __init__(self, instance: Instance, plan: FlowPlan | None = None,
                 rng: np.random.Generator | None = None):
        super().__init__(instance, plan, rng)
        self.campaigns_of_type = instance.campaigns_of_type
        self.values = delivery_values(instance)

    def _select(self, user_type: int) -> int | None:
        residual = self.residual
        values = self.values
        best = None
        best_val = 0.0
        for i in self.campaigns_of_type[user_type]:
            if residual[i] > 0 and (best is None or values[i] < best_val):
                best = i
                best_val = values[i]
        return best


def hwm_allocation(instance: Instance, forecast_traffic: int
                   ) -> tuple[list[int], list[float]]:
    """Water-filling serving rates against a forecast supply.

    Per-type supply is forecast * p_j. Campaigns are allocated most
    contended first (smallest targeted supply per owed exposure); each gets
    the minimal serving rate that covers its demand from the supply still
    unclaimed, capped at 1.
    """
    supply = [forecast_traffic * p for p in instance.probs]
    order = sorted(
        range(instance.m),
        key=lambda i: (
            sum(supply[j] for j in instance.types_of_campaign[i]) / instance.demands[i],
            i,
        ),
    )
    remaining = list(supply)
    alpha = [0.0] * instance.m
    for i in order:
        types = [j for j in instance.types_of_campaign[i] if supply[j] > 0]
        demand = instance.demands[i]
        if not types or sum(remaining[j] for j in types) < demand:
            alpha[i] = 1.0
        else:
            # Piecewise-linear in the rate; walk breakpoints where a type's
            # unclaimed supply saturates.
            types.sort(key=lambda j: remaining[j] / supply[j])
            saturated = 0.0
            unsat_rate = sum(supply[j] for j in types)
            rate = 1.0
            for j in types:
                breakpoint_rate = remaining[j] / supply[j]
                candidate = (demand - saturated) / unsat_rate if unsat_rate > 0 else float("inf")
                if candidate <= breakpoint_rate:
                    rate = candidate
                    break
                saturated += remaining[j]
                unsat_rate -= supply[j]
            else:
                rate = 1.0
            alpha[i] = min(1.0, rate)
        for j in types:
            remaining[j] -= min(remaining[j], alpha[i] * supply[j])
    return order, alpha


class HwmPolicy(DeliveryPolicy):
    """High-water-mark baseline: scan campaigns in allocation order and
    serve each with its precomputed rate until one fires."""

    def __init__(self, instance: Instance, plan: FlowPlan,
                 rng: np.random.Generator):
        super().__init__(instance, plan, rng)
        if plan is None:
            raise ValueError("hwm requires a plan for its traffic forecast")
        order, alpha = hwm_allocation(instance, plan.z_hat)
        rank = {i: r for r, i in enumerate(order)}
        self.alpha = alpha
        self.candidates_of_type = [
            sorted(campaigns, key=rank.__getitem__)
            for campaigns in instance.campaigns_of_type
        ]
        self._random = rng.random

    def _select(self, user_type: int) -> int | None:
        residual = self.residual
        alpha = self.alpha
        for i in self.candidates_of_type[user_type]:
            if residual[i] > 0 and self._random() < alpha[i]:
                return i
        return None


# -- registry -----------------------------------------------------------------

def parse_policy_name(name: str) -> tuple[str, int | None]:
    """Split a policy name into (base, k); k only for fb-multi:<k>."""
    if name.startswith("fb-multi:"):
        try:
            k = int(name.split(":", 1)[1])
        except ValueError:
            raise ValueError(f"bad slot count in policy name {name!r}") from None
        if k < 1:
            raise ValueError(f"slot count must be >= 1 in policy name {name!r}")
        return "fb-multi", k
    if name in BASE_POLICY_NAMES:
        return name, None
    raise ValueError(
        f"unknown policy {name!r}; valid: {', '.join(BASE_POLICY_NAMES)}, fb-multi:<k>"
    )


def plan_variant_for(name: str) -> str:
    """Which plan variant a policy needs: standard, representative, multiple:<k>."""
    base, k = parse_policy_name(name)
    if base == "fb-representative":
        return "representative"
    if base == "fb-multi":
        return f"multiple:{k}"
    return "standard"


def make_policy(name: str, instance: Instance, plan: FlowPlan | None,
                rng: np.random.Generator) -> DeliveryPolicy:
    """Construct a fresh policy (one episode's worth of state) by name."""
    base, _ = parse_policy_name(name)
    if base == "fb-greedy":
        return FlowBasedPolicy(instance, plan, "greedy", rng)
    if base == "fb-smooth":
        return FlowBasedPolicy(instance, plan, "smooth", rng)
    if base == "fb-representative":
        return FlowBasedPolicy(instance, plan, "representative", rng)
    if base == "fb-multi":
        return MultiDeliveryPolicy(instance, plan, rng)
    if base == "random":
        return RandomPolicy(instance, plan, rng)
    if base == "dg":
        return DegreeGreedyPolicy(instance, plan, rng)
    if base == "pg":
        return ProbabilityGreedyPolicy(instance, plan, rng)
    if base == "hwm":
        return HwmPolicy(instance, plan, rng)
    raise AssertionError(name)
