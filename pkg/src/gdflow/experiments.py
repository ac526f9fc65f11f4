"""Instance generation, policy comparison sweeps, and the robustness harness.

The generators build random targeting graphs with a fixed per-type degree
and draw arrival distributions either by normalizing uniform weights or by
perturbing the uniform distribution with Gaussian noise. The comparison
harness runs a set of policies over shared seeded user sequences, pairs
every sequence with its offline optimum, and aggregates competitive-ratio
estimates as ratios of sample means.
"""

from __future__ import annotations

import csv
import io
import json
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, asdict

import numpy as np

from .instance import Instance, validate
from .planner import FlowPlan, standard_plan, representative_plan, multiple_delivery_plan
from .policies import make_policy, parse_policy_name, plan_variant_for
from .seeding import (GEN_STREAM, POLICY_STREAM, ROBUST_STREAM, USER_STREAM,
                      episode_seed_label, substream)
from .simulator import CapExceededError, DEFAULT_CAP_FACTOR, offline_optimum, run_episode, sample_sequence

RANDOM_NORMALIZATION = "random-normalization"
GAUSS_PERTURBATION = "gauss-perturbation"
ROBUSTNESS_DELTA_CAP = 0.9


@dataclass
class GeneratorConfig:
    """Random-instance settings.

    avg_degree is realized as an exact per-type degree (every user type
    targets that many campaigns); "uniform-total" instead scatters the same
    number of edges uniformly over all pairs. Campaigns left untargeted are
    repaired with one uniformly chosen edge each.
    """

    num_campaigns: int
    num_types: int
    avg_degree: int
    demand_range: tuple[int, int] = (50, 100)
    dist_kind: str = RANDOM_NORMALIZATION
    degree_mode: str = "per-type-exact"
    seed: int = 0

    def check(self):
        if self.num_campaigns < 1 or self.num_types < 1:
            raise ValueError("need at least one campaign and one type")
        if self.avg_degree < 1:
            raise ValueError("avg_degree must be >= 1")
        if self.avg_degree > self.num_campaigns:
            raise ValueError("avg_degree cannot exceed the campaign count")
        if self.demand_range[0] < 1 or self.demand_range[0] > self.demand_range[1]:
            raise ValueError(f"bad demand_range {self.demand_range}")
        if self.dist_kind not in (RANDOM_NORMALIZATION, GAUSS_PERTURBATION):
            raise ValueError(f"unknown dist_kind {self.dist_kind!r}")
        if self.degree_mode not in ("per-type-exact", "uniform-total"):
            raise ValueError(f"unknown degree_mode {self.degree_mode!r}")


def _draw_distribution(config: GeneratorConfig, rng: np.random.Generator) -> np.ndarray:
    n = config.num_types
    if config.dist_kind == RANDOM_NORMALIZATION:
        weights = 1.0 - rng.random(n)  # uniform on (0, 1]
    else:
        # Uniform baseline with Gaussian jitter at sigma = 1/(6n); resample
        # the (astronomically rare) non-positive draws.
        sigma = 1.0 / (6.0 * n)
        weights = 1.0 / n + rng.normal(0.0, sigma, n)
        while True:
            bad = weights <= 0.0
            if not bad.any():
                break
            weights[bad] = 1.0 / n + rng.normal(0.0, sigma, int(bad.sum()))
    return weights / weights.sum()


def generate_instance_with_repairs(config: GeneratorConfig,
                                   rng: np.random.Generator | None = None
                                   ) -> tuple[Instance, int]:
    """Generate an instance; also reports how many campaigns needed a
    repair edge to stay reachable."""
    config.check()
    if rng is None:
        rng = substream(config.seed, GEN_STREAM)
    m, n, d = config.num_campaigns, config.num_types, config.avg_degree

    edges: set[tuple[int, int]] = set()
    if config.degree_mode == "per-type-exact":
        for j in range(n):
            for i in rng.choice(m, size=d, replace=False):
                edges.add((int(i), j))
    else:
        target = min(n * d, m * n)
        flat = rng.choice(m * n, size=target, replace=False)
        edges.update((int(k) // n, int(k) % n) for k in flat)

    repairs = 0
    targeted = {i for i, _ in edges}
    for i in range(m):
        if i not in targeted:
            edges.add((i, int(rng.integers(n))))
            repairs += 1

    lo, hi = config.demand_range
    demands = rng.integers(lo, hi + 1, size=m)
    probs = _draw_distribution(config, rng)
    instance = Instance(
        demands=tuple(int(w) for w in demands),
        probs=tuple(float(p) for p in probs),
        edges=tuple(sorted(edges)),
    )
    return instance, repairs


def generate_instance(config: GeneratorConfig,
                      rng: np.random.Generator | None = None) -> Instance:
    return generate_instance_with_repairs(config, rng)[0]


# -- policy comparison -------------------------------------------------------

@dataclass
class InstanceResult:
    """One policy's aggregate over one instance's shared sequences."""

    instance_id: int
    policy: str
    episodes: int
    failures: int
    mean_consumption: float
    mean_t_star: float
    ratio: float
    worst_ratio: float


@dataclass
class PolicySummary:
    policy: str
    mean_ratio: float
    min_ratio: float
    max_ratio: float
    mean_consumption: float


@dataclass
class EvalReport:
    rows: list[InstanceResult]
    instance_meta: list[dict]
    policies: list[str]
    seed: int
    episodes_per_instance: int

    def summary(self) -> dict[str, PolicySummary]:
        out = {}
        for name in self.policies:
            ratios = [r.ratio for r in self.rows if r.policy == name and not math.isnan(r.ratio)]
            cons = [r.mean_consumption for r in self.rows if r.policy == name]
            out[name] = PolicySummary(
                policy=name,
                mean_ratio=sum(ratios) / len(ratios) if ratios else float("nan"),
                min_ratio=min(ratios) if ratios else float("nan"),
                max_ratio=max(ratios) if ratios else float("nan"),
                mean_consumption=sum(cons) / len(cons) if cons else float("nan"),
            )
        return out

    def to_json_bytes(self) -> bytes:
        obj = {
            "seed": self.seed,
            "episodes_per_instance": self.episodes_per_instance,
            "policies": self.policies,
            "instances": self.instance_meta,
            "rows": [asdict(r) for r in self.rows],
            "summary": {k: asdict(v) for k, v in self.summary().items()},
        }
        return json.dumps(obj, sort_keys=True, separators=(",", ":")).encode("utf-8")

    def to_csv_text(self) -> str:
        """Plot-ready rows, one per instance per policy."""
        buf = io.StringIO()
        buf.write("# gdflow comparison report v1\n")
        buf.write(f"# seed={self.seed} episodes_per_instance={self.episodes_per_instance}\n")
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["instance_id", "policy", "episodes", "failures",
                         "mean_consumption", "mean_t_star", "ratio", "worst_ratio"])
        for r in self.rows:
            writer.writerow([r.instance_id, r.policy, r.episodes, r.failures,
                             repr(r.mean_consumption), repr(r.mean_t_star),
                             repr(r.ratio), repr(r.worst_ratio)])
        return buf.getvalue()


def resolve_plans(instance: Instance, policy_names) -> dict[str, FlowPlan]:
    """One plan per distinct variant the named policies need."""
    plans: dict[str, FlowPlan] = {}
    for name in policy_names:
        variant = plan_variant_for(name)
        if variant in plans:
            continue
        if variant == "standard":
            plans[variant] = standard_plan(instance, with_z_flow=False)
        elif variant == "representative":
            plans[variant] = representative_plan(instance, with_z_flow=False)
        else:
            k = int(variant.split(":", 1)[1])
            plans[variant] = multiple_delivery_plan(instance, k, with_z_flow=False)
    return plans


def _evaluate_instance(args) -> tuple[list[InstanceResult], dict]:
    (idx, instance, policy_names, episodes, seed, cap_factor) = args
    for name in policy_names:
        parse_policy_name(name)
    plans = resolve_plans(instance, policy_names)
    plan_of = {name: plans[plan_variant_for(name)] for name in policy_names}
    cap = cap_factor * max(1, max(p.z_hat for p in plans.values()))

    sums = {name: 0.0 for name in policy_names}
    worst = {name: 0.0 for name in policy_names}
    counts = {name: 0 for name in policy_names}
    failures = {name: 0 for name in policy_names}
    t_star_sum = {name: 0.0 for name in policy_names}

    for e in range(episodes):
        label = episode_seed_label(seed, idx, e)
        stream = sample_sequence(instance.probs,
                                 substream(seed, USER_STREAM, idx, e), cap, label)
        try:
            t_star = offline_optimum(instance, stream)
        except CapExceededError:
            for name in policy_names:
                failures[name] += 1
            continue
        for name in policy_names:
            policy = make_policy(name, instance, plan_of[name],
                                 substream(seed, POLICY_STREAM, idx, e, name))
            try:
                record = run_episode(instance, policy, stream, record_pairs=False)
            except CapExceededError:
                failures[name] += 1
                continue
            sums[name] += record.consumption
            t_star_sum[name] += t_star
            counts[name] += 1
            worst[name] = max(worst[name], record.consumption / t_star)

    rows = []
    for name in policy_names:
        k = counts[name]
        mean_y = sums[name] / k if k else float("nan")
        mean_t = t_star_sum[name] / k if k else float("nan")
        rows.append(InstanceResult(
            instance_id=idx,
            policy=name,
            episodes=k,
            failures=failures[name],
            mean_consumption=mean_y,
            mean_t_star=mean_t,
            ratio=mean_y / mean_t if k else float("nan"),
            worst_ratio=worst[name] if k else float("nan"),
        ))
    meta = {
        "instance_id": idx,
        "m": instance.m,
        "n": instance.n,
        "num_edges": len(instance.edges),
        "total_demand": instance.total_demand,
        "z_hat": {variant: plan.z_hat for variant, plan in sorted(plans.items())},
    }
    return rows, meta


def default_workers() -> int:
    value = os.environ.get("GDFLOW_WORKERS", "1")
    try:
        return max(1, int(value))
    except ValueError:
        return 1


def run_comparison(instances, policies, episodes_per_instance: int, seed: int,
                   cap_factor: int = DEFAULT_CAP_FACTOR,
                   workers: int | None = None) -> EvalReport:
    """Evaluate every policy over shared seeded sequences on each instance.

    Sequences are keyed by (seed, instance index, episode index) only, so
    adding or removing policies never changes the streams; each sequence is
    paired with its offline optimum and ratios are means-over-means.
    Episode failures (arrival cap) are flagged and skipped, never fatal.
    """
    policies = list(policies)
    if workers is None:
        workers = default_workers()
    tasks = [
        (idx, instance, policies, episodes_per_instance, seed, cap_factor)
        for idx, instance in enumerate(instances)
    ]
    if workers > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            outcomes = list(pool.map(_evaluate_instance, tasks))
    else:
        outcomes = [_evaluate_instance(t) for t in tasks]

    rows: list[InstanceResult] = []
    meta: list[dict] = []
    for instance_rows, instance_meta in outcomes:
        rows.extend(instance_rows)
        meta.append(instance_meta)
    return EvalReport(rows=rows, instance_meta=meta, policies=policies,
                      seed=seed, episodes_per_instance=episodes_per_instance)


# -- robustness ----------------------------------------------------------------

@dataclass
class RobustnessConfig:
    """Bias bound, episode count and seed for one robustness run."""

    delta: float
    episodes: int = 1000
    seed: int = 0
    policy: str = "fb-greedy"

    def check(self):
        if not (0.0 <= self.delta < 1.0):
            raise ValueError(f"delta must be in [0, 1), got {self.delta}")
        if self.episodes < 1:
            raise ValueError("episodes must be >= 1")


@dataclass
class RobustnessReport:
    delta_requested: float
    delta_used: float
    delta_eff: float
    episodes: int
    mean_true: float
    mean_biased: float
    ratio: float
    ratio_se: float
    bound: float
    capped: bool
    z_hat_true: int
    z_hat_biased: int

    def to_json_bytes(self) -> bytes:
        return json.dumps(asdict(self), sort_keys=True, separators=(",", ":")).encode("utf-8")


def run_robustness(instance: Instance, config: RobustnessConfig,
                   cap_factor: int = DEFAULT_CAP_FACTOR) -> RobustnessReport:
    """Plan under a multiplicatively biased distribution, deliver under the
    true one, and compare with paired true-distribution runs.

    The biased distribution renormalizes per-type multipliers drawn from
    [1-delta, 1+delta]; since renormalization can stretch the requested
    bound, the report carries the effective post-normalization bias and the
    degradation bound computed from it. Deltas above 0.9 are capped (the
    bound diverges as delta -> 1).
    """
    config.check()
    capped = config.delta > ROBUSTNESS_DELTA_CAP
    delta = min(config.delta, ROBUSTNESS_DELTA_CAP)

    probs = np.asarray(instance.probs)
    if delta == 0.0:
        biased = instance
        delta_eff = 0.0
    else:
        rng = substream(config.seed, ROBUST_STREAM)
        weights = probs * rng.uniform(1.0 - delta, 1.0 + delta, instance.n)
        probs_hat = weights / weights.sum()
        delta_eff = float(np.abs(probs_hat / probs - 1.0).max())
        biased = Instance(demands=instance.demands,
                          probs=tuple(float(p) for p in probs_hat),
                          edges=instance.edges)

    plan_true = standard_plan(instance, with_z_flow=False)
    plan_biased = plan_true if delta == 0.0 else standard_plan(biased, with_z_flow=False)
    cap = cap_factor * max(1, plan_true.z_hat, plan_biased.z_hat)

    y_true = np.empty(config.episodes)
    y_biased = np.empty(config.episodes)
    for e in range(config.episodes):
        label = episode_seed_label(config.seed, 0, e)
        stream = sample_sequence(instance.probs,
                                 substream(config.seed, USER_STREAM, 0, e), cap, label)
        for plan, out in ((plan_true, y_true), (plan_biased, y_biased)):
            policy = make_policy(config.policy, instance, plan,
                                 substream(config.seed, POLICY_STREAM, 0, e, config.policy))
            out[e] = run_episode(instance, policy, stream, record_pairs=False).consumption

    mean_true = float(y_true.mean())
    mean_biased = float(y_biased.mean())
    ratio = mean_biased / mean_true
    num = config.episodes
    if num > 1:
        var_t = float(y_true.var(ddof=1))
        var_b = float(y_biased.var(ddof=1))
        cov = float(np.cov(y_biased, y_true, ddof=1)[0, 1])
        variance = (var_b / mean_true**2
                    + mean_biased**2 * var_t / mean_true**4
                    - 2.0 * mean_biased * cov / mean_true**3) / num
        ratio_se = math.sqrt(max(0.0, variance))
    else:
        ratio_se = float("nan")
    bound = (1.0 + delta_eff) / (1.0 - delta_eff)
    return RobustnessReport(
        delta_requested=config.delta,
        delta_used=delta,
        delta_eff=delta_eff,
        episodes=config.episodes,
        mean_true=mean_true,
        mean_biased=mean_biased,
        ratio=ratio,
        ratio_se=ratio_se,
        bound=bound,
        capped=capped,
        z_hat_true=plan_true.z_hat,
        z_hat_biased=plan_biased.z_hat,
    )
