"""Command-line front end.

Subcommands: gen, plan, simulate, compare, robustness, oracle. Every
command echoes its root seed to stderr (even when defaulted) and derives
all randomness from it through named streams, so identical invocations
produce byte-identical outputs regardless of worker count.

Exit codes: 0 success, 2 usage or validation failure, 3 I/O failure,
4 internal guard (arrival cap, state-space limit).
"""

from __future__ import annotations

import functools
import math
import sys

import click

from .experiments import (GAUSS_PERTURBATION, RANDOM_NORMALIZATION,
                          EvalReport, GeneratorConfig, RobustnessConfig,
                          generate_instance_with_repairs, resolve_plans,
                          run_comparison, run_robustness)
from .instance import (InstanceFormatError, InstanceValidationError,
                       read_instance_file, write_instance_file)
from .planner import (TooManyCampaignsError, compute_z_flow, multiple_delivery_plan,
                      read_plan_file, representative_plan, standard_plan,
                      write_plan_file)
from .policies import BASE_POLICY_NAMES, make_policy, parse_policy_name, plan_variant_for
from .seeding import GEN_STREAM, POLICY_STREAM, USER_STREAM, episode_seed_label, substream
from .simulator import (CapExceededError, StateSpaceError, default_cap,
                        dp_optimal_expected, offline_optimum, random_upper_bound,
                        run_episode, sample_sequence)

DIST_CHOICES = (RANDOM_NORMALIZATION, GAUSS_PERTURBATION)


def _fail(code: int, message) -> None:
    click.echo(f"error: {message}", err=True)
    sys.exit(code)


def guarded(fn):
    """Map domain errors to the documented exit codes."""

    @functools.wraps(fn)
    def wrapper(*args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except (CapExceededError, StateSpaceError, TooManyCampaignsError) as exc:
            _fail(4, exc)
        except (InstanceFormatError, InstanceValidationError, ValueError) as exc:
            _fail(2, exc)
        except OSError as exc:
            _fail(3, exc)

    return wrapper


def _echo_seed(seed: int) -> None:
    click.echo(f"seed: {seed}", err=True)


def _parse_policies(text: str) -> list[str]:
    names = [p.strip() for p in text.split(",") if p.strip()]
    if not names:
        raise ValueError("no policies given")
    for name in names:
        parse_policy_name(name)
    return names


@click.group()
def cli():
    """Traffic-minimizing guaranteed-delivery planning and simulation."""


@cli.command()
@click.option("--m", "num_campaigns", type=int, required=True, help="Campaign count.")
@click.option("--n", "num_types", type=int, required=True, help="User-type count.")
@click.option("--deg", "avg_degree", type=int, required=True, help="Per-type degree.")
@click.option("--demand-lo", type=int, default=50, show_default=True)
@click.option("--demand-hi", type=int, default=100, show_default=True)
@click.option("--dist", type=click.Choice(DIST_CHOICES), default=RANDOM_NORMALIZATION,
              show_default=True)
@click.option("--degree-mode", type=click.Choice(["per-type-exact", "uniform-total"]),
              default="per-type-exact", show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--out", type=click.Path(dir_okay=False), required=True)
@guarded
def gen(num_campaigns, num_types, avg_degree, demand_lo, demand_hi, dist,
        degree_mode, seed, out):
    """Generate a random instance and write it as JSON."""
    _echo_seed(seed)
    config = GeneratorConfig(
        num_campaigns=num_campaigns, num_types=num_types, avg_degree=avg_degree,
        demand_range=(demand_lo, demand_hi), dist_kind=dist,
        degree_mode=degree_mode, seed=seed,
    )
    instance, repairs = generate_instance_with_repairs(config)
    write_instance_file(instance, out)
    click.echo(f"wrote {out}: m={instance.m} n={instance.n} "
               f"edges={len(instance.edges)} total_demand={instance.total_demand} "
               f"repairs={repairs}")


@cli.command(name="plan")
@click.argument("instance_path", type=click.Path(dir_okay=False))
@click.option("--out", type=click.Path(dir_okay=False), default=None,
              help="Write the plan JSON here.")
@click.option("--variant", type=click.Choice(["standard", "representative", "multiple"]),
              default="standard", show_default=True)
@click.option("--k", type=int, default=1, show_default=True,
              help="Delivery slots per arrival (multiple variant).")
@click.option("--forecast", type=float, default=None,
              help="Expected traffic volume to compare against the plan.")
@guarded
def plan_cmd(instance_path, out, variant, k, forecast):
    """Plan an instance: minimal budget, capacities and traffic thresholds."""
    instance = read_instance_file(instance_path)
    if variant == "representative":
        plan = representative_plan(instance)
    elif variant == "multiple":
        plan = multiple_delivery_plan(instance, k)
    else:
        plan = standard_plan(instance)
    if out is not None:
        write_plan_file(plan, out)
    click.echo(f"z_hat: {plan.z_hat}")
    click.echo(f"z_flow: {plan.z_flow!r}")
    click.echo(f"variant: {plan.variant}")
    thresholds = [math.ceil(plan.z_hat * p) for p in instance.probs]
    if instance.n <= 20:
        click.echo(f"type thresholds: {thresholds}")
    else:
        click.echo(f"type thresholds: total={sum(thresholds)} "
                   f"min={min(thresholds)} max={max(thresholds)}")
    if forecast is not None:
        surplus = forecast - plan.z_hat
        verdict = "surplus" if surplus >= 0 else "deficit"
        click.echo(f"forecast {forecast!r} vs budget {plan.z_hat}: "
                   f"{verdict} of {abs(surplus)!r} arrivals")
        short = [j for j, th in enumerate(thresholds) if forecast * instance.probs[j] < th]
        if short and instance.n <= 20:
            click.echo(f"types under threshold at forecast: {short}")
        elif short:
            click.echo(f"types under threshold at forecast: {len(short)} of {instance.n}")


@cli.command()
@click.argument("instance_path", type=click.Path(dir_okay=False))
@click.option("--policies", default="fb-greedy", show_default=True,
              help="Comma-separated policy names.")
@click.option("--episodes", type=int, default=100, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--plan", "plan_path", type=click.Path(dir_okay=False), default=None,
              help="Reuse a saved plan instead of re-planning (standard-variant policies).")
@click.option("--out", type=click.Path(dir_okay=False), default=None,
              help="Write the episode CSV here instead of stdout.")
@click.option("--cap-factor", type=int, default=1000, show_default=True)
@guarded
def simulate(instance_path, policies, episodes, seed, plan_path, out, cap_factor):
    """Run seeded episodes and emit one CSV row per (policy, episode)."""
    _echo_seed(seed)
    instance = read_instance_file(instance_path)
    names = _parse_policies(policies)
    plans = resolve_plans(instance, names)
    if plan_path is not None:
        loaded = read_plan_file(plan_path)
        plans[loaded.variant] = loaded
    cap = cap_factor * max(1, max(p.z_hat for p in plans.values()))

    lines = ["# gdflow episodes v1",
             "instance_id,policy,seed,consumption,t_star,passthrough"]
    for name in names:
        plan = plans[plan_variant_for(name)]
        for e in range(episodes):
            label = episode_seed_label(seed, 0, e)
            stream = sample_sequence(instance.probs,
                                     substream(seed, USER_STREAM, 0, e), cap, label)
            t_star = offline_optimum(instance, stream)
            policy = make_policy(name, instance, plan,
                                 substream(seed, POLICY_STREAM, 0, e, name))
            record = run_episode(instance, policy, stream, record_pairs=False)
            lines.append(f"0,{name},{label},{record.consumption},{t_star},{record.passthrough}")
    text = "\n".join(lines) + "\n"
    if out is None:
        click.echo(text, nl=False)
    else:
        with open(out, "w") as fh:
            fh.write(text)
        click.echo(f"wrote {out}")


@cli.command()
@click.option("--m", "num_campaigns", type=int, default=50, show_default=True)
@click.option("--n", "num_types", type=int, default=100, show_default=True)
@click.option("--deg", "avg_degree", type=int, default=5, show_default=True)
@click.option("--demand-lo", type=int, default=50, show_default=True)
@click.option("--demand-hi", type=int, default=100, show_default=True)
@click.option("--dist", type=click.Choice(DIST_CHOICES), default=RANDOM_NORMALIZATION,
              show_default=True)
@click.option("--instances", "num_instances", type=int, default=10, show_default=True)
@click.option("--episodes", type=int, default=100, show_default=True)
@click.option("--policies", default="fb-greedy,random,dg,pg,hwm", show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--load", "load_paths", type=click.Path(dir_okay=False), multiple=True,
              help="Evaluate these instance files instead of generating.")
@click.option("--out-dir", type=click.Path(file_okay=False), default=None,
              help="Write report.json and report.csv here.")
@click.option("--workers", type=int, default=None,
              help="Process count (default: GDFLOW_WORKERS or 1).")
@guarded
def compare(num_campaigns, num_types, avg_degree, demand_lo, demand_hi, dist,
            num_instances, episodes, policies, seed, load_paths, out_dir, workers):
    """Generate (or load) instances and compare policies end to end."""
    _echo_seed(seed)
    names = _parse_policies(policies)
    if load_paths:
        instances = [read_instance_file(p) for p in load_paths]
    else:
        instances = []
        for idx in range(num_instances):
            config = GeneratorConfig(
                num_campaigns=num_campaigns, num_types=num_types,
                avg_degree=avg_degree, demand_range=(demand_lo, demand_hi),
                dist_kind=dist, seed=seed,
            )
            instances.append(
                generate_instance_with_repairs(config, substream(seed, GEN_STREAM, idx))[0]
            )
    report = run_comparison(instances, names, episodes, seed, workers=workers)
    _echo_summary(report)
    if out_dir is not None:
        import os

        os.makedirs(out_dir, exist_ok=True)
        json_path = os.path.join(out_dir, "report.json")
        csv_path = os.path.join(out_dir, "report.csv")
        with open(json_path, "wb") as fh:
            fh.write(report.to_json_bytes())
            fh.write(b"\n")
        with open(csv_path, "w") as fh:
            fh.write(report.to_csv_text())
        click.echo(f"wrote {json_path} and {csv_path}")


def _echo_summary(report: EvalReport) -> None:
    click.echo("policy             mean_ratio   min_ratio   max_ratio")
    for name, s in report.summary().items():
        click.echo(f"{name:<18} {s.mean_ratio:>10.5f} {s.min_ratio:>11.5f} {s.max_ratio:>11.5f}")


@cli.command()
@click.argument("instance_path", type=click.Path(dir_okay=False))
@click.option("--delta", type=float, required=True, help="Multiplicative bias bound.")
@click.option("--episodes", type=int, default=1000, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--policy", default="fb-greedy", show_default=True)
@click.option("--out", type=click.Path(dir_okay=False), default=None)
@guarded
def robustness(instance_path, delta, episodes, seed, policy, out):
    """Measure consumption degradation under a biased planning distribution."""
    _echo_seed(seed)
    instance = read_instance_file(instance_path)
    parse_policy_name(policy)
    config = RobustnessConfig(delta=delta, episodes=episodes, seed=seed, policy=policy)
    report = run_robustness(instance, config)
    if report.capped:
        click.echo(f"requested delta {report.delta_requested} capped at "
                   f"{report.delta_used}", err=True)
    click.echo(f"delta_eff: {report.delta_eff!r}")
    click.echo(f"mean_true: {report.mean_true!r}")
    click.echo(f"mean_biased: {report.mean_biased!r}")
    click.echo(f"ratio: {report.ratio!r} (se {report.ratio_se!r})")
    click.echo(f"bound: {report.bound!r}")
    if out is not None:
        with open(out, "wb") as fh:
            fh.write(report.to_json_bytes())
            fh.write(b"\n")
        click.echo(f"wrote {out}")


@cli.command()
@click.argument("instance_path", type=click.Path(dir_okay=False))
@guarded
def oracle(instance_path):
    """Print the lower/upper reference values for an instance."""
    instance = read_instance_file(instance_path)
    z_flow = compute_z_flow(instance)
    click.echo(f"z_flow: {z_flow!r}")
    try:
        dp = dp_optimal_expected(instance)
        click.echo(f"optimal_online_expected: {dp!r}")
    except StateSpaceError as exc:
        click.echo(f"optimal_online_expected: omitted ({exc})")
    bound = random_upper_bound(instance)
    click.echo(f"random_upper_bound: {bound!r}")


def main():
    cli(prog_name="gdflow")


if __name__ == "__main__":
    main()
