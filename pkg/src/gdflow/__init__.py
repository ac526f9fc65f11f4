"""Traffic-minimizing guaranteed-delivery ad allocation.

Plan minimal-traffic delivery capacities via expected-network max flow,
execute online delivery policies against sampled user streams, and measure
competitive ratios against flow-based lower bounds and exact oracles.
"""

from .instance import (Instance, InstanceFormatError, InstanceValidationError,
                       load_instance, read_instance_file, save_instance,
                       validate, write_instance_file)
from .maxflow import (ExpectedNetwork, MaxFlowNetwork, PlanInfeasibleError,
                      build_expected_network)
from .planner import (CapacityPlan, FlowPlan, TooManyCampaignsError,
                      compute_z_flow, find_z_hat, load_plan,
                      multiple_delivery_plan, read_plan_file,
                      representative_plan, save_plan, standard_plan,
                      write_plan_file, z_flow_exact_small)
from .policies import (BASE_POLICY_NAMES, DeliveryPolicy, make_policy,
                       parse_policy_name, plan_variant_for)
from .seeding import episode_seed_label, substream
from .simulator import (CapExceededError, EpisodeRecord, StateSpaceError,
                        UserStream, WaldReport, default_cap,
                        dp_optimal_expected, offline_optimum,
                        random_upper_bound, run_episode, sample_sequence,
                        wald_check)
from .experiments import (EvalReport, GeneratorConfig, RobustnessConfig,
                          RobustnessReport, generate_instance,
                          generate_instance_with_repairs, resolve_plans,
                          run_comparison, run_robustness)

__version__ = "0.1.0"
