"""Safety-critical control of full-order plants through reduced-order models.

The package builds safety filters for simple reduced models, certifies
how well a full-order plant tracks the filtered commands, and combines
both into composite barriers whose forward invariance is checked
numerically and exercised by a deterministic rollout engine.
"""

from .barriers import (CompositeBarrier, GainReport, InvarianceReport,
                       barrier_b, barrier_b_beta, barrier_b_delta,
                       barrier_rates, certify_invariance, estimate_delta,
                       gain_condition)
from .certificates import (CheckReport, SimulationCertificate,
                           TrackingEnvelope, check_decrease,
                           check_lower_bound, check_regular_value,
                           estimate_beta, estimate_constants, tracking_bound)
from .errors import (ConfigError, ContractError, EstimationError,
                     InconclusiveError, InfeasibleFilterError, RolloutDiverged)
from .filters import (FilterGains, ReducedCbf, circular_obstacle_cbf,
                      issf_residual, make_safety_controller, safety_filter,
                      smooth_combine)
from .plants import (DoubleIntegratorState, PLANT_REGISTRY, QuadrotorParams,
                     QuadrotorState, backstepping_interface,
                     clocked_double_integrator_system,
                     double_integrator_system, make_quadrotor_interface,
                     quadrotor_candidate_V, quadrotor_dynamics,
                     quadrotor_interface, quadrotor_system,
                     single_integrator_rom)
from .rollout import RolloutConfig, RolloutLog, min_over_rollout, rollout
from .rom import (FullOrderModel, ProjectionPair, ReducedOrderModel,
                  RomSystem, discrepancy, project_input, project_state,
                  projected_dynamics, surface_residual)
from .sampling import Box

__all__ = [name for name in dir() if not name.startswith("_")]

__version__ = "0.1.0"
