"""Perfect sampling for infinite-server queues, loss stations, and loss networks.

The package simulates the stationary infinite-server system backwards in
time and detects coalescence against it, yielding draws from the exact
steady-state distribution of GI/GI/infinity, GI/GI/C/C, and generalized
loss networks with renewal arrivals and general service times.
"""

__version__ = "0.1.0"

from .arrivals import (ArrivalBlocks, ArrivalProcess, WalkParams,
                       bernoulli_upcross, bridge_fixed_length,
                       generate_arrival_blocks, generate_arrival_blocks_heavy,
                       segment_to_down_level, segment_upcross_or_terminate,
                       verify_arrival_blocks)
from .coalescence import (PerfectSample, StationModel, detect_coalescence,
                          perfect_sample_infinite, perfect_sample_loss,
                          replay_loss_forward)
from .distributions import (Deterministic, Distribution, Exponential, Gamma,
                            LogNormal, Pareto, TiltContext, Uniform, Weibull,
                            from_config, make_tilt_context, solve_eta,
                            solve_truncation)
from .errors import (BlockBudgetExceeded, ConfigError, DegenerateBinning,
                     DivergentTilt, GuardViolation, IterationCap, NoRoot,
                     PerfectQError, StateSpaceTooLarge, UncertifiedTime,
                     ZeroMassInterval)
from .network import (LossNetworkModel, NetworkSample, Route,
                      detect_network_coalescence, perfect_sample_network,
                      validate_model)
from .rng import RngStream, experiment_stream, mix64
from .service import (ServiceBlocks, ServiceProcess, generate_service_blocks,
                      record_exceedance_prob, sample_next_record,
                      verify_service_blocks)
from .state import EventTimeline, MarkedPoint, SystemState, state_at
from .validation import (ForwardSummary, GofReport, ScalingTable,
                         chi_square_test, erlang_b_distribution,
                         forward_loss_simulation, ks_test,
                         product_form_distribution, run_scaling_benchmark,
                         stationary_blocking_burst, tv_distance)

__all__ = [name for name in dir() if not name.startswith("_")]
