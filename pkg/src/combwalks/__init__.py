"""Random walks on combs: exact kernels, samplers, collision statistics."""

from .graphs import (Ball, BiasedLadder, BudgetError, Comb, Comb2, Cycle,
                     Graph, GraphError, Grid2D, Line, PathTwo, Star, ball,
                     build_graph)
from .oracle import (Kernel, KernelSeries, OracleError, SparseDistribution,
                     identity_check_suite, meeting_expectation_series,
                     per_site_collision_series, return_probability_series,
                     transition_vector, verify_loop_around,
                     verify_reversibility)
from .rng import RngStream, pair_streams
from .sampler import (CollisionRecord, PairTrajectorySummary, RecordPolicy,
                      SimulationError, clock_dichotomy_violations,
                      dyadic_checkpoints, geometric_clock_path, read_summaries,
                      run_ensemble, run_pair, run_pair_decomposed,
                      sample_marginal, srw_step, write_summaries)
from .stats import (DriftEstimate, DyadicCellStats, ExponentFit, GrowthCurve,
                    StatsError, conditional_W, drift_estimate,
                    dyadic_collision_stats, estimate_exponent, kendall_trend,
                    lil_envelope_check, lil_threshold, meeting_growth_curve,
                    meeting_growth_curves)

__version__ = "0.1.0"
