"""Marked-pair synchronizer analysis for two-branch fork-join networks."""

from .analytic import (
    INFINITE,
    BranchOccupancy,
    ExpMixture,
    NetworkParams,
    branch_sojourn_density,
    cross_convolve,
    erlang_idle_prob,
    fold_to_waiting_density,
    little_occupancy,
    mixture_cdf,
    mixture_mean,
    mixture_quantile,
    queue_nonempty_prob,
    waiting_time_density,
    waiting_time_mean,
)
from .ck import (
    ConvergenceDiag,
    JointGrid,
    ck_residual,
    sojourn_correlation,
    solve_stationary,
)
from .gof import GofReport, chi_square_test, hypothesis1_verdict, validity_region_scan
from .simulate import (
    Job,
    SimResult,
    SojournSample,
    occupancy_trace,
    run_simulation,
    synchronizer_step,
)

__version__ = "0.1.0"
