"""Doubly reflected BSDEs with resistance on exact binary path trees.

Layers, bottom up: time grids and barriers (``grid``), the two-sided Skorohod
map (``skorohod``), the path tree with its projections (``tree``), local-time
estimators (``local_time``), the Picard solver (``solver``) and studies built
on it (``experiments``).  ``rbsde.cli`` is the batch front door.
"""

__version__ = "0.1.0"

from .grid import (
    BarrierGapError,
    BarrierPair,
    BarrierSpec,
    DiscretePath,
    GridMismatchError,
    TimeGrid,
    constant_barriers,
    eval_barriers,
    make_uniform_grid,
    reverse_in_time,
    sup_norm_distance,
)
from .skorohod import (
    NEVER,
    ESMOutput,
    HittingTimes,
    StartOutsideError,
    check_skorohod_conditions,
    esm_gamma,
    h_functional,
    hitting_times,
    j_functional,
    jordan_split,
    lipschitz_gap,
    step_projection_oracle,
    xi_maxformula,
    xi_slaby,
)
from .tree import (
    NotAMartingaleError,
    PathTree,
    TreeDepthError,
    build_tree,
    conditional_expectation,
    dual_optional_projection,
    martingale_representation,
    optional_projection,
    stochastic_integral,
)
from .local_time import (
    LocalTimeEstimate,
    OutsideBarriersError,
    default_eps,
    k_from_local_times,
    kl_ku_from_local_times,
    relative_rmse,
    tanaka_local_time,
)
from .solver import (
    DriverSpec,
    PicardConfig,
    PicardReport,
    Scenario,
    ScenarioError,
    SolutionQuad,
    TerminalSpec,
    UnsupportedDriverError,
    backward_induction_oracle,
    contraction_constants,
    phi_iterate,
    picard_distance,
    remainder_path,
    residual_check,
    solve_picard,
    validate_scenario,
    warm_start,
)
from .experiments import (
    ConvergenceTable,
    DependenceReport,
    NonConvergenceError,
    ScenarioSpec,
    convergence_study,
    dependence_study,
    local_time_study,
)
