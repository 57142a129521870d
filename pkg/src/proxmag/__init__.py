"""Proximal maps for magnitude-only regularization of complex-valued images.

The package provides the magnitude-lift proximal map (fast phase-correction
path plus a Douglas-Rachford fallback), a catalog of proximable
regularizers, PDHG and Douglas-Rachford solvers, a parametric level-set
projection, and a synthetic SAR forward/adjoint model, so regularized
coherent reconstructions run end-to-end at desk scale.
"""

from .core import (
    AdjointReport,
    CallableOperator,
    ComplexImage,
    ConvergenceError,
    IdentityOperator,
    LinearOperator,
    MagPhase,
    MatrixOperator,
    adjoint_check,
    decompose,
    operator_norm_estimate,
    recompose,
)
from .cimg import read_cimg, write_cimg
from .prox import (
    MagLiftReport,
    ProxFunction,
    ZeroFunction,
    bounded_prox,
    brute_force_prox_oracle,
    lift_objective,
    magnitude_lift,
    project_nonneg,
    prox_f_shifted,
)
from .regularizers import (
    BoxIndicator,
    GenTikhonov,
    GradientOperator,
    MatrixWeightedL1,
    MultiBang,
    MultiBangLevels,
    SquaredL2,
    SymGradientOperator,
    Tgv2,
    TotalVariation,
    WeightedLp,
    gen_tikhonov_prox,
    make_regularizer,
    multibang_prox,
    tgv2_eval,
    tgv2_prox,
    tv_eval,
    tv_prox,
)
from .levelset import (
    LevelSetParams,
    levelset_project,
    levelset_prox_complex,
    make_grid,
    palentir_jacobian,
    palentir_render,
)
from .sar import (
    MultiChannelOperator,
    PhantomSpec,
    PhaseHistory,
    SarFrequencyOperator,
    SarGeometry,
    SarTimeOperator,
    Scene,
    SceneGrid,
    adjoint_freq,
    backproject_time,
    circular_geometry,
    default_phantom,
    forward_freq,
    forward_time,
    linear_geometry,
    make_phantom,
    multi_channel_operator,
    simulate_scene,
)
from .solvers import (
    ReconstructionProblem,
    SolverConfig,
    SolverTrace,
    douglas_rachford,
    pdhg,
    prox_l2_data_conjugate,
    reconstruct,
)
from .suites import SUITE_NAMES, run_suite

__version__ = "0.1.0"
