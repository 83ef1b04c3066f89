"""Stochastic energy minimization for 1D semilinear elliptic PDEs.

Solves PDEs with random diffusivity by minimizing the expected energy over
a finite-element (x) polynomial-chaos subspace with preconditioned
mini-batch stochastic gradient descent and optional control-variates
variance reduction.
"""

from ._version import __version__
from .evaluation import (
    CdfEstimate,
    EnergyEstimate,
    empirical_cdf,
    estimate_energy,
    exact_energy_mc,
    fit_convergence_rate,
    pointwise_l2_error,
    reference_solve_linear,
)
from .estimators import (
    ControlVariateState,
    GradientSample,
    HessianBlockSample,
    Kernel,
    cv_gradient_sample,
    estimate_cv_lambda,
    gradient_sample,
    hessian_block_sample,
    kernel_for,
    minibatch_average,
    zero_coefficients,
)
from .fem1d import LiftingFunction, Mesh1D, QuadratureRule, quadrature_points
from .pc_basis import (
    MomentTable,
    PcBasisSet,
    eval_all,
    eval_univariate,
    generate_basis,
    linear_weighted_moment,
    moment_table,
    pair_moment,
)
from .problem import (
    Nonlinearity,
    ProblemInstance,
    builtin_linear_homogeneous,
    builtin_linear_nonhomogeneous,
    builtin_semilinear_homogeneous_field,
    builtin_semilinear_nonhomogeneous_field,
)
from .random_field import (
    GermSampler,
    HomogeneousLogNormalField,
    TrigLogNormalField,
    eval_kappa,
    kappa_at_mean,
    kappa_gradient_at_mean,
)
from .experiments import (
    ExperimentConfig,
    ExperimentFailure,
    apply_override,
    config_from_ini,
    config_hash,
    config_to_ini,
    default_config,
    load_coefficients,
    make_problem,
    make_sgd_config,
    run_experiment,
    save_coefficients,
)
from .sgd import (
    LearningRateSchedule,
    SgdConfig,
    SgdDivergenceError,
    Trajectory,
    first_order_run,
    precondition_solve,
    run,
)
