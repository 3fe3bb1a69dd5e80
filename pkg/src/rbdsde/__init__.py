"""Reflected backward doubly stochastic equations driven by Teugels martingales.

Finite-atom Lévy models, regulated barriers, a penalised lattice solver, a
Snell-envelope oracle and the structural checks that go with them.
"""

from .config import ExperimentConfig, load_config
from .drivers import Driver, DriverPair, make_driver
from .errors import (
    AssumptionViolation,
    ConfigError,
    ConsistencyError,
    DivergenceError,
    InvalidInputError,
    NumericalError,
    StepSizeError,
)
from .levy import (
    LevyMeasure,
    LevyPath,
    ScenarioTree,
    TeugelsBasis,
    build_tree,
    empirical_bracket,
    moment,
    simulate_levy_path,
    simulate_levy_paths,
    teugels_basis,
    teugels_increment,
)
from .reflection import (
    ConvergenceReport,
    PicardResult,
    mertens_decompose,
    penalization_sweep,
    picard_outer_loop,
    skorokhod_residual,
    snell_oracle,
)
from .regulated import BarrierSpec, JumpArray, RegulatedPath, left_envelope, make_barrier, right_jump_times
from .solver import SolutionTriple, extract_K, project_Z, solve_penalized
from .verify import (
    BetaNorms,
    beta_norms,
    comparison_check,
    comparison_instance,
    doleans_gamma,
    energy_identity_residual,
    representation_residual,
)

__version__ = "0.1.0"
