"""Random products of positive maps on matrix algebras.

Positive maps and their projective metric, stationary drivers that pick the
maps, scaled products along sample paths, and the statistics built on them
(Lyapunov exponent, LLN curves, CLT samples and variance estimators).
"""

from .cocycle import (
    ScaledProduct,
    adjoint_backward,
    batch_backward,
    batch_forward,
    estimate_Z,
    forward_cocycle,
    perron_sequence,
    stopping_times,
)
from .drivers import (
    Driver,
    PathWindow,
    alpha_bound,
    deterministic_driver,
    driver_from_config,
    iid_driver,
    iter_path,
    markov_driver,
    rotation_driver,
    sample_path,
    stationary_dist,
)
from .errors import (
    ConfigError,
    ConvergenceError,
    DestructiveImageError,
    DriverError,
    ErgoprocError,
    ExperimentError,
    ResourceError,
    UsageError,
)
from .experiments import ExperimentConfig, ExperimentReport, report_render, run
from .families import amplitude_damping, depolarizing, diag_kraus, kraus_scaled, parse_map, random_cp
from .maps import (
    PositiveMap,
    adjoint,
    apply,
    compose,
    is_irreducible,
    is_strictly_positive,
    op_norm,
    perron_left,
    perron_right,
    v_of,
)
from .metric import contraction_coeff, dist, hilbert_metric, m_coeff, projective_action
from .stats import (
    clt_gate,
    clt_samples,
    kappa,
    ks_normality,
    lln_curves,
    lyapunov,
    sigma_batch_means,
    sigma_direct,
    sigma_estimate,
    sigma_martingale,
    xi_samples,
)

__version__ = "0.1.0"
