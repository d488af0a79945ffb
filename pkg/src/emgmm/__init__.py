"""EM on isotropic Gaussian mixtures with known weights: updates, theory, checks."""

from .core import (
    CenterSet,
    Dataset,
    MixtureModel,
    grad_weight,
    log_density,
    posterior_matrix,
    posterior_weights,
    sample_dataset,
)
from .em import (
    EmConfig,
    Matching,
    StopReason,
    Trajectory,
    em_step_population,
    em_step_sample,
    run_em,
    statistical_error,
)
from .errors import (
    DegenerateModelError,
    DomainError,
    GeometryError,
    ShapeError,
    ValidationError,
    WeightCollapseError,
)
from .kernels import BACKEND

__version__ = "0.1.0"
