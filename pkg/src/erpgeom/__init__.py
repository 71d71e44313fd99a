"""Riemannian geometry classification of event-related potentials."""
from .classifier import (
    AdaptationState,
    MdmModel,
    Schedule,
    adapt_means,
    online_update,
    predict,
    score,
    select_target,
    train,
)
from .erp_cov import ErpPrototype, EstimatorConfig, Label, Trial, super_covariance
from .spd import frechet_mean, geodesic, riemannian_distance

__version__ = "0.1.0"
