"""Bump hunting with PRIM and fastPRIM in input and principal-component space."""

__version__ = "0.1.0"

from .boxes import AxisBox, BoxStats
from .datagen import (Dataset, GaussianJointModel, MixtureConfig, ResponseSpec, load_csv,
                      sample_mixture, write_csv)
from .exceptions import (BumpHuntError, DataError, DataParseError, DegenerateDataError,
                         NumericalError, ValidationError)
from .fastprim import (FastPRIM, FastPrimConfig, beta_total, central_box_empirical,
                       central_box_population, fastprim_iterative, fastprim_pca)
from .pca import LinearRule, PCARotation, box_to_input_rule, fit_rotation, rotate
from .prim import PRIM, BoxTrace, PrimConfig, cover, paste_step, peel_step
from .bench import (ExperimentDesign, MetricsRecord, box_volume, gain_profile, mode_mass,
                    population_bump_box, run_experiment, timing_harness)

__all__ = [
    "AxisBox", "BoxStats", "BoxTrace", "BumpHuntError", "DataError", "DataParseError",
    "Dataset", "DegenerateDataError", "ExperimentDesign", "FastPRIM", "FastPrimConfig",
    "GaussianJointModel", "LinearRule", "MetricsRecord", "MixtureConfig", "NumericalError",
    "PCARotation", "PRIM", "PrimConfig", "ResponseSpec", "ValidationError", "beta_total",
    "box_to_input_rule", "box_volume", "central_box_empirical", "central_box_population",
    "cover", "fastprim_iterative", "fastprim_pca", "fit_rotation", "gain_profile", "load_csv",
    "mode_mass", "paste_step", "peel_step", "population_bump_box", "rotate", "run_experiment",
    "sample_mixture", "timing_harness", "write_csv",
]
