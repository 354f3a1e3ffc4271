"""Subspace direction-of-arrival estimation in the large-array regime.

MUSIC, G-MUSIC (weighted and contour-integral forms) and the spatial
periodogram on a uniform linear array, with the random-matrix limits that
predict their behaviour and a seeded Monte-Carlo harness to check them.
"""
__version__ = "0.1.0"

from .array_model import ArrayScenario, sample_covariance, steering, synthesize  # noqa: E402
from .monte_carlo import ExperimentPlan, MseRecord, mse_sweep, run_trials, threshold_point  # noqa: E402
from .rmt import SpikeModel, TwoSourceModel, predict_variance  # noqa: E402
from .subspace import eig_hermitian, extract_doas, gmusic_spectrum, traditional_spectrum  # noqa: E402

__all__ = [
    "ArrayScenario",
    "ExperimentPlan",
    "MseRecord",
    "SpikeModel",
    "TwoSourceModel",
    "eig_hermitian",
    "extract_doas",
    "gmusic_spectrum",
    "mse_sweep",
    "predict_variance",
    "run_trials",
    "sample_covariance",
    "steering",
    "synthesize",
    "threshold_point",
    "traditional_spectrum",
]
