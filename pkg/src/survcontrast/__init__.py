"""Nonparametric tests of whether the counterfactual survival probability at a
fixed time is constant over a continuous exposure."""
from ._accel import backend
from .contrast import (ContrastClassSpec, ExposureGrid, SupResult, build_grid, sup_box_tv,
                       sup_indicator, sup_monotone_variance, sup_statistic)
from .data import (ClassKind, Dataset, Observation, TestConfig, ValidationError, load_csv,
                   save_csv, validate)
from .estimator import PsiVector, ThetaCurve, psi_onestep_batch, psi_plugin, theta_curve, theta_plugin
from .nuisance import CoxModel, DensityModel, NuisanceFit, fit_conditional_density, fit_cox, fit_nuisances
from .nulldist import NullSampler, TestResult, build_covariance, draw_null_sup, p_value, run_test
from .sim import SimReport, SimSetting, run_replications, simulate_dataset

__version__ = "0.1.0"

__all__ = [
    "ClassKind", "ContrastClassSpec", "CoxModel", "Dataset", "DensityModel", "ExposureGrid",
    "NuisanceFit", "NullSampler", "Observation", "PsiVector", "SimReport", "SimSetting",
    "SupResult", "TestConfig", "TestResult", "ThetaCurve", "ValidationError", "backend",
    "build_covariance", "build_grid", "draw_null_sup", "fit_conditional_density", "fit_cox",
    "fit_nuisances", "load_csv", "p_value", "psi_onestep_batch", "psi_plugin",
    "run_replications", "run_test", "save_csv", "simulate_dataset", "sup_box_tv",
    "sup_indicator", "sup_monotone_variance", "sup_statistic", "theta_curve", "theta_plugin",
    "validate",
]
