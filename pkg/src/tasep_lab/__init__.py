"""Exact event-driven simulation of boundary-driven TASEP on the half-line."""

from .core import HOLE, BoundaryMechanism, Configuration, InvalidParamsError, ModelParams, Transition, concrete_mechanism
from .coupling import CoupledEnsemble, EnsembleMember, check_attractivity, sandwich
from .engine import Bernoulli, RunSpec, Simulation, WindowOverflowError, evolve
from .estimators import (
    EstimateWithCI,
    density_profile,
    estimate_class_rates,
    estimate_current,
    estimate_event_rate,
    estimate_first_order,
    estimate_survival,
    rho_from_current,
)
from .multiclass import check_projection_identity, project
from .oracle import FiniteModelSpec, exact_entry_current, solve

__all__ = [
    "HOLE", "BoundaryMechanism", "Configuration", "InvalidParamsError", "ModelParams", "Transition",
    "concrete_mechanism", "CoupledEnsemble", "EnsembleMember", "check_attractivity", "sandwich",
    "Bernoulli", "RunSpec", "Simulation", "WindowOverflowError", "evolve", "EstimateWithCI",
    "density_profile", "estimate_class_rates", "estimate_current", "estimate_event_rate",
    "estimate_first_order", "estimate_survival", "rho_from_current", "check_projection_identity",
    "project", "FiniteModelSpec", "exact_entry_current", "solve",
]
