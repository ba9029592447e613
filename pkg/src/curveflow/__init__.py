"""Parametric finite element simulation of anisotropic surface diffusion for curves."""

from .anisotropy import (
    ConditionReport,
    Ellipsoidal,
    FourierSeries,
    GammaSpec,
    Isotropic,
    KFold,
    RiemannianMetric,
    Verdict,
    certify,
    check_c3,
    check_ellipsoidal,
    check_fourier,
    check_generic,
    check_kfold,
    check_riemannian,
    gamma_from_dict,
    is_certified,
)
from .driver import RunResult, Shape, SimulationConfig, Termination, run
from .errors import CurveflowError
from .fem import assemble, solve
from .geometry import PolyCurve, Topology, enclosed_area, interface_energy, load_curve, manifold_distance, save_curve

__version__ = "0.1.0"

__all__ = [
    "ConditionReport",
    "CurveflowError",
    "Ellipsoidal",
    "FourierSeries",
    "GammaSpec",
    "Isotropic",
    "KFold",
    "PolyCurve",
    "RiemannianMetric",
    "RunResult",
    "Shape",
    "SimulationConfig",
    "Termination",
    "Topology",
    "Verdict",
    "assemble",
    "certify",
    "check_c3",
    "check_ellipsoidal",
    "check_fourier",
    "check_generic",
    "check_kfold",
    "check_riemannian",
    "enclosed_area",
    "gamma_from_dict",
    "interface_energy",
    "is_certified",
    "load_curve",
    "manifold_distance",
    "run",
    "save_curve",
    "solve",
]
