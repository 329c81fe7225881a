"""Exact and finite-dimensional checks for conformal measures on {0,1}^Z, their lifts to
Z^2-subsets, odometer towers with Riesz-product spectra, and truncated isometric
representations of N^2."""

from .formal import FormalWeight, LogReal
from .symbolic import (Cylinder, CylinderMeasure, check_conformal, make_orbit_measure,
                       make_product_conformal, pushforward_kappa)
from .lattice import (LatticeVector, StaircaseProfile, apply_psi, check_equivariance, check_lift,
                      lift_measure, make_phi)
from .odometer import TowerSystem, choose_frequencies, kac_check, tower_mass, tower_step
from .riesz import RieszSpec, compare_spectra, koopman_autocorrelation, riesz_coefficient
from .isometry import (build_operator2_rep, build_staircase_rep, build_theta1_rep, eigenvector_xi,
                       measure_from_eigenvector, one_conformality_probe)
from .oracle import OracleStore, record_oracle

__all__ = [
    "FormalWeight",
    "LogReal",
    "Cylinder",
    "CylinderMeasure",
    "check_conformal",
    "make_orbit_measure",
    "make_product_conformal",
    "pushforward_kappa",
    "LatticeVector",
    "StaircaseProfile",
    "apply_psi",
    "check_equivariance",
    "check_lift",
    "lift_measure",
    "make_phi",
    "TowerSystem",
    "choose_frequencies",
    "kac_check",
    "tower_mass",
    "tower_step",
    "RieszSpec",
    "compare_spectra",
    "koopman_autocorrelation",
    "riesz_coefficient",
    "build_operator2_rep",
    "build_staircase_rep",
    "build_theta1_rep",
    "eigenvector_xi",
    "measure_from_eigenvector",
    "one_conformality_probe",
    "OracleStore",
    "record_oracle",
]

__version__ = "0.1.0"
