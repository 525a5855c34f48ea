"""Steady states, Hopf thresholds, delay spectra and simulations for the
memory-diffusion logistic model ``u_t = u_xx + D (u (u_tau)_x)_x + lam u (m - u)``."""

__version__ = "0.1.0"

from .bifurcation import HopfData, classify_region, compute_r, critical_D, hopf_quantities
from .dynamics import SimTrace, classify_attractor, simulate
from .eigen import dense_spectrum, principal_weighted, sigma_principal
from .expr import parse, sample_profile
from .grid import cross_diffusion, integrate, laplacian_matrix, make_grid
from .spectrum import (
    assemble_linearization,
    delay_rightmost,
    find_crossing,
    tau_zero_spectrum,
    transversality,
)
from .steady import bracket, expansion_a1, expansion_a2, solve_steady

__all__ = [
    "HopfData",
    "SimTrace",
    "assemble_linearization",
    "bracket",
    "classify_attractor",
    "classify_region",
    "compute_r",
    "critical_D",
    "cross_diffusion",
    "delay_rightmost",
    "dense_spectrum",
    "expansion_a1",
    "expansion_a2",
    "find_crossing",
    "hopf_quantities",
    "integrate",
    "laplacian_matrix",
    "make_grid",
    "parse",
    "principal_weighted",
    "sample_profile",
    "sigma_principal",
    "simulate",
    "solve_steady",
    "tau_zero_spectrum",
    "transversality",
]
