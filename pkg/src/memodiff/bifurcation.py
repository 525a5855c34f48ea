"""Scalar Hopf quantities near the principal eigenvalue and the (r1, r2) regions.

``r1 = lam* int phi^3`` and ``r2 = D int phi div(phi grad phi) = -D int phi |grad phi|^2``.
Both are cubic in the scale of ``phi``, so ``Dbar``, ``theta*`` and ``h*`` do
not depend on the normalization; ``r1``, ``r2`` and ``alpha*`` do.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .eigen import Normalization, normalize, principal_weighted
from .errors import DegenerateProfile, HypothesisViolated, OutOfRange
from .expr import GrowthProfile
from .grid import Grid1D, cross_diffusion, gradient_energy, integrate

REGION_I = "I"
REGION_II = "II"
REGION_III = "III"
DEFAULT_N_TAU = 5
CROSS_CHECK_TOL = 1e-6


@dataclass(frozen=True)
class RParts:
    """Normalization-dependent pieces shared by ``r1``, ``r2`` and ``Dbar``."""

    lambda_star: float
    phi: np.ndarray
    phi_cubed: float
    grad_energy: float
    m_phi2: float
    phi2: float
    normalization: Normalization

    @property
    def r1(self) -> float:
        return self.lambda_star * self.phi_cubed

    def r2(self, D: float) -> float:
        return -D * self.grad_energy


def r_parts(g: Grid1D, m: GrowthProfile, normalization="unit-l2") -> RParts:
    eig = principal_weighted(g, m)
    mode = Normalization(normalization)
    phi = normalize(g, eig.phi, mode)
    energy = gradient_energy(g, phi, phi)
    direct = -integrate(g, phi * cross_diffusion(g, phi, phi))
    if abs(direct - energy) > CROSS_CHECK_TOL * max(1.0, abs(energy)):
        raise DegenerateProfile(
            f"face and nodal forms of int phi|grad phi|^2 disagree: {energy:.12g} vs {direct:.12g}"
        )
    return RParts(
        lambda_star=eig.lambda_star,
        phi=phi,
        phi_cubed=integrate(g, phi**3),
        grad_energy=energy,
        m_phi2=integrate(g, m.samples * phi**2),
        phi2=integrate(g, phi**2),
        normalization=mode,
    )


def compute_r(g: Grid1D, m: GrowthProfile, D: float, normalization="unit-l2"):
    """Return ``(r1, r2)`` for the given eigenfunction normalization."""
    parts = r_parts(g, m, normalization)
    return parts.r1, parts.r2(D)


def critical_D(g: Grid1D, m: GrowthProfile, normalization="unit-l2") -> float:
    """Memory rate at which ``r1 + r2(D) = 0``."""
    parts = r_parts(g, m, normalization)
    return _dbar(parts)


def _dbar(parts: RParts) -> float:
    if not parts.grad_energy > 1e-14 * max(1.0, abs(parts.phi_cubed)):
        raise DegenerateProfile("int phi |grad phi|^2 vanishes; Dbar undefined")
    return parts.r1 / parts.grad_energy


def classify_region(r1: float, r2: float) -> str:
    if r1 - r2 <= 0:
        return REGION_III
    if r1 + r2 < 0:
        return REGION_II
    return REGION_I


@dataclass(frozen=True)
class HopfData:
    r1: float
    r2: float
    Dbar: float
    alpha_star: float
    lambda_star: float
    lam: float
    D: float
    region: str
    normalization: str
    theta_star: float | None = None
    h_star: float | None = None
    omega: float | None = None
    tau_list: tuple = field(default=())


def hopf_quantities(
    g: Grid1D,
    m: GrowthProfile,
    D: float,
    lam: float,
    normalization="unit-l2",
    N: int = DEFAULT_N_TAU,
) -> HopfData:
    """Leading-order Hopf data at ``lam``; region I yields no delays.

    Region III, or ``lam <= lam*``, raises ``HypothesisViolated`` naming the
    failing inequality.
    """
    parts = r_parts(g, m, normalization)
    r1, r2 = parts.r1, parts.r2(D)
    lam_star = parts.lambda_star
    if not lam > lam_star:
        raise OutOfRange("lambda > lambda*", f"lambda={lam:g}, lambda*={lam_star:.6g}")
    if not r1 - r2 > 0:
        raise HypothesisViolated("(H1) r1 - r2 > 0", f"r1-r2={r1 - r2:.6g}")
    region = classify_region(r1, r2)
    try:
        dbar = _dbar(parts)
    except DegenerateProfile:
        dbar = math.nan
    base = dict(
        r1=r1,
        r2=r2,
        Dbar=dbar,
        alpha_star=parts.m_phi2 / (r1 - r2),
        lambda_star=lam_star,
        lam=float(lam),
        D=float(D),
        region=region,
        normalization=parts.normalization.value,
    )
    if region == REGION_I:
        return HopfData(**base)
    theta = math.acos(r1 / r2)
    h = math.sqrt((r1 + r2) / (r2 - r1)) * parts.m_phi2 / parts.phi2
    omega = h * (lam - lam_star)
    taus = tuple((theta + 2 * k * math.pi) / omega for k in range(N + 1))
    return HopfData(**base, theta_star=theta, h_star=h, omega=omega, tau_list=taus)
