"""Positive steady states and their small-amplitude expansions.

The steady problem is ``Lu + D div(u grad u) + lam u (m - u) = 0``. With the
flux-form discretization ``Lu + D div(u grad u) = L(u + D u^2/2)`` holds
exactly, so the monotone iteration runs on ``w = u + D u^2 / 2``::

    (c - L) w_{k+1} = c w_k + lam u_k (m - u_k)

which preserves ordering once ``c`` dominates the reaction slope in ``w``.
Newton on the discrete residual finishes the solve.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
from scipy import sparse
from scipy.sparse.linalg import splu

from .bifurcation import compute_r
from .eigen import principal_weighted, residual_tolerance, sigma_principal
from .errors import (
    AssumptionViolated,
    HypothesisViolated,
    InvalidArgument,
    OutOfRange,
    PositivityFailure,
    SolverFailure,
    UnsupportedProfile,
)
from .expr import CASE_A1, CASE_NEITHER, GrowthProfile
from .grid import (
    Grid1D,
    cross_diffusion,
    drift_matrix,
    flux_matrix,
    gradient_energy,
    integrate,
    laplacian_matrix,
)

log = logging.getLogger(__name__)

NEWTON_SWITCH = 1e-3
STEADY_TOL = 1e-10
EPS_FLOOR_EXP = 40
MAX_MONOTONE = 50_000
MAX_NEWTON = 60


def residual(g: Grid1D, m: GrowthProfile, lam: float, D: float, u: np.ndarray) -> np.ndarray:
    """``Lu + D div(u grad u) + lam u (m - u)``; zero on pinned Dirichlet nodes."""
    F = laplacian_matrix(g) @ u + D * cross_diffusion(g, u, u) + lam * u * (m.samples - u)
    if g.dirichlet:
        F[[0, -1]] = 0.0
    return F


def jacobian(g: Grid1D, m: GrowthProfile, lam: float, D: float, u: np.ndarray):
    J = (
        laplacian_matrix(g)
        + D * (flux_matrix(g, u) + drift_matrix(g, u))
        + sparse.diags(lam * (m.samples - 2 * u))
    )
    return J.tocsr()


@dataclass(frozen=True)
class SteadyState:
    u: np.ndarray
    lam: float
    D: float
    residual: float
    bracket_low: np.ndarray
    bracket_high: np.ndarray
    iterations: int
    newton_iterations: int = 0
    others: tuple = field(default=())

    @property
    def total(self) -> float:
        return float(np.sum(self.u))


def check_assumption_o(m: GrowthProfile, D: float):
    if m.maxval <= 0:
        raise UnsupportedProfile("max m must be positive")
    if not D > -1.0 / m.maxval:
        raise AssumptionViolated(
            "(O) D > -1/max m", f"D={D:g}, -1/max m={-1.0 / m.maxval:g}"
        )


def _check_lambda_range(g, m, lam):
    if not np.isfinite(lam) or lam <= 0:
        raise InvalidArgument(f"lambda must be positive, got {lam}")
    if m.case == CASE_NEITHER and not g.dirichlet:
        raise UnsupportedProfile(f"profile {m.source!r} is neither (A1) nor (A2)")
    if g.dirichlet or m.case == CASE_A1:
        lam_star = principal_weighted(g, m).lambda_star
        if lam <= lam_star:
            raise OutOfRange(
                "lambda > lambda*", f"lambda={lam:g}, lambda*={lam_star:.6g}"
            )


def bracket(g: Grid1D, m: GrowthProfile, lam: float, D: float):
    """Ordered sub/supersolution pair ``(eps * varphi_1, max m)``."""
    check_assumption_o(m, D)
    _check_lambda_range(g, m, lam)
    sig = sigma_principal(g, m, lam)
    if sig.sigma1 <= 0:
        raise OutOfRange("sigma_1 > 0", f"sigma_1={sig.sigma1:.3g}")
    K = m.maxval
    high = np.full(g.n, K)
    if g.dirichlet:
        high[[0, -1]] = 0.0
    idx = g.free
    for k in range(EPS_FLOOR_EXP + 1):
        low = 2.0**-k * sig.varphi1
        if np.any(low > high):
            continue
        if np.all(residual(g, m, lam, D, low)[idx] >= 0):
            return low, high
    raise SolverFailure(f"no subsolution eps*varphi_1 with eps >= 2^-{EPS_FLOOR_EXP}")


def _kirchhoff(u, D):
    return u + 0.5 * D * u * u


def _kirchhoff_inv(w, D):
    disc = 1.0 + 2.0 * D * w
    if np.any(disc < 0):
        raise SolverFailure("monotone iterate left the range where 1 + D u > 0")
    return 2.0 * w / (1.0 + np.sqrt(disc))


def _shift(m, lam, D, umax):
    """Smallest ``c`` making ``c w + lam u (m - u)`` nondecreasing in ``w`` on [0, umax]."""
    slopes = []
    for u in (0.0, umax):
        denom = 1.0 + D * u
        slopes.append(np.max(2 * u - m) / denom)
    return 1.01 * lam * max(max(slopes), 0.0) + 1e-12


class _Picard:
    def __init__(self, g, m, lam, D, umax):
        self.g, self.m, self.lam, self.D = g, m, lam, D
        idx = g.free
        self.idx = idx
        self.c = _shift(m.samples[idx], lam, D, umax)
        Lf = laplacian_matrix(g)[idx][:, idx]
        self.lu = splu((self.c * sparse.identity(len(idx)) - Lf).tocsc())

    def step(self, u):
        idx = self.idx
        uf = u[idx]
        w = _kirchhoff(uf, self.D)
        rhs = self.c * w + self.lam * uf * (self.m.samples[idx] - uf)
        out = np.zeros_like(u)
        out[idx] = _kirchhoff_inv(self.lu.solve(rhs), self.D)
        return out


def _newton(g, m, lam, D, u, tol):
    idx = g.free
    F = residual(g, m, lam, D, u)
    fnorm = np.max(np.abs(F))
    its = 0
    while fnorm > tol and its < MAX_NEWTON:
        J = jacobian(g, m, lam, D, u)[idx][:, idx].tocsc()
        try:
            du = splu(J).solve(-F[idx])
        except RuntimeError as exc:
            raise SolverFailure(f"singular Jacobian in Newton step: {exc}") from exc
        t = 1.0
        while True:
            trial = u.copy()
            trial[idx] += t * du
            Ft = residual(g, m, lam, D, trial)
            fn = np.max(np.abs(Ft))
            if fn < fnorm or t < 1e-4:
                break
            t *= 0.5
        its += 1
        if fn >= fnorm:
            # stagnated at the roundoff floor
            break
        u, F, fnorm = trial, Ft, fn
    return u, fnorm, its


def _floor_tol(g, u, tol):
    return max(tol, residual_tolerance(laplacian_matrix(g), u))


def solve_steady(
    g: Grid1D,
    m: GrowthProfile,
    lam: float,
    D: float,
    initial: np.ndarray | None = None,
    tol: float = STEADY_TOL,
) -> SteadyState:
    """Positive steady state via monotone iteration from both bracket ends plus Newton.

    With ``initial`` given, the same fixed-point map is started from that field
    instead (used for multi-start uniqueness checks).
    """
    low, high = bracket(g, m, lam, D)
    K = m.maxval

    if initial is not None:
        u0 = g.field(initial).copy()
        if g.dirichlet:
            u0[[0, -1]] = 0.0
        if np.any(u0[g.free] <= 0):
            raise InvalidArgument("initial field must be positive")
        pic = _Picard(g, m, lam, D, max(K, float(u0.max())))
        starts = [u0]
    else:
        pic = _Picard(g, m, lam, D, K)
        starts = [low.copy(), high.copy()]

    iterations = 0
    for _ in range(MAX_MONOTONE):
        # relative to the iterate: small states need a tighter handover
        res = [np.max(np.abs(residual(g, m, lam, D, s))) / np.max(np.abs(s)) for s in starts]
        if max(res) < NEWTON_SWITCH:
            break
        starts = [pic.step(s) for s in starts]
        iterations += 1
    else:
        log.warning("monotone iteration hit %d steps; handing over to Newton", MAX_MONOTONE)

    limits = []
    newton_its = 0
    for s in starts:
        eff = _floor_tol(g, s, tol)
        u, fnorm, its = _newton(g, m, lam, D, s, eff)
        newton_its += its
        if not np.isfinite(fnorm) or fnorm > eff:
            raise SolverFailure(f"Newton stalled at residual {fnorm:.3g} (tolerance {eff:.3g})")
        limits.append((u, fnorm))

    u, fnorm = limits[0]
    if np.min(u[g.free]) <= 0:
        raise PositivityFailure(f"converged state has min u = {np.min(u[g.free]):.3g}")
    others = tuple(v for v, _ in limits[1:] if np.max(np.abs(v - u)) > 1e-8)
    if others:
        log.info("monotone iteration found %d distinct limits", 1 + len(others))
    return SteadyState(
        u=u,
        lam=float(lam),
        D=float(D),
        residual=float(fnorm),
        bracket_low=low,
        bracket_high=high,
        iterations=iterations,
        newton_iterations=newton_its,
        others=others,
    )


def _bordered_solve(g, A, border_col, border_row, rhs):
    """Solve ``A y + nu * col = rhs``, ``row . y = 0`` on the free nodes."""
    idx = g.free
    Af = A[idx][:, idx]
    col = border_col[idx][:, None]
    row = border_row[idx][None, :]
    M = sparse.bmat([[Af, sparse.csr_matrix(col)], [sparse.csr_matrix(row), None]]).tocsc()
    b = np.concatenate([rhs[idx], [0.0]])
    try:
        sol = splu(M).solve(b)
    except RuntimeError as exc:
        raise SolverFailure(f"singular bordered system: {exc}") from exc
    if not np.all(np.isfinite(sol)):
        raise SolverFailure("bordered solve produced non-finite values")
    return g.embed(sol[:-1]), float(sol[-1])


@dataclass(frozen=True)
class ExpansionA1:
    lambda_star: float
    phi: np.ndarray
    alpha_star: float
    xi_star: np.ndarray
    r1: float
    r2: float
    lam: float
    u_approx: np.ndarray

    def at(self, lam: float) -> np.ndarray:
        s = lam - self.lambda_star
        return self.alpha_star * s * (self.phi + s * self.xi_star)


def expansion_a1(g: Grid1D, m: GrowthProfile, D: float, lam: float) -> ExpansionA1:
    """Leading-order branch ``u ~ alpha*(lam - lam*)[phi + (lam - lam*) xi*]`` near lam*."""
    if not g.dirichlet and m.case != CASE_A1:
        raise UnsupportedProfile(f"A1 expansion needs an (A1) profile, got {m.case}")
    eig = principal_weighted(g, m)
    phi = eig.phi
    lam_star = eig.lambda_star
    r1, r2 = compute_r(g, m, D)
    if not r1 - r2 > 0:
        raise HypothesisViolated("(H1) r1 - r2 > 0", f"r1-r2={r1 - r2:.6g}")
    mphi2 = integrate(g, m.samples * phi**2)
    alpha = mphi2 / (r1 - r2)
    A = laplacian_matrix(g) + sparse.diags(lam_star * m.samples)
    rhs = -(alpha * D * cross_diffusion(g, phi, phi) + (m.samples - lam_star * alpha * phi) * phi)
    xi, _ = _bordered_solve(g, A, phi, g.weights * phi, rhs)
    exp = ExpansionA1(lam_star, phi, alpha, xi, r1, r2, float(lam), np.zeros(g.n))
    object.__setattr__(exp, "u_approx", exp.at(lam))
    return exp


@dataclass(frozen=True)
class ExpansionA2:
    mean: float
    rho: np.ndarray
    C: float
    gamma: np.ndarray
    K: float
    f_gamma: np.ndarray
    f_gamma_integral: float

    def at(self, lam: float) -> np.ndarray:
        return self.mean + lam * (self.rho + self.C) + lam**2 * (self.gamma + self.K)


def expansion_a2(g: Grid1D, m: GrowthProfile, D: float) -> ExpansionA2:
    """Small-lambda expansion ``u ~ mbar + lam (rho + C) + lam^2 (gamma + K)``."""
    if g.dirichlet:
        raise UnsupportedProfile("the small-lambda expansion is for Neumann conditions")
    mbar = m.mean
    if not mbar > 0:
        raise UnsupportedProfile(f"A2 expansion needs mean m > 0, got {mbar:.6g}")
    check_assumption_o(m, D)
    kappa = 1.0 + D * mbar
    if kappa <= 0:
        raise AssumptionViolated("1 + D mbar > 0", f"1 + D mbar = {kappa:g}")
    mm = m.samples
    ones = np.ones(g.n)
    A = kappa * laplacian_matrix(g)
    rho, _ = _bordered_solve(g, A, ones, g.weights, -mbar * (mm - mbar))
    C = kappa * gradient_energy(g, ones, rho) / (mbar**2 * g.L)
    f_gamma = D * cross_diffusion(g, rho + C, rho) + (rho + C) * (mm - 2 * mbar)
    f_int = integrate(g, f_gamma)
    scale = max(1.0, float(np.max(np.abs(f_gamma))))
    if abs(f_int) > 1e-6 * scale:
        raise SolverFailure(f"solvability violated: int f_gamma = {f_int:.3g}")
    gamma, _ = _bordered_solve(g, A, ones, g.weights, -f_gamma)
    K = (integrate(g, gamma * (mm - mbar)) - integrate(g, (rho + C) ** 2)) / (mbar * g.L)
    return ExpansionA2(mbar, rho, float(C), gamma, float(K), f_gamma, f_int)
