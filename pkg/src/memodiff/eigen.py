"""Principal eigenpairs of -phi'' = lambda m phi and of Delta + lambda m.

Both problems are self-adjoint in the quadrature inner product, so they are
solved through the symmetric tridiagonal matrix ``W^{1/2} L W^{-1/2}``.
The principal weighted eigenvalue is the positive root of
``sigma_1(lambda) = 0``, where ``sigma_1`` is the top eigenvalue of
``Delta + lambda m``; its eigenvector is the positive branch by construction.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np
from scipy import linalg, sparse
from scipy.optimize import brentq

from .errors import InvalidArgument, Refused, SolverFailure, UnsupportedProfile
from .expr import CASE_A1, CASE_NEITHER, GrowthProfile
from .grid import Grid1D, integrate, laplacian_matrix

EIG_TOL = 1e-10
MAX_ITER = 500
DENSE_LIMIT = 2000


class Normalization(str, enum.Enum):
    UNIT_L2 = "unit-l2"
    RAW = "raw"


def normalize(g: Grid1D, phi: np.ndarray, mode: str | Normalization = Normalization.UNIT_L2):
    """Scale a single-signed eigenfunction to be positive.

    ``unit-l2`` gives ``int phi^2 = 1``; ``raw`` gives ``max phi = 1``, which is
    ``phi = sin x`` for the Dirichlet problem on [0, pi].
    """
    mode = Normalization(mode)
    phi = np.asarray(phi, dtype=float)
    phi = phi * np.sign(phi[np.argmax(np.abs(phi))])
    if mode is Normalization.RAW:
        return phi / np.max(phi)
    return phi / np.sqrt(integrate(g, phi**2))


@dataclass(frozen=True)
class PrincipalEig:
    lambda_star: float
    phi: np.ndarray
    residual: float


@dataclass(frozen=True)
class SigmaEig:
    sigma1: float
    varphi1: np.ndarray
    residual: float


class _SymmetricLaplacian:
    """Symmetric tridiagonal form of the Laplacian restricted to free nodes."""

    def __init__(self, g: Grid1D):
        self.g = g
        idx = g.free
        Lf = laplacian_matrix(g)[idx][:, idx].tocsr()
        self.L = Lf
        w = g.weights[idx]
        self.sqw = np.sqrt(w)
        self.diag = Lf.diagonal()
        upper = Lf.diagonal(1)
        self.off = self.sqw[:-1] * upper / self.sqw[1:]

    def polish(self, shift_diag: np.ndarray, v: np.ndarray, steps: int = 2):
        """Inverse iteration for the top eigenvector, assumed near eigenvalue zero.

        ``eps I - T`` is an M-matrix, so a pivot-free Thomas sweep on a
        positive right-hand side involves only additions of positive terms.
        Exponentially small tails thus stay positive and accurate, where a
        pivoted solve leaves roundoff of either sign.
        """
        y = np.abs(v * self.sqw)
        d = self.diag + shift_diag
        a = 1e-12 * np.max(np.abs(d)) - d
        c = self.off
        n = len(a)
        piv = np.empty(n)
        piv[0] = a[0]
        for i in range(1, n):
            piv[i] = a[i] - c[i - 1] ** 2 / piv[i - 1]
        if np.any(piv <= 0):
            return v  # shift is not above the top eigenvalue; keep the input
        for _ in range(steps):
            b = y.copy()
            for i in range(1, n):
                b[i] += c[i - 1] * b[i - 1] / piv[i - 1]
            y[-1] = b[-1] / piv[-1]
            for i in range(n - 2, -1, -1):
                y[i] = (b[i] + c[i] * y[i + 1]) / piv[i]
            y /= np.linalg.norm(y)
        return y / self.sqw

    def top(self, shift_diag: np.ndarray):
        vals, vecs = linalg.eigh_tridiagonal(
            self.diag + shift_diag,
            self.off,
            select="i",
            select_range=(len(self.diag) - 1, len(self.diag) - 1),
        )
        return float(vals[0]), vecs[:, 0] / self.sqw

    def top_positive(self, shift_diag: np.ndarray):
        """Top eigenpair with a single-signed vector, plus a degeneracy flag.

        Bumps in well separated patches of ``m > 0`` couple only through
        exponentially small tails, so the top two eigenvalues can agree to
        roundoff and the solver returns an arbitrary mix. In that case the
        single-signed member of the two-dimensional eigenspace is returned.
        """
        n = len(self.diag)
        if n < 2:
            sigma, v = self.top(shift_diag)
            return sigma, v, False
        d = self.diag + shift_diag
        vals, vecs = linalg.eigh_tridiagonal(d, self.off, select="i", select_range=(n - 2, n - 1))
        scale = max(1.0, float(np.max(np.abs(d))))
        v1 = vecs[:, 1]
        v1 = v1 * np.sign(v1[np.argmax(np.abs(v1))])
        if vals[1] - vals[0] > 1e3 * np.finfo(float).eps * scale or np.min(v1) >= -1e-12:
            return float(vals[1]), v1 / self.sqw, False
        theta = np.linspace(0.0, np.pi, 3601)
        cand = np.outer(np.cos(theta), vecs[:, 1]) + np.outer(np.sin(theta), vecs[:, 0])
        cand *= np.sign(cand[np.arange(len(theta)), np.argmax(np.abs(cand), axis=1)])[:, None]
        score = cand.min(axis=1) / np.abs(cand).max(axis=1)
        best = cand[int(np.argmax(score))]
        best = np.where(np.abs(best) < 1e-14 * np.max(np.abs(best)), np.abs(best), best)
        return float(vals[1]), best / np.linalg.norm(best) / self.sqw, True


def residual_tolerance(L, v) -> float:
    """``EIG_TOL``, or a 100-ulp floor on ``|L| |v|`` when that is larger."""
    scale = float(abs(L).sum(axis=1).max()) * float(np.max(np.abs(v)))
    return max(EIG_TOL, 100 * np.finfo(float).eps * scale)


def _check_lambda(lam):
    if not np.isfinite(lam) or lam < 0:
        raise InvalidArgument(f"lambda must be a nonnegative real, got {lam}")


def sigma_principal(g: Grid1D, m: GrowthProfile, lam: float) -> SigmaEig:
    """Top eigenpair of ``Delta + lam m`` with positive unit-L2 eigenfunction."""
    _check_lambda(lam)
    op = _SymmetricLaplacian(g)
    mf = m.samples[g.free]
    sigma, v, degenerate = op.top_positive(lam * mf)
    if not degenerate:
        v = op.polish(lam * mf - sigma, v)
    phi = g.embed(v)
    phi = normalize(g, phi)
    res = op.L @ phi[g.free] + lam * mf * phi[g.free] - sigma * phi[g.free]
    return SigmaEig(sigma, phi, float(np.max(np.abs(res))))


def principal_weighted(g: Grid1D, m: GrowthProfile) -> PrincipalEig:
    """Principal eigenpair of ``-phi'' = lambda m phi`` under the grid's BC."""
    if g.dirichlet:
        if m.maxval <= 0:
            raise UnsupportedProfile("Dirichlet weighted problem needs m > 0 somewhere")
    elif m.case == CASE_NEITHER:
        raise UnsupportedProfile(f"profile {m.source!r} is neither (A1) nor (A2)")
    elif m.case != CASE_A1:
        phi = np.full(g.n, 1.0 / np.sqrt(g.L))
        return PrincipalEig(0.0, phi, 0.0)

    op = _SymmetricLaplacian(g)
    mf = m.samples[g.free]

    def sigma(lam):
        return op.top(lam * mf)[0]

    lo, hi = _bracket_root(sigma, g, m)
    try:
        lam_star, info = brentq(
            sigma, lo, hi, xtol=1e-15, rtol=8.9e-16, maxiter=MAX_ITER, full_output=True
        )
    except (RuntimeError, ValueError) as exc:
        raise SolverFailure(f"principal eigenvalue root-find failed: {exc}") from exc
    if not info.converged:
        raise SolverFailure("principal eigenvalue root-find did not converge")

    _, v, degenerate = op.top_positive(lam_star * mf)
    if not degenerate:
        v = op.polish(lam_star * mf, v)
    phi = normalize(g, g.embed(v))
    interior = phi[g.free]
    if np.any(interior <= 0):
        raise SolverFailure("principal eigenfunction is not positive")
    # pencil Rayleigh quotient, stationary at the eigenpair
    w = g.weights[g.free]
    lam_star = float(-(w * interior) @ (op.L @ interior) / np.sum(w * mf * interior**2))
    res = -(op.L @ interior) - lam_star * mf * interior
    residual = float(np.max(np.abs(res)))
    tol = residual_tolerance(op.L, interior)
    if residual > tol:
        raise SolverFailure(f"eigen-residual {residual:.3g} above tolerance {tol:.3g}")
    return PrincipalEig(float(lam_star), phi, residual)


def _bracket_root(sigma, g, m):
    """Find ``lo < hi`` with ``sigma(lo) < 0 < sigma(hi)`` on the positive branch."""
    scale = max(1.0, float(np.max(np.abs(m.samples))))
    if g.dirichlet:
        lo = 0.0
        if sigma(lo) >= 0:
            raise SolverFailure("Dirichlet Laplacian has nonnegative top eigenvalue")
        hi = 1.0 / scale
    else:
        lo = 1e-3 / scale
        tries = 0
        while sigma(lo) >= 0:
            lo *= 1e-2
            tries += 1
            if tries > 6:
                raise SolverFailure("could not locate negative sigma_1 near lambda = 0")
        hi = 2 * lo
    for _ in range(200):
        if sigma(hi) > 0:
            return lo, hi
        lo, hi = hi, hi * 2
    raise SolverFailure("no positive principal eigenvalue found")


@dataclass(frozen=True)
class Spectrum:
    values: np.ndarray
    vectors: np.ndarray

    def __iter__(self):
        return iter(zip(self.values, self.vectors.T))

    def __len__(self):
        return len(self.values)


def dense_spectrum(g: Grid1D, A) -> Spectrum:
    """Full eigendecomposition of ``A`` restricted to the free nodes.

    Eigenvalues are sorted by real part, descending; eigenvectors are embedded
    back into full-length fields (columns).
    """
    idx = g.free
    if len(idx) > DENSE_LIMIT:
        raise Refused(f"dense eigenproblem of size {len(idx)} exceeds {DENSE_LIMIT}")
    if sparse.issparse(A):
        A = A.toarray()
    A = np.asarray(A)
    if A.shape != (g.n, g.n):
        raise InvalidArgument(f"operator has shape {A.shape}, expected ({g.n}, {g.n})")
    vals, vecs = linalg.eig(A[np.ix_(idx, idx)])
    order = np.lexsort((-vals.imag, -vals.real))
    vals = vals[order]
    vecs = vecs[:, order]
    if np.all(np.abs(vals.imag) == 0) and np.isrealobj(A):
        vals = vals.real
        vecs = vecs.real
    full = np.zeros((g.n, len(idx)), dtype=vecs.dtype)
    full[idx] = vecs
    return Spectrum(vals, full)
