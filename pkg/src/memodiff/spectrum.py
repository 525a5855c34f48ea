"""Linear stability of the steady state under the delayed memory term.

Perturbations ``psi e^{mu t}`` of ``u_lambda`` satisfy the characteristic
problem ``(A + e^{-mu tau} B - mu) psi = 0`` with

    A = Delta + D div(. grad u) + lam (m - 2u),    B = D div(u grad .).

Rightmost roots come from a Chebyshev collocation of the infinitesimal
generator of the delay semigroup, then each candidate is refined by Newton on
the bordered system ``T(mu) psi = 0, l . psi = 1``.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from scipy import linalg, sparse
from scipy.sparse.linalg import LinearOperator, splu

from .eigen import DENSE_LIMIT, dense_spectrum
from .errors import InvalidArgument, Refused, SolverFailure
from .expr import GrowthProfile
from .grid import Grid1D, drift_matrix, flux_matrix, laplacian_matrix
from .steady import SteadyState, solve_steady

log = logging.getLogger(__name__)

DEFAULT_M = 24
DEFAULT_CUTOFF = 2.0
IG_DENSE_LIMIT = 300
IG_SIZE_LIMIT = 400_000
NEWTON_TOL = 1e-11
NEWTON_MAXIT = 40
ACCEPT_RESIDUAL = 1e-6
M_CONVERGENCE_TOL = 1e-6
_LFUNC_SEED = 20240601


@dataclass(frozen=True)
class Linearization:
    g: Grid1D
    A: sparse.csr_matrix
    B: sparse.csr_matrix
    tau: float = 0.0

    @cached_property
    def Af(self):
        idx = self.g.free
        return self.A[idx][:, idx].tocsr()

    @cached_property
    def Bf(self):
        idx = self.g.free
        return self.B[idx][:, idx].tocsr()

    def at(self, tau: float) -> "Linearization":
        return Linearization(self.g, self.A, self.B, float(tau))


def assemble_linearization(
    g: Grid1D, m: GrowthProfile, steady: SteadyState, tau: float = 0.0
) -> Linearization:
    u, lam, D = steady.u, steady.lam, steady.D
    reaction = sparse.diags(lam * (m.samples - 2 * u))
    if g.dirichlet:
        mask = np.ones(g.n)
        mask[[0, -1]] = 0.0
        reaction = sparse.diags(mask * lam * (m.samples - 2 * u))
    A = laplacian_matrix(g) + D * drift_matrix(g, u) + reaction
    B = D * flux_matrix(g, u)
    return Linearization(g, A.tocsr(), B.tocsr(), float(tau))


@dataclass(frozen=True)
class RootSet:
    roots: np.ndarray
    vectors: np.ndarray
    residuals: np.ndarray
    refined: np.ndarray
    method: str
    M: int
    tau: float
    m_change: float | None = None
    notes: tuple = field(default=())

    def __len__(self):
        return len(self.roots)

    @property
    def rightmost(self) -> complex:
        """Rightmost refined root (falls back to the rightmost candidate)."""
        if len(self.roots) == 0:
            return complex(-math.inf, 0.0)
        ok = np.flatnonzero(self.refined)
        i = ok[0] if len(ok) else 0
        return complex(self.roots[i])

    @property
    def max_real(self) -> float:
        return self.rightmost.real


def _sorted_rootset(roots, vectors, residuals, refined, **kw) -> RootSet:
    roots = np.asarray(roots, dtype=complex)
    order = np.lexsort((-roots.imag, -roots.real))
    vecs = np.asarray(vectors)
    if vecs.size:
        vecs = vecs[:, order]
    return RootSet(
        roots=roots[order],
        vectors=vecs,
        residuals=np.asarray(residuals, dtype=float)[order],
        refined=np.asarray(refined, dtype=bool)[order],
        **kw,
    )


def tau_zero_spectrum(lin: Linearization) -> RootSet:
    """Full spectrum of ``A + B`` (the undelayed problem)."""
    spec = dense_spectrum(lin.g, lin.A + lin.B)
    J = (lin.A + lin.B).toarray()
    res = [
        np.max(np.abs(J @ v - mu * v)) / max(np.max(np.abs(v)), 1e-300)
        for mu, v in spec
    ]
    return _sorted_rootset(
        spec.values,
        spec.vectors,
        res,
        np.ones(len(spec), dtype=bool),
        method="tau0-dense",
        M=0,
        tau=0.0,
    )


def cheb(M: int):
    """Chebyshev points ``t_j = cos(j pi / M)`` and the differentiation matrix."""
    j = np.arange(M + 1)
    t = np.cos(np.pi * j / M)
    c = np.where((j == 0) | (j == M), 2.0, 1.0) * (-1.0) ** j
    dt = t[:, None] - t[None, :]
    Dm = np.outer(c, 1.0 / c) / (dt + np.eye(M + 1))
    Dm -= np.diag(Dm.sum(axis=1))
    return t, Dm


class _Generator:
    """Collocated infinitesimal generator on ``[-tau, 0]`` (node 0 is theta = 0)."""

    def __init__(self, lin: Linearization, tau: float, M: int):
        self.A = lin.Af
        self.B = lin.Bf
        self.nf = self.A.shape[0]
        self.M = M
        self.tau = tau
        _, Dm = cheb(M)
        self.Dt = (2.0 / tau) * Dm

    @property
    def size(self):
        return self.nf * (self.M + 1)

    def matvec(self, x):
        X = x.reshape(self.M + 1, self.nf)
        Y = np.empty_like(X)
        Y[0] = self.A @ X[0] + self.B @ X[-1]
        Y[1:] = self.Dt[1:] @ X
        return Y.ravel()

    def dense(self):
        M, nf = self.M, self.nf
        top = np.zeros((nf, nf * (M + 1)))
        top[:, :nf] = self.A.toarray()
        top[:, M * nf :] += self.B.toarray()
        rest = np.kron(self.Dt[1:], np.eye(nf))
        return np.vstack([top, rest])

    def shift_invert(self, sigma: complex) -> LinearOperator:
        """``(G - sigma)^{-1}`` by eliminating the collocation rows.

        The rows ``j >= 1`` act identically on every spatial node, so they
        reduce to an ``M x M`` solve, leaving one sparse spatial system
        ``(A - sigma - q_M B) x_0 = rhs`` where ``-q_M`` approximates
        ``exp(-sigma tau)``. A real shift keeps everything real.
        """
        M, nf = self.M, self.nf
        dtype = float if np.isreal(sigma) else complex
        sigma = float(np.real(sigma)) if dtype is float else complex(sigma)
        P = np.linalg.inv(self.Dt[1:, 1:] - sigma * np.eye(M))
        q = P @ self.Dt[1:, 0]
        K = (self.A - sigma * sparse.identity(nf) - q[-1] * self.B).tocsc().astype(dtype)
        lu = splu(K)
        Plast = P[-1]

        def solve(y):
            Y = y.reshape(M + 1, nf)
            x0 = lu.solve(Y[0] - self.B @ (Plast @ Y[1:]))
            X = np.empty((M + 1, nf), dtype=np.result_type(dtype, y.dtype))
            X[0] = x0
            X[1:] = P @ Y[1:] - np.outer(q, x0)
            return X.ravel()

        return LinearOperator((self.size, self.size), matvec=solve, dtype=dtype)


def _char_matrix(lin: Linearization, mu: complex, tau: float):
    nf = lin.Af.shape[0]
    return lin.Af + np.exp(-mu * tau) * lin.Bf - mu * sparse.identity(nf)


def _functional(nf: int):
    rng = np.random.default_rng(_LFUNC_SEED)
    return rng.standard_normal(nf) + 1j * rng.standard_normal(nf)


def char_residual(lin: Linearization, mu: complex, psi: np.ndarray, tau: float) -> float:
    """``|T(mu) psi|_inf`` with ``|psi|_inf = 1``."""
    psi = psi / np.max(np.abs(psi))
    return float(np.max(np.abs(_char_matrix(lin, mu, tau) @ psi)))


def refine_root(lin: Linearization, mu0: complex, psi0: np.ndarray, tau: float, ell=None):
    """Newton on ``T(mu) psi = 0, ell . psi = 1``; returns (mu, psi, residual, ok)."""
    with np.errstate(over="ignore", invalid="ignore"):
        return _newton_root(lin, mu0, psi0, tau, ell)


def _bands(Mx):
    """Rows of ``Mx`` in ``solve_banded`` (1, 1) layout."""
    ab = np.zeros((3, Mx.shape[0]))
    ab[0, 1:] = Mx.diagonal(1)
    ab[1] = Mx.diagonal()
    ab[2, :-1] = Mx.diagonal(-1)
    return ab


def _newton_root(lin, mu0, psi0, tau, ell):
    # T(mu) is tridiagonal: the bordered Newton step is two banded solves
    nf = lin.Af.shape[0]
    ell = _functional(nf) if ell is None else ell
    Ab, Bb = _bands(lin.Af), _bands(lin.Bf)
    Bf = lin.Bf
    psi = np.asarray(psi0, dtype=complex)
    s = ell @ psi
    if abs(s) < 1e-14 * np.linalg.norm(psi):
        ell = np.conj(psi)
        s = ell @ psi
    psi = psi / s
    mu = complex(mu0)
    ok = False
    for _ in range(NEWTON_MAXIT):
        e = np.exp(-mu * tau)
        Tb = Ab + e * Bb
        Tb[1] -= mu
        Bpsi = Bf @ psi
        r = lin.Af @ psi + e * Bpsi - mu * psi
        if np.max(np.abs(r)) <= NEWTON_TOL * max(np.max(np.abs(psi)), 1.0) * max(1.0, abs(mu)):
            ok = True
            break
        dT = (-tau * e) * Bpsi - psi
        try:
            x = linalg.solve_banded((1, 1), Tb, np.column_stack([-r, dT]), check_finite=False)
        except (linalg.LinAlgError, ValueError):
            break
        denom = ell @ x[:, 1]
        if not np.isfinite(denom) or denom == 0:
            break
        dmu = (ell @ x[:, 0] - (1.0 - ell @ psi)) / denom
        dpsi = x[:, 0] - dmu * x[:, 1]
        if not (np.isfinite(dmu) and np.all(np.isfinite(dpsi))):
            break
        psi = psi + dpsi
        mu = mu + dmu
        if abs(dmu) > 1e3 * (1 + abs(mu0)):
            break
    res = char_residual(lin, mu, psi, tau) if np.isfinite(mu) else math.inf
    ok = ok or res < ACCEPT_RESIDUAL * 1e-3
    return mu, psi / np.max(np.abs(psi)), res, ok


def _candidates_dense(gen: _Generator):
    vals, vecs = linalg.eig(gen.dense())
    return vals, vecs[: gen.nf]


def _arnoldi(op: LinearOperator, p: int, rng):
    """Unrestarted Arnoldi with full reorthogonalization; returns Ritz pairs."""
    n = op.shape[0]
    dtype = np.result_type(op.dtype, float)
    Q = np.zeros((n, p + 1), dtype=dtype)
    H = np.zeros((p + 1, p), dtype=dtype)
    q = rng.standard_normal(n).astype(dtype)
    Q[:, 0] = q / np.linalg.norm(q)
    for j in range(p):
        w = op.matvec(Q[:, j])
        for _ in range(2):
            c = Q[:, : j + 1].conj().T @ w
            w = w - Q[:, : j + 1] @ c
            H[: j + 1, j] += c
        beta = np.linalg.norm(w)
        H[j + 1, j] = beta
        if beta < 1e-14 * np.linalg.norm(H[: j + 1, j]):
            p = j + 1
            break
        Q[:, j + 1] = w / beta
    theta, Y = linalg.eig(H[:p, :p])
    return theta, Q[:, :p] @ Y


def _candidates_sparse(gen: _Generator, shifts, k, seed=None):
    """Ritz values of ``(G - sigma)^{-1}`` from a ``k``-step Krylov space per shift.

    The Ritz pairs only seed Newton, so the Krylov space is not restarted;
    clustered roots (which stall implicit restarts) then cost nothing extra.
    """
    rng = np.random.default_rng(_LFUNC_SEED if seed is None else seed)
    vals, vecs = [], []
    k = min(k, gen.size - 1)
    for sigma in shifts:
        op = gen.shift_invert(sigma)
        theta, V = _arnoldi(op, k, rng)
        good = np.abs(theta) > 0
        vals.append(sigma + 1.0 / theta[good])
        vecs.append(V[: gen.nf, good])
    if not vals:
        return np.empty(0, complex), np.empty((gen.nf, 0), complex)
    return np.concatenate(vals), np.hstack(vecs)


# real shifts just right of the imaginary axis; distance to a real shift s
# ranks roots by roughly Re mu - (Im mu)^2 / 2s, so the larger shift favours
# oscillatory roots
DEFAULT_SHIFTS = (0.02, 0.25)


def _dedupe(mus, vecs, res, ok):
    keep = []
    for i in np.argsort(-mus.real):
        if any(abs(mus[i] - mus[j]) <= 1e-8 * (1 + abs(mus[i])) for j in keep):
            continue
        keep.append(i)
    keep = np.asarray(keep, dtype=int)
    return mus[keep], vecs[:, keep], res[keep], ok[keep]


def _close_under_conjugation(mus, vecs, res, ok):
    mus = mus.copy()
    small = np.abs(mus.imag) <= 1e-10 * (1 + np.abs(mus))
    mus[small] = mus[small].real
    out_m, out_v, out_r, out_o = [mus], [vecs], [res], [ok]
    for i in np.flatnonzero(~small):
        c = np.conj(mus[i])
        if not np.any(np.abs(mus - c) <= 1e-8 * (1 + abs(c))):
            out_m.append([c])
            out_v.append(np.conj(vecs[:, i : i + 1]))
            out_r.append([res[i]])
            out_o.append([ok[i]])
    return (
        np.concatenate(out_m),
        np.hstack(out_v),
        np.concatenate(out_r),
        np.concatenate(out_o),
    )


def _delay_roots(lin, tau, M, cutoff, method, k, shifts, max_refine, seed=None):
    gen = _Generator(lin, tau, M)
    if gen.size > IG_SIZE_LIMIT:
        raise Refused(f"collocated generator of size {gen.size} exceeds {IG_SIZE_LIMIT}")
    if method == "auto":
        method = "dense" if gen.size <= IG_DENSE_LIMIT else "sparse"
    if method == "dense":
        vals, vecs = _candidates_dense(gen)
    elif method == "sparse":
        vals, vecs = _candidates_sparse(gen, shifts or DEFAULT_SHIFTS, k, seed)
    else:
        raise InvalidArgument(f"unknown root method {method!r}")
    sel = np.flatnonzero(vals.real > -cutoff)
    # one representative per conjugate pair
    sel = sel[vals[sel].imag >= -1e-10 * (1 + np.abs(vals[sel]))]
    sel = sel[np.argsort(-vals[sel].real)]
    mus, psis, res, ok = [], [], [], []
    ell = _functional(gen.nf)
    for rank, i in enumerate(sel):
        if rank < max_refine:
            mu, psi, r, good = refine_root(lin, vals[i], vecs[:, i], tau, ell)
        else:
            good = False
        if not good:
            mu, psi = vals[i], vecs[:, i] / np.max(np.abs(vecs[:, i]))
            r = char_residual(lin, mu, psi, tau)
        mus.append(mu)
        psis.append(psi)
        res.append(r)
        ok.append(good)
    if not mus:
        return (np.empty(0, complex), np.empty((gen.nf, 0), complex), np.empty(0), np.empty(0, bool))
    mus = np.asarray(mus, dtype=complex)
    psis = np.column_stack(psis)
    res = np.asarray(res)
    ok = np.asarray(ok, dtype=bool)
    keep = mus.real > -cutoff
    mus, psis, res, ok = mus[keep], psis[:, keep], res[keep], ok[keep]
    if len(mus):
        mus, psis, res, ok = _dedupe(mus, psis, res, ok)
        mus, psis, res, ok = _close_under_conjugation(mus, psis, res, ok)
    return mus, psis, res, ok


def delay_rightmost(
    lin: Linearization,
    tau: float | None = None,
    M: int = DEFAULT_M,
    cutoff: float = DEFAULT_CUTOFF,
    method: str = "auto",
    k: int = 80,
    max_refine: int = 24,
    shifts=None,
    check_M: bool = False,
    seed: int | None = None,
) -> RootSet:
    """Characteristic roots with ``Re mu > -cutoff`` at delay ``tau``.

    ``method`` is ``"dense"`` (all collocation eigenvalues), ``"sparse"``
    (shift-invert Krylov space of dimension ``k`` per shift) or ``"auto"``.
    Only the ``max_refine`` rightmost candidates go through Newton; the rest
    are kept with ``refined`` false.
    With ``check_M`` the rightmost root is recomputed with ``M + 8`` nodes and
    the change is stored in ``m_change``. ``seed`` fixes the Krylov start
    vector of the sparse path.
    """
    tau = lin.tau if tau is None else float(tau)
    if not np.isfinite(tau) or tau < 0:
        raise InvalidArgument(f"delay must be nonnegative, got {tau}")
    if M < 8:
        raise InvalidArgument(f"need at least 8 collocation points, got M={M}")
    nf = len(lin.g.free)
    if tau == 0.0:
        if nf > DENSE_LIMIT:
            raise Refused(f"undelayed problem of size {nf} exceeds {DENSE_LIMIT}")
        rs = tau_zero_spectrum(lin)
        keep = rs.roots.real > -cutoff
        return RootSet(
            rs.roots[keep], rs.vectors[:, keep], rs.residuals[keep], rs.refined[keep],
            method="tau0-dense", M=M, tau=0.0,
        )
    mus, psis, res, ok = _delay_roots(lin, tau, M, cutoff, method, k, shifts, max_refine, seed)
    full = np.zeros((lin.g.n, len(mus)), dtype=complex)
    full[lin.g.free] = psis
    m_change = None
    if check_M and len(mus):
        mus2, _, _, ok2 = _delay_roots(lin, tau, M + 8, cutoff, method, k, shifts, max_refine, seed)
        r1 = _first_refined(mus, ok)
        r2 = _first_refined(mus2, ok2)
        m_change = float(abs(r1 - r2))
    rs = _sorted_rootset(mus, full, res, ok, method="pseudospectral", M=M, tau=tau, m_change=m_change)
    return rs


def _first_refined(mus, ok):
    order = np.lexsort((-mus.imag, -mus.real))
    for i in order:
        if ok[i]:
            return mus[i]
    return mus[order[0]] if len(order) else complex(-math.inf)


def _abscissa(lin: Linearization, tau: float, M: int, **kw) -> RootSet:
    if tau == 0.0 and len(lin.g.free) > DENSE_LIMIT:
        return delay_rightmost(lin, 1e-9, M, **kw)
    return delay_rightmost(lin, tau, M, **kw)


@dataclass(frozen=True)
class Crossing:
    tau0: float
    omega0: float
    stable_at_zero: bool = True
    evaluations: int = 0


def _linearize(g, m, lam, D, steady):
    if steady is None:
        steady = solve_steady(g, m, lam, D)
    return assemble_linearization(g, m, steady)


def find_crossing(
    g: Grid1D,
    m: GrowthProfile,
    lam: float,
    D: float,
    tau_max: float,
    M: int = DEFAULT_M,
    steady: SteadyState | None = None,
    n_scan: int = 64,
    rel_tol: float = 1e-3,
    **root_kw,
) -> Crossing | None:
    """First delay in ``[0, tau_max]`` where the rightmost root enters Re mu > 0.

    Scans ``tau`` with step ``tau_max / n_scan`` and bisects the first sign
    change of ``max Re mu``. If the steady state is already unstable at
    ``tau = 0`` the result has ``tau0 = 0`` and ``stable_at_zero`` false.
    """
    if not np.isfinite(tau_max) or tau_max <= 0:
        raise InvalidArgument(f"tau_max must be positive, got {tau_max}")
    lin = _linearize(g, m, lam, D, steady)
    evals = 0

    def f(tau):
        nonlocal evals
        evals += 1
        return _abscissa(lin, tau, M, **root_kw)

    rs = f(0.0)
    if rs.max_real > 0:
        return Crossing(0.0, abs(rs.rightmost.imag), False, evals)
    step = tau_max / n_scan
    lo, hi, rs_hi = 0.0, None, None
    for i in range(1, n_scan + 1):
        tau = i * step
        rs = f(tau)
        if rs.max_real > 0:
            hi, rs_hi = tau, rs
            break
        lo = tau
    if hi is None:
        return None
    for _ in range(60):
        if hi - lo <= rel_tol * hi:
            break
        mid = 0.5 * (lo + hi)
        rs = f(mid)
        if rs.max_real > 0:
            hi, rs_hi = mid, rs
        else:
            lo = mid
    return Crossing(0.5 * (lo + hi), abs(rs_hi.rightmost.imag), True, evals)


def transversality(
    g: Grid1D,
    m: GrowthProfile,
    lam: float,
    D: float,
    tau0: float | None,
    delta: float | None = None,
    M: int = DEFAULT_M,
    steady: SteadyState | None = None,
    **root_kw,
) -> float:
    """Central difference of ``max Re mu`` across ``tau0``."""
    if tau0 is None or not np.isfinite(tau0) or tau0 <= 0:
        raise Refused("transversality needs a detected crossing delay tau0 > 0")
    delta = 0.01 * tau0 if delta is None else float(delta)
    if not 0 < delta < tau0:
        raise InvalidArgument(f"delta must lie in (0, tau0), got {delta}")
    lin = _linearize(g, m, lam, D, steady)
    vals = []
    for tau in (tau0 - delta, tau0 + delta):
        rs = delay_rightmost(lin, tau, M, **root_kw)
        if len(rs) == 0 or not rs.refined[0]:
            raise SolverFailure(f"rightmost root at tau={tau:.6g} is unrefined")
        vals.append(rs.max_real)
    return (vals[1] - vals[0]) / (2 * delta)
