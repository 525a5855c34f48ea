"""Uniform 1-D grids, finite-difference operators and trapezoid quadrature.

Fields are plain numpy arrays of length ``n`` aligned with the grid nodes.
Under Dirichlet conditions the two boundary entries are pinned to zero and
every linear operator has zero boundary rows and columns; use ``grid.free``
to restrict to the unknowns.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from functools import cached_property

import numpy as np
from scipy import sparse

from .errors import InvalidArgument


class BC(str, enum.Enum):
    NEUMANN = "neumann"
    DIRICHLET = "dirichlet"


@dataclass(frozen=True)
class Grid1D:
    L: float
    n: int
    bc: BC = BC.NEUMANN

    @cached_property
    def h(self) -> float:
        return self.L / (self.n - 1)

    @cached_property
    def x(self) -> np.ndarray:
        x = np.linspace(0.0, self.L, self.n)
        x.flags.writeable = False
        return x

    @cached_property
    def weights(self) -> np.ndarray:
        w = np.full(self.n, self.h)
        w[0] = w[-1] = 0.5 * self.h
        w.flags.writeable = False
        return w

    @cached_property
    def free(self) -> np.ndarray:
        """Indices of the unknown nodes (all nodes, or interior for Dirichlet)."""
        if self.bc is BC.DIRICHLET:
            return np.arange(1, self.n - 1)
        return np.arange(self.n)

    @property
    def dirichlet(self) -> bool:
        return self.bc is BC.DIRICHLET

    def field(self, values) -> np.ndarray:
        """Validate ``values`` as a field on this grid."""
        f = np.asarray(values, dtype=float)
        if f.shape != (self.n,):
            raise InvalidArgument(f"field has shape {f.shape}, grid expects ({self.n},)")
        if not np.all(np.isfinite(f)):
            raise InvalidArgument("field contains non-finite values")
        return f

    def embed(self, interior: np.ndarray) -> np.ndarray:
        """Scatter values on ``free`` nodes into a full-length field."""
        out = np.zeros(self.n, dtype=np.result_type(interior, float))
        out[self.free] = interior
        return out


def make_grid(L: float = np.pi, n: int = 201, bc: str | BC = BC.NEUMANN) -> Grid1D:
    try:
        L = float(L)
    except (TypeError, ValueError):
        raise InvalidArgument(f"domain length must be a real number, got {L!r}") from None
    if not np.isfinite(L) or L <= 0:
        raise InvalidArgument(f"domain length must be positive, got {L}")
    if int(n) != n or n < 3:
        raise InvalidArgument(f"need at least 3 grid nodes, got {n}")
    try:
        bc = BC(bc)
    except ValueError:
        raise InvalidArgument(f"unknown boundary kind {bc!r}") from None
    return Grid1D(L, int(n), bc)


def _pin_boundary(g: Grid1D, A: sparse.spmatrix) -> sparse.csr_matrix:
    if not g.dirichlet:
        return A.tocsr()
    mask = np.ones(g.n)
    mask[[0, -1]] = 0.0
    P = sparse.diags(mask)
    return (P @ A @ P).tocsr()


def flux_matrix(g: Grid1D, c: np.ndarray) -> sparse.csr_matrix:
    """Matrix of ``v -> div(c grad v)`` in conservative flux form.

    Face coefficients are arithmetic means of ``c``; Neumann faces at the
    boundary carry zero flux, so boundary nodes use a half-cell of width h/2.
    """
    c = np.asarray(c, dtype=float)
    h = g.h
    cf = 0.5 * (c[:-1] + c[1:]) / h**2
    lower = np.empty(g.n - 1)
    upper = np.empty(g.n - 1)
    diag = np.zeros(g.n)
    # row i gets +cf[i] (v_{i+1}-v_i) - cf[i-1] (v_i - v_{i-1})
    upper[:] = cf
    lower[:] = cf
    diag[:-1] -= cf
    diag[1:] -= cf
    if not g.dirichlet:
        diag[0] *= 2.0
        upper[0] *= 2.0
        diag[-1] *= 2.0
        lower[-1] *= 2.0
    A = sparse.diags([lower, diag, upper], [-1, 0, 1], format="csr")
    return _pin_boundary(g, A)


def drift_matrix(g: Grid1D, v: np.ndarray) -> sparse.csr_matrix:
    """Matrix of ``u -> div(u grad v)`` for a fixed field ``v``."""
    v = np.asarray(v, dtype=float)
    h = g.h
    dv = np.diff(v) / h**2
    # F_{i+1/2} = (u_i + u_{i+1}) dv_i / 2 ; out_i = F_{i+1/2} - F_{i-1/2}
    diag = np.zeros(g.n)
    diag[:-1] += 0.5 * dv
    diag[1:] -= 0.5 * dv
    upper = 0.5 * dv.copy()
    lower = -0.5 * dv.copy()
    if not g.dirichlet:
        diag[0] *= 2.0
        upper[0] *= 2.0
        diag[-1] *= 2.0
        lower[-1] *= 2.0
    A = sparse.diags([lower, diag, upper], [-1, 0, 1], format="csr")
    return _pin_boundary(g, A)


def laplacian_matrix(g: Grid1D) -> sparse.csr_matrix:
    return flux_matrix(g, np.ones(g.n))


def cross_diffusion(g: Grid1D, u: np.ndarray, v: np.ndarray) -> np.ndarray:
    """Evaluate ``div(u grad v)`` with face fluxes ``(u_i+u_{i+1})/2 * (v_{i+1}-v_i)/h``."""
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    if u.shape != (g.n,) or v.shape != (g.n,):
        raise InvalidArgument(
            f"fields must have length {g.n}, got {u.shape} and {v.shape}"
        )
    h = g.h
    F = 0.5 * (u[:-1] + u[1:]) * np.diff(v) / h
    out = np.zeros(g.n)
    out[1:-1] = (F[1:] - F[:-1]) / h
    if g.dirichlet:
        return out
    out[0] = 2.0 * F[0] / h
    out[-1] = -2.0 * F[-1] / h
    return out


def integrate(g: Grid1D, f: np.ndarray) -> float:
    return float(np.dot(g.weights, f))


def gradient_energy(g: Grid1D, c: np.ndarray, v: np.ndarray) -> float:
    """Face quadrature of ``int c |grad v|^2``.

    Equals ``-integrate(g, v * div(c grad v))`` exactly whenever the boundary
    term vanishes (Neumann, or Dirichlet with ``v`` zero on the boundary).
    """
    c = np.asarray(c, dtype=float)
    v = np.asarray(v, dtype=float)
    return float(np.sum(0.5 * (c[:-1] + c[1:]) * np.diff(v) ** 2) / g.h)


def l2_norm(g: Grid1D, f: np.ndarray) -> float:
    return float(np.sqrt(integrate(g, np.abs(f) ** 2)))
