"""Time stepping of the delayed PDE and classification of the long-time behaviour.

One IMEX step of size ``dt`` solves

    (I - dt L) u^{k+1} = u^k + dt [D div(u^k grad u^{k-d}) + lam u^k (m - u^k)]

with ``d = tau / dt``. The delayed cross-diffusion is explicit, which is
stable for any ``dt`` as long as ``D u < 1`` (the implicit Laplacian damps
grid modes faster than the lagged term can feed them).
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy import sparse
from scipy.signal import find_peaks
from scipy.sparse.linalg import splu

from .errors import InstabilityDetected, InvalidArgument
from .expr import GrowthProfile
from .grid import Grid1D, cross_diffusion, laplacian_matrix
from .steady import SteadyState, solve_steady

log = logging.getLogger(__name__)

CONVERGED = "converged"
OSCILLATORY = "oscillatory"
UNDECIDED = "undecided"

BLOWUP = 1e6
NEGATIVE_TOL = -1e-8
MAX_SNAPSHOTS = 512
DEFAULT_DT = 0.05


@dataclass(frozen=True)
class Classification:
    label: str
    period: float | None = None
    n_peaks: int = 0
    amplitude: float = 0.0


@dataclass(frozen=True)
class SimTrace:
    t: np.ndarray
    deviation: np.ndarray
    probe: np.ndarray
    probe_node: int
    snapshot_t: np.ndarray
    snapshots: np.ndarray
    u_steady: np.ndarray
    dt: float
    tau: float
    T: float
    t_transient: float
    classification: Classification
    warnings: tuple = field(default=())

    @property
    def label(self) -> str:
        return self.classification.label

    @property
    def period(self):
        return self.classification.period


def default_history(g: Grid1D, u_steady: np.ndarray) -> np.ndarray:
    return u_steady * (1.0 + 0.05 * np.cos(np.pi * g.x / g.L))


def _history_buffer(g, history0, d, dt, u_steady):
    """Buffer of ``d + 1`` fields for ``theta = -d dt, ..., 0`` (oldest first)."""
    if history0 is None:
        history0 = default_history(g, u_steady)
    if callable(history0):
        thetas = -dt * np.arange(d, -1, -1)
        buf = np.array([np.asarray(history0(th, g.x), dtype=float) for th in thetas])
    else:
        h = np.asarray(history0, dtype=float)
        if h.shape == (g.n,):
            buf = np.tile(h, (d + 1, 1))
        elif h.shape == (d + 1, g.n):
            buf = h.copy()
        else:
            raise InvalidArgument(
                f"history must be a field of length {g.n}, a ({d + 1}, {g.n}) buffer, or callable"
            )
    if buf.shape != (d + 1, g.n) or not np.all(np.isfinite(buf)):
        raise InvalidArgument("initial history must be finite fields on the grid")
    if g.dirichlet:
        buf[:, [0, -1]] = 0.0
    if np.any(buf[:, g.free] <= 0):
        raise InvalidArgument("initial history must be positive")
    return buf


def simulate(
    g: Grid1D,
    m: GrowthProfile,
    lam: float,
    D: float,
    tau: float,
    history0: np.ndarray | Callable | None = None,
    T: float | None = None,
    dt: float = DEFAULT_DT,
    steady: SteadyState | None = None,
    t_transient: float | None = None,
    max_snapshots: int = MAX_SNAPSHOTS,
) -> SimTrace:
    """Integrate from a history on ``[-tau, 0]`` up to time ``T``.

    ``dt`` is lowered so that ``tau / dt`` is an integer. The default history
    is ``u_lambda (1 + 0.05 cos(pi x / L))``, constant in time; the default
    horizon is ``max(4 tau, 400)`` with the second half used for classification.
    """
    if not np.isfinite(tau) or tau < 0:
        raise InvalidArgument(f"delay must be nonnegative, got {tau}")
    if not np.isfinite(dt) or dt <= 0:
        raise InvalidArgument(f"time step must be positive, got {dt}")
    T = max(4.0 * tau, 400.0) if T is None else float(T)
    if not T > 0:
        raise InvalidArgument(f"horizon must be positive, got {T}")
    t_transient = 0.5 * T if t_transient is None else float(t_transient)
    if steady is None:
        steady = solve_steady(g, m, lam, D)
    us = steady.u

    if tau > 0:
        d = max(1, math.ceil(tau / dt - 1e-9))
        dt = tau / d
    else:
        d = 0
    nsteps = max(1, math.ceil(T / dt - 1e-9))
    T = nsteps * dt

    buf = _history_buffer(g, history0, d, dt, us)
    idx = g.free
    Lf = laplacian_matrix(g)[idx][:, idx]
    lu = splu((sparse.identity(len(idx)) - dt * Lf).tocsc())
    mm = m.samples
    p = int(np.argmax(us))

    stride = max(1, math.ceil(nsteps / (max_snapshots - 1)))
    snap_t, snaps = [0.0], [buf[-1].copy()]
    t = np.arange(nsteps + 1) * dt
    dev = np.empty(nsteps + 1)
    probe = np.empty(nsteps + 1)
    u = buf[-1].copy()
    dev[0] = np.max(np.abs(u - us))
    probe[0] = u[p] - us[p]
    warnings = []

    slot = 0  # buf[slot] holds u^{k-d}; the ring starts at the oldest entry
    for k in range(nsteps):
        lag = buf[slot]
        rhs = u + dt * (D * cross_diffusion(g, u, lag) + lam * u * (mm - u))
        new = np.zeros(g.n)
        new[idx] = lu.solve(rhs[idx])
        u = new
        umax = np.max(np.abs(u))
        if not np.isfinite(umax) or umax > BLOWUP:
            raise InstabilityDetected(t[k + 1])
        if not warnings and np.min(u) < NEGATIVE_TOL:
            msg = f"u dropped to {np.min(u):.3g} at t={t[k + 1]:.6g}"
            warnings.append(msg)
            log.warning("positivity violated: %s", msg)
        buf[slot] = u
        if d > 0:
            slot = (slot + 1) % (d + 1)
        dev[k + 1] = np.max(np.abs(u - us))
        probe[k + 1] = u[p] - us[p]
        if (k + 1) % stride == 0 or k + 1 == nsteps:
            snap_t.append(t[k + 1])
            snaps.append(u.copy())

    cls = classify_attractor(t, dev, t_transient, signed=probe)
    return SimTrace(
        t=t,
        deviation=dev,
        probe=probe,
        probe_node=p,
        snapshot_t=np.asarray(snap_t),
        snapshots=np.asarray(snaps),
        u_steady=us,
        dt=dt,
        tau=float(tau),
        T=T,
        t_transient=t_transient,
        classification=cls,
        warnings=tuple(warnings),
    )


def classify_attractor(t, deviation, t_transient: float, signed=None) -> Classification:
    """Label a probe history as converged, oscillatory or undecided.

    Converged: the final deviation is below 1e-4 of the largest deviation
    before ``t_transient``. Oscillatory: after ``t_transient`` at least five
    peaks with amplitude above 1e-3 and successive amplitude ratios in
    [0.98, 1.02]. Peaks are taken from ``signed`` when given (a signed probe
    oscillates at the true period, while the sup-norm may double it).
    """
    t = np.asarray(t, dtype=float)
    y = np.asarray(deviation, dtype=float)
    if len(t) < 3 or t[-1] - t[0] < 2 * (t_transient - t[0]) or t_transient >= t[-1]:
        return Classification(UNDECIDED)
    pre = y[t <= t_transient]
    initial = float(np.max(np.abs(pre))) if len(pre) else float(abs(y[0]))
    if initial > 0 and abs(y[-1]) < 1e-4 * initial:
        return Classification(CONVERGED)

    post = t > t_transient
    s = np.asarray(signed if signed is not None else y, dtype=float)[post]
    tp = t[post]
    span = float(np.max(s) - np.min(s))
    centred = s - 0.5 * (np.max(s) + np.min(s))
    # ripples on a slow trend are not oscillation peaks
    peaks, _ = find_peaks(centred, height=0.0, prominence=max(0.25 * span, 1e-300))
    if len(peaks) < 5:
        return Classification(UNDECIDED, n_peaks=len(peaks))
    amps = centred[peaks]
    amplitude = float(np.min(amps))
    if amplitude <= 1e-3:
        return Classification(UNDECIDED, n_peaks=len(peaks), amplitude=amplitude)
    ratios = amps[1:] / amps[:-1]
    if np.all((ratios >= 0.98) & (ratios <= 1.02)):
        period = float(np.mean(np.diff(tp[peaks])))
        return Classification(OSCILLATORY, period, len(peaks), amplitude)
    return Classification(UNDECIDED, n_peaks=len(peaks), amplitude=amplitude)


def growth_rate(t, y, t_start: float = 0.0, t_end: float | None = None) -> float:
    """Least-squares exponential rate of ``|y|`` on ``[t_start, t_end]``.

    Oscillating signals are fitted through their local maxima so the rate
    describes the envelope.
    """
    t = np.asarray(t, dtype=float)
    y = np.abs(np.asarray(y, dtype=float))
    t_end = t[-1] if t_end is None else t_end
    sel = (t >= t_start) & (t <= t_end) & (y > 0)
    ts, ys = t[sel], y[sel]
    peaks, _ = find_peaks(ys)
    if len(peaks) >= 3:
        ts, ys = ts[peaks], ys[peaks]
    if len(ts) < 2:
        raise InvalidArgument("not enough samples to fit a growth rate")
    slope, _ = np.polyfit(ts, np.log(ys), 1)
    return float(slope)
