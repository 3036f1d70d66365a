"""Internal helpers for adjoint-driven bang-bang control construction.

The adjoint of X' = A X + B u satisfies eta' = -A^T eta, so the switching
function of channel j is g_j(t) = <eta(t), B_j>.  Switch times are located by
the event machinery of the ode module and then polished on the closed-form
switching function; the control takes the sign of g_j between switches.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, List, Optional, Tuple

import numpy as np

from . import ode
from .linsys import ControlSignal, LinearSystem, mat_exp

# a channel whose switching function never rises above this relative floor is
# degenerate: the sign formula is undefined and the channel is forced to 0
_DEGENERATE_REL = 1e-13


def adjoint_decomp(A: np.ndarray):
    """Eigendecomposition (w, V, Vinv) of A if reliably diagonalizable, else None."""
    A = np.asarray(A, dtype=float)
    try:
        w, V = np.linalg.eig(A)
        Vinv = np.linalg.inv(V)
        cond = np.linalg.norm(V, 2) * np.linalg.norm(Vinv, 2)
        recon = (V * w) @ Vinv
        scale = max(1.0, float(np.abs(A).max()))
        if cond < 1e8 and np.abs(recon - A).max() <= 1e-10 * scale:
            return (w, V, Vinv)
    except np.linalg.LinAlgError:
        pass
    return None


_AUTO = object()


class AdjointSampler:
    """Evaluates eta(t)^T = eta0^T e^{-tA} and the switching functions.

    Uses the eigendecomposition of A when it is reliably diagonalizable,
    falling back to per-time matrix exponentials otherwise.
    """

    def __init__(self, A: np.ndarray, eta0: np.ndarray, decomp=_AUTO):
        self.A = np.asarray(A, dtype=float)
        self.eta0 = np.asarray(eta0, dtype=float)
        self._eig = adjoint_decomp(self.A) if decomp is _AUTO else decomp

    def eta(self, t) -> np.ndarray:
        """Adjoint rows eta(t) for scalar or array t; shape (..., n)."""
        t = np.asarray(t, dtype=float)
        if self._eig is not None:
            w, V, Vinv = self._eig
            coef = self.eta0 @ V  # (n,) complex
            phases = np.exp(-np.multiply.outer(t, w))  # (..., n)
            out = (coef * phases) @ Vinv
            return np.real(out)
        ts = np.atleast_1d(t)
        rows = np.empty((len(ts), len(self.eta0)))
        for i, ti in enumerate(ts):
            rows[i] = self.eta0 @ mat_exp(self.A, -float(ti))
        return rows.reshape(t.shape + (len(self.eta0),))

    def switching(self, t, B_col: np.ndarray) -> np.ndarray:
        return self.eta(t) @ B_col


@dataclass
class BangProfile:
    """Per-channel switching structure of a bang-bang control."""

    horizon: float
    channel_switch_times: Tuple[np.ndarray, ...]
    initial_signs: np.ndarray            # (m,) entries in {-1, 0, +1}; 0 = degenerate
    degenerate_channels: Tuple[int, ...]
    control: ControlSignal
    sampler: AdjointSampler


def control_from_channels(horizon: float, channel_switch_times: Sequence[np.ndarray],
                          initial_signs: np.ndarray) -> ControlSignal:
    """Piecewise-constant control from per-channel switch times and signs.

    Each channel alternates from its initial sign at its own switch times; a
    channel with initial sign 0 stays silent (degenerate switching function).
    """
    channel_switch_times = [np.asarray(c, dtype=float).reshape(-1)
                            for c in channel_switch_times]
    initial_signs = np.asarray(initial_signs, dtype=float).reshape(-1)
    m = len(initial_signs)
    knots = np.concatenate([np.array([0.0, horizon])] + channel_switch_times)
    knots = np.unique(knots)
    knots = knots[(knots >= 0.0) & (knots <= horizon)]
    keep = np.concatenate(([True], np.diff(knots) > 1e-13 * max(horizon, 1.0)))
    knots = knots[keep]
    mids = 0.5 * (knots[:-1] + knots[1:])
    values = np.zeros((len(mids), m))
    for j in range(m):
        if initial_signs[j] == 0.0:
            continue
        flips = np.searchsorted(channel_switch_times[j], mids)
        values[:, j] = initial_signs[j] * np.where(flips % 2 == 0, 1.0, -1.0)
    return ControlSignal(knots, values)


def _polish_zero(g: Callable[[float], float], t_lo: float, t_hi: float,
                 n_iter: int = 80) -> float:
    """Bisection on the closed-form switching function inside a bracket."""
    g_lo = g(t_lo)
    g_hi = g(t_hi)
    if g_lo == 0.0:
        return t_lo
    if g_hi == 0.0 or (g_lo > 0) == (g_hi > 0):
        return 0.5 * (t_lo + t_hi)
    for _ in range(n_iter):
        mid = 0.5 * (t_lo + t_hi)
        g_mid = g(mid)
        if g_mid == 0.0:
            return mid
        if (g_mid > 0) == (g_lo > 0):
            t_lo, g_lo = mid, g_mid
        else:
            t_hi, g_hi = mid, g_mid
    return 0.5 * (t_lo + t_hi)


def bang_profile(sys: LinearSystem, eta0: np.ndarray, T: float,
                 n_steps: int = 2000) -> BangProfile:
    """Locate each channel's switch times on [0, T] and build the control."""
    eta0 = np.asarray(eta0, dtype=float).reshape(-1)
    if eta0.shape != (sys.n,):
        raise ValueError(f"eta0 must have dimension {sys.n}")
    if np.linalg.norm(eta0) == 0.0:
        raise ValueError("eta0 must be nonzero")
    if T <= 0:
        raise ValueError("T must be positive")

    sampler = AdjointSampler(sys.A, eta0)
    step = T / n_steps
    # event-time error target: 1e-10 * T, as a fraction of the step
    loc_tol = min(0.49, max(1e-12, 1e-10 * T / step))
    grid = ode.TimeGrid(0.0, T, step)
    neg_AT = np.ascontiguousarray(-sys.A.T)

    def adjoint_rhs(t, e):
        return neg_AT @ e

    dense_t = np.linspace(0.0, T, n_steps + 1)
    dense_eta = sampler.eta(dense_t)  # (n_steps+1, n)

    channel_switches: List[np.ndarray] = []
    initial_signs = np.zeros(sys.m)
    degenerate: List[int] = []

    for j in range(sys.m):
        Bj = sys.B[:, j]
        g_dense = dense_eta @ Bj
        g_scale = max(1.0, float(np.linalg.norm(eta0)) * max(1.0, float(np.linalg.norm(Bj))))
        g_max = float(np.abs(g_dense).max())
        if g_max <= _DEGENERATE_REL * g_scale:
            degenerate.append(j)
            channel_switches.append(np.empty(0))
            continue

        event = ode.EventSpec(lambda t, e, B_col=Bj: float(e @ B_col), loc_tol)
        _, raw_events = ode.integrate_with_events(adjoint_rhs, grid, eta0, event)

        g_exact = lambda t, B_col=Bj: float(sampler.switching(np.array(t), B_col))
        polished = []
        # bracket must cover the RK4 zero-location error, yet stay far below
        # the zero spacing so it holds exactly one zero
        halo = max(10 * loc_tol * step, 1e-6 * T)
        for te in raw_events:
            lo = max(0.0, te - halo)
            hi = min(T, te + halo)
            polished.append(_polish_zero(g_exact, lo, hi))
        polished = np.array(sorted(polished))
        # drop boundary-coincident and duplicate zeros
        if len(polished):
            polished = polished[(polished > 1e-12 * T) & (polished < T * (1 - 1e-12))]
        if len(polished) > 1:
            polished = polished[np.concatenate(([True], np.diff(polished) > 1e-11 * T))]
        channel_switches.append(polished)

        nz = np.nonzero(np.abs(g_dense) > 1e-9 * g_max)[0]
        initial_signs[j] = np.sign(g_dense[nz[0]]) if len(nz) else 1.0

    control = control_from_channels(T, channel_switches, initial_signs)
    return BangProfile(
        horizon=T,
        channel_switch_times=tuple(channel_switches),
        initial_signs=initial_signs,
        degenerate_channels=tuple(degenerate),
        control=control,
        sampler=sampler,
    )
