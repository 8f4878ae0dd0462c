"""Finite-difference solver for the parameterized stopping problem and its boundary.

Per fuel level y the value solves an obstacle problem: backward implicit time
stepping of  u_t + (sigma^2/2) u_xx + a(x, m(t)) u_x - r u + f_y = 0  on the
region where u stays below the cap c0, with the cap enforced by projected SOR.
The free boundary c(t, x) is the lowest fuel level at which the value drops
below the cap; it separates the action region (reflect) from inaction (wait).
"""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .kernels import psor_solve
from .model import MeanFlow, ModelSpec

__all__ = [
    "Grid", "ValueSurface", "Boundary", "LipschitzReport",
    "solve_stopping", "extract_boundary", "continuation_mask",
    "estimate_lipschitz_x", "PsorError", "MonotonicityError",
]


class PsorError(RuntimeError):
    """PSOR failed to converge within the sweep budget."""


class MonotonicityError(RuntimeError):
    """Surface monotonicity violated beyond the clamping tolerance."""


@dataclass(frozen=True)
class Grid:
    """Uniform tensor grid on [0,T] x [x_lo,x_hi] x [0,1]."""

    t_nodes: np.ndarray
    x_nodes: np.ndarray
    y_nodes: np.ndarray

    def __post_init__(self):
        for name in ("t_nodes", "x_nodes", "y_nodes"):
            arr = np.asarray(getattr(self, name), dtype=float)
            object.__setattr__(self, name, arr)
            if arr.ndim != 1 or not np.all(np.diff(arr) > 0):
                raise ValueError(f"{name} must be strictly increasing 1-d")
            steps = np.diff(arr)
            if not np.allclose(steps, steps[0], rtol=1e-9, atol=1e-12):
                raise ValueError(f"{name} must be uniform")
            arr.setflags(write=False)
        if len(self.t_nodes) < 17 or len(self.x_nodes) < 17:
            raise ValueError("need at least 16 time and space steps")
        if len(self.y_nodes) < 9:
            raise ValueError("need at least 8 fuel steps")

    @classmethod
    def make(cls, T: float, x_lo: float, x_hi: float,
             n_t: int, n_x: int, n_y: int) -> "Grid":
        return cls(
            np.linspace(0.0, T, n_t + 1),
            np.linspace(x_lo, x_hi, n_x + 1),
            np.linspace(0.0, 1.0, n_y + 1),
        )

    @property
    def dt(self) -> float:
        return float(self.t_nodes[1] - self.t_nodes[0])

    @property
    def dx(self) -> float:
        return float(self.x_nodes[1] - self.x_nodes[0])

    @property
    def dy(self) -> float:
        return float(self.y_nodes[1] - self.y_nodes[0])


@dataclass
class ValueSurface:
    """Stopping value u(t, x, y) on a grid, with solver diagnostics."""

    grid: Grid
    values: np.ndarray              # (nt+1, nx+1, ny+1)
    obstacle_c0: float
    flow_monotone: bool
    preclamp_violations: int = 0    # nodes clamped by more than the PSOR floor
    preclamp_max: float = 0.0
    psor_max_sweeps: int = 0
    psor_worst_residual: float = 0.0

    def invariant_violations(self) -> dict:
        """Max violations of bounds / monotonicity / terminal slice (0 = exact)."""
        u = self.values
        out = {
            "lower_bound": float(max(0.0, -u.min())),
            "upper_bound": float(max(0.0, u.max() - self.obstacle_c0)),
            "terminal": float(np.max(np.abs(u[-1] - self.obstacle_c0))),
            "mono_x": float(max(0.0, -np.diff(u, axis=1).min())),
            "mono_y": float(max(0.0, np.diff(u, axis=2).max())),
        }
        if self.flow_monotone:
            out["mono_t"] = float(max(0.0, -np.diff(u, axis=0).min()))
        return out


@dataclass
class Boundary:
    """Free boundary c(t, x) in [0,1], nondecreasing in both arguments."""

    t_nodes: np.ndarray
    x_nodes: np.ndarray
    values: np.ndarray              # (nt+1, nx+1)

    def at(self, t: float, x) -> np.ndarray:
        """Bilinear interpolation, constant extension outside the grid."""
        tg = self.t_nodes
        k = int(np.searchsorted(tg, t, side="right")) - 1
        if k < 0:
            row = self.values[0]
        elif k >= len(tg) - 1:
            row = self.values[-1]
        elif tg[k] == t:
            row = self.values[k]
        else:
            w = (t - tg[k]) / (tg[k + 1] - tg[k])
            row = (1.0 - w) * self.values[k] + w * self.values[k + 1]
        return np.interp(x, self.x_nodes, row)

    def row_at_index(self, k: int) -> np.ndarray:
        return self.values[k]


@dataclass(frozen=True)
class LipschitzReport:
    theta_hat: float
    per_t: np.ndarray
    log_x: bool


def _build_coefficients(model: ModelSpec, x: np.ndarray, mk: float, dt: float,
                        dx: float):
    a = np.asarray(model.drift(x, mk), dtype=float)
    s = 0.5 * np.asarray(model.vol(x), dtype=float) ** 2
    if not (np.all(np.isfinite(a)) and np.all(np.isfinite(s))):
        raise FloatingPointError("non-finite drift/volatility on the grid; "
                                 "check the truncation domain")
    ap = np.maximum(a, 0.0)
    am = np.maximum(-a, 0.0)
    lo = -dt * (s / dx**2 + am / dx)
    up = -dt * (s / dx**2 + ap / dx)
    dg = 1.0 + model.discount_r * dt + dt * (2.0 * s / dx**2 + np.abs(a) / dx)
    return lo, dg, up


def solve_stopping(model: ModelSpec, m_flow: MeanFlow, grid: Grid, *,
                   omega: float = 1.5, psor_tol: float = 1e-10,
                   psor_max_iter: int = 10_000, tol_mono: float = 1e-8,
                   y_floor: float = 1e-3, threads: int = 1) -> ValueSurface:
    """Backward-in-time obstacle solve over all fuel slices.

    Fuel is a pure parameter, so slices solve independently (optionally on a
    thread pool; results are identical at any thread count).  Monotonicity
    violations below ``tol_mono`` are clamped by an isotone projection after
    each time step; anything larger aborts.  The time clamp applies only when
    the supplied flow is nondecreasing.
    """
    t, x, y = grid.t_nodes, grid.x_nodes, grid.y_nodes
    nt, nx, ny = len(t) - 1, len(x) - 1, len(y) - 1
    c0 = model.cost_c0
    dt, dx = grid.dt, grid.dx
    flow_monotone = bool(m_flow.monotone or np.all(np.diff(m_flow.values) >= 0))

    # marginal profit per slice; interior evaluations are floored at y_floor
    y_eval = y.copy()
    y_eval[1:] = np.maximum(y[1:], y_floor)
    g = np.empty((nx + 1, ny + 1))
    g0 = np.asarray(model.profit_dy(x, 0.0), dtype=float)
    singular = bool(np.any(~np.isfinite(g0))) or model.dy_singular_at_zero
    if singular:
        g[:, 0] = np.nan  # slice pinned to c0, never evaluated
    else:
        g[:, 0] = g0
    for j in range(1, ny + 1):
        g[:, j] = model.profit_dy(x, float(y_eval[j]))
    if not np.all(np.isfinite(g[:, 1:])) or (not singular and not np.all(np.isfinite(g[:, 0]))):
        raise FloatingPointError("non-finite marginal profit on the grid")

    u = np.empty((nt + 1, nx + 1, ny + 1))
    u[nt, :, :] = c0
    slices = list(range(0 if not singular else 1, ny + 1))

    preclamp_count = 0
    preclamp_max = 0.0
    max_sweeps = 0
    worst_resid = 0.0
    pool = ThreadPoolExecutor(max_workers=threads) if threads > 1 else None

    def _solve_slice(j, b_col, u_col):
        return psor_solve(u_col, b_col, lo, dg, up, c0, omega, psor_tol,
                          psor_max_iter)

    try:
        for k in range(nt - 1, -1, -1):
            mk = float(m_flow.at(t[k]))
            lo, dg, up = _build_coefficients(model, x, mk, dt, dx)
            u_next = u[k + 1]
            cols = {j: np.ascontiguousarray(u_next[:, j]) for j in slices}
            bs = {j: np.ascontiguousarray(u_next[:, j] + dt * g[:, j]) for j in slices}
            if pool is not None:
                results = dict(zip(slices, pool.map(
                    lambda j: _solve_slice(j, bs[j], cols[j]), slices)))
            else:
                results = {j: _solve_slice(j, bs[j], cols[j]) for j in slices}
            uk = u[k]
            if singular:
                uk[:, 0] = c0
            for j in slices:
                sweeps, change, resid = results[j]
                if change > psor_tol:
                    raise PsorError(
                        f"PSOR did not converge at t-step {k}, fuel slice {j}: "
                        f"last change {change:.3e}, residual {resid:.3e} "
                        f"after {sweeps} sweeps")
                max_sweeps = max(max_sweeps, sweeps)
                worst_resid = max(worst_resid, resid)
                uk[:, j] = cols[j]
            if not np.all(np.isfinite(uk)):
                raise FloatingPointError(f"non-finite value at t-step {k}")

            # isotone clamps: x ascending, then y, then t (monotone flows only)
            clamped = np.maximum.accumulate(uk, axis=0)
            viol = clamped - uk
            uk = clamped
            new = np.minimum.accumulate(uk, axis=1)
            viol = np.maximum(viol, uk - new)
            uk = new
            if flow_monotone:
                new = np.minimum(uk, u_next)
                viol = np.maximum(viol, uk - new)
                uk = new
            vmax = float(viol.max())
            if vmax > tol_mono:
                raise MonotonicityError(
                    f"monotonicity violation {vmax:.3e} > {tol_mono:.1e} "
                    f"at t-step {k}")
            preclamp_max = max(preclamp_max, vmax)
            preclamp_count += int(np.count_nonzero(viol > psor_tol))
            u[k] = uk
    finally:
        if pool is not None:
            pool.shutdown()

    return ValueSurface(
        grid=grid, values=u, obstacle_c0=c0, flow_monotone=flow_monotone,
        preclamp_violations=preclamp_count, preclamp_max=preclamp_max,
        psor_max_sweeps=max_sweeps, psor_worst_residual=worst_resid,
    )


def extract_boundary(surface: ValueSurface, tol_active: float) -> Boundary:
    """Lowest fuel level where the value drops below c0 - tol_active.

    Linear interpolation in fuel between the bracketing nodes; 1 where no node
    is below threshold, 0 where even the lowest solved node is below it.
    """
    grid = surface.grid
    u = surface.values
    y = grid.y_nodes
    thresh = surface.obstacle_c0 - tol_active
    below = u < thresh
    any_below = below.any(axis=2)
    first = np.argmax(below, axis=2)

    c = np.ones(u.shape[:2])
    ks, xs = np.nonzero(any_below)
    j = first[ks, xs]
    at_zero = j == 0
    c[ks[at_zero], xs[at_zero]] = 0.0
    ks, xs, j = ks[~at_zero], xs[~at_zero], j[~at_zero]
    u_hi = u[ks, xs, j - 1]   # >= thresh
    u_lo = u[ks, xs, j]       # < thresh
    frac = (thresh - u_hi) / (u_lo - u_hi)
    c[ks, xs] = y[j - 1] + frac * (y[j] - y[j - 1])
    return Boundary(grid.t_nodes, grid.x_nodes, c)


def continuation_mask(surface: ValueSurface, tol_active: float) -> np.ndarray:
    """Boolean tensor: node strictly below the cap (continuation region)."""
    return surface.values < surface.obstacle_c0 - tol_active


def estimate_lipschitz_x(boundary: Boundary, log_x: bool = False) -> LipschitzReport:
    """Max slope of the boundary across adjacent x-nodes, per time and overall.

    With ``log_x`` the slope is measured in psi = ln x coordinates (geometric
    models; requires a positive x domain).
    """
    if len(boundary.x_nodes) < 33:
        raise ValueError("need at least 32 x-steps for a slope estimate")
    xs = boundary.x_nodes
    if log_x:
        if xs[0] <= 0:
            raise ValueError("log-coordinate slope needs x > 0")
        xs = np.log(xs)
    steps = np.diff(xs)
    slopes = np.abs(np.diff(boundary.values, axis=1)) / steps
    per_t = slopes.max(axis=1)
    return LipschitzReport(float(per_t.max()), per_t, log_x)
