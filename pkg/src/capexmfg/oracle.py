"""Brute-force tree oracles: stopping value and fuel-quantized control value.

A recombining trinomial lattice matches the first two moments of the Euler
step exactly; drift is absorbed by shifting the central child (so
probabilities stay valid for mean-reverting and geometric dynamics alike).
Geometric models run in log coordinates.  These oracles are deliberately
independent of the finite-difference solver and the Monte Carlo machinery.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .model import MeanFlow, ModelSpec

__all__ = ["TreeSpec", "tree_stopping_value", "tree_control_value", "tree_phi",
           "TreeError"]


class TreeError(RuntimeError):
    """Lattice construction failed (invalid probabilities or runaway drift)."""


@dataclass(frozen=True)
class TreeSpec:
    steps: int = 400
    n_fuel: int = 41

    def __post_init__(self):
        if not 1 <= self.steps <= 2000:
            raise ValueError("steps must be in [1, 2000]")
        if not 2 <= self.n_fuel <= 51:
            raise ValueError("n_fuel must be in [2, 51]")


class _Lattice:
    """Spatial lattice plus per-layer branch data for a start point (t0, x0)."""

    def __init__(self, model: ModelSpec, m_flow: MeanFlow, tree: TreeSpec,
                 t0: float, x0: float):
        self.model = model
        T = model.horizon_T
        if not 0.0 <= t0 < T:
            raise ValueError("start time must lie in [0, T)")
        self.n = tree.steps
        self.dt = (T - t0) / self.n
        self.t0 = t0
        self.log = model.log_space
        z0 = math.log(x0) if self.log else x0
        if self.log:
            sigma_ref = float(model.log_vol)
        else:
            sigma_ref = float(np.asarray(model.vol(x0)))
        if sigma_ref <= 0:
            raise TreeError("volatility must be positive at the start point")
        self.h = math.sqrt(3.0) * sigma_ref * math.sqrt(self.dt)
        self.sigma_ref = sigma_ref

        # span estimate: branch shifting can push the reachable set beyond
        # steps nodes per side when the drift is strong
        span = self.n + 8
        for _ in range(3):
            zs = z0 + self.h * np.arange(-span, span + 1)
            ms = self._max_shift(zs, m_flow)
            need = self.n * (1 + ms) + 8
            if need <= span:
                break
            span = need
        if span > 6 * self.n + 8:
            raise TreeError("drift too strong for the lattice; increase steps")
        self.span = span
        self.z = z0 + self.h * np.arange(-span, span + 1)
        self.x = np.exp(self.z) if self.log else self.z
        self.m_flow = m_flow
        self.root = span  # index of z0

    def _mu(self, zs: np.ndarray, mk: float) -> np.ndarray:
        if self.log:
            return np.full_like(zs, float(self.model.log_drift(mk)))
        return np.asarray(self.model.drift(zs, mk), dtype=float)

    def _sigma2(self) -> np.ndarray:
        if self.log:
            return np.full_like(self.z, self.sigma_ref**2)
        return np.asarray(self.model.vol(self.z), dtype=float) ** 2

    def _max_shift(self, zs: np.ndarray, m_flow: MeanFlow) -> int:
        worst = 0.0
        for mval in (0.0, 1.0):
            mu = self._mu(zs, mval)
            worst = max(worst, float(np.max(np.abs(mu))) * self.dt / self.h)
        return int(round(worst))

    def branches(self, k: int):
        """Child indices and probabilities for layer k (time t0 + k*dt)."""
        tk = self.t0 + k * self.dt
        mk = float(self.m_flow.at(tk))
        mu = self._mu(self.z, mk)
        shift = np.rint(mu * self.dt / self.h).astype(np.int64)
        idx = np.arange(len(self.z), dtype=np.int64)
        center = np.clip(idx + shift, 1, len(self.z) - 2)
        # clipping only bites at edge nodes, which stay outside the root's
        # dependence cone (span exceeds steps*(1+max_shift)); clamp eta there
        # to keep probabilities valid
        eta = np.clip((self.z + mu * self.dt - self.z[center]) / self.h, -0.5, 0.5)
        q = self._sigma2() * self.dt / self.h**2 + eta**2
        p_u = 0.5 * (q + eta)
        p_d = 0.5 * (q - eta)
        p_m = 1.0 - p_u - p_d
        if np.any(p_u < -1e-12) or np.any(p_d < -1e-12) or np.any(p_m < -1e-12):
            raise TreeError(
                "branch probabilities left [0,1]; increase steps or narrow "
                "the volatility variation across the lattice")
        return center, p_u, p_m, p_d

    def expect(self, center, p_u, p_m, p_d, values: np.ndarray) -> np.ndarray:
        """One-step expectation of next-layer values (vectorized over the lattice)."""
        if values.ndim == 1:
            return p_u * values[center + 1] + p_m * values[center] + p_d * values[center - 1]
        return (p_u[:, None] * values[center + 1, :]
                + p_m[:, None] * values[center, :]
                + p_d[:, None] * values[center - 1, :])


def tree_stopping_value(model: ModelSpec, m_flow: MeanFlow, tree: TreeSpec,
                        t: float, x: float, y: float) -> float:
    """Backward induction for the stopping value at fixed fuel level y."""
    lat = _Lattice(model, m_flow, tree, t, x)
    c0 = model.cost_c0
    disc = math.exp(-model.discount_r * lat.dt)
    g = np.asarray(model.profit_dy(lat.x, y), dtype=float)
    if not np.all(np.isfinite(g)):
        raise TreeError("non-finite marginal profit on the lattice; avoid y=0 "
                        "for profits singular there")
    w = np.full(len(lat.z), c0)
    for k in range(lat.n - 1, -1, -1):
        center, p_u, p_m, p_d = lat.branches(k)
        cont = g * lat.dt + disc * lat.expect(center, p_u, p_m, p_d, w)
        w = np.minimum(c0, cont)
    return float(w[lat.root])


def tree_phi(model: ModelSpec, m_flow: MeanFlow, tree: TreeSpec,
             t: float, x: float) -> float:
    """Tree quadrature of the discounted full-capacity profit stream."""
    lat = _Lattice(model, m_flow, tree, t, x)
    disc = math.exp(-model.discount_r * lat.dt)
    f1 = np.asarray(model.profit(lat.x, 1.0), dtype=float)
    phi = np.zeros(len(lat.z))
    for k in range(lat.n - 1, -1, -1):
        center, p_u, p_m, p_d = lat.branches(k)
        phi = f1 * lat.dt + disc * lat.expect(center, p_u, p_m, p_d, phi)
    return float(phi[lat.root])


def tree_control_value(model: ModelSpec, m_flow: MeanFlow, tree: TreeSpec,
                       t: float, x: float, y: float):
    """Exact DP over (lattice node, fuel level) with grid-quantized purchases.

    Returns (value, action_boundary_y) where the boundary is the lowest fuel
    level at the root with zero optimal action.
    """
    lat = _Lattice(model, m_flow, tree, t, x)
    c0 = model.cost_c0
    disc = math.exp(-model.discount_r * lat.dt)
    fuel = np.linspace(y, 1.0, tree.n_fuel)
    fmat = np.asarray(model.profit(lat.x[:, None], fuel[None, :]), dtype=float)

    v = np.zeros((len(lat.z), tree.n_fuel))
    for k in range(lat.n - 1, -1, -1):
        center, p_u, p_m, p_d = lat.branches(k)
        gain = fmat * lat.dt + disc * lat.expect(center, p_u, p_m, p_d, v)
        # jump now to any l' >= l: value = c0*y_l + max_{l'>=l} (gain_l' - c0*y_l')
        net = gain - c0 * fuel[None, :]
        suffix = np.flip(np.maximum.accumulate(np.flip(net, axis=1), axis=1), axis=1)
        v = c0 * fuel[None, :] + suffix
        if k == 0:
            net_root = net[lat.root]
            suffix_root = suffix[lat.root]
    # greedy action at the root: lowest level whose optimum is "stay put"
    no_action = net_root >= suffix_root - 1e-14
    j = int(np.argmax(no_action)) if no_action.any() else tree.n_fuel - 1
    return float(v[lat.root, 0]), float(fuel[j])
