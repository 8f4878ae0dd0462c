"""Euler ensembles of the uncontrolled state under a frozen population flow.

Randomness is contractual: every path draws from a counter-based stream keyed
by (seed, context, path index), so ensembles are bit-identical regardless of
scheduling and can be coupled across solver iterations by reusing the seed.
Geometric models step in log coordinates and exponentiate (exact positivity).
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .model import InitialLaw, MeanFlow, ModelSpec

__all__ = ["SimConfig", "Ensemble", "Draws", "simulate_x", "make_draws",
           "simulate_from_draws", "comparison_check", "SimulationError",
           "stream"]


class SimulationError(RuntimeError):
    pass


@dataclass(frozen=True)
class SimConfig:
    n_paths: int
    seed: int
    substeps: int = 1
    antithetic: bool = False

    def __post_init__(self):
        if self.n_paths < 1:
            raise ValueError("need at least one path")
        if self.substeps < 1:
            raise ValueError("substeps must be positive")
        if not 0 <= self.seed < 2**64:
            raise ValueError("seed must fit in 64 bits")


def stream(seed: int, path: int, context: int = 0) -> np.random.Generator:
    """Counter-based stream for one path; the key, not the generator, is the contract."""
    return np.random.Generator(np.random.Philox(key=[seed, (context << 40) + path]))


@dataclass
class Draws:
    """Frozen per-path randomness: initial states and Gaussian increments."""

    x0: np.ndarray          # (n,)
    y0: np.ndarray          # (n,)
    z: np.ndarray           # (n, total substeps)


def make_draws(law: InitialLaw, cfg: SimConfig, n_substeps_total: int,
               context: int = 0) -> Draws:
    """Generate all randomness for an ensemble (reusable across iterations)."""
    n = cfg.n_paths
    x0 = np.empty(n)
    y0 = np.empty(n)
    z = np.empty((n, n_substeps_total))
    for i in range(n):
        if cfg.antithetic and i % 2 == 1:
            x0[i], y0[i] = x0[i - 1], y0[i - 1]
            z[i] = -z[i - 1]
            continue
        gen = stream(cfg.seed, i, context)
        x0[i], y0[i] = law.sample(gen)
        z[i] = gen.standard_normal(n_substeps_total)
    return Draws(x0, y0, z)


@dataclass
class Ensemble:
    time_grid: np.ndarray
    x_paths: np.ndarray     # (n, K+1) at grid nodes
    x0: np.ndarray
    y0: np.ndarray


def _check_finite(arr: np.ndarray, step: int) -> None:
    if not np.all(np.isfinite(arr)):
        bad = int(np.flatnonzero(~np.isfinite(arr))[0])
        raise SimulationError(f"non-finite state on path {bad} at substep {step}")


def simulate_from_draws(model: ModelSpec, m_flow: MeanFlow, draws: Draws,
                        time_grid: np.ndarray, substeps: int) -> Ensemble:
    """Euler stepping with the flow evaluated at substep left endpoints."""
    tg = np.asarray(time_grid, dtype=float)
    n_steps = len(tg) - 1
    n = len(draws.x0)
    out = np.empty((n, n_steps + 1))
    if model.log_space:
        state = np.log(draws.x0)
        out[:, 0] = draws.x0
    else:
        state = draws.x0.copy()
        out[:, 0] = state
    col = 0
    for k in range(n_steps):
        dt_grid = tg[k + 1] - tg[k]
        h = dt_grid / substeps
        sqh = math.sqrt(h)
        for s in range(substeps):
            t_left = tg[k] + s * h
            mk = float(m_flow.at(t_left))
            zcol = draws.z[:, col]
            col += 1
            if model.log_space:
                state = state + float(model.log_drift(mk)) * h + model.log_vol * sqh * zcol
            else:
                state = state + model.drift(state, mk) * h + model.vol(state) * sqh * zcol
            _check_finite(state, col)
        out[:, k + 1] = np.exp(state) if model.log_space else state
    return Ensemble(tg, out, draws.x0, draws.y0)


def simulate_x(model: ModelSpec, m_flow: MeanFlow, cfg: SimConfig,
               time_grid: np.ndarray, context: int = 0,
               law: InitialLaw | None = None) -> Ensemble:
    """Simulate an ensemble of uncontrolled paths from the model's initial law."""
    tg = np.asarray(time_grid, dtype=float)
    draws = make_draws(law or model.initial_law, cfg,
                       (len(tg) - 1) * cfg.substeps, context)
    return simulate_from_draws(model, m_flow, draws, tg, cfg.substeps)


@dataclass(frozen=True)
class ComparisonReport:
    passed: bool
    max_violation: float
    where: tuple


def comparison_check(model: ModelSpec, m_lo: MeanFlow, m_hi: MeanFlow,
                     cfg: SimConfig, time_grid: np.ndarray,
                     tol_cmp: float = 1e-9) -> ComparisonReport:
    """Coupled-noise ordering: paths under the larger flow dominate pointwise."""
    tg = np.asarray(time_grid, dtype=float)
    if np.any(m_lo.at(tg) > m_hi.at(tg)):
        raise ValueError("m_lo must not exceed m_hi")
    draws = make_draws(model.initial_law, cfg, (len(tg) - 1) * cfg.substeps)
    lo = simulate_from_draws(model, m_lo, draws, tg, cfg.substeps)
    hi = simulate_from_draws(model, m_hi, draws, tg, cfg.substeps)
    gap = lo.x_paths - hi.x_paths
    worst = float(gap.max())
    idx = np.unravel_index(int(np.argmax(gap)), gap.shape)
    return ComparisonReport(worst <= tol_cmp, max(worst, 0.0),
                            (int(idx[0]), int(idx[1])))
