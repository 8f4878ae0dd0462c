"""Best-response iteration to the mean-field equilibrium, and value estimators.

The scheme starts from the constant flow 1, alternates a stopping solve /
boundary extraction with an ensemble reflection, and feeds the resulting mean
fuel level back as the next flow.  Pure best response, no damping: this
specific iteration is monotone (flows decrease pointwise across iterations),
which the records track.  Gaussian draws are frozen across iterations so the
monotone ladder is a pathwise statement rather than a statistical one.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .model import InitialLaw, MeanFlow, ModelSpec
from .simulate import Draws, SimConfig, make_draws, simulate_from_draws
from .skorokhod import payoff_paths, reflect_paths
from .stopping import Boundary, Grid, ValueSurface, extract_boundary, solve_stopping
from .util import exact_mean, exact_mean_columns

__all__ = ["MfgSolution", "IterateRecord", "mfg_iterate", "update_mean_flow",
           "value_by_integration", "value_by_simulation", "mfg_value",
           "consistency_residual", "ConsistencyReport"]

# stream contexts: keep estimator randomness disjoint from the iteration draws
CTX_ITERATE = 0
CTX_PHI = 3
CTX_VALUE_SIM = 4
CTX_MFG_VALUE = 5


@dataclass
class IterateRecord:
    n: int
    sup_gap: float
    boundary_sup_gap: float
    m_values: np.ndarray
    min_u_gap: float | None = None      # min over nodes of u_prev - u_cur
    min_c_gap: float | None = None
    min_m_gap: float | None = None      # min over t of m_prev - m_cur (produced flows)
    min_y_gap: float | None = None      # pathwise fuel ordering (coupled draws)

    def as_json(self) -> str:
        rec = {"n": self.n, "sup_gap": self.sup_gap,
               "boundary_sup_gap": self.boundary_sup_gap,
               "m": [float(v) for v in self.m_values]}
        for k in ("min_u_gap", "min_c_gap", "min_m_gap", "min_y_gap"):
            v = getattr(self, k)
            if v is not None:
                rec[k] = v
        return json.dumps(rec, sort_keys=True)


@dataclass
class MfgSolution:
    grid: Grid
    boundary: Boundary
    m_star: MeanFlow
    u: ValueSurface
    iterates: list
    converged: bool
    n_iterations: int
    diagnostics: dict = field(default_factory=dict)


def update_mean_flow(time_grid: np.ndarray, y_paths: np.ndarray) -> MeanFlow:
    """Ensemble average of the controlled fuel, flagged monotone.

    Running-max controls make every path nondecreasing, and exact column means
    preserve that ordering, so the flag is structural.
    """
    return MeanFlow(np.asarray(time_grid, dtype=float),
                    exact_mean_columns(y_paths), monotone=True)


def mfg_iterate(model: ModelSpec, grid: Grid, sim_cfg: SimConfig,
                tol_iter: float = 5e-3, max_iters: int = 50, *,
                tol_active: float | None = None, threads: int = 1,
                log_stream=None, solver_opts: dict | None = None) -> MfgSolution:
    """Iterate stopping solve -> boundary -> reflected ensemble -> mean flow.

    Stops when the sup-gap between consecutive flows drops below ``tol_iter``;
    a budget overrun returns the last iterate flagged non-converged.
    """
    tol_active = model.cost_c0 * 1e-6 if tol_active is None else tol_active
    solver_opts = dict(solver_opts or {})
    tg = grid.t_nodes
    draws = make_draws(model.initial_law, sim_cfg,
                       (len(tg) - 1) * sim_cfg.substeps, CTX_ITERATE)

    m_prev = MeanFlow(tg, np.ones(len(tg)), monotone=True)
    prev_u = prev_c = prev_m_vals = prev_y = None
    records: list[IterateRecord] = []
    converged = False
    boundary = None
    surface = None
    m_cur = m_prev

    for n in range(max_iters):
        surface = solve_stopping(model, m_prev, grid, threads=threads,
                                 **solver_opts)
        boundary = extract_boundary(surface, tol_active)
        ens = simulate_from_draws(model, m_prev, draws, tg, sim_cfg.substeps)
        _, y_paths = reflect_paths(boundary, tg, ens.x_paths, draws.y0)
        m_cur = update_mean_flow(tg, y_paths)

        rec = IterateRecord(
            n=n,
            sup_gap=m_cur.sup_distance(m_prev),
            boundary_sup_gap=(float(np.max(np.abs(boundary.values - prev_c.values)))
                              if prev_c is not None else 1.0),
            m_values=m_cur.values,
        )
        if prev_u is not None:
            rec.min_u_gap = float(np.min(prev_u.values - surface.values))
            rec.min_c_gap = float(np.min(prev_c.values - boundary.values))
            rec.min_m_gap = float(np.min(prev_m_vals - m_cur.values))
            rec.min_y_gap = float(np.min(prev_y - y_paths))
        records.append(rec)
        if log_stream is not None:
            log_stream.write(rec.as_json() + "\n")

        if rec.sup_gap <= tol_iter:
            converged = True
            break
        prev_u, prev_c, prev_m_vals, prev_y = surface, boundary, m_cur.values, y_paths
        m_prev = m_cur

    se_m = float(np.max(y_paths.std(axis=0, ddof=1))) / math.sqrt(sim_cfg.n_paths)
    return MfgSolution(
        grid=grid, boundary=boundary, m_star=m_cur, u=surface,
        iterates=records, converged=converged, n_iterations=len(records),
        diagnostics={"flow_se": se_m, "tol_iter": tol_iter,
                     "tol_active": tol_active, "n_paths": sim_cfg.n_paths},
    )


def _subgrid_from(grid_t: np.ndarray, t: float) -> np.ndarray:
    """Time grid from t to the horizon, reusing later nodes."""
    later = grid_t[grid_t > t + 1e-12]
    return np.concatenate([[t], later])


def _surface_at(surface: ValueSurface, t: float, x: float) -> np.ndarray:
    """Value profile in fuel at (t, x), bilinear in (t, x)."""
    tg, xg = surface.grid.t_nodes, surface.grid.x_nodes
    u = surface.values
    k = min(max(int(np.searchsorted(tg, t, side="right")) - 1, 0), len(tg) - 2)
    wt = 0.0 if tg[k] == t else (t - tg[k]) / (tg[k + 1] - tg[k])
    i = min(max(int(np.searchsorted(xg, x, side="right")) - 1, 0), len(xg) - 2)
    wx = 0.0 if xg[i] == x else (x - xg[i]) / (xg[i + 1] - xg[i])
    plane = ((1 - wt) * (1 - wx) * u[k, i] + (1 - wt) * wx * u[k, i + 1]
             + wt * (1 - wx) * u[k + 1, i] + wt * wx * u[k + 1, i + 1])
    return plane


def value_by_integration(surface: ValueSurface, model: ModelSpec,
                         m_flow: MeanFlow, sim_cfg: SimConfig,
                         t: float, x: float, y: float):
    """Full-capacity profit estimate minus the fuel integral of stopping values.

    Returns (value, standard error); the fuel integral is deterministic, so the
    error comes from the Monte Carlo profit term alone.
    """
    tg = _subgrid_from(surface.grid.t_nodes, t)
    law = InitialLaw.point(x, 1.0)
    draws = make_draws(law, sim_cfg, (len(tg) - 1) * sim_cfg.substeps, CTX_PHI)
    ens = simulate_from_draws(model, m_flow, draws, tg, sim_cfg.substeps)
    disc = np.exp(-model.discount_r * (tg - t))
    phi_paths = np.trapz(disc[None, :] * model.profit(ens.x_paths, 1.0), tg, axis=1)
    phi = exact_mean(phi_paths)
    se = float(phi_paths.std(ddof=1)) / math.sqrt(len(phi_paths))

    yg = surface.grid.y_nodes
    prof = _surface_at(surface, t, x)
    j = int(np.searchsorted(yg, y, side="left"))
    if j < len(yg) and yg[j] == y:
        integral = float(np.trapz(prof[j:], yg[j:]))
    else:
        u_y = float(np.interp(y, yg, prof))
        integral = float(np.trapz(np.concatenate([[u_y], prof[j:]]),
                                  np.concatenate([[y], yg[j:]])))
    return phi - integral, se


def value_by_simulation(model: ModelSpec, m_flow: MeanFlow, boundary: Boundary,
                        sim_cfg: SimConfig, t: float, x: float, y: float):
    """Reflected-control payoff from (t, x, y); returns (value, standard error)."""
    tg = _subgrid_from(np.asarray(boundary.t_nodes), t)
    law = InitialLaw.point(x, y)
    draws = make_draws(law, sim_cfg, (len(tg) - 1) * sim_cfg.substeps,
                       CTX_VALUE_SIM)
    ens = simulate_from_draws(model, m_flow, draws, tg, sim_cfg.substeps)
    xi, ypath = reflect_paths(boundary, tg, ens.x_paths, draws.y0)
    pays = payoff_paths(model, tg, ens.x_paths, ypath, xi)
    return exact_mean(pays), float(pays.std(ddof=1)) / math.sqrt(len(pays))


def mfg_value(model: ModelSpec, solution: MfgSolution, sim_cfg: SimConfig,
              context: int = CTX_MFG_VALUE):
    """Equilibrium value averaged over the initial law; returns (value, se)."""
    tg = solution.grid.t_nodes
    draws = make_draws(model.initial_law, sim_cfg,
                       (len(tg) - 1) * sim_cfg.substeps, context)
    ens = simulate_from_draws(model, solution.m_star, draws, tg,
                              sim_cfg.substeps)
    xi, ypath = reflect_paths(solution.boundary, tg, ens.x_paths, draws.y0)
    pays = payoff_paths(model, tg, ens.x_paths, ypath, xi)
    return exact_mean(pays), float(pays.std(ddof=1)) / math.sqrt(len(pays))


@dataclass(frozen=True)
class ConsistencyReport:
    residual: float
    flow_se: float


def consistency_residual(model: ModelSpec, solution: MfgSolution,
                         sim_cfg: SimConfig, fresh_seed: int) -> ConsistencyReport:
    """Out-of-sample fixed-point check: re-simulate under the converged flow
    with new randomness and measure the sup-gap of the recomputed mean flow."""
    tg = solution.grid.t_nodes
    cfg = SimConfig(sim_cfg.n_paths, fresh_seed, sim_cfg.substeps,
                    sim_cfg.antithetic)
    draws = make_draws(model.initial_law, cfg, (len(tg) - 1) * cfg.substeps,
                       CTX_ITERATE)
    ens = simulate_from_draws(model, solution.m_star, draws, tg, cfg.substeps)
    _, y_paths = reflect_paths(solution.boundary, tg, ens.x_paths, draws.y0)
    m_new = update_mean_flow(tg, y_paths)
    se = float(np.max(y_paths.std(axis=0, ddof=1))) / math.sqrt(cfg.n_paths)
    return ConsistencyReport(m_new.sup_distance(solution.m_star), se)
