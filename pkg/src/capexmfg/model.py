"""Problem data for finite-fuel capacity expansion: coefficients, profit, initial law.

Three preset model families are shipped (mean-reverting with exponential
Cobb-Douglas profit, geometric dynamics with linear Cobb-Douglas profit, and a
goodwill model with geometric price dynamics).  Custom models are reachable
only through the presets' parameter space; ``audit_assumptions`` checks the
standing structural conditions numerically on a grid.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

__all__ = [
    "InitialLaw",
    "MeanFlow",
    "ModelSpec",
    "AuditCheck",
    "AuditReport",
    "preset_model",
    "audit_assumptions",
    "PRESET_NAMES",
]

PRESET_NAMES = ("ou_exp_cd", "gbm_lin_cd", "goodwill_gbm")


class ModelError(ValueError):
    """Invalid model parameters or inconsistent derivatives."""


@dataclass(frozen=True)
class InitialLaw:
    """Joint law of the initial state (x, fuel): product of named marginals, or atoms.

    ``x_dist`` is one of ("point", v), ("normal", mu, sd), ("lognormal", mu, sd)
    where lognormal means ln X ~ N(mu, sd^2).  ``y_dist`` is one of
    ("point", v), ("uniform", a, b), ("discrete", values, weights).
    Alternatively ``atoms`` is a list of (x, y, w) with weights summing to one.
    """

    x_dist: tuple | None = None
    y_dist: tuple | None = None
    atoms: tuple | None = None

    def __post_init__(self):
        if self.atoms is not None:
            if self.x_dist is not None or self.y_dist is not None:
                raise ModelError("give either marginals or atoms, not both")
            atoms = tuple((float(x), float(y), float(w)) for x, y, w in self.atoms)
            object.__setattr__(self, "atoms", atoms)
            wsum = math.fsum(w for _, _, w in atoms)
            if abs(wsum - 1.0) > 1e-12:
                raise ModelError(f"atom weights sum to {wsum}, not 1")
            if any(w < 0 for _, _, w in atoms):
                raise ModelError("negative atom weight")
            if any(not 0.0 <= y <= 1.0 for _, y, _ in atoms):
                raise ModelError("atom fuel level outside [0,1]")
            return
        if self.x_dist is None or self.y_dist is None:
            raise ModelError("need both x_dist and y_dist (or atoms)")
        kx = self.x_dist[0]
        if kx not in ("point", "normal", "lognormal"):
            raise ModelError(f"unknown x distribution {kx!r}")
        if kx in ("normal", "lognormal") and self.x_dist[2] < 0:
            raise ModelError("negative standard deviation")
        ky = self.y_dist[0]
        if ky == "point":
            ys, ws = (self.y_dist[1],), (1.0,)
        elif ky == "uniform":
            a, b = self.y_dist[1], self.y_dist[2]
            if not (0.0 <= a <= b <= 1.0):
                raise ModelError("uniform fuel support must sit inside [0,1]")
            ys, ws = (a, b), (0.5, 0.5)
        elif ky == "discrete":
            ys, ws = self.y_dist[1], self.y_dist[2]
            if abs(math.fsum(ws) - 1.0) > 1e-12:
                raise ModelError("discrete fuel weights must sum to 1")
        else:
            raise ModelError(f"unknown y distribution {ky!r}")
        if any(not 0.0 <= y <= 1.0 for y in ys):
            raise ModelError("fuel support outside [0,1]")

    @classmethod
    def point(cls, x: float, y: float) -> "InitialLaw":
        return cls(x_dist=("point", float(x)), y_dist=("point", float(y)))

    def sample(self, gen: np.random.Generator) -> tuple[float, float]:
        """Draw one (x0, y0); consumes a fixed number/order of variates per family."""
        if self.atoms is not None:
            u = gen.random()
            acc = 0.0
            for x, y, w in self.atoms:
                acc += w
                if u < acc:
                    return x, y
            return self.atoms[-1][0], self.atoms[-1][1]
        kind = self.x_dist[0]
        if kind == "point":
            x = self.x_dist[1]
        elif kind == "normal":
            x = self.x_dist[1] + self.x_dist[2] * gen.standard_normal()
        else:  # lognormal
            x = math.exp(self.x_dist[1] + self.x_dist[2] * gen.standard_normal())
        kind = self.y_dist[0]
        if kind == "point":
            y = self.y_dist[1]
        elif kind == "uniform":
            a, b = self.y_dist[1], self.y_dist[2]
            y = a + (b - a) * gen.random()
        else:  # discrete
            u = gen.random()
            acc = 0.0
            y = self.y_dist[1][-1]
            for yv, w in zip(self.y_dist[1], self.y_dist[2]):
                acc += w
                if u < acc:
                    y = yv
                    break
        return float(x), float(y)

    def mean_y(self) -> float:
        """Expected initial fuel level (exact)."""
        if self.atoms is not None:
            return math.fsum(y * w for _, y, w in self.atoms)
        kind = self.y_dist[0]
        if kind == "point":
            return self.y_dist[1]
        if kind == "uniform":
            return 0.5 * (self.y_dist[1] + self.y_dist[2])
        return math.fsum(y * w for y, w in zip(self.y_dist[1], self.y_dist[2]))


@dataclass(frozen=True)
class MeanFlow:
    """Piecewise-constant right-continuous population fuel average on a time grid."""

    time_grid: np.ndarray
    values: np.ndarray
    monotone: bool = False

    def __post_init__(self):
        tg = np.asarray(self.time_grid, dtype=float)
        vals = np.asarray(self.values, dtype=float)
        object.__setattr__(self, "time_grid", tg)
        object.__setattr__(self, "values", vals)
        if tg.ndim != 1 or vals.shape != tg.shape:
            raise ModelError("time grid / values shape mismatch")
        if not np.all(np.diff(tg) > 0):
            raise ModelError("time grid must be strictly increasing")
        if np.any(vals < -1e-15) or np.any(vals > 1.0 + 1e-15):
            raise ModelError("mean-flow values must lie in [0,1]")
        if self.monotone and np.any(np.diff(vals) < -1e-15):
            raise ModelError("flow flagged monotone but is decreasing somewhere")
        tg.setflags(write=False)
        vals.setflags(write=False)

    @classmethod
    def constant(cls, value: float, horizon: float, n_nodes: int = 2) -> "MeanFlow":
        tg = np.linspace(0.0, horizon, n_nodes)
        return cls(tg, np.full(n_nodes, float(value)), monotone=True)

    def at(self, t):
        """Right-continuous evaluation; constant extension outside the grid span."""
        idx = np.searchsorted(self.time_grid, t, side="right") - 1
        idx = np.clip(idx, 0, len(self.values) - 1)
        return self.values[idx]

    def sup_distance(self, other: "MeanFlow") -> float:
        if not np.array_equal(self.time_grid, other.time_grid):
            raise ModelError("sup_distance needs matching grids")
        return float(np.max(np.abs(self.values - other.values)))


@dataclass(frozen=True)
class ModelSpec:
    """Full problem datum: dynamics coefficients, profit and derivatives, costs, law.

    All callables accept numpy arrays elementwise.  ``log_space`` marks models
    simulated in log coordinates (geometric dynamics), in which case
    ``log_drift(m)`` and ``log_vol`` describe the log-coordinate dynamics.
    """

    name: str
    drift: Callable
    vol: Callable
    profit: Callable
    profit_dy: Callable
    profit_dyy: Callable
    profit_dxy: Callable
    discount_r: float
    cost_c0: float
    horizon_T: float
    initial_law: InitialLaw
    x_lo: float
    x_hi: float
    dy_singular_at_zero: bool
    fuel_cap: float = 1.0
    log_space: bool = False
    log_drift: Callable | None = None
    log_vol: float | None = None
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.fuel_cap != 1.0:
            raise ModelError("fuel cap is fixed to 1")
        if self.cost_c0 <= 0:
            raise ModelError("cost must be positive")
        if self.discount_r < 0:
            raise ModelError("discount rate must be nonnegative")
        if self.horizon_T <= 0:
            raise ModelError("horizon must be positive")
        if not self.x_lo < self.x_hi:
            raise ModelError("empty x domain")
        if self.log_space and self.x_lo <= 0:
            raise ModelError("log-space dynamics need a positive x domain")

    def domain_width_ok(self, n_sd: float = 4.0) -> bool:
        """Heuristic: does [x_lo, x_hi] cover the simulated span by >= n_sd stdevs."""
        T = self.horizon_T
        if self.log_space:
            sd = float(self.log_vol) * math.sqrt(T)
            lo, hi = math.log(self.x_lo), math.log(self.x_hi)
            mid = 0.5 * (lo + hi)
        else:
            xs = np.linspace(self.x_lo, self.x_hi, 33)
            sd = float(np.max(self.vol(xs))) * math.sqrt(T)
            lo, hi, mid = self.x_lo, self.x_hi, 0.5 * (self.x_lo + self.x_hi)
        return (mid - lo) >= n_sd * sd / 2 and (hi - mid) >= n_sd * sd / 2


def _check_derivatives(spec: ModelSpec, rel_tol: float = 1e-6) -> None:
    """Spot-check the hand-coded profit derivatives against central differences."""
    xs = np.linspace(spec.x_lo, spec.x_hi, 7)[1:-1]
    ys = np.array([0.15, 0.45, 0.85])
    f = spec.profit
    # first derivative tolerates a tiny step; second differences use a larger
    # step plus Richardson extrapolation to stay clear of cancellation
    hy = 1e-5
    h2 = 1e-3
    hx = h2 * max(1.0, 0.1 * (spec.x_hi - spec.x_lo))

    def d2y(x, y, h):
        return (f(x, y + h) - 2 * f(x, y) + f(x, y - h)) / h**2

    def dxy(x, y, ha, hb):
        return (f(x + ha, y + hb) - f(x + ha, y - hb)
                - f(x - ha, y + hb) + f(x - ha, y - hb)) / (4 * ha * hb)

    for x in xs:
        for y in ys:
            fd_dy = (f(x, y + hy) - f(x, y - hy)) / (2 * hy)
            fd_dyy = (4 * d2y(x, y, h2 / 2) - d2y(x, y, h2)) / 3
            fd_dxy = (4 * dxy(x, y, hx / 2, h2 / 2) - dxy(x, y, hx, h2)) / 3
            for got, want, lbl in (
                (spec.profit_dy(x, y), fd_dy, "profit_dy"),
                (spec.profit_dyy(x, y), fd_dyy, "profit_dyy"),
                (spec.profit_dxy(x, y), fd_dxy, "profit_dxy"),
            ):
                scale = max(abs(want), 1e-8)
                if abs(got - want) > rel_tol * scale + 1e-10:
                    raise ModelError(
                        f"{lbl} inconsistent with finite differences at "
                        f"(x={x:.3g}, y={y:.3g}): {got:.6g} vs {want:.6g}"
                    )


def preset_model(name: str, **params) -> ModelSpec:
    """Build one of the shipped model families.

    ou_exp_cd:    dX = alpha((coupling*m + 1-coupling) - X)dt + sigma dW,
                  f(x,y) = e^x y^beta.  ``mean_coupling`` in [0,1]; with 0 the
                  drift ignores the population (useful for decoupled baselines).
    gbm_lin_cd:   dX = alpha m X dt + sigma X dW on x>0, f(x,y)=(1+x)(1+y)^beta;
                  requires r*c0 > beta.
    goodwill_gbm: dX = (mu + m) X dt + sigma X dW on x>0, f(x,y) = x (1+y)^gpow.
    """
    p = dict(params)
    r = float(p.pop("r", 0.1))
    c0 = float(p.pop("c0", 1.0))
    T = float(p.pop("T", 1.0))
    sigma = float(p.pop("sigma"))
    if sigma <= 0:
        raise ModelError("sigma must be positive")
    law = p.pop("initial_law", None)

    if name == "ou_exp_cd":
        alpha = float(p.pop("alpha"))
        beta = float(p.pop("beta"))
        coupling = float(p.pop("mean_coupling", 1.0))
        x_lo = float(p.pop("x_lo", -4.0))
        x_hi = float(p.pop("x_hi", 4.0))
        if alpha <= 0:
            raise ModelError("alpha must be positive")
        if not 0.0 < beta < 1.0:
            raise ModelError("beta must lie in (0,1)")
        if not 0.0 <= coupling <= 1.0:
            raise ModelError("mean_coupling must lie in [0,1]")
        if law is None:
            law = InitialLaw.point(0.0, 0.0)

        def drift(x, m):
            return alpha * ((coupling * m + (1.0 - coupling)) - x)

        def vol(x):
            return sigma + 0.0 * np.asarray(x)

        def profit(x, y):
            return np.exp(x) * np.power(y, beta)

        def profit_dy(x, y):
            y = np.asarray(y, dtype=float)
            with np.errstate(divide="ignore"):
                out = beta * np.exp(x) * np.power(y, beta - 1.0)
            return out

        def profit_dyy(x, y):
            with np.errstate(divide="ignore"):
                return beta * (beta - 1.0) * np.exp(x) * np.power(y, beta - 2.0)

        def profit_dxy(x, y):
            with np.errstate(divide="ignore"):
                return beta * np.exp(x) * np.power(y, beta - 1.0)

        spec = ModelSpec(
            name=name, drift=drift, vol=vol, profit=profit, profit_dy=profit_dy,
            profit_dyy=profit_dyy, profit_dxy=profit_dxy, discount_r=r, cost_c0=c0,
            horizon_T=T, initial_law=law, x_lo=x_lo, x_hi=x_hi,
            dy_singular_at_zero=True,
            params={"alpha": alpha, "sigma": sigma, "beta": beta, "r": r, "c0": c0,
                    "T": T, "mean_coupling": coupling, "x_lo": x_lo, "x_hi": x_hi},
        )

    elif name == "gbm_lin_cd":
        alpha = float(p.pop("alpha"))
        beta = float(p.pop("beta"))
        x_lo = float(p.pop("x_lo", 0.05))
        x_hi = float(p.pop("x_hi", 8.0))
        if alpha <= 0:
            raise ModelError("alpha must be positive")
        if not 0.0 < beta < 1.0:
            raise ModelError("beta must lie in (0,1)")
        if r * c0 <= beta:
            raise ModelError(
                f"gbm_lin_cd needs r*c0 > beta (got r*c0={r * c0:.4g} <= beta={beta:.4g})"
            )
        if x_lo <= 0:
            raise ModelError("gbm_lin_cd lives on x > 0")
        if law is None:
            law = InitialLaw.point(1.0, 0.0)

        def drift(x, m):
            return alpha * np.asarray(m) * np.asarray(x)

        def vol(x):
            return sigma * np.asarray(x)

        def profit(x, y):
            return (1.0 + np.asarray(x)) * np.power(1.0 + np.asarray(y), beta)

        def profit_dy(x, y):
            return beta * (1.0 + np.asarray(x)) * np.power(1.0 + np.asarray(y), beta - 1.0)

        def profit_dyy(x, y):
            return beta * (beta - 1.0) * (1.0 + np.asarray(x)) * np.power(1.0 + np.asarray(y), beta - 2.0)

        def profit_dxy(x, y):
            return beta * np.power(1.0 + np.asarray(y), beta - 1.0) + 0.0 * np.asarray(x)

        def log_drift(m):
            return alpha * np.asarray(m) - 0.5 * sigma * sigma

        spec = ModelSpec(
            name=name, drift=drift, vol=vol, profit=profit, profit_dy=profit_dy,
            profit_dyy=profit_dyy, profit_dxy=profit_dxy, discount_r=r, cost_c0=c0,
            horizon_T=T, initial_law=law, x_lo=x_lo, x_hi=x_hi,
            dy_singular_at_zero=False, log_space=True, log_drift=log_drift,
            log_vol=sigma,
            params={"alpha": alpha, "sigma": sigma, "beta": beta, "r": r, "c0": c0,
                    "T": T, "x_lo": x_lo, "x_hi": x_hi},
        )

    elif name == "goodwill_gbm":
        mu = float(p.pop("mu"))
        gpow = float(p.pop("gpow", 0.5))
        x_lo = float(p.pop("x_lo", 0.1))
        x_hi = float(p.pop("x_hi", 4.0))
        if not 0.0 < gpow < 1.0:
            raise ModelError("gpow must lie in (0,1)")
        if x_lo <= 0:
            raise ModelError("goodwill_gbm lives on x > 0")
        if law is None:
            law = InitialLaw.point(1.0, 0.0)

        def drift(x, m):
            return (mu + np.asarray(m)) * np.asarray(x)

        def vol(x):
            return sigma * np.asarray(x)

        def profit(x, y):
            return np.asarray(x) * np.power(1.0 + np.asarray(y), gpow)

        def profit_dy(x, y):
            return gpow * np.asarray(x) * np.power(1.0 + np.asarray(y), gpow - 1.0)

        def profit_dyy(x, y):
            return gpow * (gpow - 1.0) * np.asarray(x) * np.power(1.0 + np.asarray(y), gpow - 2.0)

        def profit_dxy(x, y):
            return gpow * np.power(1.0 + np.asarray(y), gpow - 1.0) + 0.0 * np.asarray(x)

        def log_drift(m):
            return mu + np.asarray(m) - 0.5 * sigma * sigma

        spec = ModelSpec(
            name=name, drift=drift, vol=vol, profit=profit, profit_dy=profit_dy,
            profit_dyy=profit_dyy, profit_dxy=profit_dxy, discount_r=r, cost_c0=c0,
            horizon_T=T, initial_law=law, x_lo=x_lo, x_hi=x_hi,
            dy_singular_at_zero=False, log_space=True, log_drift=log_drift,
            log_vol=sigma,
            params={"mu": mu, "sigma": sigma, "gpow": gpow, "r": r, "c0": c0,
                    "T": T, "x_lo": x_lo, "x_hi": x_hi},
        )

    else:
        raise ModelError(f"unknown preset {name!r}")

    if p:
        raise ModelError(f"unknown parameters for {name}: {sorted(p)}")
    _check_derivatives(spec)
    return spec


@dataclass(frozen=True)
class AuditCheck:
    name: str
    passed: bool
    worst_point: tuple
    worst_value: float
    detail: str = ""


@dataclass(frozen=True)
class AuditReport:
    checks: tuple

    @property
    def all_pass(self) -> bool:
        return all(c.passed for c in self.checks)

    def failed(self) -> list:
        return [c for c in self.checks if not c.passed]

    def as_dict(self) -> dict:
        return {
            "all_pass": self.all_pass,
            "checks": [
                {"name": c.name, "passed": c.passed,
                 "worst_point": list(c.worst_point), "worst_value": c.worst_value,
                 "detail": c.detail}
                for c in self.checks
            ],
        }


def _worst(diffs: np.ndarray, coords: tuple) -> tuple[tuple, float]:
    idx = np.unravel_index(int(np.argmin(diffs)), diffs.shape)
    point = tuple(float(axis[i]) for axis, i in zip(coords, idx))
    return point, float(diffs[idx])


def audit_assumptions(model: ModelSpec, grid, n_m: int = 21) -> AuditReport:
    """Grid check of the structural conditions on drift and profit (report-only).

    Verifies, on the truncated domain: monotone drift in the population
    average, monotone profit in x and y, monotone marginal profit in x,
    strict concavity in y, strictly positive mixed derivative, and that
    r*c0 separates the marginal profit at the two domain edges.
    """
    xs = np.asarray(grid.x_nodes, dtype=float)
    ys_int = np.asarray(grid.y_nodes, dtype=float)[1:-1]
    ms = np.linspace(0.0, 1.0, n_m)
    r, c0 = model.discount_r, model.cost_c0
    checks = []

    a = model.drift(xs[:, None], ms[None, :])
    d = np.diff(a, axis=1).min(axis=1)
    pt, val = _worst(d, (xs,))
    checks.append(AuditCheck("drift_monotone_in_m", bool(np.all(d >= -1e-12)), pt, val))

    f = model.profit(xs[:, None], ys_int[None, :])
    dx = np.diff(f, axis=0)
    pt, val = _worst(dx.min(axis=1), (xs[:-1],))
    checks.append(AuditCheck("profit_monotone_in_x", bool(np.all(dx >= -1e-12)), pt, val))
    dy = np.diff(f, axis=1)
    pt, val = _worst(dy.min(axis=0), (ys_int[:-1],))
    checks.append(AuditCheck("profit_monotone_in_y", bool(np.all(dy >= -1e-12)), pt, val))

    fy = model.profit_dy(xs[:, None], ys_int[None, :])
    dfy = np.diff(fy, axis=0)
    pt, val = _worst(dfy.min(axis=1), (xs[:-1],))
    checks.append(AuditCheck("profit_dy_monotone_in_x", bool(np.all(dfy >= -1e-12)), pt, val))

    fyy = model.profit_dyy(xs[:, None], ys_int[None, :])
    idx = np.unravel_index(int(np.argmax(fyy)), fyy.shape)
    checks.append(AuditCheck(
        "profit_strictly_concave_in_y", bool(np.all(fyy < 0)),
        (float(xs[idx[0]]), float(ys_int[idx[1]])), float(fyy[idx]),
    ))

    fxy = model.profit_dxy(xs[:, None], ys_int[None, :])
    idx = np.unravel_index(int(np.argmin(fxy)), fxy.shape)
    checks.append(AuditCheck(
        "profit_dxy_positive", bool(np.all(fxy > 0)),
        (float(xs[idx[0]]), float(ys_int[idx[1]])), float(fxy[idx]),
    ))

    lo = np.asarray(model.profit_dy(model.x_lo, ys_int), dtype=float)
    hi = np.asarray(model.profit_dy(model.x_hi, ys_int), dtype=float)
    ok = bool(np.all(lo < r * c0) and np.all(hi > r * c0))
    j_lo, j_hi = int(np.argmax(lo)), int(np.argmin(hi))
    detail = (f"dy_f(x_lo,y)={lo[j_lo]:.4g} at y={ys_int[j_lo]:.3g}, "
              f"dy_f(x_hi,y)={hi[j_hi]:.4g} at y={ys_int[j_hi]:.3g}, r*c0={r * c0:.4g}")
    worst = min(r * c0 - lo[j_lo], hi[j_hi] - r * c0)
    checks.append(AuditCheck(
        "marginal_profit_sandwich", ok, (float(ys_int[j_lo]),), float(worst), detail,
    ))

    return AuditReport(tuple(checks))
