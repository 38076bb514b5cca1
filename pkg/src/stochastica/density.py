"""Probability densities on price grids.

Closed forms for the three solved model families, change of variables for
monotone maps, a conservative finite-difference solver for the forward
(Fokker-Planck) equation, a backward solver for conditional expectations,
and quadrature composition of transition densities.

Grid densities are plain values-per-unit-price on a strictly increasing
grid; all integrals are trapezoid sums with the weights of the grid the
values live on. The composition rule and the lattice propagator in the
pathintegral module share one quadrature helper so their results agree to
the last bit.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy import integrate

from .errors import NumericalError
from .mc import TimeGrid, fmt17
from .models import ModelSpec, model_hash

_MASS_TOL = 1e-3          # allowed |trapezoid mass - 1| for a density grid
_NEG_CLAMP = 1e-12        # negatives within this fraction of peak are zeroed


def trapezoid_weights(s: np.ndarray) -> np.ndarray:
    """Quadrature weights w with sum(w * f) = trapezoid integral of f."""
    s = np.asarray(s, dtype=float)
    w = np.zeros_like(s)
    d = np.diff(s)
    w[:-1] += 0.5 * d
    w[1:] += 0.5 * d
    return w


# ---------------------------------------------------------------------------
# Grid densities


@dataclass(frozen=True)
class DensityGrid:
    """Density sampled on a strictly increasing price grid at one time."""

    s_values: np.ndarray
    p_values: np.ndarray
    t: float
    model_hash: str = ""

    def __post_init__(self):
        s = np.asarray(self.s_values, dtype=float)
        p = np.array(self.p_values, dtype=float)
        if s.ndim != 1 or s.size < 3 or p.shape != s.shape:
            raise ValueError("s_values and p_values must be 1-D arrays of equal length >= 3")
        if np.any(np.diff(s) <= 0):
            raise ValueError("grid must be strictly increasing")
        if not np.all(np.isfinite(p)):
            raise ValueError("density values must be finite")
        peak = float(p.max(initial=0.0))
        bad = p < -_NEG_CLAMP * max(peak, 1e-300)
        if bad.any():
            raise ValueError(
                f"density is negative at S={s[bad][0]!r} (value {p[bad][0]!r})")
        p[p < 0] = 0.0
        mass = float(np.sum(trapezoid_weights(s) * p))
        if abs(mass - 1.0) > _MASS_TOL:
            raise ValueError(
                f"density mass {mass!r} outside [1-{_MASS_TOL}, 1+{_MASS_TOL}]")
        s = s.copy()
        for arr in (s, p):
            arr.setflags(write=False)
        object.__setattr__(self, "s_values", s)
        object.__setattr__(self, "p_values", p)

    @property
    def weights(self) -> np.ndarray:
        return trapezoid_weights(self.s_values)

    @property
    def mass(self) -> float:
        return float(np.sum(self.weights * self.p_values))

    @property
    def mean(self) -> float:
        return float(np.sum(self.weights * self.s_values * self.p_values) / self.mass)

    @property
    def variance(self) -> float:
        m = self.mean
        return float(np.sum(self.weights * (self.s_values - m) ** 2 * self.p_values)
                     / self.mass)

    def expectation(self, f) -> float:
        """Trapezoid integral of f(S) against the density."""
        return float(np.sum(self.weights * np.asarray(f(self.s_values), dtype=float)
                            * self.p_values))


@dataclass(frozen=True)
class PointMass:
    """Degenerate density: all mass at one point (zero-time marker)."""

    center: float
    t: float = 0.0

    @property
    def mean(self) -> float:
        return self.center

    @property
    def variance(self) -> float:
        return 0.0

    def on_grid(self, s_values, *, model_hash: str = "") -> DensityGrid:
        return point_mass_on_grid(s_values, self.center, self.t,
                                  model_hash=model_hash)


def point_mass_on_grid(s_values, center: float, t: float = 0.0,
                       *, model_hash: str = "") -> DensityGrid:
    """Regularize a point mass as a narrow Gaussian (one grid cell wide).

    The width keeps >= 99% of the mass within three cells of the center
    while staying resolvable by the solvers; the discrete values are
    rescaled so the trapezoid mass is exactly 1.
    """
    s = np.asarray(s_values, dtype=float)
    if s.ndim != 1 or s.size < 5:
        raise ValueError("grid must be a 1-D array with at least 5 nodes")
    if not (s[0] <= center <= s[-1]):
        raise ValueError("center must lie inside the grid")
    h = float(np.min(np.diff(s)))
    p = np.exp(-0.5 * ((s - center) / h) ** 2)
    p /= np.sum(trapezoid_weights(s) * p)
    return DensityGrid(s_values=s, p_values=p, t=t, model_hash=model_hash)


@dataclass(frozen=True)
class TransitionDensity:
    """Density of the state at time density.t given state S0 at time t0."""

    t0: float
    S0: float
    density: DensityGrid


@dataclass(frozen=True)
class TransitionMatrix:
    """Family of transition densities: one target-grid row per source node.

    matrix[i, j] is the density at target node j given source node i; each
    row integrates to 1 under the target grid's trapezoid weights.
    raw_row_mass keeps the pre-normalization masses for leak accounting.
    """

    t_from: float
    t_to: float
    source_values: np.ndarray
    target_values: np.ndarray
    matrix: np.ndarray
    raw_row_mass: np.ndarray | None = None

    def __post_init__(self):
        src = np.asarray(self.source_values, dtype=float)
        tgt = np.asarray(self.target_values, dtype=float)
        m = np.asarray(self.matrix, dtype=float)
        if m.shape != (src.size, tgt.size):
            raise ValueError("matrix shape must be (n_source, n_target)")
        if np.any(m < 0):
            raise ValueError("transition weights must be >= 0")
        masses = m @ trapezoid_weights(tgt)
        if np.any(np.abs(masses - 1.0) > 1e-6):
            worst = int(np.argmax(np.abs(masses - 1.0)))
            raise ValueError(
                f"row {worst} has mass {masses[worst]!r}; rows must be "
                "normalized to 1 within 1e-6")

    @classmethod
    def from_pdf(cls, pdf, t_from: float, t_to: float, source_values,
                 target_values) -> "TransitionMatrix":
        """Build from pdf(s0) -> callable density over target values."""
        src = np.asarray(source_values, dtype=float)
        tgt = np.asarray(target_values, dtype=float)
        w = trapezoid_weights(tgt)
        rows = np.empty((src.size, tgt.size))
        for i, s0 in enumerate(src):
            rows[i] = np.asarray(pdf(s0)(tgt), dtype=float)
        raw = rows @ w
        if np.any(raw <= 0):
            raise ValueError("a transition row has no mass on the target grid")
        rows /= raw[:, None]
        return cls(t_from=t_from, t_to=t_to, source_values=src,
                   target_values=tgt, matrix=rows, raw_row_mass=raw)


def quadrature_apply(weights: np.ndarray, p: np.ndarray,
                     matrix: np.ndarray) -> np.ndarray:
    """One composition step: integrate densities against a transition family.

    Shared by compose_transition and pathintegral.propagate so the two
    code paths produce bit-identical arrays.
    """
    return (weights * p) @ matrix


def _grids_match(a: np.ndarray, b: np.ndarray) -> bool:
    return a.shape == b.shape and bool(np.array_equal(a, b))


def compose_transition(first, second: TransitionMatrix):
    """Chain transitions through a shared intermediate grid.

    first may be a TransitionDensity (or bare DensityGrid) at the
    intermediate time, or a TransitionMatrix; second maps the intermediate
    grid onward. The intermediate integral is the trapezoid rule of the
    shared grid.
    """
    if not isinstance(second, TransitionMatrix):
        raise TypeError("second argument must be a TransitionMatrix")
    if isinstance(first, TransitionDensity):
        inner = first.density
        if not _grids_match(inner.s_values, second.source_values):
            raise ValueError("grid mismatch: intermediate grids differ")
        p = quadrature_apply(inner.weights, inner.p_values, second.matrix)
        out = DensityGrid(s_values=second.target_values, p_values=p,
                          t=second.t_to, model_hash=inner.model_hash)
        return TransitionDensity(t0=first.t0, S0=first.S0, density=out)
    if isinstance(first, DensityGrid):
        if not _grids_match(first.s_values, second.source_values):
            raise ValueError("grid mismatch: intermediate grids differ")
        p = quadrature_apply(first.weights, first.p_values, second.matrix)
        return DensityGrid(s_values=second.target_values, p_values=p,
                           t=second.t_to, model_hash=first.model_hash)
    if isinstance(first, TransitionMatrix):
        if not _grids_match(first.target_values, second.source_values):
            raise ValueError("grid mismatch: intermediate grids differ")
        w = trapezoid_weights(second.source_values)
        composed = (first.matrix * w) @ second.matrix
        return TransitionMatrix(t_from=first.t_from, t_to=second.t_to,
                                source_values=first.source_values,
                                target_values=second.target_values,
                                matrix=composed)
    raise TypeError("first argument must be a TransitionDensity, DensityGrid "
                    "or TransitionMatrix")


# ---------------------------------------------------------------------------
# Analytic densities


class AnalyticDensity1D:
    """Closed-form density: a pdf callable plus exact or quadrature moments."""

    def __init__(self, pdf: Callable[[np.ndarray], np.ndarray], *, t: float,
                 mean: float | None = None, variance: float | None = None,
                 support: tuple[float, float] = (-math.inf, math.inf),
                 description: str = ""):
        self.pdf = pdf
        self.t = float(t)
        self.support = (float(support[0]), float(support[1]))
        self.description = description
        self._mean = mean if mean is None else float(mean)
        self._variance = variance if variance is None else float(variance)

    def __call__(self, s):
        return self.pdf(np.asarray(s, dtype=float))

    def _moment(self, g) -> float:
        lo, hi = self.support
        val, _err = integrate.quad(lambda x: g(x) * float(self.pdf(np.array([x]))[0]),
                                   lo, hi, limit=200)
        return val

    @property
    def mean(self) -> float:
        if self._mean is None:
            self._mean = self._moment(lambda x: x)
        return self._mean

    @property
    def variance(self) -> float:
        if self._variance is None:
            m = self.mean
            self._variance = self._moment(lambda x: (x - m) ** 2)
        return self._variance

    @property
    def std(self) -> float:
        return math.sqrt(max(self.variance, 0.0))

    def default_grid(self, n: int = 801, half_width: float = 8.0) -> np.ndarray:
        lo = max(self.support[0], self.mean - half_width * self.std)
        hi = min(self.support[1], self.mean + half_width * self.std)
        if self.support[0] > -math.inf and lo <= self.support[0]:
            lo = self.support[0] + 1e-9 * max(1.0, abs(hi))
        if not hi > lo:
            raise ValueError("degenerate support; cannot build a grid")
        return np.linspace(lo, hi, n)

    def on_grid(self, s_values=None, *, n: int = 801, half_width: float = 8.0,
                model_hash: str = "") -> DensityGrid:
        s = self.default_grid(n, half_width) if s_values is None \
            else np.asarray(s_values, dtype=float)
        return DensityGrid(s_values=s, p_values=self(s), t=self.t,
                           model_hash=model_hash)


def _gaussian_pdf(mean: float, var: float):
    inv = 1.0 / math.sqrt(2.0 * math.pi * var)

    def pdf(s):
        return inv * np.exp(-0.5 * (s - mean) ** 2 / var)

    return pdf


def density_bm(t: float, S0: float, mu: float, sigma: float):
    """Terminal density of constant-coefficient additive dynamics.

    Gaussian with mean S0 + mu*t and variance sigma^2*t; at t <= 0 the
    density degenerates and an explicit PointMass marker is returned.
    """
    if sigma <= 0:
        raise ValueError("sigma must be positive")
    if t <= 0:
        return PointMass(center=float(S0), t=float(t))
    mean = S0 + mu * t
    var = sigma * sigma * t
    return AnalyticDensity1D(_gaussian_pdf(mean, var), t=t, mean=mean,
                             variance=var, description="additive Gaussian")


def density_gbm(t: float, S0: float, mu: float, sigma: float):
    """Terminal density of proportional dynamics: lognormal, support S > 0."""
    if sigma <= 0:
        raise ValueError("sigma must be positive")
    if S0 <= 0:
        raise ValueError("S0 must be positive")
    if t <= 0:
        return PointMass(center=float(S0), t=float(t))
    m = (mu - 0.5 * sigma * sigma) * t
    v = sigma * sigma * t
    inv = 1.0 / math.sqrt(2.0 * math.pi * v)

    def pdf(s):
        s = np.asarray(s, dtype=float)
        out = np.zeros_like(s)
        pos = s > 0
        ls = np.log(s[pos] / S0)
        out[pos] = inv / s[pos] * np.exp(-0.5 * (ls - m) ** 2 / v)
        return out

    mean = S0 * math.exp(mu * t)
    var = S0 * S0 * math.exp(2 * mu * t) * math.expm1(sigma * sigma * t)
    return AnalyticDensity1D(pdf, t=t, mean=mean, variance=var,
                             support=(0.0, math.inf),
                             description="proportional lognormal")


def vasicek_moments(t: float, S0: float, a: float, b: float,
                    sigma: float) -> tuple[float, float]:
    """Mean and variance of the mean-reverting model at horizon t."""
    decay = math.exp(-a * t)
    mean = S0 * decay + b * (1.0 - decay)
    var = sigma * sigma * (-math.expm1(-2.0 * a * t)) / (2.0 * a)
    return mean, var


def density_vasicek(t: float, S0: float, a: float, b: float, sigma: float):
    """Terminal density of the mean-reverting model: Gaussian.

    Mean relaxes from S0 to b at rate a; variance saturates at
    sigma^2/(2a). The squared deviation in the exponent is taken from the
    relaxed mean, not from S0.
    """
    if a <= 0:
        raise ValueError("mean-reversion speed a must be positive")
    if sigma <= 0:
        raise ValueError("sigma must be positive")
    if t <= 0:
        return PointMass(center=float(S0), t=float(t))
    mean, var = vasicek_moments(t, S0, a, b, sigma)
    return AnalyticDensity1D(_gaussian_pdf(mean, var), t=t, mean=mean,
                             variance=var, description="mean-reverting Gaussian")


# ---------------------------------------------------------------------------
# Change of variables


def _sample_derivative_sign(dYdx, lo: float, hi: float) -> float:
    probes = np.linspace(lo, hi, 129)
    d = np.asarray([float(dYdx(x)) for x in probes])
    if not np.all(np.isfinite(d)) or np.any(d == 0):
        raise ValueError("dYdx must be finite and nonzero on the support")
    if np.any(np.sign(d) != np.sign(d[0])):
        raise ValueError("map is not monotone: dYdx changes sign on the support")
    return float(np.sign(d[0]))


def _map_endpoint(Y, x: float, fallback: float) -> float:
    if not math.isfinite(x):
        return fallback
    try:
        with np.errstate(divide="ignore", over="ignore", invalid="ignore"):
            v = float(Y(x))
    except (ValueError, OverflowError, ZeroDivisionError):
        return fallback
    return v if math.isfinite(v) else fallback


def change_of_variable(p_x, Y, Y_inv, dYdx):
    """Density of y = Y(x) for a strictly monotone map.

    p_y(y) = p_x(Y_inv(y)) / |dYdx(Y_inv(y))|. Works on AnalyticDensity1D
    (returns a new analytic density; Y_inv required) and on DensityGrid
    (transforms the nodes in place; Y_inv unused and may be None).
    Monotonicity is checked by sampling the sign of dYdx.
    """
    if isinstance(p_x, PointMass):
        return PointMass(center=float(Y(p_x.center)), t=p_x.t)

    if isinstance(p_x, DensityGrid):
        s = p_x.s_values
        d = np.asarray([float(dYdx(x)) for x in s])
        if not np.all(np.isfinite(d)) or np.any(d == 0):
            raise ValueError("dYdx must be finite and nonzero on the grid")
        if np.any(np.sign(d) != np.sign(d[0])):
            raise ValueError("map is not monotone: dYdx changes sign on the grid")
        y = np.asarray([float(Y(x)) for x in s])
        p = p_x.p_values / np.abs(d)
        if d[0] < 0:
            y, p = y[::-1], p[::-1]
        return DensityGrid(s_values=y, p_values=p, t=p_x.t,
                           model_hash=p_x.model_hash)

    if not isinstance(p_x, AnalyticDensity1D):
        raise TypeError("p_x must be an AnalyticDensity1D, DensityGrid or PointMass")
    if Y_inv is None:
        raise ValueError("Y_inv is required for analytic densities")

    lo, hi = p_x.support
    probe_lo = max(lo, p_x.mean - 8.0 * p_x.std)
    probe_hi = min(hi, p_x.mean + 8.0 * p_x.std)
    if lo > -math.inf and probe_lo <= lo:
        probe_lo = lo + 1e-9 * max(1.0, abs(probe_hi))
    sign = _sample_derivative_sign(dYdx, probe_lo, probe_hi)

    a = _map_endpoint(Y, lo, -math.inf if sign > 0 else math.inf)
    b = _map_endpoint(Y, hi, math.inf if sign > 0 else -math.inf)
    support_y = (min(a, b), max(a, b))

    src_pdf = p_x.pdf

    def pdf(y):
        y = np.asarray(y, dtype=float)
        # endpoint probes can overflow the inverse map; those carry density 0
        with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
            x = np.asarray([float(Y_inv(v)) for v in np.atleast_1d(y)])
            vals = np.asarray(src_pdf(x), dtype=float)
            der = np.abs(np.asarray([float(dYdx(v)) for v in x]))
        vals = np.where(np.isfinite(x) & np.isfinite(vals), vals, 0.0)
        der = np.where(np.isfinite(der), der, np.inf)
        out = np.where(der > 0, vals / np.where(der > 0, der, 1.0), 0.0)
        return out.reshape(y.shape)

    return AnalyticDensity1D(pdf, t=p_x.t, support=support_y,
                             description=f"transformed {p_x.description}".strip())


# ---------------------------------------------------------------------------
# Forward solver


def _bernoulli(x: np.ndarray) -> np.ndarray:
    """x / (e^x - 1), the exponential-fitting weight; B(0) = 1."""
    x = np.asarray(x, dtype=float)
    out = np.empty_like(x)
    small = np.abs(x) < 1e-5
    xs = x[small]
    out[small] = 1.0 - 0.5 * xs + xs * xs / 12.0
    xl = np.clip(x[~small], -700.0, 700.0)
    out[~small] = xl / np.expm1(xl)
    return out


def _require_uniform(s: np.ndarray) -> float:
    d = np.diff(s)
    h = float(d[0])
    if np.max(np.abs(d - h)) > 1e-9 * abs(h):
        raise ValueError("solver grids must be uniformly spaced")
    return h


def _flux_coefficients(model: ModelSpec, s: np.ndarray, tau: float, h: float):
    """Exponential-fitted flux stencil for the conservative forward operator.

    Returns (lower, diag, upper) of the tridiagonal L with
    (L p)_i = (F_{i+1/2} - F_{i-1/2}) / h and zero flux through the
    outermost faces, so columns of L sum to zero and sum(p)*h is conserved
    exactly.
    """
    n = s.size
    faces = 0.5 * (s[:-1] + s[1:])
    sig_nodes = model.sigma1(tau, s)
    sig_faces = model.sigma1(tau, faces)
    d_nodes = 0.5 * sig_nodes ** 2
    d_faces = 0.5 * sig_faces ** 2
    if np.any(d_nodes <= 0) or np.any(d_faces <= 0):
        raise ValueError("forward solver requires sigma > 0 on the grid")
    mu_faces = model.mu1(tau, faces)
    what = -mu_faces * h / d_faces          # face Peclet-like ratio
    bp = _bernoulli(what)                   # weight toward the lower node
    bm = _bernoulli(-what)                  # weight toward the upper node

    inv_h2 = 1.0 / (h * h)
    lower = np.zeros(n)
    diag = np.zeros(n)
    upper = np.zeros(n)
    upper[:-1] = d_nodes[1:] * bm * inv_h2
    lower[1:] = d_nodes[:-1] * bp * inv_h2
    diag[:-1] -= d_nodes[:-1] * bp * inv_h2
    diag[1:] -= d_nodes[1:] * bm * inv_h2
    return lower, diag, upper


def _theta_step(p: np.ndarray, lower, diag, upper, dt: float, theta: float) -> np.ndarray:
    from scipy.linalg import solve_banded

    n = p.size
    Lp = diag * p
    Lp[:-1] += upper[:-1] * p[1:]
    Lp[1:] += lower[1:] * p[:-1]
    rhs = p + (1.0 - theta) * dt * Lp
    ab = np.zeros((3, n))
    ab[0, 1:] = -theta * dt * upper[:-1]
    ab[1, :] = 1.0 - theta * dt * diag
    ab[2, :-1] = -theta * dt * lower[1:]
    return solve_banded((1, 1), ab, rhs)


def fokker_planck_forward(model: ModelSpec, initial: DensityGrid,
                          grid: TimeGrid) -> list[DensityGrid]:
    """March the forward equation dP/dt = d/dS[-mu P + d/dS(sigma^2/2 P)].

    Conservative exponential-fitted flux discretization, zero flux through
    the domain edges, trapezoidal-rule-in-time stepping with two damped
    (fully implicit) startup steps. Returns one DensityGrid per grid time,
    the initial condition included.
    """
    if model.dim != 1:
        raise ValueError("forward solver handles one-dimensional models")
    s = initial.s_values
    h = _require_uniform(s)
    if abs(initial.t - grid.t0) > 1e-9 * max(1.0, abs(grid.t0)):
        raise ValueError("initial density time must equal grid.t0")
    p = initial.p_values.copy()
    peak = float(p.max())
    if max(p[0], p[-1]) > 1e-8 * peak:
        raise ValueError(
            "initial density does not vanish at the domain edges "
            "(boundary > 1e-8 of peak); widen the grid")

    mass0 = float(np.sum(trapezoid_weights(s) * p))
    tv0 = float(np.abs(np.diff(p)).sum())
    mhash = initial.model_hash or model_hash(model)
    out = [DensityGrid(s_values=s, p_values=p, t=grid.t0, model_hash=mhash)]

    for m in range(grid.n_steps):
        tau = grid.time(m) + 0.5 * grid.dt
        lower, diag, upper = _flux_coefficients(model, s, tau, h)
        theta = 1.0 if m < 2 else 0.5
        p = _theta_step(p, lower, diag, upper, grid.dt, theta)

        peak = float(p.max())
        if float(p.min()) < -1e-6 * peak:
            raise NumericalError(
                f"solution went negative at step {m + 1}: the advection is "
                f"under-resolved; retry with dt <= {grid.dt / 4:.6g}")
        p[p < 0] = 0.0
        tv = float(np.abs(np.diff(p)).sum())
        if tv > 10.0 * tv0 and tv > 1e-9:
            raise NumericalError(
                f"total variation grew {tv / max(tv0, 1e-300):.3g}x at step "
                f"{m + 1}: unstable resolution; retry with dt <= {grid.dt / 4:.6g}")
        mass = float(np.sum(trapezoid_weights(s) * p))
        if abs(mass - mass0) > _MASS_TOL:
            raise NumericalError(
                f"mass drifted to {mass!r} at step {m + 1}; the domain or "
                "resolution cannot represent this evolution")
        if max(p[0], p[-1]) > 1e-3 * peak:
            raise NumericalError(
                f"density reached the domain edge at step {m + 1}; widen the grid")
        out.append(DensityGrid(s_values=s, p_values=p, t=grid.time(m + 1),
                               model_hash=mhash))
    return out


def _model_scalar_params(model: ModelSpec) -> dict:
    params = model.config.get("params", {}) if model.config else {}
    return {k: v for k, v in params.items() if isinstance(v, (int, float))}


def _log_space_model(model: ModelSpec) -> ModelSpec:
    from .models import make_bm

    params = _model_scalar_params(model)
    if "mu" not in params or "sigma" not in params:
        raise ValueError("log-space evolution needs scalar mu/sigma parameters")
    return make_bm(params["mu"] - 0.5 * params["sigma"] ** 2, params["sigma"])


def _spread_for(model: ModelSpec, S0: float, horizon: float) -> tuple[float, float]:
    """Closed-form (terminal mean, terminal std) used to size default domains."""
    params = _model_scalar_params(model)
    if model.kind == "bm":
        return S0 + params["mu"] * horizon, params["sigma"] * math.sqrt(horizon)
    if model.kind == "vasicek":
        mean, var = vasicek_moments(horizon, S0, params["a"], params["b"],
                                    params["sigma"])
        return mean, math.sqrt(var)
    raise ValueError(
        f"no default domain rule for model kind {model.kind!r}; "
        "pass an explicit DensityGrid initial condition")


def default_domain(model: ModelSpec, S0: float, horizon: float,
                   n_nodes: int = 801, half_width: float = 8.0,
                   spread0: float = 0.0) -> np.ndarray:
    """Uniform grid covering start and end spreads within +-half_width std."""
    mean, std = _spread_for(model, S0, horizon)
    if std <= 0:
        raise ValueError("model has zero terminal spread; no grid to build")
    pad = half_width * (std + spread0)
    lo = min(S0, mean) - pad
    hi = max(S0, mean) + pad
    return np.linspace(lo, hi, n_nodes)


def _start_on_domain(model: ModelSpec, initial, horizon: float, n_nodes: int,
                     half_width: float, mhash: str) -> DensityGrid:
    """Put the initial condition on a uniform grid sized for the evolution."""
    if isinstance(initial, PointMass):
        grid = default_domain(model, initial.center, horizon, n_nodes, half_width)
        return point_mass_on_grid(grid, initial.center, initial.t, model_hash=mhash)
    if isinstance(initial, AnalyticDensity1D):
        grid = default_domain(model, initial.mean, horizon, n_nodes,
                              half_width, spread0=initial.std)
        return initial.on_grid(grid, model_hash=mhash)
    if isinstance(initial, DensityGrid):
        try:
            grid = default_domain(model, initial.mean, horizon, n_nodes,
                                  half_width, spread0=math.sqrt(initial.variance))
        except ValueError:
            # no closed-form spread rule: trust the caller's grid as-is
            return initial
        p = np.interp(grid, initial.s_values, initial.p_values,
                      left=0.0, right=0.0)
        p *= initial.mass / np.sum(trapezoid_weights(grid) * p)
        return DensityGrid(s_values=grid, p_values=p, t=initial.t,
                           model_hash=mhash)
    raise TypeError("initial must be a PointMass, AnalyticDensity1D or DensityGrid")


def evolve_density(model: ModelSpec, initial, t1: float, *,
                   n_steps: int = 200, n_nodes: int = 801,
                   half_width: float = 8.0) -> DensityGrid:
    """Forward-evolve a density to time t1 at default resolutions.

    initial may be a PointMass, an AnalyticDensity1D or a DensityGrid.
    Proportional (gbm-kind) models run on a log-price grid and the result
    is mapped back, so the returned grid is log-uniform in that case.
    """
    t0 = float(initial.t)
    if not t1 > t0:
        raise ValueError("t1 must exceed the initial density's time")
    horizon = t1 - t0
    tg = TimeGrid(t0=t0, dt=horizon / n_steps, n_steps=n_steps)
    mhash = model_hash(model)

    if model.kind == "gbm":
        log_model = _log_space_model(model)
        y_initial = change_of_variable(initial, np.log, np.exp, lambda s: 1.0 / s)
        start = _start_on_domain(log_model, y_initial, horizon, n_nodes,
                                 half_width, mhash)
        final_y = fokker_planck_forward(log_model, start, tg)[-1]
        return change_of_variable(final_y, np.exp, np.log, np.exp)

    start = _start_on_domain(model, initial, horizon, n_nodes, half_width, mhash)
    return fokker_planck_forward(model, start, tg)[-1]


# ---------------------------------------------------------------------------
# Backward solver


@dataclass(frozen=True)
class GridFunction:
    """Function of the initial state, tabulated on a grid (linear interp)."""

    s_values: np.ndarray
    values: np.ndarray
    t: float

    def __call__(self, s):
        return np.interp(s, self.s_values, self.values)


def kolmogorov_backward(model: ModelSpec, terminal, s_values, t0: float,
                        t1: float, *, n_steps: int = 200) -> GridFunction:
    """Conditional expectation u(t0, S0) = E[terminal(S_t1) | S_t0 = S0].

    Marches du/dtau = mu du/dS + sigma^2/2 d2u/dS2 from the terminal data
    back to t0 on the given grid. Edge rows use one-sided first derivatives
    from zero-curvature extrapolation, so constants and linear functions
    pass through exactly.
    """
    if model.dim != 1:
        raise ValueError("backward solver handles one-dimensional models")
    if not t1 > t0:
        raise ValueError("t1 must exceed t0")
    s = np.asarray(s_values, dtype=float)
    h = _require_uniform(s)
    u = np.asarray(terminal(s) if callable(terminal) else terminal, dtype=float)
    if u.shape != s.shape:
        raise ValueError("terminal values must match the grid")
    if not np.all(np.isfinite(u)):
        raise ValueError("terminal values must be finite")

    from scipy.linalg import solve_banded

    n = s.size
    dt = (t1 - t0) / n_steps
    tv0 = float(np.abs(np.diff(u)).sum())
    for m in range(n_steps):
        tau = t1 - (m + 0.5) * dt
        mu = model.mu1(tau, s)
        d = 0.5 * model.sigma1(tau, s) ** 2
        lower = np.zeros(n)
        diag = np.zeros(n)
        upper = np.zeros(n)
        # interior: central first and second differences
        upper[1:-1] = mu[1:-1] / (2 * h) + d[1:-1] / (h * h)
        lower[1:-1] = -mu[1:-1] / (2 * h) + d[1:-1] / (h * h)
        diag[1:-1] = -2 * d[1:-1] / (h * h)
        # edges: zero curvature, one-sided slope
        diag[0], upper[0] = -mu[0] / h, mu[0] / h
        diag[-1], lower[-1] = mu[-1] / h, -mu[-1] / h

        theta = 1.0 if m < 2 else 0.5
        Au = diag * u
        Au[:-1] += upper[:-1] * u[1:]
        Au[1:] += lower[1:] * u[:-1]
        rhs = u + (1 - theta) * dt * Au
        ab = np.zeros((3, n))
        ab[0, 1:] = -theta * dt * upper[:-1]
        ab[1, :] = 1.0 - theta * dt * diag
        ab[2, :-1] = -theta * dt * lower[1:]
        u = solve_banded((1, 1), ab, rhs)
        if not np.all(np.isfinite(u)):
            raise NumericalError(f"backward solve produced non-finite values at step {m + 1}")
        tv = float(np.abs(np.diff(u)).sum())
        scale = float(np.abs(u).max())
        if tv > 10.0 * tv0 and tv > 1e-9 * max(1.0, scale):
            raise NumericalError(
                f"total variation grew {tv / max(tv0, 1e-300):.3g}x at step "
                f"{m + 1}: unstable resolution; retry with dt <= {dt / 4:.6g}")
    return GridFunction(s_values=s, values=u, t=t0)


# ---------------------------------------------------------------------------
# Export


def export_density_csv(d: DensityGrid, fh, *, gnuplot: bool = False) -> None:
    """Write (S, p) rows with a header carrying time, mass and model hash."""
    sep = " " if gnuplot else ","
    fh.write(f"# t = {fmt17(d.t)}\n")
    fh.write(f"# mass = {fmt17(d.mass)}\n")
    fh.write(f"# model_hash = {d.model_hash}\n")
    fh.write(f"S{sep}p\n")
    for sv, pv in zip(d.s_values, d.p_values):
        fh.write(f"{fmt17(sv)}{sep}{fmt17(pv)}\n")
