"""Lattice propagation of transition densities via short-time kernels.

One Euler step has a Gaussian transition law; iterating its quadrature on
a price grid yields finite-horizon transition densities, and discounting
yields present-value Green's functions. Kernel rows are normalized on the
working grid, so each propagation step conserves mass exactly; the mass
removed by window truncation is tracked as boundary leak.

Proportional (gbm-kind) models propagate on a log-price lattice where the
kernel is translation invariant; results are reported on the mapped price
lattice with quadrature kept in the native coordinates.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import noise
from .errors import DegenerateKernelError, NumericalError
from .mc import MCEstimate, _mean_and_se, fmt17
from .density import (DensityGrid, PointMass, TransitionMatrix,
                      default_domain, point_mass_on_grid, quadrature_apply,
                      trapezoid_weights, _log_space_model)
from .models import ModelSpec, model_hash
from .portfolio import DiscountCurve

_WINDOW_STD = 8.0   # kernel row support: +- this many std around the drifted center
_LEAK_LIMIT = 0.01  # cumulative truncated mass that aborts propagation


@dataclass(frozen=True)
class ShortTimeKernel:
    """One-step transition law: Gaussian around the drifted departure point.

    weight(t, s_from, s_to) is the density of S_{m+1} at s_to given
    S_m = s_from, with drift and volatility frozen at the departure point.
    """

    model: ModelSpec
    t: float
    dt: float

    def __post_init__(self):
        if self.model.dim != 1:
            raise ValueError("kernels are one-dimensional")
        if not self.dt > 0:
            raise ValueError("dt must be positive")

    def mean(self, t: float, s_from) -> np.ndarray:
        s = np.asarray(s_from, dtype=float)
        return s + self.model.mu1(t, s) * self.dt

    def std(self, t: float, s_from) -> np.ndarray:
        s = np.asarray(s_from, dtype=float)
        return self.model.sigma1(t, s) * math.sqrt(self.dt)

    def weight(self, t: float, s_from, s_to) -> np.ndarray:
        """Transition density per unit price; broadcasts s_from against s_to."""
        s_from = np.asarray(s_from, dtype=float)
        s_to = np.asarray(s_to, dtype=float)
        sig = self.model.sigma1(t, s_from)
        if np.any(sig == 0):
            where = np.asarray(s_from)[np.asarray(sig == 0)]
            shift = self.model.mu1(t, np.atleast_1d(where)[0]) * self.dt
            raise DegenerateKernelError(
                f"volatility vanishes at S={np.atleast_1d(where)[0]!r}: "
                "transition is a deterministic shift", shift=float(shift))
        var = sig ** 2 * self.dt
        mean = s_from + self.model.mu1(t, s_from) * self.dt
        return np.exp(-0.5 * (s_to - mean) ** 2 / var) / np.sqrt(2 * math.pi * var)


def one_step_kernel(model: ModelSpec, t: float, dt: float) -> ShortTimeKernel:
    """The Euler transition law of the model over one step of length dt."""
    return ShortTimeKernel(model=model, t=float(t), dt=float(dt))


def kernel_matrix(kernel: ShortTimeKernel, t: float, source_values,
                  target_values=None) -> TransitionMatrix:
    """Discretize the kernel on grids: rows windowed, then row-normalized.

    Each row keeps only targets within +-8 std of its drifted center
    (everything outside is zeroed before normalization); the trapezoid
    mass removed that way is recorded in raw_row_mass for leak accounting.
    """
    src = np.asarray(source_values, dtype=float)
    tgt = src if target_values is None else np.asarray(target_values, dtype=float)
    mean = kernel.mean(t, src)
    std = kernel.std(t, src)
    if np.any(std == 0):
        bad = float(src[np.argwhere(std == 0)[0][0]])
        raise DegenerateKernelError(
            f"volatility vanishes at S={bad!r}: transition is a deterministic "
            "shift", shift=float(kernel.mean(t, bad) - bad))
    w = trapezoid_weights(tgt)
    z = (tgt[None, :] - mean[:, None]) / std[:, None]
    rows = np.where(np.abs(z) <= _WINDOW_STD,
                    np.exp(-0.5 * z * z), 0.0) / (np.sqrt(2 * math.pi) * std[:, None])
    raw = rows @ w
    if np.any(raw <= 0):
        bad = float(src[np.argwhere(raw <= 0)[0][0]])
        raise NumericalError(
            f"kernel row at S={bad!r} has no mass on the target grid; "
            "the grid does not cover the one-step transition")
    rows /= raw[:, None]
    return TransitionMatrix(t_from=t, t_to=t + kernel.dt, source_values=src,
                            target_values=tgt, matrix=rows, raw_row_mass=raw)


def _is_time_invariant(model: ModelSpec) -> bool:
    return model.kind in ("bm", "gbm", "vasicek", "custom-grid")


def _propagate_sequence(kernel: ShortTimeKernel, initial: DensityGrid,
                        n_steps: int) -> list[DensityGrid]:
    p = initial.p_values
    peak = float(p.max())
    if max(p[0], p[-1]) > 1e-8 * peak:
        raise ValueError(
            "initial density does not vanish at the domain edges "
            "(boundary > 1e-8 of peak); widen the grid")
    s = initial.s_values
    w = trapezoid_weights(s)
    mass0 = float(np.sum(w * p))
    out = [initial]
    leak = 0.0
    tm = None
    for m in range(n_steps):
        t_m = initial.t + m * kernel.dt
        if tm is None or not _is_time_invariant(kernel.model):
            tm = kernel_matrix(kernel, t_m, s)
        leak += float(np.sum(w * p * (1.0 - tm.raw_row_mass))) / mass0
        if leak > _LEAK_LIMIT:
            raise NumericalError(
                f"boundary leak reached {leak:.3%} of the mass by step {m + 1}; "
                "the grid is too narrow for this horizon")
        p = quadrature_apply(w, p, tm.matrix)
        out.append(DensityGrid(s_values=s, p_values=p, t=t_m + kernel.dt,
                               model_hash=initial.model_hash))
    return out


def propagate(kernel: ShortTimeKernel, initial: DensityGrid,
              n_steps: int) -> DensityGrid:
    """Apply the kernel quadrature n_steps times to a grid density.

    n_steps = 0 returns the initial density unchanged. Aborts when the
    cumulative mass truncated at the grid edges exceeds 1%.
    """
    if int(n_steps) != n_steps or n_steps < 0:
        raise ValueError("n_steps must be a non-negative integer")
    if n_steps == 0:
        return initial
    return _propagate_sequence(kernel, initial, int(n_steps))[-1]


# ---------------------------------------------------------------------------
# Green's functions


@dataclass(frozen=True)
class GreensFunction:
    """Discounted transition density lattice from a point source.

    transition[m] is the unit-mass transition density at times[m] in the
    native propagation coordinate (log-price for proportional models);
    price_values maps lattice nodes to prices, and values() applies the
    per-unit-price Jacobian and the discount factors. Quadrature against
    payoffs stays in native coordinates, where mass is exact.
    """

    t0: float
    S0: float
    times: np.ndarray
    native_values: np.ndarray
    price_values: np.ndarray
    transition: np.ndarray
    discounts: np.ndarray
    model_hash: str = ""
    log_coordinates: bool = False

    def values(self) -> np.ndarray:
        """Discounted density per unit price on the price lattice, per time."""
        jac = self.price_values if self.log_coordinates else 1.0
        return self.discounts[:, None] * self.transition / jac

    def total_mass(self, index: int = -1) -> float:
        w = trapezoid_weights(self.native_values)
        return float(self.discounts[index] * np.sum(w * self.transition[index]))

    def integrate(self, payoff, index: int = -1) -> float:
        """Discounted expectation of payoff(S) at the indexed lattice time."""
        w = trapezoid_weights(self.native_values)
        vals = np.asarray(payoff(self.price_values), dtype=float)
        return float(self.discounts[index]
                     * np.sum(w * self.transition[index] * vals))


def greens_function(model: ModelSpec, curve: DiscountCurve, t0: float,
                    S0: float, t: float, dt: float, *, n_nodes: int = 801,
                    half_width: float = 8.0) -> GreensFunction:
    """Propagate a regularized point source and discount each time slice.

    The model must already carry the risk-neutral drift (the caller
    applies risk_neutralize); this function only discounts.
    """
    if not model.risk_neutral:
        raise ValueError(
            "greens_function requires a risk-neutralized model; apply "
            "risk_neutralize(model, curve) first")
    if not t > t0:
        raise ValueError("t must exceed t0")
    steps = (t - t0) / dt
    if abs(steps - round(steps)) > 1e-9 * max(1.0, steps) or round(steps) < 1:
        raise ValueError("(t - t0)/dt must be a positive integer")
    n_steps = round(steps)

    log_coords = model.kind == "gbm"
    if log_coords:
        work_model = _log_space_model(model)
        x0 = math.log(S0)
    else:
        work_model = model
        x0 = float(S0)
    grid = default_domain(work_model, x0, t - t0, n_nodes, half_width)
    mhash = model_hash(model)
    start = point_mass_on_grid(grid, x0, t0, model_hash=mhash)
    kernel = one_step_kernel(work_model, t0, dt)
    # slice 0 stores the regularized source; the first transition is taken
    # as the exact normalized kernel row so the source width never smears
    # the later slices
    row = np.asarray(kernel.weight(t0, x0, grid), dtype=float)
    w = trapezoid_weights(grid)
    row_mass = float(np.sum(w * row))
    if row_mass <= 0:
        raise NumericalError("grid does not cover the one-step transition")
    first = DensityGrid(s_values=grid, p_values=row / row_mass, t=t0 + dt,
                        model_hash=mhash)
    if n_steps > 1:
        seq = [start] + _propagate_sequence(kernel, first, n_steps - 1)
    else:
        seq = [start, first]

    times = t0 + dt * np.arange(n_steps + 1)
    transition = np.stack([d.p_values for d in seq])
    discounts = np.asarray([curve.discount(t0, tm) for tm in times])
    price_values = np.exp(grid) if log_coords else grid
    return GreensFunction(t0=t0, S0=float(S0), times=times,
                          native_values=grid, price_values=price_values,
                          transition=transition, discounts=discounts,
                          model_hash=mhash, log_coordinates=log_coords)


def export_greens_csv(g: GreensFunction, fh) -> None:
    """Rows (t, S, G): the discounted per-unit-price lattice values."""
    fh.write(f"# t0 = {fmt17(g.t0)}\n")
    fh.write(f"# S0 = {fmt17(g.S0)}\n")
    fh.write(f"# model_hash = {g.model_hash}\n")
    fh.write("t,S,G\n")
    vals = g.values()
    for m, tm in enumerate(g.times):
        for j, sv in enumerate(g.price_values):
            fh.write(f"{fmt17(tm)},{fmt17(sv)},{fmt17(vals[m, j])}\n")


# ---------------------------------------------------------------------------
# Path-measure Monte Carlo (independent of the mc-engine path code)


_CHUNK = 1 << 16


def pi_expectation(model: ModelSpec, f, t0: float, S0: float, T: float,
                   dt: float, n_paths: int, seed) -> MCEstimate:
    """Estimate E f(S_T) by sampling the one-step kernel law repeatedly.

    Uses its own noise substream, so estimates are independent of the
    mc-engine path simulator while following the same discrete law.
    f maps an array of terminal values to an array of per-path values;
    f of a constant array must be defined (used for the trivial check).
    """
    seed = noise.validate_seed(seed)
    if model.dim != 1:
        raise ValueError("pi_expectation handles one-dimensional models")
    if not T > t0:
        raise ValueError("T must exceed t0")
    if n_paths < 1:
        raise ValueError("n_paths must be >= 1")
    steps = (T - t0) / dt
    if abs(steps - round(steps)) > 1e-9 * max(1.0, steps) or round(steps) < 1:
        raise ValueError("(T - t0)/dt must be a positive integer")
    n_steps = round(steps)
    kernel = one_step_kernel(model, t0, dt)

    values = np.empty(n_paths)
    for lo in range(0, n_paths, _CHUNK):
        hi = min(lo + _CHUNK, n_paths)
        s = np.full(hi - lo, float(S0))
        for m in range(n_steps):
            t_m = t0 + m * dt
            z = noise.normal_block(seed, noise.KERNEL, n_steps, m, lo, hi, 1)[:, 0]
            s = kernel.mean(t_m, s) + kernel.std(t_m, s) * z
            if not np.all(np.isfinite(s)):
                bad = lo + int(np.argwhere(~np.isfinite(s))[0][0])
                raise NumericalError(
                    f"non-finite state at path {bad}, step {m + 1}")
        values[lo:hi] = np.asarray(f(s), dtype=float)
    if not np.all(np.isfinite(values)):
        raise NumericalError("functional produced non-finite values")
    mean, se = _mean_and_se(values)
    return MCEstimate(mean=mean, std_error=se, n_paths=n_paths,
                      metadata={"method": "pathintegral"})
