"""Present value of European payoffs by four routes.

Closed-form prices and greeks for lognormal dynamics, discounted Monte
Carlo over simulated paths, a backward PDE solve in log-price, and
quadrature against a Green's function lattice. All routes price in the
risk-neutral measure: every asset drifts at the short rate and values are
discounted expectations.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.special import erfc

from . import noise
from .density import GridFunction
from .errors import NumericalError
from .mc import MCEstimate, _mean_and_se, _run_chunks
from .models import ModelSpec, model_hash
from .pathintegral import GreensFunction
from .portfolio import DiscountCurve

_PAYOFF_KINDS = ("call", "put", "digital", "custom")


@dataclass(frozen=True)
class PayoffSpec:
    """Terminal payoff P(S) plus an optional continuous stream rate p(t, S)."""

    terminal: Callable[[np.ndarray], np.ndarray]
    kind: str = "custom"
    strike: float | None = None
    stream: Callable[[float, np.ndarray], np.ndarray] | None = None

    def __post_init__(self):
        if self.kind not in _PAYOFF_KINDS:
            raise ValueError(f"payoff kind must be one of {_PAYOFF_KINDS}")
        if self.kind in ("call", "put", "digital"):
            if self.strike is None or not self.strike > 0:
                raise ValueError("built-in payoffs need a strike K > 0")


def call_payoff(K: float) -> PayoffSpec:
    K = float(K)
    return PayoffSpec(terminal=lambda s: np.maximum(s - K, 0.0),
                      kind="call", strike=K)


def put_payoff(K: float) -> PayoffSpec:
    K = float(K)
    return PayoffSpec(terminal=lambda s: np.maximum(K - s, 0.0),
                      kind="put", strike=K)


def digital_payoff(K: float) -> PayoffSpec:
    """Cash-or-nothing: pays 1 when the terminal price exceeds K."""
    K = float(K)
    return PayoffSpec(terminal=lambda s: (np.asarray(s) > K).astype(float),
                      kind="digital", strike=K)


def table_payoff(s_values, payoff_values) -> PayoffSpec:
    """Custom payoff tabulated on a price grid, linearly interpolated."""
    s = np.asarray(s_values, dtype=float)
    v = np.asarray(payoff_values, dtype=float)
    if s.ndim != 1 or s.size < 2 or np.any(np.diff(s) <= 0):
        raise ValueError("payoff table grid must be strictly increasing")
    if v.shape != s.shape or not np.all(np.isfinite(v)):
        raise ValueError("payoff table values must be finite and match the grid")
    return PayoffSpec(terminal=lambda q: np.interp(q, s, v), kind="custom")


def payoff_from_config(doc: dict) -> PayoffSpec:
    if not isinstance(doc, dict) or "kind" not in doc:
        raise ValueError("payoff must be an object with a 'kind' key")
    kind = doc["kind"]
    if kind in ("call", "put", "digital"):
        if "strike" not in doc:
            raise ValueError(f"payoff.strike required for kind {kind!r}")
        maker = {"call": call_payoff, "put": put_payoff,
                 "digital": digital_payoff}[kind]
        return maker(doc["strike"])
    if kind == "custom":
        table = doc.get("table")
        if not isinstance(table, dict) or "s" not in table or "values" not in table:
            raise ValueError("custom payoff needs table: {s: [...], values: [...]}")
        return table_payoff(table["s"], table["values"])
    raise ValueError(f"unknown payoff kind {kind!r}")


# ---------------------------------------------------------------------------
# Risk-neutral drift


def risk_neutralize(model: ModelSpec, curve: DiscountCurve,
                    override_drift=None) -> ModelSpec:
    """Replace the physical drift with r(t) * S, keeping the volatility.

    Only price-homogeneous models can be neutralized automatically; for
    anything else pass override_drift, an explicit risk-neutral drift map
    (t, S) -> array. Idempotent: re-applying with the same curve yields an
    equivalent model.
    """
    if override_drift is not None:
        config = dict(model.config)
        config["risk_neutral"] = True
        config["drift_override"] = True
        return ModelSpec(dim=model.dim, noise_dim=model.noise_dim,
                         drift=override_drift, vol=model.vol, kind=model.kind,
                         config=config, price_rate=None, risk_neutral=True)
    if model.kind != "gbm":
        raise ValueError(
            f"model kind {model.kind!r} is not price-homogeneous; supply "
            "override_drift with an explicit risk-neutral drift")

    def drift(t, S):
        return curve.rate(t) * S

    config = dict(model.config)
    params = dict(config.get("params", {}))
    if curve.is_flat:
        params["mu"] = curve.rates[0]
    else:
        params.pop("mu", None)
        config["curve"] = {"times": list(curve.times), "rates": list(curve.rates)}
    config["params"] = params
    config["risk_neutral"] = True
    return ModelSpec(dim=model.dim, noise_dim=model.noise_dim, drift=drift,
                     vol=model.vol, kind="gbm", config=config,
                     price_rate=curve.rate, risk_neutral=True)


# ---------------------------------------------------------------------------
# Closed forms


def norm_cdf(x):
    """Standard Gaussian CDF via the complementary error function."""
    x = np.asarray(x, dtype=float)
    out = 0.5 * erfc(-x / math.sqrt(2.0))
    return float(out) if out.ndim == 0 else out


def norm_pdf(x):
    x = np.asarray(x, dtype=float)
    out = np.exp(-0.5 * x * x) / math.sqrt(2.0 * math.pi)
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class BSParams:
    """Lognormal pricing inputs: spot, strike, flat rate, volatility, expiry."""

    S: float
    K: float
    r: float
    sigma: float
    t: float

    def __post_init__(self):
        if not (self.S > 0 and self.K > 0):
            raise ValueError("S and K must be positive")
        if self.sigma < 0:
            raise ValueError("sigma must be >= 0")
        if self.t < 0:
            raise ValueError("t must be >= 0")

    @property
    def d_plus(self) -> float:
        z = self.sigma * math.sqrt(self.t)
        return (math.log(self.S / self.K) + (self.r + 0.5 * self.sigma ** 2)
                * self.t) / z

    @property
    def d_minus(self) -> float:
        return self.d_plus - self.sigma * math.sqrt(self.t)


def _is_degenerate(p: BSParams) -> bool:
    return p.sigma * math.sqrt(p.t) == 0.0


def bs_price(p: BSParams, kind: str = "call") -> float:
    """European option value under lognormal dynamics.

    call = S Phi(d+) - K e^{-rt} Phi(d-); the put follows from
    call - put = S - K e^{-rt}. Zero volatility or zero expiry collapse to
    the discounted intrinsic value.
    """
    if kind not in ("call", "put"):
        raise ValueError("kind must be 'call' or 'put'")
    disc_k = p.K * math.exp(-p.r * p.t)
    if _is_degenerate(p):
        call = max(p.S - disc_k, 0.0)
    else:
        call = p.S * norm_cdf(p.d_plus) - disc_k * norm_cdf(p.d_minus)
    if kind == "call":
        return call
    return call - p.S + disc_k


def bs_price_moneyness(p: BSParams, kind: str = "call") -> float:
    """Equivalent dimensionless form: f = Ke^{-rt} [e^m Phi(m/z + z/2) - Phi(m/z - z/2)]

    with moneyness m = ln(S / (K e^{-rt})) and z = sigma sqrt(t).
    """
    if _is_degenerate(p):
        return bs_price(p, kind)
    disc_k = p.K * math.exp(-p.r * p.t)
    m = math.log(p.S / disc_k)
    z = p.sigma * math.sqrt(p.t)
    call = disc_k * (math.exp(m) * norm_cdf(m / z + 0.5 * z)
                     - norm_cdf(m / z - 0.5 * z))
    if kind == "call":
        return call
    return call - p.S + disc_k


@dataclass(frozen=True)
class GreeksReport:
    delta: float
    kappa: float
    gamma: float
    degenerate: bool = False


def bs_delta_expanded(p: BSParams) -> float:
    """Spot sensitivity written out term by term before simplification.

    The trailing bracket cancels identically because
    S N(d+) = K e^{-rt} N(d-); both forms are computed and compared in
    bs_greeks.
    """
    z = p.sigma * math.sqrt(p.t)
    return (norm_cdf(p.d_plus)
            + (norm_pdf(p.d_plus)
               - p.K * math.exp(-p.r * p.t) / p.S * norm_pdf(p.d_minus)) / z)


def bs_kappa_expanded(p: BSParams) -> float:
    """Volatility sensitivity via the explicit d+- derivatives.

    d(d+-)/dsigma = -(ln(S/K) + rt)/(sigma^2 sqrt(t)) +- sqrt(t)/2.
    """
    core = -(math.log(p.S / p.K) + p.r * p.t) / (p.sigma ** 2 * math.sqrt(p.t))
    dd_plus = core + 0.5 * math.sqrt(p.t)
    dd_minus = core - 0.5 * math.sqrt(p.t)
    return (p.S * norm_pdf(p.d_plus) * dd_plus
            - p.K * math.exp(-p.r * p.t) * norm_pdf(p.d_minus) * dd_minus)


def bs_greeks(p: BSParams) -> GreeksReport:
    """Call sensitivities: delta = Phi(d+), kappa = S sqrt(t) N(d+),
    gamma = N(d+) / (S sigma sqrt(t)).

    The long-hand forms with explicit d+- derivatives are evaluated too
    and must agree to near machine precision; a mismatch means the
    collapsing identity S N(d+) = K e^{-rt} N(d-) failed numerically.
    Degenerate inputs (sigma = 0 or t = 0) return limit values flagged.
    """
    if _is_degenerate(p):
        forward_itm = p.S - p.K * math.exp(-p.r * p.t)
        if forward_itm > 0:
            delta = 1.0
        elif forward_itm < 0:
            delta = 0.0
        else:
            delta = 0.5
        gamma = math.inf if forward_itm == 0 and p.t > 0 else 0.0
        kappa = (p.S * math.sqrt(p.t) / math.sqrt(2 * math.pi)
                 if forward_itm == 0 else 0.0)
        return GreeksReport(delta=delta, kappa=kappa, gamma=gamma,
                            degenerate=True)

    z = p.sigma * math.sqrt(p.t)
    delta = norm_cdf(p.d_plus)
    kappa = p.S * math.sqrt(p.t) * norm_pdf(p.d_plus)
    gamma = norm_pdf(p.d_plus) / (p.S * z)

    delta_long = bs_delta_expanded(p)
    kappa_long = bs_kappa_expanded(p)
    if abs(delta_long - delta) > 1e-9 * max(1.0, abs(delta)) or \
            abs(kappa_long - kappa) > 1e-9 * max(1.0, abs(kappa)):
        raise NumericalError(
            "expanded and simplified greeks disagree; the identity "
            "S N(d+) = K e^{-rt} N(d-) failed numerically")
    return GreeksReport(delta=delta, kappa=kappa, gamma=gamma)


# ---------------------------------------------------------------------------
# Monte Carlo present value


def _can_sample_terminal_exactly(model: ModelSpec, payoff: PayoffSpec) -> bool:
    if payoff.stream is not None or model.kind != "gbm" or model.dim != 1:
        return False
    params = model.config.get("params", {})
    return isinstance(params.get("sigma"), (int, float))


def pv_mc(model: ModelSpec, curve: DiscountCurve, payoff: PayoffSpec,
          S0: float, T: float, dt: float, n_paths: int, seed, *,
          threads=None, exact_terminal: bool | None = None) -> MCEstimate:
    """Discounted Monte Carlo value of a payoff at horizon T.

    The model is risk-neutralized internally (recorded in metadata).
    Stream payoffs accumulate sum_m p(t_m, S_m) e^{-R(0,t_m)} dt over the
    left endpoints. For plain terminal payoffs under one-factor
    proportional dynamics the terminal value is drawn from its exact
    lognormal law instead of stepping (metadata sampler flag); pass
    exact_terminal=False to force the Euler path route.
    """
    seed = noise.validate_seed(seed)
    if not T > 0:
        raise ValueError("T must be positive")
    if n_paths < 1:
        raise ValueError("n_paths must be >= 1")
    steps = T / dt
    if abs(steps - round(steps)) > 1e-9 * max(1.0, steps) or round(steps) < 1:
        raise ValueError("T/dt must be a positive integer")
    n_steps = round(steps)
    rn = risk_neutralize(model, curve) if not model.risk_neutral else model
    disc_T = curve.discount(0.0, T)
    metadata = {"risk_neutralized": True, "model_hash": model_hash(rn),
                "dt": dt, "n_steps": n_steps, "discount": disc_T}

    use_exact = _can_sample_terminal_exactly(rn, payoff) \
        if exact_terminal is None else bool(exact_terminal)
    if use_exact:
        if not _can_sample_terminal_exactly(rn, payoff):
            raise ValueError("exact terminal sampling needs a one-factor "
                             "proportional model and a pure terminal payoff")
        sigma = float(rn.config["params"]["sigma"])
        growth = curve.integral(0.0, T)
        z = noise.normal_block(seed, noise.TERMINAL, 1, 0, 0, n_paths, 1)[:, 0]
        s_T = S0 * np.exp(growth - 0.5 * sigma * sigma * T
                          + sigma * math.sqrt(T) * z)
        values = disc_T * np.asarray(payoff.terminal(s_T), dtype=float)
        metadata["sampler"] = "exact-terminal"
    else:
        sqdt = math.sqrt(dt)
        disc_steps = np.asarray([curve.discount(0.0, m * dt)
                                 for m in range(n_steps)])
        values = np.empty(n_paths)

        def work(lo: int, hi: int) -> None:
            s = np.full((hi - lo, rn.dim), float(S0))
            acc = np.zeros(hi - lo) if payoff.stream is not None else None
            for m in range(n_steps):
                t_m = m * dt
                if acc is not None:
                    acc += disc_steps[m] * dt * np.asarray(
                        payoff.stream(t_m, s[:, 0]), dtype=float)
                xi = noise.normal_block(seed, noise.EULER, n_steps, m,
                                        lo, hi, rn.noise_dim)
                mu = rn.drift(t_m, s)
                sig = rn.vol(t_m, s)
                if rn.noise_dim == 1:
                    s = s + mu * dt + sqdt * sig[..., 0] * xi
                else:
                    s = s + mu * dt + sqdt * np.einsum("pnk,pk->pn", sig, xi)
                if not np.all(np.isfinite(s)):
                    bad = lo + int(np.argwhere(~np.isfinite(s))[0][0])
                    raise NumericalError(
                        f"non-finite state at path {bad}, step {m + 1}")
            v = disc_T * np.asarray(payoff.terminal(s[:, 0]), dtype=float)
            values[lo:hi] = v if acc is None else v + acc

        _run_chunks(n_paths, 1 if threads is None else int(threads), work)
        metadata["sampler"] = "euler-paths"

    if not np.all(np.isfinite(values)):
        raise NumericalError("payoff produced non-finite values")
    mean, se = _mean_and_se(values)
    return MCEstimate(mean=mean, std_error=se, n_paths=n_paths,
                      metadata=metadata)


# ---------------------------------------------------------------------------
# Backward PDE in log-price


def _resolve_sigma(sigma) -> Callable[[float, np.ndarray], np.ndarray]:
    if callable(sigma):
        return lambda t, s: np.asarray(sigma(t, s), dtype=float)
    sig = float(sigma)
    if sig <= 0:
        raise ValueError("sigma must be positive")
    return lambda t, s: np.full_like(np.asarray(s, dtype=float), sig)


def pv_pde(payoff: PayoffSpec, curve: DiscountCurve, sigma, S0: float,
           T: float, *, n_nodes: int = 4097, n_steps: int = 512,
           half_width: float = 8.0) -> GridFunction:
    """Backward solve of the pricing PDE; returns the t=0 value function.

    Log-price coordinates make the diffusion coefficient constant for
    constant sigma. Two fully implicit startup steps damp the payoff kink
    before trapezoidal time stepping takes over; edge rows impose zero
    curvature in price. The grid is centered on ln S0 and snapped so the
    strike (when present) falls on a node.
    """
    if not curve.is_flat:
        raise ValueError("pv_pde requires a flat discount curve")
    r = curve.rates[0]
    if not (S0 > 0 and T > 0):
        raise ValueError("S0 and T must be positive")
    sig_fn = _resolve_sigma(sigma)
    x0 = math.log(S0)
    sig0 = float(np.max(sig_fn(0.0, np.asarray([S0]))))
    if sig0 <= 0:
        raise ValueError("sigma must be positive at the spot")
    width = half_width * sig0 * math.sqrt(T) + abs(r - 0.5 * sig0 ** 2) * T
    h = 2 * width / (n_nodes - 1)
    if payoff.strike is not None:
        k_star = math.log(payoff.strike / S0)
        if abs(k_star) > 1e-12:
            if abs(k_star) >= width:
                raise ValueError("strike lies outside the grid; "
                                 "increase half_width")
            h = k_star / round(k_star / h)
    n_half = math.ceil(width / abs(h))
    x = x0 + h * np.arange(-n_half, n_half + 1)
    s = np.exp(x)
    n = x.size

    f = np.asarray(payoff.terminal(s), dtype=float)
    if not np.all(np.isfinite(f)):
        raise ValueError("terminal payoff must be finite on the grid")

    from scipy.linalg import solve_banded

    dt = T / n_steps
    # ghost-node elimination coefficients for zero price-curvature edges
    alpha = 2.0 / (1.0 + 0.5 * h)
    beta = -(1.0 - 0.5 * h) / (1.0 + 0.5 * h)
    gamma_c = 2.0 / (1.0 - 0.5 * h)
    delta_c = -(1.0 + 0.5 * h) / (1.0 - 0.5 * h)

    for m in range(n_steps):
        tau = T - (m + 0.5) * dt
        sig_m = sig_fn(tau, s)
        a = 0.5 * sig_m ** 2
        b = r - 0.5 * sig_m ** 2
        lower = np.zeros(n)
        diag = np.zeros(n)
        upper = np.zeros(n)
        upper[1:-1] = a[1:-1] / (h * h) + b[1:-1] / (2 * h)
        lower[1:-1] = a[1:-1] / (h * h) - b[1:-1] / (2 * h)
        diag[1:-1] = -2 * a[1:-1] / (h * h) - r
        diag[0] = a[0] * (alpha - 2) / (h * h) - b[0] * alpha / (2 * h) - r
        upper[0] = a[0] * (1 + beta) / (h * h) + b[0] * (1 - beta) / (2 * h)
        diag[-1] = a[-1] * (gamma_c - 2) / (h * h) + b[-1] * gamma_c / (2 * h) - r
        lower[-1] = a[-1] * (1 + delta_c) / (h * h) + b[-1] * (delta_c - 1) / (2 * h)

        theta = 1.0 if m < 2 else 0.5
        Af = diag * f
        Af[:-1] += upper[:-1] * f[1:]
        Af[1:] += lower[1:] * f[:-1]
        rhs = f + (1 - theta) * dt * Af
        if payoff.stream is not None:
            rhs += dt * np.asarray(payoff.stream(tau, s), dtype=float)
        ab = np.zeros((3, n))
        ab[0, 1:] = -theta * dt * upper[:-1]
        ab[1, :] = 1.0 - theta * dt * diag
        ab[2, :-1] = -theta * dt * lower[1:]
        f = solve_banded((1, 1), ab, rhs)
        if not np.all(np.isfinite(f)):
            raise NumericalError(
                f"pricing solve produced non-finite values at step {m + 1}")
    return GridFunction(s_values=s, values=f, t=0.0)


# ---------------------------------------------------------------------------
# Green's-function quadrature


def pv_green(green: GreensFunction, payoff: PayoffSpec) -> float:
    """Integrate the payoff against the discounted transition lattice.

    Terminal payoffs use the final time slice; stream payoffs add a
    trapezoid time integral over the lattice times. Warns when the payoff
    weight near the lattice edges exceeds 1e-4 of the total.
    """
    value = green.integrate(payoff.terminal)
    edge = _edge_share(green, payoff.terminal, -1)
    if payoff.stream is not None:
        tw = np.zeros_like(green.times)
        dts = np.diff(green.times)
        tw[:-1] += 0.5 * dts
        tw[1:] += 0.5 * dts
        for idx, t_m in enumerate(green.times):
            value += tw[idx] * green.integrate(lambda s: payoff.stream(t_m, s),
                                               idx)
    if edge > 1e-4:
        warnings.warn(
            f"payoff support leaks past the lattice edges (edge share "
            f"{edge:.3g}); the value is biased by up to that fraction",
            RuntimeWarning, stacklevel=2)
    return value


def _edge_share(green: GreensFunction, terminal, index: int) -> float:
    from .density import trapezoid_weights

    w = trapezoid_weights(green.native_values)
    vals = np.abs(np.asarray(terminal(green.price_values), dtype=float))
    total = float(np.sum(w * green.transition[index] * vals))
    if total == 0:
        return 0.0
    k = max(2, len(w) // 100)
    edge = float(np.sum((w * green.transition[index] * vals)[:k])
                 + np.sum((w * green.transition[index] * vals)[-k:]))
    return edge / total
