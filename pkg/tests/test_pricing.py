"""Closed-form option values, greeks, and the three numerical PV routes.

The quadrature oracle below is the reference: option values are written
as explicit lognormal integrals and evaluated with adaptive quadrature,
independent of every closed form in the package.
"""

import math

import numpy as np
import pytest
from scipy.integrate import quad
from scipy.stats import norm

from stochastica import (
    BSParams,
    DiscountCurve,
    NumericalError,
    PayoffSpec,
    bs_greeks,
    bs_price,
    bs_price_moneyness,
    call_payoff,
    digital_payoff,
    greens_function,
    make_gbm,
    make_vasicek,
    norm_cdf,
    norm_pdf,
    payoff_from_config,
    put_payoff,
    pv_green,
    pv_mc,
    pv_pde,
    risk_neutralize,
    table_payoff,
)


def quad_price(payoff_fn, S, r, sigma, t, K_break=None):
    """Discounted lognormal expectation of a payoff by adaptive quadrature."""
    m = math.log(S) + (r - 0.5 * sigma ** 2) * t
    v = sigma * math.sqrt(t)

    def integrand(x):
        return payoff_fn(math.exp(x)) * norm.pdf(x, loc=m, scale=v)

    pts = [math.log(K_break)] if K_break else None
    val, err = quad(integrand, m - 12 * v, m + 12 * v, points=pts,
                    limit=200, epsabs=1e-13, epsrel=1e-13)
    assert err < 1e-9
    return math.exp(-r * t) * val


_GRID = [(K, sigma, T)
         for K in (80.0, 100.0, 120.0)
         for sigma in (0.1, 0.2, 0.4)
         for T in (0.25, 1.0, 2.0)]


# ---------------------------------------------------------------------------
# closed forms against the oracle


def test_atm_zero_rate_value_matches_oracle():
    # r = 0, S = K, so the value reduces to S * (2 Phi(sigma sqrt(t)/2) - 1)
    p = BSParams(S=100.0, K=100.0, r=0.0, sigma=0.2, t=1.0)
    got = bs_price(p)
    assert got == pytest.approx(100.0 * (2.0 * norm.cdf(0.1) - 1.0), abs=1e-10)
    oracle = quad_price(lambda s: max(s - 100.0, 0.0), 100.0, 0.0, 0.2, 1.0,
                        K_break=100.0)
    assert got == pytest.approx(oracle, abs=1e-10)
    assert got == pytest.approx(7.9656, abs=1e-4)


@pytest.mark.parametrize("K,sigma,T", [(80.0, 0.4, 2.0), (100.0, 0.2, 1.0),
                                       (120.0, 0.1, 0.25)])
def test_call_and_put_match_oracle(K, sigma, T):
    S, r = 100.0, 0.05
    p = BSParams(S=S, K=K, r=r, sigma=sigma, t=T)
    call = quad_price(lambda s: max(s - K, 0.0), S, r, sigma, T, K_break=K)
    put = quad_price(lambda s: max(K - s, 0.0), S, r, sigma, T, K_break=K)
    assert bs_price(p, "call") == pytest.approx(call, abs=1e-9)
    assert bs_price(p, "put") == pytest.approx(put, abs=1e-9)


def test_moneyness_form_agrees_everywhere():
    for K, sigma, T in _GRID:
        p = BSParams(S=100.0, K=K, r=0.05, sigma=sigma, t=T)
        for kind in ("call", "put"):
            a = bs_price(p, kind)
            b = bs_price_moneyness(p, kind)
            assert abs(a - b) <= 1e-12 * max(1.0, abs(a))


def test_put_call_parity():
    for K, sigma, T in _GRID:
        p = BSParams(S=100.0, K=K, r=0.05, sigma=sigma, t=T)
        lhs = bs_price(p, "call") - bs_price(p, "put")
        rhs = 100.0 - K * math.exp(-0.05 * T)
        assert lhs == pytest.approx(rhs, abs=1e-12)


def test_price_monotonicity_and_bounds():
    base = dict(S=100.0, K=100.0, r=0.05, t=1.0)
    vols = [0.05, 0.1, 0.2, 0.4, 0.8]
    prices = [bs_price(BSParams(sigma=v, **base)) for v in vols]
    assert all(a < b for a, b in zip(prices, prices[1:]))
    for T in (0.25, 1.0, 2.0):
        for sigma in (0.1, 0.4):
            p = BSParams(S=100.0, K=90.0, r=0.05, sigma=sigma, t=T)
            val = bs_price(p)
            assert max(p.S - p.K * math.exp(-p.r * p.t), 0.0) <= val <= p.S


def test_degenerate_price_is_discounted_intrinsic():
    p = BSParams(S=100.0, K=90.0, r=0.05, sigma=0.0, t=2.0)
    assert bs_price(p) == pytest.approx(100.0 - 90.0 * math.exp(-0.1), abs=1e-14)
    p0 = BSParams(S=100.0, K=110.0, r=0.05, sigma=0.3, t=0.0)
    assert bs_price(p0) == 0.0
    assert bs_price(p0, "put") == pytest.approx(10.0, abs=1e-14)


def test_params_validation():
    with pytest.raises(ValueError):
        BSParams(S=0.0, K=100.0, r=0.0, sigma=0.2, t=1.0)
    with pytest.raises(ValueError):
        BSParams(S=100.0, K=-1.0, r=0.0, sigma=0.2, t=1.0)
    with pytest.raises(ValueError):
        BSParams(S=100.0, K=100.0, r=0.0, sigma=-0.2, t=1.0)
    with pytest.raises(ValueError):
        BSParams(S=100.0, K=100.0, r=0.0, sigma=0.2, t=-1.0)
    with pytest.raises(ValueError):
        bs_price(BSParams(S=100.0, K=100.0, r=0.0, sigma=0.2, t=1.0), "straddle")


def test_gaussian_helpers_match_scipy():
    x = np.linspace(-6.0, 6.0, 25)
    np.testing.assert_allclose(norm_cdf(x), norm.cdf(x), atol=1e-15)
    np.testing.assert_allclose(norm_pdf(x), norm.pdf(x), atol=1e-15)
    assert isinstance(norm_cdf(0.3), float)


# ---------------------------------------------------------------------------
# greeks


def test_greeks_match_finite_differences():
    p = BSParams(S=100.0, K=110.0, r=0.05, sigma=0.25, t=0.75)
    g = bs_greeks(p)
    eps = 1e-3

    def price_at(S=p.S, sigma=p.sigma):
        return bs_price(BSParams(S=S, K=p.K, r=p.r, sigma=sigma, t=p.t))

    fd_delta = (price_at(S=p.S + eps) - price_at(S=p.S - eps)) / (2 * eps)
    fd_kappa = (price_at(sigma=p.sigma + 1e-5)
                - price_at(sigma=p.sigma - 1e-5)) / 2e-5
    fd_gamma = (price_at(S=p.S + eps) - 2 * price_at()
                + price_at(S=p.S - eps)) / eps ** 2
    assert g.delta == pytest.approx(fd_delta, rel=1e-7)
    assert g.kappa == pytest.approx(fd_kappa, rel=1e-7)
    assert g.gamma == pytest.approx(fd_gamma, rel=1e-5)
    assert not g.degenerate


def test_collapsing_identity_holds():
    # S N(d+) = K e^{-rt} N(d-) is what makes the short greek forms valid
    for K, sigma, T in _GRID:
        p = BSParams(S=100.0, K=K, r=0.05, sigma=sigma, t=T)
        lhs = p.S * norm_pdf(p.d_plus)
        rhs = p.K * math.exp(-p.r * p.t) * norm_pdf(p.d_minus)
        assert abs(lhs - rhs) <= 1e-12 * max(1.0, abs(lhs))
        bs_greeks(p)  # the internal cross-check must not trip


def test_degenerate_greeks():
    itm = bs_greeks(BSParams(S=100.0, K=90.0, r=0.05, sigma=0.0, t=1.0))
    assert (itm.delta, itm.kappa, itm.gamma) == (1.0, 0.0, 0.0)
    assert itm.degenerate
    otm = bs_greeks(BSParams(S=80.0, K=90.0, r=0.0, sigma=0.0, t=1.0))
    assert otm.delta == 0.0
    atm_fwd = bs_greeks(
        BSParams(S=90.0 * math.exp(-0.05), K=90.0, r=0.05, sigma=0.0, t=1.0))
    assert atm_fwd.delta == 0.5
    assert atm_fwd.gamma == math.inf
    assert atm_fwd.kappa == pytest.approx(
        90.0 * math.exp(-0.05) / math.sqrt(2 * math.pi))
    expired = bs_greeks(BSParams(S=100.0, K=100.0, r=0.0, sigma=0.3, t=0.0))
    assert expired.gamma == 0.0 and expired.kappa == 0.0


# ---------------------------------------------------------------------------
# payoff construction


def test_payoff_builders():
    s = np.array([80.0, 100.0, 125.0])
    np.testing.assert_allclose(call_payoff(100.0).terminal(s), [0.0, 0.0, 25.0])
    np.testing.assert_allclose(put_payoff(100.0).terminal(s), [20.0, 0.0, 0.0])
    np.testing.assert_allclose(digital_payoff(100.0).terminal(s),
                               [0.0, 0.0, 1.0])
    tab = table_payoff([0.0, 100.0, 200.0], [0.0, 0.0, 100.0])
    np.testing.assert_allclose(tab.terminal(np.array([50.0, 150.0])),
                               [0.0, 50.0])


def test_payoff_validation():
    with pytest.raises(ValueError, match="kind"):
        PayoffSpec(terminal=lambda s: s, kind="barrier")
    with pytest.raises(ValueError, match="strike"):
        PayoffSpec(terminal=lambda s: s, kind="call")
    with pytest.raises(ValueError):
        table_payoff([1.0, 1.0], [0.0, 0.0])
    with pytest.raises(ValueError):
        table_payoff([0.0, 1.0], [0.0, math.nan])


def test_payoff_from_config():
    assert payoff_from_config({"kind": "call", "strike": 90.0}).strike == 90.0
    assert payoff_from_config({"kind": "put", "strike": 90.0}).kind == "put"
    assert payoff_from_config({"kind": "digital", "strike": 90.0}).kind == "digital"
    custom = payoff_from_config(
        {"kind": "custom", "table": {"s": [0.0, 1.0], "values": [1.0, 2.0]}})
    assert custom.terminal(0.5) == pytest.approx(1.5)
    with pytest.raises(ValueError):
        payoff_from_config({"strike": 90.0})
    with pytest.raises(ValueError, match="strike"):
        payoff_from_config({"kind": "call"})
    with pytest.raises(ValueError, match="unknown"):
        payoff_from_config({"kind": "asian", "strike": 90.0})
    with pytest.raises(ValueError, match="table"):
        payoff_from_config({"kind": "custom"})


# ---------------------------------------------------------------------------
# risk-neutral drift


def test_risk_neutralize_gbm():
    curve = DiscountCurve(times=(0.0,), rates=(0.05,))
    rn = risk_neutralize(make_gbm(0.12, 0.2), curve)
    assert rn.risk_neutral
    assert rn.config["params"]["mu"] == 0.05
    assert rn.config["params"]["sigma"] == 0.2
    s = np.array([[100.0]])
    np.testing.assert_allclose(rn.drift(0.0, s), 0.05 * s, rtol=1e-15)
    np.testing.assert_allclose(rn.vol(0.0, s), 0.2 * s[..., None], rtol=1e-15)


def test_risk_neutralize_non_flat_curve():
    curve = DiscountCurve(times=(0.0, 1.0), rates=(0.02, 0.06))
    rn = risk_neutralize(make_gbm(0.12, 0.2), curve)
    assert "mu" not in rn.config["params"]
    assert rn.config["curve"]["rates"] == [0.02, 0.06]
    s = np.array([[100.0]])
    np.testing.assert_allclose(rn.drift(1.5, s), 0.06 * s, rtol=1e-15)


def test_risk_neutralize_requires_override_for_other_kinds():
    curve = DiscountCurve(times=(0.0,), rates=(0.05,))
    with pytest.raises(ValueError, match="override"):
        risk_neutralize(make_vasicek(1.0, 0.05, 0.02), curve)
    rn = risk_neutralize(make_vasicek(1.0, 0.05, 0.02), curve,
                         override_drift=lambda t, S: 0.05 * S)
    assert rn.risk_neutral
    assert rn.config["drift_override"] is True


# ---------------------------------------------------------------------------
# Monte Carlo route


def test_pv_mc_exact_terminal_matches_closed_form():
    curve = DiscountCurve(times=(0.0,), rates=(0.05,))
    est = pv_mc(make_gbm(0.12, 0.2), curve, call_payoff(100.0),
                100.0, 1.0, 0.25, 200_000, seed=7)
    assert est.metadata["sampler"] == "exact-terminal"
    assert est.metadata["risk_neutralized"] is True
    assert est.metadata["discount"] == pytest.approx(math.exp(-0.05))
    want = bs_price(BSParams(S=100.0, K=100.0, r=0.05, sigma=0.2, t=1.0))
    assert abs(est.mean - want) < 3.0 * est.std_error


def test_pv_mc_put_within_three_se():
    curve = DiscountCurve(times=(0.0,), rates=(0.03,))
    est = pv_mc(make_gbm(0.0, 0.3), curve, put_payoff(110.0),
                100.0, 2.0, 0.5, 200_000, seed=21)
    want = bs_price(BSParams(S=100.0, K=110.0, r=0.03, sigma=0.3, t=2.0), "put")
    assert abs(est.mean - want) < 3.0 * est.std_error


def test_pv_mc_euler_route_consistent():
    curve = DiscountCurve(times=(0.0,), rates=(0.05,))
    kwargs = dict(S0=100.0, T=1.0, n_paths=100_000, seed=7)
    exact = pv_mc(make_gbm(0.12, 0.2), curve, call_payoff(100.0),
                  dt=0.25, **kwargs)
    euler = pv_mc(make_gbm(0.12, 0.2), curve, call_payoff(100.0),
                  dt=1.0 / 64, exact_terminal=False, **kwargs)
    assert euler.metadata["sampler"] == "euler-paths"
    want = bs_price(BSParams(S=100.0, K=100.0, r=0.05, sigma=0.2, t=1.0))
    assert abs(euler.mean - want) < 4.0 * euler.std_error
    assert abs(exact.mean - euler.mean) < 4.0 * math.hypot(
        exact.std_error, euler.std_error)


def test_pv_mc_thread_count_does_not_change_values():
    curve = DiscountCurve(times=(0.0,), rates=(0.05,))
    args = (make_gbm(0.12, 0.2), curve, call_payoff(100.0), 100.0, 1.0, 0.25,
            70_000)
    a = pv_mc(*args, seed=5, threads=1, exact_terminal=False)
    b = pv_mc(*args, seed=5, threads=3, exact_terminal=False)
    assert a.mean == b.mean and a.std_error == b.std_error


def test_pv_mc_stream_is_left_riemann_sum():
    # a state-independent unit stream makes every path identical
    r, T, dt = 0.05, 1.0, 0.125
    curve = DiscountCurve(times=(0.0,), rates=(r,))
    payoff = PayoffSpec(terminal=lambda s: np.zeros_like(s),
                        stream=lambda t, s: np.ones_like(s))
    est = pv_mc(make_gbm(0.1, 0.2), curve, payoff, 100.0, T, dt, 500, seed=0)
    n = round(T / dt)
    want = sum(math.exp(-r * m * dt) * dt for m in range(n))
    assert est.mean == pytest.approx(want, abs=1e-12)
    assert est.std_error < 1e-12
    assert est.metadata["sampler"] == "euler-paths"


def test_pv_mc_validation():
    curve = DiscountCurve(times=(0.0,), rates=(0.05,))
    model = make_gbm(0.1, 0.2)
    with pytest.raises(ValueError):
        pv_mc(model, curve, call_payoff(100.0), 100.0, 0.0, 0.25, 100, seed=0)
    with pytest.raises(ValueError):
        pv_mc(model, curve, call_payoff(100.0), 100.0, 1.0, 0.3, 100, seed=0)
    with pytest.raises(ValueError):
        pv_mc(model, curve, call_payoff(100.0), 100.0, 1.0, 0.25, 0, seed=0)
    stream = PayoffSpec(terminal=lambda s: np.zeros_like(s),
                        stream=lambda t, s: np.ones_like(s))
    with pytest.raises(ValueError, match="exact"):
        pv_mc(model, curve, stream, 100.0, 1.0, 0.25, 100, seed=0,
              exact_terminal=True)


# ---------------------------------------------------------------------------
# PDE route


def test_pv_pde_matches_closed_form():
    curve = DiscountCurve(times=(0.0,), rates=(0.05,))
    gf = pv_pde(call_payoff(100.0), curve, 0.2, 100.0, 1.0)
    want = bs_price(BSParams(S=100.0, K=100.0, r=0.05, sigma=0.2, t=1.0))
    assert abs(gf(100.0) - want) < 1e-3 * want
    # strike lands on a node so the kink is resolved exactly where it sits
    assert float(np.min(np.abs(gf.s_values - 100.0))) < 1e-9 * 100.0
    pf = pv_pde(put_payoff(120.0), curve, 0.4, 100.0, 0.5)
    want_p = bs_price(BSParams(S=100.0, K=120.0, r=0.05, sigma=0.4, t=0.5),
                      "put")
    assert abs(pf(100.0) - want_p) < 1e-3 * want_p


def test_pv_pde_constant_stream_is_an_annuity():
    # terminal 0 with unit stream has value (1 - e^{-rT})/r independent of S
    r, T = 0.05, 1.0
    curve = DiscountCurve(times=(0.0,), rates=(r,))
    payoff = PayoffSpec(terminal=lambda s: np.zeros_like(s),
                        stream=lambda t, s: np.ones_like(s))
    gf = pv_pde(payoff, curve, 0.2, 100.0, T, n_nodes=513, n_steps=256)
    want = (1.0 - math.exp(-r * T)) / r
    assert gf(100.0) == pytest.approx(want, rel=1e-5)
    assert gf(80.0) == pytest.approx(gf(125.0), rel=1e-9)


def test_pv_pde_validation():
    flat = DiscountCurve(times=(0.0,), rates=(0.05,))
    bumpy = DiscountCurve(times=(0.0, 1.0), rates=(0.02, 0.06))
    with pytest.raises(ValueError, match="flat"):
        pv_pde(call_payoff(100.0), bumpy, 0.2, 100.0, 1.0)
    with pytest.raises(ValueError, match="outside"):
        pv_pde(call_payoff(100.0), flat, 0.2, 1.0, 1.0, half_width=2.0)
    with pytest.raises(ValueError):
        pv_pde(call_payoff(100.0), flat, -0.2, 100.0, 1.0)
    with pytest.raises(ValueError):
        pv_pde(call_payoff(100.0), flat, 0.2, 100.0, 0.0)


# ---------------------------------------------------------------------------
# Green's-function route


def test_pv_green_matches_closed_form():
    r, sigma, S0, T = 0.05, 0.2, 100.0, 1.0
    curve = DiscountCurve(times=(0.0,), rates=(r,))
    rn = risk_neutralize(make_gbm(0.1, sigma), curve)
    g = greens_function(rn, curve, 0.0, S0, T, 1.0 / 64)
    got = pv_green(g, call_payoff(100.0))
    want = bs_price(BSParams(S=S0, K=100.0, r=r, sigma=sigma, t=T))
    assert abs(got - want) < 1e-3 * want
    # digitals jump at the strike, so quadrature error is first order in
    # the node spacing: bounded by pdf(K) * h / 2 at each resolution
    p = BSParams(S=S0, K=100.0, r=r, sigma=sigma, t=T)
    want_dig = math.exp(-r * T) * norm_cdf(p.d_minus)
    dig = pv_green(g, digital_payoff(100.0))
    assert abs(dig - want_dig) < 4e-3
    g_fine = greens_function(rn, curve, 0.0, S0, T, 1.0 / 64, n_nodes=3201)
    dig_fine = pv_green(g_fine, digital_payoff(100.0))
    assert abs(dig_fine - want_dig) < 1e-3


def test_pv_green_stream_annuity():
    r, T = 0.05, 1.0
    curve = DiscountCurve(times=(0.0,), rates=(r,))
    rn = risk_neutralize(make_gbm(0.1, 0.2), curve)
    g = greens_function(rn, curve, 0.0, 100.0, T, 1.0 / 64)
    payoff = PayoffSpec(terminal=lambda s: np.zeros_like(s),
                        stream=lambda t, s: np.ones_like(s))
    want = (1.0 - math.exp(-r * T)) / r
    assert pv_green(g, payoff) == pytest.approx(want, rel=1e-4)


def test_pv_green_warns_when_payoff_leaks():
    r, sigma, S0, T = 0.05, 0.2, 100.0, 1.0
    curve = DiscountCurve(times=(0.0,), rates=(r,))
    rn = risk_neutralize(make_gbm(0.1, sigma), curve)
    g = greens_function(rn, curve, 0.0, S0, T, 1.0 / 64, half_width=3.5)
    with pytest.warns(RuntimeWarning, match="leak"):
        pv_green(g, call_payoff(100.0))
