"""Stochastic process toolkit: simulation, densities, pricing, hedging.

One-dimensional (and correlated multi-asset) diffusions with a
deterministic counter-based noise source, forward and backward grid
solvers for the associated densities and value functions, short-time
kernel propagation, four independent pricing routes and small-scale
portfolio optimization.
"""

from .density import (
    AnalyticDensity1D,
    DensityGrid,
    GridFunction,
    PointMass,
    TransitionDensity,
    TransitionMatrix,
    change_of_variable,
    compose_transition,
    density_bm,
    density_gbm,
    density_vasicek,
    evolve_density,
    export_density_csv,
    fokker_planck_forward,
    kolmogorov_backward,
    point_mass_on_grid,
)
from .errors import DegenerateKernelError, NumericalError
from .mc import (
    MCEstimate,
    PathBatch,
    TimeGrid,
    evolve_step,
    expectation,
    export_paths_binary,
    export_paths_csv,
    gbm_exact_terminal,
    ito_check,
    mgf,
    read_paths_binary,
    scaling_check,
    simulate_paths,
    simulate_terminal,
)
from .models import (
    CovarianceSpec,
    ModelSpec,
    diagonalize_covariance,
    load_model_config,
    make_bm,
    make_correlated_bm,
    make_correlated_gbm,
    make_custom_grid,
    make_gbm,
    make_vasicek,
    model_hash,
    volatility_matrix,
)
from .pathintegral import (
    GreensFunction,
    ShortTimeKernel,
    export_greens_csv,
    greens_function,
    kernel_matrix,
    one_step_kernel,
    pi_expectation,
    propagate,
)
from .portfolio import (
    Cashflow,
    DiscountCurve,
    Position,
    annual_to_continuous,
    continuous_to_annual,
    fixed_loan_coupon,
    fixed_loan_schedule,
    futures_value,
    load_cashflows,
    load_curve,
    load_portfolio_doc,
    pv_deterministic,
    zero_coupon_price,
)
from .pricing import (
    BSParams,
    GreeksReport,
    PayoffSpec,
    bs_greeks,
    bs_price,
    bs_price_moneyness,
    call_payoff,
    digital_payoff,
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
from .risk import (
    HedgeReport,
    IndexInputs,
    IndexWeights,
    Instrument,
    delta_hedge,
    hedge_report_doc,
    index_weights,
    neutralize,
    portfolio_variance,
)

__version__ = "0.1.0"

__all__ = [name for name in dir() if not name.startswith("_")]
