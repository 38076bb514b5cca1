"""Path simulation and Monte Carlo estimation.

Simulation follows the explicit Euler update

    S_{m+1} = S_m + mu(t_m, S_m) dt + vol(t_m, S_m) sqrt(dt) xi_m

with no higher-order corrections. Noise is addressed positionally per
(seed, grid, step, path, component) through the noise module, so a batch
is a pure function of (model, S0, grid, n_paths, seed): bit-identical
across reruns, chunk sizes and thread counts.

Reductions materialize one value per path and sum once with numpy's
pairwise summation; partial sums are never accumulated across chunks,
which is what keeps results byte-stable under --threads.
"""

from __future__ import annotations

import struct
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import noise
from .errors import NumericalError
from .models import ModelSpec, model_hash

_DEFAULT_MEMORY_LIMIT = 4 << 30  # bytes of path storage allowed in one batch
_CHUNK = 1 << 16                 # paths per work unit when chunking


@dataclass(frozen=True)
class TimeGrid:
    """Uniform time grid t0 + m*dt for m = 0..n_steps.

    Times are always computed as t0 + m*dt, never by repeated addition,
    so the grid carries no accumulated rounding.
    """

    t0: float
    dt: float
    n_steps: int

    def __post_init__(self):
        if not np.isfinite(self.t0):
            raise ValueError("t0 must be finite")
        if not (np.isfinite(self.dt) and self.dt > 0):
            raise ValueError("dt must be positive")
        if int(self.n_steps) < 1 or self.n_steps != int(self.n_steps):
            raise ValueError("n_steps must be a positive integer")

    def time(self, m: int) -> float:
        return self.t0 + m * self.dt

    @property
    def t_end(self) -> float:
        return self.t0 + self.n_steps * self.dt

    def times(self) -> np.ndarray:
        return self.t0 + self.dt * np.arange(self.n_steps + 1)


@dataclass(frozen=True)
class PathBatch:
    """Simulated trajectories: paths[path, step, asset]."""

    grid: TimeGrid
    paths: np.ndarray
    seed: int
    model_hash: str

    def __post_init__(self):
        p = self.paths
        if p.ndim != 3 or p.shape[1] != self.grid.n_steps + 1:
            raise ValueError("paths must have shape (n_paths, n_steps+1, dim)")
        if p.shape[0] >= 1 and not (p[:, 0, :] == p[0, 0, :]).all():
            raise ValueError("all paths must start from the shared initial state")

    @property
    def n_paths(self) -> int:
        return self.paths.shape[0]

    @property
    def dim(self) -> int:
        return self.paths.shape[2]


@dataclass(frozen=True)
class MCEstimate:
    mean: float
    std_error: float
    n_paths: int
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.std_error < 0:
            raise ValueError("std_error must be >= 0")


def _check_finite_step(S: np.ndarray, step: int, lo: int) -> None:
    bad = ~np.isfinite(S)
    if bad.any():
        path = lo + int(np.argwhere(bad)[0][0])
        raise NumericalError(
            f"non-finite state at path {path}, step {step}; "
            "reduce dt or check the model's drift/vol maps")


def evolve_step(model: ModelSpec, t: float, S, xi, dt: float):
    """One Euler update. S: (dim,) or (batch, dim); xi: matching noise.

    Returns S + mu*dt + vol*sqrt(dt)*xi exactly as written.
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    S = np.asarray(S, dtype=float)
    xi = np.asarray(xi, dtype=float)
    single = S.ndim == 1
    Sb = S[None, :] if single else S
    xb = xi[None, :] if single else xi
    if Sb.shape[-1] != model.dim or xb.shape[-1] != model.noise_dim:
        raise ValueError("state/noise dimensions do not match the model")
    mu = model.drift(t, Sb)
    sig = model.vol(t, Sb)
    if not (np.all(np.isfinite(mu)) and np.all(np.isfinite(sig))):
        raise NumericalError(f"model returned non-finite drift/vol at t={t}, S={Sb[0]}")
    if model.noise_dim == 1:
        incr = mu * dt + np.sqrt(dt) * sig[..., 0] * xb
    else:
        incr = mu * dt + np.sqrt(dt) * np.einsum("pnk,pk->pn", sig, xb)
    out = Sb + incr
    return out[0] if single else out


def _euler_inplace(model: ModelSpec, t: float, S: np.ndarray, xi: np.ndarray,
                   dt: float, sqdt: float) -> np.ndarray:
    """Hot-loop Euler update without per-call validation (S is (batch, dim))."""
    mu = model.drift(t, S)
    sig = model.vol(t, S)
    if model.noise_dim == 1:
        return S + mu * dt + sqdt * sig[..., 0] * xi
    return S + mu * dt + sqdt * np.einsum("pnk,pk->pn", sig, xi)


def _initial_state(model: ModelSpec, S0) -> np.ndarray:
    S0 = np.asarray(S0, dtype=float)
    if S0.ndim == 0:
        S0 = np.full(model.dim, float(S0))
    if S0.shape != (model.dim,):
        raise ValueError(f"S0 must be a scalar or a vector of length {model.dim}")
    if not np.all(np.isfinite(S0)):
        raise ValueError("S0 must be finite")
    return S0


def _resolve_threads(threads) -> int:
    if threads is None:
        return 1
    threads = int(threads)
    if threads < 1:
        raise ValueError("threads must be >= 1")
    return threads


def _run_chunks(n_paths: int, threads: int, work) -> None:
    """Apply work(lo, hi) over path chunks, optionally on a thread pool.

    Chunk boundaries are fixed by _CHUNK regardless of thread count; the
    draws themselves are positional, so the partition never matters.
    """
    spans = [(lo, min(lo + _CHUNK, n_paths)) for lo in range(0, n_paths, _CHUNK)]
    if threads == 1 or len(spans) == 1:
        for lo, hi in spans:
            work(lo, hi)
        return
    with ThreadPoolExecutor(max_workers=threads) as pool:
        for result in pool.map(lambda span: work(*span), spans):
            pass


def simulate_paths(model: ModelSpec, S0, grid: TimeGrid, n_paths: int, seed,
                   *, threads=None, memory_limit: int = _DEFAULT_MEMORY_LIMIT) -> PathBatch:
    """Simulate a full batch of Euler paths.

    Deterministic for fixed (model, S0, grid, n_paths, seed); an overflow
    or NaN aborts the whole batch with the offending path and step.
    """
    seed = noise.validate_seed(seed)
    threads = _resolve_threads(threads)
    if n_paths < 1:
        raise ValueError("n_paths must be >= 1")
    S0 = _initial_state(model, S0)
    need = n_paths * (grid.n_steps + 1) * model.dim * 8
    if need > memory_limit:
        raise ValueError(
            f"batch would need {need} bytes of path storage (> {memory_limit}); "
            "reduce n_paths or use simulate_terminal for streaming statistics")
    out = np.empty((n_paths, grid.n_steps + 1, model.dim))
    out[:, 0, :] = S0
    sqdt = np.sqrt(grid.dt)

    def work(lo: int, hi: int) -> None:
        S = out[lo:hi, 0, :].copy()
        for m in range(grid.n_steps):
            xi = noise.normal_block(seed, noise.EULER, grid.n_steps, m,
                                    lo, hi, model.noise_dim)
            S = _euler_inplace(model, grid.time(m), S, xi, grid.dt, sqdt)
            _check_finite_step(S, m + 1, lo)
            out[lo:hi, m + 1, :] = S

    _run_chunks(n_paths, threads, work)
    return PathBatch(grid=grid, paths=out, seed=seed, model_hash=model_hash(model))


def simulate_terminal(model: ModelSpec, S0, grid: TimeGrid, n_paths: int, seed,
                      *, checkpoints=(), threads=None):
    """Streaming variant of simulate_paths keeping only selected steps.

    Returns (terminal, saved) where terminal is (n_paths, dim) at the last
    step and saved maps each requested checkpoint step to its (n_paths,
    dim) snapshot. Draw addressing is identical to simulate_paths, so the
    trajectories agree bit for bit.
    """
    seed = noise.validate_seed(seed)
    threads = _resolve_threads(threads)
    if n_paths < 1:
        raise ValueError("n_paths must be >= 1")
    checkpoints = sorted(set(int(c) for c in checkpoints))
    if checkpoints and (checkpoints[0] < 0 or checkpoints[-1] > grid.n_steps):
        raise ValueError("checkpoints must lie within 0..n_steps")
    S0 = _initial_state(model, S0)
    terminal = np.empty((n_paths, model.dim))
    saved = {c: np.empty((n_paths, model.dim)) for c in checkpoints}
    sqdt = np.sqrt(grid.dt)

    def work(lo: int, hi: int) -> None:
        S = np.broadcast_to(S0, (hi - lo, model.dim)).copy()
        if 0 in saved:
            saved[0][lo:hi] = S
        for m in range(grid.n_steps):
            xi = noise.normal_block(seed, noise.EULER, grid.n_steps, m,
                                    lo, hi, model.noise_dim)
            S = _euler_inplace(model, grid.time(m), S, xi, grid.dt, sqdt)
            _check_finite_step(S, m + 1, lo)
            if m + 1 in saved:
                saved[m + 1][lo:hi] = S
        terminal[lo:hi] = S

    _run_chunks(n_paths, threads, work)
    return terminal, saved


# ---------------------------------------------------------------------------
# Estimation


def _mean_and_se(values: np.ndarray) -> tuple[float, float]:
    n = values.size
    mean = float(np.sum(values) / n)
    if n < 2:
        return mean, 0.0
    var = float(np.sum((values - mean) ** 2) / (n - 1))
    return mean, float(np.sqrt(var / n))


def expectation(f, batch: PathBatch) -> MCEstimate:
    """Estimate E f over the batch; f maps paths (n,steps+1,dim) -> (n,) values."""
    values = np.asarray(f(batch.paths), dtype=float)
    if values.shape != (batch.n_paths,):
        raise ValueError("functional must return one value per path")
    if not np.all(np.isfinite(values)):
        raise NumericalError("functional produced non-finite values")
    mean, se = _mean_and_se(values)
    return MCEstimate(mean=mean, std_error=se, n_paths=batch.n_paths)


def mgf(J, batch: PathBatch) -> MCEstimate:
    """Monte Carlo moment generating function E exp(sum J[m,a] * S[m,a]).

    J is either a dense (n_steps+1, dim) array (or (n_steps+1,) when
    dim == 1) or a mapping {(step, asset): coefficient}.
    """
    n_rows = batch.grid.n_steps + 1
    if isinstance(J, dict):
        exponent = np.zeros(batch.n_paths)
        for key, u in J.items():
            m, a = (key if isinstance(key, tuple) else (key, 0))
            if not (0 <= m <= batch.grid.n_steps and 0 <= a < batch.dim):
                raise ValueError(f"J index {(m, a)} outside the grid")
            exponent += float(u) * batch.paths[:, m, a]
    else:
        Jarr = np.asarray(J, dtype=float)
        if Jarr.ndim == 1 and batch.dim == 1:
            Jarr = Jarr[:, None]
        if Jarr.shape != (n_rows, batch.dim):
            raise ValueError(f"J must have shape ({n_rows}, {batch.dim})")
        exponent = np.einsum("ma,pma->p", Jarr, batch.paths)
    peak = float(np.max(exponent, initial=0.0))
    if peak > 700.0:
        raise NumericalError(f"MGF exponent overflows: max exponent {peak:.6g}")
    mean, se = _mean_and_se(np.exp(exponent))
    return MCEstimate(mean=mean, std_error=se, n_paths=batch.n_paths)


# ---------------------------------------------------------------------------
# Ito and scaling diagnostics


@dataclass(frozen=True)
class ItoCheckReport:
    empirical_drift: float
    predicted_drift: float
    empirical_vol: float
    predicted_vol: float
    z_drift: float
    z_vol: float
    n_paths: int


def _fd_guard(name: str, supplied: float, estimate: float, scale: float) -> None:
    tol = 1e-6 * max(abs(supplied), abs(estimate)) + 1e-9 * scale
    if abs(supplied - estimate) > tol:
        raise ValueError(
            f"supplied {name} = {supplied!r} disagrees with finite difference "
            f"{estimate!r} beyond 1e-6 relative")


def _validate_derivatives(f, dfdt, grad, hess, t0, S0):
    n = S0.size
    f0 = float(f(t0, S0))
    scale = max(1.0, abs(f0))
    ht = 6e-6 * max(1.0, abs(t0))
    _fd_guard("df/dt", dfdt, (float(f(t0 + ht, S0)) - float(f(t0 - ht, S0))) / (2 * ht), scale)
    for j in range(n):
        h = 6e-6 * max(1.0, abs(S0[j]))
        up, dn = S0.copy(), S0.copy()
        up[j] += h
        dn[j] -= h
        _fd_guard(f"df/dS[{j}]", grad[j],
                  (float(f(t0, up)) - float(f(t0, dn))) / (2 * h), scale)
    for j in range(n):
        h = 1e-4 * max(1.0, abs(S0[j]))
        up, dn = S0.copy(), S0.copy()
        up[j] += h
        dn[j] -= h
        est = (float(f(t0, up)) - 2 * f0 + float(f(t0, dn))) / (h * h)
        _fd_guard(f"d2f/dS[{j}]2", hess[j, j], est, scale)
    for j in range(n):
        for l in range(j + 1, n):
            hj = 1e-4 * max(1.0, abs(S0[j]))
            hl = 1e-4 * max(1.0, abs(S0[l]))
            pts = {}
            for sj in (+1, -1):
                for sl in (+1, -1):
                    x = S0.copy()
                    x[j] += sj * hj
                    x[l] += sl * hl
                    pts[sj, sl] = float(f(t0, x))
            est = (pts[1, 1] - pts[1, -1] - pts[-1, 1] + pts[-1, -1]) / (4 * hj * hl)
            _fd_guard(f"d2f/dS[{j}]dS[{l}]", hess[j, l], est, scale)


def ito_check(model: ModelSpec, f, dfdt: float, dfdS, d2fdS2, S0, dt: float,
              n_paths: int, seed, *, t0: float = 0.0) -> ItoCheckReport:
    """Compare the one-step statistics of X = f(t, S) with the second-order
    chain-rule prediction.

    Predicted drift is df/dt + mu . grad f + 1/2 tr(vol vol^T hess f);
    predicted vol is |vol^T grad f|. The supplied derivatives are checked
    against finite differences at (t0, S0) to 1e-6 relative; z-scores
    compare the sample mean/std of dX against prediction*dt and
    prediction*sqrt(dt). f must accept batched states of shape (n, dim)
    and return (n,) values.
    """
    seed = noise.validate_seed(seed)
    if dt <= 0:
        raise ValueError("dt must be positive")
    if n_paths < 2:
        raise ValueError("n_paths must be >= 2")
    S0 = _initial_state(model, S0)
    grad = np.atleast_1d(np.asarray(dfdS, dtype=float))
    hess = np.atleast_2d(np.asarray(d2fdS2, dtype=float))
    if grad.shape != (model.dim,) or hess.shape != (model.dim, model.dim):
        raise ValueError("derivative shapes must match the model dimension")

    def f_point(t, s):
        return np.asarray(f(t, s[None, :]), dtype=float).reshape(())

    _validate_derivatives(f_point, float(dfdt), grad, hess, t0, S0)

    mu = model.drift(t0, S0[None, :])[0]
    sig = model.vol(t0, S0[None, :])[0]
    diffusion = sig @ sig.T
    predicted_drift = float(dfdt + mu @ grad + 0.5 * np.sum(diffusion * hess))
    predicted_vol = float(np.linalg.norm(sig.T @ grad))

    xi = noise.normal_block(seed, noise.EULER, 1, 0, 0, n_paths, model.noise_dim)
    S1 = _euler_inplace(model, t0, np.broadcast_to(S0, (n_paths, model.dim)).copy(),
                        xi, dt, np.sqrt(dt))
    _check_finite_step(S1, 1, 0)
    dX = np.asarray(f(t0 + dt, S1), dtype=float) - float(f(t0, S0[None, :])[0])
    if dX.shape != (n_paths,):
        raise ValueError("f must return one value per path")

    mean, se_mean = _mean_and_se(dX)
    s = float(np.std(dX, ddof=1))
    centered = dX - mean
    m4 = float(np.mean(centered ** 4))
    se_std = float(np.sqrt(max(m4 - s ** 4, 0.0) / (4 * s ** 2 * n_paths))) if s > 0 else 0.0
    z_drift = (mean - predicted_drift * dt) / se_mean if se_mean > 0 else 0.0
    z_vol = (s - predicted_vol * np.sqrt(dt)) / se_std if se_std > 0 else 0.0
    return ItoCheckReport(
        empirical_drift=mean / dt, predicted_drift=predicted_drift,
        empirical_vol=s / np.sqrt(dt), predicted_vol=predicted_vol,
        z_drift=float(z_drift), z_vol=float(z_vol), n_paths=n_paths)


_EXACT_MOMENTS = {
    "bm": lambda p, S0, T: (S0 + p["mu"] * T, p["sigma"] ** 2 * T),
    "gbm": lambda p, S0, T: (S0 * np.exp(p["mu"] * T),
                             S0 ** 2 * np.exp(2 * p["mu"] * T)
                             * np.expm1(p["sigma"] ** 2 * T)),
    "vasicek": lambda p, S0, T: (S0 * np.exp(-p["a"] * T)
                                 + p["b"] * -np.expm1(-p["a"] * T),
                                 p["sigma"] ** 2 * -np.expm1(-2 * p["a"] * T)
                                 / (2 * p["a"])),
}


@dataclass(frozen=True)
class ScalingResolution:
    dt: float
    n_steps: int
    mean: float
    variance: float
    se_mean: float
    se_variance: float
    bias_mean: float | None
    bias_variance: float | None


@dataclass(frozen=True)
class ScalingReport:
    coarse: ScalingResolution
    fine: ScalingResolution
    z_mean: float
    z_variance: float


def scaling_check(model: ModelSpec, S0, T: float, dt: float, refine_factor: int,
                  n_paths: int, seed, *, threads=None) -> ScalingReport:
    """Terminal mean/variance at dt versus dt/refine_factor.

    The two resolutions use independent noise streams; the z-scores test
    whether their terminal moments differ beyond Monte Carlo noise. For
    built-in models the bias against the exact terminal moments is also
    reported.
    """
    if model.dim != 1:
        raise ValueError("scaling_check handles one-dimensional models")
    if int(refine_factor) != refine_factor or refine_factor < 2:
        raise ValueError("refine_factor must be an integer >= 2")
    steps = T / dt
    if abs(steps - round(steps)) > 1e-9 * max(1.0, steps) or round(steps) < 1:
        raise ValueError("T/dt must be a positive integer")
    n1 = round(steps)
    exact = _EXACT_MOMENTS.get(model.kind)
    params = model.config.get("params", {}) if model.config else {}

    resolutions = []
    for n_steps in (n1, n1 * int(refine_factor)):
        grid = TimeGrid(t0=0.0, dt=T / n_steps, n_steps=n_steps)
        terminal, _ = simulate_terminal(model, S0, grid, n_paths, seed, threads=threads)
        v = terminal[:, 0]
        mean, se_mean = _mean_and_se(v)
        var = float(np.var(v, ddof=1))
        centered = v - mean
        m4 = float(np.mean(centered ** 4))
        se_var = float(np.sqrt(max(m4 - var ** 2, 0.0) / n_paths))
        bias_m = bias_v = None
        if exact is not None and params:
            try:
                em, ev = exact(params, float(np.asarray(S0).reshape(-1)[0]), T)
                bias_m, bias_v = mean - float(em), var - float(ev)
            except (TypeError, KeyError):
                pass  # vector-valued params: no scalar closed form
        resolutions.append(ScalingResolution(
            dt=grid.dt, n_steps=n_steps, mean=mean, variance=var,
            se_mean=se_mean, se_variance=se_var,
            bias_mean=bias_m, bias_variance=bias_v))

    coarse, fine = resolutions
    dm = np.hypot(coarse.se_mean, fine.se_mean)
    dv = np.hypot(coarse.se_variance, fine.se_variance)
    z_mean = (coarse.mean - fine.mean) / dm if dm > 0 else 0.0
    z_var = (coarse.variance - fine.variance) / dv if dv > 0 else 0.0
    return ScalingReport(coarse=coarse, fine=fine,
                         z_mean=float(z_mean), z_variance=float(z_var))


def gbm_exact_terminal(mu: float, sigma: float, S0: float, T: float,
                       n_paths: int, seed) -> np.ndarray:
    """Exact terminal draws S_T = S0 exp((mu - sigma^2/2) T + sigma sqrt(T) z).

    Bypasses time stepping entirely; valid only when the target functional
    depends on the terminal value alone. Uses a noise substream disjoint
    from the path simulator, so mixing both in one run never reuses draws.
    """
    seed = noise.validate_seed(seed)
    if T <= 0:
        raise ValueError("T must be positive")
    if n_paths < 1:
        raise ValueError("n_paths must be >= 1")
    z = noise.normal_block(seed, noise.TERMINAL, 1, 0, 0, n_paths, 1)[:, 0]
    return float(S0) * np.exp((mu - 0.5 * sigma * sigma) * T
                              + sigma * np.sqrt(T) * z)


# ---------------------------------------------------------------------------
# Export

_BINARY_MAGIC = b"SPB1"


def fmt17(x: float) -> str:
    """Render a float with 17 significant digits (round-trip safe)."""
    return f"{float(x):.17g}"


def export_paths_csv(batch: PathBatch, fh) -> None:
    """Columnar CSV export: path_id, step, asset, value."""
    fh.write("path_id,step,asset,value\n")
    n, steps, dim = batch.paths.shape
    for p in range(n):
        for m in range(steps):
            for a in range(dim):
                fh.write(f"{p},{m},{a},{fmt17(batch.paths[p, m, a])}\n")


def export_paths_binary(batch: PathBatch, path: str) -> None:
    """Binary layout: magic, counts, grid, seed, model hash, then
    little-endian float64 values in (path, step, asset) order.
    """
    header = struct.pack(
        "<4sQQQddQ", _BINARY_MAGIC, batch.n_paths, batch.grid.n_steps,
        batch.dim, batch.grid.t0, batch.grid.dt, batch.seed)
    digest = batch.model_hash.encode("ascii")[:64].ljust(64, b"0")
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(digest)
        fh.write(np.ascontiguousarray(batch.paths, dtype="<f8").tobytes())


def read_paths_binary(path: str) -> PathBatch:
    with open(path, "rb") as fh:
        head = fh.read(struct.calcsize("<4sQQQddQ"))
        magic, n_paths, n_steps, dim, t0, dt, seed = struct.unpack("<4sQQQddQ", head)
        if magic != _BINARY_MAGIC:
            raise ValueError("not a path-batch binary file")
        digest = fh.read(64).decode("ascii")
        data = np.frombuffer(fh.read(), dtype="<f8")
    paths = data.reshape(n_paths, n_steps + 1, dim).astype(float)
    return PathBatch(grid=TimeGrid(t0=t0, dt=dt, n_steps=n_steps),
                     paths=paths, seed=seed, model_hash=digest)
