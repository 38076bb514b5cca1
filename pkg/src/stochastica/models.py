"""Model dynamics: drift/volatility maps and correlated-noise construction.

A ModelSpec fixes the discrete-time dynamics

    S_{m+1} = S_m + mu(t_m, S_m) dt + vol(t_m, S_m) sqrt(dt) xi_m

with xi_m a vector of independent standard Gaussians. Drift maps take
arrays of shape (..., dim) and return the same shape; vol maps return
(..., dim, noise_dim). Built-in maps are pure functions of (t, S).

Correlated multi-asset noise is handled by diagonalizing the correlation
matrix and scaling eigenvectors into a volatility matrix Z with
(Z Z^T)_{ab} = z_a z_b C_{ab}.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

_BUILTIN_KINDS = ("bm", "gbm", "vasicek", "custom-grid", "custom")


@dataclass(frozen=True)
class ModelSpec:
    """Drift and volatility maps defining the simulated dynamics.

    ``price_rate`` is set for price-homogeneous models (drift equal to
    rate(t) * S); pricing uses it to swap the physical drift for the
    risk-free one. ``config`` is the JSON-style description hashed into
    output metadata.
    """

    dim: int
    noise_dim: int
    drift: Callable[[float, np.ndarray], np.ndarray]
    vol: Callable[[float, np.ndarray], np.ndarray]
    kind: str = "custom"
    config: dict = field(default_factory=dict)
    price_rate: Callable[[float], float] | None = None
    risk_neutral: bool = False

    def __post_init__(self):
        if int(self.dim) < 1 or int(self.noise_dim) < 1:
            raise ValueError("dim and noise_dim must be positive")
        if self.kind not in _BUILTIN_KINDS:
            raise ValueError(f"kind must be one of {_BUILTIN_KINDS}")

    # Scalar-grid conveniences for the 1-D solvers -------------------------

    def mu1(self, t: float, s: np.ndarray) -> np.ndarray:
        """Drift on an arbitrary-shaped array of scalar states (dim == 1)."""
        if self.dim != 1:
            raise ValueError("mu1 requires a one-dimensional model")
        s = np.asarray(s, dtype=float)
        return self.drift(t, s[..., None])[..., 0]

    def sigma1(self, t: float, s: np.ndarray) -> np.ndarray:
        """Volatility on an arbitrary-shaped array of scalar states (dim == 1)."""
        if self.dim != 1:
            raise ValueError("sigma1 requires a one-dimensional model")
        s = np.asarray(s, dtype=float)
        return self.vol(t, s[..., None])[..., 0, 0]


def model_hash(model: "ModelSpec | dict") -> str:
    """SHA-256 of the canonical JSON model description."""
    config = model.config if isinstance(model, ModelSpec) else model
    if not config:
        config = {"type": "custom"}
    blob = json.dumps(config, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode("utf-8")).hexdigest()


def _require_sigma(sigma: float) -> float:
    sigma = float(sigma)
    if not math.isfinite(sigma) or sigma < 0:
        raise ValueError("sigma must be finite and >= 0")
    return sigma


def make_bm(mu: float, sigma: float) -> ModelSpec:
    """Arithmetic Brownian motion: constant drift and volatility."""
    mu = float(mu)
    sigma = _require_sigma(sigma)

    def drift(t, S):
        return np.full_like(S, mu)

    def vol(t, S):
        return np.full(S.shape + (1,), sigma)

    return ModelSpec(dim=1, noise_dim=1, drift=drift, vol=vol, kind="bm",
                     config={"type": "bm", "params": {"mu": mu, "sigma": sigma}})


def make_gbm(mu: float, sigma: float) -> ModelSpec:
    """Geometric Brownian motion: drift mu*S, volatility sigma*S."""
    mu = float(mu)
    sigma = _require_sigma(sigma)

    def drift(t, S):
        return mu * S

    def vol(t, S):
        return sigma * S[..., None]

    return ModelSpec(dim=1, noise_dim=1, drift=drift, vol=vol, kind="gbm",
                     config={"type": "gbm", "params": {"mu": mu, "sigma": sigma}},
                     price_rate=lambda t: mu)


def make_vasicek(a: float, b: float, sigma: float) -> ModelSpec:
    """Mean-reverting rate model: drift a*(b - S), constant volatility."""
    a = float(a)
    b = float(b)
    sigma = _require_sigma(sigma)
    if not a > 0:
        raise ValueError("mean-reversion speed a must be positive")

    def drift(t, S):
        return a * (b - S)

    def vol(t, S):
        return np.full(S.shape + (1,), sigma)

    return ModelSpec(dim=1, noise_dim=1, drift=drift, vol=vol, kind="vasicek",
                     config={"type": "vasicek", "params": {"a": a, "b": b, "sigma": sigma}})


def make_custom_grid(s_values, drift_values, vol_values) -> ModelSpec:
    """1-D model with drift/vol tabulated on a price grid (linear interpolation)."""
    s = np.asarray(s_values, dtype=float)
    dv = np.asarray(drift_values, dtype=float)
    vv = np.asarray(vol_values, dtype=float)
    if s.ndim != 1 or s.size < 2 or np.any(np.diff(s) <= 0):
        raise ValueError("s_values must be a strictly increasing 1-D grid")
    if dv.shape != s.shape or vv.shape != s.shape:
        raise ValueError("drift_values and vol_values must match s_values in shape")
    if not (np.all(np.isfinite(dv)) and np.all(np.isfinite(vv))):
        raise ValueError("tabulated drift/vol must be finite")
    if np.any(vv < 0):
        raise ValueError("tabulated vol must be >= 0")

    def drift(t, S):
        return np.interp(S, s, dv)

    def vol(t, S):
        return np.interp(S, s, vv)[..., None]

    config = {"type": "custom-grid",
              "params": {"s": s.tolist(), "drift": dv.tolist(), "vol": vv.tolist()}}
    return ModelSpec(dim=1, noise_dim=1, drift=drift, vol=vol,
                     kind="custom-grid", config=config)


# ---------------------------------------------------------------------------
# Correlated noise


@dataclass(frozen=True)
class CovarianceSpec:
    """A validated symmetric noise-correlation matrix."""

    matrix: np.ndarray

    def __post_init__(self):
        c = np.array(self.matrix, dtype=float)
        if c.ndim != 2 or c.shape[0] != c.shape[1]:
            raise ValueError("covariance must be a square matrix")
        if not np.all(np.isfinite(c)):
            raise ValueError("covariance entries must be finite")
        scale = max(1.0, float(np.abs(c).max()))
        if float(np.abs(c - c.T).max()) > 1e-12 * scale:
            raise ValueError("covariance must be symmetric to 1e-12")
        c = 0.5 * (c + c.T)
        c.setflags(write=False)
        object.__setattr__(self, "matrix", c)


@dataclass(frozen=True)
class EigenDecomposition:
    """Spectral factors of a covariance: descending eigenvalues, orthonormal columns.

    ``rank`` counts the strictly positive eigenvalues after near-zero
    clamping; downstream noise construction only uses that many columns.
    """

    eigenvalues: np.ndarray
    eigenvectors: np.ndarray
    rank: int


def diagonalize_covariance(cov) -> EigenDecomposition:
    """Eigendecompose a covariance, clamping near-zero eigenvalues to 0.

    Eigenvalues are returned sorted descending. A negative eigenvalue
    beyond -1e-10 * max|lambda| means the input is not a covariance and
    raises.
    """
    spec = cov if isinstance(cov, CovarianceSpec) else CovarianceSpec(np.asarray(cov))
    lam, vec = np.linalg.eigh(spec.matrix)
    lam = lam[::-1].copy()
    vec = vec[:, ::-1].copy()
    scale = max(float(np.abs(lam).max()), 1e-300)
    if lam.min() < -1e-10 * scale:
        raise ValueError(
            f"matrix is not positive semidefinite: eigenvalue {lam.min()!r}")
    lam[np.abs(lam) <= 1e-12 * scale] = 0.0
    lam[lam < 0] = 0.0
    for arr in (lam, vec):
        arr.setflags(write=False)
    return EigenDecomposition(eigenvalues=lam, eigenvectors=vec,
                              rank=int(np.count_nonzero(lam > 0)))


def volatility_matrix(z, eig: EigenDecomposition) -> np.ndarray:
    """Scale eigenvectors into the noise matrix Z with (ZZ^T)_ab = z_a z_b C_ab.

    Z_{ak} = z_a * sqrt(lambda_k) * v_a^{(k)}, keeping only the `rank`
    strictly positive modes, so rank-deficient correlation simply yields
    fewer noise components.
    """
    z = np.asarray(z, dtype=float)
    n = eig.eigenvectors.shape[0]
    if z.shape != (n,):
        raise ValueError(f"z must have length {n}")
    k = eig.rank
    return z[:, None] * eig.eigenvectors[:, :k] * np.sqrt(eig.eigenvalues[:k])[None, :]


def _correlated(mus, sigmas, correlation, geometric: bool, type_name: str) -> ModelSpec:
    mu = np.asarray(mus, dtype=float)
    sig = np.asarray(sigmas, dtype=float)
    if mu.ndim != 1 or mu.shape != sig.shape:
        raise ValueError("mus and sigmas must be equal-length vectors")
    if np.any(sig < 0):
        raise ValueError("sigmas must be >= 0")
    eig = diagonalize_covariance(correlation)
    n = mu.size
    if eig.eigenvectors.shape[0] != n:
        raise ValueError("correlation size must match the number of assets")
    Z = volatility_matrix(sig, eig)
    k = max(Z.shape[1], 1)
    if Z.shape[1] == 0:
        Z = np.zeros((n, 1))

    if geometric:
        def drift(t, S):
            return mu * S

        def vol(t, S):
            return S[..., None] * Z
    else:
        def drift(t, S):
            return np.broadcast_to(mu, S.shape).copy()

        def vol(t, S):
            return np.broadcast_to(Z, S.shape + (k,)).copy()

    config = {"type": type_name,
              "params": {"mu": mu.tolist(), "sigma": sig.tolist()},
              "correlation": np.asarray(correlation, dtype=float).tolist()}
    return ModelSpec(dim=n, noise_dim=k, drift=drift, vol=vol,
                     kind=type_name, config=config)


def make_correlated_bm(mus, sigmas, correlation) -> ModelSpec:
    """Multi-asset Brownian motion with correlated noise."""
    return _correlated(mus, sigmas, correlation, geometric=False, type_name="bm")


def make_correlated_gbm(mus, sigmas, correlation) -> ModelSpec:
    """Multi-asset geometric Brownian motion with correlated noise."""
    return _correlated(mus, sigmas, correlation, geometric=True, type_name="gbm")


# ---------------------------------------------------------------------------
# JSON interface


def load_model_config(doc: dict) -> ModelSpec:
    """Build a ModelSpec from {"type": ..., "params": {...}, "correlation": ...}."""
    if not isinstance(doc, dict) or "type" not in doc:
        raise ValueError("model config must be an object with a 'type' key")
    kind = doc["type"]
    params = doc.get("params", {})
    if not isinstance(params, dict):
        raise ValueError("model params must be an object")
    correlation = doc.get("correlation")

    if kind in ("bm", "gbm"):
        mu, sigma = params.get("mu"), params.get("sigma")
        if mu is None or sigma is None:
            raise ValueError(f"params.mu and params.sigma required for type {kind!r}")
        if correlation is not None:
            maker = make_correlated_bm if kind == "bm" else make_correlated_gbm
            return maker(mu, sigma, correlation)
        if kind == "bm":
            return make_bm(mu, sigma)
        return make_gbm(mu, sigma)
    if kind == "vasicek":
        if correlation is not None:
            raise ValueError("correlated vasicek models are not supported")
        try:
            return make_vasicek(params["a"], params["b"], params["sigma"])
        except KeyError as missing:
            raise ValueError(f"params.{missing.args[0]} required for type 'vasicek'") from None
    if kind == "custom-grid":
        try:
            return make_custom_grid(params["s"], params["drift"], params["vol"])
        except KeyError as missing:
            raise ValueError(f"params.{missing.args[0]} required for type 'custom-grid'") from None
    raise ValueError(f"unknown model type {kind!r}")
