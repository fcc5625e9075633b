"""Time-series generators: M-dependent moving averages and the Bernoulli AR(1)."""

from __future__ import annotations

import numpy as np
from scipy.signal import lfilter

from .._rng import NS_MODEL, stream
from ..core import CovKernel, SampleArray
from ..errors import ParameterError

_EPS = np.finfo(np.float64).eps


def draw_innovations(rng: np.random.Generator, law: str, size) -> np.ndarray:
    """Mean-zero, unit-variance i.i.d. innovations."""
    if law == "normal":
        return rng.standard_normal(size)
    if law == "uniform":
        return rng.uniform(-np.sqrt(3.0), np.sqrt(3.0), size)
    if law == "rademacher":
        return rng.integers(0, 2, size).astype(np.float64) * 2.0 - 1.0
    raise ParameterError(f"unknown innovation law {law!r}")


# ------------------------------------------------------------- M-dependent


def _ma_weights(params: dict) -> np.ndarray:
    weights = np.asarray(params["weights"], dtype=np.float64)
    m_lag = int(params["M"])
    if m_lag < 0:
        raise ParameterError("lag M must be nonnegative")
    if weights.shape != (m_lag + 1,) or not np.all(np.isfinite(weights)):
        raise ParameterError("weights must be finite with length M + 1")
    return weights


def m_dependent_values(params: dict, n: int, seeds: np.ndarray) -> np.ndarray:
    """(R, n) moving-average draws, one Philox stream per replication seed."""
    weights = _ma_weights(params)
    m_lag = weights.size - 1
    law = params.get("innovation", "normal")
    eps = np.empty((seeds.size, n + m_lag))
    for r, seed in enumerate(seeds):
        eps[r] = draw_innovations(stream(int(seed), NS_MODEL), law, n + m_lag)
    out = lfilter(weights, [1.0], eps, axis=1)
    return np.ascontiguousarray(out[:, m_lag:])


def m_dependent_kernel(params: dict, n: int, p: int = 1) -> CovKernel:
    weights = _ma_weights(params)
    m_lag = weights.size - 1
    # cov at lag L: sum_l a_l a_{l+L}; exactly zero beyond M.
    acov = np.zeros(n)
    for lag in range(m_lag + 1):
        acov[lag] = float(weights[: weights.size - lag] @ weights[lag:])

    def eval_pairs(a, b):
        lag = np.abs(a - b)
        return np.where(lag <= m_lag, acov[np.minimum(lag, m_lag)], 0.0)

    return CovKernel(kind="analytic", eval_pairs=eval_pairs)


def m_dependent_positive(params: dict) -> bool:
    weights = _ma_weights(params)
    nz = weights[weights != 0]
    return bool(nz.size == 0 or np.all(nz > 0) or np.all(nz < 0))


# ------------------------------------------------------------- Andrews AR(1)


def _andrews_params(params: dict) -> tuple[float, float, int]:
    rho = float(params["rho"])
    q = float(params["q"])
    if not (0.0 < rho <= 0.5):
        raise ParameterError("rho must lie in (0, 1/2]")
    if not (0.0 < q < 1.0):
        raise ParameterError("q must lie in (0, 1)")
    burn = params.get("burn_in")
    if burn is None:
        # Truncation bias of the burn-in recursion is rho^burn * range, far
        # below 1e-12 at this depth.
        burn = int(np.ceil(64.0 * np.log(1.0 / _EPS) / np.log(1.0 / rho)))
    return rho, q, int(burn)


def andrews_values(params: dict, n: int, seeds: np.ndarray) -> np.ndarray:
    """(R, n) de-meaned Bernoulli-innovation AR(1) draws."""
    rho, q, burn = _andrews_params(params)
    mean = q / (1.0 - rho)
    out = np.empty((seeds.size, n))
    # The burn-in makes the innovation matrix much wider than the output;
    # chunking the replications keeps the temporaries bounded (~0.5 GB).
    chunk = max(1, (1 << 25) // (burn + n))
    for lo in range(0, seeds.size, chunk):
        block = seeds[lo : lo + chunk]
        eps = np.empty((block.size, burn + n))
        for r, seed in enumerate(block):
            eps[r] = stream(int(seed), NS_MODEL).random(burn + n) < q
        zi = np.full((block.size, 1), rho * mean)
        x, _ = lfilter([1.0], [1.0, -rho], eps, axis=1, zi=zi)
        out[lo : lo + block.size] = x[:, burn:]
    return out - mean


def andrews_kernel(params: dict, n: int, p: int = 1) -> CovKernel:
    rho, q, _ = _andrews_params(params)
    var = q * (1.0 - q) / (1.0 - rho * rho)

    def eval_pairs(a, b):
        return var * rho ** np.abs(a - b)

    return CovKernel(kind="analytic", eval_pairs=eval_pairs)


def andrews_series_values(params: dict, n: int, seeds: np.ndarray, terms: int = 200) -> np.ndarray:
    """Truncated-series construction (distributional cross-check for the recursion)."""
    rho, q, _ = _andrews_params(params)
    mean_trunc = q * (1.0 - rho**terms) / (1.0 - rho)
    coeffs = rho ** np.arange(terms)[::-1]
    out = np.empty((seeds.size, n))
    for r, seed in enumerate(seeds):
        eps = stream(int(seed), NS_MODEL).random(terms + n - 1) < q
        out[r] = np.convolve(eps.astype(np.float64), coeffs, mode="valid")
    return out - mean_trunc


def wrap_sample(values: np.ndarray, model_id: str, seed: int, positive: bool) -> SampleArray:
    return SampleArray(
        n=values.shape[0],
        p=1,
        values=values[:, None] if values.ndim == 1 else values,
        model_id=model_id,
        seed=int(seed),
        positively_associated=positive,
    )
