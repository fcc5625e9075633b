"""Gaussian field generators: power-law lattice fields and Matern processes."""

from __future__ import annotations

import numpy as np
from scipy.spatial.distance import cdist
from scipy.special import gamma as gamma_fn
from scipy.special import kv

from .._rng import NS_MODEL, stream
from ..core import CovKernel
from ..errors import ParameterError


def lattice_sites(n: int, dim: int, spacing: float) -> np.ndarray:
    """First n sites of a `spacing`-spaced lattice in 1 or 2 dimensions."""
    if dim == 1:
        return (np.arange(n, dtype=np.float64) * spacing)[:, None]
    if dim == 2:
        side = int(np.ceil(np.sqrt(n)))
        gx, gy = np.meshgrid(np.arange(side), np.arange(side), indexing="ij")
        pts = np.column_stack([gx.ravel(), gy.ravel()]).astype(np.float64)[:n]
        return pts * spacing
    raise ParameterError("lattice dimension must be 1 or 2")


def grid_locations(n: int, spacing: float = 1.0) -> np.ndarray:
    return lattice_sites(n, 2, spacing)


def _chol_or_raise(cov: np.ndarray, what: str) -> np.ndarray:
    try:
        return np.linalg.cholesky(cov)
    except np.linalg.LinAlgError:
        eigmin = float(np.linalg.eigvalsh(cov).min())
        raise ParameterError(
            f"{what} covariance matrix is not positive definite "
            f"(min eigenvalue {eigmin:.3e}; would need jitter > {max(-eigmin, 0.0):.3e})"
        ) from None


def gaussian_values(chol: np.ndarray, seeds: np.ndarray) -> np.ndarray:
    """(R, n) correlated Gaussian draws from a Cholesky factor."""
    n = chol.shape[0]
    out = np.empty((seeds.size, n))
    for r, seed in enumerate(seeds):
        out[r] = chol @ stream(int(seed), NS_MODEL).standard_normal(n)
    return out


# ------------------------------------------------------------ lattice field


def _lattice_params(params: dict) -> tuple[int, float, float, float]:
    dim = int(params["d"])
    rho0 = float(params["rho0"])
    delta = float(params["delta"])
    sigma2 = float(params.get("sigma2", 1.0))
    if dim not in (1, 2):
        raise ParameterError("d must be 1 or 2")
    if rho0 <= 0 or delta <= 0 or sigma2 <= 0:
        raise ParameterError("rho0, delta and sigma2 must be positive")
    return dim, rho0, delta, sigma2


def lattice_field_locations(params: dict, n: int) -> np.ndarray:
    dim, rho0, _, _ = _lattice_params(params)
    return lattice_sites(n, dim, rho0)


def lattice_field_cov(params: dict, dist: np.ndarray) -> np.ndarray:
    """Power-law decay in Chebyshev distance: sigma2 * (1 + d/rho0)^-(dim+delta)."""
    dim, rho0, delta, sigma2 = _lattice_params(params)
    return sigma2 * (1.0 + np.asarray(dist) / rho0) ** (-(dim + delta))


def lattice_field_matrix(params: dict, n: int) -> np.ndarray:
    pts = lattice_field_locations(params, n)
    dist = cdist(pts, pts, metric="chebyshev")
    return lattice_field_cov(params, dist)


def lattice_field_chol(params: dict, n: int) -> np.ndarray:
    return _chol_or_raise(lattice_field_matrix(params, n), "lattice field")


def lattice_field_kernel(params: dict, n: int, p: int = 1) -> CovKernel:
    pts = lattice_field_locations(params, n)

    def eval_pairs(a, b):
        dist = np.abs(pts[a] - pts[b]).max(axis=1)
        return lattice_field_cov(params, dist)

    return CovKernel(kind="analytic", eval_pairs=eval_pairs)


# ------------------------------------------------------------------ Matern


def matern_covariance(
    h,
    sigma2: float,
    phi: float,
    nu: float,
    method: str = "auto",
) -> np.ndarray:
    """Matern covariance C(h) = sigma2 * 2^{1-nu} (sqrt(2) phi h)^nu K_nu(...) / Gamma(nu).

    `method="auto"` uses the half-integer closed forms at nu in {1/2, 3/2, 5/2}
    and the modified Bessel function otherwise; `method="bessel"` forces the
    Bessel path (used to cross-check the closed forms).
    """
    h = np.asarray(h, dtype=np.float64)
    s = np.sqrt(2.0) * phi * h
    if method == "auto" and nu in (0.5, 1.5, 2.5):
        if nu == 0.5:
            shape = np.exp(-s)
        elif nu == 1.5:
            shape = (1.0 + s) * np.exp(-s)
        else:
            shape = (1.0 + s + s * s / 3.0) * np.exp(-s)
        return sigma2 * shape
    with np.errstate(invalid="ignore"):
        out = sigma2 * (2.0 ** (1.0 - nu) / gamma_fn(nu)) * s**nu * kv(nu, s)
    return np.where(h == 0.0, sigma2, out)


def _matern_params(params: dict) -> tuple[float, float, float, float]:
    sigma2 = float(params.get("sigma2", 1.0))
    phi = float(params["phi"])
    nu = float(params["nu"])
    tau2 = float(params.get("tau2", 0.0))
    if sigma2 <= 0 or phi <= 0 or nu <= 0 or tau2 < 0:
        raise ParameterError("need sigma2, phi, nu > 0 and tau2 >= 0")
    return sigma2, phi, nu, tau2


def matern_locations(params: dict, n: int) -> np.ndarray:
    if "locations" in params:
        return np.asarray(params["locations"], dtype=np.float64)
    spacing = float(params.get("h0", 1.0))
    return grid_locations(n, spacing)


def check_min_separation(locations: np.ndarray, h0: float) -> float:
    from scipy.spatial import cKDTree

    tree = cKDTree(locations)
    d, _ = tree.query(locations, k=2)
    min_sep = float(d[:, 1].min()) if locations.shape[0] > 1 else np.inf
    if min_sep < h0 * (1.0 - 1e-12):
        raise ParameterError(f"minimum location separation {min_sep:.6g} below h0={h0:.6g}")
    return min_sep


def matern_matrix(params: dict, n: int) -> np.ndarray:
    sigma2, phi, nu, tau2 = _matern_params(params)
    pts = matern_locations(params, n)
    if "h0" in params:
        check_min_separation(pts, float(params["h0"]))
    dist = cdist(pts, pts)
    cov = matern_covariance(dist, sigma2, phi, nu)
    return cov + tau2 * np.eye(pts.shape[0])


def matern_chol(params: dict, n: int) -> np.ndarray:
    return _chol_or_raise(matern_matrix(params, n), "Matern")


def matern_kernel(params: dict, n: int, p: int = 1) -> CovKernel:
    sigma2, phi, nu, tau2 = _matern_params(params)
    pts = matern_locations(params, n)

    def eval_pairs(a, b):
        dist = np.linalg.norm(pts[a] - pts[b], axis=1)
        out = matern_covariance(dist, sigma2, phi, nu)
        return out + tau2 * (a == b)

    return CovKernel(kind="analytic", eval_pairs=eval_pairs)
