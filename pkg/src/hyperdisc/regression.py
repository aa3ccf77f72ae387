"""Kernel ridge regression of a target on a signal kernel plus white noise.

For a Gram matrix K, nugget gamma and target Y the representer coefficients
are rho = (K + gamma I)^{-1} Y. The explained variance splits into the
signal activation V(s) = rho^T K rho and the noise activation
V(n) = gamma rho^T rho; their ratio V(n) / (V(s) + V(n)) is the
noise-to-signal ratio used throughout.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Hashable

import numpy as np
import scipy.linalg
from scipy.optimize import minimize_scalar

from .kernels import GramBundle
from .spectral import ReducedData, kpca_reduce, ols_residual

GAMMA_FLOOR = 1e-10
GRID_POINTS = 200


class RegressionError(ArithmeticError):
    pass


@dataclass
class RegressionResult:
    rho: np.ndarray
    gamma: float
    v_signal: float
    v_noise: float
    n2s: float
    activations: dict[Hashable, float] = field(default_factory=dict)


@dataclass(frozen=True)
class GammaChoice:
    value: float
    method: str  # ols_residual | spectrum_variance | spectrum_median
    diagnostics: dict = field(default_factory=dict)


def fit(k: np.ndarray, y: np.ndarray, gamma: float) -> RegressionResult:
    y = np.asarray(y, dtype=float)
    if gamma <= 0:
        raise RegressionError("gamma must be positive")
    if not np.any(y):
        raise RegressionError("target is identically zero")
    a = k + gamma * np.eye(len(y))
    try:
        rho = scipy.linalg.cho_solve(scipy.linalg.cho_factor(a), y)
    except np.linalg.LinAlgError:
        try:
            rho = np.linalg.solve(a, y)
        except np.linalg.LinAlgError as exc:
            raise RegressionError(f"singular system: {exc}") from exc
    v_s = max(float(rho @ k @ rho), 0.0)
    v_n = float(gamma * rho @ rho)
    return RegressionResult(rho, gamma, v_s, v_n, v_n / (v_s + v_n))


def _ratio_terms(red: ReducedData, gamma: float) -> tuple[float, float]:
    w = gamma / (gamma + red.eigenvalues)
    p2 = red.projections**2
    num = float(np.sum(w * w * p2)) + red.tail_energy
    den = float(np.sum(w * p2)) + red.tail_energy
    return num, den


def noise_to_signal(k: np.ndarray | ReducedData, y: np.ndarray | None, gamma: float) -> float:
    """sum w_i^2 Ybar_i^2 / sum w_i Ybar_i^2 with w_i = gamma / (gamma + lambda_i)."""
    red = k if isinstance(k, ReducedData) else kpca_reduce(k, y, epsilon=0.0)
    num, den = _ratio_terms(red, gamma)
    if den <= 0:
        raise RegressionError("target has no energy in the eigenbasis")
    return min(max(num / den, 0.0), 1.0)


def activations_from_spectrum(red: ReducedData, gamma: float) -> tuple[float, float]:
    """(V(s), V(n)) computed in the eigenbasis."""
    lam = red.eigenvalues
    p2 = red.projections**2
    v_s = float(np.sum(lam * p2 / (lam + gamma) ** 2))
    v_n = float(gamma * np.sum(p2 / (lam + gamma) ** 2)) + red.tail_energy / gamma
    return v_s, v_n


def signal_coefficients(red: ReducedData, gamma: float) -> np.ndarray:
    """Component of rho outside the kernel null space.

    The null-space part of rho contributes nothing to rho^T K_t rho for any
    PSD summand K_t of K, so it is dropped.
    """
    if red.eigenvectors is None:
        raise RegressionError("reduced data carries no eigenvectors")
    return red.eigenvectors @ (red.projections / (red.eigenvalues + gamma))


def activations(result: RegressionResult, bundle: GramBundle) -> dict[Hashable, float]:
    """p(t) = rho^T K_t rho / rho^T K rho for every sub-kernel in the bundle."""
    rho = result.rho
    total = float(rho @ bundle.full @ rho)
    if total <= 0:
        raise RegressionError("no signal to attribute (V(s) = 0)")
    return {t: float(rho @ kt @ rho) / total for t, kt in bundle.sub_grams.items()}


# ------------------------------------------------------------ nugget choice


def gamma_from_features(features: np.ndarray, y: np.ndarray) -> GammaChoice:
    """Least-squares residual of y on the feature rows, floored at 1e-10 N."""
    y = np.asarray(y, dtype=float)
    res = ols_residual(features, y)
    floor = GAMMA_FLOOR * len(y)
    return GammaChoice(max(res, floor), "ols_residual", {"residual": res, "floored": res < floor})


def _omega_variance(log_gamma: np.ndarray, lam: np.ndarray, n_zero: int) -> np.ndarray:
    g = np.exp(np.atleast_1d(log_gamma))[:, None]
    w = g / (g + lam[None, :])
    n = lam.size + n_zero
    s1 = w.sum(axis=1) + n_zero
    s2 = (w * w).sum(axis=1) + n_zero
    return s2 / n - (s1 / n) ** 2


def gamma_from_spectrum(eigenvalues: np.ndarray, n_zero: int = 0) -> GammaChoice:
    """Pick gamma maximizing the spread of the eigenvalues of gamma (K + gamma I)^{-1}.

    ``eigenvalues`` are the nonzero eigenvalues of K; ``n_zero`` counts the
    zero ones, whose omega is 1 for every gamma.
    """
    lam = np.asarray(eigenvalues, dtype=float)
    lam = lam[lam > 0]
    if lam.size == 0:
        raise RegressionError("all eigenvalues are zero")
    med = float(np.median(lam))
    lo, hi = float(lam.min()) / 10.0, float(lam.max()) * 10.0
    hist = lambda g: np.histogram(  # noqa: E731
        np.concatenate([g / (g + lam), np.ones(n_zero)]), bins=10, range=(0.0, 1.0)
    )[0].tolist()
    if lam.max() <= lam.min() * (1 + 1e-12):
        return GammaChoice(med, "spectrum_median", {"histogram": hist(med)})

    grid = np.linspace(np.log(lo), np.log(hi), GRID_POINTS)
    var = _omega_variance(grid, lam, n_zero)
    i = int(np.argmax(var))
    best_log, best_var = grid[i], float(var[i])
    # golden-section needs a strict bracket; on a flat top the grid point stands
    if 0 < i < GRID_POINTS - 1 and var[i] > max(var[i - 1], var[i + 1]):
        f = lambda t: -float(_omega_variance(np.array([t]), lam, n_zero)[0])  # noqa: E731
        res = minimize_scalar(f, bracket=(grid[i - 1], grid[i], grid[i + 1]), method="golden")
        if res.success and -res.fun >= best_var:
            best_log, best_var = float(res.x), -float(res.fun)
    base_var = float(_omega_variance(np.array([np.log(med)]), lam, n_zero)[0])
    if best_var - base_var < 1e-12 and abs(best_log - np.log(med)) > 1e-9:
        return GammaChoice(med, "spectrum_median", {"histogram": hist(med), "variance": base_var})
    g = float(np.exp(best_log))
    return GammaChoice(g, "spectrum_variance", {"histogram": hist(g), "variance": best_var})


def select_gamma(kind: str, y: np.ndarray, features: np.ndarray | None = None,
                 spectrum: ReducedData | np.ndarray | None = None) -> GammaChoice:
    """Nugget selection: residual rule for finite feature maps, spectrum rule otherwise."""
    if kind in ("linear", "quadratic"):
        if features is None:
            raise RegressionError(f"{kind} class needs the feature matrix")
        return gamma_from_features(features, y)
    if spectrum is None:
        raise RegressionError("nonlinear class needs the Gram spectrum")
    if isinstance(spectrum, ReducedData):
        return gamma_from_spectrum(spectrum.eigenvalues, spectrum.tail_dim)
    return gamma_from_spectrum(np.asarray(spectrum))

