"""Null distribution of the noise-to-signal ratio when the target is pure noise.

Under the no-signal hypothesis Y = Z ~ N(0, I), the ratio equals
B = Z^T D^2 Z / Z^T D Z with D = gamma (K + gamma I)^{-1}. By rotation
invariance of Z it suffices to sample B = sum w_i^2 g_i^2 / sum w_i g_i^2
over the spectrum w of D.

Normalized targets are centered, so their null model is P Z with P the
projection removing the mean. In the eigenbasis this is g - u (u^T g) with u
the unit mean direction; ``direction`` carries u.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

ALPHAS = (0.05, 0.1, 0.5, 0.9, 0.95)
DEFAULT_DRAWS = 1000
_CHUNK = 250_000


class ZTestError(ValueError):
    pass


@dataclass(frozen=True)
class NullStats:
    mean: float
    variance: float
    quantiles: dict[float, float] = field(default_factory=dict)
    n_samples: int = 0
    seed: int | None = None

    def band(self, lo: float = 0.05, hi: float = 0.95) -> tuple[float, float]:
        return self.quantiles[lo], self.quantiles[hi]


def sample_null(omegas: np.ndarray, m: int, rng: np.random.Generator,
                direction: np.ndarray | None = None) -> np.ndarray:
    """Draw m samples of B for the spectrum ``omegas``.

    ``direction``, when given, is a unit vector in the same basis as
    ``omegas``; the Gaussian draws are projected orthogonally to it.
    """
    w = np.asarray(omegas, dtype=float)
    u = np.zeros_like(w) if direction is None else np.asarray(direction, dtype=float)
    if u.shape != w.shape:
        raise ZTestError("direction must match the length of omegas")
    # unit omegas untouched by the projection only add a chi-square to both sums
    pooled = (w == 1.0) & (u == 0.0)
    n_pooled = int(pooled.sum())
    keep = ~pooled & ((w > 0) | (u != 0))
    w, u = w[keep], u[keep]
    project = bool(np.any(u))
    out = np.empty(m)
    per_chunk = max(1, _CHUNK // max(w.size, 1))
    for start in range(0, m, per_chunk):
        stop = min(m, start + per_chunk)
        g = rng.standard_normal((stop - start, w.size))
        if project:
            g -= np.outer(g @ u, u)
        g2 = g * g
        tail = rng.chisquare(n_pooled, stop - start) if n_pooled else 0.0
        out[start:stop] = (g2 @ (w * w) + tail) / (g2 @ w + tail)
    return out


def mean_direction(eigenvectors: np.ndarray, tail_dim: int) -> np.ndarray:
    """Unit mean direction 1/sqrt(N) in the basis (retained eigenvectors, null space).

    The null-space block has omega = 1 throughout, so its part of the
    direction can be rotated onto a single coordinate.
    """
    n = eigenvectors.shape[0]
    u_ret = eigenvectors.sum(axis=0) / np.sqrt(n)
    rest = max(1.0 - float(u_ret @ u_ret), 0.0)
    u = np.zeros(len(u_ret) + tail_dim)
    u[: len(u_ret)] = u_ret
    if tail_dim:
        u[len(u_ret)] = np.sqrt(rest)
    return u / np.linalg.norm(u)


def null_distribution(omegas: np.ndarray, m: int = DEFAULT_DRAWS, seed: int | np.random.SeedSequence = 0,
                      direction: np.ndarray | None = None) -> NullStats:
    w = np.asarray(omegas, dtype=float)
    if m < 100:
        raise ZTestError("need at least 100 Monte-Carlo draws")
    if w.size == 0 or not np.any(w > 0):
        raise ZTestError("all omegas are zero")
    if np.any(w < 0) or np.any(w > 1):
        raise ZTestError("omegas must lie in [0, 1]")
    b = sample_null(w, m, np.random.default_rng(seed), direction)
    q = np.quantile(b, ALPHAS)
    q = np.clip(np.maximum.accumulate(q), 0.0, 1.0)
    seed_val = seed if isinstance(seed, (int, np.integer)) else None
    return NullStats(
        float(b.mean()), float(b.var(ddof=1)), dict(zip(ALPHAS, map(float, q))), m, seed_val
    )


def z_score(observed_n2s: float, stats: NullStats) -> float:
    if stats.variance <= 0:
        raise ZTestError("null distribution has zero variance")
    return (observed_n2s - stats.mean) / np.sqrt(stats.variance)


@dataclass(frozen=True)
class Calibration:
    stats: NullStats
    n2s: np.ndarray
    gamma: float

    def fraction_below(self, alpha: float) -> float:
        return float(np.mean(self.n2s < self.stats.quantiles[alpha]))

    def fraction_inside(self, lo: float = 0.05, hi: float = 0.95) -> float:
        a, b = self.stats.band(lo, hi)
        return float(np.mean((self.n2s >= a) & (self.n2s <= b)))


def calibrate(n: int = 200, d: int = 2, trials: int = 1000, m: int = DEFAULT_DRAWS, seed: int = 0,
              kind: str = "nonlinear") -> Calibration:
    """Observed ratios for pure-noise targets against the Monte-Carlo quantiles.

    The inputs X are drawn once; every trial regresses a fresh N(0, I)
    target on the same kernel, so all trials share one null distribution.
    """
    from .kernels import KernelSpec, feature_map, gram
    from .regression import gamma_from_features, gamma_from_spectrum, noise_to_signal
    from .spectral import eig_sym, kpca_reduce

    ss = np.random.SeedSequence(seed)
    s_x, s_null, s_y = ss.spawn(3)
    x = np.random.default_rng(s_x).standard_normal((n, d))
    spec = KernelSpec(kind, active=tuple(range(d)))
    es = eig_sym(gram(spec, x))
    ys = np.random.default_rng(s_y).standard_normal((trials, n))
    reds = [kpca_reduce(es, y) for y in ys]
    if spec.finite:
        # the residual rule depends on the target, so gamma is set from its expectation
        phi = feature_map(spec, x)[0]
        gamma = float(np.mean([gamma_from_features(phi, y).value for y in ys]))
    else:
        gamma = gamma_from_spectrum(reds[0].eigenvalues, reds[0].tail_dim).value
    stats = null_distribution(reds[0].omegas(gamma), m, s_null)
    obs = np.array([noise_to_signal(r, None, gamma) for r in reds])
    return Calibration(stats, obs, gamma)
