"""Additive signal kernels and their decomposition into sub-kernels.

The full kernel on an active set S of columns is

    K(x, x') = 1 + b1 * sum_i x_i x_i'
                 + b2 * sum_{i<=j} x_i x_j x_i' x_j'
                 + b3 * prod_i (1 + k(x_i, x_i'))

with k a one-dimensional universal kernel. The linear class keeps only the
first two terms, the quadratic class the first three.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Hashable, Sequence

import numpy as np

from .data import Dataset

LINEAR = "linear"
QUADRATIC = "quadratic"
NONLINEAR = "nonlinear"
KINDS = (LINEAR, QUADRATIC, NONLINEAR)
BASES = ("gaussian", "matern52")

DEFAULT_BETAS = (0.1, 0.1, 0.1)
CHEMISTRY_BETAS = (0.1, 0.01, 0.001)


class KernelError(ValueError):
    pass


@dataclass(frozen=True)
class KernelSpec:
    kind: str = NONLINEAR
    betas: tuple[float, float, float] = DEFAULT_BETAS
    base: str = "gaussian"
    lengthscale: float = 1.0
    active: tuple[int, ...] = ()
    target: int | None = None
    clusters: tuple[tuple[int, ...], ...] | None = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise KernelError(f"unknown kernel class {self.kind!r}; expected one of {KINDS}")
        if self.base not in BASES:
            raise KernelError(f"unknown base kernel {self.base!r}; expected one of {BASES}")
        if len(self.betas) != 3 or min(self.betas) < 0:
            raise KernelError("betas must be three nonnegative numbers")
        if self.lengthscale <= 0:
            raise KernelError("lengthscale must be positive")
        object.__setattr__(self, "active", tuple(sorted(int(i) for i in self.active)))
        object.__setattr__(self, "betas", tuple(float(b) for b in self.betas))
        if self.target is not None and self.target in self.active:
            raise KernelError(f"target column {self.target} is in the active set")

    @property
    def effective_betas(self) -> tuple[float, float, float]:
        b1, b2, b3 = self.betas
        if self.kind == LINEAR:
            return (b1, 0.0, 0.0)
        if self.kind == QUADRATIC:
            return (b1, b2, 0.0)
        return (b1, b2, b3)

    @property
    def finite(self) -> bool:
        return self.kind != NONLINEAR

    def with_active(self, active: Sequence[int]) -> "KernelSpec":
        return replace(self, active=tuple(active))

    def units(self) -> list[tuple[int, ...]]:
        """Removal units: clusters (restricted to active) or single columns."""
        if not self.clusters:
            return [(i,) for i in self.active]
        act = set(self.active)
        seen: set[int] = set()
        out = []
        for cl in self.clusters:
            members = tuple(sorted(i for i in cl if i in act))
            if members:
                out.append(members)
                seen.update(members)
        out.extend((i,) for i in self.active if i not in seen)
        return sorted(out)


@dataclass
class GramBundle:
    """Full Gram matrix plus, per removal unit t, the kernel with t removed
    (``minus[t]``) and the part depending on t (``sub_grams[t]``)."""

    full: np.ndarray
    sub_grams: dict[Hashable, np.ndarray] = field(default_factory=dict)
    minus: dict[Hashable, np.ndarray] = field(default_factory=dict)


def _matrix(ds: Dataset | np.ndarray) -> np.ndarray:
    return ds.values if isinstance(ds, Dataset) else np.asarray(ds, dtype=float)


def base_kernel(u: np.ndarray, v: np.ndarray, base: str = "gaussian", lengthscale: float = 1.0) -> np.ndarray:
    """One-dimensional universal kernel k(u_a, v_b) as a len(u) x len(v) matrix."""
    r = np.abs(u[:, None] - v[None, :]) / lengthscale
    if base == "gaussian":
        return np.exp(-0.5 * r * r)
    if base == "matern52":
        s = np.sqrt(5.0) * r
        return (1.0 + s + s * s / 3.0) * np.exp(-s)
    raise KernelError(f"unknown base kernel {base!r}")


def _factor(x: np.ndarray, col: int, spec: KernelSpec, cache: dict | None) -> np.ndarray:
    """1 + k(x_col, x_col'), memoized in ``cache`` when given."""
    if cache is not None and col in cache:
        return cache[col]
    f = 1.0 + base_kernel(x[:, col], x[:, col], spec.base, spec.lengthscale)
    if cache is not None:
        cache[col] = f
    return f


def _product_term(x: np.ndarray, spec: KernelSpec, cache: dict | None = None) -> np.ndarray:
    n = x.shape[0]
    prod = np.ones((n, n))
    for c in spec.active:
        prod *= _factor(x, c, spec, cache)
    return prod


def _pieces(spec: KernelSpec, x: np.ndarray, cache: dict | None = None):
    z = x[:, list(spec.active)]
    b1, b2, b3 = spec.effective_betas
    lin = z @ z.T
    quad = 0.5 * (lin * lin + (z * z) @ (z * z).T) if b2 else None
    prod = _product_term(x, spec, cache) if b3 else None
    return lin, quad, prod


def gram(spec: KernelSpec, ds: Dataset | np.ndarray, cache: dict | None = None) -> np.ndarray:
    """Full Gram matrix; ``cache`` memoizes the per-column base-kernel factors."""
    if not spec.active:
        raise KernelError("empty active set")
    b1, b2, b3 = spec.effective_betas
    lin, quad, prod = _pieces(spec, _matrix(ds), cache)
    k = 1.0 + b1 * lin
    if b2:
        k += b2 * quad
    if b3:
        k += b3 * prod
    return k


def class_sub_grams(spec: KernelSpec, ds: Dataset | np.ndarray) -> GramBundle:
    """Split the full Gram into its linear (with constant), quadratic and
    nonlinear parts; the parts sum to the full matrix."""
    if not spec.active:
        raise KernelError("empty active set")
    b1, b2, b3 = spec.effective_betas
    lin, quad, prod = _pieces(spec, _matrix(ds))
    parts = {LINEAR: 1.0 + b1 * lin}
    if b2:
        parts[QUADRATIC] = b2 * quad
    if b3:
        parts[NONLINEAR] = b3 * prod
    full = sum(parts.values())
    return GramBundle(full=full, sub_grams=parts)


def sub_grams_by_ancestor(spec: KernelSpec, ds: Dataset | np.ndarray) -> GramBundle:
    """Per removal unit t: K_{s/t} (kernel on active minus t) and K_t = K - K_{s/t}.

    Keys are column indices, or tuples of indices when clusters are set.
    """
    if not spec.active:
        raise KernelError("empty active set")
    x = _matrix(ds)
    z = x[:, list(spec.active)]
    b1, b2, b3 = spec.effective_betas
    lin, quad, prod = _pieces(spec, x)
    sq = z * z
    full = 1.0 + b1 * lin
    if b2:
        full += b2 * quad
    if b3:
        full += b3 * prod
    bundle = GramBundle(full=full)
    pos = {c: i for i, c in enumerate(spec.active)}
    for unit in spec.units():
        cols = [pos[c] for c in unit]
        zt = z[:, cols]
        lin_rest = lin - zt @ zt.T
        k = 1.0 + b1 * lin_rest
        if b2:
            sq_rest = sq @ sq.T - sq[:, cols] @ sq[:, cols].T
            k += b2 * 0.5 * (lin_rest * lin_rest + sq_rest)
        if b3:
            denom = np.ones_like(full)
            for c in cols:
                denom *= 1.0 + base_kernel(z[:, c], z[:, c], spec.base, spec.lengthscale)
            k += b3 * (prod / denom)
        key = unit if spec.clusters else unit[0]
        bundle.minus[key] = k
        bundle.sub_grams[key] = full - k
    return bundle


def ancestor_forms(spec: KernelSpec, ds: Dataset | np.ndarray, rho: np.ndarray,
                   gram_matrix: np.ndarray | None = None, cache: dict | None = None):
    """rho^T K rho and, per removal unit t, rho^T K_{s/t} rho without forming K_{s/t}.

    The polynomial terms reduce to moment matrices (O(N d^2)); only the
    product term needs one N x N pass per unit. Keys follow
    ``sub_grams_by_ancestor``.
    """
    if not spec.active:
        raise KernelError("empty active set")
    x = _matrix(ds)
    act = list(spec.active)
    z = x[:, act]
    b1, b2, b3 = spec.effective_betas
    pos = {c: i for i, c in enumerate(act)}
    s0 = float(rho.sum()) ** 2
    u2 = (z.T @ rho) ** 2
    if b2:
        m2 = (z.T @ (rho[:, None] * z)) ** 2
        v2 = ((z * z).T @ rho) ** 2
    if b3:
        prod = _product_term(x, spec, cache)
    if gram_matrix is not None:
        total = float(rho @ gram_matrix @ rho)
    else:
        total = s0 + b1 * u2.sum()
        if b2:
            total += b2 * 0.5 * (m2.sum() + v2.sum())
        if b3:
            total += b3 * float(rho @ prod @ rho)
    out = {}
    for unit in spec.units():
        keep = np.ones(len(act), dtype=bool)
        keep[[pos[c] for c in unit]] = False
        form = s0 + b1 * u2[keep].sum()
        if b2:
            form += b2 * 0.5 * (m2[np.ix_(keep, keep)].sum() + v2[keep].sum())
        if b3:
            rest = prod.copy()
            for c in unit:
                rest /= _factor(x, c, spec, cache)
            form += b3 * float(rho @ rest @ rho)
        out[unit if spec.clusters else unit[0]] = float(form)
    return total, out


def feature_map(spec: KernelSpec, ds: Dataset | np.ndarray) -> tuple[np.ndarray, list[frozenset[int]]]:
    """Explicit feature matrix (d_S x N) for the finite classes, with the set
    of columns each feature row involves.

    Rows: constant 1, sqrt(b1) x_i, then sqrt(b2) x_i x_j for i <= j (each
    unordered pair once), so that Phi^T Phi equals the Gram matrix.
    """
    if spec.kind == NONLINEAR:
        raise KernelError("the nonlinear class has no finite feature map")
    x = _matrix(ds)
    b1, b2, _ = spec.effective_betas
    act = list(spec.active)
    rows = [np.ones(x.shape[0])]
    owners: list[frozenset[int]] = [frozenset()]
    for i in act:
        rows.append(np.sqrt(b1) * x[:, i])
        owners.append(frozenset((i,)))
    if spec.kind == QUADRATIC:
        for a, i in enumerate(act):
            for j in act[a:]:
                rows.append(np.sqrt(b2) * x[:, i] * x[:, j])
                owners.append(frozenset((i, j)))
    return np.vstack(rows), owners


def feature_matrix(spec: KernelSpec, ds: Dataset | np.ndarray) -> np.ndarray:
    return feature_map(spec, ds)[0]


def feature_dimension(kind: str, d: int) -> int:
    if kind == LINEAR:
        return 1 + d
    if kind == QUADRATIC:
        return 1 + d + d * (d + 1) // 2
    raise KernelError("the nonlinear class has no finite feature map")
