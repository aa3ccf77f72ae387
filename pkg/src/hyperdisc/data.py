"""Tabular sample data: loading, normalization and derived target columns."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Sequence

import numpy as np

RAW = "raw"
DERIVED = "derived"
DERIVATIVE = "derivative"
ROLES = (RAW, DERIVED, DERIVATIVE)

TRANSFORMS = ("identity", "square")


class DataError(ValueError):
    """Raised for malformed input data."""


@dataclass(frozen=True)
class NormalizationParams:
    shift: np.ndarray
    scale: np.ndarray
    constant_columns: frozenset[int] = frozenset()

    def __post_init__(self):
        for arr in (self.shift, self.scale):
            arr.setflags(write=False)


@dataclass(frozen=True)
class Dataset:
    """N x d sample matrix; rows are samples, columns are variables.

    ``derived_from`` maps a derived column name to the column it was built
    from. ``redundant_pairs`` lists column-name pairs known to carry the same
    information (identity-derived copies).
    """

    values: np.ndarray
    names: tuple[str, ...]
    roles: tuple[str, ...]
    normalization: NormalizationParams | None = None
    derived_from: dict[str, str] = field(default_factory=dict)
    redundant_pairs: tuple[tuple[str, str], ...] = ()

    def __post_init__(self):
        values = np.array(self.values, dtype=float)
        if values.ndim != 2:
            raise DataError(f"values must be 2-D, got shape {values.shape}")
        n, d = values.shape
        names = tuple(str(s) for s in self.names)
        roles = tuple(self.roles)
        if len(names) != d:
            raise DataError(f"{len(names)} names for {d} columns")
        if len(set(names)) != d:
            dup = sorted({s for s in names if names.count(s) > 1})
            raise DataError(f"duplicate column names: {dup}")
        if len(roles) != d:
            raise DataError(f"{len(roles)} roles for {d} columns")
        bad = [r for r in roles if r not in ROLES]
        if bad:
            raise DataError(f"unknown roles {bad}; expected one of {ROLES}")
        if not np.all(np.isfinite(values)):
            rows, cols = np.nonzero(~np.isfinite(values))
            raise DataError(
                f"non-finite value at row {rows[0] + 1}, column {names[cols[0]]}"
            )
        values.setflags(write=False)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "names", names)
        object.__setattr__(self, "roles", roles)

    @property
    def n_samples(self) -> int:
        return self.values.shape[0]

    @property
    def n_columns(self) -> int:
        return self.values.shape[1]

    def index(self, name: str) -> int:
        try:
            return self.names.index(name)
        except ValueError:
            raise DataError(f"unknown column {name!r}") from None

    def column(self, name: str) -> np.ndarray:
        return self.values[:, self.index(name)]

    @property
    def constant_columns(self) -> frozenset[int]:
        if self.normalization is None:
            return frozenset(_constant_columns(self.values))
        return self.normalization.constant_columns

    def with_roles(self, roles: dict[str, str]) -> "Dataset":
        new = list(self.roles)
        for name, role in roles.items():
            new[self.index(name)] = role
        return replace(self, roles=tuple(new))

    def select(self, names: Sequence[str]) -> "Dataset":
        """Column subset/permutation, carrying normalization along."""
        idx = [self.index(s) for s in names]
        norm = None
        if self.normalization is not None:
            remap = {old: new for new, old in enumerate(idx)}
            norm = NormalizationParams(
                self.normalization.shift[idx].copy(),
                self.normalization.scale[idx].copy(),
                frozenset(remap[c] for c in self.normalization.constant_columns if c in remap),
            )
        keep = set(names)
        return Dataset(
            self.values[:, idx],
            tuple(names),
            tuple(self.roles[i] for i in idx),
            norm,
            {k: v for k, v in self.derived_from.items() if k in keep},
            tuple(p for p in self.redundant_pairs if p[0] in keep and p[1] in keep),
        )


def _constant_columns(values: np.ndarray) -> list[int]:
    out = []
    for j in range(values.shape[1]):
        col = values[:, j]
        spread = np.max(col) - np.min(col) if col.size else 0.0
        if spread <= 1e-12 * max(1.0, float(np.max(np.abs(col))) if col.size else 1.0):
            out.append(j)
    return out


def load_csv(path: str | Path, delimiter: str = ",") -> Dataset:
    path = Path(path)
    if not path.exists():
        raise DataError(f"no such file: {path}")
    with path.open(newline="") as fh:
        rows = list(csv.reader(fh, delimiter=delimiter))
    rows = [r for r in rows if r and any(c.strip() for c in r)]
    if not rows:
        raise DataError(f"{path}: empty file")
    header = [c.strip() for c in rows[0]]
    if len(set(header)) != len(header):
        dup = sorted({s for s in header if header.count(s) > 1})
        raise DataError(f"{path}: duplicate header names {dup}")
    body = rows[1:]
    if not body:
        raise DataError(f"{path}: no data rows")
    values = np.empty((len(body), len(header)))
    for i, row in enumerate(body, start=1):
        if len(row) != len(header):
            raise DataError(
                f"{path}: row {i} has {len(row)} fields, expected {len(header)}"
            )
        for j, cell in enumerate(row):
            try:
                values[i - 1, j] = float(cell)
            except ValueError:
                raise DataError(
                    f"{path}: non-numeric cell {cell!r} at ({i}, {header[j]})"
                ) from None
    return Dataset(values, tuple(header), (RAW,) * len(header))


def write_csv(ds: Dataset, path: str | Path, delimiter: str = ",") -> None:
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh, delimiter=delimiter, lineterminator="\n")
        w.writerow(ds.names)
        for row in ds.values:
            w.writerow([repr(float(v)) for v in row])


def normalize(ds: Dataset) -> Dataset:
    """Shift/scale every non-constant column to mean 0 and population variance 1."""
    if ds.normalization is not None:
        raise DataError("dataset is already normalized")
    if ds.n_samples < 2:
        raise DataError("normalization needs at least 2 rows")
    x = ds.values
    shift = x.mean(axis=0)
    scale = x.std(axis=0)
    const = _constant_columns(x)
    shift[const] = 0.0
    scale[const] = 1.0
    z = (x - shift) / scale
    # second pass removes the O(eps) residual mean left by the first
    resid = z.mean(axis=0)
    resid[const] = 0.0
    z -= resid
    shift = shift + resid * scale
    return replace(ds, values=z, normalization=NormalizationParams(shift, scale, frozenset(const)))


def denormalize(ds: Dataset) -> Dataset:
    if ds.normalization is None:
        return ds
    p = ds.normalization
    return replace(ds, values=ds.values * p.scale + p.shift, normalization=None)


def derived_name(source: str, transform: str) -> str:
    if transform == "square":
        return f"{source}^2"
    if transform == "identity":
        return f"{source}_id"
    raise DataError(f"unknown transform {transform!r}; expected one of {TRANSFORMS}")


def derive_target(ds: Dataset, source: str, transform: str) -> Dataset:
    """Append ``transform(source)`` as a new column with role ``derived``.

    The transform acts on the normalized source values; the new column is then
    normalized itself if the dataset carries normalization.
    """
    name = derived_name(source, transform)
    j = ds.index(source)
    if name in ds.names:
        raise DataError(f"column {name!r} already exists")
    col = ds.values[:, j]
    if ds.normalization is None:
        sd = col.std()
        col = (col - col.mean()) / (sd if sd > 0 else 1.0)
    new = col**2 if transform == "square" else col.copy()

    values = np.column_stack([ds.values, new])
    norm = None
    if ds.normalization is not None:
        p = ds.normalization
        sh, sc = new.mean(), new.std()
        const = set(p.constant_columns)
        if sc <= 1e-12 * max(1.0, abs(sh)):
            sh, sc = 0.0, 1.0
            const.add(ds.n_columns)
        values[:, -1] = (new - sh) / sc
        norm = NormalizationParams(
            np.append(p.shift, sh), np.append(p.scale, sc), frozenset(const)
        )
    pairs = ds.redundant_pairs
    if transform == "identity":
        pairs = pairs + ((source, name),)
    return Dataset(
        values,
        ds.names + (name,),
        ds.roles + (DERIVED,),
        norm,
        {**ds.derived_from, name: source},
        pairs,
    )


def drop(ds: Dataset, name: str) -> Dataset:
    keep = [s for s in ds.names if s != name]
    ds.index(name)
    return ds.select(keep)


def relative_error(a: np.ndarray, b: np.ndarray) -> float:
    denom = max(float(np.max(np.abs(b))), math.ulp(1.0))
    return float(np.max(np.abs(a - b))) / denom
