"""Run configuration: a flat YAML key-value file, presets and command-line overrides."""

from __future__ import annotations

import re
from dataclasses import dataclass, field, fields, replace
from pathlib import Path

import yaml

from .data import DERIVATIVE, ROLES, TRANSFORMS, Dataset, derive_target, load_csv, normalize
from .discovery import ALGORITHMS, GAMMA_MODES, STRATEGIES, DiscoveryConfig
from .kernels import BASES, CHEMISTRY_BETAS, DEFAULT_BETAS, KINDS


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    dataset: str | None = None
    normalize: bool = True
    preset: str | None = None
    tau: float = 0.5
    algorithm: str = "threshold"
    pruning_strategy: str = "min_activation"
    ladder: list[str] = field(default_factory=lambda: list(KINDS))
    betas: list[float] = field(default_factory=lambda: list(DEFAULT_BETAS))
    base: str = "gaussian"
    lengthscale: float = 1.0
    gamma_recompute: str = "nonlinear_only"
    kpca_epsilon: float = 1e-10
    ztest: bool = True
    ztest_samples: int = 1000
    seed: int = 0
    threads: int = 1
    out: str = "out"
    force_q: dict[str, int] = field(default_factory=dict)
    forbidden: list[str] = field(default_factory=list)  # "ancestor->target"
    clusters: list[list[str]] = field(default_factory=list)
    roles: dict[str, str] = field(default_factory=dict)
    role_rules: list[str] = field(default_factory=list)  # "target_role<-ancestor_role"
    sources: list[str] = field(default_factory=list)
    derived: list[str] = field(default_factory=list)  # "source:transform"

    def validate(self) -> "RunConfig":
        checks = [
            (0 < self.tau < 1, f"tau must lie in (0, 1), got {self.tau}"),
            (self.algorithm in ALGORITHMS, f"algorithm must be one of {ALGORITHMS}"),
            (self.pruning_strategy in STRATEGIES, f"pruning_strategy must be one of {STRATEGIES}"),
            (self.gamma_recompute in GAMMA_MODES, f"gamma_recompute must be one of {GAMMA_MODES}"),
            (self.base in BASES, f"base must be one of {BASES}"),
            (all(k in KINDS for k in self.ladder) and bool(self.ladder), f"ladder entries must be in {KINDS}"),
            (len(self.betas) == 3, "betas needs three values"),
            (self.threads >= 1, "threads must be >= 1"),
            (self.ztest_samples >= 100, "ztest_samples must be >= 100"),
            (all(r in ROLES for r in self.roles.values()), f"roles must be in {ROLES}"),
            (self.preset is None or self.preset in PRESETS, f"preset must be one of {sorted(PRESETS)}"),
        ]
        for ok, msg in checks:
            if not ok:
                raise ConfigError(msg)
        for s in self.forbidden:
            _split(s, "->", "forbidden")
        for s in self.role_rules:
            _split(s, "<-", "role_rules")
        for s in self.derived:
            src, tf = _split(s, ":", "derived")
            if tf not in TRANSFORMS:
                raise ConfigError(f"unknown transform {tf!r}; expected one of {TRANSFORMS}")
        return self

    def to_discovery(self) -> DiscoveryConfig:
        return DiscoveryConfig(
            tau=self.tau,
            algorithm=self.algorithm,
            pruning_strategy=self.pruning_strategy,
            ladder=tuple(self.ladder),
            betas=tuple(float(b) for b in self.betas),
            base=self.base,
            lengthscale=self.lengthscale,
            gamma_recompute=self.gamma_recompute,
            forbidden=tuple(_split(s, "->", "forbidden") for s in self.forbidden),
            role_rules=tuple(_split(s, "<-", "role_rules") for s in self.role_rules),
            sources=tuple(self.sources),
            clusters=tuple(tuple(c) for c in self.clusters) or None,
            kpca_epsilon=self.kpca_epsilon,
            ztest=self.ztest,
            ztest_samples=self.ztest_samples,
            force_q={k: int(v) for k, v in self.force_q.items()},
            seed=self.seed,
            threads=self.threads,
        )

    def echo(self) -> dict:
        return {"dataset": self.dataset, "normalize": self.normalize, "preset": self.preset,
                "roles": dict(sorted(self.roles.items())), "derived": list(self.derived)}


def _split(s: str, sep: str, key: str) -> tuple[str, str]:
    parts = [p.strip() for p in str(s).split(sep)]
    if len(parts) != 2 or not all(parts):
        raise ConfigError(f"{key} entry {s!r} must look like 'a{sep}b'")
    return parts[0], parts[1]


_FIELDS = {f.name: f for f in fields(RunConfig)}


def from_mapping(values: dict, base: RunConfig | None = None) -> RunConfig:
    unknown = sorted(set(values) - set(_FIELDS))
    if unknown:
        raise ConfigError(f"unknown config keys: {unknown}")
    cfg = replace(base) if base is not None else RunConfig()
    for k, v in values.items():
        setattr(cfg, k, v)
    return cfg.validate()


def load_config(path: str | Path) -> RunConfig:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    doc = yaml.safe_load(text) or {}
    if not isinstance(doc, dict):
        raise ConfigError("config file must be a flat mapping of keys to values")
    nested = [k for k, v in doc.items() if isinstance(v, dict) and k not in ("force_q", "roles")]
    if nested:
        raise ConfigError(f"config must be flat; nested sections found under {nested}")
    return from_mapping(doc)


# ------------------------------------------------------------------ presets


def _algebraic(names):
    return {"algorithm": "inflection", "sources": [n for n in names if re.fullmatch(r"w\d+", n)]}


def _chemistry(names):
    roles = {n: DERIVATIVE for n in names if n.endswith("_dt")}
    return {
        "algorithm": "threshold",
        "betas": list(CHEMISTRY_BETAS),
        "roles": roles,
        "role_rules": ["derivative<-derivative", "raw<-derivative"],
    }


def _fput(names):
    roles = {n: DERIVATIVE for n in names if re.fullmatch(r"[va]\d+", n)}
    return {"algorithm": "inflection", "ladder": ["nonlinear"], "roles": roles}


PRESETS = {"algebraic": _algebraic, "chemistry": _chemistry, "fput": _fput}


def apply_preset(cfg: RunConfig, names, explicit: set[str] = frozenset()) -> RunConfig:
    """Fill preset values for every key not set explicitly."""
    if cfg.preset is None:
        return cfg
    vals = {k: v for k, v in PRESETS[cfg.preset](list(names)).items() if k not in explicit}
    return from_mapping(vals, cfg)


def prepare_dataset(cfg: RunConfig, ds: Dataset | None = None) -> Dataset:
    """Load, assign roles, normalize and add derived targets as configured."""
    if ds is None:
        if not cfg.dataset:
            raise ConfigError("no dataset given")
        ds = load_csv(cfg.dataset)
    if cfg.roles:
        ds = ds.with_roles(cfg.roles)
    if cfg.normalize and ds.normalization is None:
        ds = normalize(ds)
    for s in cfg.derived:
        src, tf = _split(s, ":", "derived")
        ds = derive_target(ds, src, tf)
    return ds
