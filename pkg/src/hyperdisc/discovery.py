"""Per-node ancestor search and hypergraph assembly.

For every node the search first picks the simplest kernel class whose
signal-to-noise ratio clears ``tau`` with all candidate ancestors active,
then removes ancestors one at a time. The resulting noise-to-signal curve,
indexed by the number q of remaining ancestors, decides where to stop:
either at the last q whose ratio stays below ``1 - tau`` (threshold) or just
before the largest jump of the curve (inflection).
"""

from __future__ import annotations

import zlib
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .data import DERIVATIVE, Dataset
from .kernels import (
    DEFAULT_BETAS,
    KINDS,
    LINEAR,
    NONLINEAR,
    QUADRATIC,
    KernelSpec,
    ancestor_forms,
    feature_map,
    gram,
)
from .regression import (
    gamma_from_features,
    gamma_from_spectrum,
    noise_to_signal,
    signal_coefficients,
)
from .spectral import DEFAULT_EPSILON, ReducedData, eig_sym, kpca_reduce, reduce_features
from .ztest import mean_direction, null_distribution

ALGORITHMS = ("threshold", "inflection")
STRATEGIES = ("min_activation", "min_ratio_increase")
GAMMA_MODES = ("nonlinear_only", "always")
TIE_RTOL = 1e-12


class DiscoveryError(ValueError):
    pass


@dataclass(frozen=True)
class DiscoveryConfig:
    """Search settings shared by every node.

    ``forbidden`` holds (ancestor, target) name pairs; ``role_rules`` holds
    (target_role, ancestor_role) pairs that may not form an edge;
    ``sources`` are columns never searched as targets (they may still be
    ancestors). ``force_q`` pins the number of ancestors of a node.
    """

    tau: float = 0.5
    algorithm: str = "threshold"
    pruning_strategy: str = "min_activation"
    ladder: tuple[str, ...] = KINDS
    betas: tuple[float, float, float] = DEFAULT_BETAS
    base: str = "gaussian"
    lengthscale: float = 1.0
    gamma_recompute: str = "nonlinear_only"
    forbidden: tuple[tuple[str, str], ...] = ()
    role_rules: tuple[tuple[str, str], ...] = ()
    sources: tuple[str, ...] = ()
    clusters: tuple[tuple[str, ...], ...] | None = None
    kpca_epsilon: float = DEFAULT_EPSILON
    ztest: bool = True
    ztest_samples: int = 1000
    force_q: Mapping[str, int] = field(default_factory=dict)
    seed: int = 0
    threads: int = 1

    def __post_init__(self):
        if not 0 < self.tau < 1:
            raise DiscoveryError(f"tau must lie in (0, 1), got {self.tau}")
        if self.algorithm not in ALGORITHMS:
            raise DiscoveryError(f"unknown algorithm {self.algorithm!r}; expected one of {ALGORITHMS}")
        if self.pruning_strategy not in STRATEGIES:
            raise DiscoveryError(f"unknown pruning strategy {self.pruning_strategy!r}")
        if self.gamma_recompute not in GAMMA_MODES:
            raise DiscoveryError(f"unknown gamma_recompute {self.gamma_recompute!r}")
        ladder = tuple(self.ladder)
        if not ladder or any(k not in KINDS for k in ladder):
            raise DiscoveryError(f"ladder must be a nonempty subsequence of {KINDS}")
        if list(ladder) != sorted(ladder, key=KINDS.index) or len(set(ladder)) != len(ladder):
            raise DiscoveryError("ladder must be ordered linear -> quadratic -> nonlinear")
        if self.clusters:
            flat = [c for cl in self.clusters for c in cl]
            if len(flat) != len(set(flat)):
                raise DiscoveryError("clusters must be disjoint")
        object.__setattr__(self, "ladder", ladder)
        object.__setattr__(self, "force_q", dict(self.force_q))

    def to_dict(self) -> dict:
        d = asdict(self)
        d["ladder"] = list(self.ladder)
        d["betas"] = list(self.betas)
        d["forbidden"] = [list(p) for p in self.forbidden]
        d["role_rules"] = [list(p) for p in self.role_rules]
        d["sources"] = list(self.sources)
        d["clusters"] = None if self.clusters is None else [list(c) for c in self.clusters]
        d["force_q"] = dict(sorted(self.force_q.items()))
        return d


# ------------------------------------------------------------------ traces


@dataclass
class Step:
    """State of the regression for one active set."""

    units: tuple[tuple[int, ...], ...]
    n2s: float
    gamma: float
    reduced: ReducedData
    activations: dict[tuple[int, ...], float] = field(default_factory=dict)
    z_lo: float = float("nan")
    z_hi: float = float("nan")


@dataclass
class AncestorTrace:
    node: str
    kernel: str | None
    candidates: list[str]
    removal_order: list[str] = field(default_factory=list)
    q: list[int] = field(default_factory=list)
    n2s: list[float] = field(default_factory=list)
    gamma: list[float] = field(default_factory=list)
    z_lo: list[float] = field(default_factory=list)
    z_hi: list[float] = field(default_factory=list)
    q_star: int = 0
    ancestors: list[str] = field(default_factory=list)
    escalation: dict[str, float] = field(default_factory=dict)

    def jumps(self) -> list[float]:
        """jump(q) = n2s(q - 1) - n2s(q) aligned with ``q`` (nan at q = 0)."""
        by_q = dict(zip(self.q, self.n2s))
        return [by_q[q - 1] - by_q[q] if q - 1 in by_q else float("nan") for q in self.q]

    def rows(self) -> list[dict]:
        return [
            {"q": q, "n2s": r, "jump": j, "gamma": g, "z_lo": lo, "z_hi": hi}
            for q, r, j, g, lo, hi in zip(self.q, self.n2s, self.jumps(), self.gamma, self.z_lo, self.z_hi)
        ]


@dataclass(frozen=True)
class Hyperedge:
    target: str
    ancestors: tuple[str, ...]
    kernel: str
    n2s: float

    @property
    def signal(self) -> float:
        return 1.0 - self.n2s


@dataclass
class HypergraphResult:
    nodes: list[tuple[str, str]]
    edges: list[Hyperedge]
    traces: dict[str, AncestorTrace]
    config: DiscoveryConfig

    def edge_set(self) -> set[tuple[str, str]]:
        return {(a, e.target) for e in self.edges for a in e.ancestors}

    def ancestors_of(self, node: str) -> set[str]:
        return {a for e in self.edges if e.target == node for a in e.ancestors}

    def edge(self, node: str) -> Hyperedge | None:
        return next((e for e in self.edges if e.target == node), None)


# --------------------------------------------------------------- evaluator


class Evaluator:
    """Regression of one target on subsets of the columns of ``x``.

    Finite classes work through a thin SVD of the explicit feature matrix;
    the nonlinear class through an eigendecomposition of the Gram matrix.
    """

    def __init__(self, x: np.ndarray, y: np.ndarray, kind: str, cfg: DiscoveryConfig):
        self.x = x
        self.y = np.asarray(y, dtype=float)
        self.kind = kind
        self.cfg = cfg
        self._factors: dict[int, np.ndarray] = {}  # per-column base-kernel factors

    def _spec(self, units):
        active = tuple(c for u in units for c in u)
        clusters = tuple(u for u in units if len(u) > 1) or None
        return KernelSpec(self.kind, self.cfg.betas, self.cfg.base, self.cfg.lengthscale, active,
                          clusters=clusters)

    def evaluate(self, units: Sequence[tuple[int, ...]], gamma: float | None = None,
                 with_activations: bool = True) -> Step:
        units = tuple(sorted(units))
        if not units:
            return self._constant_step(gamma)
        spec = self._spec(units)
        eps = self.cfg.kpca_epsilon
        if spec.finite:
            phi, owners = feature_map(spec, self.x)
            red = reduce_features(phi, self.y, eps)
            if gamma is None:
                gamma = gamma_from_features(phi, self.y).value
            step = Step(units, noise_to_signal(red, None, gamma), gamma, red)
            if with_activations:
                step.activations = self._finite_activations(phi, owners, red, gamma, units)
            return step
        full = gram(spec, self.x, self._factors)
        red = kpca_reduce(eig_sym(full), self.y, eps)
        if gamma is None:
            gamma = gamma_from_spectrum(red.eigenvalues, red.tail_dim).value
        step = Step(units, noise_to_signal(red, None, gamma), gamma, red)
        if with_activations:
            rho = signal_coefficients(red, gamma)
            total, rest = ancestor_forms(spec, self.x, rho, full, self._factors)
            for u in units:
                # rho^T K_t rho = rho^T K rho - rho^T K_{s/t} rho
                form = rest[u if spec.clusters else u[0]]
                step.activations[u] = (total - form) / total if total > 0 else 0.0
        return step

    @staticmethod
    def _finite_activations(phi, owners, red, gamma, units):
        rho = signal_coefficients(red, gamma)
        g2 = (phi @ rho) ** 2  # squared RKHS coefficients per feature
        total = float(g2.sum())
        out = {}
        for u in units:
            mask = np.array([not o.isdisjoint(u) for o in owners])
            out[u] = float(g2[mask].sum()) / total if total > 0 else 0.0
        return out

    def _constant_step(self, gamma: float | None) -> Step:
        # the kernel reduces to the constant 1: one eigenvalue N along the ones vector
        n = len(self.y)
        phi = np.ones((1, n))
        red = reduce_features(phi, self.y, self.cfg.kpca_epsilon)
        if gamma is None:
            gamma = gamma_from_features(phi, self.y).value
        return Step((), noise_to_signal(red, None, gamma), gamma, red)


def _argmin_unit(scores: Mapping[tuple[int, ...], float]) -> tuple[int, ...]:
    """Smallest score; near-ties go to the unit with the lowest column index."""
    best = min(scores.values())
    tol = TIE_RTOL * max(abs(best), 1e-300)
    return min(u for u, s in scores.items() if s <= best + tol)


def _next_gamma(kind: str, cfg: DiscoveryConfig, gamma: float) -> float | None:
    # None means "re-select"; the paper default keeps gamma for finite classes
    if kind == NONLINEAR or cfg.gamma_recompute == "always":
        return None
    return gamma


# --------------------------------------------------------------- candidates


def _unit_name(ds: Dataset, unit: tuple[int, ...]) -> str:
    return "+".join(ds.names[c] for c in unit)


def candidate_units(ds: Dataset, node: str, cfg: DiscoveryConfig) -> list[tuple[int, ...]]:
    """Removal units allowed as ancestors of ``node`` under the candidate rules."""
    j = ds.index(node)
    constant = ds.constant_columns
    forbidden = set(cfg.forbidden)
    rules = set(cfg.role_rules)
    own_source = ds.derived_from.get(node)
    derived_children = {k for k, v in ds.derived_from.items() if v == node}
    redundant = {b for a, b in ds.redundant_pairs if a == node} | {a for a, b in ds.redundant_pairs if b == node}

    def allowed(c: int) -> bool:
        name = ds.names[c]
        return not (
            c == j
            or c in constant
            or (name, node) in forbidden
            or (ds.roles[j], ds.roles[c]) in rules
            or name == own_source
            or name in derived_children
            or name in redundant
        )

    clusters = [tuple(sorted(ds.index(n) for n in cl)) for cl in (cfg.clusters or ())]
    in_cluster = {c for cl in clusters for c in cl}
    units = []
    for cl in clusters:
        if j in cl:
            continue  # a node's own cluster is never its ancestor
        if all(allowed(c) for c in cl):
            units.append(cl)
    units.extend((c,) for c in range(ds.n_columns) if c not in in_cluster and allowed(c))
    return sorted(units)


def node_seed(cfg: DiscoveryConfig, node: str) -> np.random.SeedSequence:
    # keyed by name so that results do not depend on the column order
    return np.random.SeedSequence([cfg.seed, zlib.crc32(node.encode())])


# ---------------------------------------------------------------- searches


def kernel_escalation(node: str, ds: Dataset, cfg: DiscoveryConfig,
                      units: Sequence[tuple[int, ...]] | None = None):
    """First ladder class whose full-candidate fit has n2s < 1 - tau.

    Returns (kind, step, escalation n2s per class); kind is None when no
    class qualifies.
    """
    units = candidate_units(ds, node, cfg) if units is None else list(units)
    y = ds.column(node)
    tried: dict[str, float] = {}
    if not units or not np.any(y):
        return None, None, tried
    for kind in cfg.ladder:
        ev = Evaluator(ds.values, y, kind, cfg)
        step = ev.evaluate(units, with_activations=cfg.pruning_strategy == "min_activation")
        tried[kind] = step.n2s
        if step.n2s < 1.0 - cfg.tau:
            return kind, step, tried
    return None, None, tried


def least_important(ev: Evaluator, step: Step, strategy: str, kind: str,
                    cfg: DiscoveryConfig) -> tuple[tuple[int, ...], Step]:
    """Unit to remove next and the state after removing it."""
    units = step.units
    gamma = _next_gamma(kind, cfg, step.gamma)
    need_act = strategy == "min_activation"
    if len(units) == 1:
        return units[0], ev.evaluate((), gamma)
    if strategy == "min_activation":
        t = _argmin_unit(step.activations)
        return t, ev.evaluate([u for u in units if u != t], gamma, with_activations=need_act)
    trials = {t: ev.evaluate([u for u in units if u != t], gamma, with_activations=False) for t in units}
    t = _argmin_unit({u: s.n2s for u, s in trials.items()})
    return t, trials[t]


def _is_centered(y: np.ndarray) -> bool:
    return abs(float(y.sum())) <= 1e-10 * np.sqrt(len(y)) * max(float(np.linalg.norm(y)), 1e-300)


def _z_band(step: Step, cfg: DiscoveryConfig, seed, centered: bool) -> tuple[float, float]:
    red = step.reduced
    # a centered target is compared with centered noise
    u = mean_direction(red.eigenvectors, red.tail_dim) if centered else None
    stats = null_distribution(red.omegas(step.gamma), cfg.ztest_samples, seed, u)
    return stats.band(0.05, 0.95)


def sweep(node: str, ds: Dataset, cfg: DiscoveryConfig, kind: str | None = None,
          units: Sequence[tuple[int, ...]] | None = None) -> AncestorTrace:
    """Escalate (unless ``kind`` is given) and prune down to q = 0, recording
    the full noise-to-signal curve. ``q_star`` is left unset."""
    units = candidate_units(ds, node, cfg) if units is None else sorted(units)
    names = [_unit_name(ds, u) for u in units]
    if kind is None:
        kind, step, tried = kernel_escalation(node, ds, cfg, units)
        trace = AncestorTrace(node, kind, names, escalation=tried)
        if kind is None:
            return trace
    else:
        trace = AncestorTrace(node, kind, names)
        if not units:
            return trace
        step = Evaluator(ds.values, ds.column(node), kind, cfg).evaluate(units)
        trace.escalation[kind] = step.n2s
    ev = Evaluator(ds.values, ds.column(node), kind, cfg)
    steps = [step]
    while step.units:
        t, step = least_important(ev, step, cfg.pruning_strategy, kind, cfg)
        trace.removal_order.append(_unit_name(ds, t))
        steps.append(step)
    seeds = node_seed(cfg, node).spawn(len(steps)) if cfg.ztest else [None] * len(steps)
    centered = _is_centered(ds.column(node))
    for s, seed in zip(steps, seeds):
        trace.q.append(len(s.units))
        trace.n2s.append(float(s.n2s))
        trace.gamma.append(float(s.gamma))
        lo, hi = _z_band(s, cfg, seed, centered) if cfg.ztest else (float("nan"), float("nan"))
        trace.z_lo.append(lo)
        trace.z_hi.append(hi)
    return trace


def threshold_q(trace: AncestorTrace, tau: float) -> int:
    """Stop before the first removal that drops the signal-to-noise ratio to tau or below."""
    q_star = trace.q[0]
    for q, r in zip(trace.q[1:], trace.n2s[1:]):
        if r >= 1.0 - tau:
            break
        q_star = q
    return q_star


def inflection_q(trace: AncestorTrace) -> int:
    """argmax_q n2s(q - 1) - n2s(q); ties go to the smaller q."""
    by_q = dict(zip(trace.q, trace.n2s))
    jumps = {q: by_q[q - 1] - by_q[q] for q in by_q if q >= 1}
    best = max(jumps.values())
    tol = TIE_RTOL * max(abs(best), 1e-300)
    return min(q for q, j in jumps.items() if j >= best - tol)


def _finalize(trace: AncestorTrace, q_star: int, units_by_name: Mapping[str, tuple[str, ...]]) -> AncestorTrace:
    trace.q_star = q_star
    removed = set(trace.removal_order[: len(trace.candidates) - q_star])
    survivors = [u for u in trace.candidates if u not in removed]
    trace.ancestors = [c for u in survivors for c in units_by_name[u]]
    return trace


def _search(node: str, ds: Dataset, cfg: DiscoveryConfig, algorithm: str) -> AncestorTrace:
    units = candidate_units(ds, node, cfg)
    trace = sweep(node, ds, cfg, units=units)
    if trace.kernel is None:
        return trace
    if node in cfg.force_q:
        q_star = int(cfg.force_q[node])
        if not 0 <= q_star <= len(units):
            raise DiscoveryError(f"forced q for {node} must lie in [0, {len(units)}]")
    elif algorithm == "threshold":
        q_star = threshold_q(trace, cfg.tau)
    else:
        q_star = inflection_q(trace)
    by_name = {_unit_name(ds, u): tuple(ds.names[c] for c in u) for u in units}
    return _finalize(trace, q_star, by_name)


def prune_threshold(node: str, ds: Dataset, cfg: DiscoveryConfig) -> AncestorTrace:
    return _search(node, ds, cfg, "threshold")


def prune_inflection(node: str, ds: Dataset, cfg: DiscoveryConfig) -> AncestorTrace:
    return _search(node, ds, cfg, "inflection")


def replay(trace: AncestorTrace, ds: Dataset, cfg: DiscoveryConfig) -> list[float]:
    """Recompute the n2s curve by removing units in the recorded order."""
    units = {_unit_name(ds, u): u for u in candidate_units(ds, trace.node, cfg)}
    ev = Evaluator(ds.values, ds.column(trace.node), trace.kernel, cfg)
    active = [units[n] for n in trace.candidates]
    step = ev.evaluate(active, with_activations=False)
    out = [step.n2s]
    for name in trace.removal_order:
        active.remove(units[name])
        step = ev.evaluate(active, _next_gamma(trace.kernel, cfg, step.gamma), with_activations=False)
        out.append(step.n2s)
    return out


def discover_graph(ds: Dataset, cfg: DiscoveryConfig = DiscoveryConfig()) -> HypergraphResult:
    usable = [i for i in range(ds.n_columns) if i not in ds.constant_columns]
    if len(usable) < 2:
        raise DiscoveryError("need at least 2 non-constant columns")
    for name in list(cfg.sources) + [a for a, _ in cfg.forbidden] + [b for _, b in cfg.forbidden]:
        ds.index(name)
    targets = [ds.names[i] for i in usable if ds.names[i] not in set(cfg.sources)]
    search = lambda n: _search(n, ds, cfg, cfg.algorithm)  # noqa: E731
    if cfg.threads > 1:
        with ThreadPoolExecutor(cfg.threads) as pool:
            traces = list(pool.map(search, targets))
    else:
        traces = [search(n) for n in targets]
    edges = []
    for tr in traces:
        if tr.kernel is not None and tr.ancestors:
            edges.append(Hyperedge(tr.node, tuple(tr.ancestors), tr.kernel,
                                   tr.n2s[tr.q.index(tr.q_star)]))
    return HypergraphResult(
        nodes=list(zip(ds.names, ds.roles)),
        edges=edges,
        traces={tr.node: tr for tr in traces},
        config=cfg,
    )


DERIVATIVE_RULES = ((DERIVATIVE, DERIVATIVE),)
__all__ = [
    "DiscoveryConfig", "AncestorTrace", "Hyperedge", "HypergraphResult", "Evaluator",
    "candidate_units", "kernel_escalation", "least_important", "sweep", "prune_threshold",
    "prune_inflection", "discover_graph", "replay", "threshold_q", "inflection_q",
    "LINEAR", "QUADRATIC", "NONLINEAR", "DERIVATIVE_RULES",
]
