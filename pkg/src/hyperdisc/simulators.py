"""Benchmark datasets: hidden algebraic equations, the FPUT chain and an
ethylene hydrogenation reaction network.

All generators are deterministic functions of their seed and return
un-normalized datasets.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data import DERIVATIVE, RAW, Dataset

ALGEBRAIC_EXAMPLES = ("a", "b", "c", "d")
CHEM_SPECIES = ("H2", "H", "C2H4", "C2H5")


class SimulationError(RuntimeError):
    pass


def gen_algebraic(example: str, n_samples: int = 1000, seed: int = 0) -> Dataset:
    if example not in ALGEBRAIC_EXAMPLES:
        raise ValueError(f"unknown example {example!r}; expected one of {ALGEBRAIC_EXAMPLES}")
    if n_samples < 1:
        raise ValueError("n_samples must be >= 1")
    rng = np.random.default_rng(seed)
    w = rng.standard_normal((n_samples, 4))
    w1, w2, w3, w4 = w.T
    if example == "a":
        xs = [w1.copy(), w2.copy()]
    elif example == "b":
        x1 = w1.copy()
        xs = [x1, x1**2 + 1 + 0.1 * w2, w3.copy()]
    elif example == "c":
        xs = [w1 * w2, w2 * np.sin(w4)]
    else:
        x1 = w1.copy()
        xs = [x1, x1**3 + 1 + 0.1 * w2, (x1 + 2) ** 3 + 0.1 * w3]
    names = ("w1", "w2", "w3", "w4") + tuple(f"x{i + 1}" for i in range(len(xs)))
    values = np.column_stack([w] + xs)
    return Dataset(values, names, (RAW,) * len(names))


def _rk4_step(f, y, dt):
    k1 = f(y)
    k2 = f(y + 0.5 * dt * k1)
    k3 = f(y + 0.5 * dt * k2)
    k4 = f(y + dt * k3)
    return y + (dt / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)


# --------------------------------------------------------------------- FPUT


@dataclass(frozen=True)
class FputConfig:
    """Fixed-end FPUT chain, x_{-1} = x_N = 0.

    Each trajectory starts from rest with positions i.i.d. uniform on
    [-amplitude, amplitude]; snapshots are drawn at random integrator steps
    in (0, t_final].
    """

    n_masses: int = 10
    alpha_kind: str = "zero"
    c: float = 1.0
    n_snapshots: int = 1000
    seed: int = 0
    step: float = 1e-3
    n_trajectories: int = 100
    t_final: float = 1.0
    amplitude: float = 0.5
    blowup: float = 1e6

    def __post_init__(self):
        if self.n_masses < 2:
            raise ValueError("n_masses must be >= 2")
        if self.alpha_kind not in ("zero", "square"):
            raise ValueError(f"alpha_kind must be 'zero' or 'square', got {self.alpha_kind!r}")
        if self.step <= 0 or self.t_final <= 0:
            raise ValueError("step and t_final must be positive")
        if self.n_trajectories < 1 or self.n_snapshots < 1:
            raise ValueError("n_trajectories and n_snapshots must be >= 1")


def fput_acceleration(x: np.ndarray, c: float = 1.0, alpha_kind: str = "zero") -> np.ndarray:
    """Right-hand side of the chain; ``x`` has masses on its last axis."""
    n = x.shape[-1]
    h = 1.0 / n
    pad = np.zeros(x.shape[:-1] + (n + 2,))
    pad[..., 1:-1] = x
    right, left = pad[..., 2:], pad[..., :-2]
    acc = (c**2 / h**2) * (right + left - 2 * x)
    if alpha_kind == "square":
        acc = acc * (1 + (right - left) ** 2)
    return acc


def fput_linear_energy(x: np.ndarray, v: np.ndarray, c: float = 1.0) -> np.ndarray:
    """Conserved energy of the alpha = 0 chain."""
    n = x.shape[-1]
    pad = np.zeros(x.shape[:-1] + (n + 2,))
    pad[..., 1:-1] = x
    stretch = np.diff(pad, axis=-1)
    return 0.5 * np.sum(v**2, axis=-1) + 0.5 * c**2 * n**2 * np.sum(stretch**2, axis=-1)


def fput_names(n_masses: int) -> tuple[str, ...]:
    return (
        tuple(f"x{j}" for j in range(n_masses))
        + tuple(f"v{j}" for j in range(n_masses))
        + tuple(f"a{j}" for j in range(n_masses))
    )


def integrate_fput(cfg: FputConfig, x0: np.ndarray, v0: np.ndarray, n_steps: int):
    """Integrate a batch of chains; returns positions and velocities at every step."""
    n = cfg.n_masses

    def rhs(y):
        x, v = y[..., :n], y[..., n:]
        return np.concatenate([v, fput_acceleration(x, cfg.c, cfg.alpha_kind)], axis=-1)

    y = np.concatenate([x0, v0], axis=-1)
    out = np.empty((n_steps + 1,) + y.shape)
    out[0] = y
    for k in range(n_steps):
        y = _rk4_step(rhs, y, cfg.step)
        out[k + 1] = y
        norms = np.max(np.abs(y), axis=-1)
        if not np.all(np.isfinite(norms)) or np.any(norms > cfg.blowup):
            bad = int(np.argmax(~np.isfinite(norms) | (norms > cfg.blowup)))
            raise SimulationError(f"FPUT trajectory {bad} blew up at step {k + 1}")
    return out[..., :n], out[..., n:]


def _fput_initial(cfg: FputConfig) -> np.ndarray:
    seqs = np.random.SeedSequence(cfg.seed).spawn(cfg.n_trajectories)
    return np.stack(
        [np.random.default_rng(s).uniform(-cfg.amplitude, cfg.amplitude, cfg.n_masses) for s in seqs]
    )


def gen_fput(cfg: FputConfig = FputConfig()) -> Dataset:
    n_steps = int(round(cfg.t_final / cfg.step))
    x0 = _fput_initial(cfg)
    xs, vs = integrate_fput(cfg, x0, np.zeros_like(x0), n_steps)

    # snapshot k goes to trajectory k mod n_trajectories
    rng = np.random.default_rng(np.random.SeedSequence(cfg.seed).spawn(cfg.n_trajectories + 1)[-1])
    traj = np.arange(cfg.n_snapshots) % cfg.n_trajectories
    steps = rng.integers(1, n_steps + 1, size=cfg.n_snapshots)
    x = xs[steps, traj]
    v = vs[steps, traj]
    a = fput_acceleration(x, cfg.c, cfg.alpha_kind)
    names = fput_names(cfg.n_masses)
    roles = (RAW,) * cfg.n_masses + (DERIVATIVE,) * (2 * cfg.n_masses)
    return Dataset(np.column_stack([x, v, a]), names, roles)


# ---------------------------------------------------------------- chemistry


@dataclass(frozen=True)
class ChemConfig:
    k1: float = 1.0
    k_minus1: float = 1.0
    k2: float = 1.0
    k3: float = 1.0
    n_trajectories: int = 50
    n_times: int = 50
    t_final: float = 5.0
    seed: int = 0
    substeps: int = 20
    init_low: float = 0.0
    init_high: float = 1.0

    def __post_init__(self):
        if min(self.k1, self.k_minus1, self.k2, self.k3) <= 0:
            raise ValueError("rate constants must be positive")
        if self.init_low < 0 or self.init_high < self.init_low:
            raise ValueError("initial concentrations must be nonnegative")
        if self.n_times < 2 or self.n_trajectories < 1 or self.substeps < 1:
            raise ValueError("need n_times >= 2, n_trajectories >= 1, substeps >= 1")


def chem_rhs(conc: np.ndarray, cfg: ChemConfig) -> np.ndarray:
    """Time derivatives of ([H2], [H], [C2H4], [C2H5]) on the last axis."""
    h2, h, c2h4, c2h5 = np.moveaxis(conc, -1, 0)
    r1 = cfg.k1 * h2 - cfg.k_minus1 * h**2
    r2 = cfg.k2 * c2h4 * h
    r3 = cfg.k3 * c2h5 * h
    return np.stack([-r1, 2 * r1 - r2 - r3, -r2, r2 - r3], axis=-1)


def chem_names() -> tuple[str, ...]:
    return CHEM_SPECIES + tuple(f"d{s}_dt" for s in CHEM_SPECIES)


def gen_chemistry(cfg: ChemConfig = ChemConfig(), initial: np.ndarray | None = None) -> Dataset:
    """Pool ``n_times`` equispaced samples from each of ``n_trajectories`` runs.

    ``initial`` overrides the random initial concentrations (shape
    ``(n_trajectories, 4)``).
    """
    if initial is None:
        seqs = np.random.SeedSequence(cfg.seed).spawn(cfg.n_trajectories)
        initial = np.stack(
            [np.random.default_rng(s).uniform(cfg.init_low, cfg.init_high, 4) for s in seqs]
        )
    y = np.asarray(initial, dtype=float).copy()
    if y.shape != (cfg.n_trajectories, 4) or np.any(y < 0):
        raise ValueError("initial concentrations must be nonnegative with shape (n_trajectories, 4)")
    dt = cfg.t_final / (cfg.n_times - 1) / cfg.substeps
    samples = [y.copy()]
    for i in range(cfg.n_times - 1):
        for _ in range(cfg.substeps):
            y = _rk4_step(lambda c: chem_rhs(c, cfg), y, dt)
        if np.any(y < -1e-9):
            bad = int(np.argmax(np.min(y, axis=1) < -1e-9))
            raise SimulationError(f"negative concentration in trajectory {bad} at sample {i + 1}")
        samples.append(y.copy())
    conc = np.stack(samples, axis=1).reshape(-1, 4)  # trajectory-major
    deriv = chem_rhs(conc, cfg)
    roles = (RAW,) * 4 + (DERIVATIVE,) * 4
    return Dataset(np.column_stack([conc, deriv]), chem_names(), roles)
