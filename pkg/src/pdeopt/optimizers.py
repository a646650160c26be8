"""Smoothing optimizers: SGD, entropy-regularized SGD, HJ, heat, elastic.

The family shares one structure: an inner loop runs L noisy gradient steps
on the coupled objective f(y) + |y - x|^2 / (2 gamma) around the current
outer iterate, and every L-th step the outer iterate moves along
(x - <y>) / gamma, an estimate of the gradient of the smoothed loss at
scale gamma.  The variants differ in how <y> is formed (exponential
average, last iterate, worker mean, Gaussian perturbation average) and in
whether extrinsic noise is injected.

Outer updates optionally use a Nesterov-style lookahead (``delta``), and the
smoothing scale follows the geometric scoping schedule
gamma(k) = gamma0 * (1 - gamma1)^(k // L).

Steps mutate only their own state; Elastic-SGD workers advance between
synchronization barriers in a fixed round-robin order, so runs are bit-wise
reproducible from (config, seed).
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field, replace

import numpy as np

from .objectives import Objective
from .rng import substream, worker_streams

Array = np.ndarray

ALGORITHMS = ("sgd", "entropy_sgd", "hj", "hj2", "heat", "elastic")

# per-algorithm defaults: inner steps per outer update and extrinsic noise
ALGO_DEFAULTS = {
    "sgd": dict(L=1, beta_inv_ex=0.0),
    "entropy_sgd": dict(L=20, beta_inv_ex=1e-8),
    "hj": dict(L=5, beta_inv_ex=0.0),
    "hj2": dict(L=5, beta_inv_ex=0.0),
    "heat": dict(L=20, beta_inv_ex=0.0),
    "elastic": dict(L=20, beta_inv_ex=1e-8),
}


@dataclass
class OptimizerConfig:
    eta: float = 0.1
    eta_y: float = 0.1
    L: int = 20
    gamma0: float = 0.1
    gamma1: float = 1e-3
    beta_inv_ex: float = 0.0
    alpha: float = 0.75
    delta: float = 0.0
    n_workers: int = 4
    batch_size: int | None = None
    anneal_factor: float | None = None      # step-size drop factor
    anneal_period: float | None = None      # in effective epochs
    normalize_gamma: bool = False           # divide gamma0 by the dimension

    def __post_init__(self):
        if self.eta <= 0 or self.eta_y <= 0:
            raise ValueError("step sizes must be positive")
        if self.L < 1:
            raise ValueError("L must be a positive integer")
        if self.gamma0 <= 0:
            raise ValueError("gamma0 must be positive")
        if not (0.0 <= self.gamma1 < 1.0):
            raise ValueError("gamma1 must lie in [0, 1)")
        if self.beta_inv_ex < 0:
            raise ValueError("beta_inv_ex must be >= 0")
        if not (0.0 <= self.alpha <= 1.0):
            raise ValueError("alpha must lie in [0, 1]")
        if not (0.0 <= self.delta < 1.0):
            raise ValueError("delta must lie in [0, 1)")
        if self.n_workers < 1:
            raise ValueError("n_workers must be >= 1")


def default_config(algo: str, **overrides) -> OptimizerConfig:
    if algo not in ALGORITHMS:
        raise ValueError(f"unknown algorithm {algo!r}; expected one of {ALGORITHMS}")
    merged = dict(ALGO_DEFAULTS[algo])
    merged.update(overrides)
    return OptimizerConfig(**merged)


def gamma_schedule(k: int, cfg: OptimizerConfig, dim: int | None = None) -> float:
    """Scoping schedule gamma0 * (1 - gamma1)^(k // L), non-increasing in k."""
    if k < 0:
        raise ValueError("k must be >= 0")
    g0 = cfg.gamma0 / dim if (cfg.normalize_gamma and dim) else cfg.gamma0
    return g0 * (1.0 - cfg.gamma1) ** (k // cfg.L)


@dataclass
class OptimizerState:
    x: Array
    z: Array                       # lookahead anchor; equals x when delta == 0
    y: Array
    y_avg: Array
    k: int = 0                     # inner-step counter
    outer_steps: int = 0
    grad_evals: int = 0
    control_energy: float = 0.0
    x_prev: Array | None = None
    workers: list[Array] | None = None
    rng: np.random.Generator = None
    worker_rngs: list[np.random.Generator] | None = None
    steps_per_epoch: int = 1

    def check_dims(self, dim: int) -> None:
        for v in (self.x, self.z, self.y, self.y_avg):
            if v.shape != (dim,):
                raise ValueError("state vectors must match the objective dimension")


def init_state(objective: Objective, x0, cfg: OptimizerConfig, seed: int, algo: str = "entropy_sgd") -> OptimizerState:
    x0 = np.asarray(x0, dtype=float).copy()
    y0 = np.zeros_like(x0) if algo == "hj2" else x0.copy()
    state = OptimizerState(
        x=x0,
        z=x0.copy(),
        y=y0,
        y_avg=y0.copy(),
        rng=substream(seed, "optimizer"),
        steps_per_epoch=objective.steps_per_epoch() if hasattr(objective, "steps_per_epoch") else 1,
    )
    if algo == "elastic":
        state.workers = [x0.copy() for _ in range(cfg.n_workers)]
        state.worker_rngs = worker_streams(seed, "worker", cfg.n_workers)
    state.check_dims(objective.dim)
    return state


# ---------------------------------------------------------------------------
# update pieces


def _grad_mb(objective: Objective, x: Array, rng, batch_size=None) -> Array:
    if batch_size is not None and hasattr(objective, "minibatch_grad"):
        return objective.minibatch_grad(x, rng, batch_size)
    return objective.stochastic_grad(x, rng)


def _inner_y_step(y: Array, anchor: Array, objective: Objective, gamma: float,
                  cfg: OptimizerConfig, rng) -> Array:
    """One noisy descent step on f(y) + |y - anchor|^2 / (2 gamma).

    The step size is clamped to gamma so the coupling term stays stable when
    scoping drives gamma below eta_y.
    """
    if gamma <= 0:
        raise ValueError("gamma must be positive")
    step = min(cfg.eta_y, gamma)
    g = _grad_mb(objective, y, rng, cfg.batch_size)
    y = y - step * (g + (y - anchor) / gamma)
    if cfg.beta_inv_ex > 0.0:
        y = y + math.sqrt(step * cfg.beta_inv_ex) * rng.standard_normal(y.shape[0])
    return y


def _effective_eta(state: OptimizerState, cfg: OptimizerConfig) -> float:
    if not cfg.anneal_factor or not cfg.anneal_period:
        return cfg.eta
    epoch = state.grad_evals / state.steps_per_epoch
    return cfg.eta / cfg.anneal_factor ** math.floor(epoch / cfg.anneal_period)


def _outer_update(state: OptimizerState, cfg: OptimizerConfig, direction: Array) -> None:
    """Move the outer iterate along -direction with Nesterov lookahead."""
    eta = _effective_eta(state, cfg)
    x_old = state.x
    x_new = state.z - eta * direction
    state.x_prev = x_old
    state.x = x_new
    state.z = x_new + cfg.delta * (x_new - x_old)
    state.control_energy += 0.5 * float(direction @ direction) * eta
    state.outer_steps += 1


# ---------------------------------------------------------------------------
# algorithm steps (one inner step per call unless noted)


def step_sgd(state: OptimizerState, objective: Objective, eta: float,
             beta_inv_ex: float = 0.0, batch_size: int | None = None) -> OptimizerState:
    """x <- x - eta grad_mb(x) + sqrt(eta beta_inv_ex) * N(0, I)."""
    if eta <= 0:
        raise ValueError("eta must be positive")
    g = _grad_mb(objective, state.x, state.rng, batch_size)
    x_new = state.x - eta * g
    if beta_inv_ex > 0.0:
        x_new = x_new + math.sqrt(eta * beta_inv_ex) * state.rng.standard_normal(state.x.shape[0])
    state.x_prev = state.x
    state.x = x_new
    state.z = x_new.copy()
    state.k += 1
    state.outer_steps += 1
    state.grad_evals += 1
    state.control_energy += 0.5 * float(g @ g) * eta
    return state


def step_entropy_sgd(state: OptimizerState, objective: Objective, cfg: OptimizerConfig) -> OptimizerState:
    """Inner noisy descent on the coupled objective with exponential averaging
    <y> <- alpha <y> + (1 - alpha) y; every L-th call the outer iterate moves
    along (x - <y>) / gamma and y, <y> reset to the outer anchor."""
    gamma = gamma_schedule(state.k, cfg, objective.dim)
    state.y = _inner_y_step(state.y, state.z, objective, gamma, cfg, state.rng)
    state.y_avg = cfg.alpha * state.y_avg + (1.0 - cfg.alpha) * state.y
    state.k += 1
    state.grad_evals += 1
    if state.k % cfg.L == 0:
        _outer_update(state, cfg, (state.z - state.y_avg) / gamma)
        state.y = state.z.copy()
        state.y_avg = state.z.copy()
    return state


def step_hj(state: OptimizerState, objective: Objective, cfg: OptimizerConfig,
            variant: str = "hj") -> OptimizerState:
    """Zero-viscosity variants: no extrinsic noise, last-iterate average.

    ``hj``   -- entropy dynamics with beta_inv_ex = 0 and <y> = y.
    ``hj2``  -- offset form: y tracks a smoothed displacement via
                y <- (1 - eta_y/gamma) y + eta_y grad_mb(x - y), and the outer
                step descends along grad_mb(x - y); y resets to 0.
    """
    if variant not in ("hj", "hj2"):
        raise ValueError("variant must be 'hj' or 'hj2'")
    cfg_hj = replace(cfg, beta_inv_ex=0.0)
    gamma = gamma_schedule(state.k, cfg_hj, objective.dim)
    if variant == "hj":
        state.y = _inner_y_step(state.y, state.z, objective, gamma, cfg_hj, state.rng)
        state.y_avg = state.y.copy()
        state.k += 1
        state.grad_evals += 1
        if state.k % cfg.L == 0:
            _outer_update(state, cfg_hj, (state.z - state.y_avg) / gamma)
            state.y = state.z.copy()
            state.y_avg = state.z.copy()
        return state
    g = _grad_mb(objective, state.z - state.y, state.rng, cfg.batch_size)
    step = min(cfg.eta_y, gamma)
    state.y = (1.0 - step / gamma) * state.y + step * g
    state.k += 1
    state.grad_evals += 1
    if state.k % cfg.L == 0:
        _outer_update(state, cfg_hj, g)
        state.y = np.zeros_like(state.y)
    return state


def step_heat(state: OptimizerState, objective: Objective, cfg: OptimizerConfig) -> OptimizerState:
    """One outer step: average grad_mb over L Gaussian parameter perturbations
    of scale sqrt(gamma) and descend along the average."""
    gamma = gamma_schedule(state.k, cfg, objective.dim)
    if gamma <= 0:
        raise ValueError("gamma must be positive")
    dim = state.x.shape[0]
    acc = np.zeros(dim)
    for _ in range(cfg.L):
        eps = math.sqrt(gamma) * state.rng.standard_normal(dim)
        acc += _grad_mb(objective, state.z + eps, state.rng, cfg.batch_size)
    state.k += cfg.L
    state.grad_evals += cfg.L
    _outer_update(state, cfg, acc / cfg.L)
    state.y = state.z.copy()
    state.y_avg = state.z.copy()
    return state


def step_elastic(state: OptimizerState, objective: Objective, cfg: OptimizerConfig) -> OptimizerState:
    """Coupled worker replicas with a synchronized barrier per call.

    Each worker performs the inner noisy descent step coupled to the center
    iterate; the center tracks the exponential average of the worker mean and
    moves along (x - <y_bar>) / gamma every L-th call.  Workers own
    independent RNG streams and update round-robin for determinism.
    """
    if state.workers is None or state.worker_rngs is None:
        raise ValueError("state was not initialized for elastic workers")
    if cfg.n_workers < 1:
        raise ValueError("need at least one worker")
    gamma = gamma_schedule(state.k, cfg, objective.dim)
    state.workers = [
        _inner_y_step(y_i, state.z, objective, gamma, cfg, rng_i)
        for y_i, rng_i in zip(state.workers, state.worker_rngs)
    ]
    ybar = np.mean(state.workers, axis=0)
    state.y = ybar
    state.y_avg = cfg.alpha * state.y_avg + (1.0 - cfg.alpha) * ybar
    state.k += 1
    state.grad_evals += len(state.workers)
    if state.k % cfg.L == 0:
        _outer_update(state, cfg, (state.z - state.y_avg) / gamma)
        state.workers = [state.z.copy() for _ in state.workers]
        state.y = state.z.copy()
        state.y_avg = state.z.copy()
    return state


def wrap_momentum(step_fn, delta: float):
    """Return a step function running the wrapped update with Nesterov
    lookahead strength ``delta`` at outer updates; delta=0 reproduces the
    unwrapped trajectory exactly."""
    if not (0.0 <= delta < 1.0):
        raise ValueError("delta must lie in [0, 1)")

    def stepped(state, objective, cfg, **kwargs):
        return step_fn(state, objective, replace(cfg, delta=delta), **kwargs)

    return stepped


# ---------------------------------------------------------------------------
# run records


@dataclass
class RunRecord:
    algo: str
    seed: int
    rows: list = field(default_factory=list)   # dict per outer update
    terminal_x: Array | None = None
    aborted: bool = False

    COLUMNS = ("k", "effective_epoch", "loss", "grad_norm", "gamma", "control_energy")

    def append(self, **row) -> None:
        self.rows.append(row)

    def column(self, name: str) -> Array:
        return np.array([r[name] for r in self.rows])

    @property
    def final_loss(self) -> float:
        return self.rows[-1]["loss"] if self.rows else math.nan

    def to_csv(self, path, include_wall_clock: bool = False) -> None:
        # wall clock is excluded by default so reruns are byte-identical
        cols = self.COLUMNS + (("wall_clock",) if include_wall_clock else ())
        with open(path, "w", newline="") as fh:
            fh.write(",".join(cols) + "\n")
            for r in self.rows:
                fh.write(",".join(repr(r[c]) if c != "k" else str(r[c]) for c in cols) + "\n")

    @classmethod
    def from_csv(cls, path, algo: str = "", seed: int = 0) -> "RunRecord":
        rec = cls(algo=algo, seed=seed)
        with open(path) as fh:
            header = fh.readline().strip().split(",")
            for line in fh:
                parts = line.strip().split(",")
                row = {h: (int(v) if h == "k" else float(v)) for h, v in zip(header, parts)}
                rec.rows.append(row)
        return rec


def run(algo: str, objective: Objective, cfg: OptimizerConfig | None, seed: int,
        n_outer_steps: int, x0=None, record_every: int = 1) -> RunRecord:
    """Execute ``n_outer_steps`` outer updates of the named optimizer.

    Deterministic replay: identical (config, seed) produce identical rows.
    A non-finite loss aborts and returns the partial record flagged.
    """
    if algo not in ALGORITHMS:
        raise ValueError(f"unknown algorithm {algo!r}")
    cfg = cfg if cfg is not None else default_config(algo)
    if x0 is None:
        x0 = objective.initial_point() if hasattr(objective, "initial_point") else np.ones(objective.dim)
    state = init_state(objective, x0, cfg, seed, algo)
    record = RunRecord(algo=algo, seed=seed)
    t_start = time.perf_counter()

    def log_row():
        loss = objective.value(state.x)
        gnorm = float(np.linalg.norm(objective.grad(state.x)))
        record.append(
            k=state.k,
            effective_epoch=state.grad_evals / state.steps_per_epoch,
            loss=loss,
            grad_norm=gnorm,
            gamma=gamma_schedule(max(state.k - 1, 0), cfg, objective.dim),
            control_energy=state.control_energy,
            wall_clock=time.perf_counter() - t_start,
        )
        return loss

    for outer in range(n_outer_steps):
        if algo == "sgd":
            step_sgd(state, objective, _effective_eta(state, cfg), cfg.beta_inv_ex, cfg.batch_size)
        elif algo == "heat":
            step_heat(state, objective, cfg)
        else:
            for _ in range(cfg.L):
                if algo == "entropy_sgd":
                    step_entropy_sgd(state, objective, cfg)
                elif algo in ("hj", "hj2"):
                    step_hj(state, objective, cfg, variant=algo)
                else:
                    step_elastic(state, objective, cfg)
        if (outer + 1) % record_every == 0 or outer == n_outer_steps - 1:
            loss = log_row()
            if not math.isfinite(loss):
                record.aborted = True
                break
    record.terminal_x = state.x.copy()
    return record
