"""First-order solver that optimizes the depth field against the objective.

The dense depth map itself is the decision variable: each iteration evaluates
the configured loss terms, takes one bias-corrected adaptive-moment step on
the subgradient, and clamps the field back into the physical depth range.
There is no learned component anywhere in the loop.
"""

import time
from dataclasses import dataclass

import numpy as np

from .grid import SparseDepth
from .losses import LossConfig, Objective

INIT_MODES = ("nearest_sample", "mean_sample", "constant")
TERMINATIONS = ("converged", "max_iterations", "diverged")

# pixel-distance chunk budget for the nearest-sample fill (elements)
_NEAREST_CHUNK = 4_000_000


@dataclass
class SolverConfig:
    """Iteration, step-size, and initialization settings for solve()."""

    max_iterations: int = 2000
    learning_rate: float = 1e-3
    momentum_decay: float = 0.9
    variance_decay: float = 0.999
    epsilon: float = 1e-8
    convergence_tol: float = 1e-6
    convergence_window: int = 50
    init: str = "nearest_sample"
    init_constant: float = None
    clamp_min: float = 1e-3
    clamp_max: float = 10.0
    seed: int = 0

    def __post_init__(self):
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be at least 1")
        if not self.learning_rate > 0:
            raise ValueError("learning_rate must be positive")
        for name in ("momentum_decay", "variance_decay"):
            decay = getattr(self, name)
            if not 0.0 <= decay < 1.0:
                raise ValueError(f"{name} must lie in [0, 1)")
        if not self.epsilon > 0:
            raise ValueError("epsilon must be positive")
        if not self.convergence_tol > 0:
            raise ValueError("convergence_tol must be positive")
        if self.convergence_window < 1:
            raise ValueError("convergence_window must be at least 1")
        if self.init not in INIT_MODES:
            raise ValueError(f"unknown init mode {self.init!r}")
        if self.init == "constant" and self.init_constant is None:
            raise ValueError("init 'constant' needs init_constant")
        if not (0 < self.clamp_min < self.clamp_max):
            raise ValueError("need 0 < clamp_min < clamp_max")

    @classmethod
    def outdoor(cls, **kwargs):
        # LiDAR-style range preset; everything else unchanged
        kwargs.setdefault("clamp_max", 80.0)
        return cls(**kwargs)


@dataclass
class SolveTrace:
    """Per-iteration objective record produced by solve().

    Arrays cover exactly the completed iterations: an iteration whose
    objective came back non-finite aborts the run and is not logged, so the
    logged values are finite throughout.
    """

    iterations: int
    termination: str
    wall_time_s: float
    totals: np.ndarray
    term_values: dict
    gradient_norms: np.ndarray

    def summary(self) -> dict:
        """Report payload. Wall time is deliberately excluded so written
        reports are byte-identical across reruns."""
        out = {"iterations": int(self.iterations), "termination": self.termination}
        if self.iterations > 0:
            out["objective_first"] = float(self.totals[0])
            out["objective_final"] = float(self.totals[-1])
            out["gradient_norm_final"] = float(self.gradient_norms[-1])
            out["terms_final"] = {
                name: float(vals[-1]) for name, vals in self.term_values.items()
            }
        return out


def initialize(sparse: SparseDepth, mode: str, shape, constant=None,
               clamp_min: float = 1e-3, clamp_max: float = 10.0) -> np.ndarray:
    """Build the starting depth field for a solve.

    nearest_sample assigns each pixel the depth of its nearest sample in
    Euclidean pixel distance, ties going to the smallest row-major sample
    index. mean_sample fills with the mean sample depth, constant with the
    given value. The result is clamped to [clamp_min, clamp_max].
    """
    if mode not in INIT_MODES:
        raise ValueError(f"unknown init mode {mode!r}")
    if not (0 < clamp_min < clamp_max):
        raise ValueError("need 0 < clamp_min < clamp_max")
    height, width = int(shape[0]), int(shape[1])
    if height < 2 or width < 2:
        raise ValueError("field must be at least 2x2")

    if mode == "constant":
        if constant is None:
            raise ValueError("constant mode needs a value")
        out = np.full((height, width), float(constant))
    else:
        if sparse is None or sparse.count == 0:
            raise ValueError(f"init mode {mode!r} needs at least one sample")
        rows, cols, depths = sparse.samples()
        if mode == "mean_sample":
            out = np.full((height, width), float(np.mean(depths)))
        else:
            out = np.empty((height, width))
            cols_grid = np.arange(width, dtype=np.int64)[:, None]
            dc2 = (cols_grid - cols[None, :]) ** 2  # (W, n)
            block = max(1, _NEAREST_CHUNK // max(width * len(rows), 1))
            for r0 in range(0, height, block):
                r1 = min(r0 + block, height)
                rows_grid = np.arange(r0, r1, dtype=np.int64)[:, None, None]
                d2 = (rows_grid - rows[None, None, :]) ** 2 + dc2[None, :, :]
                # argmin returns the first minimum: smallest row-major sample
                out[r0:r1] = depths[np.argmin(d2, axis=2)]
    return np.clip(out, clamp_min, clamp_max)


def _converged(totals, t, window, tol):
    if t < 2 * window:
        return False
    prev = float(np.mean(totals[t - 2 * window:t - window]))
    curr = float(np.mean(totals[t - window:t]))
    return abs(curr - prev) <= tol * max(abs(prev), 1e-12)


def solve(sparse: SparseDepth, mask=None, image=None, loss_cfg: LossConfig = None,
          solver_cfg: SolverConfig = None, seg_pred=None):
    """Minimize the configured objective over the depth field.

    Returns (depth, trace). Termination is 'converged' when the relative
    change between consecutive windowed means of the objective falls below
    convergence_tol, 'max_iterations' at the cap, or 'diverged' when the
    objective goes non-finite, in which case the best field seen so far is
    returned. Runs are bit-deterministic for fixed inputs and configs.
    """
    if sparse is None:
        raise ValueError("solve needs sparse depth samples")
    cfg = solver_cfg if solver_cfg is not None else SolverConfig()
    objective = Objective(sparse.shape, cfg=loss_cfg, sparse=sparse, mask=mask,
                          image=image, seg_pred=seg_pred)

    depth = initialize(sparse, cfg.init, sparse.shape, constant=cfg.init_constant,
                       clamp_min=cfg.clamp_min, clamp_max=cfg.clamp_max)

    cap = cfg.max_iterations
    totals = np.zeros(cap)
    grad_norms = np.zeros(cap)
    term_values = {name: np.zeros(cap) for name in objective.cfg.terms}

    m = np.zeros(sparse.shape)
    v = np.zeros(sparse.shape)
    gg = np.empty(sparse.shape)
    step = np.empty(sparse.shape)
    denom = np.empty(sparse.shape)
    beta1, beta2 = cfg.momentum_decay, cfg.variance_decay
    lr, eps = cfg.learning_rate, cfg.epsilon

    best = depth.copy()
    best_total = np.inf
    iterations = 0
    termination = "max_iterations"
    started = time.perf_counter()

    for t in range(1, cap + 1):
        report = objective.evaluate(depth, with_selections=False)
        if not np.isfinite(report.total):
            # abandon the poisoned iterate; the best finite field wins
            termination = "diverged"
            depth = best
            break
        iterations = t
        g = report.gradient
        np.multiply(g, g, out=gg)
        totals[t - 1] = report.total
        grad_norms[t - 1] = np.sqrt(gg.sum())
        for name in term_values:
            term_values[name][t - 1] = getattr(report, name)
        if report.total < best_total:
            best_total = report.total
            best = depth.copy()
        if _converged(totals, t, cfg.convergence_window, cfg.convergence_tol):
            termination = "converged"
            break

        m *= beta1
        m += (1.0 - beta1) * g
        v *= beta2
        np.multiply(g, 1.0 - beta2, out=step)  # step doubles as scratch here
        step *= g
        v += step
        np.divide(m, 1.0 - beta1 ** t, out=step)
        step *= lr
        np.divide(v, 1.0 - beta2 ** t, out=denom)
        np.sqrt(denom, out=denom)
        denom += eps
        step /= denom
        depth -= step
        np.clip(depth, cfg.clamp_min, cfg.clamp_max, out=depth)

    wall = time.perf_counter() - started
    trace = SolveTrace(
        iterations=iterations,
        termination=termination,
        wall_time_s=wall,
        totals=totals[:iterations].copy(),
        term_values={k: arr[:iterations].copy() for k, arr in term_values.items()},
        gradient_norms=grad_norms[:iterations].copy(),
    )
    return depth, trace


def indoor_config(**kwargs) -> SolverConfig:
    """Default indoor-range solver settings (10 m cap)."""
    return SolverConfig(**kwargs)


def outdoor_config(**kwargs) -> SolverConfig:
    """Outdoor-range preset (80 m cap), other defaults unchanged."""
    return SolverConfig.outdoor(**kwargs)
