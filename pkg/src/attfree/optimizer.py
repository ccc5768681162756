"""Damped Gauss-Newton (Levenberg-Marquardt) solver over the epoch chain.

The normal equations inherit the chain sparsity: 8x8 blocks on the
diagonal, one 8x8 coupling block per consecutive epoch pair. Each outer
iteration linearizes once (recomputing the robust reweighting at the
current iterate) and retries the damped solve with a larger lambda until
the robustified cost strictly decreases.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import backend as backend_mod
from .errors import NumericalError
from .graph import FactorGraph
from .state import TrajectoryEstimate


@dataclass
class LmConfig:
    initial_lambda: float = 1e-4
    lambda_up: float = 10.0
    lambda_down: float = 0.1
    max_iterations: int = 100
    cost_rel_tol: float = 1e-5
    step_norm_tol: float = 1e-10
    solver: str = "block_tridiag"  # "block_tridiag" | "dense"
    backend: Optional[str] = None  # None -> env/auto
    max_solve_retries: int = 25

    def __post_init__(self):
        if self.initial_lambda <= 0 or self.lambda_up <= 1 or not (0 < self.lambda_down < 1):
            raise ValueError("damping parameters must satisfy lambda>0, up>1, 0<down<1")
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be at least 1")
        if self.solver not in ("block_tridiag", "dense"):
            raise ValueError(f"solver must be 'block_tridiag' or 'dense', got {self.solver!r}")


@dataclass
class SolveReport:
    iterations: int = 0
    initial_cost: float = math.nan
    final_cost: float = math.nan
    converged: bool = False
    termination: str = ""
    per_iteration_ms: list[float] = field(default_factory=list)
    cost_history: list[float] = field(default_factory=list)  # cost after each accepted step
    backend: str = ""

    @property
    def mean_iteration_ms(self) -> float:
        return float(np.mean(self.per_iteration_ms)) if self.per_iteration_ms else 0.0


def _damp(D: np.ndarray, lam: float) -> np.ndarray:
    """Marquardt scaling: multiply the diagonal of H by (1 + lambda)."""
    Dd = D.copy()
    idx = np.arange(D.shape[1])
    Dd[:, idx, idx] *= 1.0 + lam
    return Dd


def _dense_solve(D: np.ndarray, U: np.ndarray, b: np.ndarray):
    """Assemble the full matrix and solve directly (reference path)."""
    n, k, _ = D.shape
    H = np.zeros((n * k, n * k))
    for i in range(n):
        H[i * k : (i + 1) * k, i * k : (i + 1) * k] = D[i]
        if i < n - 1:
            H[i * k : (i + 1) * k, (i + 1) * k : (i + 2) * k] = U[i]
            H[(i + 1) * k : (i + 2) * k, i * k : (i + 1) * k] = U[i].T
    try:
        return np.linalg.solve(H, b.reshape(-1)).reshape(n, k), True
    except np.linalg.LinAlgError:
        return None, False


def _solve_damped(kern, cfg: LmConfig, D, U, g, lam: float):
    rhs = -g.reshape(D.shape[0], D.shape[1])
    Dd = _damp(D, lam)
    if cfg.solver == "dense":
        step, ok = _dense_solve(Dd, U, rhs)
    else:
        step, ok = kern.solve_block_tridiag(Dd, U, rhs)
    return (step.reshape(-1) if ok else None), ok


def linearize_and_solve_normal_equations(graph: FactorGraph, states, lam: float,
                                         cfg: Optional[LmConfig] = None) -> np.ndarray:
    """One damped normal-equation solve at the given linearization point.

    ``states`` may be a TrajectoryEstimate or an already-flat vector.
    Raises NumericalError when the damped system cannot be factored.
    """
    cfg = cfg or LmConfig()
    kern = backend_mod.get_backend(cfg.backend)
    x = graph.layout.flatten(states) if isinstance(states, TrajectoryEstimate) else np.asarray(states, dtype=float)
    _, D, U, g = kern.linearize(graph.packed(), x, True)
    step, ok = _solve_damped(kern, cfg, D, U, g, lam)
    if not ok:
        raise NumericalError(f"damped normal equations not positive definite at lambda={lam:g}")
    return step


def solve(graph: FactorGraph, initial: TrajectoryEstimate,
          cfg: Optional[LmConfig] = None) -> tuple[TrajectoryEstimate, SolveReport]:
    """Minimize the robustified objective from the given initial trajectory."""
    cfg = cfg or LmConfig()
    kern = backend_mod.get_backend(cfg.backend)
    ga = graph.packed()
    x = graph.layout.flatten(initial)

    report = SolveReport(backend=kern.name)
    cost = kern.evaluate_cost(ga, x)
    if not math.isfinite(cost):
        raise NumericalError(f"initial objective is not finite ({cost}); check the input data")
    report.initial_cost = cost

    lam = cfg.initial_lambda
    retries = 0
    while report.iterations < cfg.max_iterations:
        tic = time.perf_counter()
        c0, D, U, g = kern.linearize(ga, x, True)
        accepted = False
        while True:
            step, ok = _solve_damped(kern, cfg, D, U, g, lam)
            if not ok:
                retries += 1
                lam *= cfg.lambda_up
                if retries > cfg.max_solve_retries:
                    raise NumericalError(
                        f"normal equations stayed indefinite after {retries} damping retries "
                        f"(lambda={lam:g}); the graph is likely under-constrained"
                    )
                continue
            step_norm = float(np.linalg.norm(step))
            if step_norm < cfg.step_norm_tol:
                report.termination = "step_below_tol"
                report.converged = True
                break
            c_new = kern.evaluate_cost(ga, x + step)
            if math.isfinite(c_new) and c_new < c0:
                x = x + step
                cost = c_new
                lam = max(lam * cfg.lambda_down, 1e-15)
                accepted = True
                break
            lam *= cfg.lambda_up
            if lam > 1e18:
                report.termination = "damping_exhausted"
                report.converged = True  # no strictly-decreasing step exists to FP precision
                break
        if accepted:
            report.iterations += 1
            report.per_iteration_ms.append((time.perf_counter() - tic) * 1e3)
            report.cost_history.append(cost)
            if c0 - cost <= cfg.cost_rel_tol * max(c0, 1e-300):
                report.termination = "cost_decrease_below_tol"
                report.converged = True
                break
        else:
            break
    else:
        report.termination = "max_iterations"

    report.final_cost = cost
    return graph.layout.unflatten(x), report
