"""Single-level bound-constrained trust-region method with an l-infinity region."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable, Protocol

import numpy as np

from .qp import active_set_qp, model, projected_cg

log = logging.getLogger(__name__)

FEAS_TOL = 1e-12


class Objective(Protocol):
    def value(self, x: np.ndarray) -> float: ...

    def gradient(self, x: np.ndarray) -> np.ndarray: ...

    def hessian(self, x: np.ndarray): ...


@dataclass(frozen=True)
class TrustRegionConfig:
    """Trust-region constants; defaults are the published TR/RMTR choices."""

    eta1: float = 0.1
    eta2: float = 0.75
    gamma1: float = 0.5
    gamma2: float = 2.0
    delta0: float = 1.0
    delta_max: float = 1e8  # keeps repeated expansion from overflowing
    max_iterations: int = 10_000
    cg_iterations: int = 10
    cg_rtol: float = 1e-8
    eps_g: float = 1e-8
    eps_s: float = 1e-14

    def __post_init__(self):
        if not 0 < self.eta1 <= self.eta2 < 1:
            raise ValueError("need 0 < eta1 <= eta2 < 1")
        if not 0 < self.gamma1 < 1 < self.gamma2:
            raise ValueError("need 0 < gamma1 < 1 < gamma2")
        if not 0 < self.delta0 <= self.delta_max:
            raise ValueError("need 0 < delta0 <= delta_max")
        if self.max_iterations < 0 or self.cg_iterations < 1:
            raise ValueError("iteration counts must be positive")


@dataclass
class BoxBounds:
    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        self.lower = np.asarray(self.lower, dtype=float)
        self.upper = np.asarray(self.upper, dtype=float)
        if self.lower.shape != self.upper.shape or self.lower.ndim != 1:
            raise ValueError("lower and upper must be vectors of equal length")
        if np.any(np.isnan(self.lower)) or np.any(np.isnan(self.upper)):
            raise ValueError("bounds must not be NaN")
        if np.any(self.lower > self.upper):
            raise ValueError("lower bound exceeds upper bound")

    @classmethod
    def unbounded(cls, n: int) -> "BoxBounds":
        return cls(np.full(n, -np.inf), np.full(n, np.inf))

    @property
    def n(self) -> int:
        return self.lower.size

    @property
    def pinned(self) -> np.ndarray:
        return self.lower == self.upper

    def contains(self, x: np.ndarray, tol: float = FEAS_TOL) -> bool:
        return bool(np.all(x >= self.lower - tol) and np.all(x <= self.upper + tol))

    def violation(self, x: np.ndarray) -> float:
        return float(max(np.max(self.lower - x, initial=0.0), np.max(x - self.upper, initial=0.0)))

    def project(self, y: np.ndarray) -> np.ndarray:
        return np.clip(y, self.lower, self.upper)

    def intersect(self, other: "BoxBounds") -> "BoxBounds":
        return BoxBounds(np.maximum(self.lower, other.lower), np.minimum(self.upper, other.upper))


def working_set(x: np.ndarray, bounds: BoxBounds, delta: float, tol: float = FEAS_TOL) -> BoxBounds:
    """Trust region intersected with the feasible set, as bounds on the step."""
    if delta <= 0:
        raise ValueError("trust-region radius must be positive")
    if not bounds.contains(x, tol):
        raise ValueError(f"infeasible iterate (violation {bounds.violation(x):.3e})")
    lo = np.maximum(bounds.lower - x, -delta)
    hi = np.minimum(bounds.upper - x, delta)
    # absorb round-off from a feasible-within-tol iterate
    return BoxBounds(np.minimum(lo, 0.0), np.maximum(hi, 0.0))


def solve_subproblem(
    g: np.ndarray,
    H,
    step_bounds: BoxBounds,
    cg_iterations: int = 10,
    method: str = "pcg",
    rtol: float = 1e-8,
) -> np.ndarray:
    """Approximate minimizer of ``<g,s> + 1/2 <s,Hs>`` on the step box.

    ``method`` is ``"pcg"`` (projected CG, the level smoother) or ``"exact"``
    (active-set QP, used on the coarsest level).
    """
    lo, hi = step_bounds.lower, step_bounds.upper
    if method == "pcg":
        return projected_cg(g, H, lo, hi, max_iter=cg_iterations, rtol=rtol)
    if method == "exact":
        return active_set_qp(g, H, lo, hi)
    raise ValueError(f"unknown subproblem method {method!r}")


RATIO_FLOOR = 1e-16
CANCELLATION = 1e-8


def tr_ratio(f_old: float, f_new: float, m0: float, m_s: float, ared: float | None = None) -> float:
    """Actual over predicted reduction; ``-inf`` flags a step to reject.

    Without ``ared`` the reduction is ``f_old - f_new``, which cannot resolve
    predicted reductions below ``1e-16 |f_old|``; such steps are rejected.
    An ``ared`` from :func:`actual_reduction` stays accurate at any scale, so
    then only a nonpositive prediction rejects.
    """
    pred = m0 - m_s
    floor = RATIO_FLOOR * abs(f_old) if ared is None else 0.0
    if not np.isfinite(f_new) or not pred > floor:
        return -np.inf
    if ared is None:
        ared = f_old - f_new
    return ared / pred


def actual_reduction(f_old: float, f_new: float, g_old: np.ndarray, s: np.ndarray, grad_new: Callable[[], np.ndarray]) -> float:
    """``f_old - f_new``, or its trapezoidal estimate ``-<g_old + g_new, s>/2`` under cancellation.

    When the two values agree to about eight digits their difference carries
    little information; the gradient form is accurate to third order in s.
    """
    ared = f_old - f_new
    if not np.isfinite(f_new) or abs(ared) > CANCELLATION * max(abs(f_old), abs(f_new)):
        return ared
    return -0.5 * float((g_old + grad_new()) @ s)


def radius_update(rho: float, delta: float, config: TrustRegionConfig) -> float:
    if delta <= 0:
        raise ValueError("trust-region radius must be positive")
    if rho < config.eta1:
        return config.gamma1 * delta
    if rho > config.eta2:
        return min(config.gamma2 * delta, config.delta_max)
    return delta


def criticality(x: np.ndarray, g: np.ndarray, bounds: BoxBounds) -> float:
    """``|| P(x - g) - x ||_2`` with P the projection onto the box."""
    return float(np.linalg.norm(bounds.project(x - g) - x))


@dataclass
class TraceRecord:
    iteration: int
    f: float
    criticality: float
    delta: float
    rho: float
    accepted: bool
    step_norm: float


@dataclass
class TRResult:
    x: np.ndarray
    delta: float
    iterations: int
    termination: str  # "criticality" | "step_size" | "max_iter"
    f: float
    criticality: float
    history: list[TraceRecord] = field(default_factory=list)


def local_tr(
    objective: Objective,
    x0: np.ndarray,
    bounds: BoxBounds,
    delta0: float | None = None,
    eps_g: float | None = None,
    i_max: int | None = None,
    config: TrustRegionConfig = TrustRegionConfig(),
    method: str = "pcg",
    check_initial: bool = True,
    callback: Callable[[TraceRecord], None] | None = None,
) -> TRResult:
    """Bound-constrained TR iterations from a feasible ``x0``.

    A step is accepted iff ``rho > eta1`` and the objective does not increase.  The loop stops when the
    criticality of the current iterate drops to ``eps_g``, when a trial step
    is shorter than ``eps_s`` or after ``i_max`` iterations.  With
    ``check_initial`` a critical ``x0`` returns after zero iterations.
    """
    delta = config.delta0 if delta0 is None else float(delta0)
    eps_g = config.eps_g if eps_g is None else eps_g
    i_max = config.max_iterations if i_max is None else i_max
    x = np.array(x0, dtype=float)
    if not bounds.contains(x):
        raise ValueError(f"x0 is infeasible (violation {bounds.violation(x):.3e})")
    f = objective.value(x)
    g = objective.gradient(x)
    crit = criticality(x, g, bounds)
    history: list[TraceRecord] = []
    if check_initial and crit <= eps_g:
        return TRResult(x, delta, 0, "criticality", f, crit, history)
    H = None
    termination = "max_iter"
    it = 0
    for it in range(1, i_max + 1):
        if H is None:
            H = objective.hessian(x)
        wb = working_set(x, bounds, delta)
        s = solve_subproblem(g, H, wb, config.cg_iterations, method, config.cg_rtol)
        step_norm = float(np.linalg.norm(s))
        pred_s = model(g, H, s)
        x_trial = bounds.project(x + s)
        f_trial = objective.value(x_trial) if step_norm > 0 else f
        ared = actual_reduction(f, f_trial, g, x_trial - x, lambda: objective.gradient(x_trial))
        rho = tr_ratio(f, f_trial, 0.0, pred_s, ared)
        # a trapezoidal ared can be positive while f_trial rounds above f
        accepted = bool(rho > config.eta1 and f_trial <= f)
        if accepted:
            x, f = x_trial, f_trial
            g = objective.gradient(x)
            H = None
            crit = criticality(x, g, bounds)
        delta = radius_update(rho if accepted else -np.inf, delta, config)
        rec = TraceRecord(it, f, crit, delta, rho, accepted, step_norm)
        history.append(rec)
        if callback is not None:
            callback(rec)
        log.debug("tr it=%d f=%.12e crit=%.3e delta=%.3e rho=%.3f acc=%s", it, f, crit, delta, rho, accepted)
        if crit <= eps_g:
            termination = "criticality"
            break
        if step_norm < config.eps_s:
            termination = "step_size"
            break
    return TRResult(x, delta, it, termination, f, crit, history)


def coarsest_solve(
    objective: Objective,
    x0: np.ndarray,
    bounds: BoxBounds,
    delta: float,
    eps_g: float | None = None,
    i_max: int = 2,
    config: TrustRegionConfig = TrustRegionConfig(),
    callback: Callable[[TraceRecord], None] | None = None,
) -> TRResult:
    """TR iterations whose subproblems are solved accurately by the active-set QP."""
    return local_tr(
        objective, x0, bounds, delta, eps_g, i_max, config, method="exact", callback=callback
    )
