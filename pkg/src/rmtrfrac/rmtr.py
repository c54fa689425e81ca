"""Recursive multilevel trust-region (RMTR) V-cycles.

Level ``L`` minimizes the true objective.  Coarser levels minimize a model
``h^l`` built at the start of every visit from the restricted gradient and
Hessian of the next finer level, inside a feasible set that keeps every
prolongated correction admissible for the finer irreversibility bounds.
"""
from __future__ import annotations

import enum
import logging
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
import scipy.sparse as sp

from .fracture import indicator_chi1
from .transfer import TransferHierarchy
from .trust_region import (
    FEAS_TOL,
    BoxBounds,
    Objective,
    TrustRegionConfig,
    actual_reduction,
    coarsest_solve,
    criticality,
    local_tr,
    radius_update,
    tr_ratio,
)

log = logging.getLogger(__name__)


class CoarseModelKind(enum.Enum):
    FIRST_ORDER = "first"
    GALERKIN = "galerkin"
    SECOND_ORDER = "second"
    SOLUTION_DEPENDENT = "sd"

    @classmethod
    def parse(cls, name: "str | CoarseModelKind") -> "CoarseModelKind":
        if isinstance(name, cls):
            return name
        aliases = {
            "first": cls.FIRST_ORDER,
            "firstorder": cls.FIRST_ORDER,
            "galerkin": cls.GALERKIN,
            "second": cls.SECOND_ORDER,
            "secondorder": cls.SECOND_ORDER,
            "sd": cls.SOLUTION_DEPENDENT,
            "solutiondependent": cls.SOLUTION_DEPENDENT,
        }
        key = str(name).lower().replace("_", "").replace("-", "")
        if key not in aliases:
            raise ValueError(f"unknown coarse model {name!r}")
        return aliases[key]


class _Memo:
    """One-entry caches of value, gradient and Hessian keyed on x."""

    def __init__(self):
        self._cache: dict[str, tuple[np.ndarray, object]] = {}

    def _get(self, name, x, fn):
        hit = self._cache.get(name)
        if hit is not None and hit[0].shape == x.shape and np.array_equal(hit[0], x):
            return hit[1]
        val = fn(x)
        self._cache[name] = (np.array(x, copy=True), val)
        return val


class LevelObjective(_Memo):
    """Level model ``h^l``.

    Non-Galerkin kinds evaluate ``base(x) + <dg, x-x0> + w/2 <x-x0, dH (x-x0)>``
    where ``w`` is the second-order gate.  The Galerkin kind is the quadratic
    ``<Rg, x-x0> + 1/2 <x-x0, RHI (x-x0)>``.
    """

    def __init__(
        self,
        kind: CoarseModelKind | None,
        base: Objective | None,
        x0: np.ndarray,
        delta_g: np.ndarray,
        delta_H=None,
        second_order_weight: float = 0.0,
        chi1: int = 1,
        restricted_g: np.ndarray | None = None,
        restricted_H=None,
    ):
        super().__init__()
        self.kind = kind
        self.base = base
        self.x0 = np.asarray(x0, dtype=float)
        self.delta_g = np.asarray(delta_g, dtype=float)
        self.delta_H = delta_H
        self.second_order_weight = float(second_order_weight)
        self.chi1 = chi1
        self.restricted_g = restricted_g
        self.restricted_H = restricted_H
        if kind is CoarseModelKind.GALERKIN and (restricted_g is None or restricted_H is None):
            raise ValueError("Galerkin model needs the restricted gradient and Hessian")

    @classmethod
    def finest(cls, energy: Objective, n: int) -> "LevelObjective":
        return cls(None, energy, np.zeros(n), np.zeros(n))

    @property
    def n(self) -> int:
        return self.x0.size

    @property
    def _uses_dH(self) -> bool:
        return self.delta_H is not None and self.second_order_weight != 0.0

    def _check(self, x):
        if x.shape != self.x0.shape:
            raise ValueError(f"dimension mismatch: got {x.shape}, level has {self.x0.shape}")

    def value(self, x: np.ndarray) -> float:
        self._check(x)
        return self._get("f", x, self._value)

    def gradient(self, x: np.ndarray) -> np.ndarray:
        self._check(x)
        return self._get("g", x, self._gradient)

    def hessian(self, x: np.ndarray):
        self._check(x)
        return self._get("H", x, self._hessian)

    def _value(self, x):
        s = x - self.x0
        if self.kind is CoarseModelKind.GALERKIN:
            return float(self.restricted_g @ s + 0.5 * s @ (self.restricted_H @ s))
        v = self.base.value(x) + float(self.delta_g @ s)
        if self._uses_dH:
            v += 0.5 * self.second_order_weight * float(s @ (self.delta_H @ s))
        return float(v)

    def _gradient(self, x):
        s = x - self.x0
        if self.kind is CoarseModelKind.GALERKIN:
            return self.restricted_g + self.restricted_H @ s
        g = self.base.gradient(x) + self.delta_g
        if self._uses_dH:
            g = g + self.second_order_weight * (self.delta_H @ s)
        return g

    def _hessian(self, x):
        if self.kind is CoarseModelKind.GALERKIN:
            return self.restricted_H
        H = self.base.hessian(x)
        if self._uses_dH:
            H = (H + self.second_order_weight * self.delta_H).tocsr()
        return H


def galerkin_product(R, H, I) -> sp.csr_matrix:
    """Symmetric restricted Hessian ``R H I`` with ``R = I^T``."""
    M = (R @ (H @ I)).tocsr()
    # the triple product is symmetric up to round-off; make it exact
    return ((M + M.T) * 0.5).tocsr()


def build_level_objective(
    kind: CoarseModelKind,
    fine_g: np.ndarray,
    fine_H,
    x_fine: np.ndarray,
    level: int,
    transfers: TransferHierarchy,
    base: Objective | None = None,
    chi1: int = 1,
    chi1_gates_second_order: str = "inverted",
) -> LevelObjective:
    """Model on ``level`` from the finer level's gradient and Hessian at ``x_fine``.

    ``base`` is the discretized energy on ``level`` (the modified energy for
    the solution-dependent kind); it is ignored for Galerkin.
    """
    kind = CoarseModelKind.parse(kind)
    P = transfers.projection(level).matrix
    R = transfers.restriction(level).matrix
    I = transfers.prolongation(level).matrix
    if fine_g.shape[0] != R.shape[1] or x_fine.shape[0] != P.shape[1]:
        raise ValueError("fine vectors do not match the transfer operators of this level")
    x0 = P @ x_fine
    rg = R @ fine_g
    if kind is CoarseModelKind.GALERKIN:
        RHI = galerkin_product(R, fine_H, I)
        return LevelObjective(kind, None, x0, np.zeros_like(x0), restricted_g=rg, restricted_H=RHI, chi1=chi1)
    if base is None:
        raise ValueError(f"{kind.name} model needs a level energy")
    weight = 0.0
    if kind is CoarseModelKind.SECOND_ORDER:
        weight = 1.0
    elif kind is CoarseModelKind.SOLUTION_DEPENDENT:
        if chi1_gates_second_order == "inverted":
            weight = float(1 - chi1)
        elif chi1_gates_second_order == "as_printed":
            weight = float(chi1)
        else:
            raise ValueError("chi1_gates_second_order must be 'inverted' or 'as_printed'")
    delta_g = rg - base.gradient(x0)
    delta_H = RHI = None
    if weight != 0.0:
        RHI = galerkin_product(R, fine_H, I)
        delta_H = (RHI - base.hessian(x0)).tocsr()
    return LevelObjective(kind, base, x0, delta_g, delta_H, weight, chi1, rg, RHI)


@dataclass
class LevelFeasibleSet:
    irrev_lower: np.ndarray
    irrev_upper: np.ndarray
    tr_lower: np.ndarray
    tr_upper: np.ndarray

    @property
    def irreversibility(self) -> BoxBounds:
        return BoxBounds(self.irrev_lower, self.irrev_upper)

    @property
    def combined(self) -> BoxBounds:
        lo = np.maximum(self.irrev_lower, self.tr_lower)
        hi = np.minimum(self.irrev_upper, self.tr_upper)
        return BoxBounds(lo, np.maximum(hi, lo))


def restrict_bounds(
    fine_lb: np.ndarray,
    fine_ub: np.ndarray,
    fine_x: np.ndarray,
    fine_delta: float,
    fine_tl: np.ndarray,
    fine_tu: np.ndarray,
    level: int,
    transfers: TransferHierarchy,
    constrained_fine: np.ndarray,
    constrained_coarse: np.ndarray,
    x0: np.ndarray | None = None,
) -> LevelFeasibleSet:
    """Coarse feasible set for ``level`` from the bounds of ``level + 1``.

    Irreversibility-type bounds (``constrained`` DOFs, the phase field) are
    shifted copies of ``x0`` by the extreme fine slack, so any prolongated
    coarse correction respects them.  Fine DOFs pinned by ``lb == ub`` are
    excluded from the slack and instead pin every coarse DOF they interpolate
    from.  Trust-region bounds are the projections of the clipped fine boxes.
    """
    if fine_delta <= 0:
        raise ValueError("fine radius must be positive")
    P = transfers.projection(level).matrix
    I = transfers.prolongation(level).matrix
    if x0 is None:
        x0 = P @ fine_x
    pinned_f = fine_lb == fine_ub
    free_c = constrained_fine & ~pinned_f
    lo_slack = float(np.max((fine_lb - fine_x)[free_c], initial=-np.inf))
    up_slack = float(np.min((fine_ub - fine_x)[free_c], initial=np.inf))
    # feasibility of fine_x makes these <= 0 and >= 0; guard round-off
    lo_slack = min(lo_slack, 0.0)
    up_slack = max(up_slack, 0.0)
    lb = np.where(constrained_coarse, x0 + lo_slack, -np.inf)
    ub = np.where(constrained_coarse, x0 + up_slack, np.inf)
    # coarse DOFs feeding a pinned fine DOF may not move
    touch = np.asarray(abs(I[pinned_f]).sum(axis=0)).ravel() > 0
    lb = np.where(touch, x0, lb)
    ub = np.where(touch, x0, ub)
    tl = P @ np.maximum(fine_tl, fine_x - fine_delta)
    tu = P @ np.minimum(fine_tu, fine_x + fine_delta)
    # P has negative weights, so the projected box need not contain x0
    tl = np.minimum(tl, x0)
    tu = np.maximum(tu, x0)
    return LevelFeasibleSet(lb, ub, tl, tu)


def multilevel_ratio(
    h_fine_old: float, h_fine_new: float, h_coarse_init: float, h_coarse_final: float, ared: float | None = None
) -> float:
    """Fine-level reduction over coarse-level reduction; ``-inf`` rejects."""
    if not np.isfinite(h_coarse_final) or not np.isfinite(h_coarse_init):
        return -np.inf
    return tr_ratio(h_fine_old, h_fine_new, h_coarse_init, h_coarse_final, ared)


@dataclass(frozen=True)
class RMTRConfig:
    tr: TrustRegionConfig = TrustRegionConfig()
    kind: CoarseModelKind = CoarseModelKind.SOLUTION_DEPENDENT
    mu1: int = 1
    mu2: int = 1
    coarse_iterations: int = 2
    max_cycles: int = 10_000
    chi1_threshold: float = 0.85
    chi1_gates_second_order: str = "inverted"
    smoother: str = "pcg"  # "pcg" or "exact"
    recursion_cutoff: float = 1e-14

    def __post_init__(self):
        object.__setattr__(self, "kind", CoarseModelKind.parse(self.kind))
        if self.mu1 < 0 or self.mu2 < 0 or self.coarse_iterations < 1:
            raise ValueError("smoothing counts must be >= 0 and coarse iterations >= 1")
        if self.chi1_gates_second_order not in ("inverted", "as_printed"):
            raise ValueError("chi1_gates_second_order must be 'inverted' or 'as_printed'")
        if self.smoother not in ("pcg", "exact"):
            raise ValueError("smoother must be 'pcg' or 'exact'")


@dataclass
class MultilevelProblem:
    """Everything the V-cycle needs besides the finest bounds.

    ``energies[l]`` is the discretized objective on level ``l``;
    ``modified(l, chi1)`` returns the modified energy used by the
    solution-dependent model.  ``constrained[l]`` flags the DOFs carrying
    irreversibility-type bounds and ``chi1_dofs`` the finest DOFs inspected
    by the crack indicator.
    """

    transfers: TransferHierarchy
    energies: Sequence[Objective]
    constrained: Sequence[np.ndarray]
    modified: Callable[[int, int], Objective] | None = None
    chi1_dofs: np.ndarray | None = None

    def __post_init__(self):
        if len(self.energies) != self.transfers.n_levels or len(self.constrained) != self.transfers.n_levels:
            raise ValueError("need one energy and one mask per level")

    @property
    def finest(self) -> int:
        return self.transfers.n_levels - 1


@dataclass
class CycleRecord:
    cycle: int
    iterations: dict[int, int]
    f: float
    criticality: float
    coarse_accepted: bool | None
    rho: float
    chi1: int
    correction: float
    bound_violation: float
    tr_violation: float


@dataclass
class RMTRResult:
    x: np.ndarray
    delta: float
    cycles: int
    termination: str  # "criticality" | "step_size" | "max_iter" | "non_finite"
    f: float
    criticality: float
    history: list[CycleRecord] = field(default_factory=list)


class _CycleStats:
    def __init__(self):
        self.iterations: dict[int, int] = {}
        self.max_trial = 0.0
        self.coarse_accepted: bool | None = None
        self.rho = np.nan
        self.bound_violation = 0.0
        self.tr_violation = 0.0

    def count(self, level: int, n: int):
        self.iterations[level] = self.iterations.get(level, 0) + n


class _VCycle:
    def __init__(self, problem: MultilevelProblem, config: RMTRConfig):
        self.pb = problem
        self.cfg = config
        self.tr = config.tr

    def _base(self, level: int, chi1: int) -> Objective | None:
        kind = self.cfg.kind
        if kind is CoarseModelKind.GALERKIN:
            return None
        if kind is CoarseModelKind.SOLUTION_DEPENDENT:
            if self.pb.modified is None:
                raise ValueError("solution-dependent model needs modified energies")
            return self.pb.modified(level, chi1)
        return self.pb.energies[level]

    def _smooth(self, obj, x, bounds, delta, iters, stats, level, finest):
        if iters == 0:
            return x, delta, None
        res = local_tr(
            obj, x, bounds, delta, self.tr.eps_g, iters, self.tr,
            method=self.cfg.smoother, check_initial=False,
        )
        stats.count(level, res.iterations)
        if finest:
            for rec in res.history:
                stats.max_trial = max(stats.max_trial, rec.step_norm)
            stats.bound_violation = max(stats.bound_violation, bounds.violation(res.x))
        return res.x, res.delta, res

    def run(self, level, obj, x, feas: LevelFeasibleSet, delta, chi1, stats):
        """One visit of ``level``; returns the final iterate and radius."""
        finest = level == self.pb.finest
        bounds = feas.combined
        if level == 0:
            res = coarsest_solve(obj, x, bounds, delta, self.tr.eps_g, self.cfg.coarse_iterations, self.tr)
            stats.count(0, res.iterations)
            return res.x, res.delta
        x, delta, pre = self._smooth(obj, x, bounds, delta, self.cfg.mu1, stats, level, finest)
        if pre is not None and pre.termination == "criticality":
            return x, delta
        g = obj.gradient(x)
        H = obj.hessian(x)
        coarse = level - 1
        base = self._base(coarse, chi1)
        cobj = build_level_objective(
            self.cfg.kind, g, H, x, coarse, self.pb.transfers, base, chi1, self.cfg.chi1_gates_second_order
        )
        cfeas = restrict_bounds(
            feas.irrev_lower, feas.irrev_upper, x, delta, feas.tr_lower, feas.tr_upper,
            coarse, self.pb.transfers, self.pb.constrained[level], self.pb.constrained[coarse], cobj.x0,
        )
        cb = cfeas.combined
        room = np.minimum(cb.upper - cobj.x0, delta) - np.maximum(cb.lower - cobj.x0, -delta)
        if float(np.max(room, initial=0.0)) >= self.cfg.recursion_cutoff:
            xc, _ = self.run(coarse, cobj, cobj.x0, cfeas, delta, chi1, stats)
            h_c0 = cobj.value(cobj.x0)
            h_c1 = cobj.value(xc)
            s = self.pb.transfers.prolongation(coarse) @ (xc - cobj.x0)
            raw = x + s
            if finest:
                stats.tr_violation = max(stats.tr_violation, float(np.max(np.abs(s), initial=0.0)) - delta)
                stats.max_trial = max(stats.max_trial, float(np.linalg.norm(s)))
            x_trial = bounds.project(raw)
            f_old = obj.value(x)
            f_new = obj.value(x_trial) if np.any(s) else f_old
            rho = -np.inf
            if np.any(s):
                ared = actual_reduction(f_old, f_new, obj.gradient(x), x_trial - x, lambda: obj.gradient(x_trial))
                rho = multilevel_ratio(f_old, f_new, h_c0, h_c1, ared)
            accepted = bool(rho > self.tr.eta1 and f_new <= f_old)
            if accepted:
                x = x_trial
            if finest:
                stats.coarse_accepted = accepted
                stats.rho = rho
                stats.bound_violation = max(stats.bound_violation, bounds.violation(x))
            delta = radius_update(rho if accepted else -np.inf, delta, self.tr)
            if criticality(x, obj.gradient(x), bounds) <= self.tr.eps_g:
                return x, delta
        x, delta, _ = self._smooth(obj, x, bounds, delta, self.cfg.mu2, stats, level, finest)
        return x, delta


def rmtr_solve(
    problem: MultilevelProblem,
    x0_fine: np.ndarray,
    bounds_fine: BoxBounds,
    config: RMTRConfig = RMTRConfig(),
    callback: Callable[[CycleRecord], None] | None = None,
) -> RMTRResult:
    """V-cycles on the finest level until criticality or correction size is small.

    The correction size of a cycle is the norm of the change of the finest
    iterate, or, when every finest-level trial was rejected, the largest
    rejected trial step.
    """
    L = problem.finest
    x = np.array(x0_fine, dtype=float)
    if not bounds_fine.contains(x):
        raise ValueError(f"x0 is infeasible (violation {bounds_fine.violation(x):.3e})")
    n = x.size
    obj = LevelObjective.finest(problem.energies[L], n)
    feas = LevelFeasibleSet(bounds_fine.lower, bounds_fine.upper, np.full(n, -np.inf), np.full(n, np.inf))
    delta = config.tr.delta0
    f = obj.value(x)
    crit = criticality(x, obj.gradient(x), bounds_fine)
    history: list[CycleRecord] = []
    vc = _VCycle(problem, config)
    if not np.isfinite(f):
        return RMTRResult(x, delta, 0, "non_finite", f, crit, history)
    if crit < config.tr.eps_g:
        return RMTRResult(x, delta, 0, "criticality", f, crit, history)
    termination = "max_iter"
    cycle = 0
    for cycle in range(1, config.max_cycles + 1):
        c_vals = x[problem.chi1_dofs] if problem.chi1_dofs is not None else x[problem.constrained[L]]
        chi1 = indicator_chi1(c_vals, config.chi1_threshold)
        stats = _CycleStats()
        x_old = x
        x, delta = vc.run(L, obj, x, feas, delta, chi1, stats)
        f = obj.value(x)
        crit = criticality(x, obj.gradient(x), bounds_fine)
        moved = float(np.linalg.norm(x - x_old))
        correction = moved if moved > 0 else stats.max_trial
        rec = CycleRecord(
            cycle, dict(sorted(stats.iterations.items())), f, crit, stats.coarse_accepted,
            stats.rho, chi1, correction, stats.bound_violation, stats.tr_violation,
        )
        history.append(rec)
        if callback is not None:
            callback(rec)
        log.debug(
            "cycle %d f=%.12e crit=%.3e corr=%.3e chi1=%d coarse=%s rho=%.3f",
            cycle, f, crit, correction, chi1, stats.coarse_accepted, stats.rho,
        )
        if crit < config.tr.eps_g:
            termination = "criticality"
            break
        if correction < config.tr.eps_s:
            termination = "step_size"
            break
    return RMTRResult(x, delta, cycle, termination, f, crit, history)
