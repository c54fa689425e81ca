"""Box-constrained quadratic subproblems ``min <g,s> + 1/2 <s,Hs>, lo <= s <= hi``.

Two solvers are provided: a projected conjugate-gradient method with a Jacobi
preconditioner (the inexact smoother on every level but the coarsest) and a
primal-dual active-set method with dense Cholesky solves (the accurate
coarsest-level solver).  Both require ``lo <= 0 <= hi``.
"""
from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp

log = logging.getLogger(__name__)

ARMIJO = 1e-2
_BOUND_TOL = 1e-14


class RegularizationWarning(RuntimeWarning):
    """A reduced active-set system had to be shifted to be factorized."""


def diagonal(H) -> np.ndarray:
    if isinstance(H, np.ndarray):
        return np.diag(H).copy()
    return np.asarray(H.diagonal(), dtype=float)


def model(g: np.ndarray, H, s: np.ndarray) -> float:
    """``m(s) - m(0) = <g,s> + 1/2 <s,Hs>``."""
    return float(g @ s + 0.5 * s @ (H @ s))


def _check_box(lo, hi):
    if np.any(lo > 0) or np.any(hi < 0):
        raise ValueError("step bounds must contain s = 0")


def cauchy_point(g: np.ndarray, H, lo: np.ndarray, hi: np.ndarray, max_backtracks: int = 60) -> np.ndarray:
    """Approximate minimizer of the model along the projected steepest-descent arc.

    Starts at the unconstrained Cauchy step length (or the last breakpoint
    under negative curvature), backtracks until the Armijo condition holds on
    the projected point, and finally minimizes exactly along the segment from
    0 to that point.
    """
    g = np.asarray(g, dtype=float)
    s = np.zeros_like(g)
    if not np.any(g):
        return s
    # breakpoints t_i where -t g_i hits its bound
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        tb = np.where(g > 0, -lo / g, np.where(g < 0, -hi / g, np.inf))
    moving = tb > 0
    if not np.any(moving):
        return s
    t_last = float(np.max(np.where(np.isfinite(tb) & moving, tb, 0.0)))
    gfree = np.where(moving, g, 0.0)
    curv = float(gfree @ (H @ gfree))
    gg = float(gfree @ gfree)
    if curv > 0:
        t = gg / curv
        if t_last > 0:
            t = min(t, t_last)
    else:
        t = t_last if t_last > 0 else 1.0 / np.sqrt(gg)
    best = s
    for _ in range(max_backtracks):
        trial = np.clip(-t * g, lo, hi)
        m = model(g, H, trial)
        if m <= ARMIJO * float(g @ trial):
            best = trial
            break
        t *= 0.5
    else:
        return s
    # exact line minimization on [0, 1] along the accepted projected step
    a = float(best @ (H @ best))
    b = float(g @ best)
    if a > 0 and 0 < -b / a < 1:
        cand = (-b / a) * best
        if model(g, H, cand) < model(g, H, best):
            best = cand
    return best


def _step_to_boundary(s, p, lo, hi):
    """Largest alpha >= 0 with lo <= s + alpha p <= hi, and the blocking index."""
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        amax = np.where(p > 0, (hi - s) / p, np.where(p < 0, (lo - s) / p, np.inf))
    amax = np.maximum(amax, 0.0)
    j = int(np.argmin(amax))
    return float(amax[j]), j


@dataclass
class PCGInfo:
    iterations: int
    restarts: int
    negative_curvature: bool
    m_cauchy: float
    m_final: float


def projected_cg(
    g: np.ndarray,
    H,
    lo: np.ndarray,
    hi: np.ndarray,
    max_iter: int = 10,
    rtol: float = 1e-8,
    return_info: bool = False,
):
    """Jacobi-preconditioned projected CG on the box, started at the Cauchy point.

    Variables at a bound in the Cauchy point are frozen.  CG iterates on the
    free ones; when a step leaves the box it is cut at the first blocking
    bound, that variable joins the active face and CG restarts.  Negative
    curvature moves to the boundary along the current direction and stops.
    The returned step never has a larger model value than the Cauchy point.
    """
    g = np.asarray(g, dtype=float)
    lo = np.asarray(lo, dtype=float)
    hi = np.asarray(hi, dtype=float)
    _check_box(lo, hi)
    sc = cauchy_point(g, H, lo, hi)
    mc = model(g, H, sc)
    s = sc.copy()
    dH = diagonal(H)
    prec = np.where(dH > 0, dH, 1.0)
    free = (s > lo + _BOUND_TOL) & (s < hi - _BOUND_TOL)
    it = restarts = 0
    neg = False
    r_ref = None
    while it < max_iter and np.any(free):
        r = np.where(free, g + H @ s, 0.0)
        z = r / prec
        rz = float(r @ z)
        if r_ref is None:
            r_ref = np.sqrt(float(r @ r))
        if np.sqrt(float(r @ r)) <= rtol * max(r_ref, 1e-300) or rz == 0.0:
            break
        p = -z
        restart = False
        while it < max_iter:
            Hp = H @ p
            pHp = float(p @ Hp)
            amax, j = _step_to_boundary(s, p, lo, hi)
            it += 1
            if pHp <= 0:
                # negative curvature: go to the boundary and stop
                neg = True
                if np.isfinite(amax):
                    s = s + amax * p
                    s[j] = lo[j] if p[j] < 0 else hi[j]
                break
            alpha = rz / pHp
            if alpha >= amax:
                s = s + amax * p
                s[j] = lo[j] if p[j] < 0 else hi[j]
                free[j] = False
                free &= (s > lo) & (s < hi)
                restart = True
                restarts += 1
                break
            s = s + alpha * p
            r = r + alpha * np.where(free, Hp, 0.0)
            if np.sqrt(float(r @ r)) <= rtol * r_ref:
                break
            z = r / prec
            rz_new = float(r @ z)
            p = -z + (rz_new / rz) * p
            rz = rz_new
        if neg or not restart:
            break
    s = np.clip(s, lo, hi)
    mf = model(g, H, s)
    if not mf <= mc:
        s, mf = sc, mc
    if return_info:
        return s, PCGInfo(it, restarts, neg, mc, mf)
    return s


def _dense(H) -> np.ndarray:
    if sp.issparse(H):
        return H.toarray()
    if isinstance(H, np.ndarray):
        return H
    return H.toarray()


@dataclass
class ActiveSetInfo:
    iterations: int
    converged: bool
    regularized: bool
    kkt_residual: float
    method: str  # "primal-dual", "primal" or "fallback"


class _Factorizer:
    """Cholesky of reduced Hessians with the diagonal-shift safeguard."""

    def __init__(self, Hd: np.ndarray):
        self.Hd = Hd
        self.shift = 1e-12 * (1.0 + float(np.max(np.abs(np.diag(Hd)), initial=0.0)))
        self.regularized = False

    def solve(self, mask: np.ndarray, rhs: np.ndarray) -> np.ndarray | None:
        A = self.Hd[np.ix_(mask, mask)]
        try:
            c = sla.cho_factor(A, check_finite=False)
        except np.linalg.LinAlgError:
            try:
                c = sla.cho_factor(A + self.shift * np.eye(A.shape[0]), check_finite=False)
            except np.linalg.LinAlgError:
                return None
            if not self.regularized:
                warnings.warn("regularized singular reduced system", RegularizationWarning, stacklevel=3)
            self.regularized = True
        return sla.cho_solve(c, rhs, check_finite=False)


def _primal_dual(g, Hd, lo, hi, s, fac, max_iter):
    pinned = lo == hi
    lam = -(Hd @ s + g)
    prev = None
    for it in range(1, max_iter + 1):
        up = (lam + (s - hi) > 0) & ~pinned
        low = (lam + (s - lo) < 0) & ~pinned & ~up
        inact = ~(up | low | pinned)
        key = (up.tobytes(), low.tobytes())
        s = np.where(up, hi, np.where(low | pinned, lo, s))
        if np.any(inact):
            sol = fac.solve(inact, -g[inact] - Hd[np.ix_(inact, ~inact)] @ s[~inact])
            if sol is None:
                return s, it, False
            s[inact] = sol
        lam = -(Hd @ s + g)
        lam[inact] = 0.0
        if key == prev:
            return s, it, True
        prev = key
    return s, max_iter, False


def _primal(g, Hd, lo, hi, s, fac, max_iter, tol):
    """Feasible active-set method: one bound enters or leaves per iteration."""
    s = np.clip(s, lo, hi)
    at_lo = (s <= lo) | (lo == hi)
    at_up = (s >= hi) & ~at_lo
    for it in range(1, max_iter + 1):
        grad = Hd @ s + g
        free = ~(at_lo | at_up)
        d = np.zeros_like(s)
        if np.any(free):
            sol = fac.solve(free, -grad[free])
            if sol is None:
                return s, it, False
            d[free] = sol
        if np.max(np.abs(d), initial=0.0) <= tol * (1.0 + np.max(np.abs(s), initial=0.0)):
            # stationary on the face: release the worst multiplier, if any
            mult = np.where(at_lo & (lo < hi), grad, 0.0) - np.where(at_up, grad, 0.0)
            j = int(np.argmin(mult)) if mult.size else 0
            if mult.size == 0 or mult[j] >= -tol * (1.0 + np.abs(g).max(initial=0.0)):
                return s, it, True
            at_lo[j] = at_up[j] = False
            continue
        alpha, j = _step_to_boundary(s, d, lo, hi)
        if alpha >= 1.0:
            s = s + d
        else:
            s = s + alpha * d
            if d[j] < 0:
                s[j], at_lo[j] = lo[j], True
            else:
                s[j], at_up[j] = hi[j], True
        s = np.clip(s, lo, hi)
    return s, max_iter, False


def active_set_qp(
    g: np.ndarray,
    H,
    lo: np.ndarray,
    hi: np.ndarray,
    s0: np.ndarray | None = None,
    max_iter: int = 50,
    kkt_tol: float = 1e-10,
    return_info: bool = False,
):
    """Accurate solve of the box QP by active-set iterations with dense Cholesky.

    A primal-dual active-set pass is tried first; if it cycles (it is only
    guaranteed for M-matrices) a primal feasible active-set method finishes
    from the best point so far.  Reduced systems that fail to factorize are
    shifted by ``1e-12 (1 + max|H_ii|)`` with a :class:`RegularizationWarning`.
    If that still fails (indefinite reduced Hessian) the projected-CG step is
    kept.  The result is never worse in model value than the projected-CG
    step.
    """
    g = np.asarray(g, dtype=float)
    lo = np.asarray(lo, dtype=float)
    hi = np.asarray(hi, dtype=float)
    _check_box(lo, hi)
    Hd = _dense(H)
    n = g.size
    fallback = projected_cg(g, H, lo, hi, max_iter=max(10, n))
    fac = _Factorizer(Hd)
    start = np.clip(fallback if s0 is None else np.asarray(s0, float), lo, hi)
    s, it, ok = _primal_dual(g, Hd, lo, hi, start.copy(), fac, max_iter)
    method = "primal-dual"
    s = np.clip(s, lo, hi)
    scale = 1.0 + np.abs(g).max(initial=0.0)
    if not (ok and _kkt_residual(g, Hd, s, lo, hi) <= kkt_tol * scale):
        best = s if model(g, Hd, s) < model(g, Hd, start) else start
        s, it2, ok = _primal(g, Hd, lo, hi, best, fac, 4 * n + 10, 1e-13)
        it += it2
        method = "primal"
    kkt = _kkt_residual(g, Hd, s, lo, hi)
    converged = bool(ok and kkt <= kkt_tol * scale)
    m_fb = model(g, Hd, fallback)
    if not model(g, Hd, s) <= m_fb + 1e-13 * (1.0 + abs(m_fb)):
        s, method, converged = fallback, "fallback", False
    if return_info:
        return s, ActiveSetInfo(it, converged, fac.regularized, kkt, method)
    return s


def _kkt_residual(g, Hd, s, lo, hi) -> float:
    """Norm of the projected-gradient displacement of the model at s."""
    grad = Hd @ s + g
    return float(np.linalg.norm(np.clip(s - grad, lo, hi) - s))
