"""Pseudo-time load stepping with irreversibility bounds and solver selection."""
from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .fracture import PhaseFieldEnergy, energy
from .mesh import MeshLevel, build_hierarchy
from .problems import ProblemSpec, seed_tolerance
from .rmtr import CoarseModelKind, CycleRecord, MultilevelProblem, RMTRConfig, rmtr_solve
from .transfer import TransferHierarchy
from .trust_region import BoxBounds, TrustRegionConfig, local_tr

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class SolverChoice:
    """Single-level TR (``kind=None``) or RMTR with a coarse model."""

    method: str = "rmtr"  # "tr" | "rmtr"
    kind: CoarseModelKind | None = CoarseModelKind.SOLUTION_DEPENDENT
    tr: TrustRegionConfig = TrustRegionConfig()
    rmtr: RMTRConfig | None = None

    def __post_init__(self):
        if self.method not in ("tr", "rmtr"):
            raise ValueError("method must be 'tr' or 'rmtr'")
        if self.method == "rmtr":
            kind = CoarseModelKind.parse(self.kind or "sd")
            object.__setattr__(self, "kind", kind)
            base = self.rmtr or RMTRConfig(tr=self.tr)
            object.__setattr__(self, "rmtr", RMTRConfig(**{**base.__dict__, "kind": kind, "tr": self.tr}))
        else:
            object.__setattr__(self, "kind", None)

    @property
    def label(self) -> str:
        return "tr" if self.method == "tr" else f"rmtr-{self.kind.value}"


@dataclass
class StepRecord:
    step: int
    t: float
    iterations: int
    final_energy: float
    final_criticality: float
    wall_time_s: float
    termination: str = ""
    converged: bool = True
    irreversibility_gap: float = 0.0  # min(c^t - c^{t-1})
    bound_violation: float = 0.0  # worst finest-level violation over the solve
    crack_volume: float = 0.0
    cycles: list[CycleRecord] = field(default_factory=list, repr=False)


class Simulation:
    """Meshes, transfers, bounds and energies for one :class:`ProblemSpec`."""

    def __init__(self, spec: ProblemSpec):
        self.spec = spec
        tol = seed_tolerance(spec)
        node_sets = {"all": lambda p: np.ones(p.shape[0], dtype=bool)}
        node_sets["seeds"] = lambda p: (
            np.any([s.contains(p, tol) for s in spec.seeds], axis=0) if spec.seeds else np.zeros(p.shape[0], bool)
        )
        self.meshes: list[MeshLevel] = build_hierarchy(
            spec.extents, spec.cells, spec.levels, origin=spec.origin, node_sets=node_sets
        )
        self.transfers = TransferHierarchy(self.meshes)
        self.fine = self.meshes[-1]
        dm = self.fine.dofmap
        self.d = self.fine.dim
        self.phase_dofs = dm.field_dofs(self.d)
        self.seed_nodes = self.fine.boundary_sets["seeds"]
        for bc in spec.dirichlet:
            if bc.where not in self.fine.boundary_sets:
                raise ValueError(f"unknown boundary set {bc.where!r}")
            if not 0 <= bc.component < self.d:
                raise ValueError(f"displacement component {bc.component} out of range")
        self.constrained = [m.dofmap.field_mask(m.dim) for m in self.meshes]
        if spec.seeds_in_indicator:
            self.chi1_dofs = self.phase_dofs
        else:
            keep = np.ones(self.fine.n_nodes, dtype=bool)
            keep[self.seed_nodes] = False
            self.chi1_dofs = dm.dof(np.flatnonzero(keep), self.d)

    # bounds ---------------------------------------------------------------

    def dirichlet_values(self, t: float) -> tuple[np.ndarray, np.ndarray]:
        """Pinned DOF indices and their values at time t (displacement and seeds)."""
        dm = self.fine.dofmap
        idx, val = [], []
        for bc in self.spec.dirichlet:
            nodes = self.fine.boundary_sets[bc.where]
            idx.append(dm.dof(nodes, bc.component))
            val.append(np.full(nodes.size, bc.rate * t))
        idx.append(dm.dof(self.seed_nodes, self.d))
        val.append(np.ones(self.seed_nodes.size))
        idx = np.concatenate(idx) if idx else np.zeros(0, int)
        val = np.concatenate(val) if val else np.zeros(0)
        return idx.astype(int), val

    def assemble_bounds(self, prev_c: np.ndarray, t: float) -> BoxBounds:
        idx, val = self.dirichlet_values(t)
        return assemble_bounds(self.fine, prev_c, idx, val)

    def initial_state(self) -> np.ndarray:
        x = np.zeros(self.fine.n)
        idx, val = self.dirichlet_values(0.0)
        x[idx] = val
        return x

    # energies -------------------------------------------------------------

    def energies(self, t: float) -> list[PhaseFieldEnergy]:
        p = self.spec.pressure(t)
        return [PhaseFieldEnergy(m, self.spec.material, p) for m in self.meshes]

    def multilevel(self, t: float) -> MultilevelProblem:
        p = self.spec.pressure(t)
        mat = self.spec.material
        meshes = self.meshes

        def modified(level: int, chi1: int) -> PhaseFieldEnergy:
            return PhaseFieldEnergy(meshes[level], mat, p, modified=True, chi1=chi1)

        return MultilevelProblem(self.transfers, self.energies(t), self.constrained, modified, self.chi1_dofs)

    def total_energy(self, x: np.ndarray, t: float) -> float:
        return energy(self.fine, x, self.spec.material, self.spec.pressure(t))

    def crack_volume(self, x: np.ndarray) -> float:
        """``int c dx`` on the finest mesh (exact for the bilinear interpolant)."""
        from .fem import element_data

        ed = element_data(self.fine)
        c = x[self.phase_dofs][self.fine.elements] @ ed.N.T
        return float(np.sum(ed.wdet * c))


def assemble_bounds(mesh: MeshLevel, prev_c: np.ndarray, pinned: np.ndarray, values: np.ndarray) -> BoxBounds:
    """Finest-level box: ``prev_c <= c <= 1``, free displacement, pinned DOFs ``lo = hi``."""
    dm = mesh.dofmap
    d = mesh.dim
    prev_c = np.asarray(prev_c, dtype=float)
    if prev_c.shape != (mesh.n_nodes,):
        raise ValueError("prev_c must hold one value per node")
    lo = np.full(dm.n, -np.inf)
    hi = np.full(dm.n, np.inf)
    cd = dm.field_dofs(d)
    lo[cd] = prev_c
    hi[cd] = 1.0
    pinned = np.asarray(pinned, dtype=int)
    values = np.asarray(values, dtype=float)
    below = values < lo[pinned] - 1e-15
    if np.any(below):
        j = pinned[below][0]
        raise ValueError(f"prescribed value {values[below][0]} at DOF {j} is below its irreversibility bound {lo[j]}")
    lo[pinned] = values
    hi[pinned] = values
    return BoxBounds(lo, hi)


def run(
    spec: ProblemSpec,
    solver: SolverChoice = SolverChoice(),
    on_step: Callable[[StepRecord, np.ndarray, "Simulation"], None] | None = None,
    sim: Simulation | None = None,
) -> list[StepRecord]:
    """Load stepping; stops at the first step whose solve hits its iteration cap."""
    sim = sim or Simulation(spec)
    x = sim.initial_state()
    records: list[StepRecord] = []
    for step in range(1, spec.steps + 1):
        t = spec.time(step)
        prev_c = x[sim.phase_dofs].copy()
        bounds = sim.assemble_bounds(prev_c, t)
        # warm start: previous solution with the new Dirichlet values
        x0 = bounds.project(x)
        t0 = time.perf_counter()
        cycles: list[CycleRecord] = []
        if solver.method == "tr":
            obj = PhaseFieldEnergy(sim.fine, spec.material, spec.pressure(t))
            res = local_tr(obj, x0, bounds, config=solver.tr)
            viol = bounds.violation(res.x)
        else:
            res = rmtr_solve(sim.multilevel(t), x0, bounds, solver.rmtr)
            cycles = res.history
            viol = max([bounds.violation(res.x)] + [c.bound_violation for c in cycles])
        wall = time.perf_counter() - t0
        converged = res.termination in ("criticality", "step_size")
        n_it = res.iterations if solver.method == "tr" else res.cycles
        x = res.x
        c = x[sim.phase_dofs]
        rec = StepRecord(
            step=step,
            t=t,
            iterations=n_it,
            final_energy=sim.total_energy(x, t),
            final_criticality=res.criticality,
            wall_time_s=wall,
            termination=res.termination,
            converged=converged,
            irreversibility_gap=float(np.min(c - prev_c)),
            bound_violation=viol,
            crack_volume=sim.crack_volume(x),
            cycles=cycles,
        )
        records.append(rec)
        log.info(
            "%s step %d t=%g its=%d E=%.12e crit=%.2e %s (%.1fs)",
            solver.label, step, t, n_it, rec.final_energy, rec.final_criticality, res.termination, wall,
        )
        if on_step is not None:
            on_step(rec, x, sim)
        if not converged:
            log.error("step %d did not converge (%s); halting", step, res.termination)
            break
    return records


def emit_csv(records: Sequence[StepRecord], path: str | Path) -> None:
    """``time,its`` per step; the time column uses the shortest round-trip repr."""
    lines = ["time,its"] + [f"{float(r.t)!r},{int(r.iterations)}" for r in records]
    with open(path, "w", newline="") as fh:
        fh.write("\n".join(lines) + "\n")


def read_csv(path: str | Path) -> list[tuple[float, int]]:
    with open(path) as fh:
        rows = fh.read().splitlines()
    if not rows or rows[0] != "time,its":
        raise ValueError("missing time,its header")
    return [(float(a), int(b)) for a, b in (r.split(",") for r in rows[1:])]
