"""Command-line entry point: ``rmtrfrac --config run.ini --solver rmtr --model sd``."""
from __future__ import annotations

import argparse
import logging
import sys
import time
from dataclasses import fields, replace
from pathlib import Path
from typing import Sequence

import numpy as np

from .driver import Simulation, SolverChoice, StepRecord, emit_csv, run
from .problems import SCENARIOS, ProblemSpec, load_config, preset
from .rmtr import CoarseModelKind, RMTRConfig
from .trust_region import TrustRegionConfig
from .vtk import export_fields, export_meshes

log = logging.getLogger("rmtrfrac")

MODELS = tuple(k.value for k in CoarseModelKind)


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="rmtrfrac", description="Phase-field fracture load stepping with TR or RMTR.")
    p.add_argument("--config", type=Path, help="INI file with [problem], [material] and [solver] sections")
    p.add_argument("--scenario", choices=SCENARIOS, help="preset used when no config is given (default tension)")
    p.add_argument("--solver", choices=("tr", "rmtr"), help="single-level TR or multilevel RMTR (default rmtr)")
    p.add_argument("--model", choices=MODELS, help="coarse-level model for RMTR (default sd)")
    p.add_argument("--levels", type=int, help="number of refinements above the coarse grid")
    p.add_argument("--steps", type=int, help="override the number of load steps")
    p.add_argument("--out-dir", type=Path, default=Path("."), help="directory for history.csv, summary.txt and fields")
    p.add_argument("--export-fields", choices=("none", "every", "last"), default="none")
    p.add_argument("--export-meshes", action="store_true", help="also write each level's mesh")
    p.add_argument("--seed", type=int, default=0, help="seed for numpy's global generator (the solvers draw no random numbers)")
    p.add_argument("-v", "--verbose", action="count", default=0)
    return p


def _solver_from(section: dict[str, str], args) -> SolverChoice:
    tr_kw = {}
    for f in fields(TrustRegionConfig):
        if f.name in section:
            conv = int if isinstance(f.default, int) else float
            tr_kw[f.name] = conv(section[f.name])
    tr = TrustRegionConfig(**tr_kw)
    method = args.solver or section.get("method", "rmtr")
    model = args.model or section.get("model", "sd")
    rmtr_kw = {}
    if "coarse_iterations" in section:
        rmtr_kw["coarse_iterations"] = int(section["coarse_iterations"])
    if "chi1_threshold" in section:
        rmtr_kw["chi1_threshold"] = float(section["chi1_threshold"])
    if "chi1_gates_second_order" in section:
        rmtr_kw["chi1_gates_second_order"] = section["chi1_gates_second_order"]
    rmtr = RMTRConfig(tr=tr, **rmtr_kw) if method == "rmtr" else None
    return SolverChoice(method, model if method == "rmtr" else None, tr, rmtr)


def write_summary(path: Path, spec: ProblemSpec, solver: SolverChoice, records: Sequence[StepRecord], sim: Simulation, wall: float) -> None:
    ok = len(records) == spec.steps and all(r.converged for r in records)
    unit = "V-cycles" if solver.method == "rmtr" else "TR iterations"
    lines = [
        f"scenario: {spec.scenario}",
        f"solver: {solver.label}",
        f"levels: {spec.levels}",
        f"finest dofs: {sim.fine.n}",
        f"steps completed: {len(records)} of {spec.steps}",
        f"accumulated {unit}: {sum(r.iterations for r in records)}",
        f"final energy: {records[-1].final_energy!r}" if records else "final energy: n/a",
        f"wall time s: {wall:.3f}",
        f"status: {'converged' if ok else 'FAILED'}",
    ]
    path.write_text("\n".join(lines) + "\n")


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose > 1 else logging.INFO,
        format="%(levelname)s %(name)s: %(message)s",
    )
    np.random.seed(args.seed)
    if args.config is not None:
        spec, section = load_config(args.config)
        if args.scenario and args.scenario != spec.scenario:
            log.error("--scenario %s conflicts with config scenario %s", args.scenario, spec.scenario)
            return 2
    else:
        spec, section = preset(args.scenario or "tension"), {}
    if args.levels is not None:
        spec = spec.with_levels(args.levels)
    if args.steps is not None:
        spec = replace(spec, steps=args.steps)
    try:
        solver = _solver_from(section, args)
    except ValueError as exc:
        log.error("bad solver settings: %s", exc)
        return 2

    out = args.out_dir
    out.mkdir(parents=True, exist_ok=True)
    sim = Simulation(spec)
    if args.export_meshes:
        export_meshes(sim.meshes, out)

    def on_step(rec: StepRecord, x: np.ndarray, sim: Simulation) -> None:
        last = rec.step == spec.steps or not rec.converged
        if args.export_fields == "every" or (args.export_fields == "last" and last):
            export_fields(x, sim.fine, out / f"fields_{rec.step:04d}.vtk", sim.spec.material)

    t0 = time.perf_counter()
    records = run(spec, solver, on_step=on_step, sim=sim)
    wall = time.perf_counter() - t0
    emit_csv(records, out / "history.csv")
    write_summary(out / "summary.txt", spec, solver, records, sim, wall)
    ok = len(records) == spec.steps and all(r.converged for r in records)
    if not ok:
        log.error("run failed after %d steps", len(records))
    return 0 if ok else 1


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
