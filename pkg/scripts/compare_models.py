"""Run one scenario with single-level TR and RMTR under every coarse model.

Writes ``<scenario>_<solver>.csv`` (time,its) per solver and prints the
accumulated iteration counts and final energies.

    python3 scripts/compare_models.py --scenario tension --steps 50 --out runs/
"""
from __future__ import annotations

import argparse
import time
from dataclasses import replace
from pathlib import Path

from rmtrfrac.driver import SolverChoice, emit_csv, run
from rmtrfrac.problems import SCENARIOS, preset
from rmtrfrac.rmtr import CoarseModelKind


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--scenario", choices=SCENARIOS, default="tension")
    ap.add_argument("--steps", type=int)
    ap.add_argument("--levels", type=int)
    ap.add_argument("--skip-tr", action="store_true", help="only the multilevel runs")
    ap.add_argument("--out", type=Path, default=Path("runs"))
    args = ap.parse_args()
    spec = preset(args.scenario)
    if args.steps is not None:
        spec = replace(spec, steps=args.steps)
    if args.levels is not None:
        spec = spec.with_levels(args.levels)
    args.out.mkdir(parents=True, exist_ok=True)
    choices = [] if args.skip_tr else [SolverChoice("tr")]
    choices += [SolverChoice("rmtr", k) for k in CoarseModelKind]
    print(f"{'solver':16s} {'its':>7s} {'final energy':>22s} {'wall s':>8s}")
    for ch in choices:
        t0 = time.perf_counter()
        recs = run(spec, ch)
        wall = time.perf_counter() - t0
        emit_csv(recs, args.out / f"{args.scenario}_{ch.label}.csv")
        ok = "" if len(recs) == spec.steps and all(r.converged for r in recs) else "  (failed)"
        energy = recs[-1].final_energy if recs else float("nan")
        print(f"{ch.label:16s} {sum(r.iterations for r in recs):7d} {energy:22.15e} {wall:8.1f}{ok}")


if __name__ == "__main__":
    main()
