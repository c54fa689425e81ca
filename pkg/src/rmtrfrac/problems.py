"""Problem descriptions for the load-stepping driver and their INI form.

Scenarios
---------
tension, shear
    0.5 x 0.25 plate, bottom edge clamped, top edge driven vertically (tension)
    or horizontally (shear).  The notch is a seeded ``c = 1`` line from the
    left edge to x = 0.1 at mid-height.
pressure
    Unit square clamped on all sides with fixed seeded crack segments and the
    pressure ``p(t) = p0 + t p0`` acting through the ``(1-c)^2 p div u`` term.
profile1d
    Phase-field-only bar on ``[-10 l_s, 10 l_s]`` with ``c(0) = 1`` and the
    displacement pinned to zero.
"""
from __future__ import annotations

import configparser
from dataclasses import dataclass, field, fields, replace
from pathlib import Path
from typing import Sequence

import numpy as np

from .fracture import FRACTURE_MODES, PRESSURIZED, MaterialParams
from .mesh import COORD_TOL

SCENARIOS = ("tension", "shear", "pressure", "profile1d")


@dataclass(frozen=True)
class DirichletBC:
    """Displacement component ``component`` on boundary set ``where`` equals ``rate * t``."""

    where: str
    component: int
    rate: float = 0.0


@dataclass(frozen=True)
class Segment:
    """Closed segment of seeded ``c = 1`` nodes (a point when both ends agree)."""

    start: tuple[float, ...]
    end: tuple[float, ...]

    def contains(self, pts: np.ndarray, tol: float) -> np.ndarray:
        a = np.asarray(self.start, dtype=float)
        b = np.asarray(self.end, dtype=float)
        ab = b - a
        L2 = float(ab @ ab)
        if L2 == 0.0:
            d = np.linalg.norm(pts - a, axis=1)
        else:
            t = np.clip((pts - a) @ ab / L2, 0.0, 1.0)
            d = np.linalg.norm(pts - (a + t[:, None] * ab), axis=1)
        return d <= tol


@dataclass(frozen=True)
class ProblemSpec:
    scenario: str
    extents: tuple[float, ...]
    cells: tuple[int, ...]
    levels: int
    material: MaterialParams
    steps: int
    dt: float
    dirichlet: tuple[DirichletBC, ...] = ()
    seeds: tuple[Segment, ...] = ()
    origin: tuple[float, ...] | None = None
    p0: float | None = None
    # seeded nodes take part in the crack indicator only when this is set
    seeds_in_indicator: bool = False

    def __post_init__(self):
        if self.scenario not in SCENARIOS:
            raise ValueError(f"unknown scenario {self.scenario!r}; choose from {SCENARIOS}")
        if (self.p0 is not None) != (self.scenario == "pressure"):
            raise ValueError("a pressure schedule is required for, and only for, the pressure scenario")
        if self.steps < 0:
            raise ValueError("steps must be >= 0")
        if self.dt <= 0:
            raise ValueError("dt must be positive")
        if len(self.extents) != len(self.cells):
            raise ValueError("extents and cells differ in dimension")

    @property
    def dim(self) -> int:
        return len(self.extents)

    def time(self, step: int) -> float:
        # 12 significant digits keep 3 * 1e-4 printing as 0.0003
        return float(f"{step * self.dt:.12g}")

    def pressure(self, t: float) -> float | None:
        if self.p0 is None:
            return None
        return self.p0 + t * self.p0

    def with_levels(self, levels: int) -> "ProblemSpec":
        return replace(self, levels=int(levels))


def seed_tolerance(spec: ProblemSpec) -> float:
    h_fine = max(e / (c * 2**spec.levels) for e, c in zip(spec.extents, spec.cells))
    return 1e-6 * h_fine + COORD_TOL


# 1:20 scaled 10 x 5 plate with a 2 mm notch; larger plates store too little
# energy after 50 steps of 1e-4 to cut the ligament
PLATE = (0.5, 0.25)
NOTCH = 0.1


def tension(
    levels: int = 2,
    steps: int = 50,
    cells=(20, 10),
    material: MaterialParams = FRACTURE_MODES,
    extents=PLATE,
    notch: float = NOTCH,
) -> ProblemSpec:
    return ProblemSpec(
        scenario="tension",
        extents=tuple(extents),
        cells=tuple(cells),
        levels=levels,
        material=material,
        steps=steps,
        dt=1e-4,
        dirichlet=(
            DirichletBC("bottom", 0),
            DirichletBC("bottom", 1),
            DirichletBC("top", 0),
            DirichletBC("top", 1, 1.0),
        ),
        seeds=(Segment((0.0, extents[1] / 2), (notch, extents[1] / 2)),),
    )


def shear(
    levels: int = 2,
    steps: int = 50,
    cells=(20, 10),
    material: MaterialParams = FRACTURE_MODES,
    extents=PLATE,
    notch: float = NOTCH,
) -> ProblemSpec:
    return ProblemSpec(
        scenario="shear",
        extents=tuple(extents),
        cells=tuple(cells),
        levels=levels,
        material=material,
        steps=steps,
        dt=1e-4,
        dirichlet=(
            DirichletBC("bottom", 0),
            DirichletBC("bottom", 1),
            DirichletBC("top", 0, 1.0),
            DirichletBC("top", 1),
        ),
        seeds=(Segment((0.0, extents[1] / 2), (notch, extents[1] / 2)),),
    )


# fixed crack seeds for the pressurized square (documented, not random)
PRESSURE_SEEDS = (
    Segment((0.25, 0.5), (0.4375, 0.5)),
    Segment((0.625, 0.25), (0.625, 0.375)),
    Segment((0.5625, 0.75), (0.75, 0.75)),
)


def pressure(levels: int = 2, steps: int = 12, cells=(8, 8), material: MaterialParams = PRESSURIZED, p0: float = 1.0) -> ProblemSpec:
    return ProblemSpec(
        scenario="pressure",
        extents=(1.0, 1.0),
        cells=tuple(cells),
        levels=levels,
        material=material,
        steps=steps,
        dt=1.0,
        dirichlet=tuple(DirichletBC(side, comp) for side in ("left", "right", "bottom", "top") for comp in (0, 1)),
        seeds=PRESSURE_SEEDS,
        p0=p0,
        seeds_in_indicator=True,
    )


def profile1d(l_s: float = 1.0, h: float | None = None, levels: int = 1, Gc: float = 1.0) -> ProblemSpec:
    """Bar of half-length ``10 l_s``; ``h`` is the finest mesh size (default ``l_s/4``)."""
    h = l_s / 4 if h is None else h
    n_fine = int(round(20 * l_s / h))
    if n_fine % 2**levels or n_fine // 2**levels < 2:
        raise ValueError("20 l_s / h must be divisible by 2**levels")
    return ProblemSpec(
        scenario="profile1d",
        extents=(20.0 * l_s,),
        cells=(n_fine // 2**levels,),
        levels=levels,
        material=MaterialParams(lam=0.0, mu=1.0, Gc=Gc, l_s=l_s),
        steps=1,
        dt=1.0,
        dirichlet=(DirichletBC("all", 0),),
        seeds=(Segment((0.0,), (0.0,)),),
        origin=(-10.0 * l_s,),
    )


_PRESETS = {"tension": tension, "shear": shear, "pressure": pressure, "profile1d": profile1d}


def preset(name: str, **kwargs) -> ProblemSpec:
    if name not in _PRESETS:
        raise ValueError(f"unknown scenario {name!r}; choose from {SCENARIOS}")
    return _PRESETS[name](**kwargs)


# INI round trip

def _floats(text: str) -> tuple[float, ...]:
    return tuple(float(t) for t in text.replace(",", " ").split())


def _fmt(vals: Sequence[float]) -> str:
    return ", ".join(repr(float(v)) for v in vals)


def load_config(path: str | Path) -> tuple[ProblemSpec, dict[str, str]]:
    """Read an INI file: ``[problem]``, optional ``[material]``, ``[solver]``.

    Problem keys override the scenario preset; material keys override the
    scenario's material.  The raw ``[solver]`` section is returned for the
    caller to interpret.
    """
    cp = configparser.ConfigParser()
    with open(path) as fh:
        cp.read_file(fh)
    if "problem" not in cp:
        raise ValueError(f"{path}: missing [problem] section")
    prob = cp["problem"]
    spec = preset(prob.get("scenario", "tension"))
    updates: dict = {}
    if "extents" in prob:
        updates["extents"] = _floats(prob["extents"])
    if "cells" in prob:
        updates["cells"] = tuple(int(v) for v in _floats(prob["cells"]))
    if "origin" in prob:
        updates["origin"] = _floats(prob["origin"])
    for key, conv in (("levels", int), ("steps", int), ("dt", float), ("p0", float)):
        if key in prob:
            updates[key] = conv(prob[key])
    if "seeds" in prob:
        segs = []
        for item in prob["seeds"].split(";"):
            if item.strip():
                v = _floats(item)
                half = len(v) // 2
                segs.append(Segment(v[:half], v[half:]))
        updates["seeds"] = tuple(segs)
    if "dirichlet" in prob:
        bcs = []
        for item in prob["dirichlet"].split(";"):
            parts = item.split()
            if parts:
                bcs.append(DirichletBC(parts[0], int(parts[1]), float(parts[2]) if len(parts) > 2 else 0.0))
        updates["dirichlet"] = tuple(bcs)
    if "material" in cp:
        mat = cp["material"]
        mupd = {}
        for f in fields(MaterialParams):
            if f.name in mat:
                mupd[f.name] = float(mat[f.name])
        updates["material"] = replace(spec.material, **mupd)
    spec = replace(spec, **updates)
    solver = dict(cp["solver"]) if "solver" in cp else {}
    return spec, solver


def dump_config(spec: ProblemSpec, path: str | Path, solver: dict[str, str] | None = None) -> None:
    cp = configparser.ConfigParser()
    cp["problem"] = {
        "scenario": spec.scenario,
        "extents": _fmt(spec.extents),
        "cells": ", ".join(str(c) for c in spec.cells),
        "levels": str(spec.levels),
        "steps": str(spec.steps),
        "dt": repr(spec.dt),
        "seeds": "; ".join(_fmt(s.start + s.end) for s in spec.seeds),
        "dirichlet": "; ".join(f"{b.where} {b.component} {b.rate!r}" for b in spec.dirichlet),
    }
    if spec.origin is not None:
        cp["problem"]["origin"] = _fmt(spec.origin)
    if spec.p0 is not None:
        cp["problem"]["p0"] = repr(spec.p0)
    m = spec.material
    cp["material"] = {f.name: repr(getattr(m, f.name)) for f in fields(m) if getattr(m, f.name) is not None}
    if solver:
        cp["solver"] = dict(solver)
    with open(path, "w") as fh:
        cp.write(fh)
