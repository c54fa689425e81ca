"""Legacy ASCII VTK unstructured-grid export and a matching reader.

Values are written with 17 significant digits so a read-back reproduces the
doubles exactly.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .fracture import MaterialParams, nodal_principal_stress
from .mesh import MeshLevel

VTK_LINE = 3
VTK_QUAD = 9
_FMT = "%.17g"


@dataclass
class VTKData:
    points: np.ndarray  # (n, 3)
    cells: np.ndarray  # (ne, nen)
    cell_types: np.ndarray
    point_data: dict[str, np.ndarray] = field(default_factory=dict)


def _rows(arr: np.ndarray) -> str:
    arr = np.atleast_2d(arr)
    return "\n".join(" ".join(_FMT % v for v in row) for row in arr)


def write_vtk(mesh: MeshLevel, path: str | Path, point_data: dict[str, np.ndarray] | None = None, title: str = "rmtrfrac") -> None:
    """Write ``mesh`` and nodal arrays (scalars or (n, k) components)."""
    n = mesh.n_nodes
    pts = np.zeros((n, 3))
    pts[:, : mesh.dim] = mesh.node_coords
    cells = mesh.elements
    ctype = VTK_LINE if mesh.dim == 1 else VTK_QUAD
    out = [
        "# vtk DataFile Version 3.0",
        title.replace("\n", " ")[:255],
        "ASCII",
        "DATASET UNSTRUCTURED_GRID",
        f"POINTS {n} double",
        _rows(pts),
        f"CELLS {cells.shape[0]} {cells.size + cells.shape[0]}",
        "\n".join(f"{cells.shape[1]} " + " ".join(map(str, c)) for c in cells),
        f"CELL_TYPES {cells.shape[0]}",
        "\n".join([str(ctype)] * cells.shape[0]),
    ]
    if point_data:
        out.append(f"POINT_DATA {n}")
        for name, vals in point_data.items():
            vals = np.asarray(vals, dtype=float)
            if vals.shape[0] != n:
                raise ValueError(f"point data {name!r} has {vals.shape[0]} rows, mesh has {n} nodes")
            ncomp = 1 if vals.ndim == 1 else vals.shape[1]
            out.append(f"SCALARS {name} double {ncomp}")
            out.append("LOOKUP_TABLE default")
            out.append(_rows(vals.reshape(n, ncomp)))
    with open(path, "w") as fh:
        fh.write("\n".join(out) + "\n")


def read_vtk(path: str | Path) -> VTKData:
    """Read a file produced by :func:`write_vtk`."""
    with open(path) as fh:
        tokens = fh.read().split("\n")
    lines = iter(tokens[4:])
    data = {}
    points = cells = types = None
    n_pts = 0
    for line in lines:
        parts = line.split()
        if not parts:
            continue
        key = parts[0]
        if key == "POINTS":
            n_pts = int(parts[1])
            points = np.array([[float(v) for v in next(lines).split()] for _ in range(n_pts)])
        elif key == "CELLS":
            rows = [next(lines).split() for _ in range(int(parts[1]))]
            cells = np.array([[int(v) for v in r[1:]] for r in rows], dtype=int)
        elif key == "CELL_TYPES":
            types = np.array([int(next(lines)) for _ in range(int(parts[1]))], dtype=int)
        elif key == "SCALARS":
            name, ncomp = parts[1], int(parts[3]) if len(parts) > 3 else 1
            next(lines)  # LOOKUP_TABLE
            vals = np.array([[float(v) for v in next(lines).split()] for _ in range(n_pts)])
            data[name] = vals[:, 0] if ncomp == 1 else vals
    if points is None or cells is None or types is None:
        raise ValueError(f"{path}: incomplete VTK unstructured grid")
    return VTKData(points, cells, types, data)


def export_fields(x: np.ndarray, mesh: MeshLevel, path: str | Path, params: MaterialParams) -> None:
    """Displacement, phase field and nodal principal stresses of a finest-level state."""
    x = np.asarray(x, dtype=float)
    if x.shape != (mesh.n,):
        raise ValueError(f"state has {x.size} entries, mesh has {mesh.n} DOFs")
    u, c = mesh.dofmap.split(x)
    u3 = np.zeros((mesh.n_nodes, 3))
    u3[:, : mesh.dim] = u
    write_vtk(
        mesh,
        path,
        {"u": u3, "c": c, "principal_stress": nodal_principal_stress(mesh, x, params)},
    )


def export_meshes(meshes: list[MeshLevel], out_dir: str | Path, stem: str = "level") -> list[Path]:
    out_dir = Path(out_dir)
    paths = []
    for m in meshes:
        p = out_dir / f"{stem}_{m.level_index}.vtk"
        write_vtk(m, p)
        paths.append(p)
    return paths
