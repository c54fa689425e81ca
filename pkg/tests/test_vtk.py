import numpy as np
import pytest

from rmtrfrac.driver import Simulation
from rmtrfrac.mesh import build_hierarchy
from rmtrfrac.problems import tension
from rmtrfrac.vtk import VTK_LINE, VTK_QUAD, export_fields, export_meshes, read_vtk, write_vtk


def test_round_trip_is_exact(tmp_path, rng):
    mesh = build_hierarchy((1.0, 0.5), (3, 2), 1)[-1]
    data = {"a": rng.normal(size=mesh.n_nodes), "v": rng.normal(size=(mesh.n_nodes, 3)) * 1e-7}
    write_vtk(mesh, tmp_path / "m.vtk", data)
    back = read_vtk(tmp_path / "m.vtk")
    assert np.array_equal(back.points[:, :2], mesh.node_coords)
    assert np.array_equal(back.cells, mesh.elements)
    assert np.all(back.cell_types == VTK_QUAD)
    for k in data:
        assert np.array_equal(back.point_data[k], data[k])


def test_line_cells_and_bad_data(tmp_path):
    mesh = build_hierarchy((2.0,), (4,), 1)[-1]
    write_vtk(mesh, tmp_path / "l.vtk")
    back = read_vtk(tmp_path / "l.vtk")
    assert np.all(back.cell_types == VTK_LINE) and back.cells.shape == (8, 2)
    with pytest.raises(ValueError):
        write_vtk(mesh, tmp_path / "x.vtk", {"c": np.zeros(3)})
    (tmp_path / "bad.vtk").write_text("# vtk DataFile Version 3.0\nt\nASCII\nDATASET UNSTRUCTURED_GRID\n")
    with pytest.raises(ValueError):
        read_vtk(tmp_path / "bad.vtk")


def test_export_fields(tmp_path):
    sim = Simulation(tension(levels=1, steps=1, cells=(4, 2)))
    x = sim.initial_state()
    export_fields(x, sim.fine, tmp_path / "f.vtk", sim.spec.material)
    d = read_vtk(tmp_path / "f.vtk").point_data
    c = d["c"]
    assert np.all(c[sim.seed_nodes] == 1.0)
    free = np.setdiff1d(np.arange(sim.fine.n_nodes), sim.seed_nodes)
    assert np.all(c[free] == 0.0)
    assert d["u"].shape == (sim.fine.n_nodes, 3) and np.all(d["u"] == 0.0)
    assert np.all(d["principal_stress"] == 0.0)
    with pytest.raises(ValueError):
        export_fields(x[:-1], sim.fine, tmp_path / "g.vtk", sim.spec.material)


def test_export_meshes(tmp_path):
    meshes = build_hierarchy((1.0, 1.0), (2, 2), 2)
    paths = export_meshes(meshes, tmp_path)
    assert [p.name for p in paths] == ["level_0.vtk", "level_1.vtk", "level_2.vtk"]
    assert read_vtk(paths[-1]).points.shape == (81, 3)
