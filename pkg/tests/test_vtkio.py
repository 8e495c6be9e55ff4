import numpy as np

from chemostokes.coeffs import trivial_homogenizers
from chemostokes.grid import Grid, ScalarField, State, VectorField
from chemostokes.vtkio import (
    SnapshotWriter,
    write_csv_field,
    write_vtk_scalar,
    write_vtk_vector,
)


def test_vtk_scalar_header_and_values(tmp_path):
    g = Grid((1.0, 2.0), (4, 8))
    rng = np.random.default_rng(17)
    f = ScalarField(g, rng.random(g.cells))
    path = tmp_path / "n.vtk"
    write_vtk_scalar(path, f, "n")
    lines = path.read_text().splitlines()
    assert lines[0].startswith("# vtk DataFile")
    assert lines[3] == "DATASET STRUCTURED_POINTS"
    assert lines[4] == "DIMENSIONS 4 8 1"
    assert lines[5].startswith("ORIGIN 0.125 0.125")
    assert lines[7] == "POINT_DATA 32"
    assert lines[8] == "SCALARS n double 1"
    values = np.array([float(v) for v in lines[10:]])
    assert values.size == 32
    # x varies fastest: first 4 values are f[:, 0]; 17 digits round-trip exactly
    assert np.array_equal(values[:4], f.values[:, 0])


def test_vtk_vector_file(tmp_path):
    g = Grid((1.0, 1.0), (4, 4))
    v = VectorField(g, [np.ones(g.face_shape(0)), np.zeros(g.face_shape(1))])
    path = tmp_path / "u.vtk"
    write_vtk_vector(path, v, "u")
    lines = path.read_text().splitlines()
    assert "VECTORS u double" in lines
    data = [l for l in lines[lines.index("VECTORS u double") + 1 :]]
    assert len(data) == 16
    first = [float(x) for x in data[0].split()]
    assert first == [1.0, 0.0, 0.0]


def test_csv_dump(tmp_path):
    g = Grid((1.0, 1.0), (4, 4))
    f = ScalarField.from_function(g, lambda c, t: c[0] + 10 * c[1])
    path = tmp_path / "n.csv"
    write_csv_field(path, f, "n")
    lines = path.read_text().splitlines()
    assert lines[0] == "index,x,y,n"
    assert len(lines) == 17
    idx, x, y, val = lines[1].split(",")
    assert float(val) == float(x) + 10 * float(y)


def test_snapshot_writer_stride(tmp_path):
    g = Grid((1.0, 1.0), (4, 4))
    homog = trivial_homogenizers(g)
    writer = SnapshotWriter(tmp_path, homog, stride=2)
    st = State(ScalarField.zeros(g), ScalarField.zeros(g), VectorField.zeros(g), 0.0)
    for _ in range(4):
        writer(st, st, None)
    assert writer.written == 2
    names = sorted(p.name for p in tmp_path.iterdir())
    assert "snap_0000_n.vtk" in names
    assert "snap_0001_c.vtk" in names
    assert "snap_0000_n.csv" in names
