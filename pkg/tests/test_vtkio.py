import numpy as np
import pytest

from mpfel.grid import Grid
from mpfel import vtkio


class TestVtkWriter:
    def test_header_and_cell_data(self, tmp_path):
        grid = Grid((4, 5, 6), 1e-4)
        rng = np.random.default_rng(0)
        path = tmp_path / "out.vtk"
        vtkio.write_vtk(
            path,
            grid,
            {"psi_elastic": rng.random(grid.ncells), "stress": rng.random((grid.ncells, 6))},
        )
        text = path.read_text().splitlines()
        assert text[0].startswith("# vtk DataFile")
        assert "ASCII" in text[2]
        assert text[3] == "DATASET STRUCTURED_POINTS"
        assert text[4] == "DIMENSIONS 5 6 7"
        assert text[6].startswith("SPACING 0.0001")
        assert f"CELL_DATA {grid.ncells}" in text
        assert any(line.startswith("SCALARS psi_elastic double 1") for line in text)
        assert any(line.startswith("FIELD FieldData") for line in text)
        assert any(line.startswith(f"stress 6 {grid.ncells} double") for line in text)

    def test_2d_dimensions(self, tmp_path):
        grid = Grid((8, 4), 0.5)
        path = tmp_path / "out2d.vtk"
        vtkio.write_vtk(path, grid, {"phi_a": np.zeros(grid.ncells)})
        text = path.read_text().splitlines()
        assert text[4] == "DIMENSIONS 9 5 1"

    def test_x_fastest_ordering(self, tmp_path):
        grid = Grid((4, 4), 1.0)
        field = np.arange(16, dtype=float)  # flat C-order: index = x*4 + y
        path = tmp_path / "ord.vtk"
        vtkio.write_vtk(path, grid, {"f": field})
        lines = path.read_text().splitlines()
        start = lines.index("LOOKUP_TABLE default") + 1
        vals = [float(v) for v in lines[start : start + 16]]
        # VTK order runs x fastest: (x=0..3, y=0), (x=0..3, y=1), ...
        expected = [x * 4 + y for y in range(4) for x in range(4)]
        assert vals == expected


class TestPolyline:
    def test_single_point(self):
        grid = Grid((8, 8), 1.0)
        assert vtkio.sample_polyline(grid, [3, 4], [3, 4]) == [(3, 4)]

    def test_axis_line(self):
        grid = Grid((8, 8), 1.0)
        cells = vtkio.sample_polyline(grid, [0, 2], [5, 2])
        assert cells == [(x, 2) for x in range(6)]

    def test_diagonal_no_duplicates(self):
        grid = Grid((16, 16), 1.0)
        cells = vtkio.sample_polyline(grid, [0, 0], [10, 5])
        assert len(cells) == len(set(cells))
        assert cells[0] == (0, 0) and cells[-1] == (10, 5)

    def test_wraps_periodically(self):
        grid = Grid((8, 8), 1.0)
        cells = vtkio.sample_polyline(grid, [6, 0], [9, 0])
        assert cells == [(6, 0), (7, 0), (0, 0), (1, 0)]

    def test_dimension_check(self):
        grid = Grid((8, 8), 1.0)
        with pytest.raises(ValueError):
            vtkio.sample_polyline(grid, [0, 0, 0], [1, 1, 1])


class TestProbeCsv:
    def test_rows_and_units_header(self, tmp_path):
        grid = Grid((8, 4), 2.0)
        psi = np.arange(grid.ncells, dtype=float)
        strain = np.tile(np.arange(3.0), (grid.ncells, 1))
        path = tmp_path / "probe.csv"
        cells = vtkio.sample_polyline(grid, [0, 1], [4, 1])
        vtkio.write_probe_csv(path, grid, cells, {"psi_elastic": psi, "strain": strain})
        lines = path.read_text().strip().splitlines()
        header = lines[0].split(",")
        assert header[0] == "index"
        assert header[1] == "x_m" and header[2] == "y_m"
        assert "psi_elastic_J_per_m3" in header
        assert "strain_xx_1" in header and "strain_xy_1" in header
        assert len(lines) == 6  # header + 5 cells
        first = lines[1].split(",")
        assert float(first[1]) == 0.0 and float(first[2]) == 2.0  # meters
        assert float(first[3]) == psi[np.ravel_multi_index((0, 1), grid.dims)]


class TestStateSnapshot:
    def test_round_trip(self, tmp_path):
        grid = Grid((6, 4), 1e-6)
        rng = np.random.default_rng(1)
        fields = {"phi_a": rng.random(grid.ncells), "stress": rng.random((grid.ncells, 3))}
        path = tmp_path / "state.npz"
        vtkio.write_state_npz(path, grid, ["a"], fields)
        grid2, names, fields2 = vtkio.load_state_npz(path)
        assert grid2 == grid
        assert names == ["a"]
        assert set(fields2) == set(fields)
        for k in fields:
            assert np.array_equal(fields2[k], fields[k])
