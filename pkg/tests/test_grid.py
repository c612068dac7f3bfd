import math

import numpy as np
import pytest

from fieldswarm.errors import BoundsError, ValidationError
from fieldswarm.grid import (
    Cell,
    GridMap,
    GridSpec,
    Measurement,
    MeasurementLog,
    ObstacleMask,
    cell_from_index,
    cell_index,
    neighbors8,
)


def test_spec_validation():
    with pytest.raises(ValidationError):
        GridSpec(rows=1, cols=10)
    with pytest.raises(ValidationError):
        GridSpec(rows=10, cols=1)
    with pytest.raises(ValidationError):
        GridSpec(rows=5, cols=5, cell_size_m=0.0)
    spec = GridSpec(rows=3, cols=4)
    assert spec.n_cells == 12
    assert spec.center == (1.0, 1.5)
    assert spec.diagonal == math.hypot(2, 3)


def test_cell_index_roundtrip():
    spec = GridSpec(rows=4, cols=7)
    seen = set()
    for cell in spec.cells():
        idx = cell_index(spec, cell)
        assert cell_from_index(spec, idx) == cell
        seen.add(idx)
    assert seen == set(range(spec.n_cells))
    with pytest.raises(BoundsError):
        cell_index(spec, Cell(4, 0))
    with pytest.raises(BoundsError):
        cell_from_index(spec, 28)


def test_gridmap_shape_and_readonly():
    spec = GridSpec(rows=2, cols=3)
    gm = GridMap(spec, np.arange(6, dtype=float))
    assert gm.values.shape == (2, 3)
    with pytest.raises(ValueError):
        gm.values[0, 0] = 99.0
    with pytest.raises(ValidationError):
        GridMap(spec, np.zeros(5))
    with pytest.raises(ValidationError):
        GridMap(spec, np.zeros(6), kind="unknown")
    assert gm.value_at(Cell(1, 2)) == 5.0
    with pytest.raises(BoundsError):
        gm.value_at(Cell(2, 0))


def test_gridmap_json_roundtrip(tmp_path):
    spec = GridSpec(rows=3, cols=3, cell_size_m=2.5)
    vals = np.array([[0.1, 0.2, 0.3], [np.nan, 0.5, 0.6], [0.7, 0.8, 0.9]])
    gm = GridMap(spec, vals, kind="estimate")
    path = tmp_path / "m.json"
    gm.save(path)
    back = GridMap.load(path)
    assert back.spec == spec
    assert back.kind == "estimate"
    assert np.isnan(back.values[1, 0])
    mask = ~np.isnan(vals)
    assert np.array_equal(back.values[mask], vals[mask])


def test_mask_basics():
    spec = GridSpec(rows=3, cols=3)
    blocked = np.zeros((3, 3), dtype=bool)
    blocked[1, 1] = True
    mask = ObstacleMask(spec, blocked)
    assert mask.n_free == 8
    assert not mask.is_free(Cell(1, 1))
    assert not mask.is_free(Cell(-1, 0))
    cells = mask.free_cells()
    assert len(cells) == 8
    assert all(isinstance(c.row, int) for c in cells)
    with pytest.raises(ValidationError):
        ObstacleMask(spec, np.ones((3, 3), dtype=bool))


def test_mask_json_roundtrip(tmp_path):
    spec = GridSpec(rows=4, cols=5)
    blocked = np.zeros((4, 5), dtype=bool)
    blocked[2, :3] = True
    mask = ObstacleMask(spec, blocked)
    path = tmp_path / "mask.json"
    mask.save(path)
    back = ObstacleMask.load(path)
    assert np.array_equal(back.blocked, mask.blocked)


def test_neighbors_open_interior_and_corner():
    spec = GridSpec(rows=5, cols=5)
    mask = ObstacleMask.open(spec)
    nbs = neighbors8(spec, mask, Cell(2, 2))
    assert len(nbs) == 8
    lengths = sorted(l for _, l in nbs)
    assert lengths[:4] == [1.0] * 4
    assert all(abs(l - math.sqrt(2)) < 1e-15 for l in lengths[4:])
    corner = neighbors8(spec, mask, Cell(0, 0))
    assert {tuple(c) for c, _ in corner} == {(0, 1), (1, 0), (1, 1)}


def test_neighbors_no_corner_cutting():
    spec = GridSpec(rows=3, cols=3)
    blocked = np.zeros((3, 3), dtype=bool)
    # wall through the middle row except the center gap
    blocked[1, 0] = True
    blocked[0, 1] = True
    mask = ObstacleMask(spec, blocked)
    nbs = {tuple(c) for c, _ in neighbors8(spec, mask, Cell(0, 0))}
    # (1, 1) requires squeezing between two blocked orthogonals
    assert (1, 1) not in nbs
    with pytest.raises(BoundsError):
        neighbors8(spec, mask, Cell(1, 0))


def test_measurement_log_ordering():
    log = MeasurementLog()
    log.append(Measurement("a", Cell(0, 0), 0.5, sequence=0))
    log.append(Measurement("b", Cell(0, 1), 0.6, sequence=0))
    log.append(Measurement("a", Cell(1, 1), 0.7, sequence=1))
    assert len(log) == 3
    assert log.distinct_cells() == 3
    assert np.allclose(log.values(), [0.5, 0.6, 0.7])
    with pytest.raises(ValidationError):
        log.append(Measurement("a", Cell(2, 2), 0.1, sequence=1))
    with pytest.raises(ValidationError):
        Measurement("a", Cell(0, 0), math.nan, sequence=5)
