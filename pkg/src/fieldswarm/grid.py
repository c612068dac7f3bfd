"""Grid-world vocabulary: specs, cells, dense maps, obstacle masks, measurements.

Conventions fixed here and relied on everywhere else:

* (row, col) addressing, row-major storage.
* Distances are Euclidean in cell units; physical distance is cell units
  times ``cell_size_m``.
* Movement is 8-connected: orthogonal steps have length 1, diagonal steps
  length sqrt(2).  A diagonal move is forbidden when *both* of its adjacent
  orthogonal cells are blocked (no squeezing through a closed corner).

All value types are immutable once constructed (frozen dataclasses with
read-only numpy buffers) and safe to share across threads.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import Iterator, NamedTuple, Optional, Sequence

import numpy as np

from .errors import BoundsError, ValidationError

SQRT2 = math.sqrt(2.0)

MAP_KINDS = ("truth", "estimate", "uncertainty", "score")


class Cell(NamedTuple):
    """A single grid cell, addressed (row, col)."""

    row: int
    col: int


@dataclass(frozen=True)
class GridSpec:
    """Shape of the discretized search domain."""

    rows: int
    cols: int
    cell_size_m: float = 1.0

    def __post_init__(self):
        if self.rows < 2 or self.cols < 2:
            raise ValidationError(f"grid must be at least 2x2, got {self.rows}x{self.cols}")
        if not (self.cell_size_m > 0 and math.isfinite(self.cell_size_m)):
            raise ValidationError(f"cell_size_m must be positive, got {self.cell_size_m}")

    @property
    def n_cells(self) -> int:
        return self.rows * self.cols

    @property
    def center(self) -> tuple[float, float]:
        """Continuous (row, col) of the domain center."""
        return ((self.rows - 1) / 2.0, (self.cols - 1) / 2.0)

    @property
    def diagonal(self) -> float:
        """Grid diagonal in cell units."""
        return math.hypot(self.rows - 1, self.cols - 1)

    def contains(self, cell: Cell) -> bool:
        return 0 <= cell.row < self.rows and 0 <= cell.col < self.cols

    def cells(self) -> Iterator[Cell]:
        for r in range(self.rows):
            for c in range(self.cols):
                yield Cell(r, c)


def cell_index(spec: GridSpec, cell: Cell) -> int:
    """Row-major flat index of ``cell``; bijective over in-bounds cells."""
    if not spec.contains(cell):
        raise BoundsError(f"cell {tuple(cell)} outside {spec.rows}x{spec.cols} grid")
    return cell.row * spec.cols + cell.col


def cell_from_index(spec: GridSpec, index: int) -> Cell:
    """Inverse of :func:`cell_index`."""
    if not 0 <= index < spec.n_cells:
        raise BoundsError(f"index {index} outside grid with {spec.n_cells} cells")
    return Cell(index // spec.cols, index % spec.cols)


def _as_readonly(arr: np.ndarray) -> np.ndarray:
    out = np.ascontiguousarray(arr)
    if out is arr:
        out = arr.copy()
    out.flags.writeable = False
    return out


@dataclass(frozen=True)
class GridMap:
    """Dense scalar field over a grid.  ``values`` has shape (rows, cols)."""

    spec: GridSpec
    values: np.ndarray
    kind: str = "truth"

    def __post_init__(self):
        if self.kind not in MAP_KINDS:
            raise ValidationError(f"unknown map kind {self.kind!r}")
        vals = np.asarray(self.values, dtype=np.float64)
        if vals.shape != (self.spec.rows, self.spec.cols):
            if vals.size == self.spec.n_cells:
                vals = vals.reshape(self.spec.rows, self.spec.cols)
            else:
                raise ValidationError(
                    f"values of size {vals.size} do not fit {self.spec.rows}x{self.spec.cols}"
                )
        object.__setattr__(self, "values", _as_readonly(vals))

    def value_at(self, cell: Cell) -> float:
        if not self.spec.contains(cell):
            raise BoundsError(f"cell {tuple(cell)} outside grid")
        return float(self.values[cell.row, cell.col])

    def with_values(self, values: np.ndarray, kind: Optional[str] = None) -> "GridMap":
        return GridMap(self.spec, values, kind or self.kind)

    def to_json(self) -> dict:
        """gridmap/json object.  Non-finite entries are encoded as null."""
        flat = self.values.reshape(-1)
        vals = [float(v) if math.isfinite(v) else None for v in flat.tolist()]
        return {
            "rows": self.spec.rows,
            "cols": self.spec.cols,
            "cell_size_m": self.spec.cell_size_m,
            "kind": self.kind,
            "values": vals,
        }

    @classmethod
    def from_json(cls, obj: dict) -> "GridMap":
        spec = GridSpec(int(obj["rows"]), int(obj["cols"]), float(obj["cell_size_m"]))
        vals = np.array(
            [math.nan if v is None else float(v) for v in obj["values"]], dtype=np.float64
        )
        return cls(spec, vals, str(obj["kind"]))

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_json(), fh)

    @classmethod
    def load(cls, path) -> "GridMap":
        with open(path, "r", encoding="utf-8") as fh:
            return cls.from_json(json.load(fh))


@dataclass(frozen=True)
class ObstacleMask:
    """Boolean blocked-cell mask; at least one free cell must remain."""

    spec: GridSpec
    blocked: np.ndarray

    def __post_init__(self):
        blk = np.asarray(self.blocked, dtype=bool)
        if blk.shape != (self.spec.rows, self.spec.cols):
            if blk.size == self.spec.n_cells:
                blk = blk.reshape(self.spec.rows, self.spec.cols)
            else:
                raise ValidationError("blocked mask does not fit the grid")
        if blk.all():
            raise ValidationError("obstacle mask leaves no free cell")
        object.__setattr__(self, "blocked", _as_readonly(blk))

    @classmethod
    def open(cls, spec: GridSpec) -> "ObstacleMask":
        """All-free mask."""
        return cls(spec, np.zeros((spec.rows, spec.cols), dtype=bool))

    @property
    def free(self) -> np.ndarray:
        return ~self.blocked

    @property
    def n_free(self) -> int:
        return int(self.free.sum())

    def is_free(self, cell: Cell) -> bool:
        return self.spec.contains(cell) and not self.blocked[cell.row, cell.col]

    def free_cells(self) -> list[Cell]:
        rr, cc = np.nonzero(self.free)
        return [Cell(int(r), int(c)) for r, c in zip(rr, cc)]

    def to_json(self) -> dict:
        return {
            "rows": self.spec.rows,
            "cols": self.spec.cols,
            "cell_size_m": self.spec.cell_size_m,
            "kind": "obstacle",
            "blocked": [bool(b) for b in self.blocked.reshape(-1).tolist()],
        }

    @classmethod
    def from_json(cls, obj: dict) -> "ObstacleMask":
        spec = GridSpec(int(obj["rows"]), int(obj["cols"]), float(obj["cell_size_m"]))
        return cls(spec, np.array(obj["blocked"], dtype=bool))

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_json(), fh)

    @classmethod
    def load(cls, path) -> "ObstacleMask":
        with open(path, "r", encoding="utf-8") as fh:
            return cls.from_json(json.load(fh))


# The 8 neighbor offsets: orthogonals first, then diagonals.
_ORTHO = ((-1, 0), (1, 0), (0, -1), (0, 1))
_DIAG = ((-1, -1), (-1, 1), (1, -1), (1, 1))


def neighbors8(spec: GridSpec, mask: ObstacleMask, cell: Cell) -> list[tuple[Cell, float]]:
    """Reachable neighbors of ``cell`` with their step lengths.

    Orthogonal steps cost 1, diagonals sqrt(2).  A diagonal neighbor is
    excluded when both of the orthogonal cells flanking the move are blocked.
    Returns an empty list for a fully enclosed cell.
    """
    if not mask.is_free(cell):
        raise BoundsError(f"cell {tuple(cell)} is blocked or out of bounds")
    r, c = cell
    out: list[tuple[Cell, float]] = []
    for dr, dc in _ORTHO:
        nb = Cell(r + dr, c + dc)
        if mask.is_free(nb):
            out.append((nb, 1.0))
    for dr, dc in _DIAG:
        nb = Cell(r + dr, c + dc)
        if not mask.is_free(nb):
            continue
        # corner-cut rule: need at least one flanking orthogonal cell free
        side_a = Cell(r + dr, c)
        side_b = Cell(r, c + dc)
        if not mask.is_free(side_a) and not mask.is_free(side_b):
            continue
        out.append((nb, SQRT2))
    return out


@dataclass(frozen=True)
class Measurement:
    """One sampled value: who, where, what, in which order."""

    agent_id: str
    cell: Cell
    value: float
    sequence: int
    timestamp: Optional[float] = None

    def __post_init__(self):
        if not math.isfinite(self.value):
            raise ValidationError(f"measurement value must be finite, got {self.value}")


class MeasurementLog:
    """Ordered measurement collection shared by all agents.

    Entries keep global arrival order; duplicate cells are permitted
    (deduplication happens at kriging time).  Per-agent sequence numbers
    must be strictly increasing.
    """

    def __init__(self, entries: Sequence[Measurement] = ()):
        self._entries: list[Measurement] = []
        self._last_seq: dict[str, int] = {}
        for m in entries:
            self.append(m)

    def append(self, m: Measurement) -> None:
        last = self._last_seq.get(m.agent_id)
        if last is not None and m.sequence <= last:
            raise ValidationError(
                f"sequence {m.sequence} not increasing for agent {m.agent_id} (last {last})"
            )
        self._last_seq[m.agent_id] = m.sequence
        self._entries.append(m)

    @property
    def entries(self) -> tuple[Measurement, ...]:
        return tuple(self._entries)

    def __len__(self) -> int:
        return len(self._entries)

    def __iter__(self) -> Iterator[Measurement]:
        return iter(self._entries)

    def distinct_cells(self) -> int:
        return len({m.cell for m in self._entries})

    def values(self) -> np.ndarray:
        return np.array([m.value for m in self._entries], dtype=np.float64)


@dataclass(frozen=True)
class AgentState:
    """Snapshot of one agent: where it is, where it is headed."""

    id: str
    position: Cell
    goal: Optional[Cell] = None
    steps_taken: int = 0
    planned_route: Optional[tuple[Cell, ...]] = None

    def validate_against(self, mask: ObstacleMask) -> None:
        if not mask.is_free(self.position):
            raise ValidationError(f"agent {self.id} position {tuple(self.position)} not free")
        if self.goal is not None and not mask.is_free(self.goal):
            raise ValidationError(f"agent {self.id} goal {tuple(self.goal)} not free")
        if self.planned_route:
            if self.planned_route[0] != self.position:
                raise ValidationError("planned route must start at the agent position")
            if self.goal is not None and self.planned_route[-1] != self.goal:
                raise ValidationError("planned route must end at the goal")
