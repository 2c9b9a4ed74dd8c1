"""Periodic boxes, point configurations, and the cell-list spatial index."""

from __future__ import annotations

import math
from dataclasses import dataclass
from itertools import product

import numpy as np

from .kernels import RadialKernel


class GeometryError(ValueError):
    pass


@dataclass(frozen=True)
class Torus:
    """Periodic box [0, side)^dim with a cell grid of n_cells per axis."""

    side: float
    dim: int
    n_cells: int = 8

    def __post_init__(self):
        if not (self.side > 0.0 and math.isfinite(self.side)):
            raise GeometryError(f"side must be positive, got {self.side}")
        if not isinstance(self.dim, (int, np.integer)) or self.dim < 1:
            raise GeometryError(f"dim must be a positive integer, got {self.dim!r}")
        if not isinstance(self.n_cells, (int, np.integer)) or self.n_cells < 1:
            raise GeometryError("n_cells must be a positive integer")

    @property
    def cell_size(self) -> float:
        return self.side / self.n_cells

    @property
    def volume(self) -> float:
        return self.side**self.dim

    @classmethod
    def for_cutoff(cls, side: float, dim: int, cutoff: float) -> "Torus":
        """Pick the cell grid for a kernel cutoff: cells of the cutoff size,
        but never fewer than 8 per axis worth of resolution."""
        if cutoff <= 0.0:
            return cls(side, dim, 8)
        target = min(cutoff, side / 8.0)
        return cls(side, dim, max(1, int(side / target)))

    def wrap(self, x: np.ndarray) -> np.ndarray:
        return np.mod(x, self.side)

    def cell_of(self, x: np.ndarray) -> tuple[int, ...]:
        idx = np.floor(self.wrap(x) / self.cell_size).astype(int)
        return tuple(np.minimum(idx, self.n_cells - 1))

    def flat_cell(self, cell: tuple[int, ...]) -> int:
        flat = 0
        for c in cell:
            flat = flat * self.n_cells + c
        return flat


def periodic_delta(torus: Torus, x: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Minimum-image displacement y - x, componentwise in (-side/2, side/2]."""
    d = np.mod(np.asarray(y, float) - np.asarray(x, float), torus.side)
    return np.where(d > torus.side / 2.0, d - torus.side, d)


def periodic_distance(torus: Torus, x, y) -> float:
    return float(np.linalg.norm(periodic_delta(torus, x, y)))


def periodic_distances(torus: Torus, x, pts: np.ndarray) -> np.ndarray:
    """Minimum-image distances from ``x`` to each row of ``pts``."""
    if pts.size == 0:
        return np.zeros(0)
    d = np.mod(pts - np.asarray(x, float), torus.side)
    d = np.where(d > torus.side / 2.0, d - torus.side, d)
    return np.sqrt((d * d).sum(axis=1))


def pairwise_periodic_distances(torus: Torus, pts: np.ndarray) -> np.ndarray:
    """Condensed vector of minimum-image distances between distinct rows."""
    n = pts.shape[0]
    if n < 2:
        return np.zeros(0)
    iu, ju = np.triu_indices(n, 1)
    d = np.mod(pts[iu] - pts[ju], torus.side)
    d = np.where(d > torus.side / 2.0, d - torus.side, d)
    return np.sqrt((d * d).sum(axis=1))


@dataclass(frozen=True)
class Window:
    """Axis-aligned box [lo, hi) inside the fundamental domain."""

    lo: tuple[float, ...]
    hi: tuple[float, ...]

    def __post_init__(self):
        lo = tuple(float(v) for v in self.lo)
        hi = tuple(float(v) for v in self.hi)
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)
        if len(lo) != len(hi):
            raise GeometryError("lo and hi must have the same length")
        if any(a < 0.0 or a >= b for a, b in zip(lo, hi)):
            raise GeometryError(f"require 0 <= lo < hi, got lo={lo}, hi={hi}")

    @property
    def dim(self) -> int:
        return len(self.lo)

    @property
    def volume(self) -> float:
        return float(np.prod([b - a for a, b in zip(self.lo, self.hi)]))

    def count(self, pts: np.ndarray) -> int:
        if pts.size == 0:
            return 0
        lo = np.asarray(self.lo)
        hi = np.asarray(self.hi)
        inside = np.all((pts >= lo) & (pts < hi), axis=1)
        return int(inside.sum())


class TorusConfiguration:
    """Finite point configuration on a torus with a cell-list index.

    Points carry stable integer identifiers; identifiers are never reused.
    The index maps each grid cell to the set of point ids inside it, so
    local sums only visit cells that intersect the relevant cutoff ball.
    """

    def __init__(self, torus: Torus):
        self.torus = torus
        self._points: dict[int, np.ndarray] = {}
        self._cells: dict[int, set[int]] = {}
        self._next_id = 0

    def __len__(self) -> int:
        return len(self._points)

    def ids(self) -> list[int]:
        return sorted(self._points)

    def position(self, point_id: int) -> np.ndarray:
        try:
            return self._points[point_id].copy()
        except KeyError:
            raise GeometryError(f"no point with id {point_id}") from None

    def positions_array(self) -> np.ndarray:
        """Positions in ascending id order, shape (n, dim)."""
        if not self._points:
            return np.zeros((0, self.torus.dim))
        return np.array([self._points[i] for i in self.ids()])

    def insert(self, position) -> int:
        x = self.torus.wrap(np.asarray(position, dtype=float))
        if x.shape != (self.torus.dim,):
            raise GeometryError(
                f"position has shape {x.shape}, expected ({self.torus.dim},)"
            )
        pid = self._next_id
        self._next_id += 1
        self._points[pid] = x
        self._cells.setdefault(self.torus.flat_cell(self.torus.cell_of(x)), set()).add(
            pid
        )
        return pid

    def remove(self, point_id: int) -> np.ndarray:
        try:
            x = self._points.pop(point_id)
        except KeyError:
            raise GeometryError(f"no point with id {point_id}") from None
        flat = self.torus.flat_cell(self.torus.cell_of(x))
        cell = self._cells[flat]
        cell.discard(point_id)
        if not cell:
            del self._cells[flat]
        return x

    def clone(self) -> "TorusConfiguration":
        other = TorusConfiguration(self.torus)
        other._points = {k: v.copy() for k, v in self._points.items()}
        other._cells = {k: set(v) for k, v in self._cells.items()}
        other._next_id = self._next_id
        return other

    # -- index ------------------------------------------------------------

    def cell_index(self) -> dict[int, set[int]]:
        return {k: set(v) for k, v in self._cells.items()}

    def rebuilt_cell_index(self) -> dict[int, set[int]]:
        """Index recomputed from scratch; equals cell_index() at all times."""
        fresh: dict[int, set[int]] = {}
        for pid, x in self._points.items():
            fresh.setdefault(self.torus.flat_cell(self.torus.cell_of(x)), set()).add(
                pid
            )
        return fresh

    def _candidate_ids(self, x: np.ndarray, radius: float) -> list[int]:
        t = self.torus
        rings = int(math.ceil(radius / t.cell_size))
        if 2 * rings + 1 >= t.n_cells:
            return self.ids()
        base = t.cell_of(x)
        found: set[int] = set()
        offsets = range(-rings, rings + 1)
        for off in product(offsets, repeat=t.dim):
            cell = tuple((b + o) % t.n_cells for b, o in zip(base, off))
            bucket = self._cells.get(t.flat_cell(cell))
            if bucket:
                found.update(bucket)
        return sorted(found)

    # -- local sums and counts ---------------------------------------------

    def neighbors_within(self, x, radius: float, exclude: int | None = None):
        """Ids and minimum-image distances of points within ``radius`` of x.

        Ids come back in ascending order so float reductions are reproducible.
        """
        x = np.asarray(x, dtype=float)
        if radius > self.torus.side / 2.0:
            raise GeometryError(
                f"interaction radius {radius:g} exceeds half the box side "
                f"{self.torus.side / 2.0:g}"
            )
        cand = self._candidate_ids(x, radius)
        if exclude is not None:
            cand = [i for i in cand if i != exclude]
        if not cand:
            return [], np.zeros(0)
        pts = np.array([self._points[i] for i in cand])
        dists = periodic_distances(self.torus, x, pts)
        mask = dists <= radius
        return [i for i, keep in zip(cand, mask) if keep], dists[mask]

    def kernel_sum_at(
        self, kernel: RadialKernel, x, exclude: int | None = None
    ) -> float:
        """Sum of kernel(dist(x, y)) over points y within the kernel cutoff."""
        if kernel.dim != self.torus.dim:
            raise GeometryError(
                f"kernel dimension {kernel.dim} != torus dimension {self.torus.dim}"
            )
        cutoff = kernel.cutoff_radius()
        if cutoff > self.torus.side / 2.0:
            raise GeometryError(
                f"kernel too wide for torus: cutoff {cutoff:g} > side/2 "
                f"{self.torus.side / 2.0:g}"
            )
        _, dists = self.neighbors_within(x, cutoff, exclude=exclude)
        if dists.size == 0:
            return 0.0
        return float(kernel.profile(dists).sum())

    def kernel_sum_tail_budget(self, kernel: RadialKernel) -> float:
        """Certified bound on mass any kernel_sum_at may miss beyond the cutoff."""
        return kernel.tail_sup() * len(self)

    def count_in_window(self, window: Window) -> int:
        if window.dim != self.torus.dim:
            raise GeometryError(
                f"window dimension {window.dim} != torus dimension {self.torus.dim}"
            )
        if any(b > self.torus.side for b in window.hi):
            raise GeometryError("window extends beyond the fundamental domain")
        return window.count(self.positions_array())


def sample_poisson(
    torus: Torus, intensity: float, rng: np.random.Generator
) -> TorusConfiguration:
    """Homogeneous Poisson configuration: N ~ Poisson(intensity * volume),
    positions independent and uniform."""
    if intensity < 0.0:
        raise GeometryError(f"intensity must be >= 0, got {intensity}")
    cfg = TorusConfiguration(torus)
    n = rng.poisson(intensity * torus.volume)
    for x in rng.uniform(0.0, torus.side, (n, torus.dim)):
        cfg.insert(x)
    return cfg
