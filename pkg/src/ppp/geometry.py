"""Rectangular observation windows and planar point patterns.

Everything downstream (samplers, summary statistics, estimators) works on
the two immutable types defined here: :class:`Window` and
:class:`PointPattern`.  Coordinates are double precision throughout and
windows are closed, i.e. points exactly on the boundary count as inside.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.spatial.distance import pdist, squareform


class GeometryError(ValueError):
    pass


@dataclass(frozen=True)
class Window:
    """Axis-aligned rectangle [x_min, x_max] x [y_min, y_max]."""

    x_min: float
    x_max: float
    y_min: float
    y_max: float

    def __post_init__(self):
        if not (self.x_max > self.x_min and self.y_max > self.y_min):
            raise GeometryError(
                f"degenerate window: [{self.x_min}, {self.x_max}] x "
                f"[{self.y_min}, {self.y_max}]"
            )

    @classmethod
    def unit_square(cls) -> "Window":
        return cls(0.0, 1.0, 0.0, 1.0)

    def area(self) -> float:
        return (self.x_max - self.x_min) * (self.y_max - self.y_min)

    def side_lengths(self) -> tuple[float, float]:
        return (self.x_max - self.x_min, self.y_max - self.y_min)

    def shorter_side(self) -> float:
        return min(self.side_lengths())

    def contains(self, points: np.ndarray) -> np.ndarray:
        """Boolean mask of which rows of an (n, 2) array lie in the window."""
        points = np.asarray(points, dtype=float).reshape(-1, 2)
        return (
            (points[:, 0] >= self.x_min)
            & (points[:, 0] <= self.x_max)
            & (points[:, 1] >= self.y_min)
            & (points[:, 1] <= self.y_max)
        )

    def dilated(self, margin: float) -> "Window":
        """Window grown by ``margin`` on all four sides."""
        if margin < 0:
            raise GeometryError("margin must be >= 0")
        return Window(
            self.x_min - margin,
            self.x_max + margin,
            self.y_min - margin,
            self.y_max + margin,
        )

    def eroded(self, margin: float) -> "Window":
        """Window shrunk by ``margin`` on all four sides."""
        if margin < 0:
            raise GeometryError("margin must be >= 0")
        if margin >= self.shorter_side() / 2:
            raise GeometryError(
                f"erosion by {margin} empties a window with shorter side "
                f"{self.shorter_side()}"
            )
        return Window(
            self.x_min + margin,
            self.x_max - margin,
            self.y_min + margin,
            self.y_max - margin,
        )

    def to_dict(self) -> dict:
        return {
            "x_min": self.x_min,
            "x_max": self.x_max,
            "y_min": self.y_min,
            "y_max": self.y_max,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Window":
        return cls(d["x_min"], d["x_max"], d["y_min"], d["y_max"])


def dilate(w: Window, margin: float) -> Window:
    return w.dilated(margin)


def erode(w: Window, margin: float) -> Window:
    return w.eroded(margin)


@dataclass(frozen=True)
class PointPattern:
    """A finite planar point pattern observed in a rectangular window.

    ``points`` is an (n, 2) float array; order is preserved.  Construction
    checks that every point lies inside the (closed) window.
    """

    points: np.ndarray
    window: Window

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float).reshape(-1, 2).copy()
        pts.setflags(write=False)
        object.__setattr__(self, "points", pts)
        if not np.all(self.window.contains(pts)):
            raise GeometryError("point pattern contains points outside the window")

    def n(self) -> int:
        return self.points.shape[0]

    def has_duplicates(self, tol: float = 0.0) -> bool:
        """Diagnostic: any pair of coincident (within ``tol``) points."""
        if self.n() < 2:
            return False
        return bool(np.min(pdist(self.points)) <= tol)

    def restricted_to(self, w: Window) -> "PointPattern":
        """Sub-pattern of points falling in ``w`` (used to clip simulations)."""
        return PointPattern(self.points[w.contains(self.points)], w)


def pairwise_distances(p: PointPattern) -> np.ndarray:
    """Full symmetric n x n Euclidean distance matrix (zero diagonal)."""
    if p.n() == 0:
        return np.zeros((0, 0))
    if p.n() == 1:
        return np.zeros((1, 1))
    return squareform(pdist(p.points))


def count_r_close_pairs(p: PointPattern, R: float) -> int:
    """Number of unordered pairs at distance <= R."""
    if R < 0:
        raise GeometryError("R must be >= 0")
    if p.n() < 2:
        return 0
    return int(np.count_nonzero(pdist(p.points) <= R))


def distance_to_boundary(u, w: Window) -> np.ndarray | float:
    """Distance from point(s) ``u`` inside ``w`` to the nearest window edge.

    Accepts a single (x, y) pair or an (n, 2) array; returns a scalar or an
    (n,) array correspondingly.
    """
    arr = np.asarray(u, dtype=float)
    scalar = arr.ndim == 1
    pts = arr.reshape(-1, 2)
    if not np.all(w.contains(pts)):
        raise GeometryError("point outside the window")
    d = np.minimum.reduce(
        [
            pts[:, 0] - w.x_min,
            w.x_max - pts[:, 0],
            pts[:, 1] - w.y_min,
            w.y_max - pts[:, 1],
        ]
    )
    return float(d[0]) if scalar else d


def write_pattern_csv(p: PointPattern, path) -> None:
    """Write ``x,y`` CSV plus a JSON sidecar carrying the window."""
    path = Path(path)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["x", "y"])
        for x, y in p.points:
            writer.writerow([repr(float(x)), repr(float(y))])
    sidecar = path.with_suffix(path.suffix + ".meta.json")
    with open(sidecar, "w") as fh:
        json.dump({"window": p.window.to_dict()}, fh, indent=2)


def read_pattern_csv(path, window: Window | None = None) -> PointPattern:
    """Read an ``x,y`` CSV; the window comes from the sidecar unless given."""
    path = Path(path)
    if window is None:
        sidecar = path.with_suffix(path.suffix + ".meta.json")
        if not sidecar.exists():
            raise GeometryError(
                f"no window given and no sidecar metadata found at {sidecar}"
            )
        with open(sidecar) as fh:
            window = Window.from_dict(json.load(fh)["window"])
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if [h.strip().lower() for h in header[:2]] != ["x", "y"]:
            raise GeometryError(f"expected 'x,y' header in {path}, got {header}")
        pts = [(float(row[0]), float(row[1])) for row in reader if row]
    return PointPattern(np.array(pts, dtype=float).reshape(-1, 2), window)
