"""2D occupancy grid plus the two map loaders (PGM + metadata, ASCII art)."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .geometry import Pose2


class MapFormatError(ValueError):
    """Raised when a map file cannot be parsed."""


@dataclass
class OccupancyGrid:
    """Row-major occupancy flags; cells[iy, ix], cell (0, 0) at the grid origin.

    `origin` is the world pose of the lower-left grid corner. Cell centers sit
    at origin + ((ix + 0.5) res, (iy + 0.5) res) rotated by origin.theta.
    """

    width: int
    height: int
    resolution: float
    origin: Pose2
    cells: np.ndarray = field(repr=False)

    def __post_init__(self):
        if self.resolution <= 0.0:
            raise ValueError("resolution must be positive")
        self.cells = np.asarray(self.cells, dtype=bool)
        if self.cells.shape != (self.height, self.width):
            raise ValueError(
                f"cells shape {self.cells.shape} != (height, width) = "
                f"({self.height}, {self.width})"
            )

    def world_to_cell(self, x: float, y: float) -> tuple[int, int]:
        """Cell index containing a world point (may be out of bounds)."""
        dx = x - self.origin.x
        dy = y - self.origin.y
        if self.origin.theta != 0.0:
            c, s = math.cos(-self.origin.theta), math.sin(-self.origin.theta)
            dx, dy = c * dx - s * dy, s * dx + c * dy
        return int(math.floor(dx / self.resolution)), int(math.floor(dy / self.resolution))

    def cell_center(self, ix: int, iy: int) -> tuple[float, float]:
        lx = (ix + 0.5) * self.resolution
        ly = (iy + 0.5) * self.resolution
        if self.origin.theta != 0.0:
            c, s = math.cos(self.origin.theta), math.sin(self.origin.theta)
            lx, ly = c * lx - s * ly, s * lx + c * ly
        return self.origin.x + lx, self.origin.y + ly

    def in_bounds(self, ix: int, iy: int) -> bool:
        return 0 <= ix < self.width and 0 <= iy < self.height

    def is_occupied(self, ix: int, iy: int) -> bool:
        """Occupancy with out-of-bounds treated as occupied."""
        if not self.in_bounds(ix, iy):
            return True
        return bool(self.cells[iy, ix])

    def world_extent(self) -> tuple[float, float, float, float]:
        """Axis-aligned (xmin, xmax, ymin, ymax) for an unrotated origin."""
        return (
            self.origin.x,
            self.origin.x + self.width * self.resolution,
            self.origin.y,
            self.origin.y + self.height * self.resolution,
        )


def grid_from_ascii(rows: list[str], resolution: float, origin: Pose2 = Pose2(0, 0, 0)) -> OccupancyGrid:
    """Build a grid from ASCII art: '#' occupied, '.' free.

    rows[0] is the visual top of the map, so it lands at the highest iy.
    """
    if not rows:
        raise MapFormatError("empty ascii map")
    width = len(rows[0])
    if any(len(r) != width for r in rows):
        raise MapFormatError("ascii map rows must all have the same length")
    height = len(rows)
    cells = np.zeros((height, width), dtype=bool)
    for vis_row, line in enumerate(rows):
        iy = height - 1 - vis_row
        for ix, ch in enumerate(line):
            if ch == "#":
                cells[iy, ix] = True
            elif ch != ".":
                raise MapFormatError(f"unexpected map character {ch!r} at row {vis_row}, col {ix}")
    return OccupancyGrid(width, height, resolution, origin, cells)


def _read_pgm(path: Path) -> np.ndarray:
    """Minimal P2/P5 PGM reader returning a (rows, cols) uint array."""
    data = path.read_bytes()
    tokens: list[bytes] = []
    i = 0
    # header: magic, width, height, maxval, with '#' comments allowed
    while len(tokens) < 4:
        while i < len(data) and data[i : i + 1].isspace():
            i += 1
        if i < len(data) and data[i : i + 1] == b"#":
            while i < len(data) and data[i : i + 1] != b"\n":
                i += 1
            continue
        start = i
        while i < len(data) and not data[i : i + 1].isspace():
            i += 1
        if start == i:
            raise MapFormatError(f"truncated PGM header in {path}")
        tokens.append(data[start:i])
    magic = tokens[0]
    try:
        width, height, maxval = (int(t) for t in tokens[1:4])
    except ValueError as e:
        raise MapFormatError(f"bad PGM header in {path}: {e}") from e
    if maxval <= 0 or maxval > 65535:
        raise MapFormatError(f"unsupported PGM maxval {maxval}")
    if magic == b"P5":
        i += 1  # single whitespace after maxval
        dtype = np.dtype(">u2") if maxval > 255 else np.uint8
        raw = np.frombuffer(data, dtype=dtype, offset=i, count=width * height)
        img = raw.astype(np.int64)
    elif magic == b"P2":
        values = data[i:].split()
        if len(values) < width * height:
            raise MapFormatError(f"P2 PGM {path} has too few samples")
        img = np.array([int(v) for v in values[: width * height]], dtype=np.int64)
    else:
        raise MapFormatError(f"{path} is not a PGM file (magic {magic!r})")
    return img.reshape(height, width), maxval


def _parse_map_meta(path: Path) -> dict:
    """Parse the 'key: value' metadata file accompanying a PGM map."""
    meta: dict = {}
    for lineno, line in enumerate(path.read_text().splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if ":" not in line:
            raise MapFormatError(f"{path}:{lineno}: expected 'key: value'")
        key, value = (part.strip() for part in line.split(":", 1))
        if value.startswith("[") and value.endswith("]"):
            meta[key] = [float(v) for v in value[1:-1].split(",") if v.strip()]
        else:
            try:
                meta[key] = float(value)
            except ValueError:
                meta[key] = value
    return meta


def load_pgm_map(image_path: str | Path, meta_path: str | Path) -> OccupancyGrid:
    """Load an occupancy grid from a greyscale PGM plus a metadata text file.

    Metadata keys: resolution (m/cell, required), origin ([x, y, theta],
    default zeros), occupied_thresh (fraction of darkness above which a cell
    is occupied, default 0.65), negate (0/1, default 0). Darker pixels mean
    occupied unless negate is set, following the usual grid-map convention.
    """
    image_path, meta_path = Path(image_path), Path(meta_path)
    if not image_path.exists():
        raise FileNotFoundError(f"map image not found: {image_path}")
    meta = _parse_map_meta(meta_path)
    if "resolution" not in meta:
        raise MapFormatError(f"{meta_path}: missing required key 'resolution'")
    resolution = float(meta["resolution"])
    origin_vals = meta.get("origin", [0.0, 0.0, 0.0])
    if not isinstance(origin_vals, list) or len(origin_vals) != 3:
        raise MapFormatError(f"{meta_path}: origin must be [x, y, theta]")
    occupied_thresh = float(meta.get("occupied_thresh", 0.65))
    negate = int(meta.get("negate", 0))

    img, maxval = _read_pgm(image_path)
    shade = img / maxval
    darkness = shade if negate else 1.0 - shade
    occupied = darkness > occupied_thresh
    # image row 0 is the top of the map
    cells = np.flipud(occupied)
    height, width = cells.shape
    return OccupancyGrid(width, height, resolution, Pose2(*origin_vals), cells.copy())
