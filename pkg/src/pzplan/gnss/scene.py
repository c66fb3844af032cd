"""2.5D urban scenes: extruded convex building footprints."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..zonotope import polygon_is_convex

__all__ = ["Building", "SceneError", "UrbanScene", "decompose_convex", "load_scene", "scene_from_dict"]


class SceneError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class Building:
    footprint: np.ndarray  # (m, 2), counter-clockwise, convex
    height: float
    source_index: int = 0

    def edges(self):
        """Yield ``(p, q, outward_normal)`` for each facade."""
        v = self.footprint
        for i in range(len(v)):
            p, q = v[i], v[(i + 1) % len(v)]
            d = q - p
            n = np.array([d[1], -d[0]]) / np.hypot(d[0], d[1])
            yield p, q, n


@dataclass(frozen=True, eq=False)
class UrbanScene:
    buildings: tuple[Building, ...]
    altitude: float
    anchor: tuple[float, float, float] = (37.4275, -122.1697, 0.0)
    elevation_mask_deg: float = 10.0
    bounds: tuple[tuple[float, float], tuple[float, float]] | None = None
    metadata: dict = field(default_factory=dict)

    def obstacles(self) -> list[np.ndarray]:
        """Footprints of buildings that reach the flight altitude."""
        return [b.footprint for b in self.buildings if b.height > self.altitude]

    def extent(self) -> tuple[tuple[float, float], tuple[float, float]]:
        if self.bounds is not None:
            return self.bounds
        if not self.buildings:
            return (0.0, 0.0), (0.0, 0.0)
        pts = np.vstack([b.footprint for b in self.buildings])
        return (float(pts[:, 0].min()), float(pts[:, 0].max())), (float(pts[:, 1].min()), float(pts[:, 1].max()))

    def to_dict(self) -> dict:
        out = {
            "buildings": [{"footprint": b.footprint.tolist(), "height": b.height} for b in self.buildings],
            "altitude": self.altitude,
            "anchor": list(self.anchor),
            "elevation_mask_deg": self.elevation_mask_deg,
        }
        if self.bounds is not None:
            out["bounds"] = [list(self.bounds[0]), list(self.bounds[1])]
        return out


def _signed_area(v: np.ndarray) -> float:
    x, y = v[:, 0], v[:, 1]
    return 0.5 * float(np.dot(x, np.roll(y, -1)) - np.dot(np.roll(x, -1), y))


def _point_in_triangle(p, a, b, c) -> bool:
    def cross(o, u, w):
        return (u[0] - o[0]) * (w[1] - o[1]) - (u[1] - o[1]) * (w[0] - o[0])

    return cross(a, b, p) >= 0 and cross(b, c, p) >= 0 and cross(c, a, p) >= 0


def decompose_convex(poly) -> list[np.ndarray]:
    """Split a simple polygon into convex pieces (ear clipping into triangles).

    Convex input is returned unchanged (counter-clockwise).
    """
    v = np.asarray(poly, dtype=float)
    if _signed_area(v) < 0:
        v = v[::-1]
    if polygon_is_convex(v):
        return [v]
    idx = list(range(len(v)))
    tris = []
    guard = 0
    while len(idx) > 3:
        guard += 1
        if guard > 10 * len(v) ** 2:
            raise SceneError("footprint is not a simple polygon")
        for j in range(len(idx)):
            i0, i1, i2 = idx[j - 1], idx[j], idx[(j + 1) % len(idx)]
            a, b, c = v[i0], v[i1], v[i2]
            if (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0]) <= 0:
                continue
            if any(_point_in_triangle(v[k], a, b, c) for k in idx if k not in (i0, i1, i2)):
                continue
            tris.append(np.array([a, b, c]))
            idx.pop(j)
            break
    tris.append(v[idx])
    return tris


def scene_from_dict(data: dict) -> UrbanScene:
    try:
        altitude = float(data["altitude"])
    except (KeyError, TypeError, ValueError):
        raise SceneError("scene needs a numeric 'altitude'") from None
    buildings = []
    for i, raw in enumerate(data.get("buildings", [])):
        try:
            fp = np.asarray(raw["footprint"], dtype=float)
            height = float(raw["height"])
        except (KeyError, TypeError, ValueError) as exc:
            raise SceneError(f"building {i}: malformed entry ({exc})") from None
        if fp.ndim != 2 or fp.shape[1] != 2 or fp.shape[0] < 3:
            raise SceneError(f"building {i}: footprint must be a list of at least 3 [x, y] points")
        if not np.all(np.isfinite(fp)) or abs(_signed_area(fp)) <= 0:
            raise SceneError(f"building {i}: footprint is degenerate")
        if not height > 0:
            raise SceneError(f"building {i}: height must be positive")
        try:
            pieces = decompose_convex(fp)
        except SceneError as exc:
            raise SceneError(f"building {i}: {exc}") from None
        buildings.extend(Building(p, height, i) for p in pieces)
    bounds = data.get("bounds")
    if bounds is not None:
        bounds = ((float(bounds[0][0]), float(bounds[0][1])), (float(bounds[1][0]), float(bounds[1][1])))
    return UrbanScene(
        buildings=tuple(buildings),
        altitude=altitude,
        anchor=tuple(float(a) for a in data.get("anchor", (37.4275, -122.1697, 0.0))),
        elevation_mask_deg=float(data.get("elevation_mask_deg", 10.0)),
        bounds=bounds,
    )


def load_scene(path) -> UrbanScene:
    text = Path(path).read_text()
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        line = text.splitlines()[exc.lineno - 1] if exc.lineno - 1 < len(text.splitlines()) else ""
        raise SceneError(f"{path}: line {exc.lineno}, column {exc.colno}: {exc.msg}\n    {line}") from None
    return scene_from_dict(data)
