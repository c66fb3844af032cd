"""Offline roadmap: grid nodes with headings and statically collision-free edges."""

from __future__ import annotations

import hashlib
import json
import math
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..gnss.scene import UrbanScene
from .config import PlannerConfig, config_hash
from .connect import NominalEdge, connect

__all__ = [
    "GRAPH_FORMAT",
    "Graph",
    "GraphEdge",
    "build_graph",
    "load_graph",
    "path_hits_obstacles",
    "point_in_obstacle",
    "save_graph",
]

GRAPH_FORMAT = "pzplan-graph/1"

NEIGHBOURS = [(di, dj) for di in (-1, 0, 1) for dj in (-1, 0, 1) if (di, dj) != (0, 0)]


@dataclass(frozen=True, eq=False)
class GraphEdge:
    src: int
    dst: int
    nominal: NominalEdge

    @property
    def length(self) -> float:
        return self.nominal.length

    @property
    def steps(self) -> int:
        return self.nominal.steps


@dataclass(eq=False)
class Graph:
    """Nodes are ``(x, y, heading)`` poses; ``grid[i]`` holds the integer cell and heading index."""

    poses: np.ndarray
    grid: np.ndarray
    edges: dict[int, list[GraphEdge]]
    config: PlannerConfig
    scene_hash: str = ""
    meta: dict = field(default_factory=dict)

    @property
    def num_nodes(self) -> int:
        return len(self.poses)

    @property
    def num_edges(self) -> int:
        return sum(len(v) for v in self.edges.values())

    def out_edges(self, node: int) -> list[GraphEdge]:
        return self.edges.get(node, [])

    def reachable_from(self, start: int) -> set[int]:
        """Nodes reachable from ``start`` ignoring time and uncertainty."""
        seen, todo = {start}, [start]
        while todo:
            for e in self.out_edges(todo.pop()):
                if e.dst not in seen:
                    seen.add(e.dst)
                    todo.append(e.dst)
        return seen

    def nearest_node(self, pose) -> int:
        """Closest node in position, ties broken by heading difference then id."""
        pose = np.asarray(pose, dtype=float)
        d = np.hypot(*(self.poses[:, :2] - pose[:2]).T)
        dh = np.abs(np.angle(np.exp(1j * (self.poses[:, 2] - pose[2]))))
        order = np.lexsort((np.arange(len(d)), dh, np.round(d, 6)))
        return int(order[0])

    def node_id(self, pose, tol: float = 1e-6) -> int:
        """Id of the node at exactly ``pose``; ``KeyError`` if there is none."""
        i = self.nearest_node(pose)
        p = self.poses[i]
        if np.hypot(*(p[:2] - np.asarray(pose[:2], float))) > tol or abs(math.remainder(p[2] - pose[2], 2 * math.pi)) > tol:
            raise KeyError(f"no graph node at {tuple(pose)}")
        return i

    def checksum(self) -> str:
        return hashlib.sha256(json.dumps(self._payload(), sort_keys=True).encode()).hexdigest()

    def _payload(self) -> dict:
        edges = []
        for src in sorted(self.edges):
            for e in self.edges[src]:
                edges.append([e.src, e.dst, round(e.length, 9), e.steps, e.nominal.word])
        return {
            "format": GRAPH_FORMAT,
            "config": self.config.to_dict(),
            "config_hash": config_hash(self.config.to_dict(), self.scene_hash),
            "scene_hash": self.scene_hash,
            "nodes": [[round(float(v), 9) for v in p] for p in self.poses],
            "grid": self.grid.tolist(),
            "edges": edges,
        }

    def to_dict(self) -> dict:
        out = self._payload()
        out["checksum"] = self.checksum()
        return out


def point_in_obstacle(point, polygons) -> bool:
    """True if ``point`` lies inside or on the boundary of any convex polygon."""
    p = np.asarray(point, dtype=float)
    for poly in polygons:
        v = np.asarray(poly, dtype=float)
        e = np.roll(v, -1, axis=0) - v
        rel = p - v
        cross = e[:, 0] * rel[:, 1] - e[:, 1] * rel[:, 0]
        if np.all(cross >= -1e-9) or np.all(cross <= 1e-9):
            return True
    return False


def path_hits_obstacles(points, polygons, margin: float = 0.0) -> bool:
    """Separating-axis test of a polyline against convex polygons.

    Every segment is tested against every polygon whose bounding box it can
    reach; touching counts as a hit.  ``margin`` inflates each polygon along
    every test axis.
    """
    pts = np.asarray(points, dtype=float)
    if len(pts) == 1:
        pts = np.vstack([pts, pts])
    a, b = pts[:-1], pts[1:]
    lo = np.minimum(a, b) - margin
    hi = np.maximum(a, b) + margin
    for poly in polygons:
        v = np.asarray(poly, dtype=float)
        pmin, pmax = v.min(axis=0), v.max(axis=0)
        near = np.all(hi >= pmin, axis=1) & np.all(lo <= pmax, axis=1)
        if not near.any():
            continue
        sa, sb = a[near], b[near]
        e = np.roll(v, -1, axis=0) - v
        axes = np.stack([-e[:, 1], e[:, 0]], axis=1)
        axes /= np.linalg.norm(axes, axis=1, keepdims=True)
        # polygon edge normals: shared by every segment
        pv = v @ axes.T
        s1, s2 = sa @ axes.T, sb @ axes.T
        sep = (np.maximum(s1, s2) < pv.min(axis=0) - margin) | (np.minimum(s1, s2) > pv.max(axis=0) + margin)
        # segment normals: one per segment
        d = sb - sa
        nrm = np.stack([-d[:, 1], d[:, 0]], axis=1)
        length = np.linalg.norm(nrm, axis=1)
        ok = length > 0
        nrm[ok] /= length[ok, None]
        sp = np.einsum("ij,ij->i", sa, nrm)
        vp = nrm @ v.T
        sep_seg = ok & ((sp < vp.min(axis=1) - margin) | (sp > vp.max(axis=1) + margin))
        if np.any(~(sep.any(axis=1) | sep_seg)):
            return True
    return False


def _scene_hash(scene: UrbanScene) -> str:
    return config_hash(scene.to_dict())


def _grid_shape(scene: UrbanScene, cfg: PlannerConfig) -> tuple[int, int]:
    if cfg.grid_shape is not None:
        return tuple(int(v) for v in cfg.grid_shape)
    (x0, x1), (y0, y1) = scene.extent()
    ox, oy = cfg.grid_origin
    nx = int(math.floor((x1 - ox) / cfg.spacing + 1e-9)) + 1
    ny = int(math.floor((y1 - oy) / cfg.spacing + 1e-9)) + 1
    return max(nx, 1), max(ny, 1)


def build_graph(scene: UrbanScene, cfg: PlannerConfig) -> Graph:
    """Grid of poses joined to their 8 neighbours by feasible, obstacle-free CONNECT edges.

    Nodes inside a building that reaches the flight altitude are dropped.
    Away from obstacles CONNECT is translation invariant, so each relative
    move is solved once and shifted into place.
    """
    nx, ny = _grid_shape(scene, cfg)
    ox, oy = cfg.grid_origin
    obstacles = scene.obstacles()
    headings = cfg.headings
    poses, grid, index = [], [], {}
    for i in range(nx):
        for j in range(ny):
            xy = (ox + i * cfg.spacing, oy + j * cfg.spacing)
            if point_in_obstacle(xy, obstacles):
                continue
            for h, th in enumerate(headings):
                index[(i, j, h)] = len(poses)
                poses.append((xy[0], xy[1], th))
                grid.append((i, j, h))
    poses = np.array(poses, dtype=float).reshape(-1, 3)
    grid = np.array(grid, dtype=int).reshape(-1, 3)
    if len(poses) <= 4:
        warnings.warn(f"graph has only {len(poses)} nodes; grid spacing may exceed the scene", stacklevel=2)

    cache: dict[tuple, NominalEdge | None] = {}
    edges: dict[int, list[GraphEdge]] = {}
    for node, (i, j, h) in enumerate(grid):
        out = []
        for di, dj in NEIGHBOURS:
            for h2 in range(len(headings)):
                dst = index.get((i + di, j + dj, h2))
                if dst is None:
                    continue
                key = (di, dj, h, h2)
                if key not in cache:
                    cache[key] = connect(
                        (0.0, 0.0, headings[h]), (di * cfg.spacing, dj * cfg.spacing, headings[h2]), cfg
                    )
                proto = cache[key]
                if proto is None:
                    continue
                nominal = proto.translated(poses[node, :2], node, dst)
                if obstacles and path_hits_obstacles(nominal.states[:, :2], obstacles, cfg.corridor_margin):
                    continue
                out.append(GraphEdge(node, dst, nominal))
        if out:
            edges[node] = out
    return Graph(poses, grid, edges, cfg, _scene_hash(scene), {"shape": [nx, ny]})


def save_graph(graph: Graph, path) -> str:
    data = graph.to_dict()
    Path(path).write_text(json.dumps(data, indent=1, sort_keys=True))
    return data["checksum"]


def load_graph(path, scene: UrbanScene | None = None) -> Graph:
    """Read a graph file, verify its checksum and rebuild the nominal edges.

    With ``scene`` given, the file must have been built for that scene.
    """
    data = json.loads(Path(path).read_text())
    if data.get("format") != GRAPH_FORMAT:
        raise ValueError(f"{path}: not a {GRAPH_FORMAT} file")
    stored = data.pop("checksum", None)
    cfg = PlannerConfig.from_dict(data["config"])
    if scene is not None and _scene_hash(scene) != data["scene_hash"]:
        raise ValueError(f"{path}: graph was built for a different scene")
    poses = np.array(data["nodes"], dtype=float).reshape(-1, 3)
    grid = np.array(data["grid"], dtype=int).reshape(-1, 3)
    headings = cfg.headings
    cache: dict[tuple, NominalEdge | None] = {}
    edges: dict[int, list[GraphEdge]] = {}
    for src, dst, _, _, _ in data["edges"]:
        i, j, h = grid[src]
        i2, j2, h2 = grid[dst]
        key = (int(i2 - i), int(j2 - j), int(h), int(h2))
        if key not in cache:
            cache[key] = connect((0.0, 0.0, headings[h]), (key[0] * cfg.spacing, key[1] * cfg.spacing, headings[h2]), cfg)
        if cache[key] is None:
            raise ValueError(f"{path}: edge {src}->{dst} is not feasible under the stored config")
        edges.setdefault(src, []).append(GraphEdge(src, dst, cache[key].translated(poses[src, :2], src, dst)))
    graph = Graph(poses, grid, edges, cfg, data["scene_hash"], {"shape": data.get("shape")})
    if stored is not None and graph.checksum() != stored:
        raise ValueError(f"{path}: checksum mismatch (file modified or built by another version)")
    return graph
