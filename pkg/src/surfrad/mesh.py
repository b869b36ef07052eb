"""Triangle meshes: container, ASCII OBJ round trip, area-weighted sampling."""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

__all__ = ["TriangleMesh", "save_obj", "load_obj", "sample_mesh_points"]


@dataclass
class TriangleMesh:
    vertices: np.ndarray = field(default_factory=lambda: np.zeros((0, 3)))
    faces: np.ndarray = field(default_factory=lambda: np.zeros((0, 3), dtype=np.int64))

    def __post_init__(self):
        self.vertices = np.asarray(self.vertices, dtype=np.float64).reshape(-1, 3)
        self.faces = np.asarray(self.faces, dtype=np.int64).reshape(-1, 3)
        if len(self.faces) and (self.faces.min() < 0 or self.faces.max() >= len(self.vertices)):
            raise ValueError("face indices out of range")

    @property
    def is_empty(self) -> bool:
        return len(self.faces) == 0

    def face_areas(self) -> np.ndarray:
        tri = self.vertices[self.faces]
        cross = np.cross(tri[:, 1] - tri[:, 0], tri[:, 2] - tri[:, 0])
        return 0.5 * np.linalg.norm(cross, axis=1)

    def area(self) -> float:
        return float(self.face_areas().sum())

    def without_degenerate_faces(self, eps: float = 1e-12) -> "TriangleMesh":
        if self.is_empty:
            return TriangleMesh(self.vertices.copy(), self.faces.copy())
        keep = self.face_areas() > eps
        return TriangleMesh(self.vertices.copy(), self.faces[keep])


def save_obj(mesh: TriangleMesh, path) -> None:
    """Write an ASCII OBJ (1-indexed faces, full-precision vertices)."""
    path = Path(path)
    lines = []
    for v in mesh.vertices:
        lines.append(f"v {float(v[0])!r} {float(v[1])!r} {float(v[2])!r}")
    for f in mesh.faces:
        lines.append(f"f {f[0] + 1} {f[1] + 1} {f[2] + 1}")
    path.write_text("\n".join(lines) + "\n")


def load_obj(path) -> TriangleMesh:
    vertices, faces = [], []
    for raw in Path(path).read_text().splitlines():
        parts = raw.split()
        if not parts:
            continue
        if parts[0] == "v":
            vertices.append([float(x) for x in parts[1:4]])
        elif parts[0] == "f":
            # tolerate v/vt/vn references; faces here are pure triangles
            idx = [int(p.split("/")[0]) - 1 for p in parts[1:4]]
            faces.append(idx)
    return TriangleMesh(np.array(vertices).reshape(-1, 3), np.array(faces, dtype=np.int64).reshape(-1, 3))


def sample_mesh_points(mesh: TriangleMesh, n: int, rng: np.random.Generator) -> np.ndarray:
    """Draw n points uniformly by area over the mesh surface."""
    if mesh.is_empty:
        raise ValueError("cannot sample an empty mesh")
    areas = mesh.face_areas()
    total = areas.sum()
    if total <= 0:
        raise ValueError("mesh has zero total area")
    face_idx = rng.choice(len(mesh.faces), size=n, p=areas / total)
    tri = mesh.vertices[mesh.faces[face_idx]]
    r1 = rng.random(n)
    r2 = rng.random(n)
    u = 1.0 - np.sqrt(r1)
    v = r2 * np.sqrt(r1)
    return tri[:, 0] + u[:, None] * (tri[:, 1] - tri[:, 0]) + v[:, None] * (tri[:, 2] - tri[:, 0])
