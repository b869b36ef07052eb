"""Analytic test scenes: unions of textured convex solids with exact oracles.

Every quantity a learned model is trained or scored against comes from closed
forms here: occupancy, signed distance, outward normals, ray intersections,
area-weighted surface samples, and ground-truth renders.  All functions are
vectorized over leading batch dimensions and work in float64.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .cameras import Camera

__all__ = [
    "Texture",
    "Sphere",
    "Box",
    "Capsule",
    "Scene",
    "scene_from_dict",
    "scene_to_dict",
    "preset_scene",
    "render_ground_truth",
    "occupancy_grid",
]

_EPS = 1e-12


# ---------------------------------------------------------------------------
# textures

@dataclass(frozen=True)
class Texture:
    """Surface albedo model.  ``kind`` is one of constant/checker/gradient."""

    kind: str
    rgb_a: tuple[float, float, float]
    rgb_b: tuple[float, float, float] = (0.0, 0.0, 0.0)
    scale: float = 0.25
    axis: int = 2

    @classmethod
    def constant(cls, rgb) -> "Texture":
        return cls("constant", tuple(float(v) for v in rgb))

    @classmethod
    def checker(cls, rgb_a, rgb_b, scale: float = 0.25) -> "Texture":
        return cls("checker", tuple(map(float, rgb_a)), tuple(map(float, rgb_b)), scale=float(scale))

    @classmethod
    def gradient(cls, rgb_a, rgb_b, axis: int = 2) -> "Texture":
        return cls("gradient", tuple(map(float, rgb_a)), tuple(map(float, rgb_b)), axis=int(axis))

    def to_dict(self) -> dict:
        out = {"kind": self.kind, "rgb_a": list(self.rgb_a)}
        if self.kind != "constant":
            out["rgb_b"] = list(self.rgb_b)
        if self.kind == "checker":
            out["scale"] = self.scale
        if self.kind == "gradient":
            out["axis"] = self.axis
        return out

    @classmethod
    def from_dict(cls, data: dict) -> "Texture":
        kind = data["kind"]
        if kind == "constant":
            return cls.constant(data["rgb_a"])
        if kind == "checker":
            return cls.checker(data["rgb_a"], data["rgb_b"], data.get("scale", 0.25))
        if kind == "gradient":
            return cls.gradient(data["rgb_a"], data["rgb_b"], data.get("axis", 2))
        raise ValueError(f"unknown texture kind {kind!r}")

    def shade(self, points: np.ndarray, anchor: np.ndarray, aabb: np.ndarray) -> np.ndarray:
        """Albedo at surface points.

        ``anchor`` is the owning solid's center (checker parity reference) and
        ``aabb`` its bounds (gradient extent).
        """
        points = np.atleast_2d(np.asarray(points, dtype=np.float64))
        a = np.asarray(self.rgb_a, dtype=np.float64)
        if self.kind == "constant":
            return np.broadcast_to(a, points.shape).copy()
        b = np.asarray(self.rgb_b, dtype=np.float64)
        if self.kind == "checker":
            cells = np.floor((points - anchor) / self.scale).astype(np.int64)
            parity = cells.sum(axis=-1) % 2
            return np.where(parity[..., None] == 0, a, b)
        if self.kind == "gradient":
            lo = aabb[0, self.axis]
            hi = aabb[1, self.axis]
            span = max(hi - lo, _EPS)
            u = np.clip((points[..., self.axis] - lo) / span, 0.0, 1.0)
            return a + u[..., None] * (b - a)
        raise ValueError(f"unknown texture kind {self.kind!r}")


# ---------------------------------------------------------------------------
# solids
#
# Each solid implements: signed_distance, normal, ray_interval (entry/exit of
# the full intersection interval; convex so there is at most one), aabb, area,
# sample_surface.  Intersection and distance formulas are exact.

@dataclass(frozen=True)
class Sphere:
    center: tuple[float, float, float]
    radius: float
    texture: Texture = field(default_factory=lambda: Texture.constant((0.8, 0.8, 0.8)))

    @property
    def anchor(self) -> np.ndarray:
        return np.asarray(self.center, dtype=np.float64)

    def aabb(self) -> np.ndarray:
        c = self.anchor
        r = self.radius
        return np.stack([c - r, c + r])

    def area(self) -> float:
        return 4.0 * np.pi * self.radius**2

    def signed_distance(self, points: np.ndarray) -> np.ndarray:
        d = points - self.anchor
        return np.linalg.norm(d, axis=-1) - self.radius

    def normal(self, points: np.ndarray) -> np.ndarray:
        d = points - self.anchor
        n = np.linalg.norm(d, axis=-1, keepdims=True)
        return np.where(n > _EPS, d / np.maximum(n, _EPS), np.array([0.0, 0.0, 1.0]))

    def ray_interval(self, origins: np.ndarray, dirs: np.ndarray):
        oc = origins - self.anchor
        b = np.sum(oc * dirs, axis=-1)
        c = np.sum(oc * oc, axis=-1) - self.radius**2
        disc = b * b - c
        valid = disc >= 0.0
        root = np.sqrt(np.maximum(disc, 0.0))
        return -b - root, -b + root, valid

    def sample_surface(self, n: int, rng: np.random.Generator):
        dirs = rng.normal(size=(n, 3))
        dirs /= np.linalg.norm(dirs, axis=-1, keepdims=True)
        return self.anchor + self.radius * dirs, dirs


@dataclass(frozen=True)
class Box:
    center: tuple[float, float, float]
    half_extents: tuple[float, float, float]
    texture: Texture = field(default_factory=lambda: Texture.constant((0.8, 0.8, 0.8)))

    @property
    def anchor(self) -> np.ndarray:
        return np.asarray(self.center, dtype=np.float64)

    @property
    def half(self) -> np.ndarray:
        return np.asarray(self.half_extents, dtype=np.float64)

    def aabb(self) -> np.ndarray:
        return np.stack([self.anchor - self.half, self.anchor + self.half])

    def area(self) -> float:
        h = self.half
        return 8.0 * (h[0] * h[1] + h[1] * h[2] + h[0] * h[2])

    def signed_distance(self, points: np.ndarray) -> np.ndarray:
        q = np.abs(points - self.anchor) - self.half
        outside = np.linalg.norm(np.maximum(q, 0.0), axis=-1)
        inside = np.minimum(q.max(axis=-1), 0.0)
        return outside + inside

    def normal(self, points: np.ndarray) -> np.ndarray:
        rel = points - self.anchor
        q = np.abs(rel) - self.half
        out = np.maximum(q, 0.0) * np.sign(rel)
        out_norm = np.linalg.norm(out, axis=-1, keepdims=True)
        # inside (or on the boundary): push along the axis nearest to a face
        axis = np.argmax(q, axis=-1)
        inner = np.zeros_like(rel)
        idx = np.arange(rel.reshape(-1, 3).shape[0])
        flat_rel = rel.reshape(-1, 3)
        flat_inner = inner.reshape(-1, 3)
        flat_axis = axis.reshape(-1)
        signs = np.sign(flat_rel[idx, flat_axis])
        signs = np.where(signs == 0.0, 1.0, signs)
        flat_inner[idx, flat_axis] = signs
        return np.where(out_norm > _EPS, out / np.maximum(out_norm, _EPS), inner)

    def ray_interval(self, origins: np.ndarray, dirs: np.ndarray):
        rel = origins - self.anchor
        with np.errstate(divide="ignore", invalid="ignore"):
            inv = 1.0 / dirs
            t_a = (-self.half - rel) * inv
            t_b = (self.half - rel) * inv
        lo = np.minimum(t_a, t_b)
        hi = np.maximum(t_a, t_b)
        # parallel axes: inside the slab -> unbounded, outside -> empty
        parallel = np.abs(dirs) < _EPS
        inside_slab = np.abs(rel) <= self.half
        lo = np.where(parallel, np.where(inside_slab, -np.inf, np.inf), lo)
        hi = np.where(parallel, np.where(inside_slab, np.inf, -np.inf), hi)
        t0 = lo.max(axis=-1)
        t1 = hi.min(axis=-1)
        return t0, t1, t0 <= t1

    def sample_surface(self, n: int, rng: np.random.Generator):
        h = self.half
        face_areas = np.array([h[1] * h[2], h[0] * h[2], h[0] * h[1]]).repeat(2) * 4.0
        face = rng.choice(6, size=n, p=face_areas / face_areas.sum())
        axis = face // 2
        sign = np.where(face % 2 == 0, 1.0, -1.0)
        pts = (rng.random((n, 3)) * 2.0 - 1.0) * h
        normals = np.zeros((n, 3))
        rows = np.arange(n)
        pts[rows, axis] = sign * h[axis]
        normals[rows, axis] = sign
        return self.anchor + pts, normals


@dataclass(frozen=True)
class Capsule:
    end_a: tuple[float, float, float]
    end_b: tuple[float, float, float]
    radius: float
    texture: Texture = field(default_factory=lambda: Texture.constant((0.8, 0.8, 0.8)))

    @property
    def anchor(self) -> np.ndarray:
        return 0.5 * (np.asarray(self.end_a, dtype=np.float64) + np.asarray(self.end_b, dtype=np.float64))

    def aabb(self) -> np.ndarray:
        a = np.asarray(self.end_a, dtype=np.float64)
        b = np.asarray(self.end_b, dtype=np.float64)
        return np.stack([np.minimum(a, b) - self.radius, np.maximum(a, b) + self.radius])

    def area(self) -> float:
        a = np.asarray(self.end_a, dtype=np.float64)
        b = np.asarray(self.end_b, dtype=np.float64)
        length = float(np.linalg.norm(b - a))
        return 2.0 * np.pi * self.radius * length + 4.0 * np.pi * self.radius**2

    def signed_distance(self, points: np.ndarray) -> np.ndarray:
        a = np.asarray(self.end_a, dtype=np.float64)
        ba = np.asarray(self.end_b, dtype=np.float64) - a
        pa = points - a
        h = np.clip(np.sum(pa * ba, axis=-1) / max(np.dot(ba, ba), _EPS), 0.0, 1.0)
        return np.linalg.norm(pa - h[..., None] * ba, axis=-1) - self.radius

    def normal(self, points: np.ndarray) -> np.ndarray:
        a = np.asarray(self.end_a, dtype=np.float64)
        ba = np.asarray(self.end_b, dtype=np.float64) - a
        pa = points - a
        h = np.clip(np.sum(pa * ba, axis=-1) / max(np.dot(ba, ba), _EPS), 0.0, 1.0)
        d = pa - h[..., None] * ba
        n = np.linalg.norm(d, axis=-1, keepdims=True)
        # on the axis itself any perpendicular works; pick one deterministically
        perp = np.cross(np.broadcast_to(ba, d.shape), np.array([1.0, 0.0, 0.0]))
        if np.linalg.norm(np.cross(ba, np.array([1.0, 0.0, 0.0]))) < 1e-9:
            perp = np.cross(np.broadcast_to(ba, d.shape), np.array([0.0, 1.0, 0.0]))
        perp = perp / np.maximum(np.linalg.norm(perp, axis=-1, keepdims=True), _EPS)
        return np.where(n > 1e-9, d / np.maximum(n, _EPS), perp)

    def ray_interval(self, origins: np.ndarray, dirs: np.ndarray):
        a = np.asarray(self.end_a, dtype=np.float64)
        ba = np.asarray(self.end_b, dtype=np.float64) - a
        oa = origins - a
        baba = float(np.dot(ba, ba))
        bard = np.sum(ba * dirs, axis=-1)
        baoa = np.sum(ba * oa, axis=-1)
        rdoa = np.sum(dirs * oa, axis=-1)
        oaoa = np.sum(oa * oa, axis=-1)
        qa = baba - bard * bard
        qb = baba * rdoa - baoa * bard
        qc = baba * oaoa - baoa * baoa - self.radius**2 * baba
        disc = qb * qb - qa * qc
        body_ok = (disc >= 0.0) & (qa > _EPS)
        root = np.sqrt(np.maximum(disc, 0.0))
        safe_qa = np.where(qa > _EPS, qa, 1.0)
        t_body_lo = (-qb - root) / safe_qa
        t_body_hi = (-qb + root) / safe_qa
        y_lo = baoa + t_body_lo * bard
        y_hi = baoa + t_body_hi * bard
        body_lo_ok = body_ok & (y_lo >= 0.0) & (y_lo <= baba)
        body_hi_ok = body_ok & (y_hi >= 0.0) & (y_hi <= baba)

        def cap_roots(center):
            oc = origins - center
            b_ = np.sum(oc * dirs, axis=-1)
            c_ = np.sum(oc * oc, axis=-1) - self.radius**2
            d_ = b_ * b_ - c_
            ok = d_ >= 0.0
            r_ = np.sqrt(np.maximum(d_, 0.0))
            return -b_ - r_, -b_ + r_, ok

        ta_lo, ta_hi, a_ok = cap_roots(a)
        tb_lo, tb_hi, b_ok = cap_roots(a + ba)
        cap_a_lo_ok = a_ok & (baoa + ta_lo * bard <= 0.0)
        cap_a_hi_ok = a_ok & (baoa + ta_hi * bard <= 0.0)
        cap_b_lo_ok = b_ok & (baoa + tb_lo * bard >= baba)
        cap_b_hi_ok = b_ok & (baoa + tb_hi * bard >= baba)

        inf = np.inf
        entry = np.minimum.reduce([
            np.where(body_lo_ok, t_body_lo, inf),
            np.where(cap_a_lo_ok, ta_lo, inf),
            np.where(cap_b_lo_ok, tb_lo, inf),
        ])
        exit_ = np.maximum.reduce([
            np.where(body_hi_ok, t_body_hi, -inf),
            np.where(cap_a_hi_ok, ta_hi, -inf),
            np.where(cap_b_hi_ok, tb_hi, -inf),
        ])
        valid = np.isfinite(entry) & np.isfinite(exit_) & (entry <= exit_)
        return entry, exit_, valid

    def sample_surface(self, n: int, rng: np.random.Generator):
        a = np.asarray(self.end_a, dtype=np.float64)
        b = np.asarray(self.end_b, dtype=np.float64)
        ba = b - a
        length = float(np.linalg.norm(ba))
        axis = ba / max(length, _EPS)
        side_area = 2.0 * np.pi * self.radius * length
        cap_area = 4.0 * np.pi * self.radius**2
        on_side = rng.random(n) < side_area / (side_area + cap_area)
        # orthonormal frame around the axis
        helper = np.array([1.0, 0.0, 0.0])
        if abs(np.dot(axis, helper)) > 0.9:
            helper = np.array([0.0, 1.0, 0.0])
        u = np.cross(axis, helper)
        u /= np.linalg.norm(u)
        v = np.cross(axis, u)
        phi = rng.random(n) * 2.0 * np.pi
        radial = np.cos(phi)[:, None] * u + np.sin(phi)[:, None] * v
        h = rng.random(n)[:, None] * ba
        side_pts = a + h + self.radius * radial
        side_normals = radial
        sphere_dirs = rng.normal(size=(n, 3))
        sphere_dirs /= np.linalg.norm(sphere_dirs, axis=-1, keepdims=True)
        towards_b = sphere_dirs @ axis > 0.0
        cap_centers = np.where(towards_b[:, None], b, a)
        cap_pts = cap_centers + self.radius * sphere_dirs
        points = np.where(on_side[:, None], side_pts, cap_pts)
        normals = np.where(on_side[:, None], side_normals, sphere_dirs)
        return points, normals


_SOLID_TYPES = {"sphere": Sphere, "box": Box, "capsule": Capsule}


def _solid_to_dict(solid) -> dict:
    if isinstance(solid, Sphere):
        out = {"type": "sphere", "center": list(solid.center), "radius": solid.radius}
    elif isinstance(solid, Box):
        out = {"type": "box", "center": list(solid.center), "half_extents": list(solid.half_extents)}
    elif isinstance(solid, Capsule):
        out = {"type": "capsule", "end_a": list(solid.end_a), "end_b": list(solid.end_b), "radius": solid.radius}
    else:
        raise TypeError(f"unknown solid {type(solid)!r}")
    out["texture"] = solid.texture.to_dict()
    return out


def _solid_from_dict(data: dict):
    kind = data["type"]
    texture = Texture.from_dict(data["texture"]) if "texture" in data else Texture.constant((0.8, 0.8, 0.8))
    if kind == "sphere":
        return Sphere(tuple(data["center"]), float(data["radius"]), texture)
    if kind == "box":
        return Box(tuple(data["center"]), tuple(data["half_extents"]), texture)
    if kind == "capsule":
        return Capsule(tuple(data["end_a"]), tuple(data["end_b"]), float(data["radius"]), texture)
    raise ValueError(f"unknown solid type {kind!r}")


# ---------------------------------------------------------------------------
# scene

class Scene:
    """Union of convex solids inside an axis-aligned bounding box."""

    def __init__(self, solids, bounds=None, background=(0.0, 0.0, 0.0)):
        if not solids:
            raise ValueError("scene needs at least one solid")
        self.solids = list(solids)
        if bounds is None:
            boxes = np.stack([s.aabb() for s in self.solids])
            lo = boxes[:, 0].min(axis=0)
            hi = boxes[:, 1].max(axis=0)
            pad = 0.1 * (hi - lo).max()
            bounds = np.stack([lo - pad, hi + pad])
        self.bounds = np.asarray(bounds, dtype=np.float64).reshape(2, 3)
        if not np.all(self.bounds[1] > self.bounds[0]):
            raise ValueError("bounds must have positive extent")
        self.background = np.asarray(background, dtype=np.float64)
        self._aabbs = [s.aabb() for s in self.solids]

    @property
    def centroid(self) -> np.ndarray:
        return 0.5 * (self.bounds[0] + self.bounds[1])

    @property
    def diagonal(self) -> float:
        return float(np.linalg.norm(self.bounds[1] - self.bounds[0]))

    def signed_distance(self, points: np.ndarray) -> np.ndarray:
        points = np.asarray(points, dtype=np.float64)
        return np.minimum.reduce([s.signed_distance(points) for s in self.solids])

    def occupancy(self, points: np.ndarray) -> np.ndarray:
        """1.0 inside or on the surface of any solid, else 0.0."""
        return (self.signed_distance(points) <= 0.0).astype(np.float64)

    def normals(self, points: np.ndarray) -> np.ndarray:
        """Outward unit normal of the solid nearest in |signed distance|."""
        points = np.asarray(points, dtype=np.float64)
        dists = np.stack([np.abs(s.signed_distance(points)) for s in self.solids], axis=-1)
        owner = np.argmin(dists, axis=-1)
        normals = np.stack([s.normal(points) for s in self.solids], axis=-2)
        return np.take_along_axis(normals, owner[..., None, None], axis=-2).squeeze(-2)

    def first_hit(self, origins: np.ndarray, dirs: np.ndarray, t_min: float = 0.0):
        """First intersection of rays (assumed to start outside the union).

        Returns ``(t, solid_index, hit)``; for missed rays t is +inf and
        solid_index is -1.
        """
        origins = np.atleast_2d(np.asarray(origins, dtype=np.float64))
        dirs = np.atleast_2d(np.asarray(dirs, dtype=np.float64))
        best_t = np.full(origins.shape[:-1], np.inf)
        best_idx = np.full(origins.shape[:-1], -1, dtype=np.int64)
        for i, solid in enumerate(self.solids):
            t0, t1, valid = solid.ray_interval(origins, dirs)
            ok = valid & (t0 >= t_min) & (t1 >= t0)
            better = ok & (t0 < best_t)
            best_t = np.where(better, t0, best_t)
            best_idx = np.where(better, i, best_idx)
        return best_t, best_idx, best_idx >= 0

    def surface_samples(self, n: int, rng: np.random.Generator):
        """Area-weighted samples on the union boundary with outward normals.

        Candidate points strictly inside another solid are rejected and
        redrawn, so the weighting is by *exposed* area up to rejection noise.
        """
        areas = np.array([s.area() for s in self.solids])
        probs = areas / areas.sum()
        points = np.empty((0, 3))
        normals = np.empty((0, 3))
        # a few rounds are plenty unless solids almost swallow each other
        for _ in range(64):
            need = n - len(points)
            if need <= 0:
                break
            draw = max(need + 16, int(need * 1.5))
            counts = rng.multinomial(draw, probs)
            batch_p, batch_n, batch_owner = [], [], []
            for idx, (solid, count) in enumerate(zip(self.solids, counts)):
                if count == 0:
                    continue
                p, nrm = solid.sample_surface(int(count), rng)
                batch_p.append(p)
                batch_n.append(nrm)
                batch_owner.append(np.full(int(count), idx))
            p = np.concatenate(batch_p)
            nrm = np.concatenate(batch_n)
            owner = np.concatenate(batch_owner)
            covered = np.zeros(len(p), dtype=bool)
            for idx, solid in enumerate(self.solids):
                other = owner != idx
                if np.any(other):
                    covered[other] |= solid.signed_distance(p[other]) < -1e-9
            keep = ~covered
            points = np.concatenate([points, p[keep]])
            normals = np.concatenate([normals, nrm[keep]])
        if len(points) < n:
            raise RuntimeError("surface sampling failed to converge; solids nearly fully overlap")
        # batches arrive grouped by solid; shuffle so truncation stays area-weighted
        order = rng.permutation(len(points))[:n]
        return points[order], normals[order]

    def shade(self, points: np.ndarray, solid_index: np.ndarray) -> np.ndarray:
        """Albedo of surface points owned by the given solids."""
        points = np.atleast_2d(np.asarray(points, dtype=np.float64))
        solid_index = np.asarray(solid_index)
        colors = np.zeros_like(points)
        for idx, solid in enumerate(self.solids):
            mask = solid_index == idx
            if np.any(mask):
                colors[mask] = solid.texture.shade(points[mask], solid.anchor, self._aabbs[idx])
        return colors


def scene_to_dict(scene: Scene) -> dict:
    return {
        "solids": [_solid_to_dict(s) for s in scene.solids],
        "bounds": scene.bounds.tolist(),
        "background": scene.background.tolist(),
    }


def scene_from_dict(data: dict) -> Scene:
    return Scene(
        [_solid_from_dict(s) for s in data["solids"]],
        bounds=np.asarray(data["bounds"], dtype=np.float64) if "bounds" in data else None,
        background=data.get("background", (0.0, 0.0, 0.0)),
    )


def preset_scene(name: str) -> Scene:
    """Small library of hand-built scenes used by the CLI and the tests."""
    presets = {
        "sphere": {
            "solids": [
                {"type": "sphere", "center": [0.0, 0.0, 0.0], "radius": 0.5,
                 "texture": {"kind": "gradient", "rgb_a": [0.9, 0.25, 0.2], "rgb_b": [0.2, 0.3, 0.9], "axis": 2}},
            ],
            "bounds": [[-0.7, -0.7, -0.7], [0.7, 0.7, 0.7]],
        },
        "sphere_box": {
            "solids": [
                {"type": "sphere", "center": [-0.28, 0.0, 0.12], "radius": 0.34,
                 "texture": {"kind": "gradient", "rgb_a": [0.9, 0.3, 0.2], "rgb_b": [0.95, 0.8, 0.25], "axis": 2}},
                {"type": "box", "center": [0.3, 0.05, -0.1], "half_extents": [0.24, 0.3, 0.26],
                 "texture": {"kind": "constant", "rgb_a": [0.25, 0.45, 0.85]}},
            ],
            "bounds": [[-0.75, -0.65, -0.6], [0.75, 0.65, 0.6]],
        },
        "box_capsule": {
            "solids": [
                {"type": "box", "center": [-0.25, -0.1, 0.0], "half_extents": [0.28, 0.22, 0.3],
                 "texture": {"kind": "gradient", "rgb_a": [0.85, 0.55, 0.2], "rgb_b": [0.3, 0.8, 0.4], "axis": 0}},
                {"type": "capsule", "end_a": [0.2, 0.15, -0.2], "end_b": [0.45, -0.05, 0.25], "radius": 0.18,
                 "texture": {"kind": "constant", "rgb_a": [0.7, 0.25, 0.65]}},
            ],
            "bounds": [[-0.75, -0.6, -0.62], [0.85, 0.62, 0.65]],
        },
        "capsule_sphere": {
            "solids": [
                {"type": "capsule", "end_a": [-0.35, -0.2, -0.15], "end_b": [0.1, 0.3, 0.2], "radius": 0.2,
                 "texture": {"kind": "gradient", "rgb_a": [0.2, 0.6, 0.85], "rgb_b": [0.9, 0.9, 0.3], "axis": 1}},
                {"type": "sphere", "center": [0.38, -0.15, 0.05], "radius": 0.28,
                 "texture": {"kind": "constant", "rgb_a": [0.85, 0.4, 0.3]}},
            ],
            "bounds": [[-0.8, -0.62, -0.6], [0.9, 0.75, 0.62]],
        },
    }
    if name not in presets:
        raise KeyError(f"unknown preset {name!r}; choose from {sorted(presets)}")
    return scene_from_dict(presets[name])


# ---------------------------------------------------------------------------
# ground truth rendering and occupancy rasterization

def render_ground_truth(scene: Scene, camera: Camera):
    """Exact render of the scene from a camera.

    Returns ``(image, depth, mask)``: image (H, W, 3) in [0, 1] with the
    scene background where no solid is hit, depth (H, W) holding the
    along-ray hit parameter (0 where missed), and a boolean hit mask.
    """
    h, w = camera.height, camera.width
    us, vs = np.meshgrid(np.arange(w, dtype=np.float64), np.arange(h, dtype=np.float64))
    uv = np.stack([us, vs], axis=-1).reshape(-1, 2)
    dirs = camera.pixel_directions(uv)
    origins = np.broadcast_to(camera.center, dirs.shape)
    t, solid_idx, hit = scene.first_hit(origins, dirs, t_min=0.0)
    image = np.broadcast_to(scene.background, (len(uv), 3)).copy()
    depth = np.zeros(len(uv))
    if np.any(hit):
        pts = origins[hit] + t[hit, None] * dirs[hit]
        image[hit] = scene.shade(pts, solid_idx[hit])
        depth[hit] = t[hit]
    return (
        image.reshape(h, w, 3),
        depth.reshape(h, w),
        hit.reshape(h, w),
    )


def occupancy_grid(scene: Scene, resolution: int) -> np.ndarray:
    """Occupancy sampled at cell centers of a regular grid over the bounds."""
    lo, hi = scene.bounds
    axes = [lo[i] + (np.arange(resolution) + 0.5) * (hi[i] - lo[i]) / resolution for i in range(3)]
    xs, ys, zs = np.meshgrid(*axes, indexing="ij")
    pts = np.stack([xs, ys, zs], axis=-1).reshape(-1, 3)
    return scene.occupancy(pts).reshape(resolution, resolution, resolution)
