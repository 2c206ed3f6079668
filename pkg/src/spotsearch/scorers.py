"""Black-box pose scorers, the max-over-directions region reward and a grid oracle.

The synthetic scenes stand in for a learned image scorer: each hotspot is a
Gaussian blob in position multiplied by a cosine-power lobe in viewing
direction, so the best spot and its score are known in closed form.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Protocol, Sequence

import numpy as np

from spotsearch.geometry import CameraPose, Region, Vec3, sample_directions


class ScorerError(RuntimeError):
    """A scorer failed or broke its output contract."""


class Scorer(Protocol):
    def score_batch(self, poses: Sequence[CameraPose]) -> list[float]: ...


def _pose_arrays(poses: Sequence[CameraPose]) -> tuple[np.ndarray, np.ndarray]:
    pos = np.array([p.position for p in poses], dtype=float).reshape(-1, 3)
    dirs = np.array([p.direction for p in poses], dtype=float).reshape(-1, 3)
    return pos, dirs


@dataclass(frozen=True)
class ConstantScorer:
    value: float

    def score_batch(self, poses: Sequence[CameraPose]) -> list[float]:
        return [float(self.value)] * len(poses)

    def score_arrays(self, positions: np.ndarray, directions: np.ndarray) -> np.ndarray:
        return np.full(len(positions), float(self.value))


@dataclass(frozen=True)
class Hotspot:
    center: Vec3
    sigma: float
    amplitude: float
    kappa: float = 0.0
    # When set, the directional lobe points along this axis instead of at the center.
    preferred_axis: Vec3 | None = None

    def __post_init__(self) -> None:
        object.__setattr__(self, "center", tuple(float(v) for v in self.center))
        if len(self.center) != 3:
            raise ValueError("hotspot center must have 3 components")
        if not self.sigma > 0:
            raise ValueError(f"hotspot sigma must be positive, got {self.sigma}")
        if not 0 < self.amplitude <= 1:
            raise ValueError(f"hotspot amplitude must lie in (0, 1], got {self.amplitude}")
        if not self.kappa >= 0:
            raise ValueError(f"hotspot kappa must be non-negative, got {self.kappa}")
        if self.preferred_axis is not None:
            a = np.asarray(self.preferred_axis, dtype=float)
            if a.shape != (3,) or not np.isfinite(a).all() or np.linalg.norm(a) == 0:
                raise ValueError("preferred_axis must be a non-zero 3-vector")
            norm = float(np.linalg.norm(a))
            if abs(norm - 1.0) > 1e-12:
                a = a / norm
            object.__setattr__(self, "preferred_axis", tuple(float(v) for v in a))

    def response(self, positions: np.ndarray, directions: np.ndarray) -> np.ndarray:
        cx, cy, cz = self.center
        dx = cx - positions[:, 0]
        dy = cy - positions[:, 1]
        dz = cz - positions[:, 2]
        dist2 = dx * dx + dy * dy + dz * dz
        value = self.amplitude * np.exp(-dist2 / (2.0 * self.sigma * self.sigma))
        if self.kappa == 0:
            return value
        vx, vy, vz = directions[:, 0], directions[:, 1], directions[:, 2]
        at_center = dist2 == 0
        if self.preferred_axis is not None:
            ax, ay, az = self.preferred_axis
            cos = vx * ax + vy * ay + vz * az
        else:
            dist = np.sqrt(np.where(at_center, 1.0, dist2))
            cos = (vx * dx + vy * dy + vz * dz) / dist
        lobe = np.power(np.maximum(cos, 0.0), self.kappa)
        return value * np.where(at_center, 1.0, lobe)


@dataclass(frozen=True)
class SyntheticScene:
    """Cuboid scene whose score is the strongest hotspot response at a pose."""

    bounds: Region
    hotspots: tuple[Hotspot, ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "hotspots", tuple(self.hotspots))
        if not self.hotspots:
            raise ValueError("a scene needs at least one hotspot")
        for h in self.hotspots:
            if not self.bounds.contains(h.center):
                raise ValueError(f"hotspot center {h.center} lies outside the scene bounds")

    def score_arrays(self, positions: np.ndarray, directions: np.ndarray) -> np.ndarray:
        positions = np.asarray(positions, dtype=float).reshape(-1, 3)
        directions = np.asarray(directions, dtype=float).reshape(-1, 3)
        best = self.hotspots[0].response(positions, directions)
        for h in self.hotspots[1:]:
            best = np.maximum(best, h.response(positions, directions))
        return np.clip(best, 0.0, 1.0)

    def score(self, pose: CameraPose) -> float:
        return self.score_batch([pose])[0]

    def score_batch(self, poses: Sequence[CameraPose]) -> list[float]:
        if not poses:
            return []
        return self.score_arrays(*_pose_arrays(poses)).tolist()

    def to_dict(self) -> dict[str, Any]:
        hotspots = []
        for h in self.hotspots:
            entry: dict[str, Any] = {
                "center": list(h.center),
                "sigma": h.sigma,
                "amplitude": h.amplitude,
                "kappa": h.kappa,
            }
            if h.preferred_axis is not None:
                entry["preferred_axis"] = list(h.preferred_axis)
            hotspots.append(entry)
        return {"bounds": {"min": list(self.bounds.lo), "max": list(self.bounds.hi)}, "hotspots": hotspots}


def synthetic_score(scene: SyntheticScene, pose: CameraPose) -> float:
    return scene.score(pose)


@dataclass(frozen=True)
class Bump:
    center: float
    weight: float
    sigma: float


@dataclass(frozen=True)
class Scene1D:
    """Sum of Gaussian bumps on ``[a, b]``, embedded as the x axis of a flat cuboid.

    Scores are normalised by the largest bump weight and do not depend on the
    viewing direction.
    """

    interval: tuple[float, float]
    bumps: tuple[Bump, ...] = field(default=())

    def __post_init__(self) -> None:
        a, b = (float(v) for v in self.interval)
        object.__setattr__(self, "interval", (a, b))
        object.__setattr__(self, "bumps", tuple(self.bumps))
        if not a < b:
            raise ValueError(f"interval must satisfy a < b, got {self.interval}")
        if not self.bumps:
            raise ValueError("a 1D scene needs at least one bump")
        if any(bp.weight <= 0 or bp.sigma <= 0 for bp in self.bumps):
            raise ValueError("bump weights and sigmas must be positive")

    @classmethod
    def default(cls) -> Scene1D:
        return cls((-10.0, 10.0), (Bump(-6.0, 0.5, 0.8), Bump(-1.0, 0.7, 0.8), Bump(4.0, 1.0, 0.8)))

    @property
    def bounds(self) -> Region:
        a, b = self.interval
        return Region((a, 0.0, 0.0), (b, 0.0, 0.0))

    def value(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        a, b = self.interval
        if np.any((x < a) | (x > b)):
            raise ValueError(f"x outside [{a}, {b}]")
        total = np.zeros_like(x)
        for bp in self.bumps:
            total = total + bp.weight * np.exp(-((x - bp.center) ** 2) / (2.0 * bp.sigma * bp.sigma))
        return np.clip(total / max(bp.weight for bp in self.bumps), 0.0, 1.0)

    def score_arrays(self, positions: np.ndarray, directions: np.ndarray) -> np.ndarray:
        return self.value(np.asarray(positions, dtype=float).reshape(-1, 3)[:, 0])

    def score_batch(self, poses: Sequence[CameraPose]) -> list[float]:
        if not poses:
            return []
        return self.value([p.position[0] for p in poses]).tolist()

    def to_dict(self) -> dict[str, Any]:
        return {
            "interval": list(self.interval),
            "bumps": [{"center": bp.center, "weight": bp.weight, "sigma": bp.sigma} for bp in self.bumps],
        }


def scene_1d_score(scene: Scene1D, x: float) -> float:
    return float(scene.value(x))


def region_reward(
    center: Sequence[float], directions: np.ndarray, scorer: Scorer, fov_degrees: float = 60.0
) -> tuple[float, int]:
    """Best score over all viewing directions from ``center`` and its direction index.

    All poses go to the scorer in a single ``score_batch`` call. Ties resolve to
    the lowest index.
    """
    if len(directions) == 0:
        raise ValueError("region_reward needs at least one direction")
    poses = [CameraPose(tuple(center), tuple(d), fov_degrees) for d in directions]
    scores = scorer.score_batch(poses)
    if len(scores) != len(poses):
        raise ScorerError(f"scorer returned {len(scores)} scores for {len(poses)} poses")
    arr = np.asarray(scores, dtype=float)
    if not np.all((arr >= 0.0) & (arr <= 1.0)):
        raise ScorerError(f"scorer output outside [0, 1]: {arr[(arr < 0) | (arr > 1) | np.isnan(arr)][:3]}")
    idx = int(np.argmax(arr))
    return float(arr[idx]), idx


def grid_axes(bounds: Region, resolution: int) -> list[np.ndarray]:
    """Cell-center coordinates per axis; zero-length axes collapse to a single value."""
    axes = []
    for lo, hi in zip(bounds.lo, bounds.hi):
        if hi == lo:
            axes.append(np.array([lo]))
        else:
            if resolution < 2:
                raise ValueError(f"grid resolution must be >= 2, got {resolution}")
            axes.append(lo + (np.arange(resolution) + 0.5) * ((hi - lo) / resolution))
    return axes


def grid_oracle(scene, resolution: int = 64, n_dir: int = 15, chunk: int = 16384) -> tuple[float, Vec3]:
    """Brute-force maximum of the region reward over a uniform grid of cell centers.

    ``scene`` must expose ``bounds`` and a vectorised ``score_arrays``. Ties keep
    the first cell in x-major order.
    """
    dirs = sample_directions(n_dir)
    gx, gy, gz = grid_axes(scene.bounds, resolution)
    X, Y, Z = np.meshgrid(gx, gy, gz, indexing="ij")
    cells = np.stack([X.ravel(), Y.ravel(), Z.ravel()], axis=1)
    best_score, best_idx = -1.0, 0
    n = len(dirs)
    for start in range(0, len(cells), chunk):
        block = cells[start : start + chunk]
        pos = np.repeat(block, n, axis=0)
        d = np.tile(dirs, (len(block), 1))
        rewards = scene.score_arrays(pos, d).reshape(len(block), n).max(axis=1)
        i = int(np.argmax(rewards))
        if rewards[i] > best_score:
            best_score, best_idx = float(rewards[i]), start + i
    p = cells[best_idx]
    return best_score, (float(p[0]), float(p[1]), float(p[2]))


_SCENE_KEYS = {"bounds", "hotspots"}
_BOUNDS_KEYS = {"min", "max"}
_HOTSPOT_KEYS = {"center", "sigma", "amplitude", "kappa", "preferred_axis"}
_SCENE1D_KEYS = {"interval", "bumps"}
_BUMP_KEYS = {"center", "weight", "sigma"}


def _check_keys(obj: Any, allowed: set[str], required: set[str], where: str) -> None:
    if not isinstance(obj, dict):
        raise ValueError(f"{where}: expected an object")
    unknown = set(obj) - allowed
    if unknown:
        raise ValueError(f"{where}: unknown field(s) {sorted(unknown)}")
    missing = required - set(obj)
    if missing:
        raise ValueError(f"{where}: missing field(s) {sorted(missing)}")


def scene_from_dict(data: dict[str, Any]) -> SyntheticScene | Scene1D:
    if isinstance(data, dict) and "interval" in data:
        _check_keys(data, _SCENE1D_KEYS, _SCENE1D_KEYS, "1D scene")
        bumps = []
        for k, b in enumerate(data["bumps"]):
            _check_keys(b, _BUMP_KEYS, _BUMP_KEYS, f"bumps[{k}]")
            bumps.append(Bump(float(b["center"]), float(b["weight"]), float(b["sigma"])))
        return Scene1D(tuple(data["interval"]), tuple(bumps))
    _check_keys(data, _SCENE_KEYS, _SCENE_KEYS, "scene")
    _check_keys(data["bounds"], _BOUNDS_KEYS, _BOUNDS_KEYS, "bounds")
    bounds = Region(tuple(data["bounds"]["min"]), tuple(data["bounds"]["max"]))
    hotspots = []
    for k, h in enumerate(data["hotspots"]):
        _check_keys(h, _HOTSPOT_KEYS, {"center", "sigma", "amplitude"}, f"hotspots[{k}]")
        axis = h.get("preferred_axis")
        hotspots.append(
            Hotspot(
                center=tuple(h["center"]),
                sigma=float(h["sigma"]),
                amplitude=float(h["amplitude"]),
                kappa=float(h.get("kappa", 0.0)),
                preferred_axis=tuple(axis) if axis is not None else None,
            )
        )
    return SyntheticScene(bounds, tuple(hotspots))


def load_scene(path: str | Path) -> SyntheticScene | Scene1D:
    with open(path, encoding="utf-8") as fh:
        return scene_from_dict(json.load(fh))


def save_scene(scene: SyntheticScene | Scene1D, path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(scene.to_dict(), fh, indent=2)
        fh.write("\n")


def max_hotspot_score(scene: SyntheticScene) -> float:
    """Upper bound on any score in the scene (the largest amplitude)."""
    return max(h.amplitude for h in scene.hotspots)

