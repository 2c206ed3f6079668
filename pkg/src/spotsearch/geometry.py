"""Axis-aligned cuboid regions, axis-division policies and camera directions."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

Vec3 = tuple[float, float, float]

AXES = ("x", "y", "z")
POLICIES = ("softmax", "argmax")


def _vec3(values: Sequence[float]) -> Vec3:
    if len(values) != 3:
        raise ValueError(f"expected 3 components, got {len(values)}")
    return (float(values[0]), float(values[1]), float(values[2]))


@dataclass(frozen=True)
class Region:
    """Axis-aligned cuboid stored by its two corners (meters)."""

    lo: Vec3
    hi: Vec3

    def __post_init__(self) -> None:
        lo, hi = _vec3(self.lo), _vec3(self.hi)
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)
        for a, b in zip(lo, hi):
            if not (math.isfinite(a) and math.isfinite(b)):
                raise ValueError(f"region corners must be finite: {lo}, {hi}")
            if a > b:
                raise ValueError(f"min corner exceeds max corner: {lo} > {hi}")

    @property
    def lengths(self) -> Vec3:
        return (self.hi[0] - self.lo[0], self.hi[1] - self.lo[1], self.hi[2] - self.lo[2])

    @property
    def volume(self) -> float:
        lx, ly, lz = self.lengths
        return lx * ly * lz

    def center(self) -> Vec3:
        return center(self)

    def contains(self, point: Sequence[float]) -> bool:
        return all(a <= p <= b for a, p, b in zip(self.lo, point, self.hi))


def center(region: Region) -> Vec3:
    """Componentwise midpoint; the camera is placed here when a region is evaluated."""
    lo, hi = region.lo, region.hi
    return (0.5 * (lo[0] + hi[0]), 0.5 * (lo[1] + hi[1]), 0.5 * (lo[2] + hi[2]))


@dataclass(frozen=True)
class CameraPose:
    position: Vec3
    direction: Vec3
    fov_degrees: float = 60.0

    def __post_init__(self) -> None:
        object.__setattr__(self, "position", _vec3(self.position))
        object.__setattr__(self, "direction", _vec3(self.direction))
        if not 0.0 < self.fov_degrees < 180.0:
            raise ValueError(f"fov must lie in (0, 180), got {self.fov_degrees}")


def softmax_axis_probs(lengths: Sequence[float]) -> np.ndarray:
    """Axis probabilities ``exp(L_i/|L|) / sum_j exp(L_j/|L|)`` for edge lengths ``L``."""
    L = np.asarray(lengths, dtype=float)
    norm = float(np.linalg.norm(L))
    if norm == 0.0:
        raise ValueError("region has no divisible axis (all edge lengths are zero)")
    w = np.exp(L / norm)
    return w / w.sum()


def choose_axis(lengths: Sequence[float], policy: str, rng: np.random.Generator | None = None) -> int:
    """Pick the axis to split.

    Zero-length axes are never candidates. ``argmax`` breaks ties in x<y<z order;
    ``softmax`` samples from the softmax weights renormalised over positive axes.
    """
    L = np.asarray(lengths, dtype=float)
    candidates = np.flatnonzero(L > 0.0)
    if candidates.size == 0:
        raise ValueError("region has no divisible axis (all edge lengths are zero)")
    if policy == "argmax":
        return int(np.argmax(L))
    if policy == "softmax":
        if rng is None:
            raise ValueError("softmax policy needs a random generator")
        probs = softmax_axis_probs(L)[candidates]
        if candidates.size == 1:
            return int(candidates[0])
        return int(rng.choice(candidates, p=probs / probs.sum()))
    raise ValueError(f"unknown division policy {policy!r}; expected one of {POLICIES}")


def split(region: Region, axis: int) -> tuple[Region, Region]:
    """Midpoint split along ``axis``; returns (lower half, upper half)."""
    lo, hi = list(region.lo), list(region.hi)
    if hi[axis] <= lo[axis]:
        raise ValueError(f"cannot split zero-length axis {AXES[axis]}")
    mid = 0.5 * (lo[axis] + hi[axis])
    lower_hi = list(hi)
    lower_hi[axis] = mid
    upper_lo = list(lo)
    upper_lo[axis] = mid
    return Region(tuple(lo), tuple(lower_hi)), Region(tuple(upper_lo), tuple(hi))


def divide(region: Region, policy: str = "softmax", rng: np.random.Generator | None = None) -> tuple[Region, Region]:
    return split(region, choose_axis(region.lengths, policy, rng))


def fibonacci_directions(n_dir: int) -> np.ndarray:
    """Deterministic near-uniform unit directions, shape ``(n_dir, 3)``.

    ``y`` runs linearly from 1 to -1 and the azimuth advances by ``(1 + sqrt 5) * pi``
    per sample.
    """
    if n_dir < 2:
        raise ValueError(f"fibonacci_directions needs n_dir >= 2, got {n_dir}")
    k = np.arange(n_dir, dtype=float)
    y = 1.0 - 2.0 * k / (n_dir - 1)
    r = np.sqrt(np.clip(1.0 - y * y, 0.0, None))
    theta = (1.0 + math.sqrt(5.0)) * math.pi * k
    return np.stack([r * np.cos(theta), y, r * np.sin(theta)], axis=1)


def sample_directions(n_dir: int) -> np.ndarray:
    """Like :func:`fibonacci_directions` but ``n_dir == 1`` yields the single +y direction."""
    if n_dir == 1:
        return np.array([[0.0, 1.0, 0.0]])
    return fibonacci_directions(n_dir)
