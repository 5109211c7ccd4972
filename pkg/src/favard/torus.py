"""Angles on the torus of directions, triadic intervals, cones, and tube metrics.

An angle theta in [0, 1) stands for the unit vector
e_theta = (cos 2*pi*theta, sin 2*pi*theta). Lines through a point are
unoriented, so theta and theta + 1/2 span the same line. Direction sets are
arcs on T = R/Z; the triadic grid on T is the family of half-open intervals
[k 3^-j, (k+1) 3^-j).

Conventions fixed here and used by every other module:

- geometric predicates evaluate the defining formula in float arithmetic and
  compare with absolute tolerance ``TOL`` = 1e-12;
- a cone X(x, I) with I = [theta - a, theta + a], a <= 1/4, is the set of y
  with |perp-projection gap| <= sin(2*pi*a) |x - y| (closed);
- angle-interval membership on T is closed, triadic-grid membership half-open.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Union

import numpy as np

TOL = 1e-12

Point = np.ndarray  # shape (2,)


def wrap(theta: float) -> float:
    """Representative of theta in [0, 1)."""
    t = math.fmod(theta, 1.0)
    return t + 1.0 if t < 0.0 else t


def perp(theta: float) -> float:
    """The perpendicular direction theta + 1/4 (mod 1)."""
    return wrap(theta + 0.25)


def circ_dist(a: float, b: float) -> float:
    """Shortest arc distance between two angles on T."""
    d = abs(wrap(a) - wrap(b))
    return min(d, 1.0 - d)


def direction_vector(theta: float) -> np.ndarray:
    """Unit vector e_theta = (cos 2*pi*theta, sin 2*pi*theta)."""
    t = 2.0 * math.pi * theta
    return np.array([math.cos(t), math.sin(t)])


def project(theta: float, p) -> float:
    """Orthogonal projection pi_theta(p) = p . e_theta."""
    e = direction_vector(theta)
    return float(p[0] * e[0] + p[1] * e[1])


def project_points(theta: float, pts: np.ndarray) -> np.ndarray:
    """pi_theta applied to an (n, 2) array of points."""
    e = direction_vector(theta)
    return pts @ e


def line_angle(v) -> float:
    """Direction of the line spanned by a nonzero vector, as an angle in [0, 1/2)."""
    a = math.atan2(v[1], v[0]) / (2.0 * math.pi)
    a = math.fmod(a, 0.5)
    return a + 0.5 if a < 0.0 else a


@dataclass(frozen=True)
class AngleInterval:
    """Closed arc on T with a given center and half-width in (0, 1/2]."""

    center: float
    half_width: float

    def __post_init__(self):
        if not (0.0 < self.half_width <= 0.5):
            raise ValueError(f"half_width must lie in (0, 1/2], got {self.half_width}")
        object.__setattr__(self, "center", wrap(self.center))

    @property
    def length(self) -> float:
        return 2.0 * self.half_width

    def dilate(self, factor: float) -> "AngleInterval":
        """Concentric dilation C*I; the length is capped at 1 (the whole torus)."""
        if factor <= 0.0:
            raise ValueError("dilation factor must be positive")
        return AngleInterval(self.center, min(0.5, factor * self.half_width))

    def perp(self) -> "AngleInterval":
        return AngleInterval(perp(self.center), self.half_width)

    def contains(self, theta: float) -> bool:
        return circ_dist(theta, self.center) <= self.half_width + TOL

    def intersects(self, other: "AngleInterval") -> bool:
        return circ_dist(self.center, other.center) <= self.half_width + other.half_width + TOL


@dataclass(frozen=True)
class TriadicInterval:
    """Triadic interval [index 3^-level, (index+1) 3^-level) on T."""

    level: int
    index: int

    def __post_init__(self):
        if self.level < 0:
            raise ValueError("level must be >= 0")
        if not (0 <= self.index < 3**self.level):
            raise ValueError(f"index {self.index} out of range at level {self.level}")

    @property
    def low(self) -> float:
        return self.index / 3**self.level

    @property
    def high(self) -> float:
        return (self.index + 1) / 3**self.level

    @property
    def length(self) -> float:
        return 3.0 ** (-self.level)

    @property
    def center(self) -> float:
        return (self.index + 0.5) / 3**self.level

    def parent(self) -> "TriadicInterval":
        if self.level == 0:
            raise ValueError("the root interval [0, 1) has no parent")
        return TriadicInterval(self.level - 1, self.index // 3)

    def children(self) -> tuple["TriadicInterval", "TriadicInterval", "TriadicInterval"]:
        lv, i = self.level + 1, 3 * self.index
        return (
            TriadicInterval(lv, i),
            TriadicInterval(lv, i + 1),
            TriadicInterval(lv, i + 2),
        )

    def middle_child(self) -> "TriadicInterval":
        """The child sharing the parent's center."""
        return TriadicInterval(self.level + 1, 3 * self.index + 1)

    def contains_angle(self, theta: float) -> bool:
        """Half-open membership theta in [low, high)."""
        t = wrap(theta)
        return self.low <= t < self.high

    def contains(self, other: "TriadicInterval") -> bool:
        """Containment of triadic intervals (integer arithmetic, exact)."""
        if other.level < self.level:
            return False
        shift = 3 ** (other.level - self.level)
        return other.index // shift == self.index

    def intersects(self, other: "TriadicInterval") -> bool:
        return self.contains(other) or other.contains(self)

    def dilate(self, factor: float) -> AngleInterval:
        """Concentric dilation C*J as an AngleInterval."""
        return AngleInterval(self.center, min(0.5, factor * self.length / 2.0))

    def as_angle_interval(self) -> AngleInterval:
        return AngleInterval(self.center, self.length / 2.0)

    def perp(self) -> AngleInterval:
        return AngleInterval(perp(self.center), self.length / 2.0)

    @property
    def half_width(self) -> float:
        return self.length / 2.0


def triadic_cover(theta: float, level: int) -> TriadicInterval:
    """The unique level-`level` triadic interval containing theta (half-open)."""
    t = wrap(theta)
    idx = min(int(t * 3**level), 3**level - 1)
    return TriadicInterval(level, idx)


def triadic_nav(j: TriadicInterval):
    """Parent, the three children, and the concentric triple 3J of a triadic interval."""
    return j.parent(), j.children(), j.dilate(3.0)


DirectionInterval = Union[AngleInterval, TriadicInterval]


def _as_intervals(directions) -> tuple[DirectionInterval, ...]:
    if isinstance(directions, (AngleInterval, TriadicInterval)):
        return (directions,)
    return tuple(directions)


@dataclass(frozen=True)
class ConeSpec:
    """A (possibly truncated) two-sided cone X(x, I, r, R).

    `directions` is a single arc or a finite union of arcs; `inner`/`outer`
    are the truncation radii (outer may be inf). Membership of the apex
    follows the union-of-lines definition: it belongs to the untruncated cone
    and is excluded as soon as inner > 0.
    """

    apex: tuple[float, float]
    directions: tuple[DirectionInterval, ...]
    inner: float = 0.0
    outer: float = math.inf

    def __post_init__(self):
        object.__setattr__(self, "directions", _as_intervals(self.directions))
        if self.inner < 0.0 or self.outer <= self.inner:
            raise ValueError("need 0 <= inner < outer")

    def contains(self, y) -> bool:
        pts = np.asarray(y, dtype=float).reshape(1, 2)
        return bool(self.mask(pts)[0])

    def mask(self, pts: np.ndarray) -> np.ndarray:
        return cone_mask(np.asarray(self.apex, dtype=float), self.directions, pts,
                         self.inner, self.outer)


def _direction_mask(apex: np.ndarray, interval: DirectionInterval, pts: np.ndarray,
                    dist: np.ndarray) -> np.ndarray:
    """Directional part of cone membership for one arc (closed, with TOL).

    Uses the algebraic characterization |pi_perp gap| <= sin(2 pi a) |x - y|
    when the half-width a is <= 1/4; wider arcs fall back to the arc-distance
    test on the line direction (the sine characterization breaks past 1/4).
    """
    center = interval.center
    a = interval.half_width if isinstance(interval, AngleInterval) else interval.length / 2.0
    if a >= 0.5 - TOL:
        return np.ones(len(pts), dtype=bool)
    diff = pts - apex
    if a <= 0.25:
        e_perp = direction_vector(perp(center))
        lhs = np.abs(diff @ e_perp)
        return lhs <= math.sin(2.0 * math.pi * a) * dist + TOL
    ang = np.arctan2(diff[:, 1], diff[:, 0]) / (2.0 * math.pi)
    gap = np.abs(np.mod(ang - center + 0.25, 0.5) - 0.25)
    ok = gap <= a + TOL
    ok |= dist <= TOL  # the apex lies on every line through it
    return ok


def cone_mask(apex: np.ndarray, directions, pts: np.ndarray,
              inner: float = 0.0, outer: float = math.inf) -> np.ndarray:
    """Vectorized membership of `pts` in X(apex, directions, inner, outer).

    Radial convention: |y - x| <= outer always; the inner truncation is the
    half-open |y - x| > inner when inner > 0 (annuli (rho^{k+1}, rho^k] tile),
    and no inner constraint when inner == 0 (the apex belongs to the cone).
    """
    pts = np.asarray(pts, dtype=float)
    diff = pts - apex
    dist = np.hypot(diff[:, 0], diff[:, 1])
    radial = dist <= outer + TOL if math.isfinite(outer) else np.ones(len(pts), dtype=bool)
    if inner > 0.0:
        radial &= dist > inner
    direction = np.zeros(len(pts), dtype=bool)
    for interval in _as_intervals(directions):
        direction |= _direction_mask(apex, interval, pts, dist)
    return radial & direction


def in_cone(spec: ConeSpec, y) -> bool:
    """Membership test for a single-arc cone via the sine characterization.

    Rejects arcs of half-width > 1/4, where the characterization breaks. The
    closed radial convention inner <= |x-y| <= outer is used here (this is the
    pointwise predicate; the measure-side operations use half-open inner
    truncation so that annuli tile).
    """
    if len(spec.directions) != 1:
        raise ValueError("in_cone expects a single direction interval")
    interval = spec.directions[0]
    a = interval.half_width if isinstance(interval, AngleInterval) else interval.length / 2.0
    if a > 0.25 + TOL:
        raise ValueError(f"half-width {a} > 1/4: sine characterization unavailable")
    apex = np.asarray(spec.apex, dtype=float)
    d = float(np.hypot(y[0] - apex[0], y[1] - apex[1]))
    if d < spec.inner - TOL or d > spec.outer + TOL:
        return False
    e_perp = direction_vector(perp(interval.center))
    lhs = abs((y[0] - apex[0]) * e_perp[0] + (y[1] - apex[1]) * e_perp[1])
    return lhs <= math.sin(2.0 * math.pi * a) * d + TOL


def d_metric(interval: DirectionInterval, x, y) -> float:
    """The anisotropic metric d_I with perpendicular weight H(I)^-2.

    d_I(x, y) = (H(I)^-2 |pi_I_perp(x) - pi_I_perp(y)|^2
                 + |pi_I(x) - pi_I(y)|^2)^(1/2),
    where pi_I projects along the midpoint direction of I. Balls are tubes of
    dimensions H(I) r x r pointing along I.
    """
    h = interval.length
    e = direction_vector(interval.center)
    dx, dy = x[0] - y[0], x[1] - y[1]
    par = dx * e[0] + dy * e[1]
    per = -dx * e[1] + dy * e[0]
    return math.hypot(per / h, par)


def d_metric_many(interval: DirectionInterval, x, pts: np.ndarray) -> np.ndarray:
    """d_I(x, p) for every row p of `pts`."""
    h = interval.length
    e = direction_vector(interval.center)
    diff = np.asarray(pts, dtype=float) - np.asarray(x, dtype=float)
    par = diff @ e
    per = diff @ np.array([-e[1], e[0]])
    return np.hypot(per / h, par)


def to_metric_coords(interval: DirectionInterval, pts: np.ndarray) -> np.ndarray:
    """Coordinates in which d_I becomes the Euclidean distance.

    Maps p to (H(I)^-1 pi_I_perp(p), pi_I(p)); the inverse is the
    rotation-plus-scaling isometry (R^2, euclid) -> (R^2, d_I).
    """
    h = interval.length
    e = direction_vector(interval.center)
    pts = np.asarray(pts, dtype=float)
    par = pts @ e
    per = pts @ np.array([-e[1], e[0]])
    return np.column_stack([per / h, par])


def metric_ball_contains(interval: DirectionInterval, center, radius: float,
                         pts: np.ndarray, closed: bool = False) -> np.ndarray:
    """Mask of points in the d_I-ball B_I(center, radius) (open by default)."""
    d = d_metric_many(interval, center, pts)
    return d <= radius + TOL if closed else d < radius
