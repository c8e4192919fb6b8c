"""Joint-space points, Bregman geometries and proximal primitives.

A problem lives on a product space Z = R^n x R^m whose elements are
``Point`` objects: one contiguous coordinate vector with a recorded split
between the primal block x and the dual block y.  Two geometries are
supported:

* Euclidean: D(u, v) = 1/2 ||u - v||_2^2, mirror map is the identity.
* Entropic simplex: each block lives on a probability simplex, the mirror
  map is negative entropy and D is the Kullback-Leibler divergence with
  the convention 0 log 0 = 0.

Entropic iterations are performed entirely in the dual (log) domain;
primal points are materialized through a blockwise softmax with
max-subtraction, which keeps tiny simplex masses representable without
any clipping.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from typing import Optional

import numpy as np

from . import _kernels
from .errors import ConfigError, DomainError, NumericError

SIMPLEX_MASS_TOL = 1e-9


# ---------------------------------------------------------------------------
# points
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Point:
    """A joint primal-dual vector z = (x, y) stored contiguously.

    ``split`` is the dimension of the x block; the y block is everything
    after it.  Instances are immutable and always finite.
    """

    coords: np.ndarray
    split: int

    def __post_init__(self):
        coords = np.asarray(self.coords, dtype=float)
        if coords.ndim != 1:
            raise DomainError(f"point coordinates must be a vector, got shape {coords.shape}")
        if not (1 <= self.split <= coords.size - 1):
            raise DomainError(f"split {self.split} out of range for dimension {coords.size}")
        if not np.all(np.isfinite(coords)):
            raise NumericError("non-finite point coordinates")
        coords = coords.copy()
        coords.flags.writeable = False
        object.__setattr__(self, "coords", coords)

    @staticmethod
    def of_blocks(x, y) -> "Point":
        x = np.asarray(x, dtype=float)
        return Point(np.concatenate([x, np.asarray(y, dtype=float)]), x.size)

    def with_coords(self, coords) -> "Point":
        return Point(coords, self.split)

    @classmethod
    def _wrap(cls, coords: np.ndarray, split: int) -> "Point":
        """Trusted fast constructor for freshly allocated float64 vectors.

        Skips the defensive copy but keeps the finiteness invariant (a
        NaN/Inf coordinate makes the sum non-finite).
        """
        if not math.isfinite(float(coords.sum())):
            raise NumericError("non-finite point coordinates")
        coords.flags.writeable = False
        obj = object.__new__(cls)
        object.__setattr__(obj, "coords", coords)
        object.__setattr__(obj, "split", split)
        return obj

    @property
    def x(self) -> np.ndarray:
        return self.coords[: self.split]

    @property
    def y(self) -> np.ndarray:
        return self.coords[self.split:]

    @property
    def n(self) -> int:
        return self.split

    @property
    def m(self) -> int:
        return self.coords.size - self.split

    @property
    def dim(self) -> int:
        return self.coords.size


# ---------------------------------------------------------------------------
# geometries
# ---------------------------------------------------------------------------

class GeometryKind(Enum):
    EUCLIDEAN = "euclidean"
    ENTROPIC_SIMPLEX = "entropic"


@dataclass(frozen=True)
class Geometry:
    """Bregman structure of the joint space.

    For the entropic kind, ``dims = (n, m)`` are the two simplex
    dimensions; they are unused in the Euclidean case.
    """

    kind: GeometryKind
    dims: Optional[tuple] = None

    @staticmethod
    def euclidean() -> "Geometry":
        return Geometry(GeometryKind.EUCLIDEAN)

    @staticmethod
    def entropic(n: int, m: int) -> "Geometry":
        if n < 1 or m < 1:
            raise ConfigError("entropic geometry needs two simplex dimensions >= 1")
        return Geometry(GeometryKind.ENTROPIC_SIMPLEX, (n, m))

    @property
    def is_entropic(self) -> bool:
        return self.kind is GeometryKind.ENTROPIC_SIMPLEX


def _check_simplex_block(v: np.ndarray, what: str) -> np.ndarray:
    """Validate one simplex block and renormalize its mass exactly."""
    if np.any(v < 0):
        raise DomainError(f"{what} has a negative coordinate")
    s = v.sum()
    if abs(s - 1.0) > SIMPLEX_MASS_TOL:
        raise DomainError(f"{what} mass {s!r} is off the simplex by more than {SIMPLEX_MASS_TOL}")
    return v / s


def simplex_blocks(z: Point) -> tuple:
    """Both blocks of ``z`` validated and exactly renormalized."""
    return (_check_simplex_block(z.x, "x block"), _check_simplex_block(z.y, "y block"))


def bregman_div(geom: Geometry, u: Point, v: Point) -> float:
    """Bregman distance D(u, v) of the geometry.

    Euclidean: 1/2 ||u - v||_2^2.  Entropic: sum_i u_i log(u_i / v_i)
    over both blocks with 0 log 0 = 0; raises ``DomainError`` when some
    u_i > 0 sits on a zero of v (the divergence would be infinite).
    """
    if u.coords.size != v.coords.size or u.split != v.split:
        raise DomainError("bregman_div: mismatched point shapes")
    if not geom.is_entropic:
        d = u.coords - v.coords
        return 0.5 * float(d @ d)
    ux, uy = simplex_blocks(u)
    vx, vy = simplex_blocks(v)
    total = 0.0
    for ub, vb in ((ux, vx), (uy, vy)):
        pos = ub > 0
        if np.any(vb[pos] <= 0):
            raise DomainError("bregman_div is infinite: u puts mass where v has none")
        total += float(np.sum(ub[pos] * np.log(ub[pos] / vb[pos])))
    # rounding can leave a tiny negative residue at u == v
    return max(total, 0.0)


def primal_norm_sq(geom: Geometry, u: Point, v: Point) -> float:
    """||u - v||^2 in the primal norm paired with the geometry.

    Euclidean uses the l2 norm; the entropic setup uses
    ||z||^2 = ||x||_1^2 + ||y||_1^2.
    """
    d = u.coords - v.coords
    if not geom.is_entropic:
        return float(d @ d)
    dx, dy = d[: u.split], d[u.split:]
    return float(np.abs(dx).sum() ** 2 + np.abs(dy).sum() ** 2)


def dual_norm_sq(geom: Geometry, f: np.ndarray, split: int) -> float:
    """||f||_*^2 for an operator value f, in the dual norm of the geometry."""
    if not geom.is_entropic:
        return float(f @ f)
    fx, fy = f[:split], f[split:]
    return float(np.max(np.abs(fx)) ** 2 + np.max(np.abs(fy)) ** 2)


def entropic_dual(z: Point) -> np.ndarray:
    """A log-domain representative of ``grad h`` at a strictly positive z.

    Representatives are defined up to an additive per-block constant; all
    consumers (convex combinations followed by softmax) are invariant to
    that constant.
    """
    if np.any(z.coords <= 0):
        raise DomainError("entropic dual requires strictly positive coordinates")
    return np.log(z.coords)


def softmax_block(d: np.ndarray) -> np.ndarray:
    """exp(d) normalized to unit mass, computed with max-subtraction."""
    e = np.exp(d - d.max())
    return e / e.sum()


def entropic_primal(dual: np.ndarray, split: int) -> Point:
    """Materialize the primal simplex point of a log-domain vector."""
    if not np.all(np.isfinite(dual)):
        raise NumericError("non-finite dual coordinates")
    return Point(np.concatenate([softmax_block(dual[:split]), softmax_block(dual[split:])]), split)


# ---------------------------------------------------------------------------
# simplex projection
# ---------------------------------------------------------------------------

def project_simplex(v: np.ndarray) -> np.ndarray:
    """Euclidean projection onto the probability simplex.

    Sort-based with the exact KKT threshold: with u the coordinates in
    decreasing order and k the largest index such that
    u_k > (sum_{i<=k} u_i - 1) / k, the projection is max(v - theta, 0)
    with theta = (sum_{i<=k} u_i - 1) / k.
    """
    v = np.asarray(v, dtype=float)
    if not np.all(np.isfinite(v)):
        raise NumericError("project_simplex: non-finite input")
    return _kernels.proj_simplex(v)


# ---------------------------------------------------------------------------
# scalar-block functions used inside LinearPlusIndicator
# ---------------------------------------------------------------------------

class ZeroFunction:
    """f = 0 on the whole block."""

    def value(self, x: np.ndarray) -> float:
        return 0.0

    def prox(self, v: np.ndarray, tau: float) -> np.ndarray:
        return np.asarray(v, dtype=float)


class L1Norm:
    """f(x) = weight * ||x||_1, prox = soft-thresholding."""

    def __init__(self, weight: float = 1.0):
        self.weight = float(weight)

    def value(self, x: np.ndarray) -> float:
        return self.weight * float(np.abs(x).sum())

    def prox(self, v: np.ndarray, tau: float) -> np.ndarray:
        t = tau * self.weight
        return np.sign(v) * np.maximum(np.abs(v) - t, 0.0)


class SquaredDistance:
    """f(x) = (weight/2) ||x - center||^2."""

    def __init__(self, center, weight: float = 1.0):
        self.center = np.asarray(center, dtype=float)
        self.weight = float(weight)

    def value(self, x: np.ndarray) -> float:
        d = x - self.center
        return 0.5 * self.weight * float(d @ d)

    def prox(self, v: np.ndarray, tau: float) -> np.ndarray:
        t = tau * self.weight
        return (v + t * self.center) / (1.0 + t)


# ---------------------------------------------------------------------------
# prox-friendly g
# ---------------------------------------------------------------------------

class ProxFriendlyG:
    """Convex lsc g(z) = g1(x) + g2(y) with an exact proximal map."""

    def value(self, z: Point) -> float:
        raise NotImplementedError

    def prox(self, anchor: Point, tau: float) -> Point:
        raise NotImplementedError


class SimplexIndicator(ProxFriendlyG):
    """Indicator of the simplex product; prox is blockwise projection."""

    def __init__(self, n: int, m: int):
        if n < 1 or m < 1:
            raise ConfigError("SimplexIndicator needs block dimensions >= 1")
        self.n, self.m = int(n), int(m)

    def value(self, z: Point, tol: float = SIMPLEX_MASS_TOL) -> float:
        for block in (z.x, z.y):
            if np.any(block < -tol) or abs(block.sum() - 1.0) > tol:
                return np.inf
        return 0.0

    def prox(self, anchor: Point, tau: float) -> Point:
        return Point._wrap(_kernels.proj_product(anchor.coords, anchor.split), anchor.split)


class LinearPlusIndicator(ProxFriendlyG):
    """g(z) = f(x) + <b, y>, optionally plus the indicator of y >= 0.

    With ``nonneg_y=False`` the y block is a free dual variable, the
    layout of linearly constrained minimization with equality
    constraints.  ``f`` must expose ``value`` and ``prox`` on the x
    block (see :class:`ZeroFunction`, :class:`L1Norm`,
    :class:`SquaredDistance`).
    """

    def __init__(self, f, b, nonneg_y: bool = False):
        self.f = f
        self.b = np.asarray(b, dtype=float)
        self.nonneg_y = bool(nonneg_y)

    def value(self, z: Point) -> float:
        if self.nonneg_y and np.any(z.y < -1e-12):
            return np.inf
        return self.f.value(z.x) + float(self.b @ z.y)

    def prox(self, anchor: Point, tau: float) -> Point:
        x = self.f.prox(anchor.x, tau)
        y = anchor.y - tau * self.b
        if self.nonneg_y:
            y = np.maximum(y, 0.0)
        return Point.of_blocks(x, y)


class StronglyConvexQuadratic(ProxFriendlyG):
    """g(z) = (mu/2) ||z - center||^2 on the joint space, mu > 0."""

    def __init__(self, mu: float, center=0.0):
        if mu <= 0:
            raise ConfigError("StronglyConvexQuadratic needs mu > 0")
        self.mu = float(mu)
        self.center = center

    def _center_vec(self, like: np.ndarray) -> np.ndarray:
        return np.broadcast_to(np.asarray(self.center, dtype=float), like.shape)

    def value(self, z: Point) -> float:
        d = z.coords - self._center_vec(z.coords)
        return 0.5 * self.mu * float(d @ d)

    def prox(self, anchor: Point, tau: float) -> Point:
        c = self._center_vec(anchor.coords)
        return anchor.with_coords((anchor.coords + tau * self.mu * c) / (1.0 + tau * self.mu))


class BoxNonneg(ProxFriendlyG):
    """g(z) = indicator(x in box) + indicator(y >= 0).

    ``x_lo``/``x_hi`` may be None for an unconstrained x block.  The y
    block collects the multipliers of N inequality constraints.
    """

    def __init__(self, x_lo=None, x_hi=None):
        self.x_lo = None if x_lo is None else np.asarray(x_lo, dtype=float)
        self.x_hi = None if x_hi is None else np.asarray(x_hi, dtype=float)

    def value(self, z: Point) -> float:
        if self.x_lo is not None and np.any(z.x < self.x_lo - 1e-12):
            return np.inf
        if self.x_hi is not None and np.any(z.x > self.x_hi + 1e-12):
            return np.inf
        if np.any(z.y < -1e-12):
            return np.inf
        return 0.0

    def prox(self, anchor: Point, tau: float) -> Point:
        x = anchor.x
        if self.x_lo is not None:
            x = np.maximum(x, self.x_lo)
        if self.x_hi is not None:
            x = np.minimum(x, self.x_hi)
        return Point.of_blocks(x, np.maximum(anchor.y, 0.0))


def prox_step_euclidean(g: ProxFriendlyG, anchor: Point, tau: float) -> Point:
    """prox_{tau g}(anchor) in the Euclidean metric."""
    if tau <= 0:
        raise ConfigError("prox step size must be positive")
    return g.prox(anchor, tau)


def blended_prox(g: ProxFriendlyG, alpha: float, z1: np.ndarray, z2: np.ndarray,
                 tau: float, linear: np.ndarray, split: int) -> Point:
    """prox_{tau g}(alpha z1 + (1-alpha) z2 - tau linear).

    The simplex-product indicator takes a fused blend-and-project path;
    any other g blends first and applies its proximal map.  A non-finite
    anchor surfaces as NumericError through the output check.
    """
    if isinstance(g, SimplexIndicator):
        return Point._wrap(
            _kernels.blend3_proj_product(alpha, z1, 1.0 - alpha, z2, -tau, linear, split),
            split)
    anchor = _kernels.blend3(alpha, z1, 1.0 - alpha, z2, -tau, linear)
    return g.prox(Point._wrap(anchor, split), tau)


# ---------------------------------------------------------------------------
# the mirror step shared by every solver
# ---------------------------------------------------------------------------

def mirror_argmin(
    geom: Geometry,
    g: ProxFriendlyG,
    linear_term: np.ndarray,
    alpha: float,
    tau: float,
    z1: Point,
    z1_dual: np.ndarray,
    z2_dual: np.ndarray,
):
    """Solve argmin_z { g(z) + <linear_term, z> + (alpha/tau) D(z, z1)
    + ((1-alpha)/tau) D(z, z2) } and return (argmin, its log-domain dual).

    Euclidean anchors are primal vectors (``z1_dual``/``z2_dual`` are the
    coordinates of z1 and z2) and the minimizer is a proximal step at the
    blended anchor.  Entropic anchors are log-domain representatives and
    the minimizer is the blockwise softmax of

        alpha * z1_dual + (1 - alpha) * z2_dual - tau * linear_term,

    valid when g is the simplex-product indicator.  In the Euclidean case
    the returned dual equals the minimizer's coordinates.
    """
    if not (0.0 <= alpha <= 1.0):
        raise ConfigError(f"mirror_argmin: alpha={alpha} outside [0, 1]")
    if tau <= 0:
        raise ConfigError("mirror_argmin: tau must be positive")
    linear_term = np.asarray(linear_term, dtype=float)
    if not geom.is_entropic:
        anchor = alpha * np.asarray(z1_dual, dtype=float) + (1.0 - alpha) * np.asarray(z2_dual, dtype=float)
        out = prox_step_euclidean(g, z1.with_coords(anchor - tau * linear_term), tau)
        return out, out.coords
    if not isinstance(g, SimplexIndicator):
        raise ConfigError("entropic mirror_argmin requires the simplex-product indicator")
    split = z1.split
    # the kernel max-subtracts per block, so the stored representative
    # stays bounded over arbitrarily long runs
    primal, dual = _kernels.entropic_blend(
        np.asarray(z1_dual, dtype=float), np.asarray(z2_dual, dtype=float),
        linear_term, alpha, tau, split)
    if not math.isfinite(float(dual.sum())):
        raise NumericError("mirror_argmin: non-finite dual coordinates")
    return Point._wrap(primal, split), dual
