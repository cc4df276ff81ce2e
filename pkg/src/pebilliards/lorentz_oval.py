"""Light-like billiards in convex plane ovals, in null coordinates.

This module works in the chart where the plane metric is the product of the
two coordinate differentials, so the null directions are exactly vertical
and horizontal.  The light-like billiard inside a closed strictly convex
curve is then the chord map: from a point draw the vertical line to its
second intersection, then the horizontal line, and so on.

Conventions
-----------
* Curves are parameterized by the angle about an interior center point and
  must be polar graphs about it: point(t) = center + r(t) (cos t, sin t).
* `oval_map` applies a vertical chord step followed by a horizontal one.
* A closed null polygon P_1 .. P_{2n} stores its vertices so that the chord
  P_1 -> P_2 is horizontal and directions alternate; the closing chord
  P_{2n} -> P_1 is vertical.
* Slopes are signed dy/dx.  A reflection turns a horizontal velocity (1, 0)
  at a point of slope t into (0, t) and a vertical one (0, 1) into (1/t, 0),
  so a full traversal multiplies the speed by

      (t_2 t_4 ... t_{2n}) / (t_1 t_3 ... t_{2n-1}).

* The orthonormal chart of the ellipsoid billiard (metric diag(1, -1)) is
  reached by the fixed involution u = (x + y)/sqrt(2), w = (x - y)/sqrt(2),
  owned by this module.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import brentq

from .errors import (
    ConvexityViolation,
    DegenerateChord,
    InfeasibleSlopes,
    NoConvergence,
    ZeroSlope,
)
from .pecore import Ellipsoid

VERTICAL = "vertical"
HORIZONTAL = "horizontal"

#: Angular distance to a coordinate extremum below which a chord is degenerate.
DEGENERATE_TOL = 1e-9

#: Grid used for extrema search and construction-time convexity checks.
SCAN_GRID = 4096

_R45 = np.array([[1.0, 1.0], [1.0, -1.0]]) / np.sqrt(2.0)


def to_null_chart(xy: np.ndarray) -> np.ndarray:
    """Map orthonormal-chart coordinates (x, y) to null-chart (u, w)."""
    return np.asarray(xy, dtype=float) @ _R45.T


def from_null_chart(uw: np.ndarray) -> np.ndarray:
    """Inverse of to_null_chart (the map is an involution)."""
    return np.asarray(uw, dtype=float) @ _R45.T


def wrap_angle(t: float) -> float:
    """Reduce an angle to [0, 2*pi)."""
    return float(np.mod(t, 2.0 * np.pi))


def signed_angle_gap(a: float, b: float) -> float:
    """Signed circular difference a - b reduced to (-pi, pi]."""
    d = np.mod(a - b + np.pi, 2.0 * np.pi) - np.pi
    return float(np.where(d == -np.pi, np.pi, d))


class OvalCurve:
    """Closed strictly convex curve given as a polar graph about a center.

    Subclasses provide radius_derivs; everything else (points, slopes,
    curvature, chord steps) lives here.
    """

    center: np.ndarray

    def radius_derivs(self, theta):
        """Radius and its first two angle derivatives; vectorized."""
        raise NotImplementedError

    def point(self, theta):
        theta = np.asarray(theta, dtype=float)
        r, _, _ = self.radius_derivs(theta)
        return np.stack(
            [self.center[0] + r * np.cos(theta), self.center[1] + r * np.sin(theta)], axis=-1
        )

    def velocity(self, theta):
        """Tangent d/dtheta of the parameterization, components (x', y')."""
        theta = np.asarray(theta, dtype=float)
        r, r1, _ = self.radius_derivs(theta)
        c, s = np.cos(theta), np.sin(theta)
        return np.stack([r1 * c - r * s, r1 * s + r * c], axis=-1)

    def slope(self, theta) -> float:
        """Signed dy/dx of the tangent line at the given parameter."""
        vel = self.velocity(theta)
        return float(vel[..., 1] / vel[..., 0]) if vel.ndim == 1 else vel[..., 1] / vel[..., 0]

    def curvature(self, theta):
        theta = np.asarray(theta, dtype=float)
        r, r1, r2 = self.radius_derivs(theta)
        num = r * r + 2.0 * r1 * r1 - r * r2
        return num / np.power(r * r + r1 * r1, 1.5)

    def coordinate_extrema(self, axis: int) -> tuple[float, float]:
        """The two parameters where the given coordinate is extremal."""
        cache = getattr(self, "_extrema_cache", None)
        if cache is None:
            cache = {}
            self._extrema_cache = cache
        if axis not in cache:
            ts = np.linspace(0.0, 2.0 * np.pi, SCAN_GRID, endpoint=False)
            der = self.velocity(ts)[:, axis]

            def f(t: float) -> float:
                return float(self.velocity(np.array(t))[axis])

            roots = []
            for i in range(SCAN_GRID):
                a, b = der[i], der[(i + 1) % SCAN_GRID]
                lo, hi = ts[i], ts[i] + 2.0 * np.pi / SCAN_GRID
                if a == 0.0:
                    roots.append(lo)
                elif a * b < 0.0:
                    roots.append(brentq(f, lo, hi, xtol=1e-14))
            if len(roots) != 2:
                raise ConvexityViolation(
                    f"expected exactly two extrema of coordinate {axis}, found {len(roots)}"
                )
            cache[axis] = (wrap_angle(roots[0]), wrap_angle(roots[1]))
        return cache[axis]


class EllipseOval(OvalCurve):
    """Centered ellipse (x - c)^T M (x - c) = 1 for a symmetric positive form M."""

    def __init__(self, form: np.ndarray, center=(0.0, 0.0)):
        form = np.asarray(form, dtype=float)
        if form.shape != (2, 2) or abs(form[0, 1] - form[1, 0]) > 1e-14:
            raise ValueError("form must be a symmetric 2x2 matrix")
        if not (form[0, 0] > 0 and np.linalg.det(form) > 0):
            raise ValueError("form must be positive definite")
        self.form = form
        self.center = np.asarray(center, dtype=float)

    @classmethod
    def axis_aligned(cls, a: float, b: float, center=(0.0, 0.0)) -> "EllipseOval":
        if a <= 0 or b <= 0:
            raise ValueError("semi-axes must be positive")
        return cls(np.diag([1.0 / a**2, 1.0 / b**2]), center)

    def radius_derivs(self, theta):
        theta = np.asarray(theta, dtype=float)
        c, s = np.cos(theta), np.sin(theta)
        m00, m01, m11 = self.form[0, 0], self.form[0, 1], self.form[1, 1]
        q = m00 * c * c + 2.0 * m01 * c * s + m11 * s * s
        q1 = 2.0 * ((m11 - m00) * c * s + m01 * (c * c - s * s))
        q2 = 2.0 * ((m11 - m00) * (c * c - s * s) - 4.0 * m01 * c * s)
        r = q**-0.5
        r1 = -0.5 * q**-1.5 * q1
        r2 = 0.75 * q**-2.5 * q1 * q1 - 0.5 * q**-1.5 * q2
        return r, r1, r2


@dataclass(frozen=True)
class RadialBump:
    """Compactly supported radial perturbation (value + tilt) at one angle.

    g(t) = (value + tilt * d) * psi(d / halfwidth) with d the wrapped offset
    from anchor and psi(xi) = (1 - xi^2)^3; so g(anchor) = value and
    g'(anchor) = tilt.
    """

    anchor: float
    value: float
    tilt: float
    halfwidth: float

    def __post_init__(self) -> None:
        if not 0.0 < self.halfwidth < np.pi:
            raise ValueError("bump halfwidth must lie in (0, pi)")

    def derivs(self, theta):
        theta = np.asarray(theta, dtype=float)
        d = np.mod(theta - self.anchor + np.pi, 2.0 * np.pi) - np.pi
        xi = d / self.halfwidth
        inside = np.abs(xi) < 1.0
        xi = np.where(inside, xi, 0.0)
        one = 1.0 - xi * xi
        psi = one**3
        psi1 = -6.0 * xi * one * one
        psi2 = one * (30.0 * xi * xi - 6.0)
        lin = self.value + self.tilt * d
        g = lin * psi
        g1 = self.tilt * psi + lin * psi1 / self.halfwidth
        g2 = 2.0 * self.tilt * psi1 / self.halfwidth + lin * psi2 / self.halfwidth**2
        zero = np.zeros_like(g)
        return (
            np.where(inside, g, zero),
            np.where(inside, g1, zero),
            np.where(inside, g2, zero),
        )


class RadialOval(OvalCurve):
    """Base ellipse plus localized radial bumps; verified strictly convex."""

    def __init__(self, base: EllipseOval, bumps: tuple[RadialBump, ...] = ()):
        self.base = base
        self.bumps = tuple(bumps)
        self.center = base.center
        ts = np.linspace(0.0, 2.0 * np.pi, SCAN_GRID, endpoint=False)
        r, r1, r2 = self.radius_derivs(ts)
        if np.any(r <= 0.0):
            raise ConvexityViolation("perturbed radius is not positive everywhere")
        num = r * r + 2.0 * r1 * r1 - r * r2
        if np.min(num) <= 0.0:
            raise ConvexityViolation(
                f"curvature changes sign (min numerator {np.min(num):.3e})"
            )

    def radius_derivs(self, theta):
        r, r1, r2 = self.base.radius_derivs(theta)
        r, r1, r2 = np.array(r, dtype=float), np.array(r1, dtype=float), np.array(r2, dtype=float)
        for bump in self.bumps:
            g, g1, g2 = bump.derivs(theta)
            r = r + g
            r1 = r1 + g1
            r2 = r2 + g2
        return r, r1, r2


def _axis_index(direction: str) -> int:
    if direction == VERTICAL:
        return 0  # vertical chords share the first coordinate
    if direction == HORIZONTAL:
        return 1
    raise ValueError(f"direction must be '{VERTICAL}' or '{HORIZONTAL}', got {direction!r}")


def chord_step(curve: OvalCurve, theta: float, direction: str) -> float:
    """Parameter of the second intersection of the coordinate line through theta.

    Strict convexity splits the curve into two monotone arcs per coordinate;
    the partner is bracketed on the arc not containing theta and refined by
    bisection.  Raises DegenerateChord at coordinate extrema.
    """
    axis = _axis_index(direction)
    t_lo, t_hi = sorted(curve.coordinate_extrema(axis))
    theta = wrap_angle(theta)
    if min(abs(signed_angle_gap(theta, t_lo)), abs(signed_angle_gap(theta, t_hi))) < DEGENERATE_TOL:
        raise DegenerateChord(f"parameter {theta} is at a coordinate-{axis} extremum")

    target = float(curve.point(theta)[axis])

    def f(t: float) -> float:
        return float(curve.point(np.array(t))[axis]) - target

    if t_lo < theta < t_hi:
        lo, hi = t_hi, t_lo + 2.0 * np.pi
    else:
        lo, hi = t_lo, t_hi
    flo, fhi = f(lo), f(hi)
    if flo == 0.0:
        return wrap_angle(lo)
    if fhi == 0.0:
        return wrap_angle(hi)
    if flo * fhi > 0.0:
        raise DegenerateChord("chord endpoint could not be bracketed; point is at an extremum")
    root = brentq(f, lo, hi, xtol=1e-14)
    # Newton polish with the analytic tangent recovers full precision.
    for _ in range(2):
        slope = float(curve.velocity(np.array(root))[axis])
        if slope == 0.0:
            break
        root -= f(root) / slope
    return wrap_angle(root)


def oval_map(curve: OvalCurve, theta: float) -> float:
    """Vertical chord step followed by a horizontal one."""
    return chord_step(curve, chord_step(curve, theta, VERTICAL), HORIZONTAL)


def speed_factor(t: float, dir_in: str) -> float:
    """Signed speed multiplier of one reflection at a point of slope t."""
    if dir_in not in (VERTICAL, HORIZONTAL):
        raise ValueError(f"dir_in must be '{VERTICAL}' or '{HORIZONTAL}', got {dir_in!r}")
    t = float(t)
    if t == 0.0 or not np.isfinite(t):
        raise ZeroSlope(f"cannot reflect across slope {t}")
    return t if dir_in == HORIZONTAL else 1.0 / t


@dataclass(frozen=True)
class NullPolygon:
    """Closed alternating null polygon: vertices on the curve plus their slopes.

    The chord P_1 -> P_2 is horizontal (shared second coordinate), directions
    alternate, and the closing chord P_{2n} -> P_1 is vertical.
    """

    points: np.ndarray
    slopes: tuple[float, ...]

    def __post_init__(self) -> None:
        pts = np.array(self.points, dtype=float)
        pts.setflags(write=False)
        if pts.ndim != 2 or pts.shape[1] != 2 or pts.shape[0] < 4 or pts.shape[0] % 2:
            raise ValueError("a null polygon needs an even number >= 4 of plane points")
        slopes = tuple(float(t) for t in self.slopes)
        if len(slopes) != pts.shape[0]:
            raise ValueError("need exactly one slope per vertex")
        scale = max(1.0, float(np.max(np.abs(pts))))
        m = pts.shape[0]
        for j in range(m):
            shared = 1 if j % 2 == 0 else 0  # horizontal chords share coordinate 1
            a, b = pts[j], pts[(j + 1) % m]
            if abs(a[shared] - b[shared]) > 1e-6 * scale:
                raise ValueError(
                    f"chord {j + 1} is not {'horizontal' if shared else 'vertical'}: "
                    f"{a} -> {b}"
                )
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "slopes", slopes)

    @property
    def half_period(self) -> int:
        return self.points.shape[0] // 2


def polygon_params(curve: OvalCurve, poly: NullPolygon) -> np.ndarray:
    """Curve parameters of the polygon vertices (angles about the center)."""
    rel = poly.points - curve.center
    return np.mod(np.arctan2(rel[:, 1], rel[:, 0]), 2.0 * np.pi)


def acceleration_factor(poly: NullPolygon) -> float:
    """Per-period speed multiplier from the vertex slopes.

    Product of the even-position slopes over the odd-position ones, signed.
    """
    t = np.array(poly.slopes)
    if np.any(t == 0.0) or not np.all(np.isfinite(t)):
        raise ZeroSlope("acceleration factor needs finite non-zero slopes")
    return float(np.prod(t[1::2]) / np.prod(t[0::2]))


def simulate_speed(curve: OvalCurve, poly: NullPolygon) -> float:
    """Walk the polygon once, multiplying per-reflection speed factors.

    Slopes are re-read from the curve at each vertex, making this an
    independent path to the same number as acceleration_factor.
    """
    params = polygon_params(curve, poly)
    m = poly.points.shape[0]
    speed = 1.0
    for j in range(1, m + 1):
        dir_in = HORIZONTAL if j % 2 == 1 else VERTICAL
        arrival = params[j % m]
        speed *= speed_factor(float(curve.slope(arrival)), dir_in)
    return speed


def simulate_periods(curve: OvalCurve, poly: NullPolygon, periods: int) -> tuple[float, float]:
    """Chord-step the table for whole periods, starting at P_1 with unit speed.

    Re-derives every vertex by root solving, so drift accumulates honestly.
    Returns (final signed speed, closing parameter defect).
    """
    if periods < 1:
        raise ValueError("periods must be >= 1")
    params = polygon_params(curve, poly)
    theta = float(params[0])
    start = theta
    speed = 1.0
    legs = 2 * poly.half_period * periods
    for leg in range(legs):
        direction = HORIZONTAL if leg % 2 == 0 else VERTICAL
        theta = chord_step(curve, theta, direction)
        speed *= speed_factor(float(curve.slope(theta)), direction)
    return speed, abs(signed_angle_gap(theta, start))


def polygon_from_parameter(curve: OvalCurve, fixed_param: float, n: int) -> NullPolygon:
    """Expand a fixed point of the n-fold oval map into its 2n-vertex polygon."""
    if n < 2:
        raise ValueError("half-period must be >= 2")
    params = [chord_step(curve, fixed_param, VERTICAL)]
    for j in range(1, 2 * n):
        direction = HORIZONTAL if j % 2 == 1 else VERTICAL
        params.append(chord_step(curve, params[-1], direction))
    points = curve.point(np.array(params))
    slopes = tuple(float(s) for s in np.atleast_1d(curve.slope(np.array(params))))
    return NullPolygon(points, slopes)


def find_periodic_orbit(
    curve: OvalCurve,
    n: int,
    seed_param: float,
    tol: float = 1e-10,
    max_iter: int = 60,
) -> NullPolygon:
    """Damped Newton search for a parameter with oval_map^n equal to the identity.

    The closure defect is differentiated numerically; on curves where the
    n-fold map is the identity (circle, axis-aligned ellipse) the seed itself
    already closes and is returned directly.
    """
    if n < 2:
        raise ValueError("half-period must be >= 2")

    def iterate(t: float) -> float:
        for _ in range(n):
            t = oval_map(curve, t)
        return t

    def defect(t: float) -> float:
        return signed_angle_gap(iterate(t), t)

    s = wrap_angle(seed_param)
    g = defect(s)
    for _ in range(max_iter):
        if abs(g) <= tol:
            return polygon_from_parameter(curve, s, n)
        h = 1e-6
        dg = (defect(s + h) - defect(s - h)) / (2.0 * h)
        if abs(dg) < 1e-12:
            raise NoConvergence("closure defect is flat; cannot take a Newton step")
        step = g / dg
        lam = 1.0
        for _ in range(30):
            s_new = wrap_angle(s - lam * step)
            g_new = defect(s_new)
            if abs(g_new) < abs(g):
                s, g = s_new, g_new
                break
            lam *= 0.5
        else:
            raise NoConvergence(f"damping failed at defect {g:.3e}")
    if abs(g) <= tol:
        return polygon_from_parameter(curve, s, n)
    raise NoConvergence(f"no closure after {max_iter} iterations (defect {g:.3e})")


def return_map_derivative(
    curve: OvalCurve,
    poly: NullPolygon,
    h0: float = 2e-3,
    rtol: float = 5e-8,
    max_level: int = 8,
) -> float:
    """Derivative of the n-fold oval map at the polygon's fixed point.

    Central differences with Richardson extrapolation; the absolute value
    tracks the beam-width product, so |D| is v or 1/v and equals 1 exactly
    when the orbit is linearly stable.
    """
    n = poly.half_period
    s_star = float(polygon_params(curve, poly)[-1])

    def iterate(t: float) -> float:
        for _ in range(n):
            t = oval_map(curve, t)
        return t

    def central(h: float) -> float:
        return signed_angle_gap(iterate(s_star + h), iterate(s_star - h)) / (2.0 * h)

    prev_extrap = None
    d_prev = central(h0)
    for level in range(1, max_level + 1):
        h = h0 / 2.0**level
        d_cur = central(h)
        extrap = (4.0 * d_cur - d_prev) / 3.0
        if prev_extrap is not None and abs(extrap - prev_extrap) <= rtol * max(1.0, abs(extrap)):
            return extrap
        prev_extrap = extrap
        d_prev = d_cur
    raise NoConvergence("derivative extrapolation did not settle")


#: Candidate bump supports, as fractions of the angular gap to the nearest vertex.
SUPPORT_FRACTIONS = (0.95, 0.9, 0.85, 0.8, 0.75, 0.7, 0.65, 0.6, 0.55, 0.5, 0.45, 0.4)


def build_accelerating_table(
    points,
    slopes,
    support_fractions: tuple[float, ...] = SUPPORT_FRACTIONS,
    max_halfwidth: float = 1.5,
) -> RadialOval:
    """Convex table through a null polygon with prescribed vertex slopes.

    A base axis-aligned ellipse is fitted through the vertices about their
    centroid; each vertex then gets a localized radial bump whose value and
    tilt solve the through-point and slope conditions.  Bump supports exclude
    the neighboring vertices, so the per-vertex 2x2 systems stay decoupled;
    among the candidate support widths the one with the largest curvature
    margin wins.  Raises InfeasibleSlopes when the sign pattern cannot be
    convex and ConvexityViolation when every candidate fails the curvature
    check.
    """
    pts = np.asarray(points, dtype=float)
    slopes = np.asarray(slopes, dtype=float)
    NullPolygon(pts, tuple(slopes))  # validates the alternating-null-chord shape

    if np.any(slopes == 0.0) or not np.all(np.isfinite(slopes)):
        raise ZeroSlope("target slopes must be finite and non-zero")

    center = pts.mean(axis=0)
    rel = pts - center
    scale = max(1.0, float(np.max(np.abs(rel))))
    axis_tol = 1e-9 * scale

    ratios = []
    for (du, dw), t in zip(rel, slopes):
        if abs(du) > axis_tol and abs(dw) > axis_tol:
            if np.sign(t) != -np.sign(du * dw):
                raise InfeasibleSlopes(
                    f"slope {t} at offset ({du:.3g}, {dw:.3g}) cannot lie on a convex curve"
                )
            ratios.append(abs(t) * abs(dw) / abs(du))
    k = float(np.exp(np.mean(np.log(ratios)))) if ratios else 1.0

    weights = rel[:, 0] ** 2 + rel[:, 1] ** 2 / k
    p_coeff = float(np.sum(weights) / np.sum(weights**2))
    base = EllipseOval.axis_aligned(np.sqrt(1.0 / p_coeff), np.sqrt(k / p_coeff), center)

    thetas = np.mod(np.arctan2(rel[:, 1], rel[:, 0]), 2.0 * np.pi)
    radii = np.hypot(rel[:, 0], rel[:, 1])
    order = np.argsort(thetas)
    gaps = {}
    m = len(thetas)
    for pos, idx in enumerate(order):
        before = thetas[order[pos - 1]]
        after = thetas[order[(pos + 1) % m]]
        gap_prev = abs(signed_angle_gap(thetas[idx], before))
        gap_next = abs(signed_angle_gap(after, thetas[idx]))
        gaps[idx] = min(gap_prev, gap_next)

    anchors = []
    for j in range(m):
        theta_j, r_j, t_j = float(thetas[j]), float(radii[j]), float(slopes[j])
        c, s = np.cos(theta_j), np.sin(theta_j)
        denom = t_j * c - s
        if abs(denom) <= 1e-12 * (1.0 + abs(t_j)):
            raise InfeasibleSlopes(f"target slope at vertex {j + 1} points along the radius")
        r1_req = r_j * (c + t_j * s) / denom
        rb, rb1, _ = base.radius_derivs(np.array(theta_j))
        anchors.append((theta_j, r_j - float(rb), r1_req - float(rb1), gaps[j]))

    def margin_of(curve: RadialOval) -> float:
        ts = np.linspace(0.0, 2.0 * np.pi, SCAN_GRID, endpoint=False)
        r, r1, r2 = curve.radius_derivs(ts)
        return float(np.min(r * r + 2.0 * r1 * r1 - r * r2))

    best: RadialOval | None = None
    best_margin = 0.0
    for fraction in support_fractions:
        bumps = tuple(
            RadialBump(theta_j, value, tilt, min(fraction * gap, max_halfwidth))
            for theta_j, value, tilt, gap in anchors
        )
        try:
            candidate = RadialOval(base, bumps)
        except ConvexityViolation:
            continue
        margin = margin_of(candidate)
        if margin > best_margin:
            best, best_margin = candidate, margin
    if best is None:
        raise ConvexityViolation(
            "no candidate bump support keeps the curve strictly convex"
        )
    return best


def null_chart_table(ell: Ellipsoid) -> EllipseOval:
    """The null-chart image of a plane ellipsoid from the orthonormal chart."""
    if ell.dim != 2:
        raise ValueError("only plane ellipses have a null-chart table")
    form = _R45 @ np.diag(ell.shape_diag) @ _R45
    return EllipseOval(form)
