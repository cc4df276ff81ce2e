"""Pseudo-confocal quadric families and tangency parameters of lines.

A centered ellipsoid with semi-axes a_i in a diagonal metric of signature
(p, q) generates the one-parameter family of quadrics

    sum_i x_i^2 / c_i(lam) = 1,      c_i(lam) = a_i^2 + e_i * lam,

so the positive metric block carries a_i^2 + lam and the negative block
a_i^2 - lam.  The family has poles at lam = -e_i a_i^2.  A line {x + t v}
is tangent to the member at lam exactly when the discriminant of the
restricted quadratic vanishes:

    G(lam) = (x.Bv)^2 - (v.Bv) (x.Bx - 1),      B = diag(1 / c_i(lam)).

Clearing denominators turns G into a polynomial of degree <= 2n+1 whose
leading coefficient is the squared pseudo-norm of v, so the degree drops
by one for light-like directions.  Root isolation works on G directly:
bracketing on sign changes between consecutive poles, bisection-based
refinement, a near-pole spurious filter, and a final |G| verification.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import brentq, minimize_scalar

from .errors import PoleParameter, RootIsolationFailure
from .pecore import Ellipsoid, Quadric, RayState, Signature

#: Samples per inter-pole interval when scanning G for sign changes.
DEFAULT_GRID = 2048

#: Unbounded tails extend this many multiples of max(a_i^2) beyond the poles.
TAIL_SPAN_FACTOR = 10.0

#: Roots closer than this times max(a_i^2) to a pole are discarded as spurious.
POLE_FILTER_FACTOR = 1e-7

#: Normalized |G| threshold for accepting a polished root as a tangency.
VERIFY_TOL = 1e-9


@dataclass(frozen=True)
class ConfocalFamily:
    """The pseudo-confocal family generated by an ellipsoid and a signature."""

    ellipsoid: Ellipsoid
    sig: Signature

    def __post_init__(self) -> None:
        if self.ellipsoid.dim != self.sig.dim:
            raise ValueError(
                f"ellipsoid dimension {self.ellipsoid.dim} != signature dimension {self.sig.dim}"
            )

    @property
    def dim(self) -> int:
        return self.sig.dim

    def coefficients(self, lam) -> np.ndarray:
        """Member coefficients c_i(lam) = a_i^2 + e_i * lam.

        `lam` may be a scalar (returns shape (dim,)) or an array of m values
        (returns shape (m, dim)).
        """
        lam = np.asarray(lam, dtype=float)
        return self.ellipsoid.a2 + np.multiply.outer(lam, self.sig.e)

    def poles(self) -> np.ndarray:
        """Sorted distinct pole parameters lam = -e_i a_i^2."""
        return np.unique(-self.sig.e * self.ellipsoid.a2)

    @property
    def pole_tolerance(self) -> float:
        return POLE_FILTER_FACTOR * float(np.max(self.ellipsoid.a2))


def member(fam: ConfocalFamily, lam: float) -> Quadric:
    """The family member at parameter lam.

    Raises PoleParameter when lam is within the pole tolerance of a pole.
    """
    lam = float(lam)
    if np.min(np.abs(fam.poles() - lam)) <= fam.pole_tolerance:
        raise PoleParameter(f"lambda = {lam} is at (or within tolerance of) a family pole")
    return Quadric(fam.coefficients(lam))


def _discriminant_values(fam: ConfocalFamily, x: np.ndarray, v: np.ndarray, lams: np.ndarray) -> np.ndarray:
    """Vectorized G(lam) for an array of parameters (poles give non-finite entries)."""
    b = 1.0 / fam.coefficients(lams)  # (m, dim)
    xbv = b @ (x * v)
    vbv = b @ (v * v)
    xbx = b @ (x * x)
    return xbv * xbv - vbv * (xbx - 1.0)


def _discriminant_scale(fam: ConfocalFamily, x: np.ndarray, v: np.ndarray, lam: float) -> float:
    """Magnitude scale of the two competing terms of G at lam, for normalization."""
    b = 1.0 / fam.coefficients(lam)
    xbv = float(b @ (x * v))
    vbv = float(b @ (v * v))
    xbx = float(b @ (x * x))
    return max(1.0, xbv * xbv, abs(vbv * (xbx - 1.0)))


def tangency_discriminant(fam: ConfocalFamily, r: RayState, lam: float) -> float:
    """G(lam) for the line of r; zero iff the line is tangent to member(fam, lam)."""
    lam = float(lam)
    if np.min(np.abs(fam.poles() - lam)) <= fam.pole_tolerance:
        raise PoleParameter(f"lambda = {lam} is at (or within tolerance of) a family pole")
    if r.dim != fam.dim:
        raise ValueError(f"ray dimension {r.dim} != family dimension {fam.dim}")
    return float(_discriminant_values(fam, r.x, r.v, np.array([lam]))[0])


def cleared_polynomial(fam: ConfocalFamily, r: RayState) -> np.ndarray:
    """Coefficients (ascending, length 2n+2) of P(lam) = G(lam) * prod_i c_i(lam)^2.

    P is polynomial of degree <= 2n+1 where n+1 is the ambient dimension.
    Its top coefficient equals <v,v>, which is the degree-drop mechanism for
    light-like directions.  Expansion uses

        P = S_xv^2 - S_vv * (S_xx - C),

    with C = prod_i c_i,  S_ww = sum_i w_i^2 prod_{j != i} c_j, and
    S_xv = sum_i x_i v_i prod_{j != i} c_j.
    """
    if r.dim != fam.dim:
        raise ValueError(f"ray dimension {r.dim} != family dimension {fam.dim}")
    d = fam.dim
    a2 = fam.ellipsoid.a2
    e = fam.sig.e
    poly = np.polynomial.polynomial

    lin = [np.array([a2[i], e[i]]) for i in range(d)]  # c_i as ascending coefficients

    full = np.array([1.0])
    for li in lin:
        full = poly.polymul(full, li)

    partial = []  # prod_{j != i} c_j
    for i in range(d):
        pi = np.array([1.0])
        for j in range(d):
            if j != i:
                pi = poly.polymul(pi, lin[j])
        partial.append(pi)

    def weighted_sum(weights: np.ndarray) -> np.ndarray:
        acc = np.zeros(d)
        for i in range(d):
            acc = poly.polyadd(acc, weights[i] * partial[i])
        return acc

    s_xv = weighted_sum(r.x * r.v)
    s_vv = weighted_sum(r.v * r.v)
    s_xx = weighted_sum(r.x * r.x)

    p = poly.polysub(poly.polymul(s_xv, s_xv), poly.polymul(s_vv, poly.polysub(s_xx, full)))
    out = np.zeros(2 * d)
    out[: p.shape[0]] = p
    return out


@dataclass(frozen=True)
class TangencySet:
    """Sorted tangency parameters of a line, with multiplicity flags.

    `near_pole` lists candidate roots discarded by the spurious-root filter,
    kept for diagnostics only.
    """

    lambdas: tuple[float, ...]
    multiplicities: tuple[int, ...] = field(default=())
    near_pole: tuple[float, ...] = field(default=())

    def __post_init__(self) -> None:
        if not self.multiplicities:
            object.__setattr__(self, "multiplicities", tuple(1 for _ in self.lambdas))
        if len(self.multiplicities) != len(self.lambdas):
            raise ValueError("multiplicity flags must match the parameter list")
        if any(b < a for a, b in zip(self.lambdas, self.lambdas[1:])):
            raise ValueError("tangency parameters must be sorted ascending")

    @property
    def count(self) -> int:
        return len(self.lambdas)

    @property
    def has_multiple(self) -> bool:
        return any(m > 1 for m in self.multiplicities)


def _tail_extent(fam: ConfocalFamily, r: RayState) -> float:
    """How far beyond the outermost poles real tangency roots can lie.

    Uses the Cauchy root bound of the cleared polynomial (tiny leading
    coefficients from the null degree drop are trimmed first), floored at
    the fixed multiple of max(a_i^2).  The cleared polynomial, hence the
    bound, is invariant under sliding the base point and scaling v.
    """
    floor = TAIL_SPAN_FACTOR * float(np.max(fam.ellipsoid.a2))
    coeffs = cleared_polynomial(fam, r)
    mags = np.abs(coeffs)
    top = mags.max()
    if top == 0.0:
        return floor
    keep = np.nonzero(mags > 1e-13 * top)[0]
    if keep.size < 2:
        return floor
    lead = keep[-1]
    cauchy = 1.0 + float(np.max(mags[:lead] / mags[lead]))
    return max(floor, 2.0 * cauchy)


def _scan_samples(fam: ConfocalFamily, r: RayState, grid: int) -> list[np.ndarray]:
    """Parameter samples per interval: linear between poles, geometric tails."""
    poles = fam.poles()
    inset = fam.pole_tolerance
    extent = _tail_extent(fam, r)
    samples = [poles[0] - np.geomspace(extent, inset, grid)]
    for lo, hi in zip(poles[:-1], poles[1:]):
        if hi - inset > lo + inset:
            samples.append(np.linspace(lo + inset, hi - inset, grid))
    samples.append(poles[-1] + np.geomspace(inset, extent, grid))
    return samples


def tangency_parameters(
    fam: ConfocalFamily,
    r: RayState,
    grid: int = DEFAULT_GRID,
    verify_tol: float = VERIFY_TOL,
) -> TangencySet:
    """All real tangency parameters of the line of r, isolated and polished.

    Sign changes of G on a `grid`-point scan of each inter-pole interval
    (plus geometrically sampled tails out to the cleared polynomial's root
    bound) are refined by bisection bracketing; grid points where |G| dips
    below tolerance without a sign change are refined as candidate double
    roots.  Roots within the pole tolerance of a pole are discarded as
    clearing artifacts and reported separately.  Every surviving root is
    re-verified against the normalized discriminant.
    """
    if r.dim != fam.dim:
        raise ValueError(f"ray dimension {r.dim} != family dimension {fam.dim}")
    if grid < 8:
        raise ValueError("grid must allow at least 8 samples per interval")
    x, v = r.x, r.v
    if not (np.all(np.isfinite(x)) and np.all(np.isfinite(v))):
        raise RootIsolationFailure("non-finite ray state")

    def g_scalar(lam: float) -> float:
        return float(_discriminant_values(fam, x, v, np.array([lam]))[0])

    roots: list[tuple[float, int]] = []
    for lams in _scan_samples(fam, r, grid):
        gv = _discriminant_values(fam, x, v, lams)
        if not np.all(np.isfinite(gv)):
            raise RootIsolationFailure(
                f"discriminant not finite on [{lams[0]}, {lams[-1]}]"
            )

        for i in range(grid - 1):
            gi, gj = gv[i], gv[i + 1]
            if gi == 0.0:
                roots.append((float(lams[i]), 1))
            elif gi * gj < 0.0:
                try:
                    lam_star = brentq(g_scalar, lams[i], lams[i + 1], xtol=1e-15, rtol=1e-15)
                except ValueError as exc:  # pragma: no cover - defensive
                    raise RootIsolationFailure(str(exc)) from exc
                roots.append((float(lam_star), 1))
        if gv[-1] == 0.0:
            roots.append((float(lams[-1]), 1))

        # Double-root sweep: interior |G| minima below tolerance, no sign change.
        absg = np.abs(gv)
        for i in range(1, grid - 1):
            if gv[i - 1] * gv[i] < 0.0 or gv[i] * gv[i + 1] < 0.0 or gv[i] == 0.0:
                continue
            if absg[i] <= absg[i - 1] and absg[i] <= absg[i + 1]:
                scale = _discriminant_scale(fam, x, v, float(lams[i]))
                if absg[i] <= verify_tol * scale:
                    res = minimize_scalar(
                        lambda t: abs(g_scalar(t)),
                        bounds=(float(lams[i - 1]), float(lams[i + 1])),
                        method="bounded",
                        options={"xatol": 1e-14},
                    )
                    lam_star = float(res.x)
                    if abs(g_scalar(lam_star)) <= verify_tol * scale:
                        roots.append((lam_star, 2))

    poles = fam.poles()
    pole_tol = fam.pole_tolerance
    kept: list[tuple[float, int]] = []
    near_pole: list[float] = []
    for lam_star, mult in sorted(roots):
        if np.min(np.abs(poles - lam_star)) <= pole_tol:
            near_pole.append(lam_star)
            continue
        if abs(g_scalar(lam_star)) > verify_tol * _discriminant_scale(fam, x, v, lam_star):
            continue
        if kept and abs(lam_star - kept[-1][0]) <= 1e-11 * max(1.0, abs(lam_star)):
            continue
        kept.append((lam_star, mult))

    return TangencySet(
        lambdas=tuple(lam for lam, _ in kept),
        multiplicities=tuple(m for _, m in kept),
        near_pole=tuple(near_pole),
    )
