"""Billiards inside ellipsoids in pseudo-Euclidean space.

Core objects: diagonal metrics and ellipsoids (`pecore`), the pseudo-confocal
family and tangency parameters of lines (`confocal`), the billiard ball map
with its conserved quantities (`billiard`), light-like plane billiards and
accelerating tables (`lorentz_oval`), and numerical verification sweeps
(`verify`).  The `pebilliards` console script exposes the CLI.
"""

from . import billiard, confocal, lorentz_oval, pecore, verify
from .pecore import Ellipsoid, Quadric, RayState, Signature, VectorType

__version__ = "0.1.0"

__all__ = [
    "billiard",
    "confocal",
    "lorentz_oval",
    "pecore",
    "verify",
    "Ellipsoid",
    "Quadric",
    "RayState",
    "Signature",
    "VectorType",
    "__version__",
]
