"""3D antenna-array geometry and look directions on the unit sphere."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

TWO_PI = 2.0 * math.pi
HALF_PI = 0.5 * math.pi


@dataclass(frozen=True)
class Direction:
    """A look direction, azimuth in [-pi, pi) and elevation in [-pi/2, pi/2].

    Azimuth is wrapped into range at construction; an out-of-range elevation
    is rejected. At elevation +-pi/2 the azimuth is degenerate; the tangent
    formulas below still return finite values there, but information-matrix
    conditioning degrades for directions at the poles.
    """

    azimuth: float
    elevation: float

    def __post_init__(self):
        el = float(self.elevation)
        if not -HALF_PI <= el <= HALF_PI:
            raise ValueError(f"elevation {el} outside [-pi/2, pi/2]")
        az = (float(self.azimuth) + math.pi) % TWO_PI - math.pi
        object.__setattr__(self, "azimuth", az)
        object.__setattr__(self, "elevation", el)

    def to_json(self) -> dict:
        return {"az": self.azimuth, "el": self.elevation}

    @classmethod
    def from_json(cls, obj: dict) -> "Direction":
        return cls(float(obj["az"]), float(obj["el"]))


def unit_vector(d: Direction) -> np.ndarray:
    """Cartesian unit vector (cos el cos az, cos el sin az, sin el)."""
    ca, sa = math.cos(d.azimuth), math.sin(d.azimuth)
    ce, se = math.cos(d.elevation), math.sin(d.elevation)
    return np.array([ce * ca, ce * sa, se])


def tangent_basis(d: Direction) -> tuple[np.ndarray, np.ndarray]:
    """Unit tangent vectors (azimuthal, elevational) at d.

    Both are orthogonal to unit_vector(d) and to each other. Together with
    the radial vector they form the local orthonormal frame in which all
    direction derivatives are expressed (per radian of arc, so moving the
    direction along either tangent by t radians traces a great circle).
    """
    ca, sa = math.cos(d.azimuth), math.sin(d.azimuth)
    ce, se = math.cos(d.elevation), math.sin(d.elevation)
    v_az = np.array([-sa, ca, 0.0])
    v_el = np.array([-se * ca, -se * sa, ce])
    return v_az, v_el


def direction_from_unit(u) -> Direction:
    """Inverse of unit_vector; accepts any nonzero 3-vector."""
    u = np.asarray(u, dtype=float)
    nrm = np.linalg.norm(u)
    if nrm == 0.0:
        raise ValueError("zero vector has no direction")
    x, y, z = u / nrm
    return Direction(math.atan2(y, x), math.asin(min(1.0, max(-1.0, z))))


class ArrayGeometry:
    """Antenna positions as a 3 x n matrix in radians per unit direction.

    Positions are stored pre-multiplied by 2*pi/wavelength so every
    downstream formula is wavelength-free. The columns are re-centered on
    their centroid at construction (twice, to squeeze out round-off): the
    decoupling of gain, arrival and departure parameters in the information
    matrix relies on the scaled position matrix having zero row sums.
    """

    __slots__ = ("scaled_positions", "_spec")

    def __init__(self, scaled_positions, spec: dict | None = None):
        A = np.array(scaled_positions, dtype=float)
        if A.ndim != 2 or A.shape[0] != 3:
            raise ValueError("scaled_positions must be a 3 x n matrix")
        if A.shape[1] < 1:
            raise ValueError("array needs at least one antenna")
        A -= A.mean(axis=1, keepdims=True)
        A -= A.mean(axis=1, keepdims=True)
        A.setflags(write=False)
        self.scaled_positions = A
        self._spec = spec or {
            "type": "custom",
            "positions": (A / TWO_PI).tolist(),
        }

    @property
    def n_antennas(self) -> int:
        return self.scaled_positions.shape[1]

    @classmethod
    def from_positions(cls, positions_wavelengths) -> "ArrayGeometry":
        """Build from raw antenna positions expressed in wavelengths."""
        pos = np.asarray(positions_wavelengths, dtype=float)
        return cls(TWO_PI * pos)

    def to_json(self) -> dict:
        return dict(self._spec)

    @classmethod
    def from_json(cls, obj: dict) -> "ArrayGeometry":
        kind = obj.get("type", "custom")
        if kind == "ula":
            return ula(int(obj["n"]), float(obj.get("spacing", 0.5)),
                       obj.get("axis", "x"))
        if kind == "upa":
            return upa(int(obj["nx"]), int(obj["ny"]),
                       float(obj.get("spacing", 0.5)), obj.get("plane", "yz"))
        if kind == "custom":
            return cls.from_positions(obj["positions"])
        raise ValueError(f"unknown array type {kind!r}")


_AXES = {"x": 0, "y": 1, "z": 2}
_PLANES = {"xy": (0, 1), "yz": (1, 2), "xz": (0, 2)}


def ula(n: int, spacing_wavelengths: float = 0.5, axis: str = "x") -> ArrayGeometry:
    """Uniform linear array of n antennas along a coordinate axis.

    Element i (1-based) sits at (i - (n+1)/2) * spacing wavelengths, so the
    centroid is at the origin by construction.
    """
    if n < 1:
        raise ValueError("n must be positive")
    if spacing_wavelengths <= 0:
        raise ValueError("spacing must be positive")
    if axis not in _AXES:
        raise ValueError(f"axis must be one of {sorted(_AXES)}")
    offsets = (np.arange(1, n + 1) - (n + 1) / 2.0) * spacing_wavelengths
    pos = np.zeros((3, n))
    pos[_AXES[axis]] = offsets
    return ArrayGeometry(TWO_PI * pos, spec={
        "type": "ula", "n": n, "spacing": spacing_wavelengths, "axis": axis,
    })


def upa(nx: int, ny: int, spacing_wavelengths: float = 0.5,
        plane: str = "yz") -> ArrayGeometry:
    """Uniform planar array on an nx x ny grid in a coordinate plane.

    Columns are ordered row-major over (ix, iy) with ix the slow index.
    """
    if nx < 1 or ny < 1:
        raise ValueError("grid dimensions must be positive")
    if spacing_wavelengths <= 0:
        raise ValueError("spacing must be positive")
    if plane not in _PLANES:
        raise ValueError(f"plane must be one of {sorted(_PLANES)}")
    off_x = (np.arange(1, nx + 1) - (nx + 1) / 2.0) * spacing_wavelengths
    off_y = (np.arange(1, ny + 1) - (ny + 1) / 2.0) * spacing_wavelengths
    a, b = _PLANES[plane]
    pos = np.zeros((3, nx * ny))
    pos[a] = np.repeat(off_x, ny)
    pos[b] = np.tile(off_y, nx)
    return ArrayGeometry(TWO_PI * pos, spec={
        "type": "upa", "nx": nx, "ny": ny,
        "spacing": spacing_wavelengths, "plane": plane,
    })
