"""Sparse physical channel model: steering vectors, path parameters, synthesis.

The channel between an n_t-antenna transmitter and an n_r-antenna receiver
is a sum of rank-1 path contributions c_p * e_r(doa_p) e_t(dod_p)^H, with
unit-norm steering vectors e_x and complex gains c_p = rho_p exp(j phi_p).
"""

from __future__ import annotations

import cmath
import math
from dataclasses import dataclass

import numpy as np

from .geometry import ArrayGeometry, Direction, tangent_basis, unit_vector

TWO_PI = 2.0 * math.pi


@dataclass(frozen=True)
class PathParams:
    """One propagation path: gain magnitude, phase, arrival and departure.

    rho must be strictly positive: zero-gain paths make the gain-magnitude
    information entry (which carries a 1/rho^2 factor) meaningless and the
    Fisher matrix singular.
    """

    rho: float
    phi: float
    doa: Direction
    dod: Direction

    def __post_init__(self):
        if not self.rho > 0:
            raise ValueError(f"path gain magnitude must be positive, got {self.rho}")
        object.__setattr__(self, "rho", float(self.rho))
        object.__setattr__(self, "phi", float(self.phi) % TWO_PI)

    @property
    def gain(self) -> complex:
        return self.rho * cmath.exp(1j * self.phi)

    def to_json(self) -> dict:
        return {"rho": self.rho, "phi": self.phi,
                "doa": self.doa.to_json(), "dod": self.dod.to_json()}

    @classmethod
    def from_json(cls, obj: dict) -> "PathParams":
        return cls(float(obj["rho"]), float(obj["phi"]),
                   Direction.from_json(obj["doa"]), Direction.from_json(obj["dod"]))


class PathSet:
    """Ordered, non-empty collection of paths."""

    __slots__ = ("paths",)

    def __init__(self, paths):
        paths = tuple(paths)
        if not paths:
            raise ValueError("a path set needs at least one path")
        if not all(isinstance(p, PathParams) for p in paths):
            raise TypeError("all entries must be PathParams")
        self.paths = paths

    def __len__(self) -> int:
        return len(self.paths)

    def __iter__(self):
        return iter(self.paths)

    def __getitem__(self, i):
        return self.paths[i]

    def to_json(self) -> list:
        return [p.to_json() for p in self.paths]

    @classmethod
    def from_json(cls, obj) -> "PathSet":
        return cls(PathParams.from_json(p) for p in obj)


class ChannelMatrix:
    """Complex n_r x n_t channel with a column-major vector view."""

    __slots__ = ("matrix",)

    def __init__(self, matrix):
        M = np.array(matrix, dtype=complex)
        if M.ndim != 2:
            raise ValueError("channel must be a 2D matrix")
        M.setflags(write=False)
        self.matrix = M

    @property
    def shape(self) -> tuple[int, int]:
        return self.matrix.shape

    @property
    def vector(self) -> np.ndarray:
        """Column-major (column-stacked) flattening of the matrix."""
        return self.matrix.reshape(-1, order="F")

    @classmethod
    def from_vector(cls, vec, n_r: int, n_t: int) -> "ChannelMatrix":
        v = np.asarray(vec, dtype=complex)
        if v.size != n_r * n_t:
            raise ValueError(f"vector of length {v.size} is not {n_r}x{n_t}")
        return cls(v.reshape((n_r, n_t), order="F"))


def steering_vector(g: ArrayGeometry, d: Direction) -> np.ndarray:
    """Unit-norm array response: entries exp(-j a_i . u) / sqrt(n)."""
    phases = g.scaled_positions.T @ unit_vector(d)
    return np.exp(-1j * phases) / math.sqrt(g.n_antennas)


def steering_matrix(g: ArrayGeometry, directions) -> np.ndarray:
    """Steering vectors for many directions, stacked as columns."""
    U = np.stack([unit_vector(d) for d in directions], axis=1)
    return np.exp(-1j * (g.scaled_positions.T @ U)) / math.sqrt(g.n_antennas)


def steering_derivative(g: ArrayGeometry, d: Direction, axis: str) -> np.ndarray:
    """Directional derivative of the steering vector, per radian of arc.

    axis selects the unit tangent ("azimuth" or "elevation") along which the
    direction moves; the derivative is diag(-j A^T v) e(d) where A is the
    scaled position matrix and v the chosen tangent.
    """
    v_az, v_el = tangent_basis(d)
    if axis == "azimuth":
        v = v_az
    elif axis == "elevation":
        v = v_el
    else:
        raise ValueError("axis must be 'azimuth' or 'elevation'")
    return (-1j * (g.scaled_positions.T @ v)) * steering_vector(g, d)


def atomic_channel(p: PathParams, g_r: ArrayGeometry, g_t: ArrayGeometry) -> ChannelMatrix:
    """Rank-1 channel of a single path; Frobenius norm equals p.rho."""
    e_r = steering_vector(g_r, p.doa)
    e_t = steering_vector(g_t, p.dod)
    return ChannelMatrix(p.gain * np.outer(e_r, e_t.conj()))


def synthesize(ps: PathSet, g_r: ArrayGeometry, g_t: ArrayGeometry) -> ChannelMatrix:
    """Sum of the atomic channels of all paths."""
    H = np.zeros((g_r.n_antennas, g_t.n_antennas), dtype=complex)
    for p in ps:
        H += atomic_channel(p, g_r, g_t).matrix
    return ChannelMatrix(H)


def merge_paths(paths, direction_tol: float = 1e-9) -> PathParams:
    """Collapse paths sharing a DoA/DoD into one virtual path of summed gain.

    Raises if the directions differ by more than direction_tol (in unit-vector
    distance) or if the gains cancel exactly.
    """
    paths = list(paths)
    if not paths:
        raise ValueError("nothing to merge")
    first = paths[0]
    u_r, u_t = unit_vector(first.doa), unit_vector(first.dod)
    for p in paths[1:]:
        if (np.linalg.norm(unit_vector(p.doa) - u_r) > direction_tol
                or np.linalg.norm(unit_vector(p.dod) - u_t) > direction_tol):
            raise ValueError("paths do not share directions")
    total = sum(p.gain for p in paths)
    if total == 0:
        raise ValueError("merged gain is zero")
    return PathParams(abs(total), cmath.phase(total) % TWO_PI, first.doa, first.dod)
