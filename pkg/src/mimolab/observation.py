"""Hybrid-architecture training: pilots, combiners, noise, and the channel-space projection.

The receiver sees Y = W^H H X + W^H N, where X stacks pilot vectors sent
over n_s time steps, W stacks the analog combiners, and N is white complex
Gaussian noise of per-entry variance sigma2.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import orth

from .channel import ChannelMatrix, PathSet, steering_derivative, steering_vector
from .geometry import ArrayGeometry

ORTHO_PILOT_TOL = 1e-10
DENSE_PROJECTION_LIMIT = 4096


@dataclass(eq=False)
class ObservationSetup:
    """Training matrix X (n_t x n_s), combiners W (n_r x n_c), noise level.

    W must have full column rank (the projection onto its range needs
    W^H W invertible). sigma2 = 0 describes a noiseless observation, valid
    for observing and estimating but rejected by the information-matrix and
    SNR operations, which divide by it. V and Z are optional precoder
    factors with X = V Z; they are carried as metadata only, all
    computations consume X.
    """

    X: np.ndarray
    W: np.ndarray
    sigma2: float
    V: np.ndarray | None = None
    Z: np.ndarray | None = None
    _range_projector: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        self.X = np.array(self.X, dtype=complex)
        self.W = np.array(self.W, dtype=complex)
        if self.X.ndim != 2 or self.W.ndim != 2:
            raise ValueError("X and W must be matrices")
        if self.sigma2 < 0:
            raise ValueError("sigma2 must be non-negative")
        if np.linalg.matrix_rank(self.W) < self.W.shape[1]:
            raise ValueError("W must have full column rank")
        if self.alpha2 <= 0:
            raise ValueError("X must carry nonzero transmit power")
        if self.V is not None and self.Z is not None:
            VZ = np.asarray(self.V) @ np.asarray(self.Z)
            if VZ.shape != self.X.shape or not np.allclose(VZ, self.X):
                raise ValueError("V @ Z does not factor X")
        self.X.setflags(write=False)
        self.W.setflags(write=False)

    @property
    def n_t(self) -> int:
        return self.X.shape[0]

    @property
    def n_s(self) -> int:
        return self.X.shape[1]

    @property
    def n_r(self) -> int:
        return self.W.shape[0]

    @property
    def n_c(self) -> int:
        return self.W.shape[1]

    @property
    def alpha2(self) -> float:
        """Average transmit power per training step, trace(X^H X)/n_s."""
        return float(np.sum(np.abs(self.X) ** 2)) / self.n_s

    @property
    def has_orthogonal_pilots(self) -> bool:
        """True when X^H X = alpha2 * Id within ORTHO_PILOT_TOL."""
        G = self.X.conj().T @ self.X
        dev = np.linalg.norm(G - self.alpha2 * np.eye(self.n_s))
        return dev <= ORTHO_PILOT_TOL * self.alpha2 * self.n_s

    def combiner_range_projector(self) -> np.ndarray:
        """Orthogonal projector W (W^H W)^-1 W^H onto the combiner range."""
        if self._range_projector is None:
            G = self.W.conj().T @ self.W
            self._range_projector = self.W @ np.linalg.solve(G, self.W.conj().T)
        return self._range_projector

    def to_json(self) -> dict:
        obj = {
            "pilots": "explicit", "X": complex_to_json(self.X),
            "combiners": "explicit", "W": complex_to_json(self.W),
            "sigma2": self.sigma2,
        }
        if self.V is not None:
            obj["V"] = complex_to_json(np.asarray(self.V))
        if self.Z is not None:
            obj["Z"] = complex_to_json(np.asarray(self.Z))
        return obj


@dataclass(frozen=True)
class ObservationData:
    """Combined received pilots, an n_c x n_s matrix."""

    Y: np.ndarray


def complex_to_json(M: np.ndarray) -> list:
    """Nested lists with each complex entry encoded as [re, im]."""
    return [[[float(z.real), float(z.imag)] for z in row] for row in np.asarray(M, dtype=complex)]


def complex_from_json(obj) -> np.ndarray:
    arr = np.asarray(obj, dtype=float)
    if arr.ndim != 3 or arr.shape[2] != 2:
        raise ValueError("expected a nested [re, im] matrix encoding")
    return arr[..., 0] + 1j * arr[..., 1]


def identity_setup(n_t: int, n_r: int, sigma2: float) -> ObservationSetup:
    """Full observation: identity pilots and combiners (n_s = n_t, n_c = n_r)."""
    return ObservationSetup(np.eye(n_t), np.eye(n_r), sigma2)


def orthogonal_pilots(n_t: int, n_s: int, alpha: float = 1.0,
                      basis: str = "identity") -> np.ndarray:
    """Training matrix with mutually orthogonal, equal-power pilot columns.

    Columns are alpha times the first n_s columns of a unitary basis, so
    X^H X = alpha^2 * Id. n_s may not exceed n_t (orthogonality would be
    impossible).
    """
    if n_s > n_t:
        raise ValueError(f"cannot fit {n_s} orthogonal pilots in dimension {n_t}")
    if n_s < 1 or alpha <= 0:
        raise ValueError("need n_s >= 1 and alpha > 0")
    if basis == "identity":
        U = np.eye(n_t, dtype=complex)
    elif basis == "dft":
        U = np.fft.fft(np.eye(n_t)) / math.sqrt(n_t)
    else:
        raise ValueError("basis must be 'identity' or 'dft'")
    return alpha * U[:, :n_s]


def observe(H, s: ObservationSetup, seed) -> ObservationData:
    """Send the pilots through H and combine, adding seeded white noise.

    The noise matrix has i.i.d. complex Gaussian entries of variance sigma2
    (independent real/imaginary parts of variance sigma2/2 each); the same
    seed always reproduces the same draw.
    """
    Hm = H.matrix if isinstance(H, ChannelMatrix) else np.asarray(H, dtype=complex)
    if Hm.shape != (s.n_r, s.n_t):
        raise ValueError(f"channel shape {Hm.shape} does not match setup "
                         f"({s.n_r}, {s.n_t})")
    Wh = s.W.conj().T
    signal = Wh @ Hm @ s.X
    if s.sigma2 == 0.0:
        return ObservationData(signal)
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    scale = math.sqrt(s.sigma2 / 2.0)
    N = scale * (rng.standard_normal((s.n_r, s.n_s))
                 + 1j * rng.standard_normal((s.n_r, s.n_s)))
    return ObservationData(signal + Wh @ N)


def projection_apply(s: ObservationSetup, M: np.ndarray) -> np.ndarray:
    """Apply the observation projection to columns of M (length n_r*n_t).

    Works factor-by-factor, never materializing the n_r*n_t square matrix:
    each column is reshaped to n_r x n_t, hit with the combiner-range
    projector on the left and with X X^H / alpha2 on the right.
    """
    M = np.asarray(M, dtype=complex)
    single = M.ndim == 1
    cols = M[:, None] if single else M
    n_r, n_t = s.n_r, s.n_t
    if cols.shape[0] != n_r * n_t:
        raise ValueError("column length must be n_r * n_t")
    G_w = s.combiner_range_projector()
    M_t = (s.X @ s.X.conj().T) / s.alpha2
    stack = cols.reshape((n_r, n_t, cols.shape[1]), order="F")
    out = np.einsum("ab,btk,tc->ack", G_w, stack, M_t, optimize=True)
    out = out.reshape((n_r * n_t, cols.shape[1]), order="F")
    return out[:, 0] if single else out


def projection_matrix(s: ObservationSetup, max_dense: int = DENSE_PROJECTION_LIMIT) -> np.ndarray:
    """Dense observation projection (X^* X^T) kron (combiner projector) / alpha2.

    Only a true orthogonal projection when the pilots are orthogonal; a
    warning is emitted (and the matrix still returned) otherwise. Refuses to
    materialize beyond max_dense rows; use projection_apply there.
    """
    dim = s.n_r * s.n_t
    if dim > max_dense:
        raise ValueError(f"dense projection of size {dim} exceeds limit {max_dense}; "
                         "use projection_apply")
    if not s.has_orthogonal_pilots:
        warnings.warn("pilots are not orthogonal: the returned matrix is not a projection",
                      stacklevel=2)
    return np.kron(s.X.conj() @ s.X.T, s.combiner_range_projector()) / s.alpha2


def snr(s: ObservationSetup, h) -> float:
    """Linear signal-to-noise ratio alpha2 * ||h||^2 / sigma2."""
    if s.sigma2 <= 0:
        raise ValueError("SNR is undefined for a noiseless setup")
    h = np.asarray(h)
    energy = float(np.vdot(h, h).real)
    if energy == 0.0:
        raise ValueError("zero channel has no SNR")
    return s.alpha2 * energy / s.sigma2


def noise_for_snr(target_snr: float, alpha2: float, h) -> float:
    """Noise variance that realizes the target linear SNR for channel h."""
    if target_snr <= 0:
        raise ValueError("target SNR must be positive")
    h = np.asarray(h)
    energy = float(np.vdot(h, h).real)
    if energy == 0.0:
        raise ValueError("zero channel has no SNR")
    return alpha2 * energy / target_snr


def _direction_span(g: ArrayGeometry, directions) -> np.ndarray:
    vecs = []
    for d in directions:
        vecs.append(steering_vector(g, d))
        vecs.append(steering_derivative(g, d, "azimuth"))
        vecs.append(steering_derivative(g, d, "elevation"))
    return np.column_stack(vecs)


def span_pilots(ps: PathSet, g_t: ArrayGeometry, alpha: float = 1.0) -> np.ndarray:
    """Orthogonal pilots whose range spans every transmit steering vector
    and its two direction derivatives, the transmit-side condition for the
    observation to be lossless for these paths."""
    Q = orth(_direction_span(g_t, (p.dod for p in ps)))
    return alpha * Q


def span_combiners(ps: PathSet, g_r: ArrayGeometry) -> np.ndarray:
    """Combiners spanning every receive steering vector and its derivatives,
    the receive-side counterpart of span_pilots."""
    return orth(_direction_span(g_r, (p.doa for p in ps)))
