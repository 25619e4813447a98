"""Statistical CSI for jointly correlated Rician MIMO channels.

The channel is ``H = U_R (G_tilde * W) U_T^H + H_bar`` with ``W`` IID
standard complex Gaussian. Statistics are normalized at construction so
that the scattered part carries ``N_r N_t / (K + 1)`` of the average power
and the Rice component ``N_r N_t K / (K + 1)``.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

__all__ = [
    "ChannelStatistics",
    "CorrelationPair",
    "new_statistics",
    "sample_realization",
    "sample_realizations",
    "correlation_matrices",
    "kronecker_statistics",
    "kronecker_factors",
    "ray_statistics",
    "steering_vector",
    "virtual_grid",
    "random_unitary",
    "random_statistics",
    "statistics_to_dict",
    "statistics_from_dict",
    "complex_to_list",
    "complex_from_list",
    "dumps",
]

_UNITARY_TOL = 1e-10


def _frozen(a, dtype) -> np.ndarray:
    a = np.array(a, dtype=dtype)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class ChannelStatistics:
    """Normalized statistical CSI ``(U_R, U_T, G_tilde, H_bar, K)``.

    Build through :func:`new_statistics`, which enforces the power
    normalization; the raw constructor assumes it already holds.
    ``K = math.inf`` flags a deterministic channel.
    """

    U_R: np.ndarray = field(repr=False)
    U_T: np.ndarray = field(repr=False)
    G_tilde: np.ndarray = field(repr=False)
    H_bar: np.ndarray = field(repr=False)
    K: float

    def __post_init__(self):
        object.__setattr__(self, "U_R", _frozen(self.U_R, complex))
        object.__setattr__(self, "U_T", _frozen(self.U_T, complex))
        object.__setattr__(self, "G_tilde", _frozen(self.G_tilde, float))
        object.__setattr__(self, "H_bar", _frozen(self.H_bar, complex))

    @property
    def n_r(self) -> int:
        return self.U_R.shape[0]

    @property
    def n_t(self) -> int:
        return self.U_T.shape[0]

    @property
    def G(self) -> np.ndarray:
        """Power coupling matrix ``G_tilde * G_tilde``."""
        return self.G_tilde * self.G_tilde

    @property
    def deterministic(self) -> bool:
        return math.isinf(self.K)


@dataclass(frozen=True)
class CorrelationPair:
    R_t: np.ndarray
    R_r: np.ndarray
    Gamma_T: np.ndarray
    Gamma_R: np.ndarray


def _check_unitary(U: np.ndarray, name: str) -> None:
    if U.ndim != 2 or U.shape[0] != U.shape[1]:
        raise ValueError(f"{name} must be square, got shape {U.shape}")
    err = np.linalg.norm(U.conj().T @ U - np.eye(U.shape[0]))
    if err > _UNITARY_TOL * max(1, U.shape[0]):
        raise ValueError(f"{name} is not unitary (||U^H U - I||_F = {err:.3e})")


def new_statistics(U_R, U_T, G_tilde, H_bar, K: float) -> ChannelStatistics:
    """Validate and normalize statistical CSI.

    ``G_tilde`` is rescaled so that ``sum(G) = N_r N_t / (K + 1)`` and
    ``H_bar`` so that ``||H_bar||_F^2 = N_r N_t K / (K + 1)``. ``K = 0``
    zeroes the Rice component; ``K = inf`` zeroes the scattered part.

    Raises
    ------
    ValueError
        On shape mismatch, non-unitary bases, negative entries, or a zero
        component that the Rice factor requires to carry power.
    """
    U_R = np.asarray(U_R, dtype=complex)
    U_T = np.asarray(U_T, dtype=complex)
    G_tilde = np.asarray(G_tilde, dtype=float)
    H_bar = np.asarray(H_bar, dtype=complex)
    _check_unitary(U_R, "U_R")
    _check_unitary(U_T, "U_T")
    n_r, n_t = U_R.shape[0], U_T.shape[0]
    if G_tilde.shape != (n_r, n_t) or H_bar.shape != (n_r, n_t):
        raise ValueError(f"G_tilde and H_bar must have shape {(n_r, n_t)}")
    if np.any(G_tilde < 0):
        raise ValueError("G_tilde must be entrywise nonnegative")
    K = float(K)
    if not K >= 0:
        raise ValueError(f"Rice factor must be >= 0, got {K}")
    size = n_r * n_t

    if math.isinf(K):
        G_tilde = np.zeros_like(G_tilde)
    else:
        g_pow = np.sum(G_tilde**2)
        if g_pow == 0:
            raise ValueError("all-zero G_tilde requires K = inf")
        G_tilde = G_tilde * np.sqrt(size / (K + 1) / g_pow)

    if K == 0:
        H_bar = np.zeros_like(H_bar)
    else:
        h_pow = np.sum(np.abs(H_bar) ** 2)
        if h_pow == 0:
            raise ValueError("all-zero H_bar requires K = 0")
        target = size if math.isinf(K) else size * K / (K + 1)
        H_bar = H_bar * np.sqrt(target / h_pow)
    return ChannelStatistics(U_R, U_T, G_tilde, H_bar, K)


def _rng(seed) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


def _crandn(rng: np.random.Generator, *shape) -> np.ndarray:
    return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / np.sqrt(2)


def sample_realization(s: ChannelStatistics, seed) -> np.ndarray:
    """Draw one channel matrix; deterministic given ``seed``."""
    return sample_realizations(s, 1, seed)[0]


def sample_realizations(s: ChannelStatistics, count: int, seed) -> np.ndarray:
    """Draw ``count`` channel matrices, shape ``(count, N_r, N_t)``."""
    if s.deterministic:
        raise ValueError("K = inf statistics are deterministic; use H_bar directly")
    W = _crandn(_rng(seed), count, s.n_r, s.n_t)
    return s.U_R @ (s.G_tilde * W) @ s.U_T.conj().T + s.H_bar


def correlation_matrices(s: ChannelStatistics) -> CorrelationPair:
    G = s.G
    gamma_t = G.sum(axis=0)
    gamma_r = G.sum(axis=1)
    R_t = (s.U_T * gamma_t) @ s.U_T.conj().T
    R_r = (s.U_R * gamma_r) @ s.U_R.conj().T
    return CorrelationPair(R_t, R_r, np.diag(gamma_t), np.diag(gamma_r))


def kronecker_statistics(lambda_r, lambda_t, U_R, U_T) -> ChannelStatistics:
    """Rayleigh statistics with rank-one coupling ``G = lambda_r lambda_t^T``."""
    lambda_r = np.asarray(lambda_r, dtype=float)
    lambda_t = np.asarray(lambda_t, dtype=float)
    if np.any(lambda_r < 0) or np.any(lambda_t < 0):
        raise ValueError("correlation eigenvalues must be nonnegative")
    if not lambda_r.any() or not lambda_t.any():
        raise ValueError("correlation eigenvalue vectors must not be all zero")
    G_tilde = np.sqrt(np.outer(lambda_r, lambda_t))
    return new_statistics(U_R, U_T, G_tilde, np.zeros(G_tilde.shape), 0.0)


def exponential_correlation_eigs(n: int, rho: float) -> np.ndarray:
    """Eigenvalues of the exponential correlation matrix ``rho^|i-j|``."""
    idx = np.arange(n)
    return np.clip(np.linalg.eigvalsh(rho ** np.abs(idx[:, None] - idx[None, :])), 0, None)[::-1]


def kronecker_factors(s: ChannelStatistics) -> tuple[np.ndarray, np.ndarray]:
    """Split a rank-one ``G`` into ``(lambda_r, lambda_t)`` with equal scale.

    Raises if ``G`` is not rank one to working precision.
    """
    G = s.G
    u, sv, vt = np.linalg.svd(G)
    if sv.size > 1 and sv[1] > 1e-10 * sv[0]:
        raise ValueError("coupling matrix is not rank one")
    lam_r = np.abs(u[:, 0]) * np.sqrt(sv[0])
    lam_t = np.abs(vt[0]) * np.sqrt(sv[0])
    return lam_r, lam_t


def virtual_grid(n: int) -> np.ndarray:
    """Spatial frequencies ``sin(angle) / 2`` of the ``n``-point virtual grid."""
    return (np.arange(n) - n // 2) / n


def steering_vector(angle: float, n: int) -> np.ndarray:
    """Unit-norm half-wavelength ULA response at ``angle`` (radians)."""
    return np.exp(-1j * np.pi * np.arange(n) * np.sin(angle)) / np.sqrt(n)


def _grid_basis(n: int) -> np.ndarray:
    f = virtual_grid(n)
    return np.exp(-2j * np.pi * np.outer(np.arange(n), f)) / np.sqrt(n)


def _nearest_bin(angle: float, n: int) -> int:
    # circular nearest neighbour in spatial frequency
    f = np.sin(angle) / 2
    return int(np.round((f + 0.5) * n)) % n


def ray_statistics(paths: Sequence[dict], lambda_c: float, n_r: int, n_t: int,
                   los: bool = True) -> ChannelStatistics:
    """Statistics of a ray-based physical channel on the virtual-angle grid.

    Parameters
    ----------
    paths : sequence of dict
        Each with keys ``c`` (complex attenuation), ``d`` (path length),
        ``phi`` (angle of departure) and ``theta`` (angle of arrival).
    lambda_c : float
        Carrier wavelength, same unit as ``d``.
    los : bool
        Whether ``paths[0]`` is the line-of-sight path.

    Returns
    -------
    ChannelStatistics
        Fourier bases ``U_R``, ``U_T``; scattered power binned into ``G``;
        the LOS path placed in one bin of ``U_R^H H_bar U_T``.
    """
    if not paths:
        raise ValueError("ray model needs at least one path")
    U_T = _grid_basis(n_t)
    U_R = _grid_basis(n_r)
    G = np.zeros((n_r, n_t))
    H_hat = np.zeros((n_r, n_t), dtype=complex)
    scattered = paths[1:] if los else paths
    for p in scattered:
        G[_nearest_bin(p["theta"], n_r), _nearest_bin(p["phi"], n_t)] += abs(p["c"]) ** 2
    if los:
        p0 = paths[0]
        H_hat[_nearest_bin(p0["theta"], n_r), _nearest_bin(p0["phi"], n_t)] = (
            p0["c"] * np.exp(-2j * np.pi * p0["d"] / lambda_c))
    los_pow = float(np.sum(np.abs(H_hat) ** 2))
    sc_pow = float(G.sum())
    if sc_pow == 0 and los_pow == 0:
        raise ValueError("paths carry no power")
    K = math.inf if sc_pow == 0 else los_pow / sc_pow
    H_bar = U_R @ H_hat @ U_T.conj().T
    return new_statistics(U_R, U_T, np.sqrt(G), H_bar, K)


def random_unitary(n: int, seed) -> np.ndarray:
    """Haar-distributed unitary from the QR of a seeded complex Gaussian."""
    Z = _crandn(_rng(seed), n, n)
    Q, R = np.linalg.qr(Z)
    ph = np.diag(R) / np.abs(np.diag(R))
    return Q * ph


def random_statistics(n_r: int, n_t: int, K: float, seed) -> ChannelStatistics:
    """Random jointly correlated (Weichselberger-type) statistics.

    Haar bases, uniform coupling amplitudes and a Gaussian Rice component.
    """
    rng = _rng(seed)
    U_R = random_unitary(n_r, rng)
    U_T = random_unitary(n_t, rng)
    G_tilde = rng.uniform(0.0, 1.0, (n_r, n_t))
    H_bar = _crandn(rng, n_r, n_t)
    return new_statistics(U_R, U_T, G_tilde, H_bar, K)


def complex_to_list(a: np.ndarray) -> list:
    """Row-major flattening with real and imaginary parts interleaved."""
    a = np.asarray(a, dtype=complex).ravel()
    return np.column_stack([a.real, a.imag]).ravel().tolist()


def complex_from_list(values, shape) -> np.ndarray:
    v = np.asarray(values, dtype=float).reshape(-1, 2)
    return (v[:, 0] + 1j * v[:, 1]).reshape(shape)


def statistics_to_dict(s: ChannelStatistics) -> dict:
    return {
        "n_r": s.n_r,
        "n_t": s.n_t,
        "U_R": complex_to_list(s.U_R),
        "U_T": complex_to_list(s.U_T),
        "G_tilde": s.G_tilde.ravel().tolist(),
        "H_bar": complex_to_list(s.H_bar),
        "K": "inf" if s.deterministic else s.K,
    }


def statistics_from_dict(d: dict) -> ChannelStatistics:
    """Inverse of :func:`statistics_to_dict`; renormalizes on load."""
    n_r, n_t = int(d["n_r"]), int(d["n_t"])
    K = math.inf if d["K"] in ("inf", "Infinity", None) else float(d["K"])
    G_tilde = np.asarray(d["G_tilde"], dtype=float).reshape(n_r, n_t)
    return new_statistics(
        complex_from_list(d["U_R"], (n_r, n_r)),
        complex_from_list(d["U_T"], (n_t, n_t)),
        G_tilde,
        complex_from_list(d["H_bar"], (n_r, n_t)),
        K,
    )


def dumps(s: ChannelStatistics) -> str:
    return json.dumps(statistics_to_dict(s))
