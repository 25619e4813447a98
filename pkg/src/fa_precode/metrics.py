"""Finite-alphabet mutual information and MMSE evaluation.

Everything here reduces to one kernel: for an effective channel ``A`` and
all ``Q = M**n`` symbol vectors, average over the Gaussian noise of the
log-sum-exp of pairwise likelihood exponents. The posterior weights of the
same pass give the conditional-mean estimate and its error covariance.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache

import numba
import numpy as np
from scipy.special import logsumexp

from .channel import ChannelStatistics, sample_realizations
from .constellation import (DEFAULT_ENUMERATION_CAP, Constellation,
                            group_vector_matrix)

__all__ = [
    "NoiseExpectation",
    "GroupMetrics",
    "ErgodicMI",
    "finite_alphabet_metrics",
    "group_metrics",
    "group_mutual_information",
    "group_error_covariance",
    "assemble_omega",
    "exact_ergodic_mi",
    "LOG2E",
]

LOG2E = math.log2(math.e)


@dataclass(frozen=True)
class NoiseExpectation:
    """How the expectation over standard complex Gaussian noise is taken.

    Parameters
    ----------
    method : {"auto", "gauss-hermite", "monte-carlo"}
        ``"auto"`` uses a tensor Gauss-Hermite rule when the grid fits under
        ``grid_cap_log2`` and Monte Carlo otherwise.
    order : int, optional
        Gauss-Hermite nodes per real dimension. Defaults to 64 for up to
        two real dimensions and 16 above that.
    samples : int
        Monte Carlo sample count (common random numbers across calls).
    seed : int
        Seed of the Monte Carlo noise draw.
    prune : float
        Tensor-grid nodes with product weight below this are dropped.
    grid_cap_log2 : float
        Largest tensor grid, as ``log2`` of its node count before pruning.

    Notes
    -----
    Dimensions are counted in real noise components: ``2 r`` for a rank-``r``
    complex channel, or ``r`` when the alphabet is real and only the real
    part of the noise matters.
    """

    method: str = "auto"
    order: int | None = None
    samples: int = 1000
    seed: int = 0
    prune: float = 1e-10
    grid_cap_log2: float = 16.0

    def __post_init__(self):
        if self.method not in ("auto", "gauss-hermite", "monte-carlo"):
            raise ValueError(f"unknown noise expectation method {self.method!r}")
        if self.samples < 100:
            raise ValueError("Monte Carlo noise expectation needs >= 100 samples")
        if self.order is not None and self.order < 1:
            raise ValueError("Gauss-Hermite order must be >= 1")

    def order_for(self, real_dims: int) -> int:
        if self.order is not None:
            return self.order
        return 64 if real_dims <= 2 else 16

    def grid_fits(self, real_dims: int) -> bool:
        order = max(self.order_for(real_dims), 2)
        return real_dims * math.log2(order) <= self.grid_cap_log2

    def uses_quadrature(self, real_dims: int) -> bool:
        if self.method == "gauss-hermite":
            if not self.grid_fits(real_dims):
                raise ValueError(
                    f"Gauss-Hermite order {self.order_for(real_dims)} in {real_dims} real "
                    f"dimensions exceeds the tensor-grid cap 2**{self.grid_cap_log2:g}")
            return True
        if self.method == "monte-carlo":
            return False
        return self.grid_fits(real_dims)

    def nodes(self, dim: int, real: bool = False) -> tuple[np.ndarray, np.ndarray]:
        """Noise nodes ``(J, dim)`` and weights ``(J,)`` summing to one.

        Complex nodes are standard circular Gaussian; with ``real`` they are
        real with variance 1/2 (the real part of such noise).
        """
        rd = dim if real else 2 * dim
        if self.uses_quadrature(rd):
            pts, w = _gh_nodes(rd, self.order_for(rd), self.prune)
        else:
            pts, w = _mc_nodes(rd, self.samples, self.seed)
        if real:
            return pts, w
        Z = pts[:, :dim] + 1j * pts[:, dim:]
        Z.setflags(write=False)
        return Z, w


@lru_cache(maxsize=32)
def _gh_nodes(real_dims: int, order: int, prune: float):
    """Pruned tensor Gauss-Hermite rule for ``N(0, I/2)`` in ``real_dims``."""
    x, w = np.polynomial.hermite.hermgauss(order)
    w = w / np.sqrt(np.pi)
    grids = np.meshgrid(*([x] * real_dims), indexing="ij")
    pts = np.stack([g.ravel() for g in grids], axis=1)
    wts = np.ones(pts.shape[0])
    for g in np.meshgrid(*([w] * real_dims), indexing="ij"):
        wts = wts * g.ravel()
    keep = wts >= prune
    pts, wts = pts[keep], wts[keep] / wts[keep].sum()
    pts.setflags(write=False)
    wts.setflags(write=False)
    return pts, wts


@lru_cache(maxsize=32)
def _mc_nodes(real_dims: int, samples: int, seed: int):
    rng = np.random.default_rng([seed, real_dims])
    pts = rng.standard_normal((samples, real_dims)) / np.sqrt(2)
    pts.setflags(write=False)
    w = np.full(samples, 1.0 / samples)
    w.setflags(write=False)
    return pts, w


@dataclass(frozen=True)
class GroupMetrics:
    mi_bits: float
    E_s: np.ndarray = field(repr=False)
    Omega_s: np.ndarray = field(repr=False)
    std_err: float = 0.0


@dataclass(frozen=True)
class ErgodicMI:
    mi_bits: float
    std_err: float


def _canonical(A: np.ndarray, real: bool = False, rank_tol: float = 1e-12) -> np.ndarray:
    """Factor ``C`` with ``C^H C = A^H A`` and as few rows as the rank.

    MI and MMSE depend on ``A`` only through its Gram matrix, so this
    choice makes the result independent of any output rotation. For a
    real alphabet only ``Re(A^H A)`` matters and ``C`` is real.
    """
    gram = A.conj().T @ A
    gram = 0.5 * (gram + gram.conj().T)
    if real:
        gram = gram.real
    mu, Q = np.linalg.eigh(gram)
    top = mu[-1] if mu.size else 0.0
    if top <= 0:
        return np.zeros((0, A.shape[1]), dtype=complex)
    keep = mu > rank_tol * top
    if keep.all():
        return (Q * np.sqrt(mu)) @ Q.conj().T
    Q, mu = Q[:, keep], mu[keep]
    # deterministic phase: largest-magnitude entry of each column real positive
    j = np.argmax(np.abs(Q), axis=0)
    ph = Q[j, np.arange(Q.shape[1])]
    Q = Q * (np.abs(ph) / ph)
    return np.sqrt(mu)[:, None] * Q.conj().T


# Below this shifted self-exponent the batched sum may underflow; such
# (hypothesis, node) pairs are redone one at a time.
_UNDERFLOW = -600.0
_CHUNK = 1 << 20


@numba.njit(cache=True)
def _lse_pairs(dist, P, D, ms, js):
    """Exact log-sum-exp and conditional means for selected (m, j) pairs."""
    Q = P.shape[0]
    n = D.shape[0]
    out = np.empty(ms.size)
    dhat = np.empty((n, ms.size), dtype=np.complex128)
    e = np.empty(Q)
    for i in range(ms.size):
        m, j = ms[i], js[i]
        mx = -np.inf
        for k in range(Q):
            v = -dist[m, k] - 2.0 * (P[m, j] - P[k, j])
            e[k] = v
            if v > mx:
                mx = v
        tot = 0.0
        for k in range(Q):
            e[k] = np.exp(e[k] - mx)
            tot += e[k]
        out[i] = mx + np.log(tot)
        for a in range(n):
            acc = 0.0j
            for k in range(Q):
                acc += e[k] * D[a, k]
            dhat[a, i] = acc / tot
    return out, dhat


def _lse_block(dist, Ed, EdD, P, D, want_mmse):
    """Per-node sums of log-sum-exp terms and estimation errors.

    Uses ``sum_k exp(-dist[m,k] + 2 P[k,j])`` as a matrix product with a
    per-node shift; pairs whose own term would underflow fall back to
    :func:`_lse_pairs`. Errors come back as real and imaginary parts,
    each shaped ``(n, Q, J)``.
    """
    n, Q = D.shape
    P2 = 2.0 * P
    shift = P2.max(axis=0)
    EK = np.exp(P2 - shift)
    S = Ed @ EK
    bad = (P2 - shift) < _UNDERFLOW
    with np.errstate(divide="ignore", over="ignore", invalid="ignore"):
        lse = np.log(S) + shift - P2
        if want_mmse:
            num = (EdD @ EK).reshape(2, n, Q, -1) * (1.0 / S)
    if bad.any():
        ms, js = np.nonzero(bad)
        val, dh = _lse_pairs(dist, P, D, ms.astype(np.int64), js.astype(np.int64))
        lse[ms, js] = val
        if want_mmse:
            num[0][:, ms, js] = dh.real
            num[1][:, ms, js] = dh.imag
    per_node = lse.sum(axis=0)
    if not want_mmse:
        return per_node, None
    num[0] = D.real[:, :, None] - num[0]
    num[1] = D.imag[:, :, None] - num[1]
    return per_node, num


def finite_alphabet_metrics(A, c: Constellation, ne: NoiseExpectation | None = None,
                            cap: int = DEFAULT_ENUMERATION_CAP,
                            want_mmse: bool = True):
    """MI and MMSE of ``y = A d + n`` for IID equiprobable ``d`` from ``c``.

    Parameters
    ----------
    A : array_like, shape (r, n)
        Effective channel.
    c : Constellation
    ne : NoiseExpectation, optional
    cap : int
        Enumeration cap on ``M**n``.
    want_mmse : bool
        Skip the error covariance when False.

    Returns
    -------
    mi_bits : float
    E : ndarray, shape (n, n) or None
        Error covariance of the conditional-mean estimate of ``d``.
    std_err : float
        Monte Carlo standard error of ``mi_bits``; 0 under quadrature.
    """
    ne = ne or NoiseExpectation()
    A = np.atleast_2d(np.asarray(A, dtype=complex))
    n = A.shape[1]
    D = group_vector_matrix(c, n, cap)
    Q = D.shape[1]
    real = c.is_real
    C = _canonical(A, real)
    r = C.shape[0]
    if r == 0:
        return 0.0, (np.eye(n, dtype=complex) if want_mmse else None), 0.0

    Z, w = ne.nodes(r, real)
    X = C @ (D.real if real else D)                                                 # (r, Q)
    dist = np.sum(np.abs(X[:, :, None] - X[:, None, :]) ** 2, axis=0)
    P = (X.conj().T @ Z.T).real                                # (Q, J)

    J = Z.shape[0]
    Ed = np.exp(-dist)
    EdD = None
    if want_mmse:
        # real and imaginary parts of exp(-dist) * d_k stacked for one product
        EdD = np.concatenate([Ed[None] * D.real[:, None, :],
                              Ed[None] * D.imag[:, None, :]]).reshape(2 * n * Q, Q)
    per_node = np.empty(J)
    E = np.zeros((n, n), dtype=complex)
    step = max(1, _CHUNK // Q)
    for j0 in range(0, J, step):
        sl = slice(j0, j0 + step)
        pn, err = _lse_block(dist, Ed, EdD, P[:, sl], D, want_mmse)
        per_node[sl] = pn
        if want_mmse:
            er = err[0].reshape(n, -1)
            ei = err[1].reshape(n, -1)
            wr = (err[0] * w[sl]).reshape(n, -1)
            wi = (err[1] * w[sl]).reshape(n, -1)
            E += (wr @ er.T + wi @ ei.T) + 1j * (wi @ er.T - wr @ ei.T)
    per_node /= Q
    mi_nats = math.log(Q) - float(w @ per_node)
    mi_bits = max(mi_nats * LOG2E, 0.0)
    if ne.uses_quadrature(r if real else 2 * r):
        se = 0.0
    else:
        se = float(np.std(per_node, ddof=1) / np.sqrt(J)) * LOG2E
    if want_mmse:
        E = E / Q
        E = 0.5 * (E + E.conj().T)
    return mi_bits, E, se


def _group_channel(xi, lam, V) -> np.ndarray:
    xi = np.clip(np.asarray(xi, dtype=float).ravel(), 0.0, None)
    lam = np.asarray(lam, dtype=float).ravel()
    V = np.atleast_2d(np.asarray(V, dtype=complex))
    return (np.sqrt(xi) * lam)[:, None] * V


def group_metrics(xi, lam, V, c: Constellation, ne: NoiseExpectation | None = None,
                  cap: int = DEFAULT_ENUMERATION_CAP) -> GroupMetrics:
    """Metrics of one group ``z_s = Xi_s^{1/2} Lambda_s V_s d_s + n``.

    ``xi`` and ``lam`` are the diagonals of ``Xi_s`` and ``Lambda_s``.
    """
    A = _group_channel(xi, lam, V)
    mi, E, se = finite_alphabet_metrics(A, c, ne, cap)
    LV = np.asarray(lam, dtype=float).ravel()[:, None] * np.atleast_2d(V)
    Omega = LV @ E @ LV.conj().T
    return GroupMetrics(mi, E, 0.5 * (Omega + Omega.conj().T), se)


def group_mutual_information(xi, lam, V, c: Constellation,
                             ne: NoiseExpectation | None = None,
                             cap: int = DEFAULT_ENUMERATION_CAP) -> float:
    A = _group_channel(xi, lam, V)
    return finite_alphabet_metrics(A, c, ne, cap, want_mmse=False)[0]


def group_error_covariance(xi, lam, V, c: Constellation,
                           ne: NoiseExpectation | None = None,
                           cap: int = DEFAULT_ENUMERATION_CAP) -> np.ndarray:
    A = _group_channel(xi, lam, V)
    return finite_alphabet_metrics(A, c, ne, cap)[1]


def assemble_omega(partition, groups, U_Xi) -> np.ndarray:
    """Place per-group MMSE blocks by the stream partition and rotate.

    Returns ``U_Xi @ Omega_eq @ U_Xi^H`` where ``Omega_eq`` holds group
    ``s``'s block on indices ``partition.group_indices(s)`` and zeros
    elsewhere.
    """
    omegas = [g.Omega_s if isinstance(g, GroupMetrics) else np.asarray(g)
              for g in groups]
    if len(omegas) != partition.S:
        raise ValueError(f"expected {partition.S} groups, got {len(omegas)}")
    n_t = partition.n_t
    Om = np.zeros((n_t, n_t), dtype=complex)
    for s, blk in enumerate(omegas):
        idx = partition.group_indices(s)
        if blk.shape != (idx.size, idx.size):
            raise ValueError("group block size does not match the partition")
        Om[np.ix_(idx, idx)] = blk
    U = np.asarray(U_Xi, dtype=complex)
    return U @ Om @ U.conj().T


def exact_ergodic_mi(s: ChannelStatistics, B, c: Constellation,
                     channel_samples: int = 1000,
                     ne: NoiseExpectation | None = None, seed=0,
                     cap: int = DEFAULT_ENUMERATION_CAP) -> ErgodicMI:
    """Monte Carlo estimate of the ergodic MI of ``y = H B d + n``.

    For each channel draw, ``ne.samples`` noise vectors are paired with
    symbol vectors cycled through all ``M**N_t`` hypotheses in random order;
    the per-draw estimates are averaged and their spread gives ``std_err``.
    Deterministic statistics (``K = inf``) are evaluated once on ``H_bar``
    with full symbol enumeration.
    """
    ne = ne or NoiseExpectation()
    B = np.asarray(B, dtype=complex)
    if not np.any(B):
        return ErgodicMI(0.0, 0.0)
    if s.deterministic:
        mi, _, se = finite_alphabet_metrics(s.H_bar @ B, c, ne, cap, want_mmse=False)
        return ErgodicMI(mi, se)
    n_t = B.shape[1]
    D = group_vector_matrix(c, n_t, cap)
    Q = D.shape[1]
    rng = np.random.default_rng(seed)
    Hs = sample_realizations(s, channel_samples, rng)
    J = ne.samples
    est = np.empty(channel_samples)
    for i, H in enumerate(Hs):
        X = (H @ B) @ D                                        # (N_r, Q)
        m = rng.permutation(np.arange(J) % Q)
        N = (rng.standard_normal((J, s.n_r))
             + 1j * rng.standard_normal((J, s.n_r))) / np.sqrt(2)
        Y = X[:, m].T + N                                      # (J, N_r)
        d2 = (np.sum(np.abs(Y) ** 2, axis=1)[:, None]
              + np.sum(np.abs(X) ** 2, axis=0)[None, :]
              - 2.0 * (Y.conj() @ X).real)
        e = -d2 + np.sum(np.abs(N) ** 2, axis=1)[:, None]
        est[i] = math.log(Q) - float(np.mean(logsumexp(e, axis=1)))
    est *= LOG2E
    se = float(np.std(est, ddof=1) / np.sqrt(channel_samples)) if channel_samples > 1 else 0.0
    return ErgodicMI(float(np.mean(est)), se)
