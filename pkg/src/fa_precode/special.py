"""Fast paths for structured channels.

* Kronecker (rank-one coupling, no Rice component): two scalars
  ``gamma0 = lambda_r^T gamma`` and ``psi0 = lambda_t^T psi`` replace the
  vector fixed point and ``Xi = gamma0 * A_T``.
* Deterministic (``K = inf``): the MI of ``H_bar x + n`` is exact.
* Massive MIMO (ray statistics on the virtual-angle grid): the fixed point
  runs on diagonal matrices in the beam domain with ``U_B = U_T``.

Dispatch is explicit; nothing here is selected automatically.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .channel import ChannelStatistics
from .constellation import DEFAULT_ENUMERATION_CAP, Constellation
from .deteq import (AsymptoticMI, ConvergenceError, FixedPointOptions, _Mixer,
                    aligned_basis)
from .metrics import (LOG2E, NoiseExpectation, finite_alphabet_metrics,
                      group_metrics)
from .structure import Precoder, assemble_precoder

__all__ = [
    "KroneckerState",
    "MassiveState",
    "kronecker_fixed_point",
    "kronecker_asymptotic_mi",
    "deterministic_mi",
    "massive_fixed_point",
    "massive_asymptotic_mi",
    "sparse_los",
]

log = logging.getLogger(__name__)


def _check_aligned(precoder):
    if not isinstance(precoder, Precoder):
        raise TypeError("structured fast paths need a Precoder")
    if precoder.U_B is not None:
        raise ValueError("structured fast paths choose U_B themselves; pass an aligned precoder")


def _groups_eq(xi_sorted, precoder: Precoder, c, ne, cap):
    part = precoder.partition
    n_t = part.n_t
    Om = np.zeros((n_t, n_t), dtype=complex)
    groups = []
    for s in range(part.S):
        idx = part.group_indices(s)
        gm = group_metrics(xi_sorted[idx], precoder.lam[s], precoder.V[s], c, ne, cap)
        groups.append(gm)
        Om[np.ix_(idx, idx)] = gm.Omega_s
    return Om, tuple(groups)


def _finish(converged, res, opts, what, state):
    if not converged:
        msg = f"{what} fixed point not converged (residual {res:.3e})"
        if opts.raise_on_failure:
            raise ConvergenceError(msg, state)
        log.warning(msg)
    return state


@dataclass(frozen=True)
class KroneckerState:
    gamma0: float
    psi0: float
    A_T: np.ndarray = field(repr=False)
    A_R: np.ndarray | None = field(repr=False)
    lambda_r: np.ndarray = field(repr=False)
    lambda_t: np.ndarray = field(repr=False)
    U_B: np.ndarray = field(repr=False)
    groups: tuple = field(repr=False)
    residual: float = 0.0
    iterations: int = 0
    converged: bool = True


def kronecker_fixed_point(lambda_r, lambda_t, U_T, precoder: Precoder,
                          c: Constellation, ne: NoiseExpectation | None = None,
                          opts: FixedPointOptions | None = None, U_R=None,
                          cap: int = DEFAULT_ENUMERATION_CAP):
    """Scalar fixed point for Kronecker statistics.

    Iterates ``gamma0 = sum(lambda_r / (1 + psi0 lambda_r))`` and
    ``psi0 = tr(Omega A_T)``; the optimal left factor is ``U_T`` with
    columns in descending ``lambda_t`` order.

    Returns
    -------
    (KroneckerState, Xi)
    """
    _check_aligned(precoder)
    opts = opts or FixedPointOptions()
    ne = ne or NoiseExpectation()
    lam_r = np.asarray(lambda_r, dtype=float)
    lam_t = np.asarray(lambda_t, dtype=float)
    U_T = np.asarray(U_T, dtype=complex)
    order = np.argsort(-lam_t, kind="stable")
    lam_sorted = lam_t[order]
    U_B = U_T[:, order]

    g0, p0 = float(lam_r.sum()), 0.0
    res, it, groups = np.inf, 0, ()
    mix = _Mixer(opts)
    for it in range(1, opts.max_iter + 1):
        Om_eq, groups = _groups_eq(g0 * lam_sorted, precoder, c, ne, cap)
        g_new = float(np.sum(lam_r / (1.0 + p0 * lam_r)))
        p_new = float(np.real(np.sum(lam_sorted * np.diag(Om_eq))))
        res = abs(g_new - g0) + abs(p_new - p0)
        if res <= opts.tol:
            break
        g, p = mix(np.array([g0]), np.array([p0]), np.array([g_new]), np.array([p_new]), res)
        g0, p0 = float(g[0]), float(p[0])

    A_T = (U_T * lam_t) @ U_T.conj().T
    A_R = None if U_R is None else (np.asarray(U_R) * lam_r) @ np.asarray(U_R).conj().T
    st = KroneckerState(g0, p0, A_T, A_R, lam_r, lam_t, U_B, groups, res, it,
                        res <= opts.tol)
    _finish(st.converged, res, opts, "Kronecker", st)
    return st, g0 * A_T


def kronecker_asymptotic_mi(st: KroneckerState) -> AsymptoticMI:
    group_bits = tuple(g.mi_bits for g in st.groups)
    logdet = float(np.sum(np.log1p(st.psi0 * st.lambda_r)))
    corr = (logdet - st.gamma0 * st.psi0) * LOG2E
    return AsymptoticMI(float(sum(group_bits) + corr), group_bits, corr)


def deterministic_mi(H_bar, precoder, c: Constellation,
                     ne: NoiseExpectation | None = None,
                     cap: int = DEFAULT_ENUMERATION_CAP) -> float:
    """Exact MI of ``H_bar B d + n`` in bits.

    An aligned precoder (``U_B is None``) is placed on the eigenbasis of
    ``H_bar^H H_bar`` and evaluated group by group; anything else is
    evaluated by full enumeration.
    """
    H_bar = np.atleast_2d(np.asarray(H_bar, dtype=complex))
    if isinstance(precoder, Precoder) and precoder.U_B is None:
        xi, _ = aligned_basis(H_bar.conj().T @ H_bar, np.eye(H_bar.shape[1]))
        return float(sum(g.mi_bits for g in _groups_eq(xi, precoder, c, ne, cap)[1]))
    B = assemble_precoder(precoder) if isinstance(precoder, Precoder) else np.asarray(precoder)
    return finite_alphabet_metrics(H_bar @ B, c, ne, cap, want_mmse=False)[0]


def sparse_los(s: ChannelStatistics, tol: float = 1e-9) -> list:
    """Nonzero entries ``(n, m, value)`` of ``U_R^H H_bar U_T``."""
    H_hat = s.U_R.conj().T @ s.H_bar @ s.U_T
    scale = np.max(np.abs(H_hat), initial=0.0)
    if scale == 0:
        return []
    nz = np.argwhere(np.abs(H_hat) > tol * scale)
    return [(int(n), int(m), complex(H_hat[n, m])) for n, m in nz]


@dataclass(frozen=True)
class MassiveState:
    """Beam-domain fixed point; ``T_phy`` and ``R_phy`` are stored as diagonals."""

    gamma_phy: np.ndarray
    psi_phy: np.ndarray
    T_phy: np.ndarray
    R_phy: np.ndarray
    Xi_phy: np.ndarray = field(repr=False)
    Omega_phy: np.ndarray = field(repr=False)
    order: np.ndarray = field(repr=False)
    H_hat: tuple = field(repr=False)
    groups: tuple = field(repr=False)
    residual: float = 0.0
    iterations: int = 0
    converged: bool = True

    def U_B(self, U_T) -> np.ndarray:
        return np.asarray(U_T)[:, self.order]


def massive_fixed_point(s: ChannelStatistics, precoder: Precoder, c: Constellation,
                        ne: NoiseExpectation | None = None,
                        opts: FixedPointOptions | None = None,
                        cap: int = DEFAULT_ENUMERATION_CAP) -> MassiveState:
    """Diagonal fixed point for ray-model statistics.

    Requires the Rice component to occupy distinct rows and columns of the
    beam-domain grid (one LOS bin), which keeps ``Xi_phy`` diagonal.
    """
    _check_aligned(precoder)
    opts = opts or FixedPointOptions()
    ne = ne or NoiseExpectation()
    G = s.G
    H_hat = sparse_los(s)
    rows = [n for n, _, _ in H_hat]
    cols = [m for _, m, _ in H_hat]
    if len(set(rows)) != len(rows) or len(set(cols)) != len(cols):
        raise ValueError("massive path needs LOS entries in distinct beam rows and columns")

    gamma = np.ones(s.n_r)
    psi = np.zeros(s.n_t)
    res, it = np.inf, 0
    mix = _Mixer(opts)
    for it in range(1, opts.max_iter + 1):
        t = G.T @ gamma
        r = G @ psi
        a = 1.0 / (1.0 + r)
        xi = t.copy()
        for n, m, h in H_hat:
            xi[m] += a[n] * abs(h) ** 2
        order = np.argsort(-xi, kind="stable")
        Om_eq, groups = _groups_eq(xi[order], precoder, c, ne, cap)
        Om = np.zeros_like(Om_eq)
        Om[np.ix_(order, order)] = Om_eq
        psi_new = np.clip(np.real(np.diag(Om)), 0.0, None)
        gamma_new = a.copy()
        for n, m, h in H_hat:
            gamma_new[n] = a[n] - a[n] ** 2 * abs(h) ** 2 * np.real(Om[m, m])
        res = float(np.max(np.abs(gamma_new - gamma)) + np.max(np.abs(psi_new - psi)))
        if res <= opts.tol:
            break
        gamma, psi = mix(gamma, psi, gamma_new, psi_new, res)

    st = MassiveState(gamma, psi, t, r, np.diag(xi), Om, order, tuple(H_hat),
                      groups, res, it, res <= opts.tol)
    return _finish(st.converged, res, opts, "massive-MIMO", st)


def massive_asymptotic_mi(st: MassiveState, s: ChannelStatistics) -> AsymptoticMI:
    group_bits = tuple(g.mi_bits for g in st.groups)
    G = s.G
    logdet = float(np.sum(np.log1p(G @ st.psi_phy)))
    corr = (logdet - float(st.gamma_phy @ G @ st.psi_phy)) * LOG2E
    return AsymptoticMI(float(sum(group_bits) + corr), group_bits, corr)
