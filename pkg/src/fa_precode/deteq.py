"""Deterministic-equivalent fixed point and asymptotic mutual information.

For statistics ``(U_R, U_T, G, H_bar)`` and a precoder, the auxiliary
vectors ``gamma`` (length ``N_r``) and ``psi`` (length ``N_t``) solve

    T     = U_T diag(G^T gamma) U_T^H
    R     = U_R diag(G psi) U_R^H
    Xi    = T + H_bar^H (I + R)^{-1} H_bar
    gamma = diag(U_R^H (I+R)^{-1} (I - H_bar Omega H_bar^H (I+R)^{-1}) U_R)
    psi   = diag(U_T^H Omega U_T)

where ``Omega`` is the MMSE matrix of ``x = B d`` observed through
``z = Xi^{1/2} x + n``. The asymptotic MI is then
``I(x; z) + log det(I + R) - gamma^T G psi`` (nats; reported in bits).

Two precoder modes are supported. A :class:`Precoder` whose ``U_B`` is
``None`` is taken aligned with the eigenbasis of ``Xi``, which decouples
the groups and keeps the cost at ``S M^{2 N_s}``. A plain matrix ``B`` (or
a precoder with ``U_B`` set) is evaluated by full enumeration over
``M^{N_t}`` hypotheses.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import linear_sum_assignment

from .channel import ChannelStatistics
from .constellation import DEFAULT_ENUMERATION_CAP, Constellation
from .metrics import (LOG2E, GroupMetrics, NoiseExpectation,
                      finite_alphabet_metrics, group_metrics)
from .structure import Precoder, assemble_precoder

__all__ = [
    "FixedPointOptions",
    "DetEquivState",
    "AsymptoticMI",
    "ConvergenceError",
    "solve_fixed_point",
    "fixed_point_map",
    "asymptotic_mi",
    "evaluate",
    "aligned_basis",
]

log = logging.getLogger(__name__)


class ConvergenceError(RuntimeError):
    """Fixed point did not reach tolerance; ``state`` holds the best iterate."""

    def __init__(self, msg, state=None):
        super().__init__(msg)
        self.state = state


@dataclass(frozen=True)
class FixedPointOptions:
    """Iteration controls.

    With ``adaptive`` the damping is halved, down to ``min_damping``,
    whenever the residual grows and grows back by half towards ``damping``
    after every step that reduced it; this makes an undamped start safe.
    ``anderson > 0`` mixes that many previous iterates (Anderson
    acceleration); the memory is cleared whenever the residual grows.
    If either is on and the best residual has not improved for
    ``patience`` iterations, the solve falls back to plain damping
    ``min(0.5, damping)`` from the best iterate.
    """

    tol: float = 1e-8
    max_iter: int = 200
    damping: float = 0.5
    raise_on_failure: bool = False
    adaptive: bool = False
    min_damping: float = 0.05
    anderson: int = 0
    patience: int = 25


@dataclass(frozen=True)
class DetEquivState:
    """Converged ``(gamma, psi)`` with the matrices built from them.

    ``xi_eig`` and ``U_Xi`` are the eigen-pairs of ``Xi`` used for aligned
    precoders. They are descending whenever a fixed point with that pairing
    exists, otherwise in the order tracked during the solve. ``groups``
    holds the per-group metrics at this ``Xi`` (a single entry for a
    full-enumeration precoder).
    """

    gamma: np.ndarray
    psi: np.ndarray
    T: np.ndarray = field(repr=False)
    R: np.ndarray = field(repr=False)
    Xi: np.ndarray = field(repr=False)
    Omega: np.ndarray = field(repr=False)
    U_Xi: np.ndarray = field(repr=False)
    xi_eig: np.ndarray
    groups: tuple = field(repr=False)
    residual: float
    iterations: int
    converged: bool
    history: tuple = field(default=(), repr=False)


@dataclass(frozen=True)
class AsymptoticMI:
    total_bits: float
    group_bits: tuple
    correction_bits: float


def aligned_basis(Xi: np.ndarray, U_ref: np.ndarray, prev: np.ndarray | None = None,
                  cluster_tol: float = 1e-6):
    """Eigen-pairs of ``Xi`` ordered and phased for aligned precoders.

    Without ``prev`` the pairs are in descending order and each eigenvector
    is rotated so that its largest coefficient in the reference basis
    ``U_ref`` is real and positive.

    With ``prev`` (the basis of a nearby ``Xi``) the order follows it by
    continuity instead: column ``i`` is the eigenvector overlapping most
    with ``prev[:, i]``, so the eigenvalues are no longer sorted once two
    of them have crossed. Phases use the same gauge as above, except inside
    clusters of eigenvalues closer than ``cluster_tol`` (relative), where
    the basis nearest to ``prev`` is taken.
    """
    mu, U = np.linalg.eigh(0.5 * (Xi + Xi.conj().T))
    if prev is None:
        order = np.argsort(-mu, kind="stable")
        return np.clip(mu[order], 0.0, None), _phase_gauge(U[:, order], U_ref)

    _, col = linear_sum_assignment(-np.abs(prev.conj().T @ U) ** 2)
    mu, U = mu[col], _phase_gauge(U[:, col], U_ref)
    scale = max(float(np.max(np.abs(mu))), 1e-300)
    done = np.zeros(mu.size, dtype=bool)
    for i in range(mu.size):
        if done[i]:
            continue
        idx = np.nonzero(~done & (np.abs(mu - mu[i]) <= cluster_tol * scale))[0]
        done[idx] = True
        if idx.size > 1:
            # unitary within the cluster closest to prev (polar factor of the overlap)
            u, _, vh = np.linalg.svd(U[:, idx].conj().T @ prev[:, idx])
            U[:, idx] = U[:, idx] @ (u @ vh)
    return np.clip(mu, 0.0, None), U


def _phase_gauge(U, U_ref):
    # largest coefficient of each column in U_ref made real and positive
    coef = U_ref.conj().T @ U
    j = np.argmax(np.abs(coef), axis=0)
    ph = coef[j, np.arange(U.shape[1])]
    return U * (np.abs(ph) / ph)


def _psd_sqrt(X):
    mu, U = np.linalg.eigh(0.5 * (X + X.conj().T))
    return (U * np.sqrt(np.clip(mu, 0.0, None))) @ U.conj().T


class _Frame:
    """Channel quantities that do not change across iterations."""

    def __init__(self, s: ChannelStatistics):
        self.s = s
        self.G = s.G
        self.H_hat = s.U_R.conj().T @ s.H_bar @ s.U_T  # H_bar in the eigenbases
        self.has_los = bool(np.any(self.H_hat))

    def build(self, gamma, psi):
        s = self.s
        t = self.G.T @ gamma
        r = self.G @ psi
        a = 1.0 / (1.0 + r)
        Xi_T = np.diag(t).astype(complex)
        if self.has_los:
            Xi_T = Xi_T + self.H_hat.conj().T @ (a[:, None] * self.H_hat)
        U_T = s.U_T
        Xi = U_T @ Xi_T @ U_T.conj().T
        return t, r, a, 0.5 * (Xi + Xi.conj().T)

    def update(self, a, Omega):
        """New ``(gamma, psi)`` from ``(I+R)^{-1}`` eigenvalues and ``Omega``."""
        U_T = self.s.U_T
        Om_T = U_T.conj().T @ Omega @ U_T
        psi = np.clip(np.real(np.diag(Om_T)), 0.0, None)
        gamma = a.copy()
        if self.has_los:
            q = np.real(np.einsum("ij,jk,ik->i", self.H_hat, Om_T, self.H_hat.conj()))
            gamma = a - a * a * q
        return gamma, psi


def _omega(frame: _Frame, Xi, precoder, c, ne, cap, prev=None):
    """MMSE matrix of ``x`` plus the metrics it was built from."""
    if isinstance(precoder, Precoder) and precoder.U_B is None:
        xi_eig, U = aligned_basis(Xi, frame.s.U_T, prev)
        part = precoder.partition
        groups = []
        n_t = part.n_t
        Om_eq = np.zeros((n_t, n_t), dtype=complex)
        for s_ in range(part.S):
            idx = part.group_indices(s_)
            gm = group_metrics(xi_eig[idx], precoder.lam[s_], precoder.V[s_], c, ne, cap)
            groups.append(gm)
            Om_eq[np.ix_(idx, idx)] = gm.Omega_s
        Omega = U @ Om_eq @ U.conj().T
        return Omega, tuple(groups), xi_eig, U
    if isinstance(precoder, Precoder):
        B = assemble_precoder(precoder)
    else:
        B = np.asarray(precoder, complex)
    xi_eig, U = aligned_basis(Xi, frame.s.U_T, prev)
    A = _psd_sqrt(Xi) @ B
    mi, E, se = finite_alphabet_metrics(A, c, ne, cap)
    Omega = B @ E @ B.conj().T
    gm = GroupMetrics(mi, E, 0.5 * (Omega + Omega.conj().T), se)
    return gm.Omega_s, (gm,), xi_eig, U


def fixed_point_map(s: ChannelStatistics, precoder, c: Constellation, gamma, psi,
                    ne: NoiseExpectation | None = None,
                    cap: int = DEFAULT_ENUMERATION_CAP, basis=None):
    """One undamped application of the fixed-point equations.

    ``basis`` is the eigenbasis an aligned precoder should follow (for
    instance ``state.U_Xi``); see :func:`aligned_basis`.
    Returns ``(gamma_new, psi_new)``.
    """
    frame = _Frame(s)
    _, _, a, Xi = frame.build(np.asarray(gamma, float), np.asarray(psi, float))
    Omega = _omega(frame, Xi, precoder, c, ne, cap, basis)[0]
    return frame.update(a, Omega)


def _anderson_step(xs, fs, gamma, psi, g_new, p_new, d, m, reset):
    x = np.concatenate([gamma, psi])
    f = np.concatenate([g_new, p_new]) - x
    if reset:
        xs.clear()
        fs.clear()
    xs.append(x)
    fs.append(f)
    del xs[:-(m + 1)], fs[:-(m + 1)]
    x_new = x + d * f
    if len(xs) > 1:
        dX = np.diff(np.array(xs), axis=0).T
        dF = np.diff(np.array(fs), axis=0).T
        theta = np.linalg.lstsq(dF, f, rcond=None)[0]
        x_new = x_new - (dX + d * dF) @ theta
    n_r = gamma.size
    return x_new[:n_r], np.clip(x_new[n_r:], 0.0, None)


class _Mixer:
    """Next ``(gamma, psi)`` from the current iterate and its image."""

    def __init__(self, opts: FixedPointOptions):
        self.opts = opts
        self.d = opts.damping
        self.xs, self.fs = [], []
        self.last = None

    def __call__(self, gamma, psi, g_new, p_new, res):
        o = self.opts
        grew = self.last is not None and res > self.last
        self.last = res
        if o.adaptive:
            # back off when the residual grows, recover gradually otherwise
            self.d = (max(0.5 * self.d, o.min_damping) if grew
                      else min(1.5 * self.d, o.damping))
        if o.anderson > 0:
            return _anderson_step(self.xs, self.fs, gamma, psi, g_new, p_new, self.d,
                                  o.anderson, grew)
        d = self.d
        return (1.0 - d) * gamma + d * g_new, (1.0 - d) * psi + d * p_new


def _descending(xi, rel_tol=1e-9):
    return bool(np.all(np.diff(xi) <= rel_tol * max(float(np.max(xi, initial=0.0)), 1e-300)))


def _iterate(frame, precoder, c, ne, cap, opts, gamma, psi, prev):
    """Mixed iteration from ``(gamma, psi)``; returns the best state tuple and residuals."""
    history = []
    best = None
    best_image = None
    mix = _Mixer(opts)
    fallback = opts.anderson > 0 or opts.adaptive
    for it in range(1, opts.max_iter + 1):
        t, r, a, Xi = frame.build(gamma, psi)
        assert np.all(1.0 + r > 0), "I + R must be positive definite"
        Omega, groups, xi_eig, U = _omega(frame, Xi, precoder, c, ne, cap, prev)
        prev = U
        g_new, p_new = frame.update(a, Omega)
        res = float(np.max(np.abs(g_new - gamma), initial=0.0)
                    + np.max(np.abs(p_new - psi), initial=0.0))
        history.append(res)
        state = (gamma, psi, t, r, Xi, Omega, U, xi_eig, groups, res, it)
        if best is None or res < best[9]:
            best = state
            best_image = (g_new, p_new)
        if res <= opts.tol:
            break
        if fallback and it - best[10] >= opts.patience:
            # accelerated mixing stalled: continue from the best iterate with
            # plain damping, which is slower but does not stagnate
            fallback = False
            mix = _Mixer(FixedPointOptions(damping=min(0.5, opts.damping)))
            gamma, psi = best[0], best[1]
            g_new, p_new = best_image
            prev = best[6]
            res = best[9]
        gamma, psi = mix(gamma, psi, g_new, p_new, res)

    return best, history


def solve_fixed_point(s: ChannelStatistics, precoder, c: Constellation,
                      ne: NoiseExpectation | None = None,
                      opts: FixedPointOptions | None = None,
                      init: tuple | None = None,
                      cap: int = DEFAULT_ENUMERATION_CAP) -> DetEquivState:
    """Iterate the coupled equations with convex damping.

    Parameters
    ----------
    s : ChannelStatistics
    precoder : Precoder or ndarray
        Aligned precoder (``U_B is None``) or explicit ``N_t x N_t`` matrix.
    c : Constellation
    ne : NoiseExpectation, optional
    opts : FixedPointOptions, optional
    init : (gamma, psi) or (gamma, psi, basis), optional
        Warm start; defaults to ``gamma = 1`` and ``psi = 0``. An aligned
        precoder follows ``basis`` (typically the ``U_Xi`` of the warm
        state) instead of starting from descending order. A solve that
        ends out of descending order is polished once more with the streams
        re-paired in descending order.

    Returns
    -------
    DetEquivState
        ``converged`` is False when ``max_iter`` ran out; with
        ``opts.raise_on_failure`` a :class:`ConvergenceError` is raised.
    """
    opts = opts or FixedPointOptions()
    ne = ne or NoiseExpectation()
    frame = _Frame(s)
    if init is None:
        gamma = np.ones(s.n_r)
        psi = np.zeros(s.n_t)
    else:
        gamma = np.array(init[0], dtype=float)
        psi = np.array(init[1], dtype=float)
    # eigenvectors are tracked from one iteration to the next so that an
    # aligned precoder does not jump between streams when eigenvalues cross
    prev = None if init is None or len(init) < 3 else np.asarray(init[2], dtype=complex)
    best, history = _iterate(frame, precoder, c, ne, cap, opts, gamma, psi, prev)

    aligned = isinstance(precoder, Precoder) and precoder.U_B is None
    if aligned and best[9] <= opts.tol and not _descending(best[7]):
        # tracking let eigenvalues cross; polish with the streams re-paired in
        # descending order and keep that solution if it is self-consistent
        order = np.argsort(-best[7], kind="stable")
        again, more = _iterate(frame, precoder, c, ne, cap, opts, best[0], best[1],
                               best[6][:, order])
        history += more
        if again[9] <= opts.tol and _descending(again[7]):
            best = again

    gamma, psi, t, r, Xi, Omega, U, xi_eig, groups, res, it = best
    converged = res <= opts.tol
    if np.any(gamma < 0):
        log.warning("negative gamma entries at the fixed point: %s", gamma[gamma < 0])
    st = DetEquivState(
        gamma=gamma, psi=psi,
        T=(s.U_T * t) @ s.U_T.conj().T,
        R=(s.U_R * r) @ s.U_R.conj().T,
        Xi=Xi, Omega=Omega, U_Xi=U, xi_eig=xi_eig, groups=groups,
        residual=res, iterations=len(history), converged=converged,
        history=tuple(history))
    if not converged:
        msg = f"fixed point not converged after {opts.max_iter} iterations (residual {res:.3e})"
        if opts.raise_on_failure:
            raise ConvergenceError(msg, st)
        log.warning(msg)
    return st


def asymptotic_mi(state: DetEquivState, s: ChannelStatistics, precoder=None,
                  c: Constellation | None = None,
                  ne: NoiseExpectation | None = None) -> AsymptoticMI:
    """Asymptotic MI in bits at a converged state.

    The per-group MIs were evaluated at the state's ``Xi`` during the
    solve and are reused; ``precoder``, ``c`` and ``ne`` are accepted for
    interface symmetry only.
    """
    group_bits = tuple(g.mi_bits for g in state.groups)
    r = s.G @ state.psi
    logdet = float(np.sum(np.log1p(r)))
    corr = (logdet - float(state.gamma @ s.G @ state.psi)) * LOG2E
    return AsymptoticMI(float(sum(group_bits) + corr), group_bits, corr)


def evaluate(s: ChannelStatistics, precoder, c: Constellation,
             ne: NoiseExpectation | None = None,
             opts: FixedPointOptions | None = None, init=None,
             cap: int = DEFAULT_ENUMERATION_CAP):
    """Solve the fixed point and return ``(AsymptoticMI, DetEquivState)``."""
    st = solve_fixed_point(s, precoder, c, ne, opts, init, cap)
    return asymptotic_mi(st, s), st
